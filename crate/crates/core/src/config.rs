//! Engine configuration. Every field has a default so a partial JSON
//! document (or `{}`) is a valid config.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights and thresholds for the utility function and eviction policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtilityParams {
    /// Frequency weight.
    pub alpha: f64,
    /// Recency weight.
    pub beta: f64,
    /// Recency decay scale, in turns.
    pub tau: f64,
    /// Discount factor; used only for offline regret reporting.
    pub gamma: f64,
    /// An AMU candidate is novel iff its max cosine to existing AMUs is below this.
    pub theta_concept: f64,
    /// Sibling AMUs at or above this cosine are merged.
    pub theta_sim: f64,
    /// Drift boundary: a flush happens when consecutive similarity drops below this.
    pub tau_drift: f64,
    /// Token budget for the whole hierarchy.
    pub t_max: u64,
}

impl Default for UtilityParams {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta: 0.4,
            tau: 500.0,
            gamma: 0.99,
            theta_concept: 0.85,
            theta_sim: 0.85,
            tau_drift: 0.7,
            t_max: 1000,
        }
    }
}

impl UtilityParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.alpha,
            self.beta,
            self.tau,
            self.gamma,
            self.theta_concept,
            self.theta_sim,
            self.tau_drift,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("utility parameters must be finite".into()));
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::Config("alpha and beta must be non-negative".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config("tau must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1)".into()));
        }
        for (name, v) in [
            ("theta_concept", self.theta_concept),
            ("theta_sim", self.theta_sim),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        // -1 disables drift boundaries entirely.
        if !(-1.0..=1.0).contains(&self.tau_drift) {
            return Err(Error::Config("tau_drift must lie in [-1, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BufferConfig {
    /// Maximum fresh utterances held before a forced flush.
    pub capacity: usize,
    /// Token budget of the leading context kept across a flush.
    pub leading_window_tokens: u64,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self {
            capacity: 5,
            leading_window_tokens: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalParams {
    pub k_scene: usize,
    pub k_event: usize,
    pub k_amu: usize,
    pub min_sim: f64,
    /// Apply `k_amu` per surviving event instead of globally.
    pub per_event_top_k: bool,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            k_scene: 5,
            k_event: 10,
            k_amu: 3,
            min_sim: 0.5,
            per_event_top_k: false,
        }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_scene == 0 || self.k_event == 0 || self.k_amu == 0 {
            return Err(Error::Config(
                "retrieval k values must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One stage of the budget-restoration loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pass {
    Prune,
    Merge,
    Cascade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PluginKind {
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PluginConfig {
    pub kind: PluginKind,
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
    pub model_name: String,
    pub retry: u32,
}

impl Default for PluginConfig {
    fn default() -> Self {
        Self {
            kind: PluginKind::Stub,
            endpoint: None,
            timeout_secs: 30.0,
            model_name: String::new(),
            retry: 2,
        }
    }
}

impl PluginConfig {
    pub fn validate(&self, role: &str) -> Result<()> {
        if self.kind == PluginKind::Remote && self.endpoint.as_deref().unwrap_or("").is_empty() {
            return Err(Error::Config(format!("remote {role} requires an endpoint")));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::Config(format!("{role} timeout must be positive")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PluginsConfig {
    pub embedder: PluginConfig,
    pub generator: PluginConfig,
    pub extractor: PluginConfig,
    pub transcriber: PluginConfig,
    /// Ordered `(keyword, scene)` rules for the stub scene classifier.
    pub scene_keywords: Vec<(String, String)>,
}

impl Default for PluginsConfig {
    fn default() -> Self {
        Self {
            embedder: PluginConfig::default(),
            generator: PluginConfig::default(),
            extractor: PluginConfig::default(),
            transcriber: PluginConfig::default(),
            scene_keywords: default_scene_keywords(),
        }
    }
}

pub fn default_scene_keywords() -> Vec<(String, String)> {
    [
        ("physics", "Learning Session"),
        ("homework", "Learning Session"),
        ("exam", "Learning Session"),
        ("lecture", "Learning Session"),
        ("study", "Learning Session"),
        ("project", "Work Discussion"),
        ("meeting", "Work Discussion"),
        ("deadline", "Work Discussion"),
        ("office", "Work Discussion"),
        ("boss", "Work Discussion"),
        ("party", "Social Chat"),
        ("dinner", "Social Chat"),
        ("date", "Social Chat"),
        ("friends", "Social Chat"),
        ("car", "Travel and Transport"),
        ("tire", "Travel and Transport"),
        ("flight", "Travel and Transport"),
        ("trip", "Travel and Transport"),
        ("recipe", "Cooking"),
        ("kitchen", "Cooking"),
        ("game", "Sports and Games"),
        ("match", "Sports and Games"),
        ("concert", "Music"),
        ("song", "Music"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Embedding dimension shared by every vector in one engine.
    pub dimension: usize,
    pub params: UtilityParams,
    pub buffer: BufferConfig,
    pub retrieval: RetrievalParams,
    /// Stage order inside each budget-restoration iteration.
    pub pass_order: Vec<Pass>,
    /// Flush the sensing buffer into the pending queue before answering.
    pub flush_on_probe: bool,
    /// Collect audit records (step reports, distillation failures).
    pub audit: bool,
    pub plugins: PluginsConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            dimension: 384,
            params: UtilityParams::default(),
            buffer: BufferConfig::default(),
            retrieval: RetrievalParams::default(),
            pass_order: vec![Pass::Prune, Pass::Merge, Pass::Cascade],
            flush_on_probe: false,
            audit: false,
            plugins: PluginsConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if self.buffer.capacity == 0 {
            return Err(Error::Config("buffer capacity must be positive".into()));
        }
        self.params.validate()?;
        self.retrieval.validate()?;
        let mut order = self.pass_order.clone();
        order.sort_by_key(|p| *p as u8);
        if order != [Pass::Prune, Pass::Merge, Pass::Cascade] {
            return Err(Error::Config(
                "pass_order must list prune, merge and cascade exactly once".into(),
            ));
        }
        self.plugins.embedder.validate("embedder")?;
        self.plugins.generator.validate("generator")?;
        self.plugins.extractor.validate("extractor")?;
        self.plugins.transcriber.validate("transcriber")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_yields_defaults() {
        let cfg = EngineConfig::from_json("{}").unwrap();
        assert_eq!(cfg, EngineConfig::default());
        assert_eq!(cfg.params.alpha, 0.6);
        assert_eq!(cfg.params.beta, 0.4);
        assert_eq!(cfg.params.tau_drift, 0.7);
        assert_eq!(cfg.params.theta_concept, 0.85);
        assert_eq!(cfg.buffer.capacity, 5);
        assert_eq!(cfg.buffer.leading_window_tokens, 10);
        assert_eq!(
            (
                cfg.retrieval.k_scene,
                cfg.retrieval.k_event,
                cfg.retrieval.k_amu
            ),
            (5, 10, 3)
        );
        assert_eq!(cfg.retrieval.min_sim, 0.5);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(EngineConfig::from_json(r#"{"dimension":0}"#).is_err());
        assert!(EngineConfig::from_json(r#"{"params":{"tau":0}}"#).is_err());
        assert!(EngineConfig::from_json(r#"{"params":{"gamma":1.0}}"#).is_err());
        assert!(EngineConfig::from_json(r#"{"pass_order":["prune","prune","cascade"]}"#).is_err());
        assert!(EngineConfig::from_json(r#"{"plugins":{"embedder":{"kind":"remote"}}}"#).is_err());
    }

    #[test]
    fn merge_first_order_accepted() {
        let cfg = EngineConfig::from_json(r#"{"pass_order":["merge","prune","cascade"]}"#).unwrap();
        assert_eq!(cfg.pass_order[0], Pass::Merge);
    }
}
