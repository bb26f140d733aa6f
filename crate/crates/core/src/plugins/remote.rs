//! Blocking JSON-over-HTTP plugin clients.

use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::PluginConfig;
use crate::distillation::Triplet;
use crate::error::{Error, Result};
use crate::plugins::{Embedder, Generator, IoClock, Transcriber, TripletExtractor};
use crate::types::{Embedding, Utterance};

const RETRY_BACKOFF: Duration = Duration::from_millis(20);

struct HttpJson {
    agent: ureq::Agent,
    endpoint: String,
    retry: u32,
    io: IoClock,
    role: &'static str,
}

impl HttpJson {
    fn new(cfg: &PluginConfig, io: IoClock, role: &'static str) -> Result<Self> {
        cfg.validate(role)?;
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| Error::Config(format!("remote {role} requires an endpoint")))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(true)
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint,
            retry: cfg.retry,
            io,
            role,
        })
    }

    fn with_retries<T>(
        &self,
        mut attempt: impl FnMut() -> std::result::Result<T, String>,
    ) -> Result<T> {
        let started = Instant::now();
        let mut last = String::new();
        let mut result = None;
        for n in 0..=self.retry {
            if n > 0 {
                std::thread::sleep(RETRY_BACKOFF);
            }
            match attempt() {
                Ok(v) => {
                    result = Some(v);
                    break;
                }
                Err(e) => {
                    log::debug!("{} attempt {} failed: {e}", self.role, n + 1);
                    last = e;
                }
            }
        }
        self.io.add(started.elapsed());
        result.ok_or_else(|| {
            Error::plugin(
                self.role,
                format!(
                    "{} failed after {} attempt(s): {last}",
                    self.endpoint,
                    self.retry + 1
                ),
            )
        })
    }

    fn post_json<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp> {
        self.with_retries(|| {
            let mut resp = self
                .agent
                .post(&self.endpoint)
                .send_json(body)
                .map_err(|e| e.to_string())?;
            resp.body_mut()
                .read_json::<Resp>()
                .map_err(|e| e.to_string())
        })
    }

    fn post_bytes<Resp: DeserializeOwned>(&self, bytes: &[u8]) -> Result<Resp> {
        self.with_retries(|| {
            let mut resp = self
                .agent
                .post(&self.endpoint)
                .header("content-type", "application/octet-stream")
                .send(bytes)
                .map_err(|e| e.to_string())?;
            resp.body_mut()
                .read_json::<Resp>()
                .map_err(|e| e.to_string())
        })
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct GenerateRequest {
    pub model: String,
    pub prompt: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TextResponse {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ExtractUtterance {
    pub turn: u64,
    pub speaker: String,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ExtractRequest {
    pub utterances: Vec<ExtractUtterance>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ExtractResponse {
    pub triplets: Vec<Triplet>,
}

pub struct RemoteEmbedder {
    http: HttpJson,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn new(cfg: &PluginConfig, dim: usize, io: IoClock) -> Result<Self> {
        Ok(Self {
            http: HttpJson::new(cfg, io, "remote-embedder")?,
            dim,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        let mut v = self.embed_batch(&[text.to_string()])?;
        Ok(v.remove(0))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let req = EmbedRequest {
            texts: texts.iter().map(|t| t.trim().to_string()).collect(),
        };
        let resp: EmbedResponse = self.http.post_json(&req)?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::plugin(
                "remote-embedder",
                format!(
                    "expected {} vectors, got {}",
                    texts.len(),
                    resp.vectors.len()
                ),
            ));
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(Error::plugin(
                        "remote-embedder",
                        format!("vector of dimension {} (expected {})", v.len(), self.dim),
                    ));
                }
                Embedding::unit_or_normalized(v)
                    .map_err(|e| Error::plugin("remote-embedder", e.to_string()))
            })
            .collect()
    }
}

pub struct RemoteGenerator {
    http: HttpJson,
    model: String,
}

impl RemoteGenerator {
    pub fn new(cfg: &PluginConfig, io: IoClock) -> Result<Self> {
        Ok(Self {
            http: HttpJson::new(cfg, io, "remote-generator")?,
            model: cfg.model_name.clone(),
        })
    }
}

impl Generator for RemoteGenerator {
    fn generate(&self, prompt: &str) -> Result<String> {
        let resp: TextResponse = self.http.post_json(&GenerateRequest {
            model: self.model.clone(),
            prompt: prompt.to_string(),
        })?;
        Ok(resp.text)
    }
}

pub struct RemoteExtractor {
    http: HttpJson,
}

impl RemoteExtractor {
    pub fn new(cfg: &PluginConfig, io: IoClock) -> Result<Self> {
        Ok(Self {
            http: HttpJson::new(cfg, io, "remote-extractor")?,
        })
    }
}

impl TripletExtractor for RemoteExtractor {
    fn extract(&self, utterances: &[Utterance]) -> Result<Vec<Triplet>> {
        let req = ExtractRequest {
            utterances: utterances
                .iter()
                .map(|u| ExtractUtterance {
                    turn: u.turn,
                    speaker: u.speaker.clone(),
                    text: u.text.clone(),
                })
                .collect(),
        };
        let resp: ExtractResponse = self.http.post_json(&req)?;
        Ok(resp.triplets)
    }
}

/// Treats its input as a path to an audio file and posts the bytes.
pub struct RemoteTranscriber {
    http: HttpJson,
}

impl RemoteTranscriber {
    pub fn new(cfg: &PluginConfig, io: IoClock) -> Result<Self> {
        Ok(Self {
            http: HttpJson::new(cfg, io, "remote-transcriber")?,
        })
    }
}

impl Transcriber for RemoteTranscriber {
    fn transcribe(&self, input: &str) -> Result<String> {
        let bytes = std::fs::read(input).map_err(|e| {
            Error::plugin(
                "remote-transcriber",
                format!("cannot read audio `{input}`: {e}"),
            )
        })?;
        let resp: TextResponse = self.http.post_bytes(&bytes)?;
        Ok(resp.text)
    }
}
