//! Adapters that turn host closures into plugins.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};
use crate::plugins::{Embedder, Generator};
use crate::types::Embedding;

type EmbedFn = dyn Fn(&str) -> Result<Vec<f64>> + Send;
type GenerateFn = dyn Fn(&str) -> Result<String> + Send;

/// Wraps a closure producing raw vectors. The declared dimension is checked
/// on every call; the output is normalized.
pub struct FnEmbedder {
    dim: usize,
    f: Box<EmbedFn>,
    verified: AtomicBool,
}

impl FnEmbedder {
    pub fn new(dim: usize, f: impl Fn(&str) -> Result<Vec<f64>> + Send + 'static) -> Self {
        Self {
            dim,
            f: Box::new(f),
            verified: AtomicBool::new(false),
        }
    }

    /// True once a call has returned a vector of the declared dimension.
    pub fn verified(&self) -> bool {
        self.verified.load(Ordering::Relaxed)
    }
}

impl Embedder for FnEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        let v = (self.f)(text)?;
        if v.len() != self.dim {
            return Err(Error::Config(format!(
                "callable embedder returned dimension {} (declared {})",
                v.len(),
                self.dim
            )));
        }
        self.verified.store(true, Ordering::Relaxed);
        Embedding::unit_or_normalized(v)
            .map_err(|e| Error::plugin("callable-embedder", e.to_string()))
    }
}

pub struct FnGenerator {
    f: Box<GenerateFn>,
}

impl FnGenerator {
    pub fn new(f: impl Fn(&str) -> Result<String> + Send + 'static) -> Self {
        Self { f: Box::new(f) }
    }
}

impl Generator for FnGenerator {
    fn generate(&self, prompt: &str) -> Result<String> {
        (self.f)(prompt)
    }
}

/// Returns every prompt unchanged; lets tests assert on prompt shape.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoGenerator;

impl Generator for EchoGenerator {
    fn generate(&self, prompt: &str) -> Result<String> {
        Ok(prompt.to_string())
    }
}
