//! Analysis windows, looked up by name through [`WindowRegistry`].
//!
//! The estimator only sees `Arc<dyn WindowFunction>`, so additional windows
//! can be registered at runtime without touching the block estimator.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Result, StsaError};

/// A real, non-negative taper applied to each analysis block.
pub trait WindowFunction: Send + Sync {
    /// Canonical registry name.
    fn name(&self) -> &'static str;

    /// Weight of sample `k` in a block of `n` samples.
    fn weight(&self, k: usize, n: usize) -> f64;

    fn coefficients(&self, n: usize) -> Vec<f64> {
        (0..n).map(|k| self.weight(k, n)).collect()
    }
}

impl fmt::Debug for dyn WindowFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Window({})", self.name())
    }
}

/// `w[k] = 1 - |2k - (n-1)| / (n-1)`: zero at both ends, 1 at the center.
#[derive(Debug, Clone, Copy, Default)]
pub struct Triangular;

impl WindowFunction for Triangular {
    fn name(&self) -> &'static str {
        "triangular"
    }

    fn weight(&self, k: usize, n: usize) -> f64 {
        if n < 2 {
            return 1.0;
        }
        let m = (n - 1) as f64;
        1.0 - (2.0 * k as f64 - m).abs() / m
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Hamming;

impl WindowFunction for Hamming {
    fn name(&self) -> &'static str {
        "hamming"
    }

    fn weight(&self, k: usize, n: usize) -> f64 {
        if n < 2 {
            return 1.0;
        }
        0.54 - 0.46 * (2.0 * PI * k as f64 / (n - 1) as f64).cos()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Rectangular;

impl WindowFunction for Rectangular {
    fn name(&self) -> &'static str {
        "rectangular"
    }

    fn weight(&self, _k: usize, _n: usize) -> f64 {
        1.0
    }
}

/// Name → window lookup. Aliases resolve to the same shared instance.
#[derive(Clone)]
pub struct WindowRegistry {
    entries: BTreeMap<String, Arc<dyn WindowFunction>>,
}

impl Default for WindowRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl WindowRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Triangular (`tri`), Hamming (`hamming`) and rectangular (`rect`).
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(Triangular), &["tri", "triangle"]);
        reg.register(Arc::new(Hamming), &[]);
        reg.register(Arc::new(Rectangular), &["rect", "boxcar", "none"]);
        reg
    }

    /// Registers `window` under its canonical name plus `aliases`, replacing
    /// any previous entry with the same key.
    pub fn register(&mut self, window: Arc<dyn WindowFunction>, aliases: &[&str]) {
        for alias in aliases {
            self.entries.insert(alias.to_string(), Arc::clone(&window));
        }
        self.entries.insert(window.name().to_string(), window);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn WindowFunction>> {
        self.entries.get(name).cloned().ok_or_else(|| {
            StsaError::param(format!(
                "unknown window '{name}' (known: {})",
                self.names().join(", ")
            ))
        })
    }

    /// All registered keys, aliases included.
    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

pub fn triangular() -> Arc<dyn WindowFunction> {
    Arc::new(Triangular)
}

pub fn hamming() -> Arc<dyn WindowFunction> {
    Arc::new(Hamming)
}

pub fn rectangular() -> Arc<dyn WindowFunction> {
    Arc::new(Rectangular)
}
