use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::MatchParams;
use crate::memory::StoreConfig;

pub const DEFAULT_RHO_BAR: f64 = 1.6;
pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_E_BAR: f64 = 0.5;

/// Engine tunables. Field names double as config-file keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Distance-ratio acceptance threshold.
    pub rho_bar: f64,
    /// Exponent applied to the normalized ratio in the decay factor.
    pub alpha: f64,
    /// Eligibility removal threshold.
    pub e_bar: f64,
    pub capacity: usize,
    /// Distance gate for frames holding a single observation.
    pub tau_abs: f64,
    /// Consecutive assigned frames that promote a candidate to tentative.
    pub confirm_consecutive: u32,
    /// Frames after promotion within which a tentative identity must match.
    pub confirm_window: u64,
    /// Descriptor dimension; 0 means "take it from the input stream".
    pub dim: usize,
    pub seed: u64,
    pub normalize: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            rho_bar: DEFAULT_RHO_BAR,
            alpha: DEFAULT_ALPHA,
            e_bar: DEFAULT_E_BAR,
            capacity: 10_000,
            tau_abs: 1.0,
            confirm_consecutive: 2,
            confirm_window: 3,
            dim: 0,
            seed: 0,
            normalize: true,
        }
    }
}

impl EngineConfig {
    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.rho_bar > 0.0 && self.rho_bar.is_finite()) {
            return bad(format!("rho_bar must be positive, got {}", self.rho_bar));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.e_bar > 0.0 && self.e_bar < 1.0) {
            return bad(format!("e_bar must lie in (0, 1), got {}", self.e_bar));
        }
        if self.capacity == 0 {
            return bad("capacity must be positive".into());
        }
        if !(self.tau_abs > 0.0 && self.tau_abs.is_finite()) {
            return bad(format!("tau_abs must be positive, got {}", self.tau_abs));
        }
        if self.confirm_consecutive == 0 {
            return bad("confirm_consecutive must be at least 1".into());
        }
        if self.confirm_window == 0 {
            return bad("confirm_window must be at least 1".into());
        }
        if self.dim == 0 {
            return bad("descriptor dimension is not set".into());
        }
        Ok(())
    }

    pub fn match_params(&self) -> MatchParams {
        MatchParams {
            rho_bar: self.rho_bar,
            alpha: self.alpha,
            tau_abs: self.tau_abs,
        }
    }

    pub fn store_config(&self) -> StoreConfig {
        StoreConfig {
            dimension: self.dim,
            capacity: self.capacity,
            e_bar: self.e_bar,
            normalize: self.normalize,
        }
    }
}
