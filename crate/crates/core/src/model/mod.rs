//! The CTAN layer: anti-symmetric Euler steps over attention-aggregated
//! temporal neighborhoods, the per-event propagation pipeline and readouts.

mod config;
pub mod layers;
mod params;
mod pipeline;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use config::{CtanConfig, PsiKind, ReadoutKind};
pub use params::{CtanParams, ParamVars, PARAM_NAMES};
pub use pipeline::{Memory, Session};

use crate::error::{Error, Result};
use crate::tensor::NamedTensors;

pub const CHECKPOINT_FORMAT: &str = "ctan-checkpoint/v1";

/// Configuration, learned parameters and the elapsed-time scale.
#[derive(Clone, Debug, PartialEq)]
pub struct CtanModel {
    pub config: CtanConfig,
    pub params: CtanParams,
    /// Elapsed times are divided by this before encoding.
    pub dt_scale: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    config: CtanConfig,
    dt_scale: f64,
    params: NamedTensors,
}

impl CtanModel {
    pub fn new<R: Rng + ?Sized>(config: CtanConfig, dt_scale: f64, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if !(dt_scale > 0.0 && dt_scale.is_finite()) {
            return Err(Error::Contract(format!("time scale must be positive, got {dt_scale}")));
        }
        let params = CtanParams::init(&config, rng);
        Ok(Self {
            config,
            params,
            dt_scale,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.config.clone(),
            dt_scale: self.dt_scale,
            params: self.params.to_named(),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Contract(format!("unknown checkpoint format `{}`", ck.format)));
        }
        ck.config.validate()?;
        let params = CtanParams::from_named(&ck.config, &ck.params)?;
        Ok(Self {
            config: ck.config,
            params,
            dt_scale: ck.dt_scale,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_round_trip() {
        let cfg = CtanConfig {
            dim: 6,
            heads: 2,
            psi: PsiKind::Concat,
            ..CtanConfig::default()
        };
        let m = CtanModel::new(cfg, 3.25, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let back = CtanModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn checkpoint_rejects_foreign_format() {
        let m = CtanModel::new(CtanConfig::default(), 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let text = m.to_json().unwrap().replace(CHECKPOINT_FORMAT, "other/v9");
        assert!(CtanModel::from_json(&text).is_err());
    }
}
