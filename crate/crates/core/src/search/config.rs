use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::searchspace::{RelaxMode, Space};

/// Auxiliary term added to the α objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    #[default]
    None,
    /// −mean (z − ½)²
    Squared,
    /// −mean |z − ½|
    Absolute,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimization {
    #[default]
    Bilevel,
    SingleLevel,
}

/// Whether the auxiliary term averages over all α at once or per group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroOneScope {
    #[default]
    Joint,
    /// Sum of per-group means.
    PerCell,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSchedule {
    #[default]
    Off,
    /// Gaussian offset on skip α, cosine-decayed to zero at `horizon`.
    SkipCosine {
        sigma0: f64,
        horizon: usize,
        #[serde(default)]
        all_ops: bool,
    },
}

fn default_mode() -> RelaxMode {
    RelaxMode::SoftmaxExclusive
}

/// Hyper-parameters of one search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default = "default_mode")]
    pub mode: RelaxMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub w_lr: f64,
    pub w_lr_min: f64,
    pub w_momentum: f64,
    pub w_decay: f64,
    pub alpha_lr: f64,
    pub alpha_decay: f64,
    pub alpha_betas: [f64; 2],
    pub w01: f64,
    pub loss_variant: LossVariant,
    pub zero_one_scope: ZeroOneScope,
    pub optimization: Optimization,
    pub noise: NoiseSchedule,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            epochs: 50,
            batch_size: 64,
            w_lr: 0.025,
            w_lr_min: 0.001,
            w_momentum: 0.9,
            w_decay: 3e-4,
            alpha_lr: 0.005,
            alpha_decay: 3e-3,
            alpha_betas: [0.9, 0.999],
            w01: 10.0,
            loss_variant: LossVariant::None,
            zero_one_scope: ZeroOneScope::Joint,
            optimization: Optimization::Bilevel,
            noise: NoiseSchedule::Off,
            seed: 0,
        }
    }
}

impl SearchConfig {
    /// Defaults for a space: the auxiliary weight is 10 for cells, 1 for chains.
    pub fn for_space(space: Space) -> Self {
        Self {
            w01: Self::default_w01(space),
            ..Self::default()
        }
    }

    pub fn default_w01(space: Space) -> f64 {
        match space {
            Space::S1 => 10.0,
            Space::S2 => 1.0,
        }
    }

    /// Vanilla softmax search.
    pub fn darts(space: Space) -> Self {
        Self {
            loss_variant: LossVariant::None,
            ..Self::for_space(space)
        }
    }

    /// Sigmoid relaxation with the squared zero-one loss.
    pub fn fair(space: Space) -> Self {
        Self {
            mode: RelaxMode::SigmoidCollaborative,
            loss_variant: LossVariant::Squared,
            ..Self::for_space(space)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        self.validate_steps()
    }

    /// Everything except the epoch count; a zero-epoch run is a valid no-op.
    pub fn validate_steps(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.w01 >= 0.0) {
            return bad("w01 must be non-negative");
        }
        if !(self.w_lr >= 0.0 && self.alpha_lr >= 0.0 && self.w_lr_min >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        if self.alpha_betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return bad("alpha_betas must lie in [0, 1)");
        }
        if let NoiseSchedule::SkipCosine { sigma0, .. } = self.noise {
            if self.mode != RelaxMode::SoftmaxExclusive {
                return bad("noise requires the softmax relaxation");
            }
            if !(sigma0 >= 0.0) {
                return bad("noise sigma0 must be non-negative");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_space() {
        assert_eq!(SearchConfig::for_space(Space::S1).w01, 10.0);
        assert_eq!(SearchConfig::for_space(Space::S2).w01, 1.0);
        let c = SearchConfig::default();
        assert_eq!((c.alpha_lr, c.alpha_decay), (0.005, 3e-3));
        assert_eq!(c.alpha_betas, [0.9, 0.999]);
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let mut c = SearchConfig::fair(Space::S1);
        c.noise = NoiseSchedule::Off;
        let text = toml::to_string(&c).unwrap();
        let back: SearchConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert!(toml::from_str::<SearchConfig>("epochz = 3").is_err());
        let noisy: SearchConfig =
            toml::from_str("noise = { kind = \"skip_cosine\", sigma0 = 1.0, horizon = 50 }").unwrap();
        assert!(matches!(noisy.noise, NoiseSchedule::SkipCosine { horizon: 50, .. }));
    }

    #[test]
    fn validation() {
        let mut c = SearchConfig::default();
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = SearchConfig::fair(Space::S1);
        c.noise = NoiseSchedule::SkipCosine {
            sigma0: 1.0,
            horizon: 50,
            all_ops: false,
        };
        assert!(c.validate().is_err());
    }
}
