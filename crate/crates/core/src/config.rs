//! Scenario configuration: a TOML key/value document whose keys mirror the
//! command-line flags. Every key is optional; missing keys take defaults.

use serde::{Deserialize, Serialize};

use crate::agent::{LearningParams, ProtocolParams};
use crate::center::{AggregationParams, DispatchPolicy, Mixing};
use crate::error::{Error, Result};
use crate::feature::{Prob, Thresholds};
use crate::protocol::ConsultMode;
use crate::sim::SystemConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub tau_k: f64,
    pub tau_m: f64,
    pub alpha_r: f64,
    pub alpha_d: f64,
    /// Fall step; the same α as the raise step unless set.
    pub alpha_fall: f64,
    pub theta: u32,
    pub window: usize,
    /// Dispatches between decay sweeps; defaults to `window`.
    pub epoch: Option<usize>,
    /// Defaults to `min(3, M)` when neither `top_k` nor `min_conf` is given.
    pub top_k: Option<usize>,
    pub min_conf: Option<f64>,
    pub broadcast_dispatch: bool,
    pub consult: ConsultMode,
    pub round_cap: u32,
    pub eps_fb: f64,
    pub mixing: Mixing,
    pub promotions: bool,
    /// Queries submitted together before the network is drained.
    pub pipeline: usize,
    pub d_capacity: Option<usize>,
    /// When set, must match the number of classes in the manifest.
    pub num_classes: Option<usize>,
    /// Scheduler seed.
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            tau_k: 0.7,
            tau_m: 0.3,
            alpha_r: 0.05,
            alpha_d: 0.05,
            alpha_fall: 0.05,
            theta: 5,
            window: 50,
            epoch: None,
            top_k: None,
            min_conf: None,
            broadcast_dispatch: false,
            consult: ConsultMode::Lookup,
            round_cap: 20,
            eps_fb: 0.01,
            mixing: Mixing::Product,
            promotions: true,
            pipeline: 1,
            d_capacity: None,
            num_classes: None,
            seed: 0,
        }
    }
}

fn prob(name: &str, v: f64) -> Result<Prob> {
    Prob::from_f64(v).ok_or_else(|| Error::Config(format!("{name} = {v} is not a probability")))
}

fn step(name: &str, v: f64) -> Result<Prob> {
    let p = prob(name, v)?;
    if p == Prob::ZERO {
        return Err(Error::Config(format!("{name} must be positive")));
    }
    Ok(p)
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn dispatch_policy(&self, num_classes: usize) -> Result<DispatchPolicy> {
        let policy = match (self.broadcast_dispatch, self.top_k, self.min_conf) {
            (true, None, None) => DispatchPolicy::Broadcast,
            (false, Some(k), None) => DispatchPolicy::TopK(k),
            (false, None, Some(c)) => DispatchPolicy::MinConf(c),
            (false, None, None) => DispatchPolicy::TopK(num_classes.clamp(1, 3)),
            _ => {
                return Err(Error::Config(
                    "choose at most one of top_k, min_conf and broadcast_dispatch".into(),
                ))
            }
        };
        policy
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(policy)
    }

    /// Validates every parameter and produces the runtime configuration.
    pub fn resolve(&self, num_classes: usize) -> Result<SystemConfig> {
        if let Some(m) = self.num_classes {
            if m != num_classes {
                return Err(Error::Mismatch(format!(
                    "config expects {m} classes, manifest has {num_classes}"
                )));
            }
        }
        let thresholds = Thresholds::new(prob("tau_k", self.tau_k)?, prob("tau_m", self.tau_m)?)
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.theta == 0 {
            return Err(Error::Config("theta must be >= 1".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        let epoch = self.epoch.unwrap_or(self.window);
        if epoch == 0 {
            return Err(Error::Config("epoch must be >= 1".into()));
        }
        if self.round_cap == 0 {
            return Err(Error::Config("round_cap must be >= 1".into()));
        }
        if self.pipeline == 0 {
            return Err(Error::Config("pipeline must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eps_fb) {
            return Err(Error::Config(format!(
                "eps_fb = {} outside [0, 1]",
                self.eps_fb
            )));
        }
        Ok(SystemConfig {
            thresholds,
            learning: LearningParams {
                alpha_r: step("alpha_r", self.alpha_r)?,
                alpha_d: step("alpha_d", self.alpha_d)?,
                alpha_f: step("alpha_fall", self.alpha_fall)?,
                theta: self.theta,
                window: self.window,
                epoch,
                promotions: self.promotions,
            },
            protocol: ProtocolParams {
                mode: self.consult,
                round_cap: self.round_cap,
            },
            policy: self.dispatch_policy(num_classes)?,
            aggregation: AggregationParams {
                mixing: self.mixing,
                eps_fb: self.eps_fb,
            },
            d_capacity: self.d_capacity,
            seed: self.seed,
        })
    }
}
