//! Scenario description, JSON loading and the built-in presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{State, SystemParams};
use crate::error::{Error, Result};
use crate::modes::{ModeFamily, DEFAULT_CHART_DEGREE};
use crate::nmpc::{CostWeights, NmpcConfig};

/// Which running cost the controller uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantKind {
    Curved,
    Straight,
}

impl std::fmt::Display for VariantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VariantKind::Curved => "curved",
            VariantKind::Straight => "straight",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub x: Vec<f64>,
    #[serde(default)]
    pub xdot: Option<Vec<f64>>,
}

impl InitialState {
    pub fn at_rest(x: Vec<f64>) -> Self {
        Self { x, xdot: None }
    }

    pub fn to_state(&self) -> Result<State<f64>> {
        let xdot = self.xdot.clone().unwrap_or_else(|| vec![0.0; self.x.len()]);
        State::new(self.x.clone(), xdot)
    }
}

fn default_ab() -> f64 {
    0.1
}

fn default_degree() -> usize {
    DEFAULT_CHART_DEGREE
}

/// One closed-loop experiment. Optional fields fall back to the standard
/// gains and a unit double pendulum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub variant: VariantKind,
    pub family: ModeFamily,
    pub e_ref: f64,
    pub initial: InitialState,
    pub t_end: f64,
    #[serde(default = "SystemParams::unit")]
    pub system: SystemParams<f64>,
    #[serde(default)]
    pub weights: Option<CostWeights<f64>>,
    #[serde(default = "default_ab")]
    pub alpha: f64,
    #[serde(default = "default_ab")]
    pub beta: f64,
    #[serde(default = "default_degree")]
    pub chart_degree: usize,
    #[serde(default)]
    pub nmpc: Option<NmpcConfig<f64>>,
}

/// Torque limit of every preset, N·m.
pub const TORQUE_LIMIT: f64 = 1.0;

impl Scenario {
    /// Scenario with the standard gains for `variant`.
    pub fn standard(name: &str, variant: VariantKind, family: ModeFamily, e_ref: f64, x0: [f64; 2], t_end: f64) -> Self {
        let weights = match variant {
            VariantKind::Curved => CostWeights::curved_default(),
            VariantKind::Straight => CostWeights::straight_default(),
        };
        Self {
            name: name.to_string(),
            variant,
            family,
            e_ref,
            initial: InitialState::at_rest(x0.to_vec()),
            t_end,
            system: SystemParams::unit(),
            weights: Some(weights),
            alpha: 0.1,
            beta: 0.1,
            chart_degree: DEFAULT_CHART_DEGREE,
            nmpc: Some(NmpcConfig::standard(2, TORQUE_LIMIT)),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn weights(&self) -> CostWeights<f64> {
        self.weights.unwrap_or(match self.variant {
            VariantKind::Curved => CostWeights::curved_default(),
            VariantKind::Straight => CostWeights::straight_default(),
        })
    }

    pub fn nmpc(&self) -> NmpcConfig<f64> {
        self.nmpc.clone().unwrap_or_else(|| NmpcConfig::standard(self.initial.x.len(), TORQUE_LIMIT))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scenario `{}`: {m}", self.name)));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name must be non-empty and free of path separators".into());
        }
        if !(self.e_ref > 0.0) || !self.e_ref.is_finite() {
            return bad(format!("e_ref must be positive, got {}", self.e_ref));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.initial.x.len() != 2 || self.initial.xdot.as_ref().is_some_and(|v| v.len() != 2) {
            return bad("initial state must have two joints".into());
        }
        if self.chart_degree == 0 {
            return bad("chart_degree must be at least 1".into());
        }
        self.system.validate()?;
        self.nmpc().validate(2)?;
        Ok(())
    }
}

pub const PRESET_NAMES: [&str; 5] = ["fig2_alpha_sweep", "fig3_modes", "fig4_straight", "fig5_curved", "fig6_large_ic"];

/// Alpha values of the sweep preset.
pub const FIG2_ALPHAS: [f64; 4] = [0.0, 0.05, 0.1, 0.2];

const NEAR_EQ: [f64; 2] = [0.01, 0.01];
const LARGE_IC: [f64; 2] = [-1.1, 1.1];

/// Built-in scenarios. `fig2` is accepted for `fig2_alpha_sweep`.
pub fn preset(name: &str) -> Result<Vec<Scenario>> {
    use ModeFamily::{AntiPhase, InPhase};
    use VariantKind::{Curved, Straight};
    let out = match name {
        "fig2_alpha_sweep" | "fig2" => FIG2_ALPHAS
            .iter()
            .map(|&a| {
                let mut s = Scenario::standard(&format!("fig2_alpha_{a}"), Straight, InPhase, 14.0, NEAR_EQ, 60.0);
                s.alpha = a;
                s
            })
            .collect(),
        "fig3_modes" | "fig3" => vec![
            Scenario::standard("fig3_in_phase_2J", Straight, InPhase, 2.0, NEAR_EQ, 40.0),
            Scenario::standard("fig3_in_phase_16J", Straight, InPhase, 16.0, NEAR_EQ, 60.0),
            Scenario::standard("fig3_anti_phase_2J", Straight, AntiPhase, 2.0, NEAR_EQ, 40.0),
            Scenario::standard("fig3_anti_phase_12J", Straight, AntiPhase, 12.0, NEAR_EQ, 60.0),
        ],
        "fig4_straight" | "fig4" => vec![Scenario::standard("fig4_straight", Straight, InPhase, 14.0, NEAR_EQ, 60.0)],
        "fig5_curved" | "fig5" => vec![Scenario::standard("fig5_curved", Curved, InPhase, 14.0, NEAR_EQ, 60.0)],
        "fig6_large_ic" | "fig6" => vec![
            Scenario::standard("fig6_large_ic_curved", Curved, InPhase, 14.0, LARGE_IC, 60.0),
            Scenario::standard("fig6_large_ic_straight", Straight, InPhase, 14.0, LARGE_IC, 60.0),
        ],
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(out)
}

/// Parameters a sweep may vary.
pub const SWEEP_PARAMS: [&str; 9] = ["alpha", "beta", "e_ref", "w_e", "w_x", "w_xdot", "w_f", "t_end", "chart_degree"];

/// Copy of `base` with one parameter replaced; the name gets a suffix.
pub fn with_param(base: &Scenario, param: &str, value: f64) -> Result<Scenario> {
    let mut s = base.clone();
    let mut w = s.weights();
    match param {
        "alpha" => s.alpha = value,
        "beta" => s.beta = value,
        "e_ref" => s.e_ref = value,
        "t_end" => s.t_end = value,
        "w_e" => w.w_e = value,
        "w_x" => w.w_x = value,
        "w_xdot" => w.w_xdot = value,
        "w_f" => w.w_f = value,
        "chart_degree" => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::InvalidArgument(format!("chart_degree must be a positive integer, got {value}")));
            }
            s.chart_degree = value as usize;
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown sweep parameter `{other}` (expected one of {})",
                SWEEP_PARAMS.join(", ")
            )))
        }
    }
    s.weights = Some(w);
    s.name = format!("{}_{param}_{value}", base.name);
    s.validate()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            for s in preset(name).unwrap() {
                s.validate().unwrap();
                assert_eq!(s.nmpc().horizon, 80);
            }
        }
        assert!(matches!(preset("fig7"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let s = preset("fig4_straight").unwrap().remove(0);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(Scenario::from_json(&text).unwrap(), s);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["bogus"] = 1.into();
        assert!(Scenario::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let s = Scenario::from_json(
            r#"{"name":"m","variant":"curved","family":"in-phase","e_ref":3,"initial":{"x":[0.1,0]},"t_end":1}"#,
        )
        .unwrap();
        assert_eq!(s.weights(), CostWeights::curved_default());
        assert_eq!(s.chart_degree, 9);
    }

    #[test]
    fn sweep_param_renames() {
        let base = preset("fig2").unwrap().remove(0);
        let s = with_param(&base, "alpha", 0.2).unwrap();
        assert_eq!(s.alpha, 0.2);
        assert!(s.name.ends_with("alpha_0.2"));
        assert!(with_param(&base, "gamma", 1.0).is_err());
    }
}
