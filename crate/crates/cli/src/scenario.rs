//! Scenario files: one TOML document describing a plant, its uncertainty,
//! the adaptive design and the closed-loop runs to perform.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use ucmpc::f16;
use ucmpc::l1ac::L1Config;
use ucmpc::lti::{FilterBank, Mat};
use ucmpc::model::{ConstantUncertainty, MatchedUncertainty, NoUncertainty, PlantSpec, UncertaintySpec, Unmatched};
use ucmpc::mpc::{MpcConfig, Variant};
use ucmpc::sets::HyperRect;
use ucmpc::sim::{ReferenceSchedule, ReferenceSegment, SimConfig, VerdictOptions};
use ucmpc::tightening::TighteningOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub variants: Vec<Variant>,
    pub plant: PlantSection,
    pub uncertainty: UncertaintySection,
    pub l1: L1Section,
    #[serde(default)]
    pub tightening: TighteningOptions,
    #[serde(default)]
    pub mpc: MpcConfig,
    pub sim: SimSection,
    #[serde(default)]
    pub verdict: VerdictOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
}

/// Either `builtin = "f16"` or every matrix and box spelled out.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_u: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_x: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_set: Option<HyperRect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_set: Option<HyperRect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_set: Option<HyperRect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatchedSection {
    F16,
    None,
    Constant { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySection {
    pub matched: MatchedSection,
    /// Defaults to no disturbance in every `B_u` channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unmatched: Option<Unmatched>,
    pub b_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L1Section {
    /// Diagonal of the Hurwitz estimator matrix `A_e`.
    pub a_e_diag: Vec<f64>,
    /// One first-order filter bandwidth per input.
    pub bandwidth_rad_s: Vec<f64>,
    /// Sample time used to start the design search.
    pub t_sample_s: f64,
    pub gamma1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt_plant_s: f64,
    pub dt_l1_s: f64,
    pub dt_ctrl_s: f64,
    pub t_end_s: f64,
    pub x0: Vec<f64>,
    pub reference: Vec<ReferenceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceEntry {
    pub start_s: f64,
    /// Output values in plant units (degrees for the F-16).
    pub value_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedVector {
    pub value: Vec<f64>,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub tol: f64,
}

/// Reference values checked by `tighten`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_tilde: Option<ExpectedVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_ua: Option<ExpectedVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_tilde_u: Option<ExpectedVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_n: Option<ExpectedBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_n: Option<ExpectedBox>,
}

/// Core objects built from a scenario.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub plant: PlantSpec,
    pub uncertainty: UncertaintySpec,
    pub l1: L1Config,
    pub sim: SimConfig,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("loading scenario {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Checks everything that can be checked without running the design.
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.name.trim().is_empty(), "name: must not be empty");
        let mut seen = Vec::new();
        for v in &self.variants {
            ensure!(!seen.contains(v), "variants: {v} listed twice");
            seen.push(*v);
        }
        self.resolve()?;
        self.mpc.validate().context("mpc")?;
        let update = self.mpc.update_period_s;
        ensure!(
            (update - self.sim.dt_ctrl_s).abs() <= 1e-9 * update,
            "sim.dt_ctrl_s: must equal mpc.update_period_s ({} vs {update})",
            self.sim.dt_ctrl_s
        );
        let v = &self.verdict;
        ensure!(v.transient_s >= 0.0 && v.tol >= 0.0, "verdict: transient_s and tol must be nonnegative");
        for (a, b) in v.rms_windows.iter().chain(std::iter::once(&v.steady_window)) {
            ensure!(a < b, "verdict: window [{a}, {b}) is empty");
        }
        if let Some(e) = &self.expected {
            e.validate()?;
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let plant = self.plant.build().context("plant")?;
        let uncertainty = self.uncertainty.build(&plant).context("uncertainty")?;
        let l1 = self.l1.build(&plant).context("l1")?;
        let sim = self.sim.build().context("sim")?;
        ensure!(
            sim.x0.len() == plant.states(),
            "sim.x0: {} entries for {} states",
            sim.x0.len(),
            plant.states()
        );
        ensure!(
            sim.reference.dim() == plant.outputs(),
            "sim.reference: {} values per segment for {} outputs",
            sim.reference.dim(),
            plant.outputs()
        );
        Ok(Resolved {
            plant,
            uncertainty,
            l1,
            sim,
        })
    }

    /// Variants to run: the command line wins over the file.
    pub fn selected_variants(&self, requested: &[Variant]) -> Vec<Variant> {
        let source = if requested.is_empty() { &self.variants } else { requested };
        let mut out = Vec::new();
        for v in source {
            if !out.contains(v) {
                out.push(*v);
            }
        }
        out
    }
}

fn matrix(name: &str, rows: &[Vec<f64>], cols_hint: Option<usize>) -> Result<Mat> {
    let cols = rows.first().map(Vec::len).or(cols_hint).unwrap_or(0);
    if rows.iter().any(|r| r.len() != cols) {
        bail!("{name}: rows have different lengths");
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Mat::from_row_slice(rows.len(), cols, &flat))
}

impl PlantSection {
    fn explicit_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mats = [("a", &self.a), ("b", &self.b), ("b_u", &self.b_u), ("c", &self.c), ("k_x", &self.k_x)];
        for (name, m) in mats {
            if m.is_some() {
                out.push(name);
            }
        }
        let sets = [("x_set", &self.x_set), ("u_set", &self.u_set), ("x0_set", &self.x0_set)];
        for (name, s) in sets {
            if s.is_some() {
                out.push(name);
            }
        }
        out
    }

    pub fn build(&self) -> Result<PlantSpec> {
        if let Some(name) = &self.builtin {
            let extra = self.explicit_fields();
            ensure!(extra.is_empty(), "builtin plant cannot be combined with {}", extra.join(", "));
            return match name.as_str() {
                "f16" => Ok(f16::plant()),
                other => bail!("builtin: unknown plant {other:?} (known: \"f16\")"),
            };
        }
        let need = |name: &str, m: &Option<Vec<Vec<f64>>>| -> Result<Vec<Vec<f64>>> {
            m.clone().with_context(|| format!("{name}: required when no builtin is given"))
        };
        let a = matrix("a", &need("a", &self.a)?, None)?;
        let n = a.nrows();
        let b = matrix("b", &need("b", &self.b)?, None)?;
        let b_u = match &self.b_u {
            Some(rows) => matrix("b_u", rows, Some(0))?,
            None => Mat::zeros(n, 0),
        };
        let c = matrix("c", &need("c", &self.c)?, None)?;
        let k_x = matrix("k_x", &need("k_x", &self.k_x)?, None)?;
        let x_set = self.x_set.clone().context("x_set: required")?;
        let u_set = self.u_set.clone().context("u_set: required")?;
        let x0_set = self.x0_set.clone().context("x0_set: required")?;
        Ok(PlantSpec::new(a, b, b_u, c, k_x, x_set, u_set, x0_set)?)
    }
}

impl UncertaintySection {
    pub fn build(&self, plant: &PlantSpec) -> Result<UncertaintySpec> {
        let matched: Arc<dyn MatchedUncertainty> = match &self.matched {
            MatchedSection::F16 => Arc::new(f16::F16Uncertainty),
            MatchedSection::None => Arc::new(NoUncertainty {
                channels: plant.inputs(),
            }),
            MatchedSection::Constant { values } => {
                ensure!(values.iter().all(|v| v.is_finite()), "matched.values: must be finite");
                Arc::new(ConstantUncertainty { values: values.clone() })
            }
        };
        let unmatched = self.unmatched.clone().unwrap_or(Unmatched::Zero {
            channels: plant.unmatched_channels(),
        });
        let spec = UncertaintySpec::new(matched, unmatched, self.b_w)?;
        spec.check_against(plant)?;
        Ok(spec)
    }
}

impl L1Section {
    pub fn build(&self, plant: &PlantSpec) -> Result<L1Config> {
        ensure!(
            self.a_e_diag.len() == plant.states(),
            "a_e_diag: {} entries for {} states",
            self.a_e_diag.len(),
            plant.states()
        );
        ensure!(
            self.bandwidth_rad_s.len() == plant.inputs(),
            "bandwidth_rad_s: {} entries for {} inputs",
            self.bandwidth_rad_s.len(),
            plant.inputs()
        );
        let a_e = Mat::from_diagonal(&nalgebra::DVector::from_column_slice(&self.a_e_diag));
        let filters = FilterBank::new(self.bandwidth_rad_s.clone())?;
        Ok(L1Config::new(a_e, self.t_sample_s, filters, self.gamma1)?)
    }
}

impl SimSection {
    pub fn build(&self) -> Result<SimConfig> {
        let segments = self
            .reference
            .iter()
            .map(|r| ReferenceSegment {
                start_s: r.start_s,
                value: r.value_deg.clone(),
            })
            .collect();
        let cfg = SimConfig {
            dt_plant_s: self.dt_plant_s,
            dt_l1_s: self.dt_l1_s,
            dt_ctrl_s: self.dt_ctrl_s,
            t_end_s: self.t_end_s,
            reference: ReferenceSchedule::new(segments)?,
            x0: self.x0.clone(),
        };
        cfg.step_counts()?;
        Ok(cfg)
    }
}

impl Expected {
    fn validate(&self) -> Result<()> {
        let vectors = [("rho_tilde", &self.rho_tilde), ("rho_ua", &self.rho_ua), ("rho_tilde_u", &self.rho_tilde_u)];
        for (name, v) in vectors {
            if let Some(v) = v {
                ensure!(v.tol >= 0.0, "expected.{name}.tol: must be nonnegative");
            }
        }
        for (name, b) in [("x_n", &self.x_n), ("u_n", &self.u_n)] {
            if let Some(b) = b {
                ensure!(b.tol >= 0.0, "expected.{name}.tol: must be nonnegative");
                ensure!(b.lower.len() == b.upper.len(), "expected.{name}: lower and upper differ in length");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const F16: &str = include_str!("../../../scenarios/f16.toml");

    #[test]
    fn bundled_f16_scenario_matches_builtin_defaults() {
        let s = Scenario::parse(F16).unwrap();
        let r = s.resolve().unwrap();
        assert_eq!(r.plant, f16::plant());
        assert_eq!(r.sim, SimConfig::f16_default());
        assert_eq!(r.l1, ucmpc::tightening::f16_l1_config());
        assert_eq!(s.variants, Variant::ALL.to_vec());
    }

    #[test]
    fn resolved_copy_round_trips() {
        let s = Scenario::parse(F16).unwrap();
        let again = Scenario::parse(&s.to_toml().unwrap()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = F16.replacen("[mpc]", "[mpc]\nhorizon = 1.0", 1);
        let err = format!("{:#}", Scenario::parse(&text).unwrap_err());
        assert!(err.contains("horizon"), "{err}");
    }

    #[test]
    fn unknown_builtin_is_named() {
        let text = F16.replacen("builtin = \"f16\"", "builtin = \"f15\"", 1);
        let err = format!("{:#}", Scenario::parse(&text).unwrap_err());
        assert!(err.contains("f15"), "{err}");
    }

    #[test]
    fn mismatched_update_period_is_rejected() {
        let text = F16.replacen("dt_ctrl_s = 0.01", "dt_ctrl_s = 0.02", 1);
        let err = format!("{:#}", Scenario::parse(&text).unwrap_err());
        assert!(err.contains("dt_ctrl_s"), "{err}");
    }

    #[test]
    fn explicit_plant_needs_every_matrix() {
        let text = F16.replacen("builtin = \"f16\"", "a = [[-1.0]]", 1);
        let err = format!("{:#}", Scenario::parse(&text).unwrap_err());
        assert!(err.contains("required"), "{err}");
    }

    #[test]
    fn duplicate_variants_are_rejected() {
        let text = F16.replacen("variants = [\"uc\"", "variants = [\"uc\", \"uc\"", 1);
        assert!(Scenario::parse(&text).is_err());
    }
}
