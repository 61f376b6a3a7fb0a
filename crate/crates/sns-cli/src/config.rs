//! TOML run configuration: `[problem]`, repeatable `[[scheme]]`, `[mc]`,
//! `[output]`. Unknown keys are rejected; every field has an explicit
//! default; a parsed document serialises back to an identical structure.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use sns_core::benchmarks::{make_example, ExampleId, Problem};
use sns_core::experiments::{ErrorMeasure, McPlan, Observable, Reference};
use sns_core::schemes::{
    ChorinProjection, Convection, LaplacianTreatment, SchemeConfig, SchemeKind,
};
use sns_core::stochastics::TransportIntegration;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(rename = "scheme")]
    pub schemes: Vec<SchemeSection>,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// Catalogue id, e.g. `additive_general`, `vortex_noise:transport`,
    /// `lid_driven_cavity:additive`.
    pub id: String,
    /// Vortex-lattice scale (vortex / cavity problems only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scl: Option<u32>,
    /// Replace the force and boundary data with zero and drop the exact
    /// solution (energy-identity experiments).
    #[serde(default)]
    pub zero_force: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    /// `implicit_euler` | `chorin` | `chorin_corrected` | `crank_nicolson`
    /// | `semi_implicit_nse`.
    pub kind: String,
    /// Chorin projection: `exact_saddle` (default) | `pressure_poisson`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<String>,
    /// Crank-Nicolson Laplacian: `midpoint` (default) | `fully_implicit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laplacian: Option<String>,
    /// NSE convection: `semi_implicit` (default) | `skew`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convection: Option<String>,
    /// `stratonovich_midpoint` | `ito_corrector` (transport noise).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_integration: Option<String>,
    #[serde(default)]
    pub project_initial: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Mesh vertices per side.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Time-step ladder; empty selects the default {T/8, ..., T/256}.
    #[serde(default)]
    pub taus: Vec<f64>,
    /// Fine Wiener-grid resolution.
    #[serde(default = "default_n_fine")]
    pub n_fine: usize,
    /// `fine_tau` (default) | `exact`.
    #[serde(default = "default_reference")]
    pub reference: String,
    #[serde(default = "default_refinement")]
    pub refinement: usize,
    /// Error measures: `Linf_t_L2w_L2x`, `L2w_Linf_t_L2x`, `L2w_L2t_H1`,
    /// `int_pressure`, `inst_pressure`, `weak:kinetic_energy`,
    /// `weak:squared_l2_at_probe`.
    #[serde(default = "default_measures")]
    pub measures: Vec<String>,
    #[serde(default = "default_probe")]
    pub probe: [f64; 2],
}

fn default_samples() -> usize {
    1000
}
fn default_n() -> usize {
    16
}
fn default_n_fine() -> usize {
    1024
}
fn default_reference() -> String {
    "fine_tau".into()
}
fn default_refinement() -> usize {
    4
}
fn default_measures() -> Vec<String> {
    vec!["Linf_t_L2w_L2x".into()]
}
fn default_probe() -> [f64; 2] {
    [0.875, 0.875]
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            samples: default_samples(),
            seed: 0,
            n: default_n(),
            taus: Vec::new(),
            n_fine: default_n_fine(),
            reference: default_reference(),
            refinement: default_refinement(),
            measures: default_measures(),
            probe: default_probe(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// `csv` | `json` | `svg-plot-data`.
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_dir() -> String {
    "out".into()
}
fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_dir(), formats: default_formats() }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(format!("serialise error: {e}")))
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.schemes.is_empty() {
            return Err(CliError::Config("at least one [[scheme]] section is required".into()));
        }
        for f in &self.output.formats {
            if !matches!(f.as_str(), "csv" | "json" | "svg-plot-data") {
                return Err(CliError::Config(format!("unknown output format {f:?}")));
            }
        }
        if !matches!(self.mc.reference.as_str(), "exact" | "fine_tau") {
            return Err(CliError::Config(format!("unknown reference {:?}", self.mc.reference)));
        }
        // Fail fast on unparsable ids/kinds/measures.
        self.build_problem()?;
        for s in &self.schemes {
            build_scheme(s)?;
        }
        for m in &self.mc.measures {
            parse_measure(m, self.mc.probe)?;
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<Problem, CliError> {
        let id = ExampleId::parse(&self.problem.id, self.problem.scl)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let mut problem = make_example(&id).map_err(|e| CliError::Config(e.to_string()))?;
        if self.problem.zero_force {
            problem.force = Arc::new(|_p, _t, _x, _y| [0.0, 0.0]);
            problem.bc = Arc::new(|_p, _t, _x, _y| [0.0, 0.0]);
            problem.exact = None;
            problem.id.push_str("+zero_force");
        }
        Ok(problem)
    }

    /// Ladder: configured values, or the default `{T/8, ..., T/256}`.
    pub fn taus(&self, t_end: f64) -> Vec<f64> {
        if self.mc.taus.is_empty() {
            (3..=8).map(|k| t_end / (1u64 << k) as f64).collect()
        } else {
            self.mc.taus.clone()
        }
    }

    pub fn build_plan(&self) -> Result<McPlan, CliError> {
        let problem = self.build_problem()?;
        let taus = self.taus(problem.t_end);
        let schemes: Result<Vec<SchemeConfig>, CliError> =
            self.schemes.iter().map(build_scheme).collect();
        let measures: Result<Vec<ErrorMeasure>, CliError> = self
            .mc
            .measures
            .iter()
            .map(|m| parse_measure(m, self.mc.probe))
            .collect();
        let mut plan = McPlan::new(problem, schemes?, taus);
        plan.n = self.mc.n;
        plan.samples = self.mc.samples;
        plan.seed = self.mc.seed;
        plan.n_fine = self.mc.n_fine;
        plan.measures = measures?;
        plan.probe = self.mc.probe;
        plan.reference = match self.mc.reference.as_str() {
            "exact" => Reference::Exact,
            _ => Reference::FineTau { refinement: self.mc.refinement },
        };
        Ok(plan)
    }
}

pub fn build_scheme(s: &SchemeSection) -> Result<SchemeConfig, CliError> {
    let kind = match s.kind.as_str() {
        "implicit_euler" => SchemeKind::ImplicitEuler,
        "chorin" => SchemeKind::Chorin,
        "chorin_corrected" => SchemeKind::ChorinPressureCorrected,
        "crank_nicolson" => SchemeKind::CrankNicolsonTransport,
        "semi_implicit_nse" => SchemeKind::ImplicitEulerNse,
        other => return Err(CliError::Config(format!("unknown scheme kind {other:?}"))),
    };
    let mut cfg = SchemeConfig::new(kind, 1.0); // tau is set per ladder level
    if let Some(p) = &s.projection {
        cfg.chorin_projection = match p.as_str() {
            "exact_saddle" => ChorinProjection::ExactSaddle,
            "pressure_poisson" => ChorinProjection::PressurePoisson,
            other => return Err(CliError::Config(format!("unknown projection {other:?}"))),
        };
    }
    if let Some(l) = &s.laplacian {
        cfg.laplacian_treatment = match l.as_str() {
            "midpoint" => LaplacianTreatment::Midpoint,
            "fully_implicit" => LaplacianTreatment::FullyImplicit,
            other => return Err(CliError::Config(format!("unknown laplacian {other:?}"))),
        };
    }
    if let Some(c) = &s.convection {
        cfg.convection = match c.as_str() {
            "semi_implicit" => Convection::SemiImplicit,
            "skew" => Convection::SemiImplicitSkew,
            other => return Err(CliError::Config(format!("unknown convection {other:?}"))),
        };
    }
    if let Some(t) = &s.transport_integration {
        cfg.transport_integration = Some(match t.as_str() {
            "stratonovich_midpoint" => TransportIntegration::StratonovichMidpoint,
            "ito_corrector" => TransportIntegration::ItoPlusCorrector,
            other => {
                return Err(CliError::Config(format!("unknown transport integration {other:?}")))
            }
        });
    }
    cfg.project_initial = s.project_initial;
    Ok(cfg)
}

pub fn parse_measure(m: &str, probe: [f64; 2]) -> Result<ErrorMeasure, CliError> {
    Ok(match m {
        "Linf_t_L2w_L2x" => ErrorMeasure::LinfTL2wL2x,
        "Linf_t_L2w_L2x_tilde" => ErrorMeasure::LinfTL2wL2xTilde,
        "L2w_Linf_t_L2x" => ErrorMeasure::L2wLinfTL2x,
        "L2w_L2t_H1" => ErrorMeasure::L2wL2tH1,
        "int_pressure" => ErrorMeasure::IntPressure,
        "inst_pressure" => ErrorMeasure::InstPressure,
        "weak:kinetic_energy" => ErrorMeasure::Weak(Observable::KineticEnergy),
        "weak:squared_l2_at_probe" => {
            ErrorMeasure::Weak(Observable::SquaredL2AtProbe { probe })
        }
        other => return Err(CliError::Config(format!("unknown measure {other:?}"))),
    })
}
