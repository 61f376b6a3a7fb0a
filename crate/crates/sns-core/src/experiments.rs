//! Monte-Carlo harness: sample orchestration, strong/weak/pressure error
//! estimation, convergence-rate fitting, and field statistics.
//!
//! One plan fixes a problem, a set of scheme configurations, a dyadic ladder
//! of time steps and a sample budget. Every sample draws **one** fine Wiener
//! path; all ladder levels consume aggregations of that path (common random
//! numbers), so temporal errors difference out of the comparison. Errors are
//! measured either against the problem's exact solution or against a fine-τ
//! run of the same scheme on the same path (`τ_ref = τ_min / refinement`),
//! which cancels the spatial discretisation error.
//!
//! Strong errors are root-mean-square over the sample set,
//!
//! ```text
//! Linf_t_L2w_L2x = max_n sqrt( E_s ||e^n||²_{L²} )
//! L2w_Linf_t_L2x = sqrt( E_s max_n ||e^n||²_{L²} )
//! L2w_L2t_H1     = sqrt( E_s τ Σ_n ||∇e^n||² )
//! ```
//!
//! Weak errors compare observable expectations against an *independent*
//! sample set at the reference resolution (weak error is a statement about
//! distributions, so common random numbers would bias it); a coupled variant
//! on shared paths is provided for the Jensen comparison
//! `|E φ_τ − E φ_ref| ≤ E |φ_τ − φ_ref|`.
//!
//! Sample-level parallelism uses rayon, but the reduction runs in sample
//! order over the collected per-sample results, so every output is
//! bit-identical for any worker count.

use rayon::prelude::*;
use serde::Serialize;

use crate::benchmarks::Problem;
use crate::error::{Error, Result};
use crate::grid_fem::{
    assemble_operators, build_mesh, build_spaces, eval_velocity, interpolate_pressure,
    interpolate_velocity, FeSpaces, OperatorSet,
};
use crate::saddle::gauge_mean_zero;
use crate::schemes::{run, RecordSpec, SchemeConfig, SchemeKind, Trajectory};
use crate::sparse::{axpy, quad_form};
use crate::stochastics::{generate_path, WienerPath};

/// Offset deriving the independent seed stream for weak-error references.
const WEAK_REF_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Observable for weak-error estimation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Observable {
    /// `φ(u) = ½ u^T M u`.
    KineticEnergy,
    /// `φ(u) = |u(probe)|²`.
    SquaredL2AtProbe { probe: [f64; 2] },
}

impl Observable {
    pub fn eval(&self, spaces: &FeSpaces, ops: &OperatorSet, u: &[f64]) -> f64 {
        match self {
            Observable::KineticEnergy => 0.5 * quad_form(&ops.m, u, u),
            Observable::SquaredL2AtProbe { probe } => {
                let v = eval_velocity(spaces, u, probe[0], probe[1]);
                v[0] * v[0] + v[1] * v[1]
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Observable::KineticEnergy => "kinetic_energy".into(),
            Observable::SquaredL2AtProbe { probe } => {
                format!("squared_l2_at({},{})", probe[0], probe[1])
            }
        }
    }
}

/// What is measured per (scheme, τ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ErrorMeasure {
    /// `max_n sqrt(E ||e^n||²)` — velocity.
    LinfTL2wL2x,
    /// `max_n sqrt(E ||ẽ^n||²)` — error of the intermediate (pre-projection)
    /// Chorin velocity iterate ũ. Only schemes with an intermediate iterate
    /// support this measure.
    LinfTL2wL2xTilde,
    /// `sqrt(E max_n ||e^n||²)` — velocity.
    L2wLinfTL2x,
    /// `sqrt(E τ Σ ||∇e^n||²)` — velocity.
    L2wL2tH1,
    /// `max_n sqrt(E ||P_acc^n − P(t_n)||²)` — time-integrated pressure.
    IntPressure,
    /// `max_n sqrt(E ||p^n − p(t_n)||²)` — instantaneous pressure.
    InstPressure,
    /// Weak error of an observable at the final time.
    Weak(Observable),
}

impl ErrorMeasure {
    pub fn label(&self) -> String {
        match self {
            ErrorMeasure::LinfTL2wL2x => "Linf_t_L2w_L2x".into(),
            ErrorMeasure::LinfTL2wL2xTilde => "Linf_t_L2w_L2x_tilde".into(),
            ErrorMeasure::L2wLinfTL2x => "L2w_Linf_t_L2x".into(),
            ErrorMeasure::L2wL2tH1 => "L2w_L2t_H1".into(),
            ErrorMeasure::IntPressure => "int_pressure".into(),
            ErrorMeasure::InstPressure => "inst_pressure".into(),
            ErrorMeasure::Weak(obs) => format!("weak:{}", obs.label()),
        }
    }
}

/// Error reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Reference {
    /// The problem's exact solution, interpolated at snapshot times.
    Exact,
    /// A run of the same scheme on the same path at `τ_ref = τ_min / refinement`.
    FineTau { refinement: usize },
}

/// A Monte-Carlo study: problem, schemes, τ ladder, budget, measures.
#[derive(Clone)]
pub struct McPlan {
    pub problem: Problem,
    /// The `tau` field of each config is overridden by the ladder values.
    pub schemes: Vec<SchemeConfig>,
    /// Dyadic divisors of the final time, any order; deduplicated and run
    /// coarse-to-fine.
    pub taus: Vec<f64>,
    /// Mesh resolution (vertices per side).
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub measures: Vec<ErrorMeasure>,
    pub reference: Reference,
    /// Fine Wiener-grid resolution; every ladder level (and the fine-τ
    /// reference) must divide it.
    pub n_fine: usize,
    /// Collect [`FieldStatistics`] for the first scheme at the finest τ.
    pub collect_stats: bool,
    /// Probe point for the marginal sample cloud.
    pub probe: [f64; 2],
}

impl McPlan {
    pub fn new(problem: Problem, schemes: Vec<SchemeConfig>, taus: Vec<f64>) -> Self {
        McPlan {
            problem,
            schemes,
            taus,
            n: 16,
            samples: 1000,
            seed: 0,
            measures: vec![ErrorMeasure::LinfTL2wL2x],
            reference: Reference::FineTau { refinement: 4 },
            n_fine: 1024,
            collect_stats: false,
            probe: [0.875, 0.875],
        }
    }

    /// Ladder steps sorted coarse-to-fine, deduplicated.
    fn sorted_taus(&self) -> Vec<f64> {
        let mut t = self.taus.clone();
        t.sort_by(|a, b| b.partial_cmp(a).expect("finite taus"));
        t.dedup();
        t
    }

    fn steps_for(&self, tau: f64) -> Result<usize> {
        let n = (self.problem.t_end / tau).round();
        if n < 1.0 || (n * tau - self.problem.t_end).abs() > 1e-9 * self.problem.t_end {
            return Err(Error::invalid(format!("tau {tau} does not divide T = {}", self.problem.t_end)));
        }
        let n = n as usize;
        if self.n_fine % n != 0 {
            return Err(Error::invalid(format!(
                "tau {tau} ({n} steps) does not divide the fine grid ({} steps)",
                self.n_fine
            )));
        }
        Ok(n)
    }

    fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() || self.taus.is_empty() || self.measures.is_empty() {
            return Err(Error::invalid("plan needs at least one scheme, tau and measure"));
        }
        if self.samples < 2 && self.problem.noise.is_some() {
            return Err(Error::invalid("stochastic problems need at least 2 samples"));
        }
        if self.samples == 0 {
            return Err(Error::invalid("plan needs at least one sample"));
        }
        if !(0.0..=1.0).contains(&self.probe[0]) || !(0.0..=1.0).contains(&self.probe[1]) {
            return Err(Error::invalid(format!("probe {:?} is outside the closed unit square", self.probe)));
        }
        for &tau in &self.taus {
            self.steps_for(tau)?;
        }
        if let Reference::FineTau { refinement } = self.reference {
            if refinement < 2 {
                return Err(Error::invalid("fine-tau refinement must be at least 2"));
            }
            self.steps_for(self.ref_tau())?;
        }
        if matches!(self.reference, Reference::Exact) && self.problem.exact.is_none() {
            return Err(Error::Unsupported(format!(
                "{} has no exact solution; use a fine-tau reference",
                self.problem.id
            )));
        }
        Ok(())
    }

    /// Reference time step `τ_min / refinement` (fine-τ mode).
    pub fn ref_tau(&self) -> f64 {
        let tau_min = self.taus.iter().cloned().fold(f64::INFINITY, f64::min);
        match self.reference {
            Reference::Exact => tau_min,
            Reference::FineTau { refinement } => tau_min / refinement as f64,
        }
    }
}

/// Human-readable scheme label used in tables and output files.
pub fn scheme_label(cfg: &SchemeConfig) -> String {
    match cfg.kind {
        SchemeKind::ImplicitEuler => "implicit_euler".into(),
        SchemeKind::Chorin => "chorin".into(),
        SchemeKind::ChorinPressureCorrected => "chorin_corrected".into(),
        SchemeKind::CrankNicolsonTransport => "crank_nicolson".into(),
        SchemeKind::ImplicitEulerNse => "semi_implicit_nse".into(),
    }
}

/// One estimated error.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorRow {
    pub scheme: String,
    pub tau: f64,
    pub measure: ErrorMeasure,
    pub estimate: f64,
    /// Delta-method standard error of the RMS estimate.
    pub stderr: f64,
    pub samples: usize,
}

/// All rows of a Monte-Carlo study.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn select(&self, scheme: &str, measure: &ErrorMeasure) -> Vec<&ErrorRow> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme && r.measure == *measure)
            .collect()
    }
}

/// Mean/SD fields, energy trajectories and a probe sample cloud.
#[derive(Clone, Debug, Serialize)]
pub struct FieldStatistics {
    /// Mean velocity coefficients at the final time.
    pub mean_velocity: Vec<f64>,
    /// Per-P2-node standard-deviation magnitude `sqrt(var_u + var_v)`.
    pub sd_magnitude: Vec<f64>,
    /// Snapshot times of the energy trajectories.
    pub energy_times: Vec<f64>,
    /// Kinetic energy per sample, `[sample][step]`.
    pub energies: Vec<Vec<f64>>,
    pub energy_mean: Vec<f64>,
    pub energy_sd: Vec<f64>,
    /// `(u, v)` samples at the probe point at the final time.
    pub probe_cloud: Vec<[f64; 2]>,
    pub probe: [f64; 2],
}

/// Result of a Monte-Carlo study.
pub struct McResult {
    pub table: ErrorTable,
    pub stats: Option<FieldStatistics>,
}

/// Per-sample contribution of one (scheme, τ, measure) cell.
#[derive(Clone, Debug)]
enum PerSample {
    /// Squared errors per snapshot (Linf-in-time measures).
    PerStep(Vec<f64>),
    /// One squared scalar (L²_ω measures).
    Scalar(f64),
}

/// Everything one sample contributes to the reduction.
struct SampleOutput {
    /// `cells[scheme][tau][measure]`.
    cells: Vec<Vec<Vec<PerSample>>>,
    /// Statistics payload (first scheme, finest τ): final velocity, probe
    /// value, energy trajectory.
    stats: Option<(Vec<f64>, [f64; 2], Vec<f64>)>,
}

/// Per-snapshot errors of a trajectory against the chosen reference.
struct SnapshotErrors {
    vel_l2_sq: Vec<f64>,
    vel_h1_sq: Vec<f64>,
    vel_tilde_l2_sq: Option<Vec<f64>>,
    pint_sq: Option<Vec<f64>>,
    pinst_sq: Option<Vec<f64>>,
}

fn tilde_iterates<'a>(traj: &'a Trajectory, measures: &[ErrorMeasure]) -> Result<Option<&'a [Vec<f64>]>> {
    if !wants(measures, |m| matches!(m, ErrorMeasure::LinfTL2wL2xTilde)) {
        return Ok(None);
    }
    traj.u_tilde
        .as_deref()
        .map(Some)
        .ok_or_else(|| Error::Unsupported("the scheme has no intermediate velocity iterate".into()))
}

fn wants(measures: &[ErrorMeasure], pred: impl Fn(&ErrorMeasure) -> bool) -> bool {
    measures.iter().any(pred)
}

fn errors_vs_exact(
    traj: &Trajectory,
    problem: &Problem,
    path: &WienerPath,
    spaces: &FeSpaces,
    ops: &OperatorSet,
    measures: &[ErrorMeasure],
) -> Result<SnapshotErrors> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Unsupported(format!("{} has no exact solution", problem.id)))?;
    let k = traj.times.len();
    let tilde = tilde_iterates(traj, measures)?;
    let mut out = SnapshotErrors {
        vel_l2_sq: Vec::with_capacity(k),
        vel_h1_sq: Vec::with_capacity(k),
        vel_tilde_l2_sq: tilde.map(|_| Vec::with_capacity(k)),
        pint_sq: None,
        pinst_sq: None,
    };
    for (i, &t) in traj.times.iter().enumerate() {
        let ex = interpolate_velocity(spaces, |_, x, y| (exact.velocity)(path, t, x, y), t)?;
        let mut e = traj.velocities[i].clone();
        axpy(-1.0, &ex, &mut e);
        out.vel_l2_sq.push(quad_form(&ops.m, &e, &e).max(0.0));
        out.vel_h1_sq.push(quad_form(&ops.a, &e, &e).max(0.0));
        if let (Some(uts), Some(v)) = (tilde, out.vel_tilde_l2_sq.as_mut()) {
            let mut et = uts[i].clone();
            axpy(-1.0, &ex, &mut et);
            v.push(quad_form(&ops.m, &et, &et).max(0.0));
        }
    }
    if wants(measures, |m| matches!(m, ErrorMeasure::IntPressure)) {
        let pint = exact.int_pressure.as_ref().ok_or_else(|| {
            Error::Unsupported(format!("{} has no closed-form time-integrated pressure", problem.id))
        })?;
        let mut v = Vec::with_capacity(k);
        for (i, &t) in traj.times.iter().enumerate() {
            v.push(pressure_err_sq(&traj.p_acc[i], |x, y| pint(path, t, x, y), spaces, ops)?);
        }
        out.pint_sq = Some(v);
    }
    if wants(measures, |m| matches!(m, ErrorMeasure::InstPressure)) {
        let pinst = exact.inst_pressure.as_ref().ok_or_else(|| {
            Error::Unsupported(format!("{} has no instantaneous pressure", problem.id))
        })?;
        let mut v = Vec::with_capacity(k);
        for (i, &t) in traj.times.iter().enumerate() {
            v.push(pressure_err_sq(&traj.pressures[i], |x, y| pinst(path, t, x, y), spaces, ops)?);
        }
        out.pinst_sq = Some(v);
    }
    Ok(out)
}

fn pressure_err_sq(
    discrete: &[f64],
    exact: impl Fn(f64, f64) -> f64,
    spaces: &FeSpaces,
    ops: &OperatorSet,
) -> Result<f64> {
    let mut ex = interpolate_pressure(spaces, |_, x, y| exact(x, y), 0.0)?;
    gauge_mean_zero(&mut ex, &ops.mean_vec);
    let mut e = discrete.to_vec();
    gauge_mean_zero(&mut e, &ops.mean_vec);
    axpy(-1.0, &ex, &mut e);
    Ok(quad_form(&ops.mp, &e, &e).max(0.0))
}

fn errors_vs_reference(
    traj: &Trajectory,
    reference: &Trajectory,
    ops: &OperatorSet,
    measures: &[ErrorMeasure],
) -> Result<SnapshotErrors> {
    // Every snapshot time of the coarse run must be a snapshot of the
    // reference; the dyadic ladder guarantees alignment by index ratio.
    let k = traj.times.len();
    let tilde = tilde_iterates(traj, measures)?;
    let ref_tilde = if tilde.is_some() {
        Some(reference.u_tilde.as_deref().ok_or_else(|| {
            Error::Unsupported("the reference run has no intermediate velocity iterate".into())
        })?)
    } else {
        None
    };
    let mut out = SnapshotErrors {
        vel_l2_sq: Vec::with_capacity(k),
        vel_h1_sq: Vec::with_capacity(k),
        vel_tilde_l2_sq: tilde.map(|_| Vec::with_capacity(k)),
        pint_sq: None,
        pinst_sq: None,
    };
    let want_pint = wants(measures, |m| matches!(m, ErrorMeasure::IntPressure));
    let want_pinst = wants(measures, |m| matches!(m, ErrorMeasure::InstPressure));
    let mut pint = want_pint.then(|| Vec::with_capacity(k));
    let mut pinst = want_pinst.then(|| Vec::with_capacity(k));
    for (i, &t) in traj.times.iter().enumerate() {
        let j = reference
            .times
            .iter()
            .position(|&tr| (tr - t).abs() <= 1e-9 * t.max(1.0))
            .ok_or_else(|| Error::invalid(format!("reference lacks a snapshot at t = {t}")))?;
        let mut e = traj.velocities[i].clone();
        axpy(-1.0, &reference.velocities[j], &mut e);
        out.vel_l2_sq.push(quad_form(&ops.m, &e, &e).max(0.0));
        out.vel_h1_sq.push(quad_form(&ops.a, &e, &e).max(0.0));
        if let (Some(uts), Some(ruts), Some(v)) = (tilde, ref_tilde, out.vel_tilde_l2_sq.as_mut()) {
            let mut et = uts[i].clone();
            axpy(-1.0, &ruts[j], &mut et);
            v.push(quad_form(&ops.m, &et, &et).max(0.0));
        }
        if let Some(v) = pint.as_mut() {
            let mut ep = traj.p_acc[i].clone();
            gauge_mean_zero(&mut ep, &ops.mean_vec);
            let mut rp = reference.p_acc[j].clone();
            gauge_mean_zero(&mut rp, &ops.mean_vec);
            axpy(-1.0, &rp, &mut ep);
            v.push(quad_form(&ops.mp, &ep, &ep).max(0.0));
        }
        if let Some(v) = pinst.as_mut() {
            let mut ep = traj.pressures[i].clone();
            gauge_mean_zero(&mut ep, &ops.mean_vec);
            let mut rp = reference.pressures[j].clone();
            gauge_mean_zero(&mut rp, &ops.mean_vec);
            axpy(-1.0, &rp, &mut ep);
            v.push(quad_form(&ops.mp, &ep, &ep).max(0.0));
        }
    }
    out.pint_sq = pint;
    out.pinst_sq = pinst;
    Ok(out)
}

fn cell_from_errors(
    errs: &SnapshotErrors,
    measure: &ErrorMeasure,
    tau: f64,
) -> Result<PerSample> {
    Ok(match measure {
        ErrorMeasure::LinfTL2wL2x => PerSample::PerStep(errs.vel_l2_sq.clone()),
        ErrorMeasure::LinfTL2wL2xTilde => PerSample::PerStep(
            errs.vel_tilde_l2_sq
                .clone()
                .ok_or_else(|| Error::Unsupported("intermediate-iterate errors not available".into()))?,
        ),
        ErrorMeasure::L2wLinfTL2x => {
            PerSample::Scalar(errs.vel_l2_sq.iter().cloned().fold(0.0, f64::max))
        }
        ErrorMeasure::L2wL2tH1 => {
            // Left-endpoint-in-time quadrature of the squared seminorm,
            // skipping the (error-free) initial snapshot.
            PerSample::Scalar(tau * errs.vel_h1_sq.iter().skip(1).sum::<f64>())
        }
        ErrorMeasure::IntPressure => PerSample::PerStep(
            errs.pint_sq
                .clone()
                .ok_or_else(|| Error::Unsupported("int_pressure errors not available".into()))?,
        ),
        ErrorMeasure::InstPressure => PerSample::PerStep(
            errs.pinst_sq
                .clone()
                .ok_or_else(|| Error::Unsupported("inst_pressure errors not available".into()))?,
        ),
        ErrorMeasure::Weak(_) => {
            return Err(Error::invalid("weak measures are estimated by weak_error, not run_mc"))
        }
    })
}

fn provenance(e: Error, sample: usize, scheme: &str, tau: f64) -> Error {
    match e {
        Error::SolverFailure { step, detail } => Error::SolverFailure {
            step,
            detail: format!("sample {sample}, scheme {scheme}, tau {tau}: {detail}"),
        },
        other => other,
    }
}

/// Sample mean and standard error.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// RMS estimate `sqrt(mean)` with the delta-method standard error
/// `se(mean) / (2 sqrt(mean))`.
fn rms_of(values: &[f64]) -> (f64, f64) {
    let (m, se) = mean_se(values);
    let m = m.max(0.0);
    if m == 0.0 {
        return (0.0, 0.0);
    }
    (m.sqrt(), se / (2.0 * m.sqrt()))
}

/// Runs the full Monte-Carlo study.
///
/// Samples are processed in parallel; the reduction visits the collected
/// per-sample results in sample order, so the output is bit-identical for
/// any rayon worker count.
pub fn run_mc(plan: &McPlan) -> Result<McResult> {
    plan.validate()?;
    let taus = plan.sorted_taus();
    let strong_measures: Vec<ErrorMeasure> = plan
        .measures
        .iter()
        .filter(|m| !matches!(m, ErrorMeasure::Weak(_)))
        .cloned()
        .collect();
    let spaces = build_spaces(build_mesh(plan.n)?);
    let ops = assemble_operators(&spaces)?;
    let mode_ids = plan.problem.mode_ids();
    let record = RecordSpec { stride: 1 };
    let use_fine_ref = matches!(plan.reference, Reference::FineTau { .. });
    let ref_tau = plan.ref_tau();
    // Reference snapshots at every multiple of the finest ladder step.
    let ref_stride = if use_fine_ref {
        let n_ref = plan.steps_for(ref_tau)?;
        let n_finest = plan.steps_for(*taus.last().expect("nonempty ladder"))?;
        n_ref / n_finest
    } else {
        1
    };

    let outputs: Result<Vec<SampleOutput>> = (0..plan.samples)
        .into_par_iter()
        .map(|s| {
            let path = generate_path(plan.seed, s as u64, plan.n_fine, plan.problem.t_end, &mode_ids)?;
            let mut cells = Vec::with_capacity(plan.schemes.len());
            let mut stats = None;
            for (si, base) in plan.schemes.iter().enumerate() {
                let label = scheme_label(base);
                // Fine-τ reference: one extra run per scheme and sample.
                let reference = if use_fine_ref {
                    let mut cfg = base.clone();
                    cfg.tau = ref_tau;
                    Some(
                        run(&plan.problem, &cfg, &spaces, &ops, &path, &RecordSpec { stride: ref_stride })
                            .map_err(|e| provenance(e, s, &label, ref_tau))?,
                    )
                } else {
                    None
                };
                let mut per_tau = Vec::with_capacity(taus.len());
                for &tau in &taus {
                    let mut cfg = base.clone();
                    cfg.tau = tau;
                    let traj = run(&plan.problem, &cfg, &spaces, &ops, &path, &record)
                        .map_err(|e| provenance(e, s, &label, tau))?;
                    let errs = match &reference {
                        Some(r) => errors_vs_reference(&traj, r, &ops, &strong_measures)?,
                        None => errors_vs_exact(&traj, &plan.problem, &path, &spaces, &ops, &strong_measures)?,
                    };
                    let row: Result<Vec<PerSample>> = strong_measures
                        .iter()
                        .map(|m| cell_from_errors(&errs, m, tau))
                        .collect();
                    per_tau.push(row?);
                    if plan.collect_stats && si == 0 && tau == *taus.last().expect("ladder") {
                        let uf = traj.velocities.last().expect("snapshot").clone();
                        let pv = eval_velocity(&spaces, &uf, plan.probe[0], plan.probe[1]);
                        let en = traj.energy_log.iter().map(|r| r.energy).collect();
                        stats = Some((uf, pv, en));
                    }
                }
                cells.push(per_tau);
            }
            Ok(SampleOutput { cells, stats })
        })
        .collect();
    let outputs = outputs?;

    // Deterministic ordered reduction.
    let mut table = ErrorTable::default();
    for (si, base) in plan.schemes.iter().enumerate() {
        let label = scheme_label(base);
        for (ti, &tau) in taus.iter().enumerate() {
            for (mi, measure) in strong_measures.iter().enumerate() {
                let (estimate, stderr) = match &outputs[0].cells[si][ti][mi] {
                    PerSample::PerStep(_) => {
                        // Column-wise means over samples, then the max step.
                        let per_sample: Vec<&Vec<f64>> = outputs
                            .iter()
                            .map(|o| match &o.cells[si][ti][mi] {
                                PerSample::PerStep(v) => v,
                                PerSample::Scalar(_) => unreachable!("cell kind is per plan"),
                            })
                            .collect();
                        let steps = per_sample[0].len();
                        let mut best = (0usize, -1.0f64);
                        for k in 0..steps {
                            let m = per_sample.iter().map(|v| v[k]).sum::<f64>()
                                / per_sample.len() as f64;
                            if m > best.1 {
                                best = (k, m);
                            }
                        }
                        let column: Vec<f64> = per_sample.iter().map(|v| v[best.0]).collect();
                        rms_of(&column)
                    }
                    PerSample::Scalar(_) => {
                        let values: Vec<f64> = outputs
                            .iter()
                            .map(|o| match &o.cells[si][ti][mi] {
                                PerSample::Scalar(v) => *v,
                                PerSample::PerStep(_) => unreachable!("cell kind is per plan"),
                            })
                            .collect();
                        rms_of(&values)
                    }
                };
                table.rows.push(ErrorRow {
                    scheme: label.clone(),
                    tau,
                    measure: *measure,
                    estimate,
                    stderr,
                    samples: plan.samples,
                });
            }
        }
    }

    let stats = if plan.collect_stats {
        let payload: Vec<_> = outputs
            .iter()
            .map(|o| o.stats.as_ref().expect("stats collected for every sample"))
            .collect();
        let nv = payload[0].0.len();
        let s = payload.len() as f64;
        let mut mean = vec![0.0; nv];
        for (u, _, _) in &payload {
            axpy(1.0 / s, u, &mut mean);
        }
        let ns = nv / 2;
        let mut sd = vec![0.0; ns];
        if payload.len() > 1 {
            for (u, _, _) in &payload {
                for k in 0..ns {
                    let du = u[k] - mean[k];
                    let dv = u[ns + k] - mean[ns + k];
                    sd[k] += (du * du + dv * dv) / (s - 1.0);
                }
            }
            for v in &mut sd {
                *v = v.sqrt();
            }
        }
        let steps = payload[0].2.len();
        let tau_fine = *taus.last().expect("ladder");
        let energy_times: Vec<f64> = (0..steps).map(|k| k as f64 * tau_fine).collect();
        let energies: Vec<Vec<f64>> = payload.iter().map(|(_, _, e)| e.clone()).collect();
        let (energy_mean, energy_sd) = curves_mean_sd(&energies);
        Some(FieldStatistics {
            mean_velocity: mean,
            sd_magnitude: sd,
            energy_times,
            energies,
            energy_mean,
            energy_sd,
            probe_cloud: payload.iter().map(|(_, p, _)| *p).collect(),
            probe: plan.probe,
        })
    } else {
        None
    };

    Ok(McResult { table, stats })
}

fn curves_mean_sd(curves: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let steps = curves[0].len();
    let s = curves.len() as f64;
    let mut mean = vec![0.0; steps];
    for c in curves {
        axpy(1.0 / s, c, &mut mean);
    }
    let mut sd = vec![0.0; steps];
    if curves.len() > 1 {
        for c in curves {
            for k in 0..steps {
                let d = c[k] - mean[k];
                sd[k] += d * d / (s - 1.0);
            }
        }
        for v in &mut sd {
            *v = v.sqrt();
        }
    }
    (mean, sd)
}

/// Field statistics from fully recorded trajectories (small sample sets).
pub fn field_statistics(
    trajs: &[Trajectory],
    spaces: &FeSpaces,
    probe: [f64; 2],
) -> Result<FieldStatistics> {
    if trajs.len() < 2 {
        return Err(Error::invalid("field statistics need at least 2 samples"));
    }
    if !(0.0..=1.0).contains(&probe[0]) || !(0.0..=1.0).contains(&probe[1]) {
        return Err(Error::invalid(format!("probe {probe:?} is outside the closed unit square")));
    }
    let finals: Vec<&Vec<f64>> = trajs.iter().map(|t| t.velocities.last().expect("snapshot")).collect();
    let nv = finals[0].len();
    let s = finals.len() as f64;
    let mut mean = vec![0.0; nv];
    for u in &finals {
        axpy(1.0 / s, u, &mut mean);
    }
    let ns = nv / 2;
    let mut sd = vec![0.0; ns];
    for u in &finals {
        for k in 0..ns {
            let du = u[k] - mean[k];
            let dv = u[ns + k] - mean[ns + k];
            sd[k] += (du * du + dv * dv) / (s - 1.0);
        }
    }
    for v in &mut sd {
        *v = v.sqrt();
    }
    let energies: Vec<Vec<f64>> = trajs
        .iter()
        .map(|t| t.energy_log.iter().map(|r| r.energy).collect())
        .collect();
    let energy_times: Vec<f64> = trajs[0].energy_log.iter().map(|r| r.t).collect();
    let (energy_mean, energy_sd) = curves_mean_sd(&energies);
    Ok(FieldStatistics {
        probe_cloud: finals
            .iter()
            .map(|u| eval_velocity(spaces, u, probe[0], probe[1]))
            .collect(),
        mean_velocity: mean,
        sd_magnitude: sd,
        energy_times,
        energies,
        energy_mean,
        energy_sd,
        probe,
    })
}

/// A fitted convergence rate.
#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub scheme: String,
    pub measure_label: String,
    pub slope: f64,
    pub intercept: f64,
    /// RMS of the log-residuals over the selected points.
    pub residual: f64,
    /// The τ values that entered the fit (plateau points excluded).
    pub used_taus: Vec<f64>,
}

/// Least-squares slope of `log error` vs `log τ` with plateau exclusion:
/// walking coarse-to-fine, points after the first pairwise slope below 0.1
/// (the spatial error floor) are dropped. Needs at least 3 usable points.
pub fn fit_rate(table: &ErrorTable, scheme: &str, measure: &ErrorMeasure) -> Result<RateFit> {
    let mut rows = table.select(scheme, measure);
    rows.sort_by(|a, b| b.tau.partial_cmp(&a.tau).expect("finite taus"));
    let floor = rows.last().map(|r| r.estimate);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.estimate > 0.0)
        .map(|r| (r.tau.ln(), r.estimate.ln()))
        .collect();
    let taus: Vec<f64> = rows.iter().filter(|r| r.estimate > 0.0).map(|r| r.tau).collect();
    // Plateau exclusion.
    let mut keep = pts.len().min(1);
    for i in 1..pts.len() {
        let slope = (pts[i - 1].1 - pts[i].1) / (pts[i - 1].0 - pts[i].0);
        if slope < 0.1 {
            break;
        }
        keep = i + 1;
    }
    if keep < 3 {
        return Err(Error::InsufficientData { floor });
    }
    let pts = &pts[..keep];
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(Error::InsufficientData { floor });
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let residual = (pts
        .iter()
        .map(|p| {
            let r = p.1 - (slope * p.0 + intercept);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(RateFit {
        scheme: scheme.into(),
        measure_label: measure.label(),
        slope,
        intercept,
        residual,
        used_taus: taus[..keep].to_vec(),
    })
}

/// Pressure-stability statistics for one ladder level.
#[derive(Clone, Debug, Serialize)]
pub struct StabilitySeries {
    pub tau: f64,
    /// Step times `t_1 .. t_N` (the initial pressure is not defined).
    pub times: Vec<f64>,
    /// `E ||∇p^n||` per step.
    pub mean_grad_p: Vec<f64>,
    /// `E ||τ Σ p^ℓ||_{L²}` per step.
    pub mean_int_p: Vec<f64>,
    /// `max_n E ||∇p^n||²` — the quantity whose τ-exponent separates
    /// solenoidal from general noise.
    pub max_mean_grad_p_sq: f64,
}

/// Per-τ pressure-gradient statistics of one scheme: `E‖∇p^n‖` time series,
/// `E‖τΣp^ℓ‖` time series and `max_n E‖∇p^n‖²`. Ordered reduction as in
/// [`run_mc`].
pub fn pressure_stability(plan: &McPlan, scheme_index: usize) -> Result<Vec<StabilitySeries>> {
    plan.validate()?;
    let cfg = plan
        .schemes
        .get(scheme_index)
        .ok_or_else(|| Error::invalid(format!("no scheme at index {scheme_index}")))?;
    let spaces = build_spaces(build_mesh(plan.n)?);
    let ops = assemble_operators(&spaces)?;
    let mode_ids = plan.problem.mode_ids();
    let label = scheme_label(cfg);
    let mut out = Vec::new();
    for &tau in &plan.sorted_taus() {
        // [sample] -> (grad_p_sq per step, int_p_sq per step).
        let per_sample: Result<Vec<(Vec<f64>, Vec<f64>)>> = (0..plan.samples)
            .into_par_iter()
            .map(|s| {
                let path =
                    generate_path(plan.seed, s as u64, plan.n_fine, plan.problem.t_end, &mode_ids)?;
                let mut c = cfg.clone();
                c.tau = tau;
                let traj = run(&plan.problem, &c, &spaces, &ops, &path, &RecordSpec { stride: 1 })
                    .map_err(|e| provenance(e, s, &label, tau))?;
                let mut grad = Vec::with_capacity(traj.pressures.len() - 1);
                let mut intp = Vec::with_capacity(traj.pressures.len() - 1);
                for k in 1..traj.pressures.len() {
                    grad.push(quad_form(&ops.ap, &traj.pressures[k], &traj.pressures[k]).max(0.0));
                    intp.push(quad_form(&ops.mp, &traj.p_acc[k], &traj.p_acc[k]).max(0.0));
                }
                Ok((grad, intp))
            })
            .collect();
        let per_sample = per_sample?;
        let steps = per_sample[0].0.len();
        let s = per_sample.len() as f64;
        let mut mean_grad_p = vec![0.0; steps];
        let mut mean_grad_sq = vec![0.0; steps];
        let mut mean_int_p = vec![0.0; steps];
        for (grad, intp) in &per_sample {
            for k in 0..steps {
                mean_grad_p[k] += grad[k].sqrt() / s;
                mean_grad_sq[k] += grad[k] / s;
                mean_int_p[k] += intp[k].sqrt() / s;
            }
        }
        out.push(StabilitySeries {
            tau,
            times: (1..=steps).map(|k| k as f64 * tau).collect(),
            mean_grad_p,
            mean_int_p,
            max_mean_grad_p_sq: mean_grad_sq.iter().cloned().fold(0.0, f64::max),
        });
    }
    Ok(out)
}

/// Least-squares slope and intercept of `ln y` vs `ln x` over all points
/// with positive coordinates.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientData { floor: None });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(Error::InsufficientData { floor: None });
    }
    let slope = (n * sxy - sx * sy) / denom;
    Ok((slope, (sy - slope * sx) / n))
}

/// One weak-error estimate.
#[derive(Clone, Debug, Serialize)]
pub struct WeakPoint {
    pub tau: f64,
    /// `|mean φ_τ − mean φ_ref|`.
    pub estimate: f64,
    /// Combined standard error of the two means.
    pub stderr: f64,
    pub mean_coarse: f64,
    pub mean_reference: f64,
}

fn observable_samples(
    plan: &McPlan,
    cfg: &SchemeConfig,
    tau: f64,
    seed: u64,
    observable: &Observable,
    spaces: &FeSpaces,
    ops: &OperatorSet,
) -> Result<Vec<f64>> {
    let mode_ids = plan.problem.mode_ids();
    let n = plan.steps_for(tau)?;
    let record = RecordSpec { stride: n }; // initial + final snapshot only
    let label = scheme_label(cfg);
    (0..plan.samples)
        .into_par_iter()
        .map(|s| {
            let path = generate_path(seed, s as u64, plan.n_fine, plan.problem.t_end, &mode_ids)?;
            let mut c = cfg.clone();
            c.tau = tau;
            let traj = run(&plan.problem, &c, &spaces, &ops, &path, &record)
                .map_err(|e| provenance(e, s, &label, tau))?;
            Ok(observable.eval(spaces, ops, traj.velocities.last().expect("snapshot")))
        })
        .collect()
}

/// Weak errors `|E φ(u_τ(T)) − E φ(u_ref(T))|` per ladder level, with the
/// reference expectation taken over an **independent** sample stream
/// (seed offset by a fixed constant). Requires a fine-τ reference.
pub fn weak_error(plan: &McPlan, observable: &Observable) -> Result<Vec<WeakPoint>> {
    plan.validate()?;
    if !matches!(plan.reference, Reference::FineTau { .. }) {
        return Err(Error::invalid("weak_error needs a fine-tau reference"));
    }
    let spaces = build_spaces(build_mesh(plan.n)?);
    let ops = assemble_operators(&spaces)?;
    let cfg = &plan.schemes[0];
    let ref_seed = plan.seed.wrapping_add(WEAK_REF_SEED_OFFSET);
    let phi_ref =
        observable_samples(plan, cfg, plan.ref_tau(), ref_seed, observable, &spaces, &ops)?;
    let (m_ref, se_ref) = mean_se(&phi_ref);
    let mut out = Vec::new();
    for &tau in &plan.sorted_taus() {
        let phi = observable_samples(plan, cfg, tau, plan.seed, observable, &spaces, &ops)?;
        let (m, se) = mean_se(&phi);
        out.push(WeakPoint {
            tau,
            estimate: (m - m_ref).abs(),
            stderr: se.hypot(se_ref),
            mean_coarse: m,
            mean_reference: m_ref,
        });
    }
    Ok(out)
}

/// Coupled weak/strong observable comparison on **shared** paths:
/// per τ returns `(|mean(φ_τ − φ_ref)|, mean |φ_τ − φ_ref|, se)`. By Jensen
/// the first never exceeds the second sample-by-sample.
pub fn weak_error_coupled(
    plan: &McPlan,
    observable: &Observable,
) -> Result<Vec<(f64, f64, f64, f64)>> {
    plan.validate()?;
    if !matches!(plan.reference, Reference::FineTau { .. }) {
        return Err(Error::invalid("weak_error_coupled needs a fine-tau reference"));
    }
    let spaces = build_spaces(build_mesh(plan.n)?);
    let ops = assemble_operators(&spaces)?;
    let cfg = &plan.schemes[0];
    let phi_ref =
        observable_samples(plan, cfg, plan.ref_tau(), plan.seed, observable, &spaces, &ops)?;
    let mut out = Vec::new();
    for &tau in &plan.sorted_taus() {
        let phi = observable_samples(plan, cfg, tau, plan.seed, observable, &spaces, &ops)?;
        let diffs: Vec<f64> = phi.iter().zip(&phi_ref).map(|(a, b)| a - b).collect();
        let (m, se) = mean_se(&diffs);
        let strong = diffs.iter().map(|d| d.abs()).sum::<f64>() / diffs.len() as f64;
        out.push((tau, m.abs(), strong, se));
    }
    Ok(out)
}

/// A 2D Gaussian kernel-density estimate of a sample cloud.
#[derive(Clone, Debug, Serialize)]
pub struct KdeGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `density[i][j]` at `(xs[i], ys[j])`.
    pub density: Vec<Vec<f64>>,
    /// Silverman bandwidth per dimension: `sd_i * S^{-1/6}`.
    pub bandwidth: [f64; 2],
}

/// Gaussian KDE with the 2D Silverman rule-of-thumb bandwidth
/// `h_i = sd_i · S^{-1/(d+4)}`, evaluated on a `grid × grid` lattice that
/// covers the cloud plus three bandwidths of margin.
pub fn kde2d(cloud: &[[f64; 2]], grid: usize) -> Result<KdeGrid> {
    if cloud.len() < 2 || grid < 2 {
        return Err(Error::invalid("kde2d needs at least 2 samples and a 2x2 grid"));
    }
    let s = cloud.len() as f64;
    let mut h = [0.0f64; 2];
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for d in 0..2 {
        let mean = cloud.iter().map(|p| p[d]).sum::<f64>() / s;
        let var = cloud.iter().map(|p| (p[d] - mean) * (p[d] - mean)).sum::<f64>() / (s - 1.0);
        // Degenerate clouds still get a usable bandwidth.
        h[d] = (var.sqrt() * s.powf(-1.0 / 6.0)).max(1e-12);
        for p in cloud {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
        lo[d] -= 3.0 * h[d];
        hi[d] += 3.0 * h[d];
    }
    let axis = |d: usize| -> Vec<f64> {
        (0..grid)
            .map(|k| lo[d] + (hi[d] - lo[d]) * k as f64 / (grid - 1) as f64)
            .collect()
    };
    let xs = axis(0);
    let ys = axis(1);
    let norm_c = 1.0 / (2.0 * std::f64::consts::PI * h[0] * h[1] * s);
    let density = xs
        .iter()
        .map(|&x| {
            ys.iter()
                .map(|&y| {
                    cloud
                        .iter()
                        .map(|p| {
                            let dx = (x - p[0]) / h[0];
                            let dy = (y - p[1]) / h[1];
                            norm_c * (-0.5 * (dx * dx + dy * dy)).exp()
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(KdeGrid { xs, ys, density, bandwidth: h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{make_example, ExampleId};

    fn small_plan(example: ExampleId, kind: SchemeKind) -> McPlan {
        let problem = make_example(&example).unwrap();
        let t = problem.t_end;
        let mut plan = McPlan::new(
            problem,
            vec![SchemeConfig::new(kind, t / 8.0)],
            vec![t / 4.0, t / 8.0, t / 16.0],
        );
        plan.n = 5;
        plan.samples = 4;
        plan.n_fine = 64;
        plan
    }

    #[test]
    fn noise_free_single_sample_reproduces_deterministic_errors() {
        let mut plan = small_plan(ExampleId::DetStokes, SchemeKind::ImplicitEuler);
        plan.samples = 1;
        plan.reference = Reference::Exact;
        plan.measures = vec![ErrorMeasure::LinfTL2wL2x, ErrorMeasure::L2wLinfTL2x];
        let res = run_mc(&plan).unwrap();
        // Single sample: the two measures coincide and stderr is 0.
        for taus in plan.sorted_taus() {
            let a = res.table.select("implicit_euler", &ErrorMeasure::LinfTL2wL2x);
            let b = res.table.select("implicit_euler", &ErrorMeasure::L2wLinfTL2x);
            let ea = a.iter().find(|r| r.tau == taus).unwrap();
            let eb = b.iter().find(|r| r.tau == taus).unwrap();
            assert!((ea.estimate - eb.estimate).abs() <= 1e-14);
            assert_eq!(ea.stderr, 0.0);
        }
    }

    #[test]
    fn tilde_measure_tracks_the_intermediate_iterate() {
        // Chorin supports the ũ measure against both references; at the
        // reference τ the projected and intermediate iterates differ, so the
        // two measures must disagree on a noisy problem.
        let mut plan = small_plan(ExampleId::AdditiveGeneral, SchemeKind::Chorin);
        plan.measures = vec![ErrorMeasure::LinfTL2wL2x, ErrorMeasure::LinfTL2wL2xTilde];
        let res = run_mc(&plan).unwrap();
        for &tau in &plan.sorted_taus() {
            let u = res.table.select("chorin", &ErrorMeasure::LinfTL2wL2x);
            let t = res.table.select("chorin", &ErrorMeasure::LinfTL2wL2xTilde);
            let eu = u.iter().find(|r| r.tau == tau).unwrap().estimate;
            let et = t.iter().find(|r| r.tau == tau).unwrap().estimate;
            assert!(eu.is_finite() && et.is_finite() && eu > 0.0 && et > 0.0);
            assert!((eu - et).abs() > 1e-12 * eu.max(et), "ũ and u errors identical at τ = {tau}");
        }
        // Schemes without an intermediate iterate reject the measure.
        let mut plan = small_plan(ExampleId::AdditiveGeneral, SchemeKind::ImplicitEuler);
        plan.measures = vec![ErrorMeasure::LinfTL2wL2xTilde];
        match run_mc(&plan) {
            Err(Error::Unsupported(_)) => {}
            other => panic!("expected Unsupported, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn max_mean_inequality_between_measures() {
        let mut plan = small_plan(ExampleId::AdditiveSolenoidal, SchemeKind::ImplicitEuler);
        plan.reference = Reference::Exact;
        plan.measures = vec![ErrorMeasure::LinfTL2wL2x, ErrorMeasure::L2wLinfTL2x];
        let res = run_mc(&plan).unwrap();
        for &tau in &plan.sorted_taus() {
            let a = res.table.select("implicit_euler", &ErrorMeasure::LinfTL2wL2x);
            let b = res.table.select("implicit_euler", &ErrorMeasure::L2wLinfTL2x);
            let ea = a.iter().find(|r| r.tau == tau).unwrap().estimate;
            let eb = b.iter().find(|r| r.tau == tau).unwrap().estimate;
            assert!(ea <= eb + 1e-14, "max-mean inequality violated: {ea} > {eb}");
        }
    }

    #[test]
    fn worker_count_does_not_change_any_byte() {
        let mut plan = small_plan(ExampleId::AdditiveGeneral, SchemeKind::ImplicitEuler);
        plan.measures = vec![ErrorMeasure::LinfTL2wL2x, ErrorMeasure::IntPressure];
        plan.collect_stats = true;
        let run_with = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_mc(&plan)).unwrap()
        };
        let a = run_with(1);
        let b = run_with(3);
        for (ra, rb) in a.table.rows.iter().zip(&b.table.rows) {
            assert_eq!(ra.estimate.to_bits(), rb.estimate.to_bits());
            assert_eq!(ra.stderr.to_bits(), rb.stderr.to_bits());
        }
        let sa = a.stats.unwrap();
        let sb = b.stats.unwrap();
        assert_eq!(sa.mean_velocity, sb.mean_velocity);
        assert_eq!(sa.probe_cloud, sb.probe_cloud);
    }

    #[test]
    fn fit_rate_recovers_synthetic_slopes() {
        let mut table = ErrorTable::default();
        for k in 0..5 {
            let tau = 0.25 / (1 << k) as f64;
            table.rows.push(ErrorRow {
                scheme: "s".into(),
                tau,
                measure: ErrorMeasure::LinfTL2wL2x,
                estimate: 3.0 * tau.sqrt(),
                stderr: 0.0,
                samples: 1,
            });
        }
        let fit = fit_rate(&table, "s", &ErrorMeasure::LinfTL2wL2x).unwrap();
        assert!((fit.slope - 0.5).abs() <= 1e-12, "slope {}", fit.slope);
        assert!(fit.residual <= 1e-12);
        assert_eq!(fit.used_taus.len(), 5);
    }

    #[test]
    fn fit_rate_excludes_plateau_points() {
        // C tau^{1/4} + D with a floor D dominating the finest levels.
        let mut table = ErrorTable::default();
        for k in 0..14 {
            let tau = 0.5 / (1 << k) as f64;
            table.rows.push(ErrorRow {
                scheme: "s".into(),
                tau,
                measure: ErrorMeasure::LinfTL2wL2x,
                estimate: tau.powf(0.25) + 0.3,
                stderr: 0.0,
                samples: 1,
            });
        }
        let fit = fit_rate(&table, "s", &ErrorMeasure::LinfTL2wL2x).unwrap();
        assert!(fit.used_taus.len() < 14, "plateau points not excluded");
        // Insufficient data when everything is flat.
        let mut flat = ErrorTable::default();
        for k in 0..5 {
            flat.rows.push(ErrorRow {
                scheme: "s".into(),
                tau: 0.5 / (1 << k) as f64,
                measure: ErrorMeasure::LinfTL2wL2x,
                estimate: 0.3,
                stderr: 0.0,
                samples: 1,
            });
        }
        match fit_rate(&flat, "s", &ErrorMeasure::LinfTL2wL2x) {
            Err(Error::InsufficientData { floor }) => {
                assert!((floor.unwrap() - 0.3).abs() <= 1e-14);
            }
            other => panic!("expected insufficient data, got {other:?}"),
        }
    }

    #[test]
    fn weak_error_is_zero_at_reference_tau_with_same_samples() {
        let mut plan = small_plan(ExampleId::LinearMultiplicative, SchemeKind::ImplicitEuler);
        plan.reference = Reference::FineTau { refinement: 2 };
        let res = weak_error_coupled(&plan, &Observable::KineticEnergy).unwrap();
        // Jensen on shared paths: |mean diff| <= mean |diff| per tau.
        for &(_, weak, strong, _) in &res {
            assert!(weak <= strong + 1e-14);
        }
        // tau = tau_ref on the same samples gives exactly zero weak and
        // strong observable differences.
        let spaces = build_spaces(build_mesh(plan.n).unwrap());
        let ops = assemble_operators(&spaces).unwrap();
        let obs = Observable::KineticEnergy;
        let a = observable_samples(&plan, &plan.schemes[0], plan.ref_tau(), plan.seed, &obs, &spaces, &ops)
            .unwrap();
        let b = observable_samples(&plan, &plan.schemes[0], plan.ref_tau(), plan.seed, &obs, &spaces, &ops)
            .unwrap();
        assert_eq!(a, b, "identical (tau, samples) must give identical observables");
    }

    #[test]
    fn stderr_shrinks_like_inverse_sqrt_samples() {
        let mut ses = Vec::new();
        for s in [8usize, 32, 128] {
            let mut plan = small_plan(ExampleId::AdditiveGeneral, SchemeKind::ImplicitEuler);
            plan.taus = vec![plan.problem.t_end / 8.0];
            plan.samples = s;
            plan.measures = vec![ErrorMeasure::LinfTL2wL2x];
            let res = run_mc(&plan).unwrap();
            ses.push(res.table.rows[0].stderr);
        }
        // Quadrupling S should halve the standard error within a factor 1.5.
        for w in ses.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                ratio > 2.0 / 1.5 && ratio < 2.0 * 1.5,
                "stderr scaling off: {ses:?}"
            );
        }
    }

    #[test]
    fn field_statistics_identities() {
        let (sp, _ops) = {
            let sp = build_spaces(build_mesh(5).unwrap());
            let ops = assemble_operators(&sp).unwrap();
            (sp, ops)
        };
        let problem = make_example(&ExampleId::AdditiveGeneral).unwrap();
        let cfg = SchemeConfig::new(SchemeKind::ImplicitEuler, problem.t_end / 8.0);
        let ops = assemble_operators(&sp).unwrap();
        let trajs: Vec<Trajectory> = (0..3)
            .map(|s| {
                let path = generate_path(9, s, 32, problem.t_end, &problem.mode_ids()).unwrap();
                run(&problem, &cfg, &sp, &ops, &path, &RecordSpec::default()).unwrap()
            })
            .collect();
        let stats = field_statistics(&trajs, &sp, [0.875, 0.875]).unwrap();
        assert!(stats.sd_magnitude.iter().all(|&v| v >= 0.0));
        assert_eq!(stats.probe_cloud.len(), 3);
        // Mean-energy curve equals the mean of per-sample energies.
        for (k, &m) in stats.energy_mean.iter().enumerate() {
            let direct = stats.energies.iter().map(|e| e[k]).sum::<f64>() / 3.0;
            assert!((m - direct).abs() <= 1e-15 + 1e-12 * direct.abs());
        }
        // Identical samples give a zero SD field.
        let twins = vec![trajs[0].clone(), trajs[0].clone()];
        let st = field_statistics(&twins, &sp, [0.5, 0.5]).unwrap();
        assert!(st.sd_magnitude.iter().all(|&v| v == 0.0));
        assert!(field_statistics(&trajs, &sp, [1.5, 0.5]).is_err());
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut cloud = Vec::new();
        let mut state = 12345u64;
        for _ in 0..200 {
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            cloud.push([next() + 0.3 * next(), 2.0 * next()]);
        }
        let kde = kde2d(&cloud, 64).unwrap();
        // Trapezoidal mass over the padded grid.
        let dx = kde.xs[1] - kde.xs[0];
        let dy = kde.ys[1] - kde.ys[0];
        let mut mass = 0.0;
        for i in 0..kde.xs.len() {
            for j in 0..kde.ys.len() {
                let w = if i == 0 || i + 1 == kde.xs.len() { 0.5 } else { 1.0 }
                    * if j == 0 || j + 1 == kde.ys.len() { 0.5 } else { 1.0 };
                mass += w * kde.density[i][j] * dx * dy;
            }
        }
        assert!((mass - 1.0).abs() <= 0.05, "KDE mass {mass}");
        assert!(kde.bandwidth.iter().all(|&h| h > 0.0));
    }

    #[test]
    fn invalid_plans_are_rejected() {
        let mut plan = small_plan(ExampleId::AdditiveGeneral, SchemeKind::ImplicitEuler);
        plan.taus = vec![plan.problem.t_end / 3.0]; // not dyadic in n_fine = 64
        assert!(run_mc(&plan).is_err());
        let mut plan = small_plan(ExampleId::AdditiveGeneral, SchemeKind::ImplicitEuler);
        plan.samples = 1; // stochastic problem needs S >= 2
        assert!(run_mc(&plan).is_err());
        let mut plan = small_plan(
            ExampleId::VortexNoise { kind: crate::benchmarks::VortexNoiseKind::Additive, scl: 2 },
            SchemeKind::ImplicitEuler,
        );
        plan.reference = Reference::Exact; // no exact solution
        assert!(run_mc(&plan).is_err());
    }
}
