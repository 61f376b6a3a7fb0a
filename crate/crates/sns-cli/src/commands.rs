//! The four experiment commands. Each consumes a validated [`RunConfig`],
//! runs the study through `sns_core::experiments` and writes bit-stable
//! artifacts under the configured output directory.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::Serialize;

use sns_core::experiments::{
    field_statistics, fit_loglog, fit_rate, kde2d, pressure_stability, run_mc, scheme_label,
    weak_error, ErrorMeasure, ErrorRow, Observable, RateFit,
};
use sns_core::grid_fem::{assemble_operators, build_mesh, build_spaces};
use sns_core::schemes::{run, RecordSpec, Trajectory};
use sns_core::stochastics::generate_path;
use sns_core::Error;

use crate::config::RunConfig;
use crate::output::{
    errors_csv, file_stem, fmt_float, plotdata, series_csv, svg_loglog, write_json, write_text,
    InsufficientEntry, RatesReport,
};
use crate::CliError;

fn out_dir(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(&cfg.output.dir)
}

fn wants_format(cfg: &RunConfig, fmt: &str) -> bool {
    cfg.output.formats.iter().any(|f| f == fmt)
}

/// Strong/weak convergence study: `errors.csv`, `rates.json`,
/// `plotdata/*.dat` (and optionally `plot.svg`).
pub fn cmd_convergence(cfg: &RunConfig) -> Result<(), CliError> {
    let plan = cfg.build_plan()?;
    let res = run_mc(&plan)?;
    let mut table = res.table;
    // Weak measures run through their own estimator (independent reference
    // sample stream).
    let weak_measures: Vec<Observable> = plan
        .measures
        .iter()
        .filter_map(|m| match m {
            ErrorMeasure::Weak(obs) => Some(*obs),
            _ => None,
        })
        .collect();
    for obs in &weak_measures {
        let points = weak_error(&plan, obs)?;
        let label = scheme_label(&plan.schemes[0]);
        for p in points {
            table.rows.push(ErrorRow {
                scheme: label.clone(),
                tau: p.tau,
                measure: ErrorMeasure::Weak(*obs),
                estimate: p.estimate,
                stderr: p.stderr,
                samples: plan.samples,
            });
        }
    }

    let dir = out_dir(cfg);
    if wants_format(cfg, "csv") {
        write_text(&dir.join("errors.csv"), &errors_csv(&table))?;
    }

    // Rate fits for every (scheme, measure) pair present in the table.
    let mut fits: Vec<RateFit> = Vec::new();
    let mut insufficient = Vec::new();
    let mut curves: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let pairs: Vec<(String, ErrorMeasure)> = {
        let mut seen = BTreeSet::new();
        table
            .rows
            .iter()
            .filter(|r| seen.insert((r.scheme.clone(), r.measure.label())))
            .map(|r| (r.scheme.clone(), r.measure))
            .collect()
    };
    for (scheme, measure) in &pairs {
        let rows = table.select(scheme, measure);
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.tau, r.estimate)).collect();
        let stem = format!("{}_{}", file_stem(scheme), file_stem(&measure.label()));
        write_text(&dir.join("plotdata").join(format!("{stem}.dat")), &plotdata(&pts))?;
        curves.push((stem, pts));
        match fit_rate(&table, scheme, measure) {
            Ok(fit) => fits.push(fit),
            Err(Error::InsufficientData { floor }) => insufficient.push(InsufficientEntry {
                scheme: scheme.clone(),
                measure: measure.label(),
                floor,
            }),
            Err(e) => return Err(e.into()),
        }
    }
    if wants_format(cfg, "json") {
        write_json(&dir.join("rates.json"), &RatesReport { fits, insufficient })?;
    }
    if wants_format(cfg, "svg-plot-data") {
        write_text(&dir.join("plot.svg"), &svg_loglog(&curves))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct StabilityReport {
    scheme: String,
    /// `(τ, max_n E‖∇p^n‖²)` pairs.
    max_grad_p_sq: Vec<(f64, f64)>,
    /// Fitted τ-exponent of `max_n E‖∇p^n‖²`.
    exponent: Option<f64>,
}

/// Pressure-stability study: per-τ time series of `E‖∇p^n‖` and
/// `E‖τΣp^ℓ‖`, plus the fitted τ-exponent of `max_n E‖∇p^n‖²`.
pub fn cmd_stability(cfg: &RunConfig) -> Result<(), CliError> {
    let plan = cfg.build_plan()?;
    let dir = out_dir(cfg);
    let mut reports = Vec::new();
    for (si, scheme) in plan.schemes.iter().enumerate() {
        let label = scheme_label(scheme);
        let series = pressure_stability(&plan, si)?;
        if wants_format(cfg, "csv") {
            for s in &series {
                let name = format!("stability_{}_{}steps.csv", file_stem(&label), s.times.len());
                write_text(
                    &dir.join(name),
                    &series_csv(
                        &["mean_grad_p", "mean_int_p"],
                        &s.times,
                        &[&s.mean_grad_p, &s.mean_int_p],
                    ),
                )?;
            }
        }
        let pts: Vec<(f64, f64)> = series.iter().map(|s| (s.tau, s.max_mean_grad_p_sq)).collect();
        let exponent = fit_loglog(&pts).ok().map(|(slope, _)| slope);
        write_text(
            &dir.join("plotdata").join(format!("stability_{}.dat", file_stem(&label))),
            &plotdata(&pts),
        )?;
        reports.push(StabilityReport { scheme: label, max_grad_p_sq: pts, exponent });
    }
    if wants_format(cfg, "json") {
        write_json(&dir.join("stability.json"), &reports)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EnergyReport {
    scheme: String,
    tau: f64,
    samples: usize,
    /// `max_s max_n |E(u^n) + dissipation^n − E(u^0)| / E(u^0)`; the
    /// pathwise identity residual (≈ 0 for Crank-Nicolson, strictly
    /// positive for the dissipative Euler-type schemes).
    max_identity_residual: f64,
}

fn run_trajectories(
    plan: &sns_core::experiments::McPlan,
    scheme_index: usize,
    tau: f64,
    stride: usize,
) -> Result<Vec<Trajectory>, CliError> {
    let spaces = build_spaces(build_mesh(plan.n)?);
    let ops = assemble_operators(&spaces)?;
    let mode_ids = plan.problem.mode_ids();
    let mut cfg = plan.schemes[scheme_index].clone();
    cfg.tau = tau;
    let mut trajs = Vec::with_capacity(plan.samples);
    for s in 0..plan.samples {
        let path = generate_path(plan.seed, s as u64, plan.n_fine, plan.problem.t_end, &mode_ids)?;
        trajs.push(run(&plan.problem, &cfg, &spaces, &ops, &path, &RecordSpec { stride })?);
    }
    Ok(trajs)
}

/// Kinetic-energy study: per-sample trajectories, mean ± SD curves, and the
/// pathwise energy-identity residual.
pub fn cmd_energy(cfg: &RunConfig) -> Result<(), CliError> {
    let plan = cfg.build_plan()?;
    let dir = out_dir(cfg);
    let taus = {
        let mut t = plan.taus.clone();
        t.sort_by(|a, b| b.partial_cmp(a).expect("finite taus"));
        t
    };
    let tau = *taus.last().ok_or_else(|| CliError::Config("empty tau ladder".into()))?;
    let mut reports = Vec::new();
    for (si, scheme) in plan.schemes.iter().enumerate() {
        let label = scheme_label(scheme);
        let n_steps = (plan.problem.t_end / tau).round() as usize;
        let trajs = run_trajectories(&plan, si, tau, n_steps)?;
        let energies: Vec<Vec<f64>> = trajs
            .iter()
            .map(|t| t.energy_log.iter().map(|r| r.energy).collect())
            .collect();
        let times: Vec<f64> = trajs[0].energy_log.iter().map(|r| r.t).collect();
        let s = energies.len() as f64;
        let mean: Vec<f64> = (0..times.len())
            .map(|k| energies.iter().map(|e| e[k]).sum::<f64>() / s)
            .collect();
        let sd: Vec<f64> = (0..times.len())
            .map(|k| {
                if energies.len() < 2 {
                    return 0.0;
                }
                let v = energies.iter().map(|e| (e[k] - mean[k]).powi(2)).sum::<f64>() / (s - 1.0);
                v.sqrt()
            })
            .collect();
        if wants_format(cfg, "csv") {
            let mut cols: Vec<&[f64]> = vec![&mean, &sd];
            for e in &energies {
                cols.push(e);
            }
            let mut header: Vec<String> = vec!["mean".into(), "sd".into()];
            header.extend((0..energies.len()).map(|k| format!("sample{k}")));
            let header_refs: Vec<&str> = header.iter().map(|h| h.as_str()).collect();
            write_text(
                &dir.join(format!("energy_{}.csv", file_stem(&label))),
                &series_csv(&header_refs, &times, &cols),
            )?;
        }
        let mut residual = 0.0f64;
        for t in &trajs {
            let e0 = t.energy_log[0].energy;
            if e0 <= 0.0 {
                continue;
            }
            for r in &t.energy_log {
                residual = residual.max((r.energy + r.dissipation - e0).abs() / e0);
            }
        }
        reports.push(EnergyReport {
            scheme: label,
            tau,
            samples: plan.samples,
            max_identity_residual: residual,
        });
    }
    if wants_format(cfg, "json") {
        write_json(&dir.join("energy.json"), &reports)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FieldSnapshot {
    /// P2 node coordinates.
    coords: Vec<[f64; 2]>,
    /// One sample's velocity at the final time, `(u, v)` per node.
    sample: Vec<[f64; 2]>,
    /// Mean velocity at the final time.
    mean: Vec<[f64; 2]>,
    /// SD magnitude per node.
    sd_magnitude: Vec<f64>,
    probe: [f64; 2],
    kde_bandwidth: [f64; 2],
}

/// Lid-driven-cavity study: snapshot fields, the probe marginal cloud with
/// a KDE grid, and energy statistics.
pub fn cmd_cavity(cfg: &RunConfig) -> Result<(), CliError> {
    let plan = cfg.build_plan()?;
    let dir = out_dir(cfg);
    let taus = cfg.taus(plan.problem.t_end);
    let tau = taus.iter().cloned().fold(f64::INFINITY, f64::min);
    let n_steps = (plan.problem.t_end / tau).round() as usize;
    let trajs = run_trajectories(&plan, 0, tau, n_steps)?;
    let spaces = build_spaces(build_mesh(plan.n)?);

    if trajs.len() >= 2 {
        let stats = field_statistics(&trajs, &spaces, plan.probe)?;
        let kde = kde2d(&stats.probe_cloud, 64)?;
        if wants_format(cfg, "csv") {
            let mut cloud = String::from("u,v\n");
            for p in &stats.probe_cloud {
                cloud.push_str(&format!("{},{}\n", fmt_float(p[0]), fmt_float(p[1])));
            }
            write_text(&dir.join("marginal_cloud.csv"), &cloud)?;
            let mut kcsv = String::from("u,v,density\n");
            for (i, &x) in kde.xs.iter().enumerate() {
                for (j, &y) in kde.ys.iter().enumerate() {
                    kcsv.push_str(&format!(
                        "{},{},{}\n",
                        fmt_float(x),
                        fmt_float(y),
                        fmt_float(kde.density[i][j])
                    ));
                }
            }
            write_text(&dir.join("marginal_kde.csv"), &kcsv)?;
            write_text(
                &dir.join("energy.csv"),
                &series_csv(
                    &["mean", "sd"],
                    &stats.energy_times,
                    &[&stats.energy_mean, &stats.energy_sd],
                ),
            )?;
        }
        if wants_format(cfg, "json") {
            let ns = spaces.n_scalar;
            let to_pairs = |u: &[f64]| -> Vec<[f64; 2]> {
                (0..ns).map(|k| [u[k], u[ns + k]]).collect()
            };
            let snap = FieldSnapshot {
                coords: spaces.p2_coords.clone(),
                sample: to_pairs(trajs[0].velocities.last().expect("snapshot")),
                mean: to_pairs(&stats.mean_velocity),
                sd_magnitude: stats.sd_magnitude.clone(),
                probe: plan.probe,
                kde_bandwidth: kde.bandwidth,
            };
            write_json(&dir.join("fields.json"), &snap)?;
        }
    } else {
        // Deterministic single run: emit the field and its (zero-SD) stats.
        let ns = spaces.n_scalar;
        let u = trajs[0].velocities.last().expect("snapshot");
        let pairs: Vec<[f64; 2]> = (0..ns).map(|k| [u[k], u[ns + k]]).collect();
        let snap = FieldSnapshot {
            coords: spaces.p2_coords.clone(),
            sample: pairs.clone(),
            mean: pairs,
            sd_magnitude: vec![0.0; ns],
            probe: plan.probe,
            kde_bandwidth: [0.0, 0.0],
        };
        if wants_format(cfg, "json") {
            write_json(&dir.join("fields.json"), &snap)?;
        }
        if wants_format(cfg, "csv") {
            let times: Vec<f64> = trajs[0].energy_log.iter().map(|r| r.t).collect();
            let energy: Vec<f64> = trajs[0].energy_log.iter().map(|r| r.energy).collect();
            let zeros = vec![0.0; times.len()];
            write_text(
                &dir.join("energy.csv"),
                &series_csv(&["mean", "sd"], &times, &[&energy, &zeros]),
            )?;
        }
    }
    Ok(())
}

/// Dispatches a named command.
pub fn dispatch(command: &str, cfg: &RunConfig) -> Result<(), CliError> {
    match command {
        "convergence" => cmd_convergence(cfg),
        "stability" => cmd_stability(cfg),
        "energy" => cmd_energy(cfg),
        "cavity" => cmd_cavity(cfg),
        other => Err(CliError::Config(format!("unknown command {other:?}"))),
    }
}

/// Used by tests: the directory a command writes into.
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    out_dir(cfg)
}
