//! Reproducible Wiener paths and the noise models.
//!
//! Paths are generated at the finest time level first; every coarser level
//! reads off increments from the stored fine values, so increments are
//! exactly nested across refinement (the basis of common-random-number
//! convergence studies). Substreams are keyed by `(seed, sample_index,
//! mode_id)` with a counter-based ChaCha generator, so adding modes never
//! perturbs existing ones.
//!
//! Noise models:
//!
//! * additive `g dW`,
//! * linear multiplicative `lambda * u dW` (Ito),
//! * nonlinear multiplicative: the cylindrical series
//!   `sum_l mu_l^r cos(pi l1 x) cos(pi l2 y) (sqrt(u1^2+1), sqrt(u2^2+1)) db_l`
//!   with `mu_l = (l1^2 + l2^2)^{-1}`, and the vortex lattice
//!   `sum_c g_c |v| db_c`,
//! * transport `(sigma . grad) u o dW` (Stratonovich), which enters the
//!   system matrix rather than the load: see [`transport_matrix`].
//!
//! Transport matrices are skew-symmetrised at the element level, so
//! `S(dW) = -S(dW)^T` holds exactly and `u^T S u = 0` bitwise — the discrete
//! counterpart of the cancellation `((sigma.grad)u, u) = 0` for div sigma = 0
//! that the pathwise energy identity rests on.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::benchmarks::shape_g;
use crate::error::{Error, Result};
use crate::grid_fem::{bary_point, p2_gradients, p2_values, tri_geom, FeSpaces, OperatorSet, QUADRATURE};
use crate::sparse::{matvec, Coo, Csc};

/// One Wiener realisation, stored at the finest level.
#[derive(Clone, Debug)]
pub struct WienerPath {
    pub seed: u64,
    pub sample_index: u64,
    /// Number of fine steps; values are stored at `n_fine + 1` nodes.
    pub n_fine: usize,
    /// Final time `T` of the grid.
    pub t_end: f64,
    /// Mode ids, in the order the per-mode arrays are stored.
    pub mode_ids: Vec<u32>,
    /// `values[m][k] = W_m(k * t_end / n_fine)`, with `values[m][0] = 0`.
    pub values: Vec<Vec<f64>>,
}

/// Generates the path of every requested mode at the finest level.
pub fn generate_path(
    seed: u64,
    sample_index: u64,
    n_fine: usize,
    t_end: f64,
    mode_ids: &[u32],
) -> Result<WienerPath> {
    if n_fine < 1 {
        return Err(Error::invalid("generate_path: n_fine must be at least 1"));
    }
    let dt = t_end / n_fine as f64;
    let sqrt_dt = dt.sqrt();
    let values = mode_ids
        .iter()
        .map(|&mode| {
            let mut rng = mode_rng(seed, sample_index, mode);
            let mut w = Vec::with_capacity(n_fine + 1);
            w.push(0.0);
            let mut acc = 0.0;
            for _ in 0..n_fine {
                let z: f64 = StandardNormal.sample(&mut rng);
                acc += sqrt_dt * z;
                w.push(acc);
            }
            w
        })
        .collect();
    Ok(WienerPath { seed, sample_index, n_fine, t_end, mode_ids: mode_ids.to_vec(), values })
}

/// Deterministic substream for one `(seed, sample_index, mode)` triple.
fn mode_rng(seed: u64, sample_index: u64, mode: u32) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&sample_index.to_le_bytes());
    key[16..20].copy_from_slice(&mode.to_le_bytes());
    key[20..24].copy_from_slice(&0x534e_5342u32.to_le_bytes());
    ChaCha12Rng::from_seed(key)
}

impl WienerPath {
    /// Finest step size.
    pub fn dt(&self) -> f64 {
        self.t_end / self.n_fine as f64
    }

    /// Value of mode `m` at the fine-grid time `t`.
    pub fn value(&self, m: usize, t: f64) -> f64 {
        let k = (t / self.dt()).round() as usize;
        debug_assert!(
            (k as f64 * self.dt() - t).abs() <= 1e-9 * self.t_end.max(1.0),
            "time {t} not on the fine grid"
        );
        self.values[m][k.min(self.n_fine)]
    }

    /// Per-mode increments over the coarse grid with `n_coarse` steps.
    pub fn increments_at_level(&self, n_coarse: usize) -> Result<Vec<Vec<f64>>> {
        if n_coarse == 0 || self.n_fine % n_coarse != 0 {
            return Err(Error::invalid(format!(
                "increments_at_level: {n_coarse} does not divide n_fine = {}",
                self.n_fine
            )));
        }
        let stride = self.n_fine / n_coarse;
        Ok(self
            .values
            .iter()
            .map(|w| (0..n_coarse).map(|k| w[(k + 1) * stride] - w[k * stride]).collect())
            .collect())
    }
}

/// Geometric Brownian motion `exp(lambda W_t - lambda^2 t / 2)` driven by
/// the first mode of the path.
pub fn geometric_bm(path: &WienerPath, lambda: f64, t: f64) -> f64 {
    (lambda * path.value(0, t) - 0.5 * lambda * lambda * t).exp()
}

/// The state-independent nonlinear-multiplicative variants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NonlinearKind {
    /// `sum_l sqrt(mu_l^r) phi_l(x) (sqrt(u1^2+1), sqrt(u2^2+1)) db_l` with
    /// `mu_l = (l1^2+l2^2)^{-1}`, `phi_l = cos(pi l1 x) cos(pi l2 y)`,
    /// truncated to `l1, l2 < l_max`, `(0,0)` excluded.
    Cylindrical { r: f64, l_max: u32 },
    /// `sum_c g_c(x) |v(x)| db_c` over the `(scl+1)^2` vortex cells.
    VortexLattice { scl: u32 },
}

/// The vector field `sigma` of a transport model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransportField {
    /// `sigma(x) = Gamma`.
    Constant { gamma: [f64; 2] },
    /// `sigma(x) = lambda (x, y)`; note `div sigma = 2 lambda != 0`.
    LinearRadial { lambda: f64 },
    /// One compactly supported vortex per lattice cell, each with its own
    /// Brownian mode.
    VortexLattice { scl: u32 },
}

/// How the Stratonovich transport integral is realised in time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransportIntegration {
    /// Midpoint (Crank-Nicolson) evaluation of the transport term.
    StratonovichMidpoint,
    /// Ito increment plus the explicit `tau/2 (sigma.grad)(sigma.grad)`
    /// corrector in the system matrix.
    ItoPlusCorrector,
}

/// Transport-noise description.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transport {
    pub field: TransportField,
    pub integration: TransportIntegration,
    /// Use the literal convective form instead of the skew-symmetrised one
    /// (comparison flag; the skew form is the default semantics).
    pub literal_convection: bool,
}

impl Transport {
    pub fn new(field: TransportField, integration: TransportIntegration) -> Self {
        Transport { field, integration, literal_convection: false }
    }
}

/// Analytic additive-noise amplitude `(t, x, y) -> R^2`.
#[derive(Clone)]
pub struct AdditiveField(pub Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>);

impl AdditiveField {
    pub fn new(f: impl Fn(f64, f64, f64) -> [f64; 2] + Send + Sync + 'static) -> Self {
        AdditiveField(Arc::new(f))
    }
}

impl fmt::Debug for AdditiveField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AdditiveField(..)")
    }
}

/// All noise types of the benchmark catalogue.
#[derive(Clone, Debug)]
pub enum NoiseModel {
    /// `g(t, x) dW` with a single scalar Brownian mode.
    Additive { g: AdditiveField },
    /// `sum_c g_c dbeta_c` over the vortex lattice, one mode per cell.
    AdditiveVortex { scl: u32 },
    /// `lambda u dW` (Ito), single mode.
    LinearMultiplicative { lambda: f64 },
    /// State-dependent mode series, one Brownian per mode.
    NonlinearMultiplicative { kind: NonlinearKind },
    /// `(sigma . grad) u o dW`; enters the system matrix.
    Transport(Transport),
}

/// Deterministic problems reuse the noise plumbing with an empty mode set.
#[derive(Clone, Debug)]
pub struct NoNoise;

impl NoiseModel {
    /// The Brownian modes the model consumes, in evaluation order.
    pub fn mode_ids(&self) -> Vec<u32> {
        match self {
            NoiseModel::Additive { .. } | NoiseModel::LinearMultiplicative { .. } => vec![0],
            NoiseModel::AdditiveVortex { scl } => (0..(scl + 1) * (scl + 1)).collect(),
            NoiseModel::NonlinearMultiplicative { kind } => match kind {
                NonlinearKind::Cylindrical { l_max, .. } => cylinder_modes(*l_max)
                    .map(|(l1, l2)| l1 * 256 + l2)
                    .collect(),
                NonlinearKind::VortexLattice { scl } => (0..(scl + 1) * (scl + 1)).collect(),
            },
            NoiseModel::Transport(tr) => match tr.field {
                TransportField::Constant { .. } | TransportField::LinearRadial { .. } => vec![0],
                TransportField::VortexLattice { scl } => (0..(scl + 1) * (scl + 1)).collect(),
            },
        }
    }
}

fn cylinder_modes(l_max: u32) -> impl Iterator<Item = (u32, u32)> {
    (0..l_max).flat_map(move |l1| (0..l_max).map(move |l2| (l1, l2))).filter(|&(a, b)| (a, b) != (0, 0))
}

/// Side length fraction and centres of the vortex lattice.
pub fn vortex_scale(scl: u32) -> f64 {
    1.0 / (scl + 1) as f64
}

/// Centre of vortex cell `mode` (row-major over the lattice).
pub fn vortex_center(scl: u32, mode: u32) -> [f64; 2] {
    let m = scl + 1;
    let row = mode / m;
    let col = mode % m;
    let lam = vortex_scale(scl);
    [(2 * col + 1) as f64 * lam / 2.0, (2 * row + 1) as f64 * lam / 2.0]
}

/// The compactly supported vortex field of cell `mode`: the global shape
/// rescaled to the cell and amplified by 100 (zero outside the cell, and
/// divergence-free since the rescaling is isotropic).
pub fn vortex_velocity(scl: u32, mode: u32, x: f64, y: f64) -> [f64; 2] {
    let lam = vortex_scale(scl);
    let c = vortex_center(scl, mode);
    let xh = (x - c[0]) / lam + 0.5;
    let yh = (y - c[1]) / lam + 0.5;
    if !(0.0..=1.0).contains(&xh) || !(0.0..=1.0).contains(&yh) {
        return [0.0, 0.0];
    }
    let g = shape_g(xh, yh);
    [100.0 * g[0], 100.0 * g[1]]
}

/// `sigma_k(x)` for transport fields.
pub fn transport_sigma(field: &TransportField, mode: u32, x: f64, y: f64) -> [f64; 2] {
    match field {
        TransportField::Constant { gamma } => *gamma,
        TransportField::LinearRadial { lambda } => [lambda * x, lambda * y],
        TransportField::VortexLattice { scl } => vortex_velocity(*scl, mode, x, y),
    }
}

/// Assembles the load vector `(sum_k sigma_k(t_n, u^n) dW_k, phi_i)` of the
/// additive and multiplicative models. Transport noise is rejected: it
/// enters the system matrix via [`transport_matrix`].
pub fn evaluate_vector_noise(
    model: &NoiseModel,
    spaces: &FeSpaces,
    ops: &OperatorSet,
    u: &[f64],
    t_n: f64,
    increments: &[f64],
) -> Result<Vec<f64>> {
    let n_modes = model.mode_ids().len();
    if increments.len() != n_modes {
        return Err(Error::invalid(format!(
            "evaluate_vector_noise: {} increments for {} modes",
            increments.len(),
            n_modes
        )));
    }
    match model {
        NoiseModel::Additive { g } => {
            let dw = increments[0];
            let f = &g.0;
            Ok(assemble_point_load(spaces, |x, y| {
                let v = f(t_n, x, y);
                [dw * v[0], dw * v[1]]
            }))
        }
        NoiseModel::AdditiveVortex { scl } => {
            let scl = *scl;
            let incs = increments.to_vec();
            Ok(assemble_point_load(spaces, move |x, y| {
                let mut out = [0.0, 0.0];
                for (mode, &dw) in incs.iter().enumerate() {
                    let g = vortex_velocity(scl, mode as u32, x, y);
                    out[0] += dw * g[0];
                    out[1] += dw * g[1];
                }
                out
            }))
        }
        NoiseModel::LinearMultiplicative { lambda } => {
            // (lambda u dW, phi_i) = lambda dW * M u, exact for FE states.
            let s = lambda * increments[0];
            Ok(matvec(&ops.m, u).into_iter().map(|v| s * v).collect())
        }
        NoiseModel::NonlinearMultiplicative { kind } => match kind {
            NonlinearKind::Cylindrical { r, l_max } => {
                let modes: Vec<(f64, f64, f64)> = cylinder_modes(*l_max)
                    .zip(increments)
                    .map(|((l1, l2), &dw)| {
                        let mu = 1.0 / (l1 * l1 + l2 * l2) as f64;
                        // amplitude sqrt(mu^r)
                        (mu.powf(0.5 * *r) * dw, l1 as f64, l2 as f64)
                    })
                    .collect();
                Ok(assemble_state_load(spaces, u, |x, y, uv| {
                    let mut field = 0.0;
                    for &(w, l1, l2) in &modes {
                        field += w
                            * (std::f64::consts::PI * l1 * x).cos()
                            * (std::f64::consts::PI * l2 * y).cos();
                    }
                    let s = [(uv[0] * uv[0] + 1.0).sqrt(), (uv[1] * uv[1] + 1.0).sqrt()];
                    [field * s[0], field * s[1]]
                }))
            }
            NonlinearKind::VortexLattice { scl } => {
                let scl = *scl;
                let incs = increments.to_vec();
                Ok(assemble_state_load(spaces, u, move |x, y, uv| {
                    let mag = (uv[0] * uv[0] + uv[1] * uv[1]).sqrt();
                    let mut out = [0.0, 0.0];
                    for (mode, &dw) in incs.iter().enumerate() {
                        let g = vortex_velocity(scl, mode as u32, x, y);
                        out[0] += dw * mag * g[0];
                        out[1] += dw * mag * g[1];
                    }
                    out
                }))
            }
        },
        NoiseModel::Transport(_) => Err(Error::invalid(
            "transport noise enters the system matrix; use transport_matrix",
        )),
    }
}

/// Quadrature load of a point field (no state dependence).
fn assemble_point_load<F>(spaces: &FeSpaces, f: F) -> Vec<f64>
where
    F: Fn(f64, f64) -> [f64; 2],
{
    assemble_state_load(spaces, &vec![0.0; spaces.n_velocity()], |x, y, _| f(x, y))
}

/// Quadrature load of a field that may depend on the finite-element state
/// evaluated at the quadrature point.
fn assemble_state_load<F>(spaces: &FeSpaces, u: &[f64], f: F) -> Vec<f64>
where
    F: Fn(f64, f64, [f64; 2]) -> [f64; 2],
{
    let ns = spaces.n_scalar;
    let mut load = vec![0.0; 2 * ns];
    for (t, nodes) in spaces.tri_p2.iter().enumerate() {
        let g = tri_geom(&spaces.mesh, t);
        for q in &QUADRATURE {
            let w = q.weight * g.area;
            let [x, y] = bary_point(&g, &q.bary);
            let phi = p2_values(&q.bary);
            let mut uv = [0.0; 2];
            for j in 0..6 {
                uv[0] += u[nodes[j]] * phi[j];
                uv[1] += u[ns + nodes[j]] * phi[j];
            }
            let fv = f(x, y, uv);
            for j in 0..6 {
                load[nodes[j]] += w * fv[0] * phi[j];
                load[ns + nodes[j]] += w * fv[1] * phi[j];
            }
        }
    }
    load
}

/// Assembles `S(dW)` with entries (default, skew form)
/// `1/2 [((sigma.grad)phi_j, phi_i) - ((sigma.grad)phi_i, phi_j)] . dW`
/// summed over modes, expanded block-diagonally to the velocity space.
/// The skew-symmetrisation happens per element, so `S = -S^T` exactly.
pub fn transport_matrix(tr: &Transport, spaces: &FeSpaces, increments: &[f64]) -> Result<Csc> {
    let modes = NoiseModel::Transport(*tr).mode_ids();
    if increments.len() != modes.len() {
        return Err(Error::invalid(format!(
            "transport_matrix: {} increments for {} modes",
            increments.len(),
            modes.len()
        )));
    }
    let ns = spaces.n_scalar;
    let mut scalar = Coo::new(ns, ns);
    for (t, nodes) in spaces.tri_p2.iter().enumerate() {
        let g = tri_geom(&spaces.mesh, t);
        let mut loc = [[0.0; 6]; 6];
        for q in &QUADRATURE {
            let w = q.weight * g.area;
            let [x, y] = bary_point(&g, &q.bary);
            let phi = p2_values(&q.bary);
            let dphi = p2_gradients(&q.bary, &g);
            let mut sigma_dw = [0.0; 2];
            for (&mode, &dw) in modes.iter().zip(increments) {
                let s = transport_sigma(&tr.field, mode, x, y);
                sigma_dw[0] += dw * s[0];
                sigma_dw[1] += dw * s[1];
            }
            for j in 0..6 {
                let conv = sigma_dw[0] * dphi[j][0] + sigma_dw[1] * dphi[j][1];
                for i in 0..6 {
                    loc[i][j] += w * conv * phi[i];
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                scalar.push(nodes[i], nodes[j], loc[i][j]);
            }
        }
    }
    let literal = scalar.to_csc()?;
    let s = if tr.literal_convection {
        literal
    } else {
        // Skew-symmetrise after summation: each coordinate pair receives the
        // same two magnitudes with opposite signs, so S = -S^T holds bitwise.
        let mut skew = Coo::new(ns, ns);
        for t in literal.triplet_iter() {
            skew.push(t.row, t.col, 0.5 * t.val);
            skew.push(t.col, t.row, -0.5 * t.val);
        }
        skew.to_csc()?
    };
    let mut full = Coo::new(2 * ns, 2 * ns);
    full.push_block(&s, 0, 0, 1.0);
    full.push_block(&s, ns, ns, 1.0);
    full.to_csc()
}

/// The Ito-corrector Gram matrix `sum_k ((sigma_k.grad)phi_j, (sigma_k.grad)phi_i)`,
/// expanded to the velocity space. Multiplied by `tau/2` and added to the
/// system matrix when integrating transport noise in Ito-plus-corrector form.
pub fn transport_corrector(tr: &Transport, spaces: &FeSpaces) -> Result<Csc> {
    let modes = NoiseModel::Transport(*tr).mode_ids();
    let ns = spaces.n_scalar;
    let mut scalar = Coo::new(ns, ns);
    for (t, nodes) in spaces.tri_p2.iter().enumerate() {
        let g = tri_geom(&spaces.mesh, t);
        let mut loc = [[0.0; 6]; 6];
        for q in &QUADRATURE {
            let w = q.weight * g.area;
            let [x, y] = bary_point(&g, &q.bary);
            let dphi = p2_gradients(&q.bary, &g);
            for &mode in &modes {
                let s = transport_sigma(&tr.field, mode, x, y);
                let mut conv = [0.0; 6];
                for j in 0..6 {
                    conv[j] = s[0] * dphi[j][0] + s[1] * dphi[j][1];
                }
                for i in 0..6 {
                    for j in 0..6 {
                        loc[i][j] += w * conv[i] * conv[j];
                    }
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                scalar.push(nodes[i], nodes[j], loc[i][j]);
            }
        }
    }
    let s = scalar.to_csc()?;
    let mut full = Coo::new(2 * ns, 2 * ns);
    full.push_block(&s, 0, 0, 1.0);
    full.push_block(&s, ns, ns, 1.0);
    full.to_csc()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_fem::{
        assemble_operators, assemble_velocity_load, build_mesh, build_spaces, interpolate_velocity,
    };
    use crate::sparse::{axpy, dot, inf_norm};

    fn spaces(n: usize) -> FeSpaces {
        build_spaces(build_mesh(n).unwrap())
    }

    #[test]
    fn path_starts_at_zero_and_telescopes() {
        let p = generate_path(42, 7, 64, 1.0, &[0, 3, 9]).unwrap();
        for m in 0..3 {
            assert_eq!(p.values[m][0], 0.0);
            let inc = p.increments_at_level(32).unwrap();
            let total: f64 = inc[m].iter().sum();
            // Telescoping differences of stored values are exact.
            assert_eq!(total, p.values[m][64] - p.values[m][0]);
        }
        assert_eq!(p.increments_at_level(1).unwrap()[0][0], p.values[0][64]);
        assert!(p.increments_at_level(3).is_err());
    }

    #[test]
    fn nested_increments_aggregate_exactly() {
        let p = generate_path(1, 0, 16, 2.0, &[0]).unwrap();
        let fine = p.increments_at_level(4).unwrap();
        let coarse = p.increments_at_level(2).unwrap();
        for k in 0..2 {
            assert_eq!(coarse[0][k], fine[0][2 * k] + fine[0][2 * k + 1]);
        }
        // Level n_fine returns the raw increments.
        let raw = p.increments_at_level(16).unwrap();
        for k in 0..16 {
            assert_eq!(raw[0][k], p.values[0][k + 1] - p.values[0][k]);
        }
    }

    #[test]
    fn path_variance_matches_time() {
        let t_end = 1.0;
        let n = 1000;
        let mut sum_sq = 0.0;
        for s in 0..n {
            let p = generate_path(2024, s, 8, t_end, &[0]).unwrap();
            sum_sq += p.values[0][8] * p.values[0][8];
        }
        let var = sum_sq / n as f64;
        assert!((0.85 * t_end..=1.15 * t_end).contains(&var), "sample variance {var}");
    }

    #[test]
    fn paths_are_reproducible_and_streams_differ() {
        let a = generate_path(5, 3, 32, 1.0, &[0, 1]).unwrap();
        let b = generate_path(5, 3, 32, 1.0, &[0, 1]).unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(a.values[0], a.values[1]);
        let c = generate_path(5, 4, 32, 1.0, &[0]).unwrap();
        assert_ne!(a.values[0], c.values[0]);
        // Adding modes never perturbs existing ones.
        let d = generate_path(5, 3, 32, 1.0, &[0, 1, 2, 7]).unwrap();
        assert_eq!(a.values[0], d.values[0]);
        assert_eq!(a.values[1], d.values[1]);
    }

    #[test]
    fn geometric_bm_basics_and_martingale_mean() {
        let p = generate_path(9, 0, 16, 1.0, &[0]).unwrap();
        assert_eq!(geometric_bm(&p, 1.0, 0.0), 1.0);
        assert_eq!(geometric_bm(&p, 0.0, 0.5), 1.0);
        let mut mean = 0.0;
        let n = 1000;
        for s in 0..n {
            let p = generate_path(77, s, 16, 1.0, &[0]).unwrap();
            mean += geometric_bm(&p, 1.0, 1.0);
        }
        mean /= n as f64;
        assert!((0.85..=1.15).contains(&mean), "GBM mean {mean}");
    }

    #[test]
    fn additive_noise_matches_direct_assembly() {
        let sp = spaces(9);
        let ops = assemble_operators(&sp).unwrap();
        let model = NoiseModel::Additive { g: AdditiveField::new(|_, x, y| shape_g(x, y)) };
        let delta = 0.37;
        let load = evaluate_vector_noise(&model, &sp, &ops, &vec![0.0; sp.n_velocity()], 0.0, &[delta]).unwrap();
        let direct = assemble_velocity_load(&sp, |x, y| {
            let v = shape_g(x, y);
            [delta * v[0], delta * v[1]]
        });
        let mut d = load.clone();
        axpy(-1.0, &direct, &mut d);
        assert!(inf_norm(&d) <= 1e-15);
        // And against the M-weighted interpolant, to interpolation accuracy.
        let interp = interpolate_velocity(&sp, |_, x, y| shape_g(x, y), 0.0).unwrap();
        let mut m_route = matvec(&ops.m, &interp);
        for v in m_route.iter_mut() {
            *v *= delta;
        }
        axpy(-1.0, &load, &mut m_route);
        assert!(inf_norm(&m_route) <= 1e-5, "{}", inf_norm(&m_route));
    }

    #[test]
    fn zero_increment_and_zero_state_edge_cases() {
        let sp = spaces(5);
        let ops = assemble_operators(&sp).unwrap();
        let zero_u = vec![0.0; sp.n_velocity()];
        let model = NoiseModel::Additive { g: AdditiveField::new(|_, x, y| shape_g(x, y)) };
        let load = evaluate_vector_noise(&model, &sp, &ops, &zero_u, 0.0, &[0.0]).unwrap();
        assert!(inf_norm(&load) == 0.0);

        let model = NoiseModel::LinearMultiplicative { lambda: 1.0 };
        let load = evaluate_vector_noise(&model, &sp, &ops, &zero_u, 0.0, &[0.8]).unwrap();
        assert!(inf_norm(&load) == 0.0);

        let tr = Transport::new(
            TransportField::Constant { gamma: [1.0, 1.0] },
            TransportIntegration::StratonovichMidpoint,
        );
        assert!(evaluate_vector_noise(&NoiseModel::Transport(tr), &sp, &ops, &zero_u, 0.0, &[1.0]).is_err());
    }

    #[test]
    fn cylindrical_truncation_is_monotone_and_cauchy() {
        let sp = spaces(9);
        let ops = assemble_operators(&sp).unwrap();
        let u = interpolate_velocity(&sp, |_, x, y| [x, y], 0.0).unwrap();
        let mut norms = Vec::new();
        let mut prev_load: Option<Vec<f64>> = None;
        let mut diffs = Vec::new();
        for l_max in [2u32, 4, 8, 16] {
            let model = NoiseModel::NonlinearMultiplicative {
                kind: NonlinearKind::Cylindrical { r: 2.0, l_max },
            };
            let ids = model.mode_ids();
            let path = generate_path(11, 0, 4, 1.0, &ids).unwrap();
            let inc = path.increments_at_level(1).unwrap();
            let deltas: Vec<f64> = inc.iter().map(|v| v[0]).collect();
            let load = evaluate_vector_noise(&model, &sp, &ops, &u, 0.0, &deltas).unwrap();
            norms.push(dot(&load, &load).sqrt());
            if let Some(prev) = prev_load.take() {
                let mut d = load.clone();
                axpy(-1.0, &prev, &mut d);
                diffs.push(dot(&d, &d).sqrt());
            }
            prev_load = Some(load);
        }
        // Successive truncation differences decay like the series tail.
        for w in diffs.windows(2) {
            assert!(w[1] < w[0], "truncation differences not decaying: {diffs:?}");
        }
    }

    #[test]
    fn transport_matrix_is_exactly_skew() {
        let sp = spaces(6);
        for field in [
            TransportField::Constant { gamma: [1.0, 1.0] },
            TransportField::LinearRadial { lambda: 0.5 },
            TransportField::VortexLattice { scl: 1 },
        ] {
            let tr = Transport::new(field, TransportIntegration::StratonovichMidpoint);
            let n_modes = NoiseModel::Transport(tr).mode_ids().len();
            let deltas: Vec<f64> = (0..n_modes).map(|k| 0.1 + 0.05 * k as f64).collect();
            let s = transport_matrix(&tr, &sp, &deltas).unwrap();
            // S + S^T has only exactly-zero entries.
            for t in s.triplet_iter() {
                let val_t = s
                    .triplet_iter()
                    .find(|u| u.row == t.col && u.col == t.row)
                    .map(|u| *u.val)
                    .unwrap_or(0.0);
                assert_eq!(*t.val + val_t, 0.0);
            }
            // The quadratic form cancels exactly in exact arithmetic; in
            // floating point only up to matvec rounding.
            let u: Vec<f64> = (0..sp.n_velocity()).map(|i| ((i * 29 + 3) % 31) as f64).collect();
            assert!(crate::sparse::quad_form(&s, &u, &u).abs() <= 1e-10);
        }
    }

    #[test]
    fn zero_increment_gives_zero_matrix() {
        let sp = spaces(4);
        let tr = Transport::new(
            TransportField::Constant { gamma: [1.0, 1.0] },
            TransportIntegration::StratonovichMidpoint,
        );
        let s = transport_matrix(&tr, &sp, &[0.0]).unwrap();
        for t in s.triplet_iter() {
            assert_eq!(*t.val, 0.0);
        }
    }

    #[test]
    fn skew_form_matches_literal_on_interior_fields() {
        // For constant sigma the integration-by-parts boundary term is the
        // only difference between the literal and skew forms, so they agree
        // when tested against fields supported away from the boundary.
        let sp = spaces(9);
        let mut tr = Transport::new(
            TransportField::Constant { gamma: [1.0, 1.0] },
            TransportIntegration::StratonovichMidpoint,
        );
        let s_skew = transport_matrix(&tr, &sp, &[0.42]).unwrap();
        tr.literal_convection = true;
        let s_lit = transport_matrix(&tr, &sp, &[0.42]).unwrap();
        let ns = sp.n_scalar;
        // Interior indicator: zero out everything within one layer of the boundary.
        let interior = |k: usize| {
            let [x, y] = sp.p2_coords[k % ns];
            x > 0.2 && x < 0.8 && y > 0.2 && y < 0.8
        };
        let u: Vec<f64> = (0..sp.n_velocity())
            .map(|i| if interior(i) { ((i * 7 + 1) % 13) as f64 } else { 0.0 })
            .collect();
        let v: Vec<f64> = (0..sp.n_velocity())
            .map(|i| if interior(i) { ((i * 11 + 5) % 17) as f64 } else { 0.0 })
            .collect();
        let d = crate::sparse::quad_form(&s_skew, &u, &v) - crate::sparse::quad_form(&s_lit, &u, &v);
        assert!(d.abs() <= 1e-10, "skew vs literal gap {d}");
    }

    #[test]
    fn vortex_fields_tile_and_vanish_outside_cells() {
        let scl = 2u32;
        for mode in 0..9u32 {
            let c = vortex_center(scl, mode);
            let v = vortex_velocity(scl, mode, c[0] + 0.05, c[1] + 0.02);
            assert!(v[0].abs() + v[1].abs() > 0.0);
            // Far corner of the square is outside every cell but its own.
            if mode != 0 {
                assert_eq!(vortex_velocity(scl, mode, 0.01, 0.01), [0.0, 0.0]);
            }
        }
    }
}
