//! Sparse direct solves for the discrete Stokes systems.
//!
//! Three solver kinds, all direct (desk-scale meshes; solver error must sit
//! far below discretisation error):
//!
//! * [`SaddleSystem`] — the coupled velocity/pressure system
//!
//!   ```text
//!   [ K        s B^T      0        ] [u]   [rhs_u]
//!   [ B       -eps Ap     mean_vec ] [p] = [rhs_p]
//!   [ 0        mean_vec^T 0        ] [l]   [0]
//!   ```
//!
//!   with `s` the gradient coupling scale (typically the time step) and an
//!   optional quasi-compressibility block `-eps Ap`. The pressure mean is
//!   pinned by an appended Lagrange row rather than by dof pinning, which
//!   keeps the gauge mesh-independent.
//! * [`SpdSolver`] — cached Cholesky for symmetric positive-definite blocks,
//! * [`PoissonSolver`] — mean-free Neumann Poisson solves for the pressure
//!   update of the projection methods.
//!
//! Every returned pressure satisfies `mean_vec^T p = 0` within 1e-12.
//! Factorisation objects are immutable after construction, so concurrent
//! solves with distinct right-hand sides are safe.

use faer::linalg::solvers::Solve;
use faer::prelude::Reborrow;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::{MatMut, Side};

use crate::error::{Error, Result};
use crate::sparse::{dot, inf_norm, matvec, Coo, Csc};

/// Residual tolerance of every direct solve: `1e-10 * (1 + ||rhs||_inf)`.
const RESIDUAL_TOL: f64 = 1e-10;

fn solve_lu(lu: &Lu<usize, f64>, rhs: &mut [f64]) {
    let n = rhs.len();
    lu.solve_in_place(MatMut::from_column_major_slice_mut(rhs, n, 1));
}

fn solve_llt(llt: &Llt<usize, f64>, rhs: &mut [f64]) {
    let n = rhs.len();
    llt.solve_in_place(MatMut::from_column_major_slice_mut(rhs, n, 1));
}

/// `max_i |(A x - b)_i|`.
fn residual_inf(a: &Csc, x: &[f64], b: &[f64]) -> f64 {
    let mut r = matvec(a, x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri -= bi;
    }
    inf_norm(&r)
}

/// One step of iterative refinement; cheap insurance against the rare
/// factorisation that lands just above the residual tolerance.
fn refine(a: &Csc, x: &mut [f64], b: &[f64], solve: impl Fn(&mut [f64])) {
    let mut r = matvec(a, x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    solve(&mut r);
    for (xi, di) in x.iter_mut().zip(&r) {
        *xi += di;
    }
}

/// The coupled saddle-point system with a mean-zero pressure gauge.
pub struct SaddleSystem {
    n_u: usize,
    n_p: usize,
    b: Csc,
    grad_scale: f64,
    constrained: Vec<bool>,
    stab: Option<(f64, Csc)>,
    mean_vec: Vec<f64>,
    gauge: bool,
    full: Csc,
    symbolic: SymbolicLu<usize>,
    lu: Lu<usize, f64>,
}

impl SaddleSystem {
    /// Builds and factorises the coupled system.
    ///
    /// `k` is the (already Dirichlet-constrained) velocity block, `b` the
    /// divergence block, `grad_scale` the coefficient of the `B^T` coupling,
    /// `constrained` the velocity dofs whose rows are identity rows in `k`
    /// (the `B^T` coupling is dropped there so the constraint survives),
    /// and `stab` an optional `(eps, Ap)` quasi-compressibility block.
    pub fn new(
        k: &Csc,
        b: &Csc,
        grad_scale: f64,
        mean_vec: &[f64],
        constrained: &[usize],
        stab: Option<(f64, &Csc)>,
    ) -> Result<Self> {
        Self::build(k, b, grad_scale, mean_vec, constrained, stab, true)
    }

    /// Like [`SaddleSystem::new`] but without the mean-gauge Lagrange row.
    ///
    /// Used when the divergence block has full rank (unconstrained velocity
    /// space, as in the Helmholtz projector), where the appended gauge row
    /// would force a nonzero multiplier into the constraint `B u = rhs_p`.
    /// Returned pressures are still shifted to the mean-zero gauge.
    pub fn new_ungauged(
        k: &Csc,
        b: &Csc,
        grad_scale: f64,
        mean_vec: &[f64],
        constrained: &[usize],
        stab: Option<(f64, &Csc)>,
    ) -> Result<Self> {
        Self::build(k, b, grad_scale, mean_vec, constrained, stab, false)
    }

    fn build(
        k: &Csc,
        b: &Csc,
        grad_scale: f64,
        mean_vec: &[f64],
        constrained: &[usize],
        stab: Option<(f64, &Csc)>,
        gauge: bool,
    ) -> Result<Self> {
        let n_u = k.nrows();
        let n_p = b.nrows();
        if k.ncols() != n_u || b.ncols() != n_u || mean_vec.len() != n_p {
            return Err(Error::invalid("saddle system: inconsistent block dimensions"));
        }
        let mut flags = vec![false; n_u];
        for &d in constrained {
            flags[d] = true;
        }
        let stab = stab.map(|(eps, ap)| (eps, ap.clone()));
        let full = assemble_full(k, b, grad_scale, mean_vec, &flags, &stab, gauge)?;
        let symbolic = SymbolicLu::try_new(full.symbolic())
            .map_err(|e| Error::SolverFailure { step: 0, detail: format!("symbolic LU: {e:?}") })?;
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), full.rb())
            .map_err(|e| Error::SolverFailure { step: 0, detail: format!("numeric LU: {e:?}") })?;
        Ok(SaddleSystem {
            n_u,
            n_p,
            b: b.clone(),
            grad_scale,
            constrained: flags,
            stab,
            mean_vec: mean_vec.to_vec(),
            gauge,
            full,
            symbolic,
            lu,
        })
    }

    /// Replaces the velocity block and refactorises, reusing the symbolic
    /// factorisation. The new block must have the sparsity pattern of the
    /// one the system was built with (keep explicit zeros when assembling).
    pub fn update_k(&mut self, k: &Csc, step: usize) -> Result<()> {
        let full = assemble_full(
            k,
            &self.b,
            self.grad_scale,
            &self.mean_vec,
            &self.constrained,
            &self.stab,
            self.gauge,
        )?;
        self.lu = Lu::try_new_with_symbolic(self.symbolic.clone(), full.rb()).map_err(|e| {
            Error::SolverFailure { step, detail: format!("numeric LU refactorisation: {e:?}") }
        })?;
        self.full = full;
        Ok(())
    }

    /// Solves for `(velocity, pressure)`; `step` only labels errors.
    pub fn solve(&self, rhs_u: &[f64], rhs_p: &[f64], step: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if rhs_u.len() != self.n_u || rhs_p.len() != self.n_p {
            return Err(Error::invalid("saddle solve: rhs length mismatch"));
        }
        let dim = self.n_u + self.n_p + usize::from(self.gauge);
        let mut rhs = vec![0.0; dim];
        rhs[..self.n_u].copy_from_slice(rhs_u);
        rhs[self.n_u..self.n_u + self.n_p].copy_from_slice(rhs_p);
        let mut x = rhs.clone();
        solve_lu(&self.lu, &mut x);
        let tol = RESIDUAL_TOL * (1.0 + inf_norm(&rhs));
        if residual_inf(&self.full, &x, &rhs) > tol {
            refine(&self.full, &mut x, &rhs, |r| solve_lu(&self.lu, r));
        }
        let res = residual_inf(&self.full, &x, &rhs);
        if !res.is_finite() || res > tol {
            return Err(Error::SolverFailure {
                step,
                detail: format!("saddle residual {res:.3e} above tolerance {tol:.3e}"),
            });
        }
        let u = x[..self.n_u].to_vec();
        let mut p = x[self.n_u..self.n_u + self.n_p].to_vec();
        gauge_mean_zero(&mut p, &self.mean_vec);
        Ok((u, p))
    }
}

fn assemble_full(
    k: &Csc,
    b: &Csc,
    grad_scale: f64,
    mean_vec: &[f64],
    constrained: &[bool],
    stab: &Option<(f64, Csc)>,
    gauge: bool,
) -> Result<Csc> {
    let n_u = k.nrows();
    let n_p = b.nrows();
    let dim = n_u + n_p + usize::from(gauge);
    let mut coo = Coo::new(dim, dim);
    coo.push_block(k, 0, 0, 1.0);
    for t in b.triplet_iter() {
        // B block: divergence constraint rows.
        coo.push(n_u + t.row, t.col, *t.val);
        // B^T coupling, dropped on Dirichlet-constrained rows.
        if !constrained[t.col] {
            coo.push(t.col, n_u + t.row, grad_scale * t.val);
        }
    }
    if let Some((eps, ap)) = stab {
        coo.push_block(ap, n_u, n_u, -eps);
    }
    if gauge {
        for (i, &mi) in mean_vec.iter().enumerate() {
            coo.push(n_u + i, dim - 1, mi);
            coo.push(dim - 1, n_u + i, mi);
        }
    }
    coo.to_csc()
}

/// Shifts a pressure vector so that `mean_vec^T p = 0` exactly; `mean_vec`
/// sums to 1 (the domain area), so the shift is the weighted mean itself.
pub fn gauge_mean_zero(p: &mut [f64], mean_vec: &[f64]) {
    let mean = dot(mean_vec, p) / mean_vec.iter().sum::<f64>();
    for pi in p.iter_mut() {
        *pi -= mean;
    }
}

/// Cached sparse Cholesky for symmetric positive-definite systems.
pub struct SpdSolver {
    mat: Csc,
    llt: Llt<usize, f64>,
}

impl SpdSolver {
    pub fn new(mat: &Csc) -> Result<Self> {
        let symbolic = SymbolicLlt::try_new(mat.symbolic(), Side::Lower).map_err(|e| {
            Error::SolverFailure { step: 0, detail: format!("symbolic Cholesky: {e:?}") }
        })?;
        let llt = Llt::try_new_with_symbolic(symbolic, mat.rb(), Side::Lower).map_err(|e| {
            Error::SolverFailure { step: 0, detail: format!("matrix not SPD: {e:?}") }
        })?;
        Ok(SpdSolver { mat: mat.clone(), llt })
    }

    pub fn solve(&self, rhs: &[f64], step: usize) -> Result<Vec<f64>> {
        if rhs.len() != self.mat.nrows() {
            return Err(Error::invalid("spd solve: rhs length mismatch"));
        }
        let mut x = rhs.to_vec();
        solve_llt(&self.llt, &mut x);
        let tol = RESIDUAL_TOL * (1.0 + inf_norm(rhs));
        if residual_inf(&self.mat, &x, rhs) > tol {
            refine(&self.mat, &mut x, rhs, |r| solve_llt(&self.llt, r));
        }
        let res = residual_inf(&self.mat, &x, rhs);
        if !res.is_finite() || res > tol {
            return Err(Error::SolverFailure {
                step,
                detail: format!("spd residual {res:.3e} above tolerance {tol:.3e}"),
            });
        }
        Ok(x)
    }
}

/// One-shot SPD solve.
pub fn solve_spd(mat: &Csc, rhs: &[f64]) -> Result<Vec<f64>> {
    SpdSolver::new(mat)?.solve(rhs, 0)
}

/// Cached solver for the singular Neumann problem `Ap x = rhs` on the
/// mean-zero subspace, regularised by the same Lagrange-row device as the
/// saddle systems. The right-hand side is projected onto the orthogonal
/// complement of constants before solving, so compatibility holds by
/// construction.
pub struct PoissonSolver {
    n_p: usize,
    mean_vec: Vec<f64>,
    full: Csc,
    lu: Lu<usize, f64>,
}

impl PoissonSolver {
    pub fn new(ap: &Csc, mean_vec: &[f64]) -> Result<Self> {
        let n_p = ap.nrows();
        if ap.ncols() != n_p || mean_vec.len() != n_p {
            return Err(Error::invalid("poisson solver: dimension mismatch"));
        }
        let dim = n_p + 1;
        let mut coo = Coo::new(dim, dim);
        coo.push_block(ap, 0, 0, 1.0);
        for (i, &mi) in mean_vec.iter().enumerate() {
            coo.push(i, n_p, mi);
            coo.push(n_p, i, mi);
        }
        let full = coo.to_csc()?;
        let symbolic = SymbolicLu::try_new(full.symbolic())
            .map_err(|e| Error::SolverFailure { step: 0, detail: format!("symbolic LU: {e:?}") })?;
        let lu = Lu::try_new_with_symbolic(symbolic, full.rb())
            .map_err(|e| Error::SolverFailure { step: 0, detail: format!("numeric LU: {e:?}") })?;
        Ok(PoissonSolver { n_p, mean_vec: mean_vec.to_vec(), full, lu })
    }

    pub fn solve(&self, rhs: &[f64], step: usize) -> Result<Vec<f64>> {
        if rhs.len() != self.n_p {
            return Err(Error::invalid("poisson solve: rhs length mismatch"));
        }
        // Project out the constant nullspace of Ap^T: 1^T rhs = 0.
        let shift = rhs.iter().sum::<f64>() / self.n_p as f64;
        let mut full_rhs = vec![0.0; self.n_p + 1];
        for (fi, &ri) in full_rhs.iter_mut().zip(rhs) {
            *fi = ri - shift;
        }
        let mut x = full_rhs.clone();
        solve_lu(&self.lu, &mut x);
        let tol = RESIDUAL_TOL * (1.0 + inf_norm(&full_rhs));
        if residual_inf(&self.full, &x, &full_rhs) > tol {
            refine(&self.full, &mut x, &full_rhs, |r| solve_lu(&self.lu, r));
        }
        let res = residual_inf(&self.full, &x, &full_rhs);
        if !res.is_finite() || res > tol {
            return Err(Error::SolverFailure {
                step,
                detail: format!("poisson residual {res:.3e} above tolerance {tol:.3e}"),
            });
        }
        x.truncate(self.n_p);
        gauge_mean_zero(&mut x, &self.mean_vec);
        Ok(x)
    }
}

/// One-shot mean-free Poisson solve.
pub fn solve_poisson_meanfree(ap: &Csc, mean_vec: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    PoissonSolver::new(ap, mean_vec)?.solve(rhs, 0)
}
