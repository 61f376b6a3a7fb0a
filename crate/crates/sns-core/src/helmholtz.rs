//! Discrete Helmholtz-Leray decomposition `v = P_HL v + P_HL^perp v`.
//!
//! The gradient part is found from the mixed saddle system
//!
//! ```text
//! [ M    B^T      ] [w  ]   [M v]
//! [ B    0   mean ] [phi] = [ 0 ]
//! [      mean^T   ] [l  ]   [ 0 ]
//! ```
//!
//! whose first row gives `w = v - M^{-1} B^T phi` (so the gradient part
//! `v - w` is the M-orthogonal projection of the discrete gradient of the
//! potential `phi`), and whose second row forces `w` to be discretely
//! divergence-free *exactly* (to solver precision). The potential lives in the linear pressure space with natural
//! boundary conditions — the standard discrete surrogate for the Leray
//! projector on a Dirichlet problem, and precisely what the Chorin pressure
//! step produces.
//!
//! (A pure Neumann-Poisson potential solve would leave a discretisation-size
//! divergence residual, because the discrete Schur complement differs from
//! the pressure stiffness matrix; the mixed form avoids that.)

use crate::error::Result;
use crate::grid_fem::OperatorSet;
use crate::saddle::SaddleSystem;
use crate::sparse::{axpy, inf_norm, matvec};

/// The three parts of a decomposition: `input = solenoidal + gradient_part`.
#[derive(Clone, Debug)]
pub struct HelmholtzSplit {
    /// Discretely divergence-free part.
    pub solenoidal: Vec<f64>,
    /// Mean-zero potential in the pressure space.
    pub potential: Vec<f64>,
    /// M-orthogonal projection of the potential's gradient into the
    /// velocity space.
    pub gradient_part: Vec<f64>,
}

/// Cached projector: the mixed system is factorised once per operator set.
pub struct HelmholtzProjector {
    sys: SaddleSystem,
}

impl HelmholtzProjector {
    pub fn new(ops: &OperatorSet) -> Result<Self> {
        let sys = SaddleSystem::new_ungauged(&ops.m, &ops.b, 1.0, &ops.mean_vec, &[], None)?;
        Ok(HelmholtzProjector { sys })
    }

    /// Decomposes `v`; the parts sum to `v` exactly by construction.
    pub fn project(&self, v: &[f64], ops: &OperatorSet) -> Result<HelmholtzSplit> {
        let rhs_u = matvec(&ops.m, v);
        let rhs_p = vec![0.0; ops.b.nrows()];
        let (w, phi) = self.sys.solve(&rhs_u, &rhs_p, 0)?;
        let mut gradient_part = v.to_vec();
        axpy(-1.0, &w, &mut gradient_part);
        Ok(HelmholtzSplit { solenoidal: w, potential: phi, gradient_part })
    }
}

/// One-shot decomposition of a velocity vector.
pub fn project(v: &[f64], ops: &OperatorSet) -> Result<HelmholtzSplit> {
    HelmholtzProjector::new(ops)?.project(v, ops)
}

/// `true` iff the discrete divergence satisfies the inf-norm bound
/// `||B v||_inf <= tol`.
pub fn is_discretely_divfree(v: &[f64], ops: &OperatorSet, tol: f64) -> bool {
    inf_norm(&matvec(&ops.b, v)) <= tol
}
