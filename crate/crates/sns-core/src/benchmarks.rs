//! Manufactured-solution benchmark catalogue.
//!
//! Every problem lives on the unit square and shares a small family of
//! polynomial building blocks:
//!
//! * the divergence-free velocity shape
//!   `g(x,y) = (2x²(1−x)²y(y−1)(2y−1), −2y²(1−y)²x(x−1)(2x−1))`,
//! * its componentwise Laplacian `Δg = (f(x,y), −f(y,x))` with the scalar
//!   pattern `f`,
//! * the pressure shape `x² + y² − 2/3` (mean-zero on the square), and
//! * the potential `φ(x,y) = x²(1−x)²y²(1−y)²` whose gradient is the
//!   prototypical "potential noise" (mean of `φ` is `1/900`).
//!
//! The stochastic examples are built by the direct method: the closed-form
//! pair `(u, p)` (or time-integrated `P`) is prescribed and the body force
//! absorbs whatever the noise does not. Each exact evaluator takes the
//! realised Wiener path, the time, and the point.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid_fem::{interpolate_pressure, interpolate_velocity, norm, FeSpaces, NormKind, OperatorSet, Space};
use crate::saddle::gauge_mean_zero;
use crate::schemes::Trajectory;
use crate::sparse::axpy;
use crate::stochastics::{
    geometric_bm, vortex_center, vortex_scale, vortex_velocity, AdditiveField, NoiseModel,
    NonlinearKind, Transport, TransportField, TransportIntegration, WienerPath,
};

/// The divergence-free velocity shape shared by the manufactured examples
/// and the vortex-lattice noise: vanishes on the boundary of the unit
/// square together with its normal derivative.
///
/// `g(x,y) = (2x²(1−x)²y(y−1)(2y−1), −2y²(1−y)²x(x−1)(2x−1))`.
pub fn shape_g(x: f64, y: f64) -> [f64; 2] {
    [
        2.0 * x * x * (1.0 - x) * (1.0 - x) * y * (y - 1.0) * (2.0 * y - 1.0),
        -2.0 * y * y * (1.0 - y) * (1.0 - y) * x * (x - 1.0) * (2.0 * x - 1.0),
    ]
}

/// The scalar force pattern of the manufactured examples:
///
/// `f(x,y) = 4x²y(2y²−3y+1) + 16xy(x−1)(2y²−3y+1) + 4y(x−1)²(2y²−3y+1)
///           + 4x²(6y−3)(x−1)²`
///
/// so that the componentwise Laplacian of the shape is
/// `Δg = (f(x,y), −f(y,x))`.
pub fn shape_f(x: f64, y: f64) -> f64 {
    let q = 2.0 * y * y - 3.0 * y + 1.0;
    4.0 * x * x * y * q
        + 16.0 * x * y * (x - 1.0) * q
        + 4.0 * y * (x - 1.0) * (x - 1.0) * q
        + 4.0 * x * x * (6.0 * y - 3.0) * (x - 1.0) * (x - 1.0)
}

/// Componentwise Laplacian of the shape, `Δg = (f(x,y), −f(y,x))`.
pub fn shape_lap_g(x: f64, y: f64) -> [f64; 2] {
    [shape_f(x, y), -shape_f(y, x)]
}

/// Analytic Jacobian of the shape `g`; its trace (the divergence) vanishes
/// identically.
pub fn shape_g_jacobian(x: f64, y: f64) -> [[f64; 2]; 2] {
    let px = 2.0 * x * x * (1.0 - x) * (1.0 - x); // 2x²(1−x)²
    let py = 2.0 * y * y * (1.0 - y) * (1.0 - y);
    let dpx = 4.0 * x * (1.0 - x) * (1.0 - 2.0 * x); // d/dx 2x²(1−x)²
    let dpy = 4.0 * y * (1.0 - y) * (1.0 - 2.0 * y);
    let qy = y * (y - 1.0) * (2.0 * y - 1.0); // y(y−1)(2y−1)
    let qx = x * (x - 1.0) * (2.0 * x - 1.0);
    let dqy = 6.0 * y * y - 6.0 * y + 1.0; // d/dy qy
    let dqx = 6.0 * x * x - 6.0 * x + 1.0;
    [
        [dpx * qy, px * dqy],
        [-py * dqx, -dpy * qx],
    ]
}

/// The mean-zero pressure shape `x² + y² − 2/3`.
pub fn pressure_shape(x: f64, y: f64) -> f64 {
    x * x + y * y - 2.0 / 3.0
}

/// The potential `φ(x,y) = x²(1−x)²y²(1−y)²`; `∫_D φ = 1/900`.
pub fn potential_phi(x: f64, y: f64) -> f64 {
    x * x * (1.0 - x) * (1.0 - x) * y * y * (1.0 - y) * (1.0 - y)
}

/// `∇φ`, the potential-noise coefficient
/// `(2y²(1−y)²x(x−1)(2x−1), 2x²(1−x)²y(y−1)(2y−1))`.
pub fn grad_potential(x: f64, y: f64) -> [f64; 2] {
    [
        2.0 * y * y * (1.0 - y) * (1.0 - y) * x * (x - 1.0) * (2.0 * x - 1.0),
        2.0 * x * x * (1.0 - x) * (1.0 - x) * y * (y - 1.0) * (2.0 * y - 1.0),
    ]
}

/// Path-aware vector evaluator `(path, t, x, y) -> R²`.
pub type VecEval = Arc<dyn Fn(&WienerPath, f64, f64, f64) -> [f64; 2] + Send + Sync>;
/// Path-aware scalar evaluator `(path, t, x, y) -> R`.
pub type ScalarEval = Arc<dyn Fn(&WienerPath, f64, f64, f64) -> f64 + Send + Sync>;
/// Initial-condition evaluator `(x, y) -> R²`.
pub type InitEval = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;

/// Which pressure form the paper's example box states as exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PressureKind {
    /// A classical instantaneous pressure `p(t)` exists.
    Instantaneous,
    /// Only the time-integrated pressure `P(t) = ∫₀ᵗ p ds (+ noise part)` is
    /// regular enough to state.
    TimeIntegrated,
}

/// Closed-form exact solution of a benchmark problem.
///
/// `inst_pressure` for the time-integrated examples holds the *deterministic*
/// (time-regular) pressure component; the stochastic component is
/// distributional, so instantaneous comparisons against it diagnose the
/// expected non-convergence rather than an error decay.
#[derive(Clone)]
pub struct ExactSolution {
    pub velocity: VecEval,
    /// The natively stated pressure form.
    pub pressure_kind: PressureKind,
    /// Instantaneous pressure (exact, or the deterministic comparator for
    /// time-integrated examples); mean-zero over the square.
    pub inst_pressure: Option<ScalarEval>,
    /// Time-integrated pressure `P(t)`; mean-zero over the square.
    pub int_pressure: Option<ScalarEval>,
}

/// A benchmark problem on the unit square: data evaluators, noise model,
/// and the closed-form solution where the direct method provides one.
#[derive(Clone)]
pub struct Problem {
    pub id: String,
    pub mu: f64,
    pub t_end: f64,
    /// Body force `f(path, t, x, y)`.
    pub force: VecEval,
    /// Initial velocity.
    pub u0: InitEval,
    /// Dirichlet boundary values `u_BC(path, t, x, y)`.
    pub bc: VecEval,
    /// Noise model; `None` for deterministic problems.
    pub noise: Option<NoiseModel>,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("id", &self.id)
            .field("mu", &self.mu)
            .field("t_end", &self.t_end)
            .field("noise", &self.noise)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl Problem {
    /// Brownian modes the problem consumes (empty when deterministic).
    pub fn mode_ids(&self) -> Vec<u32> {
        self.noise.as_ref().map(NoiseModel::mode_ids).unwrap_or_default()
    }
}

/// Which of the vortex-lattice noises a standalone `vortex_noise` problem
/// carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VortexNoiseKind {
    Additive,
    Multiplicative,
    Transport,
}

/// Noise selection for the lid-driven cavity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CavityNoise {
    None,
    Additive { scl: u32 },
    Multiplicative { scl: u32 },
    Transport { scl: u32 },
}

/// Identifier of a catalogue problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExampleId {
    DetStokes,
    AdditiveSolenoidal,
    AdditivePotential,
    AdditiveGeneral,
    LinearMultiplicative,
    TransportConstant,
    TransportLinear,
    NonlinearMultiplicative,
    VortexNoise { kind: VortexNoiseKind, scl: u32 },
    LidDrivenCavity { noise: CavityNoise },
}

impl ExampleId {
    /// Parses a CLI-facing id string. Vortex and cavity ids take the noise
    /// kind after a colon (e.g. `vortex_noise:transport`,
    /// `lid_driven_cavity:additive`); `scl` defaults to 2.
    pub fn parse(id: &str, scl: Option<u32>) -> Result<ExampleId> {
        let scl = scl.unwrap_or(2);
        let (head, kind) = match id.split_once(':') {
            Some((h, k)) => (h, Some(k)),
            None => (id, None),
        };
        let bad_kind = || Error::invalid(format!("unknown noise kind in problem id {id:?}"));
        match head {
            "det_stokes" => Ok(ExampleId::DetStokes),
            "additive_solenoidal" => Ok(ExampleId::AdditiveSolenoidal),
            "additive_potential" => Ok(ExampleId::AdditivePotential),
            "additive_general" => Ok(ExampleId::AdditiveGeneral),
            "linear_multiplicative" => Ok(ExampleId::LinearMultiplicative),
            "transport_constant" => Ok(ExampleId::TransportConstant),
            "transport_linear" => Ok(ExampleId::TransportLinear),
            "nonlinear_multiplicative" => Ok(ExampleId::NonlinearMultiplicative),
            "vortex_noise" => {
                let kind = match kind.unwrap_or("additive") {
                    "additive" => VortexNoiseKind::Additive,
                    "multiplicative" => VortexNoiseKind::Multiplicative,
                    "transport" => VortexNoiseKind::Transport,
                    _ => return Err(bad_kind()),
                };
                Ok(ExampleId::VortexNoise { kind, scl })
            }
            "lid_driven_cavity" => {
                let noise = match kind.unwrap_or("none") {
                    "none" => CavityNoise::None,
                    "additive" => CavityNoise::Additive { scl },
                    "multiplicative" => CavityNoise::Multiplicative { scl },
                    "transport" => CavityNoise::Transport { scl },
                    _ => return Err(bad_kind()),
                };
                Ok(ExampleId::LidDrivenCavity { noise })
            }
            _ => Err(Error::invalid(format!("unknown problem id {id:?}"))),
        }
    }
}

fn zero_bc() -> VecEval {
    Arc::new(|_: &WienerPath, _t, _x, _y| [0.0, 0.0])
}

fn shape_init() -> InitEval {
    Arc::new(|x, y| shape_g(x, y))
}

/// `−μ Δg` scaled by `amp`, plus `2t(x,y)`: the deterministic manufactured
/// force pattern.
fn det_force(mu: f64, amp: f64, t: f64, x: f64, y: f64) -> [f64; 2] {
    let lap = shape_lap_g(x, y);
    [-mu * amp * lap[0] + 2.0 * t * x, -mu * amp * lap[1] + 2.0 * t * y]
}

fn check_scl(scl: u32) -> Result<()> {
    if scl > 8 {
        return Err(Error::invalid(format!("vortex lattice scale {scl} exceeds the documented range scl <= 8")));
    }
    Ok(())
}

/// Builds a catalogue problem.
pub fn make_example(id: &ExampleId) -> Result<Problem> {
    let mu = 1.0;
    match id {
        ExampleId::DetStokes => Ok(Problem {
            id: "det_stokes".into(),
            mu,
            t_end: 1.0,
            force: Arc::new(move |_p, t, x, y| det_force(mu, 1.0, t, x, y)),
            u0: shape_init(),
            bc: zero_bc(),
            noise: None,
            exact: Some(ExactSolution {
                velocity: Arc::new(|_p, _t, x, y| shape_g(x, y)),
                pressure_kind: PressureKind::Instantaneous,
                inst_pressure: Some(Arc::new(|_p, t, x, y| pressure_shape(x, y) * t)),
                int_pressure: Some(Arc::new(|_p, t, x, y| pressure_shape(x, y) * t * t / 2.0)),
            }),
        }),
        ExampleId::AdditiveSolenoidal => Ok(Problem {
            id: "additive_solenoidal".into(),
            mu,
            t_end: 1.0,
            force: Arc::new(move |p: &WienerPath, t, x, y| {
                det_force(mu, 1.0 + p.value(0, t), t, x, y)
            }),
            u0: shape_init(),
            bc: zero_bc(),
            noise: Some(NoiseModel::Additive { g: AdditiveField::new(|_t, x, y| shape_g(x, y)) }),
            exact: Some(ExactSolution {
                velocity: Arc::new(|p: &WienerPath, t, x, y| {
                    let w = p.value(0, t);
                    let g = shape_g(x, y);
                    [g[0] * (1.0 + w), g[1] * (1.0 + w)]
                }),
                pressure_kind: PressureKind::Instantaneous,
                inst_pressure: Some(Arc::new(|_p, t, x, y| pressure_shape(x, y) * t)),
                int_pressure: Some(Arc::new(|_p, t, x, y| pressure_shape(x, y) * t * t / 2.0)),
            }),
        }),
        ExampleId::AdditivePotential => Ok(Problem {
            id: "additive_potential".into(),
            mu,
            t_end: 1.0,
            force: Arc::new(move |_p, t, x, y| det_force(mu, 1.0, t, x, y)),
            u0: shape_init(),
            bc: zero_bc(),
            noise: Some(NoiseModel::Additive {
                g: AdditiveField::new(|_t, x, y| grad_potential(x, y)),
            }),
            exact: Some(ExactSolution {
                velocity: Arc::new(|_p, _t, x, y| shape_g(x, y)),
                pressure_kind: PressureKind::TimeIntegrated,
                // Deterministic comparator: the time-regular pressure part.
                inst_pressure: Some(Arc::new(|_p, t, x, y| pressure_shape(x, y) * t)),
                int_pressure: Some(Arc::new(|p: &WienerPath, t, x, y| {
                    pressure_shape(x, y) * t * t / 2.0
                        + (potential_phi(x, y) - 1.0 / 900.0) * p.value(0, t)
                })),
            }),
        }),
        ExampleId::AdditiveGeneral => Ok(Problem {
            id: "additive_general".into(),
            mu,
            t_end: 1.0,
            force: Arc::new(move |p: &WienerPath, t, x, y| {
                det_force(mu, 1.0 + p.value(0, t), t, x, y)
            }),
            u0: shape_init(),
            bc: zero_bc(),
            noise: Some(NoiseModel::Additive {
                g: AdditiveField::new(|_t, x, y| {
                    let a = shape_g(x, y);
                    let b = grad_potential(x, y);
                    [a[0] + b[0], a[1] + b[1]]
                }),
            }),
            exact: Some(ExactSolution {
                velocity: Arc::new(|p: &WienerPath, t, x, y| {
                    let w = p.value(0, t);
                    let g = shape_g(x, y);
                    [g[0] * (1.0 + w), g[1] * (1.0 + w)]
                }),
                pressure_kind: PressureKind::TimeIntegrated,
                inst_pressure: Some(Arc::new(|_p, t, x, y| pressure_shape(x, y) * t)),
                int_pressure: Some(Arc::new(|p: &WienerPath, t, x, y| {
                    pressure_shape(x, y) * t * t / 2.0
                        + (potential_phi(x, y) - 1.0 / 900.0) * p.value(0, t)
                })),
            }),
        }),
        ExampleId::LinearMultiplicative => {
            let lambda = 1.0;
            Ok(Problem {
                id: "linear_multiplicative".into(),
                mu,
                t_end: 1.0,
                force: Arc::new(move |p: &WienerPath, t, x, y| {
                    let s = geometric_bm(p, lambda, t);
                    let f = det_force(mu, 1.0, t, x, y);
                    [f[0] * s, f[1] * s]
                }),
                u0: shape_init(),
                bc: zero_bc(),
                noise: Some(NoiseModel::LinearMultiplicative { lambda }),
                exact: Some(ExactSolution {
                    velocity: Arc::new(move |p: &WienerPath, t, x, y| {
                        let s = geometric_bm(p, lambda, t);
                        let g = shape_g(x, y);
                        [g[0] * s, g[1] * s]
                    }),
                    pressure_kind: PressureKind::Instantaneous,
                    inst_pressure: Some(Arc::new(move |p: &WienerPath, t, x, y| {
                        pressure_shape(x, y) * t * geometric_bm(p, lambda, t)
                    })),
                    int_pressure: None,
                }),
            })
        }
        ExampleId::TransportConstant => {
            let gamma = [1.0, 1.0];
            let hat = move |p: &WienerPath, t: f64, x: f64, y: f64| {
                let w = p.value(0, t);
                [x + gamma[0] * w, y + gamma[1] * w]
            };
            Ok(Problem {
                id: "transport_constant".into(),
                mu,
                t_end: 1.0,
                force: Arc::new(move |p: &WienerPath, t, x, y| {
                    let [xh, yh] = hat(p, t, x, y);
                    let lap = shape_lap_g(xh, yh);
                    [-mu * lap[0] + 2.0 * t * xh, -mu * lap[1] + 2.0 * t * yh]
                }),
                u0: shape_init(),
                bc: Arc::new(move |p: &WienerPath, t, x, y| {
                    let [xh, yh] = hat(p, t, x, y);
                    shape_g(xh, yh)
                }),
                noise: Some(NoiseModel::Transport(Transport::new(
                    TransportField::Constant { gamma },
                    TransportIntegration::StratonovichMidpoint,
                ))),
                exact: Some(ExactSolution {
                    velocity: Arc::new(move |p: &WienerPath, t, x, y| {
                        let [xh, yh] = hat(p, t, x, y);
                        shape_g(xh, yh)
                    }),
                    pressure_kind: PressureKind::Instantaneous,
                    inst_pressure: Some(Arc::new(move |p: &WienerPath, t, x, y| {
                        let [xh, yh] = hat(p, t, x, y);
                        let w = p.value(0, t);
                        let a = 1.0 + gamma[0] * w;
                        let b = 1.0 + gamma[1] * w;
                        let ga = gamma[0] * w;
                        let gb = gamma[1] * w;
                        let c = (a * a * a + b * b * b - ga * ga * ga - gb * gb * gb) / 3.0;
                        (xh * xh + yh * yh - c) * t
                    })),
                    int_pressure: None,
                }),
            })
        }
        ExampleId::TransportLinear => {
            let lambda = 1.0;
            Ok(Problem {
                id: "transport_linear".into(),
                mu,
                t_end: 1.0,
                force: Arc::new(move |p: &WienerPath, t, x, y| {
                    let e = (lambda * p.value(0, t)).exp();
                    let (xh, yh) = (e * x, e * y);
                    let lap = shape_lap_g(xh, yh);
                    [
                        -mu * lap[0] * e * e + 2.0 * t * xh * e,
                        -mu * lap[1] * e * e + 2.0 * t * yh * e,
                    ]
                }),
                u0: shape_init(),
                bc: Arc::new(move |p: &WienerPath, t, x, y| {
                    let e = (lambda * p.value(0, t)).exp();
                    shape_g(e * x, e * y)
                }),
                noise: Some(NoiseModel::Transport(Transport::new(
                    TransportField::LinearRadial { lambda },
                    TransportIntegration::StratonovichMidpoint,
                ))),
                exact: Some(ExactSolution {
                    velocity: Arc::new(move |p: &WienerPath, t, x, y| {
                        let e = (lambda * p.value(0, t)).exp();
                        shape_g(e * x, e * y)
                    }),
                    pressure_kind: PressureKind::Instantaneous,
                    inst_pressure: Some(Arc::new(move |p: &WienerPath, t, x, y| {
                        let e = (lambda * p.value(0, t)).exp();
                        let (xh, yh) = (e * x, e * y);
                        (xh * xh + yh * yh - 2.0 / 3.0 * e * e) * t
                    })),
                    int_pressure: None,
                }),
            })
        }
        ExampleId::NonlinearMultiplicative => Ok(Problem {
            id: "nonlinear_multiplicative".into(),
            mu,
            t_end: 1.0,
            // The paper's constant force "bold 1 dt" read as the vector (1,1).
            force: Arc::new(|_p, _t, _x, _y| [1.0, 1.0]),
            u0: Arc::new(|_x, _y| [0.0, 0.0]),
            bc: zero_bc(),
            noise: Some(NoiseModel::NonlinearMultiplicative {
                kind: NonlinearKind::Cylindrical { r: 2.0, l_max: 16 },
            }),
            exact: None,
        }),
        ExampleId::VortexNoise { kind, scl } => {
            check_scl(*scl)?;
            let noise = match kind {
                VortexNoiseKind::Additive => NoiseModel::AdditiveVortex { scl: *scl },
                VortexNoiseKind::Multiplicative => NoiseModel::NonlinearMultiplicative {
                    kind: NonlinearKind::VortexLattice { scl: *scl },
                },
                VortexNoiseKind::Transport => NoiseModel::Transport(Transport::new(
                    TransportField::VortexLattice { scl: *scl },
                    TransportIntegration::StratonovichMidpoint,
                )),
            };
            Ok(Problem {
                id: format!("vortex_noise:{:?}:{}", kind, scl).to_lowercase(),
                mu,
                t_end: 1.0,
                force: Arc::new(|_p, _t, _x, _y| [0.0, 0.0]),
                // Start from the global shape so state-dependent variants are
                // non-trivial from the first step.
                u0: shape_init(),
                bc: zero_bc(),
                noise: Some(noise),
                exact: None,
            })
        }
        ExampleId::LidDrivenCavity { noise } => {
            let noise_model = match noise {
                CavityNoise::None => None,
                CavityNoise::Additive { scl } => {
                    check_scl(*scl)?;
                    Some(NoiseModel::AdditiveVortex { scl: *scl })
                }
                CavityNoise::Multiplicative { scl } => {
                    check_scl(*scl)?;
                    Some(NoiseModel::NonlinearMultiplicative {
                        kind: NonlinearKind::VortexLattice { scl: *scl },
                    })
                }
                CavityNoise::Transport { scl } => {
                    check_scl(*scl)?;
                    Some(NoiseModel::Transport(Transport::new(
                        TransportField::VortexLattice { scl: *scl },
                        TransportIntegration::StratonovichMidpoint,
                    )))
                }
            };
            Ok(Problem {
                id: format!("lid_driven_cavity:{:?}", noise).to_lowercase(),
                mu: 1.0 / 500.0,
                t_end: 20.0,
                force: Arc::new(|_p, _t, _x, _y| [0.0, 0.0]),
                u0: Arc::new(|_x, _y| [0.0, 0.0]),
                // Leaky-cavity convention: the lid value (1,0) is applied on
                // the whole top edge including both corners.
                bc: Arc::new(|_p: &WienerPath, _t, _x, y| {
                    if y >= 1.0 - 1e-9 {
                        [1.0, 0.0]
                    } else {
                        [0.0, 0.0]
                    }
                }),
                noise: noise_model,
                exact: None,
            })
        }
    }
}

/// One compactly supported lattice vortex as an analytic evaluator.
///
/// `center` must be a lattice centre `((2i+1)λ/2, (2j+1)λ/2)` with
/// `λ = 1/(scl+1)`.
pub fn build_vortex_field(scl: u32, center: [f64; 2]) -> Result<impl Fn(f64, f64) -> [f64; 2]> {
    check_scl(scl)?;
    let m = scl + 1;
    let lam = vortex_scale(scl);
    let col = ((center[0] / lam - 0.5).round()).max(0.0) as u32;
    let row = ((center[1] / lam - 0.5).round()).max(0.0) as u32;
    if col >= m || row >= m {
        return Err(Error::invalid(format!("{center:?} is not a lattice centre for scl={scl}")));
    }
    let mode = row * m + col;
    let c = vortex_center(scl, mode);
    if (c[0] - center[0]).abs() > 1e-12 || (c[1] - center[1]).abs() > 1e-12 {
        return Err(Error::invalid(format!("{center:?} is not a lattice centre for scl={scl}")));
    }
    Ok(move |x: f64, y: f64| vortex_velocity(scl, mode, x, y))
}

/// Per-node L2 velocity errors of a trajectory against the problem's exact
/// solution interpolated at each snapshot time.
pub fn exact_error_velocity(
    traj: &Trajectory,
    problem: &Problem,
    path: &WienerPath,
    spaces: &FeSpaces,
    ops: &OperatorSet,
) -> Result<Vec<f64>> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Unsupported("exact_error_velocity: problem has no exact solution".into()))?;
    let mut out = Vec::with_capacity(traj.times.len());
    for (k, &t) in traj.times.iter().enumerate() {
        let ex = interpolate_velocity(spaces, |_, x, y| (exact.velocity)(path, t, x, y), t)?;
        let mut e = traj.velocities[k].clone();
        axpy(-1.0, &ex, &mut e);
        out.push(norm(ops, &e, NormKind::L2, Space::Velocity)?);
    }
    Ok(out)
}

/// Per-node `L²/R` errors of the accumulated discrete pressure `τ Σ p^ℓ`
/// against the exact time-integrated pressure.
pub fn exact_error_int_pressure(
    traj: &Trajectory,
    problem: &Problem,
    path: &WienerPath,
    spaces: &FeSpaces,
    ops: &OperatorSet,
) -> Result<Vec<f64>> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Unsupported("exact_error_int_pressure: problem has no exact solution".into()))?;
    let pint = exact.int_pressure.as_ref().ok_or_else(|| {
        Error::Unsupported(format!(
            "exact_error_int_pressure: {} has no closed-form time-integrated pressure",
            problem.id
        ))
    })?;
    per_node_pressure_errors(&traj.times, &traj.p_acc, |t, x, y| pint(path, t, x, y), spaces, ops)
}

/// Per-node `L²/R` errors of the instantaneous discrete pressure against the
/// exact (or deterministic-comparator) instantaneous pressure.
pub fn exact_error_inst_pressure(
    traj: &Trajectory,
    problem: &Problem,
    path: &WienerPath,
    spaces: &FeSpaces,
    ops: &OperatorSet,
) -> Result<Vec<f64>> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Unsupported("exact_error_inst_pressure: problem has no exact solution".into()))?;
    let pinst = exact.inst_pressure.as_ref().ok_or_else(|| {
        Error::Unsupported(format!("exact_error_inst_pressure: {} has no instantaneous pressure", problem.id))
    })?;
    per_node_pressure_errors(&traj.times, &traj.pressures, |t, x, y| pinst(path, t, x, y), spaces, ops)
}

fn per_node_pressure_errors<F>(
    times: &[f64],
    discrete: &[Vec<f64>],
    exact: F,
    spaces: &FeSpaces,
    ops: &OperatorSet,
) -> Result<Vec<f64>>
where
    F: Fn(f64, f64, f64) -> f64,
{
    let mut out = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let mut ex = interpolate_pressure(spaces, |_, x, y| exact(t, x, y), t)?;
        // L²/R: gauge both representatives to the same mean.
        gauge_mean_zero(&mut ex, &ops.mean_vec);
        let mut e = discrete[k].clone();
        gauge_mean_zero(&mut e, &ops.mean_vec);
        axpy(-1.0, &ex, &mut e);
        out.push(norm(ops, &e, NormKind::L2, Space::Pressure)?);
    }
    Ok(out)
}
