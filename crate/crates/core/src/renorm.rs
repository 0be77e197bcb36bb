//! Renormalized Hamiltonian, dissipation, and fluctuation coefficients.
//!
//! The propagator obeys `du/dt = -(i e_r(t) + gamma(t)) u(t)` exactly for a
//! unique pair of Hermitian matrices: with `M(t) = -du/dt u(t)^{-1}`,
//!
//! * `e_r = (M - M†) / 2i` is the renormalized level Hamiltonian,
//! * `gamma = (M + M†) / 2` is the dissipation coefficient.
//!
//! The occupation flow fixes the fluctuation coefficient
//! `gamma_t = dv/dt + M v + v M†`. Time derivatives use second-order finite
//! differences on the uniform grid: centered stencils in the interior and
//! one-sided three-point stencils at both ends.
//!
//! Where the propagator is numerically singular (fully decayed or at an
//! isolated zero crossing) the coefficients are undefined; such samples are
//! frozen at the last well-conditioned value and flagged, and tail averages
//! skip them.

use crate::greens::Trajectory;
use crate::linalg::{flat_adjoint_into, flat_mul_add, matrix_from_flat, min_singular_value};
use crate::{C64, CMatrix};

/// Propagators with a smallest singular value below this are treated as
/// singular: the coefficient extraction would amplify noise by more than
/// ten digits.
pub const SINGULAR_U_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum RenormError {
    #[error("mismatched trajectories: {0}")]
    Mismatched(String),
    #[error("need at least 3 samples for second-order stencils, got {n_samples}")]
    TooShort { n_samples: usize },
    #[error(
        "no well-conditioned propagator sample in the tail window starting at index {window_start}"
    )]
    SingularTail { window_start: usize },
    #[error("tail fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
}

/// Time series of the three extracted coefficient matrices, on the same grid
/// as the input trajectories.
#[derive(Debug, Clone)]
pub struct RenormSeries {
    pub eps_r: Trajectory,
    pub gamma: Trajectory,
    pub gamma_tilde: Trajectory,
    /// Whether the propagator was well-conditioned at each sample. Frozen
    /// (copied-forward) values sit where this is `false`.
    pub valid: Vec<bool>,
}

/// Tail averages of the coefficients over the trailing window, computed from
/// well-conditioned samples only. The `*_drift` fields give the largest
/// Frobenius-norm deviation of any window sample from the window mean — a
/// direct stationarity diagnostic.
#[derive(Debug, Clone)]
pub struct TailAverages {
    pub eps_r: CMatrix,
    pub gamma: CMatrix,
    pub gamma_tilde: CMatrix,
    pub eps_r_drift: f64,
    pub gamma_drift: f64,
    pub gamma_tilde_drift: f64,
    pub window_start: usize,
    pub n_window: usize,
    pub n_valid: usize,
}

/// Second-order finite-difference derivative of a trajectory.
fn differentiate(traj: &Trajectory) -> Trajectory {
    let n = traj.n_steps();
    let dim = traj.dim();
    let dd = dim * dim;
    let dt = traj.dt();
    let inv2dt = C64::new(1.0 / (2.0 * dt), 0.0);
    let mut out = Trajectory::zeros(dim, dt, n);
    for e in 0..dd {
        {
            let d0 = (-3.0 * traj.step(0)[e] + 4.0 * traj.step(1)[e] - traj.step(2)[e]) * inv2dt;
            out.step_mut(0)[e] = d0;
        }
        for k in 1..n {
            out.step_mut(k)[e] = (traj.step(k + 1)[e] - traj.step(k - 1)[e]) * inv2dt;
        }
        {
            let dn =
                (3.0 * traj.step(n)[e] - 4.0 * traj.step(n - 1)[e] + traj.step(n - 2)[e]) * inv2dt;
            out.step_mut(n)[e] = dn;
        }
    }
    out
}

/// Extracts `e_r(t)`, `gamma(t)`, and `gamma_t(t)` from the propagator and
/// fluctuation trajectories.
pub fn renormalized_coefficients(
    u: &Trajectory,
    v: &Trajectory,
) -> Result<RenormSeries, RenormError> {
    let n = u.n_steps();
    let dim = u.dim();
    if v.dim() != dim || v.n_steps() != n {
        return Err(RenormError::Mismatched(format!(
            "u is {}x{} with {} steps, v is {}x{} with {} steps",
            dim,
            dim,
            n,
            v.dim(),
            v.dim(),
            v.n_steps()
        )));
    }
    if (u.dt() - v.dt()).abs() > 1e-12 * u.dt().abs().max(1.0) {
        return Err(RenormError::Mismatched(format!(
            "grid spacings differ: {} vs {}",
            u.dt(),
            v.dt()
        )));
    }
    if n + 1 < 3 {
        return Err(RenormError::TooShort { n_samples: n + 1 });
    }

    let du = differentiate(u);
    let dv = differentiate(v);
    let dt = u.dt();
    let mut eps_r = Trajectory::zeros(dim, dt, n);
    let mut gamma = Trajectory::zeros(dim, dt, n);
    let mut gamma_tilde = Trajectory::zeros(dim, dt, n);
    let mut valid = vec![false; n + 1];

    if dim == 1 {
        for k in 0..=n {
            let uk = u.scalar(k);
            if uk.norm() < SINGULAR_U_TOL {
                freeze_from_previous(&mut eps_r, &mut gamma, &mut gamma_tilde, k);
                continue;
            }
            valid[k] = true;
            let m = -du.scalar(k) / uk;
            // 1x1 Hermitian blocks are real numbers.
            eps_r.step_mut(k)[0] = C64::new(m.im, 0.0);
            gamma.step_mut(k)[0] = C64::new(m.re, 0.0);
            let gt = dv.scalar(k) + 2.0 * (m * v.scalar(k)).re;
            gamma_tilde.step_mut(k)[0] = C64::new(gt.re, 0.0);
        }
    } else {
        let dd = dim * dim;
        let zero = C64::new(0.0, 0.0);
        let mut m_flat = vec![zero; dd];
        let mut adj = vec![zero; dd];
        let mut mv = vec![zero; dd];
        for k in 0..=n {
            let um = u.matrix(k);
            if min_singular_value(&um) < SINGULAR_U_TOL {
                freeze_from_previous(&mut eps_r, &mut gamma, &mut gamma_tilde, k);
                continue;
            }
            let Some(inv) = um.try_inverse() else {
                freeze_from_previous(&mut eps_r, &mut gamma, &mut gamma_tilde, k);
                continue;
            };
            valid[k] = true;
            let inv_flat = crate::linalg::flat_from_matrix(&inv);
            m_flat.fill(zero);
            flat_mul_add(&mut m_flat, du.step(k), &inv_flat, dim, C64::new(-1.0, 0.0));
            flat_adjoint_into(&mut adj, &m_flat, dim);
            {
                let e = eps_r.step_mut(k);
                let g = gamma.step_mut(k);
                let half_over_i = C64::new(0.0, -0.5);
                for i in 0..dd {
                    e[i] = half_over_i * (m_flat[i] - adj[i]);
                    g[i] = 0.5 * (m_flat[i] + adj[i]);
                }
            }
            // gamma_t = dv + M v + (M v)†, using Hermiticity of v.
            mv.fill(zero);
            flat_mul_add(&mut mv, &m_flat, v.step(k), dim, C64::new(1.0, 0.0));
            flat_adjoint_into(&mut adj, &mv, dim);
            let gt = gamma_tilde.step_mut(k);
            for i in 0..dd {
                gt[i] = dv.step(k)[i] + mv[i] + adj[i];
            }
        }
    }
    Ok(RenormSeries { eps_r, gamma, gamma_tilde, valid })
}

fn freeze_from_previous(
    eps_r: &mut Trajectory,
    gamma: &mut Trajectory,
    gamma_tilde: &mut Trajectory,
    k: usize,
) {
    if k == 0 {
        return; // u(0) = I is never singular in practice; leave zeros.
    }
    for traj in [eps_r, gamma, gamma_tilde] {
        let prev = traj.step(k - 1).to_vec();
        traj.step_mut(k).copy_from_slice(&prev);
    }
}

/// Averages the coefficients over the trailing `frac` of the grid (for
/// example `0.1` for the last tenth), using well-conditioned samples only.
pub fn tail_average(series: &RenormSeries, frac: f64) -> Result<TailAverages, RenormError> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(RenormError::BadFraction(frac));
    }
    let n = series.eps_r.n_steps();
    let n_samples = n + 1;
    let n_window = ((n_samples as f64 * frac).ceil() as usize).clamp(1, n_samples);
    let window_start = n_samples - n_window;

    let dim = series.eps_r.dim();
    let ks: Vec<usize> = (window_start..=n).filter(|&k| series.valid[k]).collect();
    if ks.is_empty() {
        return Err(RenormError::SingularTail { window_start });
    }

    let mean_of = |traj: &Trajectory| -> CMatrix {
        let mut acc = CMatrix::zeros(dim, dim);
        for &k in &ks {
            acc += matrix_from_flat(traj.step(k), dim);
        }
        acc / C64::new(ks.len() as f64, 0.0)
    };
    let drift_of = |traj: &Trajectory, mean: &CMatrix| -> f64 {
        ks.iter().map(|&k| (matrix_from_flat(traj.step(k), dim) - mean).norm()).fold(0.0, f64::max)
    };

    let eps_r = mean_of(&series.eps_r);
    let gamma = mean_of(&series.gamma);
    let gamma_tilde = mean_of(&series.gamma_tilde);
    let eps_r_drift = drift_of(&series.eps_r, &eps_r);
    let gamma_drift = drift_of(&series.gamma, &gamma);
    let gamma_tilde_drift = drift_of(&series.gamma_tilde, &gamma_tilde);
    Ok(TailAverages {
        eps_r,
        gamma,
        gamma_tilde,
        eps_r_drift,
        gamma_drift,
        gamma_tilde_drift,
        window_start,
        n_window,
        n_valid: ks.len(),
    })
}
