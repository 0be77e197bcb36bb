//! Nonequilibrium Green functions on a uniform time grid.
//!
//! Two objects drive everything downstream:
//!
//! * the retarded propagator `u(t)`, solving the memory integro-differential
//!   equation `du/dt = -i e u(t) - int_0^t g(t-s) u(s) ds` with `u(0) = I`,
//!   where `e` is the level Hamiltonian and `g` the damping kernel;
//! * the fluctuation matrix
//!   `v(t) = int_0^t ds1 int_0^t ds2  u(s1) gt(s2 - s1) u(s2)†`,
//!   built from the noise kernel `gt`.
//!
//! Both live on the kernel table's uniform grid `t_k = k dt`. The propagator
//! uses a trapezoidal memory sum with one predictor-corrector pass (second
//! order in `dt`); the fluctuation matrix is accumulated incrementally in
//! O(N^2) total work instead of the naive O(N^3).

use crate::linalg::{
    flat_adjoint_into, flat_from_matrix, flat_identity, flat_mul_add, flat_scaled_add,
    matrix_from_flat, spectral_norm,
};
use crate::quadrature::KernelTable;
use crate::{C64, CMatrix};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Propagator norms above this trip the stability monitor: the exact
/// propagator is a contraction (`|u| <= 1`), so anything visibly above 1 means
/// the step size cannot resolve the dynamics.
const STABILITY_NORM_BOUND: f64 = 1.05;

/// Off-diagonal magnitudes above this couple two levels into one block.
const BLOCK_TOL: f64 = 1e-14;

/// Ratio of tail-window to previous-window propagator norm below which the
/// dynamics is still visibly decaying (grid too short rather than localized).
const DECAY_RATIO: f64 = 0.9;

#[derive(Debug, thiserror::Error)]
pub enum GreensError {
    #[error(
        "propagator norm {norm:.3e} exceeded the stability bound at t = {t:.6}; reduce the step"
    )]
    StepTooLarge { t: f64, norm: f64 },
    #[error("kernel table covers {available} steps but {needed} are required")]
    KernelTooShort { needed: usize, available: usize },
    #[error("mismatched inputs: {0}")]
    DimensionMismatch(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad trajectory file: {0}")]
    BadFile(String),
}

// ---------------------------------------------------------------------------
// Trajectory storage
// ---------------------------------------------------------------------------

/// A matrix-valued function of time on the uniform grid `t_k = k dt`,
/// stored as flat row-major `dim x dim` blocks to keep the O(N^2) inner
/// loops free of allocator traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    dt: f64,
    data: Vec<C64>,
}

impl Trajectory {
    /// All-zero trajectory with `n_steps + 1` samples.
    pub fn zeros(dim: usize, dt: f64, n_steps: usize) -> Self {
        assert!(dim > 0, "trajectory dimension must be positive");
        Trajectory { dim, dt, data: vec![C64::new(0.0, 0.0); (n_steps + 1) * dim * dim] }
    }

    /// Rebuilds a trajectory from its flat parts (inverse of `data()`).
    pub fn from_raw(dim: usize, dt: f64, data: Vec<C64>) -> Self {
        assert!(dim > 0 && !data.is_empty() && data.len() % (dim * dim) == 0);
        Trajectory { dim, dt, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps; the trajectory holds `n_steps() + 1` samples.
    pub fn n_steps(&self) -> usize {
        self.data.len() / (self.dim * self.dim) - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Sample `k` as a flat row-major block.
    pub fn step(&self, k: usize) -> &[C64] {
        let dd = self.dim * self.dim;
        &self.data[k * dd..(k + 1) * dd]
    }

    pub fn step_mut(&mut self, k: usize) -> &mut [C64] {
        let dd = self.dim * self.dim;
        &mut self.data[k * dd..(k + 1) * dd]
    }

    /// Sample `k` for a one-level system.
    pub fn scalar(&self, k: usize) -> C64 {
        debug_assert_eq!(self.dim, 1);
        self.data[k]
    }

    /// Owned matrix copy of sample `k`.
    pub fn matrix(&self, k: usize) -> CMatrix {
        matrix_from_flat(self.step(k), self.dim)
    }

    /// Spectral norm of sample `k`.
    pub fn step_norm(&self, k: usize) -> f64 {
        if self.dim == 1 {
            self.data[k].norm()
        } else {
            spectral_norm(&self.matrix(k))
        }
    }

    /// The flat backing storage (row-major blocks, sample-major order).
    pub fn data(&self) -> &[C64] {
        &self.data
    }
}

// ---------------------------------------------------------------------------
// Propagator
// ---------------------------------------------------------------------------

/// Solves `du/dt = -i e u - int_0^t g(t-s) u(s) ds`, `u(0) = I`, over the
/// full span of the kernel table.
///
/// The memory integral uses the composite trapezoid rule and each step takes
/// one explicit (Euler) prediction followed by one trapezoid correction,
/// giving global O(dt^2) accuracy. Levels that the Hamiltonian does not mix
/// are solved as independent blocks; one-level blocks take a scalar fast
/// path. The kernel acts level-diagonally (couplings proportional to the
/// identity are folded into the kernel normalization upstream).
pub fn solve_u(energy: &CMatrix, kernels: &KernelTable) -> Result<Trajectory, GreensError> {
    let dim = energy.nrows();
    if dim == 0 || energy.ncols() != dim {
        return Err(GreensError::DimensionMismatch(format!(
            "energy matrix must be square and nonempty, got {}x{}",
            energy.nrows(),
            energy.ncols()
        )));
    }
    let n = kernels.n_steps();
    let dt = kernels.dt;
    let mut out = Trajectory::zeros(dim, dt, n);
    for i in 0..dim {
        out.step_mut(0)[i * dim + i] = C64::new(1.0, 0.0);
    }

    for block in crate::linalg::coupling_blocks(energy, BLOCK_TOL) {
        if block.len() == 1 {
            let level = block[0];
            let u = solve_u_scalar(energy[(level, level)], &kernels.g, n, dt)?;
            let dd = dim * dim;
            for (k, uk) in u.iter().enumerate() {
                out.data[k * dd + level * dim + level] = *uk;
            }
        } else {
            let sub = crate::linalg::submatrix(energy, &block);
            let u = solve_u_matrix(&flat_from_matrix(&sub), block.len(), &kernels.g, n, dt)?;
            let bd = block.len();
            let dd = dim * dim;
            for k in 0..=n {
                for (a, &ia) in block.iter().enumerate() {
                    for (b, &ib) in block.iter().enumerate() {
                        out.data[k * dd + ia * dim + ib] = u[k * bd * bd + a * bd + b];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// One-level fast path: everything is a plain complex number.
fn solve_u_scalar(eps: C64, g: &[C64], n: usize, dt: f64) -> Result<Vec<C64>, GreensError> {
    let ieps = C64::new(0.0, 1.0) * eps;
    let mut u = vec![C64::new(0.0, 0.0); n + 1];
    u[0] = C64::new(1.0, 0.0);
    // Memory sum and predictor from the previous corrector stage; the
    // corrected memory differs from the corrector-stage one only in the
    // half-weighted newest sample, so each step needs a single O(k) sweep.
    let mut m_star_prev = C64::new(0.0, 0.0);
    let mut u_star_prev = C64::new(0.0, 0.0);
    for k in 0..n {
        let m_k = if k == 0 {
            C64::new(0.0, 0.0)
        } else {
            m_star_prev + 0.5 * dt * g[0] * (u[k] - u_star_prev)
        };
        let f_k = -ieps * u[k] - m_k;
        let u_star = u[k] + dt * f_k;

        // Trapezoid memory at t_{k+1} with the predicted endpoint.
        let mut conv = C64::new(0.0, 0.0);
        for (uj, gj) in u[1..=k].iter().zip(g[1..=k].iter().rev()) {
            conv += uj * gj;
        }
        let m_star = dt * (0.5 * g[k + 1] * u[0] + conv + 0.5 * g[0] * u_star);
        let f_star = -ieps * u_star - m_star;
        let next = u[k] + 0.5 * dt * (f_k + f_star);

        let norm = next.norm();
        if !norm.is_finite() || norm > STABILITY_NORM_BOUND {
            return Err(GreensError::StepTooLarge { t: (k + 1) as f64 * dt, norm });
        }
        u[k + 1] = next;
        m_star_prev = m_star;
        u_star_prev = u_star;
    }
    Ok(u)
}

/// General path for a coupled block, on flat row-major storage.
fn solve_u_matrix(
    eps: &[C64],
    dim: usize,
    g: &[C64],
    n: usize,
    dt: f64,
) -> Result<Vec<C64>, GreensError> {
    let dd = dim * dim;
    let zero = C64::new(0.0, 0.0);
    let minus_i = C64::new(0.0, -1.0);
    let mut u = vec![zero; (n + 1) * dd];
    u[..dd].copy_from_slice(&flat_identity(dim));

    let mut m_k = vec![zero; dd];
    let mut f_k = vec![zero; dd];
    let mut u_star = vec![zero; dd];
    let mut m_star = vec![zero; dd];
    let mut f_star = vec![zero; dd];
    let mut m_star_prev = vec![zero; dd];
    let mut u_star_prev = vec![zero; dd];

    for k in 0..n {
        let (head, tail) = u.split_at_mut((k + 1) * dd);
        let u_k = &head[k * dd..];

        if k == 0 {
            m_k.fill(zero);
        } else {
            for i in 0..dd {
                m_k[i] = m_star_prev[i] + 0.5 * dt * g[0] * (u_k[i] - u_star_prev[i]);
            }
        }
        f_k.fill(zero);
        flat_mul_add(&mut f_k, eps, u_k, dim, minus_i);
        flat_scaled_add(&mut f_k, &m_k, C64::new(-1.0, 0.0));
        for i in 0..dd {
            u_star[i] = u_k[i] + dt * f_k[i];
        }

        m_star.fill(zero);
        flat_scaled_add(&mut m_star, &head[..dd], 0.5 * g[k + 1]);
        for j in 1..=k {
            flat_scaled_add(&mut m_star, &head[j * dd..(j + 1) * dd], g[k + 1 - j]);
        }
        flat_scaled_add(&mut m_star, &u_star, 0.5 * g[0]);
        for z in m_star.iter_mut() {
            *z *= dt;
        }
        f_star.fill(zero);
        flat_mul_add(&mut f_star, eps, &u_star, dim, minus_i);
        flat_scaled_add(&mut f_star, &m_star, C64::new(-1.0, 0.0));

        let next = &mut tail[..dd];
        for i in 0..dd {
            next[i] = u_k[i] + 0.5 * dt * (f_k[i] + f_star[i]);
        }
        let norm = spectral_norm(&matrix_from_flat(next, dim));
        if !norm.is_finite() || norm > STABILITY_NORM_BOUND {
            return Err(GreensError::StepTooLarge { t: (k + 1) as f64 * dt, norm });
        }
        m_star_prev.copy_from_slice(&m_star);
        u_star_prev.copy_from_slice(&u_star);
    }
    Ok(u)
}

// ---------------------------------------------------------------------------
// Fluctuation matrix
// ---------------------------------------------------------------------------

/// Accumulates `v(t_k) = int_0^{t_k} int_0^{t_k} u(s1) gt(s2-s1) u(s2)† ds1 ds2`
/// for every grid time, in O(N^2) total work.
///
/// Both time integrals use the trapezoid rule, consistent with the propagator
/// discretization. Per step the row sums
/// `r_i = sum_j w_j gt(s_j - s_i) u_j†` are updated in O(1) each, and the new
/// outer sum `v_k = dt^2 sum_i w_i u_i r_i` costs O(k). Each sample is
/// Hermitized; the exact discrete sum is Hermitian, so this only removes
/// roundoff.
pub fn accumulate_v(u: &Trajectory, kernels: &KernelTable) -> Result<Trajectory, GreensError> {
    let n = u.n_steps();
    if kernels.n_steps() < n {
        return Err(GreensError::KernelTooShort { needed: n, available: kernels.n_steps() });
    }
    let dt = u.dt();
    if (kernels.dt - dt).abs() > 1e-12 * dt.abs().max(1.0) {
        return Err(GreensError::DimensionMismatch(format!(
            "kernel spacing {} does not match trajectory spacing {}",
            kernels.dt, dt
        )));
    }
    if u.dim() == 1 {
        Ok(accumulate_v_scalar(u, kernels))
    } else {
        Ok(accumulate_v_matrix(u, kernels))
    }
}

fn accumulate_v_scalar(u: &Trajectory, kernels: &KernelTable) -> Trajectory {
    let n = u.n_steps();
    let dt = u.dt();
    let dt2 = dt * dt;
    let us = u.data();
    let uc: Vec<C64> = us.iter().map(|z| z.conj()).collect();
    let gt = &kernels.g_tilde[..=n];
    let gt_conj: Vec<C64> = gt.iter().map(|z| z.conj()).collect();

    let mut v = Trajectory::zeros(1, dt, n);
    let mut r = vec![C64::new(0.0, 0.0); n + 1];
    for k in 1..=n {
        if k == 1 {
            r[0] = 0.5 * (gt[0] * uc[0] + gt[1] * uc[1]);
            r[1] = 0.5 * (gt_conj[1] * uc[0] + gt[0] * uc[1]);
        } else {
            // Node k-1 is promoted from a half to a full trapezoid weight and
            // node k enters with a half weight.
            let a = 0.5 * uc[k - 1];
            let b = 0.5 * uc[k];
            for ((ri, ga), gb) in
                r[..k].iter_mut().zip(gt[..k].iter().rev()).zip(gt[1..=k].iter().rev())
            {
                *ri += ga * a + gb * b;
            }
            // Fresh row for the new node: lags s_j - s_k are non-positive.
            let mut acc = 0.5 * gt_conj[k] * uc[0];
            for (ucj, gj) in uc[1..k].iter().zip(gt_conj[1..k].iter().rev()) {
                acc += ucj * gj;
            }
            r[k] = acc + 0.5 * gt[0] * uc[k];
        }
        let mut s = 0.5 * (us[0] * r[0] + us[k] * r[k]);
        for (ui, ri) in us[1..k].iter().zip(r[1..k].iter()) {
            s += ui * ri;
        }
        // Exactly Hermitian in exact arithmetic: a 1x1 block is real.
        v.step_mut(k)[0] = C64::new(dt2 * s.re, 0.0);
    }
    v
}

fn accumulate_v_matrix(u: &Trajectory, kernels: &KernelTable) -> Trajectory {
    let n = u.n_steps();
    let dim = u.dim();
    let dd = dim * dim;
    let dt = u.dt();
    let dt2 = C64::new(dt * dt, 0.0);
    let zero = C64::new(0.0, 0.0);

    // Precompute all adjoints u_j†.
    let mut adj = vec![zero; (n + 1) * dd];
    for k in 0..=n {
        flat_adjoint_into(&mut adj[k * dd..(k + 1) * dd], u.step(k), dim);
    }
    let ua = |k: usize| &adj[k * dd..(k + 1) * dd];

    let mut v = Trajectory::zeros(dim, dt, n);
    let mut r = vec![zero; (n + 1) * dd];
    let mut acc = vec![zero; dd];
    let mut herm = vec![zero; dd];
    for k in 1..=n {
        if k == 1 {
            for slot in 0..=1usize {
                acc.fill(zero);
                flat_scaled_add(&mut acc, ua(0), 0.5 * kernels.g_tilde_at(-(slot as i64)));
                flat_scaled_add(&mut acc, ua(1), 0.5 * kernels.g_tilde_at(1 - slot as i64));
                r[slot * dd..(slot + 1) * dd].copy_from_slice(&acc);
            }
        } else {
            for i in 0..k {
                let ga = 0.5 * kernels.g_tilde_at((k - 1 - i) as i64);
                let gb = 0.5 * kernels.g_tilde_at((k - i) as i64);
                let ri = &mut r[i * dd..(i + 1) * dd];
                flat_scaled_add(ri, &adj[(k - 1) * dd..k * dd], ga);
                flat_scaled_add(ri, &adj[k * dd..(k + 1) * dd], gb);
            }
            acc.fill(zero);
            for j in 0..=k {
                let w = if j == 0 || j == k { 0.5 } else { 1.0 };
                flat_scaled_add(&mut acc, ua(j), w * kernels.g_tilde_at(j as i64 - k as i64));
            }
            r[k * dd..(k + 1) * dd].copy_from_slice(&acc);
        }

        acc.fill(zero);
        for i in 0..=k {
            let w = if i == 0 || i == k { 0.5 } else { 1.0 };
            flat_mul_add(&mut acc, u.step(i), &r[i * dd..(i + 1) * dd], dim, C64::new(w, 0.0));
        }
        let vk = v.step_mut(k);
        for (dst, s) in vk.iter_mut().zip(acc.iter()) {
            *dst = dt2 * s;
        }
        flat_adjoint_into(&mut herm, vk, dim);
        for (dst, h) in vk.iter_mut().zip(herm.iter()) {
            *dst = 0.5 * (*dst + h);
        }
    }
    v
}

// ---------------------------------------------------------------------------
// Decay classification
// ---------------------------------------------------------------------------

/// What the propagator tail says about the long-time behaviour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayStatus {
    /// Tail-averaged propagator norm fell below the threshold: the dynamics
    /// has relaxed and tail averages are meaningful.
    SteadyReached { tail_norm: f64 },
    /// Still above threshold but clearly decaying: extend the grid.
    GridTooShort { tail_norm: f64, previous_norm: f64 },
    /// Above threshold and no longer decaying: a residue of the propagator
    /// survives, as for an undamped level or a localized (bound) mode.
    LocalizedModeSuspected { tail_norm: f64 },
}

/// Classifies the propagator tail by comparing the average norm over the
/// last tenth of the grid against the threshold and against the previous
/// tenth.
pub fn check_decay(u: &Trajectory, tol: f64) -> DecayStatus {
    let n = u.n_steps();
    let i1 = (9 * n) / 10;
    let i0 = (8 * n) / 10;
    let mean = |lo: usize, hi: usize| -> f64 {
        let (lo, hi) = (lo.min(hi), hi.max(lo + 1).min(n + 1));
        (lo..hi).map(|k| u.step_norm(k)).sum::<f64>() / (hi - lo) as f64
    };
    let tail = mean(i1, n + 1);
    let prev = if i0 < i1 { mean(i0, i1) } else { tail };
    if tail <= tol {
        DecayStatus::SteadyReached { tail_norm: tail }
    } else if tail <= DECAY_RATIO * prev {
        DecayStatus::GridTooShort { tail_norm: tail, previous_norm: prev }
    } else {
        DecayStatus::LocalizedModeSuspected { tail_norm: tail }
    }
}

// ---------------------------------------------------------------------------
// Binary trajectory files
// ---------------------------------------------------------------------------

const TRAJ_MAGIC: &[u8; 8] = b"TFTRAJ01";

/// Writes a trajectory as a little-endian binary file:
/// an 8-byte magic, `dim` and the sample count as u64, `dt` as f64, then
/// `re, im` f64 pairs in sample-major row-major order.
pub fn write_trajectory<P: AsRef<Path>>(path: P, traj: &Trajectory) -> Result<(), GreensError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(TRAJ_MAGIC)?;
    w.write_all(&(traj.dim() as u64).to_le_bytes())?;
    w.write_all(&((traj.n_steps() + 1) as u64).to_le_bytes())?;
    w.write_all(&traj.dt().to_le_bytes())?;
    for z in traj.data() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory written by [`write_trajectory`].
pub fn read_trajectory<P: AsRef<Path>>(path: P) -> Result<Trajectory, GreensError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != TRAJ_MAGIC {
        return Err(GreensError::BadFile("unrecognized magic".into()));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let dim = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let n_samples = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let dt = f64::from_le_bytes(b8);
    if dim == 0 || dim > 1024 || n_samples == 0 || !dt.is_finite() || dt <= 0.0 {
        return Err(GreensError::BadFile(format!(
            "implausible header: dim = {dim}, samples = {n_samples}, dt = {dt}"
        )));
    }
    let count = n_samples
        .checked_mul(dim * dim)
        .ok_or_else(|| GreensError::BadFile("sample count overflow".into()))?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut b8)?;
        let re = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let im = f64::from_le_bytes(b8);
        data.push(C64::new(re, im));
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(GreensError::BadFile("trailing bytes".into()));
    }
    Ok(Trajectory::from_raw(dim, dt, data))
}
