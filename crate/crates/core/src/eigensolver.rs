//! Ground states of real symmetric operators.
//!
//! Small operators are diagonalized densely. Larger ones use Lanczos with
//! full reorthogonalization of the Krylov basis; when the basis would not
//! fit in the Krylov memory budget the iteration is restarted from the
//! current Ritz vector, and below a minimal block size a two-pass Lanczos
//! (recurrence only, then regeneration of the basis to form the Ritz
//! vector) is used instead.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{dot, random_amplitudes};

/// Largest matrix accepted by [`dense_spectrum`].
pub const DENSE_MAX: usize = 2000;
const REFINE_PASSES: usize = 3;
const REFINE_TOL: f64 = 1e-12;

/// Smallest Krylov block worth running with full reorthogonalization.
const MIN_BLOCK: usize = 24;

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`; both slices have length `dim()`.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LanczosMode {
    /// Dense below `dense_threshold`, otherwise chosen by memory.
    Auto,
    FullReorthogonalization,
    TwoPass,
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Residual tolerance, relative to `max(1, |E|)`.
    pub tol: f64,
    /// Cap on operator applications.
    pub max_iter: usize,
    pub dense_threshold: usize,
    /// Bytes available for stored Krylov vectors.
    pub krylov_memory: usize,
    pub mode: LanczosMode,
    /// Look for a second eigenvalue near the ground state.
    pub probe_degeneracy: bool,
    pub degeneracy_tol: f64,
    /// Seed of the fallback random start vector.
    pub seed: u64,
    /// Start vector; the normalized all-ones vector when `None`.
    pub start: Option<Vec<f64>>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            max_iter: 2000,
            dense_threshold: 256,
            krylov_memory: 512 << 20,
            mode: LanczosMode::Auto,
            probe_degeneracy: true,
            degeneracy_tol: 1e-10,
            seed: 0x5eed,
            start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub energy: f64,
    pub vector: Vec<f64>,
    /// `||H x - E x||` of the returned vector.
    pub residual_norm: f64,
    /// Operator applications (Lanczos) or matrix size (dense).
    pub iterations: usize,
    pub dense: bool,
    /// Set when a second eigenvalue lies within `degeneracy_tol`.
    pub degeneracy_gap: Option<f64>,
    /// `<x0|H|x0>` of the start vector.
    pub start_energy: f64,
    /// Lowest Ritz value after every Lanczos step.
    pub ritz_history: Vec<f64>,
}

/// All eigenpairs of a dense symmetric matrix, ascending.
#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: DMatrix<f64>,
}

pub fn dense_spectrum(matrix: &DMatrix<f64>) -> Result<DenseSpectrum> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::InvalidInput(format!(
            "matrix is {}x{}, not square",
            n,
            matrix.ncols()
        )));
    }
    if n > DENSE_MAX {
        return Err(Error::Capacity(format!(
            "dense diagonalization limited to {DENSE_MAX}, got {n}"
        )));
    }
    if n == 0 {
        return Ok(DenseSpectrum {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = matrix.clone().symmetric_eigen();
    let (mut values, mut basis) = (eig.eigenvalues, eig.eigenvectors);
    // The QR sweep can return eigenvectors with residuals near 1e-6 while the
    // eigenvalues are fine. Re-diagonalizing V^T M V, which is nearly diagonal,
    // restores them to rounding level.
    let scale = matrix.amax().max(1.0);
    for _ in 0..REFINE_PASSES {
        let mv = matrix * &basis;
        let worst = (0..n)
            .map(|k| (mv.column(k) - basis.column(k) * values[k]).norm())
            .fold(0.0, f64::max);
        if worst <= REFINE_TOL * scale {
            break;
        }
        let projected = basis.transpose() * mv;
        let projected = (&projected + projected.transpose()) * 0.5;
        let inner = projected.symmetric_eigen();
        values = inner.eigenvalues;
        basis = &basis * inner.eigenvectors;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let values = order.iter().map(|&k| values[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = basis.column(src).clone_owned();
        fix_sign(col.as_mut_slice());
        vectors.set_column(dst, &col);
    }
    Ok(DenseSpectrum { values, vectors })
}

/// Deterministic sign convention: non-negative component sum, or a
/// positive leading component when the sum vanishes.
fn fix_sign(x: &mut [f64]) {
    let s: f64 = x.iter().sum();
    let flip = if s.abs() > 1e-12 {
        s < 0.0
    } else {
        x.iter().find(|v| v.abs() > 1e-12).is_some_and(|&v| v < 0.0)
    };
    if flip {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    if y.len() < 1 << 16 {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += a * xi;
        }
        return;
    }
    y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, xi)| *yi += a * xi);
}

fn residual(op: &dyn LinearOperator, x: &[f64]) -> (f64, f64) {
    let mut hx = vec![0.0; x.len()];
    op.apply_into(x, &mut hx);
    let e = dot(x, &hx);
    axpy(-e, x, &mut hx);
    (e, norm(&hx))
}

/// Lowest eigenpair of `op`.
pub fn ground_state(op: &dyn LinearOperator, opts: &EigenOptions) -> Result<EigenResult> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::InvalidInput("empty operator".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let use_dense = match opts.mode {
        LanczosMode::Auto => n <= opts.dense_threshold.min(DENSE_MAX),
        _ => false,
    };
    if use_dense {
        return dense_ground_state(op, opts);
    }

    let start = match &opts.start {
        Some(s) if s.len() == n && norm(s) > 0.0 => s.clone(),
        Some(s) if s.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: s.len(),
            })
        }
        _ => vec![1.0; n],
    };
    let mut result = lanczos(op, start, opts, &[])?;

    if opts.probe_degeneracy && n > 1 {
        let mut probe_opts = opts.clone();
        probe_opts.seed = opts.seed.wrapping_add(1);
        let mut rng = ChaCha8Rng::seed_from_u64(probe_opts.seed);
        let mut probe = lanczos(op, random_amplitudes(n, &mut rng), &probe_opts, &[&result.vector])?;
        let scale = result.energy.abs().max(1.0);
        if probe.energy < result.energy - opts.degeneracy_tol * scale {
            // The start vector missed the ground state; restart from a seeded random vector.
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let fallback = lanczos(op, random_amplitudes(n, &mut rng), opts, &[])?;
            probe = lanczos(op, random_amplitudes(n, &mut rng), &probe_opts, &[&fallback.vector])?;
            result = fallback;
        }
        let gap = probe.energy - result.energy;
        if gap.abs() < opts.degeneracy_tol * scale {
            result.degeneracy_gap = Some(gap);
        }
    }
    Ok(result)
}

fn dense_ground_state(op: &dyn LinearOperator, opts: &EigenOptions) -> Result<EigenResult> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply_into(&e, &mut col);
        e[j] = 0.0;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    let spec = dense_spectrum(&m)?;
    let vector: Vec<f64> = spec.vectors.column(0).iter().copied().collect();
    let (_, res) = residual(op, &vector);
    let energy = spec.values[0];
    let degeneracy_gap = if n > 1 {
        let gap = spec.values[1] - energy;
        (gap < opts.degeneracy_tol * energy.abs().max(1.0)).then_some(gap)
    } else {
        None
    };
    let ones = 1.0 / (n as f64).sqrt();
    let start_energy = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)]).sum::<f64>())
        .sum::<f64>()
        * ones
        * ones;
    Ok(EigenResult {
        energy,
        vector,
        residual_norm: res,
        iterations: n,
        dense: true,
        degeneracy_gap,
        start_energy,
        ritz_history: Vec::new(),
    })
}

fn orthogonalize(w: &mut [f64], against: &[&[f64]]) {
    for q in against {
        let c = dot(q, w);
        axpy(-c, q, w);
    }
}

/// Lanczos from `start`, keeping every vector orthogonal to `locked`.
fn lanczos(
    op: &dyn LinearOperator,
    mut start: Vec<f64>,
    opts: &EigenOptions,
    locked: &[&[f64]],
) -> Result<EigenResult> {
    let n = op.dim();
    for _ in 0..2 {
        orthogonalize(&mut start, locked);
    }
    let nrm = norm(&start);
    if !(nrm > 0.0) || !nrm.is_finite() {
        return Err(Error::Numeric("start vector vanishes after deflation".into()));
    }
    start.iter_mut().for_each(|v| *v /= nrm);
    let block_cap = (opts.krylov_memory / (8 * n).max(1)).saturating_sub(locked.len() + 2);
    let two_pass = match opts.mode {
        LanczosMode::TwoPass => true,
        LanczosMode::FullReorthogonalization => false,
        LanczosMode::Auto => block_cap < MIN_BLOCK.min(n),
    };
    if two_pass {
        if !locked.is_empty() {
            return Err(Error::Capacity(
                "deflated Lanczos needs full reorthogonalization storage".into(),
            ));
        }
        lanczos_two_pass(op, start, opts)
    } else {
        let block = block_cap.max(MIN_BLOCK.min(n)).min(opts.max_iter).min(n).max(1);
        lanczos_restarted(op, start, opts, locked, block)
    }
}

fn lanczos_restarted(
    op: &dyn LinearOperator,
    start: Vec<f64>,
    opts: &EigenOptions,
    locked: &[&[f64]],
    block: usize,
) -> Result<EigenResult> {
    let n = op.dim();
    let mut w = vec![0.0; n];
    op.apply_into(&start, &mut w);
    let start_energy = dot(&start, &w);

    let mut history = Vec::new();
    let mut applications = 0usize;
    let mut q0 = start;
    let mut best_res = f64::INFINITY;
    loop {
        let mut basis: Vec<Vec<f64>> = vec![q0];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut finished = false;
        let mut ritz = (0.0, Vec::new());
        for j in 0..block {
            op.apply_into(&basis[j], &mut w);
            applications += 1;
            let a = dot(&basis[j], &w);
            axpy(-a, &basis[j], &mut w);
            if j > 0 {
                axpy(-beta[j - 1], &basis[j - 1], &mut w);
            }
            for _ in 0..2 {
                orthogonalize(&mut w, locked);
                for q in &basis {
                    let c = dot(q, &w);
                    axpy(-c, q, &mut w);
                }
            }
            let b = norm(&w);
            alpha.push(a);
            let (theta, y) = tridiagonal_lowest(&alpha, &beta);
            history.push(theta);
            let est = b * y.last().copied().unwrap_or(0.0).abs();
            ritz = (theta, y);
            let scale = theta.abs().max(1.0);
            let breakdown = b <= 1e-14 * scale;
            if est <= opts.tol * scale || breakdown || basis.len() == n {
                finished = true;
                break;
            }
            if applications >= opts.max_iter || j + 1 == block {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|v| v / b).collect());
        }
        let (_, y) = ritz;
        let mut x = vec![0.0; n];
        for (c, q) in y.iter().zip(&basis) {
            axpy(*c, q, &mut x);
        }
        drop(basis);
        if !locked.is_empty() {
            orthogonalize(&mut x, locked);
        }
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let (energy, res) = residual(op, &x);
        applications += 1;
        best_res = best_res.min(res);
        let scale = energy.abs().max(1.0);
        if finished || res <= opts.tol * scale {
            fix_sign(&mut x);
            return Ok(EigenResult {
                energy,
                vector: x,
                residual_norm: res,
                iterations: applications,
                dense: false,
                degeneracy_gap: None,
                start_energy,
                ritz_history: history,
            });
        }
        if applications >= opts.max_iter {
            return Err(Error::Convergence {
                what: "Lanczos",
                iterations: applications,
                best: best_res,
            });
        }
        q0 = x;
    }
}

/// One recurrence pass without storing the basis. Calls `visit(j, q_j)`
/// for every Lanczos vector and returns the tridiagonal coefficients.
fn lanczos_pass(
    op: &dyn LinearOperator,
    start: &[f64],
    steps: usize,
    tol: f64,
    mut visit: impl FnMut(usize, &[f64]),
    history: Option<&mut Vec<f64>>,
) -> (Vec<f64>, Vec<f64>, bool) {
    let n = op.dim();
    let mut hist = history;
    let mut q_prev = vec![0.0; n];
    let mut q = start.to_vec();
    let mut w = vec![0.0; n];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut best_est = f64::INFINITY;
    let mut best_step = 0;
    for j in 0..steps {
        visit(j, &q);
        op.apply_into(&q, &mut w);
        if j > 0 {
            axpy(-beta[j - 1], &q_prev, &mut w);
        }
        let a = dot(&q, &w);
        axpy(-a, &q, &mut w);
        let b = norm(&w);
        alpha.push(a);
        let (theta, y) = tridiagonal_lowest(&alpha, &beta);
        if let Some(h) = hist.as_deref_mut() {
            h.push(theta);
        }
        let scale = theta.abs().max(1.0);
        let est = b * y.last().copied().unwrap_or(0.0).abs();
        if est < best_est {
            best_est = est;
            best_step = j;
        }
        if est <= tol * scale || b <= 1e-14 * scale {
            converged = true;
            break;
        }
        // Without reorthogonalization the estimate bottoms out and then climbs
        // as a spurious copy of the converged value forms; stop at the bottom.
        if best_est < GHOST_WATCH * scale && est > 10.0 * best_est {
            break;
        }
        if j + 1 == steps {
            break;
        }
        beta.push(b);
        std::mem::swap(&mut q_prev, &mut q);
        for (qi, wi) in q.iter_mut().zip(&w) {
            *qi = wi / b;
        }
    }
    if !converged {
        alpha.truncate(best_step + 1);
        beta.truncate(best_step);
    }
    (alpha, beta, converged)
}

const TWO_PASS_MAX_STEPS: usize = 500;
/// Relative Ritz estimate below which a rising estimate signals a ghost.
const GHOST_WATCH: f64 = 1e-6;

fn lanczos_two_pass(
    op: &dyn LinearOperator,
    start: Vec<f64>,
    opts: &EigenOptions,
) -> Result<EigenResult> {
    let n = op.dim();
    let mut w = vec![0.0; n];
    op.apply_into(&start, &mut w);
    let start_energy = dot(&start, &w);
    drop(w);

    let mut history = Vec::new();
    let mut applications = 1usize;
    let mut best_res = f64::INFINITY;
    let mut x0 = start;
    while applications < opts.max_iter {
        let budget = ((opts.max_iter - applications) / 2).min(TWO_PASS_MAX_STEPS);
        if budget == 0 {
            break;
        }
        let (alpha, beta, _) = lanczos_pass(op, &x0, budget, opts.tol, |_, _| {}, Some(&mut history));
        let steps = alpha.len();
        applications += steps;
        let (_, y) = tridiagonal_lowest(&alpha, &beta);
        let mut x = vec![0.0; n];
        lanczos_pass(
            op,
            &x0,
            steps,
            f64::NEG_INFINITY,
            |j, q| axpy(y[j], q, &mut x),
            None,
        );
        applications += steps;
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let (energy, res) = residual(op, &x);
        applications += 1;
        let stalled = res > 0.5 * best_res;
        best_res = best_res.min(res);
        if res <= opts.tol * energy.abs().max(1.0) {
            fix_sign(&mut x);
            return Ok(EigenResult {
                energy,
                vector: x,
                residual_norm: res,
                iterations: applications,
                dense: false,
                degeneracy_gap: None,
                start_energy,
                ritz_history: history,
            });
        }
        if stalled {
            // At the rounding floor; more cycles will not help.
            break;
        }
        x0 = x;
    }
    Err(Error::Convergence {
        what: "two-pass Lanczos",
        iterations: applications,
        best: best_res,
    })
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x`.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for (i, &a) in alpha.iter().enumerate() {
        let off = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
        q = a - x - if i == 0 { 0.0 } else { off / q };
        if q == 0.0 {
            q = -f64::EPSILON * (a.abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `k`-th smallest eigenvalue (0-based) of a symmetric tridiagonal matrix by bisection.
pub fn tridiagonal_eigenvalue(alpha: &[f64], beta: &[f64], k: usize) -> f64 {
    let m = alpha.len();
    assert!(k < m && beta.len() + 1 >= m);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 }
            + if i + 1 < m { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    let pad = (hi - lo).abs() * 1e-12 + f64::MIN_POSITIVE;
    lo -= pad;
    hi += pad;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alpha, beta, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves the tridiagonal system `(T - shift) z = rhs` with partial pivoting.
fn tridiagonal_solve(alpha: &[f64], beta: &[f64], shift: f64, rhs: &[f64]) -> Vec<f64> {
    let m = alpha.len();
    let tiny = f64::EPSILON
        * alpha
            .iter()
            .chain(beta.iter())
            .fold(1.0f64, |acc, v| acc.max(v.abs()));
    // Row i holds (diag, sup1, sup2) after elimination.
    let mut d: Vec<f64> = alpha.iter().map(|a| a - shift).collect();
    let mut u1: Vec<f64> = (0..m).map(|i| if i + 1 < m { beta[i] } else { 0.0 }).collect();
    let mut u2 = vec![0.0; m];
    let mut l: Vec<f64> = (0..m).map(|i| if i + 1 < m { beta[i] } else { 0.0 }).collect();
    let mut b = rhs.to_vec();
    for i in 0..m.saturating_sub(1) {
        // candidate rows i (d[i], u1[i], u2[i]) and i+1 (l[i], d[i+1], u1[i+1])
        if l[i].abs() > d[i].abs() {
            let (r0, r1, r2) = (d[i], u1[i], u2[i]);
            d[i] = l[i];
            u1[i] = d[i + 1];
            u2[i] = u1[i + 1];
            l[i] = r0;
            d[i + 1] = r1;
            u1[i + 1] = r2;
            b.swap(i, i + 1);
        }
        if d[i].abs() < tiny {
            d[i] = tiny;
        }
        let f = l[i] / d[i];
        d[i + 1] -= f * u1[i];
        u1[i + 1] -= f * u2[i];
        b[i + 1] -= f * b[i];
    }
    if d[m - 1].abs() < tiny {
        d[m - 1] = tiny;
    }
    let mut z = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = b[i];
        if i + 1 < m {
            s -= u1[i] * z[i + 1];
        }
        if i + 2 < m {
            s -= u2[i] * z[i + 2];
        }
        z[i] = s / d[i];
    }
    z
}

/// Lowest eigenvalue and unit eigenvector of a symmetric tridiagonal matrix.
pub fn tridiagonal_lowest(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let m = alpha.len();
    if m == 1 {
        return (alpha[0], vec![1.0]);
    }
    let theta = tridiagonal_eigenvalue(alpha, beta, 0);
    let mut y: Vec<f64> = (0..m).map(|i| 1.0 + 0.01 * (i as f64).sin()).collect();
    for _ in 0..3 {
        y = tridiagonal_solve(alpha, beta, theta, &y);
        let ny = norm(&y);
        y.iter_mut().for_each(|v| *v /= ny);
    }
    if y[0] < 0.0 {
        y.iter_mut().for_each(|v| *v = -*v);
    }
    (theta, y)
}
