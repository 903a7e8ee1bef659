//! Bethe-ansatz local density approximation for the 1D Hubbard model.
//!
//! The homogeneous energy per site is parametrized as
//! `e(n, U) = -(2 t beta / pi) sin(pi n / beta)` for `n <= 1`, continued to
//! `n > 1` by particle-hole symmetry `e(n) = e(2 - n) + U (n - 1)`.
//! `beta(U)` is fixed by matching the exact half-filled energy:
//!
//! `-(2 beta / pi) sin(pi / beta) = -4 int_0^inf J0(x) J1(x) / (x (1 + exp(U x / 2))) dx`
//!
//! The exchange-correlation part is measured against the Hartree energy
//! `(U/4) n^2`: `e_xc(n, U) = e(n, U) - e(n, 0) - U n^2 / 4`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Upper limit of the numerical part of the Bessel integral.
pub const DEFAULT_X_MAX: f64 = 200.0;
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

const DENSITY_SLACK: f64 = 1e-12;

/// Adaptive Gauss-Kronrod (7, 15) quadrature.
pub mod quadrature {
    const XGK: [f64; 8] = [
        0.991_455_371_120_812_6,
        0.949_107_912_342_758_5,
        0.864_864_423_359_769_1,
        0.741_531_185_599_394_4,
        0.586_087_235_467_691_1,
        0.405_845_151_377_397_2,
        0.207_784_955_007_898_5,
        0.0,
    ];
    const WGK: [f64; 8] = [
        0.022_935_322_010_529_22,
        0.063_092_092_629_978_55,
        0.104_790_010_322_250_2,
        0.140_653_259_715_525_9,
        0.169_004_726_639_267_9,
        0.190_350_578_064_785_4,
        0.204_432_940_075_298_9,
        0.209_482_141_084_727_8,
    ];
    const WG: [f64; 4] = [
        0.129_484_966_168_869_7,
        0.279_705_391_489_276_7,
        0.381_830_050_505_118_9,
        0.417_959_183_673_469_4,
    ];

    /// One 15-point Kronrod estimate and its difference from the embedded Gauss rule.
    pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut kron = fc * WGK[7];
        let mut gauss = fc * WG[3];
        for j in 0..7 {
            let dx = h * XGK[j];
            let s = f(c - dx) + f(c + dx);
            kron += WGK[j] * s;
            if j % 2 == 1 {
                gauss += WG[j / 2] * s;
            }
        }
        (kron * h, ((kron - gauss) * h).abs())
    }

    /// Integral over `[a, b]` with absolute error estimate below `tol`, or the
    /// best estimate and its error once `max_depth` bisections are exhausted.
    pub fn adaptive<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        tol: f64,
        max_depth: u32,
    ) -> (f64, f64, bool) {
        let (v, e) = gk15(f, a, b);
        if e <= tol || max_depth == 0 {
            return (v, e, e <= tol);
        }
        let m = 0.5 * (a + b);
        let (l, el, okl) = adaptive(f, a, m, 0.5 * tol, max_depth - 1);
        let (r, er, okr) = adaptive(f, m, b, 0.5 * tol, max_depth - 1);
        (l + r, el + er, okl && okr)
    }
}

/// `1 / (1 + exp(y))` without overflow.
fn fermi(y: f64) -> f64 {
    if y > 0.0 {
        let e = (-y).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + y.exp())
    }
}

/// Settings for [`bethe_integral_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    pub x_max: f64,
    pub tol: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            x_max: DEFAULT_X_MAX,
            tol: DEFAULT_QUAD_TOL,
        }
    }
}

/// `I(U) = -4 int_0^inf J0(x) J1(x) / (x (1 + exp(U x / 2))) dx`.
pub fn bethe_integral(u: f64) -> Result<f64> {
    bethe_integral_with(u, QuadratureSettings::default())
}

pub fn bethe_integral_with(u: f64, q: QuadratureSettings) -> Result<f64> {
    if !(u >= 0.0) || !u.is_finite() {
        return Err(Error::InvalidInput(format!("U must be finite and >= 0, got {u}")));
    }
    let occupation = |x: f64| fermi(0.5 * u * x);
    let integrand = |x: f64| {
        let bessel = if x < 1e-6 {
            0.5 - x * x * 3.0 / 16.0
        } else {
            libm::j0(x) * libm::j1(x) / x
        };
        bessel * occupation(x)
    };

    // Beyond 80 / (U/2) the occupation factor is below e^-80.
    let cutoff = if u > 0.0 { (160.0 / u).min(q.x_max) } else { q.x_max };
    let needs_tail = cutoff >= q.x_max;

    let piece = 0.5 * PI;
    let pieces = (cutoff / piece).ceil().max(1.0) as usize;
    let piece_tol = 0.1 * q.tol / pieces as f64;
    let mut sum = 0.0;
    let mut err = 0.0;
    for k in 0..pieces {
        let a = k as f64 * piece;
        let b = ((k + 1) as f64 * piece).min(cutoff);
        if b <= a {
            break;
        }
        let (v, e, ok) = quadrature::adaptive(&integrand, a, b, piece_tol, 40);
        sum += v;
        err += e;
        if !ok {
            return Err(Error::Numeric(format!(
                "Bessel quadrature did not converge on [{a}, {b}] (estimate {:.12e}, error {e:.1e})",
                -4.0 * sum
            )));
        }
    }
    if needs_tail {
        sum += asymptotic_tail(u, cutoff, q.tol);
    }
    if err > q.tol {
        return Err(Error::Numeric(format!(
            "Bessel quadrature error {err:.1e} above tolerance (estimate {:.12e})",
            -4.0 * sum
        )));
    }
    Ok(-4.0 * sum)
}

/// `int_X^inf J0 J1 / x * f(x) dx` from the large-argument expansion
/// `J0 J1 = (1/(pi x)) [-(1 + 3/(32x^2)) cos 2x + 1/(2x) - 3/(16x^3) + sin 2x / (4x)] + O(x^-4)`.
/// Oscillatory terms are integrated by parts, the smooth ones by quadrature.
fn asymptotic_tail(u: f64, x: f64, tol: f64) -> f64 {
    let occ = |y: f64| fermi(0.5 * u * y);
    let cos_coef = |y: f64| -occ(y) / PI * (1.0 / (y * y) + 3.0 / (32.0 * y.powi(4)));
    let sin_coef = |y: f64| occ(y) / PI / (4.0 * y.powi(3));
    let smooth = |y: f64| occ(y) / PI * (0.5 / y.powi(3) - 3.0 / (16.0 * y.powi(5)));

    let h = 1e-2;
    let d1 = |g: &dyn Fn(f64) -> f64| (g(x + h) - g(x - h)) / (2.0 * h);
    let d2 = |g: &dyn Fn(f64) -> f64| (g(x + h) - 2.0 * g(x) + g(x - h)) / (h * h);
    let (s2, c2) = (2.0 * x).sin_cos();

    // int_X^inf c(y) cos 2y dy = -c sin2X/2 - c' cos2X/4 + c'' sin2X/8 - ...
    let cos_part = -cos_coef(x) * s2 / 2.0 - d1(&cos_coef) * c2 / 4.0 + d2(&cos_coef) * s2 / 8.0;
    // int_X^inf s(y) sin 2y dy = s cos2X/2 - s' sin2X/4 - s'' cos2X/8 + ...
    let sin_part = sin_coef(x) * c2 / 2.0 - d1(&sin_coef) * s2 / 4.0 - d2(&sin_coef) * c2 / 8.0;

    // y = X / s maps [X, inf) onto (0, 1].
    let mapped = |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            smooth(x / s) * x / (s * s)
        }
    };
    let (smooth_part, _, _) = quadrature::adaptive(&mapped, 0.0, 1.0, 0.01 * tol, 30);
    cos_part + sin_part + smooth_part
}

/// Left-hand side of the beta equation, `-(2 beta / pi) sin(pi / beta)`.
fn beta_lhs(beta: f64) -> f64 {
    -(2.0 * beta / PI) * (PI / beta).sin()
}

/// Solves `-(2 beta / pi) sin(pi / beta) = I(U)` on `[1, 2]` by bisection.
pub fn beta(u: f64) -> Result<f64> {
    let target = bethe_integral(u)?;
    solve_beta(target)
}

fn solve_beta(target: f64) -> Result<f64> {
    let floor = beta_lhs(2.0);
    if target <= floor {
        if target < floor - 1e-9 {
            return Err(Error::Numeric(format!(
                "beta equation not bracketed: I = {target} below {floor}"
            )));
        }
        return Ok(2.0);
    }
    if target >= 0.0 {
        return Err(Error::Numeric(format!(
            "beta equation not bracketed: I = {target} is not negative"
        )));
    }
    // lhs decreases from 0 at beta = 1 to -4/pi at beta = 2
    let (mut lo, mut hi) = (1.0f64, 2.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_lhs(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// BALDA functional at fixed `U` and `t`, with `beta(U/t)` solved once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Balda {
    u: f64,
    t: f64,
    beta: f64,
    quadrature: QuadratureSettings,
}

impl Balda {
    pub fn new(u: f64, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::InvalidInput(format!("t must be positive, got {t}")));
        }
        let quadrature = QuadratureSettings::default();
        let beta = solve_beta(bethe_integral_with(u / t, quadrature)?)?;
        Ok(Self {
            u,
            t,
            beta,
            quadrature,
        })
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Residual of the defining equation at the stored beta.
    pub fn beta_residual(&self) -> Result<f64> {
        let target = bethe_integral_with(self.u / self.t, self.quadrature)?;
        Ok((beta_lhs(self.beta) - target).abs())
    }

    fn check(n: f64) -> Result<f64> {
        if !(-DENSITY_SLACK..=2.0 + DENSITY_SLACK).contains(&n) {
            return Err(Error::InvalidInput(format!("site density {n} outside [0, 2]")));
        }
        Ok(n.clamp(0.0, 2.0))
    }

    fn sine_energy(&self, n: f64, beta: f64) -> f64 {
        -(2.0 * self.t * beta / PI) * (PI * n / beta).sin()
    }

    /// Homogeneous energy per site.
    pub fn energy_per_site(&self, n: f64) -> Result<f64> {
        let n = Self::check(n)?;
        Ok(if n <= 1.0 {
            self.sine_energy(n, self.beta)
        } else {
            self.sine_energy(2.0 - n, self.beta) + self.u * (n - 1.0)
        })
    }

    /// Non-interacting energy per site, `e(n, 0)`.
    fn kinetic_energy(&self, n: f64) -> f64 {
        let m = if n <= 1.0 { n } else { 2.0 - n };
        self.sine_energy(m, 2.0)
    }

    /// `e_xc(n) = e(n, U) - e(n, 0) - U n^2 / 4`.
    pub fn exc(&self, n: f64) -> Result<f64> {
        let n = Self::check(n)?;
        if self.u == 0.0 {
            return Ok(0.0);
        }
        Ok(self.energy_per_site(n)? - self.kinetic_energy(n) - 0.25 * self.u * n * n)
    }

    fn vxc_below(&self, n: f64) -> f64 {
        let t2 = 2.0 * self.t;
        -t2 * (PI * n / self.beta).cos() + t2 * (PI * n / 2.0).cos() - 0.5 * self.u * n
    }

    fn vxc_above(&self, n: f64) -> f64 {
        let t2 = 2.0 * self.t;
        let h = 2.0 - n;
        t2 * (PI * h / self.beta).cos() + self.u - t2 * (PI * h / 2.0).cos() - 0.5 * self.u * n
    }

    /// `d e_xc / dn`; at `n = 1` the mean of the one-sided limits.
    pub fn vxc(&self, n: f64) -> Result<f64> {
        let n = Self::check(n)?;
        if self.u == 0.0 {
            return Ok(0.0);
        }
        Ok(if n < 1.0 {
            self.vxc_below(n)
        } else if n > 1.0 {
            self.vxc_above(n)
        } else {
            0.5 * (self.vxc_below(1.0) + self.vxc_above(1.0))
        })
    }

    /// `(lim n->1-, lim n->1+)` of the xc potential.
    pub fn vxc_limits_at_half_filling(&self) -> (f64, f64) {
        (self.vxc_below(1.0), self.vxc_above(1.0))
    }
}
