//! The scalar fixed-point system coupling the state-evolution variance τ² and
//! the ridge calibration γ, the limit objective f(a), its derivative, and the
//! minimizer a*.
//!
//! Solver layout: an outer bisection on γ over the proven bracket
//! [ρ, ρ + 1/δ], and for each γ an inner Newton iteration on τ² (the residual
//! is convex in τ² with an explicit derivative), safeguarded by bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{normal_pdf, trunc_moments};

/// Substitute for ρ = 0: all outputs are continuous in ρ and the system is
/// only defined for ρ > 0.
pub const RHO_MIN: f64 = 1e-8;

/// Residual target for both fixed-point equations.
pub const FP_TOL: f64 = 1e-12;

const OUTER_CAP: usize = 200;
const NEWTON_CAP: usize = 100;

/// Ambient system parameters: user-to-antenna ratio δ and noise variance σ²,
/// plus finite sizes for simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// K/N ratio δ.
    pub delta: f64,
    /// Channel noise variance σ².
    pub sigma2: f64,
    /// Antennas (simulation only).
    pub n: usize,
    /// Users (simulation only).
    pub k: usize,
}

impl SystemConfig {
    /// Asymptotic-only configuration; finite sizes default to a consistent
    /// reference pair.
    pub fn asymptotic(delta: f64, sigma2: f64) -> Result<Self> {
        Self::with_antennas(delta, sigma2, 1024)
    }

    /// Finite-size configuration with K = round(δN).
    pub fn with_antennas(delta: f64, sigma2: f64, n: usize) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        if !(sigma2 >= 0.0) {
            return Err(Error::InvalidParameter(format!("sigma2 must be >= 0, got {sigma2}")));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        let k = (delta * n as f64).round().max(1.0) as usize;
        Ok(SystemConfig { delta, sigma2, n, k })
    }

    /// |K/N − δ| ≤ 1/N, required of finite-size runs.
    pub fn validate_sizes(&self) -> Result<()> {
        let ratio = self.k as f64 / self.n as f64;
        if (ratio - self.delta).abs() > 1.0 / self.n as f64 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "K/N = {ratio} is not within 1/N of delta = {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Regularization pair (ρ, λ) of the relaxed precoding problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegParams {
    pub rho: f64,
    pub lambda: f64,
}

impl RegParams {
    pub fn new(rho: f64, lambda: f64) -> Result<Self> {
        if !(rho >= 0.0) {
            return Err(Error::InvalidParameter(format!("rho must be >= 0, got {rho}")));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(RegParams { rho, lambda })
    }

    /// ρ with the ρ = 0 substitution applied.
    #[inline]
    pub fn rho_eff(&self) -> f64 {
        self.rho.max(RHO_MIN)
    }
}

/// Solution of the two fixed-point equations at clamp level `a`, with the
/// cached edge statistics u and v.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution {
    pub a: f64,
    pub tau2: f64,
    pub gamma: f64,
    pub u: f64,
    pub v: f64,
}

impl FixedPointSolution {
    #[inline]
    pub fn tau(&self) -> f64 {
        self.tau2.sqrt()
    }
}

/// Residual of the variance equation: τ² − 1 − E[η_a²(τZ; γ)]/δ.
pub fn residual_tau2(tau2: f64, gamma: f64, a: f64, delta: f64) -> f64 {
    let m = trunc_moments(tau2, gamma, a);
    tau2 - 1.0 - m.second_moment / delta
}

/// Residual of the calibration equation: ρ − γ(1 − u/(δ(γ+1))).
pub fn residual_gamma(tau2: f64, gamma: f64, a: f64, delta: f64, rho: f64) -> f64 {
    let m = trunc_moments(tau2, gamma, a);
    rho - gamma + gamma * m.u / (delta * (gamma + 1.0))
}

/// ∂/∂τ² of the variance residual (positive at the root, ≥ 1/τ² there).
fn residual_tau2_deriv(tau2: f64, gamma: f64, a: f64, delta: f64) -> f64 {
    let m = trunc_moments(tau2, gamma, a);
    1.0 - m.u / (delta * (gamma + 1.0) * (gamma + 1.0))
        + 2.0 * a * m.v / (delta * tau2.sqrt() * (gamma + 1.0))
}

/// Solves the variance equation in τ² for fixed γ: Newton from the upper end
/// of the bracket (the residual is convex in τ²), with bisection fallback.
fn solve_tau2(gamma: f64, a: f64, delta: f64) -> f64 {
    let mut lo = 1e-12_f64;
    let mut hi = 1.0 + a * a / delta + 10.0;
    let mut t = 1.0 + a * a / delta + 1e-6;
    for _ in 0..NEWTON_CAP {
        let r = residual_tau2(t, gamma, a, delta);
        if r > 0.0 {
            hi = hi.min(t);
        } else {
            lo = lo.max(t);
        }
        let dr = residual_tau2_deriv(t, gamma, a, delta);
        let mut tn = t - r / dr;
        if !(tn > lo && tn < hi) || !tn.is_finite() {
            tn = 0.5 * (lo + hi);
        }
        if (tn - t).abs() <= 1e-16 * t.max(1.0) {
            return tn;
        }
        t = tn;
    }
    t
}

/// Solves the coupled system for (τ_a², γ_a) at clamp level `a`.
///
/// `a = 0` and `a = ∞` take exact closed-form paths; otherwise the outer
/// bisection runs on γ ∈ [ρ, ρ + 1/δ], where the calibration residual changes
/// sign exactly once.
pub fn solve_fixed_point(a: f64, params: &RegParams, config: &SystemConfig) -> Result<FixedPointSolution> {
    if !(a >= 0.0) {
        return Err(Error::InvalidParameter(format!("clamp level must be >= 0, got {a}")));
    }
    let rho = params.rho_eff();
    let delta = config.delta;

    if a == 0.0 {
        return Ok(FixedPointSolution { a, tau2: 1.0, gamma: rho, u: 0.0, v: normal_pdf(0.0) });
    }
    if a.is_infinite() {
        return Ok(solve_clamp_inactive(rho, delta));
    }

    let mut g_lo = rho; // residual_gamma >= 0 here
    let mut g_hi = rho + 1.0 / delta; // residual_gamma < 0 here
    let mut gamma = 0.5 * (g_lo + g_hi);
    let mut tau2 = solve_tau2(gamma, a, delta);
    // run the bracket down to adjacent floats: γ may be orders of magnitude
    // smaller than the bracket width and f is stiff in γ when ρ is tiny
    for _ in 0..OUTER_CAP {
        let mid = 0.5 * (g_lo + g_hi);
        if mid <= g_lo || mid >= g_hi {
            break;
        }
        gamma = mid;
        tau2 = solve_tau2(gamma, a, delta);
        let r = residual_gamma(tau2, gamma, a, delta, rho);
        if r >= 0.0 {
            g_lo = gamma;
        } else {
            g_hi = gamma;
        }
    }
    let m = trunc_moments(tau2, gamma, a);
    let r1 = residual_tau2(tau2, gamma, a, delta);
    let r2 = residual_gamma(tau2, gamma, a, delta, rho);
    if r1.abs() > FP_TOL || r2.abs() > FP_TOL {
        return Err(Error::FixedPointDiverged { residual_tau2: r1, residual_gamma: r2 });
    }
    Ok(FixedPointSolution { a, tau2, gamma, u: m.u, v: m.v })
}

/// Closed form for the inactive clamp (a = ∞): the calibration equation
/// becomes a quadratic in γ and the variance equation is explicit.
fn solve_clamp_inactive(rho: f64, delta: f64) -> FixedPointSolution {
    // δγ² + (δ − 1 − ρδ)γ − ρδ = 0, positive root
    let b = delta - 1.0 - rho * delta;
    let gamma = (-b + (b * b + 4.0 * rho * delta * delta).sqrt()) / (2.0 * delta);
    let gp1 = gamma + 1.0;
    let tau2 = 1.0 / (1.0 - 1.0 / (delta * gp1 * gp1));
    FixedPointSolution { a: f64::INFINITY, tau2, gamma, u: 1.0, v: 0.0 }
}

/// The limiting objective f(a) = δρ(τ_a² − 1) + δρ²τ_a²/γ_a² + λa².
pub fn f_value(a: f64, params: &RegParams, config: &SystemConfig) -> Result<f64> {
    Ok(f_bar(a, params, config)? + params.lambda * a * a)
}

/// f̄(a) = f(a) − λa², the limit of the inner optimal value (nonnegative).
pub fn f_bar(a: f64, params: &RegParams, config: &SystemConfig) -> Result<f64> {
    let fp = solve_fixed_point(a, params, config)?;
    let rho = params.rho_eff();
    let delta = config.delta;
    Ok(delta * rho * (fp.tau2 - 1.0) + delta * rho * rho * fp.tau2 / (fp.gamma * fp.gamma))
}

/// The determinant t0(a) of the implicit-function system and the numerators
/// t1(a), t2(a) entering f'(a). t0 is provably negative.
fn t_terms(fp: &FixedPointSolution, rho: f64, delta: f64) -> (f64, f64, f64) {
    let (a, tau2, g, u, v) = (fp.a, fp.tau2, fp.gamma, fp.u, fp.v);
    let gp1 = g + 1.0;
    let one_m_u = 1.0 - u;
    let t0 = (1.0 / tau2) * (1.0 + a * a * one_m_u / delta) * (g * g - rho / g) / gp1
        - (rho + g * g) / gp1;
    let r_over_g2 = 1.0 + rho / (g * g);
    let t1 = (2.0 * rho * a * g * one_m_u / gp1) * r_over_g2 * r_over_g2
        + (4.0 * rho * g * v / (tau2.sqrt() * gp1)) * r_over_g2 * (1.0 - tau2);
    let t2 = 4.0 * rho * rho * v / (tau2.sqrt() * g * g);
    (t0, t1, t2)
}

/// f'(a) from the explicit implicit-function formulas evaluated at the fixed
/// point. `a = 0` returns the exact limit −2√(2/π).
pub fn f_prime(a: f64, params: &RegParams, config: &SystemConfig) -> Result<f64> {
    if a == 0.0 {
        return Ok(-2.0 * (2.0 / std::f64::consts::PI).sqrt());
    }
    let fp = solve_fixed_point(a, params, config)?;
    let rho = params.rho_eff();
    let (t0, t1, t2) = t_terms(&fp, rho, config.delta);
    if t0 >= 0.0 {
        return Err(Error::DeterminantSign { t0, a });
    }
    Ok(-t1 / t0 + t2 / t0 + 2.0 * params.lambda * a)
}

/// Minimizes f over a ≥ 0 by bisection on f' (f is strongly convex, f'(0) < 0,
/// and f' is eventually dominated by 2λa). Returns the fixed point at a*.
pub fn minimize_a(params: &RegParams, config: &SystemConfig) -> Result<FixedPointSolution> {
    if !(params.lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be > 0 to minimize f, got {}",
            params.lambda
        )));
    }
    let mut hi = (config.delta / params.lambda).sqrt() + 1.0;
    let mut expansions = 0;
    while f_prime(hi, params, config)? <= 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::BracketingFailure(format!(
                "f' stayed nonpositive up to a = {hi}"
            )));
        }
    }
    let mut lo = 0.0;
    let mut mid = 0.5 * hi;
    for _ in 0..OUTER_CAP {
        mid = 0.5 * (lo + hi);
        let d = f_prime(mid, params, config)?;
        if d.abs() <= 1e-10 {
            break;
        }
        if d < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid {
            break;
        }
    }
    solve_fixed_point(mid, params, config)
}

/// Golden-section minimization of f over the same bracket; an independent
/// route to a* used to cross-check the derivative-based path.
pub fn minimize_a_golden(params: &RegParams, config: &SystemConfig) -> Result<f64> {
    if !(params.lambda > 0.0) {
        return Err(Error::InvalidParameter("lambda must be > 0".into()));
    }
    let hi = (config.delta / params.lambda).sqrt() + 1.0;
    golden_section_min(&|a| f_value(a, params, config), 0.0, hi, 1e-8).map(|(a, _)| a)
}

/// Golden-section search for the minimum of a unimodal function on [lo, hi].
/// Returns (argmin, min). Used for f(a) here and for the finite-N outer
/// problem in the convex oracle.
pub fn golden_section_min(
    f: &dyn Fn(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = f(x2)?;
        }
    }
    if f1 < f2 {
        Ok((x1, f1))
    } else {
        Ok((x2, f2))
    }
}
