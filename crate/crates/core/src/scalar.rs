//! Scalar Gaussian primitives, the clamp denoiser, closed-form truncated-Gaussian
//! moments, breakpoint-aware quadrature, and mollified quantizers.
//!
//! Everything here is a pure function of its arguments; the only shared state is
//! a lazily computed quadrature rule and the mollifier normalization constant.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};

/// Tolerance below which a quantizer breakpoint is considered to collide with
/// a clamp edge `±a`.
pub const BREAKPOINT_TOL: f64 = 1e-9;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Half-width of the quadrature window in standard deviations. Mass beyond
/// `|z| = 10` is below 1.6e-23 and is either covered by the closed-form tail
/// terms or negligible.
const Z_WINDOW: f64 = 10.0;

/// Maximum width of a single Gauss-Legendre panel.
const MAX_PANEL_WIDTH: f64 = 2.0;

/// Standard normal density φ(x).
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF Φ(x), via the complementary error function.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal tail Q(x) = 1 − Φ(x), evaluated directly so that large
/// arguments keep full relative accuracy instead of cancelling against 1.
#[inline]
pub fn normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// 2Φ(x) − 1, via erf so that small arguments keep full relative accuracy.
#[inline]
pub fn two_cdf_minus_one(x: f64) -> f64 {
    libm::erf(x / SQRT_2)
}

/// (φ(x), Φ(x), Q(x)) of the standard Gaussian.
#[inline]
pub fn std_gaussian(x: f64) -> (f64, f64, f64) {
    (normal_pdf(x), normal_cdf(x), normal_tail(x))
}

/// Clamp denoiser η_a(x; γ): the projection of x/(γ+1) onto [−a, a].
#[inline]
pub fn eta_a(x: f64, gamma: f64, a: f64) -> f64 {
    (x / (gamma + 1.0)).clamp(-a, a)
}

/// Derivative of the clamp denoiser where it exists: 1/(γ+1) strictly inside
/// the box, 0 outside. Points exactly on the boundary count as clamped.
#[inline]
pub fn eta_a_prime(x: f64, gamma: f64, a: f64) -> f64 {
    if (x / (gamma + 1.0)).abs() < a {
        1.0 / (gamma + 1.0)
    } else {
        0.0
    }
}

/// Closed-form statistics of the clamped Gaussian η_a(τZ; γ), Z ~ N(0,1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncMoments {
    /// u = 2Φ(c) − 1 with c = a(γ+1)/τ; the interior probability mass.
    pub u: f64,
    /// v = φ(c); the density at the clamp edge.
    pub v: f64,
    /// E[η_a²(τZ; γ)].
    pub second_moment: f64,
}

/// Evaluates u, v and E[η_a²(τZ; γ)] in closed form.
///
/// For `a = 0` this degenerates to (0, φ(0), 0).
pub fn trunc_moments(tau2: f64, gamma: f64, a: f64) -> TruncMoments {
    debug_assert!(tau2 > 0.0 && gamma >= 0.0 && a >= 0.0);
    let tau = tau2.sqrt();
    let sd = tau / (gamma + 1.0);
    let c = a / sd;
    let u = two_cdf_minus_one(c);
    let v = normal_pdf(c);
    let tail2 = libm::erfc(c / SQRT_2); // 1 − u = 2Q(c), no cancellation
    let second_moment = sd * sd * u + a * a * tail2 - 2.0 * a * sd * v;
    TruncMoments { u, v, second_moment: second_moment.max(0.0) }
}

/// E[|η_a(τZ; γ)|] in closed form (half-normal piece plus clamped tails).
pub fn trunc_abs_moment(tau2: f64, gamma: f64, a: f64) -> f64 {
    let tau = tau2.sqrt();
    let sd = tau / (gamma + 1.0);
    let c = a / sd;
    2.0 * sd * (normal_pdf(0.0) - normal_pdf(c)) + a * libm::erfc(c / SQRT_2)
}

/// Weight applied inside [`expect_through_clamp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    /// E[g(η_a(τZ; γ))]
    One,
    /// E[Z · g(η_a(τZ; γ))]
    Z,
}

fn gauss_legendre_64() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(64))
}

/// Gauss-Legendre nodes and weights on [−1, 1] by Newton iteration on P_n.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// 64-node Gauss-Legendre integral of `f` over [lo, hi].
fn gl64_panel(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (nodes, weights) = gauss_legendre_64();
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Integrates `f` over [lo, hi] with panels cut at the given interior points
/// and capped at `max_width`.
fn integrate_piecewise(
    f: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    cuts: &[f64],
    max_width: f64,
) -> f64 {
    let mut edges = vec![lo];
    for &ct in cuts {
        if ct > lo && ct < hi {
            edges.push(ct);
        }
    }
    edges.push(hi);
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut total = 0.0;
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b <= a {
            continue;
        }
        let n_sub = ((b - a) / max_width).ceil().max(1.0) as usize;
        let step = (b - a) / n_sub as f64;
        for j in 0..n_sub {
            let s0 = a + step * j as f64;
            total += gl64_panel(f, s0, s0 + step);
        }
    }
    total
}

/// E[w(Z) · g(η_a(τZ; γ))] for Z ~ N(0,1), computed deterministically.
///
/// The real line is split at the clamp edges ±a(γ+1)/τ and at every interior
/// breakpoint of `g` mapped through the clamp; fixed-order Gauss-Legendre
/// panels cover the finite part and the constant boundary values g(±a) are
/// weighted by closed-form Gaussian tail masses.
///
/// Rejects `g` whose breakpoints land within [`BREAKPOINT_TOL`] of ±a.
pub fn expect_through_clamp(
    g: &dyn Fn(f64) -> f64,
    breakpoints: &[f64],
    tau: f64,
    gamma: f64,
    a: f64,
    weight: Weight,
) -> Result<f64> {
    if !(tau > 0.0) || !(gamma >= 0.0) || !(a >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "expect_through_clamp requires tau > 0, gamma >= 0, a >= 0 (got {tau}, {gamma}, {a})"
        )));
    }
    for &b in breakpoints {
        if (b - a).abs() < BREAKPOINT_TOL || (b + a).abs() < BREAKPOINT_TOL {
            return Err(Error::BreakpointCollision { breakpoint: b, clamp: a });
        }
    }
    let sd = tau / (gamma + 1.0);
    let c = a / sd; // clamp edge in z-units
    let z_hi = c.min(Z_WINDOW);

    // Interior: w(z) g(sd·z) φ(z) over |z| < min(c, window).
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .filter(|&&b| b.abs() < a)
        .map(|&b| b / sd)
        .filter(|zb| zb.abs() < z_hi)
        .collect();
    cuts.push(0.0);
    let integrand: Box<dyn Fn(f64) -> f64> = match weight {
        Weight::One => Box::new(move |z: f64| g(sd * z) * normal_pdf(z)),
        Weight::Z => Box::new(move |z: f64| z * g(sd * z) * normal_pdf(z)),
    };
    let interior = if z_hi > 0.0 {
        integrate_piecewise(&integrand, -z_hi, z_hi, &cuts, MAX_PANEL_WIDTH)
    } else {
        0.0
    };

    // Tails beyond the clamp edge: g is frozen at ±a there.
    // ∫_c^∞ φ = Q(c); ∫_c^∞ zφ = φ(c).
    let tails = match weight {
        Weight::One => (g(a) + g(-a)) * normal_tail(c),
        Weight::Z => (g(a) - g(-a)) * normal_pdf(c),
    };
    Ok(interior + tails)
}

// ---------------------------------------------------------------------------
// Quantizers and mollification
// ---------------------------------------------------------------------------

/// A scalar quantization function with a finite set of non-smooth points.
#[derive(Clone)]
pub enum Quantizer {
    /// The one-bit quantizer sgn(x), with sgn(0) = +1.
    Sign,
    /// An arbitrary scalar map with marked discontinuity/kink locations.
    Piecewise {
        /// Strictly increasing locations where `f` is not differentiable.
        breakpoints: Vec<f64>,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
    /// The ε-mollification of a base quantizer; smooth everywhere.
    Mollified { base: Box<Quantizer>, epsilon: f64 },
}

impl std::fmt::Debug for Quantizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Quantizer::Sign => write!(f, "Sign"),
            Quantizer::Piecewise { breakpoints, .. } => {
                write!(f, "Piecewise {{ breakpoints: {breakpoints:?} }}")
            }
            Quantizer::Mollified { base, epsilon } => {
                write!(f, "Mollified {{ base: {base:?}, epsilon: {epsilon} }}")
            }
        }
    }
}

impl Quantizer {
    /// Builds a piecewise quantizer, validating that breakpoints are strictly
    /// increasing.
    pub fn piecewise(
        breakpoints: Vec<f64>,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    ) -> Result<Self> {
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Quantizer::Piecewise { breakpoints, f })
    }

    /// The identity map (no breakpoints); handy as a degenerate quantizer.
    pub fn identity() -> Self {
        Quantizer::Piecewise { breakpoints: Vec::new(), f: Arc::new(|x| x) }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Quantizer::Sign => {
                if x >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Quantizer::Piecewise { f, .. } => f(x),
            Quantizer::Mollified { base, epsilon } => mollified_eval(base, *epsilon, x),
        }
    }

    /// Non-smooth locations. Mollified quantizers have none.
    pub fn breakpoints(&self) -> &[f64] {
        static SIGN_BP: [f64; 1] = [0.0];
        match self {
            Quantizer::Sign => &SIGN_BP,
            Quantizer::Piecewise { breakpoints, .. } => breakpoints,
            Quantizer::Mollified { .. } => &[],
        }
    }

    /// Pointwise derivative where defined. Discontinuities of a hard
    /// quantizer contribute zero (they form a null set); piecewise segments
    /// are differentiated by central differences; mollified quantizers use
    /// the exact convolution with the mollifier derivative.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Quantizer::Sign => 0.0,
            Quantizer::Piecewise { f, .. } => {
                let h = 1e-6 * (1.0 + x.abs());
                (f(x + h) - f(x - h)) / (2.0 * h)
            }
            Quantizer::Mollified { base, epsilon } => mollified_derivative(base, *epsilon, x),
        }
    }

    /// Rejects the quantizer if any breakpoint collides with ±a.
    pub fn check_clamp(&self, a: f64) -> Result<()> {
        for &b in self.breakpoints() {
            if (b - a).abs() < BREAKPOINT_TOL || (b + a).abs() < BREAKPOINT_TOL {
                return Err(Error::BreakpointCollision { breakpoint: b, clamp: a });
            }
        }
        Ok(())
    }

    /// Locations where quadrature panels should be cut. A mollified
    /// quantizer is smooth but varies on the ε scale around each base
    /// breakpoint, so its transition edges are returned here.
    pub fn quadrature_cuts(&self) -> Vec<f64> {
        match self {
            Quantizer::Mollified { base, epsilon } => base
                .breakpoints()
                .iter()
                .flat_map(|&b| [b - epsilon, b, b + epsilon])
                .collect(),
            _ => self.breakpoints().to_vec(),
        }
    }
}

/// ε-mollification q_ε = ζ_ε * q with the standard bump mollifier.
///
/// Mollifying twice is rejected; the result is already smooth.
pub fn mollify(q: &Quantizer, epsilon: f64) -> Result<Quantizer> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mollification width must be positive, got {epsilon}"
        )));
    }
    if matches!(q, Quantizer::Mollified { .. }) {
        return Err(Error::InvalidParameter(
            "quantizer is already mollified".into(),
        ));
    }
    Ok(Quantizer::Mollified { base: Box::new(q.clone()), epsilon })
}

/// Unnormalized bump e^{−1/(1−t²)} supported on (−1, 1).
fn bump_raw(t: f64) -> f64 {
    if t.abs() < 1.0 {
        (-1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

/// d/dt of the unnormalized bump.
fn bump_raw_deriv(t: f64) -> f64 {
    if t.abs() < 1.0 {
        let d = 1.0 - t * t;
        bump_raw(t) * (-2.0 * t / (d * d))
    } else {
        0.0
    }
}

/// Normalization constant c with ∫ c·e^{−1/(1−t²)} dt = 1, computed once by
/// adaptive quadrature (the integral has no closed form).
fn bump_norm() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let mass = adaptive_simpson(&bump_raw, -1.0, 1.0, 1e-13, 64);
        1.0 / mass
    })
}

/// Panel width for integrals of the bump: it is smooth but flattens to all
/// orders at ±1, so fixed-order panels need to be narrow.
const BUMP_PANEL_WIDTH: f64 = 0.25;

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub(crate) fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// q_ε(x) = ∫_{−1}^{1} ζ(t) q(x − εt) dt, with the t-axis cut where x − εt
/// crosses a breakpoint of q.
fn mollified_eval(base: &Quantizer, epsilon: f64, x: f64) -> f64 {
    let c = bump_norm();
    let cuts: Vec<f64> = base
        .breakpoints()
        .iter()
        .map(|&b| (x - b) / epsilon)
        .filter(|t| t.abs() < 1.0)
        .collect();
    let f = |t: f64| c * bump_raw(t) * base.eval(x - epsilon * t);
    integrate_piecewise(&f, -1.0, 1.0, &cuts, BUMP_PANEL_WIDTH)
}

/// q_ε'(x) = (1/ε) ∫_{−1}^{1} ζ'(t) q(x − εt) dt.
fn mollified_derivative(base: &Quantizer, epsilon: f64, x: f64) -> f64 {
    let c = bump_norm();
    let cuts: Vec<f64> = base
        .breakpoints()
        .iter()
        .map(|&b| (x - b) / epsilon)
        .filter(|t| t.abs() < 1.0)
        .collect();
    let f = |t: f64| c * bump_raw_deriv(t) * base.eval(x - epsilon * t);
    integrate_piecewise(&f, -1.0, 1.0, &cuts, BUMP_PANEL_WIDTH) / epsilon
}
