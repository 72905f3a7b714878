//! The asymptotic effective scalar channel (ᾱ, β̄), the predicted symbol error
//! probability, statistics of the relaxed solution, and the clustering
//! proportion.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fixed_point::{minimize_a, FixedPointSolution, RegParams, SystemConfig};
use crate::scalar::{
    expect_through_clamp, normal_tail, trunc_abs_moment, Quantizer, Weight,
};

/// Effective-channel pair of the asymptotic scalar model
/// ȳ = ᾱS + √(β̄ + σ²)Z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarChannel {
    pub alpha_bar: f64,
    pub beta_bar: f64,
}

/// Effective channel for the sign quantizer, in closed form:
/// ᾱ₀ = √(2/π)/(δτ*) and β̄₀ = (ᾱ₀²E[X̂²] − 2ᾱ₀E[|X̂|] + 1)/δ with
/// E[X̂²] = δ(τ*² − 1) and E[|X̂|] from the truncated-Gaussian formula.
pub fn effective_channel_sign(params: &RegParams, config: &SystemConfig) -> Result<ScalarChannel> {
    let star = minimize_a(params, config)?;
    Ok(effective_channel_sign_at(&star, config.delta))
}

/// Same closed form, evaluated at a precomputed fixed point.
pub fn effective_channel_sign_at(star: &FixedPointSolution, delta: f64) -> ScalarChannel {
    let tau = star.tau();
    let alpha = (2.0 / std::f64::consts::PI).sqrt() / (delta * tau);
    let ex2 = delta * (star.tau2 - 1.0);
    let eabs = trunc_abs_moment(star.tau2, star.gamma, star.a);
    let beta = (alpha * alpha * ex2 - 2.0 * alpha * eabs + 1.0) / delta;
    ScalarChannel { alpha_bar: alpha, beta_bar: beta.max(0.0) }
}

/// Effective channel for a general quantizer q:
/// ᾱ* = E[Z q(η)]/(δτ*) and β̄* = E[(ᾱ*X̂ − q(X̂))²]/δ, both by
/// breakpoint-aware quadrature. Rejects q whose breakpoints collide with ±a*.
pub fn effective_channel_general(
    q: &Quantizer,
    params: &RegParams,
    config: &SystemConfig,
) -> Result<ScalarChannel> {
    let star = minimize_a(params, config)?;
    effective_channel_general_at(q, &star, config.delta)
}

pub fn effective_channel_general_at(
    q: &Quantizer,
    star: &FixedPointSolution,
    delta: f64,
) -> Result<ScalarChannel> {
    q.check_clamp(star.a)?;
    // panel cuts: true breakpoints plus mollification transition edges,
    // keeping clear of the collision window around ±a
    let cuts: Vec<f64> = q
        .quadrature_cuts()
        .into_iter()
        .filter(|b| (b - star.a).abs() > 2.0 * crate::scalar::BREAKPOINT_TOL
            && (b + star.a).abs() > 2.0 * crate::scalar::BREAKPOINT_TOL)
        .collect();
    let tau = star.tau();
    let qc = q.clone();
    let g_q = move |x: f64| qc.eval(x);
    let ezq = expect_through_clamp(&g_q, &cuts, tau, star.gamma, star.a, Weight::Z)?;
    let alpha = ezq / (delta * tau);
    let qc2 = q.clone();
    let g_sq = move |x: f64| {
        let d = alpha * x - qc2.eval(x);
        d * d
    };
    let beta = expect_through_clamp(&g_sq, &cuts, tau, star.gamma, star.a, Weight::One)? / delta;
    Ok(ScalarChannel { alpha_bar: alpha, beta_bar: beta.max(0.0) })
}

/// Predicted symbol error probability Q(√(ᾱ²/(β̄ + σ²))).
///
/// The degenerate noiseless case β̄ + σ² = 0 returns 0 for ᾱ > 0 and 1/2
/// otherwise.
pub fn sep_predict(channel: &ScalarChannel, sigma2: f64) -> f64 {
    let denom = channel.beta_bar + sigma2;
    if denom <= 0.0 {
        return if channel.alpha_bar > 0.0 { 0.0 } else { 0.5 };
    }
    normal_tail((channel.alpha_bar * channel.alpha_bar / denom).sqrt())
}

/// E[φ(X̂)] for the limiting truncated-Gaussian law X̂ = η_{a*}(τ*Z; γ*).
///
/// `breakpoints` marks discontinuities of the test function; they must avoid
/// ±a* but are otherwise allowed (indicator-style statistics included).
pub fn xhat_statistic(
    test_fn: &dyn Fn(f64) -> f64,
    breakpoints: &[f64],
    params: &RegParams,
    config: &SystemConfig,
) -> Result<f64> {
    let star = minimize_a(params, config)?;
    expect_through_clamp(test_fn, breakpoints, star.tau(), star.gamma, star.a, Weight::One)
}

/// Asymptotic proportion of entries of x̂ within ε of the sup-norm edge:
/// P(τ*|Z|/(γ*+1) ≥ a*(1−ε)) = 2Q(a*(1−ε)(γ*+1)/τ*).
pub fn cluster_proportion(epsilon: f64, params: &RegParams, config: &SystemConfig) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(crate::error::Error::InvalidParameter(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    let star = minimize_a(params, config)?;
    Ok(cluster_proportion_at(&star, epsilon))
}

/// Clustering proportion at a precomputed fixed point; accepts ε = 0 as the
/// tail-mass endpoint 1 − u*.
pub fn cluster_proportion_at(star: &FixedPointSolution, epsilon: f64) -> f64 {
    2.0 * normal_tail(star.a * (1.0 - epsilon) * (star.gamma + 1.0) / star.tau())
}
