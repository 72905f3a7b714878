//! The AMP recursion on finite instances, its scalar state evolution, and the
//! post-processing step that exposes the effective channel empirically.
//!
//! The iteration keeps only matrix-vector products of H; no factorization is
//! formed. One run owns its state; concurrent runs do not share anything.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::fixed_point::solve_fixed_point;
use crate::fixed_point::{RegParams, SystemConfig};
use crate::linalg::{matvec, stable_dot};
use crate::scalar::{eta_a, trunc_moments, Quantizer};

/// State of an AMP run after its final iteration.
#[derive(Debug, Clone)]
pub struct AmpState {
    /// Current iterate, every entry in [−a, a].
    pub x: Array1<f64>,
    /// Residual vector.
    pub z: Array1<f64>,
    /// Iterations performed.
    pub t: usize,
    /// Onsager coefficient (1/δ)⟨η_a'⟩ of the last update.
    pub onsager: f64,
    /// Diagnostic (1/N)‖x + Hᵀz‖², the empirical analogue of τ_t².
    pub r_norm2: f64,
}

/// One row of the optional iterate history.
#[derive(Debug, Clone, Copy)]
pub struct AmpHistoryRow {
    pub t: usize,
    /// ‖x_{t+1} − x_t‖/√N.
    pub dx_rms: f64,
    pub onsager: f64,
    /// Empirical τ_t² before the update.
    pub r_norm2: f64,
}

/// CSV dump of an iterate history: `t,dx_rms,onsager,tau2_emp`.
pub fn history_to_csv(rows: &[AmpHistoryRow]) -> String {
    let mut out = String::from("t,dx_rms,onsager,tau2_emp\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            r.t, r.dx_rms, r.onsager, r.r_norm2
        ));
    }
    out
}

/// Runs the AMP recursion
/// x_{t+1} = η_a(x_t + Hᵀz_t; γ), z_t = s − Hx_t + (1/δ)⟨η_a'⟩z_{t−1}
/// from x₀ = 0 (negative-index terms zero), stopping when
/// ‖x_{t+1} − x_t‖/√N ≤ tol or at `max_iter`.
///
/// `gamma` must be the fixed-point calibration γ_a for this (a, ρ, δ);
/// callers obtain it from the fixed-point solver.
pub fn amp_run(
    h: &Array2<f64>,
    s: &Array1<f64>,
    a: f64,
    gamma: f64,
    max_iter: usize,
    tol: f64,
    record_history: bool,
) -> Result<(AmpState, Option<Vec<AmpHistoryRow>>)> {
    let (k, n) = h.dim();
    if s.len() != k {
        return Err(Error::InvalidParameter(format!(
            "symbol vector length {} does not match K = {k}",
            s.len()
        )));
    }
    if !(a > 0.0) || !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "amp_run requires a > 0 and gamma > 0 (got {a}, {gamma})"
        )));
    }
    let delta = k as f64 / n as f64;
    let gp1 = gamma + 1.0;
    let sqrt_n = (n as f64).sqrt();
    let ht = h.t().to_owned(); // contiguous rows for the transposed product

    let mut x = Array1::<f64>::zeros(n);
    let mut z = s.clone();
    let mut onsager = 0.0;
    let mut r_norm2 = 0.0;
    let mut history = record_history.then(Vec::new);

    let mut t = 0;
    while t < max_iter {
        let r = &x + &matvec(&ht, &z);
        r_norm2 = stable_dot(r.view(), r.view()) / n as f64;
        if !r_norm2.is_finite() {
            return Err(Error::NonFinite { iteration: t });
        }
        let interior = r.iter().filter(|&&v| (v / gp1).abs() < a).count();
        onsager = interior as f64 / (n as f64 * gp1) / delta;

        let x_next = r.mapv(|v| eta_a(v, gamma, a));
        let diff = &x_next - &x;
        let dx = stable_dot(diff.view(), diff.view()).sqrt() / sqrt_n;
        x = x_next;
        z = s - &matvec(h, &x) + onsager * &z;
        t += 1;

        if let Some(hist) = history.as_mut() {
            hist.push(AmpHistoryRow { t, dx_rms: dx, onsager, r_norm2 });
        }
        if dx <= tol {
            break;
        }
    }
    Ok((AmpState { x, z, t, onsager, r_norm2 }, history))
}

/// Scalar state-evolution trace τ_t² with τ₀² = 1.
#[derive(Debug, Clone)]
pub struct StateEvolutionTrace {
    /// τ_t², starting at 1, nondecreasing.
    pub tau2_seq: Vec<f64>,
    /// σ_t² = τ_t² − 1 (the residual-side variances).
    pub sigma2_seq: Vec<f64>,
    pub converged: bool,
    /// Final value; the scalar fixed point τ_a² at convergence.
    pub tau2_limit: f64,
}

/// Iterates τ_{t+1}² = 1 + E[η_a²(τ_tZ; γ)]/δ until |τ_{t+1}² − τ_t²| ≤ tol.
/// Deterministic and instance-free.
pub fn state_evolution(
    a: f64,
    gamma: f64,
    delta: f64,
    max_iter: usize,
    tol: f64,
) -> StateEvolutionTrace {
    let mut tau2 = 1.0;
    let mut tau2_seq = vec![tau2];
    let mut sigma2_seq = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let next = if a == 0.0 {
            1.0
        } else {
            1.0 + trunc_moments(tau2, gamma, a).second_moment / delta
        };
        sigma2_seq.push(next - 1.0);
        let step = (next - tau2).abs();
        tau2 = next;
        tau2_seq.push(tau2);
        if step <= tol {
            converged = true;
            break;
        }
    }
    StateEvolutionTrace { tau2_seq, sigma2_seq, converged, tau2_limit: tau2 }
}

/// Outcome of the post-processing step x̃ = q(x), z̃ per the extra AMP
/// iteration with denoiser q∘η_a.
#[derive(Debug, Clone)]
pub struct PostProcess {
    pub x_tilde: Array1<f64>,
    pub z_tilde: Array1<f64>,
    /// Empirical signal gain (1/K)Σ s_k·(Hx̃)_k; the least-squares
    /// coefficient of s since s ∈ {±1}^K.
    pub alpha_emp: f64,
    /// Onsager-side coefficient (1/δ)⟨(q∘η_a)'(x + Hᵀz)⟩ of the extra
    /// iteration. Equals the plain Onsager coefficient when q is the
    /// identity; zero a.e. for hard quantizers.
    pub signal_coeff: f64,
    /// Hx̃ − α̂s, whose per-entry empirical variance estimates β̄.
    pub noise: Array1<f64>,
}

/// Applies quantized post-processing to a converged AMP state.
pub fn post_process(
    state: &AmpState,
    h: &Array2<f64>,
    s: &Array1<f64>,
    q: &Quantizer,
    gamma: f64,
    a: f64,
) -> Result<PostProcess> {
    q.check_clamp(a)?;
    let (k, n) = h.dim();
    let delta = k as f64 / n as f64;
    let gp1 = gamma + 1.0;

    let ht = h.t().to_owned();
    let r = &state.x + &matvec(&ht, &state.z);
    let x_tilde = r.mapv(|v| q.eval(eta_a(v, gamma, a)));
    // (q∘η_a)'(r) = q'(η_a(r))·η_a'(r); clamped coordinates contribute zero
    let mut deriv_sum = 0.0;
    for &ri in r.iter() {
        if (ri / gp1).abs() < a {
            deriv_sum += q.derivative(eta_a(ri, gamma, a)) / gp1;
        }
    }
    let signal_coeff = deriv_sum / (n as f64 * delta);

    let h_xt = matvec(h, &x_tilde);
    let z_tilde = s - &h_xt + signal_coeff * &state.z;
    let alpha_emp = stable_dot(s.view(), h_xt.view()) / k as f64;
    let noise = &h_xt - &(alpha_emp * s);
    Ok(PostProcess { x_tilde, z_tilde, alpha_emp, signal_coeff, noise })
}

/// Convenience: the fixed-point pair (a*, γ*) that amp_run needs for the CRQ
/// problem at (ρ, λ, δ).
pub fn amp_calibration(params: &RegParams, config: &SystemConfig) -> Result<(f64, f64)> {
    let star = crate::fixed_point::minimize_a(params, config)?;
    Ok((star.a, star.gamma))
}

/// Calibration for a fixed clamp level (the box problem): γ_a from the
/// fixed-point system.
pub fn box_calibration(a: f64, params: &RegParams, config: &SystemConfig) -> Result<f64> {
    Ok(solve_fixed_point(a, params, config)?.gamma)
}
