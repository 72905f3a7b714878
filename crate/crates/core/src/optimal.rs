//! SEP-optimal regularization parameters: the scalar functions h(z) and ζ(z),
//! the domain edge z₀, the closed-form optimal pair (ρ̂ = 0, λ̂), and grid
//! search over (ρ, λ) for validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{effective_channel_sign_at, sep_predict};
use crate::error::{Error, Result};
use crate::fixed_point::{minimize_a, RegParams, SystemConfig};
use crate::scalar::{normal_pdf, normal_tail, two_cdf_minus_one};

const ROOT_TOL: f64 = 1e-12;
const BISECT_CAP: usize = 300;

/// h(z) = (2Φ(z)−1)/(δz²) − (2/δ)(φ(z)/z + Φ(z) − 1); positive for z > 0.
pub fn h_of_z(z: f64, delta: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::InvalidParameter(format!("h(z) requires z > 0, got {z}")));
    }
    let u = two_cdf_minus_one(z);
    // Φ(z) − 1 = −Q(z), evaluated without cancellation
    Ok(u / (delta * z * z) - (2.0 / delta) * (normal_pdf(z) / z - normal_tail(z)))
}

/// z²h(z), continuous at 0 with value 0, strictly increasing, limit 1/δ.
pub fn z_sq_h(z: f64, delta: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let u = two_cdf_minus_one(z);
    (u - 2.0 * z * normal_pdf(z) + 2.0 * z * z * normal_tail(z)) / delta
}

/// ζ(z) of the optimal-design root equation; concave with ζ(0) = −√(π/2)δ.
pub fn zeta_of_z(z: f64, delta: f64, sigma2: f64) -> f64 {
    let half_pi = std::f64::consts::PI / 2.0;
    let sqrt_half_pi = half_pi.sqrt();
    let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
    let u = two_cdf_minus_one(z);
    // z²(Φ(z) + φ(z)/z − 1) written as zφ(z) − z²Q(z): exact at z = 0
    sqrt_half_pi * u + sqrt_2pi * (z * normal_pdf(z) - z * z * normal_tail(z))
        + (half_pi * delta * (1.0 + sigma2 * delta) - 1.0) * z
        - sqrt_half_pi * delta
}

/// Domain edge z₀: the unique positive root of z²h(z) = 1 for δ < 1, and +∞
/// for δ ≥ 1.
pub fn solve_z0(delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if delta >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let mut lo = 1e-12;
    let mut hi = 1.0;
    let mut guard = 0;
    while z_sq_h(hi, delta) < 1.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::BracketingFailure("z^2 h(z) never exceeded 1".into()));
        }
    }
    for _ in 0..BISECT_CAP {
        let mid = 0.5 * (lo + hi);
        let r = z_sq_h(mid, delta) - 1.0;
        if r.abs() <= ROOT_TOL {
            return Ok(mid);
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z0 = 0.5 * (lo + hi);
    let r = z_sq_h(z0, delta) - 1.0;
    if r.abs() > ROOT_TOL {
        return Err(Error::FixedPointDiverged { residual_tau2: r, residual_gamma: 0.0 });
    }
    Ok(z0)
}

/// The SEP-optimal design: root ẑ of ζ on (0, z₀), the derived (â, τ̂), the
/// closed-form λ̂, and ρ̂ = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalDesign {
    pub z_hat: f64,
    /// Domain edge; +∞ when δ ≥ 1.
    pub z0: f64,
    pub a_hat: f64,
    pub tau_hat: f64,
    pub lambda_hat: f64,
    /// Always exactly zero.
    pub rho_hat: f64,
}

/// Solves the optimal design for (δ, σ²).
///
/// ζ(0) < 0 and ζ(z₀) > 0 guarantee the bracket; for δ ≥ 1 the upper end
/// starts at 20 and doubles until the sign flips.
pub fn optimal_design(delta: f64, sigma2: f64) -> Result<OptimalDesign> {
    if !(delta > 0.0) || !(sigma2 >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "optimal design requires delta > 0 and sigma2 >= 0 (got {delta}, {sigma2})"
        )));
    }
    let z0 = solve_z0(delta)?;
    let mut hi = if z0.is_finite() { z0 } else { 20.0 };
    let mut guard = 0;
    while zeta_of_z(hi, delta, sigma2) <= 0.0 {
        if z0.is_finite() {
            return Err(Error::BracketingFailure(format!(
                "zeta is nonpositive at the domain edge z0 = {z0}"
            )));
        }
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::BracketingFailure("zeta never became positive".into()));
        }
    }
    let mut lo = 0.0;
    let mut z_hat = 0.5 * hi;
    for _ in 0..BISECT_CAP {
        z_hat = 0.5 * (lo + hi);
        let r = zeta_of_z(z_hat, delta, sigma2);
        if r.abs() <= ROOT_TOL {
            break;
        }
        if r < 0.0 {
            lo = z_hat;
        } else {
            hi = z_hat;
        }
    }
    let resid = zeta_of_z(z_hat, delta, sigma2);
    if resid.abs() > ROOT_TOL {
        return Err(Error::FixedPointDiverged { residual_tau2: resid, residual_gamma: 0.0 });
    }

    let h = h_of_z(z_hat, delta)?;
    let a_hat = (1.0 / (z_hat * z_hat) - h).powf(-0.5);
    let tau_hat = (1.0 - z_hat * z_hat * h).powf(-0.5);
    let q_z = normal_tail(z_hat);
    let big_a = 1.0 - two_cdf_minus_one(z_hat) / delta;
    let lambda_hat = 2.0 * big_a * (normal_pdf(z_hat) - a_hat * tau_hat * big_a * q_z)
        / (z_hat * (1.0 + 2.0 * a_hat * a_hat / delta * q_z));
    Ok(OptimalDesign { z_hat, z0, a_hat, tau_hat, lambda_hat, rho_hat: 0.0 })
}

/// One cell of a (ρ, λ) SEP grid. `sep` is absent when the fixed-point solve
/// failed for that cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SepCell {
    pub rho: f64,
    pub lambda: f64,
    pub sep: Option<f64>,
}

/// Predicted-SEP table over a (ρ, λ) grid with its argmin cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SepGrid {
    pub cells: Vec<SepCell>,
    pub argmin: SepCell,
}

impl SepGrid {
    /// Serializes as CSV with header `rho,lambda,sep` (17 significant digits)
    /// and an argmin annotation comment at the end.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho,lambda,sep\n");
        for c in &self.cells {
            match c.sep {
                Some(s) => out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", c.rho, c.lambda, s)),
                None => out.push_str(&format!("{:.16e},{:.16e},\n", c.rho, c.lambda)),
            }
        }
        if let Some(s) = self.argmin.sep {
            out.push_str(&format!(
                "# argmin rho={:.16e} lambda={:.16e} sep={:.16e}\n",
                self.argmin.rho, self.argmin.lambda, s
            ));
        }
        out
    }
}

/// Evaluates the predicted SEP over the full (ρ, λ) grid. Cells run in
/// parallel; individual failures are recorded, not fatal.
pub fn grid_search_sep(
    delta: f64,
    sigma2: f64,
    rho_grid: &[f64],
    lambda_grid: &[f64],
) -> Result<SepGrid> {
    if rho_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::InvalidParameter("grids must be nonempty".into()));
    }
    if rho_grid.iter().chain(lambda_grid.iter()).any(|&x| x < 0.0) {
        return Err(Error::InvalidParameter("grid values must be >= 0".into()));
    }
    let config = SystemConfig::asymptotic(delta, sigma2)?;
    let pairs: Vec<(f64, f64)> = rho_grid
        .iter()
        .flat_map(|&r| lambda_grid.iter().map(move |&l| (r, l)))
        .collect();
    let cells: Vec<SepCell> = pairs
        .par_iter()
        .map(|&(rho, lambda)| {
            let sep = RegParams::new(rho, lambda)
                .and_then(|params| minimize_a(&params, &config))
                .map(|star| sep_predict(&effective_channel_sign_at(&star, delta), sigma2))
                .ok();
            SepCell { rho, lambda, sep }
        })
        .collect();
    let argmin = cells
        .iter()
        .filter(|c| c.sep.is_some())
        .min_by(|a, b| a.sep.partial_cmp(&b.sep).unwrap())
        .copied()
        .ok_or_else(|| Error::BracketingFailure("every grid cell failed".into()))?;
    Ok(SepGrid { cells, argmin })
}
