//! Finite-size Monte Carlo experiments: seeded channel and symbol generation,
//! precoding through either backend, reception, and comparison of every
//! empirical statistic against its asymptotic prediction.
//!
//! Randomness is counter-based: every trial derives its (channel, symbols,
//! noise) streams from the master seed and the trial index alone, so results
//! do not depend on execution order and trials parallelize freely.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amp::amp_run;
use crate::asymptotics::{cluster_proportion_at, effective_channel_sign_at, sep_predict};
use crate::error::{Error, Result};
use crate::fixed_point::{minimize_a, FixedPointSolution, RegParams, SystemConfig};
use crate::linalg::{matvec, stable_dot};
use crate::optimal::optimal_design;
use crate::oracle::{sign_pm1, solve_crq};

/// σ² = 10^(−SNR_dB/10). Transmit power is fixed at N by the one-bit
/// constraint and absorbed into the 1/K channel variance, so the dB axis maps
/// to the noise variance alone.
pub fn sigma2_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Substreams drawn per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    Channel = 0,
    Symbols = 1,
    Noise = 2,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the substream seed for (master, trial, stream).
pub fn substream_seed(master: u64, trial: u64, stream: StreamId) -> u64 {
    splitmix(splitmix(splitmix(master) ^ trial) ^ stream as u64)
}

fn rng_from(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// K×N channel with i.i.d. N(0, 1/K) entries, deterministic per seed.
pub fn gen_channel(k: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from(seed);
    let scale = 1.0 / (k as f64).sqrt();
    Array2::from_shape_fn((k, n), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    })
}

/// K i.i.d. uniform ±1 symbols, deterministic per seed.
pub fn gen_symbols(k: usize, seed: u64) -> Array1<f64> {
    let mut rng = rng_from(seed);
    Array1::from_shape_fn(k, |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sign_pm1(z)
    })
}

/// How the regularization pair is chosen for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamSelector {
    Explicit(RegParams),
    /// ρ = 0, λ = σ²K/N.
    Squid,
    /// The SEP-optimal (0, λ̂).
    Optimal,
}

impl ParamSelector {
    pub fn resolve(&self, config: &SystemConfig) -> Result<RegParams> {
        match self {
            ParamSelector::Explicit(p) => RegParams::new(p.rho, p.lambda),
            ParamSelector::Squid => crate::oracle::squid_params(config.sigma2, config.k, config.n),
            ParamSelector::Optimal => {
                let d = optimal_design(config.delta, config.sigma2)?;
                RegParams::new(0.0, d.lambda_hat)
            }
        }
    }
}

/// Which solver produces the relaxed solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecoderBackend {
    /// Projected-gradient convex solver (the reference).
    Oracle,
    /// AMP at the asymptotic clamp level a*.
    Amp,
}

/// Full description of one Monte Carlo experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub config: SystemConfig,
    pub params: ParamSelector,
    pub trials: usize,
    pub seed: u64,
    pub backend: PrecoderBackend,
}

/// Mean/spread summary of a per-trial scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryStats {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        SummaryStats {
            mean,
            std: var.sqrt(),
            min: xs.iter().cloned().fold(f64::INFINITY, f64::min),
            max: xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Aggregated outcome of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub sep_empirical: f64,
    /// √(p(1−p)/(K·trials)) binomial standard error.
    pub sep_stderr: f64,
    /// Mean of the per-trial signal-gain estimates (1/K)Σ s_k(h_kᵀx_T).
    pub alpha_emp: f64,
    /// Mean of the per-trial distortion estimates (1/K)Σ(h_kᵀx_T − α̂s_k)².
    pub beta_emp: f64,
    pub a_n_samples: SummaryStats,
    /// Mean realized ‖x̂‖∞ (identical to the a_N mean; kept for the record
    /// schema).
    pub linf_mean: f64,
    pub trials_used: usize,
    pub failures: usize,
}

struct TrialOutcome {
    errors: usize,
    alpha: f64,
    beta: f64,
    a_n: f64,
}

fn run_one_trial(
    tc: &TrialConfig,
    params: &RegParams,
    amp_cal: Option<(f64, f64)>,
    trial: u64,
) -> Result<TrialOutcome> {
    let (k, n) = (tc.config.k, tc.config.n);
    let h = gen_channel(k, n, substream_seed(tc.seed, trial, StreamId::Channel));
    let s = gen_symbols(k, substream_seed(tc.seed, trial, StreamId::Symbols));

    let (x_t, a_n) = match tc.backend {
        PrecoderBackend::Oracle => {
            let out = solve_crq(&h, &s, params, 1e-8)?;
            (out.x_t, out.a_n)
        }
        PrecoderBackend::Amp => {
            let (a_star, gamma_star) = amp_cal.expect("amp calibration precomputed");
            let (state, _) = amp_run(&h, &s, a_star, gamma_star, 200, 1e-8, false)?;
            let a_n = state.x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            (state.x.mapv(sign_pm1), a_n)
        }
    };

    let hx = matvec(&h, &x_t);
    let mut noise_rng = rng_from(substream_seed(tc.seed, trial, StreamId::Noise));
    let sigma = tc.config.sigma2.sqrt();
    let mut errors = 0usize;
    for i in 0..k {
        let noise: f64 = StandardNormal.sample(&mut noise_rng);
        let y = hx[i] + sigma * noise;
        if sign_pm1(y) != s[i] {
            errors += 1;
        }
    }
    let alpha = stable_dot(s.view(), hx.view()) / k as f64;
    let resid = &hx - &(alpha * &s);
    let beta = stable_dot(resid.view(), resid.view()) / k as f64;
    Ok(TrialOutcome { errors, alpha, beta, a_n })
}

/// Runs the full Monte Carlo experiment described by `tc`.
///
/// Trials execute in parallel but aggregation is sequential in trial order,
/// so the result is a pure function of the configuration. Precoder failures
/// are excluded from the aggregates; more than 1% of them aborts the run.
pub fn run_trials(tc: &TrialConfig) -> Result<TrialResult> {
    if tc.trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    tc.config.validate_sizes()?;
    let params = tc.params.resolve(&tc.config)?;
    let amp_cal = match tc.backend {
        PrecoderBackend::Amp => {
            let star = minimize_a(&params, &tc.config)?;
            Some((star.a, star.gamma))
        }
        PrecoderBackend::Oracle => None,
    };

    let outcomes: Vec<Result<TrialOutcome>> = (0..tc.trials as u64)
        .into_par_iter()
        .map(|trial| run_one_trial(tc, &params, amp_cal, trial))
        .collect();

    let mut errors = 0usize;
    let mut alphas = Vec::with_capacity(tc.trials);
    let mut betas = Vec::with_capacity(tc.trials);
    let mut a_ns = Vec::with_capacity(tc.trials);
    let mut failures = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                errors += o.errors;
                alphas.push(o.alpha);
                betas.push(o.beta);
                a_ns.push(o.a_n);
            }
            Err(_) => failures += 1,
        }
    }
    if failures * 100 > tc.trials {
        return Err(Error::IterationCap { residual: failures as f64 });
    }
    let used = tc.trials - failures;
    if used == 0 {
        return Err(Error::InvalidParameter("every trial failed".into()));
    }
    let symbols = (tc.config.k * used) as f64;
    let p = errors as f64 / symbols;
    let stderr = (p * (1.0 - p) / symbols).sqrt();
    let a_n_samples = SummaryStats::from_samples(&a_ns);
    Ok(TrialResult {
        sep_empirical: p,
        sep_stderr: stderr,
        alpha_emp: alphas.iter().sum::<f64>() / used as f64,
        beta_emp: betas.iter().sum::<f64>() / used as f64,
        a_n_samples,
        linf_mean: a_n_samples.mean,
        trials_used: used,
        failures,
    })
}

/// Theory vs. empirical comparison for one ε in the clustering table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub epsilon: f64,
    pub theory: f64,
    pub empirical: f64,
}

/// Distribution report: sup-norm, moments, and clustering proportions of
/// solved instances against the truncated-Gaussian limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub a_star: f64,
    pub linf_mean: f64,
    pub linf_rel_err: f64,
    pub second_moment_theory: f64,
    pub second_moment_emp: f64,
    pub abs_moment_theory: f64,
    pub abs_moment_emp: f64,
    pub cluster: Vec<ClusterRow>,
}

/// Default ε grid of the clustering check.
pub const CLUSTER_EPSILONS: [f64; 3] = [0.05, 0.1, 0.2];

/// Fraction of entries with |x_i| ≥ ‖x‖∞(1−ε), each instance measured
/// against its own sup-norm, averaged over instances.
pub fn empirical_cluster_fraction(samples: &[Array1<f64>], epsilon: f64) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for x in samples {
        let linf = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let threshold = linf * (1.0 - epsilon);
        hits += x.iter().filter(|v| v.abs() >= threshold).count();
        total += x.len();
    }
    hits as f64 / total as f64
}

/// Compares solved instances against the limiting law: ‖x̂‖∞ vs a*, first
/// absolute and second moments vs the truncated-Gaussian closed forms, and
/// cluster fractions vs the asymptotic proportion.
pub fn distribution_check(
    samples: &[Array1<f64>],
    params: &RegParams,
    config: &SystemConfig,
) -> Result<DistributionReport> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("need at least one solved instance".into()));
    }
    let star = minimize_a(params, config)?;
    distribution_check_at(samples, &star, &CLUSTER_EPSILONS)
}

pub fn distribution_check_at(
    samples: &[Array1<f64>],
    star: &FixedPointSolution,
    epsilons: &[f64],
) -> Result<DistributionReport> {
    let mut linf_sum = 0.0;
    let mut m2_sum = 0.0;
    let mut m1_sum = 0.0;
    let mut total = 0usize;
    for x in samples {
        linf_sum += x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        m2_sum += x.iter().map(|v| v * v).sum::<f64>();
        m1_sum += x.iter().map(|v| v.abs()).sum::<f64>();
        total += x.len();
    }
    let linf_mean = linf_sum / samples.len() as f64;
    let m2_theory = crate::scalar::trunc_moments(star.tau2, star.gamma, star.a).second_moment;
    let m1_theory = crate::scalar::trunc_abs_moment(star.tau2, star.gamma, star.a);
    let cluster = epsilons
        .iter()
        .map(|&eps| ClusterRow {
            epsilon: eps,
            theory: cluster_proportion_at(star, eps),
            empirical: empirical_cluster_fraction(samples, eps),
        })
        .collect();
    Ok(DistributionReport {
        a_star: star.a,
        linf_mean,
        linf_rel_err: (linf_mean - star.a).abs() / star.a,
        second_moment_theory: m2_theory,
        second_moment_emp: m2_sum / total as f64,
        abs_moment_theory: m1_theory,
        abs_moment_emp: m1_sum / total as f64,
        cluster,
    })
}

/// Predicted SEP for the resolved parameters of a trial configuration.
pub fn sep_theory(tc: &TrialConfig) -> Result<f64> {
    let params = tc.params.resolve(&tc.config)?;
    let star = minimize_a(&params, &tc.config)?;
    let ch = effective_channel_sign_at(&star, tc.config.delta);
    Ok(sep_predict(&ch, tc.config.sigma2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_is_seed_deterministic() {
        let a = gen_channel(32, 64, 123);
        let b = gen_channel(32, 64, 123);
        assert_eq!(a, b);
        let c = gen_channel(32, 64, 124);
        assert_ne!(a, c);
    }

    #[test]
    fn channel_entry_variance() {
        let (k, n) = (128, 1024);
        let h = gen_channel(k, n, 7);
        let var = h.iter().map(|v| v * v).sum::<f64>() / (k * n) as f64;
        let expect = 1.0 / k as f64;
        // 3 standard errors of the sample variance of k·n >= 1e5 Gaussians
        let se = expect * (2.0 / ((k * n) as f64)).sqrt();
        assert!((var - expect).abs() < 3.0 * se, "{var} vs {expect}");
    }

    #[test]
    fn symbols_pm_one_and_balanced() {
        let s = gen_symbols(4096, 99);
        assert!(s.iter().all(|&v| v == 1.0 || v == -1.0));
        let mean = s.iter().sum::<f64>() / 4096.0;
        assert!(mean.abs() < 3.0 / (4096.0f64).sqrt());
        assert_eq!(s, gen_symbols(4096, 99));
    }

    #[test]
    fn substream_seeds_are_distinct() {
        let a = substream_seed(1, 0, StreamId::Channel);
        let b = substream_seed(1, 0, StreamId::Symbols);
        let c = substream_seed(1, 1, StreamId::Channel);
        let d = substream_seed(2, 0, StreamId::Channel);
        assert!(a != b && a != c && a != d && b != c);
    }

    fn small_tc(backend: PrecoderBackend, trials: usize, seed: u64) -> TrialConfig {
        TrialConfig {
            config: SystemConfig::with_antennas(0.5, 0.1, 64).unwrap(),
            params: ParamSelector::Explicit(RegParams { rho: 0.2, lambda: 0.2 }),
            trials,
            seed,
            backend,
        }
    }

    #[test]
    fn run_trials_bitwise_reproducible() {
        let tc = small_tc(PrecoderBackend::Amp, 20, 5);
        let a = run_trials(&tc).unwrap();
        let b = run_trials(&tc).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn huge_noise_gives_coin_flip() {
        let mut tc = small_tc(PrecoderBackend::Amp, 50, 11);
        tc.config.sigma2 = 1e8;
        let r = run_trials(&tc).unwrap();
        assert!((r.sep_empirical - 0.5).abs() < 4.0 * r.sep_stderr, "{}", r.sep_empirical);
    }

    #[test]
    fn backends_agree_within_stderr() {
        let tc_amp = small_tc(PrecoderBackend::Amp, 60, 17);
        let tc_or = small_tc(PrecoderBackend::Oracle, 60, 17);
        let ra = run_trials(&tc_amp).unwrap();
        let ro = run_trials(&tc_or).unwrap();
        let combined = (ra.sep_stderr.powi(2) + ro.sep_stderr.powi(2)).sqrt();
        assert!(
            (ra.sep_empirical - ro.sep_empirical).abs() <= 2.0 * combined,
            "amp {} vs oracle {} (combined se {})",
            ra.sep_empirical,
            ro.sep_empirical,
            combined
        );
    }

    #[test]
    fn stderr_scales_with_sample_count() {
        let r1 = run_trials(&small_tc(PrecoderBackend::Amp, 16, 3)).unwrap();
        let r4 = run_trials(&small_tc(PrecoderBackend::Amp, 64, 3)).unwrap();
        let ratio = r1.sep_stderr / r4.sep_stderr;
        assert!(ratio > 1.4 && ratio < 2.9, "ratio {ratio}");
    }

    #[test]
    fn selector_resolution() {
        let config = SystemConfig::with_antennas(0.5, 0.04, 128).unwrap();
        let squid = ParamSelector::Squid.resolve(&config).unwrap();
        assert_eq!(squid.rho, 0.0);
        assert!((squid.lambda - 0.02).abs() < 1e-15);
        let opt = ParamSelector::Optimal.resolve(&config).unwrap();
        assert_eq!(opt.rho, 0.0);
        assert!(opt.lambda > 0.0);
    }

    #[test]
    fn distribution_check_smoke() {
        let config = SystemConfig::with_antennas(0.5, 0.1, 512).unwrap();
        let params = RegParams::new(0.2, 0.2).unwrap();
        let mut samples = Vec::new();
        for trial in 0..4u64 {
            let h = gen_channel(config.k, config.n, substream_seed(7, trial, StreamId::Channel));
            let s = gen_symbols(config.k, substream_seed(7, trial, StreamId::Symbols));
            samples.push(solve_crq(&h, &s, &params, 1e-8).unwrap().x_hat);
        }
        let report = distribution_check(&samples, &params, &config).unwrap();
        assert!(report.linf_rel_err < 0.10, "linf err {}", report.linf_rel_err);
        assert!(
            (report.second_moment_emp - report.second_moment_theory).abs()
                / report.second_moment_theory
                < 0.10
        );
        for row in &report.cluster {
            assert!((row.empirical - row.theory).abs() < 0.08, "{row:?}");
        }
    }
}
