//! The five workflows behind the subcommands. Each one reads a parsed config,
//! runs the corresponding library pipeline, and renders CSV or JSON with a
//! provenance header.

use serde_json::{json, Map, Value};

use crate::config::{
    noise_points, DistributionConfig, NoisePoint, OptimizeConfig, PredictConfig, SimulateConfig,
    SweepConfig,
};
use crate::CliError;
use crq_core::asymptotics::{effective_channel_sign_at, sep_predict};
use crq_core::fixed_point::{minimize_a, RegParams, SystemConfig};
use crq_core::optimal::{grid_search_sep, optimal_design};
use crq_core::oracle::solve_crq;
use crq_core::sim::{
    distribution_check_at, gen_channel, gen_symbols, run_trials, substream_seed, ParamSelector,
    StreamId, TrialConfig,
};

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn resolve_params(
    selector: &ParamSelector,
    delta: f64,
    sigma2: f64,
    n: usize,
) -> Result<RegParams, CliError> {
    let config = SystemConfig::with_antennas(delta, sigma2, n)
        .map_err(|e| CliError::Config(e.to_string()))?;
    selector.resolve(&config).map_err(|e| CliError::Numerical(e.to_string()))
}

/// Theory-only SEP table across noise levels.
pub fn cmd_predict(cfg: PredictConfig, hash: &str) -> Result<String, CliError> {
    let points = noise_points(&cfg.snr_db, &cfg.sigma2)?;
    let selector = cfg.params.to_selector()?;
    let mut out = format!("# config_hash={hash}\n");
    out.push_str("snr_db,rho,lambda,a_star,tau_star,gamma_star,alpha0,beta0,sep_theory\n");
    let mut failures = Vec::new();
    for p in &points {
        let row = predict_row(p, &selector, cfg.delta);
        match row {
            Ok(line) => out.push_str(&line),
            Err(e) => failures.push(format!("snr_db={}: {e}", p.snr_db)),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Numerical(failures.join("; ")));
    }
    Ok(out)
}

fn predict_row(p: &NoisePoint, selector: &ParamSelector, delta: f64) -> Result<String, CliError> {
    let params = resolve_params(selector, delta, p.sigma2, 1024)?;
    let config = SystemConfig::with_antennas(delta, p.sigma2, 1024)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let star = minimize_a(&params, &config).map_err(|e| CliError::Numerical(e.to_string()))?;
    let ch = effective_channel_sign_at(&star, delta);
    let sep = sep_predict(&ch, p.sigma2);
    Ok(format!(
        "{},{},{},{},{},{},{},{},{}\n",
        fmt17(p.snr_db),
        fmt17(params.rho),
        fmt17(params.lambda),
        fmt17(star.a),
        fmt17(star.tau()),
        fmt17(star.gamma),
        fmt17(ch.alpha_bar),
        fmt17(ch.beta_bar),
        fmt17(sep)
    ))
}

/// Closed-form optimal design record.
pub fn cmd_optimize(cfg: OptimizeConfig, hash: &str) -> Result<String, CliError> {
    let points = noise_points(&cfg.snr_db, &cfg.sigma2)?;
    let mut records = Vec::new();
    for p in &points {
        let d = optimal_design(cfg.delta, p.sigma2)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        let params =
            RegParams::new(0.0, d.lambda_hat).map_err(|e| CliError::Numerical(e.to_string()))?;
        let config = SystemConfig::asymptotic(cfg.delta, p.sigma2)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let star = minimize_a(&params, &config).map_err(|e| CliError::Numerical(e.to_string()))?;
        let sep = sep_predict(&effective_channel_sign_at(&star, cfg.delta), p.sigma2);
        let mut rec = Map::new();
        rec.insert("snr_db".into(), num(p.snr_db));
        rec.insert("sigma2".into(), num(p.sigma2));
        rec.insert("z_hat".into(), num(d.z_hat));
        rec.insert("z0".into(), num(d.z0));
        rec.insert("a_hat".into(), num(d.a_hat));
        rec.insert("tau_hat".into(), num(d.tau_hat));
        rec.insert("lambda_hat".into(), num(d.lambda_hat));
        rec.insert("rho_hat".into(), num(d.rho_hat));
        rec.insert("sep_at_optimum".into(), num(sep));
        records.push(Value::Object(rec));
    }
    let doc = json!({
        "config_hash": hash,
        "delta": cfg.delta,
        "records": records,
    });
    serde_json::to_string_pretty(&doc)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Config(e.to_string()))
}

/// Monte Carlo SEP records with theory columns.
pub fn cmd_simulate(cfg: SimulateConfig, hash: &str) -> Result<String, CliError> {
    if cfg.trials == 0 {
        return Err(CliError::Config("trials must be >= 1".into()));
    }
    let points = noise_points(&cfg.snr_db, &cfg.sigma2)?;
    let selector = cfg.params.to_selector()?;
    let mut records = Vec::new();
    for p in &points {
        let config = SystemConfig::with_antennas(cfg.delta, p.sigma2, cfg.n)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let tc = TrialConfig {
            config,
            params: selector,
            trials: cfg.trials,
            seed: cfg.seed,
            backend: cfg.backend,
        };
        let theory = crq_core::sim::sep_theory(&tc).map_err(|e| CliError::Numerical(e.to_string()))?;
        let result = run_trials(&tc).map_err(|e| CliError::Numerical(e.to_string()))?;
        let params = selector.resolve(&config).map_err(|e| CliError::Numerical(e.to_string()))?;
        records.push(json!({
            "snr_db": p.snr_db,
            "config": { "delta": cfg.delta, "n": config.n, "k": config.k, "sigma2": p.sigma2 },
            "params": { "rho": params.rho, "lambda": params.lambda },
            "sep_theory": theory,
            "sep_empirical": result.sep_empirical,
            "sep_stderr": result.sep_stderr,
            "alpha_emp": result.alpha_emp,
            "beta_emp": result.beta_emp,
            "linf_mean": result.linf_mean,
            "trials_used": result.trials_used,
            "failures": result.failures,
        }));
    }
    let doc = json!({ "config_hash": hash, "records": records });
    serde_json::to_string_pretty(&doc)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Config(e.to_string()))
}

fn grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0) || max < min {
        return Err(CliError::Config(format!(
            "invalid grid: min {min}, max {max}, step {step}"
        )));
    }
    let count = ((max - min) / step).round() as usize;
    Ok((0..=count).map(|i| min + step * i as f64).collect())
}

/// Predicted-SEP grid over (ρ, λ) as CSV.
pub fn cmd_sweep(cfg: SweepConfig, hash: &str) -> Result<String, CliError> {
    let points = noise_points(&cfg.snr_db, &cfg.sigma2)?;
    if points.len() != 1 {
        return Err(CliError::Config("sweep expects exactly one noise level".into()));
    }
    let rho_grid = grid(cfg.rho_min, cfg.rho_max, cfg.rho_step)?;
    let lambda_grid = grid(cfg.lambda_min, cfg.lambda_max, cfg.lambda_step)?;
    let table = grid_search_sep(cfg.delta, points[0].sigma2, &rho_grid, &lambda_grid)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok(format!("# config_hash={hash}\n{}", table.to_csv()))
}

/// Clustering-proportion table (theory and empirical columns) per δ.
pub fn cmd_distribution(cfg: DistributionConfig, hash: &str) -> Result<String, CliError> {
    let points = noise_points(&cfg.snr_db, &cfg.sigma2)?;
    if points.len() != 1 {
        return Err(CliError::Config("distribution expects exactly one noise level".into()));
    }
    let sigma2 = points[0].sigma2;
    let selector = cfg.params.to_selector()?;
    let epsilons: Vec<f64> = cfg
        .epsilons
        .clone()
        .unwrap_or_else(|| (1..=20).map(|i| 0.02 * i as f64).collect());

    let mut curves = Vec::new();
    for &delta in &cfg.delta {
        let config = SystemConfig::with_antennas(delta, sigma2, cfg.n)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let params = selector.resolve(&config).map_err(|e| CliError::Numerical(e.to_string()))?;
        let star = minimize_a(&params, &config).map_err(|e| CliError::Numerical(e.to_string()))?;
        let mut samples = Vec::new();
        for inst in 0..cfg.instances as u64 {
            let h = gen_channel(config.k, config.n, substream_seed(cfg.seed, inst, StreamId::Channel));
            let s = gen_symbols(config.k, substream_seed(cfg.seed, inst, StreamId::Symbols));
            let out = solve_crq(&h, &s, &params, 1e-8)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            samples.push(out.x_hat);
        }
        let report = distribution_check_at(&samples, &star, &epsilons)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        let table: Vec<Value> = report
            .cluster
            .iter()
            .map(|row| json!({ "epsilon": row.epsilon, "theory": row.theory, "empirical": row.empirical }))
            .collect();
        curves.push(json!({
            "delta": delta,
            "rho": params.rho,
            "lambda": params.lambda,
            "a_star": report.a_star,
            "linf_mean": report.linf_mean,
            "linf_rel_err": report.linf_rel_err,
            "second_moment_theory": report.second_moment_theory,
            "second_moment_emp": report.second_moment_emp,
            "abs_moment_theory": report.abs_moment_theory,
            "abs_moment_emp": report.abs_moment_emp,
            "table": table,
        }));
    }
    let doc = json!({ "config_hash": hash, "n": cfg.n, "sigma2": sigma2, "curves": curves });
    serde_json::to_string_pretty(&doc)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Config(e.to_string()))
}
