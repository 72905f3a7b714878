//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`).
//!
//! Criterion 5 defaults to the downscaled CI workload (10³ trials, 5σ);
//! set `CRQ_ACCEPTANCE_FULL=1` for the full 10⁴-trial run at 3σ.

use ndarray::Array1;
use rand::Rng;
use rand::SeedableRng;

use crq_core::amp::{amp_run, post_process, state_evolution};
use crq_core::asymptotics::{
    cluster_proportion_at, effective_channel_sign_at, sep_predict,
};
use crq_core::fixed_point::{
    f_prime, f_value, minimize_a, residual_gamma, residual_tau2, solve_fixed_point, RegParams,
    SystemConfig,
};
use crq_core::linalg::{matvec, stable_dot};
use crq_core::optimal::{optimal_design, grid_search_sep, z_sq_h, zeta_of_z};
use crq_core::oracle::{sign_pm1, solve_box, solve_crq_with, squid_params};
use crq_core::scalar::{expect_through_clamp, trunc_moments, Weight};
use crq_core::sim::{
    gen_channel, gen_symbols, run_trials, substream_seed, ParamSelector, PrecoderBackend,
    StreamId, TrialConfig,
};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {id:02} {name}: {verdict} {detail}");
}

#[test]
fn criterion_01_fixed_point_correctness() {
    let start = std::time::Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(101);
    let mut max_r = 0.0f64;
    let mut max_q = 0.0f64;
    for _ in 0..100 {
        let a: f64 = rng.gen_range(0.01..5.0);
        let rho: f64 = rng.gen_range(0.0..2.0);
        let lambda: f64 = rng.gen_range(0.01..1.0);
        let delta: f64 = rng.gen_range(0.1..2.5);
        let params = RegParams::new(rho, lambda).unwrap();
        let config = SystemConfig::asymptotic(delta, 0.1).unwrap();
        let fp = solve_fixed_point(a, &params, &config).unwrap();
        let r1 = residual_tau2(fp.tau2, fp.gamma, a, delta).abs();
        let r2 = residual_gamma(fp.tau2, fp.gamma, a, delta, params.rho_eff()).abs();
        max_r = max_r.max(r1).max(r2);

        let closed = trunc_moments(fp.tau2, fp.gamma, a).second_moment;
        let g = |x: f64| x * x;
        let quad = expect_through_clamp(&g, &[], fp.tau(), fp.gamma, a, Weight::One).unwrap();
        max_q = max_q.max((closed - quad).abs());
    }
    let elapsed = start.elapsed();
    let pass = max_r <= 1e-12 && max_q <= 1e-8 && elapsed.as_secs_f64() < 1.0;
    report(
        1,
        "fixed-point correctness",
        pass,
        &format!("(max residual {max_r:.2e}, max quadrature gap {max_q:.2e}, {elapsed:?})"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_f_prime_calibration() {
    let limit = f_prime(0.0, &RegParams::new(0.2, 0.2).unwrap(), &SystemConfig::asymptotic(0.5, 0.1).unwrap()).unwrap();
    let expect = -2.0 * (2.0 / std::f64::consts::PI).sqrt();
    let zero_ok = (limit - expect).abs() <= 1e-9;

    let h = 1e-5;
    let mut max_gap = 0.0f64;
    for &(rho, lam, delta) in &[(0.2, 0.2, 0.5), (0.05, 0.4, 0.25), (1.0, 0.1, 1.0), (0.0, 0.3, 0.5), (0.5, 0.05, 2.0)] {
        let params = RegParams::new(rho, lam).unwrap();
        let config = SystemConfig::asymptotic(delta, 0.1).unwrap();
        for i in 1..=12 {
            let a = 0.25 * i as f64;
            let an = f_prime(a, &params, &config).unwrap();
            let fd = (f_value(a + h, &params, &config).unwrap()
                - f_value(a - h, &params, &config).unwrap())
                / (2.0 * h);
            max_gap = max_gap.max((an - fd).abs());
        }
    }
    let fd_ok = max_gap <= 1e-4;
    let pass = zero_ok && fd_ok;
    report(
        2,
        "f' calibration",
        pass,
        &format!("(f'(0) gap {:.2e}, max FD gap {max_gap:.2e})", (limit - expect).abs()),
    );
    assert!(pass);
}

#[test]
fn criterion_03_amp_equals_oracle() {
    // Clause (a): per-seed iterate agreement at N = 512.
    //
    // Known red (see the repository notes): the Onsager coefficient of the
    // recursion is the empirical interior fraction, whose CLT fluctuation at
    // N = 512 displaces the AMP fixed point from the box optimum by a median
    // of ~2.3e-3 > 1e-3 regardless of solver tolerances. The squared form of
    // the underlying limit statement passes with two orders of margin; the
    // criterion is asserted as written.
    let n = 512usize;
    let delta = 0.5;
    let rho = 0.2;
    let config = SystemConfig::with_antennas(delta, 0.1, n).unwrap();
    let params = RegParams::new(rho, 0.2).unwrap();
    let star = minimize_a(&params, &config).unwrap();
    let mut dists = Vec::new();
    for seed in 0..20u64 {
        let h = gen_channel(config.k, n, substream_seed(303, seed, StreamId::Channel));
        let s = gen_symbols(config.k, substream_seed(303, seed, StreamId::Symbols));
        let (state, _) = amp_run(&h, &s, star.a, star.gamma, 300, 1e-12, false).unwrap();
        let (x_box, _) = solve_box(&h, &s, star.a, rho, 1e-12).unwrap();
        let d = {
            let diff = &state.x - &x_box;
            (stable_dot(diff.view(), diff.view())).sqrt() / (n as f64).sqrt()
        };
        dists.push(d);
    }
    let max_d = dists.iter().cloned().fold(0.0f64, f64::max);
    let mean_d = dists.iter().sum::<f64>() / dists.len() as f64;
    let iterate_ok = dists.iter().all(|&d| d <= 1e-3);

    // Clause (b): state evolution matches the empirical ⟨r²⟩ at N = 4096.
    let big_n = 4096usize;
    let big = SystemConfig::with_antennas(delta, 0.1, big_n).unwrap();
    let star_b = minimize_a(&params, &big).unwrap();
    let trace = state_evolution(star_b.a, star_b.gamma, delta, 11, 0.0);
    let h = gen_channel(big.k, big_n, substream_seed(304, 0, StreamId::Channel));
    let s = gen_symbols(big.k, substream_seed(304, 0, StreamId::Symbols));
    let (_, hist) = amp_run(&h, &s, star_b.a, star_b.gamma, 11, 0.0, true).unwrap();
    let hist = hist.unwrap();
    let mut max_rel = 0.0f64;
    for (t, row) in hist.iter().enumerate().take(11) {
        let theory = trace.tau2_seq[t];
        max_rel = max_rel.max((row.r_norm2 - theory).abs() / theory);
    }
    let se_ok = max_rel <= 0.05;

    report(
        3,
        "AMP = oracle",
        iterate_ok && se_ok,
        &format!(
            "(iterate distances: max {max_d:.2e}, mean {mean_d:.2e}, bound 1e-3 -> {}; SE tracking max rel {max_rel:.3} -> {})",
            if iterate_ok { "ok" } else { "exceeded" },
            if se_ok { "ok" } else { "exceeded" }
        ),
    );
    assert!(se_ok, "state-evolution tracking failed: {max_rel}");
    assert!(
        iterate_ok,
        "per-seed AMP-oracle distance exceeded 1e-3 (max {max_d:.2e}, mean {mean_d:.2e}); \
         the empirical-Onsager fixed point sits O(N^-1/2) from the box optimum at N = 512"
    );
}

#[test]
fn criterion_04_limit_distribution_desk_scale() {
    // (1/N)‖x̂‖² and ‖x̂‖∞ at N = 2048
    let n = 2048usize;
    let config = SystemConfig::with_antennas(0.5, 0.1, n).unwrap();
    let params = RegParams::new(0.2, 0.2).unwrap();
    let star = minimize_a(&params, &config).unwrap();
    let h = gen_channel(config.k, n, substream_seed(404, 0, StreamId::Channel));
    let s = gen_symbols(config.k, substream_seed(404, 0, StreamId::Symbols));
    let out = solve_crq_with(&h, &s, &params, 1e-8, true).unwrap();
    let m2_emp = out.x_hat.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let m2_theory = config.delta * (star.tau2 - 1.0);
    let m2_rel = (m2_emp - m2_theory).abs() / m2_theory;
    let linf_rel = (out.a_n - star.a).abs() / star.a;
    let moments_ok = m2_rel <= 0.05 && linf_rel <= 0.05;

    // Fig. 2-style cluster proportions at N = 128 under Theorem-4 parameters
    let sigma2 = 0.1;
    let n_small = 128usize;
    let instances = 24u64;
    let mut worst = 0.0f64;
    for &delta in &[0.1, 0.5, 0.9] {
        let design = optimal_design(delta, sigma2).unwrap();
        let params = RegParams::new(0.0, design.lambda_hat).unwrap();
        let config = SystemConfig::with_antennas(delta, sigma2, n_small).unwrap();
        let star = minimize_a(&params, &config).unwrap();
        let master = 405u64 ^ delta.to_bits();
        let mut samples = Vec::new();
        for inst in 0..instances {
            let h = gen_channel(config.k, n_small, substream_seed(master, inst, StreamId::Channel));
            let s = gen_symbols(config.k, substream_seed(master, inst, StreamId::Symbols));
            samples.push(solve_crq_with(&h, &s, &params, 1e-8, true).unwrap().x_hat);
        }
        for &eps in &[0.05, 0.1, 0.2] {
            let theory = cluster_proportion_at(&star, eps);
            let emp = crq_core::sim::empirical_cluster_fraction(&samples, eps);
            worst = worst.max((theory - emp).abs());
        }
    }
    let cluster_ok = worst <= 0.05;
    let pass = moments_ok && cluster_ok;
    report(
        4,
        "limit distribution at desk scale",
        pass,
        &format!("(m2 rel {m2_rel:.3}, linf rel {linf_rel:.3}, worst cluster gap {worst:.3})"),
    );
    assert!(pass);
}

#[test]
fn criterion_05_fig4_reproduction() {
    let full = std::env::var("CRQ_ACCEPTANCE_FULL").is_ok_and(|v| v == "1");
    let (trials, n_sigma) = if full { (10_000usize, 3.0) } else { (1_000usize, 5.0) };
    let n = 128usize;
    let snrs = [0.0, 3.0, 6.0, 9.0, 12.0, 15.0];
    let mut all_ok = true;
    let mut lines = Vec::new();
    for &(rho, lambda) in &[(0.2, 0.2), (0.0, 0.3)] {
        for &snr in &snrs {
            let sigma2 = crq_core::sim::sigma2_from_snr_db(snr);
            let config = SystemConfig::with_antennas(0.5, sigma2, n).unwrap();
            let tc = TrialConfig {
                config,
                params: ParamSelector::Explicit(RegParams { rho, lambda }),
                trials,
                seed: 505,
                backend: PrecoderBackend::Amp,
            };
            let theory = crq_core::sim::sep_theory(&tc).unwrap();
            if theory < 1e-3 {
                continue;
            }
            let r = run_trials(&tc).unwrap();
            let tol = (n_sigma * r.sep_stderr).max(0.15 * theory);
            let gap = (r.sep_empirical - theory).abs();
            let ok = gap <= tol;
            all_ok &= ok;
            lines.push(format!(
                "rho={rho} lambda={lambda} snr={snr}: emp {:.4e} vs theory {:.4e} (tol {:.1e}) {}",
                r.sep_empirical,
                theory,
                tol,
                if ok { "ok" } else { "MISS" }
            ));
        }
    }
    report(
        5,
        "Fig. 4 reproduction",
        all_ok,
        &format!("({} trials, {}σ; {} points)", trials, n_sigma, lines.len()),
    );
    for l in &lines {
        println!("    {l}");
    }
    assert!(all_ok, "{lines:?}");
}

#[test]
fn criterion_06_theorem4_self_consistency() {
    let rho_grid: Vec<f64> = (0..=30).map(|i| 0.01 * i as f64).collect();
    let lambda_grid: Vec<f64> = (1..=80).map(|i| 0.01 * i as f64).collect();
    let mut pass = true;
    let mut details = Vec::new();
    for &delta in &[0.25, 0.5, 1.0] {
        for &sigma2 in &[0.01, 0.0316, 0.1] {
            let design = optimal_design(delta, sigma2).unwrap();
            let params = RegParams::new(0.0, design.lambda_hat).unwrap();
            let config = SystemConfig::asymptotic(delta, sigma2).unwrap();
            let star = minimize_a(&params, &config).unwrap();
            let sep_opt = sep_predict(&effective_channel_sign_at(&star, delta), sigma2);

            let grid = grid_search_sep(delta, sigma2, &rho_grid, &lambda_grid).unwrap();
            let grid_min = grid.argmin.sep.unwrap();
            let beats_grid = sep_opt <= grid_min + 1e-15;

            let squid = squid_params(sigma2, config.k, config.n).unwrap();
            let star_sq = minimize_a(&squid, &config).unwrap();
            let sep_squid = sep_predict(&effective_channel_sign_at(&star_sq, delta), sigma2);
            let beats_squid = sep_opt <= sep_squid + 1e-15;

            pass &= beats_grid && beats_squid;
            details.push(format!(
                "delta={delta} sigma2={sigma2}: opt {sep_opt:.4e} grid-min {grid_min:.4e} squid {sep_squid:.4e}{}",
                if beats_grid && beats_squid { "" } else { " MISS" }
            ));
        }
    }
    report(6, "Theorem-4 optimality on the grid", pass, "");
    for d in &details {
        println!("    {d}");
    }
    assert!(pass, "{details:?}");
}

#[test]
fn criterion_07_fig5_anchor() {
    // default mapping: sigma2 = 10^(-SNR_dB/10)
    let sigma2 = crq_core::sim::sigma2_from_snr_db(15.0);
    let design = optimal_design(0.5, sigma2).unwrap();
    let pass = design.lambda_hat >= 0.165 && design.lambda_hat <= 0.205;
    report(
        7,
        "Fig. 5 anchor (lambda_hat at delta=0.5, 15 dB)",
        pass,
        &format!("(lambda_hat = {:.6})", design.lambda_hat),
    );
    assert!(pass);
}

#[test]
fn criterion_08_zeta_h_structure() {
    let mut pass = true;
    let mut notes = Vec::new();
    for &(delta, sigma2) in &[(0.25, 0.01), (0.5, 0.0316), (1.0, 0.1), (2.0, 0.05)] {
        // ζ(0) exact
        let zeta0 = zeta_of_z(0.0, delta, sigma2);
        let expect = -(std::f64::consts::PI / 2.0).sqrt() * delta;
        if zeta0 != expect {
            pass = false;
            notes.push(format!("zeta(0) mismatch at delta={delta}"));
        }
        // concavity
        let h = 1e-3;
        for i in 1..=80 {
            let z = 0.08 * i as f64;
            let dd = (zeta_of_z(z + h, delta, sigma2) - 2.0 * zeta_of_z(z, delta, sigma2)
                + zeta_of_z(z - h, delta, sigma2))
                / (h * h);
            if dd > 1e-9 {
                pass = false;
                notes.push(format!("zeta'' = {dd:.2e} > 0 at z={z}, delta={delta}"));
            }
        }
        // z²h increasing with the right limit
        let limit_gap = (z_sq_h(40.0, delta) - 1.0 / delta).abs();
        if limit_gap > 1e-10 {
            pass = false;
            notes.push(format!("z2h limit gap {limit_gap:.2e} at delta={delta}"));
        }
        let mut prev = 0.0;
        for i in 1..=400 {
            let z = 0.1 * i as f64;
            let v = z_sq_h(z, delta);
            let ok = if z <= 7.0 { v > prev } else { v >= prev };
            if !ok {
                pass = false;
                notes.push(format!("z2h not increasing at z={z}, delta={delta}"));
            }
            prev = v;
        }
        // root residual
        let design = optimal_design(delta, sigma2).unwrap();
        let resid = zeta_of_z(design.z_hat, delta, sigma2).abs();
        if resid > 1e-12 {
            pass = false;
            notes.push(format!("zeta residual {resid:.2e} at delta={delta}"));
        }
    }
    report(8, "zeta/h structural checks", pass, &format!("({} issues)", notes.len()));
    assert!(pass, "{notes:?}");
}

#[test]
fn criterion_09_effective_channel_match() {
    let n = 4096usize;
    let config = SystemConfig::with_antennas(0.5, 0.1, n).unwrap();
    let params = RegParams::new(0.2, 0.2).unwrap();
    let star = minimize_a(&params, &config).unwrap();
    let ch = effective_channel_sign_at(&star, config.delta);
    // per-instance stderr of the signal-gain estimate
    let stderr = ((ch.beta_bar + config.sigma2) / config.k as f64).sqrt();

    let seeds = [906u64, 907u64];
    let mut pass = true;
    let mut notes = Vec::new();
    for backend in ["amp", "oracle"] {
        let mut alphas = Vec::new();
        let mut betas = Vec::new();
        for &seed in &seeds {
            let h = gen_channel(config.k, n, substream_seed(seed, 0, StreamId::Channel));
            let s = gen_symbols(config.k, substream_seed(seed, 1, StreamId::Symbols));
            let (alpha, beta) = match backend {
                "amp" => {
                    let (state, _) =
                        amp_run(&h, &s, star.a, star.gamma, 300, 1e-9, false).unwrap();
                    let pp = post_process(
                        &state,
                        &h,
                        &s,
                        &crq_core::scalar::Quantizer::Sign,
                        star.gamma,
                        star.a,
                    )
                    .unwrap();
                    let beta =
                        stable_dot(pp.noise.view(), pp.noise.view()) / config.k as f64;
                    (pp.alpha_emp, beta)
                }
                _ => {
                    let out = solve_crq_with(&h, &s, &params, 1e-8, true).unwrap();
                    let hx = matvec(&h, &out.x_t);
                    let alpha = stable_dot(s.view(), hx.view()) / config.k as f64;
                    let resid = &hx - &(alpha * &s);
                    let beta = stable_dot(resid.view(), resid.view()) / config.k as f64;
                    (alpha, beta)
                }
            };
            alphas.push(alpha);
            betas.push(beta);
        }
        let alpha_mean = alphas.iter().sum::<f64>() / alphas.len() as f64;
        let beta_mean = betas.iter().sum::<f64>() / betas.len() as f64;
        let alpha_gap = (alpha_mean - ch.alpha_bar).abs();
        let alpha_tol = 3.0 * stderr / (seeds.len() as f64).sqrt();
        let beta_rel = (beta_mean - ch.beta_bar).abs() / ch.beta_bar;
        let ok = alpha_gap <= alpha_tol && beta_rel <= 0.10;
        pass &= ok;
        notes.push(format!(
            "{backend}: alpha {alpha_mean:.4} vs {:.4} (tol {alpha_tol:.4}), beta rel {beta_rel:.3}{}",
            ch.alpha_bar,
            if ok { "" } else { " MISS" }
        ));
    }
    report(9, "effective-channel match", pass, "");
    for d in &notes {
        println!("    {d}");
    }
    assert!(pass, "{notes:?}");
}

#[test]
fn criterion_10_symmetry_determinism() {
    let config = SystemConfig::with_antennas(0.5, 0.1, 96).unwrap();
    let params = RegParams::new(0.2, 0.2).unwrap();
    let star = minimize_a(&params, &config).unwrap();
    let h = gen_channel(config.k, config.n, 1001);
    let s = gen_symbols(config.k, 1002);

    // sign-flip oddness: AMP and oracle, bitwise
    let (amp_plus, _) = amp_run(&h, &s, star.a, star.gamma, 150, 1e-9, false).unwrap();
    let (amp_minus, _) =
        amp_run(&h, &s.mapv(|v| -v), star.a, star.gamma, 150, 1e-9, false).unwrap();
    let odd_amp = amp_plus.x.iter().zip(amp_minus.x.iter()).all(|(p, m)| *p == -*m);
    let crq_plus = solve_crq_with(&h, &s, &params, 1e-9, false).unwrap();
    let crq_minus = solve_crq_with(&h, &s.mapv(|v| -v), &params, 1e-9, false).unwrap();
    let odd_crq = crq_plus
        .x_hat
        .iter()
        .zip(crq_minus.x_hat.iter())
        .all(|(p, m)| *p == -*m)
        && crq_plus.x_t.iter().zip(crq_minus.x_t.iter()).all(|(p, m)| *p == -*m);

    // permutation equivariance, bitwise
    let n = config.n;
    let k = config.k;
    let cperm: Vec<usize> = (0..n).map(|i| (i * 11 + 5) % n).collect();
    let mut hc = h.clone();
    for (dst, &src) in cperm.iter().enumerate() {
        hc.column_mut(dst).assign(&h.column(src));
    }
    let (amp_col, _) = amp_run(&hc, &s, star.a, star.gamma, 150, 1e-9, false).unwrap();
    let col_amp_ok = cperm
        .iter()
        .enumerate()
        .all(|(dst, &src)| amp_col.x[dst] == amp_plus.x[src]);
    let crq_col = solve_crq_with(&hc, &s, &params, 1e-9, false).unwrap();
    let col_crq_ok = cperm
        .iter()
        .enumerate()
        .all(|(dst, &src)| crq_col.x_hat[dst] == crq_plus.x_hat[src]);

    let rperm: Vec<usize> = (0..k).map(|i| (i * 7 + 3) % k).collect();
    let mut hr = h.clone();
    let mut sr = s.clone();
    for (dst, &src) in rperm.iter().enumerate() {
        hr.row_mut(dst).assign(&h.row(src));
        sr[dst] = s[src];
    }
    let (amp_row, _) = amp_run(&hr, &sr, star.a, star.gamma, 150, 1e-9, false).unwrap();
    let row_ok = amp_row.x.iter().zip(amp_plus.x.iter()).all(|(a, b)| a == b)
        && rperm.iter().enumerate().all(|(dst, &src)| amp_row.z[dst] == amp_plus.z[src]);

    // bitwise reproducibility of the full harness
    let tc = TrialConfig {
        config,
        params: ParamSelector::Explicit(RegParams { rho: 0.2, lambda: 0.2 }),
        trials: 24,
        seed: 99,
        backend: PrecoderBackend::Amp,
    };
    let r1 = run_trials(&tc).unwrap();
    let r2 = run_trials(&tc).unwrap();
    let repro_ok = r1 == r2 && gen_channel(31, 43, 7) == gen_channel(31, 43, 7);

    // seeded rng changes with the seed (guards against degenerate derivation)
    let distinct_ok = gen_symbols(64, 1) != gen_symbols(64, 2);

    let pass = odd_amp && odd_crq && col_amp_ok && col_crq_ok && row_ok && repro_ok && distinct_ok;
    report(
        10,
        "symmetry and determinism",
        pass,
        &format!(
            "(odd amp {odd_amp}, odd crq {odd_crq}, col perm {col_amp_ok}/{col_crq_ok}, row perm {row_ok}, repro {repro_ok})"
        ),
    );
    assert!(pass);
}

#[test]
fn sign_quantizer_outputs_pm_one() {
    // small auxiliary check used by the harness contracts
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let v: f64 = rng.gen_range(-2.0..2.0);
        let s = sign_pm1(v);
        assert!(s == 1.0 || s == -1.0);
    }
    let zeros = Array1::<f64>::zeros(4).mapv(sign_pm1);
    assert!(zeros.iter().all(|&v| v == 1.0));
}
