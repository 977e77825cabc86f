//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs every criterion by default; pass criterion numbers (`1 4`) to run a
//! subset. Exits nonzero when any selected criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use cogisac::agent::PolicyKind;
use cogisac::array::{effective_channel, make_grid, steering, UpaConfig};
use cogisac::clutter::{ArAutocovariance, ArCoefficients, ChannelLayout, ClutterField, StudentTNoise};
use cogisac::detector::{
    asymptotic_pd, detect_frame, marcum_q1, noncentrality, threshold, wald_statistic_known, BinObservation,
    DetectorConfig,
};
use cogisac::optimizer::{
    design_covariance, radar_reference, tradeoff_objective, tradeoff_waveform, TradeoffConfig, TransmitCovariance,
};
use cogisac::report::{self, OutputFormat, PD_TABLE, SUMRATE_TABLE};
use cogisac::simkit::{
    mean_and_stderr, run_monte_carlo_policy, scenario_library, sequential7_desk, stationary4_desk, MonteCarloLog,
    ScenarioSpec, DESK_BURN_IN, DESK_MC_RUNS,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type CMat = DMatrix<Complex64>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn random_matrix<R: Rng>(rng: &mut R, r: usize, cols: usize) -> CMat {
    CMat::from_fn(r, cols, |_, _| cn(rng))
}

fn paper_clutter() -> ClutterField {
    ClutterField::new(ArCoefficients::reference(), StudentTNoise::new(2.0, 1.0).unwrap(), DESK_BURN_IN).unwrap()
}

fn isotropic_channel(upa: &UpaConfig, nu_x: f64, nu_y: f64) -> Vec<Complex64> {
    let r = TransmitCovariance::isotropic(upa.n_t(), 1.0).unwrap();
    let a_t = steering(upa.tx_x, upa.tx_y, nu_x, nu_y);
    let a_r = steering(upa.rx_x, upa.rx_y, nu_x, nu_y);
    effective_channel(a_t.as_slice(), a_r.as_slice(), r.matrix()).unwrap()
}

// ---- criterion 1 ---------------------------------------------------------

/// Projected gradient on `‖X‖² = c` for `tr(X^H Q X) − 2Re tr(X^H G)`.
fn sphere_oracle(q: &CMat, g: &CMat, radius2: f64, iters: usize) -> CMat {
    let step = 0.5 / q.clone().symmetric_eigenvalues().iter().map(|v| v.abs()).fold(1e-12, f64::max);
    let project = |x: CMat| {
        let n = x.norm();
        x * c(radius2.sqrt() / n)
    };
    let mut x = project(g.clone());
    for _ in 0..iters {
        let grad = (q * &x - g) * c(2.0);
        x = project(&x - grad * c(step));
    }
    x
}

/// Largest eigenvalue of a Hermitian matrix from its real `2n × 2n` form.
fn lambda_max_real(b: &CMat) -> f64 {
    let n = b.nrows();
    let m = DMatrix::<f64>::from_fn(2 * n, 2 * n, |i, j| {
        let z = b[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    m.symmetric_eigenvalues().max()
}

fn criterion_1() -> Outcome {
    let (n_t, k, l, p_t) = (8, 4, 12, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_power, mut worst_gap, mut worst_residual, mut worst_p2) = (0.0f64, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    let mut opp_beaten = 0;
    for _ in 0..50 {
        let a = random_matrix(&mut rng, n_t, n_t);
        let mut rd = &a * a.adjoint() + CMat::identity(n_t, n_t) * c(0.1);
        let tr = rd.trace().re;
        rd *= c(p_t / tr);
        let rd = TransmitCovariance::new(rd).unwrap();
        let h = random_matrix(&mut rng, k, n_t);
        let s = random_matrix(&mut rng, k, l);

        // (b) Procrustes reference
        let x0 = radar_reference(&h, &s, &rd).unwrap();
        let residual = (x0.matrix() * x0.matrix().adjoint() * c(1.0 / l as f64) - rd.matrix()).norm();
        worst_residual = worst_residual.max(residual);
        let f = rd.matrix().clone().cholesky().unwrap().l();
        let mine = (&h * x0.matrix() - &s).norm_squared();
        for _ in 0..200 {
            let z = random_matrix(&mut rng, l, n_t);
            let w = z.qr().q().adjoint();
            let x = &f * w * c((l as f64).sqrt());
            if (&h * x - &s).norm_squared() < mine - 1e-9 * mine {
                opp_beaten += 1;
            }
        }

        // (a) trade-off solver against the projected-gradient oracle
        let rho = rng.random_range(0.05..0.95);
        let sol = tradeoff_waveform(&h, &s, &x0, p_t, &TradeoffConfig::new(rho).unwrap()).unwrap();
        let target = l as f64 * p_t;
        worst_power = worst_power.max((sol.waveform.energy() - target).abs() / target);
        let q = h.adjoint() * &h * c(rho) + CMat::identity(n_t, n_t) * c(1.0 - rho);
        let g = h.adjoint() * &s * c(rho) + x0.matrix() * c(1.0 - rho);
        let oracle = sphere_oracle(&q, &g, target, 20_000);
        let ours = tradeoff_objective(&h, &s, x0.matrix(), sol.waveform.matrix(), rho);
        let theirs = tradeoff_objective(&h, &s, x0.matrix(), &oracle, rho);
        worst_gap = worst_gap.max((ours - theirs) / theirs.abs().max(f64::MIN_POSITIVE));

        // (c) beampattern design closed form
        let count = rng.random_range(1..=5);
        let grid = make_grid(11, 11).unwrap();
        let vs: Vec<Vec<Complex64>> = (0..count)
            .map(|_| {
                let b = grid.bin(rng.random_range(0..grid.len())).unwrap();
                steering(2, 4, b.nu_x, b.nu_y).conj()
            })
            .collect();
        let mut bh = CMat::zeros(n_t, n_t);
        for v in &vs {
            let v = nalgebra::DVector::from_column_slice(v);
            bh += &v * v.adjoint();
        }
        let (r, obj) = design_covariance(&vs, p_t).unwrap();
        let expected = p_t * lambda_max_real(&bh);
        let attained = (r.matrix() * &bh).trace().re;
        worst_p2 = worst_p2.max((obj - expected).abs() / expected).max((attained - expected).abs() / expected);
    }
    let pass = worst_power <= 1e-6 && worst_gap <= 1e-6 && worst_residual < 1e-8 && opp_beaten == 0 && worst_p2 <= 1e-9;
    outcome(
        pass,
        format!(
            "TRS power err {worst_power:.1e}, objective gap {worst_gap:.1e}; OPP residual {worst_residual:.1e}, \
             beaten by {opp_beaten}/10000 feasible points; P2 err {worst_p2:.1e}"
        ),
    )
}

// ---- criterion 2 ---------------------------------------------------------

fn criterion_2() -> Outcome {
    let upa = UpaConfig::square(4, 4).unwrap();
    let grid = make_grid(11, 11).unwrap();
    let channels: Vec<Vec<Complex64>> = grid.bins().iter().map(|b| isotropic_channel(&upa, b.nu_x, b.nu_y)).collect();
    let config = DetectorConfig {
        p_fa: 1e-2,
        ..DetectorConfig::default()
    };
    let mut gen = paper_clutter().generator().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let trials = 100_000;
    let mut alarms = 0;
    for t in 0..trials {
        let h = &channels[t % channels.len()];
        let y = gen.generate_channels(&upa, ChannelLayout::Line, &mut rng);
        let frame = detect_frame(
            &[BinObservation {
                channel: h,
                received: &y,
            }],
            &config,
        )
        .unwrap();
        alarms += frame.count;
    }
    let rate = alarms as f64 / trials as f64;
    outcome(
        (0.5e-2..=2.0e-2).contains(&rate),
        format!("N = 256, lag {}, {trials} null trials: rate {rate:.4e} (band [5e-3, 2e-2])", config.lag_for(256)),
    )
}

// ---- criterion 3 ---------------------------------------------------------

fn criterion_3() -> Outcome {
    // 4x4 transmit and 8x8 receive panels: N = 1024
    let upa = UpaConfig::new(4, 4, 8, 8).unwrap();
    let h = isotropic_channel(&upa, 0.1, -0.3);
    let gamma = ArAutocovariance::new(&ArCoefficients::reference(), 1.0, 60).unwrap();
    let quad = gamma.quadratic_form(&h, &upa, ChannelLayout::Line);
    let unit = noncentrality(c(1.0), &h, quad);
    let eta = threshold(1e-2).unwrap();
    let mut gen = paper_clutter().generator().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let trials = 10_000;
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for kappa in [4.0, 10.0, 20.0] {
        let mag = (kappa / unit).sqrt();
        let mut hits = 0;
        for _ in 0..trials {
            let alpha = Complex64::from_polar(mag, rng.random::<f64>() * 2.0 * PI);
            let mut y = gen.generate_channels(&upa, ChannelLayout::Line, &mut rng);
            for (yi, hi) in y.iter_mut().zip(&h) {
                *yi += alpha * hi;
            }
            if wald_statistic_known(&h, &y, quad).unwrap() > eta {
                hits += 1;
            }
        }
        let empirical = hits as f64 / trials as f64;
        let predicted = asymptotic_pd(kappa, eta);
        worst = worst.max((empirical - predicted).abs());
        parts.push(format!("κ {kappa}: {empirical:.3} vs {predicted:.3}"));
    }
    outcome(worst <= 0.05, format!("{}; max |Δ| {worst:.3} (tol 0.05)", parts.join(", ")))
}

// ---- criterion 4 ---------------------------------------------------------

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `∫_b^∞ x·e^{−(x−a)²/2}·e^{−ax}I₀(ax) dx` with `e^{−z}I₀(z)` from its
/// integral representation.
fn marcum_quadrature(a: f64, b: f64) -> f64 {
    let i0e = |z: f64| simpson(&|t: f64| (z * (t.cos() - 1.0)).exp(), 0.0, PI, 1e-12) / PI;
    let f = |x: f64| x * (-(x - a) * (x - a) / 2.0).exp() * i0e(a * x);
    let hi = a.max(b) + 40.0;
    let mut total = 0.0;
    let mut lo = b;
    while lo < hi {
        let up = (lo + 1.0).min(hi);
        total += simpson(&f, lo, up, 1e-11);
        lo = up;
    }
    total
}

fn criterion_4() -> Outcome {
    let mut central = 0.0f64;
    for i in 0..=200 {
        let b = i as f64 * 0.05;
        central = central.max((marcum_q1(0.0, b) - (-0.5 * b * b).exp()).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = rng.random_range(0.0..12.0);
        let b = rng.random_range(0.0..12.0);
        worst = worst.max((marcum_q1(a, b) - marcum_quadrature(a, b)).abs());
    }
    outcome(
        central <= 1e-12 && worst <= 1e-8,
        format!("Q₁(0,b) err {central:.1e} (tol 1e-12); random pairs err {worst:.1e} (tol 1e-8)"),
    )
}

// ---- criteria 5-7 --------------------------------------------------------

fn log_for(spec: &ScenarioSpec, policy: PolicyKind) -> MonteCarloLog {
    run_monte_carlo_policy(&spec.compile().unwrap(), policy).unwrap()
}

/// Mean and standard error over runs of target `t`'s detection rate in
/// pulses `first..=last`.
fn window_detection(log: &MonteCarloLog, t: usize, first: usize, last: usize) -> (f64, f64) {
    log.window_stat(first, last, |rec| match rec.detections[t] {
        Some(true) => 1.0,
        _ => 0.0,
    })
}

fn crossing(v: Option<usize>) -> String {
    v.map_or("never".into(), |p| p.to_string())
}

fn criterion_5() -> Outcome {
    let mut spec = stationary4_desk();
    spec.rho = 0.2;
    spec.mc_runs = DESK_MC_RUNS;
    let p = spec.pulses;
    let rl = log_for(&spec, PolicyKind::Rl);
    let nrl = log_for(&spec, PolicyKind::Nrl);
    let orth = log_for(&spec, PolicyKind::Orthogonal);
    let steady = |log: &MonteCarloLog, t: usize| log.window_pd(t, p - 9, p).unwrap();
    let (rl1, rl2) = (steady(&rl, 0), steady(&rl, 1));
    let (or1, or2) = (steady(&orth, 0), steady(&orth, 1));
    let margin = (rl1 - or1 >= 0.3) && (rl2 - or2 >= 0.3);
    let (c_rl, c_nrl) = (rl.first_crossing(1, 0.5), nrl.first_crossing(1, 0.5));
    let later = match (c_rl, c_nrl) {
        (Some(a), Some(b)) => b > a,
        (Some(_), None) => true,
        _ => false,
    };
    outcome(
        margin && later,
        format!(
            "offset {} dB, {} runs: steady P_D t1 RL {rl1:.3} / NRL {:.3} / orth {or1:.3}, \
             t2 RL {rl2:.3} / NRL {:.3} / orth {or2:.3}; t2 crosses 0.5 at RL {} vs NRL {}",
            spec.snr_offset_db,
            spec.mc_runs,
            steady(&nrl, 0),
            steady(&nrl, 1),
            crossing(c_rl),
            crossing(c_nrl)
        ),
    )
}

fn criterion_6() -> Outcome {
    let base = stationary4_desk();
    let p = base.pulses;
    let mut rates = Vec::new();
    let mut weakest = Vec::new();
    for rho in [0.2, 0.4, 0.6, 0.8] {
        let mut spec = base.clone();
        spec.rho = rho;
        let log = log_for(&spec, PolicyKind::Rl);
        rates.push(log.window_stat(p - 9, p, |r| r.normalized_sum_rate));
        // target 1 carries the lowest SNR
        weakest.push(window_detection(&log, 0, p - 9, p));
    }
    let tie = |a: (f64, f64), b: (f64, f64)| (a.1 * a.1 + b.1 * b.1).sqrt();
    let rate_ok = rates.windows(2).all(|w| w[1].0 >= w[0].0 - tie(w[0], w[1]));
    let pd_ok = weakest.windows(2).all(|w| w[1].0 <= w[0].0 + tie(w[0], w[1]));
    let fmt = |v: &[(f64, f64)]| v.iter().map(|(m, s)| format!("{m:.3}±{s:.3}")).collect::<Vec<_>>().join(" ");
    outcome(
        rate_ok && pd_ok,
        format!("ρ 0.2..0.8: normalized sum rate {}; weakest-target P_D {}", fmt(&rates), fmt(&weakest)),
    )
}

/// Per-run difference of mean sum rate, pulses 1-20 minus 101-120.
fn early_minus_late(log: &MonteCarloLog) -> (f64, f64) {
    let window = |r: &cogisac::simkit::RunLog, a: usize, b: usize| {
        r.pulses[a - 1..b].iter().map(|p| p.sum_rate).sum::<f64>() / (b + 1 - a) as f64
    };
    let d: Vec<f64> = log.runs.iter().map(|r| window(r, 1, 20) - window(r, 101, 120)).collect();
    mean_and_stderr(&d)
}

fn criterion_7() -> Outcome {
    let mut low = sequential7_desk();
    low.rho = 0.2;
    let mut high = low.clone();
    high.rho = 0.8;
    let (d_low, s_low) = early_minus_late(&log_for(&low, PolicyKind::Rl));
    let (d_high, s_high) = early_minus_late(&log_for(&high, PolicyKind::Rl));
    let pass = d_low >= 3.0 * s_low && d_high.abs() <= 2.0 * s_high;
    outcome(
        pass,
        format!(
            "rate[1,20] − rate[101,120]: ρ 0.2 {d_low:.3}±{s_low:.3} (needs ≥ 3σ), \
             ρ 0.8 {d_high:.3}±{s_high:.3} (needs within 2σ of 0)"
        ),
    )
}

// ---- criterion 8 ---------------------------------------------------------

fn write_outputs(spec: &ScenarioSpec, threads: usize, dir: &Path) -> Vec<Vec<u8>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let log = pool.install(|| log_for(spec, spec.policy));
    let mut files = Vec::new();
    for format in [OutputFormat::Csv, OutputFormat::Json] {
        let pd = report::write_table(dir, PD_TABLE, &report::pd_rows(&log), format).unwrap();
        let rate = report::write_table(dir, SUMRATE_TABLE, &report::sumrate_rows(&log), format).unwrap();
        files.push(std::fs::read(pd).unwrap());
        files.push(std::fs::read(rate).unwrap());
    }
    files
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut mismatches = Vec::new();
    for mut spec in scenario_library() {
        // shortened so the full-scale arrays fit the time budget
        spec.set_pulses(spec.pulses.min(if spec.array.n_t() > 16 { 2 } else { 6 }));
        spec.mc_runs = 3;
        spec.seed = 7;
        let runs: Vec<Vec<Vec<u8>>> = [(1, "a"), (1, "b"), (3, "c")]
            .iter()
            .map(|&(threads, tag)| {
                let dir = tmp.path().join(format!("{}-{tag}", spec.name));
                std::fs::create_dir_all(&dir).unwrap();
                write_outputs(&spec, threads, &dir)
            })
            .collect();
        if runs[0] != runs[1] || runs[0] != runs[2] {
            mismatches.push(spec.name.clone());
        }
    }
    outcome(
        mismatches.is_empty(),
        format!(
            "{} scenarios, two invocations plus 3 threads, CSV and JSON; mismatched: {:?}",
            scenario_library().len(),
            mismatches
        ),
    )
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "solver exactness", criterion_1),
        (2, "CFAR false-alarm rate", criterion_2),
        (3, "asymptotic P_D, known covariance", criterion_3),
        (4, "Marcum Q", criterion_4),
        (5, "stationary4-desk policy ranking", criterion_5),
        (6, "trade-off monotonicity in rho", criterion_6),
        (7, "sequential-appearance sum-rate effect", criterion_7),
        (8, "determinism", criterion_8),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {id} ({name}) [{:.0?}]: {}", start.elapsed(), o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
