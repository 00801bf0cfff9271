//! Recovery checks against generator ground truth.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use cpgp::cli::config::{FitConfig, ModelConfig};
use cpgp::cli::dsl::parse_kernel_spec;
use cpgp::cli::model::{build_kernel, fit_model, noise_inputs, FitSettings};
use cpgp::gp::fit_gp;
use cpgp::metrics::msll;
use cpgp::optim::OptConfig;
use cpgp::synth::{gen_changepoint, gen_oscillator, gen_regime, ChangepointSpec, NoiseSpec, OscillatorSpec, RegimeSpec};
use cpgp::vhgp::{fit_vhgp, NoiseModel, VhgpConfig};
use cpgp::Dataset;

const TAMAR: &str = "sw(cos2(theta),S)*sw(U,W)*poly2(U) + swneg(cos2(theta),S)*swneg(U,W)*se(U)";

#[test]
fn changepoint_location_and_gradient_are_recovered() {
    let spec_true = ChangepointSpec::default();
    let cfg = ModelConfig { kernel: "swneg(x,A)*se(x) + sw(x,A)*se(x)".into(), ..ModelConfig::default() };
    let mut hits = 0;
    let mut found = Vec::new();
    for seed in 0..10 {
        let (d, _) = gen_changepoint(&ChangepointSpec { seed, ..spec_true.clone() }).unwrap();
        let opt = OptConfig { restarts: 3, ..OptConfig::default() };
        let settings = FitSettings { optimizer: &opt, fit: &FitConfig::default(), vhgp: &VhgpConfig::default(), seed };
        let (model, _) = fit_model(&cfg, &d, &settings).unwrap();
        let x0 = model.params().get("switch.A.location").unwrap();
        let a = model.params().get("switch.A.gradient").unwrap();
        let ratio = a / spec_true.switch.gradient;
        if (x0 - spec_true.switch.location).abs() <= 0.5 && (0.5..=2.0).contains(&ratio) {
            hits += 1;
        }
        found.push((x0, a));
    }
    assert!(hits >= 8, "{hits}/10 recovered: {found:?}");
}

/// Frequency (Hz) of the largest bin of a moving-average-smoothed periodogram.
fn spectral_peak(x: &[f64], rate: f64, smooth: usize) -> f64 {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm_sqr()).collect();
    let half = smooth / 2;
    let smoothed: Vec<f64> = (0..power.len())
        .map(|k| {
            let (lo, hi) = (k.saturating_sub(half), (k + half + 1).min(power.len()));
            power[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let peak = (1..smoothed.len()).max_by(|&a, &b| smoothed[a].total_cmp(&smoothed[b])).unwrap();
    peak as f64 * rate / n as f64
}

#[test]
fn burst_spectra_peak_at_the_mode_frequencies() {
    let spec = OscillatorSpec::default();
    for seed in 0..3 {
        let (_, truth) = gen_oscillator(&OscillatorSpec { seed, ..spec.clone() }).unwrap();
        for (mode, series) in spec.modes.iter().zip(&truth.modes) {
            let f = spectral_peak(series, spec.sample_rate, 9);
            let rel = (f / mode.natural_freq_hz - 1.0).abs();
            assert!(rel <= 0.05, "seed {seed}: peak {f:.3} Hz vs {} Hz", mode.natural_freq_hz);
        }
    }
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k as f64;
        }
        r
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let m = (n - 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - m) * (y - m)).sum();
    let var: f64 = ra.iter().map(|x| (x - m) * (x - m)).sum();
    cov / var
}

struct HetRun {
    train: Dataset,
    test: Dataset,
    noise_truth: Vec<f64>,
    fitted_noise: Vec<f64>,
    gp: cpgp::gp::Posterior,
    vhgp: cpgp::gp::Posterior,
    bound_start: f64,
    bound_end: f64,
}

/// Tamar GP and its heteroscedastic refinement on raw (unstandardized) targets.
fn het_run(noise: NoiseSpec, seed: u64) -> HetRun {
    let spec = RegimeSpec { seed, n: 1300, noise, ..RegimeSpec::default() };
    let (d, truth) = gen_regime(&spec).unwrap();
    let train = d.select_rows(&(0..300).collect::<Vec<_>>());
    let test = d.select_rows(&(300..1300).collect::<Vec<_>>());
    let cfg = ModelConfig { kernel: TAMAR.into(), ..ModelConfig::default() };
    let tree = parse_kernel_spec(TAMAR, Some(train.inputs.names())).unwrap();
    let (expr, params, noise_entry) = build_kernel(&tree, &train.inputs, &cfg).unwrap();
    let opt = OptConfig { restarts: 3, seed, ..OptConfig::default() };
    let (gp, _) = fit_gp(&expr, &params, &noise_entry, &train, &train, &opt).unwrap();
    let nm = NoiseModel::se(noise_inputs(&expr, &cfg, &train.inputs).unwrap(), 1.0, 1.0).unwrap();
    let (h, rep) = fit_vhgp(&gp, nm, &VhgpConfig::default()).unwrap();
    let trace = cpgp::vhgp::bound_trace(&rep);
    HetRun {
        noise_truth: truth.noise_std[..300].to_vec(),
        fitted_noise: h.fitted_noise(),
        gp: gp.predict(&test.inputs).unwrap(),
        vhgp: h.predict(&test.inputs).unwrap(),
        bound_start: trace[0],
        bound_end: *trace.last().unwrap(),
        train,
        test,
    }
}

fn moments(y: &[f64]) -> (f64, f64) {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    (m, y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / y.len() as f64)
}

#[test]
fn heteroscedastic_fit_tracks_true_noise() {
    let r = het_run(NoiseSpec::LinearInSpeed { intercept: 0.05, slope: 0.03 }, 21);
    assert!(r.bound_end >= r.bound_start);
    let rho = spearman(&r.fitted_noise, &r.noise_truth);
    assert!(rho >= 0.8, "rank correlation {rho}");

    // intervals widen with wind speed
    let u = r.test.inputs.column("U").unwrap();
    let width = |lo: f64, hi: f64| {
        let w: Vec<f64> = (0..u.len()).filter(|&i| u[i] >= lo && u[i] < hi).map(|i| r.vhgp.var_noisy[i].sqrt()).collect();
        w.iter().sum::<f64>() / w.len() as f64
    };
    let ratio = width(28.0, 35.0) / width(0.0, 7.0);
    assert!(ratio > 2.0, "interval width ratio {ratio}");

    // 95% central intervals
    let covered = (0..r.test.len())
        .filter(|&i| (r.test.targets[i] - r.vhgp.mean[i]).abs() <= 1.959_963_985 * r.vhgp.var_noisy[i].sqrt())
        .count() as f64
        / r.test.len() as f64;
    assert!((0.90..=0.99).contains(&covered), "coverage {covered}");

    let (m0, v0) = moments(&r.train.targets);
    let mh = msll(&r.test.targets, &r.vhgp.mean, &r.vhgp.var_noisy, m0, v0).unwrap();
    let mg = msll(&r.test.targets, &r.gp.mean, &r.gp.var_noisy, m0, v0).unwrap();
    assert!(mh < mg, "vhgp {mh} vs gp {mg}");
}

#[test]
fn homoscedastic_data_is_left_unharmed() {
    let r = het_run(NoiseSpec::Constant { std: 0.1f64.sqrt() }, 22);
    let inside = r.fitted_noise.iter().filter(|v| (0.05..=0.2).contains(*v)).count() as f64 / r.fitted_noise.len() as f64;
    assert!(inside >= 0.9, "{inside} of fitted noise variances in [0.05, 0.2]");
    let (m0, v0) = moments(&r.train.targets);
    let mh = msll(&r.test.targets, &r.vhgp.mean, &r.vhgp.var_noisy, m0, v0).unwrap();
    let mg = msll(&r.test.targets, &r.gp.mean, &r.gp.var_noisy, m0, v0).unwrap();
    assert!(mh <= mg + 0.05, "vhgp {mh} vs gp {mg}");
}

#[test]
fn absent_lift_drives_its_variance_down() {
    let (d, _) = gen_regime(&RegimeSpec { seed: 5, n: 300, lift_coeff: 0.0, ..RegimeSpec::default() }).unwrap();
    let cfg = ModelConfig { kernel: TAMAR.into(), ..ModelConfig::default() };
    let tree = parse_kernel_spec(TAMAR, Some(d.inputs.names())).unwrap();
    let (_, params, _) = build_kernel(&tree, &d.inputs, &cfg).unwrap();
    let init = params.get("poly0.variance").unwrap();
    let opt = OptConfig { restarts: 3, ..OptConfig::default() };
    let settings = FitSettings { optimizer: &opt, fit: &FitConfig::default(), vhgp: &VhgpConfig::default(), seed: 5 };
    let (model, _) = fit_model(&cfg, &d, &settings).unwrap();
    let fitted = model.params().get("poly0.variance").unwrap();
    assert!(fitted <= 1e-2 * init, "poly0.variance {fitted:e} from {init:e}");
}
