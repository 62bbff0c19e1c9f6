//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any fails.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pairmix_core::augment::{
    halve_for_test_time, AudioAugSpecs, NoiseSpec, ReverbSpec, SpecAugmentSpec,
};
use pairmix_core::pairmix::{
    generated_count, pairmix, plan_batch, sample_gamma, sample_lambda, LambdaMode, MixWeights,
    PairMixConfig, Source,
};
use pairmix_core::pipeline::{run_augment, synth_corpus, Manifest, PipelineConfig, SAMPLES_FILE};
use pairmix_core::seed;
use pairmix_core::signal::{mel_transform, MelParams, MelSpectrogram, Waveform};
use pairmix_core::toy::{
    build_toy_model, mel_to_value, sweep_multi_tta, tta_experiment, write_csv, ExperimentCell,
    DEPTH, SWEEP_TUPLES,
};
use pairmix_core::tta::{
    augment_inputs, conventional_tta, execute, mid_tta, stabilized_predict, uniform_strategy,
    FnLayer, Layer, LayeredModel, Strategy, StrategySpec, Violation,
};
use rand::Rng;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, Check); 11] = [
        ("pairmix exactness", 1, c01_pairmix_exactness),
        ("mixup-level divergence", 1, c02_level_divergence),
        ("mel oracle", 30, c03_mel_oracle),
        ("sampler statistics", 5, c04_sampler_statistics),
        ("batch composition", 10, c05_batch_composition),
        ("strategy validation", 1, c06_strategy_validation),
        ("multi-tta reductions", 5, c07_tta_reductions),
        ("affine strategy invariance", 10, c08_affine_invariance),
        ("test-time halving", 1, c09_halving),
        ("variance trend", 120, c10_variance_trend),
        ("end-to-end determinism", 60, c11_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(&p))));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > Duration::from_secs(*limit) => {
                Err(format!("{detail}; took {elapsed:.2?}, limit {limit} s"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!(
                "criterion {:>2} PASS  {name} ({elapsed:.2?}): {detail}",
                i + 1
            ),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({elapsed:.2?}): {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn sine(freq: f64, amp: f64, seconds: f64, rate: u32) -> Waveform {
    let n = (seconds * f64::from(rate)) as usize;
    let samples = (0..n)
        .map(|t| (amp * (2.0 * PI * freq * t as f64 / f64::from(rate)).sin()) as f32)
        .collect();
    Waveform::new(samples, rate).unwrap()
}

fn noise(seconds: f64, rate: u32, rng_seed: u64) -> Waveform {
    let mut rng = seed::rng(rng_seed);
    let n = (seconds * f64::from(rate)) as usize;
    Waveform::new(
        (0..n).map(|_| rng.random_range(-0.5f32..0.5)).collect(),
        rate,
    )
    .unwrap()
}

fn bits(s: &MelSpectrogram) -> Vec<u32> {
    s.data().iter().map(|v| v.to_bits()).collect()
}

fn c01_pairmix_exactness() -> Result<String, String> {
    let p = MelParams::default();
    let a = sine(440.0, 0.4, 1.0, p.sample_rate);
    let b = noise(1.0, p.sample_rate, 11);
    let sources = [
        Source::new("a", a.clone(), "a dog barks"),
        Source::new("b", b.clone(), "rain falls"),
    ];
    let clean = [
        mel_transform(&a, &p).unwrap(),
        mel_transform(&b, &p).unwrap(),
    ];

    for i in 0..2 {
        for gamma in [0, 1] {
            let out = pairmix(&sources, &MixWeights::one_hot(2, i), gamma, &p, " ").unwrap();
            ensure(bits(&out.mel) == bits(&clean[i]), || {
                format!("one-hot {i}, gamma {gamma} is not M(a_{i})")
            })?;
        }
    }

    // Brute-force both levels with the same arithmetic and check γ picks one exactly.
    let w = MixWeights::new(vec![0.3, 0.7]).unwrap();
    let l = w.as_slice();
    let mixed: Vec<f32> = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| (0.0 + l[0] * f64::from(x) + l[1] * f64::from(y)) as f32)
        .collect();
    let s_w = mel_transform(&Waveform::new(mixed, p.sample_rate).unwrap(), &p).unwrap();
    let s_m: Vec<u32> = clean[0]
        .data()
        .iter()
        .zip(clean[1].data())
        .map(|(&x, &y)| ((0.0 + l[0] * f64::from(x) + l[1] * f64::from(y)) as f32).to_bits())
        .collect();
    let g1 = pairmix(&sources, &w, 1, &p, " ").unwrap();
    let g0 = pairmix(&sources, &w, 0, &p, " ").unwrap();
    ensure(bits(&g1.mel) == bits(&s_w), || {
        "gamma=1 is not the waveform-level mix".into()
    })?;
    ensure(bits(&g0.mel) == s_m, || {
        "gamma=0 is not the spectrogram-level mix".into()
    })?;
    ensure(g0.caption == "a dog barks rain falls", || {
        format!("caption {:?}", g0.caption)
    })?;
    Ok(
        "one-hot bit-exact for both sources and levels; gamma selects each level bit-exactly"
            .into(),
    )
}

fn c02_level_divergence() -> Result<String, String> {
    let p = MelParams::default();
    let a = sine(300.0, 0.5, 1.0, p.sample_rate);
    let b = sine(4000.0, 0.5, 1.0, p.sample_rate);
    let w = MixWeights::uniform(2);
    let mixed: Vec<f32> = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| 0.5 * x + 0.5 * y)
        .collect();
    let s_w = mel_transform(&Waveform::new(mixed, p.sample_rate).unwrap(), &p).unwrap();
    let (ma, mb) = (
        mel_transform(&a, &p).unwrap(),
        mel_transform(&b, &p).unwrap(),
    );
    let s_m: Vec<f32> = ma
        .data()
        .iter()
        .zip(mb.data())
        .map(|(x, y)| 0.5 * x + 0.5 * y)
        .collect();
    let gap = s_w
        .data()
        .iter()
        .zip(&s_m)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f32, f32::max);
    ensure(gap > 0.1, || format!("max cell gap {gap}"))?;

    let sources = [Source::new("a", a, "x"), Source::new("b", b, "y")];
    let lib_gap = pairmix(&sources, &w, 1, &p, " ")
        .unwrap()
        .mel
        .max_abs_diff(&pairmix(&sources, &w, 0, &p, " ").unwrap().mel)
        .unwrap();
    ensure(lib_gap > 0.1, || format!("library gap {lib_gap}"))?;
    Ok(format!(
        "max cell gap {gap:.3} (brute force), {lib_gap:.3} (library)"
    ))
}

/// Independent log-mel reference: explicit reflect padding, direct DFT and
/// a filterbank built from the Slaney formulas.
mod oracle {
    use std::f64::consts::PI;

    pub fn slaney_mel(hz: f64) -> f64 {
        if hz < 1000.0 {
            3.0 * hz / 200.0
        } else {
            15.0 + 27.0 * (hz / 1000.0).ln() / 6.4f64.ln()
        }
    }

    pub fn slaney_hz(mel: f64) -> f64 {
        if mel < 15.0 {
            200.0 * mel / 3.0
        } else {
            1000.0 * 6.4f64.powf((mel - 15.0) / 27.0)
        }
    }

    pub fn filterbank(sr: f64, n_fft: usize, n_mels: usize, fmin: f64, fmax: f64) -> Vec<Vec<f64>> {
        let freqs: Vec<f64> = (0..=n_fft / 2)
            .map(|k| k as f64 * sr / n_fft as f64)
            .collect();
        let (lo, hi) = (slaney_mel(fmin), slaney_mel(fmax));
        let pts: Vec<f64> = (0..n_mels + 2)
            .map(|i| slaney_hz(lo + i as f64 * (hi - lo) / (n_mels + 1) as f64))
            .collect();
        let mut fb = vec![vec![0.0; freqs.len()]; n_mels];
        for (m, row) in fb.iter_mut().enumerate() {
            let enorm = 2.0 / (pts[m + 2] - pts[m]);
            for (k, &f) in freqs.iter().enumerate() {
                let lower = (f - pts[m]) / (pts[m + 1] - pts[m]);
                let upper = (pts[m + 2] - f) / (pts[m + 2] - pts[m + 1]);
                let v = lower.min(upper);
                if v > 0.0 {
                    row[k] = v * enorm;
                }
            }
        }
        fb
    }

    /// Returns `[frame][mel]` natural-log mel power.
    pub fn log_mel(
        x: &[f32],
        sr: f64,
        n_fft: usize,
        hop: usize,
        n_mels: usize,
        fmin: f64,
        fmax: f64,
        floor: f64,
    ) -> Vec<Vec<f64>> {
        let pad = n_fft / 2;
        let n = x.len() as i64;
        let mut padded = Vec::with_capacity(x.len() + 2 * pad);
        for i in -(pad as i64)..n + pad as i64 {
            let j = if i < 0 {
                -i
            } else if i >= n {
                2 * (n - 1) - i
            } else {
                i
            };
            padded.push(f64::from(x[j as usize]));
        }
        let window: Vec<f64> = (0..n_fft)
            .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n_fft as f64).cos()))
            .collect();
        let cos: Vec<f64> = (0..n_fft)
            .map(|i| (2.0 * PI * i as f64 / n_fft as f64).cos())
            .collect();
        let sin: Vec<f64> = (0..n_fft)
            .map(|i| (2.0 * PI * i as f64 / n_fft as f64).sin())
            .collect();
        let fb = filterbank(sr, n_fft, n_mels, fmin, fmax);
        let frames = 1 + (padded.len() - n_fft) / hop;
        (0..frames)
            .map(|t| {
                let seg: Vec<f64> = (0..n_fft)
                    .map(|i| padded[t * hop + i] * window[i])
                    .collect();
                let power: Vec<f64> = (0..=n_fft / 2)
                    .map(|k| {
                        let (mut re, mut im) = (0.0, 0.0);
                        for (i, s) in seg.iter().enumerate() {
                            let idx = (k * i) % n_fft;
                            re += s * cos[idx];
                            im -= s * sin[idx];
                        }
                        re * re + im * im
                    })
                    .collect();
                fb.iter()
                    .map(|row| {
                        row.iter()
                            .zip(&power)
                            .map(|(w, p)| w * p)
                            .sum::<f64>()
                            .max(floor)
                            .ln()
                    })
                    .collect()
            })
            .collect()
    }
}

fn c03_mel_oracle() -> Result<String, String> {
    // hand-computed Slaney values
    ensure((oracle::slaney_mel(500.0) - 7.5).abs() < 1e-12, || {
        "oracle mel scale".into()
    })?;
    ensure(
        (oracle::slaney_hz(15.0 + 27.0) - 6400.0).abs() < 1e-9,
        || "oracle mel scale inverse".into(),
    )?;

    let p = MelParams::default();
    let mut worst = 0.0f64;
    let n_inputs = 5;
    for i in 0..n_inputs {
        let mut rng = seed::rng(seed::derive(3, &[i]));
        let gain = rng.random_range(0.05..1.0);
        let x: Vec<f32> = (0..p.sample_rate as usize / 2)
            .map(|_| rng.random_range(-gain..gain) as f32)
            .collect();
        let got = mel_transform(&Waveform::new(x.clone(), p.sample_rate).unwrap(), &p).unwrap();
        let want = oracle::log_mel(
            &x,
            f64::from(p.sample_rate),
            p.fft_size,
            p.hop_size,
            p.n_mels,
            p.f_min,
            p.f_max,
            p.log_floor,
        );
        ensure(want.len() == got.n_frames(), || {
            format!("frames {} vs {}", got.n_frames(), want.len())
        })?;
        for (t, row) in want.iter().enumerate() {
            for (m, &w) in row.iter().enumerate() {
                // relative error of the mel power
                let rel = (f64::from(got.get(t, m)) - w).exp_m1().abs();
                worst = worst.max(rel);
            }
        }
    }
    ensure(worst <= 1e-4, || {
        format!("worst relative error {worst:.2e}")
    })?;
    Ok(format!(
        "{n_inputs} random 0.5 s inputs, worst relative error {worst:.2e}"
    ))
}

fn c04_sampler_statistics() -> Result<String, String> {
    let n = 100_000;
    let draws: Vec<f64> = (0..n)
        .map(|i| {
            sample_lambda(LambdaMode::Beta { alpha: 0.1 }, 2, seed::derive(4, &[i]))
                .unwrap()
                .as_slice()[0]
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    ensure((0.48..=0.52).contains(&mean), || {
        format!("beta mean {mean}")
    })?;
    ensure((0.193..=0.223).contains(&var), || {
        format!("beta variance {var}")
    })?;

    let g = (0..10_000u64)
        .map(|i| f64::from(sample_gamma(0.5, seed::derive(5, &[i]))))
        .sum::<f64>()
        / 1e4;
    ensure((0.48..=0.52).contains(&g), || format!("gamma mean {g}"))?;
    Ok(format!(
        "beta mean {mean:.4}, variance {var:.4} (analytic 0.2083); gamma mean {g:.4}"
    ))
}

fn c05_batch_composition() -> Result<String, String> {
    let pool: Vec<String> = (0..1000).map(|i| format!("clip{i:04}")).collect();
    let expected = [(0.125, 4), (0.25, 8), (0.5, 16), (0.6, 19)];
    let mut violations = 0;
    let mut checked = 0;
    for (k, count) in expected {
        ensure(generated_count(32, k) == count, || {
            format!("K={k}: {} generated", generated_count(32, k))
        })?;
        let cfg = PairMixConfig {
            k_ratio: k,
            ..PairMixConfig::default()
        };
        for b in 0..1000u64 {
            let mut rng = seed::rng(seed::derive(6, &[b]));
            let batch: Vec<String> = rand::seq::index::sample(&mut rng, pool.len(), 32)
                .iter()
                .map(|i| pool[i].clone())
                .collect();
            let plans = plan_batch(&batch, &pool, &cfg, seed::derive(7, &[b]))
                .map_err(|e| e.to_string())?;
            ensure(plans.len() == count, || {
                format!("K={k}: planned {}", plans.len())
            })?;
            let ids: HashSet<&String> = batch.iter().collect();
            for plan in &plans {
                checked += 1;
                let distinct: HashSet<&String> = plan.source_ids.iter().collect();
                if plan.source_ids.iter().any(|s| ids.contains(s))
                    || distinct.len() != plan.source_ids.len()
                {
                    violations += 1;
                }
            }
        }
    }
    ensure(violations == 0, || {
        format!("{violations} exclusion violations")
    })?;
    Ok(format!(
        "counts 4/8/16/19; {checked} pairs over 4000 batches, 0 violations"
    ))
}

fn c06_strategy_validation() -> Result<String, String> {
    for (tau, a, b) in SWEEP_TUPLES {
        let json = format!(
            r#"{{"tau": {tau}, "layers": [{{"index": 1, "group_size": {a}}}, {{"index": 2, "group_size": {b}}}]}}"#
        );
        let spec: StrategySpec = serde_json::from_str(&json).unwrap();
        let s = spec
            .build(Some(2))
            .map_err(|v| format!("({tau},{a},{b}) rejected: {v}"))?;
        ensure(s.tau() == a * b, || {
            format!("tau {} for ({tau},{a},{b})", s.tau())
        })?;
        ensure(s.output_counts() == [tau / a, 1], || {
            format!("counts {:?}", s.output_counts())
        })?;
    }
    let wrong = uniform_strategy(10, &[(1, 3), (2, 5)], 2).unwrap_err();
    ensure(
        wrong
            .to_string()
            .contains("group size 3 does not divide 10"),
        || format!("(10,3,5): {wrong}"),
    )?;
    for bad in [(12, 2, 5), (10, 2, 4), (25, 5, 1)] {
        let v = uniform_strategy(bad.0, &[(1, bad.1), (2, bad.2)], 2);
        ensure(v.is_err(), || format!("{bad:?} accepted"))?;
    }
    let open = uniform_strategy(10, &[(1, 2)], 2).unwrap_err();
    ensure(
        matches!(open, Violation::FinalLayerOutputs { count: 5 }),
        || format!("|P_H|=5: {open}"),
    )?;
    let two = Strategy::new(
        4,
        vec![
            vec![vec![0], vec![1], vec![2], vec![3]],
            vec![vec![0, 1], vec![2, 3]],
        ],
    )
    .unwrap_err();
    ensure(
        two.to_string()
            .contains("final layer must yield one output"),
        || format!("|P_H|=2: {two}"),
    )?;
    Ok("four tuples accepted with tau = product; (10,3,5) and |P_H| != 1 rejected".into())
}

fn deep_model() -> LayeredModel {
    let layers: Vec<Box<dyn Layer>> = vec![
        Box::new(FnLayer::new(Some(3), |x: &[f64]| {
            vec![(x[0] + 2.0 * x[1]).tanh(), (x[2] - x[0]).sin(), x[1] * x[2]]
        })),
        Box::new(FnLayer::new(Some(3), |x: &[f64]| {
            vec![x[0].exp() - x[1], (x[1] * x[2]).cos()]
        })),
        Box::new(FnLayer::new(Some(2), |x: &[f64]| {
            vec![x[0] * x[0] + x[1], x[1].tanh(), 0.5 * x[0]]
        })),
        Box::new(FnLayer::new(Some(3), |x: &[f64]| {
            vec![x[0].sin() + x[2], x[1] * x[2] + x[0]]
        })),
    ];
    LayeredModel::new(layers).unwrap()
}

fn mean(vs: &[Vec<f64>]) -> Vec<f64> {
    (0..vs[0].len())
        .map(|d| vs.iter().map(|v| v[d]).sum::<f64>() / vs.len() as f64)
        .collect()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn c07_tta_reductions() -> Result<String, String> {
    let m = deep_model();
    let mut rng = seed::rng(8);
    let views: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let forward = |x: &Vec<f64>| (1..=4).fold(x.clone(), |h, l| m.apply_layer(l, &h).unwrap());

    let mut worst = 0.0f64;
    for tau in [1, 4, 10] {
        let got = execute(&m, &conventional_tta(tau, 4).unwrap(), &views[..tau])
            .unwrap()
            .prediction;
        let want = mean(&views[..tau].iter().map(forward).collect::<Vec<_>>());
        worst = worst.max(max_gap(&got, &want));
    }
    ensure(worst <= 1e-6, || format!("conventional gap {worst:.2e}"))?;

    let mut mid_worst = 0.0f64;
    for h_prime in 1..4 {
        let got = execute(&m, &mid_tta(10, h_prime, 4).unwrap(), &views)
            .unwrap()
            .prediction;
        // run all views through layers 1..=h'+1, average, then the remaining layers
        let through: Vec<Vec<f64>> = views
            .iter()
            .map(|x| (1..=h_prime + 1).fold(x.clone(), |h, l| m.apply_layer(l, &h).unwrap()))
            .collect();
        let want = (h_prime + 2..=4).fold(mean(&through), |h, l| m.apply_layer(l, &h).unwrap());
        mid_worst = mid_worst.max(max_gap(&got, &want));
    }
    ensure(mid_worst <= 1e-6, || format!("mid gap {mid_worst:.2e}"))?;
    Ok(format!(
        "conventional gap {worst:.1e} for tau 1/4/10; mid gap {mid_worst:.1e} for h' = 1..3"
    ))
}

fn toy_views(tau: usize, rng_seed: u64) -> (MelParams, Vec<Vec<f64>>) {
    let p = MelParams::default();
    let x = sine(700.0, 0.3, 0.25, p.sample_rate);
    let specs = halve_for_test_time(&AudioAugSpecs::default());
    let views = augment_inputs(&x, tau, &specs, &p, rng_seed)
        .unwrap()
        .iter()
        .map(mel_to_value)
        .collect();
    (p, views)
}

fn c08_affine_invariance() -> Result<String, String> {
    let (p, views) = toy_views(100, 9);
    let affine = build_toy_model(10, p.n_mels, 16, 8, true).unwrap();
    let mut worst = 0.0f64;
    for (tau, _, _) in SWEEP_TUPLES {
        let conv = execute(
            affine.layered(),
            &conventional_tta(tau, DEPTH).unwrap(),
            &views[..tau],
        )
        .unwrap()
        .prediction;
        let multi = execute(
            affine.layered(),
            &sweep_multi_tta(tau).unwrap(),
            &views[..tau],
        )
        .unwrap()
        .prediction;
        worst = worst.max(max_gap(&conv, &multi));
    }
    ensure(worst <= 1e-5, || format!("affine gap {worst:.2e}"))?;

    let nonlinear = build_toy_model(10, p.n_mels, 16, 8, false).unwrap();
    let conv = execute(
        nonlinear.layered(),
        &conventional_tta(10, DEPTH).unwrap(),
        &views[..10],
    )
    .unwrap()
    .prediction;
    let multi = execute(
        nonlinear.layered(),
        &sweep_multi_tta(10).unwrap(),
        &views[..10],
    )
    .unwrap()
    .prediction;
    let gap = max_gap(&conv, &multi);
    ensure(gap > 1e-6, || format!("nonlinear gap {gap:.2e}"))?;
    Ok(format!(
        "affine max gap {worst:.1e} over 4 tuples; nonlinear gap {gap:.1e} at tau=10"
    ))
}

fn c09_halving() -> Result<String, String> {
    let train = AudioAugSpecs {
        noise: NoiseSpec {
            snr_db_range: [20.0, 40.0],
            probability: 0.6,
        },
        reverb: ReverbSpec {
            decay_seconds: 0.3,
            wet_mix: 0.5,
            probability: 0.8,
        },
        specaug: SpecAugmentSpec {
            max_time_width: 64,
            max_freq_width: 9,
            ..SpecAugmentSpec::default()
        },
    };
    let h = halve_for_test_time(&train);
    ensure(
        h.specaug.max_time_width == 32 && h.specaug.max_freq_width == 4,
        || format!("widths {:?}", h.specaug),
    )?;
    ensure(h.reverb.decay_seconds == 0.15, || {
        format!("decay {}", h.reverb.decay_seconds)
    })?;
    ensure(
        h.noise.probability == 0.3 && h.reverb.probability == 0.4,
        || "probabilities".into(),
    )?;
    ensure(
        h.noise.snr_db_range == train.noise.snr_db_range && h.reverb.wet_mix == 0.5,
        || "unrelated fields changed".into(),
    )?;
    ensure(
        h.specaug.n_time_masks == train.specaug.n_time_masks
            && h.specaug.n_freq_masks == train.specaug.n_freq_masks,
        || "mask counts changed".into(),
    )?;

    let m = deep_model();
    let clean = vec![0.3, -0.2, 0.9];
    let plain = (1..=4).fold(clean.clone(), |h, l| m.apply_layer(l, &h).unwrap());
    let mut worst = 0.0f64;
    for (tau, s) in [
        (1, conventional_tta(1, 4).unwrap()),
        (10, conventional_tta(10, 4).unwrap()),
        (10, mid_tta(10, 2, 4).unwrap()),
    ] {
        let out = stabilized_predict(&m, &s, &clean, &vec![clean.clone(); tau]).unwrap();
        ensure(out.stabilized, || "not flagged stabilized".into())?;
        worst = worst.max(max_gap(&out.prediction, &plain));
    }
    ensure(worst <= 1e-12, || format!("stabilized gap {worst:.2e}"))?;
    Ok(format!(
        "x0.5 exact on widths, decay, probabilities; stabilized clean gap {worst:.1e}"
    ))
}

fn c10_variance_trend() -> Result<String, String> {
    let p = MelParams::default();
    let model = build_toy_model(12, p.n_mels, 16, 10, false).unwrap();
    let inputs: Vec<Waveform> = [(500.0, 0.3), (2500.0, 0.2)]
        .iter()
        .map(|&(f, a)| sine(f, a, 0.5, p.sample_rate))
        .collect();
    let cells: Vec<ExperimentCell> = [10, 100]
        .iter()
        .map(|&tau| ExperimentCell {
            label: "conventional".into(),
            strategy: conventional_tta(tau, DEPTH).unwrap(),
        })
        .collect();
    let specs = halve_for_test_time(&AudioAugSpecs::default());
    let rows =
        tta_experiment(&model, &inputs, &specs, &p, &cells, 100, 13).map_err(|e| e.to_string())?;
    let csv = Path::new(env!("CARGO_TARGET_TMPDIR")).join("variance_trend.csv");
    write_csv(&csv, &rows).map_err(|e| e.to_string())?;
    let written = fs::read_to_string(&csv).unwrap();
    ensure(written.lines().count() == 3, || {
        format!("csv has {} lines", written.lines().count())
    })?;
    let (v10, v100) = (rows[0].variance_trace, rows[1].variance_trace);
    ensure(rows.iter().all(|r| r.repeat == 100), || {
        "repeat count".into()
    })?;
    ensure(v100 <= v10, || {
        format!("variance at tau=100 {v100:.3e} > tau=10 {v10:.3e}")
    })?;
    Ok(format!(
        "variance trace {v10:.3e} (tau 10) -> {v100:.3e} (tau 100); csv at {}",
        csv.display()
    ))
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir.join("mels"))
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (
                path.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&path).unwrap(),
            )
        })
        .collect();
    files.sort();
    files.push((
        SAMPLES_FILE.into(),
        fs::read(dir.join(SAMPLES_FILE)).unwrap(),
    ));
    files
}

fn c11_determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let manifest = Manifest::load(synth_corpus(dir.path(), 32, 10.0, 32_000, 14).unwrap()).unwrap();
    let cfg = PipelineConfig {
        seed: 2024,
        ..PipelineConfig::default()
    };
    let (a, b) = (dir.path().join("run_a"), dir.path().join("run_b"));
    let first = run_augment(&manifest, &cfg, &a).map_err(|e| e.to_string())?;
    // the second run on a single thread: output must not depend on scheduling
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    single
        .install(|| run_augment(&manifest, &cfg, &b))
        .map_err(|e| e.to_string())?;
    ensure(first.originals + first.generated == 40, || {
        format!("{first:?}")
    })?;
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    ensure(ta.len() == 41, || format!("{} files", ta.len()))?;
    ensure(ta == tb, || "runs differ".into())?;
    Ok("40 samples; JSONL and 40 mel files byte-identical across runs and thread counts".into())
}
