//! Acceptance gate: one PASS/FAIL line per criterion, then a single assert.
//!
//! Run with `cargo test -p ssvep-cli --test acceptance`.

#[path = "../../core/tests/common/mod.rs"]
mod common;
#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use ssvep_core::config::{Classifier, RunConfig};
use ssvep_core::convnet::{
    evaluate, load_params, replace_head, save_params, train, DType, ModelParams, Network,
    NetworkSpec, TrainConfig,
};
use ssvep_core::data::load_store;
use ssvep_core::fbcca::{cca_max_corr, Fbcca, FbccaConfig};
use ssvep_core::harness::{run_experiment, ResizedImages};
use ssvep_core::linsvm::{svm_train, SvmExample, SvmTrainConfig, N_FEATURES};
use ssvep_core::preprocess::{
    resize_nearest, slice_windows, window_starts, PipelineConfig, Preprocessor, WindowConfig,
};
use ssvep_core::synth::{generate_parts, generate_store, generate_trial, SynthConfig};
use ssvep_core::LabeledImage;

type Check = std::result::Result<String, String>;

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn run(&mut self, name: &str, budget: Duration, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
        let elapsed = start.elapsed();
        let (status, detail) = match result {
            Ok(d) if elapsed <= budget => (Status::Pass, d),
            Ok(d) => (Status::Fail, format!("{d}; over time budget")),
            Err(e) => (Status::Fail, e),
        };
        self.report(name, status, &detail, Some((elapsed, budget)));
    }

    fn report(
        &mut self,
        name: &str,
        status: Status,
        detail: &str,
        timing: Option<(Duration, Duration)>,
    ) {
        let tag = match status {
            Status::Pass => "PASS",
            Status::Fail => {
                self.failures.push(name.to_string());
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        let time = timing
            .map(|(e, b)| format!(" [{:.2} s / {} s]", e.as_secs_f64(), b.as_secs()))
            .unwrap_or_default();
        println!("{tag} | {name} | {detail}{time}");
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cli(args: &[&str]) -> std::result::Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ssvep"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "ssvep {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn window_counts() -> Check {
    let coarse = WindowConfig::default();
    let dense = WindowConfig {
        window_len_samples: 125,
        displacement_samples: 25,
    };
    let a = window_starts(1250, &coarse)
        .map_err(|e| e.to_string())?
        .len();
    let b = window_starts(1250, &dense)
        .map_err(|e| e.to_string())?
        .len();
    let trial = generate_trial(&SynthConfig::default(), 1, 0).map_err(|e| e.to_string())?;
    let c = slice_windows(&trial, 0, &dense)
        .map_err(|e| e.to_string())?
        .len();
    ensure(a == 10 && b == 46 && c == 46, || {
        format!("got {a} / {b} / {c}")
    })?;
    Ok("1250 samples, window 125: 10 at d=125, 46 at d=25".into())
}

fn dataset_sizes(dir: &Path) -> Check {
    let store = dir.join("series420.ssvb");
    let coarse = dir.join("coarse.ssvi");
    let dense = dir.join("dense.ssvi");
    let s = path_str(&store);
    let trials = cli(&[
        "synth",
        "--out",
        s,
        "--subjects",
        "35",
        "--trials",
        "6",
        "--seed",
        "1",
    ])?;
    let got = [
        trials,
        cli(&[
            "preprocess",
            "--in",
            s,
            "--displacement",
            "0.5s",
            "--out",
            path_str(&coarse),
        ])?,
        cli(&["augment", "--in", path_str(&coarse), "--mode", "time"])?,
        cli(&["augment", "--in", path_str(&coarse), "--mode", "full"])?,
        cli(&[
            "preprocess",
            "--in",
            s,
            "--displacement",
            "0.1s",
            "--out",
            path_str(&dense),
        ])?,
        cli(&["augment", "--in", path_str(&dense), "--mode", "time"])?,
    ];
    let want = [
        "420 trials",
        "4200 images",
        "16800",
        "151200",
        "19320 images",
        "77280",
    ];
    ensure(got == want, || format!("got {got:?}"))?;
    Ok("4200 / 16800 / 151200 / 19320 / 77280".into())
}

fn geometry() -> Check {
    let store =
        generate_store(&SynthConfig::default(), 35, &[12.0, 15.0], 6).map_err(|e| e.to_string())?;
    let want_rows = [10.0, 12.0, 14.0, 16.0, 22.0, 24.0, 28.0, 30.0];
    let mut n = 0;
    for d in [125, 25] {
        let cfg = PipelineConfig {
            window: WindowConfig {
                window_len_samples: 125,
                displacement_samples: d,
            },
            ..Default::default()
        };
        let images = Preprocessor::new(cfg)
            .and_then(|p| p.process_store(&store))
            .map_err(|e| e.to_string())?;
        for im in &images {
            ensure(im.image.shape() == (8, 3), || {
                format!("shape {:?}", im.image.shape())
            })?;
            ensure(im.image.row_freqs_hz == want_rows, || {
                format!("rows {:?}", im.image.row_freqs_hz)
            })?;
            let big = resize_nearest(&im.image, 96, 64).map_err(|e| e.to_string())?;
            ensure(big.shape() == (96, 64), || {
                format!("resized {:?}", big.shape())
            })?;
        }
        n += images.len();
    }
    Ok(format!(
        "{n} images: 8x3 before, 96x64 after resize, band rows 10,12,14,16,22,24,28,30 Hz"
    ))
}

fn cca_oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let cx = rng.random_range(1..=5usize);
        let cy = rng.random_range(1..=5usize);
        let t = rng.random_range(cx + cy + 1..=100);
        let mut block = |c: usize| -> Vec<Vec<f64>> {
            (0..c)
                .map(|_| (0..t).map(|_| rng.sample(StandardNormal)).collect())
                .collect()
        };
        let (x, y) = (block(cx), block(cy));
        let got = cca_max_corr(&x, &y).map_err(|e| e.to_string())?.rho;
        let want = oracles::cca_oracle(&x, &y);
        let err = (got - want).abs();
        worst = worst.max(err);
        ensure(err < 1e-8, || {
            format!("instance {i} ({cx}x{t} vs {cy}x{t}): {got} vs {want}")
        })?;
    }
    Ok(format!("1000 instances, max |Δρ| = {worst:.2e} (< 1e-8)"))
}

/// Fraction of windows classified correctly, with trials alternating 12/15 Hz.
fn fbcca_accuracy(
    snr_db: f64,
    trials_per_freq: u16,
    seed: u64,
) -> std::result::Result<(usize, usize), String> {
    let fb = Fbcca::new(FbccaConfig::default(), 250.0, 125).map_err(|e| e.to_string())?;
    let (mut correct, mut total) = (0, 0);
    for (class, f) in [12.0, 15.0].into_iter().enumerate() {
        for trial in 0..trials_per_freq {
            let cfg = SynthConfig {
                stimulus_hz: f,
                snr_db,
                seed,
                ..Default::default()
            };
            let x = generate_parts(&cfg, 1, trial)
                .map_err(|e| e.to_string())?
                .combined();
            for start in (0..=1250 - 125).step_by(125) {
                let label = fb
                    .classify(&[x[start..start + 125].to_vec()])
                    .map_err(|e| e.to_string())?;
                correct += usize::from(label.class_index == class);
                total += 1;
            }
        }
    }
    Ok((correct, total))
}

fn fbcca_synthetic() -> Check {
    let (c, n) = fbcca_accuracy(10.0, 25, 10)?;
    ensure(n >= 400 && c as f64 >= 0.99 * n as f64, || {
        format!("10 dB: {c}/{n}")
    })?;
    let (cn, nn) = fbcca_accuracy(f64::NEG_INFINITY, 50, 11)?;
    let (lo, hi) = oracles::binomial_half_region(nn as u64, 0.01);
    ensure(nn == 1000 && (lo..=hi).contains(&(cn as u64)), || {
        format!("pure noise: {cn}/{nn} outside 99% region [{lo}, {hi}]")
    })?;
    Ok(format!(
        "10 dB: {c}/{n} = {:.1}%; pure noise: {cn}/{nn} in [{lo}, {hi}]",
        100.0 * c as f64 / n as f64
    ))
}

fn gradient_checks() -> Check {
    let mut parts = Vec::new();
    for (i, (name, spec)) in common::gradient_cases().into_iter().enumerate() {
        let worst = common::worst_grad_error(spec, i as u64 + 1);
        ensure(worst < common::REL_TOL, || {
            format!("{name}: rel err {worst:.2e}")
        })?;
        parts.push(format!("{name} {worst:.1e}"));
    }
    Ok(format!("max rel err per case: {}", parts.join(", ")))
}

/// Spectrograms of 0 dB synthetic trials, 64 images.
fn synthetic_images(n: usize, seed: u64) -> std::result::Result<Vec<LabeledImage>, String> {
    let base = SynthConfig {
        snr_db: 0.0,
        seed,
        ..Default::default()
    };
    let store = generate_store(&base, 1, &[12.0, 15.0], 4).map_err(|e| e.to_string())?;
    let mut images = Preprocessor::new(PipelineConfig::default())
        .and_then(|p| p.process_store(&store))
        .map_err(|e| e.to_string())?;
    images.truncate(n.min(images.len()));
    ensure(images.len() == n, || {
        format!("only {} images", images.len())
    })?;
    Ok(images)
}

fn overfit() -> Check {
    let mut images = synthetic_images(80, 5)?;
    // Keep 32 per class.
    let mut per_class = [0usize; 2];
    images.retain(|im| {
        per_class[im.class_index] += 1;
        per_class[im.class_index] <= 32
    });
    let spec = NetworkSpec::scaled_down();
    let net = Network::new(spec.clone()).map_err(|e| e.to_string())?;
    let data = ResizedImages::new(&images, &spec).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        lr: 0.01,
        weight_decay: 0.0,
        batch_size: 16,
        patience: 25,
        max_epochs: 500,
        seed: 1,
        ..Default::default()
    };
    let init = ModelParams::init(&spec, 3).map_err(|e| e.to_string())?;
    let (best, log) = train(&net, init, &data, &data, &cfg).map_err(|e| e.to_string())?;
    let (_, acc) = evaluate(&net, &best, &data).map_err(|e| e.to_string())?;
    let first = log
        .epochs
        .iter()
        .find(|r| r.val_acc == 1.0)
        .map(|r| r.epoch);
    ensure(images.len() == 64 && acc == 1.0, || {
        format!("CNN train accuracy {acc} on {}", images.len())
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dir: Vec<f64> = (0..N_FEATURES).map(|_| rng.random::<f64>() - 0.5).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sample = |rng: &mut ChaCha8Rng, class: usize| {
        let mut x = [0.0; N_FEATURES];
        let side = if class == 1 { 1.0 } else { -1.0 };
        for (i, v) in x.iter_mut().enumerate() {
            *v = rng.random::<f64>() * 0.2 + side * 0.5 * dir[i] / norm;
        }
        SvmExample::from_class(x, class)
    };
    let train_set: Vec<SvmExample> = (0..200).map(|i| sample(&mut rng, i % 2)).collect();
    let val_set: Vec<SvmExample> = (0..60).map(|i| sample(&mut rng, i % 2)).collect();
    let (model, _) =
        svm_train(&train_set, &val_set, &SvmTrainConfig::default()).map_err(|e| e.to_string())?;
    let svm_correct = train_set
        .iter()
        .filter(|e| (model.decision(&e.x) > 0.0) == (e.y > 0.0))
        .count();
    ensure(svm_correct == train_set.len(), || {
        format!("SVM {svm_correct}/{}", train_set.len())
    })?;
    Ok(format!(
        "scaled-down CNN 64/64 (first reached at epoch {}), SVM {svm_correct}/{}",
        first.map_or("?".into(), |e| e.to_string()),
        train_set.len()
    ))
}

fn freeze_transfer(dir: &Path) -> Check {
    let spec = NetworkSpec::scaled_down();
    let source = ModelParams::init(&spec, 41).map_err(|e| e.to_string())?;
    let (params, spec) = replace_head(&source, &spec, 42, true).map_err(|e| e.to_string())?;
    let images = synthetic_images(32, 6)?;
    let net = Network::new(spec.clone()).map_err(|e| e.to_string())?;
    let data = ResizedImages::new(&images, &spec).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        lr: 0.01,
        batch_size: 8,
        patience: 10,
        max_epochs: 10,
        ..Default::default()
    };
    let before = params.clone();
    let (trained, _) = train(&net, params, &data, &data, &cfg).map_err(|e| e.to_string())?;
    let mut n_prefix = 0;
    for (name, t) in source.iter().filter(|(n, _)| n.starts_with("conv")) {
        let after = trained.get(name).map_err(|e| e.to_string())?;
        let same = t.data.len() == after.data.len()
            && t.data
                .iter()
                .zip(&after.data)
                .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same && after.frozen, || {
            format!("{name} changed or not frozen")
        })?;
        n_prefix += 1;
    }
    let head_moved = trained.get("fc1.weight").map_err(|e| e.to_string())?.data
        != before.get("fc1.weight").map_err(|e| e.to_string())?.data;
    ensure(head_moved, || "head did not train".into())?;

    let path = dir.join("trained.ssvw");
    save_params(&trained, &path).map_err(|e| e.to_string())?;
    let loaded = load_params(&path).map_err(|e| e.to_string())?;
    let a = trained.to_bytes(DType::F64).map_err(|e| e.to_string())?;
    let b = loaded.to_bytes(DType::F64).map_err(|e| e.to_string())?;
    let same_tensors = trained.len() == loaded.len()
        && trained
            .iter()
            .zip(loaded.iter())
            .all(|((na, ta), (nb, tb))| {
                na == nb
                    && ta.shape == tb.shape
                    && ta.frozen == tb.frozen
                    && ta
                        .data
                        .iter()
                        .map(|v| v.to_bits())
                        .eq(tb.data.iter().map(|v| v.to_bits()))
            });
    ensure(a == b && same_tensors, || {
        "save/load round trip differs".into()
    })?;
    Ok(format!(
        "{n_prefix} prefix tensors bit-identical after 10 epochs; {} bytes round-trip",
        a.len()
    ))
}

fn write_config(path: &Path, json: &str) -> std::result::Result<(), String> {
    std::fs::write(path, json).map_err(|e| e.to_string())
}

fn determinism(dir: &Path) -> Check {
    let store = dir.join("det.ssvb");
    cli(&[
        "synth",
        "--out",
        path_str(&store),
        "--subjects",
        "4",
        "--trials",
        "6",
        "--snr-db",
        "-8",
        "--seed",
        "2",
    ])?;
    let configs = [
        (
            "svm",
            r#"{"classifier": "svm", "augment": "time_only", "svm": {"max_epochs": 40, "patience": 10}}"#,
        ),
        (
            "cnn_no_transfer",
            r#"{"classifier": "cnn_no_transfer", "network": "tiny", "use_regime": false,
                "test_subjects": [1, 3], "cnn": {"max_epochs": 2, "patience": 2, "batch_size": 32}}"#,
        ),
    ];
    let mut lines = Vec::new();
    for (name, json) in configs {
        let cfg_path = dir.join(format!("{name}.json"));
        write_config(&cfg_path, json)?;
        let mut reports = Vec::new();
        for (tag, jobs) in [("a", "1"), ("b", "4"), ("c", "4")] {
            let report = dir.join(format!("{name}_{tag}.csv"));
            cli(&[
                "eval-loso",
                "--config",
                path_str(&cfg_path),
                "--store",
                path_str(&store),
                "--seed",
                "9",
                "--jobs",
                jobs,
                "--report",
                path_str(&report),
            ])?;
            reports.push(std::fs::read(&report).map_err(|e| e.to_string())?);
        }
        ensure(reports.iter().all(|r| *r == reports[0]), || {
            format!("{name}: reports differ")
        })?;
        lines.push(format!("{name} {} bytes", reports[0].len()));
    }
    Ok(format!(
        "jobs 1 / 4 / 4 byte-identical: {}",
        lines.join(", ")
    ))
}

fn report_granularity(dir: &Path) -> Check {
    let store = dir.join("det.ssvb");
    let store = load_store(&store).map_err(|e| e.to_string())?;
    let cfg = RunConfig {
        classifier: Classifier::Svm,
        seed: Some(4),
        svm: SvmTrainConfig {
            max_epochs: 60,
            patience: 15,
            ..Default::default()
        },
        ..Default::default()
    };
    let report = run_experiment(&cfg, &store, None, 0).map_err(|e| e.to_string())?;
    let csv = report.to_csv();
    let mut accs = Vec::new();
    for line in csv.lines().skip(1).filter(|l| !l.starts_with("mean")) {
        let f: Vec<&str> = line.split(',').collect();
        let counts: Vec<usize> = f[4..8].iter().map(|v| v.parse().unwrap()).collect();
        let n: usize = counts.iter().sum();
        ensure(n == 120, || format!("test set of {n} windows: {line}"))?;
        let pct: f64 = f[2].parse().unwrap();
        let k = pct * 120.0 / 100.0;
        ensure((k - k.round()).abs() < 1e-4, || {
            format!("{pct}% is not a multiple of 1/120")
        })?;
        ensure(k.round() as usize == counts[0] + counts[3], || {
            "accuracy disagrees with confusion".into()
        })?;
        accs.push(format!("{}/120", k.round()));
    }
    let rendered = format!("{:.1}", 100.0 * 91.0 / 120.0);
    ensure(rendered == "75.8", || {
        format!("91/120 renders as {rendered}")
    })?;
    Ok(format!(
        "{} subjects x 120 windows, correct counts {}; 91/120 = 75.8%",
        accs.len(),
        accs.join(" ")
    ))
}

/// Runs only when `SSVEP_REAL_STORE` points at a converted benchmark store.
fn real_fbcca(gate: &mut Gate) {
    let name = "FBCCA reproduction on recorded data (optional)";
    let Ok(path) = std::env::var("SSVEP_REAL_STORE") else {
        gate.report(
            name,
            Status::Skip,
            "set SSVEP_REAL_STORE to a converted 35-subject store to run (expects Oz 77.1 +/- 2, 9 channels 91.1 +/- 2)",
            None,
        );
        return;
    };
    gate.run(name, Duration::from_secs(1800), || {
        let store = load_store(&path).map_err(|e| e.to_string())?;
        let mut out = Vec::new();
        for (channels, target) in [
            (vec!["Oz"], 77.1),
            (ssvep_core::data::OCCIPITAL_9.to_vec(), 91.1),
        ] {
            let cfg = RunConfig {
                classifier: Classifier::Fbcca,
                fbcca_channels: channels.iter().map(|s| s.to_string()).collect(),
                ..Default::default()
            };
            let mean = run_experiment(&cfg, &store, None, 0)
                .map_err(|e| e.to_string())?
                .mean_accuracy_pct();
            ensure((mean - target).abs() <= 2.0, || {
                format!("{} channels: {mean:.1}% vs {target}%", channels.len())
            })?;
            out.push(format!("{} ch {mean:.1}%", channels.len()));
        }
        Ok(out.join(", "))
    });
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let d = dir.path();
    let mut gate = Gate {
        failures: Vec::new(),
    };
    println!();
    gate.run(
        "window-count exactness",
        Duration::from_secs(1),
        window_counts,
    );
    gate.run("dataset-size arithmetic", Duration::from_secs(60), || {
        dataset_sizes(d)
    });
    gate.run("spectrogram geometry", Duration::from_secs(60), geometry);
    gate.run(
        "CCA oracle equivalence",
        Duration::from_secs(60),
        cca_oracle_equivalence,
    );
    gate.run(
        "FBCCA on synthetic data",
        Duration::from_secs(120),
        fbcca_synthetic,
    );
    gate.run("gradient checks", Duration::from_secs(120), gradient_checks);
    gate.run("overfit sanity", Duration::from_secs(300), overfit);
    gate.run("freeze/transfer mechanics", Duration::from_secs(60), || {
        freeze_transfer(d)
    });
    gate.run(
        "determinism across --jobs",
        Duration::from_secs(300),
        || determinism(d),
    );
    gate.run(
        "report granularity (120-window test sets)",
        Duration::from_secs(300),
        || report_granularity(d),
    );
    real_fbcca(&mut gate);
    if !gate.failures.is_empty() {
        eprintln!("failed criteria: {:?}", gate.failures);
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
