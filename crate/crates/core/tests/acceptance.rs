//! End-to-end acceptance run. Each criterion prints one PASS/FAIL line and
//! the process exits non-zero if any fails. `ACCEPTANCE_ONLY=1,3` runs a
//! subset.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use har_fusion::cli::{run_pipeline, DataSource, FusionChoice, RunConfig};
use har_fusion::data::SyntheticConfig;
use har_fusion::fusion::{evaluate, fuse_average, fuse_max, FusionMethod, ScoreMatrix};
use har_fusion::gradcheck::{gradcheck, layer_gradcheck, random};
use har_fusion::models::{build_inertial_net, build_vision_net, train, StreamKind, TrainConfig};
use har_fusion::nn::{Activation, BatchNorm, Conv1d, Dense, GlobalAvgPool, Lstm, Mode, ParamStore};
use har_fusion::preprocess::{
    normalize_keypoints, split_dataset, window_count, Joint, KeypointFrame, ScalerParams, SplitSpec, WindowSpec,
    JOINTS,
};
use har_fusion::tensor::{Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, budget_s: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < budget_s, || {
        format!("took {:.1}s, budget {budget_s}s", elapsed.as_secs_f64())
    })
}

// ---------------------------------------------------------------- 1

const GRAD_TOL: f64 = 1e-4;
const INSTANCES: u64 = 20;

fn gradient_suite() -> Outcome {
    let t0 = Instant::now();
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut record = |name: &'static str, err: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some((_, w)) => *w = w.max(err),
        None => worst.push((name, err)),
    };
    let e = |r: har_fusion::Result<f64>| r.map_err(|e| e.to_string());
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);

        let mut store = ParamStore::new();
        let c_in = 1 + seed as usize % 3;
        let conv = Conv1d::new(&mut store, &mut rng, "conv", c_in, 3, 3).map_err(|e| e.to_string())?;
        let x = random(&mut rng, &[2, c_in, 6], 1.0);
        record("conv1d", e(layer_gradcheck(&conv, &store, &x, Mode::Eval, seed))?);

        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 3, 2);
        for id in [bn.gamma, bn.beta] {
            *store.get_mut(id) = random(&mut rng, &[3], 1.0).with_grad();
        }
        let x = random(&mut rng, &[4, 2, 3], 2.0);
        record("batchnorm(train)", e(layer_gradcheck(&bn, &store, &x, Mode::Train, seed))?);

        let mut store = ParamStore::new();
        let lstm = Lstm::new(&mut store, &mut rng, "lstm", 3, 4, seed % 2 == 0).map_err(|e| e.to_string())?;
        let x = random(&mut rng, &[2, 5, 3], 1.0);
        record("lstm(T=5)", e(layer_gradcheck(&lstm, &store, &x, Mode::Eval, seed))?);

        let mut store = ParamStore::new();
        let dense = Dense::new(&mut store, &mut rng, "dense", 4, 3, Activation::None).map_err(|e| e.to_string())?;
        *store.get_mut(dense.bias) = random(&mut rng, &[3], 0.5).with_grad();
        let x = random(&mut rng, &[5, 4], 1.0);
        record("dense", e(layer_gradcheck(&dense, &store, &x, Mode::Eval, seed))?);

        let logits = random(&mut rng, &[4, 5], 2.0);
        let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..5)).collect();
        let err = gradcheck(&[logits], |tape: &mut Tape, v: &[Var]| {
            let p = tape.softmax(v[0])?;
            tape.cross_entropy(p, &labels)
        });
        record("softmax+cross-entropy", e(err)?);

        let x = random(&mut rng, &[2, 3, 4], 1.0);
        record("gap", e(layer_gradcheck(&GlobalAvgPool, &ParamStore::new(), &x, Mode::Eval, seed))?);
    }
    let summary = worst
        .iter()
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    for (name, w) in &worst {
        check(*w < GRAD_TOL, || format!("{name}: max relative error {w:.3e}; {summary}"))?;
    }
    within(t0.elapsed(), 60.0)?;
    Ok(format!("{INSTANCES} instances each, worst: {summary}; {:.1}s", t0.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------- 2

/// Per-class reduction in stream order, then the first strict maximum.
fn oracle(rows: &[Vec<f64>], method: FusionMethod) -> usize {
    let classes = rows[0].len();
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for c in 0..classes {
        let v = match method {
            FusionMethod::Average => {
                let mut s = 0.0;
                for r in rows {
                    s += r[c];
                }
                s / rows.len() as f64
            }
            FusionMethod::Max => {
                let mut m = f64::NEG_INFINITY;
                for r in rows {
                    if r[c] > m {
                        m = r[c];
                    }
                }
                m
            }
        };
        if v > best_v {
            best_v = v;
            best = c;
        }
    }
    best
}

fn random_row(rng: &mut ChaCha8Rng, classes: usize, quantized: bool) -> Vec<f64> {
    if quantized {
        // eighths are exact in binary, so ties survive summation
        let mut counts = vec![0u32; classes];
        for _ in 0..8 {
            counts[rng.gen_range(0..classes)] += 1;
        }
        counts.iter().map(|&k| f64::from(k) / 8.0).collect()
    } else {
        let raw: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.0..1.0)).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    }
}

fn fusion_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut ties_avg, mut ties_max) = (0, 0);
    let n = 10_000;
    for k in 0..n {
        let streams = rng.gen_range(1..=4);
        let classes = rng.gen_range(2..=8);
        let quantized = k % 2 == 0;
        let rows: Vec<Vec<f64>> = (0..streams).map(|_| random_row(&mut rng, classes, quantized)).collect();
        let m = ScoreMatrix::new(rows.clone()).map_err(|e| format!("instance {k}: {e}"))?;
        let (avg, max) = (fuse_average(&m), fuse_max(&m));
        let (oa, om) = (oracle(&rows, FusionMethod::Average), oracle(&rows, FusionMethod::Max));
        check(avg == oa && max == om, || {
            format!("instance {k}: got ({avg}, {max}), oracle ({oa}, {om}) for {rows:?}")
        })?;
        let sums: Vec<f64> = (0..classes).map(|c| rows.iter().map(|r| r[c]).sum()).collect();
        let top = sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ties_avg += usize::from(sums.iter().filter(|&&s| s == top).count() > 1);
        let maxima: Vec<f64> = (0..classes)
            .map(|c| rows.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let top = maxima.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ties_max += usize::from(maxima.iter().filter(|&&s| s == top).count() > 1);
    }
    check(ties_avg > 100 && ties_max > 100, || {
        format!("too few tie cases exercised ({ties_avg} average, {ties_max} max)")
    })?;
    within(t0.elapsed(), 5.0)?;
    Ok(format!(
        "{n} instances exact ({ties_avg} average ties, {ties_max} max ties); {:.2}s",
        t0.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 3

fn scaler_properties(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for k in 0..200 {
        let width = rng.gen_range(1..6);
        let rows = rng.gen_range(2..30);
        let mut data: Vec<f64> = (0..width * rows).map(|_| rng.gen_range(-50.0..50.0)).collect();
        // one constant feature per instance exercises the degenerate case
        let constant = rng.gen_range(0..width);
        for r in 0..rows {
            data[r * width + constant] = 3.5;
        }
        let p = ScalerParams::fit(&data, width).map_err(|e| e.to_string())?;
        let mut scaled = data.clone();
        p.apply_in_place(&mut scaled).map_err(|e| e.to_string())?;
        for j in 0..width {
            let col: Vec<f64> = scaled.iter().skip(j).step_by(width).copied().collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if j == constant {
                check(col.iter().all(|&v| v == 0.0), || format!("instance {k}: constant feature not mapped to 0"))?;
            } else {
                check(lo == 0.0 && hi == 1.0, || format!("instance {k}: feature {j} spans [{lo}, {hi}]"))?;
            }
        }
        let mut back = scaled.clone();
        p.inverse_in_place(&mut back).map_err(|e| e.to_string())?;
        for (i, (a, b)) in data.iter().zip(&back).enumerate() {
            if i % width == constant {
                continue;
            }
            check((a - b).abs() <= 1e-12 * a.abs().max(1.0), || format!("instance {k}: round trip {a} -> {b}"))?;
        }
    }
    Ok(())
}

fn window_fuzz(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut specs: Vec<WindowSpec> = WindowSpec::PROFILES
        .iter()
        .map(|p| WindowSpec::profile(p).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    for _ in 0..60 {
        let w = rng.gen_range(1..80);
        specs.push(WindowSpec::new(w, rng.gen_range(0..w)).map_err(|e| e.to_string())?);
    }
    let mut triples = 0;
    for spec in &specs {
        let mut ns: Vec<usize> = vec![0, 1, spec.window_len - 1, spec.window_len, spec.window_len + 1];
        ns.extend((0..20).map(|_| rng.gen_range(0..400)));
        for n in ns {
            let mut enumerated = 0;
            let mut start = 0;
            while start + spec.window_len <= n {
                enumerated += 1;
                start += spec.window_len - spec.overlap;
            }
            let closed = window_count(n, *spec);
            check(closed == enumerated, || {
                format!("N={n} window={} overlap={}: {closed} vs {enumerated}", spec.window_len, spec.overlap)
            })?;
            triples += 1;
        }
    }
    Ok(triples)
}

fn keypoint_invariance(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for k in 0..200 {
        let joints: Vec<Joint> = (0..JOINTS)
            .map(|_| {
                let c = if rng.gen_bool(0.85) { rng.gen_range(0.3..1.0) } else { 0.0 };
                Joint::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0), c)
            })
            .collect();
        let frame = KeypointFrame::new(0.0, joints.clone()).map_err(|e| e.to_string())?;
        let Some(base) = normalize_keypoints(&frame) else {
            continue;
        };
        let (dx, dy, s) = (rng.gen_range(-300.0..300.0), rng.gen_range(-300.0..300.0), rng.gen_range(0.2..5.0));
        let moved: Vec<Joint> = joints.iter().map(|j| Joint::new(s * j.x + dx, s * j.y + dy, j.c)).collect();
        let moved = normalize_keypoints(&KeypointFrame::new(0.0, moved).map_err(|e| e.to_string())?)
            .ok_or_else(|| format!("instance {k}: transformed frame rejected"))?;
        let worst = base.iter().zip(&moved).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        check(worst <= 1e-12, || format!("instance {k}: invariance error {worst:.3e}"))?;
    }
    Ok(())
}

fn split_exact() -> Result<(), String> {
    for n in (20..=2000).step_by(20) {
        let labels = vec![0usize; n];
        let spec = SplitSpec {
            stratified: false,
            seed: n as u64,
            ..SplitSpec::default()
        };
        let s = split_dataset(&labels, 1, &spec).map_err(|e| e.to_string())?;
        let got = [s.train.len(), s.val.len(), s.test.len()];
        check(got == [13 * n / 20, 2 * n / 20, 5 * n / 20], || format!("n={n}: {got:?}"))?;
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        check(all == (0..n).collect::<Vec<_>>(), || format!("n={n}: partitions do not cover the indices"))?;
    }
    // stratified: each class count divisible by 20
    let mut labels: Vec<usize> = (0..6).flat_map(|c| vec![c; 20 * (c + 1)]).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    let s = split_dataset(&labels, 6, &SplitSpec::default()).map_err(|e| e.to_string())?;
    for c in 0..6 {
        let per = |idx: &[usize]| idx.iter().filter(|&&i| labels[i] == c).count();
        let got = [per(&s.train), per(&s.val), per(&s.test)];
        let m = c + 1;
        check(got == [13 * m, 2 * m, 5 * m], || format!("class {c}: {got:?}"))?;
    }
    Ok(())
}

fn preprocessing_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    scaler_properties(&mut rng)?;
    let triples = window_fuzz(&mut rng)?;
    check(triples >= 1000, || format!("only {triples} window triples"))?;
    keypoint_invariance(&mut rng)?;
    split_exact()?;
    Ok(format!(
        "min-max endpoints/degenerate/round trip, {triples} window triples incl. 4 profiles, keypoint invariance <= 1e-12, 65/10/25 exact"
    ))
}

// ---------------------------------------------------------------- 4

/// Class-dependent level plus a class-dependent frequency, light noise.
fn toy_set(features: usize, n: usize, classes: usize, steps: usize, seed: u64) -> (Tensor, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut data = Vec::with_capacity(n * steps * features);
    for &c in &labels {
        let phase = rng.gen_range(0.0..0.5);
        let w = std::f64::consts::TAU * (c + 1) as f64 / steps as f64;
        for t in 0..steps {
            for k in 0..features {
                let v = 0.2 + 0.3 * c as f64 + 0.1 * (w * t as f64 + k as f64 / 5.0 + phase).sin();
                data.push(v + rng.gen_range(-0.05..0.05));
            }
        }
    }
    (Tensor::new(vec![n, steps, features], data).expect("toy shape"), labels)
}

fn overfit_sanity() -> Outcome {
    let t0 = Instant::now();
    let (classes, steps, n) = (3, 20, 50);
    let mut parts = Vec::new();
    for kind in [StreamKind::Vision, StreamKind::Inertial] {
        let (mut model, features) = match kind {
            StreamKind::Vision => (build_vision_net(classes, steps, 0), 50),
            StreamKind::Inertial => (build_inertial_net(classes, steps, 6, 0), 6),
        };
        let model = model.as_mut().map_err(|e| e.to_string())?;
        let (x, y) = toy_set(features, n, classes, steps, 1);
        let cfg = TrainConfig::profile("default", kind, 0).map_err(|e| e.to_string())?;
        check(cfg.batch_size == 32 && cfg.adam.lr == 1e-4, || format!("{cfg:?} is not the profile default"))?;
        let out = train(model, &x, &y, &x, &y, &cfg).map_err(|e| e.to_string())?;
        let first = out.history.records.iter().find(|r| r.train_acc == 1.0).map(|r| r.epoch);
        let epoch = first.ok_or_else(|| {
            let best = out.history.records.iter().map(|r| r.train_acc).fold(0.0, f64::max);
            format!("{} never reached 100% training accuracy (best {:.1}%)", kind.name(), 100.0 * best)
        })?;
        parts.push(format!("{} at epoch {epoch}/{}", kind.name(), cfg.epochs));
    }
    within(t0.elapsed(), 180.0)?;
    Ok(format!("100% training accuracy: {}; {:.1}s", parts.join(", "), t0.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------- 5, 6

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn synthetic_run(seed: u64, out: &Path) -> RunConfig {
    RunConfig {
        source: DataSource::Synthetic(SyntheticConfig {
            seed,
            ..SyntheticConfig::default()
        }),
        window_profile: None,
        train_profile: "default".into(),
        fusion: FusionChoice::Both,
        seed,
        epochs: None,
        out: out.to_path_buf(),
    }
}

fn fusion_gain(root: &Path) -> Outcome {
    let t0 = Instant::now();
    let names = ["Inertial", "Vision", FusionMethod::Average.label(), FusionMethod::Max.label()];
    let mut sums = [0.0; 4];
    for seed in SEEDS {
        let cmp = run_pipeline(&synthetic_run(seed, &root.join(format!("seed{seed}")))).map_err(|e| e.to_string())?;
        let mut line = Vec::new();
        for (k, name) in names.iter().enumerate() {
            let acc = cmp.row(name).ok_or_else(|| format!("no {name} row"))?.report.accuracy;
            sums[k] += acc;
            line.push(format!("{name} {:.1}%", 100.0 * acc));
        }
        println!("    seed {seed}: {} ({:.0}s elapsed)", line.join(", "), t0.elapsed().as_secs_f64());
    }
    let mean = sums.map(|s| 100.0 * s / SEEDS.len() as f64);
    let [inertial, vision, avg, max] = mean;
    let summary = format!("mean accuracy: inertial {inertial:.1}%, vision {vision:.1}%, average {avg:.1}%, max {max:.1}%");
    check(avg >= inertial + 5.0 && avg >= vision + 5.0, || format!("fusion gain below 5 points; {summary}"))?;
    check(avg >= max - 1.0, || format!("average fusion trails max by more than 1 point; {summary}"))?;
    within(t0.elapsed(), 1200.0)?;
    Ok(format!("{summary}; {:.0}s", t0.elapsed().as_secs_f64()))
}

fn files_under(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if let Ok(rel) = p.strip_prefix(dir) {
                out.push(rel.to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

/// Reruns the first seed of the fusion experiment and compares bytes; runs
/// it twice itself when that experiment was skipped.
fn determinism(root: &Path) -> Outcome {
    let t0 = Instant::now();
    let first = root.join(format!("seed{}", SEEDS[0]));
    if !first.join("metrics.csv").exists() {
        run_pipeline(&synthetic_run(SEEDS[0], &first)).map_err(|e| e.to_string())?;
    }
    let second = root.join("rerun");
    run_pipeline(&synthetic_run(SEEDS[0], &second)).map_err(|e| e.to_string())?;
    let (a, b) = (files_under(&first), files_under(&second));
    check(a == b, || format!("artifact sets differ: {a:?} vs {b:?}"))?;
    let compared: Vec<&String> = a
        .iter()
        .filter(|f| f.ends_with(".csv") || f.ends_with(".bin") || f.ends_with(".json"))
        .collect();
    for f in &compared {
        let (x, y) = (fs::read(first.join(f)), fs::read(second.join(f)));
        check(matches!((&x, &y), (Ok(x), Ok(y)) if x == y), || format!("{f} differs between runs"))?;
    }
    let checkpoints = compared.iter().filter(|f| f.ends_with(".bin")).count();
    Ok(format!(
        "seed {} rerun: {} CSV/JSON/checkpoint files byte-identical ({checkpoints} binary); {:.0}s",
        SEEDS[0],
        compared.len(),
        t0.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 7

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..100 {
        let classes = rng.gen_range(1..=8);
        let n = rng.gen_range(1..=300);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let preds: Vec<usize> = labels
            .iter()
            .map(|&y| if rng.gen_bool(0.5) { y } else { rng.gen_range(0..classes) })
            .collect();
        let (report, cm) = evaluate(&preds, &labels, classes).map_err(|e| e.to_string())?;

        let cell = |t: usize, p: usize| labels.iter().zip(&preds).filter(|&(&a, &b)| a == t && b == p).count() as u64;
        let mut precision = Vec::new();
        let mut recall = Vec::new();
        let mut f1 = Vec::new();
        for c in 0..classes {
            for p in 0..classes {
                check(cm.counts[c][p] == cell(c, p), || format!("set {k}: cell ({c}, {p})"))?;
            }
            let tp = cell(c, c);
            let fp: u64 = (0..classes).filter(|&t| t != c).map(|t| cell(t, c)).sum();
            let fn_: u64 = (0..classes).filter(|&p| p != c).map(|p| cell(c, p)).sum();
            let pr = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let rc = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            precision.push(pr);
            recall.push(rc);
            f1.push(if pr + rc > 0.0 { 2.0 * pr * rc / (pr + rc) } else { 0.0 });
        }
        let macro_avg = |v: &[f64]| v.iter().sum::<f64>() / classes as f64;
        let hits = labels.iter().zip(&preds).filter(|(a, b)| a == b).count();
        let expected = [hits as f64 / n as f64, macro_avg(&precision), macro_avg(&recall), macro_avg(&f1)];
        let got = [report.accuracy, report.macro_precision, report.macro_recall, report.macro_f1];
        check(got == expected, || format!("set {k}: {got:?} vs oracle {expected:?}"))?;
        check(report.accuracy == cm.trace() as f64 / cm.total() as f64, || {
            format!("set {k}: accuracy is not trace/total")
        })?;
    }
    Ok("100 random sets match the confusion-matrix oracle exactly; accuracy == trace/total".into())
}

// ----------------------------------------------------------------

fn main() {
    // harness flags from `cargo test` (--nocapture, filters) do not apply
    if std::env::args().skip(1).any(|a| a == "--list") {
        return;
    }
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let work = tempfile::tempdir().expect("temp dir");
    let root = work.path().to_path_buf();
    let criteria: [(usize, &str, Box<dyn Fn() -> Outcome>); 7] = [
        (1, "gradient suite", Box::new(gradient_suite)),
        (2, "fusion oracle", Box::new(fusion_oracle)),
        (3, "preprocessing invariants", Box::new(preprocessing_invariants)),
        (4, "overfit sanity", Box::new(overfit_sanity)),
        (5, "fusion gain", Box::new({
            let r = root.clone();
            move || fusion_gain(&r)
        })),
        (6, "determinism", Box::new({
            let r = root.clone();
            move || determinism(&r)
        })),
        (7, "metrics oracle", Box::new(metrics_oracle)),
    ];
    let mut failed = Vec::new();
    for (id, name, body) in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(id)) {
            println!("criterion {id} {name}: SKIPPED");
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {id} {name}: PASS ({detail})"),
            Err(detail) => {
                println!("criterion {id} {name}: FAIL ({detail})");
                failed.push(*id);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        drop(work);
        std::process::exit(1);
    }
}
