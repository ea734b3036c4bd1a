//! Acceptance suite. Runs every criterion in sequence and writes one
//! PASS/FAIL line per criterion straight to stdout, then fails if any
//! criterion failed. Criterion 5 and 6 train full default ensembles and
//! dominate the runtime. `SDD_ACCEPTANCE_ONLY=1,4,9` restricts the run to
//! the listed criteria.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sdd_core::config::RunConfig;
use sdd_core::dataset::{
    assemble_element_set, partition_frames, select_triplet, split, Recording, Split,
    SplitFractions, TripletMap,
};
use sdd_core::ensemble::{damage_possibility, evaluate_dp};
use sdd_core::exec::Execution;
use sdd_core::gradcheck::grad_check;
use sdd_core::nn::{
    relu, relu_backward, softmax_cross_entropy, AdamConfig, ArchConfig, BatchNorm, Conv2d, Dense,
    MaxPool2d, Mode, Network,
};
use sdd_core::pipeline::{self, run_in_memory, InMemoryRun};
use sdd_core::structsim::{assemble, modal_frequencies, simulate, DamageSpec, ShearModel};
use sdd_core::{Rng, Tensor};

// Tolerances and targets.
const GRAD_INSTANCES: usize = 20;
const GRAD_TOL: f64 = 1e-5;
const GRAD_TOL_STRICT: f64 = 1e-6;
const GRAD_RUNTIME_S: f64 = 60.0;
const DP_VECTORS: usize = 100;
const DAMAGED_DP_MIN: f64 = 90.0;
const HEALTHY_DP_MAX: f64 = 10.0;
const MEAN_VALIDATION_MIN: f64 = 0.90;
const DETECTION_SEEDS: [u64; 3] = [1, 2, 3];
const DETECTION_PASSES_NEEDED: usize = 2;
const NOISE_GATED_DB: f64 = 30.0;
const NOISE_REPORTED_DB: [f64; 2] = [20.0, 10.0];
const NOISE_MAX_DROP: f64 = 0.05;
const REALTIME_FRAMES: usize = 1024;
const REALTIME_MAX_S: f64 = 1.0;
const MODAL_REL_TOL: f64 = 1e-9;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn emit(o: &Outcome) {
    // written through the raw handle so the line survives output capture
    let line = format!(
        "{} criterion {}: {}: {}\n",
        if o.pass { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.detail
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn randn(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::randn(shape, rng, 0.0, 1.0).unwrap()
}

/// Worst relative error per layer over random instances.
fn gradient_errors() -> BTreeMap<&'static str, f64> {
    let mut worst: BTreeMap<&'static str, f64> = BTreeMap::new();
    let mut note = |k: &'static str, e: f64| {
        let w = worst.entry(k).or_insert(0.0);
        *w = w.max(e);
    };
    let eps = 1e-5;
    for seed in 0..GRAD_INSTANCES as u64 {
        let mut rng = Rng::new(1000 + seed);
        let ci = 1 + rng.below(2);
        let co = 1 + rng.below(3);
        let (h, w) = (5 + rng.below(5), 2 + rng.below(3));
        let (kh, kw) = (1 + rng.below(3), 1 + rng.below(2));
        let b = 2 + rng.below(2);

        // conv2d: input, weight, bias
        let conv = Conv2d::new(randn(&[co, ci, kh, kw], &mut rng), randn(&[co], &mut rng)).unwrap();
        let x = randn(&[b, ci, h, w], &mut rng);
        let (y, cache) = conv.forward(&x).unwrap();
        let r = randn(y.shape(), &mut rng);
        let g = conv.backward(&r, &cache).unwrap();
        note(
            "conv2d",
            grad_check(|t| Ok(dot(&conv.forward(t)?.0, &r)), &x, &g.input, eps).unwrap(),
        );
        note(
            "conv2d",
            grad_check(
                |t| {
                    Ok(dot(
                        &Conv2d::new(t.clone(), conv.bias.clone())?.forward(&x)?.0,
                        &r,
                    ))
                },
                &conv.weight,
                &g.weight,
                eps,
            )
            .unwrap(),
        );
        note(
            "conv2d",
            grad_check(
                |t| {
                    Ok(dot(
                        &Conv2d::new(conv.weight.clone(), t.clone())?.forward(&x)?.0,
                        &r,
                    ))
                },
                &conv.bias,
                &g.bias,
                eps,
            )
            .unwrap(),
        );

        // batchnorm, train mode: input, gamma, beta
        let mut bn = BatchNorm::new(co, 1e-5, 0.1).unwrap();
        bn.gamma = Tensor::randn(&[co], &mut rng, 1.0, 0.3).unwrap();
        bn.beta = randn(&[co], &mut rng);
        let xb = Tensor::randn(&[b + 2, co, h], &mut rng, 0.5, 1.5).unwrap();
        let (yb, cache) = bn.clone().forward(&xb, Mode::Train).unwrap();
        let r = randn(yb.shape(), &mut rng);
        let g = bn.backward(&r, &cache).unwrap();
        note(
            "batchnorm",
            grad_check(
                |t| Ok(dot(&bn.clone().forward(t, Mode::Train)?.0, &r)),
                &xb,
                &g.input,
                eps,
            )
            .unwrap(),
        );
        let with = |gamma: &Tensor, beta: &Tensor| {
            let mut l = bn.clone();
            l.gamma = gamma.clone();
            l.beta = beta.clone();
            l
        };
        note(
            "batchnorm",
            grad_check(
                |t| Ok(dot(&with(t, &bn.beta).forward(&xb, Mode::Train)?.0, &r)),
                &bn.gamma,
                &g.gamma,
                eps,
            )
            .unwrap(),
        );
        note(
            "batchnorm",
            grad_check(
                |t| Ok(dot(&with(&bn.gamma, t).forward(&xb, Mode::Train)?.0, &r)),
                &bn.beta,
                &g.beta,
                eps,
            )
            .unwrap(),
        );

        // relu
        let xr = randn(&[b, co, h, w], &mut rng);
        let (yr, cache) = relu(&xr);
        let r = randn(yr.shape(), &mut rng);
        let gr = relu_backward(&r, &cache).unwrap();
        note(
            "relu",
            grad_check(|t| Ok(dot(&relu(t).0, &r)), &xr, &gr, eps).unwrap(),
        );

        // maxpool
        let pool = MaxPool2d::new(2, 1 + rng.below(2)).unwrap();
        let xp = randn(&[b, co, 2 * h, 2 * w], &mut rng);
        let (yp, cache) = pool.forward(&xp).unwrap();
        let r = randn(yp.shape(), &mut rng);
        let gp = pool.backward(&r, &cache).unwrap();
        note(
            "maxpool",
            grad_check(|t| Ok(dot(&pool.forward(t)?.0, &r)), &xp, &gp, eps).unwrap(),
        );

        // dense: input, weight, bias
        let (fin, fout) = (3 + rng.below(10), 2);
        let dense = Dense::new(randn(&[fout, fin], &mut rng), randn(&[fout], &mut rng)).unwrap();
        let u = randn(&[b, fin], &mut rng);
        let (yd, cache) = dense.forward(&u).unwrap();
        let r = randn(yd.shape(), &mut rng);
        let g = dense.backward(&r, &cache).unwrap();
        note(
            "dense",
            grad_check(|t| Ok(dot(&dense.forward(t)?.0, &r)), &u, &g.input, eps).unwrap(),
        );
        note(
            "dense",
            grad_check(
                |t| {
                    Ok(dot(
                        &Dense::new(t.clone(), dense.bias.clone())?.forward(&u)?.0,
                        &r,
                    ))
                },
                &dense.weight,
                &g.weight,
                eps,
            )
            .unwrap(),
        );
        note(
            "dense",
            grad_check(
                |t| {
                    Ok(dot(
                        &Dense::new(dense.weight.clone(), t.clone())?.forward(&u)?.0,
                        &r,
                    ))
                },
                &dense.bias,
                &g.bias,
                eps,
            )
            .unwrap(),
        );

        // softmax cross-entropy
        let logits = randn(&[b, 2], &mut rng);
        let labels: Vec<usize> = (0..b).map(|_| rng.below(2)).collect();
        let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
        note(
            "softmax_ce",
            grad_check(
                |t| Ok(softmax_cross_entropy(t, &labels)?.0),
                &logits,
                &g,
                eps,
            )
            .unwrap(),
        );
    }
    worst
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let worst = gradient_errors();
    let secs = t0.elapsed().as_secs_f64();
    let mut pass = secs < GRAD_RUNTIME_S;
    let mut parts = Vec::new();
    for (layer, err) in &worst {
        let tol = if matches!(*layer, "conv2d" | "dense" | "softmax_ce") {
            GRAD_TOL_STRICT
        } else {
            GRAD_TOL
        };
        pass &= *err < tol;
        parts.push(format!("{layer} {err:.1e} (< {tol:.0e})"));
    }
    Outcome {
        id: 1,
        name: "gradient fidelity",
        pass,
        detail: format!(
            "{GRAD_INSTANCES} instances per layer; {}; {secs:.1} s",
            parts.join(", ")
        ),
    }
}

fn criterion_2() -> Outcome {
    let cfg = RunConfig::default();
    let model = cfg.model();
    let map = TripletMap::chain(10).unwrap();
    let rec = |scenario: usize, damaged: &[usize]| -> Recording {
        let mut r = simulate(
            &model,
            Some(&DamageSpec::uniform(damaged, 0.2)),
            &cfg.excitation_spec(500 + scenario as u64),
        )
        .unwrap();
        r.meta.scenario = scenario;
        r
    };
    let recs = vec![rec(0, &[4]), rec(1, &[])];
    let s_u = recs[0].samples();
    let signal = select_triplet(&recs[0], &map, 4).unwrap();
    let frames = partition_frames(&signal, 256, 1, 4, 0).unwrap().len();
    let mut fs = assemble_element_set(&recs, &map, 4, 256, &mut Rng::new(1)).unwrap();
    split(&mut fs, &SplitFractions::default(), &mut Rng::new(2)).unwrap();
    let counts: Vec<[usize; 3]> = (0..2)
        .map(|l| {
            [
                fs.count(Split::Train, l),
                fs.count(Split::Test, l),
                fs.count(Split::Validation, l),
            ]
        })
        .collect();
    let pass = s_u == 262_144 && frames == 1024 && counts.iter().all(|c| *c == [512, 128, 256]);
    Outcome {
        id: 2,
        name: "framing arithmetic",
        pass,
        detail: format!("s_u {s_u}, frames {frames}, train/test/validation per class {counts:?}"),
    }
}

fn criterion_3() -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for seed in 1..=3u64 {
        let mut cfg = RunConfig {
            seed,
            ..RunConfig::default()
        };
        cfg.excitation.duration = 32.0;
        let round =
            pipeline::simulate_round(&cfg, pipeline::ROUND_A, Execution::from_jobs(None)).unwrap();
        for e in 0..cfg.num_elements() {
            let fs = pipeline::build_frameset(&cfg, &round, e).unwrap();
            let (u, d) = fs.class_counts();
            let train = (fs.count(Split::Train, 0), fs.count(Split::Train, 1));
            checked += 1;
            if u != d || train.0 != train.1 {
                bad.push(format!("seed {seed} element {e}: {u}/{d}, train {train:?}"));
            }
        }
    }
    Outcome {
        id: 3,
        name: "balancing",
        pass: bad.is_empty(),
        detail: format!("{checked} element sets over 3 runs, unequal: {bad:?}"),
    }
}

fn criterion_4() -> Outcome {
    let arch = ArchConfig {
        frame_len: 64,
        ..ArchConfig::default()
    };
    let mut mismatches = 0;
    let mut rng = Rng::new(44);
    let mut ones_seen = 0;
    for k in 0..DP_VECTORS {
        let net =
            Network::new(arch.clone(), AdamConfig::default(), &mut Rng::new(k as u64)).unwrap();
        let n = 1 + rng.below(64);
        let frames: Vec<Tensor> = (0..n)
            .map(|_| {
                let (mean, std) = (rng.uniform() - 0.5, 0.5 + 2.0 * rng.uniform());
                Tensor::randn(&[1, 64, 3], &mut rng, mean, std).unwrap()
            })
            .collect();
        let got = evaluate_dp(&net, &frames).unwrap();
        let mut count = 0usize;
        for f in &frames {
            let z = net.predict(f).unwrap();
            let label = if z.data()[1] > z.data()[0] { 1 } else { 0 };
            count += label;
        }
        ones_seen += count;
        if got.dp != 100.0 * count as f64 / n as f64 || got.n() != n {
            mismatches += 1;
        }
        let labels: Vec<usize> = (0..1 + rng.below(500)).map(|_| rng.below(2)).collect();
        let recount = labels.iter().sum::<usize>() as f64 * 100.0 / labels.len() as f64;
        if damage_possibility(&labels).unwrap() != recount {
            mismatches += 1;
        }
    }
    Outcome {
        id: 4,
        name: "DP oracle",
        pass: mismatches == 0 && ones_seen > 0,
        detail: format!("{DP_VECTORS} network label vectors and {DP_VECTORS} raw label vectors, {mismatches} mismatches"),
    }
}

fn run_seed(seed: u64, train_snr: Option<f64>, eval_snr: Option<f64>) -> InMemoryRun {
    let mut cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    cfg.noise.train_snr_db = train_snr;
    cfg.noise.eval_snr_db = eval_snr;
    run_in_memory(&cfg, Execution::from_jobs(None)).unwrap()
}

fn mean_validation(run: &InMemoryRun) -> f64 {
    run.train
        .iter()
        .map(|r| r.best_validation_accuracy)
        .sum::<f64>()
        / run.train.len() as f64
}

fn mean_test(run: &InMemoryRun) -> f64 {
    run.train.iter().map(|r| r.test_accuracy).sum::<f64>() / run.train.len() as f64
}

fn criterion_5(baseline: &mut Option<InMemoryRun>) -> Outcome {
    let t0 = Instant::now();
    let (mut passes, mut fails) = (0, 0);
    let mut parts = Vec::new();
    for &seed in &DETECTION_SEEDS {
        if passes >= DETECTION_PASSES_NEEDED
            || fails > DETECTION_SEEDS.len() - DETECTION_PASSES_NEEDED
        {
            break;
        }
        let run = run_seed(seed, None, None);
        let violations = run
            .eval
            .detection_violations(DAMAGED_DP_MIN, HEALTHY_DP_MAX);
        let val = mean_validation(&run);
        let mut min_damaged = f64::INFINITY;
        let mut max_healthy: f64 = 0.0;
        for s in &run.eval.scenarios {
            for e in &s.elements {
                if e.damaged {
                    min_damaged = min_damaged.min(e.dp);
                } else {
                    max_healthy = max_healthy.max(e.dp);
                }
            }
        }
        let ok = violations.is_empty() && val > MEAN_VALIDATION_MIN;
        if ok {
            passes += 1;
        } else {
            fails += 1;
        }
        parts.push(format!(
            "seed {seed} {}: min damaged DP {min_damaged:.1}, max undamaged DP {max_healthy:.1}, mean validation {val:.4}, violations {violations:?}",
            if ok { "ok" } else { "miss" }
        ));
        if seed == DETECTION_SEEDS[0] {
            *baseline = Some(run);
        }
    }
    Outcome {
        id: 5,
        name: "synthetic end-to-end detection",
        pass: passes >= DETECTION_PASSES_NEEDED,
        detail: format!("{}; {:.0} s", parts.join("; "), t0.elapsed().as_secs_f64()),
    }
}

fn criterion_6(baseline: Option<InMemoryRun>) -> Outcome {
    let seed = DETECTION_SEEDS[0];
    let clean = baseline.unwrap_or_else(|| run_seed(seed, None, None));
    let clean_acc = mean_test(&clean);
    drop(clean);
    let noisy = run_seed(seed, Some(NOISE_GATED_DB), Some(NOISE_GATED_DB));
    let gated = mean_test(&noisy);
    let drop_30 = clean_acc - gated;
    let mut rows = vec![
        format!("noise-free {clean_acc:.4}"),
        format!("{NOISE_GATED_DB} dB {gated:.4} (drop {drop_30:.4})"),
    ];
    drop(noisy);
    for snr in NOISE_REPORTED_DB {
        let run = run_seed(seed, Some(snr), Some(snr));
        rows.push(format!(
            "{snr} dB {:.4} (reported, not gated)",
            mean_test(&run)
        ));
    }
    Outcome {
        id: 6,
        name: "noise robustness",
        pass: drop_30 < NOISE_MAX_DROP,
        detail: format!("mean test accuracy: {}", rows.join(", ")),
    }
}

fn criterion_7() -> Outcome {
    let cfg = RunConfig::default();
    let rec = simulate(&cfg.model(), None, &cfg.excitation_spec(7)).unwrap();
    let net = Network::new(
        ArchConfig::default(),
        AdamConfig::default(),
        &mut Rng::new(7),
    )
    .unwrap();
    let map = TripletMap::chain(10).unwrap();
    let classify = || {
        let signal = select_triplet(&rec, &map, 0).unwrap();
        let frames: Vec<Tensor> = partition_frames(&signal, 256, 0, 0, 0)
            .unwrap()
            .into_iter()
            .map(|f| f.data)
            .collect();
        evaluate_dp(&net, &frames).unwrap().n()
    };
    classify();
    let t0 = Instant::now();
    let n = classify();
    let secs = t0.elapsed().as_secs_f64();
    Outcome {
        id: 7,
        name: "real-time classification",
        pass: n == REALTIME_FRAMES && secs < REALTIME_MAX_S,
        detail: format!(
            "{n} frames in {secs:.3} s single-threaded ({:.0} frames/s)",
            n as f64 / secs
        ),
    }
}

fn collect_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != pipeline::THROUGHPUT) {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn criterion_8() -> Outcome {
    let run = |exec: Execution| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.excitation.duration = 16.0;
        cfg.training.epochs = 3;
        cfg.resolve_paths(dir.path());
        pipeline::cmd_simulate(&cfg, exec).unwrap();
        pipeline::cmd_train(&cfg, None, true, exec).unwrap();
        pipeline::cmd_evaluate(&cfg, None, exec).unwrap();
        pipeline::cmd_report(&cfg).unwrap();
        let files = collect_files(dir.path());
        (dir, files)
    };
    let (_a, fa) = run(Execution::Sequential);
    let (_b, fb) = run(Execution::Parallel { jobs: 2 });
    let differing: Vec<_> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    let checkpoints = fa
        .keys()
        .filter(|k| k.extension().is_some_and(|e| e == "sdd"))
        .count();
    Outcome {
        id: 8,
        name: "determinism",
        pass: fa.len() == fb.len() && differing.is_empty() && checkpoints == 10,
        detail: format!(
            "16-s recordings, 3 epochs, sequential vs 2 jobs: {} files ({checkpoints} checkpoints) compared, throughput timings excluded, differing {differing:?}",
            fa.len()
        ),
    }
}

fn criterion_9() -> Outcome {
    let pi = std::f64::consts::PI;
    let one = ShearModel::uniform(1, 1.0, (2.0 * pi * 4.0f64).powi(2), 0.02);
    let s1 = assemble(&one, None).unwrap();
    let f1 = modal_frequencies(&s1.mass, &s1.stiffness).unwrap();
    let e1 = (f1[0] - 4.0).abs() / 4.0;
    let s2 = assemble(&ShearModel::uniform(2, 1.0, 1.0, 0.02), None).unwrap();
    let f2 = modal_frequencies(&s2.mass, &s2.stiffness).unwrap();
    let exact = [
        ((3.0 - 5f64.sqrt()) / 2.0).sqrt() / (2.0 * pi),
        ((3.0 + 5f64.sqrt()) / 2.0).sqrt() / (2.0 * pi),
    ];
    let e2 = f2
        .iter()
        .zip(exact)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);

    let mut rng = Rng::new(9);
    let mut configs = 0;
    let mut not_lowered = 0;
    let base = RunConfig::default();
    let mut cases: Vec<(ShearModel, DamageSpec)> = base
        .scenarios
        .damaged
        .iter()
        .filter(|d| !d.is_empty())
        .map(|d| {
            (
                base.model(),
                DamageSpec::uniform(d, base.scenarios.reduction),
            )
        })
        .collect();
    for _ in 0..200 {
        let n = 1 + rng.below(12);
        let model = ShearModel {
            masses: (0..n).map(|_| 0.5 + rng.uniform()).collect(),
            stiffnesses: (0..n).map(|_| 1e3 * (0.5 + rng.uniform())).collect(),
            damping_ratios: [0.02, 0.02],
        };
        let k = 1 + rng.below(n);
        let mut elements: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut elements);
        let spec = DamageSpec::uniform(&elements[..k], 0.05 + 0.9 * rng.uniform());
        cases.push((model, spec));
    }
    for (model, spec) in &cases {
        let a = assemble(model, None).unwrap();
        let d = assemble(model, Some(spec)).unwrap();
        let fa = modal_frequencies(&a.mass, &a.stiffness).unwrap();
        let fd = modal_frequencies(&d.mass, &d.stiffness).unwrap();
        configs += 1;
        if !fd.iter().zip(&fa).any(|(x, y)| x < y) {
            not_lowered += 1;
        }
    }
    Outcome {
        id: 9,
        name: "simulator oracle",
        pass: e1 < MODAL_REL_TOL && e2 < MODAL_REL_TOL && not_lowered == 0,
        detail: format!(
            "1-DOF rel err {e1:.1e}, 2-DOF rel err {e2:.1e} (< {MODAL_REL_TOL:.0e}); {configs} damaged configurations, {not_lowered} without a lowered frequency"
        ),
    }
}

fn selected() -> Option<Vec<usize>> {
    let v = std::env::var("SDD_ACCEPTANCE_ONLY").ok()?;
    Some(v.split(',').filter_map(|t| t.trim().parse().ok()).collect())
}

#[test]
fn acceptance_criteria() {
    let only = selected();
    let want = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));
    let mut outcomes = Vec::new();
    {
        let mut out = std::io::stdout().lock();
        let _ = out.write_all(b"\nacceptance criteria\n");
    }
    let mut record = |o: Outcome| {
        emit(&o);
        outcomes.push(o);
    };
    let cheap: [(usize, fn() -> Outcome); 7] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    for (id, f) in cheap {
        if want(id) {
            record(f());
        }
    }
    let mut baseline = None;
    if want(5) {
        record(criterion_5(&mut baseline));
    }
    if want(6) {
        record(criterion_6(baseline));
    }
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
