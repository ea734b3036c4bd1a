//! The simulate → train → evaluate → report command chain. Every step reads
//! and writes only the files named by the run config, so commands compose
//! across processes.
//!
//! Round A recordings feed the per-element frame sets (train, test and
//! validation splits). The leading `heldout_fraction` of each round B
//! recording is the held-out per-scenario DP evaluation.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::RunConfig;
use crate::dataset::{
    assemble_element_set, load_recording, partition_frames, select_triplet, split, write_recording,
    FrameSet, Recording, Split,
};
use crate::ensemble::{
    compute_accuracy, evaluate_dp, evaluate_scenario, train_ensemble, ElementTrainReport,
    EvalReport, TrainedElement,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nn::{checkpoint, Network};
use crate::report::{self, SplitAccuracy, Throughput};
use crate::rng::{stream, Rng};
use crate::structsim::{add_awgn, simulate};
use crate::tensor::Tensor;

pub const ROUNDS: [&str; 2] = ["A", "B"];
pub const ROUND_A: usize = 0;
pub const ROUND_B: usize = 1;

pub const TRAIN_REPORT: &str = "train_report.csv";
pub const LOSS_CURVES: &str = "loss_curves.csv";
pub const EVAL_REPORT: &str = "eval_report.csv";
pub const DP_MATRIX: &str = "dp_matrix.csv";
pub const DP_TABLE: &str = "dp_table.csv";
pub const THROUGHPUT: &str = "throughput.csv";
pub const BARS_DIR: &str = "bars";
pub const MANIFEST_DIR: &str = "manifests";

/// `seed + 1000·(scenario + 1) + round`.
pub fn recording_seed(cfg: &RunConfig, scenario: usize, round: usize) -> u64 {
    cfg.seed
        .wrapping_add(1000 * (scenario as u64 + 1))
        .wrapping_add(round as u64)
}

pub fn recording_path(cfg: &RunConfig, scenario: usize, round: usize) -> PathBuf {
    cfg.paths
        .data_dir
        .join(format!("scenario_{scenario:02}_{}.csv", ROUNDS[round]))
}

pub fn checkpoint_path(cfg: &RunConfig, element: usize) -> PathBuf {
    cfg.paths
        .checkpoint_dir
        .join(format!("element_{element:02}.sdd"))
}

pub fn simulate_recording(cfg: &RunConfig, scenario: usize, round: usize) -> Result<Recording> {
    let exc = cfg.excitation_spec(recording_seed(cfg, scenario, round));
    let mut rec = simulate(&cfg.model(), Some(&cfg.damage(scenario)), &exc)?;
    rec.meta.scenario = scenario;
    rec.meta.round = ROUNDS[round].to_string();
    rec.meta.reduction = cfg.scenarios.reduction;
    Ok(rec)
}

/// Every scenario of one round, in scenario order.
pub fn simulate_round(cfg: &RunConfig, round: usize, exec: Execution) -> Result<Vec<Recording>> {
    let scenarios: Vec<usize> = (0..cfg.scenarios.damaged.len()).collect();
    exec.map(&scenarios, |&s| simulate_recording(cfg, s, round))
        .into_iter()
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes both rounds of every scenario; returns the CSV paths.
pub fn cmd_simulate(cfg: &RunConfig, exec: Execution) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    create_dir(&cfg.paths.data_dir)?;
    let jobs: Vec<(usize, usize)> = (0..ROUNDS.len())
        .flat_map(|r| (0..cfg.scenarios.damaged.len()).map(move |s| (s, r)))
        .collect();
    exec.map(&jobs, |&(s, r)| {
        let rec = simulate_recording(cfg, s, r)?;
        let path = recording_path(cfg, s, r);
        write_recording(&rec, &path)?;
        Ok(path)
    })
    .into_iter()
    .collect()
}

pub fn load_round(cfg: &RunConfig, round: usize) -> Result<Vec<Recording>> {
    (0..cfg.scenarios.damaged.len())
        .map(|s| {
            let path = recording_path(cfg, s, round);
            let rec = load_recording(&path)?;
            if rec.meta.damaged != cfg.scenarios.damaged[s] {
                return Err(Error::Config(format!(
                    "{}: recording damages {:?}, config scenario {s} lists {:?}",
                    path.display(),
                    rec.meta.damaged,
                    cfg.scenarios.damaged[s]
                )));
            }
            Ok(rec)
        })
        .collect()
}

/// Adds measurement noise seeded by each recording's own seed.
pub fn apply_noise(recordings: Vec<Recording>, snr_db: Option<f64>) -> Result<Vec<Recording>> {
    match snr_db {
        None => Ok(recordings),
        Some(snr) => recordings
            .iter()
            .map(|r| add_awgn(r, snr, r.meta.seed))
            .collect(),
    }
}

/// Balanced and split frame set for one element. Balancing draws from the
/// dataset stream, splitting from the split stream, of the element seed.
pub fn build_frameset(
    cfg: &RunConfig,
    recordings: &[Recording],
    element: usize,
) -> Result<FrameSet> {
    let map = cfg.triplet_map()?;
    let seed = cfg.ensemble().element_seed(element);
    let mut fs = assemble_element_set(
        recordings,
        &map,
        element,
        cfg.network.frame_len,
        &mut Rng::with_stream(seed, stream::DATASET),
    )?;
    split(
        &mut fs,
        &cfg.split,
        &mut Rng::with_stream(seed, stream::SPLIT),
    )?;
    Ok(fs)
}

fn check_elements(cfg: &RunConfig, elements: &[usize]) -> Result<()> {
    let n = cfg.num_elements();
    match elements.iter().find(|&&e| e >= n) {
        Some(e) => Err(Error::Config(format!("element {e} outside 0..{n}"))),
        None => Ok(()),
    }
}

/// Frames and trains the listed elements on round A recordings. Frame sets
/// are built inside each element job so only the in-flight ones are held.
pub fn train_elements(
    cfg: &RunConfig,
    round_a: &[Recording],
    elements: &[usize],
    exec: Execution,
    manifest_dir: Option<&Path>,
) -> Vec<Result<TrainedElement>> {
    let ens = cfg.ensemble();
    exec.map(elements, |&e| {
        let fs = build_frameset(cfg, round_a, e)?;
        if let Some(dir) = manifest_dir {
            fs.save_manifest(&dir.join(format!("element_{e:02}.csv")))?;
        }
        let mut out = train_ensemble(std::slice::from_ref(&fs), &ens, Execution::Sequential);
        out.pop().expect("one result per frame set")
    })
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub reports: Vec<ElementTrainReport>,
    pub checkpoints: Vec<PathBuf>,
}

/// Trains `elements` (all when `None`), writes one checkpoint per element
/// and the train report. If some elements fail, the report lists the ones
/// that succeeded and the first failure is returned.
pub fn cmd_train(
    cfg: &RunConfig,
    elements: Option<&[usize]>,
    manifest: bool,
    exec: Execution,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let all: Vec<usize> = (0..cfg.num_elements()).collect();
    let elements = elements.unwrap_or(&all);
    check_elements(cfg, elements)?;
    let round_a = apply_noise(load_round(cfg, ROUND_A)?, cfg.noise.train_snr_db)?;
    create_dir(&cfg.paths.checkpoint_dir)?;
    create_dir(&cfg.paths.report_dir)?;
    let manifest_dir = cfg.paths.report_dir.join(MANIFEST_DIR);
    if manifest {
        create_dir(&manifest_dir)?;
    }
    let results = train_elements(
        cfg,
        &round_a,
        elements,
        exec,
        manifest.then_some(manifest_dir.as_path()),
    );
    let mut reports = Vec::new();
    let mut checkpoints = Vec::new();
    let mut failure = None;
    for (&e, r) in elements.iter().zip(results) {
        match r {
            Ok(t) => {
                let path = checkpoint_path(cfg, e);
                checkpoint::save(&t.network, &path)?;
                checkpoints.push(path);
                reports.push(t.report);
            }
            Err(err) => {
                failure.get_or_insert(match err {
                    Error::Numeric(m) => Error::Numeric(format!("element {e}: {m}")),
                    other => other,
                });
            }
        }
    }
    report::write_train_report(&cfg.paths.report_dir.join(TRAIN_REPORT), &reports)?;
    report::write_loss_curves(&cfg.paths.report_dir.join(LOSS_CURVES), &reports)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(TrainOutcome {
            reports,
            checkpoints,
        }),
    }
}

/// Loads every element checkpoint and checks it against the configured
/// architecture.
pub fn load_networks(cfg: &RunConfig) -> Result<Vec<Network>> {
    (0..cfg.num_elements())
        .map(|e| {
            let path = checkpoint_path(cfg, e);
            if !path.exists() {
                return Err(Error::io(
                    &path,
                    std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("checkpoint for element {e} is missing"),
                    ),
                ));
            }
            let net = checkpoint::load(&path)?;
            if net.arch() != &cfg.network {
                return Err(Error::Model(format!(
                    "element {e}: checkpoint architecture {:?} differs from config {:?}",
                    net.arch(),
                    cfg.network
                )));
            }
            Ok(net)
        })
        .collect()
}

/// Per-scenario DP of every network on the held-out head of each round B
/// recording.
pub fn evaluate_heldout(
    cfg: &RunConfig,
    networks: &[Network],
    round_b: &[Recording],
    exec: Execution,
) -> Result<EvalReport> {
    let map = cfg.triplet_map()?;
    let scenarios = exec
        .map(round_b, |r| {
            let head = r.head_fraction(cfg.evaluation.heldout_fraction)?;
            evaluate_scenario(networks, &head, &map, cfg.network.frame_len)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { scenarios })
}

/// Accuracy of each network on its own round A splits.
pub fn split_accuracies(
    cfg: &RunConfig,
    networks: &[Network],
    round_a: &[Recording],
    exec: Execution,
) -> Result<Vec<SplitAccuracy>> {
    let elements: Vec<usize> = (0..networks.len()).collect();
    exec.map(&elements, |&e| {
        let fs = build_frameset(cfg, round_a, e)?;
        let acc = |s: Split| compute_accuracy(&networks[e], &fs.frames_in(s));
        Ok(SplitAccuracy {
            train: acc(Split::Train)?,
            validation: acc(Split::Validation)?,
            test: acc(Split::Test)?,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug)]
pub struct EvaluateOutcome {
    pub eval: EvalReport,
    pub splits: Vec<SplitAccuracy>,
}

/// Scores saved checkpoints. `snr_db` (or the config's `eval_snr_db`) adds
/// measurement noise to both rounds first.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    snr_db: Option<f64>,
    exec: Execution,
) -> Result<EvaluateOutcome> {
    cfg.validate()?;
    let snr = snr_db.or(cfg.noise.eval_snr_db);
    let networks = load_networks(cfg)?;
    let round_b = apply_noise(load_round(cfg, ROUND_B)?, snr)?;
    let eval = evaluate_heldout(cfg, &networks, &round_b, exec)?;
    drop(round_b);
    let round_a = apply_noise(load_round(cfg, ROUND_A)?, snr)?;
    let splits = split_accuracies(cfg, &networks, &round_a, exec)?;
    let dir = &cfg.paths.report_dir;
    create_dir(dir)?;
    report::write_eval_report(&dir.join(EVAL_REPORT), &eval, &splits, snr)?;
    report::write_dp_matrix(&dir.join(DP_MATRIX), &eval)?;
    report::write_dp_table(&dir.join(DP_TABLE), &eval)?;
    Ok(EvaluateOutcome { eval, splits })
}

/// Frames one element's triplet and classifies every frame.
fn classify_recording(
    cfg: &RunConfig,
    net: &Network,
    rec: &Recording,
    element: usize,
) -> Result<usize> {
    let map = cfg.triplet_map()?;
    let signal = select_triplet(rec, &map, element)?;
    let frames = partition_frames(
        &signal,
        cfg.network.frame_len,
        0,
        element,
        rec.meta.scenario,
    )?;
    let data: Vec<Tensor> = frames.into_iter().map(|f| f.data).collect();
    Ok(evaluate_dp(net, &data)?.n())
}

/// Single-threaded wall time to frame and classify a full recording through
/// every network, then once more through the first network alone.
pub fn measure_throughput(
    cfg: &RunConfig,
    networks: &[Network],
    rec: &Recording,
) -> Result<Throughput> {
    let t0 = Instant::now();
    for (e, net) in networks.iter().enumerate() {
        classify_recording(cfg, net, rec, e)?;
    }
    let ensemble_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let frames = classify_recording(cfg, &networks[0], rec, 0)?;
    let seconds = t1.elapsed().as_secs_f64();
    Ok(Throughput {
        frames,
        seconds,
        frames_per_second: frames as f64 / seconds,
        recording_seconds: rec.samples() as f64 / rec.fs(),
        ensemble_seconds,
    })
}

#[derive(Debug)]
pub struct ReportOutcome {
    pub bar_files: Vec<PathBuf>,
    pub throughput: Throughput,
}

/// Turns the evaluation DP table into per-scenario bar files and measures
/// classification throughput on the first round B recording. Evaluation
/// outputs are only read.
pub fn cmd_report(cfg: &RunConfig) -> Result<ReportOutcome> {
    cfg.validate()?;
    let dir = &cfg.paths.report_dir;
    let rows = report::read_dp_table(&dir.join(DP_TABLE))?;
    let bars = dir.join(BARS_DIR);
    create_dir(&bars)?;
    let mut bar_files = Vec::new();
    for s in 0..cfg.scenarios.damaged.len() {
        let mine: Vec<_> = rows.iter().filter(|r| r.scenario == s).collect();
        let path = bars.join(format!("scenario_{s:02}.csv"));
        report::write_scenario_bars(&path, &mine)?;
        bar_files.push(path);
    }
    let networks = load_networks(cfg)?;
    let rec = load_recording(&recording_path(cfg, 0, ROUND_B))?;
    let throughput = measure_throughput(cfg, &networks, &rec)?;
    report::write_throughput(&dir.join(THROUGHPUT), &throughput)?;
    Ok(ReportOutcome {
        bar_files,
        throughput,
    })
}

/// Result of [`run_in_memory`].
#[derive(Debug)]
pub struct InMemoryRun {
    pub train: Vec<ElementTrainReport>,
    pub eval: EvalReport,
    pub networks: Vec<Network>,
}

/// The whole chain without touching disk: simulate both rounds, train every
/// element on round A (with `train_snr_db` noise), and evaluate the held-out
/// round B heads (with `eval_snr_db` noise).
pub fn run_in_memory(cfg: &RunConfig, exec: Execution) -> Result<InMemoryRun> {
    cfg.validate()?;
    let round_a = apply_noise(simulate_round(cfg, ROUND_A, exec)?, cfg.noise.train_snr_db)?;
    let elements: Vec<usize> = (0..cfg.num_elements()).collect();
    let mut train = Vec::new();
    let mut networks = Vec::new();
    for r in train_elements(cfg, &round_a, &elements, exec, None) {
        let t = r?;
        train.push(t.report);
        networks.push(t.network);
    }
    drop(round_a);
    let round_b = apply_noise(simulate_round(cfg, ROUND_B, exec)?, cfg.noise.eval_snr_db)?;
    let eval = evaluate_heldout(cfg, &networks, &round_b, exec)?;
    Ok(InMemoryRun {
        train,
        eval,
        networks,
    })
}
