//! One CNN per structural element: training with best-on-validation
//! selection, Damage Possibility (DP) scoring and accuracy bookkeeping.

use serde::{Deserialize, Serialize};

use crate::dataset::{
    partition_frames, select_triplet, Frame, FrameSet, Recording, Split, TripletMap,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nn::{AdamConfig, ArchConfig, Network};
use crate::rng::{stream, Rng};
use crate::tensor::Tensor;

/// Frames per eval-mode forward pass.
const EVAL_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub num_elements: usize,
    /// Architecture; `arch.frame_len` is the frame length s_f.
    pub arch: ArchConfig,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            num_elements: 10,
            arch: ArchConfig::default(),
            adam: AdamConfig::default(),
            epochs: 30,
            batch_size: 32,
            seed: 1,
        }
    }
}

impl EnsembleConfig {
    pub fn frame_len(&self) -> usize {
        self.arch.frame_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_elements == 0 {
            return Err(Error::Config("num_elements must be >= 1".into()));
        }
        if self.arch.frame_len < 16 {
            return Err(Error::Config(format!(
                "frame length {} is below the minimum of 16",
                self.arch.frame_len
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch_size must be >= 2 for batch normalization".into(),
            ));
        }
        self.arch
            .flat_features()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Seed for element `i`: `seed + i`.
    pub fn element_seed(&self, element: usize) -> u64 {
        self.seed.wrapping_add(element as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementTrainReport {
    pub element: usize,
    /// 1-based epoch of the returned snapshot.
    pub best_epoch: usize,
    pub best_validation_accuracy: f64,
    /// Eval-mode accuracy of the returned snapshot on the train split.
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub train_frames: usize,
    pub validation_frames: usize,
    pub test_frames: usize,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
    pub validation_curve: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedElement {
    pub network: Network,
    pub report: ElementTrainReport,
}

/// Eval-mode argmax labels for a list of frames, in order.
pub fn classify_frames(network: &Network, frames: &[&Tensor]) -> Result<Vec<usize>> {
    let mut labels = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(EVAL_CHUNK) {
        let x = network.stack_frames(chunk.iter().copied())?;
        let logits = network.predict(&x)?;
        logits.ensure_finite("eval logits")?;
        labels.extend(
            logits
                .data()
                .chunks_exact(2)
                .map(|z| usize::from(z[1] > z[0])),
        );
    }
    Ok(labels)
}

/// Fraction of frames whose predicted label equals their own label.
pub fn compute_accuracy(network: &Network, frames: &[&Frame]) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::Contract("accuracy of an empty frame list".into()));
    }
    let data: Vec<&Tensor> = frames.iter().map(|f| &f.data).collect();
    let predicted = classify_frames(network, &data)?;
    let hits = predicted
        .iter()
        .zip(frames)
        .filter(|(p, f)| **p == f.label)
        .count();
    Ok(hits as f64 / frames.len() as f64)
}

/// Mean of per-scenario accuracies.
pub fn scenario_mean_accuracy(per_scenario: &[f64]) -> Result<f64> {
    if per_scenario.is_empty() {
        return Err(Error::Contract("no scenarios to average".into()));
    }
    Ok(per_scenario.iter().sum::<f64>() / per_scenario.len() as f64)
}

/// Trains the network for `frameset.element`. Initialization draws from the
/// init stream of the element seed; batch order and dropout masks from its
/// train stream. After every epoch the validation split is scored in eval
/// mode and the best snapshot is kept, the earliest epoch winning ties.
/// A trailing batch of one frame is skipped since batch statistics need two.
pub fn train_element(frameset: &FrameSet, config: &EnsembleConfig) -> Result<TrainedElement> {
    config.validate()?;
    let element = frameset.element;
    let train = frameset.frames_in(Split::Train);
    let validation = frameset.frames_in(Split::Validation);
    let test = frameset.frames_in(Split::Test);
    if train.len() < 2 || validation.is_empty() {
        return Err(Error::Contract(format!(
            "element {element}: needs >= 2 train and >= 1 validation frames, got {} and {}",
            train.len(),
            validation.len()
        )));
    }
    let seed = config.element_seed(element);
    let mut net = Network::new(
        config.arch.clone(),
        config.adam,
        &mut Rng::with_stream(seed, stream::INIT),
    )?;
    let mut rng = Rng::with_stream(seed, stream::TRAIN);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(usize, f64, Network)> = None;
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut validation_curve = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let x = net.stack_frames(chunk.iter().map(|&k| &train[k].data))?;
            let labels: Vec<usize> = chunk.iter().map(|&k| train[k].label).collect();
            loss_sum += net
                .train_step(&x, &labels, &mut rng)
                .map_err(|e| Error::Numeric(format!("element {element}, epoch {epoch}: {e}")))?;
            batches += 1;
        }
        loss_curve.push(loss_sum / batches as f64);
        let acc = compute_accuracy(&net, &validation)
            .map_err(|e| Error::Numeric(format!("element {element}, epoch {epoch}: {e}")))?;
        if acc.is_nan() {
            return Err(Error::Numeric(format!(
                "element {element}: validation accuracy is NaN"
            )));
        }
        validation_curve.push(acc);
        if best.as_ref().is_none_or(|(_, b, _)| acc > *b) {
            best = Some((epoch, acc, net.clone()));
        }
    }
    let (best_epoch, best_validation_accuracy, network) = best.expect("at least one epoch");
    let train_accuracy = compute_accuracy(&network, &train)?;
    let test_accuracy = if test.is_empty() {
        f64::NAN
    } else {
        compute_accuracy(&network, &test)?
    };
    Ok(TrainedElement {
        network,
        report: ElementTrainReport {
            element,
            best_epoch,
            best_validation_accuracy,
            train_accuracy,
            test_accuracy,
            train_frames: train.len(),
            validation_frames: validation.len(),
            test_frames: test.len(),
            loss_curve,
            validation_curve,
        },
    })
}

/// Independent [`train_element`] runs, one per frame set, returned in input
/// order. Outcomes do not depend on `exec`.
pub fn train_ensemble(
    framesets: &[FrameSet],
    config: &EnsembleConfig,
    exec: Execution,
) -> Vec<Result<TrainedElement>> {
    exec.map(framesets, |fs| train_element(fs, config))
}

/// `100 · Σ L / n` over binary per-frame labels.
pub fn damage_possibility(labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Contract("DP of an empty frame list".into()));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    Ok(100.0 * ones as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpResult {
    pub dp: f64,
    /// Per-frame predicted labels, in input order.
    pub labels: Vec<usize>,
}

impl DpResult {
    pub fn n(&self) -> usize {
        self.labels.len()
    }
}

pub fn evaluate_dp(network: &Network, frames: &[Tensor]) -> Result<DpResult> {
    if frames.is_empty() {
        return Err(Error::Contract("DP of an empty frame list".into()));
    }
    let refs: Vec<&Tensor> = frames.iter().collect();
    let labels = classify_frames(network, &refs)?;
    Ok(DpResult {
        dp: damage_possibility(&labels)?,
        labels,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_negative: usize,
    pub false_positive: usize,
    pub true_negative: usize,
}

impl Confusion {
    pub fn from_labels(predicted: &[usize], truth: usize) -> Self {
        let ones = predicted.iter().filter(|&&l| l == 1).count();
        let zeros = predicted.len() - ones;
        if truth == 1 {
            Confusion {
                true_positive: ones,
                false_negative: zeros,
                ..Default::default()
            }
        } else {
            Confusion {
                false_positive: ones,
                true_negative: zeros,
                ..Default::default()
            }
        }
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.false_negative + self.false_positive + self.true_negative
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_positive + self.true_negative) as f64 / self.total() as f64
    }

    pub fn merge(&self, other: &Confusion) -> Confusion {
        Confusion {
            true_positive: self.true_positive + other.true_positive,
            false_negative: self.false_negative + other.false_negative,
            false_positive: self.false_positive + other.false_positive,
            true_negative: self.true_negative + other.true_negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementEval {
    pub element: usize,
    pub dp: f64,
    pub n: usize,
    /// Ground truth: the scenario damages this element.
    pub damaged: bool,
    pub labels: Vec<usize>,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEval {
    pub scenario: usize,
    pub damaged: Vec<usize>,
    pub elements: Vec<ElementEval>,
}

/// DP of every element on one recording; `networks[i]` monitors element `i`.
pub fn evaluate_scenario(
    networks: &[Network],
    recording: &Recording,
    map: &TripletMap,
    frame_len: usize,
) -> Result<ScenarioEval> {
    let mut elements = Vec::with_capacity(networks.len());
    for (i, net) in networks.iter().enumerate() {
        let damaged = recording.damages(i);
        let signal = select_triplet(recording, map, i)?;
        let frames = partition_frames(
            &signal,
            frame_len,
            usize::from(damaged),
            i,
            recording.meta.scenario,
        )?;
        let data: Vec<Tensor> = frames.into_iter().map(|f| f.data).collect();
        let r = evaluate_dp(net, &data)?;
        elements.push(ElementEval {
            element: i,
            dp: r.dp,
            n: r.n(),
            damaged,
            confusion: Confusion::from_labels(&r.labels, usize::from(damaged)),
            labels: r.labels,
        });
    }
    Ok(ScenarioEval {
        scenario: recording.meta.scenario,
        damaged: recording.meta.damaged.clone(),
        elements,
    })
}

/// DP threshold used to flag an element as damaged in summaries.
pub const DAMAGE_FLAG_DP: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub scenarios: Vec<ScenarioEval>,
}

impl EvalReport {
    pub fn num_elements(&self) -> usize {
        self.scenarios.first().map_or(0, |s| s.elements.len())
    }

    /// `dp[scenario][element]`.
    pub fn dp_matrix(&self) -> Vec<Vec<f64>> {
        self.scenarios
            .iter()
            .map(|s| s.elements.iter().map(|e| e.dp).collect())
            .collect()
    }

    pub fn element_confusion(&self, element: usize) -> Confusion {
        self.scenarios
            .iter()
            .filter_map(|s| s.elements.get(element))
            .fold(Confusion::default(), |acc, e| acc.merge(&e.confusion))
    }

    /// Mean over scenarios of the element's per-scenario accuracy.
    pub fn element_scenario_mean_accuracy(&self, element: usize) -> Result<f64> {
        let per: Vec<f64> = self
            .scenarios
            .iter()
            .filter_map(|s| s.elements.get(element))
            .map(|e| e.confusion.accuracy())
            .collect();
        scenario_mean_accuracy(&per)
    }

    /// Mean over elements of the scenario-mean accuracy.
    pub fn mean_accuracy(&self) -> Result<f64> {
        let n = self.num_elements();
        if n == 0 {
            return Err(Error::Contract("empty evaluation report".into()));
        }
        let mut sum = 0.0;
        for i in 0..n {
            sum += self.element_scenario_mean_accuracy(i)?;
        }
        Ok(sum / n as f64)
    }

    /// Cells violating "damaged DP > high, undamaged DP < low", as
    /// `(scenario, element, dp)`.
    pub fn detection_violations(&self, high: f64, low: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for s in &self.scenarios {
            for e in &s.elements {
                let ok = if e.damaged { e.dp > high } else { e.dp < low };
                if !ok {
                    out.push((s.scenario, e.element, e.dp));
                }
            }
        }
        out
    }
}
