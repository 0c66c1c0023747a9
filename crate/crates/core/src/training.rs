//! Seeded SGD over the loss family.
//!
//! A run is a deterministic function of its network description, its
//! [`TrainingConfig`] (including the seed) and its data. Initialization and
//! batch sampling draw from two independent ChaCha streams derived from the
//! seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, CIFAR100_COARSE_OF_FINE};
use crate::error::{Error, Result};
use crate::evaluation::{accuracy, network_outputs, EvalGrid, MetricReport};
use crate::losses::{loss_gradients, BatchGradients, LossKind, LossVariant, ScaleState};
use crate::nn::{Network, NetworkSpec};
use crate::scaling::param_scale;

const INIT_STREAM: u64 = 0;
const SAMPLER_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum InitScheme {
    /// Gaussian with standard deviation `sqrt(2 / fan_in)` per layer.
    He,
    /// Gaussian with the same standard deviation for every layer.
    Flat { std: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Iterations(usize),
    /// Full passes; each is `ceil(#train / batch_size)` steps.
    Epochs(usize),
}

impl Horizon {
    pub fn iterations(self, train_len: usize, batch_size: usize) -> usize {
        match self {
            Horizon::Iterations(n) => n,
            Horizon::Epochs(e) => e * train_len.div_ceil(batch_size.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub horizon: Horizon,
    pub variant: LossVariant,
    /// Initial `R2 / R1` (or initial `R_s`).
    pub scale_multiplier: f64,
    pub init: InitScheme,
    pub seed: u64,
    /// Test accuracy is sampled every this many iterations; 0 disables it.
    pub eval_every: usize,
    pub eval_grid: EvalGrid,
    /// Also produce a final report on the training set.
    pub eval_train: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            batch_size: 128,
            horizon: Horizon::Iterations(1000),
            variant: LossVariant::new(LossKind::TwoScale, 0.01),
            scale_multiplier: 10.0,
            init: InitScheme::He,
            seed: 0,
            eval_every: 100,
            eval_grid: EvalGrid::default(),
            eval_train: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(self.scale_multiplier > 0.0) || !self.scale_multiplier.is_finite() {
            return Err(Error::config("scale multiplier must be positive"));
        }
        if let InitScheme::Flat { std } = self.init {
            if !(std > 0.0) || !std.is_finite() {
                return Err(Error::config("init std must be positive"));
            }
        }
        self.variant.validate()
    }
}

/// Shuffled, consecutive batches; a fresh permutation per epoch and the short
/// final batch kept.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
    epoch: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(len: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if len == 0 {
            return Err(Error::input("cannot sample batches from an empty dataset"));
        }
        if batch_size == 0 || batch_size > len {
            return Err(Error::input(format!("batch size {batch_size} must lie in 1..={len}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SAMPLER_STREAM);
        let mut s = Self {
            order: (0..len).collect(),
            batch_size,
            pos: 0,
            epoch: 0,
            rng,
        };
        s.order.shuffle(&mut s.rng);
        Ok(s)
    }

    /// Epochs started so far, counting the current one from zero.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
            self.epoch += 1;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        batch
    }
}

impl Iterator for BatchSampler {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        Some(self.next_batch())
    }
}

pub fn batch_sampler(set: &Dataset, batch_size: usize, seed: u64) -> Result<BatchSampler> {
    BatchSampler::new(set.len(), batch_size, seed)
}

/// Network parameters, scales and sampler position of a run in progress.
#[derive(Debug, Clone)]
pub struct RunState {
    pub net: Network,
    pub scales: ScaleState,
    pub iteration: usize,
    pub sampler: BatchSampler,
}

/// Draws the initial parameters in layer order.
pub fn init_network(spec: &NetworkSpec, init: InitScheme, seed: u64) -> Result<Network> {
    let mut net = Network::new(spec.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let stds: Vec<f64> = match init {
        InitScheme::He => net.fan_ins().iter().map(|&f| (2.0 / f as f64).sqrt()).collect(),
        InitScheme::Flat { std } => vec![std; net.degree()],
    };
    let weights = net.weight_counts();
    net.update_params(|layer, p| {
        for (j, v) in p.iter_mut().enumerate() {
            // bias entries follow the weights and start at zero
            *v = if j < weights[layer] {
                let z: f64 = StandardNormal.sample(&mut rng);
                stds[layer] * z
            } else {
                0.0
            };
        }
    });
    Ok(net)
}

pub fn init_run(spec: &NetworkSpec, config: &TrainingConfig, train: &Dataset) -> Result<RunState> {
    config.validate()?;
    let net = init_network(spec, config.init, config.seed)?;
    if net.input_shape() != train.input_shape() {
        return Err(Error::config(format!(
            "network input {:?} does not match data {:?}",
            net.input_shape(),
            train.input_shape()
        )));
    }
    if net.class_count() != train.class_count() {
        return Err(Error::config(format!(
            "network emits {} classes, data has {}",
            net.class_count(),
            train.class_count()
        )));
    }
    let r = param_scale(&net)?.r;
    let m = config.scale_multiplier;
    let scales = match config.variant.kind {
        LossKind::TwoScale | LossKind::FixedTwoScale => ScaleState::new(r, m * r)?,
        LossKind::Separation => ScaleState::new(r, m)?,
        LossKind::SingleScale | LossKind::VanillaCe | LossKind::Truncated => ScaleState::new(r, r)?,
    };
    Ok(RunState {
        net,
        scales,
        iteration: 0,
        sampler: batch_sampler(train, config.batch_size, config.seed)?,
    })
}

/// What happened in one SGD step (values before the update).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step number.
    pub iteration: usize,
    pub batch_accuracy: f64,
    pub loss: f64,
    /// `R1` (or the frozen `R`) after the step.
    pub scale_low: f64,
    /// `R2` (or `R_s`) after the step.
    pub scale_high: f64,
    /// Objects on the high branch.
    pub high_branch: usize,
}

/// Applies one step of gradient descent on `batch`.
pub fn sgd_step(
    state: &mut RunState,
    variant: &LossVariant,
    learning_rate: f64,
    set: &Dataset,
    batch: &[usize],
) -> Result<StepRecord> {
    let iteration = state.iteration + 1;
    let diverged = |loss: f64, s: &ScaleState| Error::Diverged {
        iteration,
        loss,
        scale_low: s.low,
        scale_high: s.high,
    };
    let g = match loss_gradients(&state.net, &state.scales, variant, set, batch) {
        Err(Error::NonFinite(_)) => return Err(diverged(f64::NAN, &state.scales)),
        other => other?,
    };
    if !all_finite(&g) {
        return Err(diverged(g.loss, &state.scales));
    }

    state.net.update_params(|l, p| {
        p.iter_mut()
            .zip(&g.grad_params[l])
            .for_each(|(a, d)| *a -= learning_rate * d)
    });
    let s = &mut state.scales;
    match variant.kind {
        LossKind::TwoScale => {
            s.low -= learning_rate * g.grad_low;
            s.high -= learning_rate * g.grad_high;
        }
        LossKind::SingleScale => {
            s.low -= learning_rate * g.grad_low;
            s.high = s.low;
        }
        LossKind::Separation => s.high -= learning_rate * g.grad_high,
        LossKind::FixedTwoScale | LossKind::VanillaCe | LossKind::Truncated => {}
    }
    if s.validate().is_err() || state.net.params().iter().flatten().any(|v| !v.is_finite()) {
        return Err(diverged(g.loss, s));
    }
    state.iteration = iteration;
    Ok(StepRecord {
        iteration,
        batch_accuracy: g.correct_count as f64 / g.batch_size as f64,
        loss: g.loss,
        scale_low: s.low,
        scale_high: s.high,
        high_branch: g.high_count,
    })
}

fn all_finite(g: &BatchGradients) -> bool {
    g.loss.is_finite()
        && g.grad_low.is_finite()
        && g.grad_high.is_finite()
        && g.grad_params.iter().flatten().all(|v| v.is_finite())
}

/// Multiplier on raw logits used for evaluation-time probabilities: the low
/// scale divided by the current parameter scale, or 1 for losses without
/// scales.
pub fn eval_multiplier(net: &Network, scales: &ScaleState, kind: LossKind) -> Result<f64> {
    if kind.uses_scales() {
        Ok(scales.low / param_scale(net)?.r)
    } else {
        Ok(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iteration: usize,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricLog {
    pub steps: Vec<StepRecord>,
    pub evaluations: Vec<EvalPoint>,
    pub final_test: MetricReport,
    pub final_train: Option<MetricReport>,
    pub final_scales: ScaleState,
    pub final_param_scale: f64,
}

/// A run that stopped early, with everything logged before the failure.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: Error,
    pub steps: Vec<StepRecord>,
    pub evaluations: Vec<EvalPoint>,
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            steps: Vec::new(),
            evaluations: Vec::new(),
        }
    }
}

/// Progress notifications from [`run_experiment_with`].
#[derive(Debug, Clone, Copy)]
pub enum Event<'a> {
    Step(&'a StepRecord),
    Eval(&'a EvalPoint),
}

/// Fine-to-coarse map for super-class accuracy, if the data carries one.
/// Fine classes absent from both splits fall back to the published CIFAR-100
/// grouping when the label spaces match it.
pub fn superclass_map(train: &Dataset, test: &Dataset) -> Option<Vec<usize>> {
    let a = train.fine_to_coarse().ok()?;
    let b = test.fine_to_coarse().ok()?;
    let cifar100 = train.class_count() == 100 && train.coarse_class_count() == Some(20);
    a.iter()
        .zip(&b)
        .enumerate()
        .map(|(f, (x, y))| match (x, y) {
            (Some(x), Some(y)) if x != y => None,
            (Some(x), _) | (None, Some(x)) => Some(*x),
            (None, None) if cifar100 => Some(CIFAR100_COARSE_OF_FINE[f]),
            (None, None) => None,
        })
        .collect()
}

/// Full report on `set` with evaluation-time probabilities.
pub fn evaluate(
    net: &Network,
    scales: &ScaleState,
    kind: LossKind,
    set: &Dataset,
    grid: &EvalGrid,
    superclasses: Option<&[usize]>,
) -> Result<MetricReport> {
    let (probs, conf) = network_outputs(net, set, eval_multiplier(net, scales, kind)?)?;
    MetricReport::compute(&probs, set.labels(), &conf, superclasses, grid)
}

fn test_accuracy(net: &Network, scales: &ScaleState, kind: LossKind, set: &Dataset) -> Result<f64> {
    let (probs, _) = network_outputs(net, set, eval_multiplier(net, scales, kind)?)?;
    accuracy(&probs, set.labels())
}

pub fn run_experiment(
    spec: &NetworkSpec,
    config: &TrainingConfig,
    train: &Dataset,
    test: &Dataset,
) -> std::result::Result<MetricLog, RunFailure> {
    run_experiment_with(spec, config, train, test, |_| {})
}

pub fn run_experiment_with(
    spec: &NetworkSpec,
    config: &TrainingConfig,
    train: &Dataset,
    test: &Dataset,
    mut observe: impl FnMut(Event<'_>),
) -> std::result::Result<MetricLog, RunFailure> {
    if test.is_empty() {
        return Err(Error::input("empty test set").into());
    }
    if test.class_count() != train.class_count() || test.input_shape() != train.input_shape() {
        return Err(Error::config("train and test sets are not class-compatible").into());
    }
    let mut state = init_run(spec, config, train)?;
    let kind = config.variant.kind;
    let total = config.horizon.iterations(train.len(), config.batch_size);
    let mut steps = Vec::with_capacity(total);
    let mut evaluations = Vec::new();

    macro_rules! fail {
        ($e:expr) => {
            return Err(RunFailure {
                error: $e,
                steps,
                evaluations,
            })
        };
    }

    if config.eval_every > 0 {
        match test_accuracy(&state.net, &state.scales, kind, test) {
            Ok(a) => {
                let p = EvalPoint {
                    iteration: 0,
                    test_accuracy: a,
                };
                observe(Event::Eval(&p));
                evaluations.push(p);
            }
            Err(e) => fail!(e),
        }
    }
    for _ in 0..total {
        let batch = state.sampler.next_batch();
        let rec = match sgd_step(&mut state, &config.variant, config.learning_rate, train, &batch) {
            Ok(r) => r,
            Err(e) => fail!(e),
        };
        observe(Event::Step(&rec));
        steps.push(rec);
        if config.eval_every > 0 && state.iteration % config.eval_every == 0 {
            match test_accuracy(&state.net, &state.scales, kind, test) {
                Ok(a) => {
                    let p = EvalPoint {
                        iteration: state.iteration,
                        test_accuracy: a,
                    };
                    observe(Event::Eval(&p));
                    evaluations.push(p);
                }
                Err(e) => fail!(e),
            }
        }
    }

    let supers = superclass_map(train, test);
    let finals = evaluate(
        &state.net,
        &state.scales,
        kind,
        test,
        &config.eval_grid,
        supers.as_deref(),
    )
    .and_then(|t| {
        let tr = if config.eval_train {
            Some(evaluate(
                &state.net,
                &state.scales,
                kind,
                train,
                &config.eval_grid,
                supers.as_deref(),
            )?)
        } else {
            None
        };
        Ok((t, tr, param_scale(&state.net)?.r))
    });
    match finals {
        Ok((final_test, final_train, final_param_scale)) => Ok(MetricLog {
            steps,
            evaluations,
            final_test,
            final_train,
            final_scales: state.scales,
            final_param_scale,
        }),
        Err(e) => fail!(e),
    }
}
