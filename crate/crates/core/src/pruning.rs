//! Saliency scores for pruning at initialization and the masks built from
//! them.
//!
//! | method     | score                         | removes |
//! |------------|-------------------------------|---------|
//! | magnitude  | `|w|`                         | lowest  |
//! | snip       | `|g ⊙ w|`, g = ∇loss          | lowest  |
//! | graspabs   | `|w ⊙ Hg|`                    | highest |
//! | synflow    | `|r ⊙ w|`, r = ∂R/∂|w|        | lowest  |
//!
//! All scoring runs in double precision on a copy of the network.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Tape, Var};
use crate::data::{BatchPlan, Dataset};
use crate::error::{shape_err, Error, Result};
use crate::nn::{forward, Network, ParamVars};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Magnitude,
    Snip,
    Graspabs,
    Synflow,
    Random,
}

impl Method {
    pub const SCORED: [Method; 4] = [Method::Magnitude, Method::Snip, Method::Synflow, Method::Graspabs];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Magnitude => "magnitude",
            Method::Snip => "snip",
            Method::Graspabs => "graspabs",
            Method::Synflow => "synflow",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "magnitude" => Ok(Self::Magnitude),
            "snip" => Ok(Self::Snip),
            "graspabs" | "grasp" => Ok(Self::Graspabs),
            "synflow" => Ok(Self::Synflow),
            "random" => Ok(Self::Random),
            other => Err(Error::InvalidArgument(format!("unknown pruning method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    RemoveLowest,
    RemoveHighest,
}

/// Whether weights compete for removal across the whole network or only
/// within their own layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranking {
    #[default]
    Global,
    PerLayer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneConfig {
    pub method: Method,
    /// Fraction of prunable weights removed, network-wide.
    pub sparsity: f64,
    pub score_batch_size: usize,
    pub score_batch_count: usize,
    pub synflow_rounds: usize,
    /// Seed for score batches (SNIP/GraSP) or for the random mask.
    pub seed: u64,
    pub ranking: Ranking,
    pub graspabs_direction: Direction,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            method: Method::Magnitude,
            sparsity: 0.0,
            score_batch_size: 128,
            score_batch_count: 1,
            synflow_rounds: 100,
            seed: 0,
            ranking: Ranking::Global,
            graspabs_direction: Direction::RemoveHighest,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        check_sparsity(self.sparsity)?;
        if self.synflow_rounds == 0 {
            return Err(Error::InvalidArgument("synflow rounds must be at least 1".into()));
        }
        if self.score_batch_size == 0 || self.score_batch_count == 0 {
            return Err(Error::InvalidArgument("score batch size and count must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_sparsity(s: f64) -> Result<()> {
    if (0.0..1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::InvalidSparsity(s))
    }
}

/// Per-prunable-layer saliency scores, shape-identical to the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    /// Architecture layer index of each entry.
    pub layers: Vec<usize>,
    pub scores: Vec<Tensor<f64>>,
}

impl ScoreMap {
    pub fn new(layers: Vec<usize>, scores: Vec<Tensor<f64>>) -> Result<Self> {
        if layers.len() != scores.len() {
            return Err(shape_err("score_map", "layer ids and score tensors differ in count"));
        }
        if scores.iter().any(|s| !s.all_finite()) {
            return Err(Error::InvalidArgument("scores must be finite".into()));
        }
        Ok(Self { layers, scores })
    }

    pub fn total(&self) -> usize {
        self.scores.iter().map(Tensor::len).sum()
    }
}

/// Kept (1) / pruned (0) flags for one prunable layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskLayer {
    pub layer: usize,
    pub shape: Vec<usize>,
    pub bits: Vec<u8>,
}

impl MaskLayer {
    pub fn kept(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn density(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.kept() as f64 / self.bits.len() as f64
    }
}

/// A pruning mask over every prunable layer of a network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub layers: Vec<MaskLayer>,
}

impl Mask {
    pub fn new(layers: Vec<MaskLayer>) -> Result<Self> {
        for l in &layers {
            if l.shape.iter().product::<usize>() != l.bits.len() {
                return Err(shape_err("mask", format!("layer {} shape {:?} vs {} bits", l.layer, l.shape, l.bits.len())));
            }
            if l.bits.iter().any(|&b| b > 1) {
                return Err(Error::InvalidArgument(format!("mask layer {} has entries other than 0/1", l.layer)));
            }
        }
        Ok(Self { layers })
    }

    pub fn ones(net: &Network) -> Self {
        Self::filled(net, 1)
    }

    pub fn zeros(net: &Network) -> Self {
        Self::filled(net, 0)
    }

    fn filled(net: &Network, bit: u8) -> Self {
        Self {
            layers: net
                .prunable_layers()
                .into_iter()
                .map(|i| {
                    let w = &net.params[i].weight;
                    MaskLayer {
                        layer: i,
                        shape: w.shape().to_vec(),
                        bits: vec![bit; w.len()],
                    }
                })
                .collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.layers.iter().map(MaskLayer::len).sum()
    }

    pub fn kept(&self) -> usize {
        self.layers.iter().map(MaskLayer::kept).sum()
    }

    pub fn pruned(&self) -> usize {
        self.total() - self.kept()
    }

    /// kept / total over all prunable weights.
    pub fn density(&self) -> f64 {
        self.kept() as f64 / self.total().max(1) as f64
    }

    pub fn kept_per_layer(&self) -> Vec<usize> {
        self.layers.iter().map(MaskLayer::kept).collect()
    }

    /// Errors unless this mask covers exactly the prunable weights of `net`.
    pub fn check_against(&self, net: &Network) -> Result<()> {
        let prunable = net.prunable_layers();
        if prunable.len() != self.layers.len() {
            return Err(shape_err(
                "mask",
                format!("{} mask layers for {} prunable layers", self.layers.len(), prunable.len()),
            ));
        }
        for (ml, &li) in self.layers.iter().zip(&prunable) {
            let w = &net.params[li].weight;
            if ml.layer != li || ml.shape != w.shape() {
                return Err(shape_err(
                    "mask",
                    format!("mask layer {} {:?} vs weight layer {li} {:?}", ml.layer, ml.shape, w.shape()),
                ));
            }
        }
        Ok(())
    }
}

/// Zeroes pruned weights. Biases are never touched.
pub fn apply_mask(net: &Network, mask: &Mask) -> Result<Network> {
    mask.check_against(net)?;
    let mut out = net.clone();
    for ml in &mask.layers {
        for (w, &b) in out.params[ml.layer].weight.data_mut().iter_mut().zip(&ml.bits) {
            if b == 0 {
                *w = 0.0;
            }
        }
    }
    Ok(out)
}

fn prunable_weights_f64(net: &Network) -> Vec<Tensor<f64>> {
    net.prunable_weights().into_iter().map(|w| w.cast()).collect()
}

/// `z = |w|`.
pub fn score_magnitude(net: &Network) -> ScoreMap {
    let scores = prunable_weights_f64(net).iter().map(|w| w.map(f64::abs)).collect();
    ScoreMap {
        layers: net.prunable_layers(),
        scores,
    }
}

fn abs_product(a: &[Tensor<f64>], b: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.zip_map(y, "score", |p, q| (p * q).abs()))
        .collect()
}

/// Gradient of `loss` averaged over `batches` evaluations.
fn mean_gradient<F>(weights: &[Tensor<f64>], batches: usize, loss: &F) -> Result<Vec<Tensor<f64>>>
where
    F: Fn(&mut Tape<f64>, &[Var], usize) -> Result<Var>,
{
    let mut acc: Vec<Tensor<f64>> = weights.iter().map(|w| Tensor::zeros(w.shape())).collect();
    for b in 0..batches {
        let (_, g) = autodiff::gradient(weights, |tape, vars| loss(tape, vars, b))?;
        for (a, gi) in acc.iter_mut().zip(&g) {
            *a = a.zip_map(gi, "gradient", |x, y| x + y)?;
        }
    }
    let inv = 1.0 / batches as f64;
    Ok(acc.into_iter().map(|a| a.map(|v| v * inv)).collect())
}

/// SNIP scores `|g ⊙ w|` for an arbitrary loss; `g` is averaged over
/// `batches` calls of `loss(tape, weight_vars, batch_index)`.
pub fn snip_scores<F>(weights: &[Tensor<f64>], batches: usize, loss: F) -> Result<Vec<Tensor<f64>>>
where
    F: Fn(&mut Tape<f64>, &[Var], usize) -> Result<Var>,
{
    let g = mean_gradient(weights, batches, &loss)?;
    abs_product(&g, weights)
}

/// GraspAbs scores `|w ⊙ Hg|`: `g` is the batch-averaged gradient and `Hg`
/// the batch-averaged Hessian-gradient product, on the same batches.
pub fn graspabs_scores<F>(weights: &[Tensor<f64>], batches: usize, loss: F) -> Result<Vec<Tensor<f64>>>
where
    F: Fn(&mut Tape<f64>, &[Var], usize) -> Result<Var>,
{
    let h = hessian_gradient_product(weights, batches, &loss)?;
    abs_product(weights, &h)
}

/// `H·g` averaged over batches, with `g` the batch-averaged gradient.
pub fn hessian_gradient_product<F>(weights: &[Tensor<f64>], batches: usize, loss: &F) -> Result<Vec<Tensor<f64>>>
where
    F: Fn(&mut Tape<f64>, &[Var], usize) -> Result<Var>,
{
    let g = mean_gradient(weights, batches, loss)?;
    let mut acc: Vec<Tensor<f64>> = weights.iter().map(|w| Tensor::zeros(w.shape())).collect();
    for b in 0..batches {
        let hv = autodiff::hessian_vector_product(weights, &g, |tape, vars| loss(tape, vars, b))?;
        for (a, h) in acc.iter_mut().zip(&hv) {
            *a = a.zip_map(h, "hvp", |x, y| x + y)?;
        }
    }
    let inv = 1.0 / batches as f64;
    Ok(acc.into_iter().map(|a| a.map(|v| v * inv)).collect())
}

/// Parameter handles where prunable weights are `weight_vars` and every other
/// tensor (biases, non-prunable weights) is a constant.
fn network_params(net: &Network, tape: &mut Tape<f64>, weight_vars: &[Var]) -> Vec<ParamVars> {
    let mut next = weight_vars.iter();
    net.params
        .iter()
        .zip(&net.arch.layers)
        .map(|(p, spec)| ParamVars {
            weight: if spec.prunable {
                *next.next().expect("one var per prunable layer")
            } else {
                tape.constant(p.weight.cast())
            },
            bias: p.bias.as_ref().map(|b| tape.constant(b.cast())),
        })
        .collect()
}

fn score_batches(dataset: &Dataset, config: &PruneConfig) -> Result<Vec<(Tensor<f64>, Vec<usize>)>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let plan = BatchPlan {
        batch_size: config.score_batch_size,
        seed: config.seed,
        epoch: 0,
    };
    Ok(plan
        .index_batches(dataset.len())
        .into_iter()
        .take(config.score_batch_count)
        .map(|idx| dataset.gather::<f64>(&idx))
        .collect())
}

fn cross_entropy_loss<'a>(
    net: &'a Network,
    batches: &'a [(Tensor<f64>, Vec<usize>)],
) -> impl Fn(&mut Tape<f64>, &[Var], usize) -> Result<Var> + 'a {
    move |tape, vars, b| {
        let params = network_params(net, tape, vars);
        let (x, labels) = &batches[b];
        let x = tape.constant(x.clone());
        let logits = forward(&net.arch, tape, &params, x, true)?;
        tape.softmax_cross_entropy(logits, labels)
    }
}

/// SNIP on sampled training batches.
pub fn score_snip(net: &Network, dataset: &Dataset, config: &PruneConfig) -> Result<ScoreMap> {
    let batches = score_batches(dataset, config)?;
    let weights = prunable_weights_f64(net);
    let scores = snip_scores(&weights, batches.len(), cross_entropy_loss(net, &batches))?;
    ScoreMap::new(net.prunable_layers(), scores)
}

/// GraspAbs on sampled training batches.
pub fn score_graspabs(net: &Network, dataset: &Dataset, config: &PruneConfig) -> Result<ScoreMap> {
    let batches = score_batches(dataset, config)?;
    let weights = prunable_weights_f64(net);
    let scores = graspabs_scores(&weights, batches.len(), cross_entropy_loss(net, &batches))?;
    ScoreMap::new(net.prunable_layers(), scores)
}

/// SynFlow scores of `net` with `mask` applied (all weights kept if `None`).
///
/// Works on a copy whose weights are `|w|` and whose biases are dropped:
/// an all-ones input is propagated, `R` is the sum of the logits, and
/// `z = |∂R/∂|w| ⊙ w|`.
pub fn synflow_scores(net: &Network, mask: Option<&Mask>) -> Result<ScoreMap> {
    let masked = match mask {
        Some(m) => apply_mask(net, m)?,
        None => net.clone(),
    };
    let abs_weights: Vec<Tensor<f64>> = masked.params.iter().map(|p| p.weight.cast::<f64>().map(f64::abs)).collect();
    let prunable = net.prunable_layers();
    let leaves: Vec<Tensor<f64>> = prunable.iter().map(|&i| abs_weights[i].clone()).collect();
    let input = Tensor::<f64>::ones(&net.input_shape(1));
    let (_, r) = autodiff::gradient(&leaves, |tape, vars| {
        let mut next = vars.iter();
        let params: Vec<ParamVars> = net
            .arch
            .layers
            .iter()
            .zip(&abs_weights)
            .map(|(spec, w)| ParamVars {
                weight: if spec.prunable {
                    *next.next().expect("var per prunable layer")
                } else {
                    tape.constant(w.clone())
                },
                bias: None,
            })
            .collect();
        let x = tape.constant(input.clone());
        let logits = forward(&net.arch, tape, &params, x, false)?;
        tape.sum(logits)
    })?;
    let weights = prunable.iter().map(|&i| masked.params[i].weight.cast::<f64>()).collect::<Vec<_>>();
    ScoreMap::new(prunable, abs_product(&r, &weights)?)
}

/// Single-pass SynFlow scores on the unmasked network.
pub fn score_synflow(net: &Network) -> Result<ScoreMap> {
    synflow_scores(net, None)
}

/// Builds a mask removing exactly `⌊sparsity·N⌋` weights, ranked globally.
/// Ties go to the lower `(layer, flat index)` first.
pub fn build_mask(scores: &ScoreMap, sparsity: f64, direction: Direction) -> Result<Mask> {
    build_mask_with(scores, sparsity, direction, Ranking::Global, None)
}

/// [`build_mask`] with a ranking mode and an optional prior mask. Weights the
/// prior already prunes stay pruned and count toward the removal budget.
pub fn build_mask_with(
    scores: &ScoreMap,
    sparsity: f64,
    direction: Direction,
    ranking: Ranking,
    prior: Option<&Mask>,
) -> Result<Mask> {
    check_sparsity(sparsity)?;
    if let Some(p) = prior {
        if p.layers.len() != scores.scores.len()
            || p.layers.iter().zip(&scores.scores).any(|(m, s)| m.bits.len() != s.len())
        {
            return Err(shape_err("build_mask", "prior mask does not match score map"));
        }
    }
    let mut layers: Vec<MaskLayer> = scores
        .layers
        .iter()
        .zip(&scores.scores)
        .enumerate()
        .map(|(li, (&layer, s))| MaskLayer {
            layer,
            shape: s.shape().to_vec(),
            bits: match prior {
                Some(p) => p.layers[li].bits.clone(),
                None => vec![1; s.len()],
            },
        })
        .collect();

    let groups: Vec<Vec<usize>> = match ranking {
        Ranking::Global => vec![(0..layers.len()).collect()],
        Ranking::PerLayer => (0..layers.len()).map(|l| vec![l]).collect(),
    };
    for group in groups {
        let total: usize = group.iter().map(|&l| layers[l].len()).sum();
        let target = (sparsity * total as f64).floor() as usize;
        let already: usize = group.iter().map(|&l| layers[l].len() - layers[l].kept()).sum();
        let mut candidates: Vec<(f64, usize, usize)> = group
            .iter()
            .flat_map(|&l| {
                let bits = &layers[l].bits;
                scores.scores[l]
                    .data()
                    .iter()
                    .enumerate()
                    .filter(move |(i, _)| bits[*i] == 1)
                    .map(move |(i, &z)| (z, l, i))
            })
            .collect();
        candidates.sort_unstable_by(|a, b| {
            let by_score = match direction {
                Direction::RemoveLowest => a.0.total_cmp(&b.0),
                Direction::RemoveHighest => b.0.total_cmp(&a.0),
            };
            by_score.then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        });
        for &(_, l, i) in candidates.iter().take(target.saturating_sub(already)) {
            layers[l].bits[i] = 0;
        }
    }
    Ok(Mask { layers })
}

/// Densities `(1 − sparsity)^(k/rounds)` for `k = 1..=rounds`.
pub fn synflow_density_schedule(sparsity: f64, rounds: usize) -> Vec<f64> {
    (1..=rounds)
        .map(|k| (1.0 - sparsity).powf(k as f64 / rounds as f64))
        .collect()
}

/// Iterative SynFlow: rescore the currently masked network and re-mask at
/// each density of [`synflow_density_schedule`]. The last round prunes at
/// exactly `sparsity`.
pub fn prune_synflow_iterative(net: &Network, sparsity: f64, rounds: usize) -> Result<Mask> {
    synflow_iterative_with(net, sparsity, rounds, Ranking::Global)
}

fn synflow_iterative_with(net: &Network, sparsity: f64, rounds: usize, ranking: Ranking) -> Result<Mask> {
    let mut trace = synflow_trace(net, sparsity, rounds, ranking)?;
    Ok(trace.pop().expect("at least one round"))
}

/// The mask after every round of iterative SynFlow, last one final.
pub fn synflow_trace(net: &Network, sparsity: f64, rounds: usize, ranking: Ranking) -> Result<Vec<Mask>> {
    check_sparsity(sparsity)?;
    if rounds == 0 {
        return Err(Error::InvalidArgument("synflow rounds must be at least 1".into()));
    }
    let schedule = synflow_density_schedule(sparsity, rounds);
    let mut mask = Mask::ones(net);
    let mut trace = Vec::with_capacity(rounds);
    for (k, density) in schedule.into_iter().enumerate() {
        let round_sparsity = if k + 1 == rounds { sparsity } else { (1.0 - density).clamp(0.0, sparsity) };
        let scores = synflow_scores(net, Some(&mask))?;
        mask = build_mask_with(&scores, round_sparsity, Direction::RemoveLowest, ranking, Some(&mask))?;
        trace.push(mask.clone());
    }
    Ok(trace)
}

/// Removes each prunable weight independently with probability `sparsity`.
pub fn random_mask(net: &Network, sparsity: f64, seed: u64) -> Result<Mask> {
    check_sparsity(sparsity)?;
    let mut mask = Mask::ones(net);
    for (li, ml) in mask.layers.iter_mut().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, stream::RANDOM_MASK + li as u64));
        for b in &mut ml.bits {
            let u: f64 = rng.random();
            *b = u8::from(u >= sparsity);
        }
    }
    Ok(mask)
}

/// Scores and masks `net` according to `config`.
pub fn prune(net: &Network, dataset: Option<&Dataset>, config: &PruneConfig) -> Result<Mask> {
    config.validate()?;
    let need_data = || dataset.ok_or(Error::EmptyDataset);
    let (scores, direction) = match config.method {
        Method::Random => return random_mask(net, config.sparsity, config.seed),
        Method::Synflow => return synflow_iterative_with(net, config.sparsity, config.synflow_rounds, config.ranking),
        Method::Magnitude => (score_magnitude(net), Direction::RemoveLowest),
        Method::Snip => (score_snip(net, need_data()?, config)?, Direction::RemoveLowest),
        Method::Graspabs => (score_graspabs(net, need_data()?, config)?, config.graspabs_direction),
    };
    build_mask_with(&scores, config.sparsity, direction, config.ranking, None)
}
