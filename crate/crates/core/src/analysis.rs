//! Per-layer weight samples and 1-D Wasserstein distances between them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::pruning::{Mask, Method};
use crate::treatments::Treatment;

/// Which values of a layer make up its sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    /// The whole layer after masking: kept values plus one zero per pruned
    /// position.
    #[default]
    MaskedLayer,
    /// Kept values only.
    KeptOnly,
}

impl SampleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleMode::MaskedLayer => "masked-layer",
            SampleMode::KeptOnly => "kept-only",
        }
    }
}

impl fmt::Display for SampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "masked-layer" => Ok(Self::MaskedLayer),
            "kept-only" => Ok(Self::KeptOnly),
            other => Err(Error::InvalidArgument(format!("unknown sample mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanKind {
    #[default]
    Unweighted,
    /// Weighted by each layer's parameter count.
    ParamWeighted,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportOptions {
    pub sample_mode: SampleMode,
    pub mean: MeanKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSample {
    pub layer: usize,
    pub values: Vec<f64>,
}

fn mask_layer<'a>(net: &Network, mask: &'a Mask, layer: usize) -> Result<&'a crate::pruning::MaskLayer> {
    mask.check_against(net)?;
    mask.layers
        .iter()
        .find(|m| m.layer == layer)
        .ok_or_else(|| Error::InvalidArgument(format!("layer {layer} is not prunable")))
}

/// Values of `layer` where the mask is 1.
pub fn kept_weights(net: &Network, mask: &Mask, layer: usize) -> Result<WeightSample> {
    let ml = mask_layer(net, mask, layer)?;
    let values: Vec<f64> = net.params[layer]
        .weight
        .data()
        .iter()
        .zip(&ml.bits)
        .filter(|(_, &b)| b == 1)
        .map(|(&w, _)| f64::from(w))
        .collect();
    if values.is_empty() {
        return Err(Error::EmptySample { layer: Some(layer) });
    }
    Ok(WeightSample { layer, values })
}

/// Every value of `layer` multiplied by its mask entry.
pub fn masked_layer_weights(net: &Network, mask: &Mask, layer: usize) -> Result<WeightSample> {
    let ml = mask_layer(net, mask, layer)?;
    let values = net.params[layer]
        .weight
        .data()
        .iter()
        .zip(&ml.bits)
        .map(|(&w, &b)| if b == 1 { f64::from(w) } else { 0.0 })
        .collect();
    Ok(WeightSample { layer, values })
}

pub fn layer_sample(net: &Network, mask: &Mask, layer: usize, mode: SampleMode) -> Result<WeightSample> {
    match mode {
        SampleMode::MaskedLayer => masked_layer_weights(net, mask, layer),
        SampleMode::KeptOnly => kept_weights(net, mask, layer),
    }
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("samples must be finite".into()));
    }
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Ok(v)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// 1-Wasserstein distance between the uniform empirical distributions of
/// `u` and `v`.
///
/// Evaluated as `∫₀¹ |F_u⁻¹(t) − F_v⁻¹(t)| dt`: both quantile functions are
/// step functions with breakpoints at multiples of `1/n` and `1/m`, so the
/// integral is an exact sum over the merged breakpoints, taken in integer
/// units of `1/lcm(n, m)`.
pub fn wasserstein_1d(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::EmptySample { layer: None });
    }
    let (u, v) = (sorted(u)?, sorted(v)?);
    let (n, m) = (u.len() as u64, v.len() as u64);
    let l = n / gcd(n, m) * m;
    let (step_u, step_v) = (l / n, l / m);
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos = 0u64;
    let mut acc = 0.0f64;
    while pos < l {
        let next_u = (i as u64 + 1) * step_u;
        let next_v = (j as u64 + 1) * step_v;
        let next = next_u.min(next_v);
        acc += (u[i] - v[j]).abs() * (next - pos) as f64;
        pos = next;
        if next_u == next {
            i += 1;
        }
        if next_v == next {
            j += 1;
        }
    }
    Ok(acc / l as f64)
}

/// Identifies one treated run.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunKey {
    pub network: String,
    pub method: Method,
    pub treatment: Treatment,
    /// Sparsity in parts per million, so the key is totally ordered.
    pub sparsity_ppm: u32,
    pub init_seed: u64,
    pub treat_seed: u64,
    pub score_seed: u64,
}

impl RunKey {
    pub fn sparsity(&self) -> f64 {
        f64::from(self.sparsity_ppm) / 1e6
    }

    pub fn sparsity_to_ppm(s: f64) -> u32 {
        (s * 1e6).round() as u32
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerWd {
    pub layer: usize,
    /// `None` when either side's sample is empty.
    pub wd: Option<f64>,
    pub control_kept: usize,
    pub treated_kept: usize,
    pub param_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WdReport {
    pub layers: Vec<LayerWd>,
    /// Mean over layers with a distance; `None` if there are none.
    pub mean: Option<f64>,
    pub options: ReportOptions,
}

impl WdReport {
    /// Layers excluded from the mean because a sample was empty.
    pub fn flagged_layers(&self) -> Vec<usize> {
        self.layers.iter().filter(|l| l.wd.is_none()).map(|l| l.layer).collect()
    }
}

/// Per-layer distances between the control and treated pairs.
pub fn layerwise_report(control: (&Network, &Mask), treated: (&Network, &Mask), options: ReportOptions) -> Result<WdReport> {
    let (cn, cm) = control;
    let (tn, tm) = treated;
    if !cn.same_architecture(tn) {
        return Err(Error::ArchitectureMismatch(format!("{} vs {}", cn.arch.name, tn.arch.name)));
    }
    cm.check_against(cn)?;
    tm.check_against(tn)?;
    let mut layers = Vec::with_capacity(cm.layers.len());
    for (c, t) in cm.layers.iter().zip(&tm.layers) {
        let sample = |net, mask| match layer_sample(net, mask, c.layer, options.sample_mode) {
            Ok(s) => Ok(Some(s)),
            Err(Error::EmptySample { .. }) => Ok(None),
            Err(e) => Err(e),
        };
        let wd = match (sample(cn, cm)?, sample(tn, tm)?) {
            (Some(a), Some(b)) => Some(wasserstein_1d(&a.values, &b.values)?),
            _ => None,
        };
        layers.push(LayerWd {
            layer: c.layer,
            wd,
            control_kept: c.kept(),
            treated_kept: t.kept(),
            param_count: c.len(),
        });
    }
    let mean = layer_mean(&layers, options.mean);
    Ok(WdReport { layers, mean, options })
}

fn layer_mean(layers: &[LayerWd], kind: MeanKind) -> Option<f64> {
    let present: Vec<(f64, f64)> = layers
        .iter()
        .filter_map(|l| {
            l.wd.map(|wd| {
                let weight = match kind {
                    MeanKind::Unweighted => 1.0,
                    MeanKind::ParamWeighted => l.param_count as f64,
                };
                (wd, weight)
            })
        })
        .collect();
    if present.is_empty() {
        return None;
    }
    let total: f64 = present.iter().map(|p| p.1).sum();
    Some(present.iter().map(|(wd, w)| wd * w).sum::<f64>() / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(wasserstein_1d(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 2.0);
        assert_eq!(wasserstein_1d(&[0.0, 0.0, 1.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(wasserstein_1d(&[3.0, 1.0, 2.0], &[2.0, 3.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn unequal_sizes() {
        // F_u steps at 0 (to 1/2) and 1; v = {0.5}: area = 0.5·0.5 + 0.5·0.5.
        assert!((wasserstein_1d(&[0.0, 1.0], &[0.5]).unwrap() - 0.5).abs() < 1e-15);
        // u = {0,1,2}, v = {0,2}: quantile gap is 1 on (1/3, 1/2) and on (1/2, 2/3).
        assert!((wasserstein_1d(&[0.0, 1.0, 2.0], &[0.0, 2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_and_nonfinite_rejected() {
        assert!(matches!(wasserstein_1d(&[], &[1.0]), Err(Error::EmptySample { .. })));
        assert!(wasserstein_1d(&[f64::NAN], &[1.0]).is_err());
    }
}
