//! Randomization treatments applied to a pruned `(network, mask)` pair.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::pruning::{apply_mask, random_mask, Mask};
use crate::rng::{derive_seed, rng_from_seed, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Treatment {
    #[serde(rename = "unmodified")]
    Unmodified,
    #[serde(rename = "layerwise-shuffle")]
    LayerwiseShuffle,
    #[serde(rename = "reinit")]
    Reinit,
    #[serde(rename = "random-pruning")]
    RandomPruning,
}

impl Treatment {
    pub const ALL: [Treatment; 4] = [
        Treatment::Unmodified,
        Treatment::LayerwiseShuffle,
        Treatment::Reinit,
        Treatment::RandomPruning,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Treatment::Unmodified => "unmodified",
            Treatment::LayerwiseShuffle => "layerwise-shuffle",
            Treatment::Reinit => "reinit",
            Treatment::RandomPruning => "random-pruning",
        }
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Treatment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unmodified" => Ok(Self::Unmodified),
            "layerwise-shuffle" | "shuffle" => Ok(Self::LayerwiseShuffle),
            "reinit" => Ok(Self::Reinit),
            "random-pruning" | "random" => Ok(Self::RandomPruning),
            other => Err(Error::InvalidArgument(format!("unknown treatment {other:?}"))),
        }
    }
}

/// What a treatment needs beyond the pair it transforms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreatmentConfig {
    pub seed: u64,
    /// Network-wide sparsity of the mask being treated; used by random pruning.
    pub sparsity: f64,
}

/// Permutes each layer's mask with its own seeded Fisher–Yates pass.
pub fn layerwise_shuffle(mask: &Mask, seed: u64) -> Mask {
    let mut out = mask.clone();
    for (li, layer) in out.layers.iter_mut().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, stream::SHUFFLE_LAYER + li as u64));
        layer.bits.shuffle(&mut rng);
    }
    out
}

/// Fresh weights from the original init scheme under `seed`, with `mask`
/// applied. The mask comes back unchanged.
pub fn reinit(net: &Network, mask: &Mask, seed: u64) -> Result<(Network, Mask)> {
    if seed == net.init.seed {
        log::warn!("reinit seed {seed} equals the original init seed; weights will be identical");
    }
    let fresh = Network::initialize(&net.arch, net.init.scheme, seed)?;
    Ok((apply_mask(&fresh, mask)?, mask.clone()))
}

/// Dispatches on `kind`. Layerwise shuffle and random pruning keep the
/// network's stored weights as they are; callers read kept values through the
/// returned mask.
pub fn apply_treatment(kind: Treatment, net: &Network, mask: &Mask, config: &TreatmentConfig) -> Result<(Network, Mask)> {
    mask.check_against(net)?;
    match kind {
        Treatment::Unmodified => Ok((net.clone(), mask.clone())),
        Treatment::LayerwiseShuffle => Ok((net.clone(), layerwise_shuffle(mask, config.seed))),
        Treatment::Reinit => reinit(net, mask, config.seed),
        Treatment::RandomPruning => Ok((net.clone(), random_mask(net, config.sparsity, config.seed)?)),
    }
}
