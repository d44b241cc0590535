//! Regularized loss, block partition and the block-wise Adam trainer.

mod blocks;
mod loss;
mod train;

pub use blocks::{partition_blocks, Block, BlockPartition, PartitionConfig, Rect};
pub use loss::{
    charbonnier, loss_gradient, measurement_mae, total_loss, volume_loss, LossTerms, LossWeights,
    DEFAULT_CHARBONNIER_EPS,
};
pub use train::{
    blockwise_adam_train, measurement_separation, reconstruct_volume, write_log_csv, LogEntry, PartialMeasurements,
    TrainConfig, TrainState,
};

use serde::{Deserialize, Serialize};

/// Regularization ablations: all terms, axial continuity only, in-plane
/// noise reduction only, or none.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AblationVariant {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "AC")]
    Ac,
    #[serde(rename = "NR")]
    Nr,
    #[serde(rename = "Noreg")]
    Noreg,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [Self::Full, Self::Ac, Self::Nr, Self::Noreg];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Ac => "AC",
            Self::Nr => "NR",
            Self::Noreg => "Noreg",
        }
    }

    /// Loss weights of this variant derived from the full configuration.
    pub fn apply(&self, full: LossWeights) -> LossWeights {
        match self {
            Self::Full => full,
            Self::Ac => LossWeights { alpha: 0.0, ..full },
            Self::Nr => LossWeights { beta: 0.0, ..full },
            Self::Noreg => LossWeights {
                alpha: 0.0,
                beta: 0.0,
                ..full
            },
        }
    }
}

impl std::str::FromStr for AblationVariant {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| crate::error::Error::Config(format!("unknown ablation variant '{s}'")))
    }
}
