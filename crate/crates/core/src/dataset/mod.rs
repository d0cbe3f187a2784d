//! Dataset ingestion, split protocol and geometric preprocessing.

mod geometry;
mod layout;
mod manifest;
mod mask;
mod splits;

pub use geometry::{
    crop_roi, map_mask_to_original, mask_channels_for, mask_to_tensor, resize_for, target_size_for,
    PaddingPolicy, RoiTransform,
};
pub use layout::{LayoutConfig, LayoutRule};
pub use manifest::{load_dataset, read_manifest, write_manifest, ImageSample, Manifest};
pub use mask::BinaryMask;
pub use splits::{make_splits, read_split_file, write_split_file, SplitAssignment, SPLIT_RATIOS};

use serde::{Deserialize, Serialize};

/// Sensor/database provenance of a sample. The three MICHE tags form one
/// database for database-level operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorTag {
    UbirisV2,
    MicheGs4,
    MicheIp5,
    MicheGt2,
}

impl SensorTag {
    pub const ALL: [SensorTag; 4] = [
        SensorTag::UbirisV2,
        SensorTag::MicheGs4,
        SensorTag::MicheIp5,
        SensorTag::MicheGt2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SensorTag::UbirisV2 => "ubiris_v2",
            SensorTag::MicheGs4 => "miche_gs4",
            SensorTag::MicheIp5 => "miche_ip5",
            SensorTag::MicheGt2 => "miche_gt2",
        }
    }

    /// Database family: the MICHE device tags collapse into one database.
    pub fn database(&self) -> &'static str {
        match self {
            SensorTag::UbirisV2 => "UBIRIS.v2",
            _ => "MICHE",
        }
    }
}

impl std::fmt::Display for SensorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SensorTag {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ubiris_v2" => Ok(SensorTag::UbirisV2),
            "miche_gs4" => Ok(SensorTag::MicheGs4),
            "miche_ip5" => Ok(SensorTag::MicheIp5),
            "miche_gt2" => Ok(SensorTag::MicheGt2),
            other => Err(crate::Error::Other(format!("unknown sensor tag `{other}`"))),
        }
    }
}
