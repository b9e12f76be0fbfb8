use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyCluster {
    Low,
    MediumLow,
    MediumHigh,
    High,
}

impl FrequencyCluster {
    pub const ALL: [FrequencyCluster; 4] = [
        FrequencyCluster::Low,
        FrequencyCluster::MediumLow,
        FrequencyCluster::MediumHigh,
        FrequencyCluster::High,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FrequencyCluster::Low => "low",
            FrequencyCluster::MediumLow => "medium_low",
            FrequencyCluster::MediumHigh => "medium_high",
            FrequencyCluster::High => "high",
        }
    }
}

impl fmt::Display for FrequencyCluster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Buckets a positive-instance count: `[0,100)` low, `[100,400]` medium-low,
/// `(400,1000]` medium-high, above 1000 high.
pub fn frequency_cluster(count: u64) -> FrequencyCluster {
    match count {
        0..=99 => FrequencyCluster::Low,
        100..=400 => FrequencyCluster::MediumLow,
        401..=1000 => FrequencyCluster::MediumHigh,
        _ => FrequencyCluster::High,
    }
}
