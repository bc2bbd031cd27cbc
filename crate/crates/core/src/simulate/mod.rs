//! Monte Carlo photon streams, detector effects and coincidence histograms.
//!
//! All timestamps are integer picoseconds. Every generator takes an explicit
//! seed and is bit-reproducible for a given seed.

mod coincidences;
mod correlate;
mod histogram;
mod streams;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use coincidences::{coincidence_table, derive_seed, expected_pairs, sample_coincidences};
pub use correlate::{autocorrelate, correlate_streams};
pub use histogram::{histogram, CorrelationHistogram, HistogramGrid};
pub use streams::{
    apply_detector, dead_time_filter, sample_laser_stream, sample_laser_stream_capped,
    sample_qd_stream, DetectorSpec, DEFAULT_EVENT_CAP, MAX_OCCUPANCY, PS_PER_S,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    D1,
    D2,
}

impl Channel {
    pub fn code(self) -> u8 {
        match self {
            Channel::D1 => 1,
            Channel::D2 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Channel::D1),
            2 => Some(Channel::D2),
            _ => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::D1 => "D1",
            Channel::D2 => "D2",
        })
    }
}

impl std::str::FromStr for Channel {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "D1" | "d1" | "1" => Ok(Channel::D1),
            "D2" | "d2" | "2" => Ok(Channel::D2),
            other => Err(crate::Error::Parse(format!("unknown channel `{other}`"))),
        }
    }
}

/// A detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DetectionRecord {
    pub time_ps: i64,
    pub channel: Channel,
}

/// Records of one channel, in stream order.
pub fn channel_records(records: &[DetectionRecord], channel: Channel) -> Vec<DetectionRecord> {
    records.iter().filter(|r| r.channel == channel).copied().collect()
}
