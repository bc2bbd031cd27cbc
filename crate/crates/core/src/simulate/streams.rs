use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{Channel, DetectionRecord};
use crate::error::{Error, Result};
use crate::model::EmitterModel;

/// Picoseconds per second.
pub const PS_PER_S: f64 = 1e12;

/// Default cap on the expected number of events in a single stream.
pub const DEFAULT_EVENT_CAP: u64 = 200_000_000;

/// Maximum `rate * tau_r` for the renewal-thinned emitter stream.
pub const MAX_OCCUPANCY: f64 = 0.1;

fn check_capacity(expected: f64, cap: u64) -> Result<()> {
    if expected > cap as f64 {
        return Err(Error::Capacity { expected, cap });
    }
    Ok(())
}

fn check_rate_span(rate: f64, span_ps: i64) -> Result<()> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::Domain(format!("rate {rate} counts/s must be >= 0")));
    }
    if span_ps <= 0 {
        return Err(Error::Domain(format!("span {span_ps} ps must be positive")));
    }
    Ok(())
}

/// Homogeneous Poisson arrivals at `rate` (counts/s) over `[0, span_ps)`.
pub fn sample_laser_stream(rate: f64, span_ps: i64, seed: u64) -> Result<Vec<i64>> {
    sample_laser_stream_capped(rate, span_ps, seed, DEFAULT_EVENT_CAP)
}

pub fn sample_laser_stream_capped(rate: f64, span_ps: i64, seed: u64, cap: u64) -> Result<Vec<i64>> {
    check_rate_span(rate, span_ps)?;
    let expected = rate * span_ps as f64 / PS_PER_S;
    check_capacity(expected, cap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(poisson_times(&mut rng, rate, span_ps, expected))
}

fn poisson_times(rng: &mut ChaCha8Rng, rate: f64, span_ps: i64, expected: f64) -> Vec<i64> {
    if rate == 0.0 {
        return Vec::new();
    }
    let gap = Exp::new(rate / PS_PER_S).expect("positive rate");
    let mut out = Vec::with_capacity((expected * 1.01 + 16.0) as usize);
    let span = span_ps as f64;
    let mut t = gap.sample(rng);
    while t < span {
        out.push(t as i64);
        t += gap.sample(rng);
    }
    out
}

/// Antibunched emitter stream at mean `rate` (counts/s) over `[0, span_ps)`.
///
/// Poisson candidates are thinned against the last accepted event: a
/// candidate a delay `d` after it survives with probability `g2_qd(d)`. The
/// candidate rate is raised so that the surviving rate matches `rate` to first
/// order in `rate * tau_r`.
pub fn sample_qd_stream(rate: f64, emitter: &EmitterModel, span_ps: i64, seed: u64) -> Result<Vec<i64>> {
    check_rate_span(rate, span_ps)?;
    emitter.validate()?;
    let occupancy = rate * emitter.tau_r / PS_PER_S;
    if occupancy >= MAX_OCCUPANCY {
        return Err(Error::Regime { occupancy });
    }
    if rate == 0.0 {
        return Ok(Vec::new());
    }
    let dead = (1.0 - emitter.g0) * emitter.tau_r / PS_PER_S;
    let candidate_rate = rate / (1.0 - rate * dead);
    let expected = candidate_rate * span_ps as f64 / PS_PER_S;
    check_capacity(expected, DEFAULT_EVENT_CAP)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap = Exp::new(candidate_rate / PS_PER_S).expect("positive rate");
    let span = span_ps as f64;
    let mut out = Vec::with_capacity((rate * span / PS_PER_S * 1.01 + 16.0) as usize);
    let mut last: Option<f64> = None;
    let mut t = gap.sample(&mut rng);
    while t < span {
        let keep = match last {
            None => true,
            Some(prev) => rng.random::<f64>() < emitter.g2(t - prev),
        };
        if keep {
            out.push(t as i64);
            last = Some(t);
        }
        t += gap.sample(&mut rng);
    }
    Ok(out)
}

/// Detector imperfections applied to a photon stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub jitter_sigma_ps: f64,
    /// Dark counts per second.
    pub dark_rate: f64,
    pub dead_time_ps: i64,
    pub efficiency: f64,
}

impl Default for DetectorSpec {
    /// Placeholder values; not measured quantities.
    fn default() -> Self {
        DetectorSpec {
            jitter_sigma_ps: 0.0,
            dark_rate: 100.0,
            dead_time_ps: 40_000,
            efficiency: 1.0,
        }
    }
}

impl DetectorSpec {
    pub fn ideal() -> Self {
        DetectorSpec {
            jitter_sigma_ps: 0.0,
            dark_rate: 0.0,
            dead_time_ps: 0,
            efficiency: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_sigma_ps >= 0.0 && self.jitter_sigma_ps.is_finite()) {
            return Err(Error::validation("jitter_sigma_ps", "must be >= 0"));
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return Err(Error::validation("dark_rate", "must be >= 0"));
        }
        if self.dead_time_ps < 0 {
            return Err(Error::validation("dead_time_ps", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::validation("efficiency", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Drops every record closer than `dead_time_ps` to the previous accepted one.
pub fn dead_time_filter(records: &[DetectionRecord], dead_time_ps: i64) -> Vec<DetectionRecord> {
    let mut out: Vec<DetectionRecord> = Vec::with_capacity(records.len());
    for r in records {
        match out.last() {
            Some(prev) if r.time_ps - prev.time_ps < dead_time_ps => {}
            _ => out.push(*r),
        }
    }
    out
}

/// Passes a sorted photon stream through a detector: Bernoulli efficiency,
/// Gaussian timing jitter, Poisson dark counts, then dead time. Records that
/// jitter outside `[0, span_ps)` are lost.
pub fn apply_detector(
    stream: &[i64],
    spec: &DetectorSpec,
    channel: Channel,
    span_ps: i64,
    seed: u64,
) -> Result<Vec<DetectionRecord>> {
    spec.validate()?;
    if let Some(i) = stream.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::UnsortedInput {
            channel: channel.to_string(),
            index: i + 1,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = (spec.jitter_sigma_ps > 0.0)
        .then(|| Normal::new(0.0, spec.jitter_sigma_ps).expect("finite sigma"));

    let mut times: Vec<i64> = Vec::with_capacity(stream.len());
    for &t in stream {
        if spec.efficiency < 1.0 && rng.random::<f64>() >= spec.efficiency {
            continue;
        }
        let t = match &jitter {
            Some(n) => t + n.sample(&mut rng).round() as i64,
            None => t,
        };
        if (0..span_ps).contains(&t) {
            times.push(t);
        }
    }
    if spec.dark_rate > 0.0 {
        check_rate_span(spec.dark_rate, span_ps)?;
        let expected = spec.dark_rate * span_ps as f64 / PS_PER_S;
        check_capacity(expected, DEFAULT_EVENT_CAP)?;
        rng.set_stream(1);
        times.extend(poisson_times(&mut rng, spec.dark_rate, span_ps, expected));
    }
    times.sort_unstable();
    let records: Vec<DetectionRecord> = times
        .into_iter()
        .map(|time_ps| DetectionRecord { time_ps, channel })
        .collect();
    Ok(dead_time_filter(&records, spec.dead_time_ps))
}
