use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PS_PER_S;
use crate::error::{Error, Result};
use crate::model::{g2_convolved_grid, TpiParams};

/// Acceptance envelope margin over the tabulated maximum.
const ENVELOPE_MARGIN: f64 = 1.01;

/// Minimum window half-width in units of the longest correlation time.
const MIN_WINDOW_SCALES: f64 = 10.0;

/// Expected number of pairs for a pair rate (pairs/s) over `span_ps`, rounded.
pub fn expected_pairs(pair_rate: f64, span_ps: i64) -> u64 {
    (pair_rate * span_ps as f64 / PS_PER_S).round().max(0.0) as u64
}

/// Seed for sub-stream `index` of `stream` derived from a base seed
/// (SplitMix64 finaliser), so that work split into chunks reproduces
/// regardless of how the chunks are scheduled.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Jitter-convolved correlation tabulated at every integer delay in
/// `[-tau_window, tau_window)`.
pub fn coincidence_table(p: &TpiParams, tau_window: i64) -> Result<Vec<f64>> {
    let n = 2 * tau_window as usize;
    g2_convolved_grid(p, -tau_window as f64, 1.0, n)
}

/// Draws `n_pairs` integer delays from the jitter-convolved correlation on
/// `[-tau_window, tau_window)` by acceptance–rejection.
///
/// Two-photon coalescence has no classical event-stream analogue, so pairs
/// are drawn directly from the model distribution rather than from
/// simulated photon streams.
pub fn sample_coincidences(p: &TpiParams, n_pairs: u64, tau_window: i64, seed: u64) -> Result<Vec<i64>> {
    p.validate()?;
    let min_window = MIN_WINDOW_SCALES * p.correlation_scale();
    if (tau_window as f64) < min_window {
        return Err(Error::InvalidParams(format!(
            "window {tau_window} ps shorter than {min_window} ps (10 x longest correlation time)"
        )));
    }
    let table = coincidence_table(p, tau_window)?;
    let peak = table.iter().fold(0.0f64, |m, &v| m.max(v));
    if !(peak > 0.0) {
        return Err(Error::InvalidParams("correlation vanishes on the window".into()));
    }
    let envelope = ENVELOPE_MARGIN * peak;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = table.len();
    let mut out = Vec::with_capacity(n_pairs as usize);
    while (out.len() as u64) < n_pairs {
        let i = rng.random_range(0..n);
        if rng.random::<f64>() * envelope < table[i] {
            out.push(i as i64 - tau_window);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EmitterModel;

    fn params() -> TpiParams {
        TpiParams {
            eta: 1.0,
            alpha2: 0.63,
            beta: 0.02,
            tau_c: 150.0,
            emitter: EmitterModel { g0: 0.21, tau_r: 500.0 },
            sigma_j: 43.27,
            phi: 0.0,
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let mut seen: Vec<u64> = (0..4)
            .flat_map(|s| (0..64).map(move |i| derive_seed(7, s, i)))
            .collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 256);
        assert_eq!(derive_seed(7, 1, 2), derive_seed(7, 1, 2));
    }

    #[test]
    fn window_must_cover_correlations() {
        assert!(sample_coincidences(&params(), 10, 4000, 1).is_err());
    }

    #[test]
    fn draws_stay_in_window_and_are_reproducible() {
        let a = sample_coincidences(&params(), 5000, 5000, 42).unwrap();
        let b = sample_coincidences(&params(), 5000, 5000, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5000);
        assert!(a.iter().all(|t| (-5000..5000).contains(t)));
    }

    #[test]
    fn expected_pairs_rounds() {
        assert_eq!(expected_pairs(1e3, 1_000_000_000_000), 1000);
        assert_eq!(expected_pairs(0.0, 10), 0);
    }
}
