use super::{CorrelationHistogram, DetectionRecord, HistogramGrid};
use crate::error::{Error, Result};

fn check_sorted(records: &[DetectionRecord]) -> Result<()> {
    match records.windows(2).position(|w| w[1].time_ps < w[0].time_ps) {
        Some(i) => Err(Error::UnsortedInput {
            channel: records[i + 1].channel.to_string(),
            index: i + 1,
        }),
        None => Ok(()),
    }
}

/// Start–multi-stop correlation: every pair with `t2 - t1` inside the grid
/// range is counted, using a sliding lower pointer into the stop stream.
pub fn correlate_streams(
    starts: &[DetectionRecord],
    stops: &[DetectionRecord],
    grid: HistogramGrid,
    span_ps: i64,
) -> Result<CorrelationHistogram> {
    check_sorted(starts)?;
    check_sorted(stops)?;
    let mut h = CorrelationHistogram::empty(grid).with_metadata(
        span_ps,
        starts.len() as u64,
        stops.len() as u64,
        &[],
    );
    let (lo, hi) = (grid.tau_min(), grid.tau_max());
    let mut first = 0usize;
    for s in starts {
        while first < stops.len() && stops[first].time_ps - s.time_ps < lo {
            first += 1;
        }
        for stop in &stops[first..] {
            let tau = stop.time_ps - s.time_ps;
            if tau >= hi {
                break;
            }
            h.add(tau);
        }
    }
    Ok(h)
}

/// Single-stream autocorrelation over all ordered pairs `i != j`.
pub fn autocorrelate(times: &[i64], grid: HistogramGrid, span_ps: i64) -> Result<CorrelationHistogram> {
    if let Some(i) = times.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::UnsortedInput {
            channel: "stream".into(),
            index: i + 1,
        });
    }
    let n = times.len() as u64;
    let mut h = CorrelationHistogram::empty(grid).with_metadata(span_ps, n, n, &[]);
    let (lo, hi) = (grid.tau_min(), grid.tau_max());
    for (i, &t) in times.iter().enumerate() {
        for &u in &times[i + 1..] {
            let tau = u - t;
            if tau >= hi && -tau < lo {
                break;
            }
            if tau < hi {
                h.add(tau);
            }
            if -tau >= lo {
                h.add(-tau);
            }
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::Channel;

    fn recs(times: &[i64], channel: Channel) -> Vec<DetectionRecord> {
        times
            .iter()
            .map(|&time_ps| DetectionRecord { time_ps, channel })
            .collect()
    }

    #[test]
    fn identical_single_events() {
        let grid = HistogramGrid::symmetric(48, 24 * 11).unwrap();
        let h = correlate_streams(&recs(&[1000], Channel::D1), &recs(&[1000], Channel::D2), grid, 2000)
            .unwrap();
        assert_eq!(h.total_in_range(), 1);
        assert_eq!(h.counts()[5], 1);
    }

    #[test]
    fn out_of_window_pairs_ignored() {
        let grid = HistogramGrid::symmetric(10, 50).unwrap();
        let h = correlate_streams(
            &recs(&[0, 100, 200], Channel::D1),
            &recs(&[49, 50, 100, 151, 300], Channel::D2),
            grid,
            400,
        )
        .unwrap();
        // pairs: 49, 50(out), 100(out) from 0; -51(out), -50, 0, 51(out) from 100; ...
        assert_eq!(h.total_in_range(), 4);
        assert_eq!(h.overflow(), 0);
    }

    #[test]
    fn autocorrelation_is_symmetric() {
        let grid = HistogramGrid::symmetric(10, 50).unwrap();
        let h = autocorrelate(&[0, 5, 33, 34, 200], grid, 300).unwrap();
        let c = h.counts();
        let n = c.len();
        // pair delays 5, 33, 34, 28, 29, 1 (none on a bin edge)
        assert_eq!(h.total_in_range(), 12);
        for i in 0..n / 2 {
            assert_eq!(c[i], c[n - 1 - i]);
        }
    }

    #[test]
    fn unsorted_rejected() {
        let grid = HistogramGrid::symmetric(10, 50).unwrap();
        assert!(correlate_streams(&recs(&[5, 1], Channel::D1), &[], grid, 10).is_err());
    }
}
