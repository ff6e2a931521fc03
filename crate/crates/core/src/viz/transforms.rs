//! Pure series transforms used by the built-in plugins.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{day_bucket, day_start_ms};

/// One chart vertex: `[t, y]`, or `[t, min, max]` for an envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeriesPoint {
    Value(f64, f64),
    Envelope(f64, f64, f64),
}

impl SeriesPoint {
    pub fn t(&self) -> f64 {
        match *self {
            SeriesPoint::Value(t, _) | SeriesPoint::Envelope(t, _, _) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownsampleMode {
    Mean,
    Minmax,
}

fn mean_t(ts: impl Iterator<Item = i64>) -> f64 {
    let (sum, n) = ts.fold((0i128, 0i128), |(s, n), t| (s + i128::from(t), n + 1));
    sum as f64 / n as f64
}

/// Equal-count bucketing. Buckets hold `ceil(len / n_buckets)` points each
/// (the last one may be short) and are reported at their mean timestamp.
/// Inputs no longer than `n_buckets` pass through point for point.
pub fn downsample_buckets(
    points: &[(i64, f64)],
    n_buckets: usize,
    mode: DownsampleMode,
) -> Vec<SeriesPoint> {
    let n_buckets = n_buckets.max(1);
    let emit = |chunk: &[(i64, f64)]| -> SeriesPoint {
        let t = mean_t(chunk.iter().map(|p| p.0));
        match mode {
            DownsampleMode::Mean => {
                let y = chunk.iter().map(|p| p.1).sum::<f64>() / chunk.len() as f64;
                SeriesPoint::Value(t, y)
            }
            DownsampleMode::Minmax => {
                let (lo, hi) = chunk
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                        (lo.min(p.1), hi.max(p.1))
                    });
                SeriesPoint::Envelope(t, lo, hi)
            }
        }
    };
    if points.len() <= n_buckets {
        return points.chunks(1).map(emit).collect();
    }
    let size = points.len().div_ceil(n_buckets);
    points.chunks(size).map(emit).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DailyStat {
    Mean,
    Min,
    Max,
    Count,
}

/// One point per non-empty local day, stamped at the day's start (UTC ms).
pub fn aggregate_daily(
    points: &[(i64, f64)],
    stat: DailyStat,
    tz_offset_minutes: i32,
) -> Vec<(i64, f64)> {
    let mut days: BTreeMap<i64, (f64, f64, f64, usize)> = BTreeMap::new();
    for &(t, y) in points {
        let e = days
            .entry(day_bucket(t, tz_offset_minutes))
            .or_insert((0.0, f64::INFINITY, f64::NEG_INFINITY, 0));
        e.0 += y;
        e.1 = e.1.min(y);
        e.2 = e.2.max(y);
        e.3 += 1;
    }
    days.into_iter()
        .map(|(day, (sum, min, max, n))| {
            let y = match stat {
                DailyStat::Mean => sum / n as f64,
                DailyStat::Min => min,
                DailyStat::Max => max,
                DailyStat::Count => n as f64,
            };
            (day_start_ms(day, tz_offset_minutes), y)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Values outside `[lo, hi]` (and NaNs).
    pub dropped: u64,
}

/// Equal-width bins over `[lo, hi]`: half-open `[e_i, e_{i+1})` except the
/// last, which is closed.
///
/// Panics if `n_bins == 0` or `!(lo < hi)`.
pub fn histogram(values: &[f64], n_bins: usize, lo: f64, hi: f64) -> Histogram {
    assert!(n_bins >= 1, "histogram needs at least one bin");
    assert!(lo < hi && lo.is_finite() && hi.is_finite(), "histogram needs finite lo < hi");
    let width = hi - lo;
    let mut edges: Vec<f64> = (0..n_bins)
        .map(|i| lo + width * i as f64 / n_bins as f64)
        .collect();
    edges.push(hi);
    let mut counts = vec![0u64; n_bins];
    let mut dropped = 0;
    for &v in values {
        if !(lo..=hi).contains(&v) {
            dropped += 1;
            continue;
        }
        let mut idx = (((v - lo) / width) * n_bins as f64).floor() as usize;
        idx = idx.min(n_bins - 1);
        // the float estimate can be one off near an edge
        while idx > 0 && v < edges[idx] {
            idx -= 1;
        }
        while idx + 1 < n_bins && v >= edges[idx + 1] {
            idx += 1;
        }
        counts[idx] += 1;
    }
    Histogram {
        edges,
        counts,
        dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: i64) -> Vec<(i64, f64)> {
        (0..n).map(|i| (i, (i + 1) as f64)).collect()
    }

    #[test]
    fn downsample_mean_example() {
        let out = downsample_buckets(&ramp(6), 3, DownsampleMode::Mean);
        assert_eq!(
            out,
            vec![
                SeriesPoint::Value(0.5, 1.5),
                SeriesPoint::Value(2.5, 3.5),
                SeriesPoint::Value(4.5, 5.5)
            ]
        );
    }

    #[test]
    fn downsample_minmax_example() {
        let out = downsample_buckets(&ramp(6), 3, DownsampleMode::Minmax);
        assert_eq!(
            out,
            vec![
                SeriesPoint::Envelope(0.5, 1.0, 2.0),
                SeriesPoint::Envelope(2.5, 3.0, 4.0),
                SeriesPoint::Envelope(4.5, 5.0, 6.0)
            ]
        );
    }

    #[test]
    fn downsample_identity_under_budget() {
        let pts = vec![(10, 1.0), (20, -2.0), (30, 4.0)];
        let out = downsample_buckets(&pts, 10, DownsampleMode::Mean);
        assert_eq!(
            out,
            vec![
                SeriesPoint::Value(10.0, 1.0),
                SeriesPoint::Value(20.0, -2.0),
                SeriesPoint::Value(30.0, 4.0)
            ]
        );
        let out = downsample_buckets(&pts, 3, DownsampleMode::Minmax);
        assert_eq!(out[1], SeriesPoint::Envelope(20.0, -2.0, -2.0));
        assert!(downsample_buckets(&[], 5, DownsampleMode::Mean).is_empty());
    }

    #[test]
    fn short_last_bucket() {
        let out = downsample_buckets(&ramp(7), 3, DownsampleMode::Mean);
        assert_eq!(out.len(), 3);
        assert_eq!(out[2], SeriesPoint::Value(6.0, 7.0));
    }

    #[test]
    fn daily_examples() {
        let pts = vec![(0, 2.0), (3_600_000, 4.0)];
        assert_eq!(aggregate_daily(&pts, DailyStat::Mean, 0), vec![(0, 3.0)]);
        let mut pts = pts;
        pts.push((90_000_000, 10.0));
        assert_eq!(
            aggregate_daily(&pts, DailyStat::Mean, 0),
            vec![(0, 3.0), (86_400_000, 10.0)]
        );
        let three = vec![(0, 1.0), (1, 1.0), (2, 1.0)];
        assert_eq!(aggregate_daily(&three, DailyStat::Count, 0), vec![(0, 3.0)]);
        assert_eq!(aggregate_daily(&pts, DailyStat::Min, 0)[0], (0, 2.0));
        assert_eq!(aggregate_daily(&pts, DailyStat::Max, 0)[0], (0, 4.0));
    }

    #[test]
    fn daily_respects_offset() {
        // 23:30 UTC is 00:30 the next day at +60
        let pts = vec![(84_600_000, 1.0)];
        assert_eq!(
            aggregate_daily(&pts, DailyStat::Count, 60),
            vec![(86_400_000 - 3_600_000, 1.0)]
        );
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[1.0, 2.0, 2.0, 3.0], 2, 1.0, 3.0);
        assert_eq!(h.edges, vec![1.0, 2.0, 3.0]);
        assert_eq!(h.counts, vec![1, 3]);
        assert_eq!(h.dropped, 0);
        let h = histogram(&[], 4, 0.0, 1.0);
        assert_eq!(h.counts, vec![0; 4]);
        let h = histogram(&[5.0, f64::NAN], 2, 1.0, 3.0);
        assert_eq!(h.dropped, 2);
        assert_eq!(h.counts, vec![0, 0]);
    }

    #[test]
    fn histogram_edges_exact_at_tenths() {
        // 0.3 and 0.6 are not representable; they must still land right of their edge
        let h = histogram(&[0.3, 0.6, 0.7, 0.9999], 10, 0.0, 1.0);
        for (i, &v) in [0.3, 0.6, 0.7, 0.9999].iter().enumerate() {
            let bin = h.edges.windows(2).position(|w| w[0] <= v && v < w[1]).unwrap();
            assert!(h.counts[bin] >= 1, "value #{i} {v} not in bin {bin}");
        }
    }

    proptest! {
        #[test]
        fn histogram_conserves_count(
            values in prop::collection::vec(-10.0f64..10.0, 0..200),
            bins in 1usize..30,
            lo in -8.0f64..0.0,
            span in 0.1f64..10.0,
        ) {
            let h = histogram(&values, bins, lo, lo + span);
            prop_assert_eq!(h.counts.len() + 1, h.edges.len());
            prop_assert_eq!(h.counts.iter().sum::<u64>() + h.dropped, values.len() as u64);
            for &v in &values {
                if v >= lo && v <= lo + span {
                    let n = h.counts.len();
                    let bin = (0..n).find(|&i| h.edges[i] <= v && (v < h.edges[i + 1] || i == n - 1));
                    prop_assert!(bin.is_some());
                }
            }
        }

        #[test]
        fn downsample_mean_preserves_global_mean(
            ys in prop::collection::vec(-100.0f64..100.0, 1..20),
            per in 1usize..6,
        ) {
            // equal-count buckets: n_buckets * per points exactly
            let n_buckets = ys.len();
            let pts: Vec<(i64, f64)> = (0..n_buckets * per)
                .map(|i| (i as i64 * 10, ys[i / per] + (i % per) as f64))
                .collect();
            let out = downsample_buckets(&pts, n_buckets, DownsampleMode::Mean);
            let global = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
            let of_buckets = out.iter().map(|p| match p { SeriesPoint::Value(_, y) => *y, _ => unreachable!() }).sum::<f64>() / out.len() as f64;
            prop_assert!((global - of_buckets).abs() < 1e-9);
        }

        #[test]
        fn minmax_envelope_bounds_members(
            ys in prop::collection::vec(-100.0f64..100.0, 1..300),
            n in 1usize..50,
        ) {
            let pts: Vec<(i64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as i64, y)).collect();
            let out = downsample_buckets(&pts, n, DownsampleMode::Minmax);
            prop_assert!(out.len() <= n.max(1));
            let size = if pts.len() <= n { 1 } else { pts.len().div_ceil(n) };
            for (b, chunk) in pts.chunks(size).enumerate() {
                let SeriesPoint::Envelope(t, lo, hi) = out[b] else { unreachable!() };
                prop_assert!(chunk.iter().all(|p| lo <= p.1 && p.1 <= hi));
                prop_assert!(chunk.first().unwrap().0 as f64 <= t && t <= chunk.last().unwrap().0 as f64);
            }
            prop_assert!(out.windows(2).all(|w| w[0].t() < w[1].t()));
        }

        #[test]
        fn daily_count_sums_to_input(
            ts in prop::collection::vec(0i64..1_000_000_000_000, 0..200),
            off in -840i32..=840,
        ) {
            let pts: Vec<(i64, f64)> = ts.iter().map(|&t| (t, 1.0)).collect();
            let out = aggregate_daily(&pts, DailyStat::Count, off);
            prop_assert_eq!(out.iter().map(|p| p.1).sum::<f64>() as usize, pts.len());
            prop_assert!(out.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
}
