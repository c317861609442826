use serde::{Deserialize, Serialize};

use super::TimeTag;
use crate::error::{Error, Result};

/// Counts of `t_b − t_a` over `[origin, origin + bins·width)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub bin_width_ps: u64,
    pub origin_ps: i64,
    pub counts: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub bin: usize,
    pub center_ps: i64,
    pub counts: u64,
    /// Mean count per bin away from the peak.
    pub background: f64,
    /// `(peak − background) / √background`.
    pub snr: f64,
}

/// Bins within this distance of the maximum are left out of the background.
const PEAK_GUARD: usize = 16;

impl CoincidenceHistogram {
    pub fn span(&self) -> (i64, i64) {
        (
            self.origin_ps,
            self.origin_ps + (self.counts.len() as u64 * self.bin_width_ps) as i64,
        )
    }

    pub fn bin_center(&self, k: usize) -> i64 {
        self.origin_ps + (k as u64 * self.bin_width_ps + self.bin_width_ps / 2) as i64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Mean of the bins outside `±guard` of `center`.
    pub fn background_excluding(&self, center: usize, guard: usize) -> f64 {
        let (mut sum, mut n) = (0u64, 0u64);
        for (k, &c) in self.counts.iter().enumerate() {
            if k + guard < center || k > center + guard {
                sum += c;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum as f64 / n as f64
        }
    }

    /// Highest bin; ties go to the earliest.
    pub fn peak(&self) -> Option<Peak> {
        self.peak_guarded(PEAK_GUARD)
    }

    /// [`Self::peak`] with the background taken outside `±guard` bins.
    pub fn peak_guarded(&self, guard: usize) -> Option<Peak> {
        let (bin, &counts) = self
            .counts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(&x.0)))?;
        let background = self.background_excluding(bin, guard);
        let snr = (counts as f64 - background) / background.max(1.0).sqrt();
        Some(Peak {
            bin,
            center_ps: self.bin_center(bin),
            counts,
            background,
            snr,
        })
    }

    /// Background-subtracted centroid over the contiguous run of bins around
    /// `peak` that stay above half of its height. Integer arithmetic only.
    pub fn half_max_centroid(&self, peak: &Peak) -> i64 {
        let bg = peak.background.round() as i128;
        let height = peak.counts as i128 - bg;
        if height <= 0 {
            return peak.center_ps;
        }
        let above = |k: usize| 2 * (self.counts[k] as i128 - bg) >= height;
        let mut lo = peak.bin;
        while lo > 0 && above(lo - 1) {
            lo -= 1;
        }
        let mut hi = peak.bin;
        while hi + 1 < self.counts.len() && above(hi + 1) {
            hi += 1;
        }
        // One extra bin either side catches the tails of a narrow peak.
        let lo = lo.saturating_sub(1);
        let hi = (hi + 1).min(self.counts.len() - 1);
        let (mut w, mut wx) = (0i128, 0i128);
        for k in lo..=hi {
            let c = (self.counts[k] as i128 - bg).max(0);
            w += c;
            wx += c * self.bin_center(k) as i128;
        }
        if w == 0 {
            peak.center_ps
        } else {
            (wx.div_euclid(w) + i128::from(2 * wx.rem_euclid(w) >= w)) as i64
        }
    }
}

/// All-pairs histogram of `t_b − t_a` within `span = [lo, hi)`. Two-pointer
/// sweep: each Bob tag only visits the Alice tags inside its span.
pub fn coincidence_histogram(
    a: &[TimeTag],
    b: &[TimeTag],
    bin_width_ps: u64,
    span: (i64, i64),
) -> Result<CoincidenceHistogram> {
    if a.is_empty() {
        return Err(Error::EmptyStream("alice"));
    }
    if b.is_empty() {
        return Err(Error::EmptyStream("bob"));
    }
    histogram_shifted(a.iter().map(|t| t.timestamp as i64), b, bin_width_ps, span)
}

/// Histogram against Alice times already mapped into Bob's frame (must be
/// non-decreasing).
pub(crate) fn histogram_shifted(
    a: impl Iterator<Item = i64>,
    b: &[TimeTag],
    bin_width_ps: u64,
    span: (i64, i64),
) -> Result<CoincidenceHistogram> {
    let (lo, hi) = span;
    if bin_width_ps == 0 || hi <= lo {
        return Err(Error::InvalidInput(format!(
            "histogram needs a positive bin width and lo < hi (got {bin_width_ps}, [{lo}, {hi}))"
        )));
    }
    let w = bin_width_ps as i64;
    let nbins = ((hi - lo) as u64).div_ceil(bin_width_ps) as usize;
    let mut counts = vec![0u64; nbins];
    let a: Vec<i64> = a.collect();
    let mut start = 0usize;
    for tb in b.iter().map(|t| t.timestamp as i64) {
        // dt = tb − ta ∈ [lo, hi)  ⇔  ta ∈ (tb − hi, tb − lo]
        while start < a.len() && a[start] <= tb - hi {
            start += 1;
        }
        let mut i = start;
        while i < a.len() && a[i] <= tb - lo {
            let dt = tb - a[i];
            counts[((dt - lo) / w) as usize] += 1;
            i += 1;
        }
    }
    Ok(CoincidenceHistogram {
        bin_width_ps,
        origin_ps: lo,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{simulate_streams, LinkParams};
    use super::*;

    fn brute(a: &[TimeTag], b: &[TimeTag], w: u64, (lo, hi): (i64, i64)) -> Vec<u64> {
        let mut c = vec![0; ((hi - lo) as u64).div_ceil(w) as usize];
        for x in a {
            for y in b {
                let dt = y.timestamp as i64 - x.timestamp as i64;
                if dt >= lo && dt < hi {
                    c[((dt - lo) / w as i64) as usize] += 1;
                }
            }
        }
        c
    }

    #[test]
    fn matches_brute_force() {
        let p = LinkParams {
            pair_rate: 2_000.0,
            singles_rate_a: 5_000.0,
            background_b: 3_000.0,
            jitter_ps: 300.0,
            offset_ps: 40_000,
            duration_s: 0.05,
            seed: 9,
            ..Default::default()
        };
        let (a, b) = simulate_streams(&p).unwrap();
        for span in [(-100_000, 100_000), (39_000, 41_000), (0, 7)] {
            let h = coincidence_histogram(&a, &b, 80, span).unwrap();
            assert_eq!(h.counts, brute(&a, &b, 80, span));
        }
    }

    #[test]
    fn finds_planted_offset() {
        let p = LinkParams {
            offset_ps: 3_940_000,
            jitter_ps: 150.0,
            singles_rate_a: 40_000.0,
            background_b: 500.0,
            ..Default::default()
        };
        let (a, b) = simulate_streams(&p).unwrap();
        let h = coincidence_histogram(&a, &b, 80, (0, 10_000_000)).unwrap();
        let pk = h.peak().unwrap();
        assert!((pk.center_ps - 3_940_000).abs() <= 80);
        assert!(pk.snr > 50.0);
        assert!((h.half_max_centroid(&pk) - 3_940_000).abs() <= 20);
    }

    #[test]
    fn uncorrelated_is_flat() {
        let p = LinkParams {
            pair_rate: 0.0,
            singles_rate_a: 50_000.0,
            singles_rate_b: 0.0,
            background_b: 50_000.0,
            ..Default::default()
        };
        let (a, b) = simulate_streams(&p).unwrap();
        let h = coincidence_histogram(&a, &b, 800, (-2_000_000, 2_000_000)).unwrap();
        let mean = h.total() as f64 / h.counts.len() as f64;
        let max = *h.counts.iter().max().unwrap() as f64;
        assert!(max < mean + 5.0 * mean.sqrt(), "max {max} mean {mean}");
    }

    #[test]
    fn background_does_not_move_peak() {
        let base = LinkParams {
            offset_ps: 250_000,
            jitter_ps: 100.0,
            ..Default::default()
        };
        let (a, b) = simulate_streams(&base).unwrap();
        let p0 = coincidence_histogram(&a, &b, 80, (0, 1_000_000))
            .unwrap()
            .peak()
            .unwrap();
        let noisy = LinkParams {
            background_b: 1_000.0,
            ..base
        };
        let (a, b) = simulate_streams(&noisy).unwrap();
        let p1 = coincidence_histogram(&a, &b, 80, (0, 1_000_000))
            .unwrap()
            .peak()
            .unwrap();
        assert!((p0.center_ps - p1.center_ps).abs() <= 80);
        assert!(p1.snr > 5.0);
    }

    #[test]
    fn empty_streams_rejected() {
        let a = vec![TimeTag::new(0, 5)];
        assert!(matches!(
            coincidence_histogram(&a, &[], 80, (0, 10)),
            Err(Error::EmptyStream("bob"))
        ));
        assert!(matches!(
            coincidence_histogram(&[], &a, 80, (0, 10)),
            Err(Error::EmptyStream("alice"))
        ));
        assert!(coincidence_histogram(&a, &a, 0, (0, 10)).is_err());
    }
}
