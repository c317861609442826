use log::debug;
use serde::{Deserialize, Serialize};

use super::histogram::{coincidence_histogram, CoincidenceHistogram};
use super::{slice_range, TimeTag, PS_PER_S};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftOptions {
    pub block_s: f64,
    pub bin_width_ps: u64,
    /// Offset range searched in the first block.
    pub coarse_span_ps: (i64, i64),
    /// Half-width of the search around the extrapolated offset in later blocks.
    pub track_half_span_ps: i64,
    /// Half-width of the drift-compensated refinement histogram.
    pub fine_half_span_ps: i64,
    pub min_snr: f64,
}

impl Default for DriftOptions {
    fn default() -> Self {
        Self {
            block_s: 1.0,
            bin_width_ps: 80,
            coarse_span_ps: (-50_000_000, 50_000_000),
            track_half_span_ps: 5_000_000,
            fine_half_span_ps: 10_000,
            min_snr: 5.0,
        }
    }
}

impl DriftOptions {
    fn validate(&self) -> Result<u64> {
        let block_ps = (self.block_s * PS_PER_S as f64).round();
        if !(1e6..1e18).contains(&block_ps) {
            return Err(Error::OutOfRange {
                name: "block_s",
                value: self.block_s,
                range: ">= 1 us",
            });
        }
        if self.bin_width_ps == 0
            || self.coarse_span_ps.1 <= self.coarse_span_ps.0
            || self.track_half_span_ps <= 0
            || self.fine_half_span_ps <= 0
            || !self.min_snr.is_finite()
        {
            return Err(Error::InvalidInput("invalid drift-tracking options".into()));
        }
        Ok(block_ps as u64)
    }
}

/// `offset(t) = intercept + (t − start)·slope_ppt·10⁻¹²` for `t ≥ start`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSegment {
    pub start_ps: u64,
    pub intercept_ps: i64,
    pub slope_ppt: i64,
    pub slope_stderr_ppt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockOffset {
    pub block: usize,
    pub start_ps: u64,
    pub end_ps: u64,
    pub center_ps: u64,
    /// Half-maximum centroid of the uncompensated peak.
    pub coarse_offset_ps: i64,
    /// After drift-compensated refinement.
    pub offset_ps: i64,
    pub snr: f64,
    pub peak_counts: u64,
    /// `offset_ps` minus the fitted model.
    pub residual_ps: i64,
}

/// Piecewise-linear map from Alice time to the Bob−Alice offset of a pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    pub segments: Vec<DriftSegment>,
    pub blocks: Vec<BlockOffset>,
    pub bin_width_ps: u64,
    pub block_ps: u64,
}

impl DriftModel {
    pub fn constant(offset_ps: i64) -> Self {
        Self {
            segments: vec![DriftSegment {
                start_ps: 0,
                intercept_ps: offset_ps,
                slope_ppt: 0,
                slope_stderr_ppt: 0.0,
            }],
            blocks: Vec::new(),
            bin_width_ps: 0,
            block_ps: 0,
        }
    }

    pub fn offset_at(&self, t: u64) -> i64 {
        let k = self.segments.partition_point(|s| s.start_ps <= t).saturating_sub(1);
        let s = &self.segments[k];
        let dt = t as i128 - s.start_ps as i128;
        s.intercept_ps + (dt * s.slope_ppt as i128).div_euclid(PS_PER_S as i128) as i64
    }

    /// Every intercept moved by `d`.
    pub fn shifted(&self, d: i64) -> Self {
        let mut m = self.clone();
        for s in &mut m.segments {
            s.intercept_ps += d;
        }
        m
    }

    pub fn max_abs_residual_ps(&self) -> i64 {
        self.blocks.iter().map(|b| b.residual_ps.abs()).max().unwrap_or(0)
    }

    /// Offset at the first tag time, as a correlator would quote it.
    pub fn initial_offset_ps(&self) -> i64 {
        self.offset_at(self.blocks.first().map_or(0, |b| b.start_ps))
    }
}

struct Line {
    /// Value at `t0`.
    a: f64,
    /// ps per ps.
    slope: f64,
    t0: f64,
    sse: f64,
    slope_stderr: f64,
}

impl Line {
    fn at(&self, t: f64) -> f64 {
        self.a + self.slope * (t - self.t0)
    }
}

fn fit_line(pts: &[(u64, i64)]) -> Line {
    let n = pts.len() as f64;
    let t0 = pts[0].0 as f64;
    let y0 = pts[0].1 as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0 as f64 - t0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1 as f64 - y0).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = y0 + my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let slope_stderr = if pts.len() > 2 && sxx > 0.0 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Line {
        a,
        slope,
        t0,
        sse,
        slope_stderr,
    }
}

/// Top-down segmentation: split where the two halves fit best until every
/// residual is within `tol`.
fn segment(pts: &[(u64, i64)], lo: usize, hi: usize, tol: f64, out: &mut Vec<(usize, usize)>) {
    let line = fit_line(&pts[lo..hi]);
    let worst = pts[lo..hi]
        .iter()
        .map(|p| (p.1 as f64 - line.at(p.0 as f64)).abs())
        .fold(0.0, f64::max);
    if worst <= tol || hi - lo < 4 {
        out.push((lo, hi));
        return;
    }
    let best = (lo + 2..=hi - 2)
        .min_by(|&x, &y| {
            let sx = fit_line(&pts[lo..x]).sse + fit_line(&pts[x..hi]).sse;
            let sy = fit_line(&pts[lo..y]).sse + fit_line(&pts[y..hi]).sse;
            sx.total_cmp(&sy)
        })
        .unwrap();
    segment(pts, lo, best, tol, out);
    segment(pts, best, hi, tol, out);
}

/// [`drift_track_with`] using default options and the given block length.
pub fn drift_track(a: &[TimeTag], b: &[TimeTag], block_s: f64) -> Result<DriftModel> {
    drift_track_with(
        a,
        b,
        &DriftOptions {
            block_s,
            ..Default::default()
        },
    )
}

/// Where a block's peak landed after compensating with a trial line.
#[derive(Clone, Copy)]
struct Located {
    offset: i64,
    bin: u64,
    snr: f64,
    counts: u64,
}

/// Finds the peak of `t_b − line(t_a)` for the Alice tags of one block, where
/// `line(t) = t + o + s·(t − c)` and the peak is searched in `o + [lo, hi)`.
/// Bin widths from `w0` upward in powers of two are tried and the most
/// significant peak wins, so a peak smeared by an imperfect slope is still
/// found, only less precisely.
#[allow(clippy::too_many_arguments)]
fn locate(
    ak: &[TimeTag],
    b: &[TimeTag],
    (c, o, s_ppt): (u64, i64, i64),
    (lo, hi): (i64, i64),
    w0: u64,
    min_snr: f64,
    block_ps: u64,
) -> std::result::Result<Located, f64> {
    let (Some(first), Some(last)) = (ak.first(), ak.last()) else {
        return Err(0.0);
    };
    let slope = s_ppt as i128;
    let line = |t: u64| t as i64 + o + ((t as i128 - c as i128) * slope).div_euclid(PS_PER_S as i128) as i64;
    let margin = (slope.unsigned_abs() * block_ps as u128 / PS_PER_S as u128) as i64 + 1;
    let bk = slice_range(
        b,
        line(first.timestamp) + lo - margin,
        line(last.timestamp) + hi + margin,
    );
    if bk.is_empty() {
        return Err(0.0);
    }
    // Differences are collected once and re-binned at each width.
    let shifted: Vec<i64> = ak.iter().map(|t| line(t.timestamp)).collect();
    let mut diffs = Vec::new();
    let mut start = 0usize;
    for tb in bk.iter().map(|t| t.timestamp as i64) {
        while start < shifted.len() && shifted[start] <= tb - hi {
            start += 1;
        }
        let mut i = start;
        while i < shifted.len() && shifted[i] <= tb - lo {
            diffs.push(tb - shifted[i] - lo);
            i += 1;
        }
    }
    let span = (hi - lo) as u64;
    let mut w = w0.max(span.div_ceil(1 << 20)).max(1);
    let mut best: Option<Located> = None;
    while w <= span / 32 {
        let mut h = CoincidenceHistogram {
            bin_width_ps: w,
            origin_ps: lo,
            counts: vec![0; span.div_ceil(w) as usize],
        };
        for &d in &diffs {
            h.counts[(d as u64 / w) as usize] += 1;
        }
        let guard = 16usize.max(2_000usize.div_ceil(w as usize));
        if let Some(pk) = h.peak_guarded(guard) {
            if best.is_none_or(|b| pk.snr > b.snr) {
                best = Some(Located {
                    offset: o + h.half_max_centroid(&pk),
                    bin: w,
                    snr: pk.snr,
                    counts: pk.counts,
                });
            }
        }
        w *= 2;
    }
    match best {
        Some(l) if l.snr >= min_snr => Ok(l),
        other => Err(other.map_or(0.0, |l| l.snr)),
    }
}

/// Per-block peak search followed by a segmented linear fit.
///
/// Blocks are first located in order, each searched around the linear
/// extrapolation of the previous ones with that line's slope removed. The
/// offsets are then refined in parallel a few times, every block compensated
/// with the slope through its neighbours, until each peak resolves at the
/// fine bin width. The refined offsets are fitted with as few straight
/// segments as keep every residual within one bin.
pub fn drift_track_with(a: &[TimeTag], b: &[TimeTag], opts: &DriftOptions) -> Result<DriftModel> {
    let block_ps = opts.validate()?;
    if a.is_empty() {
        return Err(Error::EmptyStream("alice"));
    }
    if b.is_empty() {
        return Err(Error::EmptyStream("bob"));
    }
    let t_end = a.last().unwrap().timestamp + 1;
    let full = (t_end / block_ps) as usize;
    let rem = t_end % block_ps;
    let nblocks = full + usize::from(2 * rem >= block_ps);
    if nblocks < 3 {
        return Err(Error::InvalidInput(format!(
            "drift tracking needs at least 3 blocks; the stream covers {nblocks} of {} s",
            opts.block_s
        )));
    }
    let bounds: Vec<(u64, u64)> = (0..nblocks)
        .map(|k| {
            let s = k as u64 * block_ps;
            let e = if k + 1 == nblocks { t_end } else { s + block_ps };
            (s, e)
        })
        .collect();
    let centers: Vec<u64> = bounds.iter().map(|&(s, e)| s + (e - s) / 2).collect();
    let blocks: Vec<&[TimeTag]> = bounds
        .iter()
        .map(|&(s, e)| slice_range(a, s as i64, e as i64))
        .collect();
    let slope_between = |x: &[i64], i: usize, j: usize| -> i64 {
        let dy = (x[j] - x[i]) as i128 * PS_PER_S as i128;
        (dy / (centers[j] - centers[i]) as i128) as i64
    };
    let fine_bin = (opts.bin_width_ps / 8).max(1);

    let mut raw: Vec<i64> = Vec::with_capacity(nblocks);
    let mut found: Vec<Located> = Vec::with_capacity(nblocks);
    for k in 0..nblocks {
        let (o, s, span) = match k {
            0 => (0, 0, opts.coarse_span_ps),
            _ => {
                let s = if k >= 2 { slope_between(&raw, k - 2, k - 1) } else { 0 };
                let dt = (centers[k] - centers[k - 1]) as i128;
                let o = raw[k - 1] + (dt * s as i128 / PS_PER_S as i128) as i64;
                (o, s, (-opts.track_half_span_ps, opts.track_half_span_ps))
            }
        };
        let hit = locate(
            blocks[k],
            b,
            (centers[k], o, s),
            span,
            opts.bin_width_ps,
            opts.min_snr,
            block_ps,
        )
        .map_err(|snr| Error::PeakNotFound { block: k, snr })?;
        raw.push(hit.offset);
        found.push(hit);
    }

    let idx: Vec<usize> = (0..nblocks).collect();
    let mut refined = raw.clone();
    for round in 0..12 {
        let prev = refined.clone();
        let prev_found = found.clone();
        let next: Vec<Located> = crate::par::map_ordered(&idx, |&k| {
            // Central, backward and forward slopes; the sharpest peak wins,
            // which keeps blocks next to a kink in the drift sharp.
            let mut pairs = vec![(k.saturating_sub(1), (k + 1).min(nblocks - 1))];
            if k > 0 {
                pairs.push((k - 1, k));
            }
            if k + 1 < nblocks {
                pairs.push((k, k + 1));
            }
            let half = (8 * prev_found[k].bin as i64).max(opts.fine_half_span_ps);
            pairs
                .into_iter()
                .filter_map(|(i, j)| {
                    let s = slope_between(&prev, i, j);
                    locate(
                        blocks[k],
                        b,
                        (centers[k], prev[k], s),
                        (-half, half),
                        fine_bin,
                        opts.min_snr,
                        block_ps,
                    )
                    .ok()
                })
                .max_by(|x, y| x.snr.total_cmp(&y.snr))
                .unwrap_or(prev_found[k])
        });
        refined = next.iter().map(|l| l.offset).collect();
        found = next;
        let moved = refined.iter().zip(&prev).map(|(x, y)| (x - y).abs()).max().unwrap_or(0);
        debug!("drift refinement round {round}: max move {moved} ps");
        if round > 0 && moved <= fine_bin as i64 {
            break;
        }
    }
    let stats: Vec<(f64, u64)> = found.iter().map(|l| (l.snr, l.counts)).collect();

    let pts: Vec<(u64, i64)> = centers.iter().copied().zip(refined.iter().copied()).collect();
    let mut parts = Vec::new();
    segment(&pts, 0, pts.len(), opts.bin_width_ps as f64, &mut parts);
    let segments: Vec<DriftSegment> = parts
        .iter()
        .map(|&(lo, hi)| {
            let line = fit_line(&pts[lo..hi]);
            let start_ps = if lo == 0 { 0 } else { (pts[lo - 1].0 + pts[lo].0) / 2 };
            DriftSegment {
                start_ps,
                intercept_ps: line.at(start_ps as f64).round() as i64,
                slope_ppt: (line.slope * PS_PER_S as f64).round() as i64,
                slope_stderr_ppt: line.slope_stderr * PS_PER_S as f64,
            }
        })
        .collect();
    let mut model = DriftModel {
        segments,
        blocks: Vec::new(),
        bin_width_ps: opts.bin_width_ps,
        block_ps,
    };
    model.blocks = (0..nblocks)
        .map(|k| BlockOffset {
            block: k,
            start_ps: bounds[k].0,
            end_ps: bounds[k].1,
            center_ps: centers[k],
            coarse_offset_ps: raw[k],
            offset_ps: refined[k],
            snr: stats[k].0,
            peak_counts: stats[k].1,
            residual_ps: refined[k] - model.offset_at(centers[k]),
        })
        .collect();
    debug!(
        "drift model: {} segment(s), max residual {} ps",
        model.segments.len(),
        model.max_abs_residual_ps()
    );
    Ok(model)
}

/// Drift tracking when the streams span enough blocks, else a single offset
/// from one coarse histogram over everything.
pub fn estimate_model(a: &[TimeTag], b: &[TimeTag], opts: &DriftOptions) -> Result<DriftModel> {
    let block_ps = opts.validate()?;
    let span = a.last().map_or(0, |t| t.timestamp + 1);
    if span >= 3 * block_ps {
        return drift_track_with(a, b, opts);
    }
    let h = coincidence_histogram(a, b, opts.bin_width_ps, opts.coarse_span_ps)?;
    let pk = h.peak().ok_or(Error::PeakNotFound { block: 0, snr: 0.0 })?;
    if !(pk.snr >= opts.min_snr) {
        return Err(Error::PeakNotFound { block: 0, snr: pk.snr });
    }
    Ok(DriftModel::constant(h.half_max_centroid(&pk)))
}

#[cfg(test)]
mod tests {
    use super::super::{simulate_streams, LinkParams};
    use super::*;

    fn link(drift_ppm: f64, flip: Option<f64>, duration_s: f64) -> LinkParams {
        LinkParams {
            pair_rate: 20_000.0,
            singles_rate_a: 40_000.0,
            singles_rate_b: 20_000.0,
            background_b: 500.0,
            transmission: 0.5,
            drift_ppm,
            drift_flip_at_s: flip,
            jitter_ps: 150.0,
            offset_ps: 3_940_000,
            duration_s,
            seed: 21,
            ..Default::default()
        }
    }

    #[test]
    fn recovers_linear_drift() {
        let p = link(1.0, None, 60.0);
        let (a, b) = simulate_streams(&p).unwrap();
        let m = drift_track(&a, &b, 1.0).unwrap();
        assert_eq!(m.segments.len(), 1, "{:?}", m.segments);
        let slope = m.segments[0].slope_ppt as f64;
        assert!((slope - 1e6).abs() < 0.05e6, "slope {slope} ppt");
        assert!(m.max_abs_residual_ps() <= 80);
        for t in [0u64, 10 * PS_PER_S, 59 * PS_PER_S] {
            assert!((m.offset_at(t) - p.planted_offset(t)).abs() <= 80);
        }
    }

    #[test]
    fn zero_drift_slope_is_null() {
        let p = link(0.0, None, 8.0);
        let (a, b) = simulate_streams(&p).unwrap();
        let m = drift_track(&a, &b, 1.0).unwrap();
        assert_eq!(m.segments.len(), 1);
        let s = &m.segments[0];
        assert!((s.slope_ppt as f64).abs() <= 3.0 * s.slope_stderr_ppt, "{s:?}");
        assert!((m.initial_offset_ps() - 3_940_000).abs() <= 80);
    }

    #[test]
    fn tracks_a_sign_flip() {
        let p = link(1.0, Some(20.0), 40.0);
        let (a, b) = simulate_streams(&p).unwrap();
        let m = drift_track(&a, &b, 1.0).unwrap();
        assert!(m.segments.len() >= 2, "{:?}", m.segments);
        assert!(m.max_abs_residual_ps() <= 80);
        let first = m.segments.first().unwrap().slope_ppt as f64;
        let last = m.segments.last().unwrap().slope_ppt as f64;
        assert!(
            (first - 1e6).abs() < 0.05e6 && (last + 1e6).abs() < 0.05e6,
            "{first} {last}"
        );
        for s in [5u64, 19, 21, 35] {
            let t = s * PS_PER_S;
            assert!(
                (m.offset_at(t) - p.planted_offset(t)).abs() <= 80,
                "t = {s} s: {} vs {} {:?}",
                m.offset_at(t),
                p.planted_offset(t),
                m.segments
            );
        }
    }

    #[test]
    fn short_or_empty_streams() {
        let p = link(0.0, None, 2.0);
        let (a, b) = simulate_streams(&p).unwrap();
        assert!(matches!(drift_track(&a, &b, 1.0), Err(Error::InvalidInput(_))));
        let m = estimate_model(&a, &b, &DriftOptions::default()).unwrap();
        assert!((m.offset_at(0) - 3_940_000).abs() <= 80);
        assert!(matches!(drift_track(&a, &[], 1.0), Err(Error::EmptyStream("bob"))));
    }

    #[test]
    fn no_peak_is_reported() {
        let p = LinkParams {
            pair_rate: 0.0,
            singles_rate_a: 5_000.0,
            singles_rate_b: 0.0,
            background_b: 5_000.0,
            duration_s: 4.0,
            ..Default::default()
        };
        let (a, b) = simulate_streams(&p).unwrap();
        assert!(matches!(
            drift_track(&a, &b, 1.0),
            Err(Error::PeakNotFound { block: 0, .. })
        ));
    }

    #[test]
    fn model_evaluation_is_integer_exact() {
        let m = DriftModel {
            segments: vec![
                DriftSegment {
                    start_ps: 0,
                    intercept_ps: 100,
                    slope_ppt: 2_000_000,
                    slope_stderr_ppt: 0.0,
                },
                DriftSegment {
                    start_ps: 5 * PS_PER_S,
                    intercept_ps: 10_000_100,
                    slope_ppt: -1_000_000,
                    slope_stderr_ppt: 0.0,
                },
            ],
            blocks: Vec::new(),
            bin_width_ps: 80,
            block_ps: PS_PER_S,
        };
        assert_eq!(m.offset_at(PS_PER_S), 2_000_100);
        assert_eq!(m.offset_at(6 * PS_PER_S), 9_000_100);
        assert_eq!(m.shifted(-100).offset_at(0), 0);
    }
}
