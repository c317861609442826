//! Synthetic two-party time-tag streams and their coincidence analysis.
//!
//! Timestamps are `u64` picoseconds; offsets, windows, bins and drift slopes
//! are integers too. Floating point only appears where random deviates are
//! drawn and in fit diagnostics.

mod coincidence;
mod drift;
mod format;
mod histogram;

pub use coincidence::{
    coincidence_stats, count_coincidences, counts_by_setting, match_pairs, tally, CoincidenceStats, Pair,
    ACCIDENTAL_DELAY_PS,
};
pub use drift::{drift_track, drift_track_with, estimate_model, BlockOffset, DriftModel, DriftOptions, DriftSegment};
pub use format::{
    read_tags, read_tags_bin, read_tags_csv, write_tags, write_tags_bin, write_tags_csv, TagFormat, MAGIC,
};
pub use histogram::{coincidence_histogram, CoincidenceHistogram, Peak};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};

pub const PS_PER_S: u64 = 1_000_000_000_000;
/// Parts-per-trillion per ppm.
pub const PPT_PER_PPM: f64 = 1e6;

/// One detection. Ordered by time, then channel. Channel `0` is the `+1`
/// outcome detector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    pub timestamp: u64,
    pub channel: u8,
}

impl TimeTag {
    pub fn new(channel: u8, timestamp: u64) -> Self {
        Self { timestamp, channel }
    }
}

pub fn is_sorted(tags: &[TimeTag]) -> bool {
    tags.windows(2).all(|w| w[0] <= w[1])
}

/// Tags with `lo <= t < hi`.
pub(crate) fn slice_range(tags: &[TimeTag], lo: i64, hi: i64) -> &[TimeTag] {
    let lo = lo.max(0) as u64;
    let hi = hi.max(0) as u64;
    let s = tags.partition_point(|t| t.timestamp < lo);
    let e = tags.partition_point(|t| t.timestamp < hi);
    &tags[s..e.max(s)]
}

fn one() -> f64 {
    1.0
}

/// Source and channel parameters. Rates in counts per second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    /// Pair emission rate seen by Alice's local detectors.
    pub pair_rate: f64,
    /// Alice's total detection rate (pair photons included).
    pub singles_rate_a: f64,
    /// Bob's detection rate at the source, before the channel.
    pub singles_rate_b: f64,
    /// Uncorrelated counts at Bob after the channel (dark counts, daylight).
    pub background_b: f64,
    pub transmission: f64,
    /// Bob's detector efficiency relative to the one folded into the rates.
    #[serde(default = "one")]
    pub detection_ratio_b: f64,
    pub drift_ppm: f64,
    /// The drift changes sign at this time, if set.
    #[serde(default)]
    pub drift_flip_at_s: Option<f64>,
    /// Gaussian timing jitter added to Bob's tags, standard deviation.
    pub jitter_ps: f64,
    /// Flight-time plus clock offset of Bob relative to Alice.
    pub offset_ps: i64,
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            pair_rate: 10_000.0,
            singles_rate_a: 10_000.0,
            singles_rate_b: 10_000.0,
            background_b: 0.0,
            transmission: 1.0,
            detection_ratio_b: 1.0,
            drift_ppm: 0.0,
            drift_flip_at_s: None,
            jitter_ps: 0.0,
            offset_ps: 1_000_000,
            duration_s: 1.0,
            seed: 0,
        }
    }
}

impl LinkParams {
    /// Free-space link: 84 kcps pairs, 18 % transmission, about 20 kcps
    /// coincidences, 3.94 µs offset.
    pub fn field_trial() -> Self {
        Self {
            pair_rate: 84_000.0,
            singles_rate_a: 400_000.0,
            singles_rate_b: 350_000.0,
            background_b: 800.0,
            transmission: 0.18,
            detection_ratio_b: 1.3228,
            drift_ppm: 0.05,
            drift_flip_at_s: None,
            jitter_ps: 150.0,
            offset_ps: 3_940_000,
            duration_s: 10.0,
            seed: 1,
        }
    }

    /// Both detectors at the source: coincidence-to-singles ratio about 0.22.
    pub fn source_scale() -> Self {
        Self {
            transmission: 1.0,
            detection_ratio_b: 1.0,
            background_b: 0.0,
            drift_ppm: 0.0,
            ..Self::field_trial()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "field-trial" | "field_trial" => Ok(Self::field_trial()),
            "source-scale" | "source_scale" => Ok(Self::source_scale()),
            "ideal" => Ok(Self::default()),
            other => Err(Error::InvalidInput(format!("unknown preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pair_rate", self.pair_rate),
            ("singles_rate_a", self.singles_rate_a),
            ("singles_rate_b", self.singles_rate_b),
            ("background_b", self.background_b),
            ("jitter_ps", self.jitter_ps),
        ] {
            check_range(name, v, 0.0, 1e10, ">= 0")?;
        }
        check_range("drift_ppm", self.drift_ppm, -1e4, 1e4, "|drift| <= 1e4 ppm")?;
        if !(self.transmission > 0.0 && self.transmission <= 1.0) {
            return Err(Error::OutOfRange {
                name: "transmission",
                value: self.transmission,
                range: "(0, 1]",
            });
        }
        let q = self.bob_survival();
        if !(self.detection_ratio_b > 0.0 && q <= 1.0) {
            return Err(Error::OutOfRange {
                name: "detection_ratio_b",
                value: self.detection_ratio_b,
                range: "> 0 with transmission * ratio <= 1",
            });
        }
        if !(self.duration_s > 0.0 && self.duration_s <= 1e5) {
            return Err(Error::OutOfRange {
                name: "duration_s",
                value: self.duration_s,
                range: "(0, 1e5]",
            });
        }
        if let Some(f) = self.drift_flip_at_s {
            check_range("drift_flip_at_s", f, 0.0, self.duration_s, "[0, duration_s]")?;
        }
        Ok(())
    }

    /// Probability that a pair photon sent to Bob is detected there.
    pub fn bob_survival(&self) -> f64 {
        self.transmission * self.detection_ratio_b
    }

    pub fn duration_ps(&self) -> u64 {
        (self.duration_s * PS_PER_S as f64).round() as u64
    }

    pub fn drift_ppt(&self) -> i64 {
        (self.drift_ppm * PPT_PER_PPM).round() as i64
    }

    pub fn alice_rate(&self) -> f64 {
        self.singles_rate_a.max(self.pair_rate)
    }

    pub fn bob_rate(&self) -> f64 {
        self.singles_rate_b.max(self.pair_rate) * self.bob_survival() + self.background_b
    }

    /// True two-photon detections per second.
    pub fn expected_coincidence_rate(&self) -> f64 {
        self.pair_rate * self.bob_survival()
    }

    /// Uncorrelated pairs falling inside a `window_ps` window.
    pub fn expected_accidental_rate(&self, window_ps: u64) -> f64 {
        self.alice_rate() * self.bob_rate() * window_ps as f64 * 1e-12
    }

    /// Coincidence-to-singles ratio with both detectors at the source.
    pub fn source_car(&self) -> f64 {
        let s = (self.alice_rate() * self.singles_rate_b.max(self.pair_rate)).sqrt();
        if s > 0.0 {
            self.pair_rate / s
        } else {
            0.0
        }
    }

    /// Bob's local clock reading at true time `t`.
    pub fn bob_clock(&self, t: i64) -> i64 {
        let ppt = self.drift_ppt() as i128;
        let t = t as i128;
        let drift = match self.drift_flip_at_s {
            None => ppt * t,
            Some(f) => {
                let tf = (f * PS_PER_S as f64).round() as i128;
                if t <= tf {
                    ppt * t
                } else {
                    ppt * tf - ppt * (t - tf)
                }
            }
        };
        (t + drift.div_euclid(PS_PER_S as i128)) as i64
    }

    /// The offset a correlator should find for a pair emitted at `t`.
    pub fn planted_offset(&self, t: u64) -> i64 {
        self.bob_clock(t as i64 + self.offset_ps) - t as i64
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Sorted Poisson arrival times on `[0, dur_ps)`.
fn poisson_times<R: Rng>(rng: &mut R, rate: f64, dur_ps: u64) -> Vec<u64> {
    let mean = rate * dur_ps as f64 / PS_PER_S as f64;
    if mean <= 0.0 || dur_ps == 0 {
        return Vec::new();
    }
    let n = Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0);
    let mut t: Vec<u64> = (0..n).map(|_| rng.random_range(0..dur_ps)).collect();
    t.sort_unstable();
    t
}

fn uncorrelated<R: Rng>(rng: &mut R, rate: f64, dur_ps: u64) -> Vec<TimeTag> {
    poisson_times(rng, rate, dur_ps)
        .into_iter()
        .map(|t| TimeTag::new(rng.random_range(0..2u8), t))
        .collect()
}

/// `(alice, bob)` tag lists, each sorted.
pub type Streams = (Vec<TimeTag>, Vec<TimeTag>);

/// Perfectly correlated outcomes with even weights.
pub fn simulate_streams(p: &LinkParams) -> Result<Streams> {
    simulate_with(p, |_| [0.5, 0.0, 0.0, 0.5])
}

/// Pairs are emitted as a Poisson process; `outcome(t)` gives the
/// `[p00, p01, p10, p11]` channel distribution for a pair emitted at `t`.
/// Bob's photon survives with [`LinkParams::bob_survival`], is delayed by the
/// offset, read on the drifting clock and jittered. Uncorrelated singles fill
/// both sides. Each component draws from its own ChaCha stream.
pub fn simulate_with<F>(p: &LinkParams, outcome: F) -> Result<Streams>
where
    F: Fn(u64) -> [f64; 4] + Sync,
{
    p.validate()?;
    let dur = p.duration_ps();
    let q = p.bob_survival();
    let jitter = if p.jitter_ps > 0.0 {
        Some(Normal::new(0.0, p.jitter_ps).map_err(|e| Error::InvalidInput(e.to_string()))?)
    } else {
        None
    };
    let bob_time = |t: i64, rng: &mut ChaCha8Rng| -> Option<u64> {
        let mut local = p.bob_clock(t);
        if let Some(j) = &jitter {
            local += j.sample(rng).round() as i64;
        }
        (local >= 0).then_some(local as u64)
    };

    let parts = crate::par::map_ordered(&[1u64, 2, 3, 4], |&stream| {
        let mut rng = rng_for(p.seed, stream);
        let mut a = Vec::new();
        let mut b = Vec::new();
        match stream {
            1 => {
                for t in poisson_times(&mut rng, p.pair_rate, dur) {
                    let probs = outcome(t);
                    let u: f64 = rng.random();
                    let mut k = 3;
                    let mut acc = 0.0;
                    for (i, &pi) in probs.iter().enumerate() {
                        acc += pi;
                        if u < acc {
                            k = i;
                            break;
                        }
                    }
                    a.push(TimeTag::new((k >> 1) as u8, t));
                    if rng.random::<f64>() < q {
                        if let Some(tb) = bob_time(t as i64 + p.offset_ps, &mut rng) {
                            b.push(TimeTag::new((k & 1) as u8, tb));
                        }
                    }
                }
            }
            2 => a = uncorrelated(&mut rng, (p.singles_rate_a - p.pair_rate).max(0.0), dur),
            3 | 4 => {
                let rate = if stream == 3 {
                    (p.singles_rate_b - p.pair_rate).max(0.0) * q
                } else {
                    p.background_b
                };
                for tag in uncorrelated(&mut rng, rate, dur) {
                    if let Some(tb) = bob_time(tag.timestamp as i64 + p.offset_ps, &mut rng) {
                        b.push(TimeTag::new(tag.channel, tb));
                    }
                }
            }
            _ => unreachable!(),
        }
        (a, b)
    });
    let mut alice = Vec::new();
    let mut bob = Vec::new();
    for (a, b) in parts {
        alice.extend(a);
        bob.extend(b);
    }
    alice.sort_unstable();
    bob.sort_unstable();
    Ok((alice, bob))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_link_pairs_every_tag() {
        let p = LinkParams::default();
        let (a, b) = simulate_streams(&p).unwrap();
        assert_eq!(a.len(), b.len());
        assert!(!a.is_empty());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(y.timestamp as i64 - x.timestamp as i64, p.offset_ps);
            assert_eq!(x.channel, y.channel);
        }
    }

    #[test]
    fn bob_count_matches_poisson_mean() {
        let p = LinkParams {
            pair_rate: 50_000.0,
            singles_rate_a: 80_000.0,
            singles_rate_b: 70_000.0,
            background_b: 2_000.0,
            transmission: 0.3,
            jitter_ps: 100.0,
            duration_s: 2.0,
            seed: 5,
            ..Default::default()
        };
        let (a, b) = simulate_streams(&p).unwrap();
        let mean_b = p.bob_rate() * p.duration_s;
        let mean_a = p.alice_rate() * p.duration_s;
        assert!(
            (b.len() as f64 - mean_b).abs() < 5.0 * mean_b.sqrt(),
            "{} vs {mean_b}",
            b.len()
        );
        assert!((a.len() as f64 - mean_a).abs() < 5.0 * mean_a.sqrt());
        assert!(is_sorted(&a) && is_sorted(&b));
    }

    #[test]
    fn deterministic_per_seed() {
        let p = LinkParams {
            jitter_ps: 200.0,
            transmission: 0.5,
            singles_rate_a: 20_000.0,
            ..Default::default()
        };
        assert_eq!(simulate_streams(&p).unwrap(), simulate_streams(&p).unwrap());
        let other = simulate_streams(&LinkParams { seed: 1, ..p }).unwrap();
        assert_ne!(simulate_streams(&LinkParams::default()).unwrap().0, other.0);
    }

    #[test]
    fn field_trial_rates() {
        let p = LinkParams::field_trial();
        assert!((p.expected_coincidence_rate() - 20_000.0).abs() < 50.0);
        assert!((p.source_car() - 0.2245).abs() < 1e-3);
        p.validate().unwrap();
        LinkParams::source_scale().validate().unwrap();
        assert!(LinkParams::preset("nope").is_err());
    }

    #[test]
    fn clock_model() {
        let p = LinkParams {
            drift_ppm: 1.0,
            drift_flip_at_s: Some(2.0),
            ..Default::default()
        };
        let s = PS_PER_S as i64;
        assert_eq!(p.bob_clock(s), s + 1_000_000);
        assert_eq!(p.bob_clock(2 * s), 2 * s + 2_000_000);
        assert_eq!(p.bob_clock(3 * s), 3 * s + 1_000_000);
    }

    #[test]
    fn rejects_bad_params() {
        for bad in [
            LinkParams {
                transmission: 0.0,
                ..Default::default()
            },
            LinkParams {
                duration_s: -1.0,
                ..Default::default()
            },
            LinkParams {
                pair_rate: f64::NAN,
                ..Default::default()
            },
            LinkParams {
                transmission: 0.9,
                detection_ratio_b: 2.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
