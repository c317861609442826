use serde::{Deserialize, Serialize};

use super::drift::{estimate_model, DriftModel, DriftOptions};
use super::{simulate_with, LinkParams, TimeTag};
use crate::error::{Error, Result};
use crate::hyperstate::HyperState;
use crate::measure::{outcome_probabilities, CountRecord, MeasurementSetting};
use crate::scalar::Real;

/// Extra delay applied to Alice when counting accidentals: far from the true
/// peak, inside the same clock regime.
pub const ACCIDENTAL_DELAY_PS: i64 = 100_000;

/// One matched detection pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub a_index: usize,
    pub b_index: usize,
    pub t_a: u64,
    pub t_b: u64,
    pub ch_a: u8,
    pub ch_b: u8,
}

fn pair_with_delay(a: &[TimeTag], b: &[TimeTag], model: &DriftModel, window_ps: u64, delay: i64) -> Vec<Pair> {
    let mut pred: Vec<(i64, usize)> = a
        .iter()
        .enumerate()
        .map(|(i, t)| (t.timestamp as i64 + model.offset_at(t.timestamp) + delay, i))
        .collect();
    // The model is nearly the identity slope, so this is almost always a no-op.
    pred.sort_unstable();
    let w = window_ps as i128;
    let mut out = Vec::new();
    let mut j = 0usize;
    for (p, i) in pred {
        // Bob tags earlier than this window can never serve a later Alice tag.
        while j < b.len() && 2 * (p as i128 - b[j].timestamp as i128) > w {
            j += 1;
        }
        if j < b.len() && 2 * (b[j].timestamp as i128 - p as i128) <= w {
            out.push(Pair {
                a_index: i,
                b_index: j,
                t_a: a[i].timestamp,
                t_b: b[j].timestamp,
                ch_a: a[i].channel,
                ch_b: b[j].channel,
            });
            j += 1;
        }
    }
    out
}

/// Drift-compensated single-use pairing: Alice tags mapped into Bob's frame
/// are taken in time order and each claims the earliest unused Bob tag within
/// `±window/2`. For equal-width windows this is a maximum matching, so the
/// count never decreases as the window grows.
pub fn match_pairs(a: &[TimeTag], b: &[TimeTag], model: &DriftModel, window_ps: u64) -> Vec<Pair> {
    pair_with_delay(a, b, model, window_ps, 0)
}

/// `(n_coinc, n_coinc / √(n_a·n_b))`.
pub fn count_coincidences(a: &[TimeTag], b: &[TimeTag], model: &DriftModel, window_ps: u64) -> (u64, f64) {
    let n = match_pairs(a, b, model, window_ps).len() as u64;
    (n, car(n, a.len(), b.len()))
}

fn car(n: u64, na: usize, nb: usize) -> f64 {
    if na == 0 || nb == 0 {
        0.0
    } else {
        n as f64 / ((na as f64) * (nb as f64)).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceStats {
    pub window_ps: u64,
    pub n_coinc: u64,
    pub n_a: u64,
    pub n_b: u64,
    /// Coincidence-to-singles ratio.
    pub car: f64,
    /// Matches found with Alice delayed by `accidental_delay_ps`.
    pub n_accidental: u64,
    /// Coincidences over accidentals; `None` without accidentals.
    pub car_accidental: Option<f64>,
    pub accidental_delay_ps: i64,
}

pub fn coincidence_stats(a: &[TimeTag], b: &[TimeTag], model: &DriftModel, window_ps: u64) -> CoincidenceStats {
    let n_coinc = match_pairs(a, b, model, window_ps).len() as u64;
    let n_accidental = pair_with_delay(a, b, model, window_ps, ACCIDENTAL_DELAY_PS).len() as u64;
    CoincidenceStats {
        window_ps,
        n_coinc,
        n_a: a.len() as u64,
        n_b: b.len() as u64,
        car: car(n_coinc, a.len(), b.len()),
        n_accidental,
        car_accidental: (n_accidental > 0).then(|| n_coinc as f64 / n_accidental as f64),
        accidental_delay_ps: ACCIDENTAL_DELAY_PS,
    }
}

/// Outcome counts of matched pairs. Channel `0` is the `+1` detector.
pub fn tally(pairs: &[Pair], setting: MeasurementSetting, duration: f64) -> CountRecord {
    let mut n = [0u64; 4];
    for p in pairs {
        n[2 * usize::from(p.ch_a & 1) + usize::from(p.ch_b & 1)] += 1;
    }
    CountRecord {
        n00: n[0],
        n01: n[1],
        n10: n[2],
        n11: n[3],
        duration,
        setting,
    }
}

/// Simulate the link with pair outcomes drawn from `state` under `setting`,
/// locate the peak and pair within `window_ps`.
pub fn counts_by_setting<T: Real>(
    state: &HyperState<T>,
    p: &LinkParams,
    setting: &MeasurementSetting,
    window_ps: u64,
) -> Result<CountRecord> {
    let probs = outcome_probabilities(state, setting)?.map(|x| x.as_f64());
    let (a, b) = simulate_with(p, |_| probs)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyStream(if a.is_empty() { "alice" } else { "bob" }));
    }
    let model = estimate_model(&a, &b, &DriftOptions::default())?;
    Ok(tally(&match_pairs(&a, &b, &model, window_ps), *setting, p.duration_s))
}

#[cfg(test)]
mod tests {
    use super::super::simulate_streams;
    use super::*;
    use crate::hyperstate::ideal_hyper_state;
    use crate::measure::{correlation_from_counts, correlation_sigma, expected_correlation};
    use std::collections::HashSet;

    #[test]
    fn lossless_plant_counts_every_pair() {
        let p = LinkParams {
            pair_rate: 50_000.0,
            singles_rate_a: 50_000.0,
            singles_rate_b: 50_000.0,
            ..Default::default()
        };
        let (a, b) = simulate_streams(&p).unwrap();
        let m = DriftModel::constant(p.offset_ps);
        let (n, car) = count_coincidences(&a, &b, &m, 2_000);
        assert_eq!(n as usize, a.len());
        assert!((car - 1.0).abs() < 1e-12);
        // Exact timestamps survive a zero window.
        assert_eq!(count_coincidences(&a, &b, &m, 0).0 as usize, a.len());
        // One picosecond off and nothing matches.
        assert_eq!(count_coincidences(&a, &b, &m.shifted(1), 0).0, 0);
        assert_eq!(count_coincidences(&a, &b, &m.shifted(1), 2).0 as usize, a.len());
    }

    #[test]
    fn source_scale_ratio() {
        let p = LinkParams {
            duration_s: 0.5,
            ..LinkParams::source_scale()
        };
        let (a, b) = simulate_streams(&p).unwrap();
        let s = coincidence_stats(&a, &b, &DriftModel::constant(p.offset_ps), 2_000);
        assert!((s.car - 0.22).abs() < 0.02, "car {}", s.car);
        assert!(s.car_accidental.unwrap() > 10.0);
    }

    #[test]
    fn never_reuses_a_tag_and_grows_with_window() {
        let p = LinkParams {
            pair_rate: 30_000.0,
            singles_rate_a: 300_000.0,
            singles_rate_b: 200_000.0,
            background_b: 50_000.0,
            transmission: 0.4,
            jitter_ps: 400.0,
            duration_s: 0.3,
            seed: 3,
            ..Default::default()
        };
        let (a, b) = simulate_streams(&p).unwrap();
        let m = DriftModel::constant(p.offset_ps);
        let mut last = 0;
        for w in [0u64, 1, 10, 100, 500, 1_000, 2_000, 5_000, 20_000, 200_000] {
            let pairs = match_pairs(&a, &b, &m, w);
            let ia: HashSet<_> = pairs.iter().map(|x| x.a_index).collect();
            let ib: HashSet<_> = pairs.iter().map(|x| x.b_index).collect();
            assert_eq!(ia.len(), pairs.len());
            assert_eq!(ib.len(), pairs.len());
            for x in &pairs {
                let d = x.t_b as i64 - x.t_a as i64 - p.offset_ps;
                assert!(2 * d.unsigned_abs() <= w);
            }
            assert!(pairs.len() >= last, "window {w}");
            last = pairs.len();
        }
    }

    #[test]
    fn ideal_state_correlates() {
        let p = LinkParams {
            pair_rate: 20_000.0,
            singles_rate_a: 20_000.0,
            singles_rate_b: 20_000.0,
            jitter_ps: 150.0,
            duration_s: 1.0,
            ..Default::default()
        };
        let st = ideal_hyper_state::<f64>();
        let c = counts_by_setting(&st, &p, &MeasurementSetting::hv(), 2_000).unwrap();
        let e = correlation_from_counts(&c).unwrap();
        assert!(c.total() > 19_000);
        assert!((e - 1.0).abs() <= 5.0 * correlation_sigma(&c).unwrap().max(1.0 / c.total() as f64));
        for phi in [0.0, 1.0, 2.5] {
            let s = MeasurementSetting::alice_only(phi);
            let c = counts_by_setting(&st, &p, &s, 2_000).unwrap();
            let e = correlation_from_counts(&c).unwrap();
            assert!(expected_correlation(&st, &s).unwrap().abs() < 1e-12);
            assert!(e.abs() < 5.0 * correlation_sigma(&c).unwrap(), "phi {phi}: {e}");
        }
    }

    #[test]
    fn accidental_floor_limits_hv_visibility() {
        // Field-trial rates: the accidental floor alone pulls V_hv below 1.
        let p = LinkParams {
            drift_ppm: 0.0,
            duration_s: 1.0,
            seed: 11,
            ..LinkParams::field_trial()
        };
        let c = counts_by_setting(&ideal_hyper_state::<f64>(), &p, &MeasurementSetting::hv(), 2_000).unwrap();
        let e = correlation_from_counts(&c).unwrap();
        let acc = p.expected_accidental_rate(2_000);
        let coinc = p.expected_coincidence_rate();
        let expect = coinc / (coinc + acc);
        let sigma = correlation_sigma(&c).unwrap();
        assert!((e - expect).abs() < 5.0 * sigma + 2e-3, "E {e} vs {expect}");
        assert!(e < 0.999 && e > 0.99);
    }
}
