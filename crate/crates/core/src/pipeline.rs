//! Simulated measurement runs: a schedule of analyzer settings played through
//! the time-tag link, and the analysis that turns the tags back into
//! visibilities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::hyperstate::{ideal_hyper_state, HyperState, NoiseKind};
use crate::measure::{
    correlation_from_counts, correlation_sigma, fit_visibility, outcome_probabilities, CountRecord, FitOptions,
    MeasurementSetting, ScanCurve, ScanPoint, VisibilityFit,
};
use crate::scalar::Real;
use crate::tagstream::{
    coincidence_stats, estimate_model, match_pairs, simulate_with, tally, CoincidenceStats, DriftModel, DriftOptions,
    LinkParams, Streams, TimeTag, PS_PER_S,
};

pub const DEFAULT_WINDOW_PS: u64 = 2_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    Hv,
    Pol,
    Et,
    AliceOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub kind: ScanKind,
    pub setting: MeasurementSetting,
    /// Alice phase; `0` for `hv`.
    pub phi: f64,
    pub start_s: f64,
    pub duration_s: f64,
}

impl ScheduleEntry {
    pub fn start_ps(&self) -> u64 {
        (self.start_s * PS_PER_S as f64).round() as u64
    }

    pub fn end_ps(&self) -> u64 {
        ((self.start_s + self.duration_s) * PS_PER_S as f64).round() as u64
    }
}

/// Consecutive settings, each active for its slot of the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub entries: Vec<ScheduleEntry>,
}

impl Schedule {
    /// `hv` for `hv_s`, then equally spaced phase scans of `n_phi` points
    /// over `[0, 2π)` for pol, et and Alice-only transfer, `dwell_s` each.
    pub fn scans(hv_s: f64, n_phi: usize, dwell_s: f64, n_flat: usize) -> Self {
        let mut entries = vec![ScheduleEntry {
            kind: ScanKind::Hv,
            setting: MeasurementSetting::hv(),
            phi: 0.0,
            start_s: 0.0,
            duration_s: hv_s,
        }];
        let mut t = hv_s;
        let mut push = |kind, n: usize, make: fn(f64) -> MeasurementSetting| {
            for i in 0..n {
                let phi = 2.0 * PI * i as f64 / n as f64;
                entries.push(ScheduleEntry {
                    kind,
                    setting: make(phi),
                    phi,
                    start_s: t,
                    duration_s: dwell_s,
                });
                t += dwell_s;
            }
        };
        push(ScanKind::Pol, n_phi, MeasurementSetting::pol);
        push(ScanKind::Et, n_phi, MeasurementSetting::et);
        push(ScanKind::AliceOnly, n_flat, MeasurementSetting::alice_only);
        Self { entries }
    }

    /// Ten seconds: 3 s `hv`, 12-point pol and et scans and a 4-point
    /// Alice-only scan at 0.25 s per point.
    pub fn field_trial() -> Self {
        Self::scans(3.0, 12, 0.25, 4)
    }

    pub fn duration_s(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.start_s + e.duration_s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidInput("empty schedule".into()));
        }
        let mut t = 0.0;
        for e in &self.entries {
            e.setting.validate()?;
            if !(e.duration_s > 0.0) || (e.start_s - t).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "schedule entries must be contiguous with positive durations (entry at {} s)",
                    e.start_s
                )));
            }
            t = e.start_s + e.duration_s;
        }
        Ok(())
    }

    /// Entry active at `t`, if any.
    pub fn entry_at(&self, t: u64) -> Option<usize> {
        let k = self.entries.partition_point(|e| e.start_ps() <= t);
        (k > 0 && t < self.entries[k - 1].end_ps()).then(|| k - 1)
    }
}

/// Noise planted on the ideal hyperentangled state, applied in the order
/// Werner, polarization dephasing, energy-time dephasing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatePlant {
    pub werner: f64,
    pub dephase_pol: f64,
    pub dephase_et: f64,
}

impl StatePlant {
    pub fn ideal() -> Self {
        Self {
            werner: 0.0,
            dephase_pol: 0.0,
            dephase_et: 0.0,
        }
    }

    pub fn state(&self) -> Result<HyperState<f64>> {
        ideal_hyper_state::<f64>()
            .apply_noise(NoiseKind::Werner, self.werner)?
            .apply_noise(NoiseKind::DephasePol, self.dephase_pol)?
            .apply_noise(NoiseKind::DephaseEt, self.dephase_et)
    }

    /// Noise that, together with the accidental floor of `link` at
    /// `window_ps`, brings the measured visibilities to `(v_hv, v_phi, v_et)`.
    ///
    /// Accidentals scale every correlation by `1 − f` with `f` the accidental
    /// fraction; Werner noise scales all three by `1 − s`, polarization
    /// dephasing the two superposition visibilities and energy-time dephasing
    /// only `v_et`.
    pub fn calibrated(link: &LinkParams, window_ps: u64, (v_hv, v_phi, v_et): (f64, f64, f64)) -> Result<Self> {
        check_range("v_hv", v_hv, 0.0, 1.0, "[0, 1]")?;
        check_range("v_phi", v_phi, 0.0, v_hv, "[0, v_hv]")?;
        check_range("v_et", v_et, 0.0, v_phi, "[0, v_phi]")?;
        let f = accidental_fraction(link, window_ps);
        let werner = 1.0 - v_hv / (1.0 - f);
        if !(0.0..=1.0).contains(&werner) {
            return Err(Error::InvalidInput(format!(
                "accidental floor alone gives V_hv = {:.5}, below the target {v_hv}",
                1.0 - f
            )));
        }
        let dephase_pol = if v_hv > 0.0 { 1.0 - v_phi / v_hv } else { 0.0 };
        let dephase_et = if v_phi > 0.0 { 1.0 - v_et / v_phi } else { 0.0 };
        Ok(Self {
            werner,
            dephase_pol,
            dephase_et,
        })
    }

    /// Field-trial visibilities 0.9933, 0.985 and 0.956.
    pub fn field_trial(link: &LinkParams, window_ps: u64) -> Result<Self> {
        Self::calibrated(link, window_ps, (0.9933, 0.985, 0.956))
    }
}

/// Expected share of uncorrelated pairs among matched coincidences in a
/// `window_ps` window, so that a perfectly correlated setting measures
/// `E = 1 − f`.
///
/// Under single-use matching, Bob tags that belong to a detected pair are
/// normally claimed by their partner, so accidentals form between the
/// unpaired tags only: `(R_a − C)(R_b − C)·w`. A true partner is also lost to
/// an unpaired Alice tag processed just before it at rate `C·(R_a − C)·w/2`,
/// which turns a correlated coincidence into an uncorrelated one.
pub fn accidental_fraction(link: &LinkParams, window_ps: u64) -> f64 {
    let c = link.expected_coincidence_rate();
    let w = window_ps as f64 * 1e-12;
    let free_a = (link.alice_rate() - c).max(0.0);
    let free_b = (link.bob_rate() - c).max(0.0);
    let acc = free_a * free_b * w;
    let stolen = (c * free_a * w / 2.0).min(c);
    if c + acc > 0.0 {
        1.0 - (c - stolen) / (c + acc)
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub link: LinkParams,
    pub plant: StatePlant,
    pub schedule: Schedule,
}

impl SimulationConfig {
    /// Field-trial link, calibrated plant and the 10 s schedule.
    pub fn field_trial(seed: u64) -> Result<Self> {
        let link = LinkParams {
            seed,
            ..LinkParams::field_trial()
        };
        let schedule = Schedule::field_trial();
        let link = LinkParams {
            duration_s: schedule.duration_s(),
            ..link
        };
        Ok(Self {
            plant: StatePlant::field_trial(&link, DEFAULT_WINDOW_PS)?,
            link,
            schedule,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.schedule.validate()?;
        if self.schedule.duration_s() > self.link.duration_s + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "schedule runs {} s but the link only {} s",
                self.schedule.duration_s(),
                self.link.duration_s
            )));
        }
        self.plant.state().map(|_| ())
    }
}

/// Tag streams for the whole run; pairs emitted during an entry follow that
/// entry's outcome distribution. Pairs outside every entry are uncorrelated.
pub fn simulate_run(cfg: &SimulationConfig) -> Result<Streams> {
    cfg.validate()?;
    let state = cfg.plant.state()?;
    let probs: Vec<[f64; 4]> = cfg
        .schedule
        .entries
        .iter()
        .map(|e| outcome_probabilities(&state, &e.setting).map(|p| p.map(|x| x.as_f64())))
        .collect::<Result<_>>()?;
    simulate_with(&cfg.link, |t| cfg.schedule.entry_at(t).map_or([0.25; 4], |k| probs[k]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeOptions {
    pub window_ps: u64,
    pub drift: DriftOptions,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            window_ps: DEFAULT_WINDOW_PS,
            drift: DriftOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingCounts {
    pub kind: ScanKind,
    pub phi: f64,
    pub start_s: f64,
    pub duration_s: f64,
    pub counts: CountRecord,
    pub e: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    /// Offset at the start of the run.
    pub offset_ps: i64,
    pub drift_ppm: f64,
    pub drift_segments: usize,
    pub max_drift_residual_ps: i64,
    pub coincidence_rate: f64,
    pub stats: CoincidenceStats,
}

/// Everything recovered from a run. `v_hv`, `v_phi` and `v_et` are the
/// certification inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityReport {
    pub v_hv: f64,
    pub v_hv_sigma: f64,
    pub v_phi: f64,
    pub v_phi_sigma: f64,
    pub v_et: f64,
    pub v_et_sigma: f64,
    pub pol_fit: Option<VisibilityFit>,
    pub et_fit: Option<VisibilityFit>,
    pub flat_fit: Option<VisibilityFit>,
    pub window_ps: u64,
    pub link: LinkSummary,
    pub settings: Vec<SettingCounts>,
    pub drift: DriftModel,
}

impl VisibilityReport {
    pub fn scan(&self, kind: ScanKind) -> ScanCurve {
        ScanCurve {
            points: self
                .settings
                .iter()
                .filter(|s| s.kind == kind && s.counts.total() > 0)
                .map(|s| ScanPoint {
                    phi: s.phi,
                    e: s.e,
                    sigma: s.sigma,
                })
                .collect(),
        }
    }
}

fn fit_scan(points: &ScanCurve) -> Result<Option<VisibilityFit>> {
    if points.points.is_empty() {
        return Ok(None);
    }
    fit_visibility(points, FitOptions::default()).map(Some)
}

/// Drift model, pairing and per-setting tallies, then the visibility fits.
pub fn analyze_run(
    a: &[TimeTag],
    b: &[TimeTag],
    schedule: &Schedule,
    opts: &AnalyzeOptions,
) -> Result<VisibilityReport> {
    schedule.validate()?;
    if a.is_empty() {
        return Err(Error::EmptyStream("alice"));
    }
    if b.is_empty() {
        return Err(Error::EmptyStream("bob"));
    }
    let model = estimate_model(a, b, &opts.drift)?;
    let pairs = match_pairs(a, b, &model, opts.window_ps);
    let mut groups = vec![Vec::new(); schedule.entries.len()];
    for p in pairs {
        if let Some(k) = schedule.entry_at(p.t_a) {
            groups[k].push(p);
        }
    }
    let settings: Vec<SettingCounts> = schedule
        .entries
        .iter()
        .zip(&groups)
        .map(|(e, g)| {
            let counts = tally(g, e.setting, e.duration_s);
            let (ev, sigma) = if counts.total() > 0 {
                (correlation_from_counts(&counts)?, correlation_sigma(&counts)?)
            } else {
                (0.0, 0.0)
            };
            Ok(SettingCounts {
                kind: e.kind,
                phi: e.phi,
                start_s: e.start_s,
                duration_s: e.duration_s,
                counts,
                e: ev,
                sigma,
            })
        })
        .collect::<Result<_>>()?;

    // The hv entries are pooled into one correlation.
    let hv = settings.iter().filter(|s| s.kind == ScanKind::Hv).fold(
        CountRecord {
            n11: 0,
            n00: 0,
            n10: 0,
            n01: 0,
            duration: 0.0,
            setting: MeasurementSetting::hv(),
        },
        |mut acc, s| {
            acc.n00 += s.counts.n00;
            acc.n01 += s.counts.n01;
            acc.n10 += s.counts.n10;
            acc.n11 += s.counts.n11;
            acc.duration += s.duration_s;
            acc
        },
    );
    let (v_hv, v_hv_sigma) = if hv.total() > 0 {
        (correlation_from_counts(&hv)?, correlation_sigma(&hv)?)
    } else {
        (0.0, 0.0)
    };

    let mut report = VisibilityReport {
        v_hv,
        v_hv_sigma,
        v_phi: 0.0,
        v_phi_sigma: 0.0,
        v_et: 0.0,
        v_et_sigma: 0.0,
        pol_fit: None,
        et_fit: None,
        flat_fit: None,
        window_ps: opts.window_ps,
        link: LinkSummary {
            offset_ps: model.initial_offset_ps(),
            drift_ppm: model.segments[0].slope_ppt as f64 / 1e6,
            drift_segments: model.segments.len(),
            max_drift_residual_ps: model.max_abs_residual_ps(),
            coincidence_rate: 0.0,
            stats: coincidence_stats(a, b, &model, opts.window_ps),
        },
        settings,
        drift: model,
    };
    let total_s = a.last().map_or(0, |t| t.timestamp + 1) as f64 / PS_PER_S as f64;
    report.link.coincidence_rate = report.link.stats.n_coinc as f64 / total_s;
    report.pol_fit = fit_scan(&report.scan(ScanKind::Pol))?;
    report.et_fit = fit_scan(&report.scan(ScanKind::Et))?;
    report.flat_fit = fit_scan(&report.scan(ScanKind::AliceOnly))?;
    if let Some(f) = report.pol_fit {
        (report.v_phi, report.v_phi_sigma) = (f.v_fit, f.stderr);
    }
    if let Some(f) = report.et_fit {
        (report.v_et, report.v_et_sigma) = (f.v_fit, f.stderr);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::expected_correlation;

    #[test]
    fn schedule_layout() {
        let s = Schedule::field_trial();
        s.validate().unwrap();
        assert!((s.duration_s() - 10.0).abs() < 1e-12);
        assert_eq!(s.entries.len(), 1 + 12 + 12 + 4);
        assert_eq!(s.entry_at(0), Some(0));
        assert_eq!(s.entry_at(3 * PS_PER_S), Some(1));
        assert_eq!(s.entry_at(10 * PS_PER_S), None);
    }

    #[test]
    fn plant_visibilities_follow_the_calibration() {
        let link = LinkParams::field_trial();
        let plant = StatePlant::field_trial(&link, DEFAULT_WINDOW_PS).unwrap();
        let st = plant.state().unwrap();
        let keep = 1.0 - accidental_fraction(&link, DEFAULT_WINDOW_PS);
        let e_hv = expected_correlation(&st, &MeasurementSetting::hv()).unwrap();
        assert!((e_hv * keep - 0.9933).abs() < 1e-9);
        let peak = |make: fn(f64) -> MeasurementSetting| {
            (0..720)
                .map(|i| expected_correlation(&st, &make(i as f64 * PI / 360.0)).unwrap())
                .fold(0.0, f64::max)
        };
        assert!((peak(MeasurementSetting::pol) * keep - 0.985).abs() < 1e-5);
        assert!((peak(MeasurementSetting::et) * keep - 0.956).abs() < 1e-5);
        assert!(peak(MeasurementSetting::alice_only).abs() < 1e-12);
    }

    #[test]
    fn rejects_unreachable_targets() {
        let link = LinkParams::field_trial();
        assert!(StatePlant::calibrated(&link, 2_000_000, (0.9933, 0.985, 0.956)).is_err());
        assert!(StatePlant::calibrated(&link, 2_000, (0.9, 0.95, 0.5)).is_err());
    }

    /// Planted Werner noise comes back out of the full tag pipeline.
    #[test]
    fn recovers_planted_werner_visibility() {
        for v in [0.90, 0.95, 0.985] {
            let link = LinkParams {
                pair_rate: 40_000.0,
                singles_rate_a: 60_000.0,
                singles_rate_b: 60_000.0,
                background_b: 200.0,
                transmission: 0.5,
                jitter_ps: 150.0,
                drift_ppm: 0.05,
                offset_ps: 3_940_000,
                duration_s: 7.0,
                seed: 17,
                ..Default::default()
            };
            let cfg = SimulationConfig {
                plant: StatePlant {
                    werner: 1.0 - v,
                    ..StatePlant::ideal()
                },
                schedule: Schedule::scans(1.0, 12, 0.25, 0),
                link,
            };
            let (a, b) = simulate_run(&cfg).unwrap();
            let r = analyze_run(&a, &b, &cfg.schedule, &AnalyzeOptions::default()).unwrap();
            let expect = v * (1.0 - accidental_fraction(&cfg.link, DEFAULT_WINDOW_PS));
            assert!(
                (r.v_hv - expect).abs() < 3.0 * r.v_hv_sigma,
                "hv {} vs {expect}",
                r.v_hv
            );
            for (got, sigma) in [(r.v_phi, r.v_phi_sigma), (r.v_et, r.v_et_sigma)] {
                assert!(
                    (got - expect).abs() < 3.0 * sigma,
                    "plant {v}: {got} ± {sigma} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn ideal_plant_and_flat_scan() {
        let link = LinkParams {
            pair_rate: 20_000.0,
            singles_rate_a: 20_000.0,
            singles_rate_b: 20_000.0,
            jitter_ps: 100.0,
            duration_s: 3.0,
            seed: 4,
            ..Default::default()
        };
        let cfg = SimulationConfig {
            plant: StatePlant::ideal(),
            schedule: Schedule::scans(1.0, 0, 0.25, 8),
            link,
        };
        let (a, b) = simulate_run(&cfg).unwrap();
        let r = analyze_run(&a, &b, &cfg.schedule, &AnalyzeOptions::default()).unwrap();
        assert!(r.v_hv > 0.999, "{}", r.v_hv);
        let flat = r.flat_fit.unwrap();
        assert!(flat.v_fit < 3.0 * flat.stderr, "{flat:?}");
        assert!(r.pol_fit.is_none());
    }

    #[test]
    fn empty_streams_are_errors() {
        let s = Schedule::field_trial();
        assert!(matches!(
            analyze_run(&[], &[TimeTag::new(0, 1)], &s, &AnalyzeOptions::default()),
            Err(Error::EmptyStream("alice"))
        ));
    }
}
