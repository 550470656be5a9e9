//! Post-processing of force, action and reward records: windowed statistics,
//! aerodynamic summaries and deltas against a baseline, Welch spectra.

mod io;
mod spectrum;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{
    read_actions_csv, read_forces_csv, read_reward_curve_csv, read_series_csv, write_actions_csv, write_forces_csv,
    write_psd_csv, write_reward_curve_csv, write_series_csv, ActionSample, RewardCurveRow,
};
pub use spectrum::{compute_psd, dominant_strouhal, resample_uniform, welch_defaults, Psd, SpectralPeak};

use crate::reward::ForceSample;
use crate::Real;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("division by a zero baseline value ({0})")]
    ZeroBaseline(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn input(msg: impl Into<String>) -> AnalysisError {
    AnalysisError::Input(msg.into())
}

/// Samples with strictly increasing timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries<T> {
    t: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> TimeSeries<T> {
    pub fn new(t: Vec<T>, values: Vec<T>) -> Result<Self, AnalysisError> {
        if t.len() != values.len() {
            return Err(input(format!("{} timestamps for {} values", t.len(), values.len())));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(input("timestamps must be strictly increasing"));
        }
        Ok(Self { t, values })
    }

    pub fn from_fn(t: Vec<T>, f: impl Fn(T) -> T) -> Result<Self, AnalysisError> {
        let values = t.iter().map(|&x| f(x)).collect();
        Self::new(t, values)
    }

    pub fn t(&self) -> &[T] {
        &self.t
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn start(&self) -> Option<T> {
        self.t.first().copied()
    }

    pub fn end(&self) -> Option<T> {
        self.t.last().copied()
    }

    pub fn map_values(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            t: self.t.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn shift_time(&self, dt: T) -> Self {
        Self {
            t: self.t.iter().map(|&x| x + dt).collect(),
            values: self.values.clone(),
        }
    }

    /// Linear interpolation inside the sampled range.
    pub fn interpolate(&self, at: T) -> Option<T> {
        let k = self.t.partition_point(|&x| x < at);
        if k < self.t.len() && self.t[k] == at {
            return Some(self.values[k]);
        }
        if k == 0 || k == self.t.len() {
            return None;
        }
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let w = (at - t0) / (t1 - t0);
        Some(self.values[k - 1] * (T::one() - w) + self.values[k] * w)
    }

    /// Samples inside `[t_start, t_end]`, with interpolated endpoints added
    /// when they fall between samples.
    fn clip(&self, t_start: T, t_end: T) -> Result<(Vec<T>, Vec<T>), AnalysisError> {
        let (first, last) = match (self.start(), self.end()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(input("empty series")),
        };
        if !(t_end > t_start) || t_start < first || t_end > last {
            return Err(input(format!(
                "window [{}, {}] outside series range [{}, {}]",
                t_start.as_f64(),
                t_end.as_f64(),
                first.as_f64(),
                last.as_f64()
            )));
        }
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        ts.push(t_start);
        vs.push(self.interpolate(t_start).expect("inside range"));
        for (&t, &v) in self.t.iter().zip(&self.values) {
            if t > t_start && t < t_end {
                ts.push(t);
                vs.push(v);
            }
        }
        ts.push(t_end);
        vs.push(self.interpolate(t_end).expect("inside range"));
        Ok((ts, vs))
    }
}

fn trapezoid<T: Real>(t: &[T], v: &[T]) -> T {
    t.windows(2)
        .zip(v.windows(2))
        .map(|(tw, vw)| (tw[1] - tw[0]) * (vw[0] + vw[1]) * T::lit(0.5))
        .sum()
}

/// Time-weighted mean and rms about that mean over `[t_start, t_end]`.
pub fn window_stats<T: Real>(series: &TimeSeries<T>, t_start: T, t_end: T) -> Result<(T, T), AnalysisError> {
    let (ts, vs) = series.clip(t_start, t_end)?;
    let span = t_end - t_start;
    let mean = trapezoid(&ts, &vs) / span;
    let sq: Vec<T> = vs.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let var = trapezoid(&ts, &sq) / span;
    Ok((mean, var.max(T::zero()).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeroSummary<T> {
    pub c_l_mean: T,
    pub c_d_mean: T,
    pub c_l_rms: T,
    /// Aerodynamic efficiency `C_l / C_d`.
    pub efficiency: T,
}

impl<T: Real> AeroSummary<T> {
    pub fn from_means(c_l_mean: T, c_d_mean: T, c_l_rms: T) -> Result<Self, AnalysisError> {
        if c_d_mean == T::zero() {
            return Err(AnalysisError::ZeroBaseline("mean drag"));
        }
        Ok(Self {
            c_l_mean,
            c_d_mean,
            c_l_rms,
            efficiency: c_l_mean / c_d_mean,
        })
    }
}

pub fn aero_summary<T: Real>(
    lift: &TimeSeries<T>,
    drag: &TimeSeries<T>,
    t_start: T,
    t_end: T,
) -> Result<AeroSummary<T>, AnalysisError> {
    if lift.t() != drag.t() {
        return Err(input("lift and drag timestamps are not aligned"));
    }
    let (c_l_mean, c_l_rms) = window_stats(lift, t_start, t_end)?;
    let (c_d_mean, _) = window_stats(drag, t_start, t_end)?;
    AeroSummary::from_means(c_l_mean, c_d_mean, c_l_rms)
}

/// Percentage changes `100 (controlled - baseline) / baseline`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deltas<T> {
    pub c_l: T,
    pub c_d: T,
    pub c_l_rms: T,
    pub efficiency: T,
}

pub fn deltas<T: Real>(controlled: &AeroSummary<T>, baseline: &AeroSummary<T>) -> Result<Deltas<T>, AnalysisError> {
    let pct = |c: T, b: T, name: &'static str| {
        if b == T::zero() {
            Err(AnalysisError::ZeroBaseline(name))
        } else {
            Ok(T::lit(100.0) * (c - b) / b)
        }
    };
    Ok(Deltas {
        c_l: pct(controlled.c_l_mean, baseline.c_l_mean, "C_l")?,
        c_d: pct(controlled.c_d_mean, baseline.c_d_mean, "C_d")?,
        c_l_rms: pct(controlled.c_l_rms, baseline.c_l_rms, "C_l rms")?,
        efficiency: pct(controlled.efficiency, baseline.efficiency, "E")?,
    })
}

fn split_forces(forces: &[ForceSample<f64>]) -> Result<(TimeSeries<f64>, TimeSeries<f64>), AnalysisError> {
    let t: Vec<f64> = forces.iter().map(|s| s.t).collect();
    Ok((
        TimeSeries::new(t.clone(), forces.iter().map(|s| s.c_l).collect())?,
        TimeSeries::new(t, forces.iter().map(|s| s.c_d).collect())?,
    ))
}

/// What `afc analyze` reports for one force record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceAnalysis {
    pub t_start: f64,
    pub t_end: f64,
    pub summary: AeroSummary<f64>,
    /// Baseline statistics over its final stretch of the same length.
    pub baseline: Option<AeroSummary<f64>>,
    pub deltas: Option<Deltas<f64>>,
    /// Dominant lift frequency, zero bin excluded.
    pub lift_peak: Option<SpectralPeak<f64>>,
    #[serde(skip)]
    pub lift_psd: Option<Psd<f64>>,
}

/// Summary after `transient_cut`, optional deltas against `baseline`, and
/// the lift spectrum of the analysed window (skipped when it holds fewer
/// than 18 samples).
pub fn analyze_forces(
    forces: &[ForceSample<f64>],
    baseline: Option<&[ForceSample<f64>]>,
    transient_cut: f64,
) -> Result<ForceAnalysis, AnalysisError> {
    let (lift, drag) = split_forces(forces)?;
    let t_end = lift.end().ok_or_else(|| input("empty force record"))?;
    if transient_cut >= t_end {
        return Err(input(format!(
            "transient cut {transient_cut} is past the end of the record ({t_end})"
        )));
    }
    let t_start = transient_cut.max(lift.start().unwrap_or(0.0));
    let summary = aero_summary(&lift, &drag, t_start, t_end)?;
    let base = match baseline {
        Some(b) => {
            let (bl, bd) = split_forces(b)?;
            let be = bl.end().ok_or_else(|| input("empty baseline record"))?;
            let bs = be - (t_end - t_start);
            if bs < bl.start().unwrap_or(be) {
                return Err(input("baseline record is shorter than the analysed window"));
            }
            Some(aero_summary(&bl, &bd, bs, be)?)
        }
        None => None,
    };
    let deltas = base.as_ref().map(|b| deltas(&summary, b)).transpose()?;
    let (ts, vs) = lift.clip(t_start, t_end)?;
    let uniform = resample_uniform(&TimeSeries::new(ts, vs)?)?;
    let lift_psd = if uniform.len() >= 18 {
        let (len, overlap) = welch_defaults(uniform.len());
        Some(compute_psd(&uniform, len, overlap)?)
    } else {
        None
    };
    let lift_peak = lift_psd.as_ref().and_then(|p| dominant_strouhal(p, true));
    Ok(ForceAnalysis {
        t_start,
        t_end,
        summary,
        baseline: base,
        deltas,
        lift_peak,
        lift_psd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn uniform(n: usize, t_end: f64) -> Vec<f64> {
        (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
    }

    #[test]
    fn constant_series_stats() {
        let s = TimeSeries::from_fn(uniform(100, 10.0), |_| 0.7642).unwrap();
        let (m, r) = window_stats(&s, 0.0, 10.0).unwrap();
        assert!((m - 0.7642).abs() < 1e-15);
        assert!(r < 1e-12);
    }

    #[test]
    fn sine_over_integer_periods() {
        let s = TimeSeries::from_fn(uniform(4000, 4.0), |t| (TAU * t).sin()).unwrap();
        let (m, r) = window_stats(&s, 1.0, 3.0).unwrap();
        assert!(m.abs() < 1e-6);
        assert!((r - 0.5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn irregular_sampling_agrees_with_uniform() {
        let f = |t: f64| (TAU * 0.7 * t).sin() + 0.3;
        let reg = TimeSeries::from_fn(uniform(20000, 20.0), f).unwrap();
        let mut t = vec![0.0];
        let mut k = 0u64;
        while *t.last().unwrap() < 20.0 {
            k += 1;
            let jitter = ((k * 7919) % 13) as f64 / 13.0;
            t.push((t.last().unwrap() + 0.0005 + 0.001 * jitter).min(20.0));
        }
        let irr = TimeSeries::from_fn(t, f).unwrap();
        let a = window_stats(&reg, 2.0, 17.0).unwrap();
        let b = window_stats(&irr, 2.0, 17.0).unwrap();
        assert!((a.0 - b.0).abs() < 1e-4 && (a.1 - b.1).abs() < 1e-4, "{a:?} {b:?}");
    }

    #[test]
    fn empty_window_is_error() {
        let s = TimeSeries::from_fn(uniform(10, 1.0), |t| t).unwrap();
        assert!(window_stats(&s, 0.5, 0.5).is_err());
        assert!(window_stats(&s, 0.5, 2.0).is_err());
    }

    #[test]
    fn rejects_non_increasing_time() {
        assert!(TimeSeries::new(vec![0.0, 1.0, 1.0], vec![0.0; 3]).is_err());
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![0.0; 3]).is_err());
    }

    #[test]
    fn efficiency_of_constant_records() {
        let t = uniform(50, 5.0);
        let lift = TimeSeries::from_fn(t.clone(), |_| 0.7642).unwrap();
        let drag = TimeSeries::from_fn(t.clone(), |_| 0.2095).unwrap();
        let s = aero_summary(&lift, &drag, 0.0, 5.0).unwrap();
        assert_eq!((s.efficiency * 1000.0).round() / 1000.0, 3.648);
        let lift = TimeSeries::from_fn(t.clone(), |_| 1.3685).unwrap();
        let drag = TimeSeries::from_fn(t.clone(), |_| 0.0739).unwrap();
        let s = aero_summary(&lift, &drag, 0.0, 5.0).unwrap();
        assert_eq!((s.efficiency * 100.0).round() / 100.0, 18.52);
        let lift = TimeSeries::from_fn(t.clone(), |_| 0.0).unwrap();
        let s = aero_summary(&lift, &drag, 0.0, 5.0).unwrap();
        assert_eq!(s.efficiency, 0.0);
    }

    #[test]
    fn misaligned_series_rejected() {
        let lift = TimeSeries::from_fn(uniform(10, 1.0), |_| 1.0).unwrap();
        let drag = TimeSeries::from_fn(uniform(11, 1.0), |_| 1.0).unwrap();
        assert!(aero_summary(&lift, &drag, 0.0, 1.0).is_err());
    }

    #[test]
    fn deltas_of_identical_and_doubled_summaries() {
        let t = uniform(100, 10.0);
        let lift = TimeSeries::from_fn(t.clone(), |x| 0.8 + 0.1 * (TAU * x).sin()).unwrap();
        let drag = TimeSeries::from_fn(t.clone(), |x| 0.3 + 0.01 * (TAU * x).cos()).unwrap();
        let base = aero_summary(&lift, &drag, 0.0, 10.0).unwrap();
        let d = deltas(&base, &base).unwrap();
        assert_eq!((d.c_l, d.c_d, d.c_l_rms, d.efficiency), (0.0, 0.0, 0.0, 0.0));
        let twice = aero_summary(&lift.map_values(|v| 2.0 * v), &drag.map_values(|v| 2.0 * v), 0.0, 10.0).unwrap();
        let d = deltas(&twice, &base).unwrap();
        for x in [d.c_l, d.c_d, d.c_l_rms] {
            assert!((x - 100.0).abs() < 1e-9, "{d:?}");
        }
        assert!(d.efficiency.abs() < 1e-9);
    }

    #[test]
    fn zero_baseline_is_error() {
        let b = AeroSummary {
            c_l_mean: 0.0,
            c_d_mean: 1.0,
            c_l_rms: 0.1,
            efficiency: 0.0,
        };
        let c = AeroSummary {
            c_l_mean: 1.0,
            c_d_mean: 1.0,
            c_l_rms: 0.1,
            efficiency: 1.0,
        };
        assert!(matches!(deltas(&c, &b), Err(AnalysisError::ZeroBaseline(_))));
    }

    proptest! {
        #[test]
        fn summary_efficiency_consistent(cl in -3.0f64..3.0, cd in 0.01f64..3.0, amp in 0.0f64..0.5) {
            let t = uniform(200, 10.0);
            let lift = TimeSeries::from_fn(t.clone(), |x| cl + amp * (TAU * x).sin()).unwrap();
            let drag = TimeSeries::from_fn(t, |x| cd + amp * 0.1 * (TAU * 2.0 * x).cos()).unwrap();
            let s = aero_summary(&lift, &drag, 1.0, 9.0).unwrap();
            prop_assert!((s.efficiency * s.c_d_mean - s.c_l_mean).abs() <= 1e-12);
        }

        #[test]
        fn stats_scale_and_shift(scale in -5.0f64..5.0, shift in -100.0f64..100.0) {
            let t = uniform(300, 6.0);
            let s = TimeSeries::from_fn(t, |x| 0.2 + (TAU * 1.3 * x).sin() + 0.1 * x).unwrap();
            let (m, r) = window_stats(&s, 0.5, 5.5).unwrap();
            let (ms, rs) = window_stats(&s.map_values(|v| scale * v), 0.5, 5.5).unwrap();
            prop_assert!((ms - scale * m).abs() < 1e-9);
            prop_assert!((rs - scale.abs() * r).abs() < 1e-9);
            let (mt, rt) = window_stats(&s.shift_time(shift), 0.5 + shift, 5.5 + shift).unwrap();
            prop_assert!((mt - m).abs() < 1e-9 && (rt - r).abs() < 1e-9);
        }
    }
}
