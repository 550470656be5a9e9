//! Local/global reward shaping and baseline statistics.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("invalid reward configuration: {0}")]
    Config(String),
    #[error("force record spans {span} time units, shorter than the window {window}")]
    WindowTooLong { span: f64, window: f64 },
    #[error("baseline stats file: {0}")]
    Stats(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One sample of the force coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceSample<T> {
    pub t: T,
    pub c_l: T,
    pub c_d: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig<T> {
    /// Weight of the lift-fluctuation penalty.
    pub alpha: T,
    /// Weight of the lift-increase term.
    pub beta: T,
    /// Local/global blend; 1 is purely local.
    pub gamma: T,
    #[serde(rename = "C_d_baseline")]
    pub c_d_baseline: T,
    #[serde(rename = "C_l_baseline")]
    pub c_l_baseline: T,
}

impl<T: Real> Default for RewardConfig<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(0.3),
            beta: T::lit(0.5),
            gamma: T::lit(0.8),
            c_d_baseline: T::zero(),
            c_l_baseline: T::zero(),
        }
    }
}

impl<T: Real> RewardConfig<T> {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.alpha >= T::zero() && self.beta >= T::zero()) {
            return Err(RewardError::Config("alpha and beta must be non-negative".into()));
        }
        if !(self.gamma >= T::zero() && self.gamma <= T::one()) {
            return Err(RewardError::Config("gamma must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn with_baseline(mut self, stats: &BaselineStats<T>) -> Self {
        self.c_d_baseline = stats.c_d;
        self.c_l_baseline = stats.c_l;
        self
    }
}

/// `(C_d,b - C_d) - alpha |C_l - C_l,avg| + beta (C_l - C_l,b)`.
pub fn local_reward<T: Real>(c_d: T, c_l: T, c_l_avg: T, cfg: &RewardConfig<T>) -> T {
    (cfg.c_d_baseline - c_d) - cfg.alpha * (c_l - c_l_avg).abs() + cfg.beta * (c_l - cfg.c_l_baseline)
}

/// Blend of pseudo-environment `i`'s own reward with the mean over all of them.
pub fn global_reward<T: Real>(local: &[T], i: usize, gamma: T) -> T {
    let n = T::from_usize_lossy(local.len());
    let sum: T = local.iter().copied().sum();
    gamma * local[i] + (T::one() - gamma) / n * sum
}

pub fn global_rewards<T: Real>(local: &[T], gamma: T) -> Vec<T> {
    (0..local.len()).map(|i| global_reward(local, i, gamma)).collect()
}

/// Running mean of the lift coefficient since the episode start.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningLiftMean<T> {
    pub count: u64,
    pub mean: T,
}

impl<T: Real> RunningLiftMean<T> {
    pub fn new() -> Self {
        Self {
            count: 0,
            mean: T::zero(),
        }
    }

    pub fn update(self, sample: T) -> Self {
        let count = self.count + 1;
        let mean = self.mean + (sample - self.mean) / T::from_usize_lossy(count as usize);
        Self { count, mean }
    }
}

/// Mean drag, mean lift and lift rms over the final `window` of a record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats<T> {
    #[serde(rename = "C_d_baseline")]
    pub c_d: T,
    #[serde(rename = "C_l_baseline")]
    pub c_l: T,
    #[serde(rename = "C_l_rms")]
    pub c_l_rms: T,
    pub window: T,
}

pub fn estimate_baseline<T: Real>(record: &[ForceSample<T>], window: T) -> Result<BaselineStats<T>, RewardError> {
    let (first, last) = match (record.first(), record.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => {
            return Err(RewardError::WindowTooLong {
                span: 0.0,
                window: window.as_f64(),
            })
        }
    };
    if last - first < window {
        return Err(RewardError::WindowTooLong {
            span: (last - first).as_f64(),
            window: window.as_f64(),
        });
    }
    let start = last - window;
    let sel: Vec<&ForceSample<T>> = record.iter().filter(|s| s.t >= start).collect();
    let n = T::from_usize_lossy(sel.len());
    let c_d = sel.iter().map(|s| s.c_d).sum::<T>() / n;
    let c_l = sel.iter().map(|s| s.c_l).sum::<T>() / n;
    let var = sel.iter().map(|s| (s.c_l - c_l) * (s.c_l - c_l)).sum::<T>() / n;
    Ok(BaselineStats {
        c_d,
        c_l,
        c_l_rms: var.sqrt(),
        window,
    })
}

impl BaselineStats<f64> {
    pub fn write(&self, path: &Path) -> Result<(), RewardError> {
        let text = toml::to_string(self).map_err(|e| RewardError::Stats(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, RewardError> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| RewardError::Stats(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table_cfg() -> RewardConfig<f64> {
        RewardConfig {
            c_d_baseline: 0.2095,
            c_l_baseline: 0.7642,
            ..Default::default()
        }
    }

    #[test]
    fn baseline_inputs_give_zero_reward() {
        let cfg = table_cfg();
        assert_eq!(local_reward(0.2095, 0.7642, 0.7642, &cfg), 0.0);
    }

    #[test]
    fn controlled_fixture() {
        let r = local_reward(0.0739, 1.3685, 1.3685, &table_cfg());
        assert!((r - 0.43775).abs() < 1e-12, "{r}");
    }

    #[test]
    fn pure_drag_term() {
        let cfg = RewardConfig {
            alpha: 0.0,
            beta: 0.0,
            c_d_baseline: 0.4,
            ..Default::default()
        };
        assert!((local_reward(1.4f64, 0.3, -2.0, &cfg) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn global_blend_limits() {
        let r = [1.0f64, 2.0, 3.0];
        assert_eq!(global_rewards(&r, 1.0), r.to_vec());
        assert!(global_rewards(&r, 0.0).iter().all(|&x| (x - 2.0).abs() < 1e-15));
        assert!((global_reward(&r, 0, 0.8) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn running_mean() {
        let m = RunningLiftMean::new().update(1.0);
        assert_eq!(m.mean, 1.0);
        let m = [1.0, 2.0, 3.0].iter().fold(RunningLiftMean::new(), |m, &x| m.update(x));
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.count, 3);
        let mut m = RunningLiftMean::new();
        for _ in 0..1_000_000 {
            m = m.update(0.7642);
        }
        assert!((m.mean - 0.7642_f64).abs() <= 1e-12);
    }

    #[test]
    fn constant_record_baseline() {
        let rec: Vec<_> = (0..200)
            .map(|k| ForceSample {
                t: k as f64 * 0.1,
                c_l: 0.5,
                c_d: 0.2,
            })
            .collect();
        let s = estimate_baseline(&rec, 10.0).unwrap();
        assert!((s.c_d - 0.2).abs() < 1e-15 && (s.c_l - 0.5).abs() < 1e-15);
        assert!(s.c_l_rms < 1e-15);
    }

    #[test]
    fn sinusoid_baseline() {
        // 40 samples per period, window of exactly 5 periods (201 samples incl. both ends
        // would double count one phase, so the window starts one sample in).
        let per = 40;
        let a = 0.3;
        let dt = 1.0 / per as f64;
        let rec: Vec<_> = (0..=10 * per)
            .map(|k| {
                let t = k as f64 * dt;
                ForceSample {
                    t,
                    c_l: a * (std::f64::consts::TAU * t).sin(),
                    c_d: 1.0,
                }
            })
            .collect();
        let s = estimate_baseline(&rec, 5.0 - dt * 0.5).unwrap();
        assert!(s.c_l.abs() < 1e-12, "{}", s.c_l);
        assert!((s.c_l_rms - a / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn window_longer_than_record_is_error() {
        let rec = vec![
            ForceSample {
                t: 0.0,
                c_l: 0.0,
                c_d: 0.0,
            },
            ForceSample {
                t: 1.0,
                c_l: 0.0,
                c_d: 0.0,
            },
        ];
        assert!(matches!(
            estimate_baseline(&rec, 2.0),
            Err(RewardError::WindowTooLong { .. })
        ));
    }

    #[test]
    fn sidecar_roundtrip_is_bitwise() {
        let rec: Vec<_> = (0..500)
            .map(|k| {
                let t = k as f64 * 0.013;
                ForceSample {
                    t,
                    c_l: 0.7642 + 0.03 * (t * 3.1).sin(),
                    c_d: 0.2095 + 0.01 * (t * 6.2).cos(),
                }
            })
            .collect();
        let s = estimate_baseline(&rec, 4.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("baseline_stats.toml");
        s.write(&p).unwrap();
        let back = BaselineStats::read(&p).unwrap();
        assert_eq!(back, s);
        let text = std::fs::read_to_string(&p).unwrap();
        for key in ["C_d_baseline", "C_l_baseline", "C_l_rms", "window"] {
            assert!(text.contains(key), "{text}");
        }
    }

    proptest! {
        #[test]
        fn blend_preserves_mean(r in proptest::collection::vec(-10.0f64..10.0, 1..8), gamma in 0.0f64..=1.0) {
            let g = global_rewards(&r, gamma);
            let m_r: f64 = r.iter().sum::<f64>() / r.len() as f64;
            let m_g: f64 = g.iter().sum::<f64>() / g.len() as f64;
            prop_assert!((m_r - m_g).abs() < 1e-12);
        }

        #[test]
        fn blend_is_permutation_equivariant(r in proptest::collection::vec(-10.0f64..10.0, 2..8), gamma in 0.0f64..=1.0, shift in 0usize..8) {
            let n = r.len();
            let perm: Vec<f64> = (0..n).map(|i| r[(i + shift) % n]).collect();
            let g = global_rewards(&r, gamma);
            let gp = global_rewards(&perm, gamma);
            for i in 0..n {
                prop_assert!((gp[i] - g[(i + shift) % n]).abs() < 1e-12);
            }
        }

        #[test]
        fn local_reward_scales_linearly(dd in -1.0f64..1.0, dl in -1.0f64..1.0, da in -1.0f64..1.0, s in 0.0f64..5.0) {
            let cfg = RewardConfig { c_d_baseline: 0.3, c_l_baseline: 0.6, ..RewardConfig::<f64>::default() };
            let eval = |k: f64| {
                let c_d = cfg.c_d_baseline + k * dd;
                let c_l = cfg.c_l_baseline + k * dl;
                let c_avg = c_l - k * da;
                local_reward(c_d, c_l, c_avg, &cfg)
            };
            prop_assert!((eval(s) - s * eval(1.0)).abs() < 1e-9);
        }
    }
}
