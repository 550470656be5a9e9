use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{input, AnalysisError, TimeSeries};
use crate::Real;

/// One-sided power spectral density. Time is in convective units, so the
/// frequency axis is already a Strouhal number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psd<T> {
    pub strouhal: Vec<T>,
    pub power: Vec<T>,
    pub bin_width: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralPeak<T> {
    /// Peak location refined by a parabola through the log-power of the
    /// neighbouring bins.
    pub strouhal: T,
    pub bin_strouhal: T,
    pub bin: usize,
    pub power: T,
    /// Peak power over the median power of the searched bins.
    pub prominence: T,
}

/// Linear interpolation onto a uniform grid at the median sampling interval.
pub fn resample_uniform<T: Real>(series: &TimeSeries<T>) -> Result<TimeSeries<T>, AnalysisError> {
    if series.len() < 2 {
        return Err(input("need at least two samples to resample"));
    }
    let mut steps: Vec<T> = series.t().windows(2).map(|w| w[1] - w[0]).collect();
    steps.sort_by(|a, b| a.partial_cmp(b).expect("finite timestamps"));
    let dt = steps[steps.len() / 2];
    let (t0, t1) = (series.start().unwrap(), series.end().unwrap());
    let n = ((t1 - t0) / dt).floor().to_usize().unwrap_or(0);
    let t: Vec<T> = (0..=n)
        .map(|k| t0 + dt * T::from_usize_lossy(k))
        .filter(|&x| x <= t1)
        .collect();
    let values = t
        .iter()
        .map(|&x| series.interpolate(x).expect("inside range"))
        .collect();
    TimeSeries::new(t, values)
}

/// Segment length and overlap giving eight half-overlapping segments.
pub fn welch_defaults(n_samples: usize) -> (usize, usize) {
    let len = (2 * n_samples / 9).max(2);
    (len, len / 2)
}

/// Welch estimate with a periodic Hann window. Each segment's mean is kept out
/// of the window and credited to the zero bin, so a constant signal puts all of
/// its power there; the remaining bins integrate to the fluctuation variance.
pub fn compute_psd<T: Real>(
    series: &TimeSeries<T>,
    segment_length: usize,
    overlap: usize,
) -> Result<Psd<T>, AnalysisError> {
    let n = series.len();
    if segment_length < 2 || overlap >= segment_length {
        return Err(input(format!(
            "bad segment length {segment_length} / overlap {overlap}"
        )));
    }
    if n < segment_length {
        return Err(input(format!(
            "series of {n} samples is shorter than one segment ({segment_length})"
        )));
    }
    let t = series.t();
    let dt = (t[n - 1] - t[0]) / T::from_usize_lossy(n - 1);
    let tol = dt * T::lit(1e-6);
    if t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > tol) {
        return Err(input("compute_psd needs uniform sampling; resample first"));
    }
    let fs = T::one() / dt;
    let len_t = T::from_usize_lossy(segment_length);
    let df = fs / len_t;
    let window: Vec<T> = (0..segment_length)
        .map(|k| T::lit(0.5) * (T::one() - (T::TAU() * T::from_usize_lossy(k) / len_t).cos()))
        .collect();
    let w_sq: T = window.iter().map(|&w| w * w).sum();

    let n_bins = segment_length / 2 + 1;
    let mut power = vec![T::zero(); n_bins];
    let fft = FftPlanner::<T>::new().plan_fft_forward(segment_length);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); segment_length];
    let step = segment_length - overlap;
    let mut segments = 0usize;
    let mut start = 0;
    while start + segment_length <= n {
        let seg = &series.values()[start..start + segment_length];
        let mean = seg.iter().copied().sum::<T>() / len_t;
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((x - mean) * w, T::zero());
        }
        fft.process(&mut buf);
        power[0] += mean * mean / df;
        for (k, p) in power.iter_mut().enumerate().skip(1) {
            let one_sided = if 2 * k == segment_length { T::one() } else { T::lit(2.0) };
            *p += one_sided * buf[k].norm_sqr() / (fs * w_sq);
        }
        segments += 1;
        start += step;
    }
    let count = T::from_usize_lossy(segments);
    for p in &mut power {
        *p /= count;
    }
    let strouhal = (0..n_bins).map(|k| df * T::from_usize_lossy(k)).collect();
    Ok(Psd {
        strouhal,
        power,
        bin_width: df,
    })
}

pub fn dominant_strouhal<T: Real>(psd: &Psd<T>, exclude_dc: bool) -> Option<SpectralPeak<T>> {
    let first = usize::from(exclude_dc);
    if psd.power.len() <= first {
        return None;
    }
    let searched = &psd.power[first..];
    let (offset, &power) = searched
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite power"))?;
    let bin = first + offset;
    let mut sorted = searched.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite power"));
    let median = sorted[sorted.len() / 2];
    let prominence = if median > T::zero() {
        power / median
    } else {
        T::infinity()
    };

    let mut shift = T::zero();
    if bin > first && bin + 1 < psd.power.len() {
        let (a, b, c) = (psd.power[bin - 1], power, psd.power[bin + 1]);
        if a > T::zero() && b > T::zero() && c > T::zero() {
            let (a, b, c) = (a.ln(), b.ln(), c.ln());
            let denom = a - T::lit(2.0) * b + c;
            if denom < T::zero() {
                shift = (T::lit(0.5) * (a - c) / denom).max(-T::lit(0.5)).min(T::lit(0.5));
            }
        }
    }
    let bin_strouhal = psd.strouhal[bin];
    Some(SpectralPeak {
        strouhal: bin_strouhal + shift * psd.bin_width,
        bin_strouhal,
        bin,
        power,
        prominence,
    })
}
