//! Ensemble statistics of simulated transfer functions.
//!
//! The correlation of H across time and frequency lags is estimated as a
//! Monte-Carlo mean over independent realizations. Slicing the surface at
//! zero frequency lag gives the temporal autocorrelation, at zero time
//! lag the frequency correlation; the Doppler power spectral density is
//! the discrete Fourier transform of the tapered, hermitian-extended
//! autocorrelation. All reductions use a fixed pairwise order so results
//! do not depend on how work was scheduled.

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("expectation needs at least two realizations, got {got}")]
    TooFewRealizations { got: usize },
    #[error("realization grids disagree; statistics need one shared (time, frequency) grid")]
    MismatchedGrids,
    #[error("point {value} is not on the simulated grid")]
    PointOffGrid { value: f64 },
    #[error("lag grid must be uniformly spaced")]
    NonuniformLags,
    #[error("the zero lag is required and missing")]
    MissingZeroLag,
    #[error("zero power at the anchor; nothing to normalize by")]
    ZeroPowerAnchor,
}

/// One realization's transfer function sampled on a (time, frequency)
/// grid; `values[i][j]` belongs to `times[i]` and `freqs[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferGrid {
    pub times: Vec<f64>,
    pub freqs: Vec<f64>,
    pub values: Vec<Vec<Complex64>>,
}

/// Monte-Carlo correlation of H around one (time, frequency) anchor;
/// `values[i][j]` belongs to `time_lags[i]` and `freq_lags[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSurface {
    pub anchor_time: f64,
    pub anchor_freq: f64,
    pub time_lags: Vec<f64>,
    pub freq_lags: Vec<f64>,
    pub values: Vec<Vec<Complex64>>,
    pub realizations: usize,
}

/// Power density over Doppler bins at one anchor time.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerSpectrum {
    pub anchor_time: f64,
    /// Bin centers, Hz, ascending and symmetric about zero.
    pub freqs: Vec<f64>,
    /// Density per bin; bin sum times bin width recovers the zero-lag
    /// correlation.
    pub density: Vec<f64>,
}

/// Lag-domain window applied before the spectrum transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Taper {
    /// No weighting; exact for tones on bin centers.
    Flat,
    /// Raised cosine over the lag span; trades resolution for sidelobe
    /// suppression.
    #[default]
    RaisedCosine,
}

impl Taper {
    /// Weight at lag index `m` of `n` one-sided lags.
    fn weight(&self, m: usize, n: usize) -> f64 {
        match self {
            Taper::Flat => 1.0,
            Taper::RaisedCosine => {
                if n <= 1 {
                    1.0
                } else {
                    0.5 * (1.0 + (std::f64::consts::PI * m as f64 / (n - 1) as f64).cos())
                }
            }
        }
    }
}

/// Deterministic pairwise-tree sum; independent of chunking upstream.
pub fn pairwise_sum(values: &[Complex64]) -> Complex64 {
    match values.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Index of `value` on `axis`, within rounding of the stored points.
fn locate(axis: &[f64], value: f64) -> Result<usize, StatsError> {
    let tolerance = 1e-9 * value.abs().max(1.0);
    axis.iter()
        .position(|&x| (x - value).abs() <= tolerance)
        .ok_or(StatsError::PointOffGrid { value })
}

fn check_ensemble(ensemble: &[TransferGrid]) -> Result<(), StatsError> {
    if ensemble.len() < 2 {
        return Err(StatsError::TooFewRealizations { got: ensemble.len() });
    }
    let first = &ensemble[0];
    for grid in &ensemble[1..] {
        if grid.times != first.times || grid.freqs != first.freqs {
            return Err(StatsError::MismatchedGrids);
        }
    }
    Ok(())
}

/// Per-realization correlation products H*(anchor) H(anchor + lag); their
/// mean is one surface point, and their spread is its Monte-Carlo error.
pub fn correlation_samples(
    ensemble: &[TransferGrid],
    anchor: (f64, f64),
    lag: (f64, f64),
) -> Result<Vec<Complex64>, StatsError> {
    check_ensemble(ensemble)?;
    let ti = locate(&ensemble[0].times, anchor.0)?;
    let fi = locate(&ensemble[0].freqs, anchor.1)?;
    let tj = locate(&ensemble[0].times, anchor.0 + lag.0)?;
    let fj = locate(&ensemble[0].freqs, anchor.1 + lag.1)?;
    Ok(ensemble.iter().map(|g| g.values[ti][fi].conj() * g.values[tj][fj]).collect())
}

/// Correlation of H over a grid of time and frequency lags around one
/// anchor, averaged across the ensemble.
pub fn tf_cf(
    ensemble: &[TransferGrid],
    anchor: (f64, f64),
    time_lags: &[f64],
    freq_lags: &[f64],
) -> Result<CorrelationSurface, StatsError> {
    check_ensemble(ensemble)?;
    let scale = 1.0 / ensemble.len() as f64;
    let mut values = Vec::with_capacity(time_lags.len());
    for &dt in time_lags {
        let mut row = Vec::with_capacity(freq_lags.len());
        for &df in freq_lags {
            let samples = correlation_samples(ensemble, anchor, (dt, df))?;
            row.push(pairwise_sum(&samples) * scale);
        }
        values.push(row);
    }
    Ok(CorrelationSurface {
        anchor_time: anchor.0,
        anchor_freq: anchor.1,
        time_lags: time_lags.to_vec(),
        freq_lags: freq_lags.to_vec(),
        values,
        realizations: ensemble.len(),
    })
}

/// Surface value at zero time and frequency lag; real positive by
/// construction up to rounding.
fn zero_lag_value(surface: &CorrelationSurface) -> Result<Complex64, StatsError> {
    let i = locate(&surface.time_lags, 0.0).map_err(|_| StatsError::MissingZeroLag)?;
    let j = locate(&surface.freq_lags, 0.0).map_err(|_| StatsError::MissingZeroLag)?;
    let value = surface.values[i][j];
    if value.norm() == 0.0 {
        return Err(StatsError::ZeroPowerAnchor);
    }
    Ok(value)
}

/// Temporal autocorrelation: the zero-frequency-lag slice, normalized so
/// the zero lag is exactly one.
pub fn tacf(surface: &CorrelationSurface) -> Result<Vec<(f64, Complex64)>, StatsError> {
    let j = locate(&surface.freq_lags, 0.0).map_err(|_| StatsError::MissingZeroLag)?;
    let norm = zero_lag_value(surface)?;
    Ok(surface
        .time_lags
        .iter()
        .zip(&surface.values)
        .map(|(&dt, row)| (dt, row[j] / norm))
        .collect())
}

/// Frequency correlation: the zero-time-lag slice, normalized so the
/// zero lag is exactly one.
pub fn fcf(surface: &CorrelationSurface) -> Result<Vec<(f64, Complex64)>, StatsError> {
    let i = locate(&surface.time_lags, 0.0).map_err(|_| StatsError::MissingZeroLag)?;
    let norm = zero_lag_value(surface)?;
    Ok(surface
        .freq_lags
        .iter()
        .zip(&surface.values[i])
        .map(|(&df, value)| (df, value / norm))
        .collect())
}

/// Doppler power spectral density at one anchor: the autocorrelation is
/// extended to negative lags by hermitian symmetry, tapered, and
/// transformed; bins come out ascending and symmetric about zero with
/// spacing one over the extended lag span.
pub fn dpsd(
    lags: &[f64],
    curve: &[Complex64],
    anchor_time: f64,
    taper: Taper,
) -> Result<DopplerSpectrum, StatsError> {
    if lags.len() < 2 || lags.len() != curve.len() {
        return Err(StatsError::NonuniformLags);
    }
    if lags[0].abs() > 1e-12 {
        return Err(StatsError::MissingZeroLag);
    }
    let step = lags[1] - lags[0];
    if !(step > 0.0) {
        return Err(StatsError::NonuniformLags);
    }
    for pair in lags.windows(2) {
        if ((pair[1] - pair[0]) - step).abs() > 1e-9 * step {
            return Err(StatsError::NonuniformLags);
        }
    }
    let n = lags.len();
    let m = 2 * n - 1;
    // DFT-order buffer: nonnegative lags first, negative lags wrapped to
    // the tail, so index arithmetic matches exp(-j 2 pi k m / M).
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for (i, &value) in curve.iter().enumerate() {
        let w = taper.weight(i, n);
        buf[i] = value * w;
        if i > 0 {
            buf[m - i] = value.conj() * w;
        }
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let spacing = 1.0 / (m as f64 * step);
    let mut pairs: Vec<(f64, f64)> = buf
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let f = if k <= (m - 1) / 2 { k as f64 } else { k as f64 - m as f64 } * spacing;
            // Hermitian input makes the transform real up to rounding.
            (f, s.re * step)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(DopplerSpectrum {
        anchor_time,
        freqs: pairs.iter().map(|p| p.0).collect(),
        density: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Geometric over arithmetic mean of a nonnegative spectrum: one for a
/// flat spectrum, toward zero for a concentrated one.
pub fn spectral_flatness(density: &[f64]) -> f64 {
    if density.is_empty() {
        return 0.0;
    }
    let floor = 1e-300;
    let arithmetic = density.iter().map(|&x| x.max(0.0)).sum::<f64>() / density.len() as f64;
    if arithmetic <= 0.0 {
        return 0.0;
    }
    let log_mean =
        density.iter().map(|&x| x.max(floor).ln()).sum::<f64>() / density.len() as f64;
    log_mean.exp() / arithmetic
}

/// Leave-one-out standard error of an arbitrary statistic.
pub fn jackknife_se<T: Clone>(samples: &[T], stat: impl Fn(&[T]) -> f64) -> f64 {
    let n = samples.len();
    assert!(n >= 2, "jackknife needs at least two samples");
    let mut held = Vec::with_capacity(n - 1);
    let mut thetas = Vec::with_capacity(n);
    for i in 0..n {
        held.clear();
        held.extend_from_slice(&samples[..i]);
        held.extend_from_slice(&samples[i + 1..]);
        thetas.push(stat(&held));
    }
    let mean = thetas.iter().sum::<f64>() / n as f64;
    let ss = thetas.iter().map(|t| (t - mean).powi(2)).sum::<f64>();
    ((n as f64 - 1.0) / n as f64 * ss).sqrt()
}

/// Magnitude of the ensemble-mean correlation and its leave-one-out
/// standard error; the workhorse behind ordering comparisons.
pub fn magnitude_mean_se(samples: &[Complex64]) -> (f64, f64) {
    let magnitude = |xs: &[Complex64]| (pairwise_sum(xs) / xs.len() as f64).norm();
    (magnitude(samples), jackknife_se(samples, magnitude))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::RandomStream;
    use std::f64::consts::TAU;

    /// Ensemble of two-tone transfer functions with per-realization
    /// relative phases on the unit-circle roots, so cross terms cancel
    /// exactly in the ensemble mean.
    fn two_tone_ensemble(
        n_real: usize,
        times: &[f64],
        p1: f64,
        f1: f64,
        p2: f64,
        f2: f64,
    ) -> Vec<TransferGrid> {
        (0..n_real)
            .map(|k| {
                let theta = TAU * k as f64 / n_real as f64;
                let values = times
                    .iter()
                    .map(|&t| {
                        let a = Complex64::from_polar(p1.sqrt(), TAU * f1 * t);
                        let b = Complex64::from_polar(p2.sqrt(), TAU * f2 * t + theta);
                        vec![a + b]
                    })
                    .collect();
                TransferGrid { times: times.to_vec(), freqs: vec![28e9], values }
            })
            .collect()
    }

    fn lag_axis(n: usize, step: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * step).collect()
    }

    #[test]
    fn zero_lag_is_real_and_normalizes_to_one() {
        let mut stream = RandomStream::from_seed(0xfeed);
        let times = lag_axis(4, 1e-3);
        let ensemble: Vec<TransferGrid> = (0..32)
            .map(|_| TransferGrid {
                times: times.clone(),
                freqs: vec![28e9, 28.1e9],
                values: times
                    .iter()
                    .map(|_| {
                        (0..2)
                            .map(|_| {
                                Complex64::from_polar(
                                    0.5 + stream.uniform01(),
                                    TAU * stream.uniform01(),
                                )
                            })
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        let surface =
            tf_cf(&ensemble, (0.0, 28e9), &[0.0, 1e-3, 2e-3], &[0.0, 0.1e9]).unwrap();
        let zero = surface.values[0][0];
        assert_eq!(zero.im, 0.0);
        assert!(zero.re > 0.0);
        let curve = tacf(&surface).unwrap();
        assert_eq!(curve[0].1, Complex64::new(1.0, 0.0));
        // Normalized magnitudes stay within the Monte-Carlo band.
        let bound = 1.0 + 3.0 / (surface.realizations as f64).sqrt();
        for (_, v) in &curve {
            assert!(v.norm() <= bound);
        }
        for (_, v) in fcf(&surface).unwrap() {
            assert!(v.norm() <= bound);
        }
    }

    #[test]
    fn deterministic_phasor_has_unit_modulus_correlation() {
        let times = lag_axis(16, 5e-4);
        let grid = TransferGrid {
            times: times.clone(),
            freqs: vec![1e9],
            values: times.iter().map(|&t| vec![Complex64::from_polar(1.0, TAU * 300.0 * t)]).collect(),
        };
        let ensemble = vec![grid.clone(), grid];
        let lags = lag_axis(8, 5e-4);
        let surface = tf_cf(&ensemble, (0.0, 1e9), &lags, &[0.0]).unwrap();
        for (dt, v) in tacf(&surface).unwrap() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
            // The phasor rotates at exactly its Doppler; compare angles
            // through the cosine to sidestep wrapping.
            let want = TAU * 300.0 * dt;
            assert!(((v.arg() - want).cos() - 1.0).abs() < 1e-9, "dt {dt}");
        }
    }

    #[test]
    fn two_tone_correlation_matches_the_closed_form() {
        let times = lag_axis(64, 1e-4);
        let (p1, f1, p2, f2) = (0.7, 120.0, 0.3, -340.0);
        let ensemble = two_tone_ensemble(16, &times, p1, f1, p2, f2);
        let lags = lag_axis(32, 1e-4);
        let surface = tf_cf(&ensemble, (0.0, 28e9), &lags, &[0.0]).unwrap();
        for (dt, v) in tacf(&surface).unwrap() {
            let want = Complex64::from_polar(p1, TAU * f1 * dt)
                + Complex64::from_polar(p2, TAU * f2 * dt);
            // The closed form is unnormalized; p1 + p2 = 1 here.
            assert!((v - want).norm() < 1e-12, "dt {dt}: {v} vs {want}");
        }
    }

    #[test]
    fn single_delay_frequency_correlation_has_linear_phase() {
        let tau = 150e-9;
        let freqs: Vec<f64> = (0..32).map(|i| 27e9 + i as f64 * 20e6).collect();
        let grid = TransferGrid {
            times: vec![0.0],
            freqs: freqs.clone(),
            values: vec![freqs.iter().map(|&f| Complex64::from_polar(1.0, -TAU * f * tau)).collect()],
        };
        let ensemble = vec![grid.clone(), grid];
        let dfs = lag_axis(16, 20e6);
        let surface = tf_cf(&ensemble, (0.0, 27e9), &[0.0], &dfs).unwrap();
        for (df, v) in fcf(&surface).unwrap() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
            let want = Complex64::from_polar(1.0, -TAU * df * tau);
            assert!((v - want).norm() < 1e-9, "df {df}");
        }
        // A delay-free path decorrelates nowhere.
        let flat = TransferGrid {
            times: vec![0.0],
            freqs: freqs.clone(),
            values: vec![vec![Complex64::new(1.0, 0.0); freqs.len()]],
        };
        let ensemble = vec![flat.clone(), flat];
        let surface = tf_cf(&ensemble, (0.0, 27e9), &[0.0], &dfs).unwrap();
        for (_, v) in fcf(&surface).unwrap() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_autocorrelation_is_an_impulse_at_zero() {
        let n = 64;
        let lags = lag_axis(n, 1e-4);
        let curve = vec![Complex64::new(1.0, 0.0); n];
        let spectrum = dpsd(&lags, &curve, 0.0, Taper::Flat).unwrap();
        let m = 2 * n - 1;
        let spacing = 1.0 / (m as f64 * 1e-4);
        let peak = spectrum.density.iter().cloned().fold(f64::MIN, f64::max);
        let center = spectrum.freqs.iter().position(|&f| f == 0.0).unwrap();
        assert_eq!(spectrum.density[center], peak);
        for (i, &d) in spectrum.density.iter().enumerate() {
            if i != center {
                assert!(d.abs() < 1e-9, "leakage {d} at {}", spectrum.freqs[i]);
            }
        }
        // Bin sum times width returns the zero-lag value.
        let integral: f64 = spectrum.density.iter().sum::<f64>() * spacing;
        assert!((integral - 1.0).abs() < 1e-2);
        // Bins are uniform with spacing one over the extended span.
        for pair in spectrum.freqs.windows(2) {
            assert!(((pair[1] - pair[0]) - spacing).abs() < 1e-9 * spacing);
        }
    }

    #[test]
    fn single_tone_spectrum_peaks_at_the_tone() {
        let step = 1e-4;
        let n = 100;
        let lags = lag_axis(n, step);
        let tone = 467.0;
        let curve: Vec<Complex64> =
            lags.iter().map(|&dt| Complex64::from_polar(1.0, TAU * tone * dt)).collect();
        for taper in [Taper::Flat, Taper::RaisedCosine] {
            let spectrum = dpsd(&lags, &curve, 0.0, taper).unwrap();
            let spacing = 1.0 / ((2 * n - 1) as f64 * step);
            let peak = spectrum
                .density
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert!(
                (spectrum.freqs[peak] - tone).abs() <= spacing / 2.0 + 1e-9,
                "peak at {} for tone {tone}",
                spectrum.freqs[peak]
            );
            let integral: f64 = spectrum.density.iter().sum::<f64>() * spacing;
            assert!((integral - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn two_tone_spectrum_separates_heights_and_support() {
        // Tones placed exactly on bins, flat taper: the transform is an
        // exact two-impulse comb with heights in the power ratio.
        let step = 1e-4;
        let n = 100;
        let m = 2 * n - 1;
        let spacing = 1.0 / (m as f64 * step);
        let (f1, f2) = (10.0 * spacing, -30.0 * spacing);
        let (p1, p2) = (0.75, 0.25);
        let lags = lag_axis(n, step);
        let curve: Vec<Complex64> = lags
            .iter()
            .map(|&dt| {
                Complex64::from_polar(p1, TAU * f1 * dt) + Complex64::from_polar(p2, TAU * f2 * dt)
            })
            .collect();
        let spectrum = dpsd(&lags, &curve, 0.0, Taper::Flat).unwrap();
        let at = |f: f64| -> f64 {
            let i = spectrum.freqs.iter().position(|&x| (x - f).abs() < spacing / 2.0).unwrap();
            spectrum.density[i]
        };
        assert!((at(f1) / at(f2) - p1 / p2).abs() < 1e-9);
        // Support stays inside the largest tone frequency plus one bin.
        let bound = f2.abs() + spacing;
        for (&f, &d) in spectrum.freqs.iter().zip(&spectrum.density) {
            if f.abs() > bound + 1e-9 {
                assert!(d.abs() < 1e-9, "support leak {d} at {f}");
            }
        }
    }

    #[test]
    fn grid_and_lag_errors_are_reported() {
        let times = lag_axis(4, 1e-3);
        let grid = TransferGrid {
            times: times.clone(),
            freqs: vec![1e9],
            values: times.iter().map(|_| vec![Complex64::new(1.0, 0.0)]).collect(),
        };
        // One realization is not an ensemble.
        assert!(matches!(
            tf_cf(&[grid.clone()], (0.0, 1e9), &[0.0], &[0.0]),
            Err(StatsError::TooFewRealizations { got: 1 })
        ));
        // Mismatched axes.
        let other = TransferGrid { freqs: vec![2e9], ..grid.clone() };
        assert!(matches!(
            tf_cf(&[grid.clone(), other], (0.0, 1e9), &[0.0], &[0.0]),
            Err(StatsError::MismatchedGrids)
        ));
        let pair = vec![grid.clone(), grid.clone()];
        // Anchor off the grid.
        assert!(matches!(
            tf_cf(&pair, (0.5e-3, 1e9), &[0.0], &[0.0]),
            Err(StatsError::PointOffGrid { .. })
        ));
        // Lag walking off the grid.
        assert!(matches!(
            tf_cf(&pair, (0.0, 1e9), &[0.0, 9e-3], &[0.0]),
            Err(StatsError::PointOffGrid { .. })
        ));
        // Spectrum demands uniform lags starting at zero.
        let curve = vec![Complex64::new(1.0, 0.0); 3];
        assert!(matches!(
            dpsd(&[0.0, 1e-3, 3e-3], &curve, 0.0, Taper::Flat),
            Err(StatsError::NonuniformLags)
        ));
        assert!(matches!(
            dpsd(&[1e-3, 2e-3, 3e-3], &curve, 0.0, Taper::Flat),
            Err(StatsError::MissingZeroLag)
        ));
        // Slices demand the zero lag for normalization.
        let surface = tf_cf(&pair, (0.0, 1e9), &[1e-3, 2e-3], &[0.0]).unwrap();
        assert!(matches!(tacf(&surface), Err(StatsError::MissingZeroLag)));
    }

    #[test]
    fn flatness_ranks_flat_above_peaked() {
        let flat = vec![0.5; 64];
        assert!((spectral_flatness(&flat) - 1.0).abs() < 1e-12);
        let mut peaked = vec![1e-6; 64];
        peaked[10] = 1.0;
        let f = spectral_flatness(&peaked);
        assert!(f < 0.1, "flatness {f}");
        assert!(spectral_flatness(&flat) > f);
        assert_eq!(spectral_flatness(&[]), 0.0);
        assert_eq!(spectral_flatness(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn jackknife_matches_the_classic_mean_error() {
        // For the sample mean the jackknife reproduces s / sqrt(n).
        let xs = [1.0, 2.0, 3.0, 4.0];
        let se = jackknife_se(&xs, |s| s.iter().sum::<f64>() / s.len() as f64);
        let sd = (xs.iter().map(|x| (x - 2.5).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert!((se - sd / 2.0).abs() < 1e-12);
        // Constant samples have zero error.
        let zeros = [7.0; 5];
        assert_eq!(jackknife_se(&zeros, |s| s.iter().sum::<f64>() / s.len() as f64), 0.0);
        // The complex magnitude helper agrees on a constant ensemble.
        let ones = vec![Complex64::new(0.0, 1.0); 6];
        let (mag, se) = magnitude_mean_se(&ones);
        assert!((mag - 1.0).abs() < 1e-12);
        assert!(se < 1e-12);
    }

    #[test]
    fn pairwise_sum_is_chunking_independent() {
        let mut stream = RandomStream::from_seed(0xabc);
        let xs: Vec<Complex64> = (0..1023)
            .map(|_| Complex64::new(stream.uniform(-1.0, 1.0), stream.uniform(-1.0, 1.0)))
            .collect();
        let total = pairwise_sum(&xs);
        // The tree is defined by the slice alone, so summing a permuted
        // copy differs but re-summing the same slice never does.
        assert_eq!(total, pairwise_sum(&xs));
        let naive: Complex64 = xs.iter().sum();
        assert!((total - naive).norm() < 1e-9);
    }
}
