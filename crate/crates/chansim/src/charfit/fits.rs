//! Maximum-likelihood fitters for the table's distribution families, plus
//! the log-power regression and a Kolmogorov-Smirnov distance.
//!
//! Every fitter reports asymptotic standard errors from the observed
//! information so downstream checks can phrase recovery in SE units.

use statrs::function::gamma::digamma;

use super::CharfitError;
use crate::registry::{
    GammaParams, GaussianParams, LogisticParams, PowerDelayParams, RayleighParams,
};

/// Minimum sample count for the distribution fitters.
pub const MIN_FIT_SAMPLES: usize = 30;

const LN_10: f64 = std::f64::consts::LN_10;

/// Fitted Logistic law with standard errors.
#[derive(Debug, Clone, Copy)]
pub struct LogisticFit {
    pub params: LogisticParams,
    pub se_mu: f64,
    pub se_scale: f64,
}

/// Fitted Gamma law with standard errors.
#[derive(Debug, Clone, Copy)]
pub struct GammaFit {
    pub params: GammaParams,
    pub se_shape: f64,
    pub se_rate: f64,
}

/// Fitted Rayleigh law with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct RayleighFit {
    pub params: RayleighParams,
    pub se_sigma: f64,
}

/// Fitted Gaussian law with standard errors.
#[derive(Debug, Clone, Copy)]
pub struct GaussianFit {
    pub params: GaussianParams,
    pub se_mu: f64,
    pub se_sigma: f64,
}

/// Fitted log-power regression with standard errors.
#[derive(Debug, Clone, Copy)]
pub struct PowerDelayFit {
    pub params: PowerDelayParams,
    pub se_decay: f64,
    pub se_offset: f64,
    pub se_shadow: f64,
}

/// Shared preconditions: enough samples, all finite, not all identical.
fn check_samples(samples: &[f64]) -> Result<(), CharfitError> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(CharfitError::InsufficientSamples {
            needed: MIN_FIT_SAMPLES,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(CharfitError::NonFinite);
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Err(CharfitError::DegenerateSamples);
    }
    Ok(())
}

fn check_nonnegative(samples: &[f64]) -> Result<(), CharfitError> {
    for &x in samples {
        if x < 0.0 {
            return Err(CharfitError::OutOfSupport { value: x });
        }
    }
    Ok(())
}

fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// ln(1 + e^u) without overflow.
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// Trigamma via the recurrence to x >= 8 and the asymptotic tail.
fn trigamma(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut x = x;
    while x < 8.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    // psi'(x) ~ 1/x + 1/(2x^2) + sum B_2k / x^(2k+1); truncation < 1e-11 here.
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        * (1.0
            + inv * 0.5
            + inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0))))
}

/// Gaussian MLE: sample mean and the n-divisor standard deviation.
pub fn fit_gaussian(samples: &[f64]) -> Result<GaussianFit, CharfitError> {
    check_samples(samples)?;
    let n = samples.len() as f64;
    let mu = mean(samples);
    let var = samples.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    let sigma = var.sqrt();
    Ok(GaussianFit {
        params: GaussianParams::new(mu, sigma)?,
        se_mu: sigma / n.sqrt(),
        se_sigma: sigma / (2.0 * n).sqrt(),
    })
}

/// Rayleigh MLE: sigma^2 = sum(x^2) / 2n.
pub fn fit_rayleigh(samples: &[f64]) -> Result<RayleighFit, CharfitError> {
    check_samples(samples)?;
    check_nonnegative(samples)?;
    let n = samples.len() as f64;
    let sigma = (samples.iter().map(|x| x * x).sum::<f64>() / (2.0 * n)).sqrt();
    Ok(RayleighFit {
        params: RayleighParams::new(sigma)?,
        se_sigma: sigma / (2.0 * n.sqrt()),
    })
}

/// Logistic MLE by Newton iteration on the score equations
/// sum tanh(z/2) = 0 and sum z tanh(z/2) = n, z = (x - mu) / scale.
pub fn fit_logistic(samples: &[f64]) -> Result<LogisticFit, CharfitError> {
    check_samples(samples)?;
    let n = samples.len() as f64;

    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut mu = 0.5 * (sorted[(sorted.len() - 1) / 2] + sorted[sorted.len() / 2]);
    let sample_mu = mean(samples);
    let var = samples.iter().map(|x| (x - sample_mu) * (x - sample_mu)).sum::<f64>() / n;
    // Moment start: a Logistic has variance (pi * scale)^2 / 3.
    let mut scale = var.sqrt() * 3f64.sqrt() / std::f64::consts::PI;

    // One pass over the data: log-likelihood, score, and the negative
    // Hessian scaled by scale^2 (m_aa, m_ab, m_dd).
    let state = |mu: f64, scale: f64| {
        let (mut t1, mut tz, mut s1, mut sz, mut szz, mut ll) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for &x in samples {
            let z = (x - mu) / scale;
            let t = (0.5 * z).tanh();
            let s = 1.0 - t * t;
            t1 += t;
            tz += t * z;
            s1 += s;
            sz += s * z;
            szz += s * z * z;
            ll += -z - 2.0 * softplus(-z);
        }
        ll -= n * scale.ln();
        (ll, t1 / scale, (tz - n) / scale, 0.5 * s1, t1 + 0.5 * sz, 2.0 * tz - n + 0.5 * szz)
    };

    let (mut ll, mut g_mu, mut g_scale, mut m_aa, mut m_ab, mut m_dd) = state(mu, scale);
    let mut converged = false;
    for _ in 0..200 {
        let det = m_aa * m_dd - m_ab * m_ab;
        let (d_mu, d_scale) = if det > 0.0 {
            let f = scale * scale / det;
            (f * (m_dd * g_mu - m_ab * g_scale), f * (m_aa * g_scale - m_ab * g_mu))
        } else {
            // Indefinite curvature away from the optimum: fall back to a
            // conservatively scaled ascent step.
            let f = scale * scale / (m_aa.abs() + m_dd.abs() + 1.0);
            (f * g_mu, f * g_scale)
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand_mu = mu + step * d_mu;
            let cand_scale = scale + step * d_scale;
            if cand_scale > 0.0 {
                let cand = state(cand_mu, cand_scale);
                if cand.0 >= ll {
                    let done = (step * d_mu).abs() <= 1e-11 * (1.0 + mu.abs())
                        && (step * d_scale).abs() <= 1e-11 * scale;
                    mu = cand_mu;
                    scale = cand_scale;
                    (ll, g_mu, g_scale, m_aa, m_ab, m_dd) = cand;
                    accepted = true;
                    converged = done;
                    break;
                }
            }
            step *= 0.5;
        }
        if converged || !accepted {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CharfitError::NoConvergence { iterations: 200 });
    }

    let det = m_aa * m_dd - m_ab * m_ab;
    Ok(LogisticFit {
        params: LogisticParams::new(mu, scale)?,
        se_mu: scale * (m_dd / det).sqrt(),
        se_scale: scale * (m_aa / det).sqrt(),
    })
}

/// Gamma MLE: Newton iteration on ln(shape) - digamma(shape) = s with the
/// Minka closed-form start, rate = shape / mean. Zero samples sit outside
/// the density's support and are dropped.
pub fn fit_gamma(samples: &[f64]) -> Result<GammaFit, CharfitError> {
    check_samples(samples)?;
    check_nonnegative(samples)?;
    let positive: Vec<f64> = samples.iter().copied().filter(|&x| x > 0.0).collect();
    if positive.len() < MIN_FIT_SAMPLES {
        return Err(CharfitError::InsufficientSamples {
            needed: MIN_FIT_SAMPLES,
            got: positive.len(),
        });
    }
    let n = positive.len() as f64;
    let m = mean(&positive);
    let mean_ln = positive.iter().map(|x| x.ln()).sum::<f64>() / n;
    let s = m.ln() - mean_ln;
    // s > 0 by Jensen unless the positive samples are all identical.
    if s <= 0.0 {
        return Err(CharfitError::DegenerateSamples);
    }

    let mut shape = (3.0 - s + ((s - 3.0) * (s - 3.0) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..100 {
        let f = shape.ln() - digamma(shape) - s;
        let fp = 1.0 / shape - trigamma(shape);
        let mut delta = f / fp;
        while shape - delta <= 0.0 {
            delta *= 0.5;
        }
        shape -= delta;
        if delta.abs() <= 1e-12 * shape {
            break;
        }
    }
    let rate = shape / m;

    // Observed information per sample is [[psi'(a), -1/b], [-1/b, a/b^2]].
    let tri = trigamma(shape);
    let info_det = shape * tri - 1.0;
    Ok(GammaFit {
        params: GammaParams::new(shape, rate)?,
        se_shape: (shape / (n * info_det)).sqrt(),
        se_rate: rate * (tri / (n * info_det)).sqrt(),
    })
}

/// Ordinary least squares of -ln(power) on delay. The slope is the decay
/// rate, the intercept the offset, and the residual spread (in dB) the
/// shadowing standard deviation.
pub fn fit_power_delay(pairs: &[(f64, f64)]) -> Result<PowerDelayFit, CharfitError> {
    if pairs.len() < 2 {
        return Err(CharfitError::InsufficientSamples { needed: 2, got: pairs.len() });
    }
    for &(power, delay) in pairs {
        if !(power.is_finite() && power > 0.0) {
            return Err(CharfitError::OutOfSupport { value: power });
        }
        if !delay.is_finite() {
            return Err(CharfitError::NonFinite);
        }
    }
    let n = pairs.len() as f64;
    let x_bar = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let y_bar = pairs.iter().map(|p| -p.0.ln()).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(power, delay) in pairs {
        let dx = delay - x_bar;
        sxx += dx * dx;
        sxy += dx * (-power.ln() - y_bar);
    }
    if sxx == 0.0 {
        return Err(CharfitError::SingularRegression);
    }
    let decay = sxy / sxx;
    let offset = y_bar - decay * x_bar;

    let dof = pairs.len() as f64 - 2.0;
    let (shadow, se_decay, se_offset, se_shadow);
    if pairs.len() == 2 {
        // Two points are interpolated exactly; no residual spread exists.
        shadow = 0.0;
        se_decay = 0.0;
        se_offset = 0.0;
        se_shadow = 0.0;
    } else {
        let rss: f64 = pairs
            .iter()
            .map(|&(power, delay)| {
                let r = -power.ln() - (decay * delay + offset);
                r * r
            })
            .sum();
        let resid_sd = (rss / dof).sqrt();
        // y is in nepers; shadowing is quoted in dB.
        shadow = resid_sd * 10.0 / LN_10;
        se_decay = resid_sd / sxx.sqrt();
        se_offset = resid_sd * (1.0 / n + x_bar * x_bar / sxx).sqrt();
        se_shadow = shadow / (2.0 * dof).sqrt();
    }

    Ok(PowerDelayFit {
        params: PowerDelayParams::new(decay, offset, shadow)?,
        se_decay,
        se_offset,
        se_shadow,
    })
}

/// Kolmogorov-Smirnov distance between the sample and `cdf`:
/// sup_x |F_n(x) - F(x)| over both one-sided gaps at each sample.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!samples.is_empty(), "ks_statistic needs at least one sample");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        worst = worst.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    worst
}
