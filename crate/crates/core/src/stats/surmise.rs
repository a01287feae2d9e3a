//! Nearest-neighbour spacing distributions and the Berry-Robnik fit.

use std::f64::consts::PI;

use libm::erfc;
use serde::{Deserialize, Serialize};

use super::{golden_min, EnsembleKind, MixingResult};
use crate::error::{Error, Result};

/// Spacing count below which the fit is statistically meaningless.
pub const FIT_MIN_SPACINGS: usize = 200;

pub fn wigner_surmise(s: f64, kind: EnsembleKind) -> f64 {
    match kind {
        EnsembleKind::Poisson => (-s).exp(),
        EnsembleKind::Goe => 0.5 * PI * s * (-0.25 * PI * s * s).exp(),
        EnsembleKind::Gue => 32.0 / (PI * PI) * s * s * (-4.0 * s * s / PI).exp(),
    }
}

/// Cumulative distribution of [`wigner_surmise`].
pub fn surmise_cdf(s: f64, kind: EnsembleKind) -> f64 {
    match kind {
        EnsembleKind::Poisson => 1.0 - (-s).exp(),
        EnsembleKind::Goe => 1.0 - (-0.25 * PI * s * s).exp(),
        EnsembleKind::Gue => {
            let a = 2.0 * s / PI.sqrt();
            libm::erf(a) - 2.0 * a / PI.sqrt() * (-a * a).exp()
        }
    }
}

/// Berry-Robnik spacing density for a regular fraction `q`.
pub fn berry_robnik_pdf(s: f64, q: f64) -> f64 {
    let c = 1.0 - q;
    let gauss = (-0.25 * PI * c * c * s * s).exp();
    (-q * s).exp() * (q * q * erfc(0.5 * PI.sqrt() * c * s) + (2.0 * q * c + 0.5 * PI * c * c * c * s) * gauss)
}

pub fn berry_robnik_cdf(s: f64, q: f64) -> f64 {
    let c = 1.0 - q;
    let gauss = (-0.25 * PI * c * c * s * s).exp();
    1.0 - (-q * s).exp() * (q * erfc(0.5 * PI.sqrt() * c * s) + c * gauss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges spanning `[0, s_max]`.
    pub edges: Vec<f64>,
    /// Unit-area density per bin.
    pub density: Vec<f64>,
    pub count: usize,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Unit-area histogram of the spacings over `[0, max s]`; the top edge is
/// closed so the largest spacing lands in the last bin.
pub fn nnls_histogram(s: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let top = if s_max > 0.0 { s_max } else { 1.0 };
    let width = top / bins as f64;
    let edges = (0..=bins).map(|k| k as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &x in s {
        let k = ((x / width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let norm = if s.is_empty() { 0.0 } else { 1.0 / (s.len() as f64 * width) };
    let density = counts.iter().map(|&c| c as f64 * norm).collect();
    Histogram { edges, density, count: s.len() }
}

fn neg_log_likelihood(s: &[f64], q: f64) -> f64 {
    -s.iter().map(|&x| berry_robnik_pdf(x, q).max(1e-300).ln()).sum::<f64>()
}

/// Maximum-likelihood Berry-Robnik `q` over `[0, 1]`. The profile holds the
/// mean negative log-likelihood on a 0.01 grid; the residual is the RMS gap
/// between the empirical and fitted cumulative distributions.
pub fn fit_q(s: &[f64]) -> Result<MixingResult> {
    if s.len() < FIT_MIN_SPACINGS {
        return Err(Error::WindowTooShort { needed: FIT_MIN_SPACINGS as f64, available: s.len() as f64 });
    }
    if s.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::DomainError("spacings must be finite and non-negative".into()));
    }
    let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return Err(Error::DegenerateData);
    }
    let n = s.len() as f64;
    let profile: Vec<(f64, f64)> = (0..=100).map(|k| {
        let q = k as f64 / 100.0;
        (q, neg_log_likelihood(s, q) / n)
    }).collect();
    let best = profile.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).map(|(i, _)| i).unwrap();
    let a = profile[best.saturating_sub(1)].0;
    let b = profile[(best + 1).min(100)].0;
    let refined = golden_min(a, b, |q| neg_log_likelihood(s, q), 1e-7);
    let q = if neg_log_likelihood(s, refined) <= neg_log_likelihood(s, profile[best].0) {
        refined
    } else {
        profile[best].0
    };

    let mut sorted = s.to_vec();
    sorted.sort_by(f64::total_cmp);
    let residual = (sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 0.5) / n - berry_robnik_cdf(x, q)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(MixingResult {
        estimate: q.clamp(0.0, 1.0),
        raw: q,
        residual,
        ensemble: Some(EnsembleKind::Goe),
        profile,
        note: None,
    })
}
