//! Chaoticity estimators on unfolded spectra: Berry-Robnik fit of the
//! spacing distribution, spectral rigidity with the mixing fit, and the DFA
//! exponent. Also synthetic Poisson and random-matrix calibration spectra.

mod dfa;
mod rigidity;
mod surmise;
mod synth;

use serde::{Deserialize, Serialize};

pub use dfa::{dfa_alpha, dfa_fluctuations, DFA_MIN_LEN};
pub use rigidity::{chaotic_branch, delta3, delta3_reference, default_l_axis, fit_Q, Delta3Curve};
pub use surmise::{
    berry_robnik_cdf, berry_robnik_pdf, fit_q, nnls_histogram, surmise_cdf, wigner_surmise, Histogram, FIT_MIN_SPACINGS,
};
pub use synth::{synth_spectrum, tridiagonal_eigenvalues};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Poisson,
    Goe,
    Gue,
}

impl EnsembleKind {
    /// Chaotic reference for a field strength: GUE once time reversal is broken.
    pub fn chaotic_for_field(b: f64) -> Self {
        if b != 0.0 {
            Self::Gue
        } else {
            Self::Goe
        }
    }
}

/// Fitted mixing parameter (or DFA exponent) with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingResult {
    /// Clamped to `[0, 1]` (`[0, 0.75]` for the DFA exponent).
    pub estimate: f64,
    /// Value before clamping.
    pub raw: f64,
    pub residual: f64,
    /// Chaotic reference ensemble used, if any.
    pub ensemble: Option<EnsembleKind>,
    /// Objective evaluated along the parameter axis, `(parameter, value)`.
    pub profile: Vec<(f64, f64)>,
    /// Method notes carried into reports.
    pub note: Option<String>,
}

/// Kolmogorov-Smirnov distance between the samples and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Golden-section minimization on `[a, b]`.
pub(crate) fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
