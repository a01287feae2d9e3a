//! Spectral staircase, smooth-staircase unfolding and nearest-neighbour
//! spacings.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_LEVELS: usize = 100;
/// Fraction of levels dropped at each end of the unfolded spectrum.
pub const EDGE_TRIM: f64 = 0.02;
const MAX_CONDITION: f64 = 1e10;

/// Sorted energy levels with a provenance string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub energies: Vec<f64>,
    pub source: String,
}

impl Spectrum {
    /// Sorts the levels; rejects non-finite values.
    pub fn new(mut energies: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidParameter("spectrum contains non-finite levels".into()));
        }
        energies.sort_by(f64::total_cmp);
        Ok(Self { energies, source: source.into() })
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
}

/// `N(E) = #{E_m ≤ E}`.
pub fn staircase(spec: &Spectrum, e: f64) -> usize {
    spec.energies.partition_point(|&x| x <= e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitMethod {
    /// Polynomial in `E^{1 + 2/n}`, the Thomas-Fermi variable of an `r^n` well.
    ThomasFermi { n: u32, degree: usize },
    /// Polynomial in `E`.
    Polynomial { degree: usize },
}

impl FitMethod {
    pub fn thomas_fermi(n: u32) -> Self {
        Self::ThomasFermi { n, degree: 3 }
    }

    pub fn polynomial() -> Self {
        Self::Polynomial { degree: 6 }
    }

    fn exponent(&self) -> f64 {
        match *self {
            Self::ThomasFermi { n, .. } => 1.0 + 2.0 / n as f64,
            Self::Polynomial { .. } => 1.0,
        }
    }

    fn degree(&self) -> usize {
        match *self {
            Self::ThomasFermi { degree, .. } | Self::Polynomial { degree } => degree,
        }
    }
}

/// Fitted smooth staircase `N̄(E)`. The variable `u = E^p` is mapped to
/// `t ∈ [−1, 1]` and expanded in Legendre polynomials; the result is then
/// rescaled about `anchor` so the trimmed window has unit mean spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothFit {
    pub method: FitMethod,
    pub exponent: f64,
    pub u_center: f64,
    pub u_half_width: f64,
    pub coefficients: Vec<f64>,
    pub anchor: f64,
    pub scale: f64,
    /// Condition number of the least-squares design matrix.
    pub condition: f64,
}

fn legendre_row(t: f64, degree: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if degree >= 1 {
        out[1] = t;
    }
    for k in 1..degree {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * t * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

impl SmoothFit {
    fn raw(&self, e: f64) -> f64 {
        let u = if self.exponent == 1.0 { e } else { e.max(0.0).powf(self.exponent) };
        let t = (u - self.u_center) / self.u_half_width;
        let mut row = vec![0.0; self.coefficients.len()];
        legendre_row(t, self.coefficients.len() - 1, &mut row);
        row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }

    /// `N̄(E)` including the unit-spacing rescale.
    pub fn eval(&self, e: f64) -> f64 {
        self.anchor + (self.raw(e) - self.anchor) * self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfoldedSpectrum {
    /// One unfolded level per input level.
    pub levels: Vec<f64>,
    pub fit: SmoothFit,
    /// Index range `[start, end)` used by the statistics.
    pub window: (usize, usize),
}

impl UnfoldedSpectrum {
    pub fn window_levels(&self) -> &[f64] {
        &self.levels[self.window.0..self.window.1]
    }

    /// Mean nearest-neighbour spacing inside the window.
    pub fn mean_spacing(&self) -> f64 {
        let w = self.window_levels();
        (w[w.len() - 1] - w[0]) / (w.len() - 1) as f64
    }
}

fn fit_failure(reason: impl Into<String>, condition: f64) -> Error {
    Error::FitFailure { reason: reason.into(), condition }
}

/// `ε_m = N̄(E_m)` with `N̄` a least-squares fit of the staircase midpoints
/// `m + ½`. The lowest and highest 2% of levels are excluded from the window.
pub fn unfold(spec: &Spectrum, method: FitMethod) -> Result<UnfoldedSpectrum> {
    let n = spec.len();
    if n < MIN_LEVELS {
        return Err(Error::SeriesTooShort { len: n, needed: MIN_LEVELS });
    }
    let degree = method.degree();
    if degree == 0 || degree >= n / 4 {
        return Err(Error::InvalidParameter(format!("fit degree {degree} unsuitable for {n} levels")));
    }
    let exponent = method.exponent();
    if exponent != 1.0 && spec.energies[0] < 0.0 {
        return Err(fit_failure("Thomas-Fermi variable needs non-negative energies", f64::NAN));
    }
    let u: Vec<f64> = spec.energies.iter().map(|&e| if exponent == 1.0 { e } else { e.powf(exponent) }).collect();
    let (u_min, u_max) = (u[0], u[n - 1]);
    if !(u_max > u_min) {
        return Err(fit_failure("spectrum has zero width", f64::INFINITY));
    }
    let u_center = 0.5 * (u_min + u_max);
    let u_half_width = 0.5 * (u_max - u_min);

    let p = degree + 1;
    let mut gram = Mat::<f64>::zeros(p, p);
    let mut rhs = Mat::<f64>::zeros(p, 1);
    let mut row = vec![0.0; p];
    for (m, &um) in u.iter().enumerate() {
        legendre_row((um - u_center) / u_half_width, degree, &mut row);
        for a in 0..p {
            rhs[(a, 0)] += row[a] * (m as f64 + 0.5);
            for b in 0..p {
                gram[(a, b)] += row[a] * row[b];
            }
        }
    }
    let eig = gram.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let condition = (eig[p - 1] / eig[0].max(f64::MIN_POSITIVE)).sqrt();
    if !(condition < MAX_CONDITION) {
        return Err(fit_failure("ill-conditioned staircase fit", condition));
    }
    let llt = gram.llt(Side::Lower).map_err(|_| fit_failure("normal equations not positive definite", condition))?;
    let l = llt.L().to_owned();
    l.solve_lower_triangular_in_place(rhs.as_mut());
    l.transpose().solve_upper_triangular_in_place(rhs.as_mut());
    let coefficients: Vec<f64> = (0..p).map(|a| rhs[(a, 0)]).collect();

    let mut fit = SmoothFit { method, exponent, u_center, u_half_width, coefficients, anchor: 0.0, scale: 1.0, condition };
    let raw: Vec<f64> = spec.energies.iter().map(|&e| fit.raw(e)).collect();
    for m in 1..n {
        if raw[m] < raw[m - 1] && spec.energies[m] > spec.energies[m - 1] {
            return Err(fit_failure(format!("smooth staircase decreases near level {m}"), condition));
        }
    }
    let trim = (EDGE_TRIM * n as f64).floor() as usize;
    let window = (trim, n - trim);
    let span = raw[window.1 - 1] - raw[window.0];
    if !(span > 0.0) {
        return Err(fit_failure("unfolded window has zero width", condition));
    }
    fit.anchor = raw[window.0];
    fit.scale = (window.1 - window.0 - 1) as f64 / span;
    let levels = raw.iter().map(|&r| fit.anchor + (r - fit.anchor) * fit.scale).collect();
    Ok(UnfoldedSpectrum { levels, fit, window })
}

/// Thomas-Fermi fit when `n` is known, falling back to a degree-6
/// polynomial in `E` if that fit fails.
pub fn unfold_auto(spec: &Spectrum, n: Option<u32>) -> Result<UnfoldedSpectrum> {
    if let Some(n) = n {
        if let Ok(u) = unfold(spec, FitMethod::thomas_fermi(n)) {
            return Ok(u);
        }
    }
    unfold(spec, FitMethod::polynomial())
}

/// `s_i = ε_{i+1} − ε_i` inside the window.
pub fn spacings(unf: &UnfoldedSpectrum) -> Vec<f64> {
    unf.window_levels().windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_pvalue, ks_statistic, synth_spectrum, EnsembleKind};
    use proptest::prelude::*;

    fn picket(n: usize) -> Spectrum {
        Spectrum::new((0..n).map(|m| m as f64).collect(), "picket").unwrap()
    }

    #[test]
    fn staircase_counts() {
        let s = Spectrum::new(vec![1.0, 2.0, 2.0, 3.5], "t").unwrap();
        assert_eq!(staircase(&s, 0.5), 0);
        assert_eq!(staircase(&s, 1.0), 1);
        assert_eq!(staircase(&s, 2.0), 3);
        assert_eq!(staircase(&s, 10.0), 4);
        let big = picket(4000);
        assert_eq!(staircase(&big, 1e9), 4000);
    }

    #[test]
    fn picket_fence_unfolds_to_unit_steps() {
        let u = unfold(&picket(500), FitMethod::polynomial()).unwrap();
        let s = spacings(&u);
        assert_eq!(s.len(), u.window.1 - u.window.0 - 1);
        assert!(s.iter().all(|&x| (x - 1.0).abs() < 1e-9));
        for (m, e) in u.levels.iter().enumerate() {
            assert!((e - (m as f64 + 0.5)).abs() < 1e-7);
        }
    }

    #[test]
    fn thomas_fermi_fit_of_ho_shells() {
        // Degenerate shells: E = N + 1 with multiplicity N + 1.
        let mut e = Vec::new();
        for shell in 0..40 {
            for _ in 0..=shell {
                e.push(shell as f64 + 1.0);
            }
        }
        let spec = Spectrum::new(e, "ho").unwrap();
        let u = unfold(&spec, FitMethod::thomas_fermi(2)).unwrap();
        assert_eq!(u.levels.len(), spec.len());
        let s = spacings(&u);
        assert!(s.iter().filter(|&&x| x == 0.0).count() > s.len() / 2);
        assert!((u.mean_spacing() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_unfolding() {
        let spec = synth_spectrum(EnsembleKind::Poisson, 4000, 11).unwrap();
        let u = unfold(&spec, FitMethod::polynomial()).unwrap();
        let s = spacings(&u);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 1.0).abs() <= 0.02);
        let d = ks_statistic(&s, |x| 1.0 - (-x).exp());
        assert!(ks_pvalue(d, s.len()) > 0.01, "KS {d}");
    }

    #[test]
    fn unfolding_is_idempotent() {
        let spec = synth_spectrum(EnsembleKind::Goe, 2000, 5).unwrap();
        let once = unfold(&spec, FitMethod::polynomial()).unwrap();
        let again = unfold(&Spectrum::new(once.levels.clone(), "unfolded").unwrap(), FitMethod::polynomial()).unwrap();
        let rms = (once.levels.iter().zip(&again.levels).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            / once.levels.len() as f64)
            .sqrt();
        assert!(rms < 1e-2, "{rms}");
    }

    #[test]
    fn too_short_and_degenerate() {
        assert!(matches!(unfold(&picket(50), FitMethod::polynomial()), Err(Error::SeriesTooShort { .. })));
        let flat = Spectrum::new(vec![1.0; 200], "flat").unwrap();
        assert!(matches!(unfold(&flat, FitMethod::polynomial()), Err(Error::FitFailure { .. })));
        let neg = Spectrum::new((0..200).map(|m| m as f64 - 100.0).collect(), "neg").unwrap();
        assert!(matches!(unfold(&neg, FitMethod::thomas_fermi(5)), Err(Error::FitFailure { .. })));
        assert!(unfold_auto(&neg, Some(5)).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn affine_invariance(a in 0.1f64..20.0, b in -50.0f64..50.0, seed in 0u64..1000) {
            let spec = synth_spectrum(EnsembleKind::Poisson, 600, seed).unwrap();
            let moved = Spectrum::new(spec.energies.iter().map(|e| a * e + b).collect(), "moved").unwrap();
            let s0 = spacings(&unfold(&spec, FitMethod::polynomial()).unwrap());
            let s1 = spacings(&unfold(&moved, FitMethod::polynomial()).unwrap());
            for (x, y) in s0.iter().zip(&s1) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }

        #[test]
        fn count_conservation_and_unit_mean(seed in 0u64..1000, n in 150usize..800) {
            let spec = synth_spectrum(EnsembleKind::Poisson, n, seed).unwrap();
            let u = unfold(&spec, FitMethod::polynomial()).unwrap();
            prop_assert_eq!(u.levels.len(), n);
            let s = spacings(&u);
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            prop_assert!((0.98..=1.02).contains(&mean));
            prop_assert!(u.levels.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!(s.iter().all(|&x| x >= 0.0));
        }
    }
}
