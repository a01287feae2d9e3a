//! Spectral rigidity `Δ3(L)`, its reference curves and the mixing fit `Q`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{golden_min, EnsembleKind, MixingResult};
use crate::error::{Error, Result};
use crate::spectra::UnfoldedSpectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta3Curve {
    pub l_axis: Vec<f64>,
    pub values: Vec<f64>,
    /// Windows averaged at each `L`.
    pub n_windows: Vec<usize>,
}

/// `L = 0.5, 1.0, …, 30`.
pub fn default_l_axis() -> Vec<f64> {
    (1..=60).map(|k| 0.5 * k as f64).collect()
}

/// `(1/L) min_{a,b} ∫_α^{α+L} (n(ε) − aε − b)² dε` for the levels `x`
/// (sorted, shifted so the window starts at 0) inside a window of length `l`.
fn window_delta3(x: &[f64], l: f64) -> f64 {
    let mut i1 = 0.0;
    let mut i2 = 0.0;
    let mut ix = 0.0;
    for (k, &xi) in x.iter().enumerate() {
        let rest = l - xi;
        i1 += rest;
        i2 += (2 * k + 1) as f64 * rest;
        ix += 0.5 * (l * l - xi * xi);
    }
    let centred = ix - 0.5 * l * i1;
    let min = i2 - i1 * i1 / l - 12.0 * centred * centred / (l * l * l);
    (min / l).max(0.0)
}

/// Rigidity curve averaged over windows starting every `L/4` across the
/// unfolded window.
pub fn delta3(unf: &UnfoldedSpectrum, l_axis: &[f64]) -> Result<Delta3Curve> {
    let levels = unf.window_levels();
    if l_axis.is_empty() || l_axis.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidParameter("L axis must hold positive values".into()));
    }
    if l_axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("L axis must be increasing".into()));
    }
    let l_max = l_axis[l_axis.len() - 1];
    let span = if levels.len() < 2 { 0.0 } else { levels[levels.len() - 1] - levels[0] };
    if span < 2.0 * l_max {
        return Err(Error::WindowTooShort { needed: 2.0 * l_max, available: span });
    }
    let start = levels[0];
    let end = levels[levels.len() - 1];
    let mut values = Vec::with_capacity(l_axis.len());
    let mut n_windows = Vec::with_capacity(l_axis.len());
    let mut shifted = Vec::new();
    for &l in l_axis {
        let stride = 0.25 * l;
        let count = ((end - start - l) / stride + 1e-9).floor() as usize + 1;
        let mut acc = 0.0;
        let mut lo = 0usize;
        for w in 0..count {
            let a = start + w as f64 * stride;
            while lo < levels.len() && levels[lo] < a {
                lo += 1;
            }
            shifted.clear();
            shifted.extend(levels[lo..].iter().take_while(|&&e| e <= a + l).map(|&e| e - a));
            acc += window_delta3(&shifted, l);
        }
        values.push(acc / count as f64);
        n_windows.push(count);
    }
    Ok(Delta3Curve { l_axis: l_axis.to_vec(), values, n_windows })
}

/// Slope and offset of the large-`L` form `a ln L + c`.
fn log_form(kind: EnsembleKind) -> Option<(f64, f64)> {
    match kind {
        EnsembleKind::Poisson => None,
        EnsembleKind::Goe => Some((1.0 / (PI * PI), -0.007)),
        EnsembleKind::Gue => Some((0.5 / (PI * PI), 0.058)),
    }
}

pub fn delta3_reference(l: f64, kind: EnsembleKind) -> f64 {
    match log_form(kind) {
        None => l / 15.0,
        Some((a, c)) => a * l.ln() + c,
    }
}

/// Point where the line through the origin touches `a ln L + c`; below it the
/// chaotic term follows that line.
fn tangent_point(a: f64, c: f64) -> f64 {
    (1.0 - c / a).exp()
}

/// Chaotic rigidity with the small-argument branch used by [`fit_Q`].
pub fn chaotic_branch(l: f64, kind: EnsembleKind) -> f64 {
    match log_form(kind) {
        None => l / 15.0,
        Some((a, c)) => {
            let lt = tangent_point(a, c);
            if l >= lt {
                a * l.ln() + c
            } else {
                (a / lt) * l.max(0.0)
            }
        }
    }
}

fn mixing_model(l: f64, q: f64, kind: EnsembleKind) -> f64 {
    q * l / 15.0 + chaotic_branch((1.0 - q) * l, kind)
}

fn rms(curve: &Delta3Curve, q: f64, kind: EnsembleKind) -> f64 {
    let sum: f64 = curve
        .l_axis
        .iter()
        .zip(&curve.values)
        .map(|(&l, &v)| (v - mixing_model(l, q, kind)).powi(2))
        .sum();
    (sum / curve.l_axis.len() as f64).sqrt()
}

/// Least-squares `Q` in `Δ3(L) ≈ Δ3_Poisson(QL) + Δ3_kind((1−Q)L)`.
#[allow(non_snake_case)]
pub fn fit_Q(curve: &Delta3Curve, kind: EnsembleKind) -> Result<MixingResult> {
    if curve.l_axis.is_empty() || curve.l_axis.len() != curve.values.len() {
        return Err(Error::InvalidParameter("empty or inconsistent rigidity curve".into()));
    }
    let chaotic = if kind == EnsembleKind::Poisson { EnsembleKind::Goe } else { kind };
    let profile: Vec<(f64, f64)> = (0..=100).map(|k| {
        let q = k as f64 / 100.0;
        (q, rms(curve, q, chaotic))
    }).collect();
    let best = profile.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).map(|(i, _)| i).unwrap();
    let a = profile[best.saturating_sub(1)].0;
    let b = profile[(best + 1).min(100)].0;
    let refined = golden_min(a, b, |q| rms(curve, q, chaotic), 1e-9);
    let (q, residual) = [(refined, rms(curve, refined, chaotic)), profile[best]]
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap();
    let (sa, sc) = log_form(chaotic).unwrap();
    let lt = tangent_point(sa, sc);
    Ok(MixingResult {
        estimate: q.clamp(0.0, 1.0),
        raw: q,
        residual,
        ensemble: Some(chaotic),
        profile,
        note: Some(format!(
            "chaotic term linear through the origin below L = {lt:.6}, tangent to the log form there"
        )),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{unfold, FitMethod, Spectrum};
    use crate::stats::synth_spectrum;
    use proptest::prelude::*;

    fn picket(n: usize) -> UnfoldedSpectrum {
        unfold(&Spectrum::new((0..n).map(|k| k as f64).collect(), "picket").unwrap(), FitMethod::polynomial()).unwrap()
    }

    fn curve_of(kind: EnsembleKind, seed: u64) -> Delta3Curve {
        let spec = synth_spectrum(kind, 4000, seed).unwrap();
        delta3(&unfold(&spec, FitMethod::polynomial()).unwrap(), &default_l_axis()).unwrap()
    }

    #[test]
    fn references() {
        assert!((delta3_reference(15.0, EnsembleKind::Poisson) - 1.0).abs() < 1e-15);
        assert!((delta3_reference(30.0, EnsembleKind::Goe) - 0.3376).abs() < 1e-4);
        assert!((delta3_reference(30.0, EnsembleKind::Gue) - 0.2303).abs() < 1e-4);
        for kind in [EnsembleKind::Goe, EnsembleKind::Gue] {
            let (a, c) = log_form(kind).unwrap();
            let lt = tangent_point(a, c);
            let eps = 1e-7;
            assert!((chaotic_branch(lt - eps, kind) - chaotic_branch(lt + eps, kind)).abs() < 1e-7);
            assert_eq!(chaotic_branch(0.0, kind), 0.0);
        }
    }

    #[test]
    fn picket_fence_saturates() {
        let curve = delta3(&picket(1000), &[1.0, 10.0, 20.0, 30.0]).unwrap();
        assert!(curve.values[0] < curve.values[1]);
        for v in &curve.values[1..] {
            assert!((v - 1.0 / 12.0).abs() < 2e-3, "{v}");
        }
    }

    #[test]
    fn single_level_window_closed_form() {
        let l = 2.0;
        let x = [0.7];
        let f = |e: f64| if e >= 0.7 { 1.0 } else { 0.0 };
        let n = 200_000;
        let h = l / n as f64;
        let pts: Vec<(f64, f64)> = (0..n).map(|k| ((k as f64 + 0.5) * h, f((k as f64 + 0.5) * h))).collect();
        let (sx, sy, sxx, sxy) = pts.iter().fold((0.0, 0.0, 0.0, 0.0), |a, &(x, y)| (a.0 + x, a.1 + y, a.2 + x * x, a.3 + x * y));
        let m = n as f64;
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        let icpt = (sy - slope * sx) / m;
        let brute: f64 = pts.iter().map(|&(x, y)| (y - slope * x - icpt).powi(2)).sum::<f64>() * h / l;
        assert!((window_delta3(&x, l) - brute).abs() < 1e-6);
    }

    #[test]
    fn poisson_and_rmt_calibration() {
        let p = curve_of(EnsembleKind::Poisson, 7);
        for (&l, &v) in p.l_axis.iter().zip(&p.values) {
            if (1.0..=20.0).contains(&l) {
                assert!((v / (l / 15.0) - 1.0).abs() < 0.1, "L={l} {v}");
            }
        }
        for kind in [EnsembleKind::Goe, EnsembleKind::Gue] {
            let c = curve_of(kind, 7);
            for (&l, &v) in c.l_axis.iter().zip(&c.values) {
                if l >= 5.0 {
                    assert!((v - delta3_reference(l, kind)).abs() < 0.05, "{kind:?} L={l} {v}");
                }
            }
        }
    }

    #[test]
    fn fit_recovers_own_model() {
        let l_axis = default_l_axis();
        let values: Vec<f64> = l_axis.iter().map(|&l| l / 15.0).collect();
        let curve = Delta3Curve { n_windows: vec![1; l_axis.len()], l_axis, values };
        let r = fit_Q(&curve, EnsembleKind::Goe).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert!(r.residual < 1e-6);
        assert!(r.note.is_some());
    }

    #[test]
    fn fit_q_limits() {
        assert!(fit_Q(&curve_of(EnsembleKind::Poisson, 3), EnsembleKind::Goe).unwrap().estimate >= 0.85);
        assert!(fit_Q(&curve_of(EnsembleKind::Goe, 3), EnsembleKind::Goe).unwrap().estimate <= 0.15);
    }

    #[test]
    fn too_short() {
        assert!(matches!(delta3(&picket(120), &[30.0, 70.0]), Err(Error::WindowTooShort { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn translation_invariance(shift in -1e3f64..1e3, seed in 0u64..100) {
            let spec = synth_spectrum(EnsembleKind::Poisson, 400, seed).unwrap();
            let unf = unfold(&spec, FitMethod::Polynomial { degree: 1 }).unwrap();
            let mut moved = unf.clone();
            for e in &mut moved.levels {
                *e += shift;
            }
            let axis = [0.5, 2.0, 7.0, 15.0];
            let a = delta3(&unf, &axis).unwrap();
            let b = delta3(&moved, &axis).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-10, "{} {}", x, y);
            }
        }

        #[test]
        fn values_non_negative(seed in 0u64..100) {
            let spec = synth_spectrum(EnsembleKind::Goe, 400, seed).unwrap();
            let c = delta3(&unfold(&spec, FitMethod::polynomial()).unwrap(), &default_l_axis()[..20]).unwrap();
            prop_assert!(c.values.iter().all(|&v| v >= 0.0));
            let q = fit_Q(&c, EnsembleKind::Goe).unwrap();
            prop_assert!((0.0..=1.0).contains(&q.estimate) && q.residual >= 0.0);
        }
    }
}
