//! Detrended fluctuation analysis of the spacing series.

use super::MixingResult;
use crate::error::{Error, Result};

pub const DFA_MIN_LEN: usize = 500;
const MIN_BOX_SIZES: usize = 12;

/// Distinct box sizes, log-spaced over `[4, len/4]`.
fn box_sizes(len: usize) -> Vec<usize> {
    let lo = 4.0f64;
    let hi = (len / 4) as f64;
    let mut count = 16usize;
    loop {
        let mut sizes: Vec<usize> = (0..count)
            .map(|k| (lo * (hi / lo).powf(k as f64 / (count - 1) as f64)).round() as usize)
            .collect();
        sizes.dedup();
        if sizes.len() >= MIN_BOX_SIZES || count > 4 * len {
            return sizes;
        }
        count *= 2;
    }
}

/// Mean squared residual of a least-squares line through `y` against its
/// index.
fn detrended_msq(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let xm = 0.5 * (n - 1.0);
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    y.iter()
        .enumerate()
        .map(|(i, &v)| (v - ym - slope * (i as f64 - xm)).powi(2))
        .sum::<f64>()
        / n
}

/// `(box size, F)` pairs for the profile of `s − 1`, non-overlapping boxes
/// with linear detrending.
pub fn dfa_fluctuations(s: &[f64]) -> Result<Vec<(usize, f64)>> {
    if s.len() < DFA_MIN_LEN {
        return Err(Error::SeriesTooShort { len: s.len(), needed: DFA_MIN_LEN });
    }
    let mut acc = 0.0;
    let profile: Vec<f64> = s
        .iter()
        .map(|&x| {
            acc += x - 1.0;
            acc
        })
        .collect();
    Ok(box_sizes(s.len())
        .into_iter()
        .map(|n| {
            let boxes = profile.len() / n;
            let msq: f64 = profile.chunks_exact(n).map(detrended_msq).sum::<f64>() / boxes as f64;
            (n, msq.sqrt())
        })
        .collect())
}

/// DFA exponent: least-squares slope of `ln F` against `ln n`, reported in
/// `[0, 0.75]` with the unclamped slope kept in `raw`.
pub fn dfa_alpha(s: &[f64]) -> Result<MixingResult> {
    let fl = dfa_fluctuations(s)?;
    if fl.iter().all(|&(_, f)| f <= 1e-12) {
        return Err(Error::SeriesDegenerate);
    }
    if fl.iter().any(|&(_, f)| f <= 0.0) {
        return Err(Error::SeriesDegenerate);
    }
    let pts: Vec<(f64, f64)> = fl.iter().map(|&(n, f)| ((n as f64).ln(), f.ln())).collect();
    let m = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    let slope = sxy / sxx;
    let residual = (pts.iter().map(|p| (p.1 - ym - slope * (p.0 - xm)).powi(2)).sum::<f64>() / m).sqrt();
    Ok(MixingResult {
        estimate: slope.clamp(0.0, 0.75),
        raw: slope,
        residual,
        ensemble: None,
        profile: fl.into_iter().map(|(n, f)| (n as f64, f)).collect(),
        note: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1};

    #[test]
    fn box_size_grid() {
        let sizes = box_sizes(500);
        assert!(sizes.len() >= MIN_BOX_SIZES);
        assert_eq!(sizes[0], 4);
        assert_eq!(*sizes.last().unwrap(), 125);
        assert!(sizes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn detrend_removes_lines() {
        let y: Vec<f64> = (0..50).map(|i| 3.0 - 0.2 * i as f64).collect();
        assert!(detrended_msq(&y) < 1e-20);
    }

    #[test]
    fn exponential_spacings_give_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: Vec<f64> = (0..4000).map(|_| Exp1.sample(&mut rng)).collect();
        let r = dfa_alpha(&s).unwrap();
        assert!((r.estimate - 0.5).abs() < 0.05, "{}", r.estimate);
    }

    #[test]
    fn errors() {
        assert!(matches!(dfa_alpha(&[1.0; 100]), Err(Error::SeriesTooShort { .. })));
        assert!(matches!(dfa_alpha(&[1.0; 1000]), Err(Error::SeriesDegenerate)));
    }
}
