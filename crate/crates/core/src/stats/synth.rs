//! Synthetic calibration spectra.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};

use super::EnsembleKind;
use crate::error::{Error, Result};
use crate::spectra::Spectrum;

const MIN_LEVELS: usize = 100;

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e` (`e[i]` couples `i` and `i + 1`), by implicit QL.
/// Returned in ascending order.
pub fn tridiagonal_eigenvalues(d: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    let n = d.len();
    if e.len() + 1 != n.max(1) {
        return Err(Error::InvalidParameter("off-diagonal must have n - 1 entries".into()));
    }
    let mut d = d.to_vec();
    let mut e: Vec<f64> = e.iter().copied().chain(std::iter::once(0.0)).collect();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Linalg("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Semicircle staircase for eigenvalues scaled to the unit radius.
fn semicircle_count(x: f64, n: usize) -> f64 {
    let x = x.clamp(-1.0, 1.0);
    n as f64 * (0.5 + (x * (1.0 - x * x).sqrt() + x.asin()) / PI)
}

/// Poisson: cumulative sums of unit exponentials (`n` levels). GOE/GUE:
/// eigenvalues of an `n × n` Gaussian ensemble matrix in its tridiagonal
/// β-Hermite form, unfolded by the semicircle law; the central `n/2`
/// levels are returned.
pub fn synth_spectrum(kind: EnsembleKind, n: usize, seed: u64) -> Result<Spectrum> {
    if n < MIN_LEVELS {
        return Err(Error::InvalidParameter(format!("need at least {MIN_LEVELS} levels, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = format!("synthetic:{}:{n}:{seed}", match kind {
        EnsembleKind::Poisson => "poisson",
        EnsembleKind::Goe => "goe",
        EnsembleKind::Gue => "gue",
    });
    let beta = match kind {
        EnsembleKind::Poisson => {
            let mut acc = 0.0;
            let levels = (0..n)
                .map(|_| {
                    let x: f64 = Exp1.sample(&mut rng);
                    acc += x;
                    acc
                })
                .collect();
            return Spectrum::new(levels, tag);
        }
        EnsembleKind::Goe => 1.0,
        EnsembleKind::Gue => 2.0,
    };
    let diag: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let off = (1..n)
        .map(|k| {
            let chi = ChiSquared::new(beta * (n - k) as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok((chi.sample(&mut rng) / 2.0f64).sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    let eig = tridiagonal_eigenvalues(&diag, &off)?;
    let radius = (2.0 * beta * n as f64).sqrt();
    let levels = eig[n / 4..n - n / 4].iter().map(|&x| semicircle_count(x / radius, n)).collect();
    Spectrum::new(levels, tag)
}
