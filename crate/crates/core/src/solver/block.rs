//! Dense block kernels shared by the iterative solver: Rayleigh-Ritz with
//! Cholesky (or Householder) orthonormalization and Chebyshev filtering.

use faer::{Mat, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::operator::{Hamiltonian, Propagator};
use crate::C64;

/// Orthonormal block (Euclidean), its image under `H`, and Ritz values.
pub(crate) struct Ritz {
    pub psi: Mat<C64>,
    pub hpsi: Mat<C64>,
    pub values: Vec<f64>,
}

impl Ritz {
    /// `‖Hψ_j − λ_j ψ_j‖ / ‖ψ_j‖` for the first `count` columns.
    pub fn residuals(&self, count: usize) -> Vec<f64> {
        (0..count)
            .map(|j| {
                let p = self.psi.col_as_slice(j);
                let h = self.hpsi.col_as_slice(j);
                let lam = self.values[j];
                let r: f64 = h.iter().zip(p).map(|(h, p)| (h - p * lam).norm_sqr()).sum();
                let n: f64 = p.iter().map(|z| z.norm_sqr()).sum();
                (r / n).sqrt()
            })
            .collect()
    }
}

pub(crate) fn random_block(rows: usize, cols: usize, seed: u64) -> Mat<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Mat::<C64>::zeros(rows, cols);
    for j in 0..cols {
        for z in m.col_as_slice_mut(j) {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z = C64::new(re, im);
        }
    }
    m
}

pub(crate) fn apply_block(h: &mut Hamiltonian, x: &Mat<C64>) -> Result<Mat<C64>> {
    let mut out = Mat::<C64>::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        h.apply_into(x.col_as_slice(j), out.col_as_slice_mut(j))?;
    }
    Ok(out)
}

pub(crate) fn propagate_block(prop: &mut Propagator, x: &mut Mat<C64>, steps: usize) {
    for j in 0..x.ncols() {
        prop.step(x.col_as_slice_mut(j), steps);
    }
}

fn hermitian_part(a: &mut Mat<C64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..=i {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
}

fn eigh(a: &Mat<C64>) -> Result<(Vec<f64>, Mat<C64>)> {
    let eig = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let values = (0..a.nrows()).map(|k| eig.S().column_vector()[k].re).collect();
    Ok((values, eig.U().to_owned()))
}

/// Condition bound above which Cholesky orthonormalization loses too many
/// digits and Householder QR is used instead.
const CHOL_DIAG_RATIO: f64 = 1e4;

/// Rayleigh-Ritz on `span(psi)` with the exact operator.
pub(crate) fn rayleigh_ritz(h: &mut Hamiltonian, psi: Mat<C64>) -> Result<Ritz> {
    let s = psi.adjoint() * &psi;
    if let Ok(llt) = s.llt(Side::Lower) {
        let l = llt.L().to_owned();
        let diag: Vec<f64> = (0..l.nrows()).map(|k| l[(k, k)].re).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if min > 0.0 && max / min < CHOL_DIAG_RATIO {
            let hpsi = apply_block(h, &psi)?;
            let mut y = psi.adjoint() * &hpsi;
            l.solve_lower_triangular_in_place(y.as_mut());
            let mut a = y.adjoint().to_owned();
            l.solve_lower_triangular_in_place(a.as_mut());
            hermitian_part(&mut a);
            let (values, mut c) = eigh(&a)?;
            l.adjoint().solve_upper_triangular_in_place(c.as_mut());
            return Ok(Ritz { psi: &psi * &c, hpsi: &hpsi * &c, values });
        }
    }
    let q = psi.qr().compute_thin_Q();
    drop(psi);
    let hq = apply_block(h, &q)?;
    let mut a = q.adjoint() * &hq;
    hermitian_part(&mut a);
    let (values, u) = eigh(&a)?;
    Ok(Ritz { psi: &q * &u, hpsi: &hq * &u, values })
}

/// Degree for which the filter amplifies `lo` over the damped interval
/// `[cut, hi]` by at most `e^range`.
pub(crate) fn filter_degree(lo: f64, cut: f64, hi: f64, range: f64, max_degree: usize) -> usize {
    let x = 1.0 + 2.0 * (cut - lo).max(0.0) / (hi - cut).max(f64::MIN_POSITIVE);
    let per = x.acosh();
    if per <= 0.0 {
        return max_degree;
    }
    ((range / per).floor() as usize).clamp(2, max_degree)
}

/// Scaled Chebyshev filter damping `[cut, hi]` and normalized at `lo`.
pub(crate) fn chebyshev_filter(
    h: &mut Hamiltonian,
    x: &Mat<C64>,
    degree: usize,
    lo: f64,
    cut: f64,
    hi: f64,
) -> Result<Mat<C64>> {
    let n = x.nrows();
    let e = 0.5 * (hi - cut);
    let c = 0.5 * (hi + cut);
    let sigma1 = e / (lo - c);
    let mut out = Mat::<C64>::zeros(n, x.ncols());
    let mut prev = vec![C64::new(0.0, 0.0); n];
    let mut cur = vec![C64::new(0.0, 0.0); n];
    let mut hv = vec![C64::new(0.0, 0.0); n];
    for j in 0..x.ncols() {
        let x0 = x.col_as_slice(j);
        prev.copy_from_slice(x0);
        h.apply_into(&prev, &mut hv)?;
        for k in 0..n {
            cur[k] = (hv[k] - prev[k] * c) * (sigma1 / e);
        }
        let mut sigma = sigma1;
        for _ in 1..degree {
            let sigma_new = 1.0 / (2.0 / sigma1 - sigma);
            h.apply_into(&cur, &mut hv)?;
            for k in 0..n {
                let next = (hv[k] - cur[k] * c) * (2.0 * sigma_new / e) - prev[k] * (sigma * sigma_new);
                prev[k] = cur[k];
                cur[k] = next;
            }
            sigma = sigma_new;
        }
        out.col_as_slice_mut(j).copy_from_slice(&cur);
    }
    Ok(out)
}
