//! Dense diagonalization of the discretized Hamiltonian for small grids.

use std::f64::consts::PI;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Grid2D, PotentialGrid};
use crate::operator::kinetic_symbols;
use crate::C64;

use super::{normalize_state, EigenSet};

pub const DENSE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KineticScheme {
    /// Fourier collocation, matrix elements by explicit DFT sums.
    Spectral,
    /// Five-point stencil with Peierls hopping phases.
    FivePoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolution {
    pub eigen: EigenSet,
    pub scheme: KineticScheme,
    /// Per-state estimate of the discretization error: for the five-point
    /// scheme `|E − ⟨ψ|H_spectral|ψ⟩|`, for the spectral scheme the kinetic
    /// weight in the outer quarter of the Fourier band.
    pub error_bound: Vec<f64>,
}

/// Circulant kernel `c[d] = (1/n) Σ_m s[m] e^{2πi m d/n}`.
fn circulant_row(symbol: &[f64]) -> Vec<C64> {
    let n = symbol.len();
    (0..n)
        .map(|d| {
            let mut acc = C64::new(0.0, 0.0);
            for (m, &s) in symbol.iter().enumerate() {
                let phase = 2.0 * PI * ((m * d) % n) as f64 / n as f64;
                acc += C64::from_polar(s, phase);
            }
            acc / n as f64
        })
        .collect()
}

fn spectral_matrix(pot: &PotentialGrid, b: f64) -> Mat<C64> {
    let grid = &pot.grid;
    let (nx, ny) = (grid.nx, grid.ny);
    let (sx, sy) = kinetic_symbols(grid, b);
    let mut h = Mat::<C64>::zeros(grid.len(), grid.len());
    for j in 0..ny {
        let row = circulant_row(&sx[j * nx..(j + 1) * nx]);
        for i in 0..nx {
            for ip in 0..nx {
                let d = (i + nx - ip) % nx;
                h[(grid.index(i, j), grid.index(ip, j))] += row[d];
            }
        }
    }
    for i in 0..nx {
        let row = circulant_row(&sy[i * ny..(i + 1) * ny]);
        for j in 0..ny {
            for jp in 0..ny {
                let d = (j + ny - jp) % ny;
                h[(grid.index(i, j), grid.index(i, jp))] += row[d];
            }
        }
    }
    for (k, &v) in pot.values.iter().enumerate() {
        h[(k, k)] += v;
    }
    h
}

fn five_point_matrix(pot: &PotentialGrid, b: f64) -> Mat<C64> {
    let grid = &pot.grid;
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx(), grid.hy());
    let tx = 0.5 / (hx * hx);
    let ty = 0.5 / (hy * hy);
    let mut h = Mat::<C64>::zeros(grid.len(), grid.len());
    for i in 0..nx {
        for j in 0..ny {
            let k = grid.index(i, j);
            h[(k, k)] += C64::new(2.0 * tx + 2.0 * ty + pot.values[k], 0.0);
            // Hop to +x carries e^{i A_x hx}, A_x = B y / 2.
            let px = C64::from_polar(1.0, 0.5 * b * grid.y(j) * hx);
            let kx = grid.index((i + 1) % nx, j);
            h[(k, kx)] -= px * tx;
            h[(kx, k)] -= px.conj() * tx;
            // Hop to +y carries e^{i A_y hy}, A_y = −B x / 2.
            let py = C64::from_polar(1.0, -0.5 * b * grid.x(i) * hy);
            let ky = grid.index(i, (j + 1) % ny);
            h[(k, ky)] -= py * ty;
            h[(ky, k)] -= py.conj() * ty;
        }
    }
    h
}

/// Dense Hermitian matrix of the discretized Hamiltonian.
pub fn dense_hamiltonian(pot: &PotentialGrid, b: f64, scheme: KineticScheme) -> Result<Mat<C64>> {
    let size = pot.grid.len();
    if size > DENSE_LIMIT {
        return Err(Error::ProblemTooLarge { size, limit: DENSE_LIMIT });
    }
    if pot.values.len() != size {
        return Err(Error::GridMismatch { expected: size, got: pot.values.len() });
    }
    Ok(match scheme {
        KineticScheme::Spectral => spectral_matrix(pot, b),
        KineticScheme::FivePoint => five_point_matrix(pot, b),
    })
}

fn eigh_complex(h: &Mat<C64>) -> Result<(Vec<f64>, Mat<C64>)> {
    let eig = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let values = (0..h.nrows()).map(|k| eig.S().column_vector()[k].re).collect();
    Ok((values, eig.U().to_owned()))
}

fn eigh_real(h: &Mat<C64>) -> Result<(Vec<f64>, Mat<C64>)> {
    let n = h.nrows();
    let real = Mat::<f64>::from_fn(n, n, |i, j| h[(i, j)].re);
    let eig = real.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let values = (0..n).map(|k| eig.S().column_vector()[k]).collect();
    let u = eig.U();
    Ok((values, Mat::<C64>::from_fn(n, n, |i, j| C64::new(u[(i, j)], 0.0))))
}

/// Kinetic scale times the weight of `psi` in the outer quarter of the
/// Fourier band along either axis.
fn spectral_error_bound(grid: &Grid2D, b: f64, psi: &[C64]) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut planner = rustfft::FftPlanner::new();
    let fx = planner.plan_fft_forward(nx);
    let fy = planner.plan_fft_forward(ny);
    let mut data = psi.to_vec();
    for row in data.chunks_mut(ny) {
        fy.process(row);
    }
    let mut col = vec![C64::new(0.0, 0.0); nx];
    for j in 0..ny {
        for i in 0..nx {
            col[i] = data[i * ny + j];
        }
        fx.process(&mut col);
        for i in 0..nx {
            data[i * ny + j] = col[i];
        }
    }
    let band = |m: usize, n: usize| m.min(n - m) >= 3 * n / 8;
    let mut outer = 0.0;
    let mut total = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            let z = data[i * ny + j].norm_sqr();
            total += z;
            if band(i, nx) || band(j, ny) {
                outer += z;
            }
        }
    }
    let (sx, sy) = kinetic_symbols(grid, b);
    let kmax = sx.iter().chain(&sy).copied().fold(0.0, f64::max);
    if total == 0.0 {
        0.0
    } else {
        kmax * outer / total
    }
}

/// Lowest `k` eigenpairs with the spectral kinetic term.
pub fn solve_dense(pot: &PotentialGrid, b: f64, k: usize) -> Result<EigenSet> {
    Ok(solve_dense_with(pot, b, k, KineticScheme::Spectral)?.eigen)
}

pub fn solve_dense_with(pot: &PotentialGrid, b: f64, k: usize, scheme: KineticScheme) -> Result<DenseSolution> {
    let h = dense_hamiltonian(pot, b, scheme)?;
    let n = h.nrows();
    if k < 1 || k > n {
        return Err(Error::InvalidParameter(format!("requested {k} states of {n}")));
    }
    let (values, u) = if b == 0.0 { eigh_real(&h)? } else { eigh_complex(&h)? };
    let grid = pot.grid;
    let u = u.subcols(0, k).to_owned();
    let hu = &h * &u;
    let spectral_image = match scheme {
        KineticScheme::Spectral => None,
        KineticScheme::FivePoint => Some(&spectral_matrix(pot, b) * &u),
    };
    let mut energies = Vec::with_capacity(k);
    let mut states = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    let mut error_bound = Vec::with_capacity(k);
    for j in 0..k {
        let v = u.col_as_slice(j).to_vec();
        let e = values[j];
        let r2: f64 = hu.col_as_slice(j).iter().zip(&v).map(|(h, p)| (h - p * e).norm_sqr()).sum();
        let bound = match &spectral_image {
            None => spectral_error_bound(&grid, b, &v),
            Some(hs) => {
                let q: C64 = hs.col_as_slice(j).iter().zip(&v).map(|(h, p)| p.conj() * h).sum();
                (q.re - e).abs()
            }
        };
        let mut s = v;
        normalize_state(&grid, &mut s);
        energies.push(e);
        states.push(s);
        residuals.push(r2.sqrt());
        error_bound.push(bound);
    }
    Ok(DenseSolution { eigen: EigenSet { energies, states, grid, b, residuals }, scheme, error_bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::fock_darwin_levels;
    use crate::model::{build_potential_grid, BumpField, PotentialSpec};
    use crate::operator::apply_hamiltonian;

    fn ho(n: usize, half: f64) -> PotentialGrid {
        let grid = Grid2D::square(n, half).unwrap();
        build_potential_grid(&grid, &PotentialSpec::unperturbed(2, 1.0, 0.0), &BumpField::empty())
    }

    #[test]
    fn spectral_matrix_matches_fft_operator() {
        let pot = ho(16, 4.0);
        let b = 0.8;
        let h = dense_hamiltonian(&pot, b, KineticScheme::Spectral).unwrap();
        let psi: Vec<C64> = (0..pot.grid.len()).map(|k| C64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos())).collect();
        let fft = apply_hamiltonian(&psi, &pot, b).unwrap();
        for row in 0..psi.len() {
            let mut acc = C64::new(0.0, 0.0);
            for col in 0..psi.len() {
                acc += h[(row, col)] * psi[col];
            }
            assert!((acc - fft[row]).norm() < 1e-9, "{row}");
        }
    }

    #[test]
    fn harmonic_ladder_both_schemes() {
        let pot = ho(32, 6.0);
        let want = [1.0, 2.0, 2.0, 3.0, 3.0, 3.0];
        let sp = solve_dense_with(&pot, 0.0, 6, KineticScheme::Spectral).unwrap();
        for (e, w) in sp.eigen.energies.iter().zip(want) {
            assert!((e - w).abs() < 1e-6, "{e}");
        }
        let fp = solve_dense_with(&ho(48, 6.0), 0.0, 6, KineticScheme::FivePoint).unwrap();
        for ((e, w), bound) in fp.eigen.energies.iter().zip(want).zip(&fp.error_bound) {
            assert!((e - w).abs() <= 2.0 * bound + 1e-6, "{e} vs {w} bound {bound}");
            assert!((e - w).abs() < 0.05);
        }
    }

    #[test]
    fn fock_darwin_spectrum_in_field() {
        let pot = ho(32, 6.0);
        let b = 0.5;
        let set = solve_dense(&pot, b, 10).unwrap();
        let want = fock_darwin_levels(1.0, b, 20.0);
        for (e, (_, w)) in set.energies.iter().zip(want) {
            assert!((e - w).abs() < 1e-6 * w, "{e} vs {w}");
        }
        assert!(set.orthonormality_defect() < 1e-10);
        let peierls = solve_dense_with(&pot, b, 10, KineticScheme::FivePoint).unwrap();
        let want = fock_darwin_levels(1.0, b, 20.0);
        for (e, (_, w)) in peierls.eigen.energies.iter().zip(want) {
            assert!((e - w).abs() < 0.05 * w, "{e} vs {w}");
        }
    }

    #[test]
    fn size_guard() {
        let pot = ho(128, 6.0);
        assert!(matches!(solve_dense(&pot, 0.0, 4), Err(Error::ProblemTooLarge { .. })));
    }
}
