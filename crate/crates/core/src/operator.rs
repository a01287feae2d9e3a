//! Spectral kinetic operators in the symmetric gauge, the split-operator
//! propagator and the canonical angular momentum.
//!
//! Gauge `A = ½B(y, −x)`, so `P_x = p_x + By/2`, `P_y = p_y − Bx/2` and
//! `[P_x, P_y] = iB`. Each of `P_x²`, `P_y²` is diagonal after a 1D Fourier
//! transform along its own axis, with a multiplier depending on the other
//! coordinate.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::{Grid2D, PotentialGrid};
use crate::C64;

/// Angular wavenumbers of an `n`-point periodic axis of length `len`, in FFT order.
pub fn wavenumbers(n: usize, len: f64) -> Vec<f64> {
    let dk = 2.0 * PI / len;
    (0..n)
        .map(|m| if m < n / 2 { m as f64 * dk } else { (m as f64 - n as f64) * dk })
        .collect()
}

/// Batched 1D transforms along either axis of an `nx × ny` array.
pub struct Transforms {
    nx: usize,
    ny: usize,
    fx: Arc<dyn Fft<f64>>,
    ifx: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    ify: Arc<dyn Fft<f64>>,
    tbuf: Vec<C64>,
    scratch: Vec<C64>,
}

impl Transforms {
    pub fn new(grid: &Grid2D) -> Self {
        let mut planner = FftPlanner::new();
        let fx = planner.plan_fft_forward(grid.nx);
        let ifx = planner.plan_fft_inverse(grid.nx);
        let fy = planner.plan_fft_forward(grid.ny);
        let ify = planner.plan_fft_inverse(grid.ny);
        let scratch_len = [&fx, &ifx, &fy, &ify].iter().map(|f| f.get_inplace_scratch_len()).max().unwrap_or(0);
        Self {
            nx: grid.nx,
            ny: grid.ny,
            fx,
            ifx,
            fy,
            ify,
            tbuf: vec![C64::new(0.0, 0.0); grid.len()],
            scratch: vec![C64::new(0.0, 0.0); scratch_len],
        }
    }

    /// Along y: line `i` is multiplied in Fourier space by `mult[i * ny + m]`.
    /// Multipliers must carry the `1/ny` normalization.
    pub fn apply_y(&mut self, data: &mut [C64], mult: &[f64]) {
        self.fy.process_with_scratch(data, &mut self.scratch);
        for (d, &m) in data.iter_mut().zip(mult) {
            *d *= m;
        }
        self.ify.process_with_scratch(data, &mut self.scratch);
    }

    /// Along x: line `j` is multiplied in Fourier space by `mult[j * nx + m]`.
    pub fn apply_x(&mut self, data: &mut [C64], mult: &[f64]) {
        let (nx, ny) = (self.nx, self.ny);
        for i in 0..nx {
            for j in 0..ny {
                self.tbuf[j * nx + i] = data[i * ny + j];
            }
        }
        self.fx.process_with_scratch(&mut self.tbuf, &mut self.scratch);
        for (d, &m) in self.tbuf.iter_mut().zip(mult) {
            *d *= m;
        }
        self.ifx.process_with_scratch(&mut self.tbuf, &mut self.scratch);
        for i in 0..nx {
            for j in 0..ny {
                data[i * ny + j] = self.tbuf[j * nx + i];
            }
        }
    }
}

/// `(k_x + B y_j / 2)` for line `j`, mode `m`, stored `j * nx + m`.
fn shifted_kx(grid: &Grid2D, b: f64) -> Vec<f64> {
    let kx = wavenumbers(grid.nx, grid.extent.width());
    let mut out = Vec::with_capacity(grid.len());
    for j in 0..grid.ny {
        let shift = 0.5 * b * grid.y(j);
        out.extend(kx.iter().map(|k| k + shift));
    }
    out
}

/// `(k_y − B x_i / 2)` for line `i`, mode `m`, stored `i * ny + m`.
fn shifted_ky(grid: &Grid2D, b: f64) -> Vec<f64> {
    let ky = wavenumbers(grid.ny, grid.extent.height());
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..grid.nx {
        let shift = -0.5 * b * grid.x(i);
        out.extend(ky.iter().map(|k| k + shift));
    }
    out
}

/// Kinetic multipliers `½ (k_x + By/2)²` (x-lines) and `½ (k_y − Bx/2)²`
/// (y-lines), unnormalized.
pub fn kinetic_symbols(grid: &Grid2D, b: f64) -> (Vec<f64>, Vec<f64>) {
    let sx = shifted_kx(grid, b).into_iter().map(|k| 0.5 * k * k).collect();
    let sy = shifted_ky(grid, b).into_iter().map(|k| 0.5 * k * k).collect();
    (sx, sy)
}

fn check_len(grid: &Grid2D, len: usize) -> Result<()> {
    if len != grid.len() {
        return Err(Error::GridMismatch { expected: grid.len(), got: len });
    }
    Ok(())
}

/// `H = ½(p + A)² + V` applied spectrally.
pub struct Hamiltonian {
    grid: Grid2D,
    b: f64,
    potential: Vec<f64>,
    kin_x: Vec<f64>,
    kin_y: Vec<f64>,
    kin_max: f64,
    tr: Transforms,
    buf: Vec<C64>,
}

impl Hamiltonian {
    pub fn new(pot: &PotentialGrid, b: f64) -> Self {
        let grid = pot.grid;
        let (sx, sy) = kinetic_symbols(&grid, b);
        let kin_max = sx.iter().copied().fold(0.0, f64::max) + sy.iter().copied().fold(0.0, f64::max);
        let kin_x = sx.into_iter().map(|v| v / grid.nx as f64).collect();
        let kin_y = sy.into_iter().map(|v| v / grid.ny as f64).collect();
        Self {
            grid,
            b,
            potential: pot.values.clone(),
            kin_x,
            kin_y,
            kin_max,
            tr: Transforms::new(&grid),
            buf: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn field(&self) -> f64 {
        self.b
    }

    /// Upper bound on the spectrum of the discrete operator.
    pub fn upper_bound(&self) -> f64 {
        self.kin_max + self.potential.iter().copied().fold(0.0, f64::max)
    }

    pub fn apply_into(&mut self, input: &[C64], out: &mut [C64]) -> Result<()> {
        check_len(&self.grid, input.len())?;
        check_len(&self.grid, out.len())?;
        out.copy_from_slice(input);
        self.tr.apply_y(out, &self.kin_y);
        self.buf.copy_from_slice(input);
        self.tr.apply_x(&mut self.buf, &self.kin_x);
        for ((o, b), (x, v)) in out.iter_mut().zip(&self.buf).zip(input.iter().zip(&self.potential)) {
            *o += *b + *x * *v;
        }
        Ok(())
    }

    pub fn apply(&mut self, input: &[C64]) -> Result<Vec<C64>> {
        let mut out = vec![C64::new(0.0, 0.0); input.len()];
        self.apply_into(input, &mut out)?;
        Ok(out)
    }
}

/// One-shot `H ψ`.
pub fn apply_hamiltonian(state: &[C64], pot: &PotentialGrid, b: f64) -> Result<Vec<C64>> {
    check_len(&pot.grid, state.len())?;
    Hamiltonian::new(pot, b).apply(state)
}

/// Strang step `e^{−τV/2} e^{−τT} e^{−τV/2}` with the exact magnetic
/// kinetic factorization `e^{−τT} = e^{−(C/2)P_x²} e^{−(S/2)P_y²} e^{−(C/2)P_x²}`,
/// `C = tanh(τB/2)/B`, `S = sinh(τB)/B`.
pub struct Propagator {
    half_v: Vec<f64>,
    stage_x: Vec<f64>,
    stage_y: Vec<f64>,
    single_x: bool,
    tr: Transforms,
}

impl Propagator {
    pub fn new(pot: &PotentialGrid, b: f64, dtau: f64) -> Self {
        let grid = pot.grid;
        let (c, s) = if b == 0.0 {
            (0.5 * dtau, dtau)
        } else {
            ((0.5 * dtau * b).tanh() / b, (dtau * b).sinh() / b)
        };
        let single_x = b == 0.0;
        let cx = if single_x { 2.0 * c } else { c };
        let stage_x = shifted_kx(&grid, b)
            .into_iter()
            .map(|k| (-0.5 * cx * k * k).exp() / grid.nx as f64)
            .collect();
        let stage_y = shifted_ky(&grid, b)
            .into_iter()
            .map(|k| (-0.5 * s * k * k).exp() / grid.ny as f64)
            .collect();
        let half_v = pot.values.iter().map(|v| (-0.5 * dtau * v).exp()).collect();
        Self { half_v, stage_x, stage_y, single_x, tr: Transforms::new(&grid) }
    }

    /// Kinetic factor alone.
    pub fn kinetic(&mut self, psi: &mut [C64]) {
        self.tr.apply_x(psi, &self.stage_x);
        self.tr.apply_y(psi, &self.stage_y);
        if !self.single_x {
            self.tr.apply_x(psi, &self.stage_x);
        }
    }

    /// `steps` consecutive Strang steps.
    pub fn step(&mut self, psi: &mut [C64], steps: usize) {
        for s in 0..steps {
            let factor = if s == 0 { 1 } else { 2 };
            for (p, &v) in psi.iter_mut().zip(&self.half_v) {
                *p *= if factor == 1 { v } else { v * v };
            }
            self.kinetic(psi);
        }
        for (p, &v) in psi.iter_mut().zip(&self.half_v) {
            *p *= v;
        }
    }
}

/// Canonical `L_z = x p_y − y p_x`, spectral.
pub struct AngularMomentum {
    grid: Grid2D,
    xky: Vec<f64>,
    ykx: Vec<f64>,
    tr: Transforms,
    buf: Vec<C64>,
}

impl AngularMomentum {
    pub fn new(grid: &Grid2D) -> Self {
        let kx = wavenumbers(grid.nx, grid.extent.width());
        let ky = wavenumbers(grid.ny, grid.extent.height());
        let mut xky = Vec::with_capacity(grid.len());
        for i in 0..grid.nx {
            xky.extend(ky.iter().map(|k| grid.x(i) * k / grid.ny as f64));
        }
        let mut ykx = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            ykx.extend(kx.iter().map(|k| grid.y(j) * k / grid.nx as f64));
        }
        Self { grid: *grid, xky, ykx, tr: Transforms::new(grid), buf: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn apply_into(&mut self, input: &[C64], out: &mut [C64]) -> Result<()> {
        check_len(&self.grid, input.len())?;
        check_len(&self.grid, out.len())?;
        out.copy_from_slice(input);
        self.tr.apply_y(out, &self.xky);
        self.buf.copy_from_slice(input);
        self.tr.apply_x(&mut self.buf, &self.ykx);
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o -= *b;
        }
        Ok(())
    }
}

/// Grid inner product `Σ conj(a) b · hx hy`.
pub fn inner(grid: &Grid2D, a: &[C64], b: &[C64]) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        s += x.conj() * y;
    }
    s * grid.cell_area()
}

pub fn norm(grid: &Grid2D, a: &[C64]) -> f64 {
    (a.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.cell_area()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_potential_grid, BumpField, PotentialSpec};

    fn ho(grid: &Grid2D) -> PotentialGrid {
        build_potential_grid(grid, &PotentialSpec::unperturbed(2, 1.0, 0.0), &BumpField::empty())
    }

    fn free(grid: &Grid2D) -> PotentialGrid {
        PotentialGrid { grid: *grid, values: vec![0.0; grid.len()] }
    }

    fn gaussian(grid: &Grid2D, x0: f64, y0: f64, w: f64, kx: f64) -> Vec<C64> {
        (0..grid.len())
            .map(|idx| {
                let [x, y] = grid.point(idx);
                let r2 = (x - x0).powi(2) + (y - y0).powi(2);
                C64::from_polar((-r2 / (2.0 * w * w)).exp(), kx * x)
            })
            .collect()
    }

    #[test]
    fn constant_state_is_annihilated() {
        let grid = Grid2D::square(16, 2.0).unwrap();
        let out = apply_hamiltonian(&vec![C64::new(1.0, 0.0); grid.len()], &free(&grid), 0.0).unwrap();
        assert!(out.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn plane_wave_eigenfunction() {
        let grid = Grid2D::square(32, 3.0).unwrap();
        let k = 2.0 * PI / 6.0 * 3.0;
        let psi: Vec<C64> = (0..grid.len()).map(|idx| C64::from_polar(1.0, k * grid.point(idx)[0])).collect();
        let out = apply_hamiltonian(&psi, &free(&grid), 0.0).unwrap();
        for (o, p) in out.iter().zip(&psi) {
            assert!((o - p * (0.5 * k * k)).norm() < 1e-10);
        }
    }

    #[test]
    fn grid_mismatch() {
        let grid = Grid2D::square(16, 2.0).unwrap();
        let err = apply_hamiltonian(&[C64::new(0.0, 0.0); 10], &free(&grid), 0.0).unwrap_err();
        assert_eq!(err, Error::GridMismatch { expected: 256, got: 10 });
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let grid = Grid2D::square(16, 4.0).unwrap();
        let pot = ho(&grid);
        let a = gaussian(&grid, 0.3, -0.2, 0.9, 0.7);
        let b = gaussian(&grid, -0.5, 0.4, 0.6, -1.1);
        let mut h = Hamiltonian::new(&pot, 0.8);
        let ha = h.apply(&a).unwrap();
        let hb = h.apply(&b).unwrap();
        let lhs = inner(&grid, &a, &hb);
        let rhs = inner(&grid, &ha, &b);
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm());
    }

    #[test]
    fn gaussian_ground_state() {
        let grid = Grid2D::square(64, 8.0).unwrap();
        let pot = ho(&grid);
        let psi = gaussian(&grid, 0.0, 0.0, 1.0, 0.0);
        let out = apply_hamiltonian(&psi, &pot, 0.0).unwrap();
        let err: f64 = out.iter().zip(&psi).map(|(o, p)| (o - p).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-8 * norm(&grid, &psi));
    }

    #[test]
    fn angular_momentum_of_vortex() {
        let grid = Grid2D::square(64, 8.0).unwrap();
        let psi: Vec<C64> = (0..grid.len())
            .map(|idx| {
                let [x, y] = grid.point(idx);
                C64::new(x, y).powi(2) * (-(x * x + y * y) / 2.0).exp()
            })
            .collect();
        let mut lz = AngularMomentum::new(&grid);
        let mut out = vec![C64::new(0.0, 0.0); grid.len()];
        lz.apply_into(&psi, &mut out).unwrap();
        for (o, p) in out.iter().zip(&psi) {
            assert!((o - p * 2.0).norm() < 1e-8);
        }
    }

    #[test]
    fn propagator_preserves_ground_state() {
        let grid = Grid2D::square(32, 6.0).unwrap();
        let pot = ho(&grid);
        let mut psi = gaussian(&grid, 0.0, 0.0, 1.0, 0.0);
        let psi0 = psi.clone();
        let dtau = 0.01;
        Propagator::new(&pot, 0.0, dtau).step(&mut psi, 10);
        let ratio = inner(&grid, &psi0, &psi).re / inner(&grid, &psi0, &psi0).re;
        assert!((ratio - (-0.1f64).exp()).abs() < 1e-5);
    }

    #[test]
    fn magnetic_kinetic_factorization_is_a_semigroup() {
        // e^{-aT} e^{-bT} = e^{-(a+b)T} holds only if the split is exact.
        let grid = Grid2D::square(64, 8.0).unwrap();
        let pot = free(&grid);
        let b = 1.3;
        let psi = gaussian(&grid, 0.4, -0.3, 1.2, 0.5);
        let mut two = psi.clone();
        let mut p1 = Propagator::new(&pot, b, 0.2);
        p1.kinetic(&mut two);
        p1.kinetic(&mut two);
        let mut one = psi.clone();
        Propagator::new(&pot, b, 0.4).kinetic(&mut one);
        let diff: f64 = two.iter().zip(&one).map(|(a, c)| (a - c).norm_sqr()).sum::<f64>().sqrt();
        let scale: f64 = one.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(diff < 1e-8 * scale, "{diff} vs {scale}");
    }

    #[test]
    fn magnetic_kinetic_generator() {
        // d/dτ e^{-τT}ψ at τ→0 is −Tψ.
        let grid = Grid2D::square(64, 8.0).unwrap();
        let pot = free(&grid);
        let b = 0.9;
        let psi = gaussian(&grid, 0.2, 0.1, 1.0, 0.3);
        let t = Hamiltonian::new(&pot, b).apply(&psi).unwrap();
        let eps = 1e-4;
        let mut plus = psi.clone();
        Propagator::new(&pot, b, eps).kinetic(&mut plus);
        let mut minus = psi.clone();
        Propagator::new(&pot, b, -eps).kinetic(&mut minus);
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for k in 0..psi.len() {
            let d = (plus[k] - minus[k]) / (2.0 * eps);
            err = err.max((d + t[k]).norm());
            scale = scale.max(t[k].norm());
        }
        assert!(err < 1e-6 * scale, "{err} vs {scale}");
    }
}
