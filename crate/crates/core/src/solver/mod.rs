//! Many-eigenpair solvers for `H = ½(p + A)² + V` on a periodic grid.

mod block;
pub mod dense;
pub mod itp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Grid2D, PotentialGrid};
use crate::operator::{inner, Hamiltonian};
use crate::C64;

pub use dense::{dense_hamiltonian, solve_dense, solve_dense_with, DenseSolution, KineticScheme};
pub use itp::{solve_itp, solve_itp_with_progress, Phase, Progress};

/// Lowest eigenpairs on a grid. States are normalized under the grid inner
/// product `Σ conj(a) b · hx hy`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSet {
    pub energies: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    pub grid: Grid2D,
    pub b: f64,
    pub residuals: Vec<f64>,
}

impl EigenSet {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Largest `|⟨ψ_i|ψ_j⟩ − δ_ij|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.states.iter().enumerate() {
            for (j, b) in self.states.iter().enumerate().skip(i) {
                let ov = inner(&self.grid, a, b);
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ov - want).norm());
            }
        }
        worst
    }

    /// Recomputes `‖(H − E_i) ψ_i‖` with the spectral operator.
    pub fn recompute_residuals(&self, pot: &PotentialGrid) -> Result<Vec<f64>> {
        let mut h = Hamiltonian::new(pot, self.b);
        let mut out = vec![C64::new(0.0, 0.0); self.grid.len()];
        self.states
            .iter()
            .zip(&self.energies)
            .map(|(psi, &e)| {
                h.apply_into(psi, &mut out)?;
                let r: f64 = out.iter().zip(psi).map(|(h, p)| (h - p * e).norm_sqr()).sum();
                Ok((r * self.grid.cell_area()).sqrt())
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Requested state count `K`.
    pub num_states: usize,
    /// Residual tolerance on `‖(H − E)ψ‖`.
    pub tol: f64,
    /// Cap on block iterations over all stages.
    pub max_iters: usize,
    pub dtau_schedule: Vec<f64>,
    /// States solved beyond `K` and discarded; `None` means `max(50, ⌈0.05 K⌉)`.
    pub extra_states: Option<usize>,
    /// Seed of the random initial block.
    pub seed: u64,
    /// Relative change of the Ritz-value sum that ends a propagation stage.
    pub stage_tol: f64,
    pub stage_max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            num_states: 600,
            tol: 1e-6,
            max_iters: 400,
            dtau_schedule: vec![0.05, 0.01],
            extra_states: None,
            seed: 0,
            stage_tol: 1e-5,
            stage_max_iters: 40,
        }
    }
}

impl SolverConfig {
    pub fn with_states(num_states: usize) -> Self {
        Self { num_states, ..Self::default() }
    }

    pub fn block_size(&self) -> usize {
        let extra = self
            .extra_states
            .unwrap_or_else(|| 50.max((0.05 * self.num_states as f64).ceil() as usize));
        self.num_states + extra
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_states < 1 {
            return Err(Error::InvalidParameter("num_states must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be positive".into()));
        }
        if self.dtau_schedule.is_empty() {
            return Err(Error::InvalidParameter("dtau schedule must not be empty".into()));
        }
        if self.dtau_schedule.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidParameter("dtau values must be positive".into()));
        }
        if self.dtau_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("dtau schedule must be decreasing".into()));
        }
        Ok(())
    }
}

/// Semiclassical count of levels below `e`: `(1/2π) Σ max(e − V, 0) hx hy`.
pub fn weyl_count_on_grid(pot: &PotentialGrid, e: f64) -> f64 {
    let area = pot.grid.cell_area();
    pot.values.iter().map(|v| (e - v).max(0.0)).sum::<f64>() * area / (2.0 * std::f64::consts::PI)
}

/// Energy whose Weyl count is `count`, by bisection; `None` if the grid
/// holds fewer states.
pub fn weyl_energy_on_grid(pot: &PotentialGrid, count: f64) -> Option<f64> {
    let mut lo = pot.min();
    let mut hi = pot.max();
    if weyl_count_on_grid(pot, hi) < count {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if weyl_count_on_grid(pot, mid) < count {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

/// Fails with `GridTooSmall` when the classically allowed region at the
/// energy of the highest requested state reaches beyond 80% of the
/// half-extent along either axis.
pub fn check_grid_capacity(pot: &PotentialGrid, count: usize) -> Result<()> {
    let grid = &pot.grid;
    let ext = grid.extent;
    let cx = 0.5 * (ext.x0 + ext.x1);
    let cy = 0.5 * (ext.y0 + ext.y1);
    let half = 0.5 * ext.width().min(ext.height());
    let limit = 0.8 * half;
    let Some(e) = weyl_energy_on_grid(pot, count as f64) else {
        return Err(Error::GridTooSmall { turning_radius: f64::INFINITY, limit });
    };
    let mut reach = 0.0f64;
    for (idx, &v) in pot.values.iter().enumerate() {
        if v <= e {
            let [x, y] = grid.point(idx);
            let rx = (x - cx).abs() * half / (0.5 * ext.width());
            let ry = (y - cy).abs() * half / (0.5 * ext.height());
            reach = reach.max(rx).max(ry);
        }
    }
    if reach > limit {
        return Err(Error::GridTooSmall { turning_radius: reach, limit });
    }
    Ok(())
}

/// Scales to unit grid norm and fixes the global phase so the
/// largest-magnitude component is real and positive.
pub(crate) fn normalize_state(grid: &Grid2D, psi: &mut [C64]) {
    let mut best = 0usize;
    let mut best_mag = -1.0f64;
    for (k, z) in psi.iter().enumerate() {
        let m = z.norm_sqr();
        if m > best_mag * (1.0 + 1e-9) {
            best = k;
            best_mag = m;
        }
    }
    let norm = (psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.cell_area()).sqrt();
    if norm == 0.0 {
        return;
    }
    let phase = if best_mag > 0.0 { psi[best].conj() / psi[best].norm() } else { C64::new(1.0, 0.0) };
    let scale = phase / norm;
    for z in psi.iter_mut() {
        *z *= scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_potential_grid, BumpField, PotentialSpec};

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { dtau_schedule: vec![0.01, 0.1], ..SolverConfig::default() };
        assert!(bad.validate().is_err());
        assert!(SolverConfig { num_states: 0, ..SolverConfig::default() }.validate().is_err());
        assert_eq!(SolverConfig::with_states(600).block_size(), 650);
        assert_eq!(SolverConfig::with_states(2000).block_size(), 2100);
    }

    #[test]
    fn grid_capacity_guard() {
        let spec = PotentialSpec::unperturbed(2, 1.0, 0.0);
        let grid = Grid2D::square(32, 6.0).unwrap();
        let pot = build_potential_grid(&grid, &spec, &BumpField::empty());
        assert!(check_grid_capacity(&pot, 20).is_ok());
        assert!(matches!(check_grid_capacity(&pot, 200), Err(Error::GridTooSmall { .. })));
        let e = weyl_energy_on_grid(&pot, 20.0).unwrap();
        assert!((e - spec.weyl_energy(20.0)).abs() < 0.3, "{e}");
    }
}
