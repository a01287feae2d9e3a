//! Confinement potential, Gaussian bump disorder and their grid sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Extent {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    /// Square `[-half, half]²`.
    pub fn centered(half: f64) -> Self {
        Self::new(-half, half, -half, half)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    /// Smallest distance from the origin to the boundary.
    pub fn min_half_extent(&self) -> f64 {
        (-self.x0).min(self.x1).min(-self.y0).min(self.y1)
    }

    fn is_degenerate(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0 && self.area().is_finite())
    }
}

/// Full problem definition of the perturbed well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    /// Confinement exponent.
    pub n: u32,
    pub omega0: f64,
    /// Bump amplitude `M`.
    pub amplitude: f64,
    pub sigma: f64,
    /// Perpendicular field strength.
    pub b: f64,
    /// Bumps per unit area.
    pub bump_density: f64,
    pub seed: u64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self { n: 5, omega0: 1.0, amplitude: 0.0, sigma: 0.1, b: 0.0, bump_density: 2.0, seed: 0 }
    }
}

impl PotentialSpec {
    pub fn unperturbed(n: u32, omega0: f64, b: f64) -> Self {
        Self { n, omega0, amplitude: 0.0, b, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidParameter("confinement exponent n must be >= 1".into()));
        }
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(Error::InvalidParameter("omega0 must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidParameter("bump amplitude must be >= 0".into()));
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return Err(Error::InvalidParameter("field strength must be >= 0".into()));
        }
        if !(self.bump_density >= 0.0 && self.bump_density.is_finite()) {
            return Err(Error::InvalidParameter("bump density must be >= 0".into()));
        }
        Ok(())
    }

    /// Classical turning radius at energy `e` for the unperturbed well.
    pub fn turning_radius(&self, e: f64) -> f64 {
        (2.0 * e.max(0.0) / (self.omega0 * self.omega0)).powf(1.0 / self.n as f64)
    }

    /// Leading-order (Weyl) level count below `e` for the unperturbed well.
    pub fn weyl_count(&self, e: f64) -> f64 {
        let r = self.turning_radius(e);
        let n = self.n as f64;
        e.max(0.0) * r * r * n / (2.0 * (n + 2.0))
    }

    /// Inverse of [`weyl_count`](Self::weyl_count).
    pub fn weyl_energy(&self, count: f64) -> f64 {
        let n = self.n as f64;
        let w2 = self.omega0 * self.omega0;
        let scale = (2.0 / w2).powf(2.0 / n) * n / (2.0 * (n + 2.0));
        (count.max(0.0) / scale).powf(n / (n + 2.0))
    }

    /// Square holding the bumps: circumscribes the turning circle at `e_max`
    /// plus a `2σ` margin.
    pub fn bump_region(&self, e_max: f64) -> Extent {
        Extent::centered(self.turning_radius(e_max) + 2.0 * self.sigma)
    }
}

/// One disorder realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpField {
    pub centers: Vec<[f64; 2]>,
    pub region: Extent,
    pub seed: u64,
}

impl BumpField {
    pub fn empty() -> Self {
        Self { centers: Vec::new(), region: Extent::centered(1.0), seed: 0 }
    }
}

/// Uniform periodic grid. Node `(i, j)` sits at the cell centre
/// `(x0 + (i + ½) hx, y0 + (j + ½) hy)`; flat index `i * ny + j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub extent: Extent,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, extent: Extent) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(Error::InvalidParameter(format!("grid {nx}x{ny}: need at least 8 points per axis")));
        }
        if extent.is_degenerate() {
            return Err(Error::DegenerateRegion);
        }
        Ok(Self { nx, ny, extent })
    }

    pub fn square(n: usize, half: f64) -> Result<Self> {
        Self::new(n, n, Extent::centered(half))
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hx(&self) -> f64 {
        self.extent.width() / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.extent.height() / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.extent.x0 + (i as f64 + 0.5) * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.extent.y0 + (j as f64 + 0.5) * self.hy()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        [self.x(idx / self.ny), self.y(idx % self.ny)]
    }

    pub fn is_pow2(&self) -> bool {
        self.nx.is_power_of_two() && self.ny.is_power_of_two()
    }
}

/// Potential sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialGrid {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl PotentialGrid {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `½ ω0² |r|^n`.
pub fn eval_external_potential(p: [f64; 2], spec: &PotentialSpec) -> f64 {
    let r = p[0].hypot(p[1]);
    0.5 * spec.omega0 * spec.omega0 * r.powi(spec.n as i32)
}

/// `M Σ_i exp(−|r − r_i|² / 2σ²)`, summed in center order.
pub fn eval_perturbation(p: [f64; 2], spec: &PotentialSpec, bumps: &BumpField) -> f64 {
    if spec.amplitude == 0.0 {
        return 0.0;
    }
    let inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
    let mut sum = 0.0;
    for c in &bumps.centers {
        let dx = p[0] - c[0];
        let dy = p[1] - c[1];
        sum += (-(dx * dx + dy * dy) * inv).exp();
    }
    spec.amplitude * sum
}

/// `round(density · area)` centers, i.i.d. uniform over `region`.
pub fn generate_bumps(region: Extent, density: f64, seed: u64) -> Result<BumpField> {
    if region.is_degenerate() {
        return Err(Error::DegenerateRegion);
    }
    if !(density >= 0.0 && density.is_finite()) {
        return Err(Error::InvalidParameter("bump density must be >= 0".into()));
    }
    let count = (density * region.area()).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            [region.x0 + u * region.width(), region.y0 + v * region.height()]
        })
        .collect();
    Ok(BumpField { centers, region, seed })
}

pub fn build_potential_grid(grid: &Grid2D, spec: &PotentialSpec, bumps: &BumpField) -> PotentialGrid {
    let values = (0..grid.len())
        .map(|idx| {
            let p = grid.point(idx);
            eval_external_potential(p, spec) + eval_perturbation(p, spec, bumps)
        })
        .collect();
    PotentialGrid { grid: *grid, values }
}

/// Bumps for `spec` covering the levels up to `num_states`, then the grid.
pub fn realize(grid: &Grid2D, spec: &PotentialSpec, num_states: usize) -> Result<(BumpField, PotentialGrid)> {
    spec.validate()?;
    let bumps = if spec.amplitude > 0.0 && spec.bump_density > 0.0 {
        let e_max = spec.weyl_energy(num_states as f64);
        generate_bumps(spec.bump_region(e_max), spec.bump_density, spec.seed)?
    } else {
        BumpField::empty()
    };
    let pot = build_potential_grid(grid, spec, &bumps);
    Ok((bumps, pot))
}
