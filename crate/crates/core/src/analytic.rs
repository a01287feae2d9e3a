//! Fock-Darwin spectrum and states, classical resonance fields and the
//! smeared density of states of the unperturbed oscillator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Grid2D;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FDLabel {
    pub n_r: u32,
    pub l: i32,
}

impl FDLabel {
    pub fn new(n_r: u32, l: i32) -> Self {
        Self { n_r, l }
    }
}

/// Resonance `(v_θ, v_r)`: `v_θ` windings per `v_r` radial oscillations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResonanceLabel {
    pub v_theta: u32,
    pub v_r: u32,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl ResonanceLabel {
    /// Stored in gcd-reduced form.
    pub fn new(v_theta: u32, v_r: u32) -> Result<Self> {
        if v_theta == 0 || v_r == 0 {
            return Err(Error::DomainError("resonance indices must be positive".into()));
        }
        let g = gcd(v_theta, v_r);
        Ok(Self { v_theta: v_theta / g, v_r: v_r / g })
    }

    pub fn ratio(&self) -> f64 {
        self.v_r as f64 / self.v_theta as f64
    }
}

/// `Ω = √(ω0² + B²/4)`.
pub fn effective_frequency(omega0: f64, b: f64) -> f64 {
    (omega0 * omega0 + 0.25 * b * b).sqrt()
}

/// `(2 n_r + |l| + 1) Ω − l B / 2`.
pub fn fock_darwin_energy(label: FDLabel, omega0: f64, b: f64) -> f64 {
    let omega = effective_frequency(omega0, b);
    (2.0 * label.n_r as f64 + label.l.unsigned_abs() as f64 + 1.0) * omega - label.l as f64 * b / 2.0
}

/// All labels with energy `≤ e_max` at field `b`, sorted by energy then label.
pub fn fock_darwin_levels(omega0: f64, b: f64, e_max: f64) -> Vec<(FDLabel, f64)> {
    let mut out = Vec::new();
    let mut n_r = 0u32;
    while fock_darwin_energy(FDLabel::new(n_r, 0), omega0, b).min(fock_darwin_energy(FDLabel::new(n_r, 1), omega0, b))
        <= e_max
    {
        for sign in [1i32, -1] {
            let mut a = if sign == 1 { 0 } else { 1 };
            loop {
                let label = FDLabel::new(n_r, sign * a);
                let e = fock_darwin_energy(label, omega0, b);
                if e > e_max {
                    break;
                }
                out.push((label, e));
                a += 1;
            }
        }
        n_r += 1;
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

/// `L_n^α(x)` by the three-term recurrence, as `(sign, ln|value|)`.
pub fn laguerre_log(n: u32, alpha: f64, x: f64) -> (f64, f64) {
    let mut prev = 1.0f64;
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut cur = 1.0 + alpha - x;
    let mut log_scale = 0.0f64;
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
        let m = cur.abs().max(prev.abs());
        if m > 1e100 {
            cur /= m;
            prev /= m;
            log_scale += m.ln();
        }
    }
    if cur == 0.0 {
        return (0.0, f64::NEG_INFINITY);
    }
    (cur.signum(), cur.abs().ln() + log_scale)
}

/// Continuum-normalized Fock-Darwin state sampled on `grid`:
/// `N ρ^{|l|} L_{n_r}^{|l|}(ρ²) e^{−ρ²/2} e^{ilθ}`, `ρ = r/ℓ`, `ℓ² = 1/Ω`.
pub fn fock_darwin_state(label: FDLabel, omega0: f64, b: f64, grid: &Grid2D) -> Result<Vec<C64>> {
    let omega = effective_frequency(omega0, b);
    let len = 1.0 / omega.sqrt();
    let spacing = grid.hx().max(grid.hy());
    if len < 4.0 * spacing {
        return Err(Error::GridTooCoarse { length: len, spacing });
    }
    let n = label.n_r;
    let a = label.l.unsigned_abs();
    let log_norm = 0.5
        * (libm::lgamma(n as f64 + 1.0) - PI.ln() - 2.0 * len.ln() - libm::lgamma((n + a) as f64 + 1.0));
    let out = (0..grid.len())
        .map(|idx| {
            let [x, y] = grid.point(idx);
            let rho2 = (x * x + y * y) / (len * len);
            let (sign, log_lag) = laguerre_log(n, a as f64, rho2);
            if sign == 0.0 || (a > 0 && rho2 == 0.0) {
                return C64::new(0.0, 0.0);
            }
            let log_mag = log_norm + 0.5 * a as f64 * rho2.ln() + log_lag - 0.5 * rho2;
            C64::from_polar(sign * log_mag.exp(), label.l as f64 * y.atan2(x))
        })
        .collect();
    Ok(out)
}

/// `B = (v_r/v_θ − 2) / √(v_r/v_θ − 1)`.
pub fn resonance_field(res: ResonanceLabel) -> Result<f64> {
    let ratio = res.ratio();
    if ratio <= 1.0 {
        return Err(Error::DomainError(format!(
            "resonance ({}, {}) has v_r/v_theta = {ratio} <= 1",
            res.v_theta, res.v_r
        )));
    }
    Ok((ratio - 2.0) / (ratio - 1.0).sqrt())
}

/// Density of states on a `(B, E)` lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DOSMap {
    pub b_axis: Vec<f64>,
    pub e_axis: Vec<f64>,
    /// `density[b][e]`.
    pub density: Vec<Vec<f64>>,
    pub window: f64,
}

impl DOSMap {
    /// Per-field clustering `Σ_E ρ(E)² ΔE`; large where levels bunch.
    pub fn clustering(&self) -> Vec<f64> {
        let widths = bin_edges(&self.e_axis);
        self.density
            .iter()
            .map(|col| col.iter().zip(widths.windows(2)).map(|(r, w)| r * r * (w[1] - w[0])).sum())
            .collect()
    }
}

fn bin_edges(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    let mut edges = Vec::with_capacity(n + 1);
    if n == 1 {
        return vec![axis[0] - 0.5, axis[0] + 0.5];
    }
    edges.push(axis[0] - 0.5 * (axis[1] - axis[0]));
    for k in 0..n - 1 {
        edges.push(0.5 * (axis[k] + axis[k + 1]));
    }
    edges.push(axis[n - 1] + 0.5 * (axis[n - 1] - axis[n - 2]));
    edges
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Gaussian-smeared DOS averaged over each energy bin, so every level
/// contributes unit weight to its column. Labels enter when their energy at
/// some field on the axis is within `cutoff + 5·window`.
pub fn dos_map(omega0: f64, b_axis: &[f64], e_axis: &[f64], window: f64, cutoff: f64) -> Result<DOSMap> {
    if !(window > 0.0) {
        return Err(Error::InvalidParameter("window must be positive".into()));
    }
    if !(omega0 > 0.0) {
        return Err(Error::InvalidParameter("omega0 must be positive".into()));
    }
    if b_axis.is_empty() || e_axis.is_empty() {
        return Err(Error::InvalidParameter("empty axis".into()));
    }
    if e_axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("energy axis must be increasing".into()));
    }
    let limit = cutoff + 5.0 * window;
    let min_e = |label: FDLabel| {
        b_axis.iter().map(|&b| fock_darwin_energy(label, omega0, b)).fold(f64::INFINITY, f64::min)
    };
    let mut labels = Vec::new();
    let mut n_r = 0u32;
    while min_e(FDLabel::new(n_r, 0)) <= limit || min_e(FDLabel::new(n_r, 1)) <= limit {
        for sign in [1i32, -1] {
            let mut a = if sign == 1 { 0 } else { 1 };
            while min_e(FDLabel::new(n_r, sign * a)) <= limit {
                labels.push(FDLabel::new(n_r, sign * a));
                a += 1;
            }
        }
        n_r += 1;
    }
    let edges = bin_edges(e_axis);
    let density = b_axis
        .iter()
        .map(|&b| {
            let mut col = vec![0.0; e_axis.len()];
            for &label in &labels {
                let e = fock_darwin_energy(label, omega0, b);
                if e > limit {
                    continue;
                }
                let lo = e - 8.0 * window;
                let hi = e + 8.0 * window;
                let start = edges.partition_point(|&x| x < lo).saturating_sub(1);
                let mut k = start;
                while k < col.len() && edges[k] <= hi {
                    let w = std_normal_cdf((edges[k + 1] - e) / window) - std_normal_cdf((edges[k] - e) / window);
                    col[k] += w / (edges[k + 1] - edges[k]);
                    k += 1;
                }
            }
            col
        })
        .collect();
    Ok(DOSMap { b_axis: b_axis.to_vec(), e_axis: e_axis.to_vec(), density, window })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{apply_hamiltonian, inner, norm};
    use crate::model::{build_potential_grid, BumpField, PotentialSpec};
    use proptest::prelude::*;

    #[test]
    fn energies() {
        assert_eq!(fock_darwin_energy(FDLabel::new(0, 0), 1.0, 0.0), 1.0);
        assert_eq!(fock_darwin_energy(FDLabel::new(0, 1), 1.0, 0.0), 2.0);
        assert_eq!(fock_darwin_energy(FDLabel::new(0, -1), 1.0, 0.0), 2.0);
        let e = fock_darwin_energy(FDLabel::new(0, 1), 1.0, 2.0);
        assert!((e - (2.0 * 2f64.sqrt() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn landau_limit() {
        let b = 50.0;
        for n_r in 0..3u32 {
            for l in -3..4 {
                let e = fock_darwin_energy(FDLabel::new(n_r, l), 1.0, b);
                let landau = (n_r as f64 + (l.abs() - l) as f64 / 2.0 + 0.5) * b;
                assert!((e - landau).abs() <= 0.02 * landau, "{n_r} {l}: {e} vs {landau}");
            }
        }
    }

    #[test]
    fn ho_shells() {
        let levels = fock_darwin_levels(1.0, 0.0, 5.5);
        for shell in 1..=5 {
            let count = levels.iter().filter(|(_, e)| *e == shell as f64).count();
            assert_eq!(count, shell);
        }
        assert_eq!(levels.len(), 15);
    }

    #[test]
    fn resonance_fields() {
        assert_eq!(resonance_field(ResonanceLabel::new(1, 2).unwrap()).unwrap(), 0.0);
        assert_eq!(resonance_field(ResonanceLabel::new(1, 5).unwrap()).unwrap(), 1.5);
        let b = resonance_field(ResonanceLabel::new(1, 3).unwrap()).unwrap();
        assert!((b - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(resonance_field(ResonanceLabel::new(2, 2).unwrap()), Err(Error::DomainError(_))));
        assert_eq!(ResonanceLabel::new(10, 4).unwrap(), ResonanceLabel { v_theta: 5, v_r: 2 });
    }

    #[test]
    fn resonance_field_monotone() {
        let mut prev = f64::NEG_INFINITY;
        for k in 1..400 {
            let ratio = 1.0 + k as f64 * 0.02;
            let b = (ratio - 2.0) / (ratio - 1.0).sqrt();
            let res = ResonanceLabel { v_theta: 1000, v_r: (ratio * 1000.0).round() as u32 };
            let got = resonance_field(res).unwrap();
            assert!((got - b).abs() < 1e-9);
            assert!(got > prev);
            if ratio < 2.0 {
                assert!(got < 0.0);
            }
            prev = got;
        }
    }

    #[test]
    fn laguerre_matches_closed_forms() {
        let x = 0.7;
        let a = 2.0;
        let l2 = 0.5 * (x * x - 2.0 * (a + 2.0) * x + (a + 1.0) * (a + 2.0));
        let (s, lg) = laguerre_log(2, a, x);
        assert!((s * lg.exp() - l2).abs() < 1e-13);
        let (s, lg) = laguerre_log(1, 0.0, 3.0);
        assert!((s * lg.exp() + 2.0).abs() < 1e-14);
        let (_, big) = laguerre_log(300, 40.0, 500.0);
        assert!(big.is_finite());
    }

    fn ho_grid() -> (Grid2D, crate::model::PotentialGrid) {
        let grid = Grid2D::square(64, 7.5).unwrap();
        let pot = build_potential_grid(&grid, &PotentialSpec::unperturbed(2, 1.0, 0.0), &BumpField::empty());
        (grid, pot)
    }

    #[test]
    fn states_are_normalized_and_orthogonal() {
        let (grid, _) = ho_grid();
        let labels = [FDLabel::new(0, 0), FDLabel::new(1, 2), FDLabel::new(2, -3), FDLabel::new(0, 5)];
        let states: Vec<_> = labels.iter().map(|&l| fock_darwin_state(l, 1.0, 0.5, &grid).unwrap()).collect();
        for (a, sa) in states.iter().enumerate() {
            for (b, sb) in states.iter().enumerate() {
                let ov = inner(&grid, sa, sb).norm();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ov - want).abs() < 1e-6, "{a} {b} {ov}");
            }
        }
    }

    #[test]
    fn states_are_eigenfunctions() {
        let (grid, pot) = ho_grid();
        for b in [0.0, 0.5, 1.0] {
            for label in [FDLabel::new(0, 0), FDLabel::new(1, 1), FDLabel::new(0, -2), FDLabel::new(2, 3)] {
                let psi = fock_darwin_state(label, 1.0, b, &grid).unwrap();
                let hpsi = apply_hamiltonian(&psi, &pot, b).unwrap();
                let e = fock_darwin_energy(label, 1.0, b);
                let res: Vec<C64> = hpsi.iter().zip(&psi).map(|(h, p)| h - p * e).collect();
                assert!(norm(&grid, &res) < 1e-6, "{label:?} B={b}: {}", norm(&grid, &res));
            }
        }
    }

    #[test]
    fn conjugate_pairs_at_zero_field() {
        let (grid, _) = ho_grid();
        let p = fock_darwin_state(FDLabel::new(1, 3), 1.0, 0.0, &grid).unwrap();
        let m = fock_darwin_state(FDLabel::new(1, -3), 1.0, 0.0, &grid).unwrap();
        for (a, b) in p.iter().zip(&m) {
            assert!((a.conj() - b).norm() < 1e-14);
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let grid = Grid2D::square(16, 8.0).unwrap();
        assert!(matches!(fock_darwin_state(FDLabel::new(0, 0), 1.0, 0.0, &grid), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn dos_shells_and_normalization() {
        let e_axis: Vec<f64> = (0..=800).map(|k| k as f64 * 0.01).collect();
        let map = dos_map(1.0, &[0.0, 0.7], &e_axis, 0.001, 6.5).unwrap();
        let col = &map.density[0];
        for shell in 1..=6usize {
            let k = shell * 100;
            let h = col[k] * 0.01;
            assert!((h - shell as f64).abs() < 1e-5 * shell as f64, "shell {shell}: {h}");
        }
        for (c, b) in map.density.iter().zip(&map.b_axis) {
            let total: f64 = c.iter().sum::<f64>() * 0.01;
            let below = fock_darwin_levels(1.0, *b, 6.5 + 0.005).len() as f64;
            assert!((total - below).abs() < 1e-5 * below, "B={b}: {total} vs {below}");
        }
        assert!(map.density.iter().flatten().all(|&d| d >= 0.0));
    }

    #[test]
    fn dos_clusters_at_resonances() {
        let e_axis: Vec<f64> = (0..=4000).map(|k| k as f64 * 0.005).collect();
        let b_axis: Vec<f64> = (0..=200).map(|k| k as f64 / 100.0).collect();
        let map = dos_map(1.0, &b_axis, &e_axis, 0.001, 20.0).unwrap();
        let c = map.clustering();
        assert!(c[0] > c[1]);
        assert!(c[150] > c[149] && c[150] > c[151]);
    }

    proptest! {
        #[test]
        fn zero_field_shell_formula(n_r in 0u32..50, l in -60i32..60) {
            let e = fock_darwin_energy(FDLabel::new(n_r, l), 1.0, 0.0);
            prop_assert_eq!(e, (2 * n_r as i64 + l.abs() as i64 + 1) as f64);
        }

        #[test]
        fn field_reversal_maps_l(n_r in 0u32..20, l in -20i32..20, b in 0.0f64..3.0) {
            let a = fock_darwin_energy(FDLabel::new(n_r, l), 1.0, b);
            let c = fock_darwin_energy(FDLabel::new(n_r, -l), 1.0, -b);
            prop_assert!((a - c).abs() < 1e-12 * a.abs().max(1.0));
        }
    }
}
