//! Expansion of perturbed eigenstates in the unperturbed basis, resonant sets
//! and scar composition.

use std::collections::HashMap;
use std::sync::OnceLock;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::analytic::{fock_darwin_levels, fock_darwin_state, FDLabel, ResonanceLabel};
use crate::error::{Error, Result};
use crate::model::Grid2D;
use crate::operator::{inner, AngularMomentum};
use crate::solver::EigenSet;
use crate::C64;

/// Completeness below which scar metrics are refused.
pub const MIN_COMPLETENESS: f64 = 0.99;

/// Energy gap below which unperturbed levels count as degenerate.
pub const CLUSTER_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BasisState {
    /// Position in the full unperturbed spectrum, counted from the ground state.
    pub m: usize,
    pub label: FDLabel,
    pub energy: f64,
    pub state: Vec<C64>,
}

/// Orthonormal unperturbed states with quantum numbers.
#[derive(Debug, Clone)]
pub struct UnperturbedBasis {
    pub grid: Grid2D,
    pub b: f64,
    /// Orthonormality tolerance of the source solve.
    pub tol: f64,
    pub states: Vec<BasisState>,
    /// Cached orthonormality defect; windows inherit the parent's as a bound.
    defect: OnceLock<f64>,
}

impl PartialEq for UnperturbedBasis {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.b == other.b && self.tol == other.tol && self.states == other.states
    }
}

impl UnperturbedBasis {
    pub fn new(grid: Grid2D, b: f64, tol: f64, states: Vec<BasisState>) -> Self {
        Self { grid, b, tol, states, defect: OnceLock::new() }
    }

    /// Fock-Darwin states of the `r²` well with energies in `[e_lo, e_hi]`.
    pub fn analytic(omega0: f64, b: f64, grid: &Grid2D, e_lo: f64, e_hi: f64, tol: f64) -> Result<Self> {
        let states = fock_darwin_levels(omega0, b, e_hi)
            .into_iter()
            .enumerate()
            .filter(|(_, (_, e))| *e >= e_lo)
            .map(|(m, (label, energy))| {
                Ok(BasisState { m, label, energy, state: fock_darwin_state(label, omega0, b, grid)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(*grid, b, tol, states))
    }

    /// Labels a solved unperturbed spectrum. States inside each degenerate
    /// cluster (gap below `threshold`) are rotated onto `L_z` eigenstates;
    /// `l` is the rounded `L_z` expectation and `n_r` the rank in energy among
    /// states of equal `l`. The set must start at the ground state.
    pub fn from_eigenset(set: &EigenSet, threshold: f64, tol: f64) -> Result<Self> {
        let grid = set.grid;
        let mut lz = AngularMomentum::new(&grid);
        let mut buf = vec![C64::new(0.0, 0.0); grid.len()];
        let mut resolved: Vec<(f64, f64, Vec<C64>)> = Vec::with_capacity(set.len());
        let mut start = 0;
        while start < set.len() {
            let mut end = start + 1;
            while end < set.len() && set.energies[end] - set.energies[end - 1] < threshold {
                end += 1;
            }
            let size = end - start;
            let mut lmat = Mat::<C64>::zeros(size, size);
            let mut images = Vec::with_capacity(size);
            for j in 0..size {
                lz.apply_into(&set.states[start + j], &mut buf)?;
                images.push(buf.clone());
            }
            for i in 0..size {
                for j in 0..size {
                    lmat[(i, j)] = inner(&grid, &set.states[start + i], &images[j]);
                }
            }
            let eig = lmat.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Linalg(format!("{e:?}")))?;
            let u = eig.U();
            for k in 0..size {
                let mut state = vec![C64::new(0.0, 0.0); grid.len()];
                let mut energy = 0.0;
                for j in 0..size {
                    let c = u[(j, k)];
                    energy += c.norm_sqr() * set.energies[start + j];
                    for (s, v) in state.iter_mut().zip(&set.states[start + j]) {
                        *s += c * v;
                    }
                }
                resolved.push((energy, eig.S().column_vector()[k].re, state));
            }
            start = end;
        }
        resolved.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut seen: HashMap<i32, u32> = HashMap::new();
        let states = resolved
            .into_iter()
            .enumerate()
            .map(|(m, (energy, lval, state))| {
                let l = lval.round() as i32;
                let n_r = seen.entry(l).or_insert(0);
                let label = FDLabel::new(*n_r, l);
                *n_r += 1;
                BasisState { m, label, energy, state }
            })
            .collect();
        Ok(Self::new(grid, set.b, tol, states))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Mean level spacing around `energy`, from up to 20 neighbours per side.
    pub fn local_spacing(&self, energy: f64) -> f64 {
        let n = self.states.len();
        if n < 2 {
            return f64::INFINITY;
        }
        let i = self.states.partition_point(|s| s.energy < energy).min(n - 1);
        let lo = i.saturating_sub(20);
        let hi = (i + 20).min(n - 1);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (0, n - 1) };
        (self.states[hi].energy - self.states[lo].energy) / (hi - lo) as f64
    }

    /// States within `half_width` local spacings of `energy`, plus every
    /// member (present in this basis) of the resonant sets anchored on them.
    pub fn window(&self, energy: f64, half_width: f64, resonances: &[ResonanceLabel], k_max: u32) -> Self {
        let delta = half_width * self.local_spacing(energy);
        let by_label: HashMap<FDLabel, usize> = self.states.iter().enumerate().map(|(i, s)| (s.label, i)).collect();
        let mut keep = vec![false; self.states.len()];
        for (i, s) in self.states.iter().enumerate() {
            if (s.energy - energy).abs() <= delta {
                keep[i] = true;
                for &res in resonances {
                    for member in resonant_set(s.label, res, k_max).members {
                        if let Some(&j) = by_label.get(&member) {
                            keep[j] = true;
                        }
                    }
                }
            }
        }
        let states = self.states.iter().zip(&keep).filter(|(_, &k)| k).map(|(s, _)| s.clone()).collect();
        let defect = OnceLock::new();
        let _ = defect.set(self.orthonormality_defect());
        Self { grid: self.grid, b: self.b, tol: self.tol, states, defect }
    }

    /// Largest `|⟨φ_i|φ_j⟩ − δ_ij|`, computed once. Mutating `states`
    /// afterwards does not refresh it.
    pub fn orthonormality_defect(&self) -> f64 {
        *self.defect.get_or_init(|| self.gram_defect())
    }

    fn gram_defect(&self) -> f64 {
        let n = self.states.len();
        if n == 0 {
            return 0.0;
        }
        let rows = self.grid.len();
        let mat = Mat::<C64>::from_fn(rows, n, |r, c| self.states[c].state[r]);
        let gram = mat.adjoint() * &mat;
        let area = self.grid.cell_area();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] * area - want).norm());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub m: usize,
    pub label: FDLabel,
    pub energy: f64,
    pub weight: f64,
    pub coefficient: C64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subspectrum {
    pub state_index: usize,
    /// Sorted by basis energy.
    pub weights: Vec<Weight>,
    pub completeness: f64,
    /// Basis at zero field: `(n_r, l)` and `(n_r, −l)` are degenerate and
    /// resonant sets include their mirror image.
    pub time_reversal: bool,
}

impl Subspectrum {
    pub fn is_complete(&self) -> bool {
        self.completeness >= MIN_COMPLETENESS
    }

    /// `1 / Σ|c_m|⁴`.
    pub fn participation(&self) -> f64 {
        let s: f64 = self.weights.iter().map(|w| w.weight * w.weight).sum();
        if s > 0.0 {
            1.0 / s
        } else {
            0.0
        }
    }
}

/// `c_m = ⟨φ_m|ψ⟩` over the basis.
pub fn overlaps(state: &[C64], grid: &Grid2D, basis: &UnperturbedBasis, state_index: usize) -> Result<Subspectrum> {
    if *grid != basis.grid || state.len() != basis.grid.len() {
        return Err(Error::GridMismatch { expected: basis.grid.len(), got: state.len() });
    }
    let defect = basis.orthonormality_defect();
    if defect > 10.0 * basis.tol {
        return Err(Error::BasisNotOrthonormal { deviation: defect });
    }
    let mut weights: Vec<Weight> = basis
        .states
        .iter()
        .map(|b| {
            let c = inner(grid, &b.state, state);
            Weight { m: b.m, label: b.label, energy: b.energy, weight: c.norm_sqr().min(1.0), coefficient: c }
        })
        .collect();
    weights.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.m.cmp(&b.m)));
    let completeness = weights.iter().map(|w| w.weight).sum::<f64>().clamp(0.0, 1.0);
    Ok(Subspectrum { state_index, weights, completeness, time_reversal: basis.b == 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonantSet {
    pub anchor: FDLabel,
    pub resonance: ResonanceLabel,
    pub k_max: u32,
    /// Ascending in `k`.
    pub members: Vec<FDLabel>,
}

impl ResonantSet {
    /// Membership, optionally extended by the mirror image `l → −l`.
    pub fn contains(&self, label: FDLabel, mirrored: bool) -> bool {
        self.members.iter().any(|m| *m == label || (mirrored && m.n_r == label.n_r && m.l == -label.l))
    }
}

/// `(n_r + k v_r, l − k v_θ)` for `|k| ≤ k_max` with `n_r + k v_r ≥ 0`.
pub fn resonant_set(anchor: FDLabel, res: ResonanceLabel, k_max: u32) -> ResonantSet {
    let k_max_i = k_max as i64;
    let members = (-k_max_i..=k_max_i)
        .filter_map(|k| {
            let n_r = anchor.n_r as i64 + k * res.v_r as i64;
            let l = anchor.l as i64 - k * res.v_theta as i64;
            (n_r >= 0).then_some(FDLabel::new(n_r as u32, l as i32))
        })
        .collect();
    ResonantSet { anchor, resonance: res, k_max, members }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScarStrength {
    pub set_weight: f64,
    pub participation: f64,
}

fn set_weight(sub: &Subspectrum, set: &ResonantSet) -> f64 {
    sub.weights.iter().filter(|w| set.contains(w.label, sub.time_reversal)).map(|w| w.weight).sum::<f64>().min(1.0)
}

fn require_complete(sub: &Subspectrum) -> Result<()> {
    if sub.is_complete() {
        Ok(())
    } else {
        Err(Error::IncompleteExpansion { completeness: sub.completeness })
    }
}

/// Weight carried by each member of `set`, in member order; at zero field a
/// member also collects its mirror image `(n_r, −l)`.
pub fn member_weights(sub: &Subspectrum, set: &ResonantSet) -> Vec<f64> {
    set.members
        .iter()
        .map(|m| {
            sub.weights
                .iter()
                .filter(|w| w.label == *m || (sub.time_reversal && w.label.n_r == m.n_r && w.label.l == -m.l))
                .map(|w| w.weight)
                .sum()
        })
        .collect()
}

pub fn scar_strength(sub: &Subspectrum, set: &ResonantSet) -> Result<ScarStrength> {
    require_complete(sub)?;
    Ok(ScarStrength { set_weight: set_weight(sub, set), participation: sub.participation() })
}

/// Coprime `(v_θ, v_r)` with `v_r < v_θ ≤ 9` and `v_r ≤ 4`, ordered by
/// `v_θ + v_r`.
pub fn default_resonances() -> Vec<ResonanceLabel> {
    let mut out: Vec<ResonanceLabel> = (1..=4u32)
        .flat_map(|v_r| (v_r + 1..=9).map(move |v_t| (v_t, v_r)))
        .filter_map(|(v_t, v_r)| ResonanceLabel::new(v_t, v_r).ok().filter(|r| r.v_theta == v_t))
        .collect();
    out.sort_by_key(|r| (r.v_theta + r.v_r, r.v_r));
    out
}

/// The resonant set, anchored on any basis state of the subspectrum, that
/// carries the most weight. Ties go to the smaller `v_θ + v_r`, then to the
/// lower anchor energy.
pub fn best_resonant_set(sub: &Subspectrum, resonances: &[ResonanceLabel], k_max: u32) -> Result<(ResonantSet, f64)> {
    require_complete(sub)?;
    if resonances.is_empty() {
        return Err(Error::InvalidParameter("no candidate resonances".into()));
    }
    let mut best: Option<(ResonantSet, f64, u32, f64)> = None;
    for w in &sub.weights {
        for &res in resonances {
            let set = resonant_set(w.label, res, k_max);
            let weight = set_weight(sub, &set);
            let order = res.v_theta + res.v_r;
            let better = match &best {
                None => true,
                Some((_, bw, bo, be)) => {
                    if (weight - bw).abs() > 1e-12 {
                        weight > *bw
                    } else if order != *bo {
                        order < *bo
                    } else {
                        w.energy < *be
                    }
                }
            };
            if better {
                best = Some((set, weight, order, w.energy));
            }
        }
    }
    let (set, weight, _, _) = best.ok_or(Error::IncompleteExpansion { completeness: sub.completeness })?;
    Ok((set, weight))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_potential_grid, BumpField, PotentialSpec};
    use crate::solver::solve_dense;

    fn label(n_r: u32, l: i32) -> FDLabel {
        FDLabel::new(n_r, l)
    }

    fn pentagram() -> ResonanceLabel {
        ResonanceLabel::new(5, 2).unwrap()
    }

    fn synthetic(weights: &[(FDLabel, f64)], time_reversal: bool) -> Subspectrum {
        let weights = weights
            .iter()
            .enumerate()
            .map(|(m, &(label, weight))| Weight {
                m,
                label,
                energy: m as f64,
                weight,
                coefficient: C64::new(weight.sqrt(), 0.0),
            })
            .collect::<Vec<_>>();
        let completeness = weights.iter().map(|w| w.weight).sum();
        Subspectrum { state_index: 0, weights, completeness, time_reversal }
    }

    #[test]
    fn resonant_set_members() {
        let set = resonant_set(label(10, 20), pentagram(), 2);
        assert_eq!(set.members, vec![label(6, 30), label(8, 25), label(10, 20), label(12, 15), label(14, 10)]);
        assert_eq!(resonant_set(label(10, 20), pentagram(), 0).members, vec![label(10, 20)]);
        let clipped = resonant_set(label(1, 5), pentagram(), 3);
        assert_eq!(clipped.members, vec![label(1, 5), label(3, 0), label(5, -5), label(7, -10)]);
    }

    #[test]
    fn re_anchoring_keeps_the_ladder() {
        let a = resonant_set(label(10, 20), pentagram(), 4);
        let b = resonant_set(label(12, 15), pentagram(), 4);
        let common = a.members.iter().filter(|m| b.members.contains(m)).count();
        assert_eq!(common, 8);
        for m in &b.members {
            assert_eq!((m.n_r as i32 - 10) % 2, 0);
            assert_eq!((m.l - 20) % 5, 0);
            assert_eq!((m.n_r as i32 - 10) / 2, -(m.l - 20) / 5);
        }
    }

    #[test]
    fn strength_and_best_set() {
        let single = synthetic(&[(label(3, 1), 1.0)], false);
        let set = resonant_set(label(3, 1), pentagram(), 2);
        let s = scar_strength(&single, &set).unwrap();
        assert_eq!((s.set_weight, s.participation), (1.0, 1.0));

        let ladder = resonant_set(label(10, 20), pentagram(), 2);
        let uniform: Vec<_> = ladder.members.iter().map(|&l| (l, 0.2)).collect();
        let sub = synthetic(&uniform, false);
        let s = scar_strength(&sub, &ladder).unwrap();
        assert!((s.set_weight - 1.0).abs() < 1e-12 && (s.participation - 5.0).abs() < 1e-12);
        let (best, w) = best_resonant_set(&sub, &default_resonances(), 2).unwrap();
        assert_eq!(best.resonance, pentagram());
        assert!((w - 1.0).abs() < 1e-12);
        let mut members = best.members.clone();
        members.sort();
        let mut want = ladder.members.clone();
        want.sort();
        assert_eq!(members, want);

        let dominant = synthetic(&[(label(0, 3), 0.05), (label(4, 2), 0.94), (label(9, 9), 0.01)], false);
        let (best, w) = best_resonant_set(&dominant, &default_resonances(), 2).unwrap();
        assert!(best.contains(label(4, 2), false));
        assert!((w - 0.94).abs() < 1e-12);

        let incomplete = synthetic(&[(label(0, 0), 0.5)], false);
        assert!(matches!(scar_strength(&incomplete, &set), Err(Error::IncompleteExpansion { .. })));
        assert!(matches!(best_resonant_set(&incomplete, &default_resonances(), 2), Err(Error::IncompleteExpansion { .. })));
    }

    #[test]
    fn mirror_membership_at_zero_field() {
        let set = resonant_set(label(2, 4), pentagram(), 1);
        let sub = synthetic(&[(label(2, 4), 0.5), (label(2, -4), 0.5)], true);
        assert!((scar_strength(&sub, &set).unwrap().set_weight - 1.0).abs() < 1e-12);
        assert_eq!(member_weights(&sub, &set), vec![0.0, 1.0, 0.0]);
        let sub = synthetic(&[(label(2, 4), 0.5), (label(2, -4), 0.5)], false);
        assert!((scar_strength(&sub, &set).unwrap().set_weight - 0.5).abs() < 1e-12);
        assert_eq!(member_weights(&sub, &set), vec![0.0, 0.5, 0.0]);
        let zero = resonant_set(label(3, 0), pentagram(), 1);
        let sub = synthetic(&[(label(3, 0), 0.7), (label(5, -5), 0.1), (label(5, 5), 0.2)], true);
        let got = member_weights(&sub, &zero);
        for (g, w) in got.iter().zip([0.0, 0.7, 0.3]) {
            assert!((g - w).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn default_candidates() {
        let r = default_resonances();
        assert_eq!(r[0], ResonanceLabel::new(2, 1).unwrap());
        assert!(r.contains(&pentagram()));
        assert!(r.iter().all(|x| x.v_theta > x.v_r));
        assert!(r.windows(2).all(|w| w[0].v_theta + w[0].v_r <= w[1].v_theta + w[1].v_r));
    }

    fn ho_basis(b: f64) -> (UnperturbedBasis, EigenSet) {
        let grid = Grid2D::square(48, 5.5).unwrap();
        let pot = build_potential_grid(&grid, &PotentialSpec::unperturbed(2, 1.0, b), &BumpField::empty());
        let set = solve_dense(&pot, b, 15).unwrap();
        let basis = UnperturbedBasis::analytic(1.0, b, &grid, 0.0, 7.0, 1e-6).unwrap();
        (basis, set)
    }

    #[test]
    fn numerical_states_expand_onto_analytic_basis() {
        let (basis, set) = ho_basis(0.5);
        let d = basis.orthonormality_defect();
        assert!(d < 10.0 * basis.tol, "{d}");
        for (i, psi) in set.states.iter().enumerate() {
            let sub = overlaps(psi, &set.grid, &basis, i).unwrap();
            let top = sub.weights.iter().max_by(|a, b| a.weight.total_cmp(&b.weight)).unwrap();
            assert!((top.weight - 1.0).abs() < 1e-6, "{i}: {top:?}");
            assert!((top.energy - set.energies[i]).abs() < 1e-6);
            assert!(sub.completeness <= 1.0);
        }
    }

    #[test]
    fn degenerate_pairs_at_zero_field() {
        let (basis, set) = ho_basis(0.0);
        let sub = overlaps(&set.states[1], &set.grid, &basis, 1).unwrap();
        let pair: f64 = sub.weights.iter().filter(|w| (w.energy - 2.0).abs() < 1e-9).map(|w| w.weight).sum();
        assert!(pair >= 0.999, "{pair}");
        assert!(sub.time_reversal);
    }

    #[test]
    fn labels_from_a_solved_spectrum() {
        let grid = Grid2D::square(32, 6.0).unwrap();
        for b in [0.0, 0.5] {
            let pot = build_potential_grid(&grid, &PotentialSpec::unperturbed(2, 1.0, b), &BumpField::empty());
            let set = solve_dense(&pot, b, 15).unwrap();
            let basis = UnperturbedBasis::from_eigenset(&set, 1e-6, 1e-6).unwrap();
            for s in &basis.states {
                let e = crate::analytic::fock_darwin_energy(s.label, 1.0, b);
                assert!((e - s.energy).abs() < 1e-6, "b={b} {:?} {} vs {}", s.label, s.energy, e);
            }
            assert!(basis.orthonormality_defect() < 1e-8);
            assert_eq!(basis.len(), 15);
        }
    }

    #[test]
    fn parseval_and_window() {
        let (basis, set) = ho_basis(0.5);
        let small = basis.window(3.0, 1.0, &[], 0);
        assert!(small.len() < basis.len());
        let psi = &set.states[4];
        let a = overlaps(psi, &set.grid, &small, 4).unwrap().completeness;
        let b = overlaps(psi, &set.grid, &basis, 4).unwrap().completeness;
        assert!(a <= b + 1e-12 && b <= 1.0 + 1e-5);
        let mixed: Vec<C64> = set.states[2].iter().zip(&set.states[5]).map(|(x, y)| (x + y) * 0.5f64.sqrt()).collect();
        let c1 = overlaps(&mixed, &set.grid, &basis, 0).unwrap();
        let c2 = overlaps(&set.states[3], &set.grid, &basis, 0).unwrap();
        let dot: C64 = c1.weights.iter().zip(&c2.weights).map(|(u, v)| u.coefficient.conj() * v.coefficient).sum();
        assert!(dot.norm() < 1e-5);

        let other = Grid2D::square(32, 5.0).unwrap();
        assert!(matches!(overlaps(psi, &other, &basis, 0), Err(Error::GridMismatch { .. })));
        let mut states = basis.states.clone();
        states[1].state = states[0].state.clone();
        let broken = UnperturbedBasis::new(basis.grid, basis.b, basis.tol, states);
        assert!(matches!(overlaps(psi, &set.grid, &broken, 0), Err(Error::BasisNotOrthonormal { .. })));
    }
}
