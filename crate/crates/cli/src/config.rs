//! Run configuration: TOML with one table per concern, unknown keys rejected.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scarlab_core::analytic::ResonanceLabel;
use scarlab_core::model::{Grid2D, PotentialSpec};
use scarlab_core::solver::SolverConfig;
use scarlab_core::stats::EnsembleKind;

/// State counts above this need `solver.paper_scale = true`.
pub const DESK_STATE_LIMIT: usize = 1000;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub potential: PotentialBlock,
    pub bumps: BumpsBlock,
    pub field: FieldBlock,
    pub solver: SolverBlock,
    pub stats: StatsBlock,
    pub sweep: SweepBlock,
    pub subspec: SubspecBlock,
    pub dos: DosBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialBlock {
    pub n: u32,
    pub omega0: f64,
}

impl Default for PotentialBlock {
    fn default() -> Self {
        Self { n: 5, omega0: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BumpsBlock {
    /// Bump amplitude `M`.
    pub amplitude: f64,
    pub sigma: f64,
    /// Bumps per unit area.
    pub density: f64,
    pub seed: u64,
}

impl Default for BumpsBlock {
    fn default() -> Self {
        Self { amplitude: 0.0, sigma: 0.1, density: 2.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    pub fn values(&self) -> Result<Vec<f64>> {
        ensure!(self.step > 0.0 && self.step.is_finite(), "range step must be positive");
        ensure!(self.start.is_finite() && self.stop.is_finite(), "range bounds must be finite");
        ensure!(self.stop >= self.start, "range stop must not precede start");
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|k| self.start + k as f64 * self.step).collect())
    }
}

/// A single field `b`, a `sweep` range, or an explicit `points` list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldBlock {
    pub b: f64,
    pub sweep: Option<Range>,
    pub points: Option<Vec<f64>>,
}

impl FieldBlock {
    pub fn values(&self) -> Result<Vec<f64>> {
        let values = match (&self.points, &self.sweep) {
            (Some(_), Some(_)) => bail!("field: give either points or sweep, not both"),
            (Some(p), None) => p.clone(),
            (None, Some(r)) => r.values()?,
            (None, None) => vec![self.b],
        };
        ensure!(!values.is_empty(), "field: empty B list");
        ensure!(values.iter().all(|b| b.is_finite() && *b >= 0.0), "field: B values must be finite and >= 0");
        Ok(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Itp,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    /// Points per axis.
    pub grid: usize,
    /// The grid spans `[−half_extent, half_extent]²`.
    pub half_extent: f64,
    pub num_states: usize,
    pub tol: f64,
    pub method: SolverMethod,
    /// Required for more than `DESK_STATE_LIMIT` states.
    pub paper_scale: bool,
    pub max_iters: usize,
    pub dtau_schedule: Vec<f64>,
    pub extra_states: Option<usize>,
    /// Seed of the random initial block.
    pub init_seed: u64,
    pub stage_tol: f64,
    pub stage_max_iters: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let core = SolverConfig::default();
        Self {
            grid: 128,
            half_extent: 4.5,
            num_states: core.num_states,
            tol: core.tol,
            method: SolverMethod::Itp,
            paper_scale: false,
            max_iters: core.max_iters,
            dtau_schedule: core.dtau_schedule,
            extra_states: core.extra_states,
            init_seed: core.seed,
            stage_tol: core.stage_tol,
            stage_max_iters: core.stage_max_iters,
        }
    }
}

impl SolverBlock {
    pub fn core(&self) -> SolverConfig {
        SolverConfig {
            num_states: self.num_states,
            tol: self.tol,
            max_iters: self.max_iters,
            dtau_schedule: self.dtau_schedule.clone(),
            extra_states: self.extra_states,
            seed: self.init_seed,
            stage_tol: self.stage_tol,
            stage_max_iters: self.stage_max_iters,
        }
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Ok(Grid2D::square(self.grid, self.half_extent)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// GUE when `B ≠ 0`, else GOE.
    Auto,
    Goe,
    Gue,
}

impl Reference {
    pub fn resolve(self, b: f64) -> EnsembleKind {
        match self {
            Self::Auto => EnsembleKind::chaotic_for_field(b),
            Self::Goe => EnsembleKind::Goe,
            Self::Gue => EnsembleKind::Gue,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnfoldChoice {
    /// Polynomial for synthetic spectra, Thomas-Fermi with fallback otherwise.
    Auto,
    ThomasFermi,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsBlock {
    pub ensemble: Reference,
    pub l_max: f64,
    pub l_step: f64,
    pub bins: usize,
    pub unfold: UnfoldChoice,
}

impl Default for StatsBlock {
    fn default() -> Self {
        Self { ensemble: Reference::Auto, l_max: 30.0, l_step: 0.5, bins: 40, unfold: UnfoldChoice::Auto }
    }
}

impl StatsBlock {
    pub fn l_axis(&self) -> Vec<f64> {
        let count = (self.l_max / self.l_step + 1e-9).floor() as usize;
        (1..=count).map(|k| k as f64 * self.l_step).collect()
    }
}

/// Parameter tuples: the product of `amplitudes × sigmas`, or explicit
/// `(M, σ)` `points`; each crossed with the field values and `seeds`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    pub amplitudes: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub seeds: Vec<u64>,
    /// Write each job's eigenstate container.
    pub keep_states: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubspecBlock {
    /// Basis window half-width in local level spacings.
    pub half_width: f64,
    pub k_max: u32,
    /// Candidate `(v_θ, v_r)`; the built-in list when absent.
    pub resonances: Option<Vec<[u32; 2]>>,
    pub cluster_threshold: f64,
}

impl Default for SubspecBlock {
    fn default() -> Self {
        Self {
            half_width: 15.0,
            k_max: 2,
            resonances: None,
            cluster_threshold: scarlab_core::subspectrum::CLUSTER_THRESHOLD,
        }
    }
}

impl SubspecBlock {
    pub fn resonances(&self) -> Result<Vec<ResonanceLabel>> {
        match &self.resonances {
            None => Ok(scarlab_core::subspectrum::default_resonances()),
            Some(list) => {
                ensure!(!list.is_empty(), "subspec: empty resonance list");
                list.iter().map(|&[t, r]| Ok(ResonanceLabel::new(t, r)?)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DosBlock {
    pub b_start: f64,
    pub b_stop: f64,
    pub b_step: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub e_step: f64,
    /// Gaussian smearing width.
    pub window: f64,
}

impl Default for DosBlock {
    fn default() -> Self {
        Self { b_start: 0.0, b_stop: 2.0, b_step: 0.01, e_min: 0.0, e_max: 100.0, e_step: 0.02, window: 0.001 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text).context("parsing manifest")?;
            let inner = value.get("config").context("manifest has no config")?;
            serde_json::from_value(inner.clone()).context("manifest config")?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn potential_spec(&self, b: f64) -> PotentialSpec {
        PotentialSpec {
            n: self.potential.n,
            omega0: self.potential.omega0,
            amplitude: self.bumps.amplitude,
            sigma: self.bumps.sigma,
            b,
            bump_density: self.bumps.density,
            seed: self.bumps.seed,
        }
    }

    /// Checks every precondition that does not need a solve.
    pub fn validate(&self) -> Result<()> {
        for b in self.field.values()? {
            self.potential_spec(b).validate()?;
        }
        let s = &self.solver;
        let grid = s.grid()?;
        if s.method == SolverMethod::Itp {
            ensure!(grid.is_pow2(), "solver.grid must be a power of two for the ITP solver");
        }
        ensure!(s.half_extent > 0.0 && s.half_extent.is_finite(), "solver.half_extent must be positive");
        if s.num_states > DESK_STATE_LIMIT && !s.paper_scale {
            bail!(
                "solver.num_states = {} exceeds the desk limit {DESK_STATE_LIMIT}; set solver.paper_scale = true",
                s.num_states
            );
        }
        s.core().validate()?;

        let st = &self.stats;
        ensure!(st.l_step > 0.0 && st.l_max >= st.l_step, "stats: need 0 < l_step <= l_max");
        ensure!(st.l_max <= 30.0, "stats.l_max must not exceed 30");
        ensure!(st.bins >= 1, "stats.bins must be >= 1");

        let sw = &self.sweep;
        ensure!(
            sw.points.is_empty() || (sw.amplitudes.is_empty() && sw.sigmas.is_empty()),
            "sweep: give either points or amplitudes/sigmas"
        );
        ensure!(
            sw.amplitudes.is_empty() == sw.sigmas.is_empty(),
            "sweep: amplitudes and sigmas must both be given"
        );
        for &[m, sigma] in sw.points.iter().chain(sw.amplitudes.iter().flat_map(|&m| sw.sigmas.iter().map(move |&s| [m, s])).collect::<Vec<_>>().iter()) {
            ensure!(m >= 0.0 && m.is_finite(), "sweep: amplitudes must be >= 0");
            ensure!(sigma > 0.0 && sigma.is_finite(), "sweep: sigmas must be positive");
        }

        let sub = &self.subspec;
        ensure!(sub.half_width > 0.0, "subspec.half_width must be positive");
        ensure!(sub.cluster_threshold >= 0.0, "subspec.cluster_threshold must be >= 0");
        sub.resonances()?;

        let d = &self.dos;
        Range { start: d.b_start, stop: d.b_stop, step: d.b_step }.values().context("dos B axis")?;
        Range { start: d.e_min, stop: d.e_max, step: d.e_step }.values().context("dos E axis")?;
        ensure!(d.window > 0.0, "dos.window must be positive");
        Ok(())
    }

    /// `(M, σ)` pairs of the sweep; the configured bumps when none are given.
    pub fn sweep_pairs(&self) -> Vec<[f64; 2]> {
        let sw = &self.sweep;
        if !sw.points.is_empty() {
            sw.points.clone()
        } else if !sw.amplitudes.is_empty() {
            sw.amplitudes.iter().flat_map(|&m| sw.sigmas.iter().map(move |&s| [m, s])).collect()
        } else {
            vec![[self.bumps.amplitude, self.bumps.sigma]]
        }
    }

    pub fn sweep_seeds(&self) -> Vec<u64> {
        if self.sweep.seeds.is_empty() {
            vec![self.bumps.seed]
        } else {
            self.sweep.seeds.clone()
        }
    }

    pub fn apply_seed_override(&mut self, seed: u64) {
        self.bumps.seed = seed;
        self.sweep.seeds = vec![seed];
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
