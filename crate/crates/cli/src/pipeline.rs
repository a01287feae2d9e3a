//! Solve and statistics steps shared by the subcommands.

use anyhow::Result;
use serde::Serialize;

use scarlab_core::model::realize;
use scarlab_core::solver::{solve_dense, solve_itp, EigenSet};
use scarlab_core::spectra::{spacings, unfold, unfold_auto, FitMethod, Spectrum, UnfoldedSpectrum};
use scarlab_core::stats::{
    berry_robnik_pdf, chaotic_branch, delta3, dfa_alpha, dfa_fluctuations, fit_Q, fit_q, nnls_histogram,
    wigner_surmise, EnsembleKind, MixingResult,
};

use crate::config::{RunConfig, SolverMethod, UnfoldChoice};
use crate::io::{num, write_csv, write_json};
use crate::manifest::Outputs;

pub const STATS_SCHEMA: &str = "scarlab-stats/1";
pub const SOLVE_SCHEMA: &str = "scarlab-solve/1";
pub const MIN_STATS_LEVELS: usize = 500;
pub const WARN_STATS_LEVELS: usize = 2000;

#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub nx: usize,
    pub ny: usize,
    pub extent: [f64; 4],
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub schema: &'static str,
    pub n: u32,
    pub omega0: f64,
    pub amplitude: f64,
    pub sigma: f64,
    pub b: f64,
    pub seed: u64,
    pub bumps: usize,
    pub grid: GridReport,
    pub method: SolverMethod,
    pub num_states: usize,
    pub max_residual: f64,
    pub orthonormality_defect: f64,
    pub energy_range: [f64; 2],
}

pub fn spectrum_source(cfg: &RunConfig, b: f64) -> String {
    format!(
        "solve:n={}:M={}:sigma={}:B={}:seed={}",
        cfg.potential.n, cfg.bumps.amplitude, cfg.bumps.sigma, b, cfg.bumps.seed
    )
}

/// Solves at field `b`; writes `spectrum.csv`, `solve.json` and, when
/// `keep_states`, `eigenstates.qscr` under `prefix`.
pub fn run_solve(cfg: &RunConfig, b: f64, out: &mut Outputs, prefix: &str, keep_states: bool) -> Result<(Spectrum, EigenSet)> {
    let grid = cfg.solver.grid()?;
    let spec = cfg.potential_spec(b);
    let k = cfg.solver.num_states;
    if k > crate::config::DESK_STATE_LIMIT {
        eprintln!("warning: {k} states at paper scale; expect a runtime of many hours");
    }
    let core = cfg.solver.core();
    let (bumps, pot) = realize(&grid, &spec, core.block_size())?;
    let set = match cfg.solver.method {
        SolverMethod::Itp => solve_itp(&pot, b, &core)?,
        SolverMethod::Dense => solve_dense(&pot, b, k)?,
    };
    let spectrum = Spectrum::new(set.energies.clone(), spectrum_source(cfg, b))?;
    crate::io::write_spectrum(&out.path(&format!("{prefix}spectrum.csv")), &spectrum)?;
    if keep_states {
        crate::io::write_container(&out.path(&format!("{prefix}eigenstates.qscr")), &set)?;
    }
    let report = SolveReport {
        schema: SOLVE_SCHEMA,
        n: spec.n,
        omega0: spec.omega0,
        amplitude: spec.amplitude,
        sigma: spec.sigma,
        b,
        seed: spec.seed,
        bumps: bumps.centers.len(),
        grid: GridReport { nx: grid.nx, ny: grid.ny, extent: [grid.extent.x0, grid.extent.x1, grid.extent.y0, grid.extent.y1] },
        method: cfg.solver.method,
        num_states: set.len(),
        max_residual: set.residuals.iter().copied().fold(0.0, f64::max),
        orthonormality_defect: set.orthonormality_defect(),
        energy_range: [spectrum.energies[0], spectrum.energies[spectrum.len() - 1]],
    };
    write_json(&out.path(&format!("{prefix}solve.json")), &report)?;
    Ok((spectrum, set))
}

#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub raw: f64,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl From<&MixingResult> for Estimate {
    fn from(r: &MixingResult) -> Self {
        Self { estimate: r.estimate, raw: r.raw, residual: r.residual, ensemble: r.ensemble, note: r.note.clone() }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok(Estimate),
    Error(String),
}

impl Outcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Ok(e) => Some(e.estimate),
            Self::Error(_) => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumStats {
    pub source: String,
    pub levels: usize,
    pub window_levels: usize,
    pub unfold: Option<FitMethod>,
    pub warnings: Vec<String>,
    pub q: Outcome,
    #[serde(rename = "Q")]
    pub big_q: Outcome,
    pub alpha: Outcome,
}

impl SpectrumStats {
    pub fn failed(&self) -> bool {
        [&self.q, &self.big_q, &self.alpha].iter().any(|o| o.value().is_none())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AvgSd {
    pub avg: f64,
    pub sd: f64,
    pub count: usize,
}

/// Mean and sample standard deviation; `None` for an empty list.
pub fn avg_sd(values: &[f64]) -> Option<AvgSd> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let avg = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(AvgSd { avg, sd, count: n })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub q: Option<AvgSd>,
    #[serde(rename = "Q")]
    pub big_q: Option<AvgSd>,
    pub alpha: Option<AvgSd>,
}

impl EnsembleSummary {
    pub fn of<'a>(items: impl IntoIterator<Item = &'a SpectrumStats> + Clone) -> Self {
        let pick = |f: fn(&SpectrumStats) -> &Outcome| -> Vec<f64> {
            items.clone().into_iter().filter_map(|s| f(s).value()).collect()
        };
        Self {
            q: avg_sd(&pick(|s| &s.q)),
            big_q: avg_sd(&pick(|s| &s.big_q)),
            alpha: avg_sd(&pick(|s| &s.alpha)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub schema: &'static str,
    pub reference: EnsembleKind,
    pub spectra: Vec<SpectrumStats>,
    pub ensemble: EnsembleSummary,
}

impl StatsReport {
    pub fn failed(&self) -> bool {
        self.spectra.iter().any(SpectrumStats::failed)
    }
}

fn unfold_with(cfg: &RunConfig, spec: &Spectrum) -> scarlab_core::Result<UnfoldedSpectrum> {
    match cfg.stats.unfold {
        UnfoldChoice::Polynomial => unfold(spec, FitMethod::polynomial()),
        UnfoldChoice::ThomasFermi => unfold(spec, FitMethod::thomas_fermi(cfg.potential.n)),
        UnfoldChoice::Auto if spec.source.starts_with("synthetic:") => unfold(spec, FitMethod::polynomial()),
        UnfoldChoice::Auto => unfold_auto(spec, Some(cfg.potential.n)),
    }
}

fn outcome(r: &scarlab_core::Result<MixingResult>) -> Outcome {
    match r {
        Ok(m) => Outcome::Ok(m.into()),
        Err(e) => Outcome::Error(e.to_string()),
    }
}

/// Estimators of one spectrum with their curve files `nnls.csv`,
/// `delta3.csv`, `dfa.csv` under `prefix`. Estimator failures are recorded,
/// not raised.
pub fn spectrum_stats(cfg: &RunConfig, spec: &Spectrum, reference: EnsembleKind, out: &mut Outputs, prefix: &str) -> Result<SpectrumStats> {
    let mut warnings = Vec::new();
    let fail = |msg: String, warnings: Vec<String>| SpectrumStats {
        source: spec.source.clone(),
        levels: spec.len(),
        window_levels: 0,
        unfold: None,
        warnings,
        q: Outcome::Error(msg.clone()),
        big_q: Outcome::Error(msg.clone()),
        alpha: Outcome::Error(msg),
    };
    if spec.len() < MIN_STATS_LEVELS {
        return Ok(fail(format!("{} levels, need at least {MIN_STATS_LEVELS}", spec.len()), warnings));
    }
    if spec.len() < WARN_STATS_LEVELS {
        warnings.push(format!("only {} levels; estimates below {WARN_STATS_LEVELS} levels are noisy", spec.len()));
    }
    let unf = match unfold_with(cfg, spec) {
        Ok(u) => u,
        Err(e) => return Ok(fail(e.to_string(), warnings)),
    };
    let s = spacings(&unf);

    let q = fit_q(&s);
    let hist = nnls_histogram(&s, cfg.stats.bins);
    let q_value = q.as_ref().map(|r| r.estimate).ok();
    write_csv(
        &out.path(&format!("{prefix}nnls.csv")),
        "s,density,poisson,chaotic,berry_robnik",
        hist.centers().into_iter().zip(&hist.density).map(|(c, d)| {
            vec![
                num(c),
                num(*d),
                num((-c).exp()),
                num(wigner_surmise(c, reference)),
                q_value.map_or_else(String::new, |q| num(berry_robnik_pdf(c, q))),
            ]
        }),
    )?;

    let curve = delta3(&unf, &cfg.stats.l_axis());
    let big_q = match &curve {
        Ok(c) => fit_Q(c, reference),
        Err(e) => Err(e.clone()),
    };
    if let Ok(c) = &curve {
        let chaotic = if reference == EnsembleKind::Poisson { EnsembleKind::Goe } else { reference };
        let fitted = big_q.as_ref().map(|r| r.estimate).ok();
        write_csv(
            &out.path(&format!("{prefix}delta3.csv")),
            "L,delta3,poisson,chaotic,mixture",
            c.l_axis.iter().zip(&c.values).map(|(&l, &v)| {
                vec![
                    num(l),
                    num(v),
                    num(l / 15.0),
                    num(chaotic_branch(l, chaotic)),
                    fitted.map_or_else(String::new, |q| num(q * l / 15.0 + chaotic_branch((1.0 - q) * l, chaotic))),
                ]
            }),
        )?;
    }

    let alpha = dfa_alpha(&s);
    if let Ok(f) = dfa_fluctuations(&s) {
        write_csv(&out.path(&format!("{prefix}dfa.csv")), "n,F", f.into_iter().map(|(n, v)| vec![n.to_string(), num(v)]))?;
    }

    Ok(SpectrumStats {
        source: spec.source.clone(),
        levels: spec.len(),
        window_levels: unf.window.1 - unf.window.0,
        unfold: Some(unf.fit.method),
        warnings,
        q: outcome(&q),
        big_q: outcome(&big_q),
        alpha: outcome(&alpha),
    })
}

/// Runs the estimators on every spectrum and writes `stats.json`. Curves
/// carry a `NNNN-` prefix when there is more than one spectrum.
pub fn run_stats(cfg: &RunConfig, spectra: &[Spectrum], b: f64, out: &mut Outputs, prefix: &str) -> Result<StatsReport> {
    let reference = cfg.stats.ensemble.resolve(b);
    let mut items = Vec::with_capacity(spectra.len());
    for (k, spec) in spectra.iter().enumerate() {
        let tag = if spectra.len() > 1 { format!("{prefix}{k:04}-") } else { prefix.to_string() };
        let item = spectrum_stats(cfg, spec, reference, out, &tag)?;
        for w in &item.warnings {
            eprintln!("warning: {}: {w}", item.source);
        }
        items.push(item);
    }
    let report = StatsReport { schema: STATS_SCHEMA, reference, ensemble: EnsembleSummary::of(&items), spectra: items };
    write_json(&out.path(&format!("{prefix}stats.json")), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_sd() {
        let s = avg_sd(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.avg, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(avg_sd(&[7.0]).unwrap().sd, 0.0);
        assert!(avg_sd(&[]).is_none());
    }
}
