//! Subcommand bodies. Each writes into its run directory and finishes with a
//! manifest listing every file it produced.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use scarlab_core::analytic::{dos_map, fock_darwin_levels, resonance_field, ResonanceLabel};
use scarlab_core::stats::{synth_spectrum, EnsembleKind};
use scarlab_core::subspectrum::{best_resonant_set, member_weights, overlaps, scar_strength, UnperturbedBasis};
use scarlab_core::Error as CoreError;

use crate::config::{Range, RunConfig};
use crate::io::{num, read_container, read_spectrum, write_csv, write_json, write_pgm};
use crate::manifest::{JobRecord, JobStatus, Outputs};
use crate::pipeline::{self, AvgSd, EnsembleSummary, SpectrumStats, StatsReport};

/// Raised after all outputs are written when some estimator failed.
#[derive(Debug)]
pub struct EstimatorFailure(pub String);

impl std::fmt::Display for EstimatorFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "estimator failure: {}", self.0)
    }
}

impl std::error::Error for EstimatorFailure {}

fn single_field(cfg: &RunConfig) -> Result<f64> {
    let values = cfg.field.values()?;
    ensure!(values.len() == 1, "this command takes a single field value; use sweep for B lists");
    Ok(values[0])
}

fn stats_failures(report: &StatsReport) -> Option<String> {
    let msgs: Vec<String> = report
        .spectra
        .iter()
        .filter(|s| s.failed())
        .map(|s| {
            let errs: Vec<String> = [("q", &s.q), ("Q", &s.big_q), ("alpha", &s.alpha)]
                .into_iter()
                .filter_map(|(name, o)| match o {
                    pipeline::Outcome::Error(e) => Some(format!("{name}: {e}")),
                    pipeline::Outcome::Ok(_) => None,
                })
                .collect();
            format!("{}: {}", s.source, errs.join("; "))
        })
        .collect();
    (!msgs.is_empty()).then(|| msgs.join(" | "))
}

pub fn solve(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let b = single_field(cfg)?;
    let mut out = Outputs::new(out_dir)?;
    pipeline::run_solve(cfg, b, &mut out, "", true)?;
    out.finish("solve", cfg, vec![cfg.bumps.seed], vec![])?;
    Ok(())
}

pub fn stats(cfg: &RunConfig, out_dir: &Path, inputs: &[PathBuf]) -> Result<()> {
    ensure!(!inputs.is_empty(), "stats needs at least one spectrum file");
    let b = single_field(cfg)?;
    let spectra = inputs.iter().map(|p| read_spectrum(p)).collect::<Result<Vec<_>>>()?;
    let mut out = Outputs::new(out_dir)?;
    let report = pipeline::run_stats(cfg, &spectra, b, &mut out, "")?;
    out.finish("stats", cfg, vec![], vec![])?;
    match stats_failures(&report) {
        Some(msg) => Err(EstimatorFailure(msg).into()),
        None => Ok(()),
    }
}

pub fn synth(cfg: &RunConfig, out_dir: &Path, kind: EnsembleKind, levels: usize, seeds: &[u64]) -> Result<()> {
    let seeds = if seeds.is_empty() { cfg.sweep_seeds() } else { seeds.to_vec() };
    let mut out = Outputs::new(out_dir)?;
    let name = serde_json::to_value(kind)?.as_str().unwrap_or("synthetic").to_string();
    for &seed in &seeds {
        let spec = synth_spectrum(kind, levels, seed)?;
        crate::io::write_spectrum(&out.path(&format!("{name}-{seed:04}.csv")), &spec)?;
    }
    out.finish("synth", cfg, seeds, vec![])?;
    Ok(())
}

/// One parameter tuple of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobParams {
    pub amplitude: f64,
    pub sigma: f64,
    pub b: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobReport {
    pub status: JobStatus,
    pub params: JobParams,
    #[serde(default)]
    pub error: Option<String>,
    /// Paths relative to the job directory.
    pub outputs: Vec<String>,
}

pub const JOB_FILE: &str = "job.json";
pub const JOB_CONFIG: &str = "config.toml";

fn job_config(cfg: &RunConfig, p: &JobParams) -> RunConfig {
    let mut job = cfg.clone();
    job.bumps.amplitude = p.amplitude;
    job.bumps.sigma = p.sigma;
    job.bumps.seed = p.seed;
    job.field = crate::config::FieldBlock { b: p.b, ..Default::default() };
    job.sweep = crate::config::SweepBlock { keep_states: cfg.sweep.keep_states, ..Default::default() };
    job
}

/// Body of the hidden `job` subcommand: solve and statistics for one tuple.
/// Writes `job.json` whatever the outcome.
pub fn job(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let params = JobParams { amplitude: cfg.bumps.amplitude, sigma: cfg.bumps.sigma, b: single_field(cfg)?, seed: cfg.bumps.seed };
    let mut out = Outputs::new(out_dir)?;
    let result = pipeline::run_solve(cfg, params.b, &mut out, "", cfg.sweep.keep_states)
        .and_then(|(spec, _)| pipeline::run_stats(cfg, &[spec], params.b, &mut out, ""));
    let (status, error) = match &result {
        Ok(report) => match stats_failures(report) {
            Some(msg) => (JobStatus::EstimatorFailed, Some(msg)),
            None => (JobStatus::Ok, None),
        },
        Err(e) => (JobStatus::Failed, Some(format!("{e:#}"))),
    };
    let mut outputs: Vec<String> = Vec::new();
    for rel in ["spectrum.csv", "eigenstates.qscr", "solve.json", "stats.json", "nnls.csv", "delta3.csv", "dfa.csv"] {
        if out.root().join(rel).exists() {
            outputs.push(rel.to_string());
        }
    }
    outputs.push(JOB_CONFIG.into());
    outputs.push(JOB_FILE.into());
    outputs.sort();
    write_json(&out_dir.join(JOB_FILE), &JobReport { status, params, error: error.clone(), outputs })?;
    match (status, error) {
        (JobStatus::Ok, _) => Ok(()),
        (JobStatus::EstimatorFailed, Some(msg)) => Err(EstimatorFailure(msg).into()),
        _ => result.map(|_| ()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub job: String,
    #[serde(flatten)]
    pub params: JobParams,
    pub status: JobStatus,
    pub q: Option<f64>,
    #[serde(rename = "Q")]
    pub big_q: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepGroup {
    pub amplitude: f64,
    pub sigma: f64,
    pub b: f64,
    pub seeds: usize,
    pub q: Option<AvgSd>,
    #[serde(rename = "Q")]
    pub big_q: Option<AvgSd>,
    pub alpha: Option<AvgSd>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub schema: &'static str,
    pub rows: Vec<SweepRow>,
    /// Average and standard deviation over seeds per `(M, σ, B)`.
    pub groups: Vec<SweepGroup>,
}

pub fn sweep_jobs(cfg: &RunConfig) -> Result<Vec<JobParams>> {
    let fields = cfg.field.values()?;
    let seeds = cfg.sweep_seeds();
    let mut jobs = Vec::new();
    for [amplitude, sigma] in cfg.sweep_pairs() {
        for &b in &fields {
            for &seed in &seeds {
                jobs.push(JobParams { amplitude, sigma, b, seed });
            }
        }
    }
    Ok(jobs)
}

fn run_child(exe: &Path, dir: &Path) -> Option<String> {
    let output = Command::new(exe)
        .arg("--config")
        .arg(dir.join(JOB_CONFIG))
        .arg("--out-dir")
        .arg(dir)
        .arg("job")
        .output();
    match output {
        Ok(o) if o.status.success() => None,
        Ok(o) => {
            let stderr = String::from_utf8_lossy(&o.stderr);
            Some(stderr.lines().last().unwrap_or("job failed").to_string())
        }
        Err(e) => Some(format!("could not start job: {e}")),
    }
}

pub fn sweep(cfg: &RunConfig, out_dir: &Path, workers: usize) -> Result<()> {
    let jobs = sweep_jobs(cfg)?;
    ensure!(!jobs.is_empty(), "sweep has no jobs");
    let mut out = Outputs::new(out_dir)?;
    let names: Vec<String> = (0..jobs.len()).map(|k| format!("job-{k:04}")).collect();
    for (name, p) in names.iter().zip(&jobs) {
        let dir = out_dir.join(name);
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(JOB_CONFIG), toml::to_string(&job_config(cfg, p))?)?;
    }

    let exe = std::env::current_exe().context("locating the scarlab executable")?;
    let next = AtomicUsize::new(0);
    let launch_errors = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, jobs.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= jobs.len() {
                    break;
                }
                let err = run_child(&exe, &out_dir.join(&names[k]));
                launch_errors.lock().unwrap()[k] = err;
            });
        }
    });
    let launch_errors = launch_errors.into_inner().unwrap();

    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut stats_by_job: Vec<Option<SpectrumStats>> = Vec::new();
    for (k, (name, p)) in names.iter().zip(&jobs).enumerate() {
        let dir = out_dir.join(name);
        let report: Option<JobReport> =
            std::fs::read_to_string(dir.join(JOB_FILE)).ok().and_then(|t| serde_json::from_str(&t).ok());
        let (status, error) = match &report {
            Some(r) => {
                out.extend(r.outputs.iter().map(|f| format!("{name}/{f}")));
                (r.status, r.error.clone())
            }
            None => {
                out.extend([format!("{name}/{JOB_CONFIG}")]);
                (JobStatus::Failed, launch_errors[k].clone().or(Some("job produced no report".into())))
            }
        };
        let stats: Option<SpectrumStats> = std::fs::read_to_string(dir.join("stats.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
            .and_then(|v| spectrum_stats_from_json(&v["spectra"][0]));
        rows.push(SweepRow {
            job: name.clone(),
            params: *p,
            status,
            q: stats.as_ref().and_then(|s| s.q.value()),
            big_q: stats.as_ref().and_then(|s| s.big_q.value()),
            alpha: stats.as_ref().and_then(|s| s.alpha.value()),
        });
        stats_by_job.push(stats);
        records.push(JobRecord { id: name.clone(), status, error });
    }

    let mut groups: Vec<SweepGroup> = Vec::new();
    let mut seen: Vec<(f64, f64, f64)> = Vec::new();
    for p in &jobs {
        let key = (p.amplitude, p.sigma, p.b);
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        let members: Vec<&SpectrumStats> = jobs
            .iter()
            .zip(&stats_by_job)
            .filter(|(q, _)| (q.amplitude, q.sigma, q.b) == key)
            .filter_map(|(_, s)| s.as_ref())
            .collect();
        let summary = EnsembleSummary::of(members.iter().copied());
        groups.push(SweepGroup {
            amplitude: key.0,
            sigma: key.1,
            b: key.2,
            seeds: members.len(),
            q: summary.q,
            big_q: summary.big_q,
            alpha: summary.alpha,
        });
    }

    let opt = |v: Option<f64>| v.map_or_else(String::new, num);
    write_csv(
        &out.path("sweep.csv"),
        "job,M,sigma,B,seed,q,Q,alpha,status",
        rows.iter().map(|r| {
            vec![
                r.job.clone(),
                num(r.params.amplitude),
                num(r.params.sigma),
                num(r.params.b),
                r.params.seed.to_string(),
                opt(r.q),
                opt(r.big_q),
                opt(r.alpha),
                serde_json::to_value(r.status).unwrap().as_str().unwrap().to_string(),
            ]
        }),
    )?;
    write_json(&out.path("sweep.json"), &SweepReport { schema: "scarlab-sweep/1", rows, groups })?;
    let failures: Vec<String> = records
        .iter()
        .filter(|r| r.status != JobStatus::Ok)
        .map(|r| format!("{}: {}", r.id, r.error.clone().unwrap_or_default()))
        .collect();
    let any_hard = records.iter().any(|r| r.status == JobStatus::Failed);
    out.finish("sweep", cfg, cfg.sweep_seeds(), records)?;
    if failures.is_empty() {
        Ok(())
    } else if any_hard {
        bail!("{} of {} jobs failed: {}", failures.len(), jobs.len(), failures.join(" | "))
    } else {
        Err(EstimatorFailure(failures.join(" | ")).into())
    }
}

fn spectrum_stats_from_json(v: &serde_json::Value) -> Option<SpectrumStats> {
    let outcome = |key: &str| -> pipeline::Outcome {
        match v[key]["ok"]["estimate"].as_f64() {
            Some(x) => pipeline::Outcome::Ok(pipeline::Estimate { estimate: x, raw: x, residual: 0.0, ensemble: None, note: None }),
            None => pipeline::Outcome::Error(v[key]["error"].as_str().unwrap_or("missing").to_string()),
        }
    };
    Some(SpectrumStats {
        source: v["source"].as_str()?.to_string(),
        levels: v["levels"].as_u64()? as usize,
        window_levels: v["window_levels"].as_u64().unwrap_or(0) as usize,
        unfold: None,
        warnings: vec![],
        q: outcome("q"),
        big_q: outcome("Q"),
        alpha: outcome("alpha"),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SetReport {
    pub anchor: [i64; 2],
    /// `(v_θ, v_r)`; members step as `(n_r + k v_r, l − k v_θ)`.
    pub resonance: [u32; 2],
    pub members: Vec<[i64; 2]>,
    /// Per member; at zero field including the mirror image `(n_r, −l)`.
    pub member_weights: Vec<f64>,
    pub set_weight: f64,
    pub participation: f64,
    /// Members with weight above 0.05.
    pub strong_members: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubspecReport {
    pub schema: &'static str,
    pub state_index: usize,
    pub energy: f64,
    pub b: f64,
    pub basis: String,
    pub basis_size: usize,
    pub completeness: f64,
    pub complete: bool,
    pub warning: Option<String>,
    pub best_set: Option<SetReport>,
}

pub const STRONG_WEIGHT: f64 = 0.05;

pub fn subspec(cfg: &RunConfig, out_dir: &Path, container: &Path, state: usize, basis_path: Option<&Path>) -> Result<()> {
    let set = read_container(container)?;
    ensure!(state < set.len(), "state index {state} out of range (container holds {})", set.len());
    let energy = set.energies[state];
    let sub_cfg = &cfg.subspec;
    let resonances = sub_cfg.resonances()?;
    let tol = cfg.solver.tol;

    let (full, label) = match basis_path {
        Some(path) => {
            let base = read_container(path)?;
            ensure!(base.b == set.b, "basis field {} differs from the state field {}", base.b, set.b);
            (UnperturbedBasis::from_eigenset(&base, sub_cfg.cluster_threshold, tol)?, format!("solved:{}", path.display()))
        }
        None if cfg.potential.n == 2 => {
            let omega0 = cfg.potential.omega0;
            let levels = fock_darwin_levels(omega0, set.b, energy * 1.5 + 10.0);
            let near = levels.partition_point(|(_, e)| *e < energy);
            let lo = near.saturating_sub(40);
            let hi = (near + 40).min(levels.len() - 1);
            let spacing = (levels[hi].1 - levels[lo].1) / (hi - lo).max(1) as f64;
            let reach = 3.0 * sub_cfg.half_width * spacing;
            let basis = UnperturbedBasis::analytic(omega0, set.b, &set.grid, energy - reach, energy + reach, tol)?;
            (basis, "analytic".to_string())
        }
        None => bail!(CoreError::UnsupportedPotential(format!(
            "n = {} has no analytic basis; pass --basis with a solved M = 0 container",
            cfg.potential.n
        ))),
    };
    let basis = full.window(energy, sub_cfg.half_width, &resonances, sub_cfg.k_max);
    let sub = overlaps(&set.states[state], &set.grid, &basis, state)?;

    let mut out = Outputs::new(out_dir)?;
    write_csv(
        &out.path("subspec.csv"),
        "m,n_r,l,energy,weight",
        sub.weights.iter().map(|w| {
            vec![w.m.to_string(), w.label.n_r.to_string(), w.label.l.to_string(), num(w.energy), num(w.weight)]
        }),
    )?;
    let density: Vec<f64> = set.states[state].iter().map(|z| z.norm_sqr()).collect();
    write_pgm(&out.path("density.pgm"), &set.grid, &density)?;

    let (best_set, warning) = if sub.is_complete() {
        let (rs, weight) = best_resonant_set(&sub, &resonances, sub_cfg.k_max)?;
        let strength = scar_strength(&sub, &rs)?;
        let rungs = member_weights(&sub, &rs);
        let strong = rungs.iter().filter(|&&w| w > STRONG_WEIGHT).count();
        let pair = |l: scarlab_core::analytic::FDLabel| [l.n_r as i64, l.l as i64];
        let report = SetReport {
            anchor: pair(rs.anchor),
            resonance: [rs.resonance.v_theta, rs.resonance.v_r],
            members: rs.members.iter().map(|&m| pair(m)).collect(),
            member_weights: rungs,
            set_weight: weight,
            participation: strength.participation,
            strong_members: strong,
        };
        (Some(report), None)
    } else {
        let msg = format!("incomplete expansion: completeness {:.4} below 0.99; no resonant set reported", sub.completeness);
        eprintln!("warning: {msg}");
        (None, Some(msg))
    };
    write_json(
        &out.path("subspec.json"),
        &SubspecReport {
            schema: "scarlab-subspec/1",
            state_index: state,
            energy,
            b: set.b,
            basis: label,
            basis_size: basis.len(),
            completeness: sub.completeness,
            complete: sub.is_complete(),
            warning,
            best_set,
        },
    )?;
    out.finish("subspec", cfg, vec![], vec![])?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceMark {
    /// `(v_θ, v_r)` with field `B = (v_r/v_θ − 2)/√(v_r/v_θ − 1)`.
    pub resonance: [u32; 2],
    pub b: f64,
    /// Nearest local maximum of the clustering curve within 0.05.
    pub clustering_peak: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DosReport {
    pub schema: &'static str,
    pub omega0: f64,
    pub window: f64,
    pub b_axis: Vec<f64>,
    pub e_range: [f64; 3],
    pub clustering: Vec<f64>,
    pub resonances: Vec<ResonanceMark>,
}

/// Indices of local maxima; an endpoint counts when it exceeds its neighbour.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    (0..n)
        .filter(|&k| {
            let left = k == 0 || values[k] > values[k - 1];
            let right = k + 1 == n || values[k] >= values[k + 1];
            n > 1 && left && right
        })
        .collect()
}

/// Coprime `(v_θ, v_r)` with `v_r > v_θ`, `v_θ ≤ 4`, `v_r ≤ 9` whose field
/// lies in `[lo, hi]`, ordered by field.
pub fn field_resonances(lo: f64, hi: f64) -> Vec<(ResonanceLabel, f64)> {
    let mut out: Vec<(ResonanceLabel, f64)> = (1..=4u32)
        .flat_map(|t| (t + 1..=9).map(move |r| (t, r)))
        .filter_map(|(t, r)| ResonanceLabel::new(t, r).ok().filter(|res| res.v_theta == t))
        .filter_map(|res| resonance_field(res).ok().map(|b| (res, b)))
        .filter(|&(_, b)| b >= lo - 1e-12 && b <= hi + 1e-12)
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.v_theta.cmp(&b.0.v_theta)));
    out
}

pub fn dos(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    if cfg.potential.n != 2 {
        bail!(CoreError::UnsupportedPotential(format!(
            "the density-of-states map needs the r^2 well, got n = {}",
            cfg.potential.n
        )));
    }
    let d = &cfg.dos;
    let b_axis = Range { start: d.b_start, stop: d.b_stop, step: d.b_step }.values()?;
    let e_axis = Range { start: d.e_min, stop: d.e_max, step: d.e_step }.values()?;
    let map = dos_map(cfg.potential.omega0, &b_axis, &e_axis, d.window, d.e_max)?;
    let clustering = map.clustering();
    let maxima = local_maxima(&clustering);

    let resonances = field_resonances(d.b_start, d.b_stop)
        .into_iter()
        .map(|(res, b)| {
            let peak = maxima
                .iter()
                .map(|&k| b_axis[k])
                .filter(|x| (x - b).abs() <= 0.05)
                .min_by(|x, y| (x - b).abs().total_cmp(&(y - b).abs()));
            ResonanceMark { resonance: [res.v_theta, res.v_r], b, clustering_peak: peak }
        })
        .collect();

    let mut out = Outputs::new(out_dir)?;
    let mut header = String::from("B");
    for e in &e_axis {
        header.push(',');
        header.push_str(&format!("{e:e}"));
    }
    write_csv(
        &out.path("dos.csv"),
        &header,
        b_axis.iter().zip(&map.density).map(|(b, col)| {
            std::iter::once(format!("{b:e}")).chain(col.iter().map(|v| format!("{v:e}"))).collect()
        }),
    )?;
    write_csv(
        &out.path("clustering.csv"),
        "B,clustering",
        b_axis.iter().zip(&clustering).map(|(b, c)| vec![num(*b), num(*c)]),
    )?;
    write_json(
        &out.path("dos.json"),
        &DosReport {
            schema: "scarlab-dos/1",
            omega0: cfg.potential.omega0,
            window: d.window,
            b_axis: b_axis.clone(),
            e_range: [d.e_min, d.e_max, d.e_step],
            clustering,
            resonances,
        },
    )?;
    out.finish("dos", cfg, vec![], vec![])?;
    Ok(())
}
