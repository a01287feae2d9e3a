//! On-disk formats: spectrum CSV, `QSCR1` eigenstate container, JSON, PGM.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use scarlab_core::model::{Extent, Grid2D};
use scarlab_core::solver::EigenSet;
use scarlab_core::spectra::Spectrum;
use scarlab_core::C64;

pub const SPECTRUM_HEADER: &str = "# scarlab spectrum v1";
pub const QSCR_MAGIC: &[u8; 6] = b"QSCR1\0";

pub fn write_spectrum(path: &Path, spec: &Spectrum) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "{SPECTRUM_HEADER}")?;
    writeln!(w, "# source {}", spec.source)?;
    for e in &spec.energies {
        writeln!(w, "{e:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut lines = r.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    ensure!(first.trim() == SPECTRUM_HEADER, "{}: missing spectrum header", path.display());
    let mut source = path.display().to_string();
    let mut energies = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("# source ") {
            source = rest.to_string();
        } else if !t.is_empty() && !t.starts_with('#') {
            energies.push(t.parse::<f64>().with_context(|| format!("{}: line {}", path.display(), k + 2))?);
        }
    }
    Ok(Spectrum::new(energies, source)?)
}

pub fn write_container(path: &Path, set: &EigenSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    let g = &set.grid;
    w.write_all(QSCR_MAGIC)?;
    w.write_all(&(g.nx as u32).to_le_bytes())?;
    w.write_all(&(g.ny as u32).to_le_bytes())?;
    for v in [g.extent.x0, g.extent.x1, g.extent.y0, g.extent.y1, set.b] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(set.len() as u32).to_le_bytes())?;
    for (k, state) in set.states.iter().enumerate() {
        w.write_all(&set.energies[k].to_le_bytes())?;
        w.write_all(&set.residuals[k].to_le_bytes())?;
        for z in state {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<EigenSet> {
    let mut bytes = Vec::new();
    File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_end(&mut bytes)?;
    ensure!(bytes.len() >= 50 && &bytes[..6] == QSCR_MAGIC, "{}: not a QSCR1 container", path.display());
    let u32_at = |p: usize| u32::from_le_bytes(bytes[p..p + 4].try_into().unwrap()) as usize;
    let f64_at = |p: usize| f64::from_le_bytes(bytes[p..p + 8].try_into().unwrap());
    let (nx, ny) = (u32_at(6), u32_at(10));
    let extent = Extent::new(f64_at(14), f64_at(22), f64_at(30), f64_at(38));
    let b = f64_at(46);
    let k = u32_at(54);
    let grid = Grid2D::new(nx, ny, extent)?;
    let per_state = 16 + 16 * grid.len();
    if bytes.len() != 58 + k * per_state {
        bail!("{}: size {} does not match header ({} states on {nx}x{ny})", path.display(), bytes.len(), k);
    }
    let mut energies = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    let mut states = Vec::with_capacity(k);
    for s in 0..k {
        let base = 58 + s * per_state;
        energies.push(f64_at(base));
        residuals.push(f64_at(base + 8));
        states.push((0..grid.len()).map(|p| C64::new(f64_at(base + 16 + 16 * p), f64_at(base + 24 + 16 * p))).collect());
    }
    Ok(EigenSet { energies, states, grid, b, residuals })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Binary greyscale image, row 0 at the top (largest `y`), scaled to the maximum.
pub fn write_pgm(path: &Path, grid: &Grid2D, values: &[f64]) -> Result<()> {
    ensure!(values.len() == grid.len(), "image size mismatch");
    let max = values.iter().copied().fold(0.0, f64::max);
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write!(w, "P5\n{} {}\n255\n", grid.nx, grid.ny)?;
    let mut row = vec![0u8; grid.nx];
    for j in (0..grid.ny).rev() {
        for (i, px) in row.iter_mut().enumerate() {
            let v = values[grid.index(i, j)];
            *px = if max > 0.0 { (255.0 * v / max).round().clamp(0.0, 255.0) as u8 } else { 0 };
        }
        w.write_all(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Plain CSV with a header line; values are written with `Display`.
pub fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}
