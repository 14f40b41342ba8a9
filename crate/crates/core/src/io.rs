//! CSV and JSON artifacts.
//!
//! A spectra file is one `# {json header}` line followed by a CSV table with
//! columns `omega, re_f0, im_f0, re_f1, im_f1, re_f2, im_f2`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RgError};
use crate::linear::LinearStepReport;
use crate::nonlinear::Trajectory;
use crate::space::{SampledFunction, SpaceConfig};

pub const SPECTRA_COLUMNS: [&str; 7] = ["omega", "re_f0", "im_f0", "re_f1", "im_f1", "re_f2", "im_f2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraHeader {
    pub cfg: SpaceConfig,
    pub tag: String,
}

pub fn write_spectra<W: Write>(f: &SampledFunction, mut out: W) -> Result<()> {
    let header = SpectraHeader { cfg: *f.cfg(), tag: f.tag().to_string() };
    writeln!(out, "# {}", serde_json::to_string(&header)?)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SPECTRA_COLUMNS)?;
    let omegas = f.cfg().omegas();
    for (k, w_k) in omegas.iter().enumerate() {
        let row = [
            *w_k,
            f.f0()[k].re,
            f.f0()[k].im,
            f.f1()[k].re,
            f.f1()[k].im,
            f.f2()[k].re,
            f.f2()[k].im,
        ];
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_spectra<R: Read>(input: R) -> Result<SampledFunction> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let json = first
        .trim_end()
        .strip_prefix("# ")
        .ok_or_else(|| RgError::Io("spectra file must start with a '# {header}' line".into()))?;
    let header: SpectraHeader = serde_json::from_str(json)?;
    header.cfg.validate()?;
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(SPECTRA_COLUMNS) {
        return Err(RgError::Io(format!("unexpected spectra columns {:?}", r.headers()?)));
    }
    let omegas = header.cfg.omegas();
    let mut spectra: [Vec<Complex64>; 3] = Default::default();
    for (k, row) in r.deserialize::<[f64; 7]>().enumerate() {
        let row = row?;
        if k >= omegas.len() {
            return Err(RgError::Io(format!("more than {} spectra rows", omegas.len())));
        }
        if (row[0] - omegas[k]).abs() > 1e-12 * (1.0 + omegas[k].abs()) {
            return Err(RgError::Io(format!("row {k}: omega {} off the grid node {}", row[0], omegas[k])));
        }
        for j in 0..3 {
            spectra[j].push(Complex64::new(row[1 + 2 * j], row[2 + 2 * j]));
        }
    }
    SampledFunction::from_spectra(header.cfg, spectra, header.tag)
}

pub fn save_spectra(f: &SampledFunction, path: &Path) -> Result<()> {
    write_spectra(f, BufWriter::new(File::create(path)?))
}

pub fn load_spectra(path: &Path) -> Result<SampledFunction> {
    read_spectra(File::open(path)?)
}

/// Columns `n, L, input_norm, output_norm, contraction_ratio, interp_error`.
pub fn write_linear_reports<W: Write>(rows: &[LinearStepReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "L", "input_norm", "output_norm", "contraction_ratio", "interp_error"])?;
    for r in rows {
        w.serialize((r.n, r.scale, r.input_norm, r.output_norm, r.contraction_ratio, r.interp_error))?;
    }
    w.flush()?;
    Ok(())
}

/// Summary of a Picard solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryManifest {
    pub nt: usize,
    pub tol: f64,
    pub iterations: usize,
    pub residual: f64,
    pub max_lipschitz_ratio: f64,
    pub converged: bool,
    pub times: Vec<f64>,
    /// Spectra file per time node, relative to the manifest.
    pub files: Vec<String>,
}

/// Writes `state_XXX.csv` per time node and `trajectory.json` into `dir`.
pub fn export_trajectory(traj: &Trajectory, tol: f64, dir: &Path) -> Result<TrajectoryManifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(traj.states.len());
    for (i, s) in traj.states.iter().enumerate() {
        let name = format!("state_{i:03}.csv");
        save_spectra(s, &dir.join(&name))?;
        files.push(name);
    }
    let manifest = TrajectoryManifest {
        nt: traj.times.len(),
        tol,
        iterations: traj.picard_iters,
        residual: traj.final_residual,
        max_lipschitz_ratio: traj.max_ratio(),
        converged: traj.converged,
        times: traj.times.clone(),
        files,
    };
    write_json(&manifest, &dir.join("trajectory.json"))?;
    Ok(manifest)
}

/// Columns `omega, re_rescaled, im_rescaled, re_reference, im_reference` of
/// the value spectra.
pub fn write_profile_comparison<W: Write>(rescaled: &SampledFunction, reference: &SampledFunction, out: W) -> Result<()> {
    if rescaled.cfg() != reference.cfg() {
        return Err(RgError::Config("profile comparison needs a common grid".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["omega", "re_rescaled", "im_rescaled", "re_reference", "im_reference"])?;
    for (k, om) in rescaled.cfg().omegas().into_iter().enumerate() {
        let (a, b) = (rescaled.f0()[k], reference.f0()[k]);
        w.serialize((om, a.re, a.im, b.re, b.im))?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
