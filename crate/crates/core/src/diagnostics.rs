//! Per-step records, their CSV form, snapshots and convergence fits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::phase_space::ParticleEnsemble;
use crate::pic::PhaseHistogram;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRecord {
    pub step: usize,
    pub time: f64,
    pub loss: f64,
    pub energy: f64,
    pub kl: Option<f64>,
    pub drift_error: Option<f64>,
    /// Mean per-particle residual; kept in memory only, the CSV schema is fixed.
    pub drift_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldRecord {
    pub step: usize,
    pub time: f64,
    pub field_energy: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Linear(Vec<LinearRecord>),
    Field(Vec<FieldRecord>),
}

pub const LINEAR_HEADER: &str = "step,time,loss,energy,kl,drift_error";
pub const FIELD_HEADER: &str = "step,time,field_energy,loss";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

impl Records {
    pub fn len(&self) -> usize {
        match self {
            Records::Linear(r) => r.len(),
            Records::Field(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn linear(&self) -> Option<&[LinearRecord]> {
        match self {
            Records::Linear(r) => Some(r),
            Records::Field(_) => None,
        }
    }

    pub fn field(&self) -> Option<&[FieldRecord]> {
        match self {
            Records::Field(r) => Some(r),
            Records::Linear(_) => None,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        match self {
            Records::Linear(rows) => {
                s.push_str(LINEAR_HEADER);
                s.push('\n');
                for r in rows {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{}",
                        r.step,
                        num(r.time),
                        num(r.loss),
                        num(r.energy),
                        opt(r.kl),
                        opt(r.drift_error)
                    );
                }
            }
            Records::Field(rows) => {
                s.push_str(FIELD_HEADER);
                s.push('\n');
                for r in rows {
                    let _ = writeln!(s, "{},{},{},{}", r.step, num(r.time), num(r.field_energy), num(r.loss));
                }
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Particle dump: a `N_p,dim_x,dim_v,time` line with its values, then one row
/// per particle `x…, v…, log_f`.
pub fn write_particle_snapshot(path: &Path, ens: &ParticleEnsemble, time: f64) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "N_p,dim_x,dim_v,time");
    let _ = writeln!(s, "{},{},{},{}", ens.len(), ens.dim_x, ens.dim_v, num(time));
    let cols: Vec<String> = (0..ens.dim_x)
        .map(|i| format!("x{i}"))
        .chain((0..ens.dim_v).map(|i| format!("v{i}")))
        .chain(std::iter::once("log_f".to_string()))
        .collect();
    let _ = writeln!(s, "{}", cols.join(","));
    for p in 0..ens.len() {
        let row: Vec<String> = ens.x(p).iter().chain(ens.v(p)).chain(std::iter::once(&ens.log_density[p])).map(|&v| num(v)).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_particle_snapshot(path: &Path) -> Result<(ParticleEnsemble, f64)> {
    let text = fs::read_to_string(path)?;
    let bad = || Error::Parse(format!("malformed snapshot {}", path.display()));
    let mut lines = text.lines();
    lines.next().ok_or_else(bad)?;
    let meta: Vec<&str> = lines.next().ok_or_else(bad)?.split(',').collect();
    if meta.len() != 4 {
        return Err(bad());
    }
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let (n, dx, dv) = (parse_usize(meta[0])?, parse_usize(meta[1])?, parse_usize(meta[2])?);
    let time: f64 = meta[3].parse().map_err(|_| bad())?;
    lines.next().ok_or_else(bad)?;
    let (mut xs, mut vs, mut lf) = (Vec::with_capacity(n * dx), Vec::with_capacity(n * dv), Vec::with_capacity(n));
    for line in lines.filter(|l| !l.is_empty()) {
        let vals = line.split(',').map(|t| t.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
        if vals.len() != dx + dv + 1 {
            return Err(bad());
        }
        xs.extend_from_slice(&vals[..dx]);
        vs.extend_from_slice(&vals[dx..dx + dv]);
        lf.push(vals[dx + dv]);
    }
    if lf.len() != n {
        return Err(bad());
    }
    Ok((ParticleEnsemble::new(dx, dv, xs, vs, lf)?, time))
}

/// Header line `t,<time>,nx,<nx>,nv,<nv>,vmin,<vmin>,vmax,<vmax>` followed by
/// `nx` rows of `nv` densities.
pub fn write_phase_histogram(path: &Path, h: &PhaseHistogram, time: f64) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "t,{},nx,{},nv,{},vmin,{},vmax,{}", num(time), h.nx, h.nv, num(h.vmin), num(h.vmax));
    for row in h.density.chunks(h.nv) {
        let r: Vec<String> = row.iter().map(|&v| num(v)).collect();
        let _ = writeln!(s, "{}", r.join(","));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Least-squares slope of `log y` against `log x`; `None` with fewer than two
/// distinct points.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// One row per step size of a convergence sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dt: f64,
    /// Mean over seeds of the time-averaged drift error.
    pub mean_error: f64,
    pub stderr: f64,
    pub per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub slope: Option<f64>,
}

impl SweepTable {
    pub fn from_rows(rows: Vec<SweepRow>) -> Self {
        let dts: Vec<f64> = rows.iter().map(|r| r.dt).collect();
        let errs: Vec<f64> = rows.iter().map(|r| r.mean_error).collect();
        let slope = loglog_slope(&dts, &errs);
        Self { rows, slope }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("dt,mean_drift_error,stderr\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", num(r.dt), num(r.mean_error), num(r.stderr));
        }
        if let Some(k) = self.slope {
            let _ = writeln!(s, "# slope,{}", num(k));
        }
        s
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
