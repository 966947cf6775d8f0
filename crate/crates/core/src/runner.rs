//! Executes presets end to end and writes their artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::run_score_baseline;
use crate::diagnostics::{
    mean_stderr, write_particle_snapshot, write_phase_histogram, FieldRecord, LinearRecord, Records, SweepRow,
    SweepTable,
};
use crate::error::{Error, Result};
use crate::jko::{run_linear, LinearProblem, StepResult};
use crate::nn::{init_params, MlpArchitecture, MlpParams};
use crate::oracles::{
    discrete_energy, drift_error, integrate_moments, mean_drift_residual, kl_mc, GaussianMoments, GaussianVelocityScore, StationaryDensity,
};
use crate::phase_space::{ParticleEnsemble, Potential, SystemMatrices};
use crate::pic::{phase_space_histogram, run_vpfp, FieldState, PicProblem};
use crate::presets::{Method, Preset};
use crate::sampling::{sample_initial_ensemble, InitialCondition};

/// A preset with its overrides resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub preset_id: String,
    pub preset: Preset,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub preset_id: String,
    pub code_version: String,
    pub parallel: bool,
    pub n_steps: usize,
    pub preset: Preset,
}

impl Experiment {
    pub fn new<S: AsRef<str>>(preset_id: &str, overrides: &[S]) -> Result<Self> {
        let preset = Preset::load(preset_id)?.with_overrides(overrides)?;
        Ok(Self { preset_id: preset_id.to_string(), preset })
    }

    pub fn from_manifest(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        m.preset.validate()?;
        Ok(Self { preset_id: m.preset_id, preset: m.preset })
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            preset_id: self.preset_id.clone(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            parallel: crate::par::is_parallel(),
            n_steps: self.preset.n_steps(),
            preset: self.preset.clone(),
        }
    }

    pub fn initial_ensemble(&self) -> Result<ParticleEnsemble> {
        let p = &self.preset;
        let cells = p.defaults.grid_cells.unwrap_or(1024);
        sample_initial_ensemble(&p.domain, &p.effective_initial()?, p.defaults.n_particles, p.defaults.seed, cells)
    }

    fn architecture(&self) -> Result<MlpArchitecture> {
        let d = &self.preset.defaults;
        let spec = match d.method {
            Method::ScoreBaseline => d.score_network.as_ref().unwrap_or(&d.network),
            _ => &d.network,
        };
        spec.build(self.preset.domain.dim_x, self.preset.domain.dim_v)
    }
}

/// Everything a run produces in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub initial: ParticleEnsemble,
    pub final_ensemble: ParticleEnsemble,
    pub records: Records,
    pub params: MlpParams,
    pub arch: MlpArchitecture,
}

struct Sink {
    dir: PathBuf,
    every: usize,
}

impl Sink {
    fn due(&self, step: usize) -> bool {
        self.every > 0 && step.is_multiple_of(self.every)
    }

    fn particles(&self, step: usize, ens: &ParticleEnsemble, time: f64, arch: &MlpArchitecture, params: &MlpParams) -> Result<()> {
        write_particle_snapshot(&self.dir.join(format!("particles_{step:06}.csv")), ens, time)?;
        params.save(arch, &self.dir.join(format!("params_{step:06}.txt")))
    }
}

/// Exact moments of a Gaussian run, advanced one outer step at a time.
struct MomentOracle {
    current: GaussianMoments,
    k_inv: nalgebra::DMatrix<f64>,
    mu_tilde: nalgebra::DVector<f64>,
    sys: SystemMatrices,
    dim_x: usize,
}

impl MomentOracle {
    fn build(preset: &Preset, initial: &InitialCondition) -> Result<Option<Self>> {
        match (&preset.potential, initial) {
            (Potential::QuadraticForm(q), InitialCondition::Gaussian { mean, cov }) => Ok(Some(Self {
                current: GaussianMoments::new(mean.clone(), cov.clone())?,
                k_inv: q.k_inv_matrix(),
                mu_tilde: nalgebra::DVector::from_vec(q.mu_tilde.clone()),
                sys: SystemMatrices::new(q.dim_x, preset.defaults.epsilon, preset.defaults.t0)?,
                dim_x: q.dim_x,
            })),
            _ => Ok(None),
        }
    }

    fn advance(&mut self, dt: f64) -> Result<GaussianVelocityScore> {
        self.current = integrate_moments(&self.current, &self.k_inv, &self.mu_tilde, &self.sys, dt, dt.min(1e-3))?;
        GaussianVelocityScore::new(&self.current, self.dim_x)
    }
}

/// Runs the experiment; with `out` set, writes `manifest.json`,
/// `diagnostics.csv` and `snapshots/`.
pub fn execute(exp: &Experiment, out: Option<&Path>) -> Result<RunOutput> {
    let sink = match out {
        Some(dir) => {
            let snaps = dir.join("snapshots");
            fs::create_dir_all(&snaps)?;
            let text = serde_json::to_string_pretty(&exp.manifest()).map_err(|e| Error::Parse(e.to_string()))?;
            fs::write(dir.join("manifest.json"), text + "\n")?;
            Some(Sink { dir: snaps, every: exp.preset.defaults.snapshot_every })
        }
        None => None,
    };
    let output = if exp.preset.potential.is_closed_form() {
        execute_linear(exp, sink.as_ref())?
    } else {
        execute_pic(exp, sink.as_ref())?
    };
    if let Some(dir) = out {
        output.records.write_csv(&dir.join("diagnostics.csv"))?;
    }
    Ok(output)
}

fn theta_supplier<'a>(
    arch: &'a MlpArchitecture,
    preset: &'a Preset,
    warm: bool,
) -> impl FnMut(usize, Option<&MlpParams>) -> MlpParams + 'a {
    let d = &preset.defaults;
    let fresh = init_params(arch, d.seed, d.init);
    move |_, prev| match prev {
        Some(p) if warm => p.clone(),
        _ => fresh.clone(),
    }
}

fn execute_linear(exp: &Experiment, sink: Option<&Sink>) -> Result<RunOutput> {
    let p = &exp.preset;
    let cfg = p.jko_config()?;
    let arch = exp.architecture()?;
    let initial_cond = p.effective_initial()?;
    let ens0 = exp.initial_ensemble()?;
    let stationary = StationaryDensity::new(&p.potential, &p.domain).ok();
    let mut moments = MomentOracle::build(p, &initial_cond)?;
    let mut records = Vec::with_capacity(cfg.n_steps);

    let mut on_step = |n: usize, _before: &ParticleEnsemble, res: &StepResult| -> Result<()> {
        let step = n + 1;
        let time = step as f64 * cfg.dt;
        let after = &res.ensemble;
        let kl = match &stationary {
            Some(s) => Some(kl_mc(after, |x, v| s.log_density(x, v))?),
            None => None,
        };
        let (drift, residual) = match moments.as_mut() {
            Some(m) => {
                let score = m.advance(cfg.dt)?;
                let eval = |x: &[f64], v: &[f64], o: &mut [f64]| score.eval(x, v, o);
                (
                    Some(drift_error(&res.control, after, cfg.epsilon, eval)?),
                    Some(mean_drift_residual(&res.control, after, cfg.epsilon, eval)?),
                )
            }
            None => (None, None),
        };
        records.push(LinearRecord {
            step,
            time,
            loss: res.final_inner_loss,
            energy: discrete_energy(after, &p.potential, cfg.t0)?,
            kl,
            drift_error: drift,
            drift_residual: residual,
        });
        if let Some(s) = sink.filter(|s| s.due(step)) {
            s.particles(step, after, time, &arch, &res.trained_params)?;
        }
        Ok(())
    };
    let supplier = theta_supplier(&arch, p, cfg.warm_start);
    let (final_ensemble, params) = match p.defaults.method {
        Method::ScoreBaseline => {
            run_score_baseline(&p.domain, &p.potential, &arch, ens0.clone(), &cfg, supplier, &mut on_step)?
        }
        method => {
            let problem = LinearProblem { domain: &p.domain, potential: &p.potential, arch: &arch };
            run_linear(&problem, ens0.clone(), &cfg, method == Method::SplitJko, supplier, &mut on_step)?
        }
    };
    Ok(RunOutput { initial: ens0, final_ensemble, records: Records::Linear(records), params, arch })
}

fn execute_pic(exp: &Experiment, sink: Option<&Sink>) -> Result<RunOutput> {
    let p = &exp.preset;
    let d = &p.defaults;
    let cfg = p.jko_config()?;
    let arch = exp.architecture()?;
    let ens0 = exp.initial_ensemble()?;
    let cells = d.grid_cells.ok_or_else(|| Error::Config("grid_cells missing".into()))?;
    let problem = PicProblem::new(&p.domain, &arch, cells, d.poisson_normalization)?;
    let length = problem.length();
    let mut records = Vec::with_capacity(cfg.n_steps);
    let on_step = |n: usize, res: &StepResult, fields: &FieldState| -> Result<()> {
        let step = n + 1;
        let time = step as f64 * cfg.dt;
        records.push(FieldRecord { step, time, field_energy: fields.field_energy, loss: res.final_inner_loss });
        if let Some(s) = sink.filter(|s| s.due(step)) {
            let h = phase_space_histogram(&res.ensemble, length, d.phase_bins_x, d.phase_bins_v, d.phase_v_range)?;
            write_phase_histogram(&s.dir.join(format!("phase_{step:06}.csv")), &h, time)?;
            res.trained_params.save(&arch, &s.dir.join(format!("params_{step:06}.txt")))?;
        }
        Ok(())
    };
    let (final_ensemble, params) = run_vpfp(&problem, ens0.clone(), &cfg, theta_supplier(&arch, p, cfg.warm_start), on_step)?;
    Ok(RunOutput { initial: ens0, final_ensemble, records: Records::Field(records), params, arch })
}

/// Runs the preset once per `(dt, seed)` and fits the order of the
/// time-averaged drift error.
pub fn convergence_sweep<S: AsRef<str>>(
    preset_id: &str,
    overrides: &[S],
    dts: &[f64],
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<SweepTable> {
    if dts.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one dt and one seed".into()));
    }
    let mut rows = Vec::with_capacity(dts.len());
    for &dt in dts {
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut ov: Vec<String> = overrides.iter().map(|s| s.as_ref().to_string()).collect();
            ov.push(format!("dt={dt:?}"));
            ov.push(format!("seed={seed}"));
            let exp = Experiment::new(preset_id, &ov)?;
            let dir = out.map(|o| o.join(format!("dt_{dt}_seed_{seed}")));
            let run = execute(&exp, dir.as_deref())?;
            let errs: Vec<f64> = run
                .records
                .linear()
                .ok_or(Error::MissingOracle("drift error"))?
                .iter()
                .map(|r| r.drift_error.ok_or(Error::MissingOracle("drift error")))
                .collect::<Result<_>>()?;
            per_seed.push(errs.iter().sum::<f64>() / errs.len() as f64);
        }
        let (mean_error, stderr) = mean_stderr(&per_seed);
        rows.push(SweepRow { dt, mean_error, stderr, per_seed });
    }
    let table = SweepTable::from_rows(rows);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("convergence.csv"), table.to_csv())?;
    }
    Ok(table)
}
