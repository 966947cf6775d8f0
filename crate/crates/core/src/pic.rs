//! Particle-in-cell coupling on a 1D periodic mesh: tent-function deposition
//! and interpolation, a spectral Poisson solve, and the PIC JKO step.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::config::JkoConfig;
use crate::error::{Error, Result};
use crate::jko::{inner_optimize, PositionRule, StepObjective, StepResult, MAX_DIM};
use crate::nn::{forward_with_divergence_batch, MlpArchitecture, MlpParams};
use crate::par;
use crate::phase_space::{wrap, DomainSpec, ParticleEnsemble};

/// Cell-centred values on `[0, L)`; cell `i` is centred at `(i + ½)Δx`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField1D {
    pub values: Vec<f64>,
    pub length: f64,
    pub dx: f64,
}

impl GridField1D {
    pub fn zeros(n: usize, length: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config("grid needs at least two cells".into()));
        }
        if !(length > 0.0) {
            return Err(Error::Config("grid length must be positive".into()));
        }
        Ok(Self { values: vec![0.0; n], length, dx: length / n as f64 })
    }

    pub fn from_values(values: Vec<f64>, length: f64) -> Result<Self> {
        let mut g = Self::zeros(values.len(), length)?;
        g.values = values;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn mean(&self) -> f64 {
        par::ordered_sum(&self.values) / self.len() as f64
    }
}

/// `max(0, 1 − |z|/Δx)`.
pub fn tent_basis(z: f64, dx: f64) -> f64 {
    (1.0 - z.abs() / dx).max(0.0)
}

/// Left neighbour cell and the weight carried by the right one.
#[inline]
fn stencil(x: f64, dx: f64, n: usize) -> (usize, usize, f64) {
    let s = x / dx - 0.5;
    let f = s.floor();
    let frac = s - f;
    let i = (f as i64).rem_euclid(n as i64) as usize;
    (i, (i + 1) % n, frac)
}

/// Number density with total mass one: `Σ_h ρ_h Δx = 1`.
pub fn deposit_density(positions: &[f64], n_cells: usize, length: f64) -> Result<GridField1D> {
    let mut grid = GridField1D::zeros(n_cells, length)?;
    if positions.is_empty() {
        return Err(Error::Empty);
    }
    if let Some(&x) = positions.iter().find(|&&x| !(0.0..length).contains(&x)) {
        return Err(Error::Unwrapped(x));
    }
    let dx = grid.dx;
    let w = 1.0 / (positions.len() as f64 * dx);
    let partials = par::map_chunks(positions.len(), par::CHUNK, |a, b| {
        let mut g = vec![0.0; n_cells];
        for &x in &positions[a..b] {
            let (i, j, f) = stencil(x, dx, n_cells);
            g[i] += (1.0 - f) * w;
            g[j] += f * w;
        }
        g
    });
    for part in partials {
        for (v, p) in grid.values.iter_mut().zip(part) {
            *v += p;
        }
    }
    Ok(grid)
}

/// Per-particle values of a grid field by the same tent weights.
pub fn interpolate_field(field: &GridField1D, positions: &[f64]) -> Vec<f64> {
    let n = field.len();
    par::map_indexed(positions.len(), |p| {
        let (i, j, f) = stencil(positions[p], field.dx, n);
        (1.0 - f) * field.values[i] + f * field.values[j]
    })
}

/// `Σ_i E_i² Δx`.
pub fn field_energy(e: &GridField1D) -> f64 {
    e.values.iter().map(|v| v * v).sum::<f64>() * e.dx
}

/// Angular wavenumbers in FFT order.
fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let m = if j < n.div_ceil(2) { j as i64 } else { j as i64 - n as i64 };
            std::f64::consts::TAU * m as f64 / length
        })
        .collect()
}

pub struct PoissonSolver {
    n: usize,
    length: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl PoissonSolver {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        GridField1D::zeros(n, length)?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            length,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            k: wavenumbers(n, length),
        })
    }

    fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * s).collect()
    }

    /// Solves `−φ'' = ρ − h` with zero-mean gauge; returns `(φ, E = −φ')`.
    pub fn solve(&self, rho: &GridField1D, background: f64) -> Result<(GridField1D, GridField1D)> {
        if rho.len() != self.n || (rho.length - self.length).abs() > 1e-12 * self.length {
            return Err(Error::Shape("density grid does not match the solver".into()));
        }
        let mean = rho.mean();
        if (mean - background).abs() > 1e-10 * background.abs().max(1.0) {
            return Err(Error::Neutrality { mean, background });
        }
        let mut buf: Vec<Complex64> = rho.values.iter().map(|&r| Complex64::new(r - background, 0.0)).collect();
        self.forward.process(&mut buf);
        let mut phi_hat = vec![Complex64::new(0.0, 0.0); self.n];
        let mut e_hat = vec![Complex64::new(0.0, 0.0); self.n];
        for j in 1..self.n {
            let k = self.k[j];
            phi_hat[j] = buf[j] / (k * k);
            e_hat[j] = Complex64::new(0.0, -k) * phi_hat[j];
        }
        let phi = GridField1D::from_values(self.inverse_real(phi_hat), self.length)?;
        let e = GridField1D::from_values(self.inverse_real(e_hat), self.length)?;
        Ok((phi, e))
    }

    /// `−φ''` evaluated spectrally.
    pub fn negative_laplacian(&self, phi: &GridField1D) -> Vec<f64> {
        let mut buf: Vec<Complex64> = phi.values.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.k) {
            *b *= k * k;
        }
        self.inverse_real(buf)
    }
}

/// One-shot spectral solve.
pub fn solve_poisson_spectral(rho: &GridField1D, background: f64) -> Result<(GridField1D, GridField1D)> {
    PoissonSolver::new(rho.len(), rho.length)?.solve(rho, background)
}

/// Background subtracted from the deposited density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonNormalization {
    /// Density integrates to one; background `1/L`.
    Density,
    /// Density rescaled to unit mean; background `1`.
    Unit,
}

/// Fields after the position update of one step.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub rho: GridField1D,
    pub phi: GridField1D,
    pub e: GridField1D,
    pub field_energy: f64,
}

pub struct PicProblem<'a> {
    pub domain: &'a DomainSpec,
    pub arch: &'a MlpArchitecture,
    pub solver: PoissonSolver,
    pub normalization: PoissonNormalization,
}

impl<'a> PicProblem<'a> {
    pub fn new(
        domain: &'a DomainSpec,
        arch: &'a MlpArchitecture,
        n_cells: usize,
        normalization: PoissonNormalization,
    ) -> Result<Self> {
        let length = domain
            .period()
            .filter(|_| domain.dim_x == 1)
            .ok_or_else(|| Error::Config("the PIC solver needs a 1D periodic domain".into()))?;
        if domain.dim_v > MAX_DIM || arch.dim_x != 1 || arch.dim_v != domain.dim_v {
            return Err(Error::Shape("network does not match the PIC domain".into()));
        }
        Ok(Self { domain, arch, solver: PoissonSolver::new(n_cells, length)?, normalization })
    }

    pub fn length(&self) -> f64 {
        self.solver.length
    }

    /// Deposit, solve and measure for the given wrapped positions.
    pub fn fields(&self, positions: &[f64]) -> Result<FieldState> {
        let mut rho = deposit_density(positions, self.solver.n, self.length())?;
        let background = match self.normalization {
            PoissonNormalization::Density => 1.0 / self.length(),
            PoissonNormalization::Unit => {
                for r in &mut rho.values {
                    *r *= self.length();
                }
                1.0
            }
        };
        let (phi, e) = self.solver.solve(&rho, background)?;
        let fe = field_energy(&e);
        Ok(FieldState { rho, phi, e, field_energy: fe })
    }
}

/// Stream positions, solve for the field at the new positions, train the
/// control and commit velocities and log-densities.
pub fn vpfp_jko_step(
    problem: &PicProblem<'_>,
    ens: &ParticleEnsemble,
    theta0: &MlpParams,
    cfg: &JkoConfig,
) -> Result<(StepResult, FieldState)> {
    let (dv, dt, l) = (ens.dim_v, cfg.dt, problem.length());
    if ens.dim_x != 1 || dv != problem.domain.dim_v {
        return Err(Error::Shape("ensemble does not match the PIC domain".into()));
    }
    let new_x: Vec<f64> = (0..ens.len()).map(|p| wrap(ens.positions[p] + ens.velocities[p * dv] * dt, l)).collect();
    let fields = problem.fields(&new_x)?;
    let e_p = interpolate_field(&fields.e, &new_x);
    let mut base_v = ens.velocities.clone();
    for (p, e) in e_p.iter().enumerate() {
        base_v[p * dv] += e * dt;
    }
    let obj = StepObjective {
        dim_x: 1,
        dim_v: dv,
        input_x: &ens.positions,
        input_v: &ens.velocities,
        base_v,
        position: PositionRule::Fixed { phi: vec![0.0; ens.len()] },
        log_f: &ens.log_density,
        dt,
        epsilon: cfg.epsilon,
        entropy_weight: cfg.t0,
    };
    let (params, trace, final_loss) = inner_optimize(problem.arch, theta0, &obj, cfg, fields.field_energy)?;
    let (u, div) = forward_with_divergence_batch(problem.arch, &params, &ens.positions, &ens.velocities)?;
    let velocities: Vec<f64> = obj.base_v.iter().zip(&u).map(|(b, ui)| b + ui * dt).collect();
    let log_density: Vec<f64> = ens.log_density.iter().zip(&div).map(|(lf, d)| lf - d * dt).collect();
    for p in 0..ens.len() {
        if !log_density[p].is_finite() || velocities[p * dv..(p + 1) * dv].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { particle: p, what: "committed state" });
        }
    }
    let ensemble = ParticleEnsemble::new(1, dv, new_x, velocities, log_density)?;
    Ok((
        StepResult {
            ensemble,
            trained_params: params,
            final_inner_loss: final_loss,
            inner_loss_trace: trace,
            control: u,
        },
        fields,
    ))
}

/// Marches `cfg.n_steps` PIC JKO steps; `on_step` sees the step index, the
/// result and the field state at the new positions.
pub fn run_vpfp<I, F>(
    problem: &PicProblem<'_>,
    ens0: ParticleEnsemble,
    cfg: &JkoConfig,
    mut next_theta0: I,
    mut on_step: F,
) -> Result<(ParticleEnsemble, MlpParams)>
where
    I: FnMut(usize, Option<&MlpParams>) -> MlpParams,
    F: FnMut(usize, &StepResult, &FieldState) -> Result<()>,
{
    cfg.validate()?;
    let mut ens = ens0;
    let mut prev: Option<MlpParams> = None;
    for n in 0..cfg.n_steps {
        let theta0 = next_theta0(n, prev.as_ref());
        let (res, fields) = vpfp_jko_step(problem, &ens, &theta0, cfg)?;
        on_step(n, &res, &fields)?;
        ens = res.ensemble;
        prev = Some(res.trained_params);
    }
    let params = prev.ok_or_else(|| Error::Config("run has no steps".into()))?;
    Ok((ens, params))
}

/// Phase-space density estimate over `(x, v₁)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseHistogram {
    pub nx: usize,
    pub nv: usize,
    pub length: f64,
    pub vmin: f64,
    pub vmax: f64,
    /// Row-major `nx × nv`.
    pub density: Vec<f64>,
}

pub fn phase_space_histogram(ens: &ParticleEnsemble, length: f64, nx: usize, nv: usize, vrange: (f64, f64)) -> Result<PhaseHistogram> {
    let (vmin, vmax) = vrange;
    if nx == 0 || nv == 0 || !(vmax > vmin) {
        return Err(Error::Config("histogram needs bins and a non-empty velocity range".into()));
    }
    if ens.is_empty() {
        return Err(Error::Empty);
    }
    let mut counts = vec![0usize; nx * nv];
    for p in 0..ens.len() {
        let x = ens.positions[p * ens.dim_x];
        let v = ens.velocities[p * ens.dim_v];
        if !(x >= 0.0 && x < length && v >= vmin && v < vmax) {
            continue;
        }
        let i = ((x / length * nx as f64) as usize).min(nx - 1);
        let j = (((v - vmin) / (vmax - vmin) * nv as f64) as usize).min(nv - 1);
        counts[i * nv + j] += 1;
    }
    let cell = (length / nx as f64) * ((vmax - vmin) / nv as f64);
    let scale = 1.0 / (ens.len() as f64 * cell);
    Ok(PhaseHistogram { nx, nv, length, vmin, vmax, density: counts.iter().map(|&c| c as f64 * scale).collect() })
}
