//! One kinetic JKO step for prescribed potentials, the split variant, and the
//! outer time loop.

use crate::config::{JkoConfig, SymplecticVariant};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, forward_with_divergence_batch, loss_gradient, loss_value, AdamState, LossGradient, MlpArchitecture,
    MlpParams, PointwiseObjective,
};
use crate::par;
use crate::phase_space::{DomainSpec, ParticleEnsemble, Potential};

/// Largest per-particle dimension handled with stack buffers.
pub(crate) const MAX_DIM: usize = 8;

#[derive(Debug, Clone)]
pub struct StepResult {
    pub ensemble: ParticleEnsemble,
    pub trained_params: MlpParams,
    pub final_inner_loss: f64,
    /// Loss at each inner iterate, evaluated before that iterate's update.
    pub inner_loss_trace: Vec<f64>,
    /// Control applied to each particle, row-major `N × dim_v`.
    pub control: Vec<f64>,
}

/// Everything about a linear problem that stays fixed over a run.
#[derive(Debug, Clone, Copy)]
pub struct LinearProblem<'a> {
    pub domain: &'a DomainSpec,
    pub potential: &'a Potential,
    pub arch: &'a MlpArchitecture,
}

impl LinearProblem<'_> {
    fn check(&self, ens: &ParticleEnsemble) -> Result<()> {
        if !self.potential.is_closed_form() {
            return Err(Error::SelfConsistentPotential);
        }
        if ens.dim_x != self.domain.dim_x || ens.dim_v != self.domain.dim_v {
            return Err(Error::Shape("ensemble does not match the domain".into()));
        }
        if self.arch.dim_x != ens.dim_x || self.arch.dim_v != ens.dim_v {
            return Err(Error::Shape("network does not match the domain".into()));
        }
        if ens.dim_x != ens.dim_v {
            return Err(Error::Config("free streaming needs dim_x == dim_v".into()));
        }
        if ens.dim_x > MAX_DIM || ens.dim_v > MAX_DIM {
            return Err(Error::Config(format!("dimensions above {MAX_DIM} are not supported")));
        }
        Ok(())
    }
}

fn grad_phi(potential: &Potential, x: &[f64]) -> Result<[f64; MAX_DIM]> {
    let mut g = [0.0; MAX_DIM];
    potential.gradient_into(x, &mut g[..x.len()])?;
    Ok(g)
}

/// Applies `f(p, x_row, v_row)` to every particle of copies of the ensemble's
/// arrays and returns the updated arrays.
fn map_particles<F>(ens: &ParticleEnsemble, f: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&mut [f64], &mut [f64]) -> Result<()> + Sync + Send,
{
    let (dx, dv) = (ens.dim_x, ens.dim_v);
    let rows = par::map_chunks(ens.len(), par::CHUNK, |a, b| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut xs = ens.positions[a * dx..b * dx].to_vec();
        let mut vs = ens.velocities[a * dv..b * dv].to_vec();
        for q in 0..b - a {
            f(&mut xs[q * dx..(q + 1) * dx], &mut vs[q * dv..(q + 1) * dv])?;
        }
        Ok((xs, vs))
    });
    let mut xs = Vec::with_capacity(ens.positions.len());
    let mut vs = Vec::with_capacity(ens.velocities.len());
    for r in rows {
        let (x, v) = r?;
        xs.extend(x);
        vs.extend(v);
    }
    Ok((xs, vs))
}

/// `x* = x + vΔt`, `v* = v − ∇φ(x*)Δt`.
pub fn symplectic_euler_map(ens: &ParticleEnsemble, potential: &Potential, dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !potential.is_closed_form() {
        return Err(Error::SelfConsistentPotential);
    }
    map_particles(ens, |x, v| {
        for (xi, vi) in x.iter_mut().zip(v.iter()) {
            *xi += vi * dt;
        }
        let g = grad_phi(potential, x)?;
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi -= gi * dt;
        }
        Ok(())
    })
}

/// Half kick, full drift, half kick.
pub fn stormer_verlet_map(ens: &ParticleEnsemble, potential: &Potential, dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !potential.is_closed_form() {
        return Err(Error::SelfConsistentPotential);
    }
    map_particles(ens, |x, v| {
        let g = grad_phi(potential, x)?;
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi -= 0.5 * dt * gi;
        }
        for (xi, vi) in x.iter_mut().zip(v.iter()) {
            *xi += vi * dt;
        }
        let g = grad_phi(potential, x)?;
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi -= 0.5 * dt * gi;
        }
        Ok(())
    })
}

/// Kick then drift, the Hamiltonian part of the AlgorithmOne ordering.
pub fn kick_drift_map(ens: &ParticleEnsemble, potential: &Potential, dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !potential.is_closed_form() {
        return Err(Error::SelfConsistentPotential);
    }
    map_particles(ens, |x, v| {
        let g = grad_phi(potential, x)?;
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi -= gi * dt;
        }
        for (xi, vi) in x.iter_mut().zip(v.iter()) {
            *xi += vi * dt;
        }
        Ok(())
    })
}

pub fn hamiltonian_map(
    variant: SymplecticVariant,
    ens: &ParticleEnsemble,
    potential: &Potential,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match variant {
        SymplecticVariant::AlgorithmOne => kick_drift_map(ens, potential, dt),
        SymplecticVariant::SymplecticEuler => symplectic_euler_map(ens, potential, dt),
        SymplecticVariant::StormerVerlet => stormer_verlet_map(ens, potential, dt),
    }
}

/// How the new position depends on the control.
pub(crate) enum PositionRule<'a> {
    /// `x⁺ = x + v⁺Δt`; the potential term then depends on θ.
    Drift { x: &'a [f64], potential: &'a Potential },
    /// `x⁺` is fixed before training; `phi` holds `φ(x⁺)` (or zeros).
    Fixed { phi: Vec<f64> },
}

/// Per-particle loss
/// `(Δt/2)|u|² + ε[½|v⁺|² + φ(x⁺) + w(log f − Δt ∇_v·u)]`, `v⁺ = base_v + uΔt`.
pub(crate) struct StepObjective<'a> {
    pub dim_x: usize,
    pub dim_v: usize,
    pub input_x: &'a [f64],
    pub input_v: &'a [f64],
    pub base_v: Vec<f64>,
    pub position: PositionRule<'a>,
    pub log_f: &'a [f64],
    pub dt: f64,
    pub epsilon: f64,
    /// Weight of the entropy term (the background temperature).
    pub entropy_weight: f64,
}

impl PointwiseObjective for StepObjective<'_> {
    fn len(&self) -> usize {
        self.log_f.len()
    }

    fn input(&self, p: usize) -> (&[f64], &[f64]) {
        (
            &self.input_x[p * self.dim_x..(p + 1) * self.dim_x],
            &self.input_v[p * self.dim_v..(p + 1) * self.dim_v],
        )
    }

    fn term(&self, p: usize, u: &[f64], div: f64, du: &mut [f64]) -> (f64, f64) {
        let (dx, dv, dt, eps) = (self.dim_x, self.dim_v, self.dt, self.epsilon);
        let base = &self.base_v[p * dv..(p + 1) * dv];
        let mut vn = [0.0; MAX_DIM];
        let mut l = 0.0;
        for i in 0..dv {
            vn[i] = base[i] + u[i] * dt;
            l += 0.5 * dt * u[i] * u[i] + 0.5 * eps * vn[i] * vn[i];
            du[i] = dt * u[i] + eps * vn[i] * dt;
        }
        match &self.position {
            PositionRule::Drift { x, potential } => {
                let mut xn = [0.0; MAX_DIM];
                for i in 0..dx {
                    xn[i] = x[p * dx + i] + vn[i] * dt;
                }
                let phi = potential.value(&xn[..dx]).unwrap_or(f64::NAN);
                let mut g = [0.0; MAX_DIM];
                if potential.gradient_into(&xn[..dx], &mut g[..dx]).is_err() {
                    return (f64::NAN, 0.0);
                }
                l += eps * phi;
                for i in 0..dv.min(dx) {
                    du[i] += eps * g[i] * dt * dt;
                }
            }
            PositionRule::Fixed { phi } => l += eps * phi[p],
        }
        let w = self.entropy_weight;
        l += eps * w * (self.log_f[p] - dt * div);
        (l, -eps * w * dt)
    }
}

/// Runs `inner_iters` Adam steps on `obj` starting from `theta0`. `constant` is a
/// θ-independent addition reported with every loss value.
pub fn inner_optimize<O: PointwiseObjective>(
    arch: &MlpArchitecture,
    theta0: &MlpParams,
    obj: &O,
    cfg: &JkoConfig,
    constant: f64,
) -> Result<(MlpParams, Vec<f64>, f64)> {
    if cfg.inner_iters == 0 {
        return Err(Error::Config("inner_iters must be at least 1".into()));
    }
    let mut params = theta0.clone();
    let mut adam = AdamState::new(params.data.len());
    let mut trace = Vec::with_capacity(cfg.inner_iters);
    let locate = |k: usize, e: Error| match e {
        Error::NonFinite { particle, .. } => Error::NonFiniteIterate { iterate: k, particle },
        other => other,
    };
    for k in 0..cfg.inner_iters {
        let lg = loss_gradient(arch, &params, obj).map_err(|e| locate(k, e))?;
        trace.push(lg.loss + constant);
        adam_step(&mut params, &lg.grad, &mut adam, cfg.learning_rate)?;
    }
    let final_loss = loss_value(arch, &params, obj).map_err(|e| locate(cfg.inner_iters, e))? + constant;
    Ok((params, trace, final_loss))
}

fn check_finite(xs: &[f64], vs: &[f64], lf: &[f64], dx: usize, dv: usize) -> Result<()> {
    for (p, l) in lf.iter().enumerate() {
        if !l.is_finite() {
            return Err(Error::NonFinite { particle: p, what: "log-density" });
        }
        if xs[p * dx..(p + 1) * dx].iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { particle: p, what: "position" });
        }
        if vs[p * dv..(p + 1) * dv].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { particle: p, what: "velocity" });
        }
    }
    Ok(())
}

/// Candidate state for given parameters: `(x⁺, v⁺, Δt ∇_v·u)`.
pub struct Candidate {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub logdet: Vec<f64>,
    pub control: Vec<f64>,
}

/// Kicked velocity and (for the non-AlgorithmOne variants) the Hamiltonian
/// image of the ensemble.
struct Prepared {
    base_v: Vec<f64>,
    x_star: Option<Vec<f64>>,
}

fn prepare(problem: &LinearProblem<'_>, ens: &ParticleEnsemble, cfg: &JkoConfig) -> Result<Prepared> {
    match cfg.symplectic_variant {
        SymplecticVariant::AlgorithmOne => {
            let (_, v) = map_particles(ens, |x, v| {
                let g = grad_phi(problem.potential, x)?;
                for (vi, gi) in v.iter_mut().zip(g) {
                    *vi -= gi * cfg.dt;
                }
                Ok(())
            })?;
            Ok(Prepared { base_v: v, x_star: None })
        }
        variant => {
            let (x, v) = hamiltonian_map(variant, ens, problem.potential, cfg.dt)?;
            Ok(Prepared { base_v: v, x_star: Some(x) })
        }
    }
}

fn potential_values(potential: &Potential, xs: &[f64], dx: usize) -> Result<Vec<f64>> {
    xs.chunks(dx).map(|x| potential.value(x)).collect()
}

fn build_objective<'a>(
    problem: &LinearProblem<'a>,
    ens: &'a ParticleEnsemble,
    prep: &'a Prepared,
    cfg: &JkoConfig,
) -> Result<StepObjective<'a>> {
    let position = match &prep.x_star {
        None => PositionRule::Drift { x: &ens.positions, potential: problem.potential },
        Some(xs) => PositionRule::Fixed { phi: potential_values(problem.potential, xs, ens.dim_x)? },
    };
    Ok(StepObjective {
        dim_x: ens.dim_x,
        dim_v: ens.dim_v,
        input_x: &ens.positions,
        input_v: &ens.velocities,
        base_v: prep.base_v.clone(),
        position,
        log_f: &ens.log_density,
        dt: cfg.dt,
        epsilon: cfg.epsilon,
        entropy_weight: cfg.t0,
    })
}

fn candidate_from(
    problem: &LinearProblem<'_>,
    ens: &ParticleEnsemble,
    prep: &Prepared,
    params: &MlpParams,
    input_x: &[f64],
    dt: f64,
) -> Result<Candidate> {
    let (dx, dv) = (ens.dim_x, ens.dim_v);
    let (u, div) = forward_with_divergence_batch(problem.arch, params, input_x, &ens.velocities)?;
    let velocities: Vec<f64> = prep.base_v.iter().zip(&u).map(|(b, ui)| b + ui * dt).collect();
    let mut positions = match &prep.x_star {
        Some(xs) => xs.clone(),
        None => {
            let mut xs = ens.positions.clone();
            for p in 0..ens.len() {
                for i in 0..dx {
                    xs[p * dx + i] += velocities[p * dv + i] * dt;
                }
            }
            xs
        }
    };
    problem.domain.wrap_in_place(&mut positions);
    let logdet = div.iter().map(|d| d * dt).collect();
    Ok(Candidate { positions, velocities, logdet, control: u })
}

/// New positions, velocities and log-determinants for fixed parameters.
pub fn jko_candidate_update(
    problem: &LinearProblem<'_>,
    ens: &ParticleEnsemble,
    params: &MlpParams,
    cfg: &JkoConfig,
) -> Result<Candidate> {
    problem.check(ens)?;
    let prep = prepare(problem, ens, cfg)?;
    candidate_from(problem, ens, &prep, params, &ens.positions, cfg.dt)
}

/// The JKO objective at fixed parameters.
pub fn jko_loss(problem: &LinearProblem<'_>, ens: &ParticleEnsemble, params: &MlpParams, cfg: &JkoConfig) -> Result<f64> {
    problem.check(ens)?;
    let prep = prepare(problem, ens, cfg)?;
    let obj = build_objective(problem, ens, &prep, cfg)?;
    loss_value(problem.arch, params, &obj)
}

/// The JKO objective and its exact parameter gradient.
pub fn jko_loss_gradient(
    problem: &LinearProblem<'_>,
    ens: &ParticleEnsemble,
    params: &MlpParams,
    cfg: &JkoConfig,
) -> Result<LossGradient> {
    problem.check(ens)?;
    let prep = prepare(problem, ens, cfg)?;
    let obj = build_objective(problem, ens, &prep, cfg)?;
    loss_gradient(problem.arch, params, &obj)
}

fn commit(ens: &ParticleEnsemble, cand: Candidate) -> Result<ParticleEnsemble> {
    let log_density: Vec<f64> = ens.log_density.iter().zip(&cand.logdet).map(|(l, d)| l - d).collect();
    check_finite(&cand.positions, &cand.velocities, &log_density, ens.dim_x, ens.dim_v)?;
    ParticleEnsemble::new(ens.dim_x, ens.dim_v, cand.positions, cand.velocities, log_density)
}

/// Trains the control from `theta0` and advances the ensemble one step.
pub fn jko_step(
    problem: &LinearProblem<'_>,
    ens: &ParticleEnsemble,
    theta0: &MlpParams,
    cfg: &JkoConfig,
) -> Result<StepResult> {
    problem.check(ens)?;
    let prep = prepare(problem, ens, cfg)?;
    let obj = build_objective(problem, ens, &prep, cfg)?;
    let (params, trace, final_loss) = inner_optimize(problem.arch, theta0, &obj, cfg, 0.0)?;
    let cand = candidate_from(problem, ens, &prep, &params, &ens.positions, cfg.dt)?;
    let control = cand.control.clone();
    Ok(StepResult {
        ensemble: commit(ens, cand)?,
        trained_params: params,
        final_inner_loss: final_loss,
        inner_loss_trace: trace,
        control,
    })
}

/// Split variant: Hamiltonian map with the density carried along, then a
/// velocity-only proximal step with the network evaluated at `(x*, vⁿ)`.
pub fn split_step(
    problem: &LinearProblem<'_>,
    ens: &ParticleEnsemble,
    theta0: &MlpParams,
    cfg: &JkoConfig,
) -> Result<StepResult> {
    problem.check(ens)?;
    let (mut x_star, v_star) = hamiltonian_map(cfg.symplectic_variant, ens, problem.potential, cfg.dt)?;
    problem.domain.wrap_in_place(&mut x_star);
    let prep = Prepared { base_v: v_star, x_star: Some(x_star) };
    let x_in = prep.x_star.as_deref().unwrap();
    let obj = StepObjective {
        dim_x: ens.dim_x,
        dim_v: ens.dim_v,
        input_x: x_in,
        input_v: &ens.velocities,
        base_v: prep.base_v.clone(),
        position: PositionRule::Fixed { phi: vec![0.0; ens.len()] },
        log_f: &ens.log_density,
        dt: cfg.dt,
        epsilon: cfg.epsilon,
        entropy_weight: cfg.t0,
    };
    let (params, trace, final_loss) = inner_optimize(problem.arch, theta0, &obj, cfg, 0.0)?;
    let cand = candidate_from(problem, ens, &prep, &params, x_in, cfg.dt)?;
    let control = cand.control.clone();
    Ok(StepResult {
        ensemble: commit(ens, cand)?,
        trained_params: params,
        final_inner_loss: final_loss,
        inner_loss_trace: trace,
        control,
    })
}

/// Marches `cfg.n_steps` steps. `next_theta0(step, previous)` supplies the
/// starting parameters of each inner problem; `on_step` sees the ensemble
/// before the step and the step's result.
pub fn run_linear<I, F>(
    problem: &LinearProblem<'_>,
    ens0: ParticleEnsemble,
    cfg: &JkoConfig,
    split: bool,
    mut next_theta0: I,
    mut on_step: F,
) -> Result<(ParticleEnsemble, MlpParams)>
where
    I: FnMut(usize, Option<&MlpParams>) -> MlpParams,
    F: FnMut(usize, &ParticleEnsemble, &StepResult) -> Result<()>,
{
    cfg.validate()?;
    let mut ens = ens0;
    let mut prev: Option<MlpParams> = None;
    for n in 0..cfg.n_steps {
        let theta0 = next_theta0(n, prev.as_ref());
        let res = if split {
            split_step(problem, &ens, &theta0, cfg)?
        } else {
            jko_step(problem, &ens, &theta0, cfg)?
        };
        on_step(n, &ens, &res)?;
        ens = res.ensemble;
        prev = Some(res.trained_params);
    }
    let params = prev.ok_or_else(|| Error::Config("run has no steps".into()))?;
    Ok((ens, params))
}
