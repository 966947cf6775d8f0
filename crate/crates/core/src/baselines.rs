//! Comparison methods: a per-step implicit score-matching transport and the
//! velocity-matching objective (evaluation only).

use crate::config::JkoConfig;
use crate::error::{Error, Result};
use crate::jko::{inner_optimize, StepResult, MAX_DIM};
use crate::nn::{forward_tape, forward_with_divergence_batch, InputDirection, MlpArchitecture, MlpParams, PointwiseObjective};
use crate::par;
use crate::phase_space::{DomainSpec, ParticleEnsemble, Potential};

/// `(1/N) Σ_p [|s(z_p)|² + 2 ∇_v·s(z_p)]`.
pub struct ScoreObjective<'a> {
    ens: &'a ParticleEnsemble,
}

impl<'a> ScoreObjective<'a> {
    pub fn new(ens: &'a ParticleEnsemble) -> Self {
        Self { ens }
    }
}

impl PointwiseObjective for ScoreObjective<'_> {
    fn len(&self) -> usize {
        self.ens.len()
    }

    fn input(&self, p: usize) -> (&[f64], &[f64]) {
        (self.ens.x(p), self.ens.v(p))
    }

    fn term(&self, _p: usize, s: &[f64], div: f64, ds: &mut [f64]) -> (f64, f64) {
        let mut l = 2.0 * div;
        for (d, si) in ds.iter_mut().zip(s) {
            l += si * si;
            *d = 2.0 * si;
        }
        (l, 2.0)
    }
}

pub fn implicit_score_loss(arch: &MlpArchitecture, params: &MlpParams, ens: &ParticleEnsemble) -> Result<f64> {
    crate::nn::loss_value(arch, params, &ScoreObjective::new(ens))
}

/// Trains the score on `ens` and moves every particle with the control
/// `−ε(v + T₀ s)`, kicking by the potential first and drifting last.
pub fn score_transport_step(
    domain: &DomainSpec,
    potential: &Potential,
    arch: &MlpArchitecture,
    ens: &ParticleEnsemble,
    theta0: &MlpParams,
    cfg: &JkoConfig,
) -> Result<StepResult> {
    if !potential.is_closed_form() {
        return Err(Error::SelfConsistentPotential);
    }
    if ens.dim_x != domain.dim_x || ens.dim_v != domain.dim_v || ens.dim_x != ens.dim_v || ens.dim_v > MAX_DIM {
        return Err(Error::Shape("score baseline needs matching position and velocity dimensions".into()));
    }
    let obj = ScoreObjective::new(ens);
    let (params, trace, final_loss) = inner_optimize(arch, theta0, &obj, cfg, 0.0)?;
    let ensemble = transport_with_score(domain, potential, arch, &params, ens, cfg)?;
    Ok(StepResult {
        control: ensemble.1,
        ensemble: ensemble.0,
        trained_params: params,
        final_inner_loss: final_loss,
        inner_loss_trace: trace,
    })
}

/// The transport part of the score step for given score parameters; returns
/// the new ensemble and the applied control.
pub fn transport_with_score(
    domain: &DomainSpec,
    potential: &Potential,
    arch: &MlpArchitecture,
    params: &MlpParams,
    ens: &ParticleEnsemble,
    cfg: &JkoConfig,
) -> Result<(ParticleEnsemble, Vec<f64>)> {
    let (dx, dv, dt, eps, t0) = (ens.dim_x, ens.dim_v, cfg.dt, cfg.epsilon, cfg.t0);
    let (s, div) = forward_with_divergence_batch(arch, params, &ens.positions, &ens.velocities)?;
    let control: Vec<f64> = ens.velocities.iter().zip(&s).map(|(v, si)| -eps * (v + t0 * si)).collect();
    let mut positions = ens.positions.clone();
    let mut velocities = ens.velocities.clone();
    let mut g = [0.0; MAX_DIM];
    for p in 0..ens.len() {
        potential.gradient_into(ens.x(p), &mut g[..dx])?;
        for i in 0..dv {
            let k = p * dv + i;
            velocities[k] += (control[k] - g[i]) * dt;
            positions[p * dx + i] += velocities[k] * dt;
        }
    }
    domain.wrap_in_place(&mut positions);
    let log_density: Vec<f64> = ens
        .log_density
        .iter()
        .zip(&div)
        .map(|(lf, d)| lf + eps * dt * (dv as f64 + t0 * d))
        .collect();
    if let Some(p) = (0..ens.len()).find(|&p| {
        !log_density[p].is_finite() || velocities[p * dv..(p + 1) * dv].iter().any(|v| !v.is_finite())
    }) {
        return Err(Error::NonFinite { particle: p, what: "score transport" });
    }
    Ok((ParticleEnsemble::new(dx, dv, positions, velocities, log_density)?, control))
}

/// Marches the score baseline with the same callback contract as the JKO loop.
pub fn run_score_baseline<I, F>(
    domain: &DomainSpec,
    potential: &Potential,
    arch: &MlpArchitecture,
    ens0: ParticleEnsemble,
    cfg: &JkoConfig,
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
        let res = score_transport_step(domain, potential, arch, &ens, &theta0, cfg)?;
        on_step(n, &ens, &res)?;
        ens = res.ensemble;
        prev = Some(res.trained_params);
    }
    let params = prev.ok_or_else(|| Error::Config("run has no steps".into()))?;
    Ok((ens, params))
}

/// Parts of the velocity-matching objective, each an ensemble mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityMatchingTerms {
    /// `|uˣ|² + |uᵛ|²`.
    pub squared: f64,
    /// `−2uˣ·v + 2uᵛ·∇φ − 2uᵛ·v`.
    pub linear: f64,
    /// `2∇_v·uˣ − 2∇_x·uᵛ + 2∇_v·uᵛ`.
    pub divergence: f64,
}

impl VelocityMatchingTerms {
    pub fn total(&self) -> f64 {
        self.squared + self.linear + self.divergence
    }

    pub fn quadratic(&self) -> f64 {
        self.squared + self.linear
    }
}

/// θ-dependent part of the velocity-matching functional for a field with
/// outputs `(uˣ, uᵛ)`.
pub fn velocity_matching_objective(
    arch: &MlpArchitecture,
    params: &MlpParams,
    ens: &ParticleEnsemble,
    potential: &Potential,
) -> Result<VelocityMatchingTerms> {
    let (dx, dv) = (ens.dim_x, ens.dim_v);
    if dx != dv || dv > MAX_DIM || arch.dim_x != dx || arch.dim_v != dv || arch.output_dim() != dx + dv {
        return Err(Error::Shape("velocity matching needs dim_x = dim_v and dim_x + dim_v outputs".into()));
    }
    if ens.is_empty() {
        return Err(Error::Empty);
    }
    let dirs: Vec<InputDirection> =
        (0..dx).map(InputDirection::Position).chain((0..dv).map(InputDirection::Velocity)).collect();
    let parts = par::map_chunks(ens.len(), par::CHUNK, |a, b| -> Result<[f64; 3]> {
        let tape = forward_tape(arch, params, &ens.positions[a * dx..b * dx], &ens.velocities[a * dv..b * dv], &dirs)?;
        let out = tape.output();
        let mut acc = [0.0; 3];
        let mut g = [0.0; MAX_DIM];
        for q in 0..b - a {
            let p = a + q;
            potential.gradient_into(ens.x(p), &mut g[..dx])?;
            let v = ens.v(p);
            let mut t = [0.0; 3];
            for i in 0..dv {
                let (ux, uv) = (out[[i, q]], out[[dx + i, q]]);
                t[0] += ux * ux + uv * uv;
                t[1] += -2.0 * ux * v[i] + 2.0 * uv * g[i] - 2.0 * uv * v[i];
                let dvx = tape.tangent(dx + i)[[i, q]];
                let dxv = tape.tangent(i)[[dx + i, q]];
                let dvv = tape.tangent(dx + i)[[dx + i, q]];
                t[2] += 2.0 * dvx - 2.0 * dxv + 2.0 * dvv;
            }
            if t.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { particle: p, what: "velocity-matching term" });
            }
            for (a, b) in acc.iter_mut().zip(t) {
                *a += b;
            }
        }
        Ok(acc)
    });
    let mut acc = [0.0; 3];
    for part in parts {
        for (a, b) in acc.iter_mut().zip(part?) {
            *a += b;
        }
    }
    let n = ens.len() as f64;
    Ok(VelocityMatchingTerms { squared: acc[0] / n, linear: acc[1] / n, divergence: acc[2] / n })
}
