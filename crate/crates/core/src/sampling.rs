//! Initial conditions and deterministic ensemble sampling.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::phase_space::{wrap, DomainSpec, ParticleEnsemble, Topology};
use crate::rng::{self, Domain};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PositionProfile {
    /// Every coordinate independent `N(0, 1)`.
    StandardNormal,
    /// `ρ(x) ∝ 1 + α cos(kx)` on a 1D periodic domain.
    Cosine { alpha: f64, k: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityProfile {
    /// `N(0, σ² I)`.
    Gaussian { sigma: f64 },
    /// Two beams at `±center` in `v₁`, width `σ` in every component.
    TwoBeam { center: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Joint Gaussian over `z = (x, v)`; `cov` is row-major.
    Gaussian { mean: Vec<f64>, cov: Vec<f64> },
    /// `f⁰(x, v) = ρ⁰(x) g(v)`.
    Product {
        position: PositionProfile,
        velocity: VelocityProfile,
        /// Cells used for inverse-transform sampling of a periodic ρ⁰.
        #[serde(default)]
        sampling_cells: Option<usize>,
    },
}

fn log_normal(z: f64, sigma: f64) -> f64 {
    -0.5 * (z / sigma).powi(2) - sigma.ln() - 0.5 * LN_2PI
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl VelocityProfile {
    pub fn log_density(&self, v: &[f64]) -> f64 {
        match *self {
            VelocityProfile::Gaussian { sigma } => v.iter().map(|&vi| log_normal(vi, sigma)).sum(),
            VelocityProfile::TwoBeam { center, sigma } => {
                let beams = log_add_exp(log_normal(v[0] - center, sigma), log_normal(v[0] + center, sigma))
                    - std::f64::consts::LN_2;
                beams + v[1..].iter().map(|&vi| log_normal(vi, sigma)).sum::<f64>()
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            VelocityProfile::Gaussian { sigma } => {
                for o in out.iter_mut() {
                    *o = sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            VelocityProfile::TwoBeam { center, sigma } => {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                for (i, o) in out.iter_mut().enumerate() {
                    let base = if i == 0 { sign * center } else { 0.0 };
                    *o = base + sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let sigma = match *self {
            VelocityProfile::Gaussian { sigma } | VelocityProfile::TwoBeam { sigma, .. } => sigma,
        };
        if sigma > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("velocity width must be positive".into()))
        }
    }
}

/// Analytic normalizer of `1 + α cos(kx)` over `[0, L)`.
fn cosine_mass(alpha: f64, k: f64, length: f64) -> f64 {
    if k == 0.0 {
        (1.0 + alpha) * length
    } else {
        length + alpha * (k * length).sin() / k
    }
}

/// Inverse-transform sampler over cell centers followed by in-cell jitter.
struct GridSampler {
    cdf: Vec<f64>,
    dx: f64,
    length: f64,
}

impl GridSampler {
    fn new(alpha: f64, k: f64, length: f64, cells: usize) -> Self {
        let dx = length / cells as f64;
        let mut cdf = Vec::with_capacity(cells);
        let mut acc = 0.0;
        for i in 0..cells {
            let x = (i as f64 + 0.5) * dx;
            acc += (1.0 + alpha * (k * x).cos()).max(0.0);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Self { cdf, dx, length }
    }

    fn sample(&self, u: f64, jitter: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        wrap((i as f64 + jitter) * self.dx, self.length)
    }
}

impl InitialCondition {
    pub fn validate(&self, domain: &DomainSpec) -> Result<()> {
        let n = domain.dim_x + domain.dim_v;
        match self {
            InitialCondition::Gaussian { mean, cov } => {
                if mean.len() != n || cov.len() != n * n {
                    return Err(Error::Shape("initial Gaussian does not match the domain".into()));
                }
                if domain.period().is_some() {
                    return Err(Error::Config("joint Gaussian needs an unbounded domain".into()));
                }
                if DMatrix::from_row_slice(n, n, cov).cholesky().is_none() {
                    return Err(Error::NotPositiveDefinite("initial covariance"));
                }
            }
            InitialCondition::Product { position, velocity, sampling_cells } => {
                velocity.validate()?;
                match (position, domain.topology) {
                    (PositionProfile::StandardNormal, Topology::Unbounded) => {}
                    (PositionProfile::Cosine { alpha, .. }, Topology::Periodic { .. }) => {
                        if domain.dim_x != 1 {
                            return Err(Error::Config("cosine profile is one-dimensional".into()));
                        }
                        if alpha.abs() >= 1.0 {
                            return Err(Error::Config("cosine profile needs |alpha| < 1".into()));
                        }
                        if matches!(sampling_cells, Some(c) if *c < 2) {
                            return Err(Error::Config("sampling_cells must be at least 2".into()));
                        }
                    }
                    _ => return Err(Error::Config("position profile does not match the topology".into())),
                }
            }
        }
        Ok(())
    }

    /// `log f⁰(x, v)`; for periodic profiles `x` must already be wrapped.
    pub fn log_density(&self, domain: &DomainSpec, x: &[f64], v: &[f64]) -> Result<f64> {
        match self {
            InitialCondition::Gaussian { mean, cov } => {
                let n = mean.len();
                let chol = DMatrix::from_row_slice(n, n, cov)
                    .cholesky()
                    .ok_or(Error::NotPositiveDefinite("initial covariance"))?;
                let r = nalgebra::DVector::from_iterator(
                    n,
                    x.iter().chain(v).zip(mean).map(|(z, m)| z - m),
                );
                let y = chol.l().solve_lower_triangular(&r).ok_or(Error::NotPositiveDefinite("initial covariance"))?;
                let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                Ok(-0.5 * y.norm_squared() - 0.5 * logdet - 0.5 * n as f64 * LN_2PI)
            }
            InitialCondition::Product { position, velocity, .. } => {
                let lx = match (position, domain.period()) {
                    (PositionProfile::StandardNormal, _) => x.iter().map(|&xi| log_normal(xi, 1.0)).sum(),
                    (PositionProfile::Cosine { alpha, k }, Some(l)) => {
                        ((1.0 + alpha * (k * x[0]).cos()) / cosine_mass(*alpha, *k, l)).ln()
                    }
                    _ => return Err(Error::Config("position profile does not match the topology".into())),
                };
                Ok(lx + velocity.log_density(v))
            }
        }
    }

    /// Replaces the velocity profile by `N(0, T₀ I)`.
    pub fn with_thermal_velocities(&self, t0: f64) -> Result<Self> {
        match self {
            InitialCondition::Product { position, sampling_cells, .. } => Ok(InitialCondition::Product {
                position: position.clone(),
                velocity: VelocityProfile::Gaussian { sigma: t0.sqrt() },
                sampling_cells: *sampling_cells,
            }),
            InitialCondition::Gaussian { .. } => {
                Err(Error::Config("thermal velocity sampling applies to product initial conditions".into()))
            }
        }
    }
}

/// Draws `n` particles from `f⁰`. Particle `p` uses its own random stream, so
/// the result does not depend on how the work is scheduled.
pub fn sample_initial_ensemble(
    domain: &DomainSpec,
    initial: &InitialCondition,
    n: usize,
    seed: u64,
    default_cells: usize,
) -> Result<ParticleEnsemble> {
    domain.validate()?;
    initial.validate(domain)?;
    if n == 0 {
        return Err(Error::Empty);
    }
    let (dx, dv) = (domain.dim_x, domain.dim_v);
    let dim = dx + dv;

    let rows: Vec<Result<(Vec<f64>, f64)>> = match initial {
        InitialCondition::Gaussian { mean, cov } => {
            let chol = DMatrix::from_row_slice(dim, dim, cov)
                .cholesky()
                .ok_or(Error::NotPositiveDefinite("initial covariance"))?;
            let l = chol.l();
            let logdet: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let norm = -0.5 * logdet - 0.5 * dim as f64 * LN_2PI;
            par::map_indexed(n, |p| {
                let mut r = rng::stream(seed, Domain::Particles, p as u64);
                let xi: Vec<f64> = (0..dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                let z: Vec<f64> = (0..dim)
                    .map(|i| mean[i] + (0..=i).map(|j| l[(i, j)] * xi[j]).sum::<f64>())
                    .collect();
                let q: f64 = xi.iter().map(|a| a * a).sum();
                Ok((z, norm - 0.5 * q))
            })
        }
        InitialCondition::Product { position, velocity, sampling_cells } => {
            let sampler = match (position, domain.period()) {
                (PositionProfile::Cosine { alpha, k }, Some(len)) => {
                    Some(GridSampler::new(*alpha, *k, len, sampling_cells.unwrap_or(default_cells)))
                }
                _ => None,
            };
            par::map_indexed(n, |p| {
                let mut r = rng::stream(seed, Domain::Particles, p as u64);
                let mut z = vec![0.0; dim];
                match &sampler {
                    Some(s) => {
                        let u: f64 = r.gen();
                        let jitter: f64 = r.gen();
                        z[0] = s.sample(u, jitter);
                    }
                    None => {
                        for zi in &mut z[..dx] {
                            *zi = r.sample::<f64, _>(StandardNormal);
                        }
                    }
                }
                velocity.sample(&mut r, &mut z[dx..]);
                let lf = initial.log_density(domain, &z[..dx], &z[dx..])?;
                Ok((z, lf))
            })
        }
    };

    let mut positions = Vec::with_capacity(n * dx);
    let mut velocities = Vec::with_capacity(n * dv);
    let mut log_density = Vec::with_capacity(n);
    for row in rows {
        let (z, lf) = row?;
        positions.extend_from_slice(&z[..dx]);
        velocities.extend_from_slice(&z[dx..]);
        log_density.push(lf);
    }
    let ens = ParticleEnsemble::new(dx, dv, positions, velocities, log_density)?;
    ens.validate(domain)?;
    Ok(ens)
}
