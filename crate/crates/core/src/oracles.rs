//! Ground-truth oracles and error metrics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::phase_space::{DomainSpec, ParticleEnsemble, Potential, SystemMatrices, Topology};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mean and covariance of a Gaussian over `z = (x, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mu: DVector<f64>,
    pub c: DMatrix<f64>,
}

impl GaussianMoments {
    pub fn new(mu: Vec<f64>, c_row_major: Vec<f64>) -> Result<Self> {
        let n = mu.len();
        if c_row_major.len() != n * n {
            return Err(Error::Shape("covariance does not match mean".into()));
        }
        Ok(Self { mu: DVector::from_vec(mu), c: DMatrix::from_row_slice(n, n, &c_row_major) })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `(dμ, dC)` of the moment equations for a quadratic Hamiltonian with
/// precision `K⁻¹` and centre `μ̃`.
pub fn moment_ode_rhs(
    m: &GaussianMoments,
    k_inv: &DMatrix<f64>,
    mu_tilde: &DVector<f64>,
    sys: &SystemMatrices,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.dim();
    if k_inv.nrows() != n || sys.j.nrows() != n || mu_tilde.len() != n {
        return Err(Error::Shape("moment system dimensions".into()));
    }
    if k_inv.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("K"));
    }
    let a = (&sys.d + &sys.j) * k_inv;
    let dmu = -(&a * (&m.mu - mu_tilde));
    let dc = &sys.d * 2.0 - sym(&(&a * &m.c)) * 2.0;
    Ok((dmu, dc))
}

fn rk4_step(
    m: &GaussianMoments,
    h: f64,
    k_inv: &DMatrix<f64>,
    mu_tilde: &DVector<f64>,
    sys: &SystemMatrices,
) -> Result<GaussianMoments> {
    let shift = |k: &(DVector<f64>, DMatrix<f64>), s: f64| GaussianMoments {
        mu: &m.mu + &k.0 * s,
        c: &m.c + &k.1 * s,
    };
    let k1 = moment_ode_rhs(m, k_inv, mu_tilde, sys)?;
    let k2 = moment_ode_rhs(&shift(&k1, 0.5 * h), k_inv, mu_tilde, sys)?;
    let k3 = moment_ode_rhs(&shift(&k2, 0.5 * h), k_inv, mu_tilde, sys)?;
    let k4 = moment_ode_rhs(&shift(&k3, h), k_inv, mu_tilde, sys)?;
    Ok(GaussianMoments {
        mu: &m.mu + (&k1.0 + &k2.0 * 2.0 + &k3.0 * 2.0 + &k4.0) * (h / 6.0),
        c: &m.c + (&k1.1 + &k2.1 * 2.0 + &k3.1 * 2.0 + &k4.1) * (h / 6.0),
    })
}

/// Classical fourth-order integration of the moment equations to `t_final`.
/// The last step is shortened to land exactly on `t_final`.
pub fn integrate_moments(
    m0: &GaussianMoments,
    k_inv: &DMatrix<f64>,
    mu_tilde: &DVector<f64>,
    sys: &SystemMatrices,
    t_final: f64,
    dt_ref: f64,
) -> Result<GaussianMoments> {
    if !(dt_ref > 0.0) || t_final < 0.0 {
        return Err(Error::Config("need dt_ref > 0 and t_final >= 0".into()));
    }
    let steps = (t_final / dt_ref).ceil() as usize;
    let mut m = m0.clone();
    let mut t = 0.0;
    for _ in 0..steps {
        let h = dt_ref.min(t_final - t);
        if h <= 0.0 {
            break;
        }
        m = rk4_step(&m, h, k_inv, mu_tilde, sys)?;
        t += h;
    }
    if m.c.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("moment covariance"));
    }
    Ok(m)
}

/// Moment trajectory sampled at the multiples of an outer step.
#[derive(Debug, Clone)]
pub struct MomentTrajectory {
    pub times: Vec<f64>,
    pub moments: Vec<GaussianMoments>,
}

impl MomentTrajectory {
    pub fn compute(
        m0: &GaussianMoments,
        k_inv: &DMatrix<f64>,
        mu_tilde: &DVector<f64>,
        sys: &SystemMatrices,
        dt: f64,
        n_steps: usize,
        dt_ref: f64,
    ) -> Result<Self> {
        let mut times = vec![0.0];
        let mut moments = vec![m0.clone()];
        for n in 0..n_steps {
            let next = integrate_moments(&moments[n], k_inv, mu_tilde, sys, dt, dt_ref)?;
            times.push((n + 1) as f64 * dt);
            moments.push(next);
        }
        Ok(Self { times, moments })
    }
}

/// `−C⁻¹(z − μ)` over the full phase-space vector.
pub fn gaussian_score(m: &GaussianMoments, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let chol = m.c.clone().cholesky().ok_or(Error::NotPositiveDefinite("C"))?;
    let r = DVector::from_iterator(m.dim(), x.iter().chain(v).zip(m.mu.iter()).map(|(z, mu)| z - mu));
    Ok((-chol.solve(&r)).iter().copied().collect())
}

pub fn gaussian_logdensity(m: &GaussianMoments, x: &[f64], v: &[f64]) -> Result<f64> {
    let chol = m.c.clone().cholesky().ok_or(Error::NotPositiveDefinite("C"))?;
    let r = DVector::from_iterator(m.dim(), x.iter().chain(v).zip(m.mu.iter()).map(|(z, mu)| z - mu));
    let y = chol.l().solve_lower_triangular(&r).ok_or(Error::NotPositiveDefinite("C"))?;
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * y.norm_squared() - 0.5 * logdet - 0.5 * m.dim() as f64 * LN_2PI)
}

/// Precomputed velocity score `∇_v log N(μ, C)` for many evaluations.
#[derive(Debug, Clone)]
pub struct GaussianVelocityScore {
    mu: DVector<f64>,
    /// Velocity rows of `C⁻¹`.
    prec_v: DMatrix<f64>,
    dim_x: usize,
}

impl GaussianVelocityScore {
    pub fn new(m: &GaussianMoments, dim_x: usize) -> Result<Self> {
        let inv = m.c.clone().cholesky().ok_or(Error::NotPositiveDefinite("C"))?.inverse();
        let n = m.dim();
        Ok(Self { mu: m.mu.clone(), prec_v: inv.rows(dim_x, n - dim_x).into_owned(), dim_x })
    }

    pub fn eval(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let n = self.mu.len();
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..n {
                let z = if j < self.dim_x { x[j] } else { v[j - self.dim_x] };
                s += self.prec_v[(i, j)] * (z - self.mu[j]);
            }
            *o = -s;
        }
    }
}

/// Composite Simpson rule on `[a, b]` with an even number of panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Panels per compact dimension for normalizers.
pub const QUAD_PANELS: usize = 8192;

/// `f∞(x, v) = exp(−|v|²/2 − φ(x)) / Z`.
#[derive(Debug, Clone)]
pub struct StationaryDensity {
    pub potential: Potential,
    pub domain: DomainSpec,
    pub log_normalizer: f64,
}

type LogFactor = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Log of the one-dimensional factor `e^{−φ₁(x)}` of a separable potential, with its integration range.
fn separable_factor(potential: &Potential, domain: &DomainSpec) -> Option<(LogFactor, f64, f64)> {
    match (*potential).clone() {
        Potential::QuadraticPlusCosine { a, b } if a > 0.0 => {
            let half = 12.0 / a.sqrt();
            Some((Box::new(move |x: f64| -0.5 * a * x * x - b * (std::f64::consts::TAU * x).cos()), -half, half))
        }
        Potential::SinePeriodic { amp, freq } => match domain.topology {
            Topology::Periodic { length } => Some((Box::new(move |x: f64| -amp * (freq * x).sin()), 0.0, length)),
            Topology::Unbounded => None,
        },
        _ => None,
    }
}

impl StationaryDensity {
    pub fn new(potential: &Potential, domain: &DomainSpec) -> Result<Self> {
        let dx = domain.dim_x as f64;
        let dv = domain.dim_v as f64;
        let log_zv = 0.5 * dv * LN_2PI;
        let log_zx = match potential {
            Potential::SelfConsistent => return Err(Error::SelfConsistentPotential),
            Potential::QuadraticForm(q) => {
                let d = q.dim_x;
                let kxx = q.k_inv_matrix().view((0, 0), (d, d)).into_owned();
                let det = kxx.determinant();
                if !(det > 0.0) {
                    return Err(Error::NotPositiveDefinite("K⁻¹ position block"));
                }
                0.5 * dx * LN_2PI - 0.5 * det.ln()
            }
            _ => {
                let (g, a, b) = separable_factor(potential, domain)
                    .ok_or_else(|| Error::Config("stationary density needs a confining potential".into()))?;
                dx * simpson(|x| g(x).exp(), a, b, QUAD_PANELS).ln()
            }
        };
        Ok(Self { potential: potential.clone(), domain: *domain, log_normalizer: log_zx + log_zv })
    }

    pub fn log_density(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        let kin: f64 = 0.5 * v.iter().map(|a| a * a).sum::<f64>();
        Ok(-kin - self.potential.value(x)? - self.log_normalizer)
    }

    /// `E∞ = −log Z`, the discrete energy of exact equilibrium samples.
    pub fn equilibrium_energy(&self) -> f64 {
        -self.log_normalizer
    }

    /// Log-density of one position coordinate under `f∞` (separable potentials).
    pub fn x_marginal_logdensity(&self, i: usize, x: f64) -> Result<f64> {
        match &self.potential {
            Potential::QuadraticForm(q) => {
                let d = q.dim_x;
                let kxx = q.k_inv_matrix().view((0, 0), (d, d)).into_owned();
                let cov = kxx.try_inverse().ok_or(Error::NotPositiveDefinite("K⁻¹ position block"))?;
                let var = cov[(i, i)];
                let r = x - q.mu_tilde[i];
                Ok(-0.5 * r * r / var - 0.5 * (LN_2PI + var.ln()))
            }
            p => {
                let (g, a, b) = separable_factor(p, &self.domain)
                    .ok_or_else(|| Error::Config("marginal needs a separable potential".into()))?;
                let z = simpson(|s| g(s).exp(), a, b, QUAD_PANELS);
                Ok(g(x) - z.ln())
            }
        }
    }

    /// Support of a position marginal used for histograms.
    pub fn x_range(&self) -> (f64, f64) {
        match self.domain.topology {
            Topology::Periodic { length } => (0.0, length),
            Topology::Unbounded => (-4.0, 4.0),
        }
    }
}

pub fn v_marginal_logdensity(v: f64) -> f64 {
    -0.5 * v * v - 0.5 * LN_2PI
}

fn drift_residual_norms<S>(control: &[f64], after: &ParticleEnsemble, epsilon: f64, score: S) -> Result<Vec<f64>>
where
    S: Fn(&[f64], &[f64], &mut [f64]),
{
    let dv = after.dim_v;
    if control.len() != after.velocities.len() {
        return Err(Error::Shape("control does not match ensemble".into()));
    }
    if after.is_empty() {
        return Err(Error::Empty);
    }
    let mut s = vec![0.0; dv];
    let mut norms = Vec::with_capacity(after.len());
    for p in 0..after.len() {
        score(after.x(p), after.v(p), &mut s);
        let sq: f64 = (0..dv)
            .map(|i| {
                let r = control[p * dv + i] + epsilon * (after.velocities[p * dv + i] + s[i]);
                r * r
            })
            .sum();
        norms.push(sq.sqrt());
    }
    Ok(norms)
}

/// `sqrt(mean_p |u_p + ε(v⁺_p + s_p)|²)` with `s` the exact velocity score at
/// the new state.
pub fn drift_error<S>(control: &[f64], after: &ParticleEnsemble, epsilon: f64, score: S) -> Result<f64>
where
    S: Fn(&[f64], &[f64], &mut [f64]),
{
    let norms = drift_residual_norms(control, after, epsilon, score)?;
    Ok((norms.iter().map(|r| r * r).sum::<f64>() / norms.len() as f64).sqrt())
}

/// `mean_p |u_p + ε(v⁺_p + s_p)|`, the per-particle optimality residual.
pub fn mean_drift_residual<S>(control: &[f64], after: &ParticleEnsemble, epsilon: f64, score: S) -> Result<f64>
where
    S: Fn(&[f64], &[f64], &mut [f64]),
{
    let norms = drift_residual_norms(control, after, epsilon, score)?;
    Ok(norms.iter().sum::<f64>() / norms.len() as f64)
}

/// `mean_p [½|v_p|² + φ(x_p) + T₀ log f_p]`.
pub fn discrete_energy(ens: &ParticleEnsemble, potential: &Potential, t0: f64) -> Result<f64> {
    if ens.is_empty() {
        return Err(Error::Empty);
    }
    let mut acc = 0.0;
    for p in 0..ens.len() {
        let kin: f64 = 0.5 * ens.v(p).iter().map(|a| a * a).sum::<f64>();
        acc += kin + potential.value(ens.x(p))? + t0 * ens.log_density[p];
    }
    Ok(acc / ens.len() as f64)
}

/// `mean_p [log f_p − log f_ref(z_p)]` using the tracked log-densities.
pub fn kl_mc<R>(ens: &ParticleEnsemble, reference: R) -> Result<f64>
where
    R: Fn(&[f64], &[f64]) -> Result<f64>,
{
    if ens.is_empty() {
        return Err(Error::Empty);
    }
    let mut acc = 0.0;
    for p in 0..ens.len() {
        acc += ens.log_density[p] - reference(ens.x(p), ens.v(p))?;
    }
    Ok(acc / ens.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    /// Density per bin; integrates to one over `[lo, hi)`.
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.density.len() as f64
    }

    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width()
    }
}

pub const DEFAULT_BINS: usize = 160;

fn bin_of(x: f64, lo: f64, hi: f64, n: usize) -> Option<usize> {
    if !(x >= lo && x < hi) {
        return None;
    }
    Some((((x - lo) / (hi - lo)) * n as f64).floor().min((n - 1) as f64) as usize)
}

/// Density histogram of the samples falling in `[lo, hi)`, normalized over those samples.
pub fn marginal_histogram(samples: &[f64], n_bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if n_bins == 0 || !(hi > lo) {
        return Err(Error::Config("histogram needs bins and a non-empty range".into()));
    }
    let mut counts = vec![0usize; n_bins];
    let mut inside = 0usize;
    for &x in samples {
        if let Some(b) = bin_of(x, lo, hi, n_bins) {
            counts[b] += 1;
            inside += 1;
        }
    }
    if inside == 0 {
        return Err(Error::Empty);
    }
    let w = (hi - lo) / n_bins as f64;
    let density = counts.iter().map(|&c| c as f64 / (inside as f64 * w)).collect();
    Ok(Histogram { lo, hi, density })
}

/// L1 distance between the empirical and exact bin probabilities on `n_bins`
/// bins over `range`, with the mass outside the range as one extra bin.
pub fn binned_l1_gap<L>(samples: &[f64], n_bins: usize, range: (f64, f64), logdensity: L) -> Result<f64>
where
    L: Fn(f64) -> f64,
{
    let (lo, hi) = range;
    if samples.is_empty() {
        return Err(Error::Empty);
    }
    let n = samples.len() as f64;
    let mut counts = vec![0usize; n_bins];
    for &x in samples {
        if let Some(b) = bin_of(x, lo, hi, n_bins) {
            counts[b] += 1;
        }
    }
    let w = (hi - lo) / n_bins as f64;
    let mut gap = 0.0;
    let mut exact_in = 0.0;
    let mut emp_in = 0.0;
    for (b, &c) in counts.iter().enumerate() {
        let a = lo + b as f64 * w;
        let p = simpson(|x| logdensity(x).exp(), a, a + w, 64);
        let q = c as f64 / n;
        exact_in += p;
        emp_in += q;
        gap += (q - p).abs();
    }
    gap += ((1.0 - emp_in) - (1.0 - exact_in).max(0.0)).abs();
    Ok(gap)
}
