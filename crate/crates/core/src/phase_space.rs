//! Phase-space state: domains, particle ensembles, external potentials and the
//! conservative/dissipative system matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    Unbounded,
    Periodic { length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dim_x: usize,
    pub dim_v: usize,
    pub topology: Topology,
}

impl DomainSpec {
    pub fn new(dim_x: usize, dim_v: usize, topology: Topology) -> Result<Self> {
        let d = Self { dim_x, dim_v, topology };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim_x == 0 || self.dim_v == 0 {
            return Err(Error::Config("dim_x and dim_v must be positive".into()));
        }
        if let Topology::Periodic { length } = self.topology {
            if !(length > 0.0 && length.is_finite()) {
                return Err(Error::Config(format!("periodic length must be > 0, got {length}")));
            }
        }
        Ok(())
    }

    pub fn period(&self) -> Option<f64> {
        match self.topology {
            Topology::Periodic { length } => Some(length),
            Topology::Unbounded => None,
        }
    }

    /// Maps every coordinate into `[0, L)` on a periodic domain; no-op otherwise.
    pub fn wrap_in_place(&self, xs: &mut [f64]) {
        if let Some(l) = self.period() {
            for x in xs {
                *x = wrap(*x, l);
            }
        }
    }
}

/// Periodic wrap into `[0, length)`. Idempotent.
pub fn wrap(x: f64, length: f64) -> f64 {
    let mut r = x.rem_euclid(length);
    // rem_euclid may round up to `length` for tiny negative inputs
    if r >= length {
        r -= length;
    }
    if r < 0.0 {
        r = 0.0;
    }
    r
}

/// Particle state carried by the scheme. Arrays are row-major, one row per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub dim_x: usize,
    pub dim_v: usize,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    /// log f at each particle's current phase-space location.
    pub log_density: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn new(
        dim_x: usize,
        dim_v: usize,
        positions: Vec<f64>,
        velocities: Vec<f64>,
        log_density: Vec<f64>,
    ) -> Result<Self> {
        let n = log_density.len();
        if positions.len() != n * dim_x || velocities.len() != n * dim_v {
            return Err(Error::Shape(format!(
                "ensemble arrays disagree: {} positions, {} velocities, {} log-densities",
                positions.len(),
                velocities.len(),
                n
            )));
        }
        Ok(Self { dim_x, dim_v, positions, velocities, log_density })
    }

    pub fn len(&self) -> usize {
        self.log_density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_density.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn x(&self, p: usize) -> &[f64] {
        &self.positions[p * self.dim_x..(p + 1) * self.dim_x]
    }

    pub fn v(&self, p: usize) -> &[f64] {
        &self.velocities[p * self.dim_v..(p + 1) * self.dim_v]
    }

    /// Checks finiteness and, on periodic domains, that positions are wrapped.
    pub fn validate(&self, domain: &DomainSpec) -> Result<()> {
        for p in 0..self.len() {
            if !self.x(p).iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite { particle: p, what: "position" });
            }
            if !self.v(p).iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { particle: p, what: "velocity" });
            }
            if !self.log_density[p].is_finite() {
                return Err(Error::NonFinite { particle: p, what: "log-density" });
            }
            if let Some(l) = domain.period() {
                if let Some(&x) = self.x(p).iter().find(|&&x| !(0.0..l).contains(&x)) {
                    return Err(Error::Unwrapped(x));
                }
            }
        }
        Ok(())
    }
}

/// Quadratic Hamiltonian `½|v|² + φ(x) = ½(z-μ̃)ᵀK⁻¹(z-μ̃)` with `z = (x, v)`.
///
/// The velocity block of `K⁻¹` must be the identity, the cross block zero and
/// the velocity part of `μ̃` zero; φ is the position block of the form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    pub dim_x: usize,
    /// Row-major `(dim_x + dim_v)²` matrix.
    pub k_inv: Vec<f64>,
    pub mu_tilde: Vec<f64>,
}

impl QuadraticForm {
    pub fn new(dim_x: usize, dim_v: usize, k_inv: Vec<f64>, mu_tilde: Vec<f64>) -> Result<Self> {
        let n = dim_x + dim_v;
        if k_inv.len() != n * n || mu_tilde.len() != n {
            return Err(Error::Shape("quadratic form dimensions".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let kij = k_inv[i * n + j];
                if (kij - k_inv[j * n + i]).abs() > 1e-12 {
                    return Err(Error::Config("K⁻¹ must be symmetric".into()));
                }
                let (xi, xj) = (i < dim_x, j < dim_x);
                let expected = match (xi, xj) {
                    (false, false) => Some(if i == j { 1.0 } else { 0.0 }),
                    (true, false) | (false, true) => Some(0.0),
                    _ => None,
                };
                if let Some(e) = expected {
                    if (kij - e).abs() > 1e-12 {
                        return Err(Error::Config(
                            "K⁻¹ must separate as ½|v|² + φ(x): velocity block I, cross block 0".into(),
                        ));
                    }
                }
            }
        }
        if mu_tilde[dim_x..].iter().any(|m| *m != 0.0) {
            return Err(Error::Config("velocity part of μ̃ must vanish".into()));
        }
        if DMatrix::from_row_slice(n, n, &k_inv).cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("K⁻¹"));
        }
        Ok(Self { dim_x, k_inv, mu_tilde })
    }

    pub fn dim(&self) -> usize {
        self.mu_tilde.len()
    }

    fn kxx(&self, i: usize, j: usize) -> f64 {
        self.k_inv[i * self.dim() + j]
    }

    pub fn k_inv_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_row_slice(n, n, &self.k_inv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    QuadraticForm(QuadraticForm),
    /// `a|x|²/2 + b Σ cos(2π xᵢ)`
    QuadraticPlusCosine { a: f64, b: f64 },
    /// `amp Σ sin(freq xᵢ)`
    SinePeriodic { amp: f64, freq: f64 },
    /// Field supplied by the particle-in-cell solver.
    SelfConsistent,
}

impl Potential {
    pub fn is_closed_form(&self) -> bool {
        !matches!(self, Potential::SelfConsistent)
    }

    /// Re-checks invariants that deserialization cannot enforce.
    pub fn validate(&self, domain: &DomainSpec) -> Result<()> {
        match self {
            Potential::QuadraticForm(q) => {
                if q.dim_x != domain.dim_x || q.dim() != domain.dim_x + domain.dim_v {
                    return Err(Error::Config("quadratic form does not match the domain".into()));
                }
                QuadraticForm::new(q.dim_x, domain.dim_v, q.k_inv.clone(), q.mu_tilde.clone())?;
                Ok(())
            }
            Potential::SelfConsistent => match domain.topology {
                Topology::Periodic { .. } if domain.dim_x == 1 => Ok(()),
                _ => Err(Error::Config("self-consistent field needs a 1D periodic domain".into())),
            },
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        use std::f64::consts::TAU;
        match self {
            Potential::QuadraticForm(q) => {
                let d = q.dim_x;
                let mut s = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        s += (x[i] - q.mu_tilde[i]) * q.kxx(i, j) * (x[j] - q.mu_tilde[j]);
                    }
                }
                Ok(0.5 * s)
            }
            Potential::QuadraticPlusCosine { a, b } => Ok(x
                .iter()
                .map(|&xi| 0.5 * a * xi * xi + b * (TAU * xi).cos())
                .sum()),
            Potential::SinePeriodic { amp, freq } => {
                Ok(x.iter().map(|&xi| amp * (freq * xi).sin()).sum())
            }
            Potential::SelfConsistent => Err(Error::SelfConsistentPotential),
        }
    }

    /// Writes ∇φ(x) into `out`.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        use std::f64::consts::TAU;
        match self {
            Potential::QuadraticForm(q) => {
                let d = q.dim_x;
                for (i, o) in out.iter_mut().enumerate().take(d) {
                    *o = (0..d).map(|j| q.kxx(i, j) * (x[j] - q.mu_tilde[j])).sum();
                }
            }
            Potential::QuadraticPlusCosine { a, b } => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = a * xi - b * TAU * (TAU * xi).sin();
                }
            }
            Potential::SinePeriodic { amp, freq } => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = amp * freq * (freq * xi).cos();
                }
            }
            Potential::SelfConsistent => return Err(Error::SelfConsistentPotential),
        }
        Ok(())
    }
}

/// ∇φ(x) for a closed-form potential.
pub fn eval_potential_gradient(spec: &Potential, x: &[f64]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    spec.gradient_into(x, &mut g)?;
    Ok(g)
}

/// Antisymmetric `J = [[0,-I],[I,0]]` and degenerate `D = [[0,0],[0,εI]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub j: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub epsilon: f64,
    pub t0: f64,
}

impl SystemMatrices {
    pub fn new(dim: usize, epsilon: f64, t0: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !(t0 > 0.0) {
            return Err(Error::Config(format!("need ε ≥ 0 and T0 > 0 (ε={epsilon}, T0={t0})")));
        }
        let n = 2 * dim;
        let mut j = DMatrix::zeros(n, n);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..dim {
            j[(i, dim + i)] = -1.0;
            j[(dim + i, i)] = 1.0;
            d[(dim + i, dim + i)] = epsilon;
        }
        Ok(Self { j, d, epsilon, t0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example1() -> Potential {
        Potential::QuadraticForm(
            QuadraticForm::new(1, 1, vec![2.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap(),
        )
    }

    #[test]
    fn quadratic_form_gradient_matches_x_squared() {
        let g = eval_potential_gradient(&example1(), &[1.0]).unwrap();
        assert_eq!(g, vec![2.0]);
        assert_eq!(example1().value(&[1.5]).unwrap(), 2.25);
    }

    #[test]
    fn cosine_and_sine_zero_cases() {
        let qc = Potential::QuadraticPlusCosine { a: 1.0, b: 1.0 };
        assert!(eval_potential_gradient(&qc, &[0.0]).unwrap()[0].abs() < 1e-15);
        let sp = Potential::SinePeriodic { amp: 0.2, freq: std::f64::consts::TAU };
        assert!(eval_potential_gradient(&sp, &[0.25]).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn self_consistent_is_rejected() {
        assert!(matches!(
            eval_potential_gradient(&Potential::SelfConsistent, &[0.0]),
            Err(Error::SelfConsistentPotential)
        ));
    }

    #[test]
    fn quadratic_form_rejects_non_separable() {
        assert!(QuadraticForm::new(1, 1, vec![2.0, 0.1, 0.1, 1.0], vec![0.0, 0.0]).is_err());
        assert!(QuadraticForm::new(1, 1, vec![2.0, 0.0, 0.0, 2.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn system_matrices_structure() {
        let s = SystemMatrices::new(2, 0.5, 1.0).unwrap();
        assert_eq!(s.j.transpose(), -s.j.clone());
        assert_eq!(s.d.transpose(), s.d);
        assert_eq!(s.d[(0, 0)], 0.0);
        assert_eq!(s.d[(3, 3)], 0.5);
    }

    fn fd_check(p: &Potential, x: &[f64]) {
        let h = 1e-5;
        let g = eval_potential_gradient(p, x).unwrap();
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (p.value(&xp).unwrap() - p.value(&xm).unwrap()) / (2.0 * h);
            let scale = g[i].abs().max(1.0);
            assert!((fd - g[i]).abs() / scale < 1e-6, "fd {fd} vs {}", g[i]);
        }
    }

    proptest! {
        #[test]
        fn potential_gradients_match_finite_differences(
            x in prop::collection::vec(-2.0f64..2.0, 3),
            a in 0.1f64..2.0, b in -1.0f64..1.0,
        ) {
            fd_check(&Potential::QuadraticPlusCosine { a, b }, &x);
            fd_check(&Potential::SinePeriodic { amp: b, freq: 2.0 * a }, &x);
            let q = QuadraticForm::new(
                2, 2,
                vec![2.0, 0.3, 0.0, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
                vec![0.5, -0.2, 0.0, 0.0],
            ).unwrap();
            fd_check(&Potential::QuadraticForm(q), &x[..2]);
        }

        #[test]
        fn wrap_is_idempotent_and_in_range(x in -100.0f64..100.0, l in 0.1f64..30.0) {
            let w = wrap(x, l);
            prop_assert!((0.0..l).contains(&w));
            prop_assert_eq!(wrap(w, l), w);
        }
    }

    #[test]
    fn wrap_handles_tiny_negative() {
        let w = wrap(-1e-18, 1.0);
        assert!((0.0..1.0).contains(&w));
    }
}
