//! Ensemble-averaged losses that are sums of per-particle terms in `u_θ` and
//! `∇_v · u_θ`, with exact θ-gradients.

use ndarray::Array2;

use super::arch::{MlpArchitecture, MlpParams};
use super::tape::{backward, forward_tape, InputDirection};
use crate::error::{Error, Result};
use crate::par;

/// A loss of the form `(1/N) Σ_p ℓ_p(u_θ(z_p), ∇_v·u_θ(z_p))`.
pub trait PointwiseObjective: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Network input for particle `p` as `(x, v)`.
    fn input(&self, p: usize) -> (&[f64], &[f64]);

    fn uses_divergence(&self) -> bool {
        true
    }

    /// Returns `(ℓ_p, ∂ℓ_p/∂div)` and writes `∂ℓ_p/∂u` into `du`.
    fn term(&self, p: usize, u: &[f64], div: f64, du: &mut [f64]) -> (f64, f64);
}

#[derive(Debug, Clone)]
pub struct LossGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
}

struct ChunkResult {
    loss: f64,
    grad: Vec<f64>,
}

fn gather_inputs<O: PointwiseObjective>(
    arch: &MlpArchitecture,
    obj: &O,
    a: usize,
    b: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::with_capacity((b - a) * arch.dim_x);
    let mut vs = Vec::with_capacity((b - a) * arch.dim_v);
    for p in a..b {
        let (x, v) = obj.input(p);
        if x.len() != arch.dim_x || v.len() != arch.dim_v {
            return Err(Error::Shape(format!("objective input {p} has wrong dimension")));
        }
        xs.extend_from_slice(x);
        vs.extend_from_slice(v);
    }
    Ok((xs, vs))
}

fn check_arch(arch: &MlpArchitecture) -> Result<()> {
    if arch.output_dim() != arch.dim_v {
        return Err(Error::Shape(format!(
            "control field must have {} outputs, network has {}",
            arch.dim_v,
            arch.output_dim()
        )));
    }
    Ok(())
}

fn chunk_eval<O: PointwiseObjective>(
    arch: &MlpArchitecture,
    params: &MlpParams,
    obj: &O,
    a: usize,
    b: usize,
    scale: f64,
    want_grad: bool,
) -> Result<ChunkResult> {
    let dv = arch.dim_v;
    let n = b - a;
    let (xs, vs) = gather_inputs(arch, obj, a, b)?;
    let dirs: Vec<InputDirection> = if obj.uses_divergence() {
        (0..dv).map(InputDirection::Velocity).collect()
    } else {
        Vec::new()
    };
    let tape = forward_tape(arch, params, &xs, &vs, &dirs)?;
    let out = tape.output();
    let div = if obj.uses_divergence() { tape.divergence_v() } else { vec![0.0; n] };

    let mut out_bar = Array2::<f64>::zeros((dv, n));
    let mut tan_bar = Array2::<f64>::zeros((dv, n * dirs.len()));
    let mut u = vec![0.0; dv];
    let mut du = vec![0.0; dv];
    let mut loss = 0.0;
    for q in 0..n {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = out[[i, q]];
        }
        du.iter_mut().for_each(|g| *g = 0.0);
        let (l, ddiv) = obj.term(a + q, &u, div[q], &mut du);
        if !l.is_finite() {
            return Err(Error::NonFinite { particle: a + q, what: "loss term" });
        }
        loss += l;
        if want_grad {
            for i in 0..dv {
                out_bar[[i, q]] = du[i] * scale;
            }
            for j in 0..dirs.len() {
                tan_bar[[j, n * j + q]] = ddiv * scale;
            }
        }
    }
    let mut grad = Vec::new();
    if want_grad {
        grad = vec![0.0; arch.param_count()];
        let tb = if dirs.is_empty() { None } else { Some(tan_bar.view()) };
        backward(arch, params, &tape, out_bar.view(), tb, &mut grad)?;
    }
    Ok(ChunkResult { loss: loss * scale, grad })
}

fn reduce(arch: &MlpArchitecture, parts: Vec<Result<ChunkResult>>, want_grad: bool) -> Result<LossGradient> {
    let mut loss = 0.0;
    let mut grad = if want_grad { vec![0.0; arch.param_count()] } else { Vec::new() };
    for part in parts {
        let part = part?;
        loss += part.loss;
        for (g, c) in grad.iter_mut().zip(&part.grad) {
            *g += c;
        }
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(i));
    }
    Ok(LossGradient { loss, grad })
}

/// Loss and its exact gradient with respect to the flat parameter vector.
pub fn loss_gradient<O: PointwiseObjective>(
    arch: &MlpArchitecture,
    params: &MlpParams,
    obj: &O,
) -> Result<LossGradient> {
    check_arch(arch)?;
    let n = obj.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    let scale = 1.0 / n as f64;
    let parts = par::map_chunks(n, par::CHUNK, |a, b| chunk_eval(arch, params, obj, a, b, scale, true));
    reduce(arch, parts, true)
}

pub fn loss_value<O: PointwiseObjective>(arch: &MlpArchitecture, params: &MlpParams, obj: &O) -> Result<f64> {
    check_arch(arch)?;
    let n = obj.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    let scale = 1.0 / n as f64;
    let parts = par::map_chunks(n, par::CHUNK, |a, b| chunk_eval(arch, params, obj, a, b, scale, false));
    Ok(reduce(arch, parts, false)?.loss)
}

#[cfg(test)]
mod tests {
    use super::super::arch::{init_params, Activation, FeatureMap, InitScheme};
    use super::*;

    /// ℓ = ½|u − t(z)|² + c·div, a smooth test objective with both seeds active.
    struct Probe {
        xs: Vec<f64>,
        vs: Vec<f64>,
        dx: usize,
        dv: usize,
        c: f64,
    }

    impl PointwiseObjective for Probe {
        fn len(&self) -> usize {
            self.vs.len() / self.dv
        }
        fn input(&self, p: usize) -> (&[f64], &[f64]) {
            (&self.xs[p * self.dx..(p + 1) * self.dx], &self.vs[p * self.dv..(p + 1) * self.dv])
        }
        fn term(&self, p: usize, u: &[f64], div: f64, du: &mut [f64]) -> (f64, f64) {
            let v = &self.vs[p * self.dv..(p + 1) * self.dv];
            let mut l = self.c * div;
            for i in 0..u.len() {
                let r = u[i] - v[i].sin();
                l += 0.5 * r * r;
                du[i] = r;
            }
            (l, self.c)
        }
    }

    fn probe(n: usize, dx: usize, dv: usize) -> Probe {
        let xs = (0..n * dx).map(|i| ((i * 37) % 23) as f64 / 7.0 - 1.5).collect();
        let vs = (0..n * dv).map(|i| ((i * 53) % 29) as f64 / 9.0 - 1.6).collect();
        Probe { xs, vs, dx, dv, c: 0.7 }
    }

    fn check_fd(arch: &MlpArchitecture, n: usize) {
        let obj = probe(n, arch.dim_x, arch.dim_v);
        let params = init_params(arch, 11, InitScheme::FanInUniform);
        let lg = loss_gradient(arch, &params, &obj).unwrap();
        assert!((lg.loss - loss_value(arch, &params, &obj).unwrap()).abs() < 1e-13);
        let h = 1e-6;
        for k in (0..arch.param_count()).step_by(7) {
            let mut pp = params.clone();
            pp.data[k] += h;
            let mut pm = params.clone();
            pm.data[k] -= h;
            let fd = (loss_value(arch, &pp, &obj).unwrap() - loss_value(arch, &pm, &obj).unwrap()) / (2.0 * h);
            assert!(
                (fd - lg.grad[k]).abs() < 1e-6 * (1.0 + fd.abs()),
                "param {k}: fd {fd} vs exact {}",
                lg.grad[k]
            );
        }
    }

    #[test]
    fn tanh_gradient_matches_finite_differences() {
        let arch = MlpArchitecture::new(1, 1, &[16, 16], 1, Activation::Tanh, FeatureMap::Identity).unwrap();
        check_fd(&arch, 40);
    }

    #[test]
    fn periodic_3v_gradient_matches_finite_differences() {
        let arch = MlpArchitecture::new(1, 3, &[12, 12], 3, Activation::Tanh, FeatureMap::PeriodicEmbed { omega: 0.25 })
            .unwrap();
        check_fd(&arch, 30);
    }

    #[test]
    fn affine_gradient_matches_finite_differences() {
        check_fd(&MlpArchitecture::affine(3, 3), 25);
    }

    #[test]
    fn chunked_sum_is_deterministic() {
        let arch = MlpArchitecture::new(1, 1, &[8], 1, Activation::Tanh, FeatureMap::Identity).unwrap();
        let obj = probe(3000, 1, 1);
        let params = init_params(&arch, 3, InitScheme::FanInUniform);
        let a = loss_gradient(&arch, &params, &obj).unwrap();
        let b = loss_gradient(&arch, &params, &obj).unwrap();
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert_eq!(a.grad, b.grad);
    }
}
