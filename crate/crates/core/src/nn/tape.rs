//! Batched evaluation with forward-mode input tangents and a reverse pass that
//! differentiates both the output and the tangents with respect to θ.
//!
//! Columns of every layer matrix are laid out as `[primal | tangent₀ | tangent₁ | …]`,
//! each block `n` particles wide, so one gemm per layer advances all of them.

use ndarray::{s, Array2, ArrayView2};

use super::arch::{Activation, MlpArchitecture, MlpParams};
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputDirection {
    Position(usize),
    Velocity(usize),
}

pub struct Tape {
    n: usize,
    dirs: Vec<InputDirection>,
    /// Layer inputs `H₀ … H_{L-1}`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations `A₁ … A_L`.
    pre: Vec<Array2<f64>>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn directions(&self) -> &[InputDirection] {
        &self.dirs
    }

    /// Network outputs, one column per particle.
    pub fn output(&self) -> ArrayView2<'_, f64> {
        self.pre.last().unwrap().slice(s![.., ..self.n])
    }

    /// Directional derivative of the output along input direction `j`.
    pub fn tangent(&self, j: usize) -> ArrayView2<'_, f64> {
        let n = self.n;
        self.pre.last().unwrap().slice(s![.., n * (1 + j)..n * (2 + j)])
    }

    /// `Σᵢ ∂uᵢ/∂vᵢ` per particle; requires the tape to carry velocity directions `0..dim_v`
    /// in order.
    pub fn divergence_v(&self) -> Vec<f64> {
        let out = self.pre.last().unwrap();
        let n = self.n;
        (0..n)
            .map(|p| {
                self.dirs
                    .iter()
                    .enumerate()
                    .filter_map(|(j, d)| match *d {
                        InputDirection::Velocity(i) => Some(out[[i, n * (1 + j) + p]]),
                        InputDirection::Position(_) => None,
                    })
                    .sum()
            })
            .collect()
    }
}

#[inline]
fn act(activation: Activation, a: f64) -> (f64, f64) {
    match activation {
        Activation::Tanh => {
            let h = a.tanh();
            (h, 1.0 - h * h)
        }
        Activation::LeakyRelu { alpha } => {
            if a > 0.0 {
                (a, 1.0)
            } else {
                (alpha * a, alpha)
            }
        }
        Activation::None => (a, 1.0),
    }
}

/// `(σ'(a), σ''(a))`.
#[inline]
fn act_derivs(activation: Activation, a: f64) -> (f64, f64) {
    match activation {
        Activation::Tanh => {
            let h = a.tanh();
            let d = 1.0 - h * h;
            (d, -2.0 * h * d)
        }
        Activation::LeakyRelu { alpha } => (if a > 0.0 { 1.0 } else { alpha }, 0.0),
        Activation::None => (1.0, 0.0),
    }
}

fn batch_size(arch: &MlpArchitecture, xs: &[f64], vs: &[f64]) -> Result<usize> {
    let n = vs.len() / arch.dim_v;
    if vs.len() != n * arch.dim_v || xs.len() != n * arch.dim_x {
        return Err(Error::Shape(format!(
            "batch of {} positions / {} velocities for dim_x={}, dim_v={}",
            xs.len(),
            vs.len(),
            arch.dim_x,
            arch.dim_v
        )));
    }
    Ok(n)
}

pub fn forward_tape(
    arch: &MlpArchitecture,
    params: &MlpParams,
    xs: &[f64],
    vs: &[f64],
    dirs: &[InputDirection],
) -> Result<Tape> {
    params.check(arch)?;
    let n = batch_size(arch, xs, vs)?;
    let (dx, dv) = (arch.dim_x, arch.dim_v);
    for d in dirs {
        match *d {
            InputDirection::Position(i) if i >= dx => {
                return Err(Error::Shape(format!("position direction {i} out of range")))
            }
            InputDirection::Velocity(i) if i >= dv => {
                return Err(Error::Shape(format!("velocity direction {i} out of range")))
            }
            _ => {}
        }
    }
    let nd = dirs.len();
    let ncols = n * (1 + nd);
    let m0 = arch.input_dim();
    let fm = arch.feature_map;
    let voff = fm.velocity_offset(dx);

    let mut h0 = Array2::<f64>::zeros((m0, ncols));
    let mut feat = vec![0.0; m0];
    for p in 0..n {
        let x = &xs[p * dx..(p + 1) * dx];
        let v = &vs[p * dv..(p + 1) * dv];
        fm.apply(x, v, &mut feat);
        for (i, f) in feat.iter().enumerate() {
            h0[[i, p]] = *f;
        }
        for (j, d) in dirs.iter().enumerate() {
            let col = n * (1 + j) + p;
            match *d {
                InputDirection::Velocity(i) => h0[[voff + i, col]] = 1.0,
                InputDirection::Position(i) => {
                    fm.position_tangent(x, i, &mut feat);
                    for (r, f) in feat.iter().enumerate() {
                        h0[[r, col]] = *f;
                    }
                }
            }
        }
    }

    let n_layers = arch.n_layers();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut pre = Vec::with_capacity(n_layers);
    let mut h = h0;
    for k in 0..n_layers {
        let w = params.weight(arch, k);
        let b = params.bias(arch, k);
        let mut a = w.dot(&h);
        for (i, mut row) in a.rows_mut().into_iter().enumerate() {
            let bi = b[i];
            row.slice_mut(s![..n]).mapv_inplace(|z| z + bi);
        }
        if k + 1 < n_layers {
            let mut next = Array2::<f64>::zeros(a.raw_dim());
            for (arow, mut hrow) in a.rows().into_iter().zip(next.rows_mut()) {
                let arow = arow.as_slice().unwrap();
                let hrow = hrow.as_slice_mut().unwrap();
                for p in 0..n {
                    let (val, d) = act(arch.activation, arow[p]);
                    hrow[p] = val;
                    for j in 0..nd {
                        let c = n * (1 + j) + p;
                        hrow[c] = d * arow[c];
                    }
                }
            }
            inputs.push(h);
            h = next;
        } else {
            inputs.push(std::mem::take(&mut h));
        }
        pre.push(a);
    }
    Ok(Tape { n, dirs: dirs.to_vec(), inputs, pre })
}

/// Accumulates `∂/∂θ [ Σ_p out_bar[:,p]·u_p + Σ_{j,p} tangent_bar[:, jn+p]·u̇_{j,p} ]`
/// into `grad`.
pub fn backward(
    arch: &MlpArchitecture,
    params: &MlpParams,
    tape: &Tape,
    out_bar: ArrayView2<'_, f64>,
    tangent_bar: Option<ArrayView2<'_, f64>>,
    grad: &mut [f64],
) -> Result<()> {
    let n = tape.n;
    let nd = tape.dirs.len();
    let ncols = n * (1 + nd);
    let m_out = arch.output_dim();
    if out_bar.dim() != (m_out, n) || grad.len() != arch.param_count() {
        return Err(Error::Shape("backward seed or gradient shape".into()));
    }
    let mut g = Array2::<f64>::zeros((m_out, ncols));
    g.slice_mut(s![.., ..n]).assign(&out_bar);
    if let Some(tb) = tangent_bar {
        if tb.dim() != (m_out, n * nd) {
            return Err(Error::Shape("tangent seed shape".into()));
        }
        g.slice_mut(s![.., n..]).assign(&tb);
    }
    let offsets = arch.layer_offsets();
    for k in (0..arch.n_layers()).rev() {
        let h = &tape.inputs[k];
        let gw = g.dot(&h.t());
        let (wo, bo) = offsets[k];
        for (dst, src) in grad[wo..wo + gw.len()].iter_mut().zip(gw.iter()) {
            *dst += src;
        }
        for (i, row) in g.rows().into_iter().enumerate() {
            grad[bo + i] += row.as_slice().unwrap()[..n].iter().fold(0.0, |s, v| s + v);
        }
        if k == 0 {
            break;
        }
        let hbar = params.weight(arch, k).t().dot(&g);
        let a = &tape.pre[k - 1];
        let mut next = Array2::<f64>::zeros(hbar.raw_dim());
        for ((arow, hrow), mut grow) in a.rows().into_iter().zip(hbar.rows()).zip(next.rows_mut()) {
            let arow = arow.as_slice().unwrap();
            let hrow = hrow.as_slice().unwrap();
            let grow = grow.as_slice_mut().unwrap();
            for p in 0..n {
                let (d1, d2) = act_derivs(arch.activation, arow[p]);
                let mut primal = d1 * hrow[p];
                for j in 0..nd {
                    let c = n * (1 + j) + p;
                    primal += d2 * arow[c] * hrow[c];
                    grow[c] = d1 * hrow[c];
                }
                grow[p] = primal;
            }
        }
        g = next;
    }
    Ok(())
}

fn velocity_dirs(dim_v: usize) -> Vec<InputDirection> {
    (0..dim_v).map(InputDirection::Velocity).collect()
}

/// `u_θ(x, v)` at a single point.
pub fn mlp_forward(arch: &MlpArchitecture, params: &MlpParams, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let tape = forward_tape(arch, params, x, v, &[])?;
    Ok(tape.output().column(0).to_vec())
}

/// `∇_v · u_θ(x, v)` at a single point.
pub fn divergence_v(arch: &MlpArchitecture, params: &MlpParams, x: &[f64], v: &[f64]) -> Result<f64> {
    if arch.output_dim() != arch.dim_v {
        return Err(Error::Shape("velocity divergence needs dim_v outputs".into()));
    }
    let tape = forward_tape(arch, params, x, v, &velocity_dirs(arch.dim_v))?;
    Ok(tape.divergence_v()[0])
}

/// Outputs for a whole ensemble, row-major `N × m_L`.
pub fn forward_batch(arch: &MlpArchitecture, params: &MlpParams, xs: &[f64], vs: &[f64]) -> Result<Vec<f64>> {
    let n = batch_size(arch, xs, vs)?;
    let (dx, dv, mo) = (arch.dim_x, arch.dim_v, arch.output_dim());
    let parts = par::map_chunks(n, par::CHUNK, |a, b| -> Result<Vec<f64>> {
        let tape = forward_tape(arch, params, &xs[a * dx..b * dx], &vs[a * dv..b * dv], &[])?;
        Ok(tape.output().t().iter().copied().collect())
    });
    let mut out = Vec::with_capacity(n * mo);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Outputs (row-major `N × dim_v`) and velocity divergences for a whole ensemble.
pub fn forward_with_divergence_batch(
    arch: &MlpArchitecture,
    params: &MlpParams,
    xs: &[f64],
    vs: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if arch.output_dim() != arch.dim_v {
        return Err(Error::Shape("velocity divergence needs dim_v outputs".into()));
    }
    let n = batch_size(arch, xs, vs)?;
    let (dx, dv) = (arch.dim_x, arch.dim_v);
    let dirs = velocity_dirs(dv);
    let parts = par::map_chunks(n, par::CHUNK, |a, b| -> Result<(Vec<f64>, Vec<f64>)> {
        let tape = forward_tape(arch, params, &xs[a * dx..b * dx], &vs[a * dv..b * dv], &dirs)?;
        Ok((tape.output().t().iter().copied().collect(), tape.divergence_v()))
    });
    let mut u = Vec::with_capacity(n * dv);
    let mut div = Vec::with_capacity(n);
    for part in parts {
        let (pu, pd) = part?;
        u.extend(pu);
        div.extend(pd);
    }
    Ok((u, div))
}
