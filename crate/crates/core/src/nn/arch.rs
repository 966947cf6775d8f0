use std::path::Path;

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    LeakyRelu { alpha: f64 },
    /// Single affine layer.
    None,
}

impl Activation {
    fn tag(self) -> f64 {
        match self {
            Activation::Tanh => 0.0,
            Activation::LeakyRelu { .. } => 1.0,
            Activation::None => 2.0,
        }
    }

    fn alpha(self) -> f64 {
        match self {
            Activation::LeakyRelu { alpha } => alpha,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    /// Raw `(x, v)`.
    Identity,
    /// `(sin ωx₁, cos ωx₁, …, sin ωx_d, cos ωx_d, v)`.
    PeriodicEmbed { omega: f64 },
}

impl FeatureMap {
    pub fn output_dim(self, dim_x: usize, dim_v: usize) -> usize {
        match self {
            FeatureMap::Identity => dim_x + dim_v,
            FeatureMap::PeriodicEmbed { .. } => 2 * dim_x + dim_v,
        }
    }

    /// Offset of the first velocity slot in the feature vector.
    pub fn velocity_offset(self, dim_x: usize) -> usize {
        match self {
            FeatureMap::Identity => dim_x,
            FeatureMap::PeriodicEmbed { .. } => 2 * dim_x,
        }
    }

    pub fn apply(self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            FeatureMap::Identity => {
                out[..x.len()].copy_from_slice(x);
            }
            FeatureMap::PeriodicEmbed { omega } => {
                for (i, &xi) in x.iter().enumerate() {
                    let (s, c) = (omega * xi).sin_cos();
                    out[2 * i] = s;
                    out[2 * i + 1] = c;
                }
            }
        }
        let off = self.velocity_offset(x.len());
        out[off..off + v.len()].copy_from_slice(v);
    }

    /// Derivative of the features along position coordinate `i`.
    pub fn position_tangent(self, x: &[f64], i: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        match self {
            FeatureMap::Identity => out[i] = 1.0,
            FeatureMap::PeriodicEmbed { omega } => {
                let (s, c) = (omega * x[i]).sin_cos();
                out[2 * i] = omega * c;
                out[2 * i + 1] = -omega * s;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    /// `m₀ … m_L`; `m₀` equals the feature dimension.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub feature_map: FeatureMap,
    pub dim_x: usize,
    pub dim_v: usize,
}

impl MlpArchitecture {
    /// Network with the given hidden widths and output width `out`.
    pub fn new(
        dim_x: usize,
        dim_v: usize,
        hidden: &[usize],
        out: usize,
        activation: Activation,
        feature_map: FeatureMap,
    ) -> Result<Self> {
        let mut widths = vec![feature_map.output_dim(dim_x, dim_v)];
        widths.extend_from_slice(hidden);
        widths.push(out);
        let arch = Self { widths, activation, feature_map, dim_x, dim_v };
        arch.validate()?;
        Ok(arch)
    }

    /// Single affine layer `W (x, v) + b` with `dim_v` outputs.
    pub fn affine(dim_x: usize, dim_v: usize) -> Self {
        Self::new(dim_x, dim_v, &[], dim_v, Activation::None, FeatureMap::Identity)
            .expect("affine architecture is always valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if self.widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.widths[0] != self.feature_map.output_dim(self.dim_x, self.dim_v) {
            return Err(Error::Shape(format!(
                "input width {} does not match feature dimension {}",
                self.widths[0],
                self.feature_map.output_dim(self.dim_x, self.dim_v)
            )));
        }
        if self.activation == Activation::None && self.n_layers() != 1 {
            return Err(Error::Config("activation `none` requires a single affine layer".into()));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Offsets of `(W_k, b_k)` in the flat parameter vector, `k = 1..=L`.
    pub(crate) fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let wo = off;
                off += w[1] * w[0];
                let bo = off;
                off += w[1];
                (wo, bo)
            })
            .collect()
    }
}

/// Flat parameter vector laid out as `W₁ (row-major), b₁, W₂, b₂, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub data: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        Self { data: vec![0.0; arch.param_count()] }
    }

    pub fn check(&self, arch: &MlpArchitecture) -> Result<()> {
        if self.data.len() != arch.param_count() {
            return Err(Error::Shape(format!(
                "{} parameters for an architecture with {}",
                self.data.len(),
                arch.param_count()
            )));
        }
        Ok(())
    }

    pub fn weight<'a>(&'a self, arch: &MlpArchitecture, k: usize) -> ArrayView2<'a, f64> {
        let (wo, _) = arch.layer_offsets()[k];
        let (rows, cols) = (arch.widths[k + 1], arch.widths[k]);
        ArrayView2::from_shape((rows, cols), &self.data[wo..wo + rows * cols]).unwrap()
    }

    pub fn bias<'a>(&'a self, arch: &MlpArchitecture, k: usize) -> ArrayView1<'a, f64> {
        let (_, bo) = arch.layer_offsets()[k];
        ArrayView1::from(&self.data[bo..bo + arch.widths[k + 1]])
    }

    pub fn set_weight(&mut self, arch: &MlpArchitecture, k: usize, row: usize, col: usize, value: f64) {
        let (wo, _) = arch.layer_offsets()[k];
        self.data[wo + row * arch.widths[k] + col] = value;
    }

    pub fn set_bias(&mut self, arch: &MlpArchitecture, k: usize, row: usize, value: f64) {
        let (_, bo) = arch.layer_offsets()[k];
        self.data[bo + row] = value;
    }

    /// Header (`L+1`, widths, activation tag, α, ω) followed by the parameters.
    /// ω = 0 encodes the identity feature map.
    pub fn to_flat(&self, arch: &MlpArchitecture) -> Vec<f64> {
        let mut out = Vec::with_capacity(arch.widths.len() + 4 + self.data.len());
        out.push(arch.widths.len() as f64);
        out.extend(arch.widths.iter().map(|&w| w as f64));
        out.push(arch.activation.tag());
        out.push(arch.activation.alpha());
        out.push(match arch.feature_map {
            FeatureMap::Identity => 0.0,
            FeatureMap::PeriodicEmbed { omega } => omega,
        });
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<(MlpArchitecture, MlpParams)> {
        let bad = || Error::Parse("malformed parameter snapshot".into());
        let count = *flat.first().ok_or_else(bad)? as usize;
        if count < 2 || flat.len() < 1 + count + 3 {
            return Err(bad());
        }
        let widths: Vec<usize> = flat[1..=count].iter().map(|&w| w as usize).collect();
        let tag = flat[1 + count];
        let alpha = flat[2 + count];
        let omega = flat[3 + count];
        let activation = match tag as u8 {
            0 => Activation::Tanh,
            1 => Activation::LeakyRelu { alpha },
            2 => Activation::None,
            _ => return Err(bad()),
        };
        let dim_v = *widths.last().unwrap();
        let (feature_map, dim_x) = if omega == 0.0 {
            (FeatureMap::Identity, widths[0].checked_sub(dim_v).ok_or_else(bad)?)
        } else {
            let rest = widths[0].checked_sub(dim_v).ok_or_else(bad)?;
            (FeatureMap::PeriodicEmbed { omega }, rest / 2)
        };
        let arch = MlpArchitecture { widths, activation, feature_map, dim_x, dim_v };
        arch.validate()?;
        let data = flat[4 + count..].to_vec();
        let params = MlpParams { data };
        params.check(&arch)?;
        Ok((arch, params))
    }

    pub fn save(&self, arch: &MlpArchitecture, path: &Path) -> Result<()> {
        let text: Vec<String> = self.to_flat(arch).iter().map(|v| format!("{v:.16e}")).collect();
        std::fs::write(path, text.join("\n") + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(MlpArchitecture, MlpParams)> {
        let text = std::fs::read_to_string(path)?;
        let flat = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Self::from_flat(&flat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Weights uniform in `±sqrt(1/m_{k-1})`, biases zero.
    FanInUniform,
    Zeros,
}

pub fn init_params(arch: &MlpArchitecture, seed: u64, scheme: InitScheme) -> MlpParams {
    let mut params = MlpParams::zeros(arch);
    if scheme == InitScheme::Zeros {
        return params;
    }
    let mut rng = rng::stream(seed, Domain::NetworkInit, 0);
    for (k, (wo, _)) in arch.layer_offsets().into_iter().enumerate() {
        let fan_in = arch.widths[k];
        let bound = (1.0 / fan_in as f64).sqrt();
        let count = arch.widths[k + 1] * fan_in;
        for w in &mut params.data[wo..wo + count] {
            *w = rng.gen_range(-bound..bound);
        }
    }
    params
}
