use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::tensor::{stable_sigmoid, Element, Tape, Tensor, Var};
use crate::{Error, Result};

/// How many fully connected layers the embedding `g` applies before
/// normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticDepth {
    /// Normalize the raw activations.
    None,
    /// One linear map `d_k → e`.
    #[default]
    One,
    /// `d_k → e`, relu, `e → e`.
    Two,
}

/// Which network an activation batch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Syn,
    Real,
}

/// Embedding weights for one supervised layer; each side has its own map.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCritic<F = f32> {
    pub syn: Vec<Tensor<F>>,
    pub real: Vec<Tensor<F>>,
}

/// Tape handles for every critic weight, mirroring [`CriticParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct CriticVars {
    pub layers: Vec<(Vec<Var>, Vec<Var>)>,
}

impl CriticVars {
    /// All handles in the same order as [`CriticParams::tensors_mut`].
    pub fn flat(&self) -> Vec<Var> {
        self.layers
            .iter()
            .flat_map(|(s, r)| s.iter().chain(r).copied())
            .collect()
    }
}

/// Normalized embeddings plus how many rows were exactly zero (and therefore
/// left at zero instead of unit norm).
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded<F = f32> {
    pub values: Tensor<F>,
    pub zero_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticParams<F = f32> {
    layers: Vec<LayerCritic<F>>,
    embed_dim: usize,
    depth: CriticDepth,
    tau: f64,
}

fn gaussian<F: Element>(rows: usize, cols: usize, std: f64, rng: &mut impl rand::Rng) -> Result<Tensor<F>> {
    let normal = Normal::new(0.0, std).expect("positive std");
    let data: Vec<f64> = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Ok(Tensor::from_f64(vec![rows, cols], &data)?)
}

fn side_maps<F: Element>(width: usize, e: usize, depth: CriticDepth, rng: &mut impl rand::Rng) -> Result<Vec<Tensor<F>>> {
    Ok(match depth {
        CriticDepth::None => Vec::new(),
        CriticDepth::One => vec![gaussian(e, width, (1.0 / width as f64).sqrt(), rng)?],
        CriticDepth::Two => vec![
            gaussian(e, width, (2.0 / width as f64).sqrt(), rng)?,
            gaussian(e, e, (1.0 / e as f64).sqrt(), rng)?,
        ],
    })
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && !tau.is_nan() {
        Ok(())
    } else {
        Err(Error::Config(format!("temperature must be > 0, got {tau}")))
    }
}

impl<F: Element> CriticParams<F> {
    /// One embedding pair per supervised layer, `syn_widths[k] → e` and
    /// `real_widths[k] → e`.
    pub fn init(
        syn_widths: &[usize],
        real_widths: &[usize],
        embed_dim: usize,
        depth: CriticDepth,
        tau: f64,
        seed: u64,
    ) -> Result<Self> {
        check_tau(tau)?;
        if syn_widths.len() != real_widths.len() {
            return Err(Error::DimensionMismatch {
                expected: syn_widths.len(),
                found: real_widths.len(),
            });
        }
        if depth != CriticDepth::None && embed_dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let mut layers = Vec::with_capacity(syn_widths.len());
        for (k, (&ws, &wr)) in syn_widths.iter().zip(real_widths).enumerate() {
            if depth == CriticDepth::None && ws != wr {
                return Err(Error::Config(format!(
                    "an identity critic needs equal widths, layer {k} has {ws} and {wr}"
                )));
            }
            let mut rng = seed::derived_rng(seed, "critic", k as u64);
            layers.push(LayerCritic {
                syn: side_maps(ws, embed_dim, depth, &mut rng)?,
                real: side_maps(wr, embed_dim, depth, &mut rng)?,
            });
        }
        Ok(Self {
            layers,
            embed_dim,
            depth,
            tau,
        })
    }

    /// Builds params from explicit weights; every map must be `e × width`
    /// (and `e × e` for the second map of a two-layer critic).
    pub fn from_layers(layers: Vec<LayerCritic<F>>, depth: CriticDepth, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        let expected = match depth {
            CriticDepth::None => 0,
            CriticDepth::One => 1,
            CriticDepth::Two => 2,
        };
        let mut embed_dim = 0;
        for layer in &layers {
            for maps in [&layer.syn, &layer.real] {
                if maps.len() != expected {
                    return Err(Error::DimensionMismatch {
                        expected,
                        found: maps.len(),
                    });
                }
                if let Some(first) = maps.first() {
                    embed_dim = first.rows();
                }
            }
        }
        Ok(Self {
            layers,
            embed_dim,
            depth,
            tau,
        })
    }

    pub fn layers(&self) -> &[LayerCritic<F>] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn depth(&self) -> CriticDepth {
        self.depth
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.syn.iter_mut().chain(l.real.iter_mut()))
            .collect()
    }

    pub fn cast<G: Element>(&self) -> CriticParams<G> {
        CriticParams {
            layers: self
                .layers
                .iter()
                .map(|l| LayerCritic {
                    syn: l.syn.iter().map(Tensor::cast).collect(),
                    real: l.real.iter().map(Tensor::cast).collect(),
                })
                .collect(),
            embed_dim: self.embed_dim,
            depth: self.depth,
            tau: self.tau,
        }
    }

    fn maps(&self, layer: usize, side: Side) -> Result<&[Tensor<F>]> {
        let l = self.layers.get(layer).ok_or_else(|| {
            Error::Config(format!("critic has {} layers, asked for layer {layer}", self.layers.len()))
        })?;
        Ok(match side {
            Side::Syn => &l.syn,
            Side::Real => &l.real,
        })
    }

    /// `g(a)` for every row of `activations`, normalized to unit length.
    pub fn embed(&self, layer: usize, side: Side, activations: &Tensor<F>) -> Result<Embedded<F>> {
        let maps = self.maps(layer, side)?;
        let (_, width) = activations.dims2()?;
        if let Some(first) = maps.first() {
            if first.cols() != width {
                return Err(Error::DimensionMismatch {
                    expected: first.cols(),
                    found: width,
                });
            }
        }
        let mut h = activations.clone();
        for (i, w) in maps.iter().enumerate() {
            h = h.matmul_t(w)?;
            if i + 1 < maps.len() {
                h = h.relu();
            }
        }
        Ok(normalize_rows(&h))
    }

    pub fn vars(&self, tape: &mut Tape<F>, trainable: bool) -> CriticVars {
        let mut put = |t: &Tensor<F>| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        CriticVars {
            layers: self
                .layers
                .iter()
                .map(|l| (l.syn.iter().map(&mut put).collect(), l.real.iter().map(&mut put).collect()))
                .collect(),
        }
    }

    /// Tape version of [`embed`](Self::embed).
    pub fn embed_tape(&self, tape: &mut Tape<F>, vars: &CriticVars, layer: usize, side: Side, activations: Var) -> Result<Var> {
        let maps = self.maps(layer, side)?;
        let handles = match (vars.layers.get(layer), side) {
            (Some((s, _)), Side::Syn) => s,
            (Some((_, r)), Side::Real) => r,
            (None, _) => return Err(Error::Config(format!("no critic vars for layer {layer}"))),
        };
        let width = tape.value(activations).cols();
        if let Some(first) = maps.first() {
            if first.cols() != width {
                return Err(Error::DimensionMismatch {
                    expected: first.cols(),
                    found: width,
                });
            }
        }
        let mut h = activations;
        for (i, &w) in handles.iter().enumerate() {
            h = tape.matmul_t(h, w)?;
            if i + 1 < handles.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(tape.l2_normalize_rows(h)?)
    }
}

/// Unit-normalizes each row; rows of exact zeros stay zero and are counted.
pub fn normalize_rows<F: Element>(x: &Tensor<F>) -> Embedded<F> {
    let cols = x.cols();
    let mut data = x.data().to_vec();
    let mut zero_rows = 0;
    for row in data.chunks_mut(cols.max(1)) {
        let norm = row.iter().fold(F::zero(), |acc, &v| acc + v * v).sqrt();
        if norm > F::zero() {
            row.iter_mut().for_each(|v| *v = *v / norm);
        } else {
            zero_rows += 1;
        }
    }
    Embedded {
        values: Tensor::new(x.shape().to_vec(), data).expect("normalized rows are finite"),
        zero_rows,
    }
}

/// `d = σ(⟨u, v⟩ / τ)`, the critic's probability that `(u, v)` is a positive pair.
pub fn critic_score<F: Element>(u: &[F], v: &[F], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let s: f64 = u.iter().zip(v).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
    Ok(stable_sigmoid(s / tau))
}
