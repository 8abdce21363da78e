//! Parametric potentials `r_w` over state-action points.
//!
//! Three forms share one flat parameter vector: a table indexed by point id,
//! a linear map of the embedding, and a tanh multilayer perceptron with a
//! linear output unit.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::mdp::TabularMdp;

/// A point of a transport support: an id (the flat state-action index for
/// MDP supports) and its real embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub id: usize,
    pub embed: Vec<f64>,
}

impl SupportPoint {
    pub fn new(id: usize, embed: Vec<f64>) -> Self {
        Self { id, embed }
    }
}

/// Every state-action pair of `mdp` as a support point.
pub fn mdp_points(mdp: &TabularMdp) -> Vec<SupportPoint> {
    (0..mdp.n_pairs()).map(|i| SupportPoint::new(i, mdp.pair_embed(i))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelForm {
    Tabular,
    Linear,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    form: ModelForm,
    /// Tabular: `[table_size]`. Linear: `[input_dim]`. Mlp: `[input, hidden.., 1]`.
    dims: Vec<usize>,
    params: Vec<f64>,
    seed: u64,
}

impl PotentialModel {
    pub fn tabular(size: usize) -> Self {
        Self { form: ModelForm::Tabular, dims: vec![size], params: vec![0.0; size], seed: 0 }
    }

    pub fn linear(input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (input_dim.max(1) as f64).sqrt();
        let params = (0..input_dim).map(|_| rng.gen_range(-bound..bound)).collect();
        Self { form: ModelForm::Linear, dims: vec![input_dim], params, seed }
    }

    pub fn linear_zeros(input_dim: usize) -> Self {
        Self { form: ModelForm::Linear, dims: vec![input_dim], params: vec![0.0; input_dim], seed: 0 }
    }

    /// Tanh network with the given hidden widths and a scalar linear output.
    pub fn mlp(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self { form: ModelForm::Mlp, dims, params, seed }
    }

    pub fn from_parts(form: ModelForm, dims: Vec<usize>, params: Vec<f64>, seed: u64) -> Result<Self> {
        let expected = match form {
            ModelForm::Tabular | ModelForm::Linear => {
                if dims.len() != 1 {
                    return Err(Error::Invalid("tabular/linear models take one dimension".into()));
                }
                dims[0]
            }
            ModelForm::Mlp => {
                if dims.len() < 2 || *dims.last().unwrap() != 1 {
                    return Err(Error::Invalid("mlp dims must be [input, hidden.., 1]".into()));
                }
                dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
            }
        };
        check_len(expected, params.len())?;
        Ok(Self { form, dims, params, seed })
    }

    pub fn form(&self) -> ModelForm {
        self.form
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, point: &SupportPoint) -> Result<()> {
        match self.form {
            ModelForm::Tabular => {
                if point.id >= self.dims[0] {
                    return Err(Error::Invalid(format!("point id {} outside table of {}", point.id, self.dims[0])));
                }
                Ok(())
            }
            _ => check_len(self.dims[0], point.embed.len()),
        }
    }

    pub fn apply(&self, point: &SupportPoint) -> Result<f64> {
        self.check_input(point)?;
        Ok(self.eval_unchecked(point.id, &point.embed))
    }

    /// Evaluates a raw embedding; not available for the tabular form.
    pub fn apply_embed(&self, embed: &[f64]) -> Result<f64> {
        if self.form == ModelForm::Tabular {
            return Err(Error::Invalid("tabular potentials need a point id, not an embedding".into()));
        }
        check_len(self.dims[0], embed.len())?;
        Ok(self.eval_unchecked(0, embed))
    }

    pub(crate) fn eval_unchecked(&self, id: usize, embed: &[f64]) -> f64 {
        match self.form {
            ModelForm::Tabular => self.params[id],
            ModelForm::Linear => self.params.iter().zip(embed).map(|(w, x)| w * x).sum(),
            ModelForm::Mlp => self.forward(embed).pop().unwrap()[0],
        }
    }

    /// Layer activations, input first; the last entry is the scalar output.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.dims.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            off += fan_in * fan_out + fan_out;
            let prev = acts.last().unwrap();
            let mut out: Vec<f64> = (0..fan_out)
                .map(|o| b[o] + w[o * fan_in..(o + 1) * fan_in].iter().zip(prev).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if l + 1 < n_layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        acts
    }

    pub fn grad_params(&self, point: &SupportPoint) -> Result<Vec<f64>> {
        self.check_input(point)?;
        let mut g = vec![0.0; self.params.len()];
        self.accumulate_grad(point, 1.0, &mut g);
        Ok(g)
    }

    /// `out += coeff * d r_w(point) / d w`. Inputs are assumed validated.
    pub(crate) fn accumulate_grad(&self, point: &SupportPoint, coeff: f64, out: &mut [f64]) {
        match self.form {
            ModelForm::Tabular => out[point.id] += coeff,
            ModelForm::Linear => out.iter_mut().zip(&point.embed).for_each(|(o, x)| *o += coeff * x),
            ModelForm::Mlp => self.backprop(&point.embed, coeff, out),
        }
    }

    fn backprop(&self, x: &[f64], coeff: f64, out: &mut [f64]) {
        let acts = self.forward(x);
        let n_layers = self.dims.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.dims[l] * self.dims[l + 1] + self.dims[l + 1];
        }
        // delta = d output / d pre-activation of the current layer
        let mut delta = vec![coeff];
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let base = offsets[l];
            let input = &acts[l];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut out[base + o * fan_in..base + (o + 1) * fan_in];
                row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                out[base + fan_in * fan_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[base..base + fan_in * fan_out];
            delta = (0..fan_in)
                .map(|i| {
                    let back: f64 = (0..fan_out).map(|o| w[o * fan_in + i] * delta[o]).sum();
                    back * (1.0 - input[i] * input[i])
                })
                .collect();
        }
    }

    /// Read-only snapshot, unaffected by later training of `self`.
    pub fn clone_frozen(&self) -> FrozenReward {
        FrozenReward { model: Arc::new(self.clone()) }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: PotentialModel = serde_json::from_str(s)?;
        Self::from_parts(m.form, m.dims, m.params, m.seed)
    }
}

/// Shareable frozen evaluator of a potential.
#[derive(Debug, Clone)]
pub struct FrozenReward {
    model: Arc<PotentialModel>,
}

impl FrozenReward {
    pub fn eval(&self, point: &SupportPoint) -> Result<f64> {
        self.model.apply(point)
    }

    pub fn eval_embed(&self, embed: &[f64]) -> Result<f64> {
        self.model.apply_embed(embed)
    }

    /// Values over every state-action pair of `mdp` (flat `[s][a]`).
    pub fn table(&self, mdp: &TabularMdp) -> Result<Vec<f64>> {
        mdp_points(mdp).iter().map(|p| self.eval(p)).collect()
    }

    pub fn model(&self) -> &PotentialModel {
        &self.model
    }
}
