//! Adam with bias correction and global-norm gradient clipping.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::nn::ParamStore;
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Gradients keyed by parameter name.
pub type NamedGrads = BTreeMap<String, Tensor>;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("no gradient for parameter {0}")]
    MissingGradient(String),
    #[error("gradient for unknown parameter {0}")]
    UnexpectedGradient(String),
    #[error("{name}: expected shape {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

/// First and second moments per parameter, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub names: Vec<String>,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            names: params.names().to_vec(),
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// Checks that the moments line up with `params` by name and shape.
    pub fn check(&self, params: &ParamStore) -> Result<(), OptimError> {
        for (name, t) in params.iter() {
            let i = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| OptimError::MissingGradient(format!("adam/{name}")))?;
            for moment in [&self.m[i], &self.v[i]] {
                if moment.shape() != t.shape() {
                    return Err(OptimError::Shape {
                        name: name.to_string(),
                        expected: t.shape().to_vec(),
                        found: moment.shape().to_vec(),
                    });
                }
            }
        }
        match self.names.iter().find(|n| params.get(n).is_none()) {
            Some(extra) => Err(OptimError::UnexpectedGradient(format!("adam/{extra}"))),
            None => Ok(()),
        }
    }
}

fn check_keys(params: &ParamStore, grads: &NamedGrads) -> Result<(), OptimError> {
    for (name, t) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| OptimError::MissingGradient(name.to_string()))?;
        if g.shape() != t.shape() {
            return Err(OptimError::Shape {
                name: name.to_string(),
                expected: t.shape().to_vec(),
                found: g.shape().to_vec(),
            });
        }
    }
    match grads.keys().find(|k| params.get(k).is_none()) {
        Some(extra) => Err(OptimError::UnexpectedGradient(extra.clone())),
        None => Ok(()),
    }
}

/// Euclidean norm over every gradient value, accumulated in parameter order.
pub fn global_norm(params: &ParamStore, grads: &NamedGrads) -> f64 {
    params
        .names()
        .iter()
        .filter_map(|n| grads.get(n))
        .map(Tensor::squared_norm)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(params: &ParamStore, grads: &mut NamedGrads, max_norm: f64) -> f64 {
    let norm = global_norm(params, grads);
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// One Adam update with bias correction; no weight decay.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &NamedGrads,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<(), OptimError> {
    check_keys(params, grads)?;
    state.check(params)?;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let names = params.names().to_vec();
    for (name, p) in names.iter().zip(params.tensors_mut()) {
        let i = state.names.iter().position(|n| n == name).expect("checked above");
        let g = grads[name].data();
        let m = state.m[i].data_mut();
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
        }
        let v = state.v[i].data_mut();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
        }
        let (m, v) = (state.m[i].data(), state.v[i].data());
        for ((pi, mi), vi) in p.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mi / c1;
            let v_hat = vi / c2;
            *pi -= learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}
