//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{ReportRecord, EOS, UNK};
use crate::model::{Bound, Model, ModelConfig};
use crate::nn::Bindings;
use crate::tape::{Tape, Var};
use crate::tensor::{Result, Tensor, TensorError};

#[derive(Debug, Clone)]
pub struct FdOptions {
    pub epsilon: f64,
    /// Check at most this many coordinates per parameter tensor (sampled
    /// without replacement); `None` checks every coordinate.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions {
            epsilon: 1e-5,
            max_coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// Worst relative error per parameter tensor, in input order.
    pub per_param: Vec<f64>,
    /// `(param index, coordinate, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub coords_checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Objective terms at `params` (the objective itself when no terms are given).
fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<(Var, Vec<Var>)>,
{
    let mut tape = Tape::inference();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let (out, terms) = f(&mut tape, &vars)?;
    if terms.is_empty() {
        return Ok(vec![tape.scalar_value(out)?]);
    }
    terms.iter().map(|&t| tape.scalar_value(t)).collect()
}

/// Compare the tape gradient of the scalar function `f` at `params` with
/// central differences, returning the maximum relative error.
///
/// `f` receives a fresh tape with one leaf per parameter and must return a
/// scalar node.
pub fn finite_difference_check<F>(f: F, params: &[Tensor], opts: &FdOptions) -> Result<FdReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    finite_difference_check_terms(|t, v| Ok((f(t, v)?, Vec::new())), params, opts)
}

/// Like [`finite_difference_check`], for an objective that is a sum of
/// scalar terms. `f` returns the objective node and its terms; when terms
/// are given, the central difference is taken term by term and summed,
/// which keeps the rounding of a large total out of small derivatives.
pub fn finite_difference_check_terms<F>(f: F, params: &[Tensor], opts: &FdOptions) -> Result<FdReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<(Var, Vec<Var>)>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let (out, _) = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| {
            grads
                .get(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.shape()))
        })
        .collect();
    drop(tape);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = FdReport {
        max_rel_error: 0.0,
        per_param: vec![0.0; params.len()],
        worst: None,
        coords_checked: 0,
    };
    for pi in 0..params.len() {
        let n = params[pi].len();
        let coords: Vec<usize> = match opts.max_coords_per_param {
            Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for c in coords {
            let orig = params[pi].data()[c];
            work[pi].data_mut()[c] = orig + opts.epsilon;
            let up = evaluate(&f, &work)?;
            work[pi].data_mut()[c] = orig - opts.epsilon;
            let down = evaluate(&f, &work)?;
            work[pi].data_mut()[c] = orig;
            let diff: f64 = up.iter().zip(&down).map(|(u, d)| u - d).sum();
            let numeric = diff / (2.0 * opts.epsilon);
            let a = analytic[pi].data()[c];
            let err = relative_error(a, numeric);
            report.coords_checked += 1;
            if err > report.per_param[pi] {
                report.per_param[pi] = err;
            }
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((pi, c, a, numeric));
            }
        }
    }
    Ok(report)
}

/// Checks the gradient of `model`'s total loss on `batch` against term-wise
/// central differences.
pub fn check_model_gradients(model: &Model, batch: &[ReportRecord], opts: &FdOptions) -> Result<FdReport> {
    let f = |tape: &mut Tape, vars: &[Var]| {
        let b = Bindings::from_vars(&model.params, vars.to_vec())?;
        let bound = Bound::new(&model.config, b, tape)?;
        let (losses, terms) = bound.compute_losses_with_terms(tape, batch)?;
        Ok((losses.total, terms))
    };
    finite_difference_check_terms(f, model.params.tensors(), opts)
}

/// The reference gradient-check problem: the tiny model (vocabulary 12,
/// 3 tags) with every parameter drawn from U(-0.8, 0.8), and two random
/// records of two and three sentences with mixed abnormality flags.
///
/// The wide draw keeps most derivatives well above the rounding floor of a
/// central difference, which the small default initialization does not.
pub fn probe_problem(seed: u64) -> Result<(Model, Vec<ReportRecord>)> {
    let cfg = ModelConfig::tiny(12, 3);
    let mut model = Model::new(cfg.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    for t in model.params.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
    let flags: [&[bool]; 2] = [&[true, false], &[false, true, false]];
    let batch = flags
        .iter()
        .enumerate()
        .map(|(i, f)| random_record(&cfg, &format!("r{i}"), f, &mut rng))
        .collect::<Result<_>>()?;
    Ok((model, batch))
}

/// A record with random features, one sentence of 1..=3 ordinary tokens per
/// flag, and random tags.
pub fn random_record(cfg: &ModelConfig, id: &str, flags: &[bool], rng: &mut impl Rng) -> Result<ReportRecord> {
    let features = Tensor::new(
        &[cfg.locations, cfg.feature_channels],
        (0..cfg.locations * cfg.feature_channels)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )?;
    let sentences = flags
        .iter()
        .map(|_| {
            let n = rng.random_range(1..=3);
            let mut s: Vec<usize> = (0..n).map(|_| rng.random_range(UNK + 1..cfg.vocab_size)).collect();
            s.push(EOS);
            s
        })
        .collect();
    let mti = (0..cfg.mti_labels).map(|_| f64::from(rng.random_range(0..2u8))).collect();
    ReportRecord::new(id, features, sentences, flags.to_vec(), mti).map_err(|e| TensorError::Contract(e.to_string()))
}
