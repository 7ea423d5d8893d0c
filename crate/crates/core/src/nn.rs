//! Named parameter storage and the recurrent building blocks: linear
//! layers, embeddings, an LSTM cell and additive soft attention.

use std::collections::HashMap;

use rand::Rng;

use crate::tape::{Tape, Var};
use crate::tensor::{Result, Tensor, TensorError};

/// Half-width of the uniform initialization interval.
pub const INIT_SCALE: f64 = 0.08;
/// Initial value of the LSTM forget-gate bias slice.
pub const FORGET_BIAS: f64 = 1.0;

/// Ordered collection of uniquely named parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::Contract(format!(
                "parameter {name:?} registered twice"
            )));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Record every parameter as a leaf on `tape`.
    pub fn bind<'a>(&'a self, tape: &mut Tape) -> Bindings<'a> {
        let vars = self.tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        Bindings { store: self, vars }
    }
}

/// Tape variables for a [`ParamStore`], looked up by name.
#[derive(Debug, Clone)]
pub struct Bindings<'a> {
    store: &'a ParamStore,
    vars: Vec<Var>,
}

impl<'a> Bindings<'a> {
    /// Pair externally created leaves with the store's names (same order).
    pub fn from_vars(store: &'a ParamStore, vars: Vec<Var>) -> Result<Self> {
        if vars.len() != store.len() {
            return Err(TensorError::Contract(format!(
                "{} variables for {} parameters",
                vars.len(),
                store.len()
            )));
        }
        Ok(Bindings { store, vars })
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.store
            .position(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| TensorError::Contract(format!("unknown parameter {name:?}")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn names(&self) -> &[String] {
        self.store.names()
    }
}

pub fn uniform(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
    Tensor::new(shape, data).expect("uniform: invalid shape")
}

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: Var,
    pub bias: Option<Var>,
}

impl Linear {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<()> {
        store.insert(
            format!("{prefix}.weight"),
            uniform(&[output, input], INIT_SCALE, rng),
        )?;
        if bias {
            store.insert(format!("{prefix}.bias"), uniform(&[output], INIT_SCALE, rng))?;
        }
        Ok(())
    }

    pub fn bind(b: &Bindings<'_>, prefix: &str) -> Result<Self> {
        let weight = b.get(&format!("{prefix}.weight"))?;
        let bias = b.get(&format!("{prefix}.bias")).ok();
        Ok(Linear { weight, bias })
    }

    /// Applies the layer to a vector `[in]`, or row-wise to a matrix `[n×in]`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let y = if tape.value(x).rank() == 1 {
            tape.matmul(self.weight, x)?
        } else {
            let wt = tape.transpose(self.weight)?;
            tape.matmul(x, wt)?
        };
        match self.bias {
            Some(b) => tape.add_row(y, b),
            None => Ok(y),
        }
    }
}

/// Standard LSTM cell with gate order (input, forget, cell, output).
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
    pub hidden: usize,
}

impl LstmCell {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<()> {
        store.insert(
            format!("{prefix}.w_ih"),
            uniform(&[4 * hidden, input], INIT_SCALE, rng),
        )?;
        store.insert(
            format!("{prefix}.w_hh"),
            uniform(&[4 * hidden, hidden], INIT_SCALE, rng),
        )?;
        let mut bias = uniform(&[4 * hidden], INIT_SCALE, rng);
        bias.data_mut()[hidden..2 * hidden].fill(FORGET_BIAS);
        store.insert(format!("{prefix}.bias"), bias)
    }

    pub fn bind(b: &Bindings<'_>, prefix: &str, tape: &Tape) -> Result<Self> {
        let bias = b.get(&format!("{prefix}.bias"))?;
        let hidden = tape.value(bias).len() / 4;
        Ok(LstmCell {
            w_ih: b.get(&format!("{prefix}.w_ih"))?,
            w_hh: b.get(&format!("{prefix}.w_hh"))?,
            bias,
            hidden,
        })
    }

    /// One recurrence step, returning `(h', c')`.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hs = self.hidden;
        if tape.value(h).shape() != [hs] || tape.value(c).shape() != [hs] {
            return Err(TensorError::Shape {
                op: "lstm_step",
                left: vec![hs],
                right: tape.value(h).shape().to_vec(),
            });
        }
        let xi = tape.matmul(self.w_ih, x)?;
        let hh = tape.matmul(self.w_hh, h)?;
        let pre = tape.add(xi, hh)?;
        let gates = tape.add(pre, self.bias)?;
        let i = tape.slice(gates, 0, hs)?;
        let f = tape.slice(gates, hs, hs)?;
        let g = tape.slice(gates, 2 * hs, hs)?;
        let o = tape.slice(gates, 3 * hs, hs)?;
        let i = tape.sigmoid(i);
        let f = tape.sigmoid(f);
        let g = tape.tanh(g);
        let o = tape.sigmoid(o);
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        let c_next = tape.add(keep, write)?;
        let squashed = tape.tanh(c_next);
        let h_next = tape.mul(o, squashed)?;
        Ok((h_next, c_next))
    }
}

/// Word embedding matrix `[V×E]`; row `i` embeds token `i`.
#[derive(Debug, Clone, Copy)]
pub struct Embedding {
    pub table: Var,
}

impl Embedding {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        vocab: usize,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Result<()> {
        store.insert(name, uniform(&[vocab, dim], INIT_SCALE, rng))
    }

    pub fn bind(b: &Bindings<'_>, name: &str) -> Result<Self> {
        Ok(Embedding { table: b.get(name)? })
    }

    /// `[T×E]` embedding of a token sequence.
    pub fn embed(&self, tape: &mut Tape, ids: &[usize]) -> Result<Var> {
        tape.gather_rows(self.table, ids)
    }

    pub fn embed_one(&self, tape: &mut Tape, id: usize) -> Result<Var> {
        tape.row(self.table, id)
    }
}

/// Additive soft attention over spatial locations:
/// `e_l = score · tanh(W_v v_l + W_h h)`, `α = softmax(e)`, `ctx = Σ α_l v_l`.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub loc_proj: Var,
    pub state_proj: Var,
    pub score: Var,
}

impl Attention {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        feature_dim: usize,
        hidden: usize,
        attn_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<()> {
        store.insert(
            format!("{prefix}.loc_proj"),
            uniform(&[attn_dim, feature_dim], INIT_SCALE, rng),
        )?;
        store.insert(
            format!("{prefix}.state_proj"),
            uniform(&[attn_dim, hidden], INIT_SCALE, rng),
        )?;
        store.insert(
            format!("{prefix}.score"),
            uniform(&[attn_dim], INIT_SCALE, rng),
        )
    }

    pub fn bind(b: &Bindings<'_>, prefix: &str) -> Result<Self> {
        Ok(Attention {
            loc_proj: b.get(&format!("{prefix}.loc_proj"))?,
            state_proj: b.get(&format!("{prefix}.state_proj"))?,
            score: b.get(&format!("{prefix}.score"))?,
        })
    }

    /// `W_v v_l` for every location, `[L×A]`. Independent of the recurrent
    /// state, so it is computed once per image.
    pub fn project_locations(&self, tape: &mut Tape, features: Var) -> Result<Var> {
        let (l, _) = tape.value(features).dims2()?;
        if l == 0 {
            return Err(TensorError::Contract("attention over zero locations".into()));
        }
        let wt = tape.transpose(self.loc_proj)?;
        tape.matmul(features, wt)
    }

    /// Returns `(context [D], weights [L])`.
    pub fn attend(
        &self,
        tape: &mut Tape,
        features: Var,
        projected: Var,
        h_prev: Var,
    ) -> Result<(Var, Var)> {
        let s = tape.matmul(self.state_proj, h_prev)?;
        let pre = tape.add_row(projected, s)?;
        let act = tape.tanh(pre);
        let scores = tape.matmul(act, self.score)?;
        let weights = tape.softmax(scores);
        let context = tape.matmul(weights, features)?;
        Ok((context, weights))
    }

    pub fn soft_attention(&self, tape: &mut Tape, features: Var, h_prev: Var) -> Result<(Var, Var)> {
        let projected = self.project_locations(tape, features)?;
        self.attend(tape, features, projected, h_prev)
    }
}
