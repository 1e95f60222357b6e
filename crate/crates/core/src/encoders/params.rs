use rand::Rng;

use crate::chem::elements;
use crate::tensor::{self, Tape, Tensor, Var};

/// Optimizer group; the text encoder trains with its own learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Text,
    Rest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub group: ParamGroup,
}

/// Named parameters in a fixed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn push(&mut self, name: impl Into<String>, value: Tensor, group: ParamGroup) {
        self.params.push(Param {
            name: name.into(),
            value,
            group,
        });
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }
}

/// Widths of both towers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderDims {
    pub vocab_size: usize,
    pub text_width: usize,
    pub max_text_len: usize,
    pub mixer_layers: usize,
    pub f0: usize,
    pub gcn_width: usize,
    /// Shared alignment width.
    pub d: usize,
}

pub const GCN_LAYERS: usize = 3;

pub const TOKEN_EMBEDDINGS: &str = "text.token_embeddings";
pub const POSITION_EMBEDDINGS: &str = "text.position_embeddings";
pub const TEXT_PROJ: &str = "text.proj";
pub const ELEMENT_EMBEDDINGS: &str = "mol.element_embeddings";
pub const MOL_PROJ: &str = "mol.proj";

pub fn mixer_weight(l: usize) -> String {
    format!("text.mixer.{}.weight", l)
}

pub fn mixer_bias(l: usize) -> String {
    format!("text.mixer.{}.bias", l)
}

pub fn gcn_weight(l: usize) -> String {
    format!("mol.gcn.{}.weight", l)
}

fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-bound..bound)).collect()).unwrap()
}

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, &[fan_in, fan_out], bound)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Uniform(f64),
    Glorot,
    Zeros,
}

/// Name, shape and group of every parameter, in store order.
pub fn param_layout(dims: &EncoderDims) -> Vec<(String, Vec<usize>, ParamGroup)> {
    layout(dims).into_iter().map(|(n, s, g, _)| (n, s, g)).collect()
}

fn layout(dims: &EncoderDims) -> Vec<(String, Vec<usize>, ParamGroup, Init)> {
    use ParamGroup::{Rest, Text};
    let e = dims.text_width;
    let mut v = vec![
        (TOKEN_EMBEDDINGS.to_string(), vec![dims.vocab_size, e], Text, Init::Uniform(1.0)),
        (POSITION_EMBEDDINGS.to_string(), vec![dims.max_text_len, e], Text, Init::Uniform(0.1)),
    ];
    for l in 0..dims.mixer_layers {
        v.push((mixer_weight(l), vec![2 * e, e], Text, Init::Glorot));
        v.push((mixer_bias(l), vec![e], Text, Init::Zeros));
    }
    // The projection head sits outside the text encoder proper.
    v.push((TEXT_PROJ.to_string(), vec![e, dims.d], Rest, Init::Glorot));
    v.push((ELEMENT_EMBEDDINGS.to_string(), vec![elements::embedding_rows(), dims.f0], Rest, Init::Uniform(1.0)));
    let mut fan_in = dims.f0;
    for l in 0..GCN_LAYERS {
        v.push((gcn_weight(l), vec![fan_in, dims.gcn_width], Rest, Init::Glorot));
        fan_in = dims.gcn_width;
    }
    v.push((MOL_PROJ.to_string(), vec![dims.gcn_width, dims.d], Rest, Init::Glorot));
    v
}

/// Fresh parameters for both towers. Embedding tables and the projections
/// are randomly initialized; mixer biases start at zero.
pub fn init_params(dims: &EncoderDims, rng: &mut impl Rng) -> ParamStore {
    let mut s = ParamStore::default();
    for (name, shape, group, init) in layout(dims) {
        let value = match init {
            Init::Uniform(b) => uniform(rng, &shape, b),
            Init::Glorot => glorot(rng, shape[0], shape[1]),
            Init::Zeros => Tensor::zeros(&shape),
        };
        s.push(name, value, group);
    }
    s
}

/// Parameters recorded on a tape, with direct handles for the encoders.
#[derive(Debug, Clone)]
pub struct BoundParams {
    /// One var per store entry, in store order.
    pub vars: Vec<Var>,
    pub token_embeddings: Var,
    pub position_embeddings: Var,
    pub mixer: Vec<(Var, Var)>,
    pub text_proj: Var,
    pub element_embeddings: Var,
    pub gcn: Vec<Var>,
    pub mol_proj: Var,
}

impl BoundParams {
    /// Records every parameter as a leaf; `trainable` decides whether they
    /// collect gradients.
    pub fn bind(tape: &mut Tape, store: &ParamStore, trainable: bool) -> tensor::Result<Self> {
        let mut vars = Vec::with_capacity(store.len());
        for p in store.iter() {
            vars.push(tape.leaf(p.value.clone(), trainable)?);
        }
        Self::from_vars(store, vars)
    }

    /// Binds vars already on a tape, one per store entry in store order.
    pub fn from_vars(store: &ParamStore, vars: Vec<Var>) -> tensor::Result<Self> {
        if vars.len() != store.len() {
            return Err(tensor::TensorError::Contract(format!(
                "{} vars for {} parameters",
                vars.len(),
                store.len()
            )));
        }
        let find = |name: &str| -> tensor::Result<Var> {
            store
                .position(name)
                .map(|i| vars[i])
                .ok_or_else(|| tensor::TensorError::Contract(format!("missing parameter '{}'", name)))
        };
        let mut mixer = Vec::new();
        let mut l = 0;
        while store.position(&mixer_weight(l)).is_some() {
            mixer.push((find(&mixer_weight(l))?, find(&mixer_bias(l))?));
            l += 1;
        }
        let gcn = (0..GCN_LAYERS).map(|l| find(&gcn_weight(l))).collect::<tensor::Result<_>>()?;
        Ok(BoundParams {
            token_embeddings: find(TOKEN_EMBEDDINGS)?,
            position_embeddings: find(POSITION_EMBEDDINGS)?,
            mixer,
            text_proj: find(TEXT_PROJ)?,
            element_embeddings: find(ELEMENT_EMBEDDINGS)?,
            gcn,
            mol_proj: find(MOL_PROJ)?,
            vars,
        })
    }
}
