//! Text and molecule encoders projecting into one shared space.
//!
//! The text tower embeds tokens, adds position embeddings, and runs residual
//! mixing layers where each token sees its own vector next to the mean of all
//! tokens. The `[CLS]` row becomes the sentence vector. The molecule tower is
//! a 3-layer GCN over the heterogeneous graph whose rows split into atom,
//! motif and molecule representations.

mod exchange;
mod params;
mod vocab;

pub use exchange::{load_external_embeddings, read_embeddings, write_embeddings, TextBatchReps};
pub use params::{
    gcn_weight, init_params, mixer_bias, param_layout, mixer_weight, BoundParams, EncoderDims, Param, ParamGroup,
    ParamStore, ELEMENT_EMBEDDINGS, GCN_LAYERS, MOL_PROJ, POSITION_EMBEDDINGS, TEXT_PROJ,
    TOKEN_EMBEDDINGS,
};
pub use vocab::{split_words, tokenize_text, Vocab, CLS, PAD, UNK};

use thiserror::Error;

use crate::chem::{decompose, parse_smiles_with, MolGraph, MotifPartition, ParseOptions, SmilesError};
use crate::hetero::{build_hetero_graph, feature_aggregation, normalized_adjacency, GraphConfig, GraphError, HeteroGraph};
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("input error: {0}")]
    Input(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("embedding width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("malformed embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Text representations recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct TextVars {
    /// `1 x d`
    pub sentence: Var,
    /// `N_t x d`
    pub tokens: Var,
}

/// Molecule representations recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct MolVars {
    /// `1 x d`
    pub molecule: Var,
    /// `N_a x d`
    pub atoms: Var,
    /// `N_m x d`
    pub motifs: Var,
}

impl TextVars {
    pub fn values(&self, tape: &Tape) -> TextReps {
        TextReps {
            sentence: tape.value(self.sentence).clone(),
            tokens: tape.value(self.tokens).clone(),
        }
    }
}

impl MolVars {
    pub fn values(&self, tape: &Tape) -> MolReps {
        MolReps {
            molecule: tape.value(self.molecule).clone(),
            atoms: tape.value(self.atoms).clone(),
            motifs: tape.value(self.motifs).clone(),
        }
    }
}

/// Encoded text detached from any tape.
#[derive(Debug, Clone, PartialEq)]
pub struct TextReps {
    pub sentence: Tensor,
    pub tokens: Tensor,
}

/// Encoded molecule detached from any tape.
#[derive(Debug, Clone, PartialEq)]
pub struct MolReps {
    pub molecule: Tensor,
    pub atoms: Tensor,
    pub motifs: Tensor,
}

impl TextBatchReps {
    /// Splits into per-sample reps.
    pub fn samples(&self) -> Vec<TextReps> {
        let d = self.width();
        (0..self.len())
            .map(|i| TextReps {
                sentence: Tensor::new(vec![1, d], self.sentence.row(i).to_vec()).expect("row width"),
                tokens: self.tokens[i].clone(),
            })
            .collect()
    }
}

/// A molecule with its graph-side constants computed once.
#[derive(Debug, Clone)]
pub struct PreparedMolecule {
    pub graph: MolGraph,
    pub partition: MotifPartition,
    pub hetero: HeteroGraph,
    pub adjacency: Tensor,
    pub aggregation: Tensor,
}

impl PreparedMolecule {
    pub fn from_smiles(smiles: &str, parse: ParseOptions, graph_cfg: GraphConfig) -> Result<Self, EncoderError> {
        let graph = parse_smiles_with(smiles, parse)?;
        Self::from_graph(graph, graph_cfg)
    }

    pub fn from_graph(graph: MolGraph, graph_cfg: GraphConfig) -> Result<Self, EncoderError> {
        let partition = decompose(&graph);
        let hetero = build_hetero_graph(&graph, &partition, graph_cfg)?;
        let adjacency = normalized_adjacency(&hetero);
        let aggregation = feature_aggregation(&hetero);
        Ok(PreparedMolecule {
            graph,
            partition,
            hetero,
            adjacency,
            aggregation,
        })
    }
}

/// Encodes token ids (which must start with `[CLS]`).
pub fn encode_text(tape: &mut Tape, p: &BoundParams, ids: &[usize], cls_id: usize) -> Result<TextVars, EncoderError> {
    if ids.len() < 2 || ids[0] != cls_id {
        return Err(EncoderError::Contract(
            "token ids must be [CLS] followed by at least one token".into(),
        ));
    }
    let vocab_size = tape.value(p.token_embeddings).rows();
    if let Some(&bad) = ids.iter().find(|&&i| i >= vocab_size) {
        return Err(EncoderError::Contract(format!("token id {} outside vocabulary of {}", bad, vocab_size)));
    }
    let max_len = tape.value(p.position_embeddings).rows();
    if ids.len() > max_len {
        return Err(EncoderError::Contract(format!("{} tokens exceed max length {}", ids.len(), max_len)));
    }
    let n = ids.len();
    let positions: Vec<usize> = (0..n).collect();
    let tok = tape.gather_rows(p.token_embeddings, ids)?;
    let pos = tape.gather_rows(p.position_embeddings, &positions)?;
    let mut h = tape.add(tok, pos)?;
    let averager = tape.constant(Tensor::full(&[n, n], 1.0 / n as f64))?;
    for &(w, b) in &p.mixer {
        let mean = tape.matmul(averager, h)?;
        let cat = tape.concat_cols(h, mean)?;
        let z = tape.matmul(cat, w)?;
        let z = tape.add_row_broadcast(z, b)?;
        let z = tape.relu(z)?;
        h = tape.add(h, z)?;
    }
    let out = tape.matmul(h, p.text_proj)?;
    Ok(TextVars {
        sentence: tape.slice_rows(out, 0, 1)?,
        tokens: tape.slice_rows(out, 1, n)?,
    })
}

/// Runs the GCN over a prepared molecule and splits rows by node kind.
pub fn encode_molecule(tape: &mut Tape, p: &BoundParams, mol: &PreparedMolecule) -> Result<MolVars, EncoderError> {
    let h = &mol.hetero;
    let adj = tape.constant(mol.adjacency.clone())?;
    let agg = tape.constant(mol.aggregation.clone())?;
    let mut x = crate::hetero::initial_node_features(tape, h, agg, p.element_embeddings)?;
    for (l, &w) in p.gcn.iter().enumerate() {
        let ax = tape.matmul(adj, x)?;
        x = tape.matmul(ax, w)?;
        if l + 1 < p.gcn.len() {
            x = tape.relu(x)?;
        }
    }
    let out = tape.matmul(x, p.mol_proj)?;
    let atoms = tape.slice_rows(out, 0, h.n_atoms)?;
    let motifs = tape.slice_rows(out, h.n_atoms, h.n_atoms + h.n_motifs)?;
    let molecule = tape.slice_rows(out, h.n_atoms + h.n_motifs, h.n_nodes())?;
    Ok(MolVars { molecule, atoms, motifs })
}

/// Width of the GCN output before projection.
pub fn gcn_output_width(tape: &Tape, p: &BoundParams) -> usize {
    p.gcn.last().map_or(0, |&w| tape.value(w).cols())
}
