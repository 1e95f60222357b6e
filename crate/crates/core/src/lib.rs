//! Multi-grained text-molecule alignment and cross-modal retrieval.
//!
//! Molecules are parsed from SMILES, split into motifs, and lifted into a
//! three-level graph (atoms, motifs, one molecule node) that a GCN encodes.
//! Texts are encoded into a sentence vector and per-token vectors. Tokens are
//! matched to motifs with optimal transport, and three contrastive losses
//! align the two modalities at token-atom, multitoken-motif, and
//! sentence-molecule granularity. Retrieval ranks candidates by a weighted sum
//! of the three similarities.

pub mod chem;
pub mod encoders;
pub mod hetero;
pub mod loss;
pub mod model;
pub mod ot;
pub mod pipeline;
pub mod retrieval;
pub mod tensor;

pub use tensor::{Tape, Tensor, TensorError, Var};
