//! Molecular graphs: SMILES parsing and motif decomposition.

pub mod elements;
mod molgraph;
pub mod motif;
pub mod smiles;

pub use molgraph::{Atom, Bond, BondOrder, MolGraph};
pub use motif::{cleavable_bonds, decompose, motif_signature, CleavageRule, MotifPartition};
pub use smiles::{
    parse_smiles, parse_smiles_with, tokenize_smiles, validate_graph, ParseOptions, SmilesError,
    ValidationReport,
};
