//! Shared inputs for the benchmarks.

use orma_core::encoders::{PreparedMolecule, Vocab};
use orma_core::model::Model;
use orma_core::pipeline::RunConfig;
use orma_core::Tensor;

pub const MOLECULES: [&str; 4] = [
    "CCO",
    "CC(=O)Nc1ccc(O)cc1",
    "COc1ccc2nc(S(=O)Cc3ncc(C)c(OC)c3C)[nH]c2c1",
    "CC12CCC3C(CCC4=CC(=O)CCC34C)C1CCC2O",
];

pub const TEXT: &str = "the molecule is an aromatic amide bearing a hydroxyl group and a methyl ketone";

/// A deterministic `rows x cols` matrix with entries in `[0, 2)`.
pub fn cost(rows: usize, cols: usize) -> Tensor {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let data = (0..rows * cols)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0
        })
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches")
}

/// A default-width model with a vocabulary built from [`TEXT`].
pub fn model() -> Model {
    Model::init(RunConfig::default(), Vocab::build([TEXT], 1))
}

pub fn prepared(smiles: &str) -> PreparedMolecule {
    let cfg = RunConfig::default();
    PreparedMolecule::from_smiles(smiles, cfg.parse_options(), cfg.graph_config()).expect("valid SMILES")
}
