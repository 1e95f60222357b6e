//! A trained or freshly initialized model: config, vocabulary, parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::encoders::{
    encode_molecule, encode_text, init_params, tokenize_text, BoundParams, EncoderError, MolReps, ParamStore,
    PreparedMolecule, TextReps, Vocab,
};
use crate::pipeline::{Record, RunConfig};
use crate::retrieval::EncodedCorpus;
use crate::tensor::Tape;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: RunConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
}

/// A record with its molecule prepared and its text tokenized.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub token_ids: Vec<usize>,
    pub molecule: PreparedMolecule,
}

impl Model {
    /// Random parameters drawn from `config.seed`.
    pub fn init(config: RunConfig, vocab: Vocab) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = init_params(&config.encoder_dims(vocab.len()), &mut rng);
        Model { config, vocab, params }
    }

    pub fn prepare(&self, record: &Record) -> Result<Example, EncoderError> {
        Ok(Example {
            id: record.id.clone(),
            token_ids: tokenize_text(&record.description, &self.vocab, self.config.max_text_len)?,
            molecule: PreparedMolecule::from_graph(record.graph.clone(), self.config.graph_config())?,
        })
    }

    pub fn prepare_all(&self, records: &[Record]) -> Result<Vec<Example>, EncoderError> {
        records.par_iter().map(|r| self.prepare(r)).collect()
    }

    pub fn encode_text_ids(&self, ids: &[usize]) -> Result<TextReps, EncoderError> {
        let mut tape = Tape::new();
        let p = BoundParams::bind(&mut tape, &self.params, false)?;
        let v = encode_text(&mut tape, &p, ids, self.vocab.cls_id())?;
        Ok(v.values(&tape))
    }

    pub fn encode_text(&self, text: &str) -> Result<TextReps, EncoderError> {
        let ids = tokenize_text(text, &self.vocab, self.config.max_text_len)?;
        self.encode_text_ids(&ids)
    }

    pub fn encode_molecule(&self, mol: &PreparedMolecule) -> Result<MolReps, EncoderError> {
        let mut tape = Tape::new();
        let p = BoundParams::bind(&mut tape, &self.params, false)?;
        let v = encode_molecule(&mut tape, &p, mol)?;
        Ok(v.values(&tape))
    }

    /// Encodes every example once; texts and molecules in parallel.
    pub fn encode_corpus(&self, examples: &[Example]) -> Result<EncodedCorpus, EncoderError> {
        let pairs = examples
            .par_iter()
            .map(|e| Ok((self.encode_text_ids(&e.token_ids)?, self.encode_molecule(&e.molecule)?)))
            .collect::<Result<Vec<_>, EncoderError>>()?;
        let (texts, mols) = pairs.into_iter().unzip();
        Ok(EncodedCorpus {
            ids: examples.iter().map(|e| e.id.clone()).collect(),
            texts,
            mols,
        })
    }
}
