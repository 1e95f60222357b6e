use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PipelineError, Record};
use crate::chem::{decompose, motif_signature, parse_smiles};

/// Substituents and the word that names each one in a description.
pub const FRAGMENTS: [(&str, &str); 12] = [
    ("O", "hydroxyl"),
    ("N", "amino"),
    ("S", "thiol"),
    ("Cl", "chloro"),
    ("F", "fluoro"),
    ("Br", "bromo"),
    ("I", "iodo"),
    ("c1ccccc1", "phenyl"),
    ("C(=O)O", "carboxyl"),
    ("C#N", "nitrile"),
    ("P(=O)(O)O", "phosphono"),
    ("c1ccncc1", "pyridyl"),
];

const PER_MOLECULE: usize = 3;

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    go(0, n, k, &mut cur, &mut out);
    out
}

/// `n` text-molecule pairs with a planted correspondence: each molecule
/// carries three substituents on a carbon chain, and its description names
/// exactly those substituents. Molecules have pairwise distinct multisets of
/// motif signatures.
pub fn planted_pairs(n: usize, seed: u64) -> Result<Vec<Record>, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut combos = combinations(FRAGMENTS.len(), PER_MOLECULE);
    combos.shuffle(&mut rng);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    for combo in combos {
        if out.len() == n {
            break;
        }
        let mut smiles = String::from("C");
        for &f in &combo {
            smiles.push_str(&format!("C({})C", FRAGMENTS[f].0));
        }
        let graph = parse_smiles(&smiles).map_err(|e| PipelineError::Input(format!("generator produced '{}': {}", smiles, e)))?;
        let p = decompose(&graph);
        let mut sigs: Vec<String> = p.motifs.iter().map(|m| motif_signature(&graph, m)).collect();
        sigs.sort();
        if !seen.insert(sigs) {
            continue;
        }
        let mut words: Vec<&str> = combo.iter().map(|&f| FRAGMENTS[f].1).collect();
        words.shuffle(&mut rng);
        let description = format!(
            "a compound bearing {} , {} and {} groups on a carbon chain .",
            words[0], words[1], words[2]
        );
        out.push(Record {
            id: format!("syn-{:03}", out.len()),
            smiles,
            description,
            graph,
        });
    }
    if out.len() < n {
        return Err(PipelineError::Input(format!(
            "only {} distinct planted pairs are available, {} requested",
            out.len(),
            n
        )));
    }
    Ok(out)
}
