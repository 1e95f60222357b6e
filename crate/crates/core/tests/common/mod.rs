#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use orma_core::chem::{decompose, parse_smiles, validate_graph, MolGraph, MotifPartition};
use orma_core::hetero::{build_hetero_graph, normalized_adjacency, EdgeKind, GraphConfig, HeteroGraph};
use orma_core::pipeline::RunConfig;
use orma_core::Tensor;

/// Hand-picked molecules covering charges, brackets, fused and bridged
/// rings, and long chains.
pub const NAMED: [&str; 40] = [
    "C",
    "CCO",
    "CC(=O)O",
    "c1ccccc1",
    "c1ccccc1O",
    "CC(=O)Nc1ccc(O)cc1",
    "CC(=O)Oc1ccccc1C(=O)O",
    "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
    "c1ccc2ccccc2c1",
    "c1ccc2c(c1)ccc1ccccc12",
    "C1CC2CCC1C2",
    "C1CCC2(CC1)CCCC2",
    "OC(=O)CC(O)(CC(=O)O)C(=O)O",
    "NCC(=O)O",
    "N[C@@H](Cc1ccccc1)C(=O)O",
    "C[N+](C)(C)C",
    "[O-]C(=O)C",
    "[Na+].[Cl-]",
    "OCC(O)CO",
    "CCCCCCCCCCCCCCCC(=O)O",
    "c1ccncc1",
    "c1cc[nH]c1",
    "c1ccoc1",
    "c1ccsc1",
    "C1=CC=CC=C1C2=CC=CC=C2",
    "c1ccc(cc1)-c1ccccc1",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "COc1ccc2nc(S(=O)Cc3ncc(C)c(OC)c3C)[nH]c2c1",
    "O=C(O)c1ccccc1O",
    "CC12CCC3C(CCC4=CC(=O)CCC34C)C1CCC2O",
    "C1CCOC1",
    "C1COCCN1",
    "CS(=O)(=O)N",
    "FC(F)(F)c1ccccc1",
    "BrCCBr",
    "ClC(Cl)Cl",
    "C#CC",
    "N#Cc1ccccc1",
    "OP(=O)(O)OCC",
    "CC(C)(C)OC(=O)NCC(=O)O",
];

const UNITS: [&str; 16] = [
    "C", "C", "C", "N", "O", "S", "C(=O)", "C=C", "c1ccccc1", "C1CCCC1", "c1ccncc1", "C(F)(F)F", "Cl",
    "c1ccc2ccccc2c1", "C1CC2CCC1C2", "[NH3+]",
];

fn chain(rng: &mut impl Rng, depth: usize, len: usize, out: &mut String) {
    for i in 0..len {
        let unit = *UNITS.choose(rng).expect("units");
        out.push_str(unit);
        // Halogens end a chain.
        if unit == "Cl" {
            return;
        }
        if depth < 2 && i + 1 < len && rng.gen_bool(0.3) {
            out.push('(');
            let n = rng.gen_range(1..=3);
            chain(rng, depth + 1, n, out);
            out.push(')');
        }
    }
}

/// A random valid SMILES string built from a fixed vocabulary of units.
pub fn random_smiles(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::new();
    let n = rng.gen_range(1..=7);
    chain(&mut rng, 0, n, &mut s);
    s
}

/// The named molecules (fragment salts dropped) padded with random ones.
pub fn corpus(n: usize) -> Vec<String> {
    let mut out: Vec<String> = NAMED.iter().filter(|s| !s.contains('.')).map(|s| s.to_string()).collect();
    let mut seed = 0;
    while out.len() < n {
        out.push(random_smiles(seed));
        seed += 1;
    }
    out.truncate(n);
    out
}

pub fn symmetry_gap(a: &Tensor) -> f64 {
    let n = a.rows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a.get(i, j) - a.get(j, i)).abs());
        }
    }
    worst
}

/// Checks the partition and graph invariants for one molecule.
pub fn check_structure(smiles: &str) -> Result<(MolGraph, MotifPartition, HeteroGraph), String> {
    let g = parse_smiles(smiles).map_err(|e| format!("{}: {}", smiles, e))?;
    let report = validate_graph(&g);
    if !report.passed() {
        return Err(format!("{}: graph issues {:?}", smiles, report.issues));
    }
    let p = decompose(&g);
    let n = g.n_atoms();
    let mut count = vec![0usize; n];
    for (mi, m) in p.motifs.iter().enumerate() {
        if m.is_empty() {
            return Err(format!("{}: motif {} empty", smiles, mi));
        }
        for &a in m {
            count[a] += 1;
            if p.motif_of[a] != mi {
                return Err(format!("{}: motif_of[{}] disagrees", smiles, a));
            }
        }
        if !g.induced_subgraph(m).is_connected() {
            return Err(format!("{}: motif {} is disconnected", smiles, mi));
        }
    }
    if count.iter().any(|&c| c != 1) {
        return Err(format!("{}: not an exact cover {:?}", smiles, count));
    }
    for ring in &g.rings {
        if ring.iter().any(|&a| p.motif_of[a] != p.motif_of[ring[0]]) {
            return Err(format!("{}: ring {:?} split", smiles, ring));
        }
    }
    for b in g.bonds.iter().filter(|b| b.in_ring) {
        if p.motif_of[b.a] != p.motif_of[b.b] {
            return Err(format!("{}: ring bond {}-{} cut", smiles, b.a, b.b));
        }
    }

    let mut h = None;
    for bond_edges in [false, true] {
        let hg = build_hetero_graph(&g, &p, GraphConfig { bond_edges }).map_err(|e| e.to_string())?;
        if hg.n_nodes() != n + p.len() + 1 {
            return Err(format!("{}: {} nodes", smiles, hg.n_nodes()));
        }
        let expect_aa = if bond_edges { g.bonds.len() } else { 0 };
        if hg.count_edges(EdgeKind::MotifAtom) != n
            || hg.count_edges(EdgeKind::MoleculeMotif) != p.len()
            || hg.count_edges(EdgeKind::AtomAtom) != expect_aa
        {
            return Err(format!("{}: wrong edge counts", smiles));
        }
        for e in &hg.edges {
            let ok = match e.kind {
                EdgeKind::MotifAtom => e.b < n && e.a == hg.motif_node(p.motif_of[e.b]),
                EdgeKind::MoleculeMotif => e.a == hg.molecule_node() && e.b >= n && e.b < n + p.len(),
                EdgeKind::AtomAtom => g.bond_between(e.a, e.b).is_some(),
            };
            if !ok {
                return Err(format!("{}: bad edge {:?}", smiles, e));
            }
        }
        let gap = symmetry_gap(&normalized_adjacency(&hg));
        if gap > 1e-12 {
            return Err(format!("{}: adjacency asymmetric by {}", smiles, gap));
        }
        if !bond_edges {
            h = Some(hg);
        }
    }
    Ok((g, p, h.expect("built")))
}

/// Training settings for the planted-pair experiments. Default
/// architecture; a lower temperature and larger steps than the defaults.
pub fn planted_config(seed: u64) -> RunConfig {
    RunConfig {
        temperature: 0.1,
        lr_text: 1e-3,
        lr_rest: 1e-3,
        seed,
        ..RunConfig::default()
    }
}
