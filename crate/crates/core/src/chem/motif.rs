//! Rule-based motif decomposition.
//!
//! A simplified BRICS-style scheme: only acyclic, non-aromatic single bonds
//! can be cleaved, and one of four rules must match. All matching bonds are
//! removed at once; the connected components that remain are the motifs.

use std::collections::BTreeMap;
use std::fmt;

use super::molgraph::{BondOrder, MolGraph};

/// The shipped cleavage rules, in the order they are tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CleavageRule {
    /// Ring atom to non-ring atom.
    RingToChain,
    /// Carbonyl carbon to a neighboring N, O or S.
    CarbonylHetero,
    /// N, O or S to a non-ring carbon.
    HeteroToChainCarbon,
    /// Any remaining bond whose removal leaves ring atoms on both sides.
    RingSystemLinker,
}

impl CleavageRule {
    pub const ALL: [CleavageRule; 4] = [
        CleavageRule::RingToChain,
        CleavageRule::CarbonylHetero,
        CleavageRule::HeteroToChainCarbon,
        CleavageRule::RingSystemLinker,
    ];

    pub fn code(self) -> &'static str {
        match self {
            CleavageRule::RingToChain => "R1",
            CleavageRule::CarbonylHetero => "R2",
            CleavageRule::HeteroToChainCarbon => "R3",
            CleavageRule::RingSystemLinker => "R4",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            CleavageRule::RingToChain => "bond between a ring atom and a non-ring atom",
            CleavageRule::CarbonylHetero => {
                "bond between a carbonyl carbon (C=O) and a neighboring heteroatom N/O/S"
            }
            CleavageRule::HeteroToChainCarbon => "bond between a heteroatom N/O/S and a non-ring carbon",
            CleavageRule::RingSystemLinker => {
                "remaining acyclic single bond whose removal separates two ring systems"
            }
        }
    }
}

impl fmt::Display for CleavageRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Human-readable rule table, one rule per line.
pub fn rule_table() -> String {
    let mut out = String::from("Candidate bonds: acyclic single bonds between non-aromatic bond partners.\n");
    for r in CleavageRule::ALL {
        out.push_str(&format!("{}  {}\n", r.code(), r.description()));
    }
    out
}

/// An exact partition of a molecule's atoms into connected motifs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotifPartition {
    /// Atom indices per motif, ascending; motifs ordered by lowest atom.
    pub motifs: Vec<Vec<usize>>,
    /// Motif index of every atom.
    pub motif_of: Vec<usize>,
    /// Bonds removed to form the partition, ascending.
    pub cleaved_bonds: Vec<usize>,
}

impl MotifPartition {
    pub fn len(&self) -> usize {
        self.motifs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motifs.is_empty()
    }
}

fn is_hetero(element: &str) -> bool {
    matches!(element, "N" | "O" | "S")
}

/// Bonds that the rule table allows cutting, with the first rule that fires.
pub fn classify_bonds(g: &MolGraph) -> Vec<(usize, CleavageRule)> {
    let adj = g.adjacency();
    let carbonyl: Vec<bool> = g
        .atoms
        .iter()
        .map(|a| {
            a.element == "C"
                && adj[a.index].iter().any(|&(n, bi)| {
                    g.bonds[bi].order == BondOrder::Double && g.atoms[n].element == "O"
                })
        })
        .collect();

    let mut out = Vec::new();
    for (bi, bond) in g.bonds.iter().enumerate() {
        if bond.in_ring || bond.order != BondOrder::Single {
            continue;
        }
        let (x, y) = (&g.atoms[bond.a], &g.atoms[bond.b]);
        let rule = if x.in_ring != y.in_ring {
            Some(CleavageRule::RingToChain)
        } else if (carbonyl[x.index] && is_hetero(&y.element)) || (carbonyl[y.index] && is_hetero(&x.element)) {
            Some(CleavageRule::CarbonylHetero)
        } else if (is_hetero(&x.element) && y.element == "C" && !y.in_ring)
            || (is_hetero(&y.element) && x.element == "C" && !x.in_ring)
        {
            Some(CleavageRule::HeteroToChainCarbon)
        } else if separates_ring_systems(g, bi) {
            Some(CleavageRule::RingSystemLinker)
        } else {
            None
        };
        if let Some(r) = rule {
            out.push((bi, r));
        }
    }
    out
}

fn separates_ring_systems(g: &MolGraph, bi: usize) -> bool {
    let comps = g.components_without(&[bi]);
    let (a, b) = (g.bonds[bi].a, g.bonds[bi].b);
    let side = |atom: usize| comps.iter().find(|c| c.binary_search(&atom).is_ok());
    match (side(a), side(b)) {
        (Some(sa), Some(sb)) if sa != sb => {
            sa.iter().any(|&i| g.atoms[i].in_ring) && sb.iter().any(|&i| g.atoms[i].in_ring)
        }
        _ => false,
    }
}

pub fn cleavable_bonds(g: &MolGraph) -> Vec<usize> {
    classify_bonds(g).into_iter().map(|(bi, _)| bi).collect()
}

/// Removes every cleavable bond simultaneously and returns the components.
pub fn decompose(g: &MolGraph) -> MotifPartition {
    let cleaved = cleavable_bonds(g);
    let motifs = g.components_without(&cleaved);
    let mut motif_of = vec![0; g.n_atoms()];
    for (mi, motif) in motifs.iter().enumerate() {
        for &a in motif {
            motif_of[a] = mi;
        }
    }
    MotifPartition {
        motifs,
        motif_of,
        cleaved_bonds: cleaved,
    }
}

/// Deterministic label: element counts, `|`, then internal bond-order counts,
/// e.g. `C2|s1` for an ethyl fragment or `C6|a6` for benzene.
pub fn motif_signature(g: &MolGraph, motif: &[usize]) -> String {
    let mut elems: BTreeMap<&str, usize> = BTreeMap::new();
    for &a in motif {
        *elems.entry(g.atoms[a].element.as_str()).or_default() += 1;
    }
    let mut orders: BTreeMap<BondOrder, usize> = BTreeMap::new();
    for b in &g.bonds {
        if motif.contains(&b.a) && motif.contains(&b.b) {
            *orders.entry(b.order).or_default() += 1;
        }
    }
    let left: String = elems.iter().map(|(e, n)| format!("{}{}", e, n)).collect();
    let right: String = orders.iter().map(|(o, n)| format!("{}{}", o.code(), n)).collect();
    format!("{}|{}", left, right)
}
