//! Hierarchical heterogeneous graph over atom, motif and molecule nodes.

use std::fmt;

use thiserror::Error;

use crate::chem::{elements, MolGraph, MotifPartition};
use crate::tensor::{self, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("partition does not match the molecule: {0}")]
    PartitionMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Atom,
    Motif,
    Molecule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    MotifAtom,
    MoleculeMotif,
    AtomAtom,
}

impl EdgeKind {
    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::MotifAtom => "motif-atom",
            EdgeKind::MoleculeMotif => "molecule-motif",
            EdgeKind::AtomAtom => "atom-atom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeteroEdge {
    pub a: usize,
    pub b: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraphConfig {
    /// Also connect bonded atoms directly.
    pub bond_edges: bool,
}

/// Nodes are ordered `[atoms..., motifs..., molecule]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    pub n_atoms: usize,
    pub n_motifs: usize,
    pub node_kind: Vec<NodeKind>,
    pub edges: Vec<HeteroEdge>,
    /// Element embedding row of each atom.
    pub element_ids: Vec<usize>,
    pub motif_members: Vec<Vec<usize>>,
}

impl HeteroGraph {
    pub fn n_nodes(&self) -> usize {
        self.node_kind.len()
    }

    pub fn motif_node(&self, motif: usize) -> usize {
        self.n_atoms + motif
    }

    pub fn molecule_node(&self) -> usize {
        self.n_atoms + self.n_motifs
    }

    pub fn count_edges(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }
}

pub fn build_hetero_graph(
    g: &MolGraph,
    p: &MotifPartition,
    cfg: GraphConfig,
) -> Result<HeteroGraph, GraphError> {
    let n_atoms = g.n_atoms();
    if p.motif_of.len() != n_atoms {
        return Err(GraphError::PartitionMismatch(format!(
            "{} atoms but motif_of covers {}",
            n_atoms,
            p.motif_of.len()
        )));
    }
    let mut seen = vec![false; n_atoms];
    for (mi, motif) in p.motifs.iter().enumerate() {
        if motif.is_empty() {
            return Err(GraphError::PartitionMismatch(format!("motif {} is empty", mi)));
        }
        for &a in motif {
            if a >= n_atoms || seen[a] || p.motif_of[a] != mi {
                return Err(GraphError::PartitionMismatch(format!(
                    "atom {} in motif {} is out of range, repeated, or mislabeled",
                    a, mi
                )));
            }
            seen[a] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(GraphError::PartitionMismatch("some atoms belong to no motif".into()));
    }

    let n_motifs = p.motifs.len();
    let mut node_kind = vec![NodeKind::Atom; n_atoms];
    node_kind.extend(std::iter::repeat_n(NodeKind::Motif, n_motifs));
    node_kind.push(NodeKind::Molecule);

    let mut edges = Vec::new();
    for (mi, motif) in p.motifs.iter().enumerate() {
        for &a in motif {
            edges.push(HeteroEdge {
                a: n_atoms + mi,
                b: a,
                kind: EdgeKind::MotifAtom,
            });
        }
    }
    for mi in 0..n_motifs {
        edges.push(HeteroEdge {
            a: n_atoms + n_motifs,
            b: n_atoms + mi,
            kind: EdgeKind::MoleculeMotif,
        });
    }
    if cfg.bond_edges {
        for b in &g.bonds {
            edges.push(HeteroEdge {
                a: b.a,
                b: b.b,
                kind: EdgeKind::AtomAtom,
            });
        }
    }

    Ok(HeteroGraph {
        n_atoms,
        n_motifs,
        node_kind,
        edges,
        element_ids: g.atoms.iter().map(|a| elements::embedding_index(&a.element)).collect(),
        motif_members: p.motifs.clone(),
    })
}

/// `D^-1/2 (A + I) D^-1/2` as a dense matrix.
pub fn normalized_adjacency(h: &HeteroGraph) -> Tensor {
    let n = h.n_nodes();
    let mut a = Tensor::identity(n);
    for e in &h.edges {
        a.set(e.a, e.b, 1.0);
        a.set(e.b, e.a, 1.0);
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row(i).iter().sum();
            1.0 / d.sqrt()
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j);
            if v != 0.0 {
                a.set(i, j, v * inv_sqrt[i] * inv_sqrt[j]);
            }
        }
    }
    a
}

/// Maps atom rows to all node rows: identity on atoms, member means for
/// motifs, and the mean of motif rows for the molecule. Shape `n x n_atoms`.
pub fn feature_aggregation(h: &HeteroGraph) -> Tensor {
    let n = h.n_nodes();
    let mut m = Tensor::zeros(&[n, h.n_atoms]);
    for a in 0..h.n_atoms {
        m.set(a, a, 1.0);
    }
    let mol = h.molecule_node();
    for (mi, members) in h.motif_members.iter().enumerate() {
        let w = 1.0 / members.len() as f64;
        for &a in members {
            m.set(h.motif_node(mi), a, w);
            let prev = m.get(mol, a);
            m.set(mol, a, prev + w / h.n_motifs as f64);
        }
    }
    m
}

/// Initial node features from an element embedding table
/// (`embedding_rows() x f0`).
pub fn initial_node_features(
    tape: &mut Tape,
    h: &HeteroGraph,
    aggregation: Var,
    element_table: Var,
) -> tensor::Result<Var> {
    let atom_rows = tape.gather_rows(element_table, &h.element_ids)?;
    tape.matmul(aggregation, atom_rows)
}

impl fmt::Display for HeteroGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "nodes {} (atoms {}, motifs {}, molecule 1)",
            self.n_nodes(),
            self.n_atoms,
            self.n_motifs
        )?;
        for (i, k) in self.node_kind.iter().enumerate() {
            let label = match k {
                NodeKind::Atom => format!("atom     element_row={}", self.element_ids[i]),
                NodeKind::Motif => {
                    let m = &self.motif_members[i - self.n_atoms];
                    let ids: Vec<String> = m.iter().map(usize::to_string).collect();
                    format!("motif    atoms=[{}]", ids.join(" "))
                }
                NodeKind::Molecule => "molecule".to_string(),
            };
            writeln!(f, "  {:>3} {}", i, label)?;
        }
        writeln!(f, "edges {}", self.edges.len())?;
        for e in &self.edges {
            writeln!(f, "  {}-{} {}", e.a, e.b, e.kind.name())?;
        }
        Ok(())
    }
}
