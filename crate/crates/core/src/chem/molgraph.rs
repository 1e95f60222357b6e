use std::collections::VecDeque;
use std::fmt;

/// Bond multiplicity as written in SMILES.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// One-letter code used by motif signatures.
    pub fn code(self) -> char {
        match self {
            BondOrder::Single => 's',
            BondOrder::Double => 'd',
            BondOrder::Triple => 't',
            BondOrder::Aromatic => 'a',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BondOrder::Single => "single",
            BondOrder::Double => "double",
            BondOrder::Triple => "triple",
            BondOrder::Aromatic => "aromatic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub index: usize,
    /// Element symbol with canonical capitalization (`"C"` for aromatic `c`).
    pub element: String,
    pub aromatic: bool,
    pub charge: i32,
    /// Hydrogens written inside a bracket atom; implicit ones are not tracked.
    pub explicit_h: u32,
    pub in_ring: bool,
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }

    pub fn joins(&self, x: usize, y: usize) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }
}

/// A heavy-atom molecular graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MolGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// One cycle per ring-closure bond, as atom indices in path order.
    pub rings: Vec<Vec<usize>>,
    /// Bonds that close a ring (the non-spanning-tree bonds).
    pub ring_closures: Vec<usize>,
}

impl MolGraph {
    /// Builds a graph and derives degrees, ring flags, and rings.
    ///
    /// `closures` names the bonds outside the spanning tree; pass `None` to
    /// pick them from a breadth-first spanning forest.
    pub fn assemble(mut atoms: Vec<Atom>, bonds: Vec<Bond>, closures: Option<Vec<usize>>) -> MolGraph {
        for (i, atom) in atoms.iter_mut().enumerate() {
            atom.index = i;
            atom.degree = 0;
        }
        for bond in &bonds {
            atoms[bond.a].degree += 1;
            atoms[bond.b].degree += 1;
        }
        let mut g = MolGraph {
            atoms,
            bonds,
            rings: Vec::new(),
            ring_closures: Vec::new(),
        };
        g.ring_closures = closures.unwrap_or_else(|| g.spanning_closures());
        g.mark_ring_bonds();
        g.rings = g
            .ring_closures
            .iter()
            .map(|&bi| g.tree_cycle(bi))
            .collect();
        g
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// `(neighbor, bond index)` pairs per atom.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for (bi, bond) in self.bonds.iter().enumerate() {
            adj[bond.a].push((bond.b, bi));
            adj[bond.b].push((bond.a, bi));
        }
        adj
    }

    pub fn bond_between(&self, x: usize, y: usize) -> Option<usize> {
        self.bonds.iter().position(|b| b.joins(x, y))
    }

    /// Connected components (ascending atom lists), ordered by lowest atom.
    pub fn components(&self) -> Vec<Vec<usize>> {
        self.components_without(&[])
    }

    /// Components after deleting the given bonds.
    pub fn components_without(&self, removed: &[usize]) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(u) = queue.pop_front() {
                comp.push(u);
                for &(v, bi) in &adj[u] {
                    if !seen[v] && !removed.contains(&bi) {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// The subgraph induced by `atoms`, reindexed in ascending atom order,
    /// with ring information recomputed.
    pub fn induced_subgraph(&self, atoms: &[usize]) -> MolGraph {
        let mut keep: Vec<usize> = atoms.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let mut remap = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let new_atoms = keep.iter().map(|&i| self.atoms[i].clone()).collect();
        let new_bonds = self
            .bonds
            .iter()
            .filter(|b| remap[b.a] != usize::MAX && remap[b.b] != usize::MAX)
            .map(|b| Bond {
                a: remap[b.a],
                b: remap[b.b],
                order: b.order,
                in_ring: false,
            })
            .collect();
        MolGraph::assemble(new_atoms, new_bonds, None)
    }

    /// Bond indices outside a breadth-first spanning forest.
    fn spanning_closures(&self) -> Vec<usize> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut tree = vec![false; self.bonds.len()];
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &(v, bi) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        tree[bi] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        (0..self.bonds.len()).filter(|&bi| !tree[bi]).collect()
    }

    /// Flags every bond that lies on a cycle (any non-bridge) and the atoms
    /// touching such bonds.
    fn mark_ring_bonds(&mut self) {
        let bridges = self.bridges();
        for (bi, bond) in self.bonds.iter_mut().enumerate() {
            bond.in_ring = !bridges[bi];
        }
        for atom in &mut self.atoms {
            atom.in_ring = false;
        }
        for bond in &self.bonds {
            if bond.in_ring {
                self.atoms[bond.a].in_ring = true;
                self.atoms[bond.b].in_ring = true;
            }
        }
    }

    /// `true` at index `bi` when bond `bi` is a bridge. Iterative low-link DFS.
    pub fn bridges(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let adj = self.adjacency();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut is_bridge = vec![false; self.bonds.len()];
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // (atom, bond used to enter it, next adjacency slot)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(top) = stack.last_mut() {
                let (u, parent_bond) = (top.0, top.1);
                if top.2 < adj[u].len() {
                    let (v, bi) = adj[u][top.2];
                    top.2 += 1;
                    if bi == parent_bond {
                        continue;
                    }
                    if disc[v] == usize::MAX {
                        disc[v] = timer;
                        low[v] = timer;
                        timer += 1;
                        stack.push((v, bi, 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[u]);
                        if low[u] > disc[p] {
                            is_bridge[parent_bond] = true;
                        }
                    }
                }
            }
        }
        is_bridge
    }

    /// Cycle formed by closure bond `bi` and the spanning-tree path between
    /// its ends.
    fn tree_cycle(&self, bi: usize) -> Vec<usize> {
        let (src, dst) = (self.bonds[bi].a, self.bonds[bi].b);
        let adj = self.adjacency();
        let mut prev = vec![usize::MAX; self.atoms.len()];
        prev[src] = src;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            if u == dst {
                break;
            }
            for &(v, e) in &adj[u] {
                if prev[v] == usize::MAX && !self.ring_closures.contains(&e) {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        let mut path = vec![dst];
        let mut cur = dst;
        while cur != src {
            cur = prev[cur];
            path.push(cur);
        }
        path.reverse();
        path
    }
}

impl fmt::Display for MolGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "atoms {}", self.atoms.len())?;
        for a in &self.atoms {
            writeln!(
                f,
                "  {:>3} {:<2} aromatic={} charge={} h={} ring={} degree={}",
                a.index, a.element, a.aromatic, a.charge, a.explicit_h, a.in_ring, a.degree
            )?;
        }
        writeln!(f, "bonds {}", self.bonds.len())?;
        for (i, b) in self.bonds.iter().enumerate() {
            writeln!(f, "  {:>3} {}-{} {} ring={}", i, b.a, b.b, b.order.name(), b.in_ring)?;
        }
        writeln!(f, "rings {}", self.rings.len())?;
        for r in &self.rings {
            let ids: Vec<String> = r.iter().map(usize::to_string).collect();
            writeln!(f, "  [{}]", ids.join(" "))?;
        }
        Ok(())
    }
}
