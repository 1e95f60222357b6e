//! SMILES tokenizer and parser.
//!
//! Supported: the organic subset (`B C N O P S F Cl Br I` and aromatic
//! `b c n o p s`), bracket atoms with isotope, chirality, hydrogen count,
//! charge and class, bond symbols `- = # :`, directional bonds `/ \`,
//! branches, and ring closures `1`-`9` / `%nn`. Isotopes, chirality, classes
//! and bond direction are accepted and dropped. Hydrogens are never
//! materialized as atoms unless written as their own bracket atom.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::elements;
use super::molgraph::{Atom, Bond, BondOrder, MolGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    Empty,
    #[error("unexpected character '{ch}' at position {position}")]
    Lexical { position: usize, ch: char },
    #[error("malformed bracket atom at position {position}: {reason}")]
    Bracket { position: usize, reason: String },
    #[error("unbalanced branch at position {position}")]
    UnbalancedBranch { position: usize },
    #[error("ring closure {label} opened but never closed")]
    UnclosedRing { label: u16 },
    #[error("ring closure {label} at position {position}: {reason}")]
    RingClosure { label: u16, position: usize, reason: String },
    #[error("bond symbol at position {position} is not followed by an atom")]
    DanglingBond { position: usize },
    #[error("expected an atom at position {position}")]
    ExpectedAtom { position: usize },
    #[error("multiple fragments ('.') are not allowed")]
    MultipleFragments,
    #[error("atom {atom} ({element}) exceeds its allowed valence: {valence} > {limit}")]
    Valence {
        atom: usize,
        element: String,
        valence: i32,
        limit: i32,
    },
}

/// Bond symbols, including the directional ones that only carry stereo.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
    Up,
    Down,
}

impl BondSymbol {
    fn order(self) -> BondOrder {
        match self {
            BondSymbol::Single | BondSymbol::Up | BondSymbol::Down => BondOrder::Single,
            BondSymbol::Double => BondOrder::Double,
            BondSymbol::Triple => BondOrder::Triple,
            BondSymbol::Aromatic => BondOrder::Aromatic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BracketAtom {
    pub isotope: Option<u32>,
    pub element: String,
    pub aromatic: bool,
    pub hydrogens: u32,
    pub charge: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Atom { element: String, aromatic: bool },
    Bracket(BracketAtom),
    Bond(BondSymbol),
    BranchOpen,
    BranchClose,
    Ring(u16),
    Dot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Character offset of the token's first character.
    pub position: usize,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Atom { element, aromatic } => {
                if *aromatic {
                    write!(f, "{}", element.to_lowercase())
                } else {
                    write!(f, "{}", element)
                }
            }
            TokenKind::Bracket(b) => write!(f, "[{}]", b.element),
            TokenKind::Bond(s) => write!(
                f,
                "{}",
                match s {
                    BondSymbol::Single => "-",
                    BondSymbol::Double => "=",
                    BondSymbol::Triple => "#",
                    BondSymbol::Aromatic => ":",
                    BondSymbol::Up => "/",
                    BondSymbol::Down => "\\",
                }
            ),
            TokenKind::BranchOpen => write!(f, "("),
            TokenKind::BranchClose => write!(f, ")"),
            TokenKind::Ring(n) => write!(f, "ring({})", n),
            TokenKind::Dot => write!(f, "."),
        }
    }
}

/// Splits a SMILES string into tokens.
pub fn tokenize_smiles(s: &str) -> Result<Vec<Token>, SmilesError> {
    if s.is_empty() {
        return Err(SmilesError::Empty);
    }
    let chars: Vec<char> = s.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let kind = match c {
            'B' if chars.get(i + 1) == Some(&'r') => {
                i += 1;
                organic("Br", false)
            }
            'C' if chars.get(i + 1) == Some(&'l') => {
                i += 1;
                organic("Cl", false)
            }
            'B' | 'C' | 'N' | 'O' | 'P' | 'S' | 'F' | 'I' => organic(&c.to_string(), false),
            'b' | 'c' | 'n' | 'o' | 'p' | 's' => organic(&c.to_ascii_uppercase().to_string(), true),
            '[' => {
                let close = chars[i..]
                    .iter()
                    .position(|&ch| ch == ']')
                    .map(|p| i + p)
                    .ok_or_else(|| SmilesError::Bracket {
                        position: i,
                        reason: "missing ']'".into(),
                    })?;
                let inner: String = chars[i + 1..close].iter().collect();
                let atom = parse_bracket(&inner, i)?;
                i = close;
                TokenKind::Bracket(atom)
            }
            '-' => TokenKind::Bond(BondSymbol::Single),
            '=' => TokenKind::Bond(BondSymbol::Double),
            '#' => TokenKind::Bond(BondSymbol::Triple),
            ':' => TokenKind::Bond(BondSymbol::Aromatic),
            '/' => TokenKind::Bond(BondSymbol::Up),
            '\\' => TokenKind::Bond(BondSymbol::Down),
            '(' => TokenKind::BranchOpen,
            ')' => TokenKind::BranchClose,
            '.' => TokenKind::Dot,
            '0'..='9' => TokenKind::Ring(c.to_digit(10).unwrap() as u16),
            '%' => {
                let d1 = chars.get(i + 1).and_then(|ch| ch.to_digit(10));
                let d2 = chars.get(i + 2).and_then(|ch| ch.to_digit(10));
                match (d1, d2) {
                    (Some(a), Some(b)) => {
                        i += 2;
                        TokenKind::Ring((a * 10 + b) as u16)
                    }
                    _ => return Err(SmilesError::Lexical { position: i, ch: c }),
                }
            }
            _ => return Err(SmilesError::Lexical { position: i, ch: c }),
        };
        tokens.push(Token {
            kind,
            position: start,
        });
        i += 1;
    }
    Ok(tokens)
}

fn organic(element: &str, aromatic: bool) -> TokenKind {
    TokenKind::Atom {
        element: element.to_string(),
        aromatic,
    }
}

fn parse_bracket(inner: &str, position: usize) -> Result<BracketAtom, SmilesError> {
    let err = |reason: &str| SmilesError::Bracket {
        position,
        reason: reason.to_string(),
    };
    let chars: Vec<char> = inner.chars().collect();
    let mut i = 0;

    let digits = |i: &mut usize| -> Option<u32> {
        let start = *i;
        while *i < chars.len() && chars[*i].is_ascii_digit() {
            *i += 1;
        }
        (start < *i).then(|| chars[start..*i].iter().collect::<String>().parse().unwrap_or(u32::MAX))
    };

    let isotope = digits(&mut i);

    let (element, aromatic) = {
        let first = *chars.get(i).ok_or_else(|| err("missing element symbol"))?;
        let second = chars.get(i + 1).copied();
        if first.is_ascii_uppercase() {
            let two = second
                .filter(char::is_ascii_lowercase)
                .map(|s| format!("{}{}", first, s))
                .filter(|sym| elements::is_supported(sym));
            match two {
                Some(sym) => {
                    i += 2;
                    (sym, false)
                }
                None => {
                    let sym = first.to_string();
                    if !elements::is_supported(&sym) {
                        return Err(err(&format!("unknown element '{}'", sym)));
                    }
                    i += 1;
                    (sym, false)
                }
            }
        } else if first.is_ascii_lowercase() {
            let two: Option<String> = second.map(|s| format!("{}{}", first, s));
            match two.as_deref() {
                Some("se") | Some("as") | Some("te") => {
                    i += 2;
                    let t = two.unwrap();
                    let mut cs = t.chars();
                    let head = cs.next().unwrap().to_ascii_uppercase();
                    (format!("{}{}", head, cs.as_str()), true)
                }
                _ if "bcnops".contains(first) => {
                    i += 1;
                    (first.to_ascii_uppercase().to_string(), true)
                }
                _ => return Err(err(&format!("unknown aromatic symbol '{}'", first))),
            }
        } else {
            return Err(err("missing element symbol"));
        }
    };

    // Chirality: '@', '@@', or extended forms like '@TH1'.
    while i < chars.len() && chars[i] == '@' {
        i += 1;
    }
    while i < chars.len() && chars[i].is_ascii_uppercase() && chars[i] != 'H' {
        i += 1;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
    }

    let mut hydrogens = 0;
    if i < chars.len() && chars[i] == 'H' {
        i += 1;
        hydrogens = digits(&mut i).unwrap_or(1);
    }

    let mut charge = 0i32;
    if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
        let sign = if chars[i] == '+' { 1 } else { -1 };
        let sym = chars[i];
        i += 1;
        if let Some(n) = digits(&mut i) {
            charge = sign * n as i32;
        } else {
            let mut count = 1;
            while i < chars.len() && chars[i] == sym {
                count += 1;
                i += 1;
            }
            charge = sign * count;
        }
    }

    if i < chars.len() && chars[i] == ':' {
        i += 1;
        if digits(&mut i).is_none() {
            return Err(err("atom class needs digits"));
        }
    }

    if i != chars.len() {
        return Err(err(&format!("unexpected '{}'", chars[i])));
    }
    Ok(BracketAtom {
        isotope,
        element,
        aromatic,
        hydrogens,
        charge,
    })
}

/// Parser switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Accept '.'-separated input and keep only the largest fragment.
    pub allow_fragments: bool,
    /// Reject atoms whose bond orders exceed the element's usual valence.
    pub strict_valence: bool,
}

/// Parses with default options (single fragment, no valence check).
pub fn parse_smiles(s: &str) -> Result<MolGraph, SmilesError> {
    parse_smiles_with(s, ParseOptions::default())
}

pub fn parse_smiles_with(s: &str, opts: ParseOptions) -> Result<MolGraph, SmilesError> {
    let tokens = tokenize_smiles(s)?;
    let mut atoms: Vec<Atom> = Vec::new();
    let mut bonds: Vec<Bond> = Vec::new();
    let mut closures: Vec<usize> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut branches: Vec<(usize, usize)> = Vec::new();
    let mut pending: Option<(BondSymbol, usize)> = None;
    let mut open_rings: BTreeMap<u16, (usize, Option<BondSymbol>, usize)> = BTreeMap::new();

    for tok in &tokens {
        match &tok.kind {
            TokenKind::Atom { .. } | TokenKind::Bracket(_) => {
                let atom = match &tok.kind {
                    TokenKind::Atom { element, aromatic } => Atom {
                        index: atoms.len(),
                        element: element.clone(),
                        aromatic: *aromatic,
                        charge: 0,
                        explicit_h: 0,
                        in_ring: false,
                        degree: 0,
                    },
                    TokenKind::Bracket(b) => Atom {
                        index: atoms.len(),
                        element: b.element.clone(),
                        aromatic: b.aromatic,
                        charge: b.charge,
                        explicit_h: b.hydrogens,
                        in_ring: false,
                        degree: 0,
                    },
                    _ => unreachable!(),
                };
                atoms.push(atom);
                let idx = atoms.len() - 1;
                if let Some(p) = prev {
                    let order = bond_order(pending.map(|b| b.0), &atoms[p], &atoms[idx]);
                    bonds.push(Bond {
                        a: p,
                        b: idx,
                        order,
                        in_ring: false,
                    });
                } else if let Some((_, pos)) = pending {
                    return Err(SmilesError::DanglingBond { position: pos });
                }
                pending = None;
                prev = Some(idx);
            }
            TokenKind::Bond(sym) => {
                if prev.is_none() || pending.is_some() {
                    return Err(SmilesError::ExpectedAtom {
                        position: tok.position,
                    });
                }
                pending = Some((*sym, tok.position));
            }
            TokenKind::BranchOpen => {
                let Some(p) = prev else {
                    return Err(SmilesError::ExpectedAtom {
                        position: tok.position,
                    });
                };
                if let Some((_, pos)) = pending {
                    return Err(SmilesError::DanglingBond { position: pos });
                }
                branches.push((p, tok.position));
            }
            TokenKind::BranchClose => {
                if let Some((_, pos)) = pending {
                    return Err(SmilesError::DanglingBond { position: pos });
                }
                let Some((p, _)) = branches.pop() else {
                    return Err(SmilesError::UnbalancedBranch {
                        position: tok.position,
                    });
                };
                prev = Some(p);
            }
            TokenKind::Ring(label) => {
                let Some(p) = prev else {
                    return Err(SmilesError::ExpectedAtom {
                        position: tok.position,
                    });
                };
                let sym = pending.take().map(|b| b.0);
                let ring_err = |reason: &str| SmilesError::RingClosure {
                    label: *label,
                    position: tok.position,
                    reason: reason.to_string(),
                };
                match open_rings.remove(label) {
                    None => {
                        open_rings.insert(*label, (p, sym, tok.position));
                    }
                    Some((q, open_sym, _)) => {
                        if q == p {
                            return Err(ring_err("ring closes on its own atom"));
                        }
                        if bonds.iter().any(|b| b.joins(p, q)) {
                            return Err(ring_err("duplicate bond"));
                        }
                        let sym = match (open_sym, sym) {
                            (Some(x), Some(y)) if x.order() != y.order() => {
                                return Err(ring_err("conflicting bond orders"));
                            }
                            (x, y) => x.or(y),
                        };
                        let order = bond_order(sym, &atoms[q], &atoms[p]);
                        bonds.push(Bond {
                            a: q,
                            b: p,
                            order,
                            in_ring: false,
                        });
                        closures.push(bonds.len() - 1);
                    }
                }
            }
            TokenKind::Dot => {
                if !opts.allow_fragments {
                    return Err(SmilesError::MultipleFragments);
                }
                if let Some((_, pos)) = pending {
                    return Err(SmilesError::DanglingBond { position: pos });
                }
                if prev.is_none() {
                    return Err(SmilesError::ExpectedAtom {
                        position: tok.position,
                    });
                }
                prev = None;
            }
        }
    }

    if let Some((_, pos)) = pending {
        return Err(SmilesError::DanglingBond { position: pos });
    }
    if let Some(&(_, pos)) = branches.last() {
        return Err(SmilesError::UnbalancedBranch { position: pos });
    }
    if let Some((&label, _)) = open_rings.iter().next() {
        return Err(SmilesError::UnclosedRing { label });
    }
    if atoms.is_empty() {
        return Err(SmilesError::Empty);
    }

    let mut graph = MolGraph::assemble(atoms, bonds, Some(closures.clone()));
    if opts.allow_fragments && !graph.is_connected() {
        graph = largest_fragment(&graph, &closures);
    }
    if opts.strict_valence {
        check_valence(&graph)?;
    }
    Ok(graph)
}

fn bond_order(sym: Option<BondSymbol>, a: &Atom, b: &Atom) -> BondOrder {
    match sym {
        Some(s) => s.order(),
        None if a.aromatic && b.aromatic => BondOrder::Aromatic,
        None => BondOrder::Single,
    }
}

fn largest_fragment(g: &MolGraph, closures: &[usize]) -> MolGraph {
    let comps = g.components();
    let best = comps
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.len().cmp(&b.len()).then(j.cmp(i)))
        .map(|(_, c)| c.clone())
        .unwrap_or_default();
    let mut remap = vec![usize::MAX; g.n_atoms()];
    for (new, &old) in best.iter().enumerate() {
        remap[old] = new;
    }
    let atoms = best.iter().map(|&i| g.atoms[i].clone()).collect();
    let mut bonds = Vec::new();
    let mut kept_closures = Vec::new();
    for (bi, b) in g.bonds.iter().enumerate() {
        if remap[b.a] != usize::MAX {
            if closures.contains(&bi) {
                kept_closures.push(bonds.len());
            }
            bonds.push(Bond {
                a: remap[b.a],
                b: remap[b.b],
                order: b.order,
                in_ring: false,
            });
        }
    }
    MolGraph::assemble(atoms, bonds, Some(kept_closures))
}

fn check_valence(g: &MolGraph) -> Result<(), SmilesError> {
    let mut twice = vec![0i32; g.n_atoms()];
    for b in &g.bonds {
        // Aromatic bonds count as one here: without kekulization only the
        // lower bound is known.
        let w = match b.order {
            BondOrder::Single | BondOrder::Aromatic => 2,
            BondOrder::Double => 4,
            BondOrder::Triple => 6,
        };
        twice[b.a] += w;
        twice[b.b] += w;
    }
    for atom in &g.atoms {
        let Some(limit) = elements::allowed_valence(&atom.element, atom.charge) else {
            continue;
        };
        let valence = twice[atom.index] / 2 + atom.explicit_h as i32;
        if valence > limit {
            return Err(SmilesError::Valence {
                atom: atom.index,
                element: atom.element.clone(),
                valence,
                limit,
            });
        }
    }
    Ok(())
}

/// Something [`validate_graph`] found wrong.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationIssue {
    NotConnected { components: usize },
    DuplicateBond { a: usize, b: usize },
    SelfLoop { atom: usize },
    RingFlagMismatch { bond: usize },
    AtomRingFlagMismatch { atom: usize },
    DegreeMismatch { atom: usize },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::NotConnected { components } => {
                write!(f, "not connected: {} components", components)
            }
            ValidationIssue::DuplicateBond { a, b } => write!(f, "duplicate edge {}-{}", a, b),
            ValidationIssue::SelfLoop { atom } => write!(f, "self loop on atom {}", atom),
            ValidationIssue::RingFlagMismatch { bond } => {
                write!(f, "ring flag of bond {} disagrees with topology", bond)
            }
            ValidationIssue::AtomRingFlagMismatch { atom } => {
                write!(f, "ring flag of atom {} disagrees with its bonds", atom)
            }
            ValidationIssue::DegreeMismatch { atom } => {
                write!(f, "degree of atom {} disagrees with its bonds", atom)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks connectivity, duplicate bonds, and consistency of the derived
/// degree and ring flags.
pub fn validate_graph(g: &MolGraph) -> ValidationReport {
    let mut issues = Vec::new();
    let comps = g.components().len();
    if comps > 1 {
        issues.push(ValidationIssue::NotConnected { components: comps });
    }
    let mut seen = std::collections::BTreeSet::new();
    for b in &g.bonds {
        if b.a == b.b {
            issues.push(ValidationIssue::SelfLoop { atom: b.a });
            continue;
        }
        let key = (b.a.min(b.b), b.a.max(b.b));
        if !seen.insert(key) {
            issues.push(ValidationIssue::DuplicateBond { a: key.0, b: key.1 });
        }
    }
    let bridges = g.bridges();
    for (bi, b) in g.bonds.iter().enumerate() {
        if b.a != b.b && b.in_ring == bridges[bi] {
            issues.push(ValidationIssue::RingFlagMismatch { bond: bi });
        }
    }
    let mut degree = vec![0usize; g.n_atoms()];
    let mut ring_atom = vec![false; g.n_atoms()];
    for b in &g.bonds {
        degree[b.a] += 1;
        degree[b.b] += 1;
        if b.in_ring {
            ring_atom[b.a] = true;
            ring_atom[b.b] = true;
        }
    }
    for a in &g.atoms {
        if a.degree != degree[a.index] {
            issues.push(ValidationIssue::DegreeMismatch { atom: a.index });
        }
        if a.in_ring != ring_atom[a.index] {
            issues.push(ValidationIssue::AtomRingFlagMismatch { atom: a.index });
        }
    }
    ValidationReport { issues }
}
