//! Element tables used by the parser, strict valence checks, and the atom
//! embedding vocabulary.

/// Every element symbol the parser accepts inside brackets.
pub const SUPPORTED_ELEMENTS: &[&str] = &[
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Gd", "Hf", "Ta", "W", "Re", "Os", "Ir",
    "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Ra", "U",
];

/// Elements with their own learned embedding row; anything else shares the
/// trailing unknown-element row.
pub const EMBEDDED_ELEMENTS: &[&str] = &[
    "C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "B", "Si", "Se", "H", "Na", "K", "Li", "Mg",
    "Ca", "Fe", "Zn", "Cu", "Co", "Mn", "Al", "As", "Sn", "Hg", "Pt", "Au", "Ag",
];

pub fn is_supported(symbol: &str) -> bool {
    SUPPORTED_ELEMENTS.contains(&symbol)
}

/// Rows in the element embedding table, including the unknown row.
pub fn embedding_rows() -> usize {
    EMBEDDED_ELEMENTS.len() + 1
}

/// Embedding row for `symbol`, falling back to the unknown row.
pub fn embedding_index(symbol: &str) -> usize {
    EMBEDDED_ELEMENTS
        .iter()
        .position(|&e| e == symbol)
        .unwrap_or(EMBEDDED_ELEMENTS.len())
}

/// Largest usual valence, for strict-mode checks. `None` means unchecked.
pub fn max_valence(symbol: &str) -> Option<i32> {
    Some(match symbol {
        "H" | "F" | "Cl" | "Br" | "I" | "Li" | "Na" | "K" => 1,
        "O" | "Mg" | "Ca" | "Zn" => 2,
        "B" | "N" | "Al" => 3,
        "C" | "Si" => 4,
        "P" | "As" => 5,
        "S" | "Se" => 6,
        _ => return None,
    })
}

/// Strict-mode valence limit after accounting for formal charge.
pub fn allowed_valence(symbol: &str, charge: i32) -> Option<i32> {
    let base = max_valence(symbol)?;
    Some(match symbol {
        "N" | "O" | "P" | "S" | "Se" | "As" => base + charge,
        "C" | "B" | "Si" => base - charge.abs(),
        _ => base + charge.abs(),
    })
}
