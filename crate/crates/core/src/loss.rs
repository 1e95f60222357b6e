//! Level similarities, batch matrices and the weighted contrastive objective.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::encoders::{MolReps, MolVars, TextReps, TextVars};
use crate::ot::{fusion_matrix, solve_alignment, AlignMode, IpotConfig, OtError};
use crate::tensor::{Axis, Tape, TensorError, Var};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("batch size mismatch: {texts} texts, {molecules} molecules")]
    SizeMismatch { texts: usize, molecules: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Ot(#[from] OtError),
}

pub type Result<T> = std::result::Result<T, LossError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    TokenAtom,
    MultitokenMotif,
    SentenceMolecule,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::TokenAtom, Level::MultitokenMotif, Level::SentenceMolecule];

    pub fn code(self) -> &'static str {
        match self {
            Level::TokenAtom => "ta",
            Level::MultitokenMotif => "mm",
            Level::SentenceMolecule => "sm",
        }
    }
}

/// Which levels take part in loss and scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Levels {
    pub ta: bool,
    pub mm: bool,
    pub sm: bool,
}

impl Default for Levels {
    fn default() -> Self {
        Levels::all()
    }
}

impl Levels {
    pub fn all() -> Self {
        Levels {
            ta: true,
            mm: true,
            sm: true,
        }
    }

    pub fn only(level: Level) -> Self {
        let mut l = Levels {
            ta: false,
            mm: false,
            sm: false,
        };
        l.set(level, true);
        l
    }

    pub fn enabled(&self, level: Level) -> bool {
        match level {
            Level::TokenAtom => self.ta,
            Level::MultitokenMotif => self.mm,
            Level::SentenceMolecule => self.sm,
        }
    }

    pub fn set(&mut self, level: Level, on: bool) {
        match level {
            Level::TokenAtom => self.ta = on,
            Level::MultitokenMotif => self.mm = on,
            Level::SentenceMolecule => self.sm = on,
        }
    }

    pub fn any(&self) -> bool {
        self.ta || self.mm || self.sm
    }
}

impl FromStr for Levels {
    type Err = LossError;

    fn from_str(s: &str) -> Result<Self> {
        let mut l = Levels {
            ta: false,
            mm: false,
            sm: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let level = Level::ALL
                .into_iter()
                .find(|lv| lv.code() == part)
                .ok_or_else(|| LossError::Contract(format!("unknown level '{}' (ta, mm, sm)", part)))?;
            l.set(level, true);
        }
        if !l.any() {
            return Err(LossError::Contract("at least one level must be enabled".into()));
        }
        Ok(l)
    }
}

impl fmt::Display for Levels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let on: Vec<&str> = Level::ALL.iter().filter(|l| self.enabled(**l)).map(|l| l.code()).collect();
        f.write_str(&on.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 0.5, beta: 0.2 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.alpha, self.beta);
        if !(a.is_finite() && b.is_finite()) || a < 0.0 || b < 0.0 || a + b > 1.0 + 1e-12 {
            return Err(LossError::Contract(format!(
                "weights need alpha >= 0, beta >= 0, alpha + beta <= 1 (got {}, {})",
                a, b
            )));
        }
        Ok(())
    }

    /// `(ta, mm, sm)` weights with disabled levels removed and the rest
    /// rescaled to sum to one. If every enabled level has zero weight, the
    /// enabled levels share equally.
    pub fn effective(&self, levels: Levels) -> Result<[f64; 3]> {
        self.validate()?;
        if !levels.any() {
            return Err(LossError::Contract("at least one level must be enabled".into()));
        }
        let raw = [self.alpha, self.beta, (1.0 - self.alpha - self.beta).max(0.0)];
        let mut w = [0.0; 3];
        for (k, level) in Level::ALL.into_iter().enumerate() {
            if levels.enabled(level) {
                w[k] = raw[k];
            }
        }
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.iter_mut().for_each(|x| *x /= total);
        } else {
            let n = Level::ALL.iter().filter(|l| levels.enabled(**l)).count() as f64;
            for (k, level) in Level::ALL.into_iter().enumerate() {
                if levels.enabled(level) {
                    w[k] = 1.0 / n;
                }
            }
        }
        Ok(w)
    }
}

/// Everything the loss and scorer need besides the representations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub levels: Levels,
    pub temperature: f64,
    pub ipot: IpotConfig,
    pub align_mode: AlignMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            weights: LossWeights::default(),
            levels: Levels::all(),
            temperature: 1.0,
            ipot: IpotConfig::default(),
            align_mode: AlignMode::Mass,
        }
    }
}

/// Token-level alignment score between `x` (`r x d`) and `y` (`c x d`).
/// Each row of the cosine matrix is min-max scaled, each column is then
/// scaled to sum to one, and `y` is re-expressed through those weights
/// before the pooled vectors are compared.
pub fn fine_similarity(tape: &mut Tape, x: Var, y: Var) -> Result<Var> {
    let m = tape.cosine_matrix(x, y)?;
    let m = tape.min_max_normalize(m, Axis::WithinRow)?;
    let w = tape.l1_normalize(m, Axis::WithinColumn)?;
    let y2 = tape.matmul(w, y)?;
    let px = tape.sum_pool(x)?;
    let py = tape.sum_pool(y2)?;
    Ok(tape.cosine_sim(px, py)?)
}

pub fn sentence_similarity(tape: &mut Tape, sentence: Var, molecule: Var) -> Result<Var> {
    Ok(tape.cosine_sim(sentence, molecule)?)
}

/// Multi-token vs motif similarity. The alignment is solved on current
/// values and enters the tape as a constant averaging matrix.
pub fn multitoken_similarity(tape: &mut Tape, tokens: Var, motifs: Var, cfg: &LossConfig) -> Result<Var> {
    let (_, _, alignment) = solve_alignment(tape.value(tokens), tape.value(motifs), &cfg.ipot, cfg.align_mode)?;
    let f = tape.constant(fusion_matrix(&alignment))?;
    let fused = tape.matmul(f, tokens)?;
    fine_similarity(tape, fused, motifs)
}

/// Per-level similarity vars for one text/molecule pair; disabled levels are
/// not computed.
#[derive(Debug, Clone, Copy)]
pub struct PairVars {
    pub ta: Option<Var>,
    pub mm: Option<Var>,
    pub sm: Option<Var>,
}

pub fn pair_similarities(tape: &mut Tape, text: &TextVars, mol: &MolVars, cfg: &LossConfig) -> Result<PairVars> {
    let l = cfg.levels;
    Ok(PairVars {
        ta: if l.ta { Some(fine_similarity(tape, text.tokens, mol.atoms)?) } else { None },
        mm: if l.mm {
            Some(multitoken_similarity(tape, text.tokens, mol.motifs, cfg)?)
        } else {
            None
        },
        sm: if l.sm {
            Some(sentence_similarity(tape, text.sentence, mol.molecule)?)
        } else {
            None
        },
    })
}

/// Plain similarity values for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSimilarities {
    pub ta: f64,
    pub mm: f64,
    pub sm: f64,
}

impl LevelSimilarities {
    pub fn as_array(&self) -> [f64; 3] {
        [self.ta, self.mm, self.sm]
    }
}

/// Level similarities from detached reps; disabled levels read as 0.
pub fn level_similarities(text: &TextReps, mol: &MolReps, cfg: &LossConfig) -> Result<LevelSimilarities> {
    let mut tape = Tape::new();
    let t = TextVars {
        sentence: tape.constant(text.sentence.clone())?,
        tokens: tape.constant(text.tokens.clone())?,
    };
    let m = MolVars {
        molecule: tape.constant(mol.molecule.clone())?,
        atoms: tape.constant(mol.atoms.clone())?,
        motifs: tape.constant(mol.motifs.clone())?,
    };
    let p = pair_similarities(&mut tape, &t, &m, cfg)?;
    let read = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
    Ok(LevelSimilarities {
        ta: read(p.ta),
        mm: read(p.mm),
        sm: read(p.sm),
    })
}

/// Weighted score used for ranking.
pub fn combined_similarity(s: &LevelSimilarities, weights: LossWeights, levels: Levels) -> Result<f64> {
    let w = weights.effective(levels)?;
    Ok(w.iter().zip(s.as_array()).map(|(w, s)| w * s).sum())
}

/// `B x B` similarity matrices (already divided by the temperature).
#[derive(Debug, Clone, Copy)]
pub struct BatchMatrices {
    pub ta: Option<Var>,
    pub mm: Option<Var>,
    pub sm: Option<Var>,
}

impl BatchMatrices {
    pub fn get(&self, level: Level) -> Option<Var> {
        match level {
            Level::TokenAtom => self.ta,
            Level::MultitokenMotif => self.mm,
            Level::SentenceMolecule => self.sm,
        }
    }
}

/// Row `q` is text `q`, column `k` is molecule `k`.
pub fn batch_matrices(tape: &mut Tape, texts: &[TextVars], mols: &[MolVars], cfg: &LossConfig) -> Result<BatchMatrices> {
    if texts.len() != mols.len() {
        return Err(LossError::SizeMismatch {
            texts: texts.len(),
            molecules: mols.len(),
        });
    }
    if !(cfg.temperature > 0.0) {
        return Err(LossError::Contract("temperature must be positive".into()));
    }
    let b = texts.len();
    let mut cells: [Vec<Var>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for t in texts {
        for m in mols {
            let p = pair_similarities(tape, t, m, cfg)?;
            for (k, v) in [p.ta, p.mm, p.sm].into_iter().enumerate() {
                if let Some(v) = v {
                    cells[k].push(v);
                }
            }
        }
    }
    let mut out = [None; 3];
    for (k, c) in cells.iter().enumerate() {
        if !c.is_empty() {
            let s = tape.stack(c, &[b, b])?;
            out[k] = Some(if cfg.temperature == 1.0 {
                s
            } else {
                tape.scale(s, 1.0 / cfg.temperature)?
            });
        }
    }
    Ok(BatchMatrices {
        ta: out[0],
        mm: out[1],
        sm: out[2],
    })
}

/// `alpha * l_ta + beta * l_mm + (1 - alpha - beta) * l_sm` with disabled
/// levels dropped and the remaining weights renormalized.
pub fn total_loss(tape: &mut Tape, losses: [Option<Var>; 3], weights: LossWeights, levels: Levels) -> Result<Var> {
    let w = weights.effective(levels)?;
    let mut terms = Vec::new();
    for (k, level) in Level::ALL.into_iter().enumerate() {
        if levels.enabled(level) {
            let v = losses[k]
                .ok_or_else(|| LossError::Contract(format!("missing loss for enabled level {}", level.code())))?;
            terms.push((v, w[k]));
        }
    }
    Ok(tape.weighted_sum(&terms)?)
}

/// Loss vars for one batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchLoss {
    pub total: Var,
    pub ta: Option<Var>,
    pub mm: Option<Var>,
    pub sm: Option<Var>,
}

pub fn batch_loss(tape: &mut Tape, texts: &[TextVars], mols: &[MolVars], cfg: &LossConfig) -> Result<BatchLoss> {
    let m = batch_matrices(tape, texts, mols, cfg)?;
    let mut l = [None; 3];
    for (k, level) in Level::ALL.into_iter().enumerate() {
        if let Some(s) = m.get(level) {
            l[k] = Some(tape.contrastive_cce(s)?);
        }
    }
    let total = total_loss(tape, l, cfg.weights, cfg.levels)?;
    Ok(BatchLoss {
        total,
        ta: l[0],
        mm: l[1],
        sm: l[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut impl Rng, r: usize, c: usize) -> Tensor {
        Tensor::new(vec![r, c], (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn fine_value(x: &Tensor, y: &Tensor) -> f64 {
        let mut t = Tape::new();
        let (a, b) = (t.constant(x.clone()).unwrap(), t.constant(y.clone()).unwrap());
        let s = fine_similarity(&mut t, a, b).unwrap();
        t.value(s).item()
    }

    // Straight-line reference: nested loops over plain vectors.
    fn fine_oracle(x: &Tensor, y: &Tensor) -> f64 {
        let (r, c, d) = (x.rows(), y.rows(), x.cols());
        let nrm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let cos = |u: &[f64], v: &[f64]| {
            let (nu, nv) = (nrm(u), nrm(v));
            if nu < 1e-12 || nv < 1e-12 {
                0.0
            } else {
                u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv)
            }
        };
        let mut m = vec![vec![0.0; c]; r];
        for i in 0..r {
            for j in 0..c {
                m[i][j] = cos(x.row(i), y.row(j));
            }
        }
        for row in m.iter_mut() {
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in row.iter_mut() {
                *v = if hi - lo < 1e-12 { 0.0 } else { (*v - lo) / (hi - lo) };
            }
        }
        for j in 0..c {
            let s: f64 = (0..r).map(|i| m[i][j]).sum();
            for i in 0..r {
                m[i][j] = if s.abs() < 1e-12 { 1.0 / r as f64 } else { m[i][j] / s };
            }
        }
        let mut px = vec![0.0; d];
        let mut py = vec![0.0; d];
        for i in 0..r {
            for k in 0..d {
                px[k] += x.get(i, k);
                for j in 0..c {
                    py[k] += m[i][j] * y.get(j, k);
                }
            }
        }
        cos(&px, &py)
    }

    #[test]
    fn fine_trivial_cases() {
        let x = Tensor::from_rows(&[vec![0.3, -1.2, 2.0]]).unwrap();
        assert!((fine_value(&x, &x) - 1.0).abs() < 1e-12);
        assert!((fine_value(&x, &x.map(|v| -v)) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn fine_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&mut rng, 3, 4);
        let y = random(&mut rng, 2, 4);
        assert!((fine_value(&x, &y) - fine_oracle(&x, &y)).abs() < 1e-9);
        for _ in 0..100 {
            let (r, c, d) = (rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(1..=5));
            let x = random(&mut rng, r, d);
            let y = random(&mut rng, c, d);
            assert!((fine_value(&x, &y) - fine_oracle(&x, &y)).abs() < 1e-9);
        }
    }

    #[test]
    fn fine_reduces_to_pooled_cosine() {
        // Columns of the weight matrix sum to one, so pooling W*Y equals pooling Y.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let x = random(&mut rng, 4, 3);
            let y = random(&mut rng, 5, 3);
            let sx: Vec<f64> = (0..3).map(|k| (0..4).map(|i| x.get(i, k)).sum()).collect();
            let sy: Vec<f64> = (0..3).map(|k| (0..5).map(|i| y.get(i, k)).sum()).collect();
            assert!((fine_value(&x, &y) - crate::tensor::cosine(&sx, &sy)).abs() < 1e-12);
        }
    }

    #[test]
    fn fine_width_mismatch() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3])).unwrap();
        let b = t.constant(Tensor::zeros(&[2, 4])).unwrap();
        assert!(fine_similarity(&mut t, a, b).is_err());
    }

    #[test]
    fn sentence_examples() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![1.0, 1.0])).unwrap();
        let b = t.constant(Tensor::vector(vec![1.0, 0.0])).unwrap();
        let c = t.constant(Tensor::vector(vec![0.0, 1.0])).unwrap();
        let s = sentence_similarity(&mut t, a, b).unwrap();
        assert!((t.value(s).item() - 0.5f64.sqrt()).abs() < 1e-6);
        let s = sentence_similarity(&mut t, b, c).unwrap();
        assert_eq!(t.value(s).item(), 0.0);
        let s = sentence_similarity(&mut t, a, a).unwrap();
        assert!((t.value(s).item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights() {
        let w = LossWeights::default();
        let e = w.effective(Levels::all()).unwrap();
        assert!((e[0] - 0.5).abs() < 1e-15 && (e[1] - 0.2).abs() < 1e-15 && (e[2] - 0.3).abs() < 1e-12);
        let e = LossWeights { alpha: 1.0, beta: 0.0 }.effective(Levels::all()).unwrap();
        assert_eq!(e, [1.0, 0.0, 0.0]);
        let e = w.effective("ta,sm".parse().unwrap()).unwrap();
        assert!((e[0] - 0.5 / 0.8).abs() < 1e-12 && e[1] == 0.0 && (e[2] - 0.3 / 0.8).abs() < 1e-12);
        // enabled levels all carry zero weight
        let e = LossWeights { alpha: 1.0, beta: 0.0 }.effective("mm,sm".parse().unwrap()).unwrap();
        assert_eq!(e, [0.0, 0.5, 0.5]);
        assert!(LossWeights { alpha: 0.7, beta: 0.4 }.validate().is_err());
        assert!(LossWeights { alpha: -0.1, beta: 0.4 }.validate().is_err());
        assert!("".parse::<Levels>().is_err());
        assert!("ta,xx".parse::<Levels>().is_err());
        assert_eq!("sm,ta".parse::<Levels>().unwrap().to_string(), "ta,sm");
    }

    #[test]
    fn combined_examples() {
        let w = LossWeights::default();
        let s = LevelSimilarities { ta: 0.8, mm: 0.6, sm: 0.4 };
        assert!((combined_similarity(&s, w, Levels::all()).unwrap() - 0.64).abs() < 1e-12);
        let ones = LevelSimilarities { ta: 1.0, mm: 1.0, sm: 1.0 };
        for (a, b) in [(0.0, 0.0), (0.3, 0.3), (1.0, 0.0), (0.5, 0.2)] {
            let w = LossWeights { alpha: a, beta: b };
            assert!((combined_similarity(&ones, w, Levels::all()).unwrap() - 1.0).abs() < 1e-12);
        }
        let only_sm = combined_similarity(&s, w, Levels::only(Level::SentenceMolecule)).unwrap();
        assert!((only_sm - 0.4).abs() < 1e-12);
    }

    #[test]
    fn total_loss_examples() {
        let mut t = Tape::new();
        let v = [1.3, 0.4, 2.2].map(|x| t.constant(Tensor::scalar(x)).unwrap());
        let l = total_loss(&mut t, v.map(Some), LossWeights::default(), Levels::all()).unwrap();
        assert!((t.value(l).item() - (0.5 * 1.3 + 0.2 * 0.4 + 0.3 * 2.2)).abs() < 1e-12);
        let l = total_loss(&mut t, v.map(Some), LossWeights { alpha: 1.0, beta: 0.0 }, Levels::all()).unwrap();
        assert!((t.value(l).item() - 1.3).abs() < 1e-15);
        let same = [0.9; 3].map(|x| t.constant(Tensor::scalar(x)).unwrap());
        for (a, b) in [(0.1, 0.6), (0.0, 1.0), (0.5, 0.2)] {
            let l = total_loss(&mut t, same.map(Some), LossWeights { alpha: a, beta: b }, Levels::all()).unwrap();
            assert!((t.value(l).item() - 0.9).abs() < 1e-12);
        }
        let bad = total_loss(&mut t, v.map(Some), LossWeights { alpha: 0.9, beta: 0.9 }, Levels::all());
        assert!(matches!(bad, Err(LossError::Contract(_))));
    }

    fn sample(rng: &mut impl Rng, d: usize) -> (TextReps, MolReps) {
        let (nt, na, nm) = (rng.gen_range(1..5), rng.gen_range(1..6), rng.gen_range(1..4));
        (
            TextReps {
                sentence: random(rng, 1, d),
                tokens: random(rng, nt, d),
            },
            MolReps {
                molecule: random(rng, 1, d),
                atoms: random(rng, na, d),
                motifs: random(rng, nm, d),
            },
        )
    }

    fn bind(t: &mut Tape, text: &TextReps, mol: &MolReps) -> (TextVars, MolVars) {
        (
            TextVars {
                sentence: t.constant(text.sentence.clone()).unwrap(),
                tokens: t.constant(text.tokens.clone()).unwrap(),
            },
            MolVars {
                molecule: t.constant(mol.molecule.clone()).unwrap(),
                atoms: t.constant(mol.atoms.clone()).unwrap(),
                motifs: t.constant(mol.motifs.clone()).unwrap(),
            },
        )
    }

    #[test]
    fn batch_of_one_and_duplicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = LossConfig::default();
        let (a, ma) = sample(&mut rng, 5);
        let (b, mb) = sample(&mut rng, 5);
        let mut t = Tape::new();
        let (ta, tma) = bind(&mut t, &a, &ma);
        let (tb, tmb) = bind(&mut t, &b, &mb);
        let one = batch_matrices(&mut t, &[ta], &[tma], &cfg).unwrap();
        let direct = level_similarities(&a, &ma, &cfg).unwrap();
        assert!((t.value(one.sm.unwrap()).item() - direct.sm).abs() < 1e-15);
        assert!((t.value(one.ta.unwrap()).item() - direct.ta).abs() < 1e-15);
        let dup = batch_matrices(&mut t, &[ta, tb, ta], &[tma, tmb, tma], &cfg).unwrap();
        for level in Level::ALL {
            let s = t.value(dup.get(level).unwrap());
            for k in 0..3 {
                assert_eq!(s.get(0, k), s.get(2, k));
                assert_eq!(s.get(k, 0), s.get(k, 2));
            }
        }
        assert!(matches!(
            batch_matrices(&mut t, &[ta, tb], &[tma], &cfg),
            Err(LossError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn matched_pairs_dominate_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = LossConfig::default();
        let base: Vec<Tensor> = (0..2).map(|_| random(&mut rng, 3, 6)).collect();
        let mut t = Tape::new();
        let mut texts = Vec::new();
        let mut mols = Vec::new();
        for x in &base {
            let noisy = x.map(|v| v + 1e-3);
            let text = TextReps {
                sentence: Tensor::new(vec![1, 6], x.row(0).to_vec()).unwrap(),
                tokens: x.clone(),
            };
            let mol = MolReps {
                molecule: Tensor::new(vec![1, 6], noisy.row(0).to_vec()).unwrap(),
                atoms: noisy.clone(),
                motifs: noisy,
            };
            let (tv, mv) = bind(&mut t, &text, &mol);
            texts.push(tv);
            mols.push(mv);
        }
        let m = batch_matrices(&mut t, &texts, &mols, &cfg).unwrap();
        for level in Level::ALL {
            let s = t.value(m.get(level).unwrap());
            for q in 0..2 {
                for k in 0..2 {
                    if q != k {
                        assert!(s.get(q, q) > s.get(q, k) && s.get(k, k) > s.get(q, k), "{:?}", level);
                    }
                }
            }
        }
    }

    #[test]
    fn temperature_scales_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, ma) = sample(&mut rng, 4);
        let mut t = Tape::new();
        let (ta, tma) = bind(&mut t, &a, &ma);
        let cfg = LossConfig {
            temperature: 0.1,
            ..Default::default()
        };
        let m = batch_matrices(&mut t, &[ta], &[tma], &cfg).unwrap();
        let direct = level_similarities(&a, &ma, &LossConfig::default()).unwrap();
        assert!((t.value(m.sm.unwrap()).item() - direct.sm * 10.0).abs() < 1e-12);
    }

    #[test]
    fn rescaling_a_sample_keeps_similarities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = LossConfig::default();
        for _ in 0..20 {
            let (a, ma) = sample(&mut rng, 4);
            let k = rng.gen_range(0.1..10.0);
            let scaled_text = TextReps {
                sentence: a.sentence.map(|v| v * k),
                tokens: a.tokens.map(|v| v * k),
            };
            let scaled_mol = MolReps {
                molecule: ma.molecule.map(|v| v * 2.5),
                atoms: ma.atoms.map(|v| v * 0.3),
                motifs: ma.motifs.map(|v| v * 7.0),
            };
            let s1 = level_similarities(&a, &ma, &cfg).unwrap();
            let s2 = level_similarities(&scaled_text, &scaled_mol, &cfg).unwrap();
            for (x, y) in s1.as_array().iter().zip(s2.as_array()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn disabled_levels_are_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (a, ma) = sample(&mut rng, 4);
        let mut t = Tape::new();
        let (ta, tma) = bind(&mut t, &a, &ma);
        let cfg = LossConfig {
            levels: Levels::only(Level::SentenceMolecule),
            ..Default::default()
        };
        let l = batch_loss(&mut t, &[ta], &[tma], &cfg).unwrap();
        assert!(l.ta.is_none() && l.mm.is_none());
        assert_eq!(t.value(l.total).item(), t.value(l.sm.unwrap()).item());
    }
}
