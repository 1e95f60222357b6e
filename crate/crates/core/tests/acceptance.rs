//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits non-zero on any failure only when `ORMA_ACCEPTANCE_STRICT=1`, so a
//! known failure does not stop the remaining test targets from running.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use orma_core::encoders::{encode_molecule, encode_text, BoundParams, Vocab};
use orma_core::loss::{batch_loss, fine_similarity, total_loss, Level, Levels, LossWeights};
use orma_core::model::Model;
use orma_core::ot::{ipot, uniform, IpotConfig};
use orma_core::pipeline::{decode_checkpoint, encode_checkpoint, evaluate, planted_pairs, train, Record, RunConfig};
use orma_core::retrieval::{compute_metrics, rank_scores, Direction, MetricReport, Scored};
use orma_core::tensor::Axis;
use orma_core::{Tape, Tensor, Var};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Random magnitude in `[0.2, 1.5)` with a random sign, away from ReLU kinks.
fn signed(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let x = rng.gen_range(0.2..1.5);
            if rng.gen_bool(0.5) {
                x
            } else {
                -x
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = IpotConfig::converged();
    let (mut worst_gap, mut worst_violation) = (f64::NEG_INFINITY, 0.0f64);
    for case in 0..100 {
        let n = 2 + case % 4;
        let c = random(&mut rng, &[n, n], 0.0, 1.0);
        let plan = ipot(&c, &uniform(n), &uniform(n), &cfg).map_err(|e| e.to_string())?;
        let exact = permutations(n)
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum::<f64>() / n as f64)
            .fold(f64::INFINITY, f64::min);
        let gap = plan.objective() - exact;
        worst_gap = worst_gap.max(gap);
        worst_violation = worst_violation.max(plan.marginal_violation);
        ensure(gap <= 1e-3, || format!("case {} (n={}): objective exceeds optimum by {:.3e}", case, n, gap))?;
        ensure(plan.marginal_violation <= 1e-4, || {
            format!("case {}: marginal violation {:.3e}", case, plan.marginal_violation)
        })?;
    }
    Ok(format!(
        "100 cases, worst gap {:.2e}, worst violation {:.2e}",
        worst_gap, worst_violation
    ))
}

/// Multiplies by a fixed random tensor and sums, so every output element
/// contributes with a distinct weight.
fn reduce(t: &mut Tape, out: Var, rng: &mut ChaCha8Rng) -> Var {
    let shape = t.value(out).shape().to_vec();
    let w = t.constant(random(rng, &shape, -1.0, 1.0)).unwrap();
    let m = t.mul(out, w).unwrap();
    t.sum(m).unwrap()
}

/// Relative error between analytic and central-difference gradients of
/// `f` with respect to every input.
fn gradient_error(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let eval = |xs: &[Tensor], grad: bool| -> (f64, Vec<Tensor>) {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.param(x.clone()).unwrap()).collect();
        let out = f(&mut t, &vars);
        let v = t.value(out).item();
        if !grad {
            return (v, Vec::new());
        }
        let g = t.backward(out).unwrap();
        (v, vars.iter().zip(xs).map(|(&v, x)| g.get_or_zeros(v, x.shape())).collect())
    };
    let analytic = eval(inputs, true).1;
    let h = 1e-6;
    let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
    for (k, x) in inputs.iter().enumerate() {
        for i in 0..x.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let num = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * h);
            let a = analytic[k].data()[i];
            diff2 += (a - num) * (a - num);
            a2 += a * a;
            n2 += num * num;
        }
    }
    let scale = a2.sqrt().max(n2.sqrt());
    if scale < 1e-12 {
        diff2.sqrt()
    } else {
        diff2.sqrt() / scale
    }
}

type OpCase = (&'static str, Vec<Vec<usize>>, Box<dyn Fn(&mut Tape, &[Var]) -> Var>);

fn op_cases() -> Vec<OpCase> {
    fn o<F: Fn(&mut Tape, &[Var]) -> Var + 'static>(f: F) -> Box<dyn Fn(&mut Tape, &[Var]) -> Var> {
        Box::new(f)
    }
    vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], o(|t, v| t.matmul(v[0], v[1]).unwrap())),
        ("add", vec![vec![3, 4], vec![3, 4]], o(|t, v| t.add(v[0], v[1]).unwrap())),
        ("sub", vec![vec![3, 4], vec![3, 4]], o(|t, v| t.sub(v[0], v[1]).unwrap())),
        ("mul", vec![vec![3, 4], vec![3, 4]], o(|t, v| t.mul(v[0], v[1]).unwrap())),
        ("scale", vec![vec![3, 4]], o(|t, v| t.scale(v[0], -0.7).unwrap())),
        ("add_row_broadcast", vec![vec![3, 4], vec![4]], o(|t, v| t.add_row_broadcast(v[0], v[1]).unwrap())),
        ("relu", vec![vec![3, 4]], o(|t, v| t.relu(v[0]).unwrap())),
        ("transpose", vec![vec![3, 4]], o(|t, v| t.transpose(v[0]).unwrap())),
        ("concat_cols", vec![vec![3, 2], vec![3, 4]], o(|t, v| t.concat_cols(v[0], v[1]).unwrap())),
        ("slice_rows", vec![vec![4, 3]], o(|t, v| t.slice_rows(v[0], 1, 3).unwrap())),
        ("gather_rows", vec![vec![4, 3]], o(|t, v| t.gather_rows(v[0], &[2, 0, 2]).unwrap())),
        ("l2_normalize_rows", vec![vec![3, 4]], o(|t, v| t.l2_normalize_rows(v[0]).unwrap())),
        ("cosine_sim", vec![vec![5], vec![5]], o(|t, v| t.cosine_sim(v[0], v[1]).unwrap())),
        ("cosine_matrix", vec![vec![3, 4], vec![2, 4]], o(|t, v| t.cosine_matrix(v[0], v[1]).unwrap())),
        ("min_max_normalize(row)", vec![vec![3, 4]], o(|t, v| t.min_max_normalize(v[0], Axis::WithinRow).unwrap())),
        ("min_max_normalize(col)", vec![vec![3, 4]], o(|t, v| t.min_max_normalize(v[0], Axis::WithinColumn).unwrap())),
        ("l1_normalize(row)", vec![vec![3, 4]], o(|t, v| {
            let p = t.mul(v[0], v[0]).unwrap();
            t.l1_normalize(p, Axis::WithinRow).unwrap()
        })),
        ("l1_normalize(col)", vec![vec![3, 4]], o(|t, v| {
            let p = t.mul(v[0], v[0]).unwrap();
            t.l1_normalize(p, Axis::WithinColumn).unwrap()
        })),
        ("sum_pool", vec![vec![3, 4]], o(|t, v| t.sum_pool(v[0]).unwrap())),
        ("sum", vec![vec![3, 4]], o(|t, v| t.sum(v[0]).unwrap())),
        ("stack", vec![vec![1], vec![1], vec![1], vec![1]], o(|t, v| {
            let s: Vec<Var> = v.iter().map(|&x| t.sum(x).unwrap()).collect();
            t.stack(&s, &[2, 2]).unwrap()
        })),
        ("contrastive_cce", vec![vec![3, 3]], o(|t, v| t.contrastive_cce(v[0]).unwrap())),
        ("weighted_sum", vec![vec![2, 2], vec![3]], o(|t, v| {
            let a = t.sum(v[0]).unwrap();
            let b = t.sum(v[1]).unwrap();
            t.weighted_sum(&[(a, 0.3), (b, -1.2)]).unwrap()
        })),
    ]
}

fn toy_batch_error() -> f64 {
    let recs = planted_pairs(2, 11).unwrap();
    let mut cfg = common::planted_config(5);
    cfg.d = 6;
    cfg.f0 = 5;
    cfg.text_width = 6;
    cfg.gcn_width = 7;
    let model = Model::init(cfg, Vocab::build(recs.iter().map(|r| r.description.as_str()), 1));
    let batch = model.prepare_all(&recs).unwrap();
    let base: Vec<Tensor> = model.params.iter().map(|p| p.value.clone()).collect();
    let loss_cfg = model.config.loss_config();
    let run = |t: &mut Tape, vars: &[Var]| -> Var {
        let p = BoundParams::from_vars(&model.params, vars.to_vec()).unwrap();
        let cls = model.vocab.cls_id();
        let texts: Vec<_> = batch.iter().map(|e| encode_text(t, &p, &e.token_ids, cls).unwrap()).collect();
        let mols: Vec<_> = batch.iter().map(|e| encode_molecule(t, &p, &e.molecule).unwrap()).collect();
        batch_loss(t, &texts, &mols, &loss_cfg).unwrap().total
    };
    gradient_error(&base, &run)
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = ("", 0.0f64);
    for (name, shapes, f) in op_cases() {
        let inputs: Vec<Tensor> = shapes.iter().map(|s| signed(&mut rng, s)).collect();
        let seed = rng.gen::<u64>();
        let err = gradient_error(&inputs, &|t, v| {
            let out = f(t, v);
            reduce(t, out, &mut ChaCha8Rng::seed_from_u64(seed))
        });
        ensure(err < 1e-3, || format!("op {} relative error {:.3e}", name, err))?;
        if err > worst.1 {
            worst = (name, err);
        }
    }
    let mut fine_worst = 0.0f64;
    for _ in 0..10 {
        let (r, c, d) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(2..=5));
        let inputs = vec![signed(&mut rng, &[r, d]), signed(&mut rng, &[c, d])];
        let err = gradient_error(&inputs, &|t, v| fine_similarity(t, v[0], v[1]).unwrap());
        ensure(err < 1e-3, || format!("fine_similarity {}x{} vs {}x{}: {:.3e}", r, d, c, d, err))?;
        fine_worst = fine_worst.max(err);
    }
    let total = toy_batch_error();
    ensure(total < 1e-3, || format!("total loss on B=2 batch: relative error {:.3e}", total))?;
    Ok(format!(
        "{} ops (worst {} {:.1e}), fine_similarity {:.1e}, total loss B=2 over all parameters {:.1e}",
        op_cases().len(),
        worst.0,
        worst.1,
        fine_worst,
        total
    ))
}

fn cce(rows: &[Vec<f64>]) -> f64 {
    let mut t = Tape::new();
    let s = t.constant(Tensor::from_rows(rows).unwrap()).unwrap();
    let l = t.contrastive_cce(s).unwrap();
    t.value(l).item()
}

fn criterion_3() -> Check {
    let zero = cce(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
    ensure((zero - 2f64.ln()).abs() <= 1e-9, || format!("zeros: {}", zero))?;
    let one = cce(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    ensure((one - 0.3133).abs() <= 1e-4 && (one - (1.0 + (-1f64).exp()).ln()).abs() <= 1e-6, || {
        format!("identity: {}", one)
    })?;
    let ten = cce(&[vec![10.0, 0.0], vec![0.0, 10.0]]);
    ensure((ten - 4.54e-5).abs() <= 1e-6, || format!("10 * identity: {}", ten))?;

    let w = LossWeights { alpha: 0.5, beta: 0.2 };
    let eff = w.effective(Levels::all()).map_err(|e| e.to_string())?;
    ensure(
        eff.iter().zip([0.5, 0.2, 0.3]).all(|(a, b)| (a - b).abs() < 1e-12),
        || format!("weights {:?}", eff),
    )?;
    let mut t = Tape::new();
    let l: Vec<Var> = [1.3, 0.7, 2.1].iter().map(|&x| t.constant(Tensor::scalar(x)).unwrap()).collect();
    let total = total_loss(&mut t, [Some(l[0]), Some(l[1]), Some(l[2])], w, Levels::all()).map_err(|e| e.to_string())?;
    let got = t.value(total).item();
    let want = 0.5 * 1.3 + 0.2 * 0.7 + 0.3 * 2.1;
    ensure((got - want).abs() < 1e-12, || format!("total {} vs {}", got, want))?;
    Ok(format!(
        "ln2 {:.1e} off, identity {:.6}, 10*identity {:.4e}, weights (0.5, 0.2, 0.3)",
        (zero - 2f64.ln()).abs(),
        one,
        ten
    ))
}

fn criterion_4() -> Check {
    let corpus = common::corpus(200);
    let (mut motifs, mut nodes) = (0, 0);
    for s in &corpus {
        let (_, p, h) = common::check_structure(s)?;
        motifs += p.len();
        nodes += h.n_nodes();
    }
    Ok(format!("{} molecules, {} motifs, {} graph nodes", corpus.len(), motifs, nodes))
}

/// Trained runs shared between criteria.
static RUNS: Mutex<Option<HashMap<String, (Model, f64, f64)>>> = Mutex::new(None);

fn planted_run(key: &str, recs: &[Record], cfg: &RunConfig) -> Result<(Model, f64, f64), String> {
    if let Some(hit) = RUNS.lock().unwrap().get_or_insert_with(HashMap::new).get(key) {
        return Ok(hit.clone());
    }
    let out = train(cfg, recs, &[]).map_err(|e| e.to_string())?;
    let first = out.log.first().map_or(f64::NAN, |e| e.loss);
    let last = out.log.last().map_or(f64::NAN, |e| e.loss);
    let entry = (out.model, first, last);
    RUNS.lock().unwrap().get_or_insert_with(HashMap::new).insert(key.to_string(), entry.clone());
    Ok(entry)
}

fn hits1(model: &Model, recs: &[Record]) -> Result<(MetricReport, MetricReport), String> {
    let ex = model.prepare_all(recs).map_err(|e| e.to_string())?;
    let all: Vec<usize> = (0..ex.len()).collect();
    let t2m = evaluate(model, &ex, &all, &all, Direction::TextToMol, &[1, 5]).map_err(|e| e.to_string())?;
    let m2t = evaluate(model, &ex, &all, &all, Direction::MolToText, &[1, 5]).map_err(|e| e.to_string())?;
    Ok((t2m, m2t))
}

const DATA_SEED: u64 = 3;
const TRAIN_SEED: u64 = 7;

fn eight_pair_config() -> RunConfig {
    let mut c = common::planted_config(TRAIN_SEED);
    c.batch_size = 4;
    c.epochs = 200;
    c
}

fn fifty_pair_config(levels: Levels) -> RunConfig {
    let mut c = common::planted_config(TRAIN_SEED);
    c.batch_size = 8;
    c.epochs = 100;
    c.levels = levels;
    c
}

fn criterion_5() -> Check {
    let eight = planted_pairs(8, DATA_SEED).map_err(|e| e.to_string())?;
    let (model, first, last) = planted_run("8", &eight, &eight_pair_config())?;
    let (t2m, m2t) = hits1(&model, &eight)?;
    ensure(t2m.hits_at[&1] == 1.0 && m2t.hits_at[&1] == 1.0, || {
        format!("8 pairs: hits@1 t2m {:.3} m2t {:.3}", t2m.hits_at[&1], m2t.hits_at[&1])
    })?;
    let drop = 1.0 - last / first;
    ensure(drop >= 0.9, || format!("8 pairs: loss fell only {:.1}% ({} -> {})", 100.0 * drop, first, last))?;

    let fifty = planted_pairs(50, DATA_SEED).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let (model, _, _) = planted_run("50:all", &fifty, &fifty_pair_config(Levels::all()))?;
    let took = started.elapsed();
    let (t2m50, m2t50) = hits1(&model, &fifty)?;
    ensure(took <= Duration::from_secs(600), || format!("50 pairs took {:.0?}", took))?;
    ensure(t2m50.hits_at[&1] >= 0.9 && m2t50.hits_at[&1] >= 0.9, || {
        format!("50 pairs: hits@1 t2m {:.3} m2t {:.3}", t2m50.hits_at[&1], m2t50.hits_at[&1])
    })?;
    Ok(format!(
        "8 pairs hits@1 t2m {:.2} m2t {:.2}, loss -{:.1}%; 50 pairs hits@1 t2m {:.2} m2t {:.2} in {:.0?}",
        t2m.hits_at[&1],
        m2t.hits_at[&1],
        100.0 * drop,
        t2m50.hits_at[&1],
        m2t50.hits_at[&1],
        took
    ))
}

fn criterion_6() -> Check {
    let fifty = planted_pairs(50, DATA_SEED).map_err(|e| e.to_string())?;
    let (all_model, _, _) = planted_run("50:all", &fifty, &fifty_pair_config(Levels::all()))?;
    let (a_t2m, a_m2t) = hits1(&all_model, &fifty)?;
    let (a_t, a_m) = (a_t2m.hits_at[&1], a_m2t.hits_at[&1]);
    let mut parts = vec![format!("all t2m {:.2} m2t {:.2}", a_t, a_m)];
    let mut beaten = Vec::new();
    for level in Level::ALL {
        let key = format!("50:{}", level.code());
        let (m, _, _) = planted_run(&key, &fifty, &fifty_pair_config(Levels::only(level)))?;
        let (t2m, m2t) = hits1(&m, &fifty)?;
        let (t, mm) = (t2m.hits_at[&1], m2t.hits_at[&1]);
        parts.push(format!("{} t2m {:.2} m2t {:.2}", level.code(), t, mm));
        if t > a_t || mm > a_m {
            beaten.push(level.code());
        }
    }
    let summary = parts.join("; ");
    if beaten.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{} (single level {} beats all three)", summary, beaten.join(",")))
    }
}

fn probe_outputs(model: &Model, recs: &[Record]) -> Vec<u64> {
    let mut bits = Vec::new();
    for e in model.prepare_all(recs).unwrap() {
        let t = model.encode_text_ids(&e.token_ids).unwrap();
        let m = model.encode_molecule(&e.molecule).unwrap();
        for x in [&t.sentence, &t.tokens, &m.molecule, &m.atoms, &m.motifs] {
            bits.extend(x.data().iter().map(|v| v.to_bits()));
        }
    }
    bits
}

fn criterion_7() -> Check {
    let eight = planted_pairs(8, DATA_SEED).map_err(|e| e.to_string())?;
    let (cached, _, _) = planted_run("8", &eight, &eight_pair_config())?;
    let again = train(&eight_pair_config(), &eight, &[]).map_err(|e| e.to_string())?.model;
    let (r1, r2) = (hits1(&cached, &eight)?, hits1(&again, &eight)?);
    ensure(r1 == r2, || "two seeded runs disagree on metrics".to_string())?;
    ensure(cached == again, || "two seeded runs disagree on parameters".to_string())?;

    let loaded = decode_checkpoint(&encode_checkpoint(&cached).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (before, after) = (probe_outputs(&cached, &eight), probe_outputs(&loaded, &eight));
    ensure(before == after, || "checkpoint round trip changed probe outputs".to_string())?;
    ensure(hits1(&loaded, &eight)? == r1, || "checkpoint round trip changed metrics".to_string())?;
    Ok(format!("identical reports across runs; {} probe values bit-identical after reload", before.len()))
}

fn ranked(rank: usize) -> orma_core::retrieval::RankedResult {
    let scored = (0..rank.max(1))
        .map(|i| Scored {
            id: if i + 1 == rank { "truth".to_string() } else { format!("c{:02}", i) },
            score: 1.0 - i as f64 * 0.1,
        })
        .collect();
    rank_scores("q", "truth", scored).unwrap()
}

fn report(ranks: &[usize], ks: &[usize]) -> MetricReport {
    let results: Vec<_> = ranks.iter().map(|&r| ranked(r)).collect();
    compute_metrics(&results, ks).unwrap()
}

fn criterion_8() -> Check {
    let a = report(&[1, 2, 4], &[1, 10]);
    ensure((a.mrr - 0.5833).abs() <= 1e-4, || format!("mrr {}", a.mrr))?;
    ensure((a.mean_rank - 2.3333).abs() <= 1e-4, || format!("mean rank {}", a.mean_rank))?;
    ensure((a.hits_at[&1] - 1.0 / 3.0).abs() <= 1e-4, || format!("hits@1 {}", a.hits_at[&1]))?;
    let b = report(&[1, 1, 1, 1], &[1]);
    ensure(b.hits_at[&1] == 1.0 && b.mrr == 1.0 && b.mean_rank == 1.0, || format!("all ones {:?}", b))?;
    let c = report(&[3], &[1, 10]);
    ensure(c.hits_at[&1] == 0.0 && c.hits_at[&10] == 1.0, || format!("rank 3 {:?}", c))?;
    ensure(a.recall_at == a.hits_at, || "recall differs from hits".to_string())?;
    Ok(format!("ranks [1,2,4]: mrr {:.4}, mean rank {:.4}", a.mrr, a.mean_rank))
}

fn main() {
    let criteria: [(&str, Option<Duration>, fn() -> Check); 8] = [
        ("OT oracle equivalence", Some(Duration::from_secs(10)), criterion_1),
        ("gradient integrity", Some(Duration::from_secs(30)), criterion_2),
        ("loss arithmetic", None, criterion_3),
        ("structural invariants", Some(Duration::from_secs(10)), criterion_4),
        ("overfitting retrieval", None, criterion_5),
        ("ablation direction", None, criterion_6),
        ("determinism and round trip", None, criterion_7),
        ("metric arithmetic", None, criterion_8),
    ];
    let mut failed = Vec::new();
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".to_string()));
        let took = started.elapsed();
        let result = match (result, budget) {
            (Ok(d), Some(b)) if took > *b => Err(format!("{}; exceeded {:?}", d, b)),
            (r, _) => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{} criterion {} ({}) [{:.2?}]: {}", tag, i + 1, name, took, detail);
        if result.is_err() {
            failed.push(i + 1);
        }
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() && std::env::var("ORMA_ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
