use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use thiserror::Error;

use orma_core::chem::{
    decompose, motif_signature, parse_smiles_with, validate_graph, CleavageRule, MolGraph, SmilesError,
};
use orma_core::encoders::{split_words, EncoderError, PreparedMolecule, Vocab};
use orma_core::hetero::{build_hetero_graph, normalized_adjacency, EdgeKind, GraphError};
use orma_core::loss::level_similarities;
use orma_core::model::Model;
use orma_core::ot::solve_alignment;
use orma_core::pipeline::{
    evaluate, load_checkpoint, load_dataset, save_checkpoint, split_indices, train, Dataset, PipelineError,
    RunConfig,
};
use orma_core::retrieval::{Direction, Pool, DEFAULT_KS};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
    /// Standard output went away, e.g. piped into `head`.
    #[error("output closed")]
    Closed,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
            CliError::Closed => 0,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_input_error() {
            CliError::Input(e.message())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

impl From<SmilesError> for CliError {
    fn from(e: SmilesError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return CliError::Closed;
        }
        CliError::Internal(format!("write failed: {}", e))
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "orma", version, about = "Text-molecule retrieval with motif-level optimal transport alignment")]
struct Cli {
    /// Settings file with `key = value` lines
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one setting; may be repeated
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Increase log detail (-v debug, -vv trace)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only log warnings and errors
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct SmilesOpts {
    smiles: String,
    /// Keep only the largest '.'-separated fragment
    #[arg(long)]
    allow_fragments: bool,
    /// Reject atoms above their usual valence
    #[arg(long)]
    strict_valence: bool,
}

#[derive(Args, Debug)]
struct EvalOpts {
    /// Trained checkpoint
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Dataset the checkpoint was trained on (split with the stored seed)
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    /// Candidate pool; defaults to the stored setting
    #[arg(long)]
    pool: Option<Pool>,
    /// Cutoffs for hits@k
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KS.to_vec())]
    k: Vec<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a SMILES string and print atoms, bonds and rings
    Parse(SmilesOpts),
    /// Split a molecule into motifs
    Decompose {
        #[command(flatten)]
        smiles: SmilesOpts,
        /// Also print the rule table and the rule behind each cut
        #[arg(long)]
        rules: bool,
    },
    /// Build the atom/motif/molecule graph
    Graph {
        #[command(flatten)]
        smiles: SmilesOpts,
        /// Add atom-atom edges for bonds
        #[arg(long)]
        bond_edges: bool,
    },
    /// Align the words of a text to the motifs of a molecule
    Align {
        text: String,
        smiles: String,
        /// Trained checkpoint; without one a freshly initialized model is used
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Train on a dataset and write a checkpoint
    Train {
        /// `id<TAB>smiles<TAB>description` file
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// Checkpoint destination
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Rank test-split queries against a candidate pool
    Retrieve {
        #[command(flatten)]
        opts: EvalOpts,
        #[arg(long, default_value_t = Direction::TextToMol)]
        direction: Direction,
    },
    /// Retrieval metrics in both directions
    Eval {
        #[command(flatten)]
        opts: EvalOpts,
    },
}

fn overrides(cli: &Cli) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {}", path.display(), e)))?;
        out.extend(RunConfig::settings(&text)?);
    }
    for s in &cli.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("--set expects KEY=VALUE, got '{}'", s)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn fresh_config(cli: &Cli) -> Result<RunConfig> {
    let mut c = RunConfig::default();
    for (k, v) in overrides(cli)? {
        c.set(&k, &v)?;
    }
    c.validate()?;
    Ok(c)
}

/// Loads a checkpoint and applies only settings that leave the trained
/// parameters meaningful.
fn load_model(cli: &Cli, path: &Path) -> Result<Model> {
    let mut model = load_checkpoint(path)?;
    for (k, v) in overrides(cli)? {
        if !RunConfig::is_inference_key(&k) {
            return Err(CliError::Input(format!("'{}' is fixed by the checkpoint and cannot be overridden", k)));
        }
        model.config.set(&k, &v)?;
    }
    model.config.validate()?;
    Ok(model)
}

fn parse_with(cli: &Cli, s: &SmilesOpts) -> Result<(RunConfig, MolGraph)> {
    let mut cfg = fresh_config(cli)?;
    cfg.allow_fragments |= s.allow_fragments;
    cfg.strict_valence |= s.strict_valence;
    let g = parse_smiles_with(&s.smiles, cfg.parse_options())?;
    Ok((cfg, g))
}

fn cmd_parse(out: &mut impl Write, cli: &Cli, s: &SmilesOpts) -> Result<()> {
    let (_, g) = parse_with(cli, s)?;
    let report = validate_graph(&g);
    for issue in &report.issues {
        warn!("{}", issue);
    }
    writeln!(out, "atoms\t{}", g.n_atoms())?;
    writeln!(out, "bonds\t{}", g.bonds.len())?;
    writeln!(out, "rings\t{}", g.rings.len())?;
    for a in &g.atoms {
        writeln!(
            out,
            "atom\t{}\t{}\taromatic={}\tcharge={}\tdegree={}\tring={}",
            a.index, a.element, a.aromatic, a.charge, a.degree, a.in_ring
        )?;
    }
    for (i, b) in g.bonds.iter().enumerate() {
        writeln!(out, "bond\t{}\t{}-{}\t{}\tring={}", i, b.a, b.b, b.order.name(), b.in_ring)?;
    }
    for (i, r) in g.rings.iter().enumerate() {
        writeln!(out, "ring\t{}\t{}", i, join(r))?;
    }
    Ok(())
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn cmd_decompose(out: &mut impl Write, cli: &Cli, s: &SmilesOpts, rules: bool) -> Result<()> {
    let (_, g) = parse_with(cli, s)?;
    let p = decompose(&g);
    if rules {
        for line in orma_core::chem::motif::rule_table().lines() {
            writeln!(out, "# {}", line)?;
        }
        let fired: Vec<(usize, CleavageRule)> = orma_core::chem::motif::classify_bonds(&g);
        for (bi, rule) in fired {
            let b = &g.bonds[bi];
            writeln!(out, "cut\t{}\t{}-{}\t{}", bi, b.a, b.b, rule)?;
        }
    }
    writeln!(out, "motifs\t{}", p.len())?;
    for (i, m) in p.motifs.iter().enumerate() {
        writeln!(out, "motif\t{}\t{}\t{}", i, motif_signature(&g, m), join(m))?;
    }
    Ok(())
}

fn cmd_graph(out: &mut impl Write, cli: &Cli, s: &SmilesOpts, bond_edges: bool) -> Result<()> {
    let (mut cfg, g) = parse_with(cli, s)?;
    cfg.bond_edges |= bond_edges;
    let p = decompose(&g);
    let h = build_hetero_graph(&g, &p, cfg.graph_config())?;
    writeln!(out, "nodes\t{}", h.n_nodes())?;
    writeln!(out, "atom_nodes\t{}", h.n_atoms)?;
    writeln!(out, "motif_nodes\t{}", h.n_motifs)?;
    for kind in [EdgeKind::MotifAtom, EdgeKind::MoleculeMotif, EdgeKind::AtomAtom] {
        writeln!(out, "edges:{}\t{}", kind.name(), h.count_edges(kind))?;
    }
    for e in &h.edges {
        writeln!(out, "edge\t{}\t{}\t{}", e.kind.name(), e.a, e.b)?;
    }
    let adj = normalized_adjacency(&h);
    let n = adj.rows();
    let asym = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (adj.get(i, j) - adj.get(j, i)).abs())
        .fold(0.0, f64::max);
    writeln!(out, "adjacency_asymmetry\t{:.3e}", asym)?;
    Ok(())
}

fn cmd_align(out: &mut impl Write, cli: &Cli, text: &str, smiles: &str, ckpt: Option<&Path>) -> Result<()> {
    let model = match ckpt {
        Some(p) => load_model(cli, p)?,
        None => {
            let cfg = fresh_config(cli)?;
            warn!("no checkpoint given; using an untrained model");
            Model::init(cfg, Vocab::build([text], 1))
        }
    };
    let cfg = &model.config;
    let mol = PreparedMolecule::from_smiles(smiles, cfg.parse_options(), cfg.graph_config())?;
    let t = model.encode_text(text)?;
    let m = model.encode_molecule(&mol)?;
    let (_, plan, al) = solve_alignment(&t.tokens, &m.motifs, &cfg.ipot(), cfg.align_mode)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let words = split_words(text);
    let sigs: Vec<String> = mol
        .partition
        .motifs
        .iter()
        .map(|mo| motif_signature(&mol.graph, mo))
        .collect();
    writeln!(out, "ipot_iterations\t{}", plan.iterations)?;
    writeln!(out, "ipot_converged\t{}", plan.converged)?;
    writeln!(out, "marginal_violation\t{:.3e}", plan.marginal_violation)?;
    writeln!(out, "transport_cost\t{:.6}", plan.objective())?;
    for (i, &j) in al.assignment.iter().enumerate() {
        writeln!(
            out,
            "token\t{}\t{}\tmotif={}\t{}\tmass={:.4}",
            i,
            words.get(i).map_or("?", |w| w.as_str()),
            j,
            sigs[j],
            plan.t.get(i, j)
        )?;
    }
    let s = level_similarities(&t, &m, &cfg.inference_config()).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(out, "sim_ta\t{:.6}", s.ta)?;
    writeln!(out, "sim_mm\t{:.6}", s.mm)?;
    writeln!(out, "sim_sm\t{:.6}", s.sm)?;
    let combined = orma_core::loss::combined_similarity(&s, cfg.infer_weights(), cfg.levels)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(out, "similarity\t{:.6}", combined)?;
    Ok(())
}

fn read_data(path: &Path, cfg: &RunConfig) -> Result<Dataset> {
    // The loader logs each skipped line and the record accounting.
    Ok(load_dataset(path, cfg.parse_options())?)
}

fn write_accounting(out: &mut impl Write, data: &Dataset) -> Result<()> {
    writeln!(out, "records_in\t{}", data.records_in())?;
    writeln!(out, "records_used\t{}", data.records.len())?;
    writeln!(out, "records_skipped\t{}", data.skipped.len())?;
    Ok(())
}

fn cmd_train(out: &mut impl Write, cli: &Cli, data_path: &Path, ckpt: &Path) -> Result<()> {
    let cfg = fresh_config(cli)?;
    let data = read_data(data_path, &cfg)?;
    let split = split_indices(data.records.len(), cfg.seed);
    let pick = |ix: &[usize]| ix.iter().map(|&i| data.records[i].clone()).collect::<Vec<_>>();
    let (tr, va) = (pick(&split.train), pick(&split.valid));
    info!(
        "split: {} train, {} valid, {} test",
        split.train.len(),
        split.valid.len(),
        split.test.len()
    );
    let outcome = train(&cfg, &tr, &va)?;
    save_checkpoint(ckpt, &outcome.model)?;
    info!("best epoch {}; checkpoint written to {}", outcome.best_epoch, ckpt.display());
    write_accounting(out, &data)?;
    for e in &outcome.log {
        match e.valid_hits1 {
            Some(h) => writeln!(out, "epoch\t{}\tloss={:.6}\tvalid_hits@1={:.6}", e.epoch, e.loss, h)?,
            None => writeln!(out, "epoch\t{}\tloss={:.6}", e.epoch, e.loss)?,
        }
    }
    writeln!(out, "best_epoch\t{}", outcome.best_epoch)?;
    Ok(())
}

fn retrieval_report(
    out: &mut impl Write,
    cli: &Cli,
    opts: &EvalOpts,
    directions: &[Direction],
) -> Result<()> {
    let mut model = load_model(cli, &opts.checkpoint)?;
    if let Some(p) = opts.pool {
        model.config.pool = p;
    }
    if opts.k.is_empty() || opts.k.contains(&0) {
        return Err(CliError::Input("--k needs positive cutoffs".into()));
    }
    let data = read_data(&opts.data, &model.config)?;
    let split = split_indices(data.records.len(), model.config.seed);
    if split.test.is_empty() {
        return Err(CliError::Input("the test split is empty".into()));
    }
    let examples = model.prepare_all(&data.records)?;
    let pool = match model.config.pool {
        Pool::Test => split.test.clone(),
        Pool::Full => split.all(),
    };
    write_accounting(out, &data)?;
    for &d in directions {
        let report = evaluate(&model, &examples, &split.test, &pool, d, &opts.k)?;
        for line in report.to_string().lines() {
            info!("[{}] {}", d, line);
        }
        for line in report.tsv_lines() {
            writeln!(out, "{}\t{}", d, line)?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Parse(s) => cmd_parse(&mut out, cli, s),
        Command::Decompose { smiles, rules } => cmd_decompose(&mut out, cli, smiles, *rules),
        Command::Graph { smiles, bond_edges } => cmd_graph(&mut out, cli, smiles, *bond_edges),
        Command::Align {
            text,
            smiles,
            checkpoint,
        } => cmd_align(&mut out, cli, text, smiles, checkpoint.as_deref()),
        Command::Train { data, out: ckpt } => cmd_train(&mut out, cli, data, ckpt),
        Command::Retrieve { opts, direction } => retrieval_report(&mut out, cli, opts, &[*direction]),
        Command::Eval { opts } => {
            retrieval_report(&mut out, cli, opts, &[Direction::TextToMol, Direction::MolToText])
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) | Err(CliError::Closed) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code())
        }
    }
}
