use std::fmt::Write as _;
use std::path::Path;

use super::PipelineError;
use crate::encoders::EncoderDims;
use crate::hetero::GraphConfig;
use crate::loss::{Levels, LossConfig, LossWeights};
use crate::ot::{AlignMode, IpotConfig};
use crate::retrieval::Pool;

/// Every knob of a run. Parsed from `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Weights used for ranking; fall back to `alpha`/`beta` when unset.
    pub infer_alpha: Option<f64>,
    pub infer_beta: Option<f64>,
    pub temperature: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_text: f64,
    pub lr_rest: f64,
    pub d: usize,
    pub f0: usize,
    pub text_width: usize,
    pub mixer_layers: usize,
    pub gcn_width: usize,
    pub max_text_len: usize,
    pub min_freq: usize,
    pub seed: u64,
    pub bond_edges: bool,
    pub align_mode: AlignMode,
    pub levels: Levels,
    pub pool: Pool,
    pub ipot_outer: usize,
    pub ipot_inner: usize,
    pub ipot_prox: f64,
    pub ipot_tol: f64,
    pub allow_fragments: bool,
    pub strict_valence: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ipot = IpotConfig::default();
        RunConfig {
            alpha: 0.5,
            beta: 0.2,
            infer_alpha: None,
            infer_beta: None,
            temperature: 1.0,
            epochs: 60,
            batch_size: 32,
            lr_text: 3e-5,
            lr_rest: 1e-4,
            d: 300,
            f0: 64,
            text_width: 128,
            mixer_layers: 2,
            gcn_width: 300,
            max_text_len: 256,
            min_freq: 1,
            seed: 0,
            bond_edges: false,
            align_mode: AlignMode::Mass,
            levels: Levels::all(),
            pool: Pool::Test,
            ipot_outer: ipot.outer,
            ipot_inner: ipot.inner,
            ipot_prox: ipot.prox,
            ipot_tol: ipot.tol,
            allow_fragments: false,
            strict_valence: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse()
        .map_err(|_| PipelineError::Config(format!("invalid value '{}' for '{}'", value, key)))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, PipelineError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(PipelineError::Config(format!("invalid boolean '{}' for '{}'", value, key))),
    }
}

fn align_mode_name(m: AlignMode) -> &'static str {
    match m {
        AlignMode::Mass => "mass",
        AlignMode::CostWeighted => "cost-weighted",
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let v = value.trim();
        match key.trim() {
            "alpha" => self.alpha = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "infer_alpha" => self.infer_alpha = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "infer_beta" => self.infer_beta = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "temperature" => self.temperature = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "lr_text" => self.lr_text = parse(key, v)?,
            "lr_rest" => self.lr_rest = parse(key, v)?,
            "d" => self.d = parse(key, v)?,
            "f0" => self.f0 = parse(key, v)?,
            "text_width" => self.text_width = parse(key, v)?,
            "mixer_layers" => self.mixer_layers = parse(key, v)?,
            "gcn_width" => self.gcn_width = parse(key, v)?,
            "max_text_len" => self.max_text_len = parse(key, v)?,
            "min_freq" => self.min_freq = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "bond_edges" => self.bond_edges = parse_bool(key, v)?,
            "align_mode" => self.align_mode = v.parse().map_err(PipelineError::Config)?,
            "levels" => {
                self.levels = v
                    .parse()
                    .map_err(|e: crate::loss::LossError| PipelineError::Config(e.to_string()))?
            }
            "pool" => self.pool = v.parse().map_err(PipelineError::Config)?,
            "ipot_outer" => self.ipot_outer = parse(key, v)?,
            "ipot_inner" => self.ipot_inner = parse(key, v)?,
            "ipot_prox" => self.ipot_prox = parse(key, v)?,
            "ipot_tol" => self.ipot_tol = parse(key, v)?,
            "allow_fragments" => self.allow_fragments = parse_bool(key, v)?,
            "strict_valence" => self.strict_valence = parse_bool(key, v)?,
            other => return Err(PipelineError::Config(format!("unknown config key '{}'", other))),
        }
        Ok(())
    }

    /// Splits `key = value` lines into pairs; `#` starts a comment.
    pub fn settings(text: &str) -> Result<Vec<(String, String)>, PipelineError> {
        let mut out = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), PipelineError> {
        for (k, v) in Self::settings(text)? {
            self.set(&k, &v)
                .map_err(|e| PipelineError::Config(format!("{}: {}", k, e.message())))?;
        }
        Ok(())
    }

    /// Keys that may change on a trained model without touching its
    /// parameters or data split.
    pub fn is_inference_key(key: &str) -> bool {
        matches!(
            key,
            "infer_alpha"
                | "infer_beta"
                | "levels"
                | "pool"
                | "align_mode"
                | "ipot_outer"
                | "ipot_inner"
                | "ipot_prox"
                | "ipot_tol"
        )
    }

    pub fn from_text(text: &str) -> Result<Self, PipelineError> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Input(format!("cannot read config {}: {}", path.display(), e)))?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        self.weights().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.infer_weights().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.lr_text >= 0.0 && self.lr_rest >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        if self.d == 0 || self.f0 == 0 || self.text_width == 0 || self.gcn_width == 0 {
            return bad("widths must be positive");
        }
        if self.max_text_len < 2 {
            return bad("max_text_len must be at least 2");
        }
        if self.ipot_outer == 0 || self.ipot_inner == 0 || !(self.ipot_prox > 0.0) {
            return bad("ipot_outer, ipot_inner and ipot_prox must be positive");
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn infer_weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.infer_alpha.unwrap_or(self.alpha),
            beta: self.infer_beta.unwrap_or(self.beta),
        }
    }

    pub fn ipot(&self) -> IpotConfig {
        IpotConfig {
            outer: self.ipot_outer,
            inner: self.ipot_inner,
            prox: self.ipot_prox,
            tol: self.ipot_tol,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            weights: self.weights(),
            levels: self.levels,
            temperature: self.temperature,
            ipot: self.ipot(),
            align_mode: self.align_mode,
        }
    }

    /// Scoring uses the inference weights and no temperature.
    pub fn inference_config(&self) -> LossConfig {
        LossConfig {
            weights: self.infer_weights(),
            temperature: 1.0,
            ..self.loss_config()
        }
    }

    pub fn graph_config(&self) -> GraphConfig {
        GraphConfig {
            bond_edges: self.bond_edges,
        }
    }

    pub fn parse_options(&self) -> crate::chem::ParseOptions {
        crate::chem::ParseOptions {
            allow_fragments: self.allow_fragments,
            strict_valence: self.strict_valence,
        }
    }

    pub fn encoder_dims(&self, vocab_size: usize) -> EncoderDims {
        EncoderDims {
            vocab_size,
            text_width: self.text_width,
            max_text_len: self.max_text_len,
            mixer_layers: self.mixer_layers,
            f0: self.f0,
            gcn_width: self.gcn_width,
            d: self.d,
        }
    }

    /// Every key in a fixed order; `from_text(to_text())` is the identity.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{} = {}", k, v);
        };
        kv("alpha", self.alpha.to_string());
        kv("beta", self.beta.to_string());
        kv("infer_alpha", opt(self.infer_alpha));
        kv("infer_beta", opt(self.infer_beta));
        kv("temperature", self.temperature.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("lr_text", self.lr_text.to_string());
        kv("lr_rest", self.lr_rest.to_string());
        kv("d", self.d.to_string());
        kv("f0", self.f0.to_string());
        kv("text_width", self.text_width.to_string());
        kv("mixer_layers", self.mixer_layers.to_string());
        kv("gcn_width", self.gcn_width.to_string());
        kv("max_text_len", self.max_text_len.to_string());
        kv("min_freq", self.min_freq.to_string());
        kv("seed", self.seed.to_string());
        kv("bond_edges", self.bond_edges.to_string());
        kv("align_mode", align_mode_name(self.align_mode).to_string());
        kv("levels", self.levels.to_string());
        kv("pool", self.pool.to_string());
        kv("ipot_outer", self.ipot_outer.to_string());
        kv("ipot_inner", self.ipot_inner.to_string());
        kv("ipot_prox", self.ipot_prox.to_string());
        kv("ipot_tol", self.ipot_tol.to_string());
        kv("allow_fragments", self.allow_fragments.to_string());
        kv("strict_valence", self.strict_valence.to_string());
        s
    }
}
