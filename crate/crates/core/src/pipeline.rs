//! End-to-end runs: read a program or network, encode, optimize, compile and
//! infer, producing a machine-readable report.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{analyze, FlipSite, Mode};
use crate::ast::{flip_count, param_census, Expr, ParamCensus};
use crate::bdd::BddError;
use crate::bif::{emit_program, parse_bif_with, BifError, BifOptions};
use crate::compile::{compile_with, infer, CompileError, CompileOptions, CompiledProgram, JOINT_WIDTH_CAP};
use crate::encode::{lower, CategoryOrder, EncodeError, Lowered};
use crate::hoist::{optimize, HoistReport, OrderPolicy};
use crate::parse::{parse, ParseError};
use crate::prob::Prob;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(1200);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OptMode {
    None,
    Local,
    Global,
}

impl OptMode {
    pub const ALL: [OptMode; 3] = [OptMode::None, OptMode::Local, OptMode::Global];

    pub fn name(self) -> &'static str {
        match self {
            OptMode::None => "none",
            OptMode::Local => "local",
            OptMode::Global => "global",
        }
    }
}

/// How `discrete` is lowered: the chain in written order, or in frequency
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Default,
    Seq,
}

impl Encoding {
    pub const ALL: [Encoding; 2] = [Encoding::Default, Encoding::Seq];

    pub fn name(self) -> &'static str {
        match self {
            Encoding::Default => "default",
            Encoding::Seq => "seq",
        }
    }

    pub fn category_order(self) -> CategoryOrder {
        match self {
            Encoding::Default => CategoryOrder::Declared,
            Encoding::Seq => CategoryOrder::Frequency,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOptions {
    pub opt: OptMode,
    pub encoding: Encoding,
    pub order: OrderPolicy,
    #[serde(skip)]
    pub timeout: Option<Duration>,
    #[serde(skip)]
    pub node_cap: usize,
    /// Build the joint distribution when the output is narrow enough.
    #[serde(skip)]
    pub joint: bool,
    #[serde(skip)]
    pub dump_facts: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            opt: OptMode::None,
            encoding: Encoding::Default,
            order: OrderPolicy::Strict,
            timeout: Some(DEFAULT_TIMEOUT),
            node_cap: crate::compile::node_cap_from_env(),
            joint: true,
            dump_facts: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("network error: {0}")]
    Bif(#[from] BifError),
    #[error("encoding error: {0}")]
    Encode(#[from] EncodeError),
    #[error("compile error: {0}")]
    Compile(CompileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Program,
    Network,
}

impl SourceKind {
    pub fn of_path(path: &Path) -> SourceKind {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("bif") => SourceKind::Network,
            _ => SourceKind::Program,
        }
    }
}

/// A surface program from source text.
pub fn load(text: &str, kind: SourceKind, bif: &BifOptions) -> Result<Expr, RunError> {
    Ok(match kind {
        SourceKind::Program => parse(text)?,
        SourceKind::Network => emit_program(&parse_bif_with(text, bif)?),
    })
}

pub fn load_path(path: &Path, bif: &BifOptions) -> Result<Expr, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load(&text, SourceKind::of_path(path), bif)
}

/// A probability both exactly and as a 6-significant-digit decimal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProbText {
    pub exact: String,
    pub decimal: String,
}

impl From<&Prob> for ProbText {
    fn from(p: &Prob) -> Self {
        ProbText {
            exact: p.to_fraction_string(),
            decimal: p.to_sig_digits(6),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JointEntry {
    pub value: String,
    #[serde(flatten)]
    pub prob: ProbText,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub load_ms: f64,
    pub encode_ms: f64,
    pub optimize_ms: f64,
    pub compile_ms: f64,
    pub infer_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub program: String,
    pub options: RunOptionsView,
    /// Flips of the encoded program before optimization.
    pub flips_before: usize,
    pub flips_after: usize,
    pub census_before: ParamCensus,
    pub census_after: ParamCensus,
    /// Unique internal BDD nodes reachable from any output.
    pub bdd_size: Option<usize>,
    pub timed_out: bool,
    pub timings_ms: Timings,
    pub hoist: HoistReport,
    /// Probability of each output bit being true, in output order.
    pub marginals: Vec<ProbText>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint: Option<Vec<JointEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub facts: Option<Vec<FlipSite>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunOptionsView {
    pub opt: OptMode,
    pub encoding: Encoding,
    pub order: OrderPolicy,
}

impl RunReport {
    /// The report with all timings zeroed, for comparisons.
    pub fn without_timings(&self) -> RunReport {
        RunReport {
            timings_ms: Timings::default(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Everything produced by a run, for callers that need more than the report.
pub struct Run {
    pub report: RunReport,
    pub lowered: Lowered,
    pub optimized: Expr,
    pub compiled: Option<CompiledProgram>,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

/// Run the pipeline on an already loaded surface program.
pub fn run_program(name: &str, surface: &Expr, opts: &RunOptions) -> Result<Run, RunError> {
    let mut timings = Timings::default();
    let t = Instant::now();
    let lowered = lower(surface, opts.encoding.category_order())?;
    timings.encode_ms = ms(t);
    let encoded = &lowered.program;

    let facts = opts
        .dump_facts
        .then(|| analyze(encoded).sites.into_values().collect());

    let t = Instant::now();
    let (optimized, hoist) = match opts.opt {
        OptMode::None => (encoded.clone(), HoistReport::default()),
        OptMode::Local => optimize(encoded, Mode::Local, opts.order),
        OptMode::Global => optimize(encoded, Mode::Global, opts.order),
    };
    timings.optimize_ms = ms(t);

    let deadline = opts.timeout.map(|d| Instant::now() + d);
    let copts = CompileOptions {
        node_cap: opts.node_cap,
        deadline,
    };
    let t = Instant::now();
    let mut timed_out = false;
    let compiled = match compile_with(&optimized, copts) {
        Ok(c) => Some(c),
        Err(CompileError::Bdd(BddError::Timeout)) => {
            timed_out = true;
            None
        }
        Err(e) => return Err(RunError::Compile(e)),
    };
    timings.compile_ms = ms(t);

    let t = Instant::now();
    let mut marginals = Vec::new();
    let mut joint = None;
    let mut compiled = compiled;
    if let Some(c) = compiled.as_mut() {
        marginals = c.marginals().iter().map(ProbText::from).collect();
        if opts.joint && c.roots.leaves().len() <= JOINT_WIDTH_CAP {
            match infer(c) {
                Ok(d) => {
                    let d = d.map_values(|v| lowered.decode(v));
                    joint = Some(
                        d.iter()
                            .map(|(v, p)| JointEntry {
                                value: v.to_string(),
                                prob: p.into(),
                            })
                            .collect(),
                    );
                }
                Err(CompileError::Bdd(BddError::Timeout)) => timed_out = true,
                Err(e) => return Err(RunError::Compile(e)),
            }
        }
    }
    timings.infer_ms = ms(t);

    let report = RunReport {
        schema: SCHEMA_VERSION,
        program: name.to_string(),
        options: RunOptionsView {
            opt: opts.opt,
            encoding: opts.encoding,
            order: opts.order,
        },
        flips_before: flip_count(encoded),
        flips_after: flip_count(&optimized),
        census_before: param_census(encoded),
        census_after: param_census(&optimized),
        bdd_size: if timed_out {
            None
        } else {
            compiled.as_ref().map(|c| c.size())
        },
        timed_out,
        timings_ms: timings,
        hoist,
        marginals,
        joint,
        facts,
    };
    Ok(Run {
        report,
        lowered,
        optimized,
        compiled,
    })
}

/// Load and run a file.
pub fn run_path(path: &Path, opts: &RunOptions, bif: &BifOptions) -> Result<Run, RunError> {
    let t = Instant::now();
    let surface = load_path(path, bif)?;
    let load_ms = ms(t);
    let mut run = run_program(&path.display().to_string(), &surface, opts)?;
    run.report.timings_ms.load_ms = load_ms;
    Ok(run)
}

/// One benchmark × configuration result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub file: String,
    pub opt: OptMode,
    pub encoding: Encoding,
    pub flips: Option<usize>,
    pub bdd_size: Option<usize>,
    pub time_ms: Option<f64>,
    pub timed_out: bool,
    pub error: Option<String>,
}

/// Run every file under every optimization mode and encoding. Files run in
/// parallel; rows come back in file, mode, encoding order.
pub fn bench(files: &[PathBuf], base: &RunOptions, bif: &BifOptions) -> Vec<BenchRow> {
    let jobs: Vec<(&PathBuf, OptMode, Encoding)> = files
        .iter()
        .flat_map(|f| {
            OptMode::ALL
                .into_iter()
                .flat_map(move |m| Encoding::ALL.into_iter().map(move |e| (f, m, e)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .stack_size(crate::BIG_STACK)
        .build()
        .expect("thread pool");
    pool.install(|| {
        jobs.par_iter()
            .map(|&(file, opt, encoding)| {
                let opts = RunOptions {
                    opt,
                    encoding,
                    joint: false,
                    dump_facts: false,
                    ..base.clone()
                };
                let t = Instant::now();
                let mut row = BenchRow {
                    file: file.display().to_string(),
                    opt,
                    encoding,
                    flips: None,
                    bdd_size: None,
                    time_ms: None,
                    timed_out: false,
                    error: None,
                };
                match run_path(file, &opts, bif) {
                    Ok(run) => {
                        row.flips = Some(run.report.flips_after);
                        row.bdd_size = run.report.bdd_size;
                        row.timed_out = run.report.timed_out;
                        if !row.timed_out {
                            row.time_ms = Some(ms(t));
                        }
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
                row
            })
            .collect()
    })
}
