use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hoistc::ast::{param_census, param_frequencies};
use hoistc::bif::{emit_program, parse_bif_with, BifOptions};
use hoistc::compile::infer;
use hoistc::hoist::OrderPolicy;
use hoistc::oracle::{surface_distribution, Distribution, DEFAULT_FLIP_BOUND};
use hoistc::parse::print;
use hoistc::pipeline::{self, bench, load_path, run_path, Encoding, OptMode, RunError, RunOptions};
use hoistc::Prob;

#[derive(Parser)]
#[command(
    name = "hoistc",
    version,
    about = "Flip-hoisting compiler and exact inference for discrete probabilistic programs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimize and compile a program, writing a JSON report.
    Compile {
        file: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Include the data-flow facts of every flip in the report.
        #[arg(long)]
        dump_facts: bool,
        /// Write the compiled BDD in Graphviz format.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Print the output distribution (or per-bit marginals for wide outputs).
    Infer {
        file: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Cross-check against exhaustive enumeration.
        #[arg(long)]
        oracle: bool,
        /// Most flips the enumeration will accept.
        #[arg(long, default_value_t = DEFAULT_FLIP_BOUND)]
        bound: usize,
    },
    /// Print the distribution computed by exhaustive enumeration.
    Oracle {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FLIP_BOUND)]
        bound: usize,
        #[command(flatten)]
        bif: BifFlags,
    },
    /// Translate a BIF network into a program.
    FromBif {
        file: PathBuf,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        bif: BifFlags,
    },
    /// Parameter statistics of a program.
    Params {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = EncodingArg::Default)]
        encoding: EncodingArg,
        #[command(flatten)]
        bif: BifFlags,
    },
    /// Run every program and network in a directory under all configurations.
    Bench {
        dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OrderArg::Strict)]
        order: OrderArg,
        /// Per-run compilation budget in seconds.
        #[arg(long, default_value_t = 1200)]
        timeout: u64,
        #[command(flatten)]
        bif: BifFlags,
    },
}

#[derive(Args, Clone)]
struct RunFlags {
    #[arg(long, value_enum, default_value_t = OptArg::None)]
    opt: OptArg,
    #[arg(long, value_enum, default_value_t = EncodingArg::Default)]
    encoding: EncodingArg,
    #[arg(long, value_enum, default_value_t = OrderArg::Strict)]
    order: OrderArg,
    /// Compilation budget in seconds.
    #[arg(long, default_value_t = 1200)]
    timeout: u64,
    #[command(flatten)]
    bif: BifFlags,
}

#[derive(Args, Clone)]
struct BifFlags {
    /// Rescale network rows whose sum is within this distance of 1.
    #[arg(long, value_name = "TOL")]
    renormalize: Option<String>,
}

impl BifFlags {
    fn options(&self) -> anyhow::Result<BifOptions> {
        let renormalize_within = match &self.renormalize {
            None => None,
            Some(s) => Some(Prob::parse_decimal(s).map_err(|e| anyhow!("--renormalize: {}", e))?),
        };
        Ok(BifOptions { renormalize_within })
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum OptArg {
    None,
    Local,
    Global,
}

#[derive(ValueEnum, Clone, Copy)]
enum EncodingArg {
    Default,
    Seq,
}

#[derive(ValueEnum, Clone, Copy)]
enum OrderArg {
    Strict,
    Off,
}

#[derive(ValueEnum, Clone, Copy)]
enum Format {
    Csv,
    Json,
}

impl From<OptArg> for OptMode {
    fn from(a: OptArg) -> Self {
        match a {
            OptArg::None => OptMode::None,
            OptArg::Local => OptMode::Local,
            OptArg::Global => OptMode::Global,
        }
    }
}

impl From<EncodingArg> for Encoding {
    fn from(a: EncodingArg) -> Self {
        match a {
            EncodingArg::Default => Encoding::Default,
            EncodingArg::Seq => Encoding::Seq,
        }
    }
}

impl From<OrderArg> for OrderPolicy {
    fn from(a: OrderArg) -> Self {
        match a {
            OrderArg::Strict => OrderPolicy::Strict,
            OrderArg::Off => OrderPolicy::Off,
        }
    }
}

impl RunFlags {
    fn options(&self) -> RunOptions {
        RunOptions {
            opt: self.opt.into(),
            encoding: self.encoding.into(),
            order: self.order.into(),
            timeout: Some(Duration::from_secs(self.timeout)),
            ..RunOptions::default()
        }
    }
}

enum Failure {
    Parse(String),
    Timeout(String),
    Mismatch(String),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => 2,
            Failure::Timeout(_) => 3,
            Failure::Mismatch(_) => 4,
            Failure::Other(_) => 1,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Parse(_) | RunError::Bif(_) => Failure::Parse(e.to_string()),
            other => Failure::Other(other.into()),
        }
    }
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

fn format_distribution(d: &Distribution) -> String {
    d.iter()
        .map(|(v, p)| format!("{}\t{}\t{}\n", v, p.to_sig_digits(6), p.to_fraction_string()))
        .collect()
}

fn timed_out(file: &Path) -> Failure {
    Failure::Timeout(format!("{}: compilation timed out", file.display()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Compile {
            file,
            run,
            report,
            dump_facts,
            dot,
        } => {
            let opts = RunOptions {
                dump_facts,
                ..run.options()
            };
            let r = run_path(&file, &opts, &run.bif.options()?)?;
            let mut json = r.report.to_json();
            json.push('\n');
            write_out(report.as_deref(), &json)?;
            if let (Some(path), Some(c)) = (dot, &r.compiled) {
                fs::write(&path, c.to_dot()).with_context(|| format!("writing {}", path.display()))?;
            }
            if r.report.timed_out {
                return Err(timed_out(&file));
            }
        }
        Cmd::Infer {
            file,
            run,
            oracle,
            bound,
        } => {
            let bif = run.bif.options()?;
            let opts = RunOptions {
                joint: false,
                ..run.options()
            };
            let mut r = run_path(&file, &opts, &bif)?;
            let Some(c) = r.compiled.as_mut() else {
                return Err(timed_out(&file));
            };
            match infer(c) {
                Ok(d) => {
                    let d = d.map_values(|v| r.lowered.decode(v));
                    print!("{}", format_distribution(&d));
                    if oracle {
                        let surface = load_path(&file, &bif)?;
                        let expected =
                            surface_distribution(&surface, bound).map_err(|e| anyhow!("oracle: {}", e))?;
                        if expected != d {
                            return Err(Failure::Mismatch(format!(
                                "compiled distribution differs from enumeration:\n{}",
                                format_distribution(&expected)
                            )));
                        }
                        eprintln!("oracle: distributions agree");
                    }
                }
                Err(hoistc::compile::CompileError::WidthExceeded { width, .. }) => {
                    if oracle {
                        return Err(anyhow!(
                            "output has {} bits; the oracle check needs the joint distribution",
                            width
                        )
                        .into());
                    }
                    println!("# output has {} bits; per-bit marginals", width);
                    for (i, p) in c.marginals().iter().enumerate() {
                        println!("bit{}\t{}\t{}", i, p.to_sig_digits(6), p.to_fraction_string());
                    }
                }
                Err(hoistc::compile::CompileError::Bdd(hoistc::bdd::BddError::Timeout)) => {
                    return Err(timed_out(&file))
                }
                Err(e) => return Err(anyhow!(e).into()),
            }
        }
        Cmd::Oracle { file, bound, bif } => {
            let surface = load_path(&file, &bif.options()?)?;
            let d = surface_distribution(&surface, bound).map_err(|e| anyhow!(e))?;
            print!("{}", format_distribution(&d));
        }
        Cmd::FromBif { file, out, bif } => {
            let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let net = parse_bif_with(&text, &bif.options()?).map_err(|e| Failure::Parse(e.to_string()))?;
            let mut program = print(&emit_program(&net));
            program.push('\n');
            write_out(out.as_deref(), &program)?;
        }
        Cmd::Params { file, encoding, bif } => {
            let surface = load_path(&file, &bif.options()?)?;
            let encoded = hoistc::encode::encode(&surface, Encoding::from(encoding).category_order())
                .map_err(|e| anyhow!(e))?;
            let freq: serde_json::Map<String, serde_json::Value> = param_frequencies(&encoded)
                .into_iter()
                .map(|(p, n)| (p.to_fraction_string(), n.into()))
                .collect();
            let out = serde_json::json!({
                "surface": param_census(&surface),
                "encoded": param_census(&encoded),
                "flips": hoistc::ast::flip_count(&encoded),
                "frequencies": freq,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&out).map_err(anyhow::Error::from)?
            );
        }
        Cmd::Bench {
            dir,
            format,
            out,
            order,
            timeout,
            bif,
        } => {
            let mut files: Vec<PathBuf> = fs::read_dir(&dir)
                .with_context(|| format!("reading {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("dppl" | "bif")))
                .collect();
            files.sort();
            let base = RunOptions {
                order: order.into(),
                timeout: Some(Duration::from_secs(timeout)),
                ..RunOptions::default()
            };
            let rows = bench(&files, &base, &bif.options()?);
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&rows).map_err(anyhow::Error::from)? + "\n",
                Format::Csv => bench_csv(&rows)?,
            };
            write_out(out.as_deref(), &text)?;
        }
    }
    Ok(())
}

fn bench_csv(rows: &[pipeline::BenchRow]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["file", "opt", "encoding", "flips", "bdd_size", "time_ms", "error"])?;
    let dash = |v: Option<String>, timed_out: bool| match v {
        Some(s) => s,
        None if timed_out => "-".to_string(),
        None => String::new(),
    };
    for r in rows {
        w.write_record([
            r.file.clone(),
            r.opt.name().to_string(),
            r.encoding.name().to_string(),
            r.flips.map(|n| n.to_string()).unwrap_or_default(),
            dash(r.bdd_size.map(|n| n.to_string()), r.timed_out),
            dash(r.time_ms.map(|t| format!("{:.3}", t)), r.timed_out),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match hoistc::with_big_stack(move || run(cli).map_err(|f| (f.code(), message(f)))) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(code)
        }
    }
}

fn message(f: Failure) -> String {
    match f {
        Failure::Parse(m) | Failure::Timeout(m) | Failure::Mismatch(m) => m,
        Failure::Other(e) => format!("{:#}", e),
    }
}
