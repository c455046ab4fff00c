//! Command-line parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use attverify_core::{Dist, Filter, TraversalMode};
use clap::{ArgAction, Args, Parser, Subcommand};
use tracing::Level;

use crate::config::ProblemConfig;
use crate::error::Result;
use crate::results::{OracleDocument, ResultsDocument};
use crate::run::{reconcile_documents, run, run_oracle};

#[derive(Debug, Parser)]
#[command(name = "attverify", version, about = "Attention and classification robustness over perturbation parameters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// More log output (repeatable).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Traverse the activation regions of Θ and verify each.
    Verify(VerifyArgs),
    /// Evaluate labels and ai on a regular grid over Θ.
    Oracle(OracleArgs),
    /// Check a results document against an oracle document.
    Reconcile(ReconcileArgs),
}

/// Flags shared by `verify` and `oracle`. They override a `--config` file.
#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// JSON problem configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Text grid file or `idx:<path>:<index>`.
    #[arg(long)]
    pub image: Option<String>,
    /// e.g. `brightness:-0.1..0.1+patch:px=2,py=2,pw=3,ph=3:0..0.5`
    #[arg(long)]
    pub perturb: Option<String>,
    /// bfs, gbs-cr, gbs-ar or gbs-crar
    #[arg(long)]
    pub mode: Option<TraversalMode>,
    /// I, A or M
    #[arg(long)]
    pub filter: Option<Filter>,
    /// L1 or L2
    #[arg(long)]
    pub dist: Option<Dist>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub wdelta: Option<f64>,
    /// Seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long)]
    pub max_regions: Option<usize>,
    /// Search-ray direction, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub ray: Option<Vec<f64>>,
    /// Output JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ProblemArgs {
    pub fn to_config(&self) -> Result<ProblemConfig> {
        let mut c = match &self.config {
            Some(path) => ProblemConfig::load(path)?,
            None => ProblemConfig::default(),
        };
        if let Some(v) = &self.model {
            c.model = v.clone();
        }
        if let Some(v) = &self.image {
            c.image = v.clone();
        }
        if let Some(v) = &self.perturb {
            c.perturbation = v.clone();
        }
        if let Some(v) = self.mode {
            c.mode = v;
        }
        if let Some(v) = self.filter {
            c.filter = v;
        }
        if let Some(v) = self.dist {
            c.dist = v;
        }
        if let Some(v) = self.delta {
            c.delta = v;
        }
        if let Some(v) = self.wdelta {
            c.w_delta = v;
        }
        if let Some(v) = self.timeout {
            c.timeout_secs = Some(v);
        }
        if let Some(v) = self.max_regions {
            c.max_regions = Some(v);
        }
        if let Some(v) = &self.ray {
            c.ray = Some(v.clone());
        }
        if let Some(v) = &self.out {
            c.out = Some(v.clone());
        }
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Also draw the verdict map (two parameters only).
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Grid points per axis.
    #[arg(long, default_value_t = 201)]
    pub resolution: usize,
}

#[derive(Debug, Args)]
pub struct ReconcileArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub oracle: PathBuf,
    /// Samples this close to a region boundary are not checked.
    #[arg(long, default_value_t = 1e-9)]
    pub boundary_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub ai_tol: f64,
}

fn summary(doc: &ResultsDocument) -> String {
    let count = |f: &dyn Fn(&crate::results::RegionRecord) -> bool| doc.regions.iter().filter(|r| f(r)).count();
    use attverify_core::{AttentionVerdict as A, ClassVerdict as C};
    format!(
        "{} regions ({:?}): CR {} MR {} CB {} | AR {} IR {} AB {}",
        doc.regions.len(),
        doc.status,
        count(&|r| r.cls_verdict == C::Cr),
        count(&|r| r.cls_verdict == C::Mr),
        count(&|r| r.cls_verdict == C::Cb),
        count(&|r| r.attn_verdict == A::Ar),
        count(&|r| r.attn_verdict == A::Ir),
        count(&|r| r.attn_verdict == A::Ab),
    )
}

fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Verify(args) => {
            let mut config = args.problem.to_config()?;
            if args.svg.is_some() {
                config.svg = args.svg.clone();
            }
            let doc = run(&config)?;
            if config.out.is_none() {
                println!("{}", doc.to_json());
            }
            if !cli.quiet {
                eprintln!("{}", summary(&doc));
            }
            Ok(doc.status.exit_code())
        }
        Command::Oracle(args) => {
            let config = args.problem.to_config()?;
            let doc = run_oracle(&config, args.resolution)?;
            if config.out.is_none() {
                println!("{}", doc.to_json());
            }
            Ok(0)
        }
        Command::Reconcile(args) => {
            let results = ResultsDocument::load(&args.results)?;
            let oracle = OracleDocument::load(&args.oracle)?;
            let report = reconcile_documents(&results, &oracle, args.boundary_tol, args.ai_tol)?;
            println!(
                "checked {} boundary {} uncovered {} mismatches {}",
                report.checked,
                report.boundary,
                report.uncovered.len(),
                report.mismatches.len()
            );
            for m in &report.mismatches {
                println!("  sample {} region {}: {:?}", m.sample, m.region, m.kind);
            }
            Ok(if report.is_clean() { 0 } else { 1 })
        }
    }
}

/// Parses `args`, runs the command and returns the process exit status:
/// 0 complete, 2 budget exhausted, 1 error.
pub fn main_with<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => Level::ERROR,
        (false, 0) => Level::WARN,
        (false, 1) => Level::INFO,
        (false, 2) => Level::DEBUG,
        _ => Level::TRACE,
    };
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .try_init();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
