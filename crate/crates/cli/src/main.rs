use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use wmg::gradients::{fd_verify_all, GradientReport, Quantity, FD_STEP};
use wmg::graph::{load_document, to_json};
use wmg::optimizer::OptimizerConfig;
use wmg::surveillance::{run_surveillance_study, write_study, GridSpec, StudyMode};
use wmg::traffic::{aggregate_cascades, gen_geometric_graph, run_study, write_runs_csv, write_summary_csv, CascadeConfig, PolicyKind};
use wmg::{evaluate, WmgError};

/// Worst relative error accepted by `check-gradients`.
const GRADIENT_TOL: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "wmg", version, about = "First-passage analysis and policy experiments on weighted Markovian graphs")]
struct Cli {
    /// Worker threads for seed-level parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Passage moments, Kemeny constants and occupancies of a graph file.
    Analyze {
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare every analytic derivative with central differences.
    CheckGradients {
        graph: PathBuf,
        #[arg(long, default_value_t = FD_STEP)]
        h: f64,
        #[arg(long)]
        out: PathBuf,
        /// Multiplies every analytic derivative before comparing.
        #[arg(long, hide = true)]
        corrupt: Option<f64>,
    },
    /// Optimise surveillance policies on a grid.
    Surveil {
        spec: PathBuf,
        /// baseline, max-surprise, min-variance or all.
        #[arg(long, default_value = "all")]
        mode: String,
        /// Overrides both the instance seed and the optimiser seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Edge-failure cascades on random geometric networks.
    Cascade {
        config: PathBuf,
        /// unsupervised, supervised, locally-supervised or all.
        #[arg(long, default_value = "all")]
        policy: String,
        /// Number of seeds (overrides the config).
        #[arg(long)]
        seeds: Option<usize>,
        /// First seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the instance of every seed.
        #[arg(long)]
        dump_instances: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure that maps to an exit code.
enum Failure {
    /// Invalid input, infeasible problem or failed check.
    Invalid(anyhow::Error),
    Io(anyhow::Error),
}

impl From<WmgError> for Failure {
    fn from(e: WmgError) -> Self {
        match e {
            WmgError::Io(_) => Failure::Io(e.into()),
            other => Failure::Invalid(other.into()),
        }
    }
}

type CmdResult = std::result::Result<Vec<PathBuf>, Failure>;

fn io<T>(r: std::io::Result<T>, what: impl FnOnce() -> String) -> std::result::Result<T, Failure> {
    r.with_context(what).map_err(Failure::Io)
}

/// Files are written to a staging directory next to `out` and moved in only
/// once every file is complete.
struct Staging {
    dir: tempfile::TempDir,
    out: PathBuf,
    files: Vec<String>,
}

impl Staging {
    fn new(out: &Path) -> std::result::Result<Self, Failure> {
        io(fs::create_dir_all(out), || format!("creating {}", out.display()))?;
        let dir = io(tempfile::Builder::new().prefix(".wmg-staging").tempdir_in(out), || {
            format!("creating staging directory in {}", out.display())
        })?;
        Ok(Self { dir, out: out.to_path_buf(), files: Vec::new() })
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> std::result::Result<(), Failure> {
        let path = self.dir.path().join(name);
        io(fs::write(&path, contents), || format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> std::result::Result<(), Failure> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Invalid(e.into()))?;
        self.write(name, text + "\n")
    }

    /// Registers files that something else wrote into the staging directory.
    fn adopt(&mut self, paths: &[PathBuf]) {
        for p in paths {
            if let Ok(rel) = p.strip_prefix(self.dir.path()) {
                self.files.push(rel.to_string_lossy().into_owned());
            }
        }
    }

    fn commit(self) -> CmdResult {
        let mut written = Vec::new();
        for name in &self.files {
            let to = self.out.join(name);
            if let Some(parent) = to.parent() {
                io(fs::create_dir_all(parent), || format!("creating {}", parent.display()))?;
            }
            io(fs::rename(self.dir.path().join(name), &to), || format!("moving {}", to.display()))?;
            written.push(to);
        }
        Ok(written)
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vector(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

#[derive(Serialize)]
struct MomentsOut {
    #[serde(rename = "L")]
    l: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    m: Vec<Vec<f64>>,
    #[serde(rename = "M2")]
    m2: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    v: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct StationaryOut {
    pi: Vec<f64>,
    pi_w: Vec<f64>,
}

fn load(path: &Path) -> std::result::Result<wmg::graph::GraphDocument, Failure> {
    load_document(path).map_err(|e| match e {
        WmgError::Io(e) => Failure::Io(anyhow::Error::new(e).context(format!("reading {}", path.display()))),
        other => Failure::Invalid(anyhow::Error::new(other).context(format!("loading {}", path.display()))),
    })
}

fn analyze(graph: &Path, out: &Path) -> CmdResult {
    let doc = load(graph)?;
    let e = evaluate(&doc.graph)?;
    let mut st = Staging::new(out)?;
    let pm = &e.moments;
    st.json("moments.json", &MomentsOut { l: rows(&pm.l), m: rows(&pm.m), m2: rows(&pm.m2), v: rows(&pm.v) })?;
    st.json("kemeny.json", &e.summary)?;
    st.json("stationary.json", &StationaryOut { pi: vector(&e.analysis.pi), pi_w: vector(&e.analysis.pi_w) })?;
    st.commit()
}

#[derive(Serialize)]
struct GradientRow {
    quantity: &'static str,
    checks: usize,
    worst_rel_err: f64,
    worst_at: String,
    h: f64,
    pass: bool,
}

fn check_gradients(graph: &Path, h: f64, corrupt: Option<f64>, out: &Path) -> CmdResult {
    let doc = load(graph)?;
    let mut reports = fd_verify_all(&doc.graph, h)?;
    if let Some(f) = corrupt {
        reports = reports.iter().map(|r| r.rescaled(f)).collect();
    }
    let mut table = csv::Writer::from_writer(Vec::new());
    let mut failed = Vec::new();
    for q in Quantity::WEIGHT.iter().chain(&Quantity::TRANSITION) {
        let mine: Vec<&GradientReport> = reports.iter().filter(|r| r.quantity == *q).collect();
        let Some(worst) = mine.iter().copied().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err)) else {
            continue;
        };
        let pass = worst.rel_err <= GRADIENT_TOL;
        if !pass {
            failed.push(format!("{q} at {} (rel err {:e})", worst.wrt, worst.rel_err));
        }
        let row = GradientRow {
            quantity: q.name(),
            checks: mine.len(),
            worst_rel_err: worst.rel_err,
            worst_at: worst.wrt.to_string(),
            h: worst.h,
            pass,
        };
        table.serialize(row).map_err(|e| Failure::Invalid(e.into()))?;
    }
    let csv = table.into_inner().map_err(|e| Failure::Invalid(anyhow::anyhow!("{e}")))?;
    let mut st = Staging::new(out)?;
    st.write("gradients.csv", csv)?;
    if !failed.is_empty() {
        // the report is still useful when the check fails
        let written = st.commit()?;
        for w in &written {
            println!("{}", w.display());
        }
        return Err(Failure::Invalid(anyhow::anyhow!("gradient check failed: {}", failed.join("; "))));
    }
    st.commit()
}

/// Surveillance study file: the grid and optionally optimiser settings.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SurveilSpec {
    grid: GridSpec,
    #[serde(default)]
    optimizer: OptimizerConfig,
}

fn read_text(path: &Path) -> std::result::Result<String, Failure> {
    io(fs::read_to_string(path), || format!("reading {}", path.display()))
}

fn surveil(spec: &Path, mode: &str, seed: Option<u64>, out: &Path) -> CmdResult {
    let text = read_text(spec)?;
    let mut spec: SurveilSpec = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", spec.display()))
        .map_err(Failure::Invalid)?;
    if let Some(s) = seed {
        spec.grid.seed = s;
        spec.optimizer.seed = s;
    }
    let modes = match mode {
        "all" => vec![StudyMode::MaxSurprise, StudyMode::MinVariance],
        other => match StudyMode::parse(other) {
            Some(StudyMode::Baseline) => vec![],
            Some(m) => vec![m],
            None => return Err(Failure::Invalid(anyhow::anyhow!("unknown mode {other:?}"))),
        },
    };
    let result = run_surveillance_study(&spec.grid, &spec.optimizer, &modes)?;
    for o in std::iter::once(&result.baseline).chain(&result.policies) {
        log::info!(
            "{}: K_W={:.4} sqrtV_W={:.4} S={:.4} gain={:?}",
            o.mode.name(),
            o.summary.k_w,
            o.summary.v_w.max(0.0).sqrt(),
            o.summary.s,
            o.gain
        );
    }
    let mut st = Staging::new(out)?;
    let written = write_study(&result, st.path())?;
    st.adopt(&written);
    st.commit()
}

fn cascade(
    config: &Path,
    policy: &str,
    seeds: Option<usize>,
    seed: Option<u64>,
    dump: bool,
    out: &Path,
) -> CmdResult {
    let text = read_text(config)?;
    let mut cfg = CascadeConfig::from_json(&text)?;
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    if let Some(s) = seed {
        cfg.first_seed = s;
    }
    let policies = match policy {
        "all" => PolicyKind::all(&cfg.destinations),
        name => vec![PolicyKind::parse(name, &cfg.destinations)?],
    };
    let runs = run_study(&policies, &cfg)?;
    let summary = aggregate_cascades(&runs, &cfg.destinations);
    let mut runs_csv = Vec::new();
    write_runs_csv(&runs, &cfg.destinations, &mut runs_csv)?;
    let mut summary_csv = Vec::new();
    write_summary_csv(&summary, &mut summary_csv)?;
    let mut st = Staging::new(out)?;
    st.write("cascade_runs.csv", runs_csv)?;
    st.write("cascade_summary.csv", summary_csv)?;
    if dump {
        io(fs::create_dir_all(st.path().join("instances")), || "creating instances directory".into())?;
        for s in cfg.seed_list() {
            let inst = gen_geometric_graph(cfg.n, cfg.degree, cfg.weight_range, s)?;
            st.write(
                &format!("instances/seed_{s}.json"),
                to_json(&inst.graph, None, Some(&cfg.destinations)) + "\n",
            )?;
        }
    }
    st.commit()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WMG_LOG", "error")).init();
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let start = Instant::now();
    let result = match &cli.command {
        Command::Analyze { graph, out } => analyze(graph, out),
        Command::CheckGradients { graph, h, out, corrupt } => check_gradients(graph, *h, *corrupt, out),
        Command::Surveil { spec, mode, seed, out } => surveil(spec, mode, *seed, out),
        Command::Cascade { config, policy, seeds, seed, dump_instances, out } => {
            cascade(config, policy, *seeds, *seed, *dump_instances, out)
        }
    };
    match result {
        Ok(written) => {
            for w in &written {
                println!("{}", w.display());
            }
            log::info!("finished in {:.2?}", start.elapsed());
            ExitCode::SUCCESS
        }
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
