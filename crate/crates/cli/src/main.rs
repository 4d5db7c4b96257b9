//! Command-line front end: namespace management, retrieval, simulation runs,
//! metrics and plots.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use procmem::embedding::{Embedder, StubEmbedder};
use procmem::ids::NodeId;
use procmem::ingest::commit;
use procmem::maintenance::compact;
use procmem::memory::{Memory, NamespaceDir};
use procmem::metrics::MetricsLedger;
use procmem::ontology::{ExperienceRecord, StructuralSignature};
use procmem::orchestrator::{Preset, PrgiiConfig};
use procmem::retrieval::{retrieve, RetrievalConfig, RetrievalQuery};
use procmem::sim::{generate_tasks, line_chart_svg, run_simulation, tasks_from_tsv, tasks_to_tsv, Domain};

const METRICS_FILE: &str = "metrics.json";

#[derive(Parser)]
#[command(name = "procmem", version, about = "Procedural experience memory")]
struct Cli {
    /// Directory holding one subdirectory per namespace.
    #[arg(long, global = true, default_value = "procmem-data")]
    root: PathBuf,
    /// Dimension of the built-in hashing embedder.
    #[arg(long, global = true, default_value_t = 256)]
    dim: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create an empty namespace.
    Init { ns: String },
    /// Commit experience records, one JSON object per line.
    Seed { ns: String, file: PathBuf },
    /// Run the simulated workflow over a task file.
    Run {
        ns: String,
        #[arg(long, default_value = "A2")]
        preset: Preset,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Print the retrieval bundle for a task description and signature.
    Retrieve {
        ns: String,
        #[arg(long)]
        task: String,
        /// Comma-separated operations.
        #[arg(long, value_delimiter = ',')]
        sig: Vec<String>,
    },
    /// Print one experience record, or list all experiences.
    Inspect { ns: String, id: Option<NodeId> },
    /// Archive dominated experiences, mark templates and stale experiences.
    Compact { ns: String },
    /// Write the metrics of the last run.
    Metrics {
        ns: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Write the namespace journal to a file.
    Export { ns: String, file: PathBuf },
    /// Replace a namespace with a previously exported journal.
    Import { ns: String, file: PathBuf },
    /// Generate a synthetic task file.
    GenTasks {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated domains; all when omitted.
        #[arg(long, value_delimiter = ',')]
        domains: Vec<Domain>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a learning curve from metrics files as SVG.
    Plot {
        /// Metrics JSON files; each becomes one series named after the file.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Series::Sr)]
        metric: Series,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Series {
    Sr,
    Csr,
    FirstAttempt,
}

impl Series {
    fn values(self, ledger: &MetricsLedger) -> Vec<f64> {
        match self {
            Series::Sr => ledger.sr(),
            Series::Csr => ledger.csr(),
            Series::FirstAttempt => ledger.first_attempt_rate(),
        }
    }

    fn label(self) -> &'static str {
        match self {
            Series::Sr => "success rate",
            Series::Csr => "cumulative success rate",
            Series::FirstAttempt => "first-attempt rate",
        }
    }
}

struct App {
    dir: NamespaceDir,
    embedder: Arc<dyn Embedder>,
}

impl App {
    fn open(&self, ns: &str) -> Result<Memory> {
        self.dir.open(ns, self.embedder.clone()).with_context(|| format!("opening namespace `{ns}`"))
    }

    fn run(&self, command: Command) -> Result<()> {
        match command {
            Command::Init { ns } => {
                let mut mem = self.dir.init(&ns, self.embedder.clone())?;
                mem.sync()?;
                println!("initialized {}", self.dir.path(&ns).display());
            }
            Command::Seed { ns, file } => {
                let mut mem = self.open(&ns)?;
                let text = read(&file)?;
                let mut count = 0;
                for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let mut rec: ExperienceRecord =
                        serde_json::from_str(line).with_context(|| format!("{}:{}", file.display(), i + 1))?;
                    rec.id = None;
                    rec.goal.task_embedding = self.embedder.embed(&rec.goal.task_description)?;
                    let report = commit(&mut mem, rec, &[]).with_context(|| format!("{}:{}", file.display(), i + 1))?;
                    if let Some(node) = report.node {
                        println!("{node}");
                    }
                    count += 1;
                }
                mem.sync()?;
                log::info!("seeded {count} experiences into `{ns}`");
            }
            Command::Run { ns, preset, epochs, seed, tasks, parallelism } => {
                let mem = self.open(&ns)?;
                let tasks = tasks_from_tsv(&read(&tasks)?)?;
                let cfg = PrgiiConfig { parallelism, ..preset.config() };
                let shared = mem.into_shared();
                let report = run_simulation(&shared, &tasks, &cfg, seed, epochs)?;
                shared.write().sync()?;
                fs::write(self.dir.path(&ns).join(METRICS_FILE), report.ledger.to_json())?;
                for e in &report.ledger.epochs {
                    println!("epoch {}: SR {:.3} CSR {:.3} iterations {:.2}", e.epoch, e.sr, e.csr, e.mean_iterations);
                }
            }
            Command::Retrieve { ns, task, sig } => {
                let mem = self.open(&ns)?;
                let ops = sig.iter().filter(|s| !s.trim().is_empty()).map(|s| mem.canon().canonicalize(s)).collect();
                let query = RetrievalQuery { embedding: self.embedder.embed(&task)?, signature: StructuralSignature::new(ops) };
                let bundle = retrieve(&mem, &query, &RetrievalConfig::default());
                println!("{}", serde_json::to_string_pretty(&bundle)?);
            }
            Command::Inspect { ns, id } => {
                let mem = self.open(&ns)?;
                match id {
                    Some(id) => {
                        let exp = mem.experience(id).with_context(|| format!("no experience {id} in `{ns}`"))?;
                        println!("{}", exp.record.to_json());
                    }
                    None => {
                        for exp in mem.experiences() {
                            let live = if mem.is_live(exp.node) { "live" } else { "archived" };
                            let r = &exp.record;
                            println!("{}\t{}\t{live}\t{:.3}\t{}", exp.node, r.status, r.quality(), r.goal.task_description);
                        }
                    }
                }
            }
            Command::Compact { ns } => {
                let mut mem = self.open(&ns)?;
                let report = compact(&mut mem)?;
                mem.sync()?;
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
            Command::Metrics { ns, out, format } => {
                let path = self.dir.path(&ns).join(METRICS_FILE);
                let text = read(&path).with_context(|| format!("namespace `{ns}` has no recorded run"))?;
                let ledger: MetricsLedger = serde_json::from_str(&text)?;
                let body = match format {
                    Format::Json => ledger.to_json(),
                    Format::Tsv => ledger.to_tsv(),
                };
                fs::write(&out, body).with_context(|| format!("writing {}", out.display()))?;
            }
            Command::Export { ns, file } => {
                let mem = self.open(&ns)?;
                fs::write(&file, mem.export_string()).with_context(|| format!("writing {}", file.display()))?;
            }
            Command::Import { ns, file } => {
                let text = read(&file)?;
                let mem = self.dir.import(&ns, &text, self.embedder.clone())?;
                println!("imported {} experiences into `{ns}`", mem.experience_count());
            }
            Command::GenTasks { n, seed, domains, out } => {
                let domains = if domains.is_empty() { Domain::ALL.to_vec() } else { domains };
                let tasks = generate_tasks(n, seed, &domains)?;
                fs::write(&out, tasks_to_tsv(&tasks)).with_context(|| format!("writing {}", out.display()))?;
            }
            Command::Plot { inputs, metric, out } => {
                let mut series = Vec::new();
                for path in &inputs {
                    let ledger: MetricsLedger =
                        serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
                    series.push((series_name(path), metric.values(&ledger)));
                }
                let svg = line_chart_svg(&format!("{} by epoch", metric.label()), metric.label(), &series);
                fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
            }
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn series_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.dim == 0 {
        eprintln!("error: --dim must be positive");
        return ExitCode::FAILURE;
    }
    let app = App { dir: NamespaceDir::new(&cli.root), embedder: Arc::new(StubEmbedder::new(cli.dim)) };
    match app.run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

