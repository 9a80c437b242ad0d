//! Command-line front end: penalty reports, training, prediction, LP export,
//! cross-validation and result tables.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use capsvm::complexity::build_penalties;
use capsvm::harness::{benchmark_table, default_decades, parse_baseline_csv, train_on_stack, LP_VAR_CAP};
use capsvm::kernels::build_stack;
use capsvm::solver_cd::CDConfig;
use capsvm::solver_lp::{build_lp, export_lp_file};
use capsvm::{
    load_csv, load_libsvm, parse_kernel_specs, read_report_csv, run_cv, Dataset, Error, GridSpec, KernelSpec,
    PenaltyMode, Result, SolverKind, SparseModel, Standardizer,
};
use clap::error::ErrorKind;
use clap::{ArgAction, Args, Parser, Subcommand};
use log::{info, warn};

#[derive(Parser, Debug)]
#[command(name = "capsvm", version, about = "Sparse multi-kernel SVM with capacity-weighted penalties")]
struct Cli {
    /// Seed for fold assignment; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// More log output (repeat for debug level).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// LIBSVM file, or CSV when the name ends in `.csv`.
    #[arg(long)]
    data: PathBuf,
    /// Label column of a CSV file.
    #[arg(long, default_value_t = 0)]
    label_column: usize,
}

#[derive(Args, Debug)]
struct FamilyArgs {
    /// Kernel families, e.g. `poly:1-10`, `rbf:1e-6..1e0`, `linear;sigmoid:0.5,0`.
    #[arg(long, value_parser = parse_kernels)]
    kernels: Kernels,
    /// Complexity estimate: trace, polydim, uniform or local:<s>.
    #[arg(long, default_value = "trace", value_parser = parse_mode)]
    penalty: PenaltyMode,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, default_value = "cd", value_parser = parse_solver)]
    solver: SolverKind,
    /// Coordinate descent stationarity threshold.
    #[arg(long)]
    tol: Option<f64>,
    /// Relative duality gap accepted as optimal by coordinate descent.
    #[arg(long)]
    gap_tol: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Simplex pivot budget.
    #[arg(long)]
    max_pivots: Option<usize>,
}

impl SolverArgs {
    fn cd_config(&self) -> CDConfig {
        let mut cd = CDConfig::default();
        if let Some(t) = self.tol {
            cd.tol = t;
        }
        if let Some(g) = self.gap_tol {
            cd.gap_tol = g;
        }
        cd.max_steps = self.max_steps;
        cd
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-family complexities and penalty weights as CSV.
    Complexity {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trains one model and writes it as JSON.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        beta: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scores a data file with a saved model: `index,raw,label` CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validation over a lambda/beta grid with a per-fold report.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        family: FamilyArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Comma-separated lambda grid (default 1, 0.1, ..., 1e-6).
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        /// Comma-separated radius grid for local penalties.
        #[arg(long, value_delimiter = ',')]
        local_s: Option<Vec<f64>>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Dataset name in the report (default: file stem).
        #[arg(long)]
        name: Option<String>,
        /// Method name in the report (default: the penalty mode).
        #[arg(long)]
        method: Option<String>,
        /// Report CSV; standard output if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Writes the index sets used in each round.
        #[arg(long)]
        audit: Option<PathBuf>,
        /// Fill the train_seconds column (makes reports run-dependent).
        #[arg(long)]
        timings: bool,
    },
    /// Writes the training linear program in CPLEX LP format.
    ExportLp {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error and support vector tables from cv reports.
    Benchmark {
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        /// `dataset,error_mean,error_std,svs_mean,svs_std` rows from another tool.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value = "L2-SVM")]
        baseline_name: String,
        /// Text table; standard output if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV version of the table.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Parsed `--kernels` value; a newtype so clap takes it as one argument.
#[derive(Debug, Clone)]
struct Kernels(Vec<KernelSpec>);

fn parse_kernels(s: &str) -> std::result::Result<Kernels, String> {
    parse_kernel_specs(s).map(Kernels).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<PenaltyMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_solver(s: &str) -> std::result::Result<SolverKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 on a usage error, 2 when the command itself fails.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(io::stdout(), "{e}");
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    1
                }
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load(args: &DataArgs) -> Result<Dataset> {
    let is_csv = args.data.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        load_csv(&args.data, args.label_column)
    } else {
        load_libsvm(&args.data)
    }
}

fn standardized(args: &DataArgs) -> Result<(Dataset, Standardizer)> {
    let raw = load(args)?;
    let st = Standardizer::fit(&raw);
    Ok((st.apply(&raw)?, st))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| file_error(path, e))
}

fn file_error(path: &Path, source: io::Error) -> Error {
    Error::File {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through `f` to `path`, or to standard output.
fn emit(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Complexity {
            data,
            family,
            lambda,
            beta,
            out,
        } => {
            let (train, _) = standardized(&data)?;
            let stack = build_stack(&family.kernels.0, &train)?;
            let pen = build_penalties(&stack, family.penalty, lambda, beta)?;
            emit(out.as_deref(), |w| pen.write_report(&family.kernels.0, w))
        }
        Command::Train {
            data,
            family,
            lambda,
            beta,
            solver,
            out,
        } => {
            let (train, st) = standardized(&data)?;
            let stack = build_stack(&family.kernels.0, &train)?;
            let (p, m) = (stack.num_kernels(), stack.num_points());
            if solver.solver == SolverKind::Lp && 2 * p * m + m > LP_VAR_CAP {
                return Err(Error::Config(format!(
                    "LP with {} variables exceeds the internal solver cap of {LP_VAR_CAP}; use the cd solver",
                    2 * p * m + m
                )));
            }
            let pen = build_penalties(&stack, family.penalty, lambda, beta)?;
            let t = train_on_stack(&stack, &train, &st, &pen, solver.solver, &solver.cd_config(), solver.max_pivots)?;
            if !t.converged {
                warn!("solver stopped before reaching its optimality test");
            }
            t.model.save(&out)?;
            let (entries, svs) = t.model.support_count();
            println!("objective {:.10e}", t.objective);
            println!("support_vectors {svs}");
            println!("nonzero_coefficients {entries}");
            println!("converged {}", t.converged);
            Ok(())
        }
        Command::Predict { model, data, out } => {
            let model = SparseModel::load(&model)?;
            let query = load(&data)?;
            let raw = model.predict_raw(&query)?;
            let labels = model.labels_from_raw(&raw);
            emit(out.as_deref(), |w| {
                let mut csv = csv::Writer::from_writer(w);
                csv.write_record(["index", "raw", "label"])?;
                for (i, (r, l)) in raw.iter().zip(&labels).enumerate() {
                    csv.write_record([i.to_string(), r.to_string(), (*l as i64).to_string()])?;
                }
                csv.flush()?;
                Ok(())
            })
        }
        Command::Cv {
            data,
            family,
            solver,
            lambdas,
            betas,
            local_s,
            folds,
            name,
            method,
            out,
            audit,
            timings,
        } => {
            let dataset = load(&data)?;
            let mut grid = GridSpec::new(family.kernels.0, family.penalty);
            grid.lambdas = lambdas.unwrap_or_else(default_decades);
            grid.betas = betas.unwrap_or_else(default_decades);
            grid.local_s = local_s;
            grid.solver = solver.solver;
            grid.seed = cli.seed;
            grid.cd = solver.cd_config();
            grid.max_pivots = solver.max_pivots;
            grid.timings = timings;
            let name = name.unwrap_or_else(|| {
                data.data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into())
            });
            let method = method.unwrap_or_else(|| family.penalty.to_string());
            let report = run_cv(&dataset, &name, &method, &grid, folds)?;
            let (err, err_sd) = report.error_stats();
            let (sv, sv_sd) = report.sv_stats();
            info!(
                "{name}/{method}: lambda {} beta {}, test error {err:.2} ({err_sd:.2}) %, support vectors {sv:.1} ({sv_sd:.1})",
                report.selected.lambda, report.selected.beta
            );
            emit(out.as_deref(), |w| report.write_csv(w))?;
            if let Some(path) = audit {
                let mut w = create(&path)?;
                report.write_audit(&mut w)?;
                w.flush()?;
            }
            if out.is_some() {
                println!("test_error_pct {err} ({err_sd})");
                println!("support_vectors {sv} ({sv_sd})");
            }
            Ok(())
        }
        Command::ExportLp {
            data,
            family,
            lambda,
            beta,
            out,
        } => {
            let (train, _) = standardized(&data)?;
            let stack = build_stack(&family.kernels.0, &train)?;
            let pen = build_penalties(&stack, family.penalty, lambda, beta)?;
            let problem = build_lp(&stack, &train.labels, &pen)?;
            export_lp_file(&problem, &out)
        }
        Command::Benchmark {
            reports,
            baseline,
            baseline_name,
            out,
            csv,
        } => {
            let mut all = Vec::new();
            for path in &reports {
                let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
                all.extend(read_report_csv(&text)?);
            }
            let rows = match &baseline {
                Some(path) => parse_baseline_csv(&fs::read_to_string(path).map_err(|e| file_error(path, e))?)?,
                None => Vec::new(),
            };
            let base = (!rows.is_empty()).then_some((baseline_name.as_str(), rows.as_slice()));
            let table = benchmark_table(&all, base)?;
            emit(out.as_deref(), |w| Ok(w.write_all(table.text.as_bytes())?))?;
            if let Some(path) = csv {
                fs::write(&path, table.csv).map_err(|e| file_error(&path, e))?;
            }
            Ok(())
        }
    }
}
