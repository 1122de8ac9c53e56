use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dmar::config::Config;
use dmar::engine::{self, FittedRegime, Method, TreatmentWeights};
use dmar::panel::{self, load_cohort, write_cohort, StrategyCode};
use dmar::sim::{self, DgmScenario, Observational, Policy, Static, TrueStageTwo};
use dmar::study::{self, StudyBundle};
use dmar::weights;

#[derive(Parser)]
#[command(name = "dmar", version, about = "Optimal dynamic monitoring and add-on regimes")]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "DMAR_WORKERS", default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a cohort from the simulation model.
    Simulate(SimulateArgs),
    /// Fit a regime to a cohort file.
    Estimate(EstimateArgs),
    /// Run a replication study.
    Study(StudyArgs),
    /// Value of policies over a fresh simulated population.
    Value(ValueArgs),
    /// Recommended strategies and received-vs-recommended tables.
    Apply(ApplyArgs),
    /// Render tables from a study bundle.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Observational,
    None,
    Visit,
    VisitAddon,
    TrueOptimal,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "A")]
    scenario: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "observational")]
    policy: PolicyArg,
    /// Follow a fitted regime instead of `--policy`.
    #[arg(long)]
    regime: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Woma,
    Qloma,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Overlap,
    Ipt,
    None,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "woma")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "overlap")]
    weights: WeightsArg,
    #[arg(long)]
    out: PathBuf,
    /// Write the imputation manifest here when imputing.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write one balance table per stage into this directory.
    #[arg(long)]
    balance_dir: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `study.output_dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ValueArgs {
    /// Fitted regimes to evaluate; repeatable.
    #[arg(long)]
    regime: Vec<PathBuf>,
    /// Also evaluate the rule built from the true blip parameters.
    #[arg(long)]
    true_optimal: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_eval: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    regime: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Per-subject decisions as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn read_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

fn read_regime(path: &Path) -> Result<FittedRegime> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    FittedRegime::from_json(&text).with_context(|| format!("parsing regime {}", path.display()))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let Some(scenario) = DgmScenario::preset(&a.scenario, a.n, a.seed) else {
        bail!("unknown scenario {:?}", a.scenario);
    };
    let regime = a.regime.as_deref().map(read_regime).transpose()?;
    let fixed;
    let truth = TrueStageTwo { stage_one: Observational };
    let policy: &dyn Policy = match (&regime, a.policy) {
        (Some(r), _) => r,
        (None, PolicyArg::Observational) => &Observational,
        (None, PolicyArg::TrueOptimal) => &truth,
        (None, p) => {
            fixed = Static(match p {
                PolicyArg::None => StrategyCode::NONE,
                PolicyArg::Visit => StrategyCode::VISIT,
                _ => StrategyCode::VISIT_ADDON,
            });
            &fixed
        }
    };
    let cohort = sim::generate_under_policy(&scenario, policy);
    write_cohort(&cohort, &a.out)?;
    eprintln!(
        "wrote {} subjects to {} (censored {:.2}%)",
        cohort.n(),
        a.out.display(),
        100.0 * sim::censoring_proportion(&cohort)
    );
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let cfg = read_config(a.config.as_deref())?;
    let (cohort, report) = load_cohort(&a.data, None).with_context(|| format!("loading {}", a.data.display()))?;
    if report.visit_repairs > 0 {
        eprintln!("repaired {} rows with an add-on but no visit", report.visit_repairs);
    }
    let diag = panel::validate_cohort(&cohort, cfg.weights.positivity_floor);
    for w in &diag.warnings {
        eprintln!("positivity: t={} strategy {} frequency {:.4}", w.t, w.strategy, w.frequency);
    }
    let method = match a.method {
        MethodArg::Woma => Method::Woma,
        MethodArg::Qloma => Method::Qloma,
    };
    let tw = match a.weights {
        WeightsArg::Overlap => TreatmentWeights::Overlap,
        WeightsArg::Ipt => TreatmentWeights::Ipt,
        WeightsArg::None => TreatmentWeights::None,
    };
    let est = cfg.estimate(&cohort, method, tw)?;
    fs::write(&a.out, est.regime.to_json()).with_context(|| format!("writing {}", a.out.display()))?;
    if let (Some(path), Some(m)) = (&a.manifest, &est.manifest) {
        fs::write(path, serde_json::to_string_pretty(m)?).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(dir) = &a.balance_dir {
        fs::create_dir_all(dir)?;
        let opts = cfg.model.regime_options(method, tw, &cfg.weights)?;
        for s in &est.regime.stages {
            let (w, _) = engine::stage_weights(&cohort, s.t, &opts)?;
            let covs = opts.propensity.get(&s.t).cloned().unwrap_or_default();
            let rows = weights::balance_diagnostics(&cohort, s.t, &w, &covs)?;
            let path = dir.join(format!("balance_t{}.csv", s.t));
            weights::write_balance_csv(&rows, fs::File::create(&path)?)?;
        }
    }
    for s in &est.regime.stages {
        println!("stage {}: gamma {:?} gamma_star {:?}", s.t, s.gamma, s.gamma_star);
    }
    Ok(())
}

fn write_study_outputs(bundle: &StudyBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    study::write_bias_table(bundle, fs::File::create(dir.join("bias.csv"))?)?;
    study::write_estimates(bundle, fs::File::create(dir.join("estimates.csv"))?)?;
    Ok(())
}

fn print_bias(bundle: &StudyBundle) -> Result<()> {
    let mut out = Vec::new();
    study::write_bias_table(bundle, &mut out)?;
    std::io::stdout().write_all(&out)?;
    Ok(())
}

fn run_study(a: StudyArgs) -> Result<()> {
    let cfg = Config::load(&a.config)?;
    let sc = cfg.study_config()?;
    let bundle = study::run_study(&sc)?;
    let dir = a.out_dir.unwrap_or_else(|| PathBuf::from(&cfg.study.output_dir));
    write_study_outputs(&bundle, &dir)?;
    fs::write(dir.join("bundle.json"), bundle.to_json())?;
    print_bias(&bundle)?;
    let aborted = bundle.replications.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "{} replications ({aborted} aborted), outputs in {}",
        bundle.replications.len(),
        dir.display()
    );
    Ok(())
}

fn value(a: ValueArgs) -> Result<()> {
    let cfg = read_config(a.config.as_deref())?;
    let n_eval = a.n_eval.unwrap_or(cfg.value.n_eval);
    let seed = a.seed.unwrap_or(cfg.value.seed);
    let regimes = a.regime.iter().map(|p| read_regime(p)).collect::<Result<Vec<_>>>()?;
    let truth = TrueStageTwo { stage_one: Observational };
    let mut policies: Vec<(String, &dyn Policy)> = a
        .regime
        .iter()
        .zip(&regimes)
        .map(|(p, r)| (p.display().to_string(), r as &dyn Policy))
        .collect();
    if a.true_optimal {
        policies.push(("true_optimal_stage2".into(), &truth));
    }
    let rows = study::value_report(&policies, n_eval, seed);
    match &a.out {
        Some(p) => study::write_value_report(&rows, fs::File::create(p)?)?,
        None => study::write_value_report(&rows, std::io::stdout())?,
    }
    Ok(())
}

fn apply(a: ApplyArgs) -> Result<()> {
    let regime = read_regime(&a.regime)?;
    let (cohort, _) = load_cohort(&a.data, None).with_context(|| format!("loading {}", a.data.display()))?;
    let applied = engine::apply_regime(&regime, &cohort)?;
    for tab in &applied.tables {
        println!("stage {} (received in rows, recommended in columns; n = {})", tab.t, tab.total());
        println!("received,(0,0),(1,0),(1,1)");
        for (k, row) in tab.counts.iter().enumerate() {
            let code = StrategyCode::from_index(k).expect("three strategies");
            println!("{code},{},{},{}", row[0], row[1], row[2]);
        }
    }
    if let Some(path) = &a.out {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(f, "id,time,visit,addon")?;
        for (t, dec) in &applied.decisions {
            for (i, d) in dec.iter().enumerate() {
                if let Some(d) = d {
                    writeln!(f, "{},{t},{},{}", cohort.ids()[i], u8::from(d.visit()), u8::from(d.addon()))?;
                }
            }
        }
        f.flush()?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&a.bundle).with_context(|| format!("reading {}", a.bundle.display()))?;
    let bundle = StudyBundle::from_json(&text)?;
    match &a.out_dir {
        Some(dir) => write_study_outputs(&bundle, dir),
        None => print_bias(&bundle),
    }
}

fn error_line(kind: &str, message: &str) {
    let line = serde_json::json!({ "status": "error", "kind": kind, "message": message });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            error_line("usage", &e.kind().to_string());
            return ExitCode::from(1);
        }
    };
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Study(a) => run_study(a),
        Command::Value(a) => value(a),
        Command::Apply(a) => apply(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error_line("runtime", &format!("{e:#}"));
            ExitCode::from(2)
        }
    }
}
