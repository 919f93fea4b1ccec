use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use log::info;

use mesval::data::synth_data_from;
use mesval::experiment::Experiment;
use mesval::forecast::Forecaster;
use mesval::report;
use mesval::valuation::{
    evaluate_cost, evaluate_ideal, full_valuation, sector_metrics, train_base_for, train_end_to_end, Coalition,
    CostReport, SECTOR_LABELS,
};
use mesval::Error;

#[derive(Parser)]
#[command(name = "mesval", version, about = "Value multi-energy load data by decision-focused forecasting")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(short, long, default_value = "configs/experiment.toml")]
    config: PathBuf,
    /// Output directory, replacing the config's `output_dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Seed, replacing the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the MSE forecaster of every sector.
    TrainBase(Common),
    /// Forecast-then-optimize cost on the test split, by month.
    RunFto(Common),
    /// End-to-end training of one coalition.
    TrainE2e {
        #[command(flatten)]
        common: Common,
        /// Sectors to train, e.g. `ehc`, `h` or `none`.
        #[arg(long, default_value = "ehc")]
        coalition: String,
    },
    /// Every coalition, the ledger and the allocation.
    Valuate(Common),
    /// Forecast accuracy of the MSE and end-to-end models per sector.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "ehc")]
        coalition: String,
    },
    /// Write a synthetic load CSV.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 365)]
        days: usize,
        #[arg(long, default_value = "2024-01-01")]
        start: NaiveDate,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the randomized gradient and optimality batteries.
    Gradcheck {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

enum Failure {
    Usage(String),
    Data(String),
    Infeasible(String),
    Invariant(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Invariant(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Infeasible(m) | Failure::Invariant(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::Config(_) => Failure::Usage(m),
            Error::Infeasible { .. } | Error::NodeLimit(_) => Failure::Infeasible(m),
            Error::Invariant(_) => Failure::Invariant(m),
            _ => Failure::Data(m),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mesval: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::TrainBase(c) => train_base(&c),
        Command::RunFto(c) => run_fto(&c),
        Command::TrainE2e { common, coalition } => train_e2e(&common, &coalition),
        Command::Valuate(c) => valuate(&c),
        Command::Metrics { common, coalition } => metrics(&common, &coalition),
        Command::Synth { seed, days, start, out } => {
            if days == 0 {
                return Err(Failure::Usage("--days must be at least 1".into()));
            }
            synth_data_from(seed, days, start).to_csv(&out)?;
            println!("wrote {} hours to {}", days * 24, out.display());
            Ok(())
        }
        Command::Gradcheck { seed } => {
            let reports = mesval::gradcheck::run_all(seed)?;
            for r in &reports {
                println!("{}", r.summary());
                for f in &r.failures {
                    println!("    {f}");
                }
            }
            if reports.iter().all(|r| r.passed()) {
                Ok(())
            } else {
                Err(Failure::Invariant("gradient batteries failed".into()))
            }
        }
    }
}

fn load(c: &Common) -> Result<Experiment, Failure> {
    let mut exp = Experiment::load(&c.config)?;
    if let Some(seed) = c.seed {
        exp = exp.with_seed(seed, c.config.parent().unwrap_or(Path::new(".")))?;
    }
    if let Some(out) = &c.out {
        exp.output_dir = out.clone();
    }
    std::fs::create_dir_all(exp.output_dir.join("models")).map_err(Error::from)?;
    Ok(exp)
}

fn parse_coalition(s: &str) -> Result<Coalition, Failure> {
    Coalition::parse(s, &SECTOR_LABELS).map_err(|e| Failure::Usage(e.to_string()))
}

fn model_path(exp: &Experiment, tag: &str, sector: usize) -> PathBuf {
    exp.output_dir.join("models").join(format!("{tag}_{}.json", SECTOR_LABELS[sector]))
}

fn save_models(exp: &Experiment, tag: &str, models: &[Forecaster]) -> Outcome {
    for m in models {
        m.save(model_path(exp, tag, m.sector))?;
    }
    Ok(())
}

/// Saved models of `tag` when all sectors are present.
fn saved_models(exp: &Experiment, tag: &str) -> Result<Option<Vec<Forecaster>>, Failure> {
    let paths: Vec<PathBuf> = (0..SECTOR_LABELS.len()).map(|s| model_path(exp, tag, s)).collect();
    if !paths.iter().all(|p| p.exists()) {
        return Ok(None);
    }
    let models = paths.iter().map(Forecaster::load).collect::<Result<Vec<_>, _>>()?;
    Ok(Some(models))
}

fn base_models(exp: &Experiment) -> Result<Vec<Forecaster>, Failure> {
    if let Some(m) = saved_models(exp, "base")? {
        info!("using saved base models");
        return Ok(m);
    }
    let models = train_base_for(exp)?;
    save_models(exp, "base", &models)?;
    Ok(models)
}

fn check_invariants(what: &str, reports: &[&CostReport], extra: &[String]) -> Outcome {
    let mut v: Vec<&String> = reports.iter().flat_map(|r| r.violations.iter()).collect();
    v.extend(extra);
    if v.is_empty() {
        return Ok(());
    }
    for line in v.iter().take(20) {
        eprintln!("  {line}");
    }
    Err(Failure::Invariant(format!("{what}: {} invariant violations", v.len())))
}

fn write_text(exp: &Experiment, name: &str, text: &str) -> Outcome {
    std::fs::write(exp.output_dir.join(name), text).map_err(Error::from)?;
    print!("{text}");
    Ok(())
}

fn train_base(c: &Common) -> Outcome {
    let exp = load(c)?;
    let models = train_base_for(&exp)?;
    save_models(&exp, "base", &models)?;
    let rows = vec![("benchmark".to_string(), sector_metrics(&models, &exp.series, &exp.test_days)?)];
    report::write_metrics(&rows, exp.output_dir.join("base_metrics.csv"))?;
    write_text(&exp, "base_metrics.txt", &report::metrics_table(&rows))
}

fn run_fto(c: &Common) -> Outcome {
    let exp = load(c)?;
    let base = base_models(&exp)?;
    let opts = exp.branch_options();
    let fto = evaluate_cost(&base, &exp.series, &exp.test_days, &exp.hub, exp.config.mode, &opts)?;
    let ideal = evaluate_ideal(&exp.series, &exp.test_days, &exp.hub, exp.config.mode, &opts)?;
    report::write_daily_costs(&fto, exp.output_dir.join("fto_daily.csv"))?;
    report::write_monthly_costs(&fto, exp.output_dir.join("fto_monthly.csv"))?;
    report::write_monthly_costs(&ideal, exp.output_dir.join("ideal_monthly.csv"))?;
    let mut text = report::monthly_table("forecast-then-optimize, test split", &fto);
    text += &format!("ideal (perfect forecasts): {:.4} kCNY\n", ideal.total_kcny());
    write_text(&exp, "fto_summary.txt", &text)?;
    check_invariants("run-fto", &[&fto, &ideal], &[])
}

fn train_e2e(c: &Common, coalition: &str) -> Outcome {
    let coalition = parse_coalition(coalition)?;
    let exp = load(c)?;
    let base = base_models(&exp)?;
    let opts = exp.branch_options();
    let run = train_end_to_end(
        coalition,
        &base,
        &exp.series,
        &exp.train_days,
        &exp.hub,
        &exp.config.training,
        &opts,
    )?;
    let tag = format!("e2e_{coalition}");
    save_models(&exp, &tag, &run.models)?;
    let test = evaluate_cost(&run.models, &exp.series, &exp.test_days, &exp.hub, exp.config.mode, &opts)?;
    report::write_daily_costs(&test, exp.output_dir.join(format!("{tag}_daily.csv")))?;
    report::write_monthly_costs(&test, exp.output_dir.join(format!("{tag}_monthly.csv")))?;
    let mut text = format!("end-to-end training of coalition {coalition}\nepoch  training cost (kCNY)\n");
    for (k, cost) in run.epoch_costs.iter().enumerate() {
        let mark = if k == run.selected_epoch { "  selected" } else { "" };
        text += &format!("{k:>5}  {cost:>20.4}{mark}\n");
    }
    text += &report::monthly_table("test split", &test);
    write_text(&exp, &format!("{tag}_summary.txt"), &text)?;
    check_invariants("train-e2e", &[&test], &run.violations)
}

fn valuate(c: &Common) -> Outcome {
    let exp = load(c)?;
    let base = base_models(&exp)?;
    let out = full_valuation(&exp, &base)?;
    for (mask, run) in out.runs.iter().enumerate() {
        save_models(&exp, &format!("e2e_{}", Coalition(mask as u32)), &run.models)?;
    }
    out.ledger.to_csv(exp.output_dir.join("ledger.csv"))?;
    report::write_allocation(&out.ledger, &out.allocation, exp.output_dir.join("allocation.csv"))?;
    let mut text = out.ledger.summary_table()?;
    text += "\n";
    text += &report::allocation_table(&out.ledger, &out.allocation);
    text += &format!("\nideal (perfect forecasts): {:.4} kCNY\n", out.ideal.total_kcny());
    write_text(&exp, "valuation.txt", &text)?;
    let run_violations: Vec<String> = out.runs.iter().flat_map(|r| r.violations.clone()).collect();
    let mut reports: Vec<&CostReport> = out.test.iter().collect();
    reports.push(&out.ideal);
    check_invariants("valuate", &reports, &run_violations)
}

fn metrics(c: &Common, coalition: &str) -> Outcome {
    let coalition = parse_coalition(coalition)?;
    let exp = load(c)?;
    let base = base_models(&exp)?;
    let tag = format!("e2e_{coalition}");
    let e2e = match saved_models(&exp, &tag)? {
        Some(m) => m,
        None => {
            let run = train_end_to_end(
                coalition,
                &base,
                &exp.series,
                &exp.train_days,
                &exp.hub,
                &exp.config.training,
                &exp.branch_options(),
            )?;
            save_models(&exp, &tag, &run.models)?;
            run.models
        }
    };
    let rows = vec![
        ("benchmark".to_string(), sector_metrics(&base, &exp.series, &exp.test_days)?),
        (tag, sector_metrics(&e2e, &exp.series, &exp.test_days)?),
    ];
    report::write_metrics(&rows, exp.output_dir.join("metrics.csv"))?;
    write_text(&exp, "metrics.txt", &report::metrics_table(&rows))
}
