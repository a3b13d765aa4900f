use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use survdsa::cart::CartConfig;
use survdsa::data::{load_csv, split_folds, ColumnMapping, CovariateKind, SurvivalDataset};
use survdsa::dsa::DsaConfig;
use survdsa::evaluation::{evaluate, region_curves};
use survdsa::loss::{select_time_grid, GridStrategy, LossSpec};
use survdsa::partition::{fill_mean_survival, PartitionModel};
use survdsa::selection::{select, CensoringPolicy, Selection};
use survdsa::simulation::{run_study, Method, Scenario, StudyConfig};
use survdsa::survival::{kaplan_meier, truncate};

const LOSSES: [&str; 4] = ["ipcw-l2", "brier-1fixed", "brier-5even", "brier-5km"];

#[derive(Parser)]
#[command(name = "survdsa", version, about = "Partition-based survival risk groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a risk-group model to a CSV dataset.
    Fit(WithConfig<FitOptions>),
    /// Run a simulation scenario and write aggregate tables.
    Replicate(WithConfig<ReplicateOptions>),
    /// Score a saved model on a test CSV.
    Evaluate(WithConfig<EvaluateOptions>),
}

#[derive(Args)]
struct WithConfig<T: Args> {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    options: T,
}

trait Merge {
    fn merge(self, fallback: Self) -> Self;
}

macro_rules! options {
    ($(#[$meta:meta])* struct $name:ident { $($(#[$fmeta:meta])* $field:ident: $ty:ty,)* }) => {
        $(#[$meta])*
        #[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
        #[serde(rename_all = "kebab-case", deny_unknown_fields)]
        struct $name {
            $(
                $(#[$fmeta])*
                #[serde(default, skip_serializing_if = "Option::is_none")]
                $field: Option<$ty>,
            )*
        }

        impl Merge for $name {
            fn merge(self, fallback: Self) -> Self {
                $name { $($field: self.$field.or(fallback.$field),)* }
            }
        }
    };
}

options! {
    struct FitOptions {
        /// Input CSV with a header row.
        #[arg(long)]
        data: PathBuf,
        /// Follow-up time column.
        #[arg(long)]
        time: String,
        /// Event indicator column (1 = event, 0 = censored).
        #[arg(long)]
        event: String,
        /// Covariate columns (default: every other column).
        #[arg(long, value_delimiter = ',')]
        covariates: Vec<String>,
        /// Columns to treat as categorical even if numeric.
        #[arg(long, value_delimiter = ',')]
        categorical: Vec<String>,
        /// ipcw-l2 | brier-1fixed | brier-5even | brier-5km
        #[arg(long)]
        loss: String,
        /// partdsa | cart (cart requires ipcw-l2)
        #[arg(long)]
        method: String,
        #[arg(long)]
        folds: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        max_regions: usize,
        /// Minimum subjects per clause.
        #[arg(long)]
        min_clause: usize,
        /// Minimum relative improvement for deletion and substitution.
        #[arg(long)]
        mpd: f64,
        /// Fraction of follow-up times clamped at tau (0 disables).
        #[arg(long)]
        truncate: f64,
        /// km | cox
        #[arg(long)]
        censoring: String,
        /// Covariates of the cox censoring model (default: all numeric).
        #[arg(long, value_delimiter = ',')]
        censoring_covariates: Vec<String>,
        /// Evaluation time for brier-1fixed (default: Kaplan–Meier median).
        #[arg(long)]
        brier_time: f64,
        #[arg(long)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    }
}

options! {
    struct ReplicateOptions {
        /// {high|low}-{dep|indep}-{0|30|50}
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        jobs: usize,
        /// Comma-separated methods (default: all).
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long)]
        n_train: usize,
        #[arg(long)]
        n_test: usize,
        #[arg(long)]
        folds: usize,
        #[arg(long)]
        max_regions: usize,
        #[arg(long)]
        min_clause: usize,
        #[arg(long)]
        mpd: f64,
        #[arg(long)]
        truncate: f64,
        #[arg(long)]
        out: PathBuf,
    }
}

options! {
    struct EvaluateOptions {
        /// Model JSON written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Test CSV.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        time: String,
        #[arg(long)]
        event: String,
        /// Reference model JSON for prediction error and pairwise similarity.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    }
}

fn resolve<T: Args + Merge + Default + for<'de> Deserialize<'de>>(cmd: WithConfig<T>) -> Result<T> {
    let file = match &cmd.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid config {}", p.display()))?
        }
        None => T::default(),
    };
    Ok(cmd.options.merge(file))
}

fn write_config<T: Serialize>(dir: &Path, resolved: &T) -> Result<()> {
    let text = toml::to_string(resolved).context("cannot serialize config")?;
    std::fs::write(dir.join("config.toml"), text).context("cannot write config.toml")
}

fn create(dir: &Path, name: &str) -> Result<File> {
    let p = dir.join(name);
    File::create(&p).with_context(|| format!("cannot create {}", p.display()))
}

fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        None => Ok(f()),
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.with_context(|| format!("missing required option --{flag}"))
}

fn covariate_indices(data: &SurvivalDataset, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| data.covariate_index(n).with_context(|| format!("unknown covariate `{n}`")))
        .collect()
}

fn run_fit(mut o: FitOptions) -> Result<()> {
    let data_path = required(o.data.clone(), "data")?;
    let time = required(o.time.clone(), "time")?;
    let event = required(o.event.clone(), "event")?;
    let loss_name = o.loss.get_or_insert_with(|| "ipcw-l2".into()).clone();
    if !LOSSES.contains(&loss_name.as_str()) {
        bail!("unknown loss `{loss_name}`; valid losses: {}", LOSSES.join(", "));
    }
    let method = o.method.get_or_insert_with(|| "partdsa".into()).clone();
    if method != "partdsa" && method != "cart" {
        bail!("unknown method `{method}`; valid methods: partdsa, cart");
    }
    if method == "cart" && loss_name != "ipcw-l2" {
        bail!("method cart supports only the ipcw-l2 loss");
    }
    let folds = *o.folds.get_or_insert(5);
    let seed = *o.seed.get_or_insert(1);
    let max_regions = *o.max_regions.get_or_insert(10);
    let min_clause = *o.min_clause.get_or_insert(15);
    let mpd = *o.mpd.get_or_insert(0.05);
    let frac = *o.truncate.get_or_insert(0.05);
    let censoring = o.censoring.get_or_insert_with(|| "km".into()).clone();
    let out = o.out.get_or_insert_with(|| PathBuf::from("survdsa-fit")).clone();

    let mut mapping = ColumnMapping::new(&time, &event);
    if let Some(c) = o.covariates.as_ref().filter(|c| !c.is_empty()) {
        mapping = mapping.with_covariates(c.clone());
    }
    for c in o.categorical.iter().flatten() {
        mapping = mapping.with_categorical(c.clone(), None);
    }
    let raw = load_csv(&data_path, &mapping)?;
    raw.require_events()?;
    let data = if frac > 0.0 { truncate(&raw, frac)?.dataset } else { raw };

    let policy = match censoring.as_str() {
        "km" => CensoringPolicy::product_limit(),
        "cox" => {
            let names = o.censoring_covariates.clone().filter(|c| !c.is_empty()).unwrap_or_else(|| {
                data.schema()
                    .iter()
                    .filter(|c| matches!(c.kind, CovariateKind::Numeric))
                    .map(|c| c.name.clone())
                    .collect()
            });
            if names.is_empty() {
                bail!("cox censoring model needs at least one numeric covariate");
            }
            let idx = covariate_indices(&data, &names)?;
            o.censoring_covariates = Some(names);
            CensoringPolicy::proportional_hazards(idx)
        }
        other => bail!("unknown censoring model `{other}`; valid models: km, cox"),
    };

    let loss = match loss_name.as_str() {
        "ipcw-l2" => LossSpec::ipcw_l2(),
        "brier-1fixed" => {
            let t = match o.brier_time {
                Some(t) => t,
                None => kaplan_meier(&data.times(), &data.events())?
                    .first_time_at_or_below(0.5)
                    .context("Kaplan-Meier curve never reaches 0.5; pass --brier-time")?,
            };
            o.brier_time = Some(t);
            LossSpec::brier_single(t)?
        }
        "brier-5even" => {
            let tau = data.times().into_iter().fold(0.0, f64::max);
            LossSpec::brier_composite(select_time_grid(&data, &GridStrategy::FiveEven { tau })?)?
        }
        _ => LossSpec::brier_composite(select_time_grid(&data, &GridStrategy::FiveKm)?)?,
    };

    let fold_assignment = split_folds(&data, folds, seed)?;
    let selection: Selection = with_jobs(o.jobs, || -> survdsa::Result<Selection> {
        if method == "cart" {
            let cart = CartConfig {
                min_node: min_clause,
                min_split: 2 * min_clause,
                max_leaves: max_regions,
                ..Default::default()
            };
            select(&data, &cart, &policy, &fold_assignment)
        } else {
            let dsa = DsaConfig {
                max_regions,
                min_per_clause: min_clause,
                min_percent_difference: mpd,
                loss: loss.clone(),
                ..Default::default()
            };
            dsa.validate()?;
            select(&data, &dsa, &policy, &fold_assignment)
        }
    })??;

    let mut model = selection.model.clone();
    fill_mean_survival(&mut model, &data, &selection.censoring)?;
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    std::fs::write(out.join("model.json"), model.to_json()?).context("cannot write model.json")?;
    std::fs::write(out.join("candidates.json"), selection.candidates.to_json()?).context("cannot write candidates.json")?;
    let assignment = model.assign_all(&data)?;
    let mut counts = vec![0usize; model.size()];
    assignment.iter().for_each(|&r| counts[r] += 1);
    std::fs::write(out.join("risk_table.txt"), model.risk_table(Some(&counts))).context("cannot write risk_table.txt")?;
    selection.curve.write_csv(create(&out, "cv_curve.csv")?)?;
    write_region_km(&model, &data, create(&out, "km_curves.csv")?)?;
    write_config(&out, &o)?;
    print!("{}", model.risk_table(Some(&counts)));
    println!("chosen size {} ({} folds); outputs in {}", selection.curve.chosen_size, folds, out.display());
    Ok(())
}

/// Kaplan–Meier curve per region in model order.
fn write_region_km(model: &PartitionModel, data: &SurvivalDataset, file: File) -> Result<()> {
    use std::io::Write;
    let assignment = model.assign_all(data)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "region,time,survival")?;
    for r in 0..model.size() {
        let (t, e): (Vec<f64>, Vec<bool>) = data
            .subjects()
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a == r)
            .map(|(s, _)| (s.time, s.event))
            .unzip();
        writeln!(w, "{},0,1", r + 1)?;
        if t.is_empty() {
            continue;
        }
        let km = kaplan_meier(&t, &e)?;
        for (jt, v) in km.jump_times().iter().zip(km.values()) {
            writeln!(w, "{},{jt},{v}", r + 1)?;
        }
    }
    Ok(())
}

fn run_replicate(mut o: ReplicateOptions) -> Result<()> {
    let name = required(o.scenario.clone(), "scenario")?;
    let mut scenario: Scenario = name.parse()?;
    let reps = *o.reps.get_or_insert(100);
    if reps == 0 {
        bail!("--reps must be at least 1");
    }
    let seed = *o.seed.get_or_insert(1);
    let methods: Vec<Method> = match o.methods.as_ref().filter(|m| !m.is_empty()) {
        Some(m) => m.iter().map(|s| s.parse()).collect::<survdsa::Result<_>>()?,
        None => Method::ALL.to_vec(),
    };
    o.methods = Some(methods.iter().map(|m| m.label().to_string()).collect());
    scenario.n_train = *o.n_train.get_or_insert(scenario.n_train);
    scenario.n_test = *o.n_test.get_or_insert(scenario.n_test);
    let mut config = StudyConfig::default();
    config.folds = *o.folds.get_or_insert(config.folds);
    config.truncation = *o.truncate.get_or_insert(config.truncation);
    config.dsa.max_regions = *o.max_regions.get_or_insert(config.dsa.max_regions);
    config.dsa.min_per_clause = *o.min_clause.get_or_insert(config.dsa.min_per_clause);
    config.dsa.min_percent_difference = *o.mpd.get_or_insert(config.dsa.min_percent_difference);
    config.cart.max_leaves = config.dsa.max_regions;
    config.cart.min_node = config.dsa.min_per_clause;
    config.cart.min_split = 2 * config.dsa.min_per_clause;
    config.dsa.validate()?;
    let out = o.out.get_or_insert_with(|| PathBuf::from(format!("survdsa-{}", scenario.name()))).clone();

    let report = with_jobs(o.jobs, || run_study(&scenario, &methods, &config, Some(reps), seed))??;
    report.write_dir(&out)?;
    // jobs does not affect results, so it is left out of the echoed config
    o.jobs = None;
    write_config(&out, &o)?;
    let mut table = Vec::new();
    report.write_aggregate_csv(&mut table)?;
    print!("{}", String::from_utf8_lossy(&table));
    Ok(())
}

fn run_evaluate(o: EvaluateOptions) -> Result<()> {
    let model_path = required(o.model.clone(), "model")?;
    let data_path = required(o.data.clone(), "data")?;
    let time = required(o.time.clone(), "time")?;
    let event = required(o.event.clone(), "event")?;
    let read_model = |p: &Path| -> Result<PartitionModel> {
        let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
        Ok(PartitionModel::from_json(&text)?)
    };
    let model = read_model(&model_path)?;
    let mut mapping = ColumnMapping::new(time, event).with_covariates(model.schema().iter().map(|c| c.name.clone()));
    for c in model.schema() {
        if let CovariateKind::Categorical { levels } = &c.kind {
            mapping = mapping.with_categorical(c.name.clone(), Some(levels.clone()));
        }
    }
    let test = load_csv(&data_path, &mapping)?;
    if test.schema() != model.schema() {
        bail!("test data covariates do not match the model schema");
    }
    let truth = o.truth.as_deref().map(read_model).transpose()?;
    if let Some(t) = &truth {
        if t.schema() != model.schema() {
            bail!("reference model schema does not match the model schema");
        }
    }
    let report = evaluate(&model, &test, truth.as_ref())?;
    print!("{}", report.to_text());
    if let Some(out) = &o.out {
        std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
        report.write_csv(create(out, "metrics.csv")?)?;
        let curves = region_curves(&model, &test)?;
        use std::io::Write;
        let mut w = std::io::BufWriter::new(create(out, "test_km_curves.csv")?);
        writeln!(w, "rank,time,survival")?;
        for (rank, c) in curves.iter().enumerate() {
            writeln!(w, "{},0,1", rank + 1)?;
            for (t, v) in c.jump_times().iter().zip(c.values()) {
                writeln!(w, "{},{t},{v}", rank + 1)?;
            }
        }
        write_config(out, &o)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::FAILURE;
        }
    };
    let result = match cli.command {
        Command::Fit(c) => resolve(c).and_then(run_fit),
        Command::Replicate(c) => resolve(c).and_then(run_replicate),
        Command::Evaluate(c) => resolve(c).and_then(run_evaluate),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
