//! Command implementations behind the `vinedep` binary. Every command returns
//! its artifacts as strings; [`run`] writes them out.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use vinedep::analysis::{
    comorbidity_report, conditioned_ranking, extract_clusters, rank_table, tie_sensitivity, ComorbidityOptions,
    Condition, RankOptions, DEFAULT_MIN_DEGREE, DEFAULT_MIN_ROWS, MIN_PREVALENCE,
};
use vinedep::bicop::{Criterion, Family};
use vinedep::dependence::tau_matrix;
use vinedep::ingest::{curate, load_schema, load_table, CurationLog, DataTable, VariableKind, VariableMeta};
use vinedep::margins::{transform_table, TiePolicy};
use vinedep::sample::{sample_data_scale, sample_uniform, SampleBatch};
use vinedep::structure::{FitSettings, VineKind};
use vinedep::vinefit::{fit_structure, FittedVine};
use vinedep::{json, Error};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Core(e) if e.is_numeric() => exit::NUMERIC,
            CliError::Core(_) | CliError::Write { .. } => exit::DATA,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "vinedep", version, about = "Vine-copula dependence analysis for tabular cohorts")]
pub struct Cli {
    /// Worker threads (default: all cores). Never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Apply bounds, drop incomplete rows and impute medians.
    Curate(CurateArgs),
    /// Fit a vine copula model and write it as JSON.
    Fit(FitArgs),
    /// Rank variables by C-vine centrality.
    Rank(RankArgs),
    /// Report first-tree hubs of a fitted or freshly built vine.
    Clusters(ClusterArgs),
    /// Simulate rows from a fitted model.
    Sample(SampleArgs),
    /// Write the Kendall's tau-b matrix as CSV.
    ExportTau(TauArgs),
    /// Co-occurrence clusters of binary indicators with covariates.
    Comorbidity(ComorbidityArgs),
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// JSON schema listing variables, kinds and bounds (default: every column continuous).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Rows with a larger fraction of missing cells are dropped.
    #[arg(long, default_value_t = vinedep::ingest::DEFAULT_ROW_THRESHOLD)]
    pub row_threshold: f64,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value = "aic")]
    pub criterion: Criterion,
    /// Candidate families, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "gaussian,student,clayton,frank")]
    pub families: Vec<Family>,
    #[arg(long, default_value = "jitter")]
    pub tie_policy: TiePolicy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fit Independence above this tree level.
    #[arg(long)]
    pub trunc_level: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct OutArgs {
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct CurateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Curation log JSON.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, default_value = "rvine")]
    pub vine: VineKind,
    /// Variable order for D-vines, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub order: Option<Vec<String>>,
    /// Directory for one DOT file per tree.
    #[arg(long)]
    pub dot_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Args, Clone)]
pub struct RankArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Number of C-vine levels to report.
    #[arg(long, default_value_t = 6)]
    pub levels: usize,
    /// Restrict to a cohort, e.g. `--condition sex=1` (repeatable).
    #[arg(long = "condition")]
    pub conditions: Vec<Condition>,
    /// Smallest cohort size.
    #[arg(long, default_value_t = DEFAULT_MIN_ROWS)]
    pub min_rows: usize,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Also rank under the other tie policy and report agreement.
    #[arg(long)]
    pub tie_sensitivity: bool,
}

#[derive(Debug, Args, Clone)]
pub struct ClusterArgs {
    /// Fitted model JSON; when absent an R-vine is fitted to `--input`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value_t = vinedep::ingest::DEFAULT_ROW_THRESHOLD)]
    pub row_threshold: f64,
    #[command(flatten)]
    pub fit: ModelArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, default_value_t = DEFAULT_MIN_DEGREE)]
    pub min_degree: usize,
    /// Directory for one DOT file per hub.
    #[arg(long)]
    pub dot_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    Uniform,
    Data,
}

#[derive(Debug, Args, Clone)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "uniform")]
    pub scale: Scale,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Clone)]
pub struct TauArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Clone)]
pub struct ComorbidityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Binary indicator variables, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub indicators: Vec<String>,
    /// Continuous or ordinal covariates, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_MIN_DEGREE)]
    pub min_degree: usize,
    #[arg(long, default_value_t = MIN_PREVALENCE)]
    pub min_prevalence: f64,
    #[arg(long)]
    pub dot_dir: Option<PathBuf>,
}

/// Everything a command needs, merged from the parsed arguments.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_args<I, T>(args: I) -> CliResult<Self>
    where
        I: IntoIterator<Item = T>,
        T: Into<std::ffi::OsString> + Clone,
    {
        let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(RunConfig::from(cli))
    }
}

impl From<Cli> for RunConfig {
    fn from(cli: Cli) -> Self {
        RunConfig {
            command: cli.command,
            threads: cli.threads,
        }
    }
}

/// Artifacts of one command: the primary output plus named side files.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Artifacts {
    pub primary: String,
    pub out: Option<PathBuf>,
    pub files: Vec<(PathBuf, String)>,
}

fn settings(m: &ModelArgs) -> CliResult<FitSettings> {
    if m.families.is_empty() {
        return Err(CliError::Usage("at least one copula family is required".into()));
    }
    let mut s = FitSettings::with_families(&m.families).criterion(m.criterion);
    s.trunc_level = m.trunc_level;
    Ok(s)
}

/// Schema from file, or every header column as a continuous variable.
fn schema_for(input: &Path, schema: Option<&Path>) -> CliResult<Vec<VariableMeta>> {
    if let Some(p) = schema {
        return Ok(load_schema(p)?);
    }
    let mut rdr = csv::Reader::from_path(input).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io {
            path: input.to_path_buf(),
            source: io,
        },
        other => Error::Data(format!("{}: {other:?}", input.display())),
    })?;
    let header = rdr.headers().map_err(Error::from)?;
    Ok(header
        .iter()
        .map(|h| VariableMeta::new(h.trim(), VariableKind::Continuous))
        .collect())
}

/// Loads and curates the input table.
pub fn load_curated(input: &Path, schema: Option<&Path>, row_threshold: f64) -> CliResult<(DataTable, CurationLog)> {
    let schema = schema_for(input, schema)?;
    let raw = load_table(input, &schema)?;
    let (table, log) = curate(&raw, row_threshold)?;
    log::info!(
        "curation: {} rows in, {} dropped, {} cells out of bounds",
        log.n_rows_in,
        log.n_rows_dropped,
        log.total_out_of_bounds()
    );
    Ok((table, log))
}

/// Curation log in report form: per-variable counts and row totals.
pub fn curation_log_json(log: &CurationLog) -> Value {
    let mut vars = BTreeMap::new();
    let names: std::collections::BTreeSet<&String> = log.out_of_bounds.keys().chain(log.imputed.keys()).collect();
    for name in names {
        vars.insert(
            name.clone(),
            json!({
                "n_out_of_bounds": log.out_of_bounds.get(name).copied().unwrap_or(0),
                "n_imputed": log.imputed.get(name).copied().unwrap_or(0),
            }),
        );
    }
    json!({
        "variables": vars,
        "n_rows_in": log.n_rows_in,
        "n_rows_out": log.n_rows_out,
        "n_rows_dropped": log.n_rows_dropped,
        "row_threshold": log.row_threshold,
    })
}

pub fn cmd_curate(a: &CurateArgs) -> CliResult<Artifacts> {
    let (table, log) = load_curated(&a.data.input, a.data.schema.as_deref(), a.data.row_threshold)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    let mut files = Vec::new();
    if let Some(p) = &a.log {
        files.push((p.clone(), json::to_string(&curation_log_json(&log))?));
    }
    Ok(Artifacts {
        primary: String::from_utf8(buf).expect("csv output is utf-8"),
        out: a.out.out.clone(),
        files,
    })
}

/// Curates, transforms and fits; shared by `fit` and `clusters`.
pub fn fit_model(
    data: &DataArgs,
    m: &ModelArgs,
    kind: VineKind,
    order: Option<&[String]>,
) -> CliResult<FittedVine> {
    let st = settings(m)?;
    let (table, log) = load_curated(&data.input, data.schema.as_deref(), data.row_threshold)?;
    let tr = transform_table(&table, m.tie_policy, m.seed)?;
    let order = order
        .map(|names| {
            names
                .iter()
                .map(|n| {
                    tr.pseudo_obs
                        .index_of(n)
                        .ok_or_else(|| CliError::Usage(format!("order names unknown variable {n}")))
                })
                .collect::<CliResult<Vec<_>>>()
        })
        .transpose()?;
    if order.is_some() && kind != VineKind::Dvine {
        return Err(CliError::Usage("--order only applies to --vine dvine".into()));
    }
    let structure = fit_structure(&tr.pseudo_obs, kind, order.as_deref(), &st)?;
    let mut fv = FittedVine::new(structure, tr.marginals, table.n_rows(), m.seed, m.tie_policy, st)?;
    fv.levels = table.columns().iter().map(|c| c.levels.clone()).collect();
    fv.curation_log = Some(log);
    Ok(fv)
}

pub fn cmd_fit(a: &FitArgs) -> CliResult<Artifacts> {
    let fv = fit_model(&a.data, &a.model, a.vine, a.order.as_deref())?;
    let mut files = Vec::new();
    if let Some(dir) = &a.dot_dir {
        for (m, dot) in fv.structure.to_dot().into_iter().enumerate() {
            files.push((dir.join(format!("tree{}.dot", m + 1)), dot));
        }
    }
    Ok(Artifacts {
        primary: fv.to_json()?,
        out: a.out.out.clone(),
        files,
    })
}

pub fn cmd_rank(a: &RankArgs) -> CliResult<Artifacts> {
    let (table, _) = load_curated(&a.data.input, a.data.schema.as_deref(), a.data.row_threshold)?;
    let opts = RankOptions {
        levels: a.levels,
        settings: settings(&a.model)?,
        tie_policy: a.model.tie_policy,
        seed: a.model.seed,
        min_rows: a.min_rows,
    };
    if a.levels == 0 {
        return Err(CliError::Usage("--levels must be at least 1".into()));
    }
    let ranking = if a.conditions.is_empty() {
        rank_table(&table, &opts)?
    } else {
        conditioned_ranking(&table, &a.conditions, &opts)?
    };
    let primary = match a.format {
        Format::Text => ranking.to_text(),
        Format::Json => {
            let mut report = json!({
                "rankings": [ranking],
                "clusters": [],
                "conditions": a.conditions.iter().map(Condition::to_string).collect::<Vec<_>>(),
                "seed": a.model.seed,
                "tie_policy": a.model.tie_policy,
                "criterion": a.model.criterion,
            });
            if a.tie_sensitivity {
                let subset = vinedep::analysis::filter_conditions(&table, &a.conditions)?;
                let keep: Vec<String> = subset
                    .names()
                    .into_iter()
                    .filter(|n| !a.conditions.iter().any(|c| c.variable == *n))
                    .collect();
                let s = tie_sensitivity(&subset.select(&keep)?, &opts)?;
                report["tie_sensitivity"] = serde_json::to_value(&s).map_err(Error::from)?;
            }
            json::to_string(&report)?
        }
    };
    Ok(Artifacts {
        primary,
        out: a.out.out.clone(),
        files: Vec::new(),
    })
}

/// File-name-safe version of a variable name.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn cmd_clusters(a: &ClusterArgs) -> CliResult<Artifacts> {
    let fv = match (&a.model, &a.input) {
        (Some(p), None) => read_model(p)?,
        (None, Some(input)) => {
            let data = DataArgs {
                input: input.clone(),
                schema: a.schema.clone(),
                row_threshold: a.row_threshold,
            };
            fit_model(&data, &a.fit, VineKind::Rvine, None)?
        }
        _ => return Err(CliError::Usage("give exactly one of --model or --input".into())),
    };
    let report = extract_clusters(&fv.structure, a.min_degree);
    let mut files = Vec::new();
    if let Some(dir) = &a.dot_dir {
        for h in &report.hubs {
            files.push((dir.join(format!("hub_{}.dot", file_stem(&h.variable))), h.to_dot()));
        }
    }
    let primary = match a.format {
        Format::Text => report.to_text(),
        Format::Json => json::to_string(&json!({
            "rankings": [],
            "clusters": [report],
            "seed": fv.seed,
        }))?,
    };
    Ok(Artifacts {
        primary,
        out: a.out.out.clone(),
        files,
    })
}

pub fn read_model(path: &Path) -> CliResult<FittedVine> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(FittedVine::from_json(&text)?)
}

fn batch_csv(fv: &FittedVine, batch: &SampleBatch) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&batch.names).map_err(Error::from)?;
    let cols = batch.data_scale.as_ref().unwrap_or(&batch.uniforms);
    let labelled = batch.data_scale.is_some();
    for i in 0..batch.n() {
        let row: Vec<String> = cols
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let x = c[i];
                match fv.levels.get(j) {
                    Some(l) if labelled && !l.is_empty() && (x == 0.0 || x == 1.0) => l[x as usize].clone(),
                    _ => format!("{x}"),
                }
            })
            .collect();
        w.write_record(&row).map_err(Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn cmd_sample(a: &SampleArgs) -> CliResult<Artifacts> {
    let fv = read_model(&a.model)?;
    let batch = match a.scale {
        Scale::Uniform => sample_uniform(&fv, a.n, a.seed)?,
        Scale::Data => sample_data_scale(&fv, a.n, a.seed)?,
    };
    log::info!("sampled {} rows with seed {} ({})", a.n, a.seed, batch.generator);
    Ok(Artifacts {
        primary: batch_csv(&fv, &batch)?,
        out: a.out.out.clone(),
        files: Vec::new(),
    })
}

pub fn cmd_export_tau(a: &TauArgs) -> CliResult<Artifacts> {
    let (table, _) = load_curated(&a.data.input, a.data.schema.as_deref(), a.data.row_threshold)?;
    let cols = table
        .columns()
        .iter()
        .map(|c| c.dense())
        .collect::<vinedep::Result<Vec<_>>>()?;
    let tm = tau_matrix(&cols, &table.names())?;
    Ok(Artifacts {
        primary: tm.to_csv(),
        out: a.out.out.clone(),
        files: Vec::new(),
    })
}

pub fn cmd_comorbidity(a: &ComorbidityArgs) -> CliResult<Artifacts> {
    let (table, _) = load_curated(&a.data.input, a.data.schema.as_deref(), a.data.row_threshold)?;
    let opts = ComorbidityOptions {
        settings: settings(&a.model)?,
        tie_policy: a.model.tie_policy,
        seed: a.model.seed,
        min_degree: a.min_degree,
        min_prevalence: a.min_prevalence,
    };
    let rep = comorbidity_report(&table, &a.indicators, &a.covariates, &opts)?;
    let mut files = Vec::new();
    if let Some(dir) = &a.dot_dir {
        for h in &rep.clusters.hubs {
            files.push((dir.join(format!("hub_{}.dot", file_stem(&h.variable))), h.to_dot()));
        }
        if let Some(t1) = rep.structure.to_dot().into_iter().next() {
            files.push((dir.join("tree1.dot"), t1));
        }
    }
    let primary = json::to_string(&json!({
        "rankings": [],
        "clusters": [rep.clusters],
        "excluded": rep.excluded,
        "seed": a.model.seed,
    }))?;
    Ok(Artifacts {
        primary,
        out: a.out.out.clone(),
        files,
    })
}

/// Runs the configured command inside a pool of the requested size.
pub fn execute(cfg: &RunConfig) -> CliResult<Artifacts> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match &cfg.command {
        Command::Curate(a) => cmd_curate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Clusters(a) => cmd_clusters(a),
        Command::Sample(a) => cmd_sample(a),
        Command::ExportTau(a) => cmd_export_tau(a),
        Command::Comorbidity(a) => cmd_comorbidity(a),
    })
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    let err = |e| CliError::Write {
        path: path.display().to_string(),
        source: e,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(err)?;
    }
    fs::write(path, text).map_err(err)
}

/// Executes the command and writes its artifacts.
pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let art = execute(cfg)?;
    for (path, text) in &art.files {
        write_file(path, text)?;
    }
    match &art.out {
        Some(p) => write_file(p, &art.primary)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(art.primary.as_bytes()).and_then(|_| stdout.flush()) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                Err(e) => {
                    return Err(CliError::Write {
                        path: "<stdout>".into(),
                        source: e,
                    })
                }
            }
        }
    }
    Ok(())
}
