//! The `pdforest` command line.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pdforest::model::{parse_model, DumpFormat};
use pdforest::oracle::{oracle_pdiv_pathdep, oracle_pdv_pathdep};
use pdforest::tasks::{AggregateAttribution, FeatureCurve, PairMatrix, DEFAULT_ROW_LIMIT};
use pdforest::wdnf::DEFAULT_MASK_CAPACITY;
use pdforest::{
    fmt_f64, load_csv, AttributionResult, Coalition, Dataset, Engine, EngineOptions, Marginal,
    Sampling, SubsetKey, TreeEnsemble,
};

mod plot;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_CAPACITY: i32 = 4;

const VERIFY_POINTS: usize = 50;
const VERIFY_TOL: f64 = 1e-7;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error(transparent)]
    Core(#[from] pdforest::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Verify(_) => EXIT_VERIFY,
            CliError::Core(pdforest::Error::Capacity { .. }) => EXIT_CAPACITY,
            _ => EXIT_FAILURE,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "pdforest",
    version,
    about = "Partial dependence for tree ensembles"
)]
pub struct Cli {
    /// Worker threads (default: all cores). One thread is fully reproducible.
    #[arg(long, global = true, env = "PDFOREST_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partial dependence curve of every feature.
    Pdp(PdpArgs),
    /// Joint partial dependence of feature pairs.
    Jointpdp(JointArgs),
    /// Partial dependence interaction values of every subset, per row.
    Pdiv(PdivArgs),
    /// Dump the compiled leaves and their cubes as JSON.
    Wdnf(WdnfArgs),
    /// Write a synthetic model and dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Quantile,
    Uniform,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Model dump (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Background CSV. Required in exact mode, ignored in approx mode.
    #[arg(long)]
    pub background: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
    /// Output file, `-` for stdout.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
    /// Longest merged path the engine accepts.
    #[arg(long, default_value_t = DEFAULT_MASK_CAPACITY)]
    pub mask_capacity: usize,
}

#[derive(Debug, Args)]
pub struct PdpArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Grid points per feature (ignored with --grid full).
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = GridArg::Quantile)]
    pub grid: GridArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Cross-check up to 50 points against brute force.
    #[arg(long)]
    pub verify: bool,
    /// Directory for one SVG line plot per feature.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct JointArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = GridArg::Quantile)]
    pub grid: GridArg,
    /// `all`, or comma-separated feature names (every pair among them).
    #[arg(long, default_value = "all")]
    pub pairs: String,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct PdivArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Rows to explain.
    #[arg(long)]
    pub consumer: PathBuf,
    /// Background CSV; without it values are path-dependent approximations.
    #[arg(long)]
    pub background: Option<PathBuf>,
    /// Explain only the first N consumer rows.
    #[arg(long, default_value_t = DEFAULT_ROW_LIMIT)]
    pub max_rows: usize,
    /// Emit per-subset means instead of per-row values.
    #[arg(long)]
    pub aggregate: bool,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
    #[arg(long, default_value = "json")]
    pub format: String,
    #[arg(long)]
    pub verify: bool,
    #[arg(long, default_value_t = DEFAULT_MASK_CAPACITY)]
    pub mask_capacity: usize,
}

#[derive(Debug, Args)]
pub struct WdnfArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Trained-like random ensemble fitted to a random dataset.
    Random,
    /// Complete trees of exactly --depth levels over uniform features.
    Full,
    /// One feature split at --trees distinct thresholds.
    Ladder,
    /// A narrow spike at a default value.
    Spike,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Random)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub rows: usize,
    #[arg(long, default_value_t = 5)]
    pub features: usize,
    #[arg(long, default_value_t = 10)]
    pub trees: usize,
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    #[arg(long)]
    pub model_out: PathBuf,
    #[arg(long)]
    pub data_out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Pdp(a) => cmd_pdp(&a),
        Command::Jointpdp(a) => cmd_jointpdp(&a),
        Command::Pdiv(a) => cmd_pdiv(&a),
        Command::Wdnf(a) => cmd_wdnf(&a),
        Command::Synth(a) => cmd_synth(&a),
    })
}

fn load_model(path: &Path) -> CliResult<TreeEnsemble> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read model {}: {e}", path.display())))?;
    Ok(parse_model(&bytes, DumpFormat::TreeDumpJson)?)
}

fn load_data(path: &Path) -> CliResult<Dataset> {
    if !path.exists() {
        return Err(CliError::Usage(format!("no such file: {}", path.display())));
    }
    Ok(load_csv(path)?)
}

/// Loads the background that the chosen mode needs. Approx mode never reads it.
fn background_for(common: &CommonArgs) -> CliResult<Option<Dataset>> {
    match (common.mode, &common.background) {
        (ModeArg::Exact, None) => Err(CliError::Usage(
            "--mode exact needs --background (or use --mode approx)".into(),
        )),
        (ModeArg::Exact, Some(p)) => {
            let b = load_data(p)?;
            if b.is_empty() {
                return Err(CliError::Usage("background file has no rows".into()));
            }
            Ok(Some(b))
        }
        (ModeArg::Approx, Some(_)) => {
            eprintln!("warning: --background is ignored in approx mode");
            Ok(None)
        }
        (ModeArg::Approx, None) => Ok(None),
    }
}

fn marginal_of(b: &Option<Dataset>) -> Marginal<'_> {
    match b {
        Some(d) => Marginal::Background(d),
        None => Marginal::PathDependent,
    }
}

fn open_out(path: &Path) -> CliResult<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(BufWriter::new(std::io::stdout().lock())))
    } else {
        Ok(Box::new(BufWriter::new(File::create(path)?)))
    }
}

fn sampling_of(grid: GridArg) -> Sampling {
    match grid {
        GridArg::Quantile => Sampling::Quantile,
        GridArg::Uniform => Sampling::Uniform,
        GridArg::Full => Sampling::Thresholds,
    }
}

fn pdv_reference(model: &TreeEnsemble, b: &Option<Dataset>, c: &Coalition) -> CliResult<f64> {
    Ok(match b {
        Some(b) => pdforest::oracle_pdv(model, b, c)?,
        None => oracle_pdv_pathdep(model, c)?,
    })
}

/// Deterministic choice of at most `VERIFY_POINTS` indices below `n`.
fn verify_sample(n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut idx = sample(&mut rng, n, n.min(VERIFY_POINTS)).into_vec();
    idx.sort_unstable();
    idx
}

fn check(what: &str, got: f64, want: f64) -> CliResult<()> {
    if (got - want).abs() > VERIFY_TOL {
        return Err(CliError::Verify(format!(
            "{what}: engine {got}, brute force {want}"
        )));
    }
    Ok(())
}

pub fn cmd_pdp(a: &PdpArgs) -> CliResult<()> {
    let model = load_model(&a.common.model)?;
    let background = background_for(&a.common)?;
    let marginal = marginal_of(&background);
    let opts = EngineOptions {
        mask_capacity: a.common.mask_capacity,
    };
    if a.grid != GridArg::Full && a.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let result = match a.grid {
        GridArg::Full => pdforest::full_pdp(&model, &marginal, &opts)?,
        g => pdforest::wpdp(&model, &marginal, a.k, sampling_of(g), &opts)?,
    };
    if a.verify {
        let points: Vec<(usize, f64, f64)> = result
            .features
            .iter()
            .flat_map(|c| c.points.iter().map(move |p| (c.feature, p.value, p.pdv)))
            .collect();
        for i in verify_sample(points.len()) {
            let (f, v, pdv) = points[i];
            let want = pdv_reference(&model, &background, &Coalition::new(vec![f], vec![v])?)?;
            check(&format!("feature {f} at {v}"), pdv, want)?;
        }
        eprintln!("verified {} points", points.len().min(VERIFY_POINTS));
    }
    let mut out = open_out(&a.common.out)?;
    match a.format {
        FormatArg::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["feature", "value", "pdv", "cpdv"])?;
            for c in &result.features {
                for p in &c.points {
                    w.write_record([
                        c.name.as_str(),
                        &fmt_f64(p.value),
                        &fmt_f64(p.pdv),
                        &fmt_f64(p.cpdv),
                    ])?;
                }
            }
            w.flush()?;
        }
        FormatArg::Json => {
            serde_json::to_writer_pretty(&mut out, &result)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    if let Some(dir) = &a.plot {
        std::fs::create_dir_all(dir)?;
        for c in &result.features {
            if c.points.is_empty() {
                continue;
            }
            let step = a.grid == GridArg::Full;
            std::fs::write(dir.join(plot_file_name(c)), plot::svg_curve(c, step))?;
        }
    }
    Ok(())
}

fn plot_file_name(c: &FeatureCurve) -> String {
    let clean: String = c
        .name
        .chars()
        .map(|ch| {
            if ch.is_ascii_alphanumeric() || ch == '-' || ch == '_' {
                ch
            } else {
                '_'
            }
        })
        .collect();
    format!("{:03}_{clean}.svg", c.feature)
}

fn parse_pairs(spec: &str, names: &[String]) -> CliResult<Option<Vec<(usize, usize)>>> {
    if spec.trim() == "all" {
        return Ok(None);
    }
    let mut idx = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let i = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CliError::Usage(format!("unknown feature `{name}` in --pairs")))?;
        if !idx.contains(&i) {
            idx.push(i);
        }
    }
    idx.sort_unstable();
    if idx.len() < 2 {
        return Err(CliError::Usage(
            "--pairs needs at least two features".into(),
        ));
    }
    let mut pairs = Vec::new();
    for (n, &a) in idx.iter().enumerate() {
        for &b in &idx[n + 1..] {
            pairs.push((a, b));
        }
    }
    Ok(Some(pairs))
}

pub fn cmd_jointpdp(a: &JointArgs) -> CliResult<()> {
    let model = load_model(&a.common.model)?;
    let background = background_for(&a.common)?;
    let marginal = marginal_of(&background);
    let opts = EngineOptions {
        mask_capacity: a.common.mask_capacity,
    };
    if a.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    if a.grid == GridArg::Full {
        return Err(CliError::Usage(
            "jointpdp supports --grid quantile|uniform".into(),
        ));
    }
    let names = match &background {
        Some(b) => b.names().to_vec(),
        None => model.feature_names().to_vec(),
    };
    if names.len() < 2 {
        return Err(CliError::Usage(
            "jointpdp needs at least two features".into(),
        ));
    }
    let pairs = parse_pairs(&a.pairs, &names)?;
    let result = pdforest::wjointpdp(
        &model,
        &marginal,
        a.k,
        sampling_of(a.grid),
        pairs.as_deref(),
        &opts,
    )?;
    if a.verify {
        let cells: Vec<(&PairMatrix, usize, usize)> = result
            .pairs
            .iter()
            .flat_map(|p| (0..a.k).flat_map(move |i| (0..a.k).map(move |j| (p, i, j))))
            .collect();
        for i in verify_sample(cells.len()) {
            let (p, ia, ib) = cells[i];
            let c = Coalition::new(vec![p.a, p.b], vec![p.a_values[ia], p.b_values[ib]])?;
            let want = pdv_reference(&model, &background, &c)?;
            check(
                &format!("pair ({}, {}) cell ({ia}, {ib})", p.a, p.b),
                p.pdv[ia][ib],
                want,
            )?;
        }
        eprintln!("verified {} cells", cells.len().min(VERIFY_POINTS));
    }
    let mut out = open_out(&a.common.out)?;
    match a.format {
        FormatArg::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["f_a", "f_b", "a_value", "b_value", "pdv"])?;
            for p in &result.pairs {
                for (ia, row) in p.pdv.iter().enumerate() {
                    for (ib, v) in row.iter().enumerate() {
                        w.write_record([
                            result.names[p.a].as_str(),
                            result.names[p.b].as_str(),
                            &fmt_f64(p.a_values[ia]),
                            &fmt_f64(p.b_values[ib]),
                            &fmt_f64(*v),
                        ])?;
                    }
                }
            }
            w.flush()?;
        }
        FormatArg::Json => {
            serde_json::to_writer_pretty(&mut out, &result)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn subset_entries<'a>(
    entries: impl Iterator<Item = (&'a SubsetKey, &'a f64)>,
) -> Vec<serde_json::Value> {
    entries
        .map(|(k, v)| serde_json::json!({ "features": k.as_slice(), "value": v }))
        .collect()
}

fn verify_pdivs(
    model: &TreeEnsemble,
    consumers: &Dataset,
    background: &Option<Dataset>,
    result: &AttributionResult,
) -> CliResult<()> {
    let entries: Vec<(usize, &SubsetKey, f64)> = result
        .rows
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.entries.iter().map(move |(k, v)| (i, k, *v)))
        .collect();
    for i in verify_sample(entries.len()) {
        let (row, key, got) = entries[i];
        let fs: Vec<usize> = key.features().collect();
        let c = Coalition::from_row(&fs, &consumers.row(row))?;
        let want = match background {
            Some(b) => pdforest::oracle_pdiv(model, b, &c)?,
            None => oracle_pdiv_pathdep(model, &c)?,
        };
        check(&format!("row {row} subset {fs:?}"), got, want)?;
    }
    eprintln!("verified {} values", entries.len().min(VERIFY_POINTS));
    Ok(())
}

pub fn cmd_pdiv(a: &PdivArgs) -> CliResult<()> {
    if a.format != "json" {
        return Err(CliError::Usage("pdiv supports --format json only".into()));
    }
    if a.max_rows == 0 {
        return Err(CliError::Usage("--max-rows must be at least 1".into()));
    }
    let model = load_model(&a.model)?;
    let consumers = load_data(&a.consumer)?;
    if consumers.is_empty() {
        return Err(CliError::Usage("consumer file has no rows".into()));
    }
    let background = match &a.background {
        Some(p) => Some(load_data(p)?).filter(|b| !b.is_empty()),
        None => None,
    };
    let opts = EngineOptions {
        mask_capacity: a.mask_capacity,
    };
    if consumers.n_rows() > a.max_rows {
        eprintln!(
            "note: explaining the first {} of {} consumer rows",
            a.max_rows,
            consumers.n_rows()
        );
    }
    let mut out = open_out(&a.out)?;
    if a.aggregate {
        let agg: AggregateAttribution = pdforest::any_order_pdivs_aggregate(
            &model,
            &consumers,
            background.as_ref(),
            a.max_rows,
            &opts,
        )?;
        let obj = serde_json::json!({
            "rows": agg.rows,
            "mode": agg.mode,
            "background_rows": agg.background_rows,
            "model_hash": agg.model_hash,
            "mean_pdiv": subset_entries(agg.means.entries.iter()),
        });
        serde_json::to_writer(&mut out, &obj)?;
        writeln!(out)?;
    } else {
        let result =
            pdforest::any_order_pdivs(&model, &consumers, background.as_ref(), a.max_rows, &opts)?;
        if a.verify {
            verify_pdivs(&model, &consumers, &background, &result)?;
        }
        eprintln!(
            "mode {:?}, background rows {}, model {}",
            result.mode, result.background_rows, result.model_hash
        );
        for (i, row) in result.rows.iter().enumerate() {
            let obj = serde_json::json!({ "row": i, "pdiv": subset_entries(row.entries.iter()) });
            serde_json::to_writer(&mut out, &obj)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_wdnf(a: &WdnfArgs) -> CliResult<()> {
    let model = load_model(&a.common.model)?;
    let background = background_for(&a.common)?;
    let engine = Engine::new(
        &model,
        EngineOptions {
            mask_capacity: a.common.mask_capacity,
        },
    )?;
    let dump = engine.debug_dump(&marginal_of(&background))?;
    let mut out = open_out(&a.common.out)?;
    serde_json::to_writer_pretty(&mut out, &dump)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    use pdforest::synth;
    let mut rng = synth::rng(a.seed);
    let (model, data) = match a.kind {
        SynthKind::Random => {
            let d = synth::random_dataset(&mut rng, a.rows, a.features);
            (synth::random_ensemble(&mut rng, &d, a.trees, a.depth), d)
        }
        SynthKind::Full => {
            let m = synth::full_depth_ensemble(&mut rng, a.features, a.trees, a.depth);
            (m, synth::uniform_dataset(&mut rng, a.rows, a.features))
        }
        SynthKind::Ladder => {
            let m = synth::ladder_fixture(a.trees);
            let values = (0..a.rows)
                .map(|i| (a.trees + 1) as f64 * i as f64 / a.rows.max(1) as f64)
                .collect();
            (m, Dataset::from_columns(vec!["x".into()], vec![values])?)
        }
        SynthKind::Spike => synth::spike_fixture(),
    };
    std::fs::write(
        &a.model_out,
        serde_json::to_string_pretty(&model.to_dump_json())? + "\n",
    )?;
    data.write_csv(File::create(&a.data_out)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn pairs_list_expands_to_all_pairs_among_names() {
        let n = names(&["a", "b", "c"]);
        assert_eq!(parse_pairs("all", &n).unwrap(), None);
        assert_eq!(parse_pairs("a,b", &n).unwrap(), Some(vec![(0, 1)]));
        assert_eq!(
            parse_pairs("c, a,b", &n).unwrap(),
            Some(vec![(0, 1), (0, 2), (1, 2)])
        );
        assert_eq!(parse_pairs("a,zz", &n).unwrap_err().exit_code(), EXIT_USAGE);
        assert_eq!(parse_pairs("a", &n).unwrap_err().exit_code(), EXIT_USAGE);
    }

    #[test]
    fn exit_codes() {
        let cap = CliError::Core(pdforest::Error::Capacity {
            tree: 0,
            leaf: 3,
            conditions: 5,
            capacity: 4,
        });
        assert_eq!(cap.exit_code(), EXIT_CAPACITY);
        assert_eq!(CliError::Verify("x".into()).exit_code(), EXIT_VERIFY);
        assert_eq!(
            CliError::Core(pdforest::Error::Input("x".into())).exit_code(),
            EXIT_FAILURE
        );
    }

    #[test]
    fn verify_sample_is_bounded_and_stable() {
        assert_eq!(verify_sample(10), (0..10).collect::<Vec<_>>());
        let s = verify_sample(1000);
        assert_eq!(s.len(), VERIFY_POINTS);
        assert_eq!(s, verify_sample(1000));
    }

    #[test]
    fn plot_names_are_file_safe() {
        let c = FeatureCurve {
            feature: 7,
            name: "a b/c".into(),
            points: vec![],
            breakpoints: vec![],
        };
        assert_eq!(plot_file_name(&c), "007_a_b_c.svg");
    }
}
