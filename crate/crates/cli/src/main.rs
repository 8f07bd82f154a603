//! `viewcount`: batch fitting, classification, prediction-window evaluation
//! and synthetic corpora for cumulative view-count series.
//!
//! Exit codes: 0 success, 1 some records rejected or skipped, 2 fatal error.

mod output;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use viewcount::classify::{
    self, ClassificationRecord, ClassifyConfig, CorpusReport, FitResult, GroupBy,
};
use viewcount::models::{self, ModelKind};
use viewcount::predict::{self, PredictionSetup, Scenario, ScenarioReport, WindowMode};
use viewcount::series::{self, Ingested, Rejection, SeriesRecord};
use viewcount::synth::{self, Scale, Template};

use output::{Manifest, OutDir};

#[derive(Parser)]
#[command(name = "viewcount", version, about = "Growth-model analysis of cumulative view-count series")]
struct Cli {
    /// Seed for multistart perturbations and synthetic corpora.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file with `classify` and `predict` settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one or all models to every series.
    Fit(FitArgs),
    /// Select the best model per series and summarize the distribution.
    Classify(ClassifyArgs),
    /// Measure prediction windows under a split scenario.
    Predict(PredictArgs),
    /// Generate a labeled synthetic corpus.
    Synth(SynthArgs),
    /// Rebuild distribution tables from a saved classification.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Series file: `id,t,y` CSV or JSON.
    input: PathBuf,
    /// Metadata CSV (`id,title,category,age_days,total_views`); defaults to
    /// `<stem>.meta.csv` next to a CSV input.
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct LmArgs {
    /// Iteration budget per start.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Number of starts, including the default one.
    #[arg(long)]
    multistart: Option<usize>,
    /// Relative MSC reduction below which LM stops.
    #[arg(long)]
    msc_tol: Option<f64>,
    /// Gradient infinity norm below which LM stops.
    #[arg(long)]
    grad_tol: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    io: InputArgs,
    /// Model identifier or `all`.
    #[arg(long, default_value = "all")]
    model: String,
    /// Also write `curves.csv` with (t, observed, fitted) per model.
    #[arg(long)]
    curves: bool,
    #[command(flatten)]
    lm: LmArgs,
}

#[derive(Args)]
struct SelectionArgs {
    /// Largest mean error rate a model may have to be selected.
    #[arg(long)]
    mer_threshold: Option<f64>,
    /// Minimum correlation coefficient for the linear model.
    #[arg(long)]
    r_threshold: Option<f64>,
    /// Linearity tolerance of the tail search.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Skip the supplementary two-phase fit.
    #[arg(long)]
    no_two_phase: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    io: InputArgs,
    #[command(flatten)]
    selection: SelectionArgs,
    #[arg(long, value_enum, default_value_t = GroupArg::None)]
    group_by: GroupArg,
    /// Confidence level of the proportion intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Labels CSV from `synth`; prints the recovery accuracy.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    lm: LmArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    io: InputArgs,
    /// halflife, fixed<days> or window<days>.
    #[arg(long, default_value = "halflife")]
    scenario: String,
    /// Mean error bound of the windows.
    #[arg(long)]
    bound: Option<f64>,
    /// Fixed-window horizon in multiples of the observed window.
    #[arg(long)]
    horizon_multiplier: Option<f64>,
    #[arg(long, value_enum)]
    window_mode: Option<ModeArg>,
    #[command(flatten)]
    selection: SelectionArgs,
    #[command(flatten)]
    lm: LmArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(short, long, default_value = "corpus")]
    out: PathBuf,
    /// Comma-separated `kind:count` entries; `all:<count>` means every kind.
    #[arg(long, default_value = "all:100")]
    mix: String,
    /// Relative multiplicative noise.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// Observations per series.
    #[arg(long, default_value_t = 120)]
    n: usize,
    /// Age of every series in days.
    #[arg(long, default_value_t = 120.0)]
    age: f64,
    /// Views corresponding to the normalized value 1.
    #[arg(long, default_value_t = 100_000.0)]
    views: f64,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct ReportArgs {
    /// classification.json written by `classify`.
    classification: PathBuf,
    #[arg(short, long, default_value = "report")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = GroupArg::None)]
    group_by: GroupArg,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    None,
    Category,
    Popularity,
}

impl From<GroupArg> for GroupBy {
    fn from(g: GroupArg) -> Self {
        match g {
            GroupArg::None => GroupBy::None,
            GroupArg::Category => GroupBy::Category,
            GroupArg::Popularity => GroupBy::Popularity,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Soft,
    Hard,
    Both,
}

impl From<ModeArg> for WindowMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Soft => WindowMode::Soft,
            ModeArg::Hard => WindowMode::Hard,
            ModeArg::Both => WindowMode::Both,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// Settings file layout.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct Config {
    classify: ClassifyConfig,
    predict: PredictionSetup,
}

struct Ctx {
    seed: u64,
    config: Config,
}

impl Ctx {
    fn load(cli: &Cli) -> Result<Self> {
        let mut config: Config = match &cli.config {
            Some(p) => {
                let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
                serde_json::from_reader(BufReader::new(f))
                    .with_context(|| format!("parsing {}", p.display()))?
            }
            None => Config::default(),
        };
        if let Some(s) = cli.seed {
            config.classify.lm.seed = s;
        }
        Ok(Self {
            seed: config.classify.lm.seed,
            config,
        })
    }

    fn apply_lm(&mut self, a: &LmArgs) -> Result<()> {
        let lm = &mut self.config.classify.lm;
        if let Some(v) = a.max_iter {
            lm.max_iterations = v;
        }
        if let Some(v) = a.multistart {
            lm.multistart = v;
        }
        if let Some(v) = a.msc_tol {
            lm.msc_rel_tol = v;
        }
        if let Some(v) = a.grad_tol {
            lm.gradient_tol = v;
        }
        lm.validate()?;
        Ok(())
    }

    fn apply_selection(&mut self, a: &SelectionArgs) {
        let c = &mut self.config.classify;
        if let Some(v) = a.mer_threshold {
            c.criteria.mer_threshold = v;
        }
        if let Some(v) = a.r_threshold {
            c.criteria.r_threshold = v;
        }
        if let Some(v) = a.epsilon {
            c.tail.epsilon = v;
        }
        if a.no_two_phase {
            c.two_phase = false;
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn ingest(io: &InputArgs) -> Result<Ingested> {
    let ingested = series::ingest_path(&io.input, io.meta.as_deref())
        .with_context(|| format!("reading {}", io.input.display()))?;
    for r in &ingested.rejected {
        eprintln!("rejected {}: {} {}", r.id, r.code, r.message);
    }
    if ingested.records.is_empty() {
        bail!("no valid records in {}", io.input.display());
    }
    Ok(ingested)
}

fn write_rejections(out: &mut OutDir, name: &str, rejected: &[Rejection]) -> Result<()> {
    out.write(name, |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["id", "code", "message"])?;
        for r in rejected {
            c.write_record([&r.id, &r.code, &r.message])?;
        }
        c.flush()?;
        Ok(())
    })
}

#[derive(Serialize)]
struct FitEntry {
    id: String,
    n: usize,
    time_scale: f64,
    value_scale: f64,
    fits: Vec<FitResult>,
}

fn fit_record(record: &SeriesRecord, kinds: &[ModelKind], config: &ClassifyConfig) -> viewcount::Result<FitEntry> {
    let s = series::normalize(record)?;
    Ok(FitEntry {
        id: record.id().to_string(),
        n: s.len(),
        time_scale: s.time_scale(),
        value_scale: s.value_scale(),
        fits: classify::fit_kinds(&s, kinds, &config.lm)?,
    })
}

fn cmd_fit(mut ctx: Ctx, args: FitArgs) -> Result<bool> {
    ctx.apply_lm(&args.lm)?;
    let kinds: Vec<ModelKind> = if args.model.eq_ignore_ascii_case("all") {
        ModelKind::ALL.to_vec()
    } else {
        vec![args.model.parse()?]
    };
    let ingested = ingest(&args.io)?;
    let outcomes: Vec<_> = ingested
        .records
        .par_iter()
        .map(|r| fit_record(r, &kinds, &ctx.config.classify).map_err(|e| (r.id(), e)))
        .collect();
    let mut rejected = ingested.rejected.clone();
    let mut entries = Vec::new();
    let mut fitted = Vec::new();
    for (o, rec) in outcomes.into_iter().zip(&ingested.records) {
        match o {
            Ok(e) => {
                entries.push(e);
                fitted.push(rec);
            }
            Err((id, e)) => {
                eprintln!("rejected {id}: {} {e}", e.code());
                rejected.push(Rejection {
                    id: id.to_string(),
                    code: e.code().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    let mut out = OutDir::create(&args.io.out)?;
    out.write_json("fits.json", &entries)?;
    if args.curves {
        out.write("curves.csv", |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["id", "model", "t", "observed", "fitted"])?;
            for (e, rec) in entries.iter().zip(&fitted) {
                for f in &e.fits {
                    for o in rec.observations() {
                        let s = models::evaluate(f.kind, &f.params, o.t / e.time_scale)
                            .map(|v| v * e.value_scale)
                            .unwrap_or(f64::NAN);
                        c.write_record([
                            e.id.clone(),
                            f.kind.to_string(),
                            o.t.to_string(),
                            o.y.to_string(),
                            s.to_string(),
                        ])?;
                    }
                }
            }
            c.flush()?;
            Ok(())
        })?;
    }
    write_rejections(&mut out, "rejected.csv", &rejected)?;
    let manifest = Manifest::new("fit", vec![display(&args.io.input)], ctx.seed, &ctx.config.classify)
        .counts(entries.len(), rejected.len());
    out.finish(manifest)?;
    eprintln!("fitted {} series, rejected {}", entries.len(), rejected.len());
    Ok(rejected.is_empty())
}

fn summary_csv(records: &[ClassificationRecord], w: &mut dyn Write) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record([
        "id",
        "category",
        "popularity",
        "n",
        "selected",
        "model",
        "mer",
        "gof",
        "msc",
        "converged",
        "tail_start",
        "tail_start_t",
        "head_selected",
    ])?;
    for r in records {
        let f = &r.selected_fit;
        let tail = r.linear_tail.as_ref();
        c.write_record([
            r.id.clone(),
            r.category.map(|c| c.to_string()).unwrap_or_default(),
            r.popularity.to_string(),
            r.n.to_string(),
            r.selected.to_string(),
            f.kind.to_string(),
            format!("{:e}", f.mer),
            format!("{:e}", f.gof),
            format!("{:e}", f.msc),
            f.converged.to_string(),
            tail.map(|t| t.tail_start.to_string()).unwrap_or_default(),
            tail.map(|t| t.tail_start_t.to_string()).unwrap_or_default(),
            tail.and_then(|t| t.head_selected).map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    c.flush()?;
    Ok(())
}

fn write_report(out: &mut OutDir, report: &CorpusReport, level: f64) -> Result<()> {
    out.write("distribution.csv", |w| Ok(report.write_distribution_csv(w)?))?;
    out.write("counts.csv", |w| Ok(report.write_counts_csv(w)?))?;
    out.write("intervals.csv", |w| Ok(report.write_intervals_csv(level, w)?))?;
    Ok(())
}

#[derive(Serialize)]
struct Accuracy {
    labeled: usize,
    matched: usize,
    accuracy: f64,
    mismatches: Vec<(String, String, String)>,
}

fn accuracy(records: &[ClassificationRecord], labels_path: &Path) -> Result<Accuracy> {
    let f = File::open(labels_path).with_context(|| format!("opening {}", labels_path.display()))?;
    let labels = synth::read_labels(BufReader::new(f))?;
    let by_id: HashMap<_, _> = labels.iter().map(|l| (l.id.as_str(), l)).collect();
    let mut labeled = 0;
    let mut matched = 0;
    let mut mismatches = Vec::new();
    for r in records {
        if let Some(l) = by_id.get(r.id.as_str()) {
            labeled += 1;
            if l.matches(r.selected.kind()) {
                matched += 1;
            } else {
                mismatches.push((r.id.clone(), l.kind.to_string(), r.selected.to_string()));
            }
        }
    }
    if labeled == 0 {
        bail!("no labels match the classified records");
    }
    Ok(Accuracy {
        labeled,
        matched,
        accuracy: matched as f64 / labeled as f64,
        mismatches,
    })
}

fn cmd_classify(mut ctx: Ctx, args: ClassifyArgs) -> Result<bool> {
    ctx.apply_lm(&args.lm)?;
    ctx.apply_selection(&args.selection);
    if !(args.level > 0.0 && args.level < 1.0) {
        bail!("--level must be in (0, 1)");
    }
    let ingested = ingest(&args.io)?;
    let (records, failed) = classify::classify_corpus(&ingested.records, &ctx.config.classify);
    for r in &failed {
        eprintln!("rejected {}: {} {}", r.id, r.code, r.message);
    }
    let rejected: Vec<_> = ingested.rejected.iter().chain(&failed).cloned().collect();
    if records.is_empty() {
        bail!("every record was rejected");
    }
    let report = classify::corpus_report(&records, args.group_by.into());
    let mut out = OutDir::create(&args.io.out)?;
    out.write_json("classification.json", &records)?;
    out.write("classification.csv", |w| summary_csv(&records, w))?;
    write_report(&mut out, &report, args.level)?;
    write_rejections(&mut out, "rejected.csv", &rejected)?;
    let mut inputs = vec![display(&args.io.input)];
    if let Some(l) = &args.labels {
        let acc = accuracy(&records, l)?;
        println!(
            "accuracy: {}/{} ({:.2}%)",
            acc.matched,
            acc.labeled,
            100.0 * acc.accuracy
        );
        out.write_json("accuracy.json", &acc)?;
        inputs.push(display(l));
    }
    for g in &report.groups {
        let shares: Vec<String> = g
            .counts
            .iter()
            .filter(|(_, c)| *c > 0)
            .map(|(s, _)| format!("{s} {:.1}%", g.percent(*s)))
            .collect();
        println!("{} (n={}): {}", g.group, g.total, shares.join(", "));
    }
    let manifest = Manifest::new("classify", inputs, ctx.seed, &ctx.config.classify)
        .counts(records.len(), rejected.len());
    out.finish(manifest)?;
    Ok(rejected.is_empty())
}

fn cmd_predict(mut ctx: Ctx, args: PredictArgs) -> Result<bool> {
    ctx.apply_lm(&args.lm)?;
    ctx.apply_selection(&args.selection);
    let mut setup = ctx.config.predict;
    setup.scenario = args.scenario.parse::<Scenario>()?;
    if let Some(b) = args.bound {
        setup.error_bound = b;
    }
    if let Some(h) = args.horizon_multiplier {
        setup.horizon_multiplier = h;
    }
    if let Some(m) = args.window_mode {
        setup.window_mode = m.into();
    }
    let ingested = ingest(&args.io)?;
    let (results, skipped) = predict::evaluate_records(&ingested.records, &setup, &ctx.config.classify)?;
    for s in &skipped {
        eprintln!("skipped {}: {} {}", s.id, s.code, s.message);
    }
    let report = ScenarioReport::new(&setup, results, skipped)
        .with_context(|| format!("scenario {}", setup.scenario))?;
    let mut out = OutDir::create(&args.io.out)?;
    out.write("windows.csv", |w| Ok(report.write_results_csv(w)?))?;
    out.write("aggregate.csv", |w| Ok(report.write_aggregate_csv(w)?))?;
    out.write_json("prediction.json", &report)?;
    out.write("skipped.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["id", "code", "message"])?;
        for s in &report.skipped {
            c.write_record([&s.id, &s.code, &s.message])?;
        }
        c.flush()?;
        Ok(())
    })?;
    write_rejections(&mut out, "rejected.csv", &ingested.rejected)?;
    for row in &report.aggregate {
        println!(
            "{}: n={} hard {:.4} ({:.1}% bounded) soft {:.4} ({:.1}% bounded)",
            row.group, row.count, row.hard.mean, row.hard.bounded_pct, row.soft.mean, row.soft.bounded_pct
        );
    }
    let config = serde_json::json!({ "classify": ctx.config.classify, "predict": setup });
    let skipped = report.skipped.len() + ingested.rejected.len();
    let manifest = Manifest::new("predict", vec![display(&args.io.input)], ctx.seed, config)
        .counts(report.results.len(), skipped);
    out.finish(manifest)?;
    Ok(skipped == 0)
}

fn parse_mix(mix: &str, n: usize, noise: f64, scale: Scale) -> Result<Vec<Template>> {
    let mut templates = Vec::new();
    for part in mix.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (kind, count) = part
            .split_once(':')
            .with_context(|| format!("mix entry '{part}' is not kind:count"))?;
        let count: usize = count
            .parse()
            .with_context(|| format!("bad count in mix entry '{part}'"))?;
        let kinds = if kind.eq_ignore_ascii_case("all") {
            ModelKind::ALL.to_vec()
        } else {
            vec![kind.parse()?]
        };
        templates.extend(kinds.into_iter().map(|kind| Template {
            kind,
            count,
            n,
            noise_sigma: noise,
            scale: Some(scale),
        }));
    }
    if templates.is_empty() {
        bail!("empty --mix");
    }
    Ok(templates)
}

#[derive(Serialize)]
struct SynthConfig<'a> {
    mix: &'a str,
    noise: f64,
    n: usize,
    age: f64,
    views: f64,
}

fn cmd_synth(ctx: Ctx, args: SynthArgs) -> Result<bool> {
    if !(args.age > 0.0 && args.views > 0.0) {
        bail!("--age and --views must be positive");
    }
    let scale = Scale {
        days: args.age,
        views: args.views,
    };
    let mix = parse_mix(&args.mix, args.n, args.noise, scale)?;
    let corpus = synth::generate_corpus(&mix, ctx.seed)?;
    let mut out = OutDir::create(&args.out)?;
    match args.format {
        FormatArg::Csv => {
            out.write("series.csv", |w| Ok(series::write_csv(&corpus.records, w)?))?;
            out.write("series.meta.csv", |w| Ok(series::write_metadata_csv(&corpus.records, w)?))?;
        }
        FormatArg::Json => out.write("series.json", |w| Ok(series::write_json(&corpus.records, w)?))?,
    }
    out.write("labels.csv", |w| Ok(synth::write_labels(&corpus.labels, w)?))?;
    let config = SynthConfig {
        mix: &args.mix,
        noise: args.noise,
        n: args.n,
        age: args.age,
        views: args.views,
    };
    let manifest = Manifest::new("synth", Vec::new(), ctx.seed, config).counts(corpus.records.len(), 0);
    out.finish(manifest)?;
    eprintln!("generated {} series in {}", corpus.records.len(), args.out.display());
    Ok(true)
}

fn cmd_report(ctx: Ctx, args: ReportArgs) -> Result<bool> {
    let f = File::open(&args.classification)
        .with_context(|| format!("opening {}", args.classification.display()))?;
    let records: Vec<ClassificationRecord> = serde_json::from_reader(BufReader::new(f))
        .with_context(|| format!("parsing {}", args.classification.display()))?;
    if records.is_empty() {
        bail!("no records in {}", args.classification.display());
    }
    let report = classify::corpus_report(&records, args.group_by.into());
    let mut out = OutDir::create(&args.out)?;
    write_report(&mut out, &report, args.level)?;
    let config = serde_json::json!({ "group_by": report.group_by, "level": args.level });
    let manifest = Manifest::new("report", vec![display(&args.classification)], ctx.seed, config)
        .counts(records.len(), 0);
    out.finish(manifest)?;
    Ok(true)
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let ctx = Ctx::load(&cli)?;
    match cli.command {
        Command::Fit(a) => cmd_fit(ctx, a),
        Command::Classify(a) => cmd_classify(ctx, a),
        Command::Predict(a) => cmd_predict(ctx, a),
        Command::Synth(a) => cmd_synth(ctx, a),
        Command::Report(a) => cmd_report(ctx, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
