use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use phar_core::attrib::{load_attributions, occlusion_attribution, OcclusionBaseline};
use phar_core::fuse::{fuse, FusionConfig, FusionMethod};
use phar_core::metrics::{annotate_ruleset, report};
use phar_core::tune::{trial_log_csv, tune, Pruning};
use phar_core::viz::{figure_file_name, render_svg};
use phar_core::{
    extract_ruleset, parse_anchor_rules, EvalSplit, ExtractionConfig, MetricsReport,
    ObjectiveParams, PlotSpec, RuleSet, SplitSelector, TuneConfig,
};
use phar_cli::compare::{blocks_from_reports, compare, TestKind};
use phar_cli::manifest::{file_digest, Manifest, StageOutputs};
use phar_cli::pipeline::{
    fit_predictor, load_dataset, report_json, run_pipeline, set_jobs, svg_with_manifest, to_json,
    write_synthetic_bundle, Runner,
};

#[derive(Parser)]
#[command(name = "phar", version, about = "Interval rules from feature attributions")]
struct Cli {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive interval rules from one explainer's output.
    Extract(ExtractArgs),
    /// Random search over extraction settings.
    Optimize(OptimizeArgs),
    /// Fuse rule sets from several explainers.
    Fuse(FuseArgs),
    /// Score a rule set on the TEST split.
    Evaluate(EvaluateArgs),
    /// Compare methods across metric reports.
    Stats(StatsArgs),
    /// Draw rule figures.
    Plot(PlotArgs),
    /// Run the configured pipeline end to end.
    Run(RunArgs),
    /// Write the synthetic demo dataset, explainer outputs and config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// centroid, 1nn or external:<command>
    #[arg(long, default_value = "centroid")]
    predictor: String,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Attribution CSV.
    #[arg(long, group = "source")]
    attr: Option<PathBuf>,
    /// Anchor rule text.
    #[arg(long, group = "source")]
    anchor: Option<PathBuf>,
    /// Compute occlusion attributions with this baseline (zero, train_mean).
    #[arg(long, group = "source")]
    occlusion: Option<String>,
    /// Explainer tag; defaults to the file stem in upper case.
    #[arg(long)]
    tag: Option<String>,
    /// Extraction settings (TOML, bare or under [extract]).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write a metrics report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    attr: PathBuf,
    #[arg(long)]
    tag: Option<String>,
    /// Base extraction settings; searched fields are overwritten.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// median or none
    #[arg(long, default_value = "median")]
    pruning: String,
    /// Skip the search and return the shortcut defaults.
    #[arg(long)]
    shortcut: bool,
    /// `best_config.toml,trials.csv`
    #[arg(long, value_delimiter = ',', required = true)]
    out: Vec<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, num_args = 1.., required = true)]
    rules: Vec<PathBuf>,
    #[arg(long, default_value = "lasso")]
    method: String,
    /// Fusion settings (TOML, bare or under [fusion]).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long, num_args = 1.., required = true)]
    reports: Vec<PathBuf>,
    /// Repeat for several tests; all three by default.
    #[arg(long)]
    test: Vec<String>,
    #[arg(long, default_value = "mean_M")]
    metric: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    rules: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "svg")]
    format: String,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("PHAR_SEED") {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("PHAR_SEED={v:?}"))?)),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>> {
    Ok(match flag {
        Some(s) => Some(s),
        None => env_seed()?,
    })
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn split_out(path: &Path) -> (PathBuf, String) {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    (dir, name)
}

/// A one-stage run whose manifest sits next to its main output as
/// `<stem>.manifest.json`.
fn single_stage<T>(
    stage: &str,
    main_out: &Path,
    seed: u64,
    inputs: &[&Path],
    f: impl FnOnce(&mut Manifest, &mut StageOutputs, &str) -> Result<T>,
) -> Result<T> {
    let (dir, name) = split_out(main_out);
    fs::create_dir_all(&dir)?;
    let mut manifest = Manifest::new(&command_line(), seed);
    for p in inputs {
        manifest.inputs.insert(p.display().to_string(), file_digest(p)?);
    }
    manifest.seal_inputs();
    let stem = Path::new(&name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| stage.to_string());
    let mut runner = Runner::new(manifest, &dir, &format!("{stem}.manifest.json"));
    let reference = runner.reference();
    let value = runner.stage(stage, |m, out| f(m, out, &reference))?;
    runner.finish()?;
    Ok(value)
}

fn relative_to(dir: &Path, path: &Path) -> String {
    let (pdir, name) = split_out(path);
    if pdir == dir {
        name
    } else {
        std::path::absolute(path)
            .unwrap_or_else(|_| path.to_path_buf())
            .display()
            .to_string()
    }
}

fn read_table(path: &Path, section: &str) -> Result<toml::Table> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut table: toml::Table =
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(match table.remove(section) {
        Some(toml::Value::Table(t)) => t,
        Some(_) => bail!("[{section}] in {} is not a table", path.display()),
        None => table,
    })
}

fn extraction_config(path: Option<&Path>) -> Result<ExtractionConfig> {
    let config = match path {
        Some(p) => read_table(p, "extract")?
            .try_into()
            .with_context(|| format!("extraction settings in {}", p.display()))?,
        None => ExtractionConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn default_tag(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().to_ascii_uppercase())
        .unwrap_or_else(|| "RULES".into())
}

fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let mut config = extraction_config(a.config.as_deref())?;
    let seed = resolve_seed(a.seed)?.unwrap_or(config.seed);
    config.seed = seed;
    let dataset = load_dataset(&a.data.dataset)?;
    let predictor = fit_predictor(&a.data.predictor, &dataset)?;
    let mut inputs = vec![a.data.dataset.as_path()];
    inputs.extend(a.attr.as_deref());
    inputs.extend(a.anchor.as_deref());
    inputs.extend(a.config.as_deref());
    let report_path = a.report.clone();
    single_stage("extract", &a.out, seed, &inputs, |_, out, reference| {
        let eval = EvalSplit::new(&dataset, &predictor, SplitSelector::Test)?;
        let rs = if let Some(path) = &a.attr {
            let tag = a.tag.clone().unwrap_or_else(|| default_tag(path));
            let attr = load_attributions(path, &dataset, &tag)?;
            extract_ruleset(&attr, &dataset, &predictor, &config)?
        } else if let Some(path) = &a.anchor {
            let mut rs = parse_anchor_rules(path, &dataset)?;
            if let Some(tag) = &a.tag {
                rs.provenance = tag.clone();
            }
            annotate_ruleset(&rs, &eval)?
        } else if let Some(baseline) = &a.occlusion {
            let baseline: OcclusionBaseline = serde_json::from_value(baseline.as_str().into())
                .with_context(|| format!("unknown occlusion baseline {baseline:?}"))?;
            let mut attr =
                occlusion_attribution(&dataset, &predictor, SplitSelector::All, baseline, seed)?;
            let tag = a.tag.clone().unwrap_or_else(|| "OCCLUSION".into());
            attr = phar_core::AttributionTensor::new(
                &tag,
                attr.timesteps(),
                attr.channels(),
                attr.rows().map(|(n, r)| (n, r.to_vec())).collect(),
            )?;
            extract_ruleset(&attr, &dataset, &predictor, &config)?
        } else {
            bail!("extract needs one of --attr, --anchor or --occlusion");
        };
        let (dir, _) = split_out(&a.out);
        out.write(&relative_to(&dir, &a.out), rs.to_json(Some(reference)).as_bytes())?;
        if let Some(rp) = &report_path {
            let r = report(&rs, &eval, &ObjectiveParams::default())?;
            out.write(&relative_to(&dir, rp), report_json(&r, Some(reference))?.as_bytes())?;
        }
        Ok(())
    })
}

fn cmd_optimize(a: OptimizeArgs) -> Result<()> {
    let [best_path, trials_path] = <[PathBuf; 2]>::try_from(a.out.clone())
        .map_err(|_| anyhow::anyhow!("--out takes best_config.toml,trials.csv"))?;
    let base = extraction_config(a.config.as_deref())?;
    let seed = resolve_seed(a.seed)?.unwrap_or(base.seed);
    let pruning = match a.pruning.as_str() {
        "median" => Pruning::Median,
        "none" => Pruning::None,
        other => bail!("unknown pruning {other:?} (expected median or none)"),
    };
    let tune_cfg = TuneConfig {
        trials: a.trials,
        seed,
        pruning,
        prune_after: None,
        defaults_shortcut: a.shortcut,
    };
    let dataset = load_dataset(&a.data.dataset)?;
    let predictor = fit_predictor(&a.data.predictor, &dataset)?;
    let tag = a.tag.clone().unwrap_or_else(|| default_tag(&a.attr));
    let attr = load_attributions(&a.attr, &dataset, &tag)?;
    let inputs = [a.data.dataset.as_path(), a.attr.as_path()];
    single_stage("optimize", &best_path, seed, &inputs, |_, out, _| {
        let eval = EvalSplit::new(&dataset, &predictor, SplitSelector::Test)?;
        let outcome = tune(&attr, &dataset, &predictor, &eval, &tune_cfg, &base, &ObjectiveParams::default())?;
        let (dir, _) = split_out(&best_path);
        out.write(&relative_to(&dir, &best_path), toml::to_string(&outcome.best)?.as_bytes())?;
        out.write(&relative_to(&dir, &trials_path), trial_log_csv(&outcome.trials)?.as_bytes())?;
        match outcome.best_mean_m {
            Some(m) => println!("best mean M = {m:.6}"),
            None => println!("shortcut defaults written"),
        }
        Ok(())
    })
}

fn cmd_fuse(a: FuseArgs) -> Result<()> {
    let method: FusionMethod = a.method.parse()?;
    let mut table = match &a.config {
        Some(p) => read_table(p, "fusion")?,
        None => toml::Table::new(),
    };
    table.remove("methods");
    table.insert("method".into(), method.name().into());
    let config: FusionConfig = table.try_into().context("fusion settings")?;
    let dataset = load_dataset(&a.data.dataset)?;
    let predictor = fit_predictor(&a.data.predictor, &dataset)?;
    let sources = a
        .rules
        .iter()
        .map(|p| RuleSet::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let mut inputs = vec![a.data.dataset.as_path()];
    inputs.extend(a.rules.iter().map(PathBuf::as_path));
    let seed = resolve_seed(None)?.unwrap_or(0);
    single_stage("fuse", &a.out, seed, &inputs, |_, out, reference| {
        let eval = EvalSplit::new(&dataset, &predictor, SplitSelector::Test)?;
        let rs = fuse(&sources, &eval, &predictor, &config)?;
        let (dir, _) = split_out(&a.out);
        out.write(&relative_to(&dir, &a.out), rs.to_json(Some(reference)).as_bytes())?;
        Ok(())
    })
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let dataset = load_dataset(&a.data.dataset)?;
    let predictor = fit_predictor(&a.data.predictor, &dataset)?;
    let rs = RuleSet::load(&a.rules).with_context(|| format!("loading {}", a.rules.display()))?;
    let inputs = [a.data.dataset.as_path(), a.rules.as_path()];
    let seed = resolve_seed(None)?.unwrap_or(0);
    single_stage("evaluate", &a.out, seed, &inputs, |_, out, reference| {
        let eval = EvalSplit::new(&dataset, &predictor, SplitSelector::Test)?;
        let r = report(&rs, &eval, &ObjectiveParams::default())?;
        let (dir, _) = split_out(&a.out);
        out.write(&relative_to(&dir, &a.out), report_json(&r, Some(reference))?.as_bytes())?;
        println!("mean M = {:.6}  ER = {:.4}", r.mean_m, r.explained_ratio);
        Ok(())
    })
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let tests = if a.test.is_empty() {
        vec![TestKind::Friedman, TestKind::Nemenyi, TestKind::Wilcoxon]
    } else {
        a.test.iter().map(|t| t.parse()).collect::<Result<Vec<_>>>()?
    };
    let reports = a
        .reports
        .iter()
        .map(|p| -> Result<MetricsReport> {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<&Path> = a.reports.iter().map(PathBuf::as_path).collect();
    let seed = resolve_seed(None)?.unwrap_or(0);
    single_stage("stats", &a.out, seed, &inputs, |_, out, reference| {
        let blocks = blocks_from_reports(&reports, &a.metric)?;
        let mut stats = compare(&blocks, &tests, a.alpha, None)?;
        stats.manifest = Some(reference.to_string());
        let (dir, _) = split_out(&a.out);
        out.write(&relative_to(&dir, &a.out), to_json(&stats)?.as_bytes())?;
        Ok(())
    })
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    if a.format != "svg" {
        bail!("unsupported format {:?} (only svg)", a.format);
    }
    let dataset = load_dataset(&a.dataset)?;
    let sets = a
        .rules
        .iter()
        .map(|p| RuleSet::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let mut inputs = vec![a.dataset.as_path()];
    inputs.extend(a.rules.iter().map(PathBuf::as_path));
    let seed = resolve_seed(None)?.unwrap_or(0);
    let anchor = a.out.join("plot.json");
    single_stage("plot", &anchor, seed, &inputs, |_, out, reference| {
        for rs in &sets {
            let svg = render_svg(&dataset, rs, &PlotSpec::default())?;
            let name = figure_file_name(dataset.name(), &rs.provenance);
            out.write(&name, svg_with_manifest(&svg, reference).as_bytes())?;
            println!("{}", a.out.join(&name).display());
        }
        Ok(())
    })
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let seed = resolve_seed(a.seed)?;
    let outcome = run_pipeline(&a.config, seed)?;
    println!("{}", outcome.out_dir.join("manifest.json").display());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    for p in write_synthetic_bundle(&a.out, a.seed)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    set_jobs(cli.jobs);
    let result = match cli.command {
        Command::Extract(a) => cmd_extract(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Run(a) => cmd_run(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
