//! End-to-end pipeline: ingest, tune, extract, fuse, evaluate, stats, plot.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use phar_core::attrib::{load_attributions, occlusion_attribution};
use phar_core::fuse::{fuse, FusionMethod};
use phar_core::metrics::report;
use phar_core::tune::{trial_log_csv, tune};
use phar_core::viz::{figure_file_name, render_svg};
use phar_core::{
    extract_ruleset, parse_anchor_rules, AttributionTensor, ConfigSnapshot, Dataset, EvalSplit, ExtractionConfig,
    MetricsReport, Predictor, PredictorKind, RuleSet, SplitSelector,
};

use crate::compare::{blocks_from_reports, compare, TestKind};
use crate::config::{LoadedConfig, SourceKind};
use crate::manifest::{file_digest, partial_path, Manifest, StageOutputs, StageRecord};

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

pub fn fit_predictor(kind: &str, dataset: &Dataset) -> Result<Predictor> {
    let kind: PredictorKind = kind.parse()?;
    Ok(Predictor::fit(&kind, dataset)?)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// A report as JSON, tagged with the manifest that produced it.
pub fn report_json(report: &MetricsReport, manifest: Option<&str>) -> Result<String> {
    let mut value = serde_json::to_value(report)?;
    if let (Some(m), Some(obj)) = (manifest, value.as_object_mut()) {
        obj.insert("manifest".into(), m.into());
    }
    to_json(&value)
}

/// An SVG with a manifest reference comment after the root element.
pub fn svg_with_manifest(svg: &str, manifest: &str) -> String {
    match svg.split_once('\n') {
        Some((head, rest)) => format!("{head}\n<!-- {manifest} -->\n{rest}"),
        None => svg.to_string(),
    }
}

/// Sets the global worker count. Later calls have no effect.
pub fn set_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs.filter(|&n| n > 0) {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            log::debug!("worker pool already initialized");
        }
    }
}

pub fn file_tag(tag: &str) -> String {
    tag.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Runs named stages against one manifest, committing each stage's outputs
/// only when it succeeds.
pub struct Runner {
    pub manifest: Manifest,
    out_dir: PathBuf,
    manifest_name: String,
}

impl Runner {
    pub fn new(manifest: Manifest, out_dir: &Path, manifest_name: &str) -> Self {
        Self {
            manifest,
            out_dir: out_dir.to_path_buf(),
            manifest_name: manifest_name.to_string(),
        }
    }

    /// The value outputs carry to point back at this run.
    pub fn reference(&self) -> String {
        format!("{}#{}", self.manifest_name, self.manifest.run_id)
    }

    /// Writes the manifest and returns it.
    pub fn finish(self) -> Result<Manifest> {
        let path = self.out_dir.join(&self.manifest_name);
        fs::write(&path, self.manifest.to_json())
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }

    pub fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Manifest, &mut StageOutputs) -> Result<T>,
    ) -> Result<T> {
        let start = Instant::now();
        let mut outputs = StageOutputs::new(&self.out_dir);
        log::info!("stage {name}");
        match f(&mut self.manifest, &mut outputs) {
            Ok(value) => {
                let records = outputs.commit()?;
                self.manifest.stages.push(StageRecord {
                    name: name.into(),
                    status: "ok".into(),
                    wall_seconds: start.elapsed().as_secs_f64(),
                    outputs: records,
                });
                Ok(value)
            }
            Err(e) => {
                self.manifest.stages.push(StageRecord {
                    name: name.into(),
                    status: "failed".into(),
                    wall_seconds: start.elapsed().as_secs_f64(),
                    outputs: Vec::new(),
                });
                let path = partial_path(&self.out_dir.join(&self.manifest_name));
                let _ = fs::write(path, self.manifest.to_json());
                Err(e.context(format!("stage {name} failed")))
            }
        }
    }
}

struct Source {
    tag: String,
    kind: SourceKind,
    attributions: Option<AttributionTensor>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub manifest: Manifest,
    pub out_dir: PathBuf,
}

/// Runs every configured stage. `seed_override` replaces the config's root
/// seed.
pub fn run_pipeline(config_path: &Path, seed_override: Option<u64>) -> Result<PipelineOutcome> {
    let loaded = LoadedConfig::load(config_path)?;
    let cfg = &loaded.config;
    set_jobs(cfg.jobs);
    let root_seed = seed_override.unwrap_or(cfg.seed);
    let out_dir = loaded.resolve(&cfg.out_dir);
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let mut runner = Runner::new(Manifest::new(&loaded.text, root_seed), &out_dir, "manifest.json");
    let params = cfg.evaluate.objective;

    let (dataset, predictor, mut sources) = runner.stage("load", |m, _| {
        let ds_path = loaded.resolve(&cfg.dataset.path);
        for file in Dataset::source_files(&ds_path) {
            m.inputs.insert(display_input(&loaded, &file), file_digest(&file)?);
        }
        let dataset = load_dataset(&ds_path)?;
        let predictor = fit_predictor(&cfg.predictor.kind, &dataset)?;
        let mut sources = Vec::new();
        for s in &cfg.attributions {
            let kind = s.kind()?;
            let attributions = match &kind {
                SourceKind::Attributions(p) => {
                    let path = loaded.resolve(p);
                    m.inputs.insert(display_input(&loaded, &path), file_digest(&path)?);
                    Some(load_attributions(&path, &dataset, &s.tag)?)
                }
                SourceKind::Anchor(p) => {
                    let path = loaded.resolve(p);
                    m.inputs.insert(display_input(&loaded, &path), file_digest(&path)?);
                    None
                }
                SourceKind::Occlusion(baseline) => {
                    let seed = m.seed(&format!("occlusion/{}", s.tag));
                    Some(occlusion_attribution(
                        &dataset,
                        &predictor,
                        SplitSelector::All,
                        *baseline,
                        seed,
                    )?)
                }
            };
            sources.push(Source {
                tag: s.tag.clone(),
                kind,
                attributions,
            });
        }
        m.seal_inputs();
        Ok((dataset, predictor, sources))
    })?;
    let reference = runner.reference();
    let eval = EvalSplit::new(&dataset, &predictor, SplitSelector::Test)?;

    let mut configs: Vec<Option<ExtractionConfig>> = Vec::new();
    for s in &sources {
        let seed = runner.manifest.seed(&format!("extract/{}", s.tag));
        configs.push(s.attributions.as_ref().map(|_| ExtractionConfig {
            seed,
            ..cfg.extract.clone()
        }));
    }

    if let Some(tune_cfg) = &cfg.tune {
        runner.stage("tune", |m, out| {
            for (s, config) in sources.iter().zip(configs.iter_mut()) {
                let (Some(attr), Some(base)) = (&s.attributions, config.as_ref()) else {
                    continue;
                };
                let mut tc = tune_cfg.clone();
                tc.seed = m.seed(&format!("tune/{}", s.tag));
                let outcome = tune(attr, &dataset, &predictor, &eval, &tc, base, &params)?;
                let tag = file_tag(&s.tag);
                out.write(
                    &format!("best_config_{tag}.toml"),
                    toml::to_string(&outcome.best)?.as_bytes(),
                )?;
                out.write(
                    &format!("trials_{tag}.csv"),
                    trial_log_csv(&outcome.trials)?.as_bytes(),
                )?;
                *config = Some(outcome.best);
            }
            Ok(())
        })?;
    }

    let rulesets: Vec<RuleSet> = runner.stage("extract", |_, out| {
        let mut sets = Vec::new();
        for (s, config) in sources.iter_mut().zip(&configs) {
            let mut rs = match (&s.kind, &s.attributions, config) {
                (SourceKind::Anchor(p), _, _) => {
                    let path = loaded.resolve(p);
                    let mut rs = parse_anchor_rules(&path, &dataset)?;
                    rs.config = ConfigSnapshot::Imported {
                        source: display_input(&loaded, &path),
                    };
                    rs
                }
                (_, Some(attr), Some(c)) => extract_ruleset(attr, &dataset, &predictor, c)?,
                _ => unreachable!("attribution sources carry a tensor and a config"),
            };
            rs.provenance = s.tag.clone();
            rs = phar_core::metrics::annotate_ruleset(&rs, &eval)?;
            out.write(
                &format!("rules_{}.json", file_tag(&s.tag)),
                rs.to_json(Some(&reference)).as_bytes(),
            )?;
            s.attributions = None;
            sets.push(rs);
        }
        Ok(sets)
    })?;

    let fused: Vec<(FusionMethod, RuleSet)> = match &cfg.fusion {
        Some(section) if !section.methods.is_empty() && !rulesets.is_empty() => {
            runner.stage("fuse", |_, out| {
                let mut all = Vec::new();
                for &method in &section.methods {
                    let fc = section.config_for(method, params);
                    let rs = fuse(&rulesets, &eval, &predictor, &fc)
                        .with_context(|| format!("fusion method {method}"))?;
                    out.write(
                        &format!("fused_{method}.json"),
                        rs.to_json(Some(&reference)).as_bytes(),
                    )?;
                    all.push((method, rs));
                }
                Ok(all)
            })?
        }
        _ => Vec::new(),
    };

    let build_reports = || -> Result<Vec<(String, MetricsReport)>> {
        let mut reports = Vec::new();
        for rs in &rulesets {
            reports.push((file_tag(&rs.provenance), report(rs, &eval, &params)?));
        }
        for (method, rs) in &fused {
            reports.push((method.to_string(), report(rs, &eval, &params)?));
        }
        Ok(reports)
    };

    let mut reports = None;
    if cfg.evaluate.enabled {
        reports = Some(runner.stage("evaluate", |_, out| {
            let reports = build_reports()?;
            for (name, r) in &reports {
                out.write(
                    &format!("report_{name}.json"),
                    report_json(r, Some(&reference))?.as_bytes(),
                )?;
            }
            Ok(reports)
        })?);
    }

    if let Some(stats_cfg) = &cfg.stats {
        runner.stage("stats", |_, out| {
            let reports = match reports.take() {
                Some(r) => r,
                None => build_reports()?,
            };
            let plain: Vec<MetricsReport> = reports.into_iter().map(|(_, r)| r).collect();
            let blocks = blocks_from_reports(&plain, "mean_M")?;
            let n_sources = rulesets.len();
            let pairs: Vec<(usize, usize)> = (n_sources..blocks.methods.len())
                .flat_map(|f| (0..n_sources).map(move |s| (f, s)))
                .collect();
            let pairs = if pairs.is_empty() { None } else { Some(pairs.as_slice()) };
            let mut stats = compare(
                &blocks,
                &[TestKind::Friedman, TestKind::Nemenyi, TestKind::Wilcoxon],
                stats_cfg.alpha,
                pairs,
            )?;
            stats.manifest = Some(reference.clone());
            out.write("stats.json", to_json(&stats)?.as_bytes())?;
            Ok(())
        })?;
    }

    if let Some(plot_cfg) = &cfg.plot {
        runner.stage("plot", |_, out| {
            let mut sets: Vec<&RuleSet> = Vec::new();
            if plot_cfg.sources {
                sets.extend(rulesets.iter());
            }
            sets.extend(fused.iter().map(|(_, rs)| rs));
            for rs in sets {
                let svg = render_svg(&dataset, rs, &plot_cfg.spec)?;
                let name = figure_file_name(dataset.name(), &rs.provenance);
                out.write(
                    &format!("plots/{name}"),
                    svg_with_manifest(&svg, &reference).as_bytes(),
                )?;
            }
            Ok(())
        })?;
    }

    let manifest = runner.finish()?;
    Ok(PipelineOutcome { manifest, out_dir })
}

fn display_input(loaded: &LoadedConfig, path: &Path) -> String {
    path.strip_prefix(&loaded.base_dir)
        .unwrap_or(path)
        .display()
        .to_string()
}

/// Pipeline config written next to the synthetic bundle.
pub fn synthetic_config(seed: u64) -> String {
    format!(
        r#"seed = {seed}
out_dir = "out"

[dataset]
path = "dataset.json"

[predictor]
kind = "centroid"

[[attributions]]
tag = "ANCHOR"
anchor = "anchor.txt"

[[attributions]]
tag = "LIME"
path = "lime.csv"

[[attributions]]
tag = "SHAP"
path = "shap.csv"

[extract]
percentile = 90
global_threshold = true
sigma = 0.5
samples = 2000

[fusion]
methods = ["intersection", "union", "weighted", "lasso", "lasso_global", "best"]

[evaluate]
enabled = true

[stats]
alpha = 0.05

[plot]
sources = true
"#
    )
}

/// Writes the two-class sine dataset, three explainer outputs and a
/// pipeline config into `dir`. Returns the written paths.
pub fn write_synthetic_bundle(dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    use phar_core::synth::{sine_dataset, synthetic_anchor_text, synthetic_attributions};

    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let dataset = sine_dataset(seed);
    let predictor = fit_predictor("centroid", &dataset)?;
    let mut written = Vec::new();

    let path = dir.join("dataset.json");
    dataset.save_json(&path)?;
    written.push(path);
    for (tag, file, noise, offset) in [("SHAP", "shap.csv", 0.05, 1), ("LIME", "lime.csv", 0.15, 2)] {
        let attr = synthetic_attributions(&dataset, &predictor, tag, noise, seed.wrapping_add(offset))?;
        let path = dir.join(file);
        attr.save(&path)?;
        written.push(path);
    }
    let path = dir.join("anchor.txt");
    fs::write(&path, synthetic_anchor_text(&dataset, &predictor)?)?;
    written.push(path);
    let path = dir.join("config.toml");
    fs::write(&path, synthetic_config(seed))?;
    written.push(path);
    Ok(written)
}
