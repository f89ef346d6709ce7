//! Per-instance rule collections and the rules file format.
//!
//! A rules file is a JSON object whose `rules` member is an array of
//! `{"instance_index": n, "rule": {...} | null}` entries. A bare array of
//! such entries is also accepted on load.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExtractionConfig;
use crate::error::Result;
use crate::fuse::FusionConfig;
use crate::rule::Rule;

/// The configuration that produced a rule set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfigSnapshot {
    Extraction(ExtractionConfig),
    Fusion(FusionConfig),
    Imported { source: String },
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub provenance: String,
    /// Explained instances; `None` means no rule was generated.
    pub rules: BTreeMap<usize, Option<Rule>>,
    pub config: ConfigSnapshot,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleEntry {
    pub instance_index: usize,
    pub rule: Option<Rule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RulesFile {
    provenance: String,
    #[serde(default)]
    config: ConfigSnapshot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    manifest: Option<String>,
    rules: Vec<RuleEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RulesFileInput {
    Envelope(RulesFile),
    Bare(Vec<RuleEntry>),
}

impl RuleSet {
    pub fn new(provenance: impl Into<String>, config: ConfigSnapshot) -> Self {
        Self {
            provenance: provenance.into(),
            rules: BTreeMap::new(),
            config,
        }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rule(&self, instance: usize) -> Option<&Rule> {
        self.rules.get(&instance).and_then(Option::as_ref)
    }

    pub fn present_rules(&self) -> impl Iterator<Item = (usize, &Rule)> {
        self.rules
            .iter()
            .filter_map(|(&n, r)| r.as_ref().map(|r| (n, r)))
    }

    pub fn rule_count(&self) -> usize {
        self.present_rules().count()
    }

    pub fn entries(&self) -> Vec<RuleEntry> {
        self.rules
            .iter()
            .map(|(&instance_index, rule)| RuleEntry {
                instance_index,
                rule: rule.clone(),
            })
            .collect()
    }

    pub fn to_json(&self, manifest: Option<&str>) -> String {
        let file = RulesFile {
            provenance: self.provenance.clone(),
            config: self.config.clone(),
            manifest: manifest.map(str::to_string),
            rules: self.entries(),
        };
        serde_json::to_string_pretty(&file).expect("rule sets always serialize")
    }

    /// Parses a rules file. `fallback_provenance` names bare-array files.
    pub fn from_json(text: &str, fallback_provenance: &str) -> Result<Self> {
        let (provenance, config, entries) = match serde_json::from_str(text)? {
            RulesFileInput::Envelope(f) => (f.provenance, f.config, f.rules),
            RulesFileInput::Bare(entries) => {
                (fallback_provenance.to_string(), ConfigSnapshot::Unknown, entries)
            }
        };
        let rules = entries
            .into_iter()
            .map(|e| {
                let rule = e.rule.map(|r| r.with_source_instance(e.instance_index));
                (e.instance_index, rule)
            })
            .collect();
        Ok(Self {
            provenance,
            rules,
            config,
        })
    }

    pub fn save(&self, path: &Path, manifest: Option<&str>) -> Result<()> {
        fs::write(path, self.to_json(manifest))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("RULES")
            .to_ascii_uppercase();
        Self::from_json(&text, &stem)
    }
}
