//! Half-open interval rules.
//!
//! A [`Rule`] is a conjunction of [`Condition`]s `x[t, c] in (lower, upper]`
//! implying a predicted class. Bounds may be infinite, so one-sided
//! thresholds such as `x > a` are stored as `(a, +inf]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::ClassLabel;
use crate::error::{Error, Result};

/// A single timestep/channel position in an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureId {
    pub timestep: usize,
    pub channel: usize,
}

impl FeatureId {
    pub const fn new(timestep: usize, channel: usize) -> Self {
        Self { timestep, channel }
    }

    /// Offset in a flattened `T x C` instance.
    pub fn flat_index(self, channels: usize) -> usize {
        self.timestep * channels + self.channel
    }

    pub fn from_flat_index(index: usize, channels: usize) -> Self {
        Self::new(index / channels, index % channels)
    }

    /// `t{t}` for univariate data, `t{t}c{c}` otherwise.
    pub fn label(self, channels: usize) -> String {
        if channels == 1 {
            format!("t{}", self.timestep)
        } else {
            format!("t{}c{}", self.timestep, self.channel)
        }
    }

    pub fn check_bounds(self, timesteps: usize, channels: usize) -> Result<()> {
        if self.timestep >= timesteps || self.channel >= channels {
            return Err(Error::dimension(
                format!("feature within T={timesteps}, C={channels}"),
                self.label(2),
            ));
        }
        Ok(())
    }
}

impl FromStr for FeatureId {
    type Err = String;

    /// Accepts `t{i}` (channel 0) and `t{i}c{v}`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s
            .strip_prefix('t')
            .ok_or_else(|| format!("feature name {s:?} must start with 't'"))?;
        let (t, c) = match rest.split_once('c') {
            Some((t, c)) => (t, Some(c)),
            None => (rest, None),
        };
        let parse = |v: &str| -> Result<usize, String> {
            if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
                return Err(format!("malformed feature name {s:?}"));
            }
            v.parse().map_err(|_| format!("malformed feature name {s:?}"))
        };
        let timestep = parse(t)?;
        let channel = c.map(parse).transpose()?.unwrap_or(0);
        Ok(Self::new(timestep, channel))
    }
}

/// Half-open interval `(lower, upper]`; bounds may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::InvalidInterval { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x <= self.upper
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        self.lower >= other.lower && self.upper <= other.upper
    }

    /// `(max l, min u]`, or `None` when that is empty.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        Interval::new(self.lower.max(other.lower), self.upper.min(other.upper)).ok()
    }

    /// `(min l, max u]`; gaps between disjoint intervals are absorbed.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lower: self.lower.min(other.lower),
            upper: self.upper.max(other.upper),
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}]", fmt_bound(self.lower), fmt_bound(self.upper))
    }
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.2}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub feature: FeatureId,
    pub interval: Interval,
}

impl Condition {
    pub fn new(feature: FeatureId, interval: Interval) -> Self {
        Self { feature, interval }
    }

    pub fn is_satisfied_by(&self, instance: &[f64], channels: usize) -> bool {
        self.interval
            .contains(instance[self.feature.flat_index(channels)])
    }
}

/// Hashable identity of a rule: its conditions (bit-exact bounds) and class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RuleShape {
    class: ClassLabel,
    conditions: Vec<(usize, usize, u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RuleRecord", into = "RuleRecord")]
pub struct Rule {
    conditions: Vec<Condition>,
    predicted_class: ClassLabel,
    confidence: Option<f64>,
    coverage: f64,
    source_instance: usize,
}

impl Rule {
    /// Builds a rule with canonical `(timestep, channel)` ordering.
    ///
    /// Conditions must be non-empty and mention each feature at most once.
    /// Confidence starts absent and coverage at zero until evaluated.
    pub fn new(
        mut conditions: Vec<Condition>,
        predicted_class: ClassLabel,
        source_instance: usize,
    ) -> Result<Self> {
        if conditions.is_empty() {
            return Err(Error::InvalidRule("a rule needs at least one condition".into()));
        }
        conditions.sort_by_key(|c| c.feature);
        if let Some(w) = conditions.windows(2).find(|w| w[0].feature == w[1].feature) {
            return Err(Error::InvalidRule(format!(
                "duplicate condition on feature t{}c{}",
                w[0].feature.timestep, w[0].feature.channel
            )));
        }
        Ok(Self {
            conditions,
            predicted_class,
            confidence: None,
            coverage: 0.0,
            source_instance,
        })
    }

    /// Like [`Rule::new`], but conditions on the same feature are first merged
    /// with `merge` (returning `None` rejects the rule).
    pub fn from_merged(
        conditions: impl IntoIterator<Item = Condition>,
        predicted_class: ClassLabel,
        source_instance: usize,
        merge: impl Fn(&Interval, &Interval) -> Option<Interval>,
    ) -> Option<Self> {
        let mut merged: std::collections::BTreeMap<FeatureId, Interval> = Default::default();
        for cond in conditions {
            match merged.get_mut(&cond.feature) {
                Some(existing) => *existing = merge(existing, &cond.interval)?,
                None => {
                    merged.insert(cond.feature, cond.interval);
                }
            }
        }
        let conditions = merged
            .into_iter()
            .map(|(f, i)| Condition::new(f, i))
            .collect();
        Rule::new(conditions, predicted_class, source_instance).ok()
    }

    pub fn with_quality(mut self, confidence: Option<f64>, coverage: f64) -> Self {
        self.confidence = confidence;
        self.coverage = coverage;
        self
    }

    pub fn with_source_instance(mut self, source_instance: usize) -> Self {
        self.source_instance = source_instance;
        self
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn predicted_class(&self) -> ClassLabel {
        self.predicted_class
    }

    pub fn confidence(&self) -> Option<f64> {
        self.confidence
    }

    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    pub fn source_instance(&self) -> usize {
        self.source_instance
    }

    pub fn feature_count(&self) -> usize {
        self.conditions.len()
    }

    pub fn condition_for(&self, feature: FeatureId) -> Option<&Condition> {
        self.conditions
            .binary_search_by_key(&feature, |c| c.feature)
            .ok()
            .map(|i| &self.conditions[i])
    }

    pub fn check_bounds(&self, timesteps: usize, channels: usize) -> Result<()> {
        self.conditions
            .iter()
            .try_for_each(|c| c.feature.check_bounds(timesteps, channels))
    }

    /// True iff every condition holds for the flattened `T x C` instance.
    pub fn is_satisfied_by(&self, instance: &[f64], timesteps: usize, channels: usize) -> Result<bool> {
        if instance.len() != timesteps * channels {
            return Err(Error::dimension(
                format!("instance of {timesteps}x{channels}"),
                format!("{} values", instance.len()),
            ));
        }
        self.check_bounds(timesteps, channels)?;
        Ok(self.matches(instance, channels))
    }

    /// Unchecked satisfaction test for hot loops; bounds must already be valid.
    pub(crate) fn matches(&self, instance: &[f64], channels: usize) -> bool {
        self.conditions
            .iter()
            .all(|c| c.is_satisfied_by(instance, channels))
    }

    pub fn shape(&self) -> RuleShape {
        RuleShape {
            class: self.predicted_class,
            conditions: self
                .conditions
                .iter()
                .map(|c| {
                    (
                        c.feature.timestep,
                        c.feature.channel,
                        c.interval.lower.to_bits(),
                        c.interval.upper.to_bits(),
                    )
                })
                .collect(),
        }
    }

    /// Same conditions and class, ignoring quality figures and provenance.
    pub fn same_structure(&self, other: &Rule) -> bool {
        self.predicted_class == other.predicted_class && self.conditions == other.conditions
    }

    /// Human-readable line, e.g.
    /// `t24 in (-1.50, inf] AND t26 in (-1.26, inf] => class 0 (CONF=0.85, COV=0.26)`.
    pub fn render_line(&self, channels: usize) -> String {
        let body = self
            .conditions
            .iter()
            .map(|c| format!("{} in {}", c.feature.label(channels), c.interval))
            .collect::<Vec<_>>()
            .join(" AND ");
        let conf = self
            .confidence
            .map_or_else(|| "undefined".to_string(), |v| format!("{v:.2}"));
        format!(
            "{body} => class {} (CONF={conf}, COV={:.2})",
            self.predicted_class, self.coverage
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("rule records always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let multivariate = self.conditions.iter().any(|c| c.feature.channel > 0);
        f.write_str(&self.render_line(if multivariate { 2 } else { 1 }))
    }
}

/// On-disk rule form; infinite bounds are `null`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleRecord {
    conditions: Vec<ConditionRecord>,
    predicted_class: ClassLabel,
    confidence: Option<f64>,
    coverage: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_instance: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConditionRecord {
    t: usize,
    c: usize,
    lower: Option<f64>,
    upper: Option<f64>,
}

impl From<Rule> for RuleRecord {
    fn from(rule: Rule) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        RuleRecord {
            conditions: rule
                .conditions
                .iter()
                .map(|c| ConditionRecord {
                    t: c.feature.timestep,
                    c: c.feature.channel,
                    lower: finite(c.interval.lower),
                    upper: finite(c.interval.upper),
                })
                .collect(),
            predicted_class: rule.predicted_class,
            confidence: rule.confidence,
            coverage: rule.coverage,
            source_instance: Some(rule.source_instance),
        }
    }
}

impl TryFrom<RuleRecord> for Rule {
    type Error = Error;

    fn try_from(rec: RuleRecord) -> Result<Self> {
        let conditions = rec
            .conditions
            .iter()
            .map(|c| {
                Interval::new(
                    c.lower.unwrap_or(f64::NEG_INFINITY),
                    c.upper.unwrap_or(f64::INFINITY),
                )
                .map(|i| Condition::new(FeatureId::new(c.t, c.c), i))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(conf) = rec.confidence {
            if !(0.0..=1.0).contains(&conf) {
                return Err(Error::InvalidRule(format!("confidence {conf} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&rec.coverage) {
            return Err(Error::InvalidRule(format!(
                "coverage {} outside [0, 1]",
                rec.coverage
            )));
        }
        Ok(Rule::new(conditions, rec.predicted_class, rec.source_instance.unwrap_or(0))?
            .with_quality(rec.confidence, rec.coverage))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(l: f64, u: f64) -> Interval {
        Interval::new(l, u).unwrap()
    }

    fn anchor_rule() -> Rule {
        Rule::new(
            vec![
                Condition::new(FeatureId::new(26, 0), iv(-1.26, f64::INFINITY)),
                Condition::new(FeatureId::new(24, 0), iv(-1.50, f64::INFINITY)),
            ],
            ClassLabel(0),
            8,
        )
        .unwrap()
        .with_quality(Some(0.85), 0.26)
    }

    #[test]
    fn half_open_membership() {
        let i = iv(0.0, 1.0);
        let got: Vec<bool> = [0.0, 0.5, 1.0, 1.5].iter().map(|&x| i.contains(x)).collect();
        assert_eq!(got, vec![false, true, true, false]);
        assert!(Interval::UNBOUNDED.contains(-1e300));
    }

    #[test]
    fn degenerate_intervals_rejected() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(f64::NAN, 1.0).is_err());
        assert!(Interval::new(f64::INFINITY, f64::INFINITY).is_err());
    }

    #[test]
    fn anchor_rule_satisfaction() {
        let rule = anchor_rule();
        let mut x = vec![0.0; 30];
        assert!(rule.is_satisfied_by(&x, 30, 1).unwrap());
        x[24] = -1.50;
        assert!(!rule.is_satisfied_by(&x, 30, 1).unwrap());
        assert!(rule.is_satisfied_by(&x[..20], 20, 1).is_err());
    }

    #[test]
    fn conditions_sorted_and_unique() {
        let rule = anchor_rule();
        assert_eq!(rule.conditions()[0].feature.timestep, 24);
        let dup = Rule::new(
            vec![
                Condition::new(FeatureId::new(1, 0), iv(0.0, 1.0)),
                Condition::new(FeatureId::new(1, 0), iv(0.5, 2.0)),
            ],
            ClassLabel(0),
            0,
        );
        assert!(dup.is_err());
        assert!(Rule::new(vec![], ClassLabel(0), 0).is_err());
    }

    #[test]
    fn human_line_matches_notation() {
        let line = anchor_rule().render_line(1);
        assert!(line.contains("t24 in (-1.50, inf]"), "{line}");
        assert!(line.contains("CONF=0.85, COV=0.26"), "{line}");
    }

    #[test]
    fn unbounded_interval_serializes_as_nulls() {
        let rule = Rule::new(
            vec![Condition::new(FeatureId::new(3, 1), Interval::UNBOUNDED)],
            ClassLabel(2),
            5,
        )
        .unwrap();
        let json = rule.to_json();
        assert!(json.contains(r#""lower":null,"upper":null"#), "{json}");
        assert!(rule.render_line(2).contains("t3c1 in (-inf, inf]"));
        assert_eq!(Rule::from_json(&json).unwrap(), rule);
    }

    #[test]
    fn feature_names_parse() {
        assert_eq!("t5".parse::<FeatureId>().unwrap(), FeatureId::new(5, 0));
        assert_eq!("t0c1".parse::<FeatureId>().unwrap(), FeatureId::new(0, 1));
        assert!("x5".parse::<FeatureId>().is_err());
        assert!("t".parse::<FeatureId>().is_err());
        assert!("t1c".parse::<FeatureId>().is_err());
        assert!("t-1".parse::<FeatureId>().is_err());
    }
}
