//! Parser for Anchor-style textual rules.
//!
//! One rule per line:
//!
//! ```text
//! instance 8 class 0: t24 > -1.50 AND t26 > -1.26 [conf=0.85 cov=0.26]
//! ```
//!
//! A condition is `F > a`, `F <= b` or `F in (a, b]` where `F` is `t{i}` or
//! `t{i}c{v}`; `inf` / `-inf` are accepted as bounds. The trailing
//! `[conf=.. cov=..]` block is optional. Blank lines and lines starting with
//! `#` are ignored. Conjuncts on the same feature are intersected.

use std::fs;
use std::path::Path;

use crate::dataset::{ClassLabel, Dataset, SplitSelector};
use crate::error::{Error, Result};
use crate::rule::{Condition, FeatureId, Interval, Rule};
use crate::ruleset::{ConfigSnapshot, RuleSet};

pub const ANCHOR_TAG: &str = "ANCHOR";

pub fn parse_anchor_rules(path: &Path, dataset: &Dataset) -> Result<RuleSet> {
    let text = fs::read_to_string(path)?;
    let mut rs = parse_anchor_text(&text, dataset)?;
    rs.config = ConfigSnapshot::Imported {
        source: path.display().to_string(),
    };
    Ok(rs)
}

/// Parses rule text. The resulting domain is the TEST split plus every
/// instance mentioned in the text.
pub fn parse_anchor_text(text: &str, dataset: &Dataset) -> Result<RuleSet> {
    let mut rs = RuleSet::new(
        ANCHOR_TAG,
        ConfigSnapshot::Imported {
            source: "text".into(),
        },
    );
    for n in dataset.indices(SplitSelector::Test) {
        rs.rules.insert(n, None);
    }
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (n, rule) = parse_line(line, i + 1, dataset)?;
        if let Some(Some(_)) = rs.rules.get(&n) {
            return Err(Error::Parse {
                line: i + 1,
                column: 1,
                message: format!("second rule for instance {n}"),
            });
        }
        rs.rules.insert(n, Some(rule));
    }
    Ok(rs)
}

/// Parses a single rule line into `(instance, rule)`.
pub fn parse_line(line: &str, line_no: usize, dataset: &Dataset) -> Result<(usize, Rule)> {
    let mut cur = Cursor::new(line, line_no);
    cur.keyword("instance")?;
    let instance = cur.unsigned()?;
    if instance >= dataset.len() {
        return Err(cur.error(format!(
            "instance {instance} out of range for {} instances",
            dataset.len()
        )));
    }
    cur.keyword("class")?;
    let class = ClassLabel(cur.integer()?);
    cur.punct(":")?;

    let mut conditions: Vec<Condition> = Vec::new();
    loop {
        cur.skip_ws();
        let cond_col = cur.column();
        let cond = cur.condition(dataset)?;
        match conditions.iter_mut().find(|c| c.feature == cond.feature) {
            Some(existing) => {
                existing.interval = existing.interval.intersect(&cond.interval).ok_or_else(|| {
                    Error::Parse {
                        line: line_no,
                        column: cond_col,
                        message: "conjuncts on the same feature have an empty intersection".into(),
                    }
                })?;
            }
            None => conditions.push(cond),
        }
        if !cur.try_keyword("AND") {
            break;
        }
    }

    let mut confidence = None;
    let mut coverage = 0.0;
    if cur.try_punct("[") {
        cur.keyword("conf")?;
        cur.punct("=")?;
        confidence = Some(cur.fraction()?);
        cur.keyword("cov")?;
        cur.punct("=")?;
        coverage = cur.fraction()?;
        cur.punct("]")?;
    }
    cur.end()?;
    let rule = Rule::new(conditions, class, instance)
        .map_err(|e| cur.error(e.to_string()))?
        .with_quality(confidence, coverage);
    Ok((instance, rule))
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, line: usize) -> Self {
        Self { text, pos: 0, line }
    }

    fn column(&self) -> usize {
        self.text[..self.pos].chars().count() + 1
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            column: self.column(),
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn word(&mut self) -> &'a str {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        &rest[..len]
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        if self.try_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected {kw:?}")))
        }
    }

    fn try_keyword(&mut self, kw: &str) -> bool {
        if self.word() == kw {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn punct(&mut self, p: &str) -> Result<()> {
        if self.try_punct(p) {
            Ok(())
        } else {
            Err(self.error(format!("expected {p:?}")))
        }
    }

    fn try_punct(&mut self, p: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(p) {
            self.pos += p.len();
            true
        } else {
            false
        }
    }

    fn token(&mut self) -> &'a str {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .find(|c: char| c.is_whitespace() || matches!(c, ',' | ']' | ')' | ':' | '['))
            .unwrap_or(rest.len());
        &rest[..len]
    }

    fn unsigned(&mut self) -> Result<usize> {
        let tok = self.token();
        let v = tok
            .parse()
            .map_err(|_| self.error(format!("expected a non-negative integer, found {tok:?}")))?;
        self.pos += tok.len();
        Ok(v)
    }

    fn integer(&mut self) -> Result<i64> {
        let tok = self.token();
        let v = tok
            .parse()
            .map_err(|_| self.error(format!("expected an integer, found {tok:?}")))?;
        self.pos += tok.len();
        Ok(v)
    }

    fn number(&mut self) -> Result<f64> {
        let tok = self.token();
        let v = match tok {
            "inf" | "+inf" => f64::INFINITY,
            "-inf" => f64::NEG_INFINITY,
            _ => tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| self.error(format!("expected a number, found {tok:?}")))?,
        };
        self.pos += tok.len();
        Ok(v)
    }

    fn fraction(&mut self) -> Result<f64> {
        let col = self.column();
        let v = self.number()?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Parse {
                line: self.line,
                column: col,
                message: format!("{v} outside [0, 1]"),
            });
        }
        Ok(v)
    }

    fn feature(&mut self, dataset: &Dataset) -> Result<FeatureId> {
        let name = self.word();
        let feature: FeatureId = name.parse().map_err(|e: String| self.error(e))?;
        if feature
            .check_bounds(dataset.timesteps(), dataset.channels())
            .is_err()
        {
            return Err(self.error(format!("feature {name:?} outside the dataset shape")));
        }
        self.pos += name.len();
        Ok(feature)
    }

    fn condition(&mut self, dataset: &Dataset) -> Result<Condition> {
        let feature = self.feature(dataset)?;
        let col = self.column();
        let interval = if self.try_punct("<=") {
            let b = self.number()?;
            Interval::new(f64::NEG_INFINITY, b)
        } else if self.try_punct(">") {
            let a = self.number()?;
            Interval::new(a, f64::INFINITY)
        } else if self.try_keyword("in") {
            self.punct("(")?;
            let a = self.number()?;
            self.punct(",")?;
            let b = self.number()?;
            self.punct("]")?;
            Interval::new(a, b)
        } else {
            return Err(self.error("expected '>', '<=' or 'in'"));
        };
        let interval = interval.map_err(|e| Error::Parse {
            line: self.line,
            column: col,
            message: e.to_string(),
        })?;
        Ok(Condition::new(feature, interval))
    }

    fn end(&mut self) -> Result<()> {
        self.skip_ws();
        if self.rest().is_empty() {
            Ok(())
        } else {
            Err(self.error(format!("unexpected trailing input {:?}", self.rest())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;

    fn ecg_like() -> Dataset {
        Dataset::new(
            "ECG200",
            96,
            1,
            vec![0.0; 96 * 10],
            vec![ClassLabel(0); 10],
            vec![Split::Test; 10],
        )
        .unwrap()
    }

    #[test]
    fn anchor_rule_with_quality() {
        let ds = ecg_like();
        let (n, rule) = parse_line(
            "instance 8 class 0: t24 > -1.50 AND t26 > -1.26 [conf=0.85 cov=0.26]",
            1,
            &ds,
        )
        .unwrap();
        assert_eq!(n, 8);
        assert_eq!(rule.feature_count(), 2);
        assert_eq!(rule.conditions()[0].interval, Interval::new(-1.5, f64::INFINITY).unwrap());
        assert_eq!(rule.conditions()[1].interval, Interval::new(-1.26, f64::INFINITY).unwrap());
        assert_eq!(rule.confidence(), Some(0.85));
        assert_eq!(rule.coverage(), 0.26);
    }

    #[test]
    fn upper_bound_maps_to_negative_infinity_lower() {
        let (_, rule) = parse_line("instance 0 class 1: t5 <= 2.0", 1, &ecg_like()).unwrap();
        assert_eq!(rule.conditions()[0].interval, Interval::new(f64::NEG_INFINITY, 2.0).unwrap());
        assert_eq!(rule.confidence(), None);
    }

    #[test]
    fn reversed_bounds_rejected() {
        let err = parse_line("instance 0 class 1: t5 in (3, 1]", 4, &ecg_like()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err:?}");
    }

    #[test]
    fn same_feature_conjuncts_intersect() {
        let (_, rule) =
            parse_line("instance 1 class 0: t3 > 0 AND t3 <= 2 AND t1 in (-inf, 4]", 1, &ecg_like()).unwrap();
        assert_eq!(rule.feature_count(), 2);
        assert_eq!(rule.condition_for(FeatureId::new(3, 0)).unwrap().interval, Interval::new(0.0, 2.0).unwrap());
        let err = parse_line("instance 1 class 0: t3 > 5 AND t3 <= 2", 1, &ecg_like()).unwrap_err();
        assert!(matches!(err, Error::Parse { column: 32, .. }), "{err:?}");
    }

    #[test]
    fn grammar_errors_report_column() {
        let ds = ecg_like();
        match parse_line("instance 2 class 0 t1 > 0", 7, &ds).unwrap_err() {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (7, 20)),
            other => panic!("{other:?}"),
        }
        assert!(parse_line("instance 2 class 0: t1 >= 0", 1, &ds).is_err());
        assert!(parse_line("instance 2 class 0: t100 > 0", 1, &ds).is_err());
        assert!(parse_line("instance 2 class 0: t1 > 0 [conf=1.5 cov=0.1]", 1, &ds).is_err());
        assert!(parse_line("instance 2 class 0: t1 > 0 trailing", 1, &ds).is_err());
    }

    #[test]
    fn text_domain_includes_test_split() {
        let rs = parse_anchor_text("# header\n\ninstance 3 class 0: t1 > 0\n", &ecg_like()).unwrap();
        assert_eq!(rs.len(), 10);
        assert_eq!(rs.rule_count(), 1);
        assert_eq!(rs.provenance, "ANCHOR");
    }
}
