//! Abstention-aware classification metrics, category accuracy under
//! labeler agreement filters, routing shares and pairwise agreement.
//!
//! All percentages are on a 0–100 scale and carried at full `f64`
//! precision; rounding to two decimals happens only when rendering.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{GroundTruth, MissingInfoCategory, RouteKind, ScoreLevel, Statement, VeracityScore};

/// How 0.5 abstentions enter Macro F1 and accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbstainPolicy {
    /// An abstention is a miss for the gold class and a prediction for no class.
    #[default]
    AbstainAsError,
    /// Abstentions are removed before scoring.
    ResolvedOnly,
}

impl AbstainPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::AbstainAsError => "abstain-as-error",
            Self::ResolvedOnly => "resolved-only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("{preds} predictions but {truths} ground-truth labels")]
    LengthMismatch { preds: usize, truths: usize },
    #[error("nothing left to score after applying the abstain policy")]
    EmptyAfterFilter,
    #[error("empty input")]
    EmptyInput,
    #[error("no statement satisfies the agreement filter")]
    NoEligibleStatements,
    #[error("prediction for unknown statement {0}")]
    UnknownStatementId(String),
    #[error("the two label sets share no ids")]
    NoOverlap,
}

/// Anything that carries a snapped verdict.
pub trait AsLevel {
    fn level(&self) -> ScoreLevel;
}

impl AsLevel for ScoreLevel {
    fn level(&self) -> ScoreLevel {
        *self
    }
}

impl AsLevel for VeracityScore {
    fn level(&self) -> ScoreLevel {
        self.snapped
    }
}

fn predicted_class(level: ScoreLevel) -> Option<GroundTruth> {
    match level {
        ScoreLevel::False => Some(GroundTruth::False),
        ScoreLevel::True => Some(GroundTruth::True),
        ScoreLevel::Abstain => None,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

struct Tallied {
    counts: [Counts; 2],
    correct: usize,
    scored: usize,
}

fn class_index(c: GroundTruth) -> usize {
    match c {
        GroundTruth::False => 0,
        GroundTruth::True => 1,
    }
}

fn tally<P: AsLevel>(
    preds: &[P],
    truths: &[GroundTruth],
    policy: AbstainPolicy,
) -> Result<Tallied, MetricsError> {
    if preds.len() != truths.len() {
        return Err(MetricsError::LengthMismatch { preds: preds.len(), truths: truths.len() });
    }
    let mut counts = [Counts::default(); 2];
    let mut correct = 0;
    let mut scored = 0;
    for (p, &t) in preds.iter().zip(truths) {
        let predicted = predicted_class(p.level());
        if predicted.is_none() && policy == AbstainPolicy::ResolvedOnly {
            continue;
        }
        scored += 1;
        match predicted {
            Some(c) if c == t => {
                counts[class_index(c)].tp += 1;
                correct += 1;
            }
            Some(c) => {
                counts[class_index(c)].fp += 1;
                counts[class_index(t)].fn_ += 1;
            }
            None => counts[class_index(t)].fn_ += 1,
        }
    }
    if scored == 0 {
        return Err(MetricsError::EmptyAfterFilter);
    }
    Ok(Tallied { counts, correct, scored })
}

/// Precision, recall and F1 for one class, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold instances of the class among the scored items.
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_scores(c: Counts) -> ClassScores {
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    ClassScores { precision: 100.0 * p, recall: 100.0 * r, f1: 100.0 * f1, support: c.tp + c.fn_ }
}

// A class enters the macro average when it has gold support or was predicted.
fn macro_from(counts: &[Counts; 2]) -> f64 {
    let present: Vec<ClassScores> = counts
        .iter()
        .filter(|c| c.tp + c.fn_ + c.fp > 0)
        .map(|&c| class_scores(c))
        .collect();
    present.iter().map(|s| s.f1).sum::<f64>() / present.len() as f64
}

/// Unweighted mean of per-class F1 over `{False, True}`. A zero
/// denominator makes that precision, recall or F1 zero.
pub fn macro_f1<P: AsLevel>(
    preds: &[P],
    truths: &[GroundTruth],
    policy: AbstainPolicy,
) -> Result<f64, MetricsError> {
    let t = tally(preds, truths, policy)?;
    Ok(macro_from(&t.counts))
}

pub fn accuracy<P: AsLevel>(
    preds: &[P],
    truths: &[GroundTruth],
    policy: AbstainPolicy,
) -> Result<f64, MetricsError> {
    let t = tally(preds, truths, policy)?;
    Ok(100.0 * t.correct as f64 / t.scored as f64)
}

/// Share of predictions that are not abstentions.
pub fn resolution_rate<P: AsLevel>(preds: &[P]) -> Result<f64, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let resolved = preds.iter().filter(|p| !p.level().is_abstention()).count();
    Ok(100.0 * resolved as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: AbstainPolicy,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub resolution: f64,
    pub n_total: usize,
    pub n_resolved: usize,
    pub n_skipped: usize,
    pub per_class: BTreeMap<GroundTruth, ClassScores>,
}

impl MetricsReport {
    pub fn compute<P: AsLevel>(
        preds: &[P],
        truths: &[GroundTruth],
        policy: AbstainPolicy,
        n_skipped: usize,
    ) -> Result<Self, MetricsError> {
        let t = tally(preds, truths, policy)?;
        let n_resolved = preds.iter().filter(|p| !p.level().is_abstention()).count();
        let mut per_class = BTreeMap::new();
        per_class.insert(GroundTruth::False, class_scores(t.counts[0]));
        per_class.insert(GroundTruth::True, class_scores(t.counts[1]));
        Ok(Self {
            policy,
            macro_f1: macro_from(&t.counts),
            accuracy: 100.0 * t.correct as f64 / t.scored as f64,
            resolution: resolution_rate(preds)?,
            n_total: preds.len(),
            n_resolved,
            n_skipped,
            per_class,
        })
    }
}

/// Renders reports as an aligned table with the Macro F1 / Accuracy /
/// Percent Resolution columns, two decimals each.
pub fn render_metrics_table(rows: &[(&str, &MetricsReport)]) -> String {
    let headers = ["Experiment", "Macro F1 (%)", "Accuracy (%)", "Percent Resolution (%)"];
    let body: Vec<[String; 4]> = rows
        .iter()
        .map(|(name, r)| {
            [
                String::from(*name),
                format!("{:.2}", r.macro_f1),
                format!("{:.2}", r.accuracy),
                format!("{:.2}", r.resolution),
            ]
        })
        .collect();
    let mut widths = headers.map(|h| h.chars().count());
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: [&str; 4]| {
        let _ = write!(out, "{:<w$}", cells[0], w = widths[0]);
        for i in 1..4 {
            let _ = write!(out, "  {:>w$}", cells[i], w = widths[i]);
        }
        out.push('\n');
    };
    line(&mut out, headers);
    let rule: usize = widths.iter().sum::<usize>() + 6;
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for row in &body {
        line(&mut out, [&row[0], &row[1], &row[2], &row[3]]);
    }
    out
}

/// A count out of a total, with its percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub count: usize,
    pub total: usize,
    pub percent: f64,
}

impl Tally {
    fn new(count: usize, total: usize) -> Self {
        Self { count, total, percent: 100.0 * ratio(count, total) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgreementFilter {
    /// Any labeler's letter counts as a hit.
    #[default]
    MatchAny,
    /// At least two labelers agree; scored against their letter.
    TwoOfThree,
    /// Two or more labels, all identical.
    Unanimous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub filter: AgreementFilter,
    pub overall: Tally,
    pub per_category: BTreeMap<MissingInfoCategory, Tally>,
}

/// Most frequent label; ties go to the label that appeared first.
pub fn plurality_label(labels: &[MissingInfoCategory]) -> Option<(MissingInfoCategory, usize)> {
    let mut best: Option<(MissingInfoCategory, usize)> = None;
    for &c in labels {
        let n = labels.iter().filter(|&&x| x == c).count();
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((c, n));
        }
    }
    best
}

/// Category prediction accuracy against human labels.
///
/// Each eligible statement is bucketed under its plurality label (the
/// majority label for the agreement filters). Statements without
/// predictions are ignored; predictions for ids not in `statements` are an
/// error.
pub fn category_accuracy(
    preds: &BTreeMap<String, MissingInfoCategory>,
    statements: &[Statement],
    filter: AgreementFilter,
) -> Result<CategoryAccuracy, MetricsError> {
    let by_id: BTreeMap<&str, &Statement> = statements.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut hits = 0;
    let mut total = 0;
    let mut buckets: BTreeMap<MissingInfoCategory, (usize, usize)> = BTreeMap::new();
    for (id, &pred) in preds {
        let st = by_id
            .get(id.as_str())
            .ok_or_else(|| MetricsError::UnknownStatementId(id.clone()))?;
        let labels: Vec<MissingInfoCategory> = st.annotations().iter().map(|a| a.category).collect();
        let Some((majority, votes)) = plurality_label(&labels) else { continue };
        let hit = match filter {
            AgreementFilter::MatchAny => labels.contains(&pred),
            AgreementFilter::TwoOfThree if votes >= 2 => pred == majority,
            AgreementFilter::Unanimous if labels.len() >= 2 && votes == labels.len() => {
                pred == majority
            }
            _ => continue,
        };
        total += 1;
        let bucket = buckets.entry(majority).or_default();
        bucket.1 += 1;
        if hit {
            hits += 1;
            bucket.0 += 1;
        }
    }
    if total == 0 {
        return Err(MetricsError::NoEligibleStatements);
    }
    Ok(CategoryAccuracy {
        filter,
        overall: Tally::new(hits, total),
        per_category: buckets.into_iter().map(|(c, (h, t))| (c, Tally::new(h, t))).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingShare {
    /// User-routed count over total, per primary category.
    pub per_category: BTreeMap<MissingInfoCategory, Tally>,
    /// `None` when there were no records.
    pub overall: Option<Tally>,
}

impl RoutingShare {
    /// `A: 54.55` style lines, one per category then `overall`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (c, t) in &self.per_category {
            let _ = writeln!(out, "{} ({}): {:.2}  [{}/{}]", c, c.name(), t.percent, t.count, t.total);
        }
        if let Some(t) = &self.overall {
            let _ = writeln!(out, "overall: {:.2}  [{}/{}]", t.percent, t.count, t.total);
        }
        out
    }
}

/// Percentage of records routed to the user, per category and overall.
pub fn routing_share(records: &[(MissingInfoCategory, RouteKind)]) -> RoutingShare {
    let mut per: BTreeMap<MissingInfoCategory, (usize, usize)> = BTreeMap::new();
    for &(c, route) in records {
        let e = per.entry(c).or_default();
        e.1 += 1;
        if route == RouteKind::UserQuery {
            e.0 += 1;
        }
    }
    let user: usize = per.values().map(|v| v.0).sum();
    RoutingShare {
        per_category: per.into_iter().map(|(c, (u, t))| (c, Tally::new(u, t))).collect(),
        overall: (!records.is_empty()).then(|| Tally::new(user, records.len())),
    }
}

/// Percentage of shared ids on which both label maps agree.
pub fn pairwise_agreement<V: PartialEq>(
    labels_a: &BTreeMap<String, V>,
    labels_b: &BTreeMap<String, V>,
) -> Result<f64, MetricsError> {
    let mut overlap = 0;
    let mut agree = 0;
    for (id, a) in labels_a {
        if let Some(b) = labels_b.get(id) {
            overlap += 1;
            if a == b {
                agree += 1;
            }
        }
    }
    if overlap == 0 {
        return Err(MetricsError::NoOverlap);
    }
    Ok(100.0 * agree as f64 / overlap as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PossibilityLabel;
    use alloc::string::ToString;
    use GroundTruth::{False as F, True as T};
    use MissingInfoCategory::*;
    use ScoreLevel::{Abstain as H, False as Z, True as O};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn perfect() {
        assert_eq!(macro_f1(&[Z, O], &[F, T], AbstainPolicy::AbstainAsError).unwrap(), 100.0);
        assert_eq!(accuracy(&[Z, O], &[F, T], AbstainPolicy::AbstainAsError).unwrap(), 100.0);
    }

    #[test]
    fn abstain_as_error_example() {
        let m = macro_f1(&[Z, Z, O, H], &[F, T, T, F], AbstainPolicy::AbstainAsError).unwrap();
        // False: P=1/2 R=1/2 F1=1/2; True: P=1 R=1/2 F1=2/3.
        assert!(close(m, 100.0 * (0.5 + 2.0 / 3.0) / 2.0));
        assert_eq!(format!("{m:.2}"), "58.33");
        let m = macro_f1(&[Z, Z, O, H], &[F, T, T, F], AbstainPolicy::ResolvedOnly).unwrap();
        assert!(close(m, 100.0 * 2.0 / 3.0));
        assert_eq!(format!("{m:.2}"), "66.67");
    }

    #[test]
    fn accuracy_policies() {
        assert_eq!(accuracy(&[H, H], &[T, F], AbstainPolicy::AbstainAsError).unwrap(), 0.0);
        assert_eq!(accuracy(&[Z, H], &[F, F], AbstainPolicy::ResolvedOnly).unwrap(), 100.0);
        assert_eq!(
            accuracy(&[H, H], &[T, F], AbstainPolicy::ResolvedOnly),
            Err(MetricsError::EmptyAfterFilter)
        );
        assert_eq!(
            macro_f1(&[Z], &[F, T], AbstainPolicy::ResolvedOnly),
            Err(MetricsError::LengthMismatch { preds: 1, truths: 2 })
        );
    }

    #[test]
    fn single_class_perfect_is_100() {
        assert_eq!(macro_f1(&[Z, Z], &[F, F], AbstainPolicy::AbstainAsError).unwrap(), 100.0);
    }

    #[test]
    fn resolution() {
        assert_eq!(resolution_rate(&[H, H]).unwrap(), 0.0);
        assert_eq!(resolution_rate(&[Z, O]).unwrap(), 100.0);
        assert_eq!(resolution_rate(&[Z, H, H, H, O, H, H, H]).unwrap(), 25.0);
        assert_eq!(resolution_rate::<ScoreLevel>(&[]), Err(MetricsError::EmptyInput));
    }

    fn annotated(id: &str, labels: &[MissingInfoCategory]) -> Statement {
        let mut s = Statement::new(id, "claim", PossibilityLabel::Hard).unwrap();
        for (i, &c) in labels.iter().enumerate() {
            s.annotate(format!("L{}", i + 1), c).unwrap();
        }
        s
    }

    #[test]
    fn category_accuracy_rules() {
        let corpus = [annotated("s1", &[A, B, C]), annotated("s2", &[A, A, B])];
        let mut preds = BTreeMap::new();
        preds.insert("s1".to_string(), B);
        let r = category_accuracy(&preds, &corpus, AgreementFilter::MatchAny).unwrap();
        assert_eq!(r.overall.count, 1);
        assert_eq!(
            category_accuracy(&preds, &corpus, AgreementFilter::TwoOfThree),
            Err(MetricsError::NoEligibleStatements)
        );
        preds.clear();
        preds.insert("s2".to_string(), B);
        let r = category_accuracy(&preds, &corpus, AgreementFilter::TwoOfThree).unwrap();
        assert_eq!((r.overall.count, r.overall.total), (0, 1));
        assert_eq!(r.per_category[&A].total, 1);
        preds.insert("zz".to_string(), B);
        assert_eq!(
            category_accuracy(&preds, &corpus, AgreementFilter::MatchAny),
            Err(MetricsError::UnknownStatementId("zz".into()))
        );
    }

    #[test]
    fn routing_counts() {
        let r = routing_share(&[(E, RouteKind::UserQuery), (E, RouteKind::UserQuery)]);
        assert_eq!(r.per_category[&E].percent, 100.0);
        let r = routing_share(&[(MissingInfoCategory::F, RouteKind::UserQuery), (MissingInfoCategory::F, RouteKind::WebRetrieval)]);
        assert_eq!(r.per_category[&MissingInfoCategory::F].percent, 50.0);
        assert_eq!(routing_share(&[]).overall, None);
    }

    #[test]
    fn agreement() {
        let mut a = BTreeMap::new();
        let mut b = BTreeMap::new();
        for i in 0..50 {
            a.insert(format!("q{i}"), true);
            b.insert(format!("q{i}"), i >= 9);
        }
        assert_eq!(pairwise_agreement(&a, &b).unwrap(), 82.0);
        assert_eq!(pairwise_agreement(&a, &a).unwrap(), 100.0);
        let c: BTreeMap<String, bool> = [("x".to_string(), true)].into_iter().collect();
        assert_eq!(pairwise_agreement(&a, &c), Err(MetricsError::NoOverlap));
    }

    #[test]
    fn table_layout() {
        let r = MetricsReport::compute(&[Z, O, H], &[F, T, F], AbstainPolicy::AbstainAsError, 0).unwrap();
        let t = render_metrics_table(&[("Category-based QA", &r)]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("Experiment"));
        assert!(lines[2].contains("66.67"));
        assert!(lines[2].ends_with("66.67"));
    }
}
