//! Scoring machine annotations against human gold.
//!
//! Every denominator comes from gold: an attribute is scored on the REs
//! where the gold cascade makes it applicable, whatever the machine said.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{side_neutral_key, KeyElement, UnificationMode};
use crate::annotation::{AnnotationRecord, Attribute};
use crate::landmark::{LandmarkRefSet, LexicalVariantRegistry};

/// A human-adjudicated record: the machine record shape plus provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    #[serde(flatten)]
    pub record: AnnotationRecord,
    pub annotator_id: String,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("re_id {0} has a machine record but no gold record")]
    MachineOnly(String),
    #[error("re_id {0} has a gold record but no machine record")]
    GoldOnly(String),
    #[error("re_id {0} appears more than once in the {1} set")]
    Duplicate(String, &'static str),
}

/// Which value of a boolean attribute counts as the positive class for F1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositiveClass {
    #[default]
    True,
    False,
}

impl PositiveClass {
    fn value(self) -> bool {
        self == PositiveClass::True
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMetrics {
    pub attribute: Attribute,
    /// Gold records for which the attribute is applicable.
    pub n: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub error_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReLevelErrors {
    pub total_res: usize,
    pub res_with_error: usize,
    pub total_attribute_errors: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfScores {
    /// Empty denominators score 1.0: nothing predicted, nothing missed.
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        Self {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
        }
    }
}

/// Landmark agreement on REs the gold marks as grounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundedIdMetrics {
    pub n: usize,
    /// Share of REs whose addressee sets are equal modulo side.
    pub accuracy: f64,
    /// Micro scores over the individual ids of each set.
    pub element_micro: PrfScores,
    /// Micro scores treating each RE's whole set as one label.
    pub set_label_micro: PrfScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub positive_class: PositiveClass,
    pub attributes: Vec<AttributeMetrics>,
    pub re_level: ReLevelErrors,
    pub grounded_id: GroundedIdMetrics,
}

type Paired<'a> = Vec<(&'a AnnotationRecord, &'a AnnotationRecord)>;

/// Pairs machine and gold records by re_id, in re_id order.
pub fn pair_records<'a>(machine: &'a [AnnotationRecord], gold: &'a [AnnotationRecord]) -> Result<Paired<'a>, EvalError> {
    fn by_id<'a>(
        records: &'a [AnnotationRecord],
        which: &'static str,
    ) -> Result<BTreeMap<&'a str, &'a AnnotationRecord>, EvalError> {
        let mut out = BTreeMap::new();
        for r in records {
            if out.insert(r.re_id.as_str(), r).is_some() {
                return Err(EvalError::Duplicate(r.re_id.clone(), which));
            }
        }
        Ok(out)
    }
    let m = by_id(machine, "machine")?;
    let g = by_id(gold, "gold")?;
    if let Some(id) = m.keys().find(|id| !g.contains_key(*id)) {
        return Err(EvalError::MachineOnly(id.to_string()));
    }
    if let Some(id) = g.keys().find(|id| !m.contains_key(*id)) {
        return Err(EvalError::GoldOnly(id.to_string()));
    }
    Ok(g.into_iter().map(|(id, gr)| (m[id], gr)).collect())
}

/// Attributes gold makes applicable on which the machine disagrees. An
/// absent machine value is a disagreement.
fn attribute_errors(machine: &AnnotationRecord, gold: &AnnotationRecord) -> Vec<Attribute> {
    Attribute::ALL
        .into_iter()
        .filter(|a| {
            let g = gold.cascade.get(*a);
            g.is_some() && machine.cascade.get(*a) != g
        })
        .collect()
}

pub fn attribute_metrics(
    machine: &[AnnotationRecord],
    gold: &[AnnotationRecord],
    positive: PositiveClass,
) -> Result<Vec<AttributeMetrics>, EvalError> {
    let pairs = pair_records(machine, gold)?;
    let pos = positive.value();
    Ok(Attribute::ALL
        .into_iter()
        .map(|a| {
            let (mut n, mut matches, mut tp, mut fp, mut fn_) = (0, 0, 0, 0, 0);
            for (m, g) in &pairs {
                let Some(gv) = g.cascade.get(a) else { continue };
                let mv = m.cascade.get(a);
                n += 1;
                if mv == Some(gv) {
                    matches += 1;
                }
                match (mv == Some(pos), gv == pos) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            AttributeMetrics {
                attribute: a,
                n,
                accuracy: if n == 0 { 1.0 } else { matches as f64 / n as f64 },
                f1: PrfScores::from_counts(tp, fp, fn_).f1,
                error_count: n - matches,
            }
        })
        .collect())
}

pub fn re_level_errors(machine: &[AnnotationRecord], gold: &[AnnotationRecord]) -> Result<ReLevelErrors, EvalError> {
    let pairs = pair_records(machine, gold)?;
    let mut out = ReLevelErrors {
        total_res: pairs.len(),
        res_with_error: 0,
        total_attribute_errors: 0,
    };
    for (m, g) in pairs {
        let errors = attribute_errors(m, g).len();
        out.total_attribute_errors += errors;
        out.res_with_error += usize::from(errors > 0);
    }
    Ok(out)
}

fn neutral(set: Option<&LandmarkRefSet>, registry: &LexicalVariantRegistry) -> BTreeSet<KeyElement> {
    set.map(|s| side_neutral_key(s, registry, UnificationMode::Raw)).unwrap_or_default()
}

/// Compares addressee sets on the REs gold marks as grounded. Sets are
/// compared side-neutrally and without lexical unification.
pub fn grounded_id_metrics(
    machine: &[AnnotationRecord],
    gold: &[AnnotationRecord],
    registry: &LexicalVariantRegistry,
) -> Result<GroundedIdMetrics, EvalError> {
    let pairs = pair_records(machine, gold)?;
    let (mut n, mut exact) = (0, 0);
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let (mut set_fp, mut set_fn) = (0, 0);
    for (m, g) in pairs {
        if g.cascade.is_grounded != Some(true) {
            continue;
        }
        n += 1;
        let gs = neutral(g.addressee_landmark.as_ref(), registry);
        let ms = neutral(m.addressee_landmark.as_ref(), registry);
        tp += gs.intersection(&ms).count();
        fp += ms.difference(&gs).count();
        fn_ += gs.difference(&ms).count();
        if gs == ms {
            exact += 1;
        } else {
            set_fn += 1;
            set_fp += usize::from(!ms.is_empty());
        }
    }
    Ok(GroundedIdMetrics {
        n,
        accuracy: if n == 0 { 1.0 } else { exact as f64 / n as f64 },
        element_micro: PrfScores::from_counts(tp, fp, fn_),
        set_label_micro: PrfScores::from_counts(exact, set_fp, set_fn),
    })
}

pub fn evaluate(
    machine: &[AnnotationRecord],
    gold: &[AnnotationRecord],
    registry: &LexicalVariantRegistry,
    positive: PositiveClass,
) -> Result<EvalReport, EvalError> {
    Ok(EvalReport {
        positive_class: positive,
        attributes: attribute_metrics(machine, gold, positive)?,
        re_level: re_level_errors(machine, gold)?,
        grounded_id: grounded_id_metrics(machine, gold, registry)?,
    })
}

/// One field on which two records differ, rendered as JSON values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub field: String,
    pub machine: serde_json::Value,
    pub gold: serde_json::Value,
}

/// Every record field except `re_id` and `reason` that differs, in record
/// field order. Landmark sets compare as written, so a side change shows.
pub fn field_diff(machine: &AnnotationRecord, gold: &AnnotationRecord) -> Vec<FieldDiff> {
    let to_map = |r: &AnnotationRecord| match serde_json::to_value(r).expect("record serializes") {
        serde_json::Value::Object(m) => m,
        _ => unreachable!("records serialize as objects"),
    };
    let (m, g) = (to_map(machine), to_map(gold));
    const FIELDS: [&str; 9] = [
        "speaker",
        "addressee",
        "speaker_landmark",
        "is_quantificational",
        "is_specified",
        "is_accommodated",
        "is_grounded",
        "is_imagined",
        "addressee_landmark",
    ];
    FIELDS
        .iter()
        .filter(|f| m.get(**f) != g.get(**f))
        .map(|f| FieldDiff {
            field: f.to_string(),
            machine: m.get(*f).cloned().unwrap_or_default(),
            gold: g.get(*f).cloned().unwrap_or_default(),
        })
        .collect()
}

/// `re_id,field,machine,gold` rows for every disagreement, by re_id.
pub fn disagreements_csv(machine: &[AnnotationRecord], gold: &[AnnotationRecord]) -> Result<String, EvalError> {
    let pairs = pair_records(machine, gold)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["re_id", "field", "machine", "gold"]).expect("in-memory write");
    for (m, g) in pairs {
        for d in field_diff(m, g) {
            w.write_record([g.re_id.as_str(), &d.field, &d.machine.to_string(), &d.gold.to_string()])
                .expect("in-memory write");
        }
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"))
}
