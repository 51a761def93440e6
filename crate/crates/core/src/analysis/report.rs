use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chains::{chain_stats, extract_chains, misunderstanding_by_type, ttg_cdf, ChainRecord, ChainStatsRow, TypeRow};
use super::{derive_state, distribution, AnalysisError, PendingReason, StateDistribution, UnderstandingState, UnificationMode};
use crate::annotation::AnnotationRecord;
use crate::corpus::Corpus;
use crate::landmark::{DiscrepancyType, LexicalVariantRegistry, MapPairIndex};

/// Files written by [`write_report`], in write order.
pub const REPORT_FILES: [&str; 5] = ["states.csv", "by_type.csv", "chains.csv", "ttg_cdf.csv", "summary.json"];

/// A computed figure next to the values it is expected to take on the full
/// annotation release. Two expected values mean the sources disagree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub name: String,
    pub computed: usize,
    pub expected: Vec<usize>,
    pub matches: bool,
}

impl ReferenceCheck {
    fn new(name: &str, computed: usize, expected: &[usize]) -> Self {
        Self {
            name: name.into(),
            computed,
            expected: expected.to_vec(),
            matches: expected.contains(&computed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Consistency {
    /// Pending counts agree between modes, reason by reason.
    pub pending_identical: bool,
    /// aligned(unified) - aligned(raw) = misunderstood(raw) - misunderstood(unified).
    pub alignment_identity: bool,
    /// No record changes state across modes except misunderstood to aligned.
    pub unification_monotone: bool,
    /// The by-type misunderstanding total equals the unified distribution's.
    pub by_type_total_matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTotals {
    pub chains: usize,
    pub grounded: usize,
    pub never_aligned: usize,
    pub mean_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub records: usize,
    pub consistency: Consistency,
    /// Canonical landmark names per discrepancy type over all map pairs.
    pub landmark_types: BTreeMap<DiscrepancyType, usize>,
    pub chain_totals: ChainTotals,
    pub chain_stats: Vec<ChainStatsRow>,
    pub reference_checks: Vec<ReferenceCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub raw: StateDistribution,
    pub unified: StateDistribution,
    pub by_type: Vec<TypeRow>,
    pub chains: Vec<ChainRecord>,
    pub ttg_cdf: BTreeMap<DiscrepancyType, Vec<(u32, f64)>>,
    pub summary: Summary,
}

/// Runs every analysis over one record set. The result does not depend on
/// record order.
pub fn analyze(
    records: &[AnnotationRecord],
    corpus: &Corpus,
    indices: &BTreeMap<String, MapPairIndex>,
    registry: &LexicalVariantRegistry,
) -> Result<AnalysisReport, AnalysisError> {
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(r.re_id.as_str()) {
            return Err(AnalysisError::DuplicateRecord(r.re_id.clone()));
        }
    }
    let raw = distribution(records, registry, UnificationMode::Raw)?;
    let unified = distribution(records, registry, UnificationMode::Unified)?;
    let mut monotone = true;
    for r in records {
        let before = derive_state(r, registry, UnificationMode::Raw)?;
        let after = derive_state(r, registry, UnificationMode::Unified)?;
        monotone &= before == after
            || (before == UnderstandingState::Misunderstood && after == UnderstandingState::Aligned);
    }
    let by_type = misunderstanding_by_type(records, corpus, indices, registry)?;
    let chains = extract_chains(records, corpus, registry)?;
    let stats = chain_stats(&chains, indices)?;
    let cdf = ttg_cdf(&chains, indices)?;

    let mut landmark_types: BTreeMap<DiscrepancyType, usize> = DiscrepancyType::ALL.iter().map(|t| (*t, 0)).collect();
    for index in indices.values() {
        let canonical: BTreeMap<_, _> = index
            .discrepancies()
            .iter()
            .map(|(k, t)| (registry.canonical_name(k), *t))
            .collect();
        for t in canonical.values() {
            *landmark_types.entry(*t).or_insert(0) += 1;
        }
    }

    let grounded = chains.iter().filter(|c| c.turns_to_ground.is_some()).count();
    let total_len: usize = chains.iter().map(ChainRecord::len).sum();
    let by_type_mis: usize = by_type.iter().map(|r| r.misunderstood).sum();
    let consistency = Consistency {
        pending_identical: raw.pending_by_reason == unified.pending_by_reason,
        alignment_identity: unified.aligned as i64 - raw.aligned as i64
            == raw.misunderstood as i64 - unified.misunderstood as i64,
        unification_monotone: monotone,
        by_type_total_matches: by_type_mis == unified.misunderstood,
    };
    let summary = Summary {
        records: records.len(),
        consistency,
        reference_checks: vec![
            ReferenceCheck::new("existence_landmarks", landmark_types[&DiscrepancyType::Existence], &[99, 100]),
            ReferenceCheck::new("misunderstood_unified", unified.misunderstood, &[226, 239]),
        ],
        landmark_types,
        chain_totals: ChainTotals {
            chains: chains.len(),
            grounded,
            never_aligned: chains.len() - grounded,
            mean_length: if chains.is_empty() { 0.0 } else { total_len as f64 / chains.len() as f64 },
        },
        chain_stats: stats,
    };
    Ok(AnalysisReport {
        raw,
        unified,
        by_type,
        chains,
        ttg_cdf: cdf,
        summary,
    })
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

impl AnalysisReport {
    /// Misunderstood percentages keep two decimals, all others one.
    pub fn states_csv(&self) -> String {
        let mut rows = Vec::new();
        for d in [&self.raw, &self.unified] {
            let mode = d.mode.as_str().to_string();
            let pct1 = |c| format!("{:.1}", d.percent(c));
            rows.push(vec![mode.clone(), "aligned".into(), d.aligned.to_string(), pct1(d.aligned)]);
            rows.push(vec![mode.clone(), "pending".into(), d.pending.to_string(), pct1(d.pending)]);
            for r in PendingReason::ALL {
                let c = d.count(UnderstandingState::Pending(r));
                rows.push(vec![mode.clone(), format!("pending:{}", r.as_str()), c.to_string(), pct1(c)]);
            }
            rows.push(vec![
                mode.clone(),
                "misunderstood".into(),
                d.misunderstood.to_string(),
                format!("{:.2}", d.percent(d.misunderstood)),
            ]);
            rows.push(vec![mode, "total".into(), d.total.to_string(), pct1(d.total)]);
        }
        csv_string(&["mode", "state", "count", "percent"], rows)
    }

    pub fn by_type_csv(&self) -> String {
        let mut rows: Vec<Vec<String>> = self
            .by_type
            .iter()
            .map(|r| {
                vec![
                    r.discrepancy_type.to_string(),
                    r.total_res.to_string(),
                    r.misunderstood.to_string(),
                    format!("{:.1}", r.rate_percent),
                ]
            })
            .collect();
        let total: usize = self.by_type.iter().map(|r| r.total_res).sum();
        let mis: usize = self.by_type.iter().map(|r| r.misunderstood).sum();
        let rate = if total == 0 { 0.0 } else { 100.0 * mis as f64 / total as f64 };
        rows.push(vec!["total".into(), total.to_string(), mis.to_string(), format!("{rate:.1}")]);
        csv_string(&["discrepancy_type", "total_res", "misunderstood", "rate_percent"], rows)
    }

    pub fn chains_csv(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let rows = self.chains.iter().map(|c| {
            vec![
                c.dialogue_id.clone(),
                c.chain_key.to_string(),
                c.len().to_string(),
                c.re_ids.join(" "),
                c.states.iter().map(ToString::to_string).collect::<Vec<_>>().join(" "),
                opt(c.first_aligned_pos.map(|p| p.to_string())),
                opt(c.turns_to_ground.map(|t| t.to_string())),
            ]
        });
        csv_string(
            &["dialogue_id", "chain_key", "length", "re_ids", "states", "first_aligned_pos", "turns_to_ground"],
            rows,
        )
    }

    pub fn ttg_cdf_csv(&self) -> String {
        let rows = self.ttg_cdf.iter().flat_map(|(t, points)| {
            points
                .iter()
                .map(move |(turns, frac)| vec![t.to_string(), turns.to_string(), format!("{frac:.4}")])
        });
        csv_string(&["discrepancy_type", "turns", "cumulative_fraction"], rows)
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }
}

/// Writes the five report files into `dir`, creating it if needed.
pub fn write_report(report: &AnalysisReport, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let contents = [
        report.states_csv(),
        report.by_type_csv(),
        report.chains_csv(),
        report.ttg_cdf_csv(),
        report.summary_json(),
    ];
    for (name, body) in REPORT_FILES.iter().zip(contents) {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::test_support::record;
    use crate::annotation::AttributeCascade;
    use crate::corpus::test_support::small_corpus;
    use crate::landmark::assign_unified_ids;

    fn setup() -> (Corpus, BTreeMap<String, MapPairIndex>) {
        let corpus = small_corpus();
        let mut index = assign_unified_ids(&corpus.map_pairs["m0"], 1.0).unwrap();
        index.classify_all(&LexicalVariantRegistry::default()).unwrap();
        (corpus, BTreeMap::from([("m0".to_string(), index)]))
    }

    fn records() -> Vec<AnnotationRecord> {
        vec![
            record("re1", AttributeCascade::REACHABLE[4], "m0_parked_van#0@g", "m0_parked_van#1@f"),
            record("re2", AttributeCascade::REACHABLE[1], "m0_barn#0@g", ""),
            record("re3", AttributeCascade::REACHABLE[4], "m0_barn#0@f", "m0_barn#0@g"),
        ]
    }

    #[test]
    fn report_bundle() {
        let (corpus, idx) = setup();
        let reg = LexicalVariantRegistry::default();
        let report = analyze(&records(), &corpus, &idx, &reg).unwrap();
        let c = &report.summary.consistency;
        assert!(c.pending_identical && c.alignment_identity && c.unification_monotone && c.by_type_total_matches);
        assert_eq!(report.summary.chain_totals.chains, 2);
        assert_eq!(report.summary.chain_totals.never_aligned, 1);
        assert_eq!(report.summary.landmark_types[&DiscrepancyType::Multiplicity], 1);
        let states = report.states_csv();
        assert!(states.starts_with("mode,state,count,percent\n"));
        assert!(states.contains("raw,misunderstood,1,33.33\n"));
        assert!(states.contains("unified,pending:unspecified,1,33.3\n"));
        let by_type = report.by_type_csv();
        assert!(by_type.contains("multiplicity,1,1,100.0\n"));
        assert!(by_type.ends_with("total,3,1,33.3\n"));
        assert_eq!(report.ttg_cdf_csv(), "discrepancy_type,turns,cumulative_fraction\nidentical,1,1.0000\n");
        assert!(report.chains_csv().contains("d1,m0_barn,2,re2 re3,pending:unspecified aligned,1,1\n"));

        let dir = tempfile::tempdir().unwrap();
        write_report(&report, dir.path()).unwrap();
        for f in REPORT_FILES {
            assert!(dir.path().join(f).is_file());
        }
    }

    #[test]
    fn record_order_does_not_matter() {
        let (corpus, idx) = setup();
        let reg = LexicalVariantRegistry::default();
        let a = analyze(&records(), &corpus, &idx, &reg).unwrap();
        let mut rev = records();
        rev.reverse();
        let b = analyze(&rev, &corpus, &idx, &reg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.states_csv(), b.states_csv());
    }

    #[test]
    fn duplicate_record_rejected() {
        let (corpus, idx) = setup();
        let mut recs = records();
        recs.push(recs[0].clone());
        assert!(matches!(
            analyze(&recs, &corpus, &idx, &LexicalVariantRegistry::default()),
            Err(AnalysisError::DuplicateRecord(_))
        ));
    }
}
