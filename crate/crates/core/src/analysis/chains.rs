use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{derive_state, AnalysisError, UnderstandingState, UnificationMode};
use crate::annotation::AnnotationRecord;
use crate::corpus::{Corpus, Dialogue};
use crate::landmark::{DiscrepancyType, LexicalVariantRegistry, MapPairIndex, MtlmKey};

/// Misunderstanding counts for one discrepancy type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub discrepancy_type: DiscrepancyType,
    pub total_res: usize,
    pub misunderstood: usize,
    /// Percent of `total_res`; 0 for an empty row.
    pub rate_percent: f64,
}

fn classify(
    indices: &BTreeMap<String, MapPairIndex>,
    key: &MtlmKey,
    re_id: &str,
) -> Result<DiscrepancyType, AnalysisError> {
    indices
        .get(&key.map_pair_id)
        .ok_or_else(|| AnalysisError::UnknownMapPair(key.map_pair_id.clone()))?
        .discrepancy(key)
        .ok_or_else(|| AnalysisError::Unclassifiable {
            re_id: re_id.to_string(),
            key: key.clone(),
        })
}

/// The landmark the speaker meant: the first id of the speaker set, or the
/// corpus label when the record carries no speaker landmark.
fn intended_key(record: &AnnotationRecord, corpus_label: Option<&MtlmKey>) -> Option<MtlmKey> {
    match &record.speaker_landmark {
        Some(set) => set.ids().first().map(|id| id.mtlm_key()),
        None => corpus_label.cloned(),
    }
}

/// Rows for all four types, in [`DiscrepancyType::ALL`] order. States are
/// derived in unified mode.
pub fn misunderstanding_by_type(
    records: &[AnnotationRecord],
    corpus: &Corpus,
    indices: &BTreeMap<String, MapPairIndex>,
    registry: &LexicalVariantRegistry,
) -> Result<Vec<TypeRow>, AnalysisError> {
    let re_map = corpus.re_map();
    let mut rows: BTreeMap<DiscrepancyType, (usize, usize)> =
        DiscrepancyType::ALL.iter().map(|t| (*t, (0, 0))).collect();
    for record in records {
        let label = re_map.get(record.re_id.as_str()).map(|(_, re)| &re.original_mtlm);
        let key = intended_key(record, label).ok_or_else(|| AnalysisError::UnknownRe(record.re_id.clone()))?;
        let kind = classify(indices, &registry.canonical_name(&key), &record.re_id)?;
        let row = rows.get_mut(&kind).expect("all types present");
        row.0 += 1;
        if derive_state(record, registry, UnificationMode::Unified)? == UnderstandingState::Misunderstood {
            row.1 += 1;
        }
    }
    Ok(DiscrepancyType::ALL
        .iter()
        .map(|t| {
            let (total, mis) = rows[t];
            TypeRow {
                discrepancy_type: *t,
                total_res: total,
                misunderstood: mis,
                rate_percent: if total == 0 { 0.0 } else { 100.0 * mis as f64 / total as f64 },
            }
        })
        .collect())
}

/// REs of one dialogue aimed at one canonical landmark name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub dialogue_id: String,
    pub chain_key: MtlmKey,
    /// Ordered by utterance, then by position in the dialogue.
    pub re_ids: Vec<String>,
    /// Unified-mode state of each RE, aligned with `re_ids`.
    pub states: Vec<UnderstandingState>,
    /// Utterance index of each RE, aligned with `re_ids`.
    pub utterances: Vec<u32>,
    pub first_aligned_pos: Option<usize>,
    pub turns_to_ground: Option<u32>,
}

impl ChainRecord {
    pub fn len(&self) -> usize {
        self.re_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re_ids.is_empty()
    }
}

/// Utterance gap between a chain's first RE and its first aligned RE.
pub fn turns_to_ground(chain: &ChainRecord) -> Option<u32> {
    let pos = chain.states.iter().position(|s| s.is_aligned())?;
    Some(chain.utterances[pos] - chain.utterances[0])
}

/// (utterance, unit position) of the RE's first unit.
fn re_positions(dialogue: &Dialogue) -> HashMap<&str, (u32, usize)> {
    let unit_pos: HashMap<&str, usize> =
        dialogue.units.iter().enumerate().map(|(i, u)| (u.unit_id.as_str(), i)).collect();
    let unit_utt: HashMap<&str, u32> = dialogue
        .moves
        .iter()
        .flat_map(|m| m.unit_span.iter().map(move |u| (u.as_str(), m.utterance_index)))
        .collect();
    dialogue
        .res
        .iter()
        .filter_map(|re| {
            let first = re.unit_span.first()?.as_str();
            Some((re.re_id.as_str(), (*unit_utt.get(first)?, *unit_pos.get(first)?)))
        })
        .collect()
}

/// One chain per (dialogue, canonical speaker key). A multi-id speaker set
/// joins the chain of each distinct key it names. Records without a speaker
/// landmark are not part of any chain. Output is sorted by dialogue, key.
pub fn extract_chains(
    records: &[AnnotationRecord],
    corpus: &Corpus,
    registry: &LexicalVariantRegistry,
) -> Result<Vec<ChainRecord>, AnalysisError> {
    let re_map = corpus.re_map();
    let positions: BTreeMap<&str, HashMap<&str, (u32, usize)>> =
        corpus.dialogues.iter().map(|(id, d)| (id.as_str(), re_positions(d))).collect();

    type Entry = (u32, usize, String, UnderstandingState);
    let mut groups: BTreeMap<(String, MtlmKey), Vec<Entry>> = BTreeMap::new();
    for record in records {
        let Some(set) = &record.speaker_landmark else { continue };
        let (dialogue, _) = re_map
            .get(record.re_id.as_str())
            .ok_or_else(|| AnalysisError::UnknownRe(record.re_id.clone()))?;
        let &(utt, pos) = positions[dialogue.dialogue_id.as_str()]
            .get(record.re_id.as_str())
            .ok_or_else(|| AnalysisError::UnknownRe(record.re_id.clone()))?;
        let state = derive_state(record, registry, UnificationMode::Unified)?;
        let keys: BTreeSet<MtlmKey> = set.ids().iter().map(|id| registry.canonical_name(&id.mtlm_key())).collect();
        for key in keys {
            groups
                .entry((dialogue.dialogue_id.clone(), key))
                .or_default()
                .push((utt, pos, record.re_id.clone(), state));
        }
    }

    Ok(groups
        .into_iter()
        .map(|((dialogue_id, chain_key), mut entries)| {
            entries.sort_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));
            let mut chain = ChainRecord {
                dialogue_id,
                chain_key,
                utterances: entries.iter().map(|e| e.0).collect(),
                states: entries.iter().map(|e| e.3).collect(),
                re_ids: entries.into_iter().map(|e| e.2).collect(),
                first_aligned_pos: None,
                turns_to_ground: None,
            };
            chain.first_aligned_pos = chain.states.iter().position(|s| s.is_aligned());
            chain.turns_to_ground = turns_to_ground(&chain);
            chain
        })
        .collect())
}

/// Length statistics of the chains of one discrepancy type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStatsRow {
    pub discrepancy_type: DiscrepancyType,
    pub chains: usize,
    pub mean_length: f64,
    pub max_length: usize,
    /// Mean of the two middle lengths when the count is even.
    pub median_length: f64,
}

fn chain_types(
    chains: &[ChainRecord],
    indices: &BTreeMap<String, MapPairIndex>,
) -> Result<Vec<DiscrepancyType>, AnalysisError> {
    chains
        .iter()
        .map(|c| classify(indices, &c.chain_key, c.re_ids.first().map(String::as_str).unwrap_or("")))
        .collect()
}

/// Rows for all four types, in [`DiscrepancyType::ALL`] order.
pub fn chain_stats(
    chains: &[ChainRecord],
    indices: &BTreeMap<String, MapPairIndex>,
) -> Result<Vec<ChainStatsRow>, AnalysisError> {
    let types = chain_types(chains, indices)?;
    let mut lengths: BTreeMap<DiscrepancyType, Vec<usize>> = BTreeMap::new();
    for (c, t) in chains.iter().zip(types) {
        lengths.entry(t).or_default().push(c.len());
    }
    Ok(DiscrepancyType::ALL
        .iter()
        .map(|t| {
            let mut ls = lengths.remove(t).unwrap_or_default();
            ls.sort_unstable();
            let n = ls.len();
            let median = match n {
                0 => 0.0,
                _ if n % 2 == 1 => ls[n / 2] as f64,
                _ => (ls[n / 2 - 1] + ls[n / 2]) as f64 / 2.0,
            };
            ChainStatsRow {
                discrepancy_type: *t,
                chains: n,
                mean_length: if n == 0 { 0.0 } else { ls.iter().sum::<usize>() as f64 / n as f64 },
                max_length: ls.last().copied().unwrap_or(0),
                median_length: median,
            }
        })
        .collect())
}

/// Empirical CDF of turns-to-ground over grounded chains, per type. Each
/// point is (turns, fraction of grounded chains with at most that many).
/// Types without a grounded chain are omitted.
pub fn ttg_cdf(
    chains: &[ChainRecord],
    indices: &BTreeMap<String, MapPairIndex>,
) -> Result<BTreeMap<DiscrepancyType, Vec<(u32, f64)>>, AnalysisError> {
    let types = chain_types(chains, indices)?;
    let mut turns: BTreeMap<DiscrepancyType, Vec<u32>> = BTreeMap::new();
    for (c, t) in chains.iter().zip(types) {
        if let Some(ttg) = c.turns_to_ground {
            turns.entry(t).or_default().push(ttg);
        }
    }
    Ok(turns.into_iter().map(|(t, v)| (t, cdf_points(v))).collect())
}

fn cdf_points(mut values: Vec<u32>) -> Vec<(u32, f64)> {
    values.sort_unstable();
    let n = values.len() as f64;
    let mut out: Vec<(u32, f64)> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => out.push((*v, frac)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::PendingReason;
    use crate::annotation::test_support::record;
    use crate::annotation::AttributeCascade;
    use crate::corpus::test_support::small_corpus;
    use crate::landmark::assign_unified_ids;

    const GROUNDED: AttributeCascade = AttributeCascade::REACHABLE[4];
    const UNSPEC: AttributeCascade = AttributeCascade::REACHABLE[1];

    fn indices(corpus: &Corpus) -> BTreeMap<String, MapPairIndex> {
        let mut index = assign_unified_ids(&corpus.map_pairs["m0"], 1.0).unwrap();
        index.classify_all(&LexicalVariantRegistry::default()).unwrap();
        BTreeMap::from([("m0".to_string(), index)])
    }

    fn chain(states: &[UnderstandingState], utts: &[u32]) -> ChainRecord {
        ChainRecord {
            dialogue_id: "d".into(),
            chain_key: MtlmKey::new("m0", "barn"),
            re_ids: (0..states.len()).map(|i| format!("r{i}")).collect(),
            states: states.to_vec(),
            utterances: utts.to_vec(),
            first_aligned_pos: None,
            turns_to_ground: None,
        }
    }

    #[test]
    fn ttg_cases() {
        use UnderstandingState::*;
        let p = Pending(PendingReason::NotGrounded);
        assert_eq!(turns_to_ground(&chain(&[Aligned, p], &[3, 5])), Some(0));
        assert_eq!(turns_to_ground(&chain(&[p, Misunderstood, Aligned], &[4, 6, 9])), Some(5));
        assert_eq!(turns_to_ground(&chain(&[p, Misunderstood], &[4, 6])), None);
    }

    #[test]
    fn cdf_arithmetic() {
        assert_eq!(cdf_points(vec![5, 2, 0, 2]), vec![(0, 0.25), (2, 0.75), (5, 1.0)]);
        assert_eq!(cdf_points(vec![0, 0, 0]), vec![(0, 1.0)]);
    }

    #[test]
    fn stats_arithmetic() {
        let corpus = small_corpus();
        let idx = indices(&corpus);
        let a = chain(&[UnderstandingState::Aligned; 2], &[1, 2]);
        let b = chain(&[UnderstandingState::Aligned; 4], &[1, 2, 3, 4]);
        let rows = chain_stats(&[a, b], &idx).unwrap();
        let identical = rows.iter().find(|r| r.discrepancy_type == DiscrepancyType::Identical).unwrap();
        assert_eq!((identical.chains, identical.mean_length, identical.max_length, identical.median_length), (2, 3.0, 4, 3.0));
        assert_eq!(rows.iter().map(|r| r.chains).sum::<usize>(), 2);
    }

    #[test]
    fn single_re_gives_one_chain() {
        let corpus = small_corpus();
        let recs = vec![record("re2", GROUNDED, "m0_barn#0@g", "m0_barn#0@f")];
        let chains = extract_chains(&recs, &corpus, &LexicalVariantRegistry::default()).unwrap();
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0].re_ids, ["re2"]);
        assert_eq!(chains[0].turns_to_ground, Some(0));
    }

    /// re2 (utt 3) and re3 (utt 4) both target the barn; re3 is aligned.
    #[test]
    fn chain_orders_by_utterance_and_grounds_late() {
        let corpus = small_corpus();
        let recs = vec![
            record("re3", GROUNDED, "m0_barn#0@f", "m0_barn#0@g"),
            record("re2", UNSPEC, "m0_barn#0@g", ""),
            record("re1", GROUNDED, "m0_parked_van#0@g", "m0_parked_van#1@f"),
        ];
        let chains = extract_chains(&recs, &corpus, &LexicalVariantRegistry::default()).unwrap();
        assert_eq!(chains.len(), 2);
        let barn = chains.iter().find(|c| c.chain_key.name == "barn").unwrap();
        assert_eq!(barn.re_ids, ["re2", "re3"]);
        assert_eq!(barn.first_aligned_pos, Some(1));
        assert_eq!(barn.turns_to_ground, Some(1));
        let van = chains.iter().find(|c| c.chain_key.name == "parked_van").unwrap();
        assert_eq!(van.states, [UnderstandingState::Misunderstood]);
        assert_eq!(van.turns_to_ground, None);
    }

    #[test]
    fn multi_id_set_fans_out() {
        let corpus = small_corpus();
        let recs = vec![record("re2", GROUNDED, "m0_barn#0@g+m0_parked_van#1@g", "m0_barn#0@f+m0_parked_van#1@f")];
        let chains = extract_chains(&recs, &corpus, &LexicalVariantRegistry::default()).unwrap();
        assert_eq!(chains.len(), 2);
        // Two instances of one name count once.
        let recs = vec![record("re1", GROUNDED, "m0_parked_van#0@g+m0_parked_van#1@g", "m0_parked_van#1@f")];
        assert_eq!(extract_chains(&recs, &corpus, &LexicalVariantRegistry::default()).unwrap().len(), 1);
    }

    #[test]
    fn only_multiplicity_misunderstood() {
        let corpus = small_corpus();
        let idx = indices(&corpus);
        let recs = vec![
            record("re1", GROUNDED, "m0_parked_van#0@g", "m0_parked_van#1@f"),
            record("re2", GROUNDED, "m0_barn#0@g", "m0_barn#0@f"),
            record("re3", GROUNDED, "m0_barn#0@f", "m0_barn#0@g"),
        ];
        let rows = misunderstanding_by_type(&recs, &corpus, &idx, &LexicalVariantRegistry::default()).unwrap();
        for row in rows {
            match row.discrepancy_type {
                DiscrepancyType::Multiplicity => assert_eq!((row.total_res, row.misunderstood, row.rate_percent), (1, 1, 100.0)),
                DiscrepancyType::Identical => assert_eq!((row.total_res, row.rate_percent), (2, 0.0)),
                _ => assert_eq!(row.total_res, 0),
            }
        }
    }

    #[test]
    fn unclassifiable_key_is_an_error() {
        let corpus = small_corpus();
        let idx = indices(&corpus);
        let recs = vec![record("re2", GROUNDED, "m0_windmill#0@g", "m0_windmill#0@f")];
        assert!(matches!(
            misunderstanding_by_type(&recs, &corpus, &idx, &LexicalVariantRegistry::default()),
            Err(AnalysisError::Unclassifiable { .. })
        ));
    }
}
