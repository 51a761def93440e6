use std::collections::{BTreeMap, HashMap, HashSet};

use super::{Corpus, CorpusDiagnostic, Dialogue, Locus};
use crate::landmark::is_valid_name;

/// Checks every structural invariant of a corpus. An empty result means the
/// corpus is well formed.
pub fn validate_corpus(corpus: &Corpus) -> Vec<CorpusDiagnostic> {
    let mut out = Vec::new();
    let mut seen_res: HashSet<&str> = HashSet::new();
    for (key, dialogue) in &corpus.dialogues {
        if key != &dialogue.dialogue_id {
            out.push(CorpusDiagnostic::error(
                Locus::entity("dialogue", key.clone()),
                format!("keyed as `{key}` but carries id `{}`", dialogue.dialogue_id),
            ));
        }
        if !corpus.map_pairs.contains_key(&dialogue.map_pair_id) {
            out.push(CorpusDiagnostic::error(
                Locus::entity("dialogue", dialogue.dialogue_id.clone()),
                format!("map pair `{}` has no landmark inventory", dialogue.map_pair_id),
            ));
        }
        validate_dialogue(corpus, dialogue, &mut seen_res, &mut out);
    }
    validate_landmarks(corpus, &mut out);
    out
}

fn validate_dialogue<'a>(
    corpus: &Corpus,
    d: &'a Dialogue,
    seen_res: &mut HashSet<&'a str>,
    out: &mut Vec<CorpusDiagnostic>,
) {
    let did = d.dialogue_id.as_str();

    // units
    let mut unit_pos: HashMap<&str, usize> = HashMap::new();
    for (i, u) in d.units.iter().enumerate() {
        let locus = || Locus::entity("unit", format!("{did}/{}", u.unit_id));
        if unit_pos.insert(u.unit_id.as_str(), i).is_some() {
            out.push(CorpusDiagnostic::error(locus(), "duplicate unit id"));
        }
        if u.dialogue_id != did {
            out.push(CorpusDiagnostic::error(locus(), format!("belongs to dialogue `{}`", u.dialogue_id)));
        }
        if !(u.start_s >= 0.0 && u.end_s >= u.start_s) {
            out.push(CorpusDiagnostic::error(
                locus(),
                format!("invalid timing {}..{}", u.start_s, u.end_s),
            ));
        }
    }

    if d
        .units
        .windows(2)
        .any(|w| (w[0].start_s, &w[0].unit_id).partial_cmp(&(w[1].start_s, &w[1].unit_id)) != Some(std::cmp::Ordering::Less))
    {
        out.push(CorpusDiagnostic::error(
            Locus::entity("dialogue", did),
            "units are not ordered by (start_s, unit_id)",
        ));
    }

    // moves
    let mut move_ids: HashMap<&str, usize> = HashMap::new();
    let mut unit_move: HashMap<&str, &str> = HashMap::new();
    for mv in &d.moves {
        let locus = || Locus::entity("move", format!("{did}/{}", mv.move_id));
        if move_ids.insert(mv.move_id.as_str(), 0).is_some() {
            out.push(CorpusDiagnostic::error(locus(), "duplicate move id"));
        }
        if mv.dialogue_id != did {
            out.push(CorpusDiagnostic::error(locus(), format!("belongs to dialogue `{}`", mv.dialogue_id)));
        }
        if mv.utterance_index == 0 {
            out.push(CorpusDiagnostic::error(locus(), "utterance index must start at 1"));
        }
        if mv.unit_span.is_empty() {
            out.push(CorpusDiagnostic::error(locus(), "empty unit span"));
        }
        for u in &mv.unit_span {
            if !unit_pos.contains_key(u.as_str()) {
                out.push(CorpusDiagnostic::error(locus(), format!("unknown unit `{u}`")));
            } else if let Some(other) = unit_move.insert(u.as_str(), mv.move_id.as_str()) {
                out.push(CorpusDiagnostic::error(
                    locus(),
                    format!("unit `{u}` already belongs to move `{other}`"),
                ));
            }
        }
    }

    // utterance indices strictly increase in time order of each move's first unit
    let mut timed: Vec<(usize, &super::DialogueMove)> = d
        .moves
        .iter()
        .filter_map(|m| m.unit_span.first().and_then(|u| unit_pos.get(u.as_str())).map(|&p| (p, m)))
        .collect();
    timed.sort_by_key(|(p, _)| *p);
    for w in timed.windows(2) {
        let (prev, mv) = (w[0].1, w[1].1);
        if mv.utterance_index <= prev.utterance_index {
            out.push(CorpusDiagnostic::error(
                Locus::entity("move", format!("{did}/{}", mv.move_id)),
                format!(
                    "utterance index {} does not follow {} of move `{}`",
                    mv.utterance_index, prev.utterance_index, prev.move_id
                ),
            ));
        }
    }

    // transactions
    let mut move_tx: HashMap<&str, u32> = HashMap::new();
    for (expected, t) in d.transactions.iter().enumerate() {
        let locus = || Locus::entity("transaction", format!("{did}/{}", t.transaction_index));
        if t.transaction_index as usize != expected {
            out.push(CorpusDiagnostic::error(
                locus(),
                format!("transaction indices must be contiguous from 0; expected {expected}"),
            ));
        }
        if t.dialogue_id != did {
            out.push(CorpusDiagnostic::error(locus(), format!("belongs to dialogue `{}`", t.dialogue_id)));
        }
        for m in &t.move_ids {
            if !move_ids.contains_key(m.as_str()) {
                out.push(CorpusDiagnostic::error(locus(), format!("unknown move `{m}`")));
            } else if let Some(prev) = move_tx.insert(m.as_str(), t.transaction_index) {
                out.push(CorpusDiagnostic::error(
                    locus(),
                    format!("move `{m}` already in transaction {prev}"),
                ));
            }
        }
    }
    for mv in &d.moves {
        if !move_tx.contains_key(mv.move_id.as_str()) {
            out.push(CorpusDiagnostic::error(
                Locus::entity("move", format!("{did}/{}", mv.move_id)),
                "move belongs to no transaction",
            ));
        }
    }

    // reference expressions
    let unit_tx = |u: &str| unit_move.get(u).and_then(|m| move_tx.get(m)).copied();
    for re in &d.res {
        let locus = || Locus::entity("re", re.re_id.clone());
        if !seen_res.insert(re.re_id.as_str()) {
            out.push(CorpusDiagnostic::error(locus(), "duplicate RE id"));
        }
        if re.dialogue_id != did {
            out.push(CorpusDiagnostic::error(locus(), format!("belongs to dialogue `{}`", re.dialogue_id)));
        }
        if re.original_mtlm.map_pair_id != d.map_pair_id {
            out.push(CorpusDiagnostic::error(
                locus(),
                format!("landmark `{}` is not on map pair `{}`", re.original_mtlm, d.map_pair_id),
            ));
        } else if let Some(inventory) = corpus.map_pairs.get(&d.map_pair_id) {
            if !inventory.iter().any(|lm| lm.name == re.original_mtlm.name) {
                out.push(CorpusDiagnostic::warning(
                    locus(),
                    format!("landmark `{}` is on neither map", re.original_mtlm),
                ));
            }
        }
        if re.unit_span.is_empty() {
            out.push(CorpusDiagnostic::error(locus(), "empty unit span"));
            continue;
        }
        let missing: Vec<&str> = re
            .unit_span
            .iter()
            .map(String::as_str)
            .filter(|u| !unit_pos.contains_key(u))
            .collect();
        if !missing.is_empty() {
            out.push(CorpusDiagnostic::error(locus(), format!("unknown units {missing:?}")));
            continue;
        }
        if re.unit_span.iter().any(|u| d.units[unit_pos[u.as_str()]].role != re.role) {
            out.push(CorpusDiagnostic::error(locus(), "span includes units of the other speaker"));
            continue;
        }
        // contiguous within the speaker's own units, in time order
        let own: Vec<usize> = d
            .units
            .iter()
            .enumerate()
            .filter(|(_, u)| u.role == re.role)
            .map(|(i, _)| i)
            .collect();
        let ranks: Vec<usize> = re
            .unit_span
            .iter()
            .map(|u| own.binary_search(&unit_pos[u.as_str()]).expect("own unit"))
            .collect();
        if ranks.windows(2).any(|w| w[1] != w[0] + 1) {
            out.push(CorpusDiagnostic::error(locus(), "unit span is not contiguous in time order"));
            continue;
        }
        match unit_tx(re.unit_span[0].as_str()) {
            None => out.push(CorpusDiagnostic::error(locus(), "first unit belongs to no transaction")),
            Some(t) if t != re.transaction_index => out.push(CorpusDiagnostic::error(
                locus(),
                format!(
                    "transaction index {} differs from the transaction of its first unit ({t})",
                    re.transaction_index
                ),
            )),
            Some(t) => {
                if re.unit_span.iter().any(|u| unit_tx(u) != Some(t)) {
                    out.push(CorpusDiagnostic::warning(
                        locus(),
                        format!("spans a transaction boundary; assigned to transaction {t}"),
                    ));
                }
            }
        }
    }
}

fn validate_landmarks(corpus: &Corpus, out: &mut Vec<CorpusDiagnostic>) {
    for (map_pair_id, inventory) in &corpus.map_pairs {
        let mut seen: BTreeMap<(u8, &str, u64, u64), ()> = BTreeMap::new();
        for lm in inventory {
            let locus = || Locus::entity("landmark", format!("{map_pair_id}/{}@{}", lm.name, lm.side.tag()));
            if &lm.map_pair_id != map_pair_id {
                out.push(CorpusDiagnostic::error(locus(), format!("filed under `{map_pair_id}`")));
            }
            if !is_valid_name(&lm.name) {
                out.push(CorpusDiagnostic::error(locus(), format!("invalid landmark name `{}`", lm.name)));
            }
            if !(lm.x.is_finite() && lm.y.is_finite()) {
                out.push(CorpusDiagnostic::error(locus(), "non-finite position"));
            }
            let key = (lm.side as u8, lm.name.as_str(), lm.x.to_bits(), lm.y.to_bits());
            if seen.insert(key, ()).is_some() {
                out.push(CorpusDiagnostic::error(locus(), "duplicate landmark instance"));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::small_corpus;
    use crate::diagnostics::Severity;

    fn errors(diags: &[CorpusDiagnostic]) -> usize {
        diags.iter().filter(|d| d.severity == Severity::Error).count()
    }

    #[test]
    fn well_formed_fixture_is_clean() {
        assert_eq!(validate_corpus(&small_corpus()), vec![]);
    }

    #[test]
    fn missing_unit_in_re_is_one_error() {
        let mut corpus = small_corpus();
        let d = corpus.dialogues.get_mut("d1").unwrap();
        d.res[0].unit_span[1] = "u404".into();
        let diags = validate_corpus(&corpus);
        assert_eq!(errors(&diags), 1, "{diags:?}");
        assert_eq!(diags[0].locus, Locus::entity("re", "re1"));
    }

    #[test]
    fn utterance_out_of_order_is_one_error() {
        let mut corpus = small_corpus();
        let d = corpus.dialogues.get_mut("d1").unwrap();
        d.moves[1].utterance_index = 10;
        let diags = validate_corpus(&corpus);
        assert_eq!(errors(&diags), 1, "{diags:?}");
        assert!(diags[0].message.contains("does not follow"));
    }

    #[test]
    fn transaction_mismatch_is_an_error() {
        let mut corpus = small_corpus();
        let d = corpus.dialogues.get_mut("d1").unwrap();
        d.res[1].transaction_index = 2;
        assert_eq!(errors(&validate_corpus(&corpus)), 1);
    }

    #[test]
    fn non_contiguous_span_and_partition_errors() {
        let mut corpus = small_corpus();
        let d = corpus.dialogues.get_mut("d1").unwrap();
        d.res[0].unit_span = vec!["u3".into(), "u5".into()];
        assert_eq!(errors(&validate_corpus(&corpus)), 1);

        let mut corpus = small_corpus();
        let d = corpus.dialogues.get_mut("d1").unwrap();
        d.transactions[2].move_ids.clear();
        let diags = validate_corpus(&corpus);
        // m5 orphaned
        assert_eq!(errors(&diags), 1, "{diags:?}");
    }

    #[test]
    fn boundary_spanning_re_warns() {
        let mut corpus = small_corpus();
        let d = corpus.dialogues.get_mut("d1").unwrap();
        // u9 (transaction 1) and u12 (transaction 2) are adjacent giver units
        d.res[1].unit_span = vec!["u9".into(), "u12".into()];
        let diags = validate_corpus(&corpus);
        assert_eq!(errors(&diags), 0, "{diags:?}");
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Warning);
    }

    #[test]
    fn moves_out_of_time_order_are_caught() {
        let mut corpus = small_corpus();
        let d = corpus.dialogues.get_mut("d1").unwrap();
        d.moves.swap(0, 1);
        d.moves[0].utterance_index = 1;
        d.moves[1].utterance_index = 2;
        // m2 (follower, later in time) now claims utterance 1
        assert_eq!(errors(&validate_corpus(&corpus)), 1);
    }

    #[test]
    fn unresolved_map_pair() {
        let mut corpus = small_corpus();
        corpus.map_pairs.clear();
        let diags = validate_corpus(&corpus);
        assert_eq!(errors(&diags), 1);
    }
}
