use std::collections::BTreeMap;

use super::{AnnotationRequest, Provider, ProviderResponse, SubmissionHandle, TransportError};
use crate::annotation::{AnnotationRecord, AttributeCascade};
use crate::corpus::{Corpus, ReferenceExpressionSpan};
use crate::landmark::{LandmarkRefSet, MapPairIndex, UnifiedLandmarkId};

/// How the mock decides the addressee's interpretation.
#[derive(Debug, Clone, PartialEq)]
pub enum MockPolicy {
    /// Ground to the same name and ordinal on the addressee's side when that
    /// instance exists, otherwise report the expression as not grounded.
    EchoSpeaker,
    /// Ground to the addressee's lowest-ordinal instance of the same name.
    NearestInstance,
    /// Fixed answers keyed by re_id; REs without an entry are dropped.
    Scripted(BTreeMap<String, AnnotationRecord>),
}

impl MockPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            MockPolicy::EchoSpeaker => "echo_speaker",
            MockPolicy::NearestInstance => "nearest_instance",
            MockPolicy::Scripted(_) => "scripted",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "echo_speaker" => Some(MockPolicy::EchoSpeaker),
            "nearest_instance" => Some(MockPolicy::NearestInstance),
            "scripted" => Some(MockPolicy::Scripted(BTreeMap::new())),
            _ => None,
        }
    }
}

fn lowest<'a>(index: &'a MapPairIndex, re: &'a ReferenceExpressionSpan, side: crate::SpeakerRole) -> Option<&'a UnifiedLandmarkId> {
    index
        .on_side(side, &re.original_mtlm.name)
        .map(|a| &a.umlm)
        .min_by_key(|id| id.ordinal)
}

const GROUNDED: AttributeCascade = AttributeCascade::REACHABLE[4];
const NOT_GROUNDED: AttributeCascade = AttributeCascade::REACHABLE[3];
const QUANTIFICATIONAL: AttributeCascade = AttributeCascade::REACHABLE[0];

fn mock_record(re: &ReferenceExpressionSpan, index: &MapPairIndex, policy: &MockPolicy) -> Option<AnnotationRecord> {
    let speaker = re.role;
    let addressee = speaker.opposite();
    let base = |speaker_landmark, cascade, addressee_landmark, reason: &str| AnnotationRecord {
        re_id: re.re_id.clone(),
        speaker,
        addressee,
        speaker_landmark,
        cascade,
        addressee_landmark,
        reason: reason.to_string(),
    };
    if let MockPolicy::Scripted(answers) = policy {
        return answers.get(&re.re_id).cloned();
    }
    // The speaker means their lowest-ordinal instance of the named landmark.
    let Some(intended) = lowest(index, re, speaker) else {
        return Some(base(
            None,
            QUANTIFICATIONAL,
            None,
            "The speaker's map has no landmark with this name, so the phrase only asks whether it exists.",
        ));
    };
    let spk = Some(LandmarkRefSet::single(intended.clone()));
    let target = match policy {
        MockPolicy::EchoSpeaker => {
            let same = intended.with_side(addressee);
            index.contains(&same).then_some(same)
        }
        MockPolicy::NearestInstance => lowest(index, re, addressee).cloned(),
        MockPolicy::Scripted(_) => unreachable!("handled above"),
    };
    Some(match target {
        Some(id) => base(
            spk,
            GROUNDED,
            Some(LandmarkRefSet::single(id)),
            "The listener takes the phrase to mean a landmark on their own map.",
        ),
        None => base(
            spk,
            NOT_GROUNDED,
            None,
            "The listener has no matching landmark to tie the phrase to.",
        ),
    })
}

/// Deterministic answer for one request, as a compact JSON array.
pub fn mock_annotate(
    request: &AnnotationRequest,
    corpus: &Corpus,
    index: &MapPairIndex,
    policy: &MockPolicy,
) -> ProviderResponse {
    let dialogue = corpus.dialogue(&request.dialogue_id);
    let records: Vec<AnnotationRecord> = request
        .target_re_ids
        .iter()
        .filter_map(|id| dialogue.and_then(|d| d.re(id)))
        .filter_map(|re| mock_record(re, index, policy))
        .collect();
    ProviderResponse {
        request_id: request.request_id.clone(),
        raw_text: serde_json::to_string(&records).expect("records serialize"),
        latency_s: 0.0,
        provider_name: "mock".into(),
        model_name: policy.name().into(),
    }
}

/// A provider answering from the corpus itself.
pub struct MockProvider<'a> {
    corpus: &'a Corpus,
    indices: &'a BTreeMap<String, MapPairIndex>,
    policy: MockPolicy,
}

impl<'a> MockProvider<'a> {
    pub fn new(corpus: &'a Corpus, indices: &'a BTreeMap<String, MapPairIndex>, policy: MockPolicy) -> Self {
        Self { corpus, indices, policy }
    }
}

impl Provider for MockProvider<'_> {
    fn name(&self) -> &str {
        "mock"
    }

    fn model(&self) -> &str {
        self.policy.name()
    }

    fn parameters(&self) -> BTreeMap<String, String> {
        BTreeMap::from([("policy".to_string(), self.policy.name().to_string())])
    }

    fn submit(&self, request: &AnnotationRequest) -> Result<SubmissionHandle, TransportError> {
        let index = self
            .corpus
            .dialogue(&request.dialogue_id)
            .and_then(|d| self.indices.get(&d.map_pair_id))
            .ok_or_else(|| TransportError::permanent(format!("no landmark index for dialogue {}", request.dialogue_id)))?;
        Ok(SubmissionHandle::Ready(mock_annotate(request, self.corpus, index, &self.policy)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{RecordSchema, ValidationOptions};
    use crate::annotator::parse_response;
    use crate::annotator::tests_support::request_for;
    use crate::corpus::test_support::small_corpus;
    use crate::landmark::{assign_unified_ids, MtlmKey};
    use crate::SpeakerRole;

    fn setup() -> (Corpus, BTreeMap<String, MapPairIndex>) {
        let corpus = small_corpus();
        let index = assign_unified_ids(&corpus.map_pairs["m0"], 1.0).unwrap();
        (corpus, BTreeMap::from([("m0".to_string(), index)]))
    }

    fn run(policy: MockPolicy, targets: &[&str], k: u32) -> Vec<AnnotationRecord> {
        let (corpus, indices) = setup();
        let req = request_for("d1", k, targets);
        let resp = mock_annotate(&req, &corpus, &indices["m0"], &policy);
        let parsed = parse_response(&resp, &RecordSchema::default(), Some(&indices["m0"]), &ValidationOptions::default());
        assert!(parsed.diagnostics.is_empty(), "{:?}", parsed.diagnostics);
        parsed.records
    }

    #[test]
    fn echo_on_shared_landmark_aligns() {
        let r = &run(MockPolicy::EchoSpeaker, &["re2"], 1)[0];
        assert_eq!(r.speaker_landmark.as_ref().unwrap().to_string(), "m0_barn#0@g");
        assert_eq!(r.addressee_landmark.as_ref().unwrap().to_string(), "m0_barn#0@f");
    }

    #[test]
    fn nearest_on_multiplicity_picks_other_instance() {
        let r = &run(MockPolicy::NearestInstance, &["re1"], 0)[0];
        assert_eq!(r.speaker_landmark.as_ref().unwrap().to_string(), "m0_parked_van#0@g");
        assert_eq!(r.addressee_landmark.as_ref().unwrap().to_string(), "m0_parked_van#1@f");
    }

    #[test]
    fn echo_without_counterpart_is_not_grounded() {
        let r = &run(MockPolicy::EchoSpeaker, &["re1"], 0)[0];
        assert_eq!(r.cascade, NOT_GROUNDED);
        assert_eq!(r.addressee_landmark, None);
    }

    #[test]
    fn existence_landmark_is_not_grounded() {
        let (mut corpus, _) = setup();
        corpus.map_pairs.get_mut("m0").unwrap().push(crate::corpus::MapLandmarkInstance {
            map_pair_id: "m0".into(),
            side: SpeakerRole::Giver,
            name: "pirate_ship".into(),
            x: 90.0,
            y: 90.0,
        });
        corpus.dialogues.get_mut("d1").unwrap().res[1].original_mtlm = MtlmKey::new("m0", "pirate_ship");
        let index = assign_unified_ids(&corpus.map_pairs["m0"], 1.0).unwrap();
        let req = request_for("d1", 1, &["re2", "re3"]);
        for policy in [MockPolicy::EchoSpeaker, MockPolicy::NearestInstance] {
            let resp = mock_annotate(&req, &corpus, &index, &policy);
            let records: Vec<AnnotationRecord> = serde_json::from_str(&resp.raw_text).unwrap();
            assert_eq!(records[0].cascade, NOT_GROUNDED);
        }
    }

    #[test]
    fn speaker_without_name_is_quantificational() {
        let (mut corpus, indices) = setup();
        corpus.dialogues.get_mut("d1").unwrap().res[2].original_mtlm = MtlmKey::new("m0", "pirate_ship");
        let req = request_for("d1", 1, &["re3"]);
        let resp = mock_annotate(&req, &corpus, &indices["m0"], &MockPolicy::EchoSpeaker);
        let records: Vec<AnnotationRecord> = serde_json::from_str(&resp.raw_text).unwrap();
        assert_eq!(records[0].cascade, QUANTIFICATIONAL);
        assert_eq!(records[0].speaker_landmark, None);
    }

    #[test]
    fn scripted_answers_and_dropout() {
        let canned = run(MockPolicy::EchoSpeaker, &["re2"], 1).remove(0);
        let policy = MockPolicy::Scripted(BTreeMap::from([("re2".to_string(), canned.clone())]));
        assert_eq!(run(policy, &["re2", "re3"], 1), vec![canned]);
    }

    #[test]
    fn mock_is_deterministic() {
        let (corpus, indices) = setup();
        let req = request_for("d1", 1, &["re2", "re3"]);
        let a = mock_annotate(&req, &corpus, &indices["m0"], &MockPolicy::NearestInstance);
        let b = mock_annotate(&req, &corpus, &indices["m0"], &MockPolicy::NearestInstance);
        assert_eq!(a, b);
    }
}
