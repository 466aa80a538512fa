use score_core::gateway::LlmGateway;
use score_core::story::{Episode, ItemState};
use score_core::summarizer::{
    build_retrieval_document, parse_items_section, rule_summary, summarize_episode, SummaryInput, SummaryReply,
};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/golden");

fn read(name: &str) -> String {
    std::fs::read_to_string(format!("{FIXTURES}/{name}")).unwrap()
}

fn input() -> SummaryInput {
    serde_json::from_str(&read("input.json")).unwrap()
}

#[test]
fn rule_summary_matches_hand_written_reply() {
    let expected: SummaryReply = serde_json::from_str(&read("expected_reply.json")).unwrap();
    assert_eq!(rule_summary(&input()), expected);
}

#[test]
fn summary_document_matches_golden_layout() {
    let input = input();
    let ep = Episode::new(input.episode_index, input.episode_text.clone());
    let summary = summarize_episode("mine", &ep, &input.items, &LlmGateway::mock()).unwrap();
    // one positive word (smiled) against three negative ones (shattered, wept, dark)
    let expected_sigma = 0.5 + 0.5 * (1.0 - 3.0) / (1.0 + 3.0 + 1.0);
    assert!((summary.sentiment.value() - expected_sigma).abs() < 1e-12);
    assert_eq!(summary.episode_index, 3);
    assert!(summary.interactions.iter().all(|i| i.episode_index == 3));

    let doc = build_retrieval_document(&summary);
    assert_eq!(doc.doc_id, "mine#3");
    assert_eq!(doc.text, read("expected_document.txt"));

    let parsed = parse_items_section(&doc).unwrap();
    assert_eq!(parsed, summary.interactions);
    assert_eq!(parsed[1].implied_state, Some(ItemState::Destroyed));
    assert_eq!(parsed[1].actor, None);
}
