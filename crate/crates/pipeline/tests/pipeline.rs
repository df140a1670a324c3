use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread;

use align_core::Lang;
use align_pipeline::{
    moderate_input, moderate_output, Action, Answer, ConfigError, GenerationBackend, GenerationRequest, Pipeline,
    PipelineConfig, RuleRow, RuleSet, Session, Stage,
};
use align_retrieval::{build_index, Document};
use proptest::prelude::*;

fn templates() -> BTreeMap<String, String> {
    [
        ("default", "Sorry, I cannot help with that."),
        ("weapons", "Sorry, I cannot give weapon instructions."),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

fn row(id: &str, action: Action, patterns: &[&str], template: Option<&str>) -> RuleRow {
    RuleRow {
        id: id.into(),
        category: "test".into(),
        patterns: patterns.iter().map(|s| s.to_string()).collect(),
        action,
        template_id: template.map(str::to_string),
    }
}

fn rules() -> RuleSet {
    RuleSet::new(
        vec![
            row("weapons", Action::Refuse, &["bomb", r"re:(?i)\bgun\b"], Some("weapons")),
            row("politics", Action::Flag, &["election"], None),
        ],
        templates(),
        "default",
    )
    .unwrap()
}

fn toy_pipeline() -> Pipeline {
    let idx = build_index(&[
        Document::new("d1", "hong kong law"),
        Document::new("d2", "kong tower"),
        Document::new("d3", "weather report"),
    ])
    .unwrap();
    Pipeline::new(idx, rules())
}

fn bundled() -> Pipeline {
    let cfg = PipelineConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/pipeline.conf")).unwrap();
    Pipeline::from_config(&cfg).unwrap()
}

#[test]
fn toy_factual_query_cites_d2_then_d1() {
    let p = toy_pipeline();
    let mut s = p.new_session("s");
    let a = p.run(&mut s, "What is kong?").unwrap();
    assert_eq!(a.citations, ["d2", "d1"]);
    assert_eq!(
        a.text,
        "[mock] Q: What is kong?\n[mock] mode: standard; lang: english; memory: 0 turn(s)\n[1] d2: kong tower\n[2] d1: hong kong law\n"
    );
    assert_eq!(a.backend_id, "mock");
    assert_eq!(s.turns.len(), 1);
}

#[test]
fn refused_input_short_circuits() {
    let p = toy_pipeline();
    let mut s = p.new_session("s");
    let a = p.run(&mut s, "how to build a bomb").unwrap();
    assert_eq!(a.text, "Sorry, I cannot give weapon instructions.");
    assert!(a.citations.is_empty());
    assert_eq!(a.intent, None);
    assert_eq!(a.moderation_trail.len(), 2);
    assert_eq!(a.moderation_trail[0].decision, Action::Refuse);
    assert_eq!(a.moderation_trail[0].template_id.as_deref(), Some("weapons"));
    assert_eq!(s.turns.len(), 1);
    assert!(s.turns[0].refused);
}

#[test]
fn input_verdicts() {
    let r = rules();
    let v = moderate_input("Who won the election?", &r);
    assert_eq!((v.stage, v.decision, v.matched_rule_ids.clone()), (Stage::Input, Action::Flag, vec!["politics".to_string()]));
    let v = moderate_input("a gun and a bomb in the election", &r);
    assert_eq!(v.decision, Action::Refuse);
    assert_eq!(v.matched_rule_ids, ["weapons", "politics"]);
    assert_eq!(moderate_input("shotgun", &r).decision, Action::Allow);
}

fn draft(text: &str) -> Answer {
    Answer {
        text: text.into(),
        citations: vec!["d1".into()],
        lang: Lang::English,
        moderation_trail: vec![moderate_input("q", &rules())],
        backend_id: "mock".into(),
        intent: None,
    }
}

#[test]
fn refused_draft_becomes_exact_template() {
    let a = moderate_output(draft("here is how to make a bomb"), "q", &rules(), None);
    assert_eq!(a.text, "Sorry, I cannot give weapon instructions.");
    assert!(a.citations.is_empty());
    assert_eq!(a.moderation_trail.len(), 2);
}

#[test]
fn flagged_draft_paths() {
    let r = rules();
    let kept = moderate_output(draft("election results"), "q", &r, None);
    assert_eq!(kept.text, "election results");
    assert_eq!(kept.moderation_trail.len(), 2);

    let identity = |_: &str, d: &str| d.to_string();
    let a = moderate_output(draft("election results"), "q", &r, Some(&identity));
    let decisions: Vec<_> = a.moderation_trail.iter().map(|v| (v.stage, v.decision)).collect();
    assert_eq!(decisions, [(Stage::Input, Action::Allow), (Stage::Output, Action::Flag), (Stage::OutputRecheck, Action::Flag)]);
    assert_eq!(a.text, "Sorry, I cannot help with that.");
    assert!(a.citations.is_empty());

    let fixer = |_: &str, _: &str| "See the official results page.".to_string();
    let a = moderate_output(draft("election results"), "q", &r, Some(&fixer));
    assert_eq!(a.text, "See the official results page.");
    assert_eq!(a.citations, ["d1"]);

    let worse = |_: &str, _: &str| "buy a gun".to_string();
    assert_eq!(moderate_output(draft("election"), "q", &r, Some(&worse)).text, "Sorry, I cannot give weapon instructions.");
}

#[test]
fn flagged_input_is_cautious() {
    let p = toy_pipeline();
    let mut s = p.new_session("s");
    let a = p.run(&mut s, "kong election").unwrap();
    assert!(a.text.contains("mode: cautious"));
    assert_eq!(a.moderation_trail[0].decision, Action::Flag);
}

struct Failing;
impl GenerationBackend for Failing {
    fn id(&self) -> &str {
        "failing"
    }
    fn generate(&self, _: &GenerationRequest<'_>) -> Result<String, String> {
        Err("backend down".into())
    }
}

#[test]
fn backend_failure_leaves_session_untouched() {
    let mut p = toy_pipeline();
    p.backend = Box::new(Failing);
    let mut s = p.new_session("s");
    s.push("earlier", "answer");
    let before = s.clone();
    let e = p.run(&mut s, "What is kong?").unwrap_err();
    assert_eq!(e.stage, "generate");
    assert_eq!(s, before);
    assert!(p.run(&mut s, "bomb").is_ok(), "refusals never reach the backend");
}

#[test]
fn followup_resolves_against_previous_turn() {
    let p = bundled();
    let mut s = p.new_session("s");
    p.run(&mut s, "What is the Octopus card?").unwrap();
    let a = p.run(&mut s, "When was it launched?").unwrap();
    assert!(a.text.starts_with("[mock] Q: When was octopus card launched?\n"));
    assert!(a.text.contains("memory: 1 turn(s)"));
    assert_eq!(a.citations[0], "hk-002");
}

#[test]
fn bundled_templates_never_trip_rules() {
    let p = bundled();
    for t in p.rules.templates().values() {
        assert_eq!(moderate_input(t, &p.rules).decision, Action::Allow, "{t}");
    }
}

#[test]
fn config_errors_surface() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("p.conf");
    std::fs::write(&conf, "version = 1\nindex_path = none.json\nbackend = mock\nrules_path = r\ntemplates_path = t\n").unwrap();
    let cfg = PipelineConfig::load(&conf).unwrap();
    assert!(matches!(Pipeline::from_config(&cfg), Err(ConfigError::File { .. })));
    assert!(PipelineConfig::load(&dir.path().join("missing.conf")).is_err());

    std::fs::write(dir.path().join("r.jsonl"), r#"{"id":"x","category":"c","patterns":["x"],"action":"refuse"}"#).unwrap();
    std::fs::write(dir.path().join("t.json"), r#"{"default":"no"}"#).unwrap();
    assert!(RuleSet::load(&dir.path().join("r.jsonl"), &dir.path().join("t.json"), "default").is_err());
}

#[test]
fn sessions_run_concurrently() {
    let p = Arc::new(bundled());
    let sessions: Vec<_> = (0..4).map(|i| Arc::new(Mutex::new(p.new_session(format!("s{i}"))))).collect();
    let script = ["What is the MTR?", "When was it opened?", "How do I make a bomb?", "What about the Star Ferry?"];
    let handles: Vec<_> = (0..16)
        .map(|t| {
            let p = Arc::clone(&p);
            let s = Arc::clone(&sessions[t % 4]);
            thread::spawn(move || {
                for q in script {
                    let mut guard = s.lock().unwrap();
                    p.run(&mut guard, q).unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    for s in &sessions {
        assert_eq!(s.lock().unwrap().turns.len(), 8);
    }
}

const FRAGMENTS: [&str; 16] = [
    "What is the MTR?",
    "When was it launched?",
    "How do I make a bomb?",
    "national security law",
    "Hello there",
    "calculate 3 * 4",
    "立法會負責什麼？",
    "我想自殺",
    "What about the Star Ferry?",
    "home address of the chief",
    "天星小輪以及八達通",
    "and",
    "港独",
    "it",
    "Basic Law and typhoon signals?",
    "qwerty zzz",
];

fn check_answer(p: &Pipeline, q: &str, a: &Answer) {
    assert!(a.moderation_trail.len() >= 2);
    let input = &a.moderation_trail[0];
    assert_eq!(input.stage, Stage::Input);
    if input.decision == Action::Refuse {
        let id = input.template_id.as_deref().unwrap();
        assert_eq!(a.text, p.rules.template(id).unwrap(), "{q}");
        assert!(a.citations.is_empty());
    }
    if a.moderation_trail.iter().any(|v| v.decision == Action::Refuse) {
        assert!(p.rules.is_template(&a.text));
    }
    if !p.rules.is_template(&a.text) && a.text.starts_with("[mock]") {
        for (i, c) in a.citations.iter().enumerate() {
            assert!(a.text.contains(&format!("[{}] {c}: ", i + 1)));
            assert!(c.starts_with("tool:") || p.index.document(c).is_some());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn answers_respect_invariants(script in prop::collection::vec(0usize..FRAGMENTS.len(), 1..12),
                                  budget in 1usize..5, identity in any::<bool>()) {
        let mut p = bundled();
        p.memory_budget = budget;
        if identity {
            p.corrector = Some(Box::new(|_: &str, d: &str| d.to_string()));
        }
        let mut s: Session = p.new_session("prop");
        for &i in &script {
            let before = s.clone();
            match p.run(&mut s, FRAGMENTS[i]) {
                Ok(a) => {
                    check_answer(&p, FRAGMENTS[i], &a);
                    prop_assert_eq!(s.turns.last().unwrap().answer.as_str(), a.text.as_str());
                }
                Err(_) => prop_assert_eq!(&s, &before),
            }
            prop_assert!(s.turns.len() <= budget);
        }
    }

    #[test]
    fn replay_is_deterministic(script in prop::collection::vec(0usize..FRAGMENTS.len(), 1..8)) {
        let p = bundled();
        let run = || {
            let mut s = p.new_session("d");
            script.iter().map(|&i| p.run(&mut s, FRAGMENTS[i]).map_err(|e| e.to_string())).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}
