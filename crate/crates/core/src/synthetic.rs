//! Seeded synthetic datasets used by the demos and the test suites.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::TableResponder;
use crate::lang::Lang;
use crate::types::{PreferencePair, Prompt, Provenance, ResponseText};
use crate::w2s::{QACRecord, Topic};

const FILLER: [&str; 16] = [
    "the", "answer", "is", "about", "hong", "kong", "policy", "city", "court", "ordinance", "housing", "transport",
    "school", "market", "harbour", "district",
];
const GOOD: [&str; 5] = ["accurate", "lawful", "respectful", "balanced", "sourced"];
const BAD: [&str; 5] = ["rumour", "insult", "biased", "unsafe", "vague"];

/// Suffix the synthetic annotators append to every answer.
pub const CORRECTION_SUFFIX: &str = "please check official sources";

fn prompt(id: String, rng: &mut ChaCha8Rng) -> Prompt {
    let topic = FILLER.choose(rng).expect("non-empty");
    Prompt::new(id.clone(), format!("what about {topic} {id}?"), Lang::English).expect("non-empty text")
}

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<&'static str> {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| *FILLER.choose(rng).expect("non-empty")).collect()
}

/// Pairs whose winner carries one "good" marker word and whose loser carries
/// one "bad" marker over the same filler. Ids start at `first_id`.
pub fn separable_preferences(seed: u64, n: usize, first_id: usize) -> Vec<PreferencePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (first_id..first_id + n)
        .map(|i| {
            let p = prompt(format!("sep{i}"), &mut rng);
            let base = words(&mut rng, 2, 4);
            let mut w = base.clone();
            w.push(GOOD.choose(&mut rng).expect("non-empty"));
            let mut l = base;
            l.push(BAD.choose(&mut rng).expect("non-empty"));
            let rw = ResponseText::new(format!("{}:w", p.id), &p, w.join(" "), Provenance::External).expect("text");
            let rl = ResponseText::new(format!("{}:l", p.id), &p, l.join(" "), Provenance::External).expect("text");
            PreferencePair::new(p, rw, rl).expect("distinct texts")
        })
        .collect()
}

/// A weak-to-strong toy world: annotators append [`CORRECTION_SUFFIX`] to
/// the base model's answers, so any length-monotone judge strictly prefers
/// the correction.
#[derive(Debug, Clone)]
pub struct W2sWorld {
    pub seed_qac: Vec<QACRecord>,
    pub train_prompts: Vec<Prompt>,
    pub held_out_prompts: Vec<Prompt>,
    pub base: TableResponder,
}

pub fn w2s_world(seed: u64, n_seed: usize, n_train: usize, n_held_out: usize) -> W2sWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = TableResponder::default();
    let mut make = |prefix: &str, n: usize, rng: &mut ChaCha8Rng| -> Vec<Prompt> {
        (0..n)
            .map(|i| {
                let p = prompt(format!("{prefix}{i}"), rng);
                base.answers.insert(p.id.clone(), words(rng, 3, 6).join(" "));
                p
            })
            .collect()
    };
    let seed_prompts = make("seed", n_seed, &mut rng);
    let train_prompts = make("train", n_train, &mut rng);
    let held_out_prompts = make("held", n_held_out, &mut rng);
    let topics = [Topic::Values, Topic::Mathematics, Topic::ScienceEngineering, Topic::Other];
    let seed_qac = seed_prompts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let text = &base.answers[&p.id];
            QACRecord {
                prompt: p.clone(),
                original: ResponseText::new(format!("{}:o", p.id), p, text.clone(), Provenance::Base).expect("text"),
                corrected: ResponseText::new(
                    format!("{}:c", p.id),
                    p,
                    format!("{text} {CORRECTION_SUFFIX}"),
                    Provenance::Corrected,
                )
                .expect("text"),
                annotator_id: format!("ann-{}", i % 3),
                topic: topics[i % topics.len()],
            }
        })
        .collect();
    W2sWorld { seed_qac, train_prompts, held_out_prompts, base }
}
