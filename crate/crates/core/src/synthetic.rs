//! Seeded synthetic corpora with a learnable labelling rule: every sentence
//! has one or two predicates, and for each predicate the word immediately
//! after it carries role `A1`. Used by tests, the acceptance suite and the
//! `synth` command.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus_io::{Corpus, Sentence, TokenRecord, EMPTY};
use crate::wordpiece::{Vocabulary, CLS, PAD, SEP, UNK};

const VERBS: [&str; 6] = ["ran", "saw", "took", "gave", "made", "held"];
const NOUNS: [&str; 5] = ["arrival", "building", "decision", "launch", "review"];
const OTHERS: [&str; 16] = [
    "the", "a", "big", "small", "red", "blue", "cat", "dog", "tree", "house", "quickly", "then",
    "river", "stone", "bird", "road",
];
/// Words that split into two pieces in [`vocabulary`].
const COMPOUND: [(&str, &str); 3] = [("sunlight", "sun"), ("moonbeam", "moon"), ("starfish", "star")];

/// Vocabulary covering every word the generator emits. Compound words are
/// split into a stem and a `##` continuation.
pub fn vocabulary() -> Vocabulary {
    let mut entries: Vec<String> = [PAD, UNK, CLS, SEP].iter().map(|s| s.to_string()).collect();
    entries.extend(VERBS.iter().chain(&NOUNS).chain(&OTHERS).map(|s| s.to_string()));
    for (word, stem) in COMPOUND {
        entries.push(stem.to_string());
        entries.push(format!("##{}", &word[stem.len()..]));
    }
    Vocabulary::from_entries(entries).expect("synthetic vocabulary is well-formed")
}

fn filler<R: Rng>(rng: &mut R) -> String {
    if rng.random_bool(0.15) {
        COMPOUND.choose(rng).unwrap().0.to_string()
    } else {
        OTHERS.choose(rng).unwrap().to_string()
    }
}

fn token(id: usize, form: &str, pos: &str) -> TokenRecord {
    TokenRecord {
        id,
        form: form.to_string(),
        lemma: form.to_string(),
        pos: pos.to_string(),
        feat: EMPTY.to_string(),
        head: if id == 1 { 0 } else { 1 },
        deprel: if id == 1 { "ROOT" } else { "DEP" }.to_string(),
        fill_pred: false,
        pred_sense_raw: EMPTY.to_string(),
        roles: Vec::new(),
    }
}

fn sentence<R: Rng>(rng: &mut R, predicates: usize) -> Sentence {
    let len = rng.random_range(5..=9);
    let mut tokens: Vec<TokenRecord> = (1..=len).map(|i| token(i, &filler(rng), "N")).collect();

    // Predicate positions at least two apart and never last.
    let mut positions: Vec<usize> = Vec::new();
    while positions.len() < predicates {
        let p = rng.random_range(0..len - 1);
        if positions.iter().all(|&q: &usize| q.abs_diff(p) >= 2) {
            positions.push(p);
        }
    }
    positions.sort_unstable();

    for &p in &positions {
        let verb = rng.random_bool(0.6);
        let form = if verb {
            VERBS.choose(rng).unwrap()
        } else {
            NOUNS.choose(rng).unwrap()
        };
        let t = &mut tokens[p];
        t.form = form.to_string();
        t.lemma = form.to_string();
        t.pos = if verb { "V" } else { "N" }.to_string();
        t.fill_pred = true;
        t.pred_sense_raw = form.to_string();
    }
    for t in &mut tokens {
        t.roles = vec![EMPTY.to_string(); positions.len()];
    }
    for (col, &p) in positions.iter().enumerate() {
        tokens[p + 1].roles[col] = "A1".to_string();
    }
    Sentence::new(tokens)
}

/// Sentences with one or two predicates until the corpus holds at least
/// `min_samples` predicates; the last sentence is trimmed to one predicate
/// when needed so the total is exact.
pub fn corpus(min_samples: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Corpus::default();
    let mut count = 0;
    while count < min_samples {
        let want = if min_samples - count >= 2 && rng.random_bool(0.4) { 2 } else { 1 };
        c.sentences.push(sentence(&mut rng, want));
        count += want;
    }
    c
}
