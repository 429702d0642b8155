//! Small generated corpora for smoke tests and scaled-down experiments:
//! name–pronoun chains, expletive and referring "it", predicative noun
//! phrases, and singleton mentions.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, NrType, Span, Token};

const MALE: &[&str] = &["John", "Peter", "Mark", "Paul", "David", "Tom"];
const FEMALE: &[&str] = &["Mary", "Anna", "Lisa", "Sarah", "Kate", "Emma"];
const OBJECTS: &[&str] = &["box", "vase", "car", "lamp"];
const ANIMALS: &[&str] = &["dog", "cat", "bird"];
const JOBS: &[&str] = &["teacher", "doctor", "pilot", "farmer"];
const WEATHER: &[&[&str]] = &[&["rained"], &["is", "cold"], &["snowed"], &["is", "late"]];

/// Incremental document builder tracking annotations.
struct Builder {
    tokens: Vec<Token>,
    sentence: usize,
    clusters: Vec<Vec<Span>>,
    nonreferring: Vec<(Span, NrType)>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            tokens: Vec::new(),
            sentence: 0,
            clusters: Vec::new(),
            nonreferring: Vec::new(),
        }
    }

    /// Appends words, returning the span they occupy.
    fn words(&mut self, words: &[&str]) -> Span {
        let start = self.tokens.len();
        for w in words {
            self.tokens.push(Token {
                text: w.to_string(),
                sentence: self.sentence,
                speaker: "-".into(),
            });
        }
        Span::new(start, self.tokens.len() - 1)
    }

    fn end_sentence(&mut self) {
        self.words(&["."]);
        self.sentence += 1;
    }

    fn mention(&mut self, words: &[&str], entity: usize) {
        let s = self.words(words);
        self.clusters[entity].push(s);
    }

    fn new_entity(&mut self) -> usize {
        self.clusters.push(Vec::new());
        self.clusters.len() - 1
    }

    fn nonreferring(&mut self, words: &[&str], ty: NrType) {
        let s = self.words(words);
        self.nonreferring.push((s, ty));
    }
}

/// One generated document with `events` sentences after the two
/// introductions.
pub fn synthetic_document<R: Rng + ?Sized>(rng: &mut R, key: &str, events: usize) -> Document {
    let mut b = Builder::new();
    let man = *MALE.choose(rng).unwrap();
    let woman = *FEMALE.choose(rng).unwrap();
    let he = b.new_entity();
    let she = b.new_entity();
    b.mention(&[man], he);
    b.words(&["arrived"]);
    b.end_sentence();
    b.mention(&[woman], she);
    b.words(&["waved"]);
    b.end_sentence();
    for _ in 0..events {
        match rng.random_range(0..7) {
            0 => {
                b.mention(&["He"], he);
                b.words(&["smiled"]);
            }
            1 => {
                b.mention(&["She"], she);
                b.words(&["laughed"]);
            }
            2 => {
                b.mention(&[woman], she);
                b.words(&["saw"]);
                b.mention(&["him"], he);
            }
            3 => {
                b.nonreferring(&["It"], NrType::Expletive);
                b.words(WEATHER.choose(rng).unwrap());
            }
            4 => {
                let (who, e) = if rng.random_bool(0.5) { (man, he) } else { (woman, she) };
                b.mention(&[who], e);
                b.words(&["is"]);
                b.nonreferring(&["a", JOBS.choose(rng).unwrap()], NrType::Predicate);
            }
            5 => {
                let e = b.new_entity();
                b.mention(&["The", ANIMALS.choose(rng).unwrap()], e);
                b.words(&["barked"]);
            }
            _ => {
                // a referring "it" in the next sentence
                let e = b.new_entity();
                b.mention(&["The", OBJECTS.choose(rng).unwrap()], e);
                b.words(&["fell"]);
                b.end_sentence();
                b.mention(&["It"], e);
                b.words(&["broke"]);
            }
        }
        b.end_sentence();
    }
    let mut clusters: Vec<Vec<Span>> = b.clusters.into_iter().filter(|c| !c.is_empty()).collect();
    clusters.iter_mut().for_each(|c| c.sort());
    let mut nonreferring = b.nonreferring;
    nonreferring.sort();
    Document {
        doc_key: key.to_string(),
        genre: "nw".into(),
        tokens: b.tokens,
        gold_clusters: clusters,
        gold_nonreferring: nonreferring,
    }
}

/// `n` documents keyed `synth/<k>`, deterministic in `seed`.
pub fn synthetic_corpus(n: usize, events: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| synthetic_document(&mut rng, &format!("synth/{k}"), events))
        .collect()
}
