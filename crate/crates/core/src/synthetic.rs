//! Seeded generators for synthetic corpora, query streams and reward scripts.
//!
//! Texts are built from made-up tokens so that, under the feature-hash
//! embedder, texts sharing most tokens are close and unrelated texts are
//! nearly orthogonal.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kb::RawRecord;
use crate::model::{Embedder, RewardScript};
use crate::types::{Producer, Query};
use crate::Embedding;

const DOMAIN_VOCAB: usize = 48;
const PROMPT_TOKENS: usize = 8;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pick_words(rng: &mut ChaCha8Rng, vocab: &[String], n: usize) -> Vec<String> {
    vocab.choose_multiple(rng, n).cloned().collect()
}

fn domain_vocab(domain: &str) -> Vec<String> {
    (0..DOMAIN_VOCAB).map(|j| format!("{domain}{j}")).collect()
}

/// `per_domain` records for each domain; prompts draw from a per-domain vocabulary.
pub fn corpus(seed: u64, domains: &[String], per_domain: usize) -> Vec<RawRecord> {
    let mut rng = rng(seed);
    let mut out = Vec::with_capacity(domains.len() * per_domain);
    for d in domains {
        let vocab = domain_vocab(d);
        for i in 0..per_domain {
            let words = pick_words(&mut rng, &vocab, PROMPT_TOKENS);
            out.push(RawRecord::new(
                words.join(" "),
                format!("{d} answer {i}"),
                d.clone(),
            ));
        }
    }
    out
}

/// Queries phrased in `domain`'s vocabulary, ids `{prefix}{i}`.
pub fn domain_queries(seed: u64, domain: &str, n: usize, prefix: &str) -> Vec<Query> {
    let mut rng = rng(seed);
    let vocab = domain_vocab(domain);
    (0..n)
        .map(|i| {
            Query::new(format!("{prefix}{i}"), pick_words(&mut rng, &vocab, PROMPT_TOKENS).join(" "))
                .with_domain(domain)
        })
        .collect()
}

fn fresh_token(rng: &mut ChaCha8Rng) -> String {
    format!("t{:08x}", rng.gen::<u32>())
}

const MAX_ATTEMPTS: usize = 10_000;

/// Accepts candidates whose embedding stays at or below `max_sim` against
/// every previously accepted one.
struct NoveltyFilter<'a> {
    embedder: &'a dyn Embedder,
    max_sim: f64,
    seen: Vec<Embedding>,
}

impl<'a> NoveltyFilter<'a> {
    fn new(embedder: &'a dyn Embedder, max_sim: f64) -> Self {
        Self {
            embedder,
            max_sim,
            seen: Vec::new(),
        }
    }

    fn admit(&mut self, text: &str) -> Result<bool> {
        let e = self.embedder.embed(text)?;
        for s in &self.seen {
            if s.dot(&e)? > self.max_sim {
                return Ok(false);
            }
        }
        self.seen.push(e);
        Ok(true)
    }

    fn sample(&mut self, mut draw: impl FnMut() -> String) -> Result<String> {
        for _ in 0..MAX_ATTEMPTS {
            let text = draw();
            if self.admit(&text)? {
                return Ok(text);
            }
        }
        Err(Error::Config(format!(
            "could not find a text with similarity <= {} to {} earlier texts",
            self.max_sim,
            self.seen.len()
        )))
    }
}

fn topic(rng: &mut ChaCha8Rng) -> Vec<String> {
    (0..PROMPT_TOKENS).map(|_| fresh_token(rng)).collect()
}

/// Queries whose embeddings are pairwise at most `max_sim` apart.
pub fn distinct_queries(seed: u64, n: usize, prefix: &str, embedder: &dyn Embedder, max_sim: f64) -> Result<Vec<Query>> {
    let mut rng = rng(seed);
    let mut filter = NoveltyFilter::new(embedder, max_sim);
    (0..n)
        .map(|i| {
            let text = filter.sample(|| topic(&mut rng).join(" "))?;
            Ok(Query::new(format!("{prefix}{i}"), text))
        })
        .collect()
}

/// A single-domain stream of topic groups. Each group opens with a query on a
/// new topic and continues with paraphrases of it (one token swapped each).
/// Group openers are at most `max_sim` similar to every earlier opener, so
/// under a cache threshold at or above `max_sim` only paraphrases can hit.
/// `group_sizes` is cycled until `n` queries are produced.
pub fn near_duplicate_stream(
    seed: u64,
    domain: &str,
    n: usize,
    group_sizes: &[usize],
    embedder: &dyn Embedder,
    max_sim: f64,
) -> Result<Vec<Query>> {
    if group_sizes.is_empty() || group_sizes.contains(&0) {
        return Err(Error::Config("group sizes must be positive".into()));
    }
    let mut rng = rng(seed);
    let mut filter = NoveltyFilter::new(embedder, max_sim);
    let mut out = Vec::with_capacity(n);
    let mut sizes = group_sizes.iter().cycle();
    while out.len() < n {
        let size = *sizes.next().expect("cycle of non-empty slice");
        let opener = filter.sample(|| {
            let mut words = topic(&mut rng);
            words.push(domain.to_owned());
            words.join(" ")
        })?;
        let words: Vec<&str> = opener.split(' ').collect();
        for j in 0..size {
            if out.len() == n {
                break;
            }
            let text = if j == 0 {
                opener.clone()
            } else {
                let mut w: Vec<String> = words.iter().map(|s| s.to_string()).collect();
                w[rng.gen_range(0..PROMPT_TOKENS)] = fresh_token(&mut rng);
                w.join(" ")
            };
            out.push(Query::new(format!("q{}", out.len()), text).with_domain(domain));
        }
    }
    Ok(out)
}

/// A reward script that routes the first `n_direct` queries to NoAdaptation,
/// the next `n_rag` to RAG and the rest to TTT under sequential routing with
/// threshold `tau_r`.
pub fn split_script(queries: &[Query], n_direct: usize, n_rag: usize, tau_r: f64) -> Result<RewardScript> {
    if n_direct + n_rag > queries.len() {
        return Err(Error::Config("split exceeds query count".into()));
    }
    let low = tau_r - 1.0;
    let mut script = RewardScript::new(low)?;
    for (i, q) in queries.iter().enumerate() {
        if i < n_direct {
            script.set(&q.id, Producer::Direct, tau_r + 0.5)?;
        } else if i < n_direct + n_rag {
            script.set(&q.id, Producer::Direct, low)?;
            script.set(&q.id, Producer::Rag, low + 0.5)?;
        } else {
            script.set(&q.id, Producer::Direct, low)?;
            script.set(&q.id, Producer::Rag, low - 0.5)?;
        }
    }
    Ok(script)
}

/// Random query texts for property tests; ids `{prefix}{i}`.
pub fn random_queries(seed: u64, n: usize, prefix: &str) -> Vec<Query> {
    let mut rng = rng(seed);
    (0..n)
        .map(|i| {
            // Each token adds +-1 to one bucket, so an odd count can never
            // cancel to the zero vector.
            let words: Vec<String> = (0..2 * rng.gen_range(1..5) + 1).map(|_| fresh_token(&mut rng)).collect();
            Query::new(format!("{prefix}{i}"), words.join(" "))
        })
        .collect()
}
