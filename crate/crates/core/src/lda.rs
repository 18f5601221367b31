//! Latent Dirichlet Allocation fitted by collapsed Gibbs sampling.
//!
//! One chain mutates shared counts and is single-threaded; the fitted model
//! is immutable. Everything is deterministic given the seed: token expansion
//! walks each bag in vocabulary order, documents are swept in order, and the
//! categorical draw consumes exactly one f64 per token.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::binio::{self, HASH_LEN};
use crate::error::{Error, Result};
use crate::lexicon::BagOfWords;

const MODEL_MAGIC: &[u8; 8] = b"CSLDAMDL";
const MODEL_VERSION: u32 = 1;

/// Dense term <-> index mapping, assigned in lexicographic term order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    id_of: HashMap<String, u32>,
    term_of: Vec<String>,
}

impl Vocabulary {
    /// Collects every term observed in the corpus. Sorting makes indices a
    /// pure function of the term set.
    pub fn from_docs(docs: &[BagOfWords]) -> Self {
        let mut terms: Vec<String> = docs
            .iter()
            .flat_map(|bag| bag.iter().map(|(t, _)| t.to_string()))
            .collect();
        terms.sort_unstable();
        terms.dedup();
        let id_of = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            id_of,
            term_of: terms,
        }
    }

    pub fn id_of(&self, term: &str) -> Option<u32> {
        self.id_of.get(term).copied()
    }

    pub fn term_of(&self, id: u32) -> &str {
        &self.term_of[id as usize]
    }

    pub fn len(&self) -> usize {
        self.term_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.term_of.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConfig {
    pub topics: usize,
    /// Symmetric document-topic prior. Defaults to 50/K.
    pub alpha: f64,
    /// Symmetric topic-word prior.
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl GibbsConfig {
    pub fn new(topics: usize, iterations: usize, seed: u64) -> Self {
        Self {
            topics,
            alpha: 50.0 / topics as f64,
            beta: 0.01,
            iterations,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.topics < 2 {
            return Err(Error::InvalidConfig("lda topics must be >= 2".into()));
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::InvalidConfig("lda priors must be positive".into()));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("lda iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Final sampler state: counts, assignments, and the expanded tokens they
/// were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub topics: usize,
    pub vocab: Vocabulary,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub iterations: usize,
    /// K x V topic-word counts, row-major.
    pub topic_word: Vec<u32>,
    /// Per-topic token totals (row sums of `topic_word`).
    pub topic_total: Vec<u64>,
    /// D x K document-topic counts, row-major.
    pub doc_topic: Vec<u32>,
    /// Expanded word ids per document, vocabulary-ascending.
    pub words: Vec<Vec<u32>>,
    /// Topic assignment per token, parallel to `words`.
    pub assignments: Vec<Vec<u32>>,
}

impl TopicModel {
    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn doc_count(&self) -> usize {
        self.words.len()
    }

    fn doc_topic_row(&self, d: usize) -> &[u32] {
        &self.doc_topic[d * self.topics..(d + 1) * self.topics]
    }

    /// Smoothed word distribution of one topic; sums to 1 within 1e-9.
    pub fn topic_word_dist(&self, k: usize) -> Result<Vec<f64>> {
        if k >= self.topics {
            return Err(Error::OutOfRange {
                what: "topic",
                index: k,
                len: self.topics,
            });
        }
        let v = self.vocab_len();
        let denom = self.topic_total[k] as f64 + v as f64 * self.beta;
        Ok((0..v)
            .map(|w| (self.topic_word[k * v + w] as f64 + self.beta) / denom)
            .collect())
    }

    /// The `n` most probable terms of topic `k`, descending; equal counts
    /// order by ascending vocabulary index. With a symmetric prior the
    /// probability order is the count order, so no floats are compared.
    pub fn top_keywords(&self, k: usize, n: usize) -> Result<Vec<String>> {
        if k >= self.topics {
            return Err(Error::OutOfRange {
                what: "topic",
                index: k,
                len: self.topics,
            });
        }
        let v = self.vocab_len();
        if n > v {
            return Err(Error::OutOfRange {
                what: "keyword count",
                index: n,
                len: v,
            });
        }
        let row = &self.topic_word[k * v..(k + 1) * v];
        let mut order: Vec<u32> = (0..v as u32).collect();
        order.sort_by(|&a, &b| {
            row[b as usize]
                .cmp(&row[a as usize])
                .then_with(|| a.cmp(&b))
        });
        Ok(order[..n]
            .iter()
            .map(|&w| self.vocab.term_of(w).to_string())
            .collect())
    }

    /// K x n grid of keywords, one row per topic.
    pub fn keyword_grid(&self, n: usize) -> Result<Vec<Vec<String>>> {
        (0..self.topics).map(|k| self.top_keywords(k, n)).collect()
    }

    /// Topic with the largest assignment count in document `d`; ties go to
    /// the lowest index.
    pub fn dominant_topic(&self, d: usize) -> Result<usize> {
        if d >= self.doc_count() {
            return Err(Error::OutOfRange {
                what: "document",
                index: d,
                len: self.doc_count(),
            });
        }
        let row = self.doc_topic_row(d);
        let mut best = 0;
        for (k, &c) in row.iter().enumerate() {
            if c > row[best] {
                best = k;
            }
        }
        Ok(best)
    }

    /// Collapsed joint log-probability log P(w, z | alpha, beta), constants
    /// included, so the value is a genuine log-probability (<= 0).
    pub fn log_likelihood(&self, docs: &[BagOfWords]) -> f64 {
        debug_assert_eq!(docs.len(), self.doc_count());
        joint_log_likelihood(
            self.topics,
            self.vocab_len(),
            self.alpha,
            self.beta,
            &self.topic_word,
            &self.topic_total,
            &self.doc_topic,
        )
    }

    /// Rebuilds all count matrices from (words, assignments) and compares;
    /// used by tests and by artifact loading.
    pub fn counts_consistent(&self) -> bool {
        let v = self.vocab_len();
        let k = self.topics;
        let mut topic_word = vec![0u32; k * v];
        let mut topic_total = vec![0u64; k];
        let mut doc_topic = vec![0u32; self.doc_count() * k];
        for (d, (ws, zs)) in self.words.iter().zip(&self.assignments).enumerate() {
            if ws.len() != zs.len() {
                return false;
            }
            for (&w, &z) in ws.iter().zip(zs) {
                if (w as usize) >= v || (z as usize) >= k {
                    return false;
                }
                topic_word[z as usize * v + w as usize] += 1;
                topic_total[z as usize] += 1;
                doc_topic[d * k + z as usize] += 1;
            }
        }
        topic_word == self.topic_word
            && topic_total == self.topic_total
            && doc_topic == self.doc_topic
    }

    pub fn write_to<W: Write>(&self, out: W, config_hash: &[u8; HASH_LEN]) -> Result<()> {
        let mut w = binio::Writer::new(out, MODEL_MAGIC, MODEL_VERSION, config_hash)?;
        w.u32(self.topics as u32)?;
        w.f64(self.alpha)?;
        w.f64(self.beta)?;
        w.u64(self.seed)?;
        w.u32(self.iterations as u32)?;
        w.u32(self.vocab.len() as u32)?;
        for term in &self.vocab.term_of {
            w.str(term)?;
        }
        w.u32_slice(&self.topic_word)?;
        w.u32(self.doc_count() as u32)?;
        w.u32_slice(&self.doc_topic)?;
        for (ws, zs) in self.words.iter().zip(&self.assignments) {
            w.u32_slice(ws)?;
            w.u32_slice(zs)?;
        }
        w.finish()
    }

    /// Bit-exact reload. Returns the model plus the config hash it was
    /// produced under.
    pub fn read_from<R: Read>(input: R, path: &str) -> Result<(Self, [u8; HASH_LEN])> {
        let mut r = binio::Reader::new(input, MODEL_MAGIC, MODEL_VERSION, path)?;
        let topics = r.u32()? as usize;
        let alpha = r.f64()?;
        let beta = r.f64()?;
        let seed = r.u64()?;
        let iterations = r.u32()? as usize;
        let v = r.u32()? as usize;
        let mut terms = Vec::with_capacity(v);
        for _ in 0..v {
            terms.push(r.str()?);
        }
        let id_of = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let vocab = Vocabulary {
            id_of,
            term_of: terms,
        };
        let topic_word = r.u32_vec()?;
        let docs = r.u32()? as usize;
        let doc_topic = r.u32_vec()?;
        let mut words = Vec::with_capacity(docs);
        let mut assignments = Vec::with_capacity(docs);
        for _ in 0..docs {
            words.push(r.u32_vec()?);
            assignments.push(r.u32_vec()?);
        }
        let mut topic_total = vec![0u64; topics];
        if topic_word.len() != topics * v || doc_topic.len() != docs * topics {
            return Err(Error::Artifact {
                path: path.to_string(),
                msg: "count matrix shape mismatch".into(),
            });
        }
        for k in 0..topics {
            topic_total[k] = topic_word[k * v..(k + 1) * v]
                .iter()
                .map(|&c| c as u64)
                .sum();
        }
        let model = Self {
            topics,
            vocab,
            alpha,
            beta,
            seed,
            iterations,
            topic_word,
            topic_total,
            doc_topic,
            words,
            assignments,
        };
        if !model.counts_consistent() {
            return Err(Error::Artifact {
                path: path.to_string(),
                msg: "counts are inconsistent with assignments".into(),
            });
        }
        Ok((model, r.config_hash))
    }
}

fn joint_log_likelihood(
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    topic_word: &[u32],
    topic_total: &[u64],
    doc_topic: &[u32],
) -> f64 {
    let docs = doc_topic.len() / k;
    let mut ll = 0.0;
    let ka = k as f64 * alpha;
    for d in 0..docs {
        let row = &doc_topic[d * k..(d + 1) * k];
        let nd: u64 = row.iter().map(|&c| c as u64).sum();
        ll += ln_gamma(ka) - ln_gamma(nd as f64 + ka);
        for &c in row {
            ll += ln_gamma(c as f64 + alpha) - ln_gamma(alpha);
        }
    }
    let vb = v as f64 * beta;
    for t in 0..k {
        ll += ln_gamma(vb) - ln_gamma(topic_total[t] as f64 + vb);
        for &c in &topic_word[t * v..(t + 1) * v] {
            ll += ln_gamma(c as f64 + beta) - ln_gamma(beta);
        }
    }
    ll
}

/// Mutable chain state. `fit_lda` drives it to completion; tests and the
/// CLI can also step it sweep by sweep.
pub struct GibbsSampler {
    config: GibbsConfig,
    vocab: Vocabulary,
    words: Vec<Vec<u32>>,
    assignments: Vec<Vec<u32>>,
    topic_word: Vec<u32>,
    topic_total: Vec<u64>,
    doc_topic: Vec<u32>,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
}

impl GibbsSampler {
    pub fn new(docs: &[BagOfWords], config: &GibbsConfig) -> Result<Self> {
        config.validate()?;
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let vocab = Vocabulary::from_docs(docs);
        let total_tokens: u64 = docs.iter().map(|b| b.total()).sum();
        if total_tokens == 0 {
            return Err(Error::ZeroTokenCorpus);
        }
        let k = config.topics;
        let v = vocab.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut words = Vec::with_capacity(docs.len());
        let mut assignments = Vec::with_capacity(docs.len());
        let mut topic_word = vec![0u32; k * v];
        let mut topic_total = vec![0u64; k];
        let mut doc_topic = vec![0u32; docs.len() * k];
        for (d, bag) in docs.iter().enumerate() {
            let mut ws = Vec::with_capacity(bag.total() as usize);
            let mut zs = Vec::with_capacity(bag.total() as usize);
            // Bags iterate in term order, which is vocabulary-index order.
            for (term, count) in bag.iter() {
                let w = vocab.id_of(term).expect("vocab built from these docs");
                for _ in 0..count {
                    let z = rng.random_range(0..k) as u32;
                    ws.push(w);
                    zs.push(z);
                    topic_word[z as usize * v + w as usize] += 1;
                    topic_total[z as usize] += 1;
                    doc_topic[d * k + z as usize] += 1;
                }
            }
            words.push(ws);
            assignments.push(zs);
        }
        Ok(Self {
            config: config.clone(),
            vocab,
            words,
            assignments,
            topic_word,
            topic_total,
            doc_topic,
            rng,
            weights: vec![0.0; k],
        })
    }

    /// One full pass resampling every token from the collapsed conditional
    /// p(z = k) ~ (n_dk + alpha) * (n_kw + beta) / (n_k + V*beta), with the
    /// token's own count removed.
    pub fn sweep(&mut self) {
        let k = self.config.topics;
        let v = self.vocab.len();
        let alpha = self.config.alpha;
        let beta = self.config.beta;
        let vb = v as f64 * beta;
        for d in 0..self.words.len() {
            let doc_row = d * k;
            for i in 0..self.words[d].len() {
                let w = self.words[d][i] as usize;
                let old = self.assignments[d][i] as usize;
                self.doc_topic[doc_row + old] -= 1;
                self.topic_word[old * v + w] -= 1;
                self.topic_total[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    let p = (self.doc_topic[doc_row + t] as f64 + alpha)
                        * (self.topic_word[t * v + w] as f64 + beta)
                        / (self.topic_total[t] as f64 + vb);
                    total += p;
                    self.weights[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let mut new = k - 1;
                for (t, &cum) in self.weights.iter().enumerate() {
                    if u < cum {
                        new = t;
                        break;
                    }
                }
                self.assignments[d][i] = new as u32;
                self.doc_topic[doc_row + new] += 1;
                self.topic_word[new * v + w] += 1;
                self.topic_total[new] += 1;
            }
        }
    }

    pub fn log_likelihood(&self) -> f64 {
        joint_log_likelihood(
            self.config.topics,
            self.vocab.len(),
            self.config.alpha,
            self.config.beta,
            &self.topic_word,
            &self.topic_total,
            &self.doc_topic,
        )
    }

    pub fn into_model(self) -> TopicModel {
        TopicModel {
            topics: self.config.topics,
            vocab: self.vocab,
            alpha: self.config.alpha,
            beta: self.config.beta,
            seed: self.config.seed,
            iterations: self.config.iterations,
            topic_word: self.topic_word,
            topic_total: self.topic_total,
            doc_topic: self.doc_topic,
            words: self.words,
            assignments: self.assignments,
        }
    }
}

/// Runs the configured number of full sweeps and returns the final state.
pub fn fit_lda(docs: &[BagOfWords], config: &GibbsConfig) -> Result<TopicModel> {
    let mut sampler = GibbsSampler::new(docs, config)?;
    for _ in 0..config.iterations {
        sampler.sweep();
    }
    Ok(sampler.into_model())
}
