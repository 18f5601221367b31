//! Seeded synthetic worlds with known planted structure.
//!
//! Worlds carry their ground truth (topic-word distributions, per-document
//! dominant topics, per-company credibility) next to file contents that the
//! regular loaders can parse, so every statistical claim downstream can be
//! checked against construction instead of against the implementation
//! under test.
//!
//! All randomness flows from one generator in a fixed phase order: planted
//! topics, per-company attributes, mention slots, documents, ratings,
//! investigations. Identical configs therefore give byte-identical worlds.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Article, Company};
use crate::error::{Error, Result};
use crate::features::KEYWORDS_PER_TOPIC;
use crate::lexicon::{BagOfWords, Lexicon};

/// Vocabulary terms are two-codepoint pairs drawn from two disjoint CJK
/// char bands, so term boundaries can never be misread inside concatenated
/// bodies and none of the structural characters (company names, title
/// filler) collide with them.
const FIRST_CHAR_BASE: u32 = 0x4E00;
const SECOND_CHAR_BASE: u32 = 0x5200;
const SECOND_CHAR_SPAN: u32 = 40;
const MAX_VOCAB: usize = 1600;

/// Largest planted mention count; counts spread over [1, 1 + this].
const MENTION_SPREAD: f64 = 63.0;
/// Investigation counts take values in [1, 1 + this].
const INVESTIGATION_SPREAD: f64 = 23.0;
/// Probability that an article refers to a company by its alias.
const ALIAS_RATE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub topics: usize,
    pub vocab: usize,
    pub docs: usize,
    pub doc_length: usize,
    pub companies: usize,
    pub rated: usize,
    /// 0 decouples articles and ratings from the planted credibility;
    /// 1 makes them encode it as cleanly as the noise floors allow.
    pub signal_strength: f64,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.topics < 2
            || self.docs == 0
            || self.doc_length == 0
            || self.companies == 0
            || self.rated == 0
        {
            return Err(Error::InvalidConfig("synth counts must be positive".into()));
        }
        if self.rated > self.companies {
            return Err(Error::InvalidConfig(
                "rated companies cannot exceed the company count".into(),
            ));
        }
        if self.vocab < self.topics * KEYWORDS_PER_TOPIC {
            return Err(Error::VocabTooSmall {
                vocab: self.vocab,
                topics: self.topics,
                per_topic: KEYWORDS_PER_TOPIC,
            });
        }
        if self.vocab > MAX_VOCAB {
            return Err(Error::InvalidConfig(format!(
                "synth vocab is capped at {MAX_VOCAB} terms"
            )));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return Err(Error::InvalidConfig(
                "signal strength must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub lexicon: Lexicon,
    pub articles: Vec<Article>,
    pub companies: Vec<Company>,
    pub planted_topic_word: Vec<Vec<f64>>,
    /// Realized dominant topic per document.
    pub planted_doc_topic: Vec<usize>,
    pub planted_credibility: BTreeMap<String, f64>,
    /// Investigation count per investigated company.
    pub planted_investigations: BTreeMap<String, u64>,
    pub rated_ids: Vec<String>,
    pub lexicon_file: String,
    pub articles_file: String,
    pub companies_file: String,
    pub ratings_file: String,
    pub investigations_file: String,
}

fn make_terms(vocab: usize) -> Vec<String> {
    (0..vocab)
        .map(|i| {
            let a = char::from_u32(FIRST_CHAR_BASE + (i as u32 / SECOND_CHAR_SPAN)).unwrap();
            let b = char::from_u32(SECOND_CHAR_BASE + (i as u32 % SECOND_CHAR_SPAN)).unwrap();
            format!("{a}{b}")
        })
        .collect()
}

/// Topic k owns the anchor block [k*10, k*10+10): 60% of its mass spread
/// over the anchors in strictly decreasing steps, the rest jittered
/// uniformly over the other words. Anchor weights dominate every non-anchor
/// weight, so the planted top-10 keyword order is exactly the block order.
fn make_topic_word(rng: &mut ChaCha8Rng, topics: usize, vocab: usize) -> Vec<Vec<f64>> {
    let mut dists = Vec::with_capacity(topics);
    // The smallest anchor weight is 0.6/55; keeping jittered non-anchor
    // weights below it preserves the planted keyword order for any vocab.
    let base = (0.4 / (vocab - KEYWORDS_PER_TOPIC) as f64).min(0.0068);
    for k in 0..topics {
        let block = k * KEYWORDS_PER_TOPIC;
        let mut weights = vec![0.0; vocab];
        for w in &mut weights {
            *w = base * rng.random_range(0.5..1.5);
        }
        for j in 0..KEYWORDS_PER_TOPIC {
            weights[block + j] = 0.6 * (KEYWORDS_PER_TOPIC - j) as f64 / 55.0;
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        dists.push(weights);
    }
    dists
}

fn sample_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut cum = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        cum += w;
        if u < cum {
            return i;
        }
    }
    weights.len() - 1
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

fn blend(noise: f64, credibility: f64, signal: f64) -> f64 {
    (1.0 - signal) * noise + signal * credibility
}

fn spread_date(start: NaiveDate, span_days: u64, index: usize, total: usize) -> NaiveDate {
    let offset = if total <= 1 {
        0
    } else {
        (index as u64 * span_days) / (total as u64 - 1).max(1)
    };
    start + Days::new(offset)
}

pub fn generate(config: &SynthConfig) -> Result<SynthWorld> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let signal = config.signal_strength;

    // Phase 1: vocabulary and planted topics.
    let terms = make_terms(config.vocab);
    let planted_topic_word = make_topic_word(&mut rng, config.topics, config.vocab);

    // Phase 2: companies and their latent attributes.
    let width = config.companies.to_string().len().max(4);
    let mut companies = Vec::with_capacity(config.companies);
    let mut credibility = Vec::with_capacity(config.companies);
    let mut mention_noise = Vec::with_capacity(config.companies);
    let mut topic_noise = Vec::with_capacity(config.companies);
    let mut rating_noise = Vec::with_capacity(config.companies);
    for i in 0..config.companies {
        let tag = format!("{:0width$}", i + 1, width = width);
        companies.push(Company {
            id: format!("C{tag}"),
            canonical_name: format!("公司{tag}"),
            aliases: vec![format!("集团{tag}")],
        });
        credibility.push(rng.random::<f64>());
        mention_noise.push(rng.random::<f64>());
        topic_noise.push(rng.random::<f64>());
        rating_noise.push(rng.random::<f64>());
    }

    // Phase 3: planted mention counts and their document slots.
    let mention_counts: Vec<u64> = (0..config.companies)
        .map(|c| 1 + (blend(mention_noise[c], credibility[c], signal) * MENTION_SPREAD) as u64)
        .collect();
    let mut slots: Vec<usize> = Vec::new();
    for (c, &m) in mention_counts.iter().enumerate() {
        slots.extend(std::iter::repeat(c).take(m as usize));
    }
    shuffle(&mut slots, &mut rng);
    let mut doc_members: Vec<Vec<usize>> = vec![Vec::new(); config.docs];
    for (s, &c) in slots.iter().enumerate() {
        let d = s % config.docs;
        if !doc_members[d].contains(&c) {
            doc_members[d].push(c);
        }
    }

    // Phase 4: documents. The topic mixture is 10% uniform spill, 30% a
    // random flavor topic, and 60% split between the high-credibility topic
    // (last) and the low-credibility topic (0) by the members' blended
    // credibility.
    let date_start = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap();
    let mut articles = Vec::with_capacity(config.docs);
    let mut planted_doc_topic = Vec::with_capacity(config.docs);
    let id_width = config.docs.to_string().len().max(4);
    let mut theta = vec![0.0; config.topics];
    for d in 0..config.docs {
        let members = &doc_members[d];
        let tilt = if members.is_empty() {
            rng.random::<f64>()
        } else {
            members
                .iter()
                .map(|&c| blend(topic_noise[c], credibility[c], signal))
                .sum::<f64>()
                / members.len() as f64
        };
        let flavor = rng.random_range(0..config.topics);
        for (k, t) in theta.iter_mut().enumerate() {
            *t = 0.10 / config.topics as f64;
            if k == flavor {
                *t += 0.30;
            }
        }
        theta[config.topics - 1] += 0.60 * tilt;
        theta[0] += 0.60 * (1.0 - tilt);

        let mut topic_counts = vec![0u32; config.topics];
        let mut body = String::new();
        let mut title_name: Option<String> = None;
        for &c in members {
            let company = &companies[c];
            let name = if rng.random::<f64>() < ALIAS_RATE {
                company.aliases[0].clone()
            } else {
                company.canonical_name.clone()
            };
            if title_name.is_none() {
                title_name = Some(name.clone());
            }
            body.push_str(&name);
        }
        for _ in 0..config.doc_length {
            let z = sample_index(&mut rng, &theta);
            let w = sample_index(&mut rng, &planted_topic_word[z]);
            topic_counts[z] += 1;
            body.push_str(&terms[w]);
        }
        let mut label = 0;
        for (k, &c) in topic_counts.iter().enumerate() {
            if c > topic_counts[label] {
                label = k;
            }
        }
        planted_doc_topic.push(label);
        let title = format!(
            "关于{}的报道",
            title_name.unwrap_or_else(|| "市况".to_string())
        );
        articles.push(Article {
            id: format!("a{:0id_width$}", d + 1, id_width = id_width),
            date: spread_date(date_start, 272, d, config.docs).to_string(),
            title,
            body,
        });
    }

    // Phase 5: ratings for a seeded company subset, written in id order.
    let mut order: Vec<usize> = (0..config.companies).collect();
    shuffle(&mut order, &mut rng);
    let mut rated: Vec<usize> = order[..config.rated].to_vec();
    rated.sort_unstable();
    let rated_ids: Vec<String> = rated.iter().map(|&c| companies[c].id.clone()).collect();
    let mut ratings_file = String::new();
    for &c in &rated {
        let raters = 3 + rng.random_range(0..3u32);
        let base = blend(rating_noise[c], credibility[c], signal);
        for r in 0..raters {
            let value = (base + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0);
            ratings_file.push_str(&format!(
                "{},r{:02},{:.4}\n",
                companies[c].id,
                r + 1,
                1.0 + 4.0 * value
            ));
        }
    }

    // Phase 6: investigation counts, anti-ordered to credibility by
    // construction regardless of signal strength.
    let mut inv_order: Vec<usize> = (0..config.companies).collect();
    shuffle(&mut inv_order, &mut rng);
    let investigated_n = (2 * config.rated).min(config.companies);
    let mut investigated: Vec<usize> = inv_order[..investigated_n].to_vec();
    investigated.sort_unstable();
    let mut inv_counts: Vec<u64> = investigated
        .iter()
        .map(|&c| 1 + ((1.0 - credibility[c]) * INVESTIGATION_SPREAD).round() as u64)
        .collect();
    if inv_counts.iter().min() == inv_counts.iter().max() && !inv_counts.is_empty() {
        // Tiny worlds can land every company in one count bucket; nudge the
        // least credible one so min-max normalization stays defined.
        let worst = investigated
            .iter()
            .enumerate()
            .min_by(|a, b| {
                credibility[*a.1]
                    .partial_cmp(&credibility[*b.1])
                    .unwrap()
                    .then(a.1.cmp(b.1))
            })
            .map(|(i, _)| i)
            .unwrap();
        inv_counts[worst] += 1;
    }
    let inv_start = NaiveDate::from_ymd_opt(2017, 1, 5).unwrap();
    let mut investigations_file = String::new();
    let mut planted_investigations = BTreeMap::new();
    for (i, (&c, &count)) in investigated.iter().zip(&inv_counts).enumerate() {
        planted_investigations.insert(companies[c].id.clone(), count);
        for k in 0..count {
            let day = (i as u64 * 7 + k * 13) % 260;
            investigations_file.push_str(&format!(
                "{},{}\n",
                companies[c].id,
                inv_start + Days::new(day)
            ));
        }
    }

    // File renderings.
    let mut lexicon_file = String::new();
    for t in &terms {
        lexicon_file.push_str(t);
        lexicon_file.push('\n');
    }
    let mut articles_file = String::new();
    for a in &articles {
        articles_file.push_str(&serde_json::to_string(a).expect("article serializes"));
        articles_file.push('\n');
    }
    let mut companies_file = String::new();
    for c in &companies {
        companies_file.push_str(&format!(
            "{},{},{}\n",
            c.id,
            c.canonical_name,
            c.aliases.join(",")
        ));
    }

    let planted_credibility = companies
        .iter()
        .zip(&credibility)
        .map(|(c, &v)| (c.id.clone(), v))
        .collect();
    Ok(SynthWorld {
        lexicon: Lexicon::new(terms)?,
        articles,
        companies,
        planted_topic_word,
        planted_doc_topic,
        planted_credibility,
        planted_investigations,
        rated_ids,
        lexicon_file,
        articles_file,
        companies_file,
        ratings_file,
        investigations_file,
    })
}

/// Bare planted corpus for topic-recovery tests: documents are bags drawn
/// from an 85/15 mixture of one primary topic and uniform spill, with the
/// realized dominant topic kept as the label.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub terms: Vec<String>,
    pub topic_word: Vec<Vec<f64>>,
    pub bags: Vec<BagOfWords>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct TopicCorpusConfig {
    pub seed: u64,
    pub topics: usize,
    pub vocab: usize,
    pub docs: usize,
    pub doc_length: usize,
}

pub fn generate_topic_corpus(config: &TopicCorpusConfig) -> Result<PlantedCorpus> {
    if config.topics < 2 || config.docs == 0 || config.doc_length == 0 {
        return Err(Error::InvalidConfig("corpus counts must be positive".into()));
    }
    if config.vocab < config.topics * KEYWORDS_PER_TOPIC {
        return Err(Error::VocabTooSmall {
            vocab: config.vocab,
            topics: config.topics,
            per_topic: KEYWORDS_PER_TOPIC,
        });
    }
    if config.vocab > MAX_VOCAB {
        return Err(Error::InvalidConfig(format!(
            "synth vocab is capped at {MAX_VOCAB} terms"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let terms = make_terms(config.vocab);
    let topic_word = make_topic_word(&mut rng, config.topics, config.vocab);
    let mut theta = vec![0.0; config.topics];
    let mut bags = Vec::with_capacity(config.docs);
    let mut labels = Vec::with_capacity(config.docs);
    for _ in 0..config.docs {
        let primary = rng.random_range(0..config.topics);
        for (k, t) in theta.iter_mut().enumerate() {
            *t = 0.15 / config.topics as f64 + if k == primary { 0.85 } else { 0.0 };
        }
        let mut topic_counts = vec![0u32; config.topics];
        let mut word_counts: BTreeMap<String, u64> = BTreeMap::new();
        for _ in 0..config.doc_length {
            let z = sample_index(&mut rng, &theta);
            let w = sample_index(&mut rng, &topic_word[z]);
            topic_counts[z] += 1;
            *word_counts.entry(terms[w].clone()).or_insert(0) += 1;
        }
        let mut label = 0;
        for (k, &c) in topic_counts.iter().enumerate() {
            if c > topic_counts[label] {
                label = k;
            }
        }
        labels.push(label);
        bags.push(BagOfWords::from_counts(word_counts));
    }
    Ok(PlantedCorpus {
        terms,
        topic_word,
        bags,
        labels,
    })
}

/// Total variation distance between two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p
        .iter()
        .zip(q)
        .map(|(&a, &b)| (a - b).abs())
        .sum::<f64>()
}

/// Greedy one-to-one matching of learned topics onto planted topics by
/// ascending total variation; returns `matched[planted] = learned`.
pub fn greedy_match(learned: &[Vec<f64>], planted: &[Vec<f64>]) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (p, planted_dist) in planted.iter().enumerate() {
        for (l, learned_dist) in learned.iter().enumerate() {
            pairs.push((total_variation(learned_dist, planted_dist), p, l));
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut matched = vec![usize::MAX; planted.len()];
    let mut used_planted = vec![false; planted.len()];
    let mut used_learned = vec![false; learned.len()];
    for (_, p, l) in pairs {
        if !used_planted[p] && !used_learned[l] {
            matched[p] = l;
            used_planted[p] = true;
            used_learned[l] = true;
        }
    }
    matched
}
