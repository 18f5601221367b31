//! Rating ingestion, SGD training, scoring and ranking.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::{self, HASH_LEN};
use crate::error::{Error, Result};
use crate::features::{construct_image, CompanyFeatures, FeatureConfig};
use crate::network::{
    backward, forward, init_params, loss, Mat, NetworkHyper, NetworkParams, FC_LAYERS,
};

const CHECKPOINT_MAGIC: &[u8; 8] = b"CSNETCKP";
const CHECKPOINT_VERSION: u32 = 1;

/// Per-company targets in [0, 1]: mean of the raw evaluations, min-max
/// normalized over the loaded set. `provenance` counts the raw evaluations
/// behind each target.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingSet {
    pub ratings: BTreeMap<String, f64>,
    pub provenance: BTreeMap<String, u32>,
}

impl RatingSet {
    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }
}

/// Rows of (company_id, rater_id, raw_score). Every company id must be in
/// `known_ids`.
pub fn load_ratings<R: Read>(source: R, known_ids: &HashSet<String>) -> Result<RatingSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_reader(source);
    let mut sums: BTreeMap<String, (f64, u32)> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected company_id,rater_id,raw_score, got {} fields", record.len()),
            });
        }
        let company = record.get(0).unwrap_or_default();
        let raw = record.get(2).unwrap_or_default();
        if !known_ids.contains(company) {
            return Err(Error::UnknownCompany {
                id: company.to_string(),
            });
        }
        let score: f64 = raw.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("non-numeric score {raw:?}"),
        })?;
        let entry = sums.entry(company.to_string()).or_insert((0.0, 0));
        entry.0 += score;
        entry.1 += 1;
    }
    let means: BTreeMap<String, f64> = sums
        .iter()
        .map(|(id, &(sum, n))| (id.clone(), sum / n as f64))
        .collect();
    let lo = means.values().copied().fold(f64::INFINITY, f64::min);
    let hi = means.values().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::DegenerateNormalization {
            what: "rating means",
        });
    }
    let ratings = means
        .iter()
        .map(|(id, &m)| (id.clone(), (m - lo) / (hi - lo)))
        .collect();
    let provenance = sums.iter().map(|(id, &(_, n))| (id.clone(), n)).collect();
    Ok(RatingSet {
        ratings,
        provenance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.5,
            seed: 13,
            shuffle: true,
            holdout_fraction: 0.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::InvalidConfig(
                "holdout fraction must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// One labeled training example.
#[derive(Debug, Clone)]
pub struct Example {
    pub company_id: String,
    pub image: Vec<f64>,
    pub data1_norm: f64,
    pub target: f64,
}

/// Raw article counts are compressed as log(1 + n) / log(1 + cap) and
/// clamped to [0, 1]; `cap` is the training-set maximum, stored in the
/// checkpoint so inference reuses the same scale.
pub fn normalize_article_count(count: u64, cap: u64) -> f64 {
    let cap = cap.max(1);
    let v = (1.0 + count as f64).ln() / (1.0 + cap as f64).ln();
    v.clamp(0.0, 1.0)
}

/// Builds training examples for the rated companies. Fails if a rated
/// company has no features.
pub fn build_examples(
    features: &[CompanyFeatures],
    targets: &RatingSet,
    feature_config: &FeatureConfig,
) -> Result<(Vec<Example>, u64)> {
    let by_id: HashMap<&str, &CompanyFeatures> = features
        .iter()
        .map(|f| (f.company_id.as_str(), f))
        .collect();
    let mut cap = 1u64;
    for id in targets.ratings.keys() {
        match by_id.get(id.as_str()) {
            Some(f) => cap = cap.max(f.article_count),
            None => {
                return Err(Error::Mismatch(format!(
                    "rated company {id} has no features (zero mentions?)"
                )))
            }
        }
    }
    let examples = targets
        .ratings
        .iter()
        .map(|(id, &target)| {
            let f = by_id[id.as_str()];
            Example {
                company_id: id.clone(),
                image: construct_image(f, feature_config).pixels,
                data1_norm: normalize_article_count(f.article_count, cap),
                target,
            }
        })
        .collect();
    Ok((examples, cap))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    /// Mean training loss per epoch, measured before each example's update.
    pub loss_history: Vec<f64>,
    /// Company ids excluded from every gradient update.
    pub holdout_ids: Vec<String>,
}

/// Plain per-example SGD with a fixed rate. The holdout split (stream 1 of
/// the seed) happens before training; the per-epoch shuffle (stream 2)
/// walks the training subset only, so a run over the pre-split subset with
/// holdout 0 reproduces the same parameters bit for bit.
pub fn train(
    examples: &[Example],
    hyper: &NetworkHyper,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if examples.len() < 2 {
        return Err(Error::Mismatch(format!(
            "need at least 2 labeled examples, got {}",
            examples.len()
        )));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let holdout_n = (config.holdout_fraction * examples.len() as f64).floor() as usize;
    let mut holdout_ids = Vec::new();
    if holdout_n > 0 {
        let mut split_rng = ChaCha8Rng::seed_from_u64(config.seed);
        split_rng.set_stream(1);
        shuffle(&mut order, &mut split_rng);
        let held: Vec<usize> = order.split_off(examples.len() - holdout_n);
        holdout_ids = held
            .iter()
            .map(|&i| examples[i].company_id.clone())
            .collect();
        holdout_ids.sort_unstable();
        order.sort_unstable();
    }
    if order.len() < 2 {
        return Err(Error::Mismatch(
            "holdout leaves fewer than 2 training examples".into(),
        ));
    }

    let mut params = init_params(hyper)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(2);
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut images: Vec<crate::features::FeatureImage> = Vec::with_capacity(examples.len());
    for ex in examples {
        images.push(crate::features::FeatureImage {
            rows: hyper.image_rows,
            pixels: ex.image.clone(),
        });
    }
    for _ in 0..config.epochs {
        if config.shuffle {
            shuffle(&mut order, &mut shuffle_rng);
        }
        let mut epoch_loss = 0.0;
        for &i in &order {
            let ex = &examples[i];
            let trace = forward(&params, &images[i], ex.data1_norm)?;
            epoch_loss += loss(trace.score, ex.target);
            let (grads, _) = backward(&params, &trace, ex.target)?;
            params.step(&grads, config.learning_rate);
        }
        loss_history.push(epoch_loss / order.len() as f64);
    }
    Ok(TrainOutcome {
        params,
        loss_history,
        holdout_ids,
    })
}

fn shuffle(items: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub company_id: String,
    pub score: f64,
}

/// Companies ordered by score descending, ties broken by ascending id, so
/// the output bytes are stable.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    entries: Vec<RankEntry>,
}

impl Ranking {
    pub fn from_scores(mut entries: Vec<RankEntry>) -> Self {
        entries.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("scores are finite")
                .then_with(|| a.company_id.cmp(&b.company_id))
        });
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    /// 1-based rank per company id.
    pub fn rank_map(&self) -> HashMap<&str, usize> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.company_id.as_str(), i + 1))
            .collect()
    }

    /// Same companies in exactly reversed order.
    pub fn reversed(&self) -> Self {
        let mut entries = self.entries.clone();
        entries.reverse();
        Self { entries }
    }

    pub fn write_csv<W: Write>(&self, mut out: W, config_hash_hex: &str) -> Result<()> {
        writeln!(out, "# config_hash={config_hash_hex}")?;
        for (i, e) in self.entries.iter().enumerate() {
            writeln!(out, "{},{},{:.6}", i + 1, e.company_id, e.score)?;
        }
        Ok(())
    }
}

/// Scores every company with a forward pass.
pub fn predict_all(
    params: &NetworkParams,
    features: &[CompanyFeatures],
    feature_config: &FeatureConfig,
    hyper: &NetworkHyper,
    article_cap: u64,
) -> Result<Ranking> {
    let mut entries = Vec::with_capacity(features.len());
    for f in features {
        let image = construct_image(f, feature_config);
        if image.rows != hyper.image_rows {
            return Err(Error::ShapeMismatch {
                expected: format!("{} image rows", hyper.image_rows),
                got: format!("{} rows for {}", image.rows, f.company_id),
            });
        }
        let trace = forward(
            params,
            &image,
            normalize_article_count(f.article_count, article_cap),
        )?;
        entries.push(RankEntry {
            company_id: f.company_id.clone(),
            score: trace.score,
        });
    }
    Ok(Ranking::from_scores(entries))
}

/// Everything the rank stage needs: architecture, weights and the
/// article-count cap fixed at training time.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub hyper: NetworkHyper,
    pub params: NetworkParams,
    pub article_cap: u64,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, out: W, config_hash: &[u8; HASH_LEN]) -> Result<()> {
        let mut w = binio::Writer::new(out, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, config_hash)?;
        w.u32(self.hyper.image_rows as u32)?;
        w.u32(self.hyper.conv_filters as u32)?;
        for width in self.hyper.widths {
            w.u32(width as u32)?;
        }
        w.u64(self.hyper.seed)?;
        w.u64(self.article_cap)?;
        w.f64_slice(&self.params.conv_weight.data)?;
        w.f64_slice(&self.params.conv_bias)?;
        for l in 0..FC_LAYERS {
            w.f64_slice(&self.params.fc_weight[l].data)?;
            w.f64_slice(&self.params.fc_bias[l])?;
        }
        w.f64_slice(&self.params.out_weight.data)?;
        w.f64(self.params.out_bias)?;
        w.finish()
    }

    pub fn read_from<R: Read>(input: R, path: &str) -> Result<(Self, [u8; HASH_LEN])> {
        let mut r = binio::Reader::new(input, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, path)?;
        let image_rows = r.u32()? as usize;
        let conv_filters = r.u32()? as usize;
        let mut widths = [0usize; FC_LAYERS];
        for w in &mut widths {
            *w = r.u32()? as usize;
        }
        let seed = r.u64()?;
        let hyper = NetworkHyper {
            image_rows,
            conv_filters,
            widths,
            seed,
        };
        hyper
            .validate()
            .map_err(|e| Error::Artifact {
                path: path.to_string(),
                msg: e.to_string(),
            })?;
        let article_cap = r.u64()?;
        let mut params = NetworkParams::zeros(&hyper).map_err(|e| Error::Artifact {
            path: path.to_string(),
            msg: e.to_string(),
        })?;
        let restore = |m: &mut Mat, data: Vec<f64>| -> Result<()> {
            if data.len() != m.data.len() {
                return Err(Error::Artifact {
                    path: path.to_string(),
                    msg: "tensor length mismatch".into(),
                });
            }
            m.data = data;
            Ok(())
        };
        restore(&mut params.conv_weight, r.f64_vec()?)?;
        params.conv_bias = r.f64_vec()?;
        for l in 0..FC_LAYERS {
            let w = r.f64_vec()?;
            restore(&mut params.fc_weight[l], w)?;
            params.fc_bias[l] = r.f64_vec()?;
        }
        restore(&mut params.out_weight, r.f64_vec()?)?;
        params.out_bias = r.f64()?;
        Ok((
            Self {
                hyper,
                params,
                article_cap,
            },
            r.config_hash,
        ))
    }
}
