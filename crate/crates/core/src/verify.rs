//! Negative-rating verification: regulator-investigation targets, rank
//! agreement between the credibility ranking and the investigation ranking,
//! and the k-fold harness around them.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{CompanyFeatures, FeatureConfig};
use crate::network::NetworkHyper;
use crate::training::{build_examples, predict_all, train, Ranking, RatingSet, TrainConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvestigationRecord {
    pub company_id: String,
    pub date: NaiveDate,
}

/// Comma-separated rows of (company_id, date).
pub fn load_investigations<R: Read>(
    source: R,
    known_ids: &HashSet<String>,
) -> Result<Vec<InvestigationRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_reader(source);
    let mut records = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected company_id,date, got {} fields", record.len()),
            });
        }
        let company_id = record.get(0).unwrap_or_default().to_string();
        if !known_ids.contains(&company_id) {
            return Err(Error::UnknownCompany { id: company_id });
        }
        let raw_date = record.get(1).unwrap_or_default();
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| Error::Parse {
            line,
            msg: format!("unparseable date {raw_date:?}"),
        })?;
        records.push(InvestigationRecord { company_id, date });
    }
    Ok(records)
}

/// Per-company investigation counts inside the corpus date window, min-max
/// normalized over the companies that have at least one record. Higher
/// means more investigated, so these targets are credibility-inverse.
pub type NegativeTargets = BTreeMap<String, f64>;

pub fn build_negative_targets(
    records: &[InvestigationRecord],
    window: Option<(NaiveDate, NaiveDate)>,
) -> Result<NegativeTargets> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for r in records {
        if let Some((lo, hi)) = window {
            if r.date < lo || r.date > hi {
                continue;
            }
        }
        *counts.entry(r.company_id.clone()).or_insert(0) += 1;
    }
    if counts.is_empty() {
        return Ok(BTreeMap::new());
    }
    let lo = *counts.values().min().unwrap();
    let hi = *counts.values().max().unwrap();
    if lo == hi {
        return Err(Error::DegenerateNormalization {
            what: "investigation counts",
        });
    }
    Ok(counts
        .into_iter()
        .map(|(id, c)| (id, (c - lo) as f64 / (hi - lo) as f64))
        .collect())
}

/// Fraction of companies whose position in the investigation ranking is
/// within `window` of their position in the reversed credibility ranking
/// (1 = most investigated vs 1 = least credible). Ranks come from the full
/// rankings; the fraction runs over their common companies.
pub fn rank_agreement(pos: &Ranking, neg: &Ranking, window: usize) -> Result<f64> {
    let common: Vec<&str> = common_ids(pos, neg);
    if common.is_empty() {
        return Err(Error::DisjointRankings);
    }
    Ok(agreement_over(pos, neg, window, common.iter().copied()))
}

/// Same statistic restricted to a chosen company subset (used per fold).
/// Subset members absent from either ranking are skipped.
pub fn rank_agreement_over<'a>(
    pos: &Ranking,
    neg: &Ranking,
    window: usize,
    subset: impl IntoIterator<Item = &'a str>,
) -> Result<f64> {
    let pos_ranks = pos.rank_map();
    let neg_ranks = neg.rank_map();
    let members: Vec<&str> = subset
        .into_iter()
        .filter(|id| pos_ranks.contains_key(id) && neg_ranks.contains_key(id))
        .collect();
    if members.is_empty() {
        return Err(Error::DisjointRankings);
    }
    Ok(agreement_over(pos, neg, window, members))
}

fn agreement_over<'a>(
    pos: &Ranking,
    neg: &Ranking,
    window: usize,
    ids: impl IntoIterator<Item = &'a str>,
) -> f64 {
    let pos_ranks = pos.rank_map();
    let neg_ranks = neg.rank_map();
    let n_pos = pos.len() as i64;
    let mut total = 0usize;
    let mut inside = 0usize;
    for id in ids {
        let rp = pos_ranks[id] as i64;
        let rn = neg_ranks[id] as i64;
        let reversed = n_pos + 1 - rp;
        total += 1;
        if (rn - reversed).unsigned_abs() as usize <= window {
            inside += 1;
        }
    }
    inside as f64 / total as f64
}

fn common_ids<'a>(a: &'a Ranking, b: &'a Ranking) -> Vec<&'a str> {
    let in_b: HashSet<&str> = b.entries().iter().map(|e| e.company_id.as_str()).collect();
    a.entries()
        .iter()
        .map(|e| e.company_id.as_str())
        .filter(|id| in_b.contains(id))
        .collect()
}

/// Tie-aware Spearman rank correlation of two paired samples.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Mismatch(format!(
            "paired samples of different lengths: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::TooFewCommon {
            got: xs.len(),
            need: 2,
        });
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateNormalization {
            what: "rank variances",
        });
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman correlation of two rankings over their common companies.
pub fn spearman(a: &Ranking, b: &Ranking) -> Result<f64> {
    let common = common_ids(a, b);
    if common.len() < 2 {
        return Err(Error::TooFewCommon {
            got: common.len(),
            need: 2,
        });
    }
    let ra = a.rank_map();
    let rb = b.rank_map();
    let xs: Vec<f64> = common.iter().map(|id| ra[id] as f64).collect();
    let ys: Vec<f64> = common.iter().map(|id| rb[id] as f64).collect();
    spearman_rho(&xs, &ys)
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub per_fold: Vec<f64>,
    pub mean: f64,
    /// Spearman of the full-data positive ranking against the negative one.
    pub spearman_pos_neg: f64,
    /// Agreement of the full-data rankings over every common company.
    pub full_agreement: f64,
    pub pos_ranking: Ranking,
    pub neg_ranking: Ranking,
    pub window: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct CvConfig {
    pub folds: usize,
    pub window: usize,
    pub seed: u64,
}

/// Trains the negative model once on the investigation targets, then folds
/// the rated companies: each fold's positive model trains on the other
/// folds and is scored by rank agreement over the held-out companies only.
pub fn cross_validate(
    features: &[CompanyFeatures],
    ratings: &RatingSet,
    negatives: &NegativeTargets,
    feature_config: &FeatureConfig,
    hyper: &NetworkHyper,
    train_config: &TrainConfig,
    cv: &CvConfig,
) -> Result<CrossValidation> {
    if cv.folds < 2 {
        return Err(Error::InvalidConfig("folds must be >= 2".into()));
    }
    if cv.folds > ratings.len() {
        return Err(Error::FoldTooLarge {
            folds: cv.folds,
            items: ratings.len(),
        });
    }
    if negatives.is_empty() {
        return Err(Error::Mismatch(
            "no negative targets: no investigated companies in window".into(),
        ));
    }

    let (pos_ranking, neg_ranking) =
        rank_pair(features, ratings, negatives, feature_config, hyper, train_config)?;
    let spearman_pos_neg = spearman(&pos_ranking, &neg_ranking)?;
    let full_agreement = rank_agreement(&pos_ranking, &neg_ranking, cv.window)?;

    // Seeded fold assignment over the rated companies.
    let mut rated: Vec<&String> = ratings.ratings.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cv.seed);
    for i in (1..rated.len()).rev() {
        let j = rng.random_range(0..=i);
        rated.swap(i, j);
    }
    let mut per_fold = Vec::with_capacity(cv.folds);
    for fold in 0..cv.folds {
        let held: HashSet<&str> = rated
            .iter()
            .enumerate()
            .filter(|(i, _)| i % cv.folds == fold)
            .map(|(_, id)| id.as_str())
            .collect();
        let fold_ratings = RatingSet {
            ratings: ratings
                .ratings
                .iter()
                .filter(|(id, _)| !held.contains(id.as_str()))
                .map(|(id, &v)| (id.clone(), v))
                .collect(),
            provenance: BTreeMap::new(),
        };
        let fold_ranking =
            fit_and_rank(features, &fold_ratings, feature_config, hyper, train_config)?;
        per_fold.push(rank_agreement_over(
            &fold_ranking,
            &neg_ranking,
            cv.window,
            held.iter().copied(),
        )?);
    }
    let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
    Ok(CrossValidation {
        per_fold,
        mean,
        spearman_pos_neg,
        full_agreement,
        pos_ranking,
        neg_ranking,
        window: cv.window,
    })
}

/// Trains the positive model on the ratings and the negative model on the
/// investigation targets (same architecture, its own derived init seed so
/// the two never share weights), then scores every company with both.
pub fn rank_pair(
    features: &[CompanyFeatures],
    ratings: &RatingSet,
    negatives: &NegativeTargets,
    feature_config: &FeatureConfig,
    hyper: &NetworkHyper,
    train_config: &TrainConfig,
) -> Result<(Ranking, Ranking)> {
    let negative_ratings = RatingSet {
        ratings: negatives.clone(),
        provenance: BTreeMap::new(),
    };
    let neg_hyper = NetworkHyper {
        seed: hyper.seed.wrapping_add(0x4e45_4741),
        ..hyper.clone()
    };
    let neg_ranking =
        fit_and_rank(features, &negative_ratings, feature_config, &neg_hyper, train_config)?;
    let pos_ranking = fit_and_rank(features, ratings, feature_config, hyper, train_config)?;
    Ok((pos_ranking, neg_ranking))
}

fn fit_and_rank(
    features: &[CompanyFeatures],
    targets: &RatingSet,
    feature_config: &FeatureConfig,
    hyper: &NetworkHyper,
    train_config: &TrainConfig,
) -> Result<Ranking> {
    let (examples, cap) = build_examples(features, targets, feature_config)?;
    let outcome = train(&examples, hyper, train_config)?;
    predict_all(&outcome.params, features, feature_config, hyper, cap)
}
