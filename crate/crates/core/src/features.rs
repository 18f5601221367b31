//! Per-company aggregates and the grayscale feature image.
//!
//! Each company gets three aggregates: the count of mentioning articles,
//! the dominant-topic histogram over those articles, and a K x 10 grid of
//! keyword occurrence totals. The image prepends the histogram as column 0
//! and fills columns 1..=10 with tanh(c * data3 / data1).

use std::io::{Read, Write};

use crate::binio::{self, HASH_LEN};
use crate::error::{Error, Result};
use crate::lda::TopicModel;
use crate::lexicon::BagOfWords;

pub const KEYWORDS_PER_TOPIC: usize = 10;
/// Histogram column plus one column per keyword rank.
pub const IMAGE_COLS: usize = KEYWORDS_PER_TOPIC + 1;

const FEATURES_MAGIC: &[u8; 8] = b"CSFEATRS";
const FEATURES_VERSION: u32 = 1;

/// Largest f64 below 1.0. tanh saturates to exactly 1.0 in f64 for large
/// arguments; clamping keeps the tanh block strictly inside [0, 1).
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CompanyFeatures {
    pub company_id: String,
    /// Number of mentioning articles; always >= 1.
    pub article_count: u64,
    /// Length-K dominant-topic histogram; sums to 1.
    pub topic_histogram: Vec<f64>,
    /// K x 10 keyword occurrence totals, row-major.
    pub keyword_counts: Vec<u64>,
}

impl CompanyFeatures {
    pub fn topics(&self) -> usize {
        self.topic_histogram.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    /// Positive scale applied after the count/article ratio, before tanh.
    pub scale: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

/// K x 11 pixel matrix with every entry in [0, 1]; the tanh block is
/// strictly below 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub rows: usize,
    pub pixels: Vec<f64>,
}

impl FeatureImage {
    pub fn zero(rows: usize) -> Self {
        Self {
            rows,
            pixels: vec![0.0; rows * IMAGE_COLS],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * IMAGE_COLS + col]
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Counts articles, dominant topics and keyword occurrences over the
/// mentioning articles of one company. `keywords` must be the model's
/// K x 10 keyword grid; `docs` index-aligns with the fitted model.
pub fn aggregate_company(
    company_id: &str,
    mentioning_articles: &[usize],
    model: &TopicModel,
    keywords: &[Vec<String>],
    docs: &[BagOfWords],
) -> Result<CompanyFeatures> {
    if mentioning_articles.is_empty() {
        return Err(Error::ZeroMentions {
            id: company_id.to_string(),
        });
    }
    let k = model.topics;
    debug_assert_eq!(keywords.len(), k);
    let mut dominant_counts = vec![0u64; k];
    let mut keyword_counts = vec![0u64; k * KEYWORDS_PER_TOPIC];
    for &d in mentioning_articles {
        if d >= docs.len() {
            return Err(Error::OutOfRange {
                what: "document",
                index: d,
                len: docs.len(),
            });
        }
        dominant_counts[model.dominant_topic(d)?] += 1;
        let bag = &docs[d];
        for (t, row) in keywords.iter().enumerate() {
            for (j, term) in row.iter().enumerate() {
                keyword_counts[t * KEYWORDS_PER_TOPIC + j] += bag.count(term);
            }
        }
    }
    let total = mentioning_articles.len() as u64;
    // Single integer division per entry keeps the histogram bit-stable
    // under article replication.
    let topic_histogram: Vec<f64> = dominant_counts
        .iter()
        .map(|&c| c as f64 / total as f64)
        .collect();
    Ok(CompanyFeatures {
        company_id: company_id.to_string(),
        article_count: total,
        topic_histogram,
        keyword_counts,
    })
}

/// Column 0 is the topic histogram; columns 1..=10 are
/// tanh(scale * keyword_count / article_count). The ratio is computed
/// before scaling so replicating every article leaves the image
/// bit-identical.
pub fn construct_image(features: &CompanyFeatures, config: &FeatureConfig) -> FeatureImage {
    let k = features.topics();
    let mut image = FeatureImage::zero(k);
    let articles = features.article_count as f64;
    for row in 0..k {
        image.pixels[row * IMAGE_COLS] = features.topic_histogram[row];
        for j in 0..KEYWORDS_PER_TOPIC {
            let count = features.keyword_counts[row * KEYWORDS_PER_TOPIC + j] as f64;
            let value = (config.scale * (count / articles)).tanh();
            image.pixels[row * IMAGE_COLS + 1 + j] = value.min(BELOW_ONE);
        }
    }
    image
}

/// Binary PGM (P5), width 11, height K, maxval 255; each byte is
/// floor(value * 255) clamped to [0, 255], row-major.
pub fn export_pgm<W: Write>(image: &FeatureImage, mut out: W) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", IMAGE_COLS, image.rows)?;
    let bytes: Vec<u8> = image
        .pixels
        .iter()
        .map(|&v| (v * 255.0).floor().clamp(0.0, 255.0) as u8)
        .collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// Affine map of an arbitrary real matrix onto [0, 1] for PGM export; a
/// constant matrix maps to all zeros.
pub fn rescale_unit(values: &[f64], rows: usize) -> FeatureImage {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let pixels = if span > 0.0 {
        values.iter().map(|&v| (v - lo) / span).collect()
    } else {
        vec![0.0; values.len()]
    };
    FeatureImage { rows, pixels }
}

/// Inspection dump, one company per row: id, article count, the K
/// histogram entries, then the keyword-count grid row-major.
pub fn write_features_csv<W: Write>(
    features: &[CompanyFeatures],
    mut out: W,
    config_hash_hex: &str,
) -> Result<()> {
    writeln!(out, "# config_hash={config_hash_hex}")?;
    for f in features {
        write!(out, "{},{}", f.company_id, f.article_count)?;
        for v in &f.topic_histogram {
            write!(out, ",{v}")?;
        }
        for c in &f.keyword_counts {
            write!(out, ",{c}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_features_bin<W: Write>(
    features: &[CompanyFeatures],
    out: W,
    config_hash: &[u8; HASH_LEN],
) -> Result<()> {
    let mut w = binio::Writer::new(out, FEATURES_MAGIC, FEATURES_VERSION, config_hash)?;
    let topics = features.first().map(|f| f.topics()).unwrap_or(0);
    w.u32(topics as u32)?;
    w.u32(features.len() as u32)?;
    for f in features {
        w.str(&f.company_id)?;
        w.u64(f.article_count)?;
        w.f64_slice(&f.topic_histogram)?;
        w.u64_slice(&f.keyword_counts)?;
    }
    w.finish()
}

pub fn read_features_bin<R: Read>(
    input: R,
    path: &str,
) -> Result<(Vec<CompanyFeatures>, [u8; HASH_LEN])> {
    let mut r = binio::Reader::new(input, FEATURES_MAGIC, FEATURES_VERSION, path)?;
    let topics = r.u32()? as usize;
    let n = r.u32()? as usize;
    let mut features = Vec::with_capacity(n);
    for _ in 0..n {
        let company_id = r.str()?;
        let article_count = r.u64()?;
        let topic_histogram = r.f64_vec()?;
        let keyword_counts = r.u64_vec()?;
        if topic_histogram.len() != topics
            || keyword_counts.len() != topics * KEYWORDS_PER_TOPIC
            || article_count == 0
        {
            return Err(Error::Artifact {
                path: path.to_string(),
                msg: format!("bad feature record for {company_id}"),
            });
        }
        features.push(CompanyFeatures {
            company_id,
            article_count,
            topic_histogram,
            keyword_counts,
        });
    }
    Ok((features, r.config_hash))
}
