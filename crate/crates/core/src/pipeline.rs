//! Stage drivers behind the CLI. Every stage reads its upstream artifacts,
//! verifies their config hash, writes its own versioned artifacts into the
//! workdir and returns a one-line summary.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;

use crate::binio::{self, HASH_LEN};
use crate::config::{hex, PipelineConfig};
use crate::corpus::{build_mention_index, load_articles, load_companies, Company, MentionIndex};
use crate::error::{Error, Result};
use crate::features::{
    aggregate_company, construct_image, export_pgm, read_features_bin, rescale_unit,
    write_features_bin, write_features_csv, CompanyFeatures, KEYWORDS_PER_TOPIC,
};
use crate::lda::{fit_lda, TopicModel};
use crate::lexicon::{extract_bag, load_lexicon, BagOfWords};
use crate::network::{gradcheck, sum_first_layer_weights};
use crate::synth::generate;
use crate::training::{
    build_examples, load_ratings, predict_all, train, Checkpoint, Ranking,
};
use crate::verify::{build_negative_targets, cross_validate, load_investigations};

pub const INGEST_ARTIFACT: &str = "ingest.v1.bin";
pub const MODEL_ARTIFACT: &str = "lda_model.v1.bin";
pub const FEATURES_ARTIFACT: &str = "feature_set.v1.bin";
pub const FEATURES_CSV: &str = "feature_set.v1.csv";
pub const CHECKPOINT_ARTIFACT: &str = "train_checkpoint.v1.bin";
pub const LOSS_HISTORY_ARTIFACT: &str = "train_loss_history.v1.txt";
pub const WEIGHTS_PGM_ARTIFACT: &str = "train_weights_fc1.v1.pgm";
pub const RANKING_ARTIFACT: &str = "rank_ranking.v1.csv";
pub const REPORT_ARTIFACT: &str = "verify_report.v1.txt";
pub const NEGATIVE_RANKING_ARTIFACT: &str = "verify_negative_ranking.v1.csv";
const LOCK_FILE: &str = ".credscope.lock";

const INGEST_MAGIC: &[u8; 8] = b"CSINGEST";
const INGEST_VERSION: u32 = 1;

/// Exclusive workdir lock; the file disappears when the guard drops.
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    pub fn acquire(workdir: &Path) -> Result<Self> {
        fs::create_dir_all(workdir)?;
        let path = workdir.join(LOCK_FILE);
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::WorkdirLocked {
                    path: path.display().to_string(),
                })
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Everything the downstream stages need from the raw inputs: companies,
/// article metadata, per-article bags and the mention index.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedCorpus {
    pub companies: Vec<Company>,
    pub article_ids: Vec<String>,
    pub article_dates: Vec<String>,
    pub bags: Vec<BagOfWords>,
    pub mentions: MentionIndex,
}

impl IngestedCorpus {
    pub fn company_ids(&self) -> HashSet<String> {
        self.companies.iter().map(|c| c.id.clone()).collect()
    }

    pub fn date_window(&self) -> Result<Option<(NaiveDate, NaiveDate)>> {
        let mut window: Option<(NaiveDate, NaiveDate)> = None;
        for (i, raw) in self.article_dates.iter().enumerate() {
            let d = NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad stored date {raw:?}"),
            })?;
            window = Some(match window {
                None => (d, d),
                Some((lo, hi)) => (lo.min(d), hi.max(d)),
            });
        }
        Ok(window)
    }

    fn write_to<W: Write>(&self, out: W, config_hash: &[u8; HASH_LEN]) -> Result<()> {
        let mut w = binio::Writer::new(out, INGEST_MAGIC, INGEST_VERSION, config_hash)?;
        w.u32(self.companies.len() as u32)?;
        for c in &self.companies {
            w.str(&c.id)?;
            w.str(&c.canonical_name)?;
            w.u32(c.aliases.len() as u32)?;
            for a in &c.aliases {
                w.str(a)?;
            }
        }
        // Shared term table so bags store ids, not strings.
        let mut terms: Vec<&str> = self
            .bags
            .iter()
            .flat_map(|b| b.iter().map(|(t, _)| t))
            .collect();
        terms.sort_unstable();
        terms.dedup();
        let index: std::collections::HashMap<&str, u32> = terms
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, i as u32))
            .collect();
        w.u32(terms.len() as u32)?;
        for t in &terms {
            w.str(t)?;
        }
        w.u32(self.article_ids.len() as u32)?;
        for ((id, date), bag) in self
            .article_ids
            .iter()
            .zip(&self.article_dates)
            .zip(&self.bags)
        {
            w.str(id)?;
            w.str(date)?;
            w.u32(bag.len() as u32)?;
            for (t, c) in bag.iter() {
                w.u32(index[t])?;
                w.u64(c)?;
            }
        }
        w.u32(self.mentions.by_company.len() as u32)?;
        for (id, docs) in &self.mentions.by_company {
            w.str(id)?;
            w.u32_slice(docs)?;
        }
        w.finish()
    }

    fn read_from<R: std::io::Read>(input: R, path: &str) -> Result<(Self, [u8; HASH_LEN])> {
        let mut r = binio::Reader::new(input, INGEST_MAGIC, INGEST_VERSION, path)?;
        let n_companies = r.u32()? as usize;
        let mut companies = Vec::with_capacity(n_companies);
        for _ in 0..n_companies {
            let id = r.str()?;
            let canonical_name = r.str()?;
            let n_aliases = r.u32()? as usize;
            let mut aliases = Vec::with_capacity(n_aliases);
            for _ in 0..n_aliases {
                aliases.push(r.str()?);
            }
            companies.push(Company {
                id,
                canonical_name,
                aliases,
            });
        }
        let n_terms = r.u32()? as usize;
        let mut terms = Vec::with_capacity(n_terms);
        for _ in 0..n_terms {
            terms.push(r.str()?);
        }
        let n_articles = r.u32()? as usize;
        let mut article_ids = Vec::with_capacity(n_articles);
        let mut article_dates = Vec::with_capacity(n_articles);
        let mut bags = Vec::with_capacity(n_articles);
        for _ in 0..n_articles {
            article_ids.push(r.str()?);
            article_dates.push(r.str()?);
            let n_entries = r.u32()? as usize;
            let mut counts = Vec::with_capacity(n_entries);
            for _ in 0..n_entries {
                let t = r.u32()? as usize;
                let c = r.u64()?;
                let term = terms.get(t).ok_or_else(|| Error::Artifact {
                    path: path.to_string(),
                    msg: "term id out of range".into(),
                })?;
                counts.push((term.clone(), c));
            }
            bags.push(BagOfWords::from_counts(counts));
        }
        let n_index = r.u32()? as usize;
        let mut mentions = MentionIndex::default();
        for _ in 0..n_index {
            let id = r.str()?;
            let docs = r.u32_vec()?;
            mentions.by_company.insert(id, docs);
        }
        Ok((
            Self {
                companies,
                article_ids,
                article_dates,
                bags,
                mentions,
            },
            r.config_hash,
        ))
    }
}

fn require_input(stage: &'static str, path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            stage,
            path: path.display().to_string(),
        });
    }
    Ok(())
}

fn check_hash(
    stage_path: &Path,
    stored: &[u8; HASH_LEN],
    config: &PipelineConfig,
    force: bool,
) -> Result<()> {
    let current = config.semantic_hash();
    if stored != &current && !force {
        return Err(Error::ConfigHashMismatch {
            path: stage_path.display().to_string(),
            stored: hex(stored),
            current: hex(&current),
        });
    }
    Ok(())
}

fn open_artifact(stage: &'static str, path: &Path) -> Result<BufReader<File>> {
    require_input(stage, path)?;
    Ok(BufReader::new(File::open(path)?))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Generates the synthetic world and writes the five data files to the
/// configured input paths.
pub fn cmd_synth(config: &PipelineConfig) -> Result<String> {
    let started = Instant::now();
    let world = generate(&config.synth_config())?;
    for (path, content) in [
        (&config.paths.lexicon, &world.lexicon_file),
        (&config.paths.articles, &world.articles_file),
        (&config.paths.companies, &world.companies_file),
        (&config.paths.ratings, &world.ratings_file),
        (&config.paths.investigations, &world.investigations_file),
    ] {
        let mut f = create_file(path)?;
        f.write_all(content.as_bytes())?;
        f.flush()?;
    }
    Ok(format!(
        "synth: {} companies, {} articles, {} rated, {} investigated, signal {} ({:.1}s)",
        world.companies.len(),
        world.articles.len(),
        world.rated_ids.len(),
        world.planted_investigations.len(),
        config.synth.signal_strength,
        started.elapsed().as_secs_f64()
    ))
}

/// Loads the raw inputs, extracts bags, builds the mention index and stores
/// everything as one artifact.
pub fn cmd_ingest(config: &PipelineConfig) -> Result<String> {
    let started = Instant::now();
    require_input("ingest", &config.paths.lexicon)?;
    require_input("ingest", &config.paths.articles)?;
    require_input("ingest", &config.paths.companies)?;
    let lexicon = load_lexicon(BufReader::new(File::open(&config.paths.lexicon)?))?;
    let articles = load_articles(BufReader::new(File::open(&config.paths.articles)?))?;
    let companies = load_companies(BufReader::new(File::open(&config.paths.companies)?))?;
    let bags: Vec<BagOfWords> = articles
        .iter()
        .map(|a| {
            let mut text = String::with_capacity(a.title.len() + a.body.len());
            text.push_str(&a.title);
            text.push_str(&a.body);
            extract_bag(&text, &lexicon)
        })
        .collect();
    let mentions = build_mention_index(&articles, &companies);
    let corpus = IngestedCorpus {
        companies,
        article_ids: articles.iter().map(|a| a.id.clone()).collect(),
        article_dates: articles.iter().map(|a| a.date.clone()).collect(),
        bags,
        mentions,
    };
    let tokens: u64 = corpus.bags.iter().map(|b| b.total()).sum();
    let out = config.workdir().join(INGEST_ARTIFACT);
    corpus.write_to(create_file(&out)?, &config.semantic_hash())?;
    Ok(format!(
        "ingest: {} articles, {} companies, {} tokens -> {} ({:.1}s)",
        corpus.article_ids.len(),
        corpus.companies.len(),
        tokens,
        out.display(),
        started.elapsed().as_secs_f64()
    ))
}

pub fn read_ingest(config: &PipelineConfig, force: bool) -> Result<IngestedCorpus> {
    let path = config.workdir().join(INGEST_ARTIFACT);
    let (corpus, stored) =
        IngestedCorpus::read_from(open_artifact("ingest", &path)?, &path.display().to_string())?;
    check_hash(&path, &stored, config, force)?;
    Ok(corpus)
}

pub fn cmd_lda(config: &PipelineConfig, force: bool) -> Result<String> {
    let started = Instant::now();
    let corpus = read_ingest(config, force)?;
    let model = fit_lda(&corpus.bags, &config.gibbs_config())?;
    let ll = model.log_likelihood(&corpus.bags);
    let out = config.workdir().join(MODEL_ARTIFACT);
    model.write_to(create_file(&out)?, &config.semantic_hash())?;
    Ok(format!(
        "lda: {} topics, {} sweeps, vocab {}, log-likelihood {:.1} -> {} ({:.1}s)",
        model.topics,
        model.iterations,
        model.vocab_len(),
        ll,
        out.display(),
        started.elapsed().as_secs_f64()
    ))
}

pub fn read_model(config: &PipelineConfig, force: bool) -> Result<TopicModel> {
    let path = config.workdir().join(MODEL_ARTIFACT);
    let (model, stored) =
        TopicModel::read_from(open_artifact("lda", &path)?, &path.display().to_string())?;
    check_hash(&path, &stored, config, force)?;
    Ok(model)
}

/// Featurizes every company with at least one mentioning article, in id
/// order. Optionally renders each image as a PGM under `image_dir`.
pub fn cmd_featurize(
    config: &PipelineConfig,
    force: bool,
    image_dir: Option<&Path>,
) -> Result<String> {
    let started = Instant::now();
    let corpus = read_ingest(config, force)?;
    let model = read_model(config, force)?;
    let keywords = model.keyword_grid(KEYWORDS_PER_TOPIC)?;
    let mut features = Vec::new();
    let mut skipped = 0usize;
    for company in &corpus.companies {
        let docs = corpus.mentions.articles_of(&company.id);
        if docs.is_empty() {
            skipped += 1;
            continue;
        }
        let mentioning: Vec<usize> = docs.iter().map(|&d| d as usize).collect();
        features.push(aggregate_company(
            &company.id,
            &mentioning,
            &model,
            &keywords,
            &corpus.bags,
        )?);
    }
    features.sort_by(|a, b| a.company_id.cmp(&b.company_id));
    let hash = config.semantic_hash();
    let out = config.workdir().join(FEATURES_ARTIFACT);
    write_features_bin(&features, create_file(&out)?, &hash)?;
    let csv_path = config.workdir().join(FEATURES_CSV);
    write_features_csv(&features, create_file(&csv_path)?, &config.hash_hex())?;
    if let Some(dir) = image_dir {
        fs::create_dir_all(dir)?;
        for f in &features {
            let image = construct_image(f, &config.feature_config());
            export_pgm(&image, create_file(&dir.join(format!("{}.pgm", f.company_id)))?)?;
        }
    }
    Ok(format!(
        "featurize: {} companies featurized, {} zero-mention skipped -> {} ({:.1}s)",
        features.len(),
        skipped,
        out.display(),
        started.elapsed().as_secs_f64()
    ))
}

pub fn read_features(config: &PipelineConfig, force: bool) -> Result<Vec<CompanyFeatures>> {
    let path = config.workdir().join(FEATURES_ARTIFACT);
    let (features, stored) =
        read_features_bin(open_artifact("featurize", &path)?, &path.display().to_string())?;
    check_hash(&path, &stored, config, force)?;
    Ok(features)
}

pub fn cmd_train(config: &PipelineConfig, force: bool) -> Result<String> {
    let started = Instant::now();
    let corpus = read_ingest(config, force)?;
    let features = read_features(config, force)?;
    require_input("train", &config.paths.ratings)?;
    let ratings = load_ratings(
        BufReader::new(File::open(&config.paths.ratings)?),
        &corpus.company_ids(),
    )?;
    let (examples, article_cap) =
        build_examples(&features, &ratings, &config.feature_config())?;
    let hyper = config.network_hyper();
    let outcome = train(&examples, &hyper, &config.train_config())?;
    let hash = config.semantic_hash();

    let ckpt = Checkpoint {
        hyper: hyper.clone(),
        params: outcome.params,
        article_cap,
    };
    let ckpt_path = config.workdir().join(CHECKPOINT_ARTIFACT);
    ckpt.write_to(create_file(&ckpt_path)?, &hash)?;

    let mut loss_file = create_file(&config.workdir().join(LOSS_HISTORY_ARTIFACT))?;
    writeln!(loss_file, "# config_hash={}", config.hash_hex())?;
    for l in &outcome.loss_history {
        writeln!(loss_file, "{l}")?;
    }
    loss_file.flush()?;

    let sums = sum_first_layer_weights(&ckpt.params, hyper.image_rows);
    let viz = rescale_unit(&sums, hyper.image_rows);
    export_pgm(&viz, create_file(&config.workdir().join(WEIGHTS_PGM_ARTIFACT))?)?;

    let final_loss = outcome.loss_history.last().copied().unwrap_or(f64::NAN);
    Ok(format!(
        "train: {} examples, {} epochs, final loss {:.6}, {} held out -> {} ({:.1}s)",
        examples.len() - outcome.holdout_ids.len(),
        config.training.epochs,
        final_loss,
        outcome.holdout_ids.len(),
        ckpt_path.display(),
        started.elapsed().as_secs_f64()
    ))
}

pub fn read_checkpoint(config: &PipelineConfig, force: bool) -> Result<Checkpoint> {
    let path = config.workdir().join(CHECKPOINT_ARTIFACT);
    let (ckpt, stored) =
        Checkpoint::read_from(open_artifact("rank", &path)?, &path.display().to_string())?;
    check_hash(&path, &stored, config, force)?;
    Ok(ckpt)
}

pub fn cmd_rank(config: &PipelineConfig, force: bool) -> Result<String> {
    let started = Instant::now();
    let features = read_features(config, force)?;
    let ckpt = read_checkpoint(config, force)?;
    let ranking = predict_all(
        &ckpt.params,
        &features,
        &config.feature_config(),
        &ckpt.hyper,
        ckpt.article_cap,
    )?;
    let out = config.workdir().join(RANKING_ARTIFACT);
    let mut f = create_file(&out)?;
    ranking.write_csv(&mut f, &config.hash_hex())?;
    f.flush()?;
    let top = ranking
        .entries()
        .first()
        .map(|e| e.company_id.clone())
        .unwrap_or_default();
    Ok(format!(
        "rank: {} companies, top {} -> {} ({:.1}s)",
        ranking.len(),
        top,
        out.display(),
        started.elapsed().as_secs_f64()
    ))
}

pub fn read_ranking_csv(path: &Path) -> Result<Ranking> {
    use crate::training::RankEntry;
    let text = fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let _rank = parts.next();
        let id = parts.next().ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: "missing company id".into(),
        })?;
        let score: f64 = parts
            .next()
            .ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "missing score".into(),
            })?
            .parse()
            .map_err(|_| Error::Parse {
                line: i + 1,
                msg: "bad score".into(),
            })?;
        entries.push(RankEntry {
            company_id: id.to_string(),
            score,
        });
    }
    Ok(Ranking::from_scores(entries))
}

pub fn cmd_verify(config: &PipelineConfig, force: bool) -> Result<String> {
    let started = Instant::now();
    let corpus = read_ingest(config, force)?;
    let features = read_features(config, force)?;
    require_input("verify", &config.paths.ratings)?;
    require_input("verify", &config.paths.investigations)?;
    let known = corpus.company_ids();
    let ratings = load_ratings(BufReader::new(File::open(&config.paths.ratings)?), &known)?;
    let records = load_investigations(
        BufReader::new(File::open(&config.paths.investigations)?),
        &known,
    )?;
    let window = corpus.date_window()?;
    let negatives = build_negative_targets(&records, window)?;
    let outcome = cross_validate(
        &features,
        &ratings,
        &negatives,
        &config.feature_config(),
        &config.network_hyper(),
        &config.train_config(),
        &config.cv_config(),
    )?;

    let report_path = config.workdir().join(REPORT_ARTIFACT);
    let mut report = create_file(&report_path)?;
    writeln!(report, "# config_hash={}", config.hash_hex())?;
    writeln!(report, "window={}", outcome.window)?;
    writeln!(report, "folds={}", outcome.per_fold.len())?;
    writeln!(report, "rated_companies={}", ratings.len())?;
    writeln!(report, "investigated_companies={}", negatives.len())?;
    for (i, fold) in outcome.per_fold.iter().enumerate() {
        writeln!(report, "fold_{}_agreement={:.6}", i + 1, fold)?;
    }
    writeln!(report, "mean_agreement={:.6}", outcome.mean)?;
    writeln!(report, "full_agreement={:.6}", outcome.full_agreement)?;
    writeln!(report, "spearman_pos_neg={:.6}", outcome.spearman_pos_neg)?;
    report.flush()?;

    let neg_path = config.workdir().join(NEGATIVE_RANKING_ARTIFACT);
    let mut neg_file = create_file(&neg_path)?;
    outcome.neg_ranking.write_csv(&mut neg_file, &config.hash_hex())?;
    neg_file.flush()?;

    Ok(format!(
        "verify: mean agreement {:.4} over {} folds (window {}), spearman {:.3} -> {} ({:.1}s)",
        outcome.mean,
        outcome.per_fold.len(),
        outcome.window,
        outcome.spearman_pos_neg,
        report_path.display(),
        started.elapsed().as_secs_f64()
    ))
}

/// Finite-difference self check; `Err` when the maximum relative error
/// exceeds the gate.
pub fn cmd_gradcheck(triples: usize, seed: u64) -> Result<String> {
    let started = Instant::now();
    let outcome = gradcheck::run(triples.max(100), seed);
    let line = format!(
        "gradcheck: {} triples, {} parameters, max relative error {:.3e} ({:.1}s)",
        outcome.triples,
        outcome.parameters_checked,
        outcome.max_error,
        started.elapsed().as_secs_f64()
    );
    if outcome.max_error > 1e-4 {
        return Err(Error::Mismatch(format!(
            "{line}: exceeds the 1e-4 gate"
        )));
    }
    Ok(line)
}
