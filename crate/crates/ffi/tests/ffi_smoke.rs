//! Exercises the C ABI from Rust and, when a C compiler is around, compiles
//! and runs a real C program against the committed header.

use std::ffi::CString;
use std::os::raw::c_char;
use std::path::PathBuf;

use credscope_core::features::construct_image;
use credscope_core::features::FeatureConfig;
use credscope_core::lda::{fit_lda, GibbsConfig};
use credscope_core::network::{init_params, NetworkHyper};
use credscope_core::synth::{generate_topic_corpus, TopicCorpusConfig};
use credscope_core::training::Checkpoint;
use credscope_ffi::*;
use tempfile::TempDir;

fn c_path(path: &std::path::Path) -> CString {
    CString::new(path.to_str().unwrap()).unwrap()
}

/// Writes a lexicon, a fitted model dump and a checkpoint into `dir`.
fn fixture_files(dir: &std::path::Path) -> (PathBuf, PathBuf, PathBuf) {
    let lexicon_path = dir.join("lexicon.txt");
    std::fs::write(&lexicon_path, "银行\n保险\n金融市场\n").unwrap();

    let corpus = generate_topic_corpus(&TopicCorpusConfig {
        seed: 3,
        topics: 2,
        vocab: 40,
        docs: 20,
        doc_length: 15,
    })
    .unwrap();
    let model = fit_lda(&corpus.bags, &GibbsConfig::new(2, 25, 9)).unwrap();
    let model_path = dir.join("model.bin");
    model
        .write_to(std::fs::File::create(&model_path).unwrap(), &[0u8; 32])
        .unwrap();

    let hyper = NetworkHyper::new(2, 4);
    let ckpt = Checkpoint {
        params: init_params(&hyper).unwrap(),
        hyper,
        article_cap: 50,
    };
    let ckpt_path = dir.join("checkpoint.bin");
    ckpt.write_to(std::fs::File::create(&ckpt_path).unwrap(), &[0u8; 32])
        .unwrap();
    (lexicon_path, model_path, ckpt_path)
}

#[test]
fn lexicon_and_bag_roundtrip_through_the_abi() {
    let dir = TempDir::new().unwrap();
    let (lexicon_path, _, _) = fixture_files(dir.path());
    unsafe {
        let mut lex: *mut CredscopeLexicon = std::ptr::null_mut();
        let status = credscope_lexicon_load(c_path(&lexicon_path).as_ptr(), &mut lex);
        assert_eq!(status, CredscopeStatus::Ok);
        let mut count = 0u64;
        assert_eq!(
            credscope_lexicon_term_count(lex, &mut count),
            CredscopeStatus::Ok
        );
        assert_eq!(count, 3);

        let text = CString::new("银行和金融市场的银行").unwrap();
        let mut bag: *mut CredscopeBag = std::ptr::null_mut();
        assert_eq!(
            credscope_bag_extract(lex, text.as_ptr(), &mut bag),
            CredscopeStatus::Ok
        );
        let mut total = 0u64;
        assert_eq!(credscope_bag_total(bag, &mut total), CredscopeStatus::Ok);
        assert_eq!(total, 3);
        let term = CString::new("银行").unwrap();
        let mut n = 0u64;
        assert_eq!(
            credscope_bag_count(bag, term.as_ptr(), &mut n),
            CredscopeStatus::Ok
        );
        assert_eq!(n, 2);
        credscope_bag_free(bag);
        credscope_lexicon_free(lex);
    }
}

#[test]
fn missing_file_reports_io_error_with_message() {
    unsafe {
        let mut lex: *mut CredscopeLexicon = std::ptr::null_mut();
        let path = CString::new("/nonexistent/lexicon.txt").unwrap();
        let status = credscope_lexicon_load(path.as_ptr(), &mut lex);
        assert_eq!(status, CredscopeStatus::IoError);
        let needed = credscope_last_error(std::ptr::null_mut(), 0);
        assert!(needed > 1);
        let mut buf = vec![0u8; needed];
        credscope_last_error(buf.as_mut_ptr() as *mut c_char, buf.len());
        let msg = std::str::from_utf8(&buf[..needed - 1]).unwrap();
        assert!(msg.contains("i/o"), "message was {msg:?}");
    }
}

#[test]
fn null_arguments_are_rejected_not_crashed() {
    unsafe {
        assert_eq!(
            credscope_lexicon_load(std::ptr::null(), std::ptr::null_mut()),
            CredscopeStatus::NullArgument
        );
        let mut out = 0u64;
        assert_eq!(
            credscope_lexicon_term_count(std::ptr::null(), &mut out),
            CredscopeStatus::NullArgument
        );
        credscope_lexicon_free(std::ptr::null_mut());
        credscope_bag_free(std::ptr::null_mut());
        credscope_model_free(std::ptr::null_mut());
        credscope_checkpoint_free(std::ptr::null_mut());
    }
}

#[test]
fn model_keywords_come_back_as_utf8() {
    let dir = TempDir::new().unwrap();
    let (_, model_path, _) = fixture_files(dir.path());
    unsafe {
        let mut model: *mut CredscopeModel = std::ptr::null_mut();
        assert_eq!(
            credscope_model_load(c_path(&model_path).as_ptr(), &mut model),
            CredscopeStatus::Ok
        );
        let mut topics = 0u32;
        assert_eq!(
            credscope_model_topic_count(model, &mut topics),
            CredscopeStatus::Ok
        );
        assert_eq!(topics, 2);

        let mut needed = 0usize;
        let status =
            credscope_model_keyword(model, 0, 0, std::ptr::null_mut(), 0, &mut needed);
        assert_eq!(status, CredscopeStatus::BufferTooSmall);
        assert!(needed > 1);
        let mut buf = vec![0u8; needed];
        assert_eq!(
            credscope_model_keyword(
                model,
                0,
                0,
                buf.as_mut_ptr() as *mut c_char,
                buf.len(),
                &mut needed,
            ),
            CredscopeStatus::Ok
        );
        let term = std::str::from_utf8(&buf[..needed - 1]).unwrap();
        assert_eq!(term.chars().count(), 2);

        assert_eq!(
            credscope_model_keyword(model, 9, 0, std::ptr::null_mut(), 0, &mut needed),
            CredscopeStatus::OutOfRange
        );
        credscope_model_free(model);
    }
}

#[test]
fn checkpoint_scores_match_the_library() {
    let dir = TempDir::new().unwrap();
    let (_, _, ckpt_path) = fixture_files(dir.path());
    let (expected, pixels) = {
        let (ckpt, _) = Checkpoint::read_from(
            std::fs::File::open(&ckpt_path).unwrap(),
            ckpt_path.to_str().unwrap(),
        )
        .unwrap();
        let features = credscope_core::features::CompanyFeatures {
            company_id: "x".into(),
            article_count: 7,
            topic_histogram: vec![0.4, 0.6],
            keyword_counts: (0..20).collect(),
        };
        let image = construct_image(&features, &FeatureConfig::default());
        let data1 = credscope_core::training::normalize_article_count(7, ckpt.article_cap);
        let trace = credscope_core::network::forward(&ckpt.params, &image, data1).unwrap();
        (trace.score, image.pixels)
    };
    unsafe {
        let mut ckpt: *mut CredscopeCheckpoint = std::ptr::null_mut();
        assert_eq!(
            credscope_checkpoint_load(c_path(&ckpt_path).as_ptr(), &mut ckpt),
            CredscopeStatus::Ok
        );
        let mut len = 0usize;
        assert_eq!(
            credscope_checkpoint_image_len(ckpt, &mut len),
            CredscopeStatus::Ok
        );
        assert_eq!(len, pixels.len());
        let mut score = 0.0f64;
        assert_eq!(
            credscope_checkpoint_score(ckpt, pixels.as_ptr(), pixels.len(), 7, &mut score),
            CredscopeStatus::Ok
        );
        assert_eq!(score, expected);
        // Wrong pixel count is a shape error, not a crash.
        assert_eq!(
            credscope_checkpoint_score(ckpt, pixels.as_ptr(), 3, 7, &mut score),
            CredscopeStatus::OutOfRange
        );
        credscope_checkpoint_free(ckpt);
    }
}

/// Compiles a C client against include/credscope.h, links the static
/// library and runs it. Skips silently when cc is unavailable.
#[test]
fn c_client_builds_and_runs_against_the_header() {
    let cc = ["cc", "gcc", "clang"]
        .iter()
        .find(|c| {
            std::process::Command::new(c)
                .arg("--version")
                .output()
                .map(|o| o.status.success())
                .unwrap_or(false)
        })
        .copied();
    let Some(cc) = cc else {
        eprintln!("no C compiler found; skipping header check");
        return;
    };

    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include_dir = manifest.join("include");
    let target_debug = manifest.join("../../target/debug");
    let candidates = [
        target_debug.join("libcredscope_ffi.a"),
        target_debug.join("deps/libcredscope_ffi.a"),
    ];
    let staticlib = match candidates.iter().find(|p| p.exists()) {
        Some(p) => p.clone(),
        None => {
            // `cargo test` may leave the staticlib only under deps/ or skip
            // the hardlink; build it explicitly.
            let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
            let built = std::process::Command::new(cargo)
                .args(["build", "-p", "credscope-ffi", "--quiet"])
                .current_dir(&manifest)
                .status()
                .expect("cargo build runs");
            assert!(built.success(), "building the staticlib failed");
            candidates
                .iter()
                .find(|p| p.exists())
                .expect("staticlib after explicit build")
                .clone()
        }
    };

    let dir = TempDir::new().unwrap();
    let (lexicon_path, model_path, ckpt_path) = fixture_files(dir.path());
    let c_source = dir.path().join("client.c");
    std::fs::write(
        &c_source,
        r#"
#include <stdio.h>
#include <string.h>
#include "credscope.h"

int main(int argc, char **argv) {
    if (argc < 4) return 10;
    if (strlen(credscope_version()) == 0) return 11;

    CredscopeLexicon *lex = NULL;
    if (credscope_lexicon_load(argv[1], &lex) != CREDSCOPE_OK) return 12;
    uint64_t terms = 0;
    if (credscope_lexicon_term_count(lex, &terms) != CREDSCOPE_OK || terms != 3) return 13;

    CredscopeBag *bag = NULL;
    if (credscope_bag_extract(lex, "\xe9\x93\xb6\xe8\xa1\x8c", &bag) != CREDSCOPE_OK) return 14;
    uint64_t total = 0;
    if (credscope_bag_total(bag, &total) != CREDSCOPE_OK || total != 1) return 15;
    credscope_bag_free(bag);
    credscope_lexicon_free(lex);

    CredscopeModel *model = NULL;
    if (credscope_model_load(argv[2], &model) != CREDSCOPE_OK) return 16;
    uint32_t topics = 0;
    if (credscope_model_topic_count(model, &topics) != CREDSCOPE_OK || topics != 2) return 17;
    char keyword[64];
    size_t written = 0;
    if (credscope_model_keyword(model, 1, 0, keyword, sizeof keyword, &written) != CREDSCOPE_OK)
        return 18;
    credscope_model_free(model);

    CredscopeCheckpoint *ckpt = NULL;
    if (credscope_checkpoint_load(argv[3], &ckpt) != CREDSCOPE_OK) return 19;
    size_t len = 0;
    if (credscope_checkpoint_image_len(ckpt, &len) != CREDSCOPE_OK || len != 22) return 20;
    double pixels[22];
    for (size_t i = 0; i < len; i++) pixels[i] = (double)(i % 5) * 0.2;
    double score = 0.0;
    if (credscope_checkpoint_score(ckpt, pixels, len, 9, &score) != CREDSCOPE_OK) return 21;
    if (!(score > 0.0 && score < 1.0)) return 22;

    // Error path: the status code and message machinery must work from C.
    CredscopeLexicon *missing = NULL;
    if (credscope_lexicon_load("/no/such/file", &missing) != CREDSCOPE_IO_ERROR) return 23;
    char msg[256];
    if (credscope_last_error(msg, sizeof msg) == 0) return 24;

    printf("score=%f keyword=%s\n", score, keyword);
    return 0;
}
"#,
    )
    .unwrap();

    let exe = dir.path().join("client");
    let compile = std::process::Command::new(cc)
        .arg(&c_source)
        .arg("-I")
        .arg(&include_dir)
        .arg(staticlib)
        .arg("-lpthread")
        .arg("-ldl")
        .arg("-lm")
        .arg("-o")
        .arg(&exe)
        .output()
        .expect("compiler invocation");
    assert!(
        compile.status.success(),
        "C compile failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );
    let run = std::process::Command::new(&exe)
        .arg(&lexicon_path)
        .arg(&model_path)
        .arg(&ckpt_path)
        .output()
        .expect("client runs");
    assert!(
        run.status.success(),
        "C client exited {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stdout)
    );
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("score="), "stdout was {stdout:?}");
}
