use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use crowdtag::cli::{init_model, load_split};
use crowdtag::model::{save_checkpoint, ModelSettings};
use crowdtag_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(crowdtag_last_error()).to_string_lossy().into_owned() }
}

fn take(s: *mut std::ffi::c_char) -> String {
    let out = unsafe { CStr::from_ptr(s).to_string_lossy().into_owned() };
    unsafe { crowdtag_string_free(s) };
    out
}

/// Simulated corpus in `<dir>/corpus` plus an untrained checkpoint.
fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let corpus = dir.join("corpus");
    let status = unsafe { crowdtag_simulate(ptr::null(), 3, c(corpus.to_str().unwrap()).as_ptr()) };
    assert_eq!(status, CrowdtagStatus::Ok);
    let train = load_split(&corpus, "train").unwrap();
    let settings = ModelSettings {
        model_dim: 8,
        layers: 1,
        heads: 2,
        pgn_layers: 1,
        ..ModelSettings::default()
    };
    let model = init_model(&train, &settings, 3).unwrap();
    let ckpt = dir.join("model.json");
    save_checkpoint(&model, &ckpt).unwrap();
    (corpus, ckpt)
}

#[test]
fn load_predict_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus_dir, ckpt) = fixture(dir.path());
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { crowdtag_model_load(c(ckpt.to_str().unwrap()).as_ptr(), &mut model) }, CrowdtagStatus::Ok);
    assert_eq!(unsafe { crowdtag_model_annotator_count(model) }, 70);

    let mut json = ptr::null_mut();
    let sentence = c("the film was good");
    assert_eq!(unsafe { crowdtag_model_predict(model, sentence.as_ptr(), ptr::null(), &mut json) }, CrowdtagStatus::Ok);
    let spans: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
    assert!(spans.is_array());

    let status = unsafe { crowdtag_model_predict(model, sentence.as_ptr(), c("nobody").as_ptr(), &mut json) };
    assert_eq!(status, CrowdtagStatus::UnknownAnnotator);
    assert!(last_error().contains("nobody"));

    let mut corpus = ptr::null_mut();
    let status = unsafe { crowdtag_corpus_load(c(corpus_dir.to_str().unwrap()).as_ptr(), c("test").as_ptr(), &mut corpus) };
    assert_eq!(status, CrowdtagStatus::Ok);
    assert_eq!(unsafe { crowdtag_corpus_len(corpus) }, 200);
    assert_eq!(unsafe { crowdtag_evaluate(model, corpus, ptr::null(), false, &mut json) }, CrowdtagStatus::Ok);
    let report: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
    assert!(report["exact_f1"].is_number());

    // the untrained model scored here must agree with the Rust API
    let direct = crowdtag::train::evaluate_model(
        &crowdtag::model::load_checkpoint(&ckpt).unwrap(),
        &load_split(&corpus_dir, "test").unwrap(),
        &crowdtag::model::AnnotatorInput::Expert,
        &crowdtag::train::Reference::Gold,
    )
    .unwrap()
    .unwrap()
    .0;
    assert_eq!(report["exact_f1"].as_f64().unwrap(), direct.exact.f1);

    unsafe {
        crowdtag_corpus_free(corpus);
        crowdtag_model_free(model);
    }
}

#[test]
fn failures_set_status_and_message() {
    let mut model = ptr::null_mut();
    let status = unsafe { crowdtag_model_load(c("/nonexistent/model.json").as_ptr(), &mut model) };
    assert_eq!(status, CrowdtagStatus::Io);
    assert!(model.is_null());
    assert!(last_error().contains("/nonexistent/model.json"));

    assert_eq!(unsafe { crowdtag_model_load(ptr::null(), &mut model) }, CrowdtagStatus::NullArgument);
    let bad = [0xffu8, 0];
    assert_eq!(unsafe { crowdtag_model_load(bad.as_ptr().cast(), &mut model) }, CrowdtagStatus::InvalidUtf8);

    let mut json = ptr::null_mut();
    let status = unsafe { crowdtag_model_predict(ptr::null(), c("x").as_ptr(), ptr::null(), &mut json) };
    assert_eq!(status, CrowdtagStatus::NullArgument);
    assert_eq!(unsafe { crowdtag_corpus_len(ptr::null()) }, 0);
    unsafe {
        crowdtag_model_free(ptr::null_mut());
        crowdtag_corpus_free(ptr::null_mut());
        crowdtag_string_free(ptr::null_mut());
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(crowdtag_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Compiles a small C program against the generated header and the static
/// library. Skipped when no C compiler is installed.
#[test]
fn header_links_from_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // tests run from target/<profile>/deps
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libcrowdtag_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "crowdtag.h"

int main(int argc, char **argv) {
    CrowdtagModel *model = NULL;
    if (crowdtag_model_load("/nonexistent.json", &model) != CROWDTAG_STATUS_IO) return 1;
    if (model != NULL || crowdtag_last_error() == NULL) return 2;
    if (crowdtag_simulate(NULL, 1, argv[1]) != CROWDTAG_STATUS_OK) return 3;
    CrowdtagCorpus *corpus = NULL;
    if (crowdtag_corpus_load(argv[1], "dev", &corpus) != CROWDTAG_STATUS_OK) return 4;
    printf("%zu %s\n", crowdtag_corpus_len(corpus), crowdtag_version());
    crowdtag_corpus_free(corpus);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("demo");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).arg(dir.path().join("sim")).output().unwrap();
    assert!(out.status.success(), "demo exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), format!("200 {}", env!("CARGO_PKG_VERSION")));
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
