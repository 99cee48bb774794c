use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use kgforge::corpus::{CorpusIndex, Segmenter};
use kgforge::model::Entity;
use kgforge_ffi::*;

fn toy(name: &str) -> CString {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures/toy")
        .join(name);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Take ownership of a library string.
unsafe fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    kgf_string_free(s);
    out
}

fn last_error() -> Option<String> {
    let p = kgf_last_error_message();
    (!p.is_null()).then(|| unsafe { take(p) })
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(kgf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn open_kg_handle() {
    unsafe {
        let mut kg = ptr::null_mut();
        assert_eq!(kgf_openkg_load(toy("openkg.tsv").as_ptr(), &mut kg), KgfStatus::Ok);
        assert!(last_error().is_none());
        assert_eq!(kgf_openkg_len(kg), 25);

        let mut out = ptr::null_mut();
        assert_eq!(kgf_openkg_examples(kg, c("Rice").as_ptr(), 42, &mut out), KgfStatus::Ok);
        let text = take(out);
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().all(|l| l.starts_with("(rice | ")), "{text}");

        let mut again = ptr::null_mut();
        kgf_openkg_examples(kg, c("Rice").as_ptr(), 42, &mut again);
        assert_eq!(take(again), text);

        assert_eq!(
            kgf_openkg_examples(kg, c("  ").as_ptr(), 0, &mut out),
            KgfStatus::InvalidArgument
        );
        assert!(last_error().is_some());
        kgf_openkg_free(kg);
        kgf_openkg_free(ptr::null_mut());
        assert_eq!(kgf_openkg_len(ptr::null()), 0);
    }
}

#[test]
fn corpus_retrieval_matches_library() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/toy/corpus.txt");
    let lib = CorpusIndex::load(&[path], &Segmenter::default()).unwrap();
    let want = lib.retrieve_context(&Entity::new("rice").unwrap(), 40).unwrap();
    unsafe {
        let mut corpus = ptr::null_mut();
        assert_eq!(kgf_corpus_load(toy("corpus.txt").as_ptr(), &mut corpus), KgfStatus::Ok);
        assert_eq!(kgf_corpus_len(corpus), lib.len());
        let mut out = ptr::null_mut();
        assert_eq!(
            kgf_corpus_retrieve(corpus, c("rice").as_ptr(), 40, &mut out),
            KgfStatus::Ok
        );
        assert_eq!(take(out), want);

        out = ptr::null_mut();
        let status = kgf_corpus_retrieve(corpus, c("quantum chromodynamics").as_ptr(), 40, &mut out);
        assert_eq!(status, KgfStatus::NoContext);
        assert!(out.is_null());
        assert!(last_error().unwrap().contains("quantum chromodynamics"));
        kgf_corpus_free(corpus);
    }
}

#[test]
fn build_export_and_reload() {
    unsafe {
        let mut graph = ptr::null_mut();
        let status = kgf_build_from_config(toy("config.toml").as_ptr(), ptr::null(), &mut graph);
        assert_eq!(status, KgfStatus::Ok, "{:?}", last_error());
        assert_eq!(kgf_graph_triple_count(graph), 36);
        assert_eq!(kgf_graph_node_count(graph), 32);

        let mut out = ptr::null_mut();
        assert_eq!(kgf_graph_export(graph, c("snapshot").as_ptr(), &mut out), KgfStatus::Ok);
        let snapshot = take(out);
        assert_eq!(snapshot.lines().count(), 36);

        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("kg.jsonl");
        std::fs::write(&file, &snapshot).unwrap();
        let mut reloaded = ptr::null_mut();
        let cfile = c(file.to_str().unwrap());
        assert_eq!(kgf_snapshot_load(cfile.as_ptr(), &mut reloaded), KgfStatus::Ok);
        kgf_graph_export(reloaded, c("snapshot").as_ptr(), &mut out);
        assert_eq!(take(out), snapshot);

        for (format, marker) in [("dot", "digraph"), ("graphml", "<graphml"), ("TSV", "rice\t")] {
            assert_eq!(kgf_graph_export(graph, c(format).as_ptr(), &mut out), KgfStatus::Ok);
            assert!(take(out).contains(marker), "{format}");
        }
        out = ptr::null_mut();
        assert_eq!(
            kgf_graph_export(graph, c("png").as_ptr(), &mut out),
            KgfStatus::InvalidArgument
        );
        assert!(out.is_null());

        let mut one = ptr::null_mut();
        let status = kgf_build_from_config(toy("config.toml").as_ptr(), c("cereal").as_ptr(), &mut one);
        assert_eq!(status, KgfStatus::Ok, "{:?}", last_error());
        assert!(kgf_graph_triple_count(one) < 36);

        kgf_graph_free(one);
        kgf_graph_free(reloaded);
        kgf_graph_free(graph);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut kg = ptr::null_mut();
        assert_eq!(kgf_openkg_load(ptr::null(), &mut kg), KgfStatus::NullArgument);
        assert!(last_error().unwrap().contains("path"));
        assert_eq!(
            kgf_openkg_load(toy("openkg.tsv").as_ptr(), ptr::null_mut()),
            KgfStatus::NullArgument
        );
        assert_eq!(
            kgf_openkg_load(c("/nonexistent/kg.tsv").as_ptr(), &mut kg),
            KgfStatus::Io
        );
        assert!(kg.is_null());

        let bad = [0xffu8, 0xfe, 0];
        let status = kgf_openkg_load(bad.as_ptr().cast(), &mut kg);
        assert_eq!(status, KgfStatus::InvalidUtf8);

        let dir = tempfile::tempdir().unwrap();
        let broken = dir.path().join("broken.jsonl");
        std::fs::write(&broken, "{not json\n").unwrap();
        let mut graph = ptr::null_mut();
        let cbroken = c(broken.to_str().unwrap());
        assert_eq!(kgf_snapshot_load(cbroken.as_ptr(), &mut graph), KgfStatus::Parse);

        let config = dir.path().join("kg.toml");
        std::fs::write(&config, "max_levels = \"three\"\n").unwrap();
        let cconfig = c(config.to_str().unwrap());
        assert_eq!(
            kgf_build_from_config(cconfig.as_ptr(), ptr::null(), &mut graph),
            KgfStatus::Config
        );

        let mut out = ptr::null_mut();
        assert_eq!(
            kgf_graph_export(ptr::null(), c("dot").as_ptr(), &mut out),
            KgfStatus::NullArgument
        );

        // a success clears the previous message
        let mut label = KgfLabel::Growing;
        assert_eq!(kgf_heuristic_classify(c("rice").as_ptr(), &mut label), KgfStatus::Ok);
        assert!(last_error().is_none());
    }
}

#[test]
fn errors_are_thread_local() {
    unsafe {
        let mut kg = ptr::null_mut();
        kgf_openkg_load(ptr::null(), &mut kg);
    }
    let other = std::thread::spawn(last_error).join().unwrap();
    assert!(other.is_none());
    assert!(last_error().is_some());
}

#[test]
fn heuristic_labels() {
    let classify = |s: &str| {
        let mut label = KgfLabel::Growing;
        let status = unsafe { kgf_heuristic_classify(c(s).as_ptr(), &mut label) };
        assert_eq!(status, KgfStatus::Ok);
        label
    };
    assert_eq!(classify("rice blast disease"), KgfLabel::Growing);
    assert_eq!(classify("33 acres"), KgfLabel::Pruned);
    assert_eq!(classify("33 ACRES"), KgfLabel::Pruned);
}

#[test]
fn metrics() {
    unsafe {
        let counts = [3usize, 4, 0, 7];
        let mut mean = 0.0;
        assert_eq!(
            kgf_number_of_recalls(counts.as_ptr(), counts.len(), &mut mean),
            KgfStatus::Ok
        );
        assert_eq!(mean, 3.5);
        assert_eq!(kgf_number_of_recalls(ptr::null(), 0, &mut mean), KgfStatus::Evaluation);
        assert_eq!(
            kgf_number_of_recalls(ptr::null(), 2, &mut mean),
            KgfStatus::NullArgument
        );

        let mut ag = KgfAgreement::default();
        assert_eq!(kgf_agreement_from_table(40, 10, 5, 45, &mut ag), KgfStatus::Ok);
        // independent arithmetic: po = 0.85, pe = 0.5*0.45 + 0.5*0.55 = 0.5
        assert!((ag.precision - 0.8).abs() < 1e-12);
        assert!((ag.recall - 40.0 / 45.0).abs() < 1e-12);
        let f1 = 2.0 * 0.8 * (40.0 / 45.0) / (0.8 + 40.0 / 45.0);
        assert!((ag.f1 - f1).abs() < 1e-12);
        assert!((ag.kappa - 0.7).abs() < 1e-12);
        assert_eq!(
            kgf_agreement_from_table(1, 1, 1, 1, ptr::null_mut()),
            KgfStatus::NullArgument
        );
    }
}

fn header() -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/kgforge.h");
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn header_declares_the_abi() {
    let h = header();
    for f in [
        "kgf_version",
        "kgf_last_error_message",
        "kgf_string_free",
        "kgf_openkg_load",
        "kgf_openkg_free",
        "kgf_openkg_len",
        "kgf_openkg_examples",
        "kgf_corpus_load",
        "kgf_corpus_free",
        "kgf_corpus_len",
        "kgf_corpus_retrieve",
        "kgf_build_from_config",
        "kgf_snapshot_load",
        "kgf_graph_free",
        "kgf_graph_triple_count",
        "kgf_graph_node_count",
        "kgf_graph_export",
        "kgf_heuristic_classify",
        "kgf_number_of_recalls",
        "kgf_agreement_from_table",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f} missing from header");
    }
    for item in [
        "KGF_STATUS_OK = 0",
        "KGF_STATUS_NULL_ARGUMENT = 1",
        "KGF_STATUS_INTERNAL = 10",
        "KGF_LABEL_PRUNED = 1",
        "typedef struct KgfGraph KgfGraph;",
        "typedef struct KgfOpenKg KgfOpenKg;",
        "typedef struct KgfCorpus KgfCorpus;",
        "#ifndef KGFORGE_H",
    ] {
        assert!(h.contains(item), "{item} missing from header");
    }
}

/// Directory holding the built cdylib (target/<profile>).
fn lib_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

const SMOKE: &str = r#"
#include <stdio.h>
#include <string.h>
#include "kgforge.h"

int main(int argc, char **argv) {
    KgfOpenKg *kg = NULL;
    if (kgf_openkg_load(argv[1], &kg) != KGF_STATUS_OK) return 2;
    printf("%zu\n", kgf_openkg_len(kg));
    char *examples = NULL;
    if (kgf_openkg_examples(kg, "wheat", 7, &examples) != KGF_STATUS_OK) return 3;
    printf("%s\n", examples);
    kgf_string_free(examples);
    kgf_openkg_free(kg);

    KgfOpenKg *missing = NULL;
    if (kgf_openkg_load("/nonexistent", &missing) != KGF_STATUS_IO) return 4;
    char *msg = kgf_last_error_message();
    if (msg == NULL || strlen(msg) == 0) return 5;
    kgf_string_free(msg);

    KgfLabel label;
    kgf_heuristic_classify("45%", &label);
    printf("%d\n", label == KGF_LABEL_PRUNED);
    return 0;
}
"#;

#[test]
fn c_program_links_against_the_library() {
    let lib = lib_dir();
    if Command::new("cc").arg("--version").output().is_err() || !lib.join("libkgforge_ffi.so").exists() {
        eprintln!("skipping: no C compiler or cdylib at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(&src, SMOKE).unwrap();
    let bin = dir.path().join("smoke");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let res = Command::new("cc")
        .arg("-Wall")
        .arg("-Werror")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg("-L")
        .arg(&lib)
        .arg(format!("-Wl,-rpath,{}", lib.display()))
        .arg("-lkgforge_ffi")
        .arg("-o")
        .arg(&bin)
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let kg = toy("openkg.tsv");
    let res = Command::new(&bin).arg(kg.to_str().unwrap()).output().unwrap();
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let out = String::from_utf8(res.stdout).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "25");
    assert_eq!(lines.iter().filter(|l| l.starts_with("(wheat | ")).count(), 3);
    assert_eq!(*lines.last().unwrap(), "1");
}
