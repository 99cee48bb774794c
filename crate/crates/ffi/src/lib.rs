//! C ABI for kgforge.
//!
//! Objects cross the boundary as opaque handles created by `kgf_*_load` or
//! `kgf_build_*` and released with the matching `kgf_*_free`. Every fallible
//! call returns a [`KgfStatus`]; on failure the message is available from
//! [`kgf_last_error_message`] on the same thread. Strings returned through
//! `char **out` parameters are owned by the caller and must be released with
//! [`kgf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use kgforge::builder::{sample_roots, Builder};
use kgforge::config::ConfigLayer;
use kgforge::corpus::{CorpusIndex, Segmenter};
use kgforge::eval::{self, Contingency};
use kgforge::export::{export, ExportFormat};
use kgforge::model::{Entity, KgTree};
use kgforge::openkg::OpenKg;
use kgforge::prompting::render_triple;
use kgforge::pruner::{HeuristicPruner, Label};
use kgforge::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    Config = 6,
    NoContext = 7,
    Llm = 8,
    Evaluation = 9,
    Internal = 10,
}

/// Tail classification returned by [`kgf_heuristic_classify`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgfLabel {
    Growing = 0,
    Pruned = 1,
}

/// Agreement of judge A against reference judge B.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KgfAgreement {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub kappa: f64,
}

/// Opaque open-KG handle.
pub struct KgfOpenKg(OpenKg);

/// Opaque corpus handle.
pub struct KgfCorpus(CorpusIndex);

/// Opaque graph handle (a build result or a loaded snapshot).
pub struct KgfGraph(KgTree);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> KgfStatus {
    match e {
        Error::Io { .. } => KgfStatus::Io,
        Error::Parse { .. } | Error::MalformedTriple(_) => KgfStatus::Parse,
        Error::Config(_) | Error::InvalidRule(_) => KgfStatus::Config,
        Error::NoContext(_) => KgfStatus::NoContext,
        Error::Llm(_) => KgfStatus::Llm,
        Error::MissingJudgment(_) | Error::DuplicateJudgment { .. } | Error::KeyMismatch(_) | Error::EmptyInput(_) => {
            KgfStatus::Evaluation
        }
        Error::IllegalTransition { .. } | Error::UnknownEntity(_) => KgfStatus::Internal,
        _ => KgfStatus::InvalidArgument,
    }
}

fn fail(status: KgfStatus, msg: impl Into<String>) -> KgfStatus {
    set_error(msg.into());
    status
}

fn fail_with(e: Error) -> KgfStatus {
    let status = status_of(&e);
    fail(status, e.to_string())
}

/// Run `body`, mapping panics to `Internal` so they never unwind into C.
fn guard(body: impl FnOnce() -> Result<(), KgfStatus>) -> KgfStatus {
    clear_error();
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(body)) {
        Ok(Ok(())) => KgfStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(KgfStatus::Internal, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, KgfStatus> {
    if p.is_null() {
        return Err(fail(KgfStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(KgfStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, KgfStatus> {
    p.as_ref()
        .ok_or_else(|| fail(KgfStatus::NullArgument, format!("`{name}` is null")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), KgfStatus> {
    if p.is_null() {
        Err(fail(KgfStatus::NullArgument, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

fn entity(s: &str) -> Result<Entity, KgfStatus> {
    Entity::new(s).map_err(fail_with)
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), KgfStatus> {
    let c = CString::new(s).map_err(|_| fail(KgfStatus::Internal, "output contains a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kgf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the last error message on this thread, or NULL if the last call
/// succeeded. Release with [`kgf_string_free`].
#[no_mangle]
pub extern "C" fn kgf_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |m| m.clone().into_raw()))
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kgf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a tab-separated open KG file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_openkg_load(path: *const c_char, out: *mut *mut KgfOpenKg) -> KgfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        out_arg(out, "out")?;
        let kg = OpenKg::load(&PathBuf::from(path)).map_err(fail_with)?;
        *out = Box::into_raw(Box::new(KgfOpenKg(kg)));
        Ok(())
    })
}

/// # Safety
/// `kg` must come from [`kgf_openkg_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kgf_openkg_free(kg: *mut KgfOpenKg) {
    if !kg.is_null() {
        drop(Box::from_raw(kg));
    }
}

/// Number of records; 0 for NULL.
///
/// # Safety
/// `kg` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgf_openkg_len(kg: *const KgfOpenKg) -> usize {
    kg.as_ref().map_or(0, |k| k.0.len())
}

/// Up to ten example triples for `entity`, one `(h | r | t)` per line.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_openkg_examples(
    kg: *const KgfOpenKg,
    entity_name: *const c_char,
    seed: u64,
    out: *mut *mut c_char,
) -> KgfStatus {
    guard(|| {
        let kg = ref_arg(kg, "kg")?;
        let e = entity(str_arg(entity_name, "entity")?)?;
        out_arg(out, "out")?;
        let examples = kg.0.retrieve_examples(&e, seed).map_err(fail_with)?;
        let lines: Vec<String> = examples.iter().map(render_triple).collect();
        write_string(out, lines.join("\n"))
    })
}

/// Load and segment a corpus file (plain text or `.jsonl`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_corpus_load(path: *const c_char, out: *mut *mut KgfCorpus) -> KgfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        out_arg(out, "out")?;
        let corpus = CorpusIndex::load(&[PathBuf::from(path)], &Segmenter::default()).map_err(fail_with)?;
        *out = Box::into_raw(Box::new(KgfCorpus(corpus)));
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from [`kgf_corpus_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kgf_corpus_free(corpus: *mut KgfCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of sentences; 0 for NULL.
///
/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgf_corpus_len(corpus: *const KgfCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// Frequency-ranked context for `entity`, at most `max_tokens` tokens.
/// Returns `NoContext` when the corpus never mentions it.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_corpus_retrieve(
    corpus: *const KgfCorpus,
    entity_name: *const c_char,
    max_tokens: usize,
    out: *mut *mut c_char,
) -> KgfStatus {
    guard(|| {
        let corpus = ref_arg(corpus, "corpus")?;
        let e = entity(str_arg(entity_name, "entity")?)?;
        out_arg(out, "out")?;
        let text = corpus.0.retrieve_context(&e, max_tokens).map_err(fail_with)?;
        write_string(out, text)
    })
}

/// Run a build from a TOML config file. `roots` is a comma-separated list,
/// or NULL to use the config's roots (or a seeded sample of the open KG).
///
/// # Safety
/// `config_path` must be a NUL-terminated string, `roots` NULL or one;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_build_from_config(
    config_path: *const c_char,
    roots: *const c_char,
    out: *mut *mut KgfGraph,
) -> KgfStatus {
    guard(|| {
        let config_path = str_arg(config_path, "config_path")?;
        let roots = if roots.is_null() {
            None
        } else {
            Some(str_arg(roots, "roots")?)
        };
        out_arg(out, "out")?;
        let mut layer = ConfigLayer::load(&PathBuf::from(config_path)).map_err(fail_with)?;
        if let Some(r) = roots {
            layer.roots = Some(r.split(',').map(|s| s.trim().to_string()).collect());
        }
        let settings = layer.resolve().map_err(fail_with)?;
        let inputs = settings.load_inputs().map_err(fail_with)?;
        let roots: Vec<Entity> = match &settings.roots {
            Some(names) => names.iter().map(|n| entity(n)).collect::<Result<_, _>>()?,
            None => sample_roots(
                &inputs.open_kg,
                settings.build.root_sample_size,
                settings.build.rng_seed,
            )
            .map_err(fail_with)?,
        };
        let (tree, _) = Builder::new(settings.build.clone(), inputs.deps(&settings))
            .and_then(|b| b.build(&roots))
            .map_err(fail_with)?;
        *out = Box::into_raw(Box::new(KgfGraph(tree)));
        Ok(())
    })
}

/// Load a line-delimited snapshot.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_snapshot_load(path: *const c_char, out: *mut *mut KgfGraph) -> KgfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        out_arg(out, "out")?;
        let tree = KgTree::load_snapshot(&PathBuf::from(path)).map_err(fail_with)?;
        *out = Box::into_raw(Box::new(KgfGraph(tree)));
        Ok(())
    })
}

/// # Safety
/// `graph` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kgf_graph_free(graph: *mut KgfGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of triples; 0 for NULL.
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgf_graph_triple_count(graph: *const KgfGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.len())
}

/// Number of entities; 0 for NULL.
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgf_graph_node_count(graph: *const KgfGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.node_count())
}

/// Render the graph as `snapshot`, `dot`, `graphml` or `tsv`.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_graph_export(
    graph: *const KgfGraph,
    format: *const c_char,
    out: *mut *mut c_char,
) -> KgfStatus {
    guard(|| {
        let graph = ref_arg(graph, "graph")?;
        let format = str_arg(format, "format")?;
        out_arg(out, "out")?;
        let text = if format.eq_ignore_ascii_case("snapshot") {
            let mut buf = Vec::new();
            graph
                .0
                .write_snapshot(&mut buf)
                .map_err(|e| fail(KgfStatus::Internal, e.to_string()))?;
            String::from_utf8(buf).map_err(|e| fail(KgfStatus::Internal, e.to_string()))?
        } else {
            let fmt: ExportFormat = format.parse().map_err(fail_with)?;
            export(&graph.0, fmt)
        };
        write_string(out, text)
    })
}

/// Classify a tail entity with the default heuristic pruner.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_heuristic_classify(text: *const c_char, out: *mut KgfLabel) -> KgfStatus {
    guard(|| {
        let e = entity(str_arg(text, "text")?)?;
        out_arg(out, "out")?;
        *out = match HeuristicPruner::default().classify(&e) {
            Label::Growing => KgfLabel::Growing,
            Label::Pruned => KgfLabel::Pruned,
        };
        Ok(())
    })
}

/// Mean of `len` per-text triple counts.
///
/// # Safety
/// `counts` must point to `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_number_of_recalls(counts: *const usize, len: usize, out: *mut f64) -> KgfStatus {
    guard(|| {
        if counts.is_null() && len > 0 {
            return Err(fail(KgfStatus::NullArgument, "`counts` is null"));
        }
        out_arg(out, "out")?;
        let slice = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(counts, len)
        };
        *out = eval::number_of_recalls(slice).map_err(fail_with)?;
        Ok(())
    })
}

/// Precision, recall, F1 and Cohen's kappa from a 2x2 table (B is the
/// reference).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_agreement_from_table(
    both: u64,
    a_only: u64,
    b_only: u64,
    neither: u64,
    out: *mut KgfAgreement,
) -> KgfStatus {
    guard(|| {
        out_arg(out, "out")?;
        let ag = Contingency {
            both,
            a_only,
            b_only,
            neither,
        }
        .agreement();
        *out = KgfAgreement {
            precision: ag.precision,
            recall: ag.recall,
            f1: ag.f1,
            kappa: ag.kappa,
        };
        Ok(())
    })
}
