//! C ABI over the `isec` library.
//!
//! Every fallible function returns an [`IsecStatus`]; on failure a message is
//! available from [`isec_last_error_message`] on the same thread. Handles
//! (`IsecConfig`, `IsecRanking`) are opaque and must be released with their
//! `_free` function. Strings returned through `char **` out-parameters are
//! owned by the caller and released with [`isec_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use isec::report::{run_summary, RankingReport};
use isec::{CostConfig, Error, HashEmbedder, IndexMode, IndexParams, Ranking, Taxonomy};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    Domain = 6,
    OutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsecIndexMode {
    Hnsw = 0,
    Exact = 1,
}

/// Cost model handle.
pub struct IsecConfig {
    inner: CostConfig,
}

/// Ranked pair list handle.
pub struct IsecRanking {
    ranking: Ranking,
    cfg: CostConfig,
    params: IndexParams,
    labels: Vec<CString>,
}

/// Summary of a minimal weighted edit path.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IsecAlignment {
    pub total_cost: f64,
    pub n_ops: usize,
    pub cm: f64,
    pub cp: f64,
    /// `cm + k * cp`; 0 when the labels are identical.
    pub cmp: f64,
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
    pub transpositions: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IsecRankParams {
    /// Neighbours per label; clamped to n - 1.
    pub top_k: usize,
    pub mode: IsecIndexMode,
    pub seed: u64,
    pub ef_search: usize,
}

/// One ranked pair. Label pointers stay valid while the ranking lives.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IsecPairView {
    pub rank: usize,
    pub i: usize,
    pub j: usize,
    pub label_i: *const c_char,
    pub label_j: *const c_char,
    pub isec: f64,
    pub fmn: f64,
    pub dsn: f64,
    pub cm: f64,
    pub cp: f64,
    pub cmp: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> IsecStatus {
    match err {
        Error::Io { .. } | Error::Write(_) => IsecStatus::Io,
        Error::Parse(_) | Error::Json(_) | Error::Csv(_) => IsecStatus::Parse,
        Error::Domain(_) | Error::DegeneratePath | Error::ZeroNorm => IsecStatus::Domain,
        Error::UnknownLabel(_) => IsecStatus::OutOfRange,
        _ => IsecStatus::InvalidArgument,
    }
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (IsecStatus, String)>) -> IsecStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IsecStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            IsecStatus::Panic
        }
    }
}

type FfiResult<T> = Result<T, (IsecStatus, String)>;

fn lib<T>(r: isec::Result<T>) -> FfiResult<T> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err((IsecStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (IsecStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut()
        .ok_or_else(|| (IsecStatus::NullPointer, format!("{name} is null")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .ok_or_else(|| (IsecStatus::NullPointer, format!("{name} is null")))
}

fn c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (IsecStatus::InvalidArgument, "string contains NUL".to_string()))
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn isec_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn isec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn isec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration: unit costs, k = 0, alpha = 0.5.
#[no_mangle]
pub unsafe extern "C" fn isec_config_new(out: *mut *mut IsecConfig) -> IsecStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(IsecConfig {
            inner: CostConfig::default(),
        }));
        Ok(())
    })
}

/// Parses a cost-override JSON document.
#[no_mangle]
pub unsafe extern "C" fn isec_config_from_json(json: *const c_char, out: *mut *mut IsecConfig) -> IsecStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let out = out_arg(out, "out")?;
        let inner = lib(CostConfig::from_json_str(text))?;
        *out = Box::into_raw(Box::new(IsecConfig { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn isec_config_load(path: *const c_char, out: *mut *mut IsecConfig) -> IsecStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let inner = lib(CostConfig::load(path))?;
        *out = Box::into_raw(Box::new(IsecConfig { inner }));
        Ok(())
    })
}

/// Canonical JSON form of the configuration; free with `isec_string_free`.
#[no_mangle]
pub unsafe extern "C" fn isec_config_to_json(cfg: *const IsecConfig, out: *mut *mut c_char) -> IsecStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        let out = out_arg(out, "out")?;
        *out = c_string(cfg.inner.to_json_string())?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn isec_config_set_alpha(cfg: *mut IsecConfig, alpha: f64) -> IsecStatus {
    guard(|| lib(out_arg(cfg, "cfg")?.inner.set_alpha(alpha)))
}

#[no_mangle]
pub unsafe extern "C" fn isec_config_set_k(cfg: *mut IsecConfig, k: f64) -> IsecStatus {
    guard(|| lib(out_arg(cfg, "cfg")?.inner.set_k(k)))
}

fn scalar(c: u32, name: &str) -> FfiResult<char> {
    char::from_u32(c).ok_or_else(|| (IsecStatus::InvalidArgument, format!("{name} is not a Unicode scalar")))
}

/// Substitution override; characters are Unicode scalar values.
#[no_mangle]
pub unsafe extern "C" fn isec_config_set_substitution(
    cfg: *mut IsecConfig,
    from: u32,
    to: u32,
    cost: f64,
) -> IsecStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        lib(cfg.inner.set_sub(scalar(from, "from")?, scalar(to, "to")?, cost))
    })
}

#[no_mangle]
pub unsafe extern "C" fn isec_config_set_insertion(cfg: *mut IsecConfig, c: u32, cost: f64) -> IsecStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        lib(cfg.inner.set_ins(scalar(c, "c")?, cost))
    })
}

#[no_mangle]
pub unsafe extern "C" fn isec_config_set_deletion(cfg: *mut IsecConfig, c: u32, cost: f64) -> IsecStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        lib(cfg.inner.set_del(scalar(c, "c")?, cost))
    })
}

#[no_mangle]
pub unsafe extern "C" fn isec_config_set_transposition(cfg: *mut IsecConfig, a: u32, b: u32, cost: f64) -> IsecStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        lib(cfg.inner.set_trans(scalar(a, "a")?, scalar(b, "b")?, cost))
    })
}

#[no_mangle]
pub unsafe extern "C" fn isec_config_free(cfg: *mut IsecConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Minimal weighted edit path from `a` to `b`.
#[no_mangle]
pub unsafe extern "C" fn isec_align(
    cfg: *const IsecConfig,
    a: *const c_char,
    b: *const c_char,
    out: *mut IsecAlignment,
) -> IsecStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.inner;
        let (a, b) = (str_arg(a, "a")?, str_arg(b, "b")?);
        let out = out_arg(out, "out")?;
        let path = isec::align(a, b, cfg);
        let cmp = if path.n_ops == 0 {
            0.0
        } else {
            lib(isec::cmp(&path, cfg.k()))?
        };
        *out = IsecAlignment {
            total_cost: path.total_cost,
            n_ops: path.n_ops,
            cm: path.cm,
            cp: path.cp,
            cmp,
            insertions: path.counts.insertion,
            deletions: path.counts.deletion,
            substitutions: path.counts.substitution,
            transpositions: path.counts.transposition,
        };
        Ok(())
    })
}

/// Edit path with its operation list as JSON; free with `isec_string_free`.
#[no_mangle]
pub unsafe extern "C" fn isec_align_json(
    cfg: *const IsecConfig,
    a: *const c_char,
    b: *const c_char,
    out: *mut *mut c_char,
) -> IsecStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.inner;
        let (a, b) = (str_arg(a, "a")?, str_arg(b, "b")?);
        let out = out_arg(out, "out")?;
        let json = lib(serde_json::to_string(&isec::align(a, b, cfg)).map_err(Error::from))?;
        *out = c_string(json)?;
        Ok(())
    })
}

/// `log10((f_i + f_j) / 2)`; both counts must be >= 1.
#[no_mangle]
pub unsafe extern "C" fn isec_fmn(f_i: u64, f_j: u64, out: *mut f64) -> IsecStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = lib(isec::fmn(f_i, f_j))?;
        Ok(())
    })
}

/// `(1 + fmn) / (dsn^alpha * cmp^(1 - alpha))`.
#[no_mangle]
pub unsafe extern "C" fn isec_pair_score(fmn: f64, dsn: f64, cmp: f64, alpha: f64, out: *mut f64) -> IsecStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = lib(isec::isec_pair(fmn, dsn, cmp, alpha))?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn isec_rank_params_default() -> IsecRankParams {
    let d = IndexParams::default();
    IsecRankParams {
        top_k: d.k,
        mode: IsecIndexMode::Hnsw,
        seed: d.seed,
        ef_search: d.ef_search,
    }
}

/// Ranks `n` labels. `freqs` may be NULL (every label counts once) and
/// `params` may be NULL (defaults). Labels are deduplicated by exact match
/// with frequencies summed.
#[no_mangle]
pub unsafe extern "C" fn isec_rank_labels(
    cfg: *const IsecConfig,
    labels: *const *const c_char,
    freqs: *const u64,
    n: usize,
    params: *const IsecRankParams,
    out: *mut *mut IsecRanking,
) -> IsecStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?.inner.clone();
        let out = out_arg(out, "out")?;
        if labels.is_null() {
            return Err((IsecStatus::NullPointer, "labels is null".into()));
        }
        let mut counts = std::collections::BTreeMap::<String, u64>::new();
        for idx in 0..n {
            let label = str_arg(*labels.add(idx), "label")?;
            let f = if freqs.is_null() { 1 } else { *freqs.add(idx) };
            *counts.entry(label.to_string()).or_insert(0) += f;
        }
        let p = params.as_ref().copied().unwrap_or_else(|| isec_rank_params_default());
        let tax = lib(Taxonomy::embed(counts.into_iter().collect(), &HashEmbedder::default()))?;
        let params = IndexParams {
            k: p.top_k,
            mode: match p.mode {
                IsecIndexMode::Hnsw => IndexMode::Hnsw,
                IsecIndexMode::Exact => IndexMode::Exact,
            },
            seed: p.seed,
            ef_search: p.ef_search,
            ..IndexParams::default()
        }
        .fitted_to(tax.len());
        let ranking = lib(isec::rank_taxonomy(&tax, &cfg, &params))?;
        let labels = tax
            .labels()
            .iter()
            .map(|l| CString::new(l.as_str()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| (IsecStatus::InvalidArgument, "label contains NUL".to_string()))?;
        *out = Box::into_raw(Box::new(IsecRanking {
            ranking,
            cfg,
            params,
            labels,
        }));
        Ok(())
    })
}

/// Number of ranked pairs; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn isec_ranking_len(r: *const IsecRanking) -> usize {
    r.as_ref().map_or(0, |r| r.ranking.scores.len())
}

/// Pair at 0-based position `idx` (rank `idx + 1`).
#[no_mangle]
pub unsafe extern "C" fn isec_ranking_get(r: *const IsecRanking, idx: usize, out: *mut IsecPairView) -> IsecStatus {
    guard(|| {
        let r = ref_arg(r, "ranking")?;
        let out = out_arg(out, "out")?;
        let s = r.ranking.scores.get(idx).ok_or_else(|| {
            (
                IsecStatus::OutOfRange,
                format!("index {idx} out of range ({} pairs)", r.ranking.scores.len()),
            )
        })?;
        *out = IsecPairView {
            rank: idx + 1,
            i: s.i,
            j: s.j,
            label_i: r.labels[s.i].as_ptr(),
            label_j: r.labels[s.j].as_ptr(),
            isec: s.isec,
            fmn: s.fmn,
            dsn: s.dsn,
            cm: s.cm,
            cp: s.cp,
            cmp: s.cmp,
        };
        Ok(())
    })
}

/// Ranking document as JSON, limited to `top_m` pairs (0 keeps all); free
/// with `isec_string_free`.
#[no_mangle]
pub unsafe extern "C" fn isec_ranking_to_json(r: *const IsecRanking, top_m: usize, out: *mut *mut c_char) -> IsecStatus {
    guard(|| {
        let r = ref_arg(r, "ranking")?;
        let out = out_arg(out, "out")?;
        let report = RankingReport {
            scores: &r.ranking.scores,
            cfg: &r.cfg,
            params: &r.params,
            summary: run_summary(&r.ranking.stats, None),
        };
        let mut buf = Vec::new();
        lib(report.write_json(&mut buf, (top_m > 0).then_some(top_m)))?;
        *out = c_string(String::from_utf8(buf).expect("serde_json writes UTF-8"))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn isec_ranking_free(r: *mut IsecRanking) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
