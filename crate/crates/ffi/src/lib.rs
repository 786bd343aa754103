//! C ABI over the retrieval model.
//!
//! Every function returns a [`TmStatus`]; on failure the message is
//! available from [`tm_last_error_message`] on the same thread. Handles are
//! opaque, created by `*_load`/`*_build` and released by the matching
//! `*_free`. Output buffers are caller-allocated with explicit lengths.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tagmetric::checkpoint::Checkpoint;
use tagmetric::dataset::load_vector_file;
use tagmetric::net::MlpBranch;
use tagmetric::retrieval::{average_precision, SongIndex};
use tagmetric::wordvec::{load_word_vectors, WordVectorTable};
use tagmetric::{cosine_distance, Error, Mat};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Shape = 5,
    Domain = 6,
    Numerical = 7,
    OutOfVocabulary = 8,
    BufferTooSmall = 9,
    Internal = 10,
}

pub struct TmWordTable {
    table: WordVectorTable,
}

/// Tag and song branches loaded from a checkpoint.
pub struct TmModel {
    tag: MlpBranch,
    song: MlpBranch,
}

pub struct TmIndex {
    index: SongIndex,
    ids: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> TmStatus {
    match e {
        Error::Shape(_) => TmStatus::Shape,
        Error::Domain(_) | Error::Sampling(_) | Error::Split(_) => TmStatus::Domain,
        Error::Numerical(_) => TmStatus::Numerical,
        Error::Parse { .. } => TmStatus::Parse,
        Error::Io { .. } => TmStatus::Io,
        Error::OutOfVocabulary(_) => TmStatus::OutOfVocabulary,
        Error::Binding(_) | Error::Config(_) => TmStatus::InvalidArgument,
    }
}

struct Fail(TmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(TmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, recording any failure or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> TmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TmStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TmStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(TmStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(src: &[f64], out: *mut f64, out_len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if out_len < src.len() {
        return Err(Fail(
            TmStatus::BufferTooSmall,
            format!("output buffer holds {out_len} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn tm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tm_word_table_load(path: *const c_char, out: *mut *mut TmWordTable) -> TmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let table = load_word_vectors(Path::new(text(path, "path")?))?;
        *out = Box::into_raw(Box::new(TmWordTable { table }));
        Ok(())
    })
}

/// # Safety
/// `table` must come from [`tm_word_table_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tm_word_table_free(table: *mut TmWordTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// # Safety
/// `table` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tm_word_table_dim(table: *const TmWordTable, out: *mut usize) -> TmStatus {
    guard(|| {
        let t = handle(table, "table")?;
        *out.as_mut().ok_or_else(|| null("out"))? = t.table.dim();
        Ok(())
    })
}

/// Resolves a free-text tag to its word vector.
///
/// # Safety
/// `table` must be live, `tag` NUL-terminated, `out` writable for `out_len`
/// values.
#[no_mangle]
pub unsafe extern "C" fn tm_tag_to_vector(
    table: *const TmWordTable,
    tag: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> TmStatus {
    guard(|| {
        let v = handle(table, "table")?.table.tag_to_vector(text(tag, "tag")?)?;
        write_out(&v, out, out_len)
    })
}

/// Loads the `tag` and `song` branches of a checkpoint.
///
/// # Safety
/// `path` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tm_model_load(path: *const c_char, out: *mut *mut TmModel) -> TmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = text(path, "path")?;
        let ck = Checkpoint::read(Path::new(path))?;
        let get = |name: &str| {
            ck.branch(name)
                .cloned()
                .ok_or_else(|| Fail(TmStatus::InvalidArgument, format!("{path} has no {name:?} branch")))
        };
        let model = TmModel { tag: get("tag")?, song: get("song")? };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`tm_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tm_model_free(model: *mut TmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Embedding width of the model; output buffers need this many values.
///
/// # Safety
/// `model` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn tm_model_output_dim(model: *const TmModel, out: *mut usize) -> TmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.tag.out_dim();
        Ok(())
    })
}

/// Embeds a tag through the word table and the tag branch.
///
/// # Safety
/// Handles must be live, `tag` NUL-terminated, `out` writable for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn tm_model_embed_tag(
    model: *const TmModel,
    table: *const TmWordTable,
    tag: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> TmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let v = handle(table, "table")?.table.tag_to_vector(text(tag, "tag")?)?;
        write_out(&m.tag.forward(&v)?, out, out_len)
    })
}

/// Embeds one song input vector through the song branch.
///
/// # Safety
/// `input` readable for `input_len`, `out` writable for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn tm_model_embed_song(
    model: *const TmModel,
    input: *const f64,
    input_len: usize,
    out: *mut f64,
    out_len: usize,
) -> TmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        write_out(&m.song.forward(slice(input, input_len, "input")?)?, out, out_len)
    })
}

/// # Safety
/// `u` and `v` readable for `len` values, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn tm_cosine_distance(u: *const f64, v: *const f64, len: usize, out: *mut f64) -> TmStatus {
    guard(|| {
        let d = cosine_distance(slice(u, len, "u")?, slice(v, len, "v")?)?;
        *out.as_mut().ok_or_else(|| null("out"))? = d;
        Ok(())
    })
}

/// Embeds every song of a vector file (`song_id<TAB>v1 ... vD`) with the
/// model's song branch and indexes the results.
///
/// # Safety
/// `model` live, `path` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn tm_index_build(model: *const TmModel, path: *const c_char, out: *mut *mut TmIndex) -> TmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = handle(model, "model")?;
        let vectors = load_vector_file(Path::new(text(path, "path")?))?;
        let rows: Vec<&[f64]> = vectors.ids().iter().filter_map(|id| vectors.get(id)).collect();
        let emb = m.song.embed_rows(&Mat::from_rows(&rows, vectors.dim())?)?;
        let index = SongIndex::new(vectors.ids().to_vec(), emb)?;
        let ids = index
            .song_ids()
            .iter()
            .map(|s| CString::new(s.as_str()).map_err(|_| Fail(TmStatus::InvalidArgument, "song id contains NUL".into())))
            .collect::<Result<Vec<_>, _>>()?;
        *out = Box::into_raw(Box::new(TmIndex { index, ids }));
        Ok(())
    })
}

/// # Safety
/// `index` must come from [`tm_index_build`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tm_index_free(index: *mut TmIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// # Safety
/// `index` live, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn tm_index_len(index: *const TmIndex, out: *mut usize) -> TmStatus {
    guard(|| {
        *out.as_mut().ok_or_else(|| null("out"))? = handle(index, "index")?.index.len();
        Ok(())
    })
}

/// Song id at `position`; borrowed from the index and valid while it lives.
///
/// # Safety
/// `index` live, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn tm_index_song_id(index: *const TmIndex, position: usize, out: *mut *const c_char) -> TmStatus {
    guard(|| {
        let idx = handle(index, "index")?;
        let id = idx
            .ids
            .get(position)
            .ok_or_else(|| Fail(TmStatus::InvalidArgument, format!("position {position} beyond {} songs", idx.ids.len())))?;
        *out.as_mut().ok_or_else(|| null("out"))? = id.as_ptr();
        Ok(())
    })
}

/// Top-`k` songs nearest to `query` (ascending cosine distance, ties by
/// id). Writes index positions and distances; `out_count` receives the
/// number written, `min(k, len)`.
///
/// # Safety
/// `query` readable for `query_len`; `out_positions` and `out_distances`
/// writable for `k` values; `out_count` valid.
#[no_mangle]
pub unsafe extern "C" fn tm_index_query(
    index: *const TmIndex,
    query: *const f64,
    query_len: usize,
    k: usize,
    out_positions: *mut usize,
    out_distances: *mut f64,
    out_count: *mut usize,
) -> TmStatus {
    guard(|| {
        let idx = handle(index, "index")?;
        if out_positions.is_null() || out_distances.is_null() || out_count.is_null() {
            return Err(null("output buffer"));
        }
        let hits = idx.index.search(slice(query, query_len, "query")?, k)?;
        for (i, (id, d)) in hits.iter().enumerate() {
            let pos = idx.index.song_ids().iter().position(|s| s == id).expect("id from index");
            *out_positions.add(i) = pos;
            *out_distances.add(i) = *d;
        }
        *out_count = hits.len();
        Ok(())
    })
}

/// Average precision of a ranked relevance list (nonzero bytes are
/// relevant) against `n_relevant_total` relevant items.
///
/// # Safety
/// `relevance` readable for `len` bytes, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn tm_average_precision(
    relevance: *const u8,
    len: usize,
    n_relevant_total: usize,
    out: *mut f64,
) -> TmStatus {
    guard(|| {
        if relevance.is_null() && len > 0 {
            return Err(null("relevance"));
        }
        let flags: Vec<bool> = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(relevance, len).iter().map(|&b| b != 0).collect()
        };
        *out.as_mut().ok_or_else(|| null("out"))? = average_precision(&flags, n_relevant_total)?;
        Ok(())
    })
}
