//! C ABI over the network builder and classifier.
//!
//! Networks are handed out as opaque `AcnnNetwork` pointers that must be
//! released with [`acnn_network_free`]. Every fallible call returns an
//! [`AcnnStatus`]; on failure a description is available from
//! [`acnn_last_error_message`] on the same thread until the next failing call.
//! Panics never cross the boundary: they are reported as
//! `ACNN_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use acnn::mnist_io::{self, RawImage, Selection, IMAGE_SIDE, NUM_CLASSES};
use acnn::{eval, format, AnalyticNetwork, BuildConfig, Error, Grid};

/// Result codes shared by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// An image or label file could not be decoded.
    BadData = 4,
    /// A network file is corrupt, truncated or of another version.
    BadFormat = 5,
    /// The network could not be built from the given exemplars.
    BuildFailed = 6,
    Panic = 7,
}

/// Construction presets, passed to [`acnn_network_build`] as their integer
/// value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcnnPreset {
    /// Per-exemplar channels, 2×2 pooling, K = 40.
    Pooled = 0,
    /// Per-exemplar channels, no pooling, K = 40.
    Unpooled = 1,
    /// Max-merged channels, no pooling, K = 30.
    Merged = 2,
}

/// Opaque network handle.
pub struct AcnnNetwork {
    inner: AnalyticNetwork,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(AcnnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => AcnnStatus::Io,
            Error::Idx(_) | Error::LabelCount { .. } => AcnnStatus::BadData,
            Error::Format(_) => AcnnStatus::BadFormat,
            Error::MissingClass(_) | Error::Selection(_) | Error::Config(_) => AcnnStatus::InvalidArgument,
            _ => AcnnStatus::BuildFailed,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: AcnnStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, converting errors and panics into a status plus a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AcnnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AcnnStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            AcnnStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or point to a NUL-terminated string.
unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return fail(AcnnStatus::NullPointer, format!("{what} is null"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(AcnnStatus::InvalidArgument, format!("{what} is not valid UTF-8")),
    }
}

fn network<'a>(net: *const AcnnNetwork) -> Result<&'a AcnnNetwork, Failure> {
    // SAFETY: callers pass either null or a handle from this library.
    unsafe { net.as_ref() }.ok_or(Failure(AcnnStatus::NullPointer, "network handle is null".into()))
}

fn publish(net: AnalyticNetwork, out: *mut *mut AcnnNetwork) {
    let handle = Box::into_raw(Box::new(AcnnNetwork { inner: net }));
    // SAFETY: `out` was checked non-null by the caller.
    unsafe { *out = handle };
}

/// Loads a saved network file.
///
/// On success `*out` receives a new handle; on failure it is set to null.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn acnn_network_load(path: *const c_char, out: *mut *mut AcnnNetwork) -> AcnnStatus {
    if out.is_null() {
        set_last_error("out is null");
        return AcnnStatus::NullPointer;
    }
    *out = ptr::null_mut();
    guard(|| {
        let path = path_arg(path, "path")?;
        let net = format::load(&path)?;
        publish(net, out);
        Ok(())
    })
}

/// Builds a network from an IDX image/label pair.
///
/// With `exemplar_indices` non-null, its `count` entries are the dataset
/// positions of the exemplars (one per class). With it null, one exemplar
/// per class is drawn using `seed`. `preset` is an `AcnnPreset` value. On
/// failure `*out` is set to null.
///
/// # Safety
/// Path arguments must be NUL-terminated strings, `exemplar_indices` must
/// be null or point to `count` values, and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn acnn_network_build(
    images_path: *const c_char,
    labels_path: *const c_char,
    exemplar_indices: *const usize,
    count: usize,
    seed: u64,
    preset: u32,
    out: *mut *mut AcnnNetwork,
) -> AcnnStatus {
    if out.is_null() {
        set_last_error("out is null");
        return AcnnStatus::NullPointer;
    }
    *out = ptr::null_mut();
    guard(|| {
        let images = path_arg(images_path, "images_path")?;
        let labels = path_arg(labels_path, "labels_path")?;
        let selection = if exemplar_indices.is_null() {
            Selection::Seeded(seed)
        } else {
            Selection::Indices(std::slice::from_raw_parts(exemplar_indices, count).to_vec())
        };
        let cfg = match preset {
            p if p == AcnnPreset::Pooled as u32 => BuildConfig::pooled_image_channels(),
            p if p == AcnnPreset::Unpooled as u32 => BuildConfig::unpooled_image_channels(),
            p if p == AcnnPreset::Merged as u32 => BuildConfig::unpooled_merged(),
            other => return fail(AcnnStatus::InvalidArgument, format!("unknown preset {other}")),
        };
        let data = mnist_io::load_labeled(&images, &labels)?;
        let pool = eval::exemplar_pool(&data);
        let exemplars = mnist_io::select_exemplars(&pool, &selection, NUM_CLASSES)?;
        let (net, _) = AnalyticNetwork::build(&exemplars, &cfg)?;
        publish(net, out);
        Ok(())
    })
}

/// Writes the network to `path` in the checksummed binary format.
///
/// # Safety
/// `net` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn acnn_network_save(net: *const AcnnNetwork, path: *const c_char) -> AcnnStatus {
    guard(|| {
        let net = network(net)?;
        let path = path_arg(path, "path")?;
        format::save(&net.inner, &path)?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn acnn_network_free(net: *mut AcnnNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of classes the network distinguishes; 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn acnn_network_num_classes(net: *const AcnnNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.classes())
}

/// Kernel counts of the two convolutional layers.
///
/// # Safety
/// `net` must be a live handle; `layer1` and `layer2` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn acnn_network_kernel_counts(
    net: *const AcnnNetwork,
    layer1: *mut usize,
    layer2: *mut usize,
) -> AcnnStatus {
    guard(|| {
        let net = network(net)?;
        if layer1.is_null() || layer2.is_null() {
            return fail(AcnnStatus::NullPointer, "output pointer is null");
        }
        let [k1, k2] = net.inner.kernel_counts();
        *layer1 = k1;
        *layer2 = k2;
        Ok(())
    })
}

/// Classifies one 28×28 greyscale image given row-major in `pixels`
/// (`len` must be 784). Pixels above 127 count as foreground.
///
/// `*out_class` receives the winning class. When `scores` is non-null,
/// the per-class second-layer scores are written to it; `scores_len` must
/// then be at least the class count.
///
/// # Safety
/// `net` must be a live handle, `pixels` must point to `len` bytes,
/// `out_class` must be valid and `scores` null or valid for `scores_len`
/// writes.
#[no_mangle]
pub unsafe extern "C" fn acnn_network_classify(
    net: *const AcnnNetwork,
    pixels: *const u8,
    len: usize,
    out_class: *mut usize,
    scores: *mut i32,
    scores_len: usize,
) -> AcnnStatus {
    guard(|| {
        let net = network(net)?;
        if pixels.is_null() || out_class.is_null() {
            return fail(AcnnStatus::NullPointer, "pixels or out_class is null");
        }
        if len != IMAGE_SIDE * IMAGE_SIDE {
            return fail(
                AcnnStatus::InvalidArgument,
                format!("expected {} pixels, got {len}", IMAGE_SIDE * IMAGE_SIDE),
            );
        }
        let classes = net.inner.classes();
        if !scores.is_null() && scores_len < classes {
            return fail(
                AcnnStatus::InvalidArgument,
                format!("scores buffer holds {scores_len} values, need {classes}"),
            );
        }
        let data = std::slice::from_raw_parts(pixels, len).to_vec();
        let img = RawImage {
            pixels: Grid::from_vec(IMAGE_SIDE, IMAGE_SIDE, data).expect("length checked above"),
            label: None,
            index: 0,
        };
        let c = net.inner.classify(&img)?;
        *out_class = c.class;
        if !scores.is_null() {
            std::slice::from_raw_parts_mut(scores, classes).copy_from_slice(&c.scores);
        }
        Ok(())
    })
}

/// Message for the most recent failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn acnn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static description of an `AcnnStatus` value; unknown values get a
/// generic description.
#[no_mangle]
pub extern "C" fn acnn_status_string(status: i32) -> *const c_char {
    let s: &'static CStr = match status {
        0 => c"ok",
        1 => c"null pointer",
        2 => c"invalid argument",
        3 => c"i/o error",
        4 => c"malformed image or label data",
        5 => c"malformed network file",
        6 => c"network construction failed",
        7 => c"internal panic",
        _ => c"unknown status",
    };
    s.as_ptr()
}
