//! C ABI over `tgs-core`.
//!
//! Every fallible call returns a [`TgsStatus`]; on failure the message is kept per thread and can be
//! fetched with [`tgs_last_error_message`]. Strings handed out by this library are released with
//! [`tgs_string_free`], handles with their own `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tgs_core::data::{gen_screen, scale_box, small_object_ratio, BBox, GenConfig, Scene};
use tgs_core::metrics::{iou, rouge_l, token_f1};
use tgs_core::model::{Model, ModelConfig};
use tgs_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TgsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Version = 4,
    Contract = 5,
    Input = 6,
    Data = 7,
    Parse = 8,
    Generation = 9,
    Io = 10,
    Shape = 11,
    NumericInput = 12,
    Length = 13,
    Panic = 14,
}

/// Pixel box, `[x_left, y_top, x_right, y_bottom)`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TgsBox {
    pub x_left: i64,
    pub y_top: i64,
    pub x_right: i64,
    pub y_bottom: i64,
}

impl From<TgsBox> for BBox {
    fn from(b: TgsBox) -> BBox {
        BBox {
            x_left: b.x_left,
            y_top: b.y_top,
            x_right: b.x_right,
            y_bottom: b.y_bottom,
        }
    }
}

impl From<BBox> for TgsBox {
    fn from(b: BBox) -> TgsBox {
        TgsBox {
            x_left: b.x_left,
            y_top: b.y_top,
            x_right: b.x_right,
            y_bottom: b.y_bottom,
        }
    }
}

/// A generated GUI screen with its element tree and raster.
pub struct TgsScene(Scene);

/// A model with its tokenizer.
pub struct TgsModel(Model);

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn status_of(e: &Error) -> TgsStatus {
    match e {
        Error::Config(_) => TgsStatus::Config,
        Error::Version(_) => TgsStatus::Version,
        Error::Contract(_) => TgsStatus::Contract,
        Error::Input(_) => TgsStatus::Input,
        Error::Data(_) => TgsStatus::Data,
        Error::Parse { .. } => TgsStatus::Parse,
        Error::Generation { .. } => TgsStatus::Generation,
        Error::Io { .. } => TgsStatus::Io,
        Error::Shape { .. } => TgsStatus::Shape,
        Error::NumericInput { .. } => TgsStatus::NumericInput,
        Error::Length { .. } => TgsStatus::Length,
    }
}

struct Fail(TgsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Fail {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(TgsStatus::NullPointer, format!("{} is null", what))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TgsStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (TgsStatus::Ok, None),
        Ok(Err(Fail(s, m))) => (s, Some(m)),
        Err(p) => {
            let m = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (TgsStatus::Panic, Some(m))
        }
    };
    LAST_ERROR.with(|l| *l.borrow_mut() = msg);
    status
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(TgsStatus::InvalidUtf8, format!("{} is not UTF-8", what)))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(TgsStatus::InvalidUtf8, "string contains a NUL byte".into()))
}

/// Message of the last failed call on this thread, or null if it succeeded. Free with [`tgs_string_free`].
#[no_mangle]
pub extern "C" fn tgs_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|l| match l.borrow().as_ref() {
        Some(m) => CString::new(m.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut()),
        None => ptr::null_mut(),
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn tgs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tgs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn tgs_iou(a: *const TgsBox, b: *const TgsBox, out: *mut f64) -> TgsStatus {
    guard(|| {
        let (a, b) = (a.as_ref().ok_or_else(|| null("a"))?, b.as_ref().ok_or_else(|| null("b"))?);
        put(out, iou(&(*a).into(), &(*b).into()), "out")
    })
}

/// Pixel box to the 0..1000 grid of a `width x height` screen.
///
/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn tgs_scale_box(b: *const TgsBox, width: u32, height: u32, out: *mut TgsBox) -> TgsStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("box"))?;
        let s = scale_box(&(*b).into(), width, height)?;
        put(out, s.into(), "out")
    })
}

/// Box area as a percentage of the screen.
///
/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn tgs_small_object_ratio(b: *const TgsBox, width: u32, height: u32, out: *mut f64) -> TgsStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("box"))?;
        if width == 0 || height == 0 {
            return Err(Fail(TgsStatus::Input, "screen dimensions must be positive".into()));
        }
        put(out, small_object_ratio(&(*b).into(), width, height), "out")
    })
}

/// # Safety
/// Strings must be NUL-terminated or null; `out` valid or null.
#[no_mangle]
pub unsafe extern "C" fn tgs_token_f1(pred: *const c_char, gold: *const c_char, out: *mut f64) -> TgsStatus {
    guard(|| put(out, token_f1(str_arg(pred, "pred")?, str_arg(gold, "gold")?), "out"))
}

/// # Safety
/// Strings must be NUL-terminated or null; `out` valid or null.
#[no_mangle]
pub unsafe extern "C" fn tgs_rouge_l(pred: *const c_char, gold: *const c_char, out: *mut f64) -> TgsStatus {
    guard(|| put(out, rouge_l(str_arg(pred, "pred")?, str_arg(gold, "gold")?), "out"))
}

/// Generate a screen with the default generator settings.
///
/// # Safety
/// `out` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn tgs_scene_generate(seed: u64, out: *mut *mut TgsScene) -> TgsStatus {
    guard(|| {
        let s = gen_screen(seed, &GenConfig::default())?;
        put(out, Box::into_raw(Box::new(TgsScene(s))), "out")
    })
}

/// # Safety
/// `scene` must come from [`tgs_scene_generate`] or be null.
#[no_mangle]
pub unsafe extern "C" fn tgs_scene_free(scene: *mut TgsScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn tgs_scene_size(scene: *const TgsScene, width: *mut u32, height: *mut u32) -> TgsStatus {
    guard(|| {
        let s = &scene.as_ref().ok_or_else(|| null("scene"))?.0;
        put(width, s.width, "width")?;
        put(height, s.height, "height")
    })
}

/// Number of elements in the tree, root included.
///
/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn tgs_scene_node_count(scene: *const TgsScene, out: *mut usize) -> TgsStatus {
    guard(|| {
        let s = &scene.as_ref().ok_or_else(|| null("scene"))?.0;
        put(out, s.index().by_id.len(), "out")
    })
}

/// Element tree as JSON. Free the string with [`tgs_string_free`].
///
/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn tgs_scene_to_json(scene: *const TgsScene, out: *mut *mut c_char) -> TgsStatus {
    guard(|| {
        let s = &scene.as_ref().ok_or_else(|| null("scene"))?.0;
        put(out, c_string(s.to_json())?, "out")
    })
}

/// Fresh model with the default configuration.
///
/// # Safety
/// `out` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn tgs_model_new(seed: u64, out: *mut *mut TgsModel) -> TgsStatus {
    guard(|| {
        let m = Model::new(ModelConfig::default(), seed)?;
        put(out, Box::into_raw(Box::new(TgsModel(m))), "out")
    })
}

/// # Safety
/// Pointers must be valid or null; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tgs_model_load(path: *const c_char, out: *mut *mut TgsModel) -> TgsStatus {
    guard(|| {
        let (m, _) = Model::load(Path::new(str_arg(path, "path")?))?;
        put(out, Box::into_raw(Box::new(TgsModel(m))), "out")
    })
}

/// # Safety
/// Pointers must be valid or null; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tgs_model_save(model: *const TgsModel, path: *const c_char) -> TgsStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        m.save(Path::new(str_arg(path, "path")?), serde_json::Value::Null)?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn tgs_model_free(model: *mut TgsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Greedy answer to `prompt` about `scene`. Free the string with [`tgs_string_free`].
///
/// # Safety
/// Pointers must be valid or null; `prompt` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tgs_model_answer(
    model: *const TgsModel,
    scene: *const TgsScene,
    max_tiles: u32,
    prompt: *const c_char,
    out: *mut *mut c_char,
) -> TgsStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let s = &scene.as_ref().ok_or_else(|| null("scene"))?.0;
        let a = m.answer(&s.raster, max_tiles, str_arg(prompt, "prompt")?)?;
        put(out, c_string(a)?, "out")
    })
}
