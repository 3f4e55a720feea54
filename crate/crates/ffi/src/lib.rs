//! C ABI over `voxgan`: voxel grids, depth scans and trained models behind
//! opaque handles.
//!
//! Every fallible function returns a [`VxgStatus`]. On failure the message is
//! kept per thread and read back with [`vxg_last_error`]. Handles returned
//! through out-pointers are owned by the caller and released with the
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use voxgan::cli::read_grid;
use voxgan::eval::{iou, CompletionModel, IOU_THRESHOLD};
use voxgan::models::NetworkKind;
use voxgan::trainer::{self, Trainer, TrainedCompleter};
use voxgan::voxel::{depth_scan, occlude_to_grid, write_binvox, View, VoxelGrid};
use voxgan::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VxgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Io = 4,
    Format = 5,
    Integrity = 6,
    Version = 7,
    Data = 8,
    Config = 9,
    Model = 10,
    NonFinite = 11,
    Internal = 12,
}

/// Occupancy grid handle.
pub struct VxgGrid(VoxelGrid);

/// Trained checkpoint handle.
pub struct VxgModel(Trainer);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(VxgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => VxgStatus::Io,
            Error::Format(_) => VxgStatus::Format,
            Error::Integrity(_) => VxgStatus::Integrity,
            Error::Version { .. } => VxgStatus::Version,
            Error::Data(_) => VxgStatus::Data,
            Error::Config { .. } => VxgStatus::Config,
            Error::Model(_) => VxgStatus::Model,
            Error::InvalidArgument(_) => VxgStatus::InvalidArgument,
            Error::NonFiniteLoss { .. } | Error::NonFiniteGradient { .. } => VxgStatus::NonFinite,
            _ => VxgStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: VxgStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VxgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VxgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VxgStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(VxgStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(VxgStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    str_arg(p, "path").map(PathBuf::from)
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(VxgStatus::NullPointer, format!("{what} handle is null")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(VxgStatus::NullPointer, format!("{what} handle is null")))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(VxgStatus::NullPointer, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

fn check_coord(g: &VoxelGrid, x: usize, y: usize, z: usize) -> Result<(), Failure> {
    let n = g.extent();
    if x >= n || y >= n || z >= n {
        return Err(fail(
            VxgStatus::OutOfRange,
            format!("voxel ({x}, {y}, {z}) outside a {n}³ grid"),
        ));
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vxg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn vxg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// New empty grid of the given extent.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn vxg_grid_new(extent: usize, out: *mut *mut VxgGrid) -> VxgStatus {
    guard(|| put(out, boxed(VxgGrid(VoxelGrid::empty(extent)?))))
}

/// Reads a `.binvox` or `.vxg` file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn vxg_grid_read(path: *const c_char, out: *mut *mut VxgGrid) -> VxgStatus {
    guard(|| {
        let g = read_grid(&path_arg(path)?)?;
        put(out, boxed(VxgGrid(g)))
    })
}

/// Writes the grid as `.binvox` when the path ends in that extension, else as `.vxg`.
///
/// # Safety
/// `grid` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vxg_grid_write(grid: *const VxgGrid, path: *const c_char) -> VxgStatus {
    guard(|| {
        let g = &handle(grid, "grid")?.0;
        let path = path_arg(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("binvox") => write_binvox(g, &path)?,
            _ => g.write_vxg(&path)?,
        }
        Ok(())
    })
}

/// # Safety
/// `grid` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vxg_grid_free(grid: *mut VxgGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// # Safety
/// `grid` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vxg_grid_extent(grid: *const VxgGrid, out: *mut usize) -> VxgStatus {
    guard(|| put(out, handle(grid, "grid")?.0.extent()))
}

/// Number of voxels with occupancy at least 0.5.
///
/// # Safety
/// `grid` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vxg_grid_count(grid: *const VxgGrid, out: *mut usize) -> VxgStatus {
    guard(|| put(out, handle(grid, "grid")?.0.count()))
}

/// # Safety
/// `grid` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vxg_grid_get(grid: *const VxgGrid, x: usize, y: usize, z: usize, out: *mut f64) -> VxgStatus {
    guard(|| {
        let g = &handle(grid, "grid")?.0;
        check_coord(g, x, y, z)?;
        put(out, g.get(x, y, z))
    })
}

/// Sets one occupancy value in `[0, 1]`.
///
/// # Safety
/// `grid` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vxg_grid_set(grid: *mut VxgGrid, x: usize, y: usize, z: usize, value: f64) -> VxgStatus {
    guard(|| {
        let g = &mut handle_mut(grid, "grid")?.0;
        check_coord(g, x, y, z)?;
        if !(0.0..=1.0).contains(&value) {
            return Err(fail(VxgStatus::InvalidArgument, format!("occupancy {value} outside [0, 1]")));
        }
        g.set(x, y, z, value);
        Ok(())
    })
}

/// Intersection over union at threshold 0.5.
///
/// # Safety
/// Both grids must be live handles; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vxg_grid_iou(a: *const VxgGrid, b: *const VxgGrid, out: *mut f64) -> VxgStatus {
    guard(|| {
        let v = iou(&handle(a, "grid")?.0, &handle(b, "grid")?.0, IOU_THRESHOLD)?;
        put(out, v)
    })
}

/// Visible shell of `grid` seen along `view` (`"+x"`, `"-z"`, ...).
///
/// # Safety
/// `grid` must be a live handle; `view` a NUL-terminated string; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vxg_grid_scan(grid: *const VxgGrid, view: *const c_char, out: *mut *mut VxgGrid) -> VxgStatus {
    guard(|| {
        let g = &handle(grid, "grid")?.0;
        let view: View = str_arg(view, "view")?.parse()?;
        let shell = occlude_to_grid(&depth_scan(g, view), g.extent())?;
        put(out, boxed(VxgGrid(shell)))
    })
}

/// Loads a training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vxg_model_load(path: *const c_char, out: *mut *mut VxgModel) -> VxgStatus {
    guard(|| {
        let t = Trainer::load(&path_arg(path)?)?;
        put(out, boxed(VxgModel(t)))
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vxg_model_free(model: *mut VxgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vxg_model_resolution(model: *const VxgModel, out: *mut usize) -> VxgStatus {
    guard(|| put(out, handle(model, "model")?.0.config.resolution))
}

/// Decodes the latent code drawn from `seed`.
///
/// # Safety
/// `model` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vxg_model_generate(model: *const VxgModel, seed: u64, out: *mut *mut VxgGrid) -> VxgStatus {
    guard(|| {
        let t = &handle(model, "model")?.0;
        let g = trainer::generate(&t.state.generator, t.config.latent_dim, seed, 1)?
            .pop()
            .expect("one sample");
        put(out, boxed(VxgGrid(g)))
    })
}

/// Completes a shell grid with a voxel-encoder checkpoint.
///
/// # Safety
/// `model` and `shell` must be live handles; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vxg_model_complete(
    model: *const VxgModel,
    shell: *const VxgGrid,
    out: *mut *mut VxgGrid,
) -> VxgStatus {
    guard(|| {
        let t = &handle(model, "model")?.0;
        let shell = &handle(shell, "grid")?.0;
        let encoder = match (&t.state.encoder, t.config.encoder_kind()) {
            (Some(e), Some(NetworkKind::VoxelEncoder)) => e,
            _ => return Err(fail(VxgStatus::Model, "checkpoint has no voxel encoder")),
        };
        if shell.extent() != t.config.resolution {
            return Err(fail(
                VxgStatus::Data,
                format!("grid extent {} does not match model resolution {}", shell.extent(), t.config.resolution),
            ));
        }
        let model = TrainedCompleter {
            encoder,
            generator: &t.state.generator,
        };
        let g = model.complete(&shell.to_signed())?;
        put(out, boxed(VxgGrid(g)))
    })
}
