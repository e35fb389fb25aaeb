//! C ABI for the ghostim simulator.
//!
//! Every fallible function returns a [`GhostimStatus`] and writes results
//! through out-pointers. On failure the message is kept per thread and can
//! be fetched with [`ghostim_last_error`]. Strings returned by this library
//! are owned by the caller and released with [`ghostim_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ghostim::acquisition::RunOptions;
use ghostim::config::RunConfig;
use ghostim::pipeline::Simulation;
use ghostim::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GhostimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Config = 4,
    Io = 5,
    Format = 6,
    /// The requested metric is undefined for this run.
    Metric = 7,
    Panic = 8,
}

/// Selects one field of the metrics report.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GhostimMetric {
    Contrast = 0,
    PsfSigmaX = 1,
    PsfSigmaY = 2,
    FieldWidthGamma = 3,
    ModeCount = 4,
    BitsPerPhoton = 5,
    HeraldingEfficiency = 6,
    VarianceProductHbar2 = 7,
}

/// Opaque run configuration.
pub struct GhostimConfig {
    inner: RunConfig,
}

/// Opaque result of one simulated run.
pub struct GhostimSimulation {
    inner: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: GhostimStatus, msg: impl Into<String>) -> GhostimStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> GhostimStatus {
    match e {
        Error::Domain(_) => GhostimStatus::Domain,
        Error::Config { .. } => GhostimStatus::Config,
        Error::Io { .. } => GhostimStatus::Io,
        Error::Format { .. } => GhostimStatus::Format,
        Error::Metric(_) => GhostimStatus::Metric,
    }
}

fn from_error(e: Error) -> GhostimStatus {
    fail(status_of(&e), e.to_string())
}

/// Runs `f` with panics turned into [`GhostimStatus::Panic`].
fn guard(f: impl FnOnce() -> GhostimStatus) -> GhostimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(GhostimStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn write_f64(out: *mut f64, r: ghostim::Result<f64>) -> GhostimStatus {
    if out.is_null() {
        return fail(GhostimStatus::NullPointer, "output pointer is null");
    }
    match r {
        Ok(v) => {
            unsafe { *out = v };
            GhostimStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failure on this thread, or null if none. Free with
/// [`ghostim_string_free`].
#[no_mangle]
pub extern "C" fn ghostim_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |s| s.clone().into_raw()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ghostim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ghostim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Image-plane correlation length (m) for crystal length, pump wavelength
/// and magnification.
///
/// # Safety
/// `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ghostim_correlation_length_image_plane(
    crystal_length: f64,
    lambda_pump: f64,
    magnification: f64,
    out: *mut f64,
) -> GhostimStatus {
    guard(|| {
        write_f64(
            out,
            ghostim::spdc::correlation_length_image_plane(crystal_length, lambda_pump, magnification),
        )
    })
}

/// Far-field correlation length (m) for effective focal length, pump
/// amplitude stdev and down-converted wavelength.
///
/// # Safety
/// `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ghostim_correlation_length_far_field(
    effective_focal_length: f64,
    pump_amplitude_sigma: f64,
    lambda_down: f64,
    out: *mut f64,
) -> GhostimStatus {
    guard(|| {
        write_f64(
            out,
            ghostim::spdc::correlation_length_far_field(effective_focal_length, pump_amplitude_sigma, lambda_down),
        )
    })
}

/// Product of the inferred position and momentum variances, units of hbar^2.
///
/// # Safety
/// `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ghostim_epr_variance_product(
    sigma_pos_cam: f64,
    sigma_mom_cam: f64,
    magnification: f64,
    effective_focal_length: f64,
    lambda_down: f64,
    out: *mut f64,
) -> GhostimStatus {
    guard(|| {
        write_f64(
            out,
            ghostim::spdc::epr_variance_product(
                sigma_pos_cam,
                sigma_mom_cam,
                magnification,
                effective_focal_length,
                lambda_down,
            ),
        )
    })
}

/// Number of spatial modes `(gamma / sigma)^2` and its base-2 logarithm.
///
/// # Safety
/// `modes` and `bits` must be null or valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn ghostim_mode_count(gamma: f64, sigma: f64, modes: *mut f64, bits: *mut f64) -> GhostimStatus {
    guard(|| {
        if modes.is_null() || bits.is_null() {
            return fail(GhostimStatus::NullPointer, "output pointer is null");
        }
        match ghostim::analysis::mode_count(gamma, sigma) {
            Ok((m, b)) => {
                unsafe {
                    *modes = m;
                    *bits = b;
                }
                GhostimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Loads a configuration from a file path or a preset name.
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ghostim_config_load(source: *const c_char, out: *mut *mut GhostimConfig) -> GhostimStatus {
    guard(|| {
        if source.is_null() || out.is_null() {
            return fail(GhostimStatus::NullPointer, "argument is null");
        }
        let Ok(src) = unsafe { CStr::from_ptr(source) }.to_str() else {
            return fail(GhostimStatus::InvalidArgument, "source is not valid UTF-8");
        };
        match RunConfig::load(src) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(GhostimConfig { inner })) };
                GhostimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Overrides the number of frames of the masked run.
///
/// # Safety
/// `cfg` must be null or a live handle from [`ghostim_config_load`].
#[no_mangle]
pub unsafe extern "C" fn ghostim_config_set_frames(cfg: *mut GhostimConfig, frames: usize) -> GhostimStatus {
    guard(|| {
        let Some(cfg) = (unsafe { cfg.as_mut() }) else {
            return fail(GhostimStatus::NullPointer, "config handle is null");
        };
        if frames == 0 {
            return fail(GhostimStatus::InvalidArgument, "frames must be >= 1");
        }
        cfg.inner.experiment.frames = frames;
        GhostimStatus::Ok
    })
}

/// Overrides the number of frames of the open-beam companion run.
///
/// # Safety
/// `cfg` must be null or a live handle from [`ghostim_config_load`].
#[no_mangle]
pub unsafe extern "C" fn ghostim_config_set_field_frames(cfg: *mut GhostimConfig, frames: usize) -> GhostimStatus {
    guard(|| {
        let Some(cfg) = (unsafe { cfg.as_mut() }) else {
            return fail(GhostimStatus::NullPointer, "config handle is null");
        };
        if frames == 0 {
            return fail(GhostimStatus::InvalidArgument, "frames must be >= 1");
        }
        cfg.inner.analysis.field_frames = frames;
        GhostimStatus::Ok
    })
}

/// # Safety
/// `cfg` must be null or a live handle from [`ghostim_config_load`].
#[no_mangle]
pub unsafe extern "C" fn ghostim_config_set_seed(cfg: *mut GhostimConfig, seed: u64) -> GhostimStatus {
    guard(|| {
        let Some(cfg) = (unsafe { cfg.as_mut() }) else {
            return fail(GhostimStatus::NullPointer, "config handle is null");
        };
        cfg.inner.experiment.master_seed = seed;
        GhostimStatus::Ok
    })
}

/// Canonical text of the configuration, or null on a null handle. Free
/// with [`ghostim_string_free`].
///
/// # Safety
/// `cfg` must be null or a live handle from [`ghostim_config_load`].
#[no_mangle]
pub unsafe extern "C" fn ghostim_config_echo(cfg: *const GhostimConfig) -> *mut c_char {
    match unsafe { cfg.as_ref() } {
        Some(c) => catch_unwind(AssertUnwindSafe(|| owned_string(c.inner.echo()))).unwrap_or(ptr::null_mut()),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `cfg` must be null or a handle from [`ghostim_config_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ghostim_config_free(cfg: *mut GhostimConfig) {
    if !cfg.is_null() {
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// Runs the masked acquisition and its open-beam companion. `workers = 0`
/// uses all cores; the result does not depend on it.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ghostim_simulate(
    cfg: *const GhostimConfig,
    workers: usize,
    out: *mut *mut GhostimSimulation,
) -> GhostimStatus {
    guard(|| {
        let Some(cfg) = (unsafe { cfg.as_ref() }) else {
            return fail(GhostimStatus::NullPointer, "config handle is null");
        };
        if out.is_null() {
            return fail(GhostimStatus::NullPointer, "output pointer is null");
        }
        let opts = RunOptions { workers, progress: None };
        match ghostim::pipeline::simulate(&cfg.inner, opts, opts) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(GhostimSimulation { inner })) };
                GhostimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Borrows the ghost-image counts, row-major. The pointer stays valid until
/// the handle is freed.
///
/// # Safety
/// `sim` must be a live handle; the out-pointers must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ghostim_simulation_image(
    sim: *const GhostimSimulation,
    width: *mut usize,
    height: *mut usize,
    counts: *mut *const u32,
) -> GhostimStatus {
    guard(|| {
        let Some(sim) = (unsafe { sim.as_ref() }) else {
            return fail(GhostimStatus::NullPointer, "simulation handle is null");
        };
        if width.is_null() || height.is_null() || counts.is_null() {
            return fail(GhostimStatus::NullPointer, "output pointer is null");
        }
        let g = &sim.inner.ghost;
        unsafe {
            *width = g.width;
            *height = g.height;
            *counts = g.counts.as_ptr();
        }
        GhostimStatus::Ok
    })
}

/// Total triggers and detected photons of the masked run.
///
/// # Safety
/// `sim` must be a live handle; the out-pointers must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ghostim_simulation_counts(
    sim: *const GhostimSimulation,
    triggers: *mut u64,
    detected: *mut u64,
) -> GhostimStatus {
    guard(|| {
        let Some(sim) = (unsafe { sim.as_ref() }) else {
            return fail(GhostimStatus::NullPointer, "simulation handle is null");
        };
        if triggers.is_null() || detected.is_null() {
            return fail(GhostimStatus::NullPointer, "output pointer is null");
        }
        unsafe {
            *triggers = sim.inner.stats.total_triggers;
            *detected = sim.inner.stats.total_detected_photons;
        }
        GhostimStatus::Ok
    })
}

/// One metric of the run. Returns [`GhostimStatus::Metric`] when it is
/// undefined.
///
/// # Safety
/// `sim` must be a live handle; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ghostim_simulation_metric(
    sim: *const GhostimSimulation,
    which: GhostimMetric,
    out: *mut f64,
) -> GhostimStatus {
    guard(|| {
        let Some(sim) = (unsafe { sim.as_ref() }) else {
            return fail(GhostimStatus::NullPointer, "simulation handle is null");
        };
        let m = &sim.inner.metrics;
        let v = match which {
            GhostimMetric::Contrast => m.contrast,
            GhostimMetric::PsfSigmaX => m.psf_sigma_x,
            GhostimMetric::PsfSigmaY => m.psf_sigma_y,
            GhostimMetric::FieldWidthGamma => m.field_width_gamma,
            GhostimMetric::ModeCount => m.mode_count,
            GhostimMetric::BitsPerPhoton => m.bits_per_photon,
            GhostimMetric::HeraldingEfficiency => m.heralding_efficiency,
            GhostimMetric::VarianceProductHbar2 => m.variance_product_hbar2,
        };
        write_f64(out, v.ok_or_else(|| Error::Metric(format!("{which:?} is undefined for this run"))))
    })
}

/// Metrics report as JSON, or null on a null handle. Free with
/// [`ghostim_string_free`].
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ghostim_simulation_metrics_json(sim: *const GhostimSimulation) -> *mut c_char {
    let Some(sim) = (unsafe { sim.as_ref() }) else {
        return ptr::null_mut();
    };
    match serde_json::to_string(&sim.inner.metrics) {
        Ok(s) => owned_string(s),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `sim` must be null or a handle from [`ghostim_simulate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ghostim_simulation_free(sim: *mut GhostimSimulation) {
    if !sim.is_null() {
        drop(unsafe { Box::from_raw(sim) });
    }
}
