//! C ABI over the tomonav pipeline.
//!
//! Opaque handles (`TnFeaturizer`, `TnNetwork`, `TnController`) wrap
//! the featurizer configuration, a loaded network and the junction
//! controller. Every fallible call returns a `TnStatus`; the detailed
//! message for the most recent failure on the current thread is
//! available via `tn_last_error_message`.
//!
//! The generated header lives at `include/tomonav.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use tomonav::config::RunConfig;
use tomonav::error::Error;
use tomonav::image::Image;
use tomonav::navigation::{Controller, RoutePlan};
use tomonav::nn::{build_network, load_weights, ActionVector, Network, NetworkSpec, Tensor};
use tomonav::tomography::{featurize, TomoConfig};

/// Call outcome. Zero is success; anything else is an error whose
/// detail is available from `tn_last_error_message()`.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    ShapeMismatch = 4,
    IoError = 5,
    CorruptFile = 6,
    IncompatibleWeights = 7,
    InternalError = 8,
}

/// Velocity command for the flight controller.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct TnVelocityCommand {
    /// Meters per second, in [0, 6].
    pub forward_speed_mps: f64,
    /// Radians per second, positive = left (counter-clockwise).
    pub yaw_rate_rps: f64,
    /// Nonzero = hold position.
    pub hover: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_for(err: &Error) -> TnStatus {
    match err {
        Error::InvalidInput(_) | Error::InvalidRoute(_) | Error::InvalidSplit(_) => {
            TnStatus::InvalidInput
        }
        Error::InvalidShape(_) | Error::SpecViolation(_) => TnStatus::ShapeMismatch,
        Error::Io(_) => TnStatus::IoError,
        Error::CorruptFile(_) | Error::Parse { .. } | Error::Json(_) => TnStatus::CorruptFile,
        Error::IncompatibleWeights(_) => TnStatus::IncompatibleWeights,
        _ => TnStatus::InternalError,
    }
}

fn fail(err: &Error) -> TnStatus {
    set_error(&err.to_string());
    status_for(err)
}

/// Featurizer handle: a fixed tomographic configuration.
pub struct TnFeaturizer {
    config: TomoConfig,
}

/// Loaded network handle.
pub struct TnNetwork {
    net: Network,
}

/// Stateful junction-counting controller handle.
pub struct TnController {
    controller: Controller,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Detailed message for the most recent error on this thread. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, TnStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(TnStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        TnStatus::InvalidUtf8
    })
}

/// Create a featurizer. `num_angles` projections over [0, pi),
/// reconstructions of `output_size` x `output_size` pixels. Returns
/// null on invalid parameters.
#[no_mangle]
pub extern "C" fn tn_featurizer_new(num_angles: u32, output_size: u32) -> *mut TnFeaturizer {
    let config = TomoConfig {
        num_angles: num_angles as usize,
        output_size: output_size as usize,
        ..Default::default()
    };
    if let Err(e) = config.validate() {
        fail(&e);
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(TnFeaturizer { config }))
}

/// # Safety
/// `handle` must come from `tn_featurizer_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tn_featurizer_free(handle: *mut TnFeaturizer) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Output pixel count (`output_size`^2) of a featurizer's reconstructions.
///
/// # Safety
/// `handle` must be a live featurizer handle.
#[no_mangle]
pub unsafe extern "C" fn tn_featurizer_output_len(handle: *const TnFeaturizer) -> u64 {
    if handle.is_null() {
        return 0;
    }
    let f = &*handle;
    (f.config.output_size * f.config.output_size) as u64
}

/// Run the tomographic feature extraction on a grayscale frame.
/// `frame` holds `width * height` intensities in [0, 1]; `out` must
/// have room for `tn_featurizer_output_len(handle)` values.
///
/// # Safety
/// All pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn tn_featurizer_run(
    handle: *const TnFeaturizer,
    frame: *const f32,
    width: u32,
    height: u32,
    out: *mut f32,
) -> TnStatus {
    if handle.is_null() || frame.is_null() || out.is_null() {
        set_error("null featurizer argument");
        return TnStatus::NullArgument;
    }
    let f = &*handle;
    let len = (width as usize) * (height as usize);
    let pixels = std::slice::from_raw_parts(frame, len);
    let data: Vec<f64> = pixels.iter().map(|&v| v as f64).collect();
    let img = match Image::new(width as usize, height as usize, data) {
        Ok(img) => img,
        Err(e) => return fail(&e),
    };
    match featurize(&img, &f.config) {
        Ok(feature) => {
            let out_slice =
                std::slice::from_raw_parts_mut(out, f.config.output_size * f.config.output_size);
            for (o, &v) in out_slice.iter_mut().zip(feature.data()) {
                *o = v as f32;
            }
            TnStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

fn preset_spec(name: &str) -> Result<NetworkSpec, TnStatus> {
    NetworkSpec::preset(name).ok_or_else(|| {
        set_error(&format!("unknown network preset '{name}'"));
        TnStatus::InvalidInput
    })
}

/// Freshly initialized network from a preset name ("tiny" or "full").
///
/// # Safety
/// `preset` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tn_network_new(preset: *const c_char, seed: u64) -> *mut TnNetwork {
    let name = match cstr(preset) {
        Ok(s) => s,
        Err(_) => return std::ptr::null_mut(),
    };
    let spec = match preset_spec(name) {
        Ok(s) => s,
        Err(_) => return std::ptr::null_mut(),
    };
    match build_network(&spec, seed) {
        Ok(net) => Box::into_raw(Box::new(TnNetwork { net })),
        Err(e) => {
            fail(&e);
            std::ptr::null_mut()
        }
    }
}

/// Load trained weights for a preset from a `.mavw` file.
///
/// # Safety
/// Both strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tn_network_load(
    preset: *const c_char,
    weights_path: *const c_char,
) -> *mut TnNetwork {
    let (name, path) = match (cstr(preset), cstr(weights_path)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return std::ptr::null_mut(),
    };
    let spec = match preset_spec(name) {
        Ok(s) => s,
        Err(_) => return std::ptr::null_mut(),
    };
    match load_weights(Path::new(path), &spec) {
        Ok(net) => Box::into_raw(Box::new(TnNetwork { net })),
        Err(e) => {
            fail(&e);
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `handle` must come from a network constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tn_network_free(handle: *mut TnNetwork) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Side length of the square feature plane the network expects.
///
/// # Safety
/// `handle` must be a live network handle.
#[no_mangle]
pub unsafe extern "C" fn tn_network_input_size(handle: *const TnNetwork) -> u32 {
    if handle.is_null() {
        return 0;
    }
    (*handle).net.spec().input_size as u32
}

/// Total trainable parameter count.
///
/// # Safety
/// `handle` must be a live network handle.
#[no_mangle]
pub unsafe extern "C" fn tn_network_param_count(handle: *const TnNetwork) -> u64 {
    if handle.is_null() {
        return 0;
    }
    (*handle).net.count_params() as u64
}

/// Predict the five-output command band for one feature plane.
/// `feature` holds `side * side` values; `out_actions` receives
/// [forward, yaw_left, yaw_right, halt, junction], each in [0, 1].
///
/// # Safety
/// All pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn tn_network_forward(
    handle: *const TnNetwork,
    feature: *const f32,
    side: u32,
    out_actions: *mut f32,
) -> TnStatus {
    if handle.is_null() || feature.is_null() || out_actions.is_null() {
        set_error("null network argument");
        return TnStatus::NullArgument;
    }
    let net = &(*handle).net;
    let side = side as usize;
    let data: Vec<f64> = std::slice::from_raw_parts(feature, side * side)
        .iter()
        .map(|&v| v as f64)
        .collect();
    let x = match Tensor::new(&[1, 1, side, side], data) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    match net.forward(&x) {
        Ok(actions) => {
            let a = actions[0].as_array();
            let out = std::slice::from_raw_parts_mut(out_actions, 5);
            for (o, v) in out.iter_mut().zip(a) {
                *o = v as f32;
            }
            TnStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Controller from a route-plan JSON document, e.g.
/// `{"directives":[{"junction":2,"turn":"left"}],"terminal":"halt"}`,
/// with default controller constants.
///
/// # Safety
/// `route_json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tn_controller_new(route_json: *const c_char) -> *mut TnController {
    let json = match cstr(route_json) {
        Ok(s) => s,
        Err(_) => return std::ptr::null_mut(),
    };
    let plan = match RoutePlan::from_json(json) {
        Ok(p) => p,
        Err(e) => {
            fail(&e);
            return std::ptr::null_mut();
        }
    };
    let cfg = RunConfig::default().nav;
    match Controller::new(plan, cfg) {
        Ok(controller) => Box::into_raw(Box::new(TnController { controller })),
        Err(e) => {
            fail(&e);
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `handle` must come from `tn_controller_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tn_controller_free(handle: *mut TnController) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Junctions registered so far.
///
/// # Safety
/// `handle` must be a live controller handle.
#[no_mangle]
pub unsafe extern "C" fn tn_controller_junction_count(handle: *const TnController) -> u32 {
    if handle.is_null() {
        return 0;
    }
    (*handle).controller.junction_count()
}

/// Feed one frame's action band through the controller and receive the
/// velocity command. `actions` holds the five model outputs in [0, 1].
///
/// # Safety
/// All pointers must be valid; `actions` must hold 5 values.
#[no_mangle]
pub unsafe extern "C" fn tn_controller_step(
    handle: *mut TnController,
    actions: *const f32,
    out_command: *mut TnVelocityCommand,
) -> TnStatus {
    if handle.is_null() || actions.is_null() || out_command.is_null() {
        set_error("null controller argument");
        return TnStatus::NullArgument;
    }
    let a = std::slice::from_raw_parts(actions, 5);
    let av = ActionVector::from_array([
        a[0] as f64,
        a[1] as f64,
        a[2] as f64,
        a[3] as f64,
        a[4] as f64,
    ]);
    match (*handle).controller.step(&av) {
        Ok((vel, _trace)) => {
            *out_command = TnVelocityCommand {
                forward_speed_mps: vel.forward_speed,
                yaw_rate_rps: vel.yaw_rate,
                hover: vel.hover as u8,
            };
            TnStatus::Ok
        }
        Err(e) => fail(&e),
    }
}
