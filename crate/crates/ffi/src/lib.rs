//! C ABI over the `driveirl` library.
//!
//! Objects are opaque handles created by `di_*` constructors and released
//! with the matching `di_*_free`. Every fallible call returns a
//! [`DiStatus`]; on failure the message is available from
//! [`di_last_error`] on the same thread. Config arguments may be null to
//! use the defaults.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::OnceLock;

use driveirl::config::RunConfig;
use driveirl::demos::{build_replay_buffer, synthesize_expert, BufferCycle, OdometryRecord, ReplayBuffer};
use driveirl::envmodel::{generate_track_with, Environment, SegmentKind, Track};
use driveirl::irl::{cycle_gradient, gradient, policy_distribution, train, EpochMetrics};
use driveirl::pipeline::{evaluate_driving_style, expert_cycles_for};
use driveirl::reward::{feature_names, policy_value, FeatureVector, RewardWeights, K};
use driveirl::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfBounds = 3,
    PlanningFailure = 4,
    Coverage = 5,
    Validation = 6,
    ExpertTruncated = 7,
    EmptyBuffer = 8,
    Divergence = 9,
    Io = 10,
    Parse = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiSegmentKind {
    Straight = 0,
    Curvy = 1,
}

/// Training metrics over the whole replay buffer.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiMetrics {
    pub loglik: f64,
    pub grad_norm: f64,
    pub evd: f64,
    pub ed: f64,
}

/// Driving-style summary for one weight vector.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiStyle {
    pub cycles: usize,
    pub mean_distance: f64,
    pub std_distance: f64,
    pub mean_expected_distance: f64,
}

pub struct DiConfig(RunConfig);
pub struct DiTrack(Environment);
pub struct DiWeights(RewardWeights);
pub struct DiOdometry(OdometryRecord);
pub struct DiBuffer(ReplayBuffer);

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T> = std::result::Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DiStatus {
    match e {
        Error::InvalidArgument(_) => DiStatus::InvalidArgument,
        Error::OutOfBounds { .. } => DiStatus::OutOfBounds,
        Error::PlanningFailure(_) => DiStatus::PlanningFailure,
        Error::Coverage { .. } => DiStatus::Coverage,
        Error::Validation(_) => DiStatus::Validation,
        Error::ExpertTruncated { .. } => DiStatus::ExpertTruncated,
        Error::EmptyBuffer => DiStatus::EmptyBuffer,
        Error::Divergence { .. } => DiStatus::Divergence,
        Error::Io { .. } => DiStatus::Io,
        Error::Json(_) | Error::Csv(_) => DiStatus::Parse,
    }
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> DiStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DiStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer: {name}"));
            DiStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            DiStatus::Panic
        }
    }
}

unsafe fn obj<'a, T>(p: *const T, name: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &'static str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn path(p: *const c_char, name: &'static str) -> FfiResult<PathBuf> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument(format!("{name} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &'static str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &'static str) -> FfiResult<&'a mut [T]> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn config(p: *const DiConfig) -> RunConfig {
    p.as_ref().map(|c| c.0.clone()).unwrap_or_default()
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn features_of(flat: &[f64]) -> Vec<FeatureVector> {
    flat.chunks_exact(K)
        .map(|c| c.try_into().expect("chunk of K"))
        .collect()
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full length including the
/// terminator, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn di_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

#[no_mangle]
pub extern "C" fn di_feature_count() -> usize {
    K
}

/// Static NUL-terminated feature name, or null when out of range.
#[no_mangle]
pub extern "C" fn di_feature_name(index: usize) -> *const c_char {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    let names = NAMES.get_or_init(|| feature_names().into_iter().map(|n| CString::new(n).unwrap()).collect());
    names.get(index).map_or(std::ptr::null(), |n| n.as_ptr())
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn di_config_default(out: *mut *mut DiConfig) -> DiStatus {
    guard(|| {
        *self::out(out, "out")? = boxed(DiConfig(RunConfig::default()));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn di_config_load(path: *const c_char, out: *mut *mut DiConfig) -> DiStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        let cfg = RunConfig::load(&self::path(path, "path")?)?;
        cfg.validate()?;
        *o = boxed(DiConfig(cfg));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from a `di_config_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn di_config_free(cfg: *mut DiConfig) {
    free(cfg)
}

/// # Safety
/// `cfg` may be null; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn di_track_generate(
    kind: DiSegmentKind,
    length: f64,
    seed: u64,
    cfg: *const DiConfig,
    out: *mut *mut DiTrack,
) -> DiStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        let cfg = config(cfg);
        let kind = match kind {
            DiSegmentKind::Straight => SegmentKind::Straight,
            DiSegmentKind::Curvy => SegmentKind::Curvy,
        };
        let track = generate_track_with(kind, length, seed, &cfg.track)?;
        *o = boxed(DiTrack(Environment::new(track, cfg.track.resolution)?));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string, `cfg` may be null and `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn di_track_load(path: *const c_char, cfg: *const DiConfig, out: *mut *mut DiTrack) -> DiStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        let cfg = config(cfg);
        let track = Track::load(&self::path(path, "path")?, &cfg.track)?;
        *o = boxed(DiTrack(Environment::new(track, cfg.track.resolution)?));
        Ok(())
    })
}

/// # Safety
/// `track` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn di_track_save(track: *const DiTrack, path: *const c_char) -> DiStatus {
    guard(|| {
        obj(track, "track")?.0.track.save(&self::path(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `track` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn di_track_length(track: *const DiTrack) -> f64 {
    track.as_ref().map_or(f64::NAN, |t| t.0.track.length)
}

/// # Safety
/// `track` must come from a `di_track_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn di_track_free(track: *mut DiTrack) {
    free(track)
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn di_weights_expert(out: *mut *mut DiWeights) -> DiStatus {
    guard(|| {
        *self::out(out, "out")? = boxed(DiWeights(RewardWeights::expert()));
        Ok(())
    })
}

/// Uniform weights in [0.1, 1] from a seeded generator.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn di_weights_random(seed: u64, out: *mut *mut DiWeights) -> DiStatus {
    guard(|| {
        *self::out(out, "out")? = boxed(DiWeights(RewardWeights::random(seed)));
        Ok(())
    })
}

/// # Safety
/// `theta` must point to `len` doubles and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn di_weights_from_array(theta: *const f64, len: usize, out: *mut *mut DiWeights) -> DiStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        let w = RewardWeights::from_slice(slice(theta, len, "theta")?)?;
        *o = boxed(DiWeights(w));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn di_weights_load(path: *const c_char, out: *mut *mut DiWeights) -> DiStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        *o = boxed(DiWeights(RewardWeights::load(&self::path(path, "path")?)?));
        Ok(())
    })
}

/// # Safety
/// `weights` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn di_weights_save(weights: *const DiWeights, path: *const c_char) -> DiStatus {
    guard(|| {
        obj(weights, "weights")?.0.save(&self::path(path, "path")?)?;
        Ok(())
    })
}

/// Copies the weights into `theta`, which must hold `di_feature_count()`
/// doubles.
///
/// # Safety
/// `weights` must be a live handle and `theta` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn di_weights_get(weights: *const DiWeights, theta: *mut f64, len: usize) -> DiStatus {
    guard(|| {
        let w = obj(weights, "weights")?;
        if len != K {
            return Err(Error::InvalidArgument(format!("expected room for {K} weights, got {len}")).into());
        }
        slice_mut(theta, len, "theta")?.copy_from_slice(w.0.theta());
        Ok(())
    })
}

/// # Safety
/// `weights` must come from a `di_weights_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn di_weights_free(weights: *mut DiWeights) {
    free(weights)
}

/// Value of a policy with the given feature integral, `-theta . f`.
///
/// # Safety
/// `features` must point to `len` doubles, `weights` must be a live handle
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn di_policy_value(
    features: *const f64,
    len: usize,
    weights: *const DiWeights,
    out: *mut f64,
) -> DiStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        let w = obj(weights, "weights")?;
        *o = policy_value(slice(features, len, "features")?, w.0.theta())?;
        Ok(())
    })
}

/// Maximum-entropy distribution over `n` policies whose feature integrals
/// are stored row-major in `features` (`n * di_feature_count()` doubles).
///
/// # Safety
/// Array arguments must hold the stated number of elements;
/// `log_partition` may be null.
#[no_mangle]
pub unsafe extern "C" fn di_policy_distribution(
    features: *const f64,
    n: usize,
    weights: *const DiWeights,
    probabilities: *mut f64,
    log_partition: *mut f64,
) -> DiStatus {
    guard(|| {
        let w = obj(weights, "weights")?;
        let feats = features_of(slice(features, n * K, "features")?);
        let probs = slice_mut(probabilities, n, "probabilities")?;
        let dist = policy_distribution(&feats, &w.0)?;
        probs.copy_from_slice(&dist.probabilities);
        if let Some(z) = log_partition.as_mut() {
            *z = dist.log_partition;
        }
        Ok(())
    })
}

/// Likelihood gradient of one cycle: expected minus empirical feature
/// integrals, where `demo_flags[i] != 0` marks policy `i` as a
/// demonstration.
///
/// # Safety
/// Array arguments must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn di_cycle_gradient(
    features: *const f64,
    demo_flags: *const u8,
    n: usize,
    weights: *const DiWeights,
    grad: *mut f64,
) -> DiStatus {
    guard(|| {
        let w = obj(weights, "weights")?;
        let cycle = BufferCycle {
            cycle_id: 0,
            feature_integrals: features_of(slice(features, n * K, "features")?),
            projection_distances: vec![0.0; n],
            demo_flags: slice(demo_flags, n, "demo_flags")?.iter().map(|&f| f != 0).collect(),
        };
        cycle.validate(None)?;
        slice_mut(grad, K, "grad")?.copy_from_slice(&cycle_gradient(&cycle, &w.0)?);
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn di_odometry_load(path: *const c_char, out: *mut *mut DiOdometry) -> DiStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        *o = boxed(DiOdometry(OdometryRecord::read_csv(&self::path(path, "path")?)?));
        Ok(())
    })
}

/// # Safety
/// `odometry` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn di_odometry_save(odometry: *const DiOdometry, path: *const c_char) -> DiStatus {
    guard(|| {
        obj(odometry, "odometry")?.0.write_csv(&self::path(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `odometry` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn di_odometry_duration(odometry: *const DiOdometry) -> f64 {
    odometry.as_ref().map_or(f64::NAN, |o| o.0.duration())
}

/// # Safety
/// `odometry` must come from a `di_odometry_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn di_odometry_free(odometry: *mut DiOdometry) {
    free(odometry)
}

/// Drives the planner under `weights` and records its odometry. `cycles`
/// of 0 uses as many as the track allows.
///
/// # Safety
/// Handles must be live, `cfg` may be null and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn di_expert_demo(
    track: *const DiTrack,
    weights: *const DiWeights,
    cycles: usize,
    cfg: *const DiConfig,
    seed: u64,
    out: *mut *mut DiOdometry,
) -> DiStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        let env = &obj(track, "track")?.0;
        let w = &obj(weights, "weights")?.0;
        let cfg = config(cfg);
        let cycles = if cycles == 0 { expert_cycles_for(env, &cfg) } else { cycles };
        *o = boxed(DiOdometry(synthesize_expert(env, w, cycles, &cfg, seed)?));
        Ok(())
    })
}

/// Replays the odometry and stores every cycle with a demonstration.
/// `cycles` of 0 uses all the record covers.
///
/// # Safety
/// Handles must be live, `cfg` may be null and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn di_buffer_build(
    track: *const DiTrack,
    odometry: *const DiOdometry,
    weights: *const DiWeights,
    cycles: usize,
    cfg: *const DiConfig,
    out: *mut *mut DiBuffer,
) -> DiStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        let env = &obj(track, "track")?.0;
        let zeta = &obj(odometry, "odometry")?.0;
        let w = &obj(weights, "weights")?.0;
        let cfg = config(cfg);
        let cycles = if cycles == 0 { usize::MAX } else { cycles };
        *o = boxed(DiBuffer(build_replay_buffer(env, zeta, w, cycles, &cfg)?));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn di_buffer_load(path: *const c_char, out: *mut *mut DiBuffer) -> DiStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        *o = boxed(DiBuffer(ReplayBuffer::load(&self::path(path, "path")?)?));
        Ok(())
    })
}

/// # Safety
/// `buffer` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn di_buffer_save(buffer: *const DiBuffer, path: *const c_char) -> DiStatus {
    guard(|| {
        obj(buffer, "buffer")?.0.save(&self::path(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `buffer` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn di_buffer_len(buffer: *const DiBuffer) -> usize {
    buffer.as_ref().map_or(0, |b| b.0.len())
}

/// Mean likelihood gradient over all cycles in the buffer.
///
/// # Safety
/// Handles must be live and `grad` must hold `di_feature_count()` doubles.
#[no_mangle]
pub unsafe extern "C" fn di_buffer_gradient(
    buffer: *const DiBuffer,
    weights: *const DiWeights,
    grad: *mut f64,
) -> DiStatus {
    guard(|| {
        let b = &obj(buffer, "buffer")?.0;
        let w = &obj(weights, "weights")?.0;
        if b.is_empty() {
            return Err(Error::EmptyBuffer.into());
        }
        slice_mut(grad, K, "grad")?.copy_from_slice(&gradient(&b.cycles, w)?);
        Ok(())
    })
}

/// # Safety
/// `buffer` must come from a `di_buffer_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn di_buffer_free(buffer: *mut DiBuffer) {
    free(buffer)
}

fn metrics(m: EpochMetrics) -> DiMetrics {
    DiMetrics {
        loglik: m.loglik,
        grad_norm: m.grad_norm,
        evd: m.evd,
        ed: m.ed,
    }
}

/// Learns weights from the buffer starting at `init`. `initial` and
/// `final_metrics` may be null.
///
/// # Safety
/// Handles must be live, `cfg` may be null and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn di_train(
    buffer: *const DiBuffer,
    init: *const DiWeights,
    cfg: *const DiConfig,
    out: *mut *mut DiWeights,
    initial: *mut DiMetrics,
    final_metrics: *mut DiMetrics,
) -> DiStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        let b = &obj(buffer, "buffer")?.0;
        let w = &obj(init, "init")?.0;
        let cfg = config(cfg);
        cfg.validate()?;
        let report = train(b, w, &cfg.irl)?;
        if let Some(m) = initial.as_mut() {
            *m = metrics(report.initial);
        }
        if let Some(m) = final_metrics.as_mut() {
            *m = metrics(report.final_metrics());
        }
        *o = boxed(DiWeights(report.final_theta));
        Ok(())
    })
}

/// Replays the odometry under `weights` and summarizes how closely the
/// planner follows it. `cycles` of 0 uses all the record covers.
///
/// # Safety
/// Handles must be live, `cfg` may be null and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn di_evaluate(
    track: *const DiTrack,
    odometry: *const DiOdometry,
    weights: *const DiWeights,
    cycles: usize,
    cfg: *const DiConfig,
    out: *mut DiStyle,
) -> DiStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        let env = &obj(track, "track")?.0;
        let zeta = &obj(odometry, "odometry")?.0;
        let w = &obj(weights, "weights")?.0;
        let cfg = config(cfg);
        let cycles = if cycles == 0 {
            driveirl::demos::max_replay_cycles(zeta, &cfg)
        } else {
            cycles
        };
        let r = evaluate_driving_style(env, zeta, w, cycles, &cfg)?;
        *o = DiStyle {
            cycles: r.rows.len(),
            mean_distance: r.mean_distance,
            std_distance: r.std_distance,
            mean_expected_distance: r.mean_expected_distance,
        };
        Ok(())
    })
}
