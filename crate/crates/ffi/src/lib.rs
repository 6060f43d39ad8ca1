//! C ABI over `trajsr`.
//!
//! Objects cross the boundary as opaque heap handles that the caller frees
//! with the matching `*_free` function. Every fallible call returns a
//! [`TrajsrStatus`]; on failure a description is available from
//! [`trajsr_last_error`] on the same thread until the next failing call.
//! Panics are caught at the boundary and reported as `TRAJSR_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use trajsr::degrade::HexGrid;
use trajsr::geo::{haversine_km, GeoPoint, LocalFrame};
use trajsr::mapmatch::{map_match, HmmParams};
use trajsr::metrics::discrete_frechet_km;
use trajsr::model::{reconstruct, Checkpoint};
use trajsr::roadnet::RoadGraph;
use trajsr::trajectory::{TrajPoint, Trajectory};
use trajsr::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajsrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Load = 5,
    Checkpoint = 6,
    Reconstruction = 7,
    Unmatched = 8,
    BrokenChain = 9,
    BufferTooSmall = 10,
    Panic = 11,
    Other = 12,
}

/// Road network handle.
pub struct TrajsrGraph(RoadGraph);

/// Trajectory handle.
pub struct TrajsrTrajectory(Trajectory);

/// Trained model handle.
pub struct TrajsrCheckpoint(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TrajsrStatus {
    match e {
        Error::InvalidArgument(_) | Error::SequenceTooLong { .. } | Error::Config(_) => {
            TrajsrStatus::InvalidArgument
        }
        Error::Io { .. } => TrajsrStatus::Io,
        Error::Parse { .. } => TrajsrStatus::Parse,
        Error::Load(_) | Error::DegenerateEdge { .. } | Error::NodeNotFound(_) => {
            TrajsrStatus::Load
        }
        Error::Checkpoint(_) => TrajsrStatus::Checkpoint,
        Error::Reconstruction(_) | Error::EmptySubgraph { .. } => TrajsrStatus::Reconstruction,
        Error::UnmatchedPoint { .. } => TrajsrStatus::Unmatched,
        Error::BrokenChain { .. } => TrajsrStatus::BrokenChain,
        _ => TrajsrStatus::Other,
    }
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (TrajsrStatus, String)>) -> TrajsrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TrajsrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside trajsr".into());
            TrajsrStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (TrajsrStatus, String) {
    (status_of(&e), format!("{}: {e}", e.kind()))
}

fn null(what: &str) -> (TrajsrStatus, String) {
    (TrajsrStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (TrajsrStatus, String) {
    (TrajsrStatus::InvalidArgument, msg.into())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (TrajsrStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (TrajsrStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn path_arg(path: *const c_char) -> Result<String, (TrajsrStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

/// Message for the most recent failure on this thread. Empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn trajsr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load a road graph from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn trajsr_graph_load(
    path: *const c_char,
    out: *mut *mut TrajsrGraph,
) -> TrajsrStatus {
    guard(|| {
        let path = path_arg(path)?;
        let g = RoadGraph::load_path(&path).map_err(lib_err)?;
        put(out, TrajsrGraph(g))
    })
}

/// # Safety
/// `g` must be a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn trajsr_graph_node_count(g: *const TrajsrGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.node_count())
}

/// # Safety
/// `g` must be null or a handle from `trajsr_graph_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn trajsr_graph_free(g: *mut TrajsrGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Build a trajectory from parallel arrays of `n` latitudes, longitudes and
/// timestamps (seconds). `id` may be null.
///
/// # Safety
/// The arrays must hold `n` values each; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn trajsr_trajectory_new(
    id: *const c_char,
    lats: *const f64,
    lons: *const f64,
    times: *const f64,
    n: usize,
    out: *mut *mut TrajsrTrajectory,
) -> TrajsrStatus {
    guard(|| {
        if n > 0 && (lats.is_null() || lons.is_null() || times.is_null()) {
            return Err(null("coordinate array"));
        }
        let id = if id.is_null() {
            String::new()
        } else {
            path_arg(id)?
        };
        let points = (0..n)
            .map(|i| {
                Ok(TrajPoint {
                    pos: GeoPoint::new(*lats.add(i), *lons.add(i))?,
                    t: *times.add(i),
                })
            })
            .collect::<trajsr::Result<Vec<_>>>()
            .map_err(lib_err)?;
        let t = Trajectory::new(id, points);
        t.validate().map_err(lib_err)?;
        put(out, TrajsrTrajectory(t))
    })
}

/// # Safety
/// `t` must be a live trajectory handle.
#[no_mangle]
pub unsafe extern "C" fn trajsr_trajectory_len(t: *const TrajsrTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.len())
}

/// Copy the points into caller arrays of capacity `cap`. Fails with
/// `TRAJSR_STATUS_BUFFER_TOO_SMALL` if `cap` is less than the length.
///
/// # Safety
/// Each array must have room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn trajsr_trajectory_points(
    t: *const TrajsrTrajectory,
    lats: *mut f64,
    lons: *mut f64,
    times: *mut f64,
    cap: usize,
) -> TrajsrStatus {
    guard(|| {
        let t = &deref(t, "trajectory")?.0;
        if cap < t.len() {
            return Err((
                TrajsrStatus::BufferTooSmall,
                format!("need room for {} points, got {cap}", t.len()),
            ));
        }
        if !t.is_empty() && (lats.is_null() || lons.is_null() || times.is_null()) {
            return Err(null("output array"));
        }
        for (i, p) in t.points.iter().enumerate() {
            *lats.add(i) = p.pos.lat;
            *lons.add(i) = p.pos.lon;
            *times.add(i) = p.t;
        }
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a trajectory handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn trajsr_trajectory_free(t: *mut TrajsrTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Load a trained checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn trajsr_checkpoint_load(
    path: *const c_char,
    out: *mut *mut TrajsrCheckpoint,
) -> TrajsrStatus {
    guard(|| {
        let path = path_arg(path)?;
        let c = Checkpoint::load(&path).map_err(lib_err)?;
        put(out, TrajsrCheckpoint(c))
    })
}

/// # Safety
/// `c` must be null or a checkpoint handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn trajsr_checkpoint_free(c: *mut TrajsrCheckpoint) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Reconstruct a degraded trajectory. The result is a new handle.
///
/// # Safety
/// All handles must be live; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn trajsr_reconstruct(
    ckpt: *const TrajsrCheckpoint,
    g: *const TrajsrGraph,
    input: *const TrajsrTrajectory,
    out: *mut *mut TrajsrTrajectory,
) -> TrajsrStatus {
    guard(|| {
        let (c, g, t) = (
            deref(ckpt, "checkpoint")?,
            deref(g, "graph")?,
            deref(input, "trajectory")?,
        );
        let r = reconstruct(&c.0, &g.0, &t.0).map_err(lib_err)?;
        put(out, TrajsrTrajectory(r))
    })
}

/// HMM map matching. `hex_edge_m > 0` sizes the candidate search radius to
/// twice that edge; otherwise the library default is used.
///
/// # Safety
/// All handles must be live; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn trajsr_map_match(
    g: *const TrajsrGraph,
    input: *const TrajsrTrajectory,
    hex_edge_m: f64,
    out: *mut *mut TrajsrTrajectory,
) -> TrajsrStatus {
    guard(|| {
        let (g, t) = (deref(g, "graph")?, deref(input, "trajectory")?);
        let p = if hex_edge_m > 0.0 {
            HmmParams::for_hex_edge(hex_edge_m)
        } else {
            HmmParams::default()
        };
        let m = map_match(&g.0, &t.0, &p).map_err(lib_err)?;
        put(out, TrajsrTrajectory(m))
    })
}

/// Discrete Fréchet distance in kilometres.
///
/// # Safety
/// Both handles must be live; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn trajsr_frechet_km(
    a: *const TrajsrTrajectory,
    b: *const TrajsrTrajectory,
    out: *mut f64,
) -> TrajsrStatus {
    guard(|| {
        let (a, b) = (deref(a, "trajectory a")?, deref(b, "trajectory b")?);
        let d = discrete_frechet_km(&a.0, &b.0).map_err(lib_err)?;
        *out.as_mut().ok_or_else(|| null("output pointer"))? = d;
        Ok(())
    })
}

/// Snap a point to the centre of its hexagon in a lattice of edge
/// `edge_m` metres anchored at (`origin_lat`, `origin_lon`).
///
/// # Safety
/// `out_lat` and `out_lon` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn trajsr_hex_snap(
    origin_lat: f64,
    origin_lon: f64,
    edge_m: f64,
    lat: f64,
    lon: f64,
    out_lat: *mut f64,
    out_lon: *mut f64,
) -> TrajsrStatus {
    guard(|| {
        if out_lat.is_null() || out_lon.is_null() {
            return Err(null("output pointer"));
        }
        let frame = LocalFrame::at(GeoPoint::new(origin_lat, origin_lon).map_err(lib_err)?)
            .map_err(lib_err)?;
        let grid = HexGrid::new(frame, edge_m).map_err(lib_err)?;
        let c = grid.cell_center(grid.hex_cell_of(GeoPoint::new(lat, lon).map_err(lib_err)?));
        *out_lat = c.lat;
        *out_lon = c.lon;
        Ok(())
    })
}

/// Great-circle distance in kilometres.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn trajsr_haversine_km(
    lat1: f64,
    lon1: f64,
    lat2: f64,
    lon2: f64,
    out: *mut f64,
) -> TrajsrStatus {
    guard(|| {
        let a = GeoPoint::new(lat1, lon1).map_err(lib_err)?;
        let b = GeoPoint::new(lat2, lon2).map_err(lib_err)?;
        *out.as_mut().ok_or_else(|| null("output pointer"))? =
            haversine_km(a, b).map_err(lib_err)?;
        Ok(())
    })
}
