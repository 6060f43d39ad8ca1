#ifndef TRAJSR_H
#define TRAJSR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TrajsrStatus {
  TRAJSR_STATUS_OK = 0,
  TRAJSR_STATUS_NULL_POINTER = 1,
  TRAJSR_STATUS_INVALID_ARGUMENT = 2,
  TRAJSR_STATUS_IO = 3,
  TRAJSR_STATUS_PARSE = 4,
  TRAJSR_STATUS_LOAD = 5,
  TRAJSR_STATUS_CHECKPOINT = 6,
  TRAJSR_STATUS_RECONSTRUCTION = 7,
  TRAJSR_STATUS_UNMATCHED = 8,
  TRAJSR_STATUS_BROKEN_CHAIN = 9,
  TRAJSR_STATUS_BUFFER_TOO_SMALL = 10,
  TRAJSR_STATUS_PANIC = 11,
  TRAJSR_STATUS_OTHER = 12,
} TrajsrStatus;

/**
 * Trained model handle.
 */
typedef struct TrajsrCheckpoint TrajsrCheckpoint;

/**
 * Road network handle.
 */
typedef struct TrajsrGraph TrajsrGraph;

/**
 * Trajectory handle.
 */
typedef struct TrajsrTrajectory TrajsrTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. Empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *trajsr_last_error(void);

/**
 * Load a road graph from a JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TrajsrStatus trajsr_graph_load(const char *path, struct TrajsrGraph **out);

/**
 * # Safety
 * `g` must be a live graph handle.
 */
size_t trajsr_graph_node_count(const struct TrajsrGraph *g);

/**
 * # Safety
 * `g` must be null or a handle from `trajsr_graph_load` not yet freed.
 */
void trajsr_graph_free(struct TrajsrGraph *g);

/**
 * Build a trajectory from parallel arrays of `n` latitudes, longitudes and
 * timestamps (seconds). `id` may be null.
 *
 * # Safety
 * The arrays must hold `n` values each; `out` must be a valid pointer.
 */
enum TrajsrStatus trajsr_trajectory_new(const char *id,
                                        const double *lats,
                                        const double *lons,
                                        const double *times,
                                        size_t n,
                                        struct TrajsrTrajectory **out);

/**
 * # Safety
 * `t` must be a live trajectory handle.
 */
size_t trajsr_trajectory_len(const struct TrajsrTrajectory *t);

/**
 * Copy the points into caller arrays of capacity `cap`. Fails with
 * `TRAJSR_STATUS_BUFFER_TOO_SMALL` if `cap` is less than the length.
 *
 * # Safety
 * Each array must have room for `cap` values.
 */
enum TrajsrStatus trajsr_trajectory_points(const struct TrajsrTrajectory *t,
                                           double *lats,
                                           double *lons,
                                           double *times,
                                           size_t cap);

/**
 * # Safety
 * `t` must be null or a trajectory handle not yet freed.
 */
void trajsr_trajectory_free(struct TrajsrTrajectory *t);

/**
 * Load a trained checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TrajsrStatus trajsr_checkpoint_load(const char *path, struct TrajsrCheckpoint **out);

/**
 * # Safety
 * `c` must be null or a checkpoint handle not yet freed.
 */
void trajsr_checkpoint_free(struct TrajsrCheckpoint *c);

/**
 * Reconstruct a degraded trajectory. The result is a new handle.
 *
 * # Safety
 * All handles must be live; `out` must be a valid pointer.
 */
enum TrajsrStatus trajsr_reconstruct(const struct TrajsrCheckpoint *ckpt,
                                     const struct TrajsrGraph *g,
                                     const struct TrajsrTrajectory *input,
                                     struct TrajsrTrajectory **out);

/**
 * HMM map matching. `hex_edge_m > 0` sizes the candidate search radius to
 * twice that edge; otherwise the library default is used.
 *
 * # Safety
 * All handles must be live; `out` must be a valid pointer.
 */
enum TrajsrStatus trajsr_map_match(const struct TrajsrGraph *g,
                                   const struct TrajsrTrajectory *input,
                                   double hex_edge_m,
                                   struct TrajsrTrajectory **out);

/**
 * Discrete Fréchet distance in kilometres.
 *
 * # Safety
 * Both handles must be live; `out` must be a valid pointer.
 */
enum TrajsrStatus trajsr_frechet_km(const struct TrajsrTrajectory *a,
                                    const struct TrajsrTrajectory *b,
                                    double *out);

/**
 * Snap a point to the centre of its hexagon in a lattice of edge
 * `edge_m` metres anchored at (`origin_lat`, `origin_lon`).
 *
 * # Safety
 * `out_lat` and `out_lon` must be valid pointers.
 */
enum TrajsrStatus trajsr_hex_snap(double origin_lat,
                                  double origin_lon,
                                  double edge_m,
                                  double lat,
                                  double lon,
                                  double *out_lat,
                                  double *out_lon);

/**
 * Great-circle distance in kilometres.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TrajsrStatus trajsr_haversine_km(double lat1,
                                      double lon1,
                                      double lat2,
                                      double lon2,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAJSR_H */
