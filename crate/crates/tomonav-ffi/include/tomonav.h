#ifndef TOMONAV_H
#define TOMONAV_H

/* Generated by cbindgen from the tomonav-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Call outcome. Zero is success; anything else is an error whose
// detail is available from `tn_last_error_message()`.
typedef enum TnStatus {
  TnStatus_Ok = 0,
  TnStatus_NullArgument = 1,
  TnStatus_InvalidUtf8 = 2,
  TnStatus_InvalidInput = 3,
  TnStatus_ShapeMismatch = 4,
  TnStatus_IoError = 5,
  TnStatus_CorruptFile = 6,
  TnStatus_IncompatibleWeights = 7,
  TnStatus_InternalError = 8,
} TnStatus;

// Stateful junction-counting controller handle.
typedef struct TnController TnController;

// Featurizer handle: a fixed tomographic configuration.
typedef struct TnFeaturizer TnFeaturizer;

// Loaded network handle.
typedef struct TnNetwork TnNetwork;

// Velocity command for the flight controller.
typedef struct TnVelocityCommand {
  // Meters per second, in [0, 6].
  double forward_speed_mps;
  // Radians per second, positive = left (counter-clockwise).
  double yaw_rate_rps;
  // Nonzero = hold position.
  uint8_t hover;
} TnVelocityCommand;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *tn_version(void);

// Detailed message for the most recent error on this thread. The
// pointer stays valid until the next failing call on the same thread.
const char *tn_last_error_message(void);

// Create a featurizer. `num_angles` projections over [0, pi),
// reconstructions of `output_size` x `output_size` pixels. Returns
// null on invalid parameters.
struct TnFeaturizer *tn_featurizer_new(uint32_t num_angles, uint32_t output_size);

// # Safety
// `handle` must come from `tn_featurizer_new` and not be freed twice.
void tn_featurizer_free(struct TnFeaturizer *handle);

// Output pixel count (`output_size`^2) of a featurizer's reconstructions.
//
// # Safety
// `handle` must be a live featurizer handle.
uint64_t tn_featurizer_output_len(const struct TnFeaturizer *handle);

// Run the tomographic feature extraction on a grayscale frame.
// `frame` holds `width * height` intensities in [0, 1]; `out` must
// have room for `tn_featurizer_output_len(handle)` values.
//
// # Safety
// All pointers must be valid for the stated lengths.
enum TnStatus tn_featurizer_run(const struct TnFeaturizer *handle,
                                const float *frame,
                                uint32_t width,
                                uint32_t height,
                                float *out);

// Freshly initialized network from a preset name ("tiny" or "full").
//
// # Safety
// `preset` must be a NUL-terminated string.
struct TnNetwork *tn_network_new(const char *preset, uint64_t seed);

// Load trained weights for a preset from a `.mavw` file.
//
// # Safety
// Both strings must be NUL-terminated.
struct TnNetwork *tn_network_load(const char *preset, const char *weights_path);

// # Safety
// `handle` must come from a network constructor and not be freed twice.
void tn_network_free(struct TnNetwork *handle);

// Side length of the square feature plane the network expects.
//
// # Safety
// `handle` must be a live network handle.
uint32_t tn_network_input_size(const struct TnNetwork *handle);

// Total trainable parameter count.
//
// # Safety
// `handle` must be a live network handle.
uint64_t tn_network_param_count(const struct TnNetwork *handle);

// Predict the five-output command band for one feature plane.
// `feature` holds `side * side` values; `out_actions` receives
// [forward, yaw_left, yaw_right, halt, junction], each in [0, 1].
//
// # Safety
// All pointers must be valid for the stated lengths.
enum TnStatus tn_network_forward(const struct TnNetwork *handle,
                                 const float *feature,
                                 uint32_t side,
                                 float *out_actions);

// Controller from a route-plan JSON document, e.g.
// `{"directives":[{"junction":2,"turn":"left"}],"terminal":"halt"}`,
// with default controller constants.
//
// # Safety
// `route_json` must be a NUL-terminated string.
struct TnController *tn_controller_new(const char *route_json);

// # Safety
// `handle` must come from `tn_controller_new` and not be freed twice.
void tn_controller_free(struct TnController *handle);

// Junctions registered so far.
//
// # Safety
// `handle` must be a live controller handle.
uint32_t tn_controller_junction_count(const struct TnController *handle);

// Feed one frame's action band through the controller and receive the
// velocity command. `actions` holds the five model outputs in [0, 1].
//
// # Safety
// All pointers must be valid; `actions` must hold 5 values.
enum TnStatus tn_controller_step(struct TnController *handle,
                                 const float *actions,
                                 struct TnVelocityCommand *out_command);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TOMONAV_H */
