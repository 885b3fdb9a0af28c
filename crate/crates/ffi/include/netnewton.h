#ifndef NETNEWTON_H
#define NETNEWTON_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of fallible calls.
typedef enum NnStatus {
  NN_STATUS_OK = 0,
  NN_STATUS_NULL_POINTER = 1,
  NN_STATUS_INVALID_ARGUMENT = 2,
  NN_STATUS_INVALID_NETWORK = 3,
  NN_STATUS_PARSE = 4,
  NN_STATUS_SOLVE_FAILED = 5,
  NN_STATUS_OUT_OF_RANGE = 6,
  NN_STATUS_PANIC = 7,
} NnStatus;

// Phase tag of a trace record.
typedef enum NnPhase {
  NN_PHASE_DAMPED = 0,
  NN_PHASE_QUADRATIC = 1,
  NN_PHASE_FIRST_ORDER = 2,
} NnPhase;

// Opaque network handle.
typedef struct NnNetwork NnNetwork;

// Opaque handle to the outcome of a solve.
typedef struct NnSolveResult NnSolveResult;

// Opaque handle to one per-iteration trace.
typedef struct NnTrace NnTrace;

// Solver parameters. Initialize with [`nn_solver_options_default`].
typedef struct NnSolverOptions {
  double mu;
  double p;
  double epsilon;
  double v;
  double b;
  double theta_term;
  double a;
  size_t max_primal_iters;
  uint64_t seed;
  // Nonzero runs the two-pass objective scaling.
  int32_t two_pass;
} NnSolverOptions;

// One trace row.
typedef struct NnRecord {
  size_t k;
  double f;
  double h;
  double lambda_tilde;
  double theta;
  double stepsize;
  enum NnPhase phase;
  size_t dual_iters;
  size_t consensus_rounds;
  double min_slack;
  double feas_residual;
} NnRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or null if none. The
// pointer stays valid until the next failing call on the same thread.
const char *nn_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *nn_version(void);

// Parses a network from its TOML description.
//
// # Safety
// `text` must be a valid NUL-terminated string and `out` a valid pointer.
enum NnStatus nn_network_from_toml(const char *text, struct NnNetwork **out);

// Builds a network with logarithmic utilities. Routes are given in
// compressed form: source `i` uses `route_links[route_offsets[i] ..
// route_offsets[i + 1]]`.
//
// # Safety
// `capacities` must hold `num_links` values, `weights` `num_sources`
// values, `route_offsets` `num_sources + 1` values and `route_links`
// `route_offsets[num_sources]` values. `out` must be a valid pointer.
enum NnStatus nn_network_new(size_t num_links,
                             const double *capacities,
                             size_t num_sources,
                             const size_t *route_offsets,
                             const size_t *route_links,
                             const double *weights,
                             struct NnNetwork **out);

// Seeded random network with Bernoulli routing.
//
// # Safety
// `out` must be a valid pointer.
enum NnStatus nn_network_random(size_t links,
                                size_t sources,
                                double prob,
                                uint64_t seed,
                                struct NnNetwork **out);

// Number of links, or 0 for a null handle.
//
// # Safety
// `network` must be null or a live handle.
size_t nn_network_num_links(const struct NnNetwork *network);

// Number of sources, or 0 for a null handle.
//
// # Safety
// `network` must be null or a live handle.
size_t nn_network_num_sources(const struct NnNetwork *network);

// Serializes the network as TOML; free the string with [`nn_string_free`].
//
// # Safety
// `network` must be a live handle and `out` a valid pointer.
enum NnStatus nn_network_to_toml(const struct NnNetwork *network, char **out);

// Releases a network handle. Null is ignored.
//
// # Safety
// `network` must be null or a handle not yet freed.
void nn_network_free(struct NnNetwork *network);

// Fills `out` with the library defaults.
//
// # Safety
// `out` must be null or a valid pointer.
void nn_solver_options_default(struct NnSolverOptions *out);

// Runs the distributed Newton method. `options` may be null for defaults.
//
// # Safety
// `network` must be a live handle, `options` null or valid, `out` valid.
enum NnStatus nn_solve(const struct NnNetwork *network,
                       const struct NnSolverOptions *options,
                       struct NnSolveResult **out);

// Number of source rates in a result, or 0 for null.
//
// # Safety
// `result` must be null or a live handle.
size_t nn_result_num_rates(const struct NnSolveResult *result);

// Copies the rates into `buf`, which must hold at least
// [`nn_result_num_rates`] values.
//
// # Safety
// `result` must be a live handle and `buf` valid for `len` writes.
enum NnStatus nn_result_rates(const struct NnSolveResult *result, double *buf, size_t len);

// Total utility at the returned rates; NaN for null.
//
// # Safety
// `result` must be null or a live handle.
double nn_result_utility(const struct NnSolveResult *result);

// 1 when every pass stopped on the decrement test, else 0.
//
// # Safety
// `result` must be null or a live handle.
int32_t nn_result_converged(const struct NnSolveResult *result);

// Primal steps plus dual iterations over all passes.
//
// # Safety
// `result` must be null or a live handle.
size_t nn_result_counted_iterations(const struct NnSolveResult *result);

// Number of traces (1, or 2 for a two-pass solve).
//
// # Safety
// `result` must be null or a live handle.
size_t nn_result_num_traces(const struct NnSolveResult *result);

// Copies trace `index` into a new handle; free with [`nn_trace_free`].
//
// # Safety
// `result` must be a live handle and `out` a valid pointer.
enum NnStatus nn_result_trace(const struct NnSolveResult *result,
                              size_t index,
                              struct NnTrace **out);

// Releases a result handle. Null is ignored.
//
// # Safety
// `result` must be null or a handle not yet freed.
void nn_result_free(struct NnSolveResult *result);

// Number of records, or 0 for null.
//
// # Safety
// `trace` must be null or a live handle.
size_t nn_trace_len(const struct NnTrace *trace);

// Copies record `k` into `out`.
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum NnStatus nn_trace_record(const struct NnTrace *trace, size_t k, struct NnRecord *out);

// Trace as CSV; free the string with [`nn_string_free`].
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum NnStatus nn_trace_to_csv(const struct NnTrace *trace, char **out);

// Releases a trace handle. Null is ignored.
//
// # Safety
// `trace` must be null or a handle not yet freed.
void nn_trace_free(struct NnTrace *trace);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a string from this library not yet freed.
void nn_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NETNEWTON_H */
