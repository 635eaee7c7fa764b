/* SPDX-License-Identifier: Apache-2.0 */

#ifndef COMPGRAPH_H
#define COMPGRAPH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CgStatus {
  CG_STATUS_OK = 0,
  CG_STATUS_NULL_POINTER = 1,
  CG_STATUS_INVALID_ARGUMENT = 2,
  CG_STATUS_IO = 3,
  CG_STATUS_FORMAT = 4,
  CG_STATUS_OUT_OF_RANGE = 5,
  CG_STATUS_UNSUPPORTED = 6,
  CG_STATUS_NUMERIC = 7,
  CG_STATUS_PANIC = 8,
} CgStatus;

typedef enum CgScope {
  CG_SCOPE_ALL_POSITIONS = 0,
  CG_SCOPE_LAST_POSITION = 1,
} CgScope;

/**
 * A thresholded graph plus its metrics.
 */
typedef struct CgGraph CgGraph;

/**
 * An influence matrix for one checkpoint and token sequence.
 */
typedef struct CgInfluence CgInfluence;

/**
 * A loaded checkpoint.
 */
typedef struct CgModel CgModel;

/**
 * Per-component metrics at one `(step, tau)`.
 */
typedef struct CgNodeMetrics {
  double in_strength;
  double out_strength;
  double betweenness;
  double closeness_out;
  double closeness_in;
  bool top_in;
  bool top_out;
  bool top_betweenness;
  bool top_closeness_out;
} CgNodeMetrics;

typedef struct CgGlobalMetrics {
  uint64_t step;
  double tau;
  size_t num_nodes;
  size_t num_edges;
  double density;
  double correct_token_logit;
} CgGlobalMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failing call on this thread; empty after a
 * success. Valid until the next call on the same thread.
 */
const char *cg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cg_version(void);

/**
 * Loads a checkpoint container.
 */
enum CgStatus cg_model_load(const char *path, struct CgModel **model_out);

void cg_model_free(struct CgModel *model);

enum CgStatus cg_model_step(const struct CgModel *model, uint64_t *step_out);

/**
 * Size of the component universe, `1 + L (H + 1)`.
 */
enum CgStatus cg_model_num_components(const struct CgModel *model, size_t *count_out);

/**
 * Canonical name of component `index` in stage order. The pointer is owned
 * by the model and lives as long as it does.
 */
enum CgStatus cg_model_component_name(const struct CgModel *model,
                                      size_t index,
                                      const char **name_out);

/**
 * Computes the influence matrix for `tokens[0..n_tokens]` with `target` as
 * the correct next token.
 */
enum CgStatus cg_influence_compute(const struct CgModel *model,
                                   const uint32_t *tokens,
                                   size_t n_tokens,
                                   uint32_t target,
                                   enum CgScope scope,
                                   bool strict_layer_order,
                                   struct CgInfluence **influence_out);

void cg_influence_free(struct CgInfluence *influence);

/**
 * `S[src][dst]`. `defined_out` is false (and `value_out` untouched) for
 * pairs outside the forward order.
 */
enum CgStatus cg_influence_get(const struct CgInfluence *influence,
                               size_t src,
                               size_t dst,
                               float *value_out,
                               bool *defined_out);

enum CgStatus cg_influence_correct_token_logit(const struct CgInfluence *influence,
                                               double *logit_out);

/**
 * Edges `i -> j` for every `S[i][j] < tau`, with `tau` in (0, 1].
 */
enum CgStatus cg_graph_build(const struct CgInfluence *influence,
                             double tau,
                             struct CgGraph **graph_out);

void cg_graph_free(struct CgGraph *graph);

enum CgStatus cg_graph_num_edges(const struct CgGraph *graph, size_t *count_out);

/**
 * Edge `index` as component indices and weight `1 - S`.
 */
enum CgStatus cg_graph_edge(const struct CgGraph *graph,
                            size_t index,
                            size_t *src_out,
                            size_t *dst_out,
                            double *weight_out);

/**
 * Fills `nodes[0..len]` (one entry per component, stage order) and `global`.
 * `len` must equal the component count. Either output may be null to skip it.
 */
enum CgStatus cg_graph_metrics(const struct CgGraph *graph,
                               struct CgNodeMetrics *nodes,
                               size_t len,
                               struct CgGlobalMetrics *global);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COMPGRAPH_H */
