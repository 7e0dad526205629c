#pragma once

#include <cstdint>
#include <vector>

#include "aural/nn.hpp"
#include "aural/rng.hpp"
#include "aural/tape.hpp"

namespace aural {

// One codebook. Index 0 is reserved for the zero vector (never updated), so
// a residual quantization step can never increase the residual norm.
struct Codebook {
  Array entries;               // [n_codes, d]
  std::vector<int64_t> usage;  // assignments since the last reseed sweep
  Array ema_weight;            // [n_codes]
  Array ema_sum;               // [n_codes, d]

  int64_t n_codes() const { return entries.shape[0]; }
  int64_t dim() const { return entries.shape[1]; }

  static Codebook make(int64_t n_codes, int64_t d, Rng& rng, double scale = 1.0);
};

struct VqResult {
  std::vector<int32_t> codes;  // per frame
  Array quantized;             // [frames, d]
  Array residual;              // x - quantized
  double commit_loss = 0.0;    // beta * MSE(x, quantized); 0 in eval mode
};

struct RvqResult {
  std::vector<std::vector<int32_t>> codes;  // [level][frame]
  Array quantized;                          // sum of selected entries
  Array residual;                           // final residual
  std::vector<double> residual_norms;       // mean L2 norm after each level
  double commit_loss = 0.0;
};

// 8 parallel code streams per frame from the 1:1:6 group allocation.
struct GroupwiseResult {
  std::vector<std::vector<int32_t>> streams;  // [8][frames]
  VqResult ph;
  VqResult mu;
  RvqResult env;
};

constexpr double kCommitBeta = 0.25;

// Nearest entry by squared Euclidean distance, ties to the lowest index.
VqResult vq_quantize(const Array& x, const Codebook& book, bool train = false,
                     double beta = kCommitBeta);

// Cascaded residual quantization over one book per level.
RvqResult rvq_quantize(const Array& x, const std::vector<Codebook>& books, int n_levels,
                       bool train = false, double beta = kCommitBeta);

GroupwiseResult groupwise_quantize(const Array& h_ph, const Array& h_mu, const Array& h_env,
                                   const Codebook& book_ph, const Codebook& book_mu,
                                   const std::vector<Codebook>& books_env, bool train = false);

// Reconstruction from codes: sum of selected entries (exact).
Array dequantize(const std::vector<const Codebook*>& books,
                 const std::vector<std::vector<int32_t>>& codes);

enum class UpdateMode { ema, gradient };

// EMA move toward the assigned-vector means (decay 0.99 default); entry 0
// stays pinned to zero. Gradient mode nudges selected entries toward their
// assigned inputs with a plain SGD step instead.
void update_codebook(Codebook& book, const Array& x, const std::vector<int32_t>& codes,
                     UpdateMode mode, double decay = 0.99, double lr = 0.1);

// Re-seed entries unused since the last sweep from random batch rows and
// reset all usage counters. Entry 0 is exempt.
void reseed_dead_entries(Codebook& book, const Array& batch, Rng& rng);

// Straight-through estimator on the tape: quantized output whose backward
// Jacobian w.r.t. x is the identity, plus the commitment term
// beta * MSE(x, stopgrad(q)).
struct StraightThrough {
  Tensor quantized;
  Tensor commit_loss;
  std::vector<int32_t> codes;
};
StraightThrough vq_straight_through(Tape& tape, Tensor x, const Codebook& book,
                                    double beta = kCommitBeta);

// Query-based compression: M = ceil(T / interleave) learned queries
// cross-attend over h through a small bidirectional stack.
struct QueryCompressorConfig {
  int64_t d = 32;
  int n_blocks = 4;
  int n_heads = 4;
  int interleave = 5;
  int64_t max_queries = 128;
};

void init_query_compressor(ParamStore& store, const QueryCompressorConfig& cfg, Rng& rng);
int64_t compressed_len(int64_t T, int interleave);
Tensor query_compress(Tape& tape, const ParamStore& store, const QueryCompressorConfig& cfg,
                      Tensor h);

}  // namespace aural
