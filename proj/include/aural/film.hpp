#pragma once

#include "aural/nn.hpp"
#include "aural/tape.hpp"

namespace aural {

// Per-channel affine modulation of reconstruction-branch features by
// quantized reasoning embeddings: out = gamma(R) * S_e + beta(R).
// gamma/beta are two-layer perceptrons initialized so the whole map is the
// identity at step 0.
struct FilmConfig {
  int64_t d_reason = 32;   // reasoning embedding width
  int64_t d_feature = 16;  // modulated feature width
  int64_t d_hidden = 32;
};

void init_film(ParamStore& store, const FilmConfig& cfg, Rng& rng);

// Repeat counts mapping 5 Hz reasoning frames onto the 12.5 Hz grid: the
// fixed 3,2,3,2,... cycle (5 reasoning frames -> 13 rows, then truncated or
// last-row-extended to the actual feature length).
std::vector<int64_t> film_repeat_counts(int64_t n_reason);

// Row indices into R_hat for a target length.
std::vector<int64_t> film_upsample_ids(int64_t n_reason, int64_t target_len);

// S_e [T, d_feature], r_hat [M, d_reason] -> [T, d_feature].
Tensor film_modulate(Tape& tape, const ParamStore& store, const FilmConfig& cfg, Tensor s_e,
                     Tensor r_hat);

}  // namespace aural
