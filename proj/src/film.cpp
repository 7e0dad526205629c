#include "aural/film.hpp"

#include <stdexcept>

namespace aural {

void init_film(ParamStore& store, const FilmConfig& cfg, Rng& rng) {
  init_linear(store, "film.gamma.l1", cfg.d_reason, cfg.d_hidden, rng);
  init_linear(store, "film.gamma.l2", cfg.d_hidden, cfg.d_feature, rng, 0.0);  // zero init
  init_linear(store, "film.beta.l1", cfg.d_reason, cfg.d_hidden, rng);
  init_linear(store, "film.beta.l2", cfg.d_hidden, cfg.d_feature, rng, 0.0);
}

std::vector<int64_t> film_repeat_counts(int64_t n_reason) {
  std::vector<int64_t> counts(n_reason);
  for (int64_t i = 0; i < n_reason; ++i) counts[i] = (i % 2 == 0) ? 3 : 2;
  return counts;
}

std::vector<int64_t> film_upsample_ids(int64_t n_reason, int64_t target_len) {
  if (n_reason < 1) throw std::invalid_argument("film_upsample_ids: need at least one frame");
  std::vector<int64_t> ids;
  auto counts = film_repeat_counts(n_reason);
  for (int64_t i = 0; i < n_reason; ++i) {
    for (int64_t r = 0; r < counts[i]; ++r) ids.push_back(i);
  }
  if (static_cast<int64_t>(ids.size()) > target_len) {
    ids.resize(target_len);
  } else {
    while (static_cast<int64_t>(ids.size()) < target_len) ids.push_back(n_reason - 1);
  }
  return ids;
}

Tensor film_modulate(Tape& tape, const ParamStore& store, const FilmConfig& cfg, Tensor s_e,
                     Tensor r_hat) {
  if (s_e.shape().back() != cfg.d_feature) {
    throw std::invalid_argument("film_modulate: feature width " +
                                std::to_string(s_e.shape().back()) + " != configured " +
                                std::to_string(cfg.d_feature));
  }
  if (r_hat.shape().back() != cfg.d_reason) {
    throw std::invalid_argument("film_modulate: reasoning width " +
                                std::to_string(r_hat.shape().back()) + " != configured " +
                                std::to_string(cfg.d_reason));
  }
  int64_t T = s_e.shape()[0];
  Tensor up = tape.embedding(r_hat, film_upsample_ids(r_hat.shape()[0], T));

  auto mlp = [&](const std::string& prefix) {
    Tensor h = tape.gelu(linear(tape, store, prefix + ".l1", up));
    return linear(tape, store, prefix + ".l2", h);
  };
  Tensor gamma = tape.add_scalar(mlp("film.gamma"), 1.0);
  Tensor beta = mlp("film.beta");
  return tape.add(tape.mul(gamma, s_e), beta);
}

}  // namespace aural
