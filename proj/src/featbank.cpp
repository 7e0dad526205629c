#include "aural/featbank.hpp"

#include <cmath>
#include <stdexcept>

#include "aural/vocab.hpp"

namespace aural {

SyntheticFeatureBank::SyntheticFeatureBank(FeatureBankConfig cfg) : cfg_(cfg) {
  Rng rng(cfg_.bank_seed);
  w_ph_ = Array::zeros({cfg_.d_ph, cfg_.d_env});
  for (auto& v : w_ph_.data) v = rng.normal() * 0.7;
  w_mu_ = Array::zeros({cfg_.d_mu, cfg_.d_env});
  for (auto& v : w_mu_.data) v = rng.normal() * 0.7;
}

Array SyntheticFeatureBank::smooth_stream(uint64_t seed, int64_t frames, int64_t dim,
                                          double rate_hz) const {
  Rng rng(seed);
  Array out = Array::zeros({frames, dim});
  for (int64_t c = 0; c < dim; ++c) {
    for (int comp = 0; comp < cfg_.n_components; ++comp) {
      double amp = rng.normal() * (1.0 / std::sqrt(cfg_.n_components));
      double freq = rng.uniform(0.2, 3.0);  // Hz, slow relative to frame rate
      double phase = rng.uniform(0.0, 6.283185307179586);
      for (int64_t t = 0; t < frames; ++t) {
        double time_s = static_cast<double>(t) / rate_hz;
        out.data[t * dim + c] += amp * std::sin(6.283185307179586 * freq * time_s + phase);
      }
    }
  }
  return out;
}

FeatureSet SyntheticFeatureBank::features(uint64_t utterance_seed, double duration_s) const {
  FrameBudget budget = frame_budget(duration_s);
  int64_t t_recon = budget.n_recon;
  int64_t t_in = std::llround(cfg_.reason_in_rate_hz * duration_s);
  if (t_in < 1) t_in = 1;

  Rng base(utterance_seed);
  FeatureSet fs;
  fs.h_ph = smooth_stream(base.fork(1).next_u64(), t_recon, cfg_.d_ph, cfg_.recon_rate_hz);
  fs.h_mu = smooth_stream(base.fork(2).next_u64(), t_recon, cfg_.d_mu, cfg_.recon_rate_hz);
  fs.h_env = planted_env(fs.h_ph, fs.h_mu, base.fork(3).next_u64());
  fs.h_reason_in =
      smooth_stream(base.fork(4).next_u64(), t_in, cfg_.d_reason_in, cfg_.reason_in_rate_hz);
  return fs;
}

Array SyntheticFeatureBank::planted_env(const Array& h_ph, const Array& h_mu,
                                        uint64_t noise_seed) const {
  if (h_ph.shape[0] != h_mu.shape[0]) {
    throw std::invalid_argument("planted_env: phone/music streams must be time-aligned");
  }
  int64_t T = h_ph.shape[0];
  Rng noise(noise_seed);
  Array env = Array::zeros({T, cfg_.d_env});
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t e = 0; e < cfg_.d_env; ++e) {
      double acc = 0.0;
      for (int64_t j = 0; j < cfg_.d_ph; ++j) {
        acc += h_ph.data[t * cfg_.d_ph + j] * w_ph_.data[j * cfg_.d_env + e];
      }
      for (int64_t j = 0; j < cfg_.d_mu; ++j) {
        acc += h_mu.data[t * cfg_.d_mu + j] * w_mu_.data[j * cfg_.d_env + e];
      }
      env.data[t * cfg_.d_env + e] = std::tanh(acc) + noise.normal() * cfg_.env_noise;
    }
  }
  return env;
}

}  // namespace aural
