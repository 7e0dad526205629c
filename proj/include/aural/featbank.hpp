#pragma once

#include <cstdint>

#include "aural/array.hpp"
#include "aural/rng.hpp"

namespace aural {

// Seeded stand-in for the frozen encoder stack: smooth random feature
// streams at fixed frame rates. The environment stream is a planted function
// of the phone and music streams plus noise, so cross-stream structure
// exists by construction.
struct FeatureBankConfig {
  uint64_t bank_seed = 17;
  int64_t d_ph = 8;
  int64_t d_mu = 8;
  int64_t d_env = 8;
  int64_t d_reason_in = 32;  // width of the reasoning-branch input features
  double recon_rate_hz = 12.5;
  double reason_in_rate_hz = 25.0;
  double env_noise = 0.05;
  int n_components = 6;  // sinusoid mixture size per channel
};

struct FeatureSet {
  Array h_ph;        // [T_recon, d_ph]
  Array h_mu;        // [T_recon, d_mu]
  Array h_env;       // [T_recon, d_env]
  Array h_reason_in; // [T_in, d_reason_in]
};

class SyntheticFeatureBank {
 public:
  explicit SyntheticFeatureBank(FeatureBankConfig cfg);

  // Deterministic given (bank seed, utterance seed, duration).
  FeatureSet features(uint64_t utterance_seed, double duration_s) const;

  // The planted mapping env = tanh(W_ph h_ph + W_mu h_mu) + noise, exposed so
  // mixture construction can re-derive env features from mixed sources.
  Array planted_env(const Array& h_ph, const Array& h_mu, uint64_t noise_seed) const;

  const FeatureBankConfig& config() const { return cfg_; }

 private:
  Array smooth_stream(uint64_t seed, int64_t frames, int64_t dim, double rate_hz) const;

  FeatureBankConfig cfg_;
  Array w_ph_;  // [d_ph, d_env] fixed mixing weights derived from bank seed
  Array w_mu_;  // [d_mu, d_env]
};

}  // namespace aural
