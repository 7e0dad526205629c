#pragma once

#include <cstdint>
#include <map>

#include "aural/nn.hpp"

namespace aural {

struct AdamWConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  // Short-horizon second-moment memory: toy runs are a few hundred steps, and
  // a 1/(1-beta2) window longer than the run starves parameters whose
  // gradients arrive after the early transient.
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adaptive moments with decoupled weight decay. Moment buffers key off the
// parameter name; only parameters present in the gradient map move.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  void step(ParamStore& store, const GradMap& grads, double lr_now, bool round_f32 = true);

  int64_t steps_taken() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::map<std::string, Array> m_, v_;
  int64_t t_ = 0;
};

// Linear warmup to `peak`, then cosine decay to 10% of peak at `total`.
double lr_schedule(int64_t step, int64_t total, double peak, int64_t warmup);

}  // namespace aural
