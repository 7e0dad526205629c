#include "aural/optim.hpp"

#include <cmath>

namespace aural {

void AdamW::step(ParamStore& store, const GradMap& grads, double lr_now, bool round_f32) {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    if (!store.has(name) || !store.is_trainable(name)) continue;
    Array& p = store.at(name);
    Array& m = m_[name];
    Array& v = v_[name];
    if (m.data.empty()) m = Array::zeros(p.shape);
    if (v.data.empty()) v = Array::zeros(p.shape);
    for (int64_t i = 0; i < p.numel(); ++i) {
      double gi = g.data[i];
      m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * gi;
      v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * gi * gi;
      double mhat = m.data[i] / bc1;
      double vhat = v.data[i] / bc2;
      p.data[i] -= lr_now * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                             cfg_.weight_decay * p.data[i]);
    }
    if (round_f32) round_f32_inplace(p.data);
  }
}

double lr_schedule(int64_t step, int64_t total, double peak, int64_t warmup) {
  if (warmup > 0 && step < warmup) {
    return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  if (total <= warmup) return peak;
  double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  progress = std::min(1.0, std::max(0.0, progress));
  double floor = 0.1 * peak;
  return floor + 0.5 * (peak - floor) * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace aural
