#include "aural/flow.hpp"

#include <cmath>
#include <stdexcept>

namespace aural {

namespace {

Array time_features(const std::vector<double>& ts, int64_t n_feats) {
  int64_t n = static_cast<int64_t>(ts.size());
  Array out = Array::zeros({n, n_feats});
  for (int64_t i = 0; i < n; ++i) {
    out.data[i * n_feats + 0] = ts[i];
    for (int64_t j = 1; j < n_feats; ++j) {
      double freq = std::pow(2.0, static_cast<double>((j - 1) / 2));
      double ang = 6.283185307179586 * freq * ts[i];
      out.data[i * n_feats + j] = (j % 2 == 1) ? std::sin(ang) : std::cos(ang);
    }
  }
  return out;
}

}  // namespace

void init_flow(ParamStore& store, const FlowConfig& cfg, Rng& rng) {
  init_embedding(store, "flow.cond_emb", cfg.n_cond + 1, cfg.hidden / 2, rng, 0.1);
  int64_t in_width = cfg.latent_width + cfg.time_features + cfg.hidden / 2;
  init_linear(store, "flow.in", in_width, cfg.hidden, rng, 0.2);
  init_linear(store, "flow.mid", cfg.hidden, cfg.hidden, rng, 0.2);
  init_linear(store, "flow.out", cfg.hidden, cfg.latent_width, rng, 0.0);  // zero output at init
}

Tensor flow_v(Tape& tape, const ParamStore& store, const FlowConfig& cfg, Tensor z_t,
              const std::vector<double>& ts, const std::vector<int64_t>& conds) {
  int64_t n = z_t.shape()[0];
  if (static_cast<int64_t>(ts.size()) != n || static_cast<int64_t>(conds.size()) != n) {
    throw std::invalid_argument("flow_v: batch size mismatch between z, t, and conditions");
  }
  Tensor cond_emb = tape.embedding(store.tensor(tape, "flow.cond_emb"),
                                   std::vector<int64_t>(conds.begin(), conds.end()));
  Tensor x = tape.concat({z_t, tape.constant(time_features(ts, cfg.time_features)), cond_emb}, 1);
  Tensor h = tape.gelu(linear(tape, store, "flow.in", x));
  // one residual hidden step
  h = tape.add(h, tape.gelu(linear(tape, store, "flow.mid", h)));
  return linear(tape, store, "flow.out", h);
}

FlowLossOut flow_loss(Tape& tape, const ParamStore& store, const FlowConfig& cfg, const Array& z0,
                      const std::vector<int64_t>& conds, Rng& rng, bool train) {
  if (z0.rank() != 2 || z0.shape[1] != cfg.latent_width) {
    throw std::invalid_argument("flow_loss: latents must be [n, " +
                                std::to_string(cfg.latent_width) + "]");
  }
  int64_t n = z0.shape[0];
  std::vector<double> ts(n);
  std::vector<int64_t> use_conds(n);
  Array z_t = Array::zeros(z0.shape);
  Array eps = Array::zeros(z0.shape);
  for (int64_t i = 0; i < n; ++i) {
    ts[i] = rng.uniform();
    use_conds[i] = conds[i];
    if (train && rng.uniform() < cfg.cond_dropout_p) use_conds[i] = cfg.n_cond;  // null
    for (int64_t j = 0; j < cfg.latent_width; ++j) {
      double e = rng.normal();
      eps.data[i * cfg.latent_width + j] = e;
      z_t.data[i * cfg.latent_width + j] =
          (1.0 - ts[i]) * z0.data[i * cfg.latent_width + j] + ts[i] * e;
    }
  }
  Tensor v = flow_v(tape, store, cfg, tape.constant(std::move(z_t)), ts, use_conds);
  Array neg_eps = eps;
  for (double& x : neg_eps.data) x = -x;
  Tensor diff = tape.add(v, tape.constant(std::move(neg_eps)));
  // E ||v - eps||^2: squared norms averaged over the batch.
  FlowLossOut out;
  out.value = tape.mul_scalar(tape.sum_of_squares(diff), 1.0 / static_cast<double>(n));
  return out;
}

double guided_value(double v_uncond, double v_cond, double scale) {
  if (scale == 1.0) return v_cond;
  if (scale == 0.0) return v_uncond;
  return v_uncond + scale * (v_cond - v_uncond);
}

std::vector<double> guided_prediction(const std::vector<double>& v_uncond,
                                      const std::vector<double>& v_cond, double scale) {
  if (v_uncond.size() != v_cond.size()) {
    throw std::invalid_argument("guided_prediction: branch widths differ");
  }
  std::vector<double> out(v_cond.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = guided_value(v_uncond[i], v_cond[i], scale);
  return out;
}

std::vector<double> flow_sample(const ParamStore& store, const FlowConfig& cfg, int64_t cond,
                                int steps, double guidance_scale, Rng& rng) {
  if (steps < 1) throw std::invalid_argument("flow_sample: steps must be >= 1");
  int64_t w = cfg.latent_width;
  std::vector<double> z(w);
  for (auto& v : z) v = rng.normal();

  auto predict = [&](double t) {
    Tape tape(Dtype::f64, /*check_finite=*/false);
    Array za({1, w}, std::vector<double>(z.begin(), z.end()));
    Tensor zt = tape.constant(za);
    std::vector<double> v_cond =
        flow_v(tape, store, cfg, zt, {t}, {cond}).value().data;
    if (guidance_scale == 1.0) return v_cond;
    std::vector<double> v_uncond =
        flow_v(tape, store, cfg, zt, {t}, {cfg.n_cond}).value().data;
    return guided_prediction(v_uncond, v_cond, guidance_scale);
  };

  for (int k = steps; k >= 1; --k) {
    double t = static_cast<double>(k) / steps;
    double s = static_cast<double>(k - 1) / steps;
    std::vector<double> eps_hat = predict(t);
    for (int64_t j = 0; j < w; ++j) {
      // Implied clean latent; at t=1 the noise estimate removes z entirely.
      double z0_hat = t < 1.0 ? (z[j] - t * eps_hat[j]) / (1.0 - t) : z[j] - eps_hat[j];
      z[j] = (1.0 - s) * z0_hat + s * eps_hat[j];
    }
  }
  return z;
}

}  // namespace aural
