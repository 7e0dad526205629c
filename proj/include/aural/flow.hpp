#pragma once

#include "aural/nn.hpp"
#include "aural/tape.hpp"

namespace aural {

// Small residual perceptron predicting the noise of a linearly interpolated
// latent path: z_t = (1-t) z0 + t eps, target eps. Conditions are integer
// codes with a reserved null index for classifier-free guidance training.
struct FlowConfig {
  int64_t latent_width = 8;
  int64_t hidden = 64;
  int64_t n_cond = 4;  // condition codes; index n_cond is the null condition
  int64_t time_features = 8;
  double cond_dropout_p = 0.1;
};

void init_flow(ParamStore& store, const FlowConfig& cfg, Rng& rng);

// v_theta(z_t, t, s) for a batch; conds entries in [0, n_cond] (n_cond=null).
Tensor flow_v(Tape& tape, const ParamStore& store, const FlowConfig& cfg, Tensor z_t,
              const std::vector<double>& ts, const std::vector<int64_t>& conds);

// Monte-Carlo flow objective over a batch of clean latents: mean squared
// noise-prediction error, with conditions dropped to null with probability
// cond_dropout_p when training.
struct FlowLossOut {
  Tensor value;
};
FlowLossOut flow_loss(Tape& tape, const ParamStore& store, const FlowConfig& cfg, const Array& z0,
                      const std::vector<int64_t>& conds, Rng& rng, bool train = true);

// v_uncond + scale * (v_cond - v_uncond); scale 1 returns v_cond exactly and
// scale 0 returns v_uncond exactly.
double guided_value(double v_uncond, double v_cond, double scale);
std::vector<double> guided_prediction(const std::vector<double>& v_uncond,
                                      const std::vector<double>& v_cond, double scale);

// Deterministic Euler sampling from pure noise over a uniform t grid.
// steps >= 1 required. guidance_scale 1.0 disables the unconditional branch.
std::vector<double> flow_sample(const ParamStore& store, const FlowConfig& cfg, int64_t cond,
                                int steps, double guidance_scale, Rng& rng);

}  // namespace aural
