#pragma once

#include <array>

#include "aural/model.hpp"
#include "aural/tape.hpp"

namespace aural {

struct StreamWeights {
  std::array<double, 8> w = {2.0 / 8, 2.0 / 8, 2.0 / 8, 1.0 / 8, 1.0 / 8, 1.0 / 8, 1.0 / 8,
                             1.0 / 8};
};

struct LossBreakdown {
  double l_text = 0.0;
  double l_audio = 0.0;
  double l_total = 0.0;
  std::array<double, 8> per_stream{};       // weighted per-stream components
  std::array<double, 8> stream_nll{};       // unweighted mean NLL per stream
  double l_distill = 0.0;
  double l_flow = 0.0;
  int64_t n_text_tokens = 0;
  int64_t n_audio_frames = 0;
};

// Mean NLL of targets under [N, V] log-probs; scalar tensor. Empty target
// sets yield an exact zero constant.
Tensor nll_mean(Tape& tape, Tensor logprobs, const std::vector<int64_t>& targets);

// Mean NLL over text positions (Eq. text path). Zero-count batches return 0
// and set the flag.
struct TextLoss {
  Tensor value;
  int64_t n_tokens = 0;
};
TextLoss text_loss(Tape& tape, const TextTeacher& teacher);

// Frame-level audio loss: per frame sum_s w_s * NLL_s, averaged over frames.
struct AudioLoss {
  Tensor value;
  std::array<double, 8> stream_nll{};  // mean NLL per stream (values)
  int64_t n_frames = 0;
};
AudioLoss audio_frame_loss(Tape& tape, const LocalTeacher& teacher, const StreamWeights& weights);

// lambda_text * l_text + lambda_audio * l_audio (negative weights rejected).
Tensor total_loss(Tape& tape, Tensor l_text, Tensor l_audio, double lambda_text,
                  double lambda_audio);

// Stage-1 auxiliary objective: l_lm + lambda_rec * MSE(decoded, target).
Tensor stage1_distill_loss(Tape& tape, Tensor l_lm, Tensor decoded, const Array& z_ssl,
                           double lambda_rec);

}  // namespace aural
