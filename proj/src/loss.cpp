#include "aural/loss.hpp"

#include <stdexcept>

namespace aural {

Tensor nll_mean(Tape& tape, Tensor logprobs, const std::vector<int64_t>& targets) {
  if (targets.empty()) return tape.scalar_const(0.0);
  int64_t n = logprobs.shape()[0];
  int64_t v = logprobs.shape()[1];
  if (n != static_cast<int64_t>(targets.size())) {
    throw std::invalid_argument("nll_mean: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(n) + " rows");
  }
  Array pick = Array::zeros({n, v});
  for (int64_t i = 0; i < n; ++i) {
    if (targets[i] < 0 || targets[i] >= v) {
      throw std::out_of_range("nll_mean: target outside vocabulary");
    }
    pick.data[i * v + targets[i]] = -1.0;
  }
  // mean over n*v entries of (-logp at targets), rescaled to a per-row mean.
  Tensor sel = tape.mul(logprobs, tape.constant(std::move(pick)));
  return tape.mul_scalar(tape.mean(sel), static_cast<double>(v));
}

TextLoss text_loss(Tape& tape, const TextTeacher& teacher) {
  TextLoss out;
  out.n_tokens = static_cast<int64_t>(teacher.targets.size());
  if (out.n_tokens == 0) {
    out.value = tape.scalar_const(0.0);
    return out;
  }
  out.value = nll_mean(tape, teacher.logprobs, teacher.targets);
  return out;
}

AudioLoss audio_frame_loss(Tape& tape, const LocalTeacher& teacher,
                           const StreamWeights& weights) {
  if (weights.w.size() != 8) {
    throw std::invalid_argument("stream weight vector must have 8 entries");
  }
  AudioLoss out;
  out.n_frames = static_cast<int64_t>(teacher.frame_positions.size());
  if (out.n_frames == 0) {
    out.value = tape.scalar_const(0.0);
    return out;
  }
  if (teacher.stream_logprobs.size() != 8) {
    throw std::invalid_argument("audio_frame_loss: expected 8 stream log-prob tensors");
  }
  Tensor acc{};
  for (int s = 0; s < 8; ++s) {
    Tensor nll_s = nll_mean(tape, teacher.stream_logprobs[s], teacher.stream_targets[s]);
    out.stream_nll[s] = nll_s.value().data[0];
    Tensor weighted = tape.mul_scalar(nll_s, weights.w[s]);
    acc = s == 0 ? weighted : tape.add(acc, weighted);
  }
  out.value = acc;
  return out;
}

Tensor total_loss(Tape& tape, Tensor l_text, Tensor l_audio, double lambda_text,
                  double lambda_audio) {
  if (lambda_text < 0.0 || lambda_audio < 0.0) {
    throw std::invalid_argument("modality loss weights must be non-negative");
  }
  return tape.add(tape.mul_scalar(l_text, lambda_text), tape.mul_scalar(l_audio, lambda_audio));
}

Tensor stage1_distill_loss(Tape& tape, Tensor l_lm, Tensor decoded, const Array& z_ssl,
                           double lambda_rec) {
  if (decoded.shape() != z_ssl.shape) {
    throw std::invalid_argument("distill: decoded " + shape_str(decoded.shape()) +
                                " vs target " + shape_str(z_ssl.shape));
  }
  Array neg = z_ssl;
  for (double& v : neg.data) v = -v;
  Tensor diff = tape.add(decoded, tape.constant(std::move(neg)));
  Tensor mse = tape.mul_scalar(tape.sum_of_squares(diff),
                               1.0 / static_cast<double>(std::max<int64_t>(1, z_ssl.numel())));
  return tape.add(l_lm, tape.mul_scalar(mse, lambda_rec));
}

}  // namespace aural
