#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aural/grid.hpp"
#include "aural/nn.hpp"
#include "aural/vocab.hpp"

namespace aural {

struct BackboneConfig {
  int64_t d_model = 64;
  int n_heads = 4;
  int n_understand = 2;
  int n_crossmodal = 4;
  int n_generate = 2;
  int n_local = 2;
  int64_t d_local = 32;
  int n_local_heads = 4;
  int64_t t_max = 512;
  double rope_base = 10000.0;
  int64_t d_distill = 16;  // width of the stage-1 auxiliary decoder output
  VocabConfig vocab;

  int64_t text_head_width() const { return kNumSpecials + vocab.n_text; }
  int64_t local_vocab_width() const {
    return vocab.n_reason_per_book + vocab.n_recon_per_book;
  }
};

// Parameter groups: embed.* (stream tables), understand.*, crossmodal.*,
// generate.* (expert blocks), local.* (frame decoder incl. its heads),
// head.* (final norm + text head), distill.* (stage-1 auxiliary decoder).
ParamStore init_backbone(const BackboneConfig& cfg, uint64_t seed);

struct BackboneOut {
  Tensor fused;  // [T, d] masked-summation embeddings
  Tensor h_u;    // after understanding experts
  Tensor h_c;    // after cross-modal experts
  Tensor h_g;    // after generation experts
};

// Full forward over row `b` of the grid. Understanding and generation expert
// blocks apply only at audio positions via H' = H + M_aud * (f(H) - H);
// cross-modal blocks apply everywhere. Causal attention with document
// isolation and per-document rotary positions.
BackboneOut forward_backbone(Tape& tape, const BackboneConfig& cfg, const ParamStore& store,
                             const TokenGrid& grid, int64_t b = 0);

// Teacher-forced local decoding for every audio frame of row b, batched.
// Stream s logits are masked to the frame kind's book-s id range. The
// conditioning vector for the frame at position t is h_g row t-1.
struct LocalTeacher {
  std::vector<Tensor> stream_logprobs;            // 8 tensors [n_frames, local_width]
  std::vector<std::vector<int64_t>> stream_targets;  // [8][n_frames] local indices
  std::vector<int64_t> frame_positions;           // grid position of each frame
  std::vector<FrameKind> frame_kinds;
};
LocalTeacher local_teacher(Tape& tape, const BackboneConfig& cfg, const ParamStore& store,
                           Tensor h_g, const TokenGrid& grid, int64_t b = 0);

// Text-side teacher forcing: log-probs over [specials|text] for each
// predicted text position (predicting position t from h_g row t-1; t = 0 is
// never a target). PAD is masked out of the head.
struct TextTeacher {
  Tensor logprobs;                     // [n_pos, text_head_width]
  std::vector<int64_t> targets;        // global ids (< text_head_width)
  std::vector<int64_t> positions;      // predicted positions
};
TextTeacher text_teacher(Tape& tape, const BackboneConfig& cfg, const ParamStore& store,
                         Tensor h_g, const TokenGrid& grid, int64_t b = 0);

// Stage-1 auxiliary decoder D(h_u) at audio positions -> [n_audio, d_distill].
Tensor distill_decode(Tape& tape, const BackboneConfig& cfg, const ParamStore& store, Tensor h_u,
                      const std::vector<int64_t>& audio_positions);

// One-frame local decoding. `prefix_tokens` are the already-decoded global
// ids of streams < k. Teacher mode wants all 8 distributions; sample mode
// draws sequentially with temperature/top-k.
struct FrameSample {
  std::vector<int32_t> tokens;  // K global ids
};
struct SamplingPolicy {
  double temperature = 1.0;
  int top_k = 0;  // 0 keeps the full distribution
  int64_t max_new_positions = 64;
  int64_t n_reason_frames = 5;
  int64_t n_recon_frames = 13;
  uint64_t seed = 1;
};
FrameSample sample_frame(Tape& tape, const BackboneConfig& cfg, const ParamStore& store,
                         Tensor h_prev, FrameKind kind, const SamplingPolicy& policy, Rng& rng);

// Autoregressive continuation. Frame-kind scheduling is marker-driven: a
// sampled REASON_BEGIN opens n_reason_frames reasoning frames, then
// RECON_BEGIN and n_recon_frames reconstruction frames, then AUDIO_END, then
// text resumes. Stops at EOS or the position cap (flagged as truncated).
struct GenerateResult {
  TokenGrid grid;
  bool truncated = false;
};
GenerateResult generate(const BackboneConfig& cfg, const ParamStore& store,
                        const TokenGrid& prompt, const SamplingPolicy& policy);

// Sampling helper shared by text and frame paths: temperature + top-k draw
// from a log-prob row; temperature <= 1e-8 degenerates to argmax.
int64_t sample_from_logprobs(const std::vector<double>& logprobs, double temperature, int top_k,
                             Rng& rng);

}  // namespace aural
