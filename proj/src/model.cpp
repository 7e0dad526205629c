#include "aural/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aural {

namespace {

constexpr double kMaskValue = -1e30;

// Local index of a global audio id within its stream's joint
// [reason_book | recon_book] range.
int64_t local_index_of(const Vocabulary& vocab, FrameKind kind, int stream, int32_t id) {
  if (kind == FrameKind::reason_frame) return id - vocab.reason_begin(stream);
  return vocab.n_reason_per_book() + (id - vocab.recon_begin(stream));
}

int32_t global_id_of(const Vocabulary& vocab, FrameKind kind, int stream, int64_t local) {
  if (kind == FrameKind::reason_frame) {
    return vocab.reason_begin(stream) + static_cast<int32_t>(local);
  }
  return vocab.recon_begin(stream) +
         static_cast<int32_t>(local - vocab.n_reason_per_book());
}

// Additive legality bias for stream s under a frame kind: -1e30 outside the
// kind's half of the joint local range.
Array frame_kind_bias(const BackboneConfig& cfg, const std::vector<FrameKind>& kinds) {
  int64_t W = cfg.local_vocab_width();
  int64_t n = static_cast<int64_t>(kinds.size());
  int64_t split = cfg.vocab.n_reason_per_book;
  Array bias = Array::zeros({n, W});
  for (int64_t i = 0; i < n; ++i) {
    bool reason = kinds[i] == FrameKind::reason_frame;
    for (int64_t j = 0; j < W; ++j) {
      bool legal = reason ? (j < split) : (j >= split);
      bias.data[i * W + j] = legal ? 0.0 : kMaskValue;
    }
  }
  return bias;
}

}  // namespace

ParamStore init_backbone(const BackboneConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  ParamStore store;
  Vocabulary vocab(cfg.vocab);

  for (int s = 0; s < TokenGrid::S; ++s) {
    init_embedding(store, "embed.stream" + std::to_string(s), vocab.size(), cfg.d_model, rng);
  }
  for (int i = 0; i < cfg.n_understand; ++i) {
    init_transformer_block(store, "understand." + std::to_string(i), cfg.d_model, rng);
  }
  for (int i = 0; i < cfg.n_crossmodal; ++i) {
    init_transformer_block(store, "crossmodal." + std::to_string(i), cfg.d_model, rng);
  }
  for (int i = 0; i < cfg.n_generate; ++i) {
    init_transformer_block(store, "generate." + std::to_string(i), cfg.d_model, rng);
  }

  init_rmsnorm(store, "head.norm", cfg.d_model);
  init_linear(store, "head.text", cfg.d_model, cfg.text_head_width(), rng);

  const int K = cfg.vocab.n_books;
  init_rmsnorm(store, "local.norm", cfg.d_model);  // conditioning-row norm
  init_linear(store, "local.proj", cfg.d_model, cfg.d_local, rng);
  init_embedding(store, "local.kind_emb", 2, cfg.d_local, rng);
  init_embedding(store, "local.pos", K, cfg.d_local, rng);
  for (int s = 0; s + 1 < K; ++s) {
    init_embedding(store, "local.tok_emb" + std::to_string(s), cfg.local_vocab_width(),
                   cfg.d_local, rng);
  }
  for (int i = 0; i < cfg.n_local; ++i) {
    init_transformer_block(store, "local.blk" + std::to_string(i), cfg.d_local, rng);
  }
  init_rmsnorm(store, "local.ln_f", cfg.d_local);
  for (int s = 0; s < K; ++s) {
    init_linear(store, "local.head" + std::to_string(s), cfg.d_local, cfg.local_vocab_width(),
                rng);
  }

  init_linear(store, "distill.l1", cfg.d_model, cfg.d_model, rng);
  init_linear(store, "distill.l2", cfg.d_model, cfg.d_distill, rng);
  return store;
}

BackboneOut forward_backbone(Tape& tape, const BackboneConfig& cfg, const ParamStore& store,
                             const TokenGrid& grid, int64_t b) {
  if (grid.T > cfg.t_max) {
    throw std::invalid_argument("sequence length " + std::to_string(grid.T) +
                                " exceeds max context " + std::to_string(cfg.t_max));
  }
  std::vector<Tensor> tables;
  for (int s = 0; s < TokenGrid::S; ++s) {
    tables.push_back(store.tensor(tape, "embed.stream" + std::to_string(s)));
  }
  Tensor h = fuse_embeddings(tape, grid, tables, b);

  std::vector<int32_t> docs(grid.doc_id.begin() + b * grid.T,
                            grid.doc_id.begin() + (b + 1) * grid.T);
  Tensor bias = tape.constant(causal_bias(docs));
  RopeTables rope =
      make_rope_tables(tape, doc_positions(docs), cfg.d_model / cfg.n_heads, cfg.rope_base);

  Array aud = Array::zeros({grid.T, 1});
  for (int64_t t = 0; t < grid.T; ++t) aud.data[t] = grid.is_audio(b, t) ? 1.0 : 0.0;
  Tensor m_aud = tape.constant(std::move(aud));

  BackboneOut out;
  out.fused = h;
  for (int i = 0; i < cfg.n_understand; ++i) {
    Tensor f = transformer_block(tape, store, "understand." + std::to_string(i), h, cfg.n_heads,
                                 bias, &rope);
    h = tape.masked_select_add(h, f, m_aud);
  }
  out.h_u = h;
  for (int i = 0; i < cfg.n_crossmodal; ++i) {
    h = transformer_block(tape, store, "crossmodal." + std::to_string(i), h, cfg.n_heads, bias,
                          &rope);
  }
  out.h_c = h;
  for (int i = 0; i < cfg.n_generate; ++i) {
    Tensor f = transformer_block(tape, store, "generate." + std::to_string(i), h, cfg.n_heads,
                                 bias, &rope);
    h = tape.masked_select_add(h, f, m_aud);
  }
  out.h_g = h;
  return out;
}

namespace {

// Shared local-decoder trunk: conditioning rows [N, d_local] plus teacher
// tokens for input slots 1..K-1 -> normalized hidden states [N, K, d_local].
Tensor local_trunk(Tape& tape, const BackboneConfig& cfg, const ParamStore& store, Tensor cond,
                   const std::vector<std::vector<int64_t>>& slot_tokens, int64_t n) {
  const int K = cfg.vocab.n_books;
  std::vector<Tensor> seq;
  seq.push_back(tape.reshape(cond, {n, 1, cfg.d_local}));
  for (int j = 1; j < K; ++j) {
    seq.push_back(tape.embedding(store.tensor(tape, "local.tok_emb" + std::to_string(j - 1)),
                                 slot_tokens[j - 1], {n, 1}));
  }
  Tensor x = tape.concat(seq, 1);
  std::vector<int64_t> pos_ids(K);
  for (int j = 0; j < K; ++j) pos_ids[j] = j;
  x = tape.add(x, tape.embedding(store.tensor(tape, "local.pos"), pos_ids, {1, K}));

  std::vector<int32_t> one_doc(K, 0);
  Tensor bias = tape.constant(causal_bias(one_doc));
  for (int i = 0; i < cfg.n_local; ++i) {
    x = transformer_block(tape, store, "local.blk" + std::to_string(i), x, cfg.n_local_heads,
                          bias);
  }
  return rmsnorm(tape, store, "local.ln_f", x);
}

Tensor conditioning_rows(Tape& tape, const BackboneConfig&, const ParamStore& store,
                         Tensor h_g, const std::vector<int64_t>& cond_positions,
                         const std::vector<FrameKind>& kinds) {
  Tensor rows = tape.embedding(h_g, cond_positions);
  rows = rmsnorm(tape, store, "local.norm", rows);
  Tensor cond = linear(tape, store, "local.proj", rows);
  std::vector<int64_t> kind_ids(kinds.size());
  for (size_t i = 0; i < kinds.size(); ++i) {
    kind_ids[i] = kinds[i] == FrameKind::reason_frame ? 0 : 1;
  }
  return tape.add(cond, tape.embedding(store.tensor(tape, "local.kind_emb"), kind_ids));
}

}  // namespace

LocalTeacher local_teacher(Tape& tape, const BackboneConfig& cfg, const ParamStore& store,
                           Tensor h_g, const TokenGrid& grid, int64_t b) {
  Vocabulary vocab(cfg.vocab);
  const int K = cfg.vocab.n_books;
  LocalTeacher out;
  for (int64_t t = 0; t < grid.T; ++t) {
    if (!grid.is_audio(b, t)) continue;
    if (t == 0) {
      throw std::invalid_argument("audio frame at position 0 has no conditioning context");
    }
    out.frame_positions.push_back(t);
    out.frame_kinds.push_back(grid.kind(b, t));
  }
  int64_t n = static_cast<int64_t>(out.frame_positions.size());
  if (n == 0) return out;

  std::vector<int64_t> cond_pos(n);
  for (int64_t i = 0; i < n; ++i) cond_pos[i] = out.frame_positions[i] - 1;
  Tensor cond = conditioning_rows(tape, cfg, store, h_g, cond_pos, out.frame_kinds);

  // Teacher inputs: local indices of streams 0..K-2; targets for all streams.
  std::vector<std::vector<int64_t>> slot_tokens(K - 1, std::vector<int64_t>(n));
  out.stream_targets.assign(K, std::vector<int64_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    int64_t t = out.frame_positions[i];
    FrameKind kind = out.frame_kinds[i];
    for (int s = 0; s < K; ++s) {
      int64_t local = local_index_of(vocab, kind, s, grid.tok(b, t, s));
      out.stream_targets[s][i] = local;
      if (s + 1 < K) slot_tokens[s][i] = local;
    }
  }

  Tensor hidden = local_trunk(tape, cfg, store, cond, slot_tokens, n);
  Tensor kind_bias = tape.constant(frame_kind_bias(cfg, out.frame_kinds));
  for (int s = 0; s < K; ++s) {
    Tensor slot = tape.slice(hidden, 1, s, s + 1);
    Tensor logits = linear(tape, store, "local.head" + std::to_string(s), slot);
    logits = tape.reshape(logits, {n, cfg.local_vocab_width()});
    logits = tape.add(logits, kind_bias);
    out.stream_logprobs.push_back(tape.log_softmax(logits));
  }
  return out;
}

TextTeacher text_teacher(Tape& tape, const BackboneConfig& cfg, const ParamStore& store,
                         Tensor h_g, const TokenGrid& grid, int64_t b) {
  TextTeacher out;
  for (int64_t t = 1; t < grid.T; ++t) {
    if (grid.kind(b, t) != FrameKind::text) continue;
    int32_t id = grid.tok(b, t, TokenGrid::S - 1);
    if (id == PAD) continue;
    // Predicting across a document boundary is meaningless.
    if (grid.doc_id[b * grid.T + t] != grid.doc_id[b * grid.T + t - 1]) continue;
    out.positions.push_back(t);
    out.targets.push_back(id);
  }
  if (out.positions.empty()) return out;

  std::vector<int64_t> cond_pos(out.positions.size());
  for (size_t i = 0; i < out.positions.size(); ++i) cond_pos[i] = out.positions[i] - 1;
  Tensor rows = tape.embedding(h_g, cond_pos);
  rows = rmsnorm(tape, store, "head.norm", rows);
  Tensor logits = linear(tape, store, "head.text", rows);
  // PAD is never a legal prediction.
  Array pad_mask = Array::zeros({1, cfg.text_head_width()});
  pad_mask.data[PAD] = kMaskValue;
  logits = tape.add(logits, tape.constant(std::move(pad_mask)));
  out.logprobs = tape.log_softmax(logits);
  return out;
}

Tensor distill_decode(Tape& tape, const BackboneConfig& cfg, const ParamStore& store, Tensor h_u,
                      const std::vector<int64_t>& audio_positions) {
  (void)cfg;
  Tensor rows = tape.embedding(h_u, audio_positions);
  Tensor h = tape.gelu(linear(tape, store, "distill.l1", rows));
  return linear(tape, store, "distill.l2", h);
}

int64_t sample_from_logprobs(const std::vector<double>& logprobs, double temperature, int top_k,
                             Rng& rng) {
  int64_t n = static_cast<int64_t>(logprobs.size());
  if (temperature <= 1e-8) {
    int64_t best = 0;
    for (int64_t i = 1; i < n; ++i) {
      if (logprobs[i] > logprobs[best]) best = i;
    }
    return best;
  }
  std::vector<std::pair<double, int64_t>> scored(n);
  for (int64_t i = 0; i < n; ++i) scored[i] = {logprobs[i] / temperature, i};
  if (top_k > 0 && top_k < n) {
    std::partial_sort(scored.begin(), scored.begin() + top_k, scored.end(),
                      [](const auto& a, const auto& b) {
                        return a.first != b.first ? a.first > b.first : a.second < b.second;
                      });
    scored.resize(top_k);
  }
  double mx = scored[0].first;
  for (const auto& [v, i] : scored) mx = std::max(mx, v);
  double sum = 0.0;
  std::vector<double> probs(scored.size());
  for (size_t i = 0; i < scored.size(); ++i) {
    probs[i] = std::exp(scored[i].first - mx);
    sum += probs[i];
  }
  double u = rng.uniform() * sum;
  double acc = 0.0;
  for (size_t i = 0; i < scored.size(); ++i) {
    acc += probs[i];
    if (u < acc) return scored[i].second;
  }
  return scored.back().second;
}

FrameSample sample_frame(Tape& tape, const BackboneConfig& cfg, const ParamStore& store,
                         Tensor h_prev, FrameKind kind, const SamplingPolicy& policy, Rng& rng) {
  Vocabulary vocab(cfg.vocab);
  const int K = cfg.vocab.n_books;
  FrameSample out;
  std::vector<int64_t> locals;
  Tensor cond = conditioning_rows(tape, cfg, store, h_prev, {0}, {kind});

  for (int s = 0; s < K; ++s) {
    // Rebuild the length-8 window with the tokens decoded so far (remaining
    // slots hold index 0; causal attention keeps them invisible).
    std::vector<std::vector<int64_t>> slots(K - 1, std::vector<int64_t>(1, 0));
    for (size_t j = 0; j < locals.size() && j + 1 < static_cast<size_t>(K); ++j) {
      slots[j][0] = locals[j];
    }
    Tensor hidden = local_trunk(tape, cfg, store, cond, slots, 1);
    Tensor slot = tape.slice(hidden, 1, s, s + 1);
    Tensor logits = linear(tape, store, "local.head" + std::to_string(s), slot);
    logits = tape.reshape(logits, {1, cfg.local_vocab_width()});
    logits = tape.add(logits, tape.constant(frame_kind_bias(cfg, {kind})));
    Tensor lp = tape.log_softmax(logits);
    int64_t local = sample_from_logprobs(lp.value().data, policy.temperature, policy.top_k, rng);
    locals.push_back(local);
    out.tokens.push_back(global_id_of(vocab, kind, s, local));
  }
  return out;
}

GenerateResult generate(const BackboneConfig& cfg, const ParamStore& store,
                        const TokenGrid& prompt, const SamplingPolicy& policy) {
  Vocabulary vocab(cfg.vocab);
  GenerateResult res;
  res.grid = prompt;
  Rng rng(policy.seed);

  // Resume an audio schedule left open by the prompt: replay its markers and
  // frames through the same state machine generation uses.
  int64_t pending_reason = 0, pending_recon = 0;
  for (int64_t t = 0; t < prompt.T; ++t) {
    FrameKind fk = prompt.kind(0, t);
    if (fk == FrameKind::text) {
      int32_t id = prompt.tok(0, t, TokenGrid::S - 1);
      if (id == REASON_BEGIN) {
        pending_reason = policy.n_reason_frames;
        pending_recon = 0;
      } else if (id == RECON_BEGIN) {
        pending_reason = 0;
        pending_recon = policy.n_recon_frames;
      } else if (id == AUDIO_END) {
        pending_reason = pending_recon = 0;
      }
    } else if (fk == FrameKind::reason_frame && pending_reason > 0) {
      --pending_reason;
    } else if (fk == FrameKind::recon_frame && pending_recon > 0) {
      --pending_recon;
    }
  }

  auto push_text = [&](int32_t id) {
    std::vector<int32_t> slots(TokenGrid::S, PAD);
    slots[TokenGrid::S - 1] = id;
    res.grid.append_position(FrameKind::text, slots);
  };

  int64_t steps = 0;
  bool ended = false;
  while (steps < policy.max_new_positions) {
    if (res.grid.T >= cfg.t_max) break;
    ++steps;
    Tape tape(Dtype::f32, /*check_finite=*/false);
    BackboneOut fw = forward_backbone(tape, cfg, store, res.grid);
    Tensor last = tape.slice(fw.h_g, 0, res.grid.T - 1, res.grid.T);

    if (pending_reason > 0 || pending_recon > 0) {
      FrameKind kind = pending_reason > 0 ? FrameKind::reason_frame : FrameKind::recon_frame;
      FrameSample frame = sample_frame(tape, cfg, store, last, kind, policy, rng);
      std::vector<int32_t> slots(TokenGrid::S, PAD);
      for (int s = 0; s < cfg.vocab.n_books; ++s) slots[s] = frame.tokens[s];
      res.grid.append_position(kind, slots);
      if (pending_reason > 0) {
        if (--pending_reason == 0) {
          push_text(RECON_BEGIN);
          pending_recon = policy.n_recon_frames;
        }
      } else if (--pending_recon == 0) {
        push_text(AUDIO_END);
      }
      continue;
    }

    Tensor rows = rmsnorm(tape, store, "head.norm", last);
    Tensor logits = linear(tape, store, "head.text", rows);
    Array pad_mask = Array::zeros({1, cfg.text_head_width()});
    pad_mask.data[PAD] = kMaskValue;
    logits = tape.add(logits, tape.constant(std::move(pad_mask)));
    Tensor lp = tape.log_softmax(logits);
    int64_t id = sample_from_logprobs(lp.value().data, policy.temperature, policy.top_k, rng);
    push_text(static_cast<int32_t>(id));
    if (id == EOS) {
      ended = true;
      break;
    }
    if (id == REASON_BEGIN) {
      pending_reason = policy.n_reason_frames;
    } else if (id == RECON_BEGIN) {
      pending_recon = policy.n_recon_frames;
    }
  }
  res.truncated = !ended;
  (void)vocab;
  return res;
}

}  // namespace aural
