#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "aural/rng.hpp"
#include "aural/tape.hpp"

namespace aural {

// Named parameter arrays. A parameter's group is its name prefix up to the
// first '.'; stage freezing flips trainability per group, and frozen
// parameters enter tapes with requires_grad off so they can never move.
struct ParamStore {
  std::map<std::string, Array> params;
  std::set<std::string> trainable_groups;

  static std::string group_of(const std::string& name) {
    return name.substr(0, name.find('.'));
  }
  bool is_trainable(const std::string& name) const {
    return trainable_groups.count(group_of(name)) != 0;
  }
  void add(const std::string& name, Array a) {
    a.name = name;
    params[name] = std::move(a);
  }
  Array& at(const std::string& name);
  const Array& at(const std::string& name) const;
  bool has(const std::string& name) const { return params.count(name) != 0; }

  // All parameters whose name starts with `prefix`.
  std::map<std::string, Array> snapshot(const std::string& prefix = "") const;

  // Tape leaf for a parameter; requires_grad follows group trainability.
  Tensor tensor(Tape& tape, const std::string& name) const;

  int64_t numel() const;
};

// Parameter initializers (deterministic via the provided generator).
void init_linear(ParamStore& store, const std::string& name, int64_t in, int64_t out, Rng& rng,
                 double scale = 0.02, bool bias = true);
void init_embedding(ParamStore& store, const std::string& name, int64_t vocab, int64_t dim,
                    Rng& rng, double scale = 0.02);
void init_rmsnorm(ParamStore& store, const std::string& name, int64_t dim);

// y = x W + b  (x rank 2 or 3; W [in, out]).
Tensor linear(Tape& tape, const ParamStore& store, const std::string& name, Tensor x);

// RMS normalization followed by a learned per-channel gain.
Tensor rmsnorm(Tape& tape, const ParamStore& store, const std::string& name, Tensor x,
               double eps = 1e-6);

// Rotary tables for explicit positions (one row per sequence slot).
struct RopeTables {
  Tensor cos;  // [T, head_dim]
  Tensor sin;  // [T, head_dim]
};
RopeTables make_rope_tables(Tape& tape, const std::vector<int64_t>& positions, int64_t head_dim,
                            double base);

// Multi-head attention. Rank-2 input [T, d] attends over the sequence with
// `attn_bias` [T, T]; rank-3 input [N, K, d] attends within each window with
// `attn_bias` [K, K]. Rotary tables apply to q/k when provided (rank-2 only).
Tensor multihead_attention(Tape& tape, const ParamStore& store, const std::string& prefix,
                           Tensor x, int n_heads, Tensor attn_bias,
                           const RopeTables* rope = nullptr);

// Pre-norm transformer block: x + attn(norm(x)) then + mlp(norm(.)).
Tensor transformer_block(Tape& tape, const ParamStore& store, const std::string& prefix, Tensor x,
                         int n_heads, Tensor attn_bias, const RopeTables* rope = nullptr);

// Cross attention: queries [M, d] attend over keys/values [T, d] with no
// positional restriction (bias defaults to all-zero).
Tensor multihead_cross_attention(Tape& tape, const ParamStore& store, const std::string& prefix,
                                 Tensor queries, Tensor kv, int n_heads);

// Pre-norm cross-attention block: q + xattn(norm(q), kv) then + mlp(norm(.)).
Tensor cross_attention_block(Tape& tape, const ParamStore& store, const std::string& prefix,
                             Tensor queries, Tensor kv, int n_heads);
void init_cross_attention_block(ParamStore& store, const std::string& prefix, int64_t d,
                                Rng& rng);

void init_attention(ParamStore& store, const std::string& prefix, int64_t d, Rng& rng);
void init_transformer_block(ParamStore& store, const std::string& prefix, int64_t d, Rng& rng);

// Additive causal attention bias with document isolation: position i may
// attend to j iff j <= i and doc[i] == doc[j]; blocked entries get -1e30.
Array causal_bias(const std::vector<int32_t>& doc_ids);

// Per-document positions (restart from 0 at each document boundary).
std::vector<int64_t> doc_positions(const std::vector<int32_t>& doc_ids);

}  // namespace aural
