#include "aural/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace aural {

Array& ParamStore::at(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return it->second;
}

const Array& ParamStore::at(const std::string& name) const {
  return const_cast<ParamStore*>(this)->at(name);
}

std::map<std::string, Array> ParamStore::snapshot(const std::string& prefix) const {
  std::map<std::string, Array> out;
  for (const auto& [name, arr] : params) {
    if (name.rfind(prefix, 0) == 0) out[name] = arr;
  }
  return out;
}

Tensor ParamStore::tensor(Tape& tape, const std::string& name) const {
  Array a = at(name);
  a.name = name;
  a.requires_grad = is_trainable(name);
  return tape.leaf(std::move(a));
}

int64_t ParamStore::numel() const {
  int64_t n = 0;
  for (const auto& [name, arr] : params) n += arr.numel();
  return n;
}

void init_linear(ParamStore& store, const std::string& name, int64_t in, int64_t out, Rng& rng,
                 double scale, bool bias) {
  Array w = Array::zeros({in, out});
  for (auto& v : w.data) v = rng.normal() * scale;
  store.add(name + ".w", std::move(w));
  if (bias) store.add(name + ".b", Array::zeros({out}));
}

void init_embedding(ParamStore& store, const std::string& name, int64_t vocab, int64_t dim,
                    Rng& rng, double scale) {
  Array w = Array::zeros({vocab, dim});
  for (auto& v : w.data) v = rng.normal() * scale;
  store.add(name, std::move(w));
}

void init_rmsnorm(ParamStore& store, const std::string& name, int64_t dim) {
  store.add(name + ".g", Array::full({dim}, 1.0));
}

Tensor linear(Tape& tape, const ParamStore& store, const std::string& name, Tensor x) {
  Tensor w = store.tensor(tape, name + ".w");
  Tensor y = tape.matmul(x, w);
  if (store.has(name + ".b")) y = tape.add(y, store.tensor(tape, name + ".b"));
  return y;
}

Tensor rmsnorm(Tape& tape, const ParamStore& store, const std::string& name, Tensor x,
               double eps) {
  return tape.mul(tape.rms_normalize(x, eps), store.tensor(tape, name + ".g"));
}

RopeTables make_rope_tables(Tape& tape, const std::vector<int64_t>& positions, int64_t head_dim,
                            double base) {
  if (head_dim % 2 != 0) throw std::invalid_argument("rotary head_dim must be even");
  int64_t T = static_cast<int64_t>(positions.size());
  int64_t half = head_dim / 2;
  Array cos = Array::zeros({T, head_dim});
  Array sin = Array::zeros({T, head_dim});
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t i = 0; i < half; ++i) {
      double freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
      double ang = static_cast<double>(positions[t]) * freq;
      double c = std::cos(ang), s = std::sin(ang);
      cos.data[t * head_dim + i] = c;
      cos.data[t * head_dim + half + i] = c;
      sin.data[t * head_dim + i] = s;
      sin.data[t * head_dim + half + i] = s;
    }
  }
  return {tape.constant(std::move(cos)), tape.constant(std::move(sin))};
}

namespace {

// x [T, hd]: x*cos + rotate_half(x)*sin with rotate_half = [-x2, x1].
Tensor apply_rope(Tape& tape, Tensor x, const RopeTables& rope) {
  int64_t hd = x.shape().back();
  Tensor x1 = tape.slice(x, 1, 0, hd / 2);
  Tensor x2 = tape.slice(x, 1, hd / 2, hd);
  Tensor rot = tape.concat({tape.mul_scalar(x2, -1.0), x1}, 1);
  return tape.add(tape.mul(x, rope.cos), tape.mul(rot, rope.sin));
}

}  // namespace

void init_attention(ParamStore& store, const std::string& prefix, int64_t d, Rng& rng) {
  init_linear(store, prefix + ".wq", d, d, rng, 0.02, false);
  init_linear(store, prefix + ".wk", d, d, rng, 0.02, false);
  init_linear(store, prefix + ".wv", d, d, rng, 0.02, false);
  init_linear(store, prefix + ".wo", d, d, rng, 0.02, false);
}

void init_transformer_block(ParamStore& store, const std::string& prefix, int64_t d, Rng& rng) {
  init_rmsnorm(store, prefix + ".ln1", d);
  init_attention(store, prefix + ".attn", d, rng);
  init_rmsnorm(store, prefix + ".ln2", d);
  init_linear(store, prefix + ".mlp.w1", d, 4 * d, rng, 0.02, false);
  init_linear(store, prefix + ".mlp.w2", 4 * d, d, rng, 0.02, false);
}

Tensor multihead_attention(Tape& tape, const ParamStore& store, const std::string& prefix,
                           Tensor x, int n_heads, Tensor attn_bias, const RopeTables* rope) {
  int64_t rank = x.value().rank();
  if (rank != 2 && rank != 3) {
    throw std::invalid_argument("attention input must be rank 2 or 3, got " +
                                shape_str(x.shape()));
  }
  int64_t d = x.shape().back();
  if (d % n_heads != 0) throw std::invalid_argument("d_model must divide by n_heads");
  int64_t hd = d / n_heads;
  int ax = rank == 2 ? 1 : 2;
  double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor q = linear(tape, store, prefix + ".wq", x);
  Tensor k = linear(tape, store, prefix + ".wk", x);
  Tensor v = linear(tape, store, prefix + ".wv", x);

  std::vector<Tensor> ctx;
  ctx.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    Tensor qh = tape.slice(q, ax, h * hd, (h + 1) * hd);
    Tensor kh = tape.slice(k, ax, h * hd, (h + 1) * hd);
    Tensor vh = tape.slice(v, ax, h * hd, (h + 1) * hd);
    if (rope != nullptr) {
      if (rank != 2) throw std::invalid_argument("rotary tables only apply to rank-2 attention");
      qh = apply_rope(tape, qh, *rope);
      kh = apply_rope(tape, kh, *rope);
    }
    Tensor scores = tape.mul_scalar(tape.matmul(qh, kh, false, true), scale);
    scores = tape.add(scores, attn_bias);
    Tensor probs = tape.softmax(scores);
    ctx.push_back(tape.matmul(probs, vh));
  }
  Tensor merged = tape.concat(ctx, ax);
  return linear(tape, store, prefix + ".wo", merged);
}

Tensor transformer_block(Tape& tape, const ParamStore& store, const std::string& prefix, Tensor x,
                         int n_heads, Tensor attn_bias, const RopeTables* rope) {
  Tensor h = tape.add(
      x, multihead_attention(tape, store, prefix + ".attn",
                             rmsnorm(tape, store, prefix + ".ln1", x), n_heads, attn_bias, rope));
  Tensor m = rmsnorm(tape, store, prefix + ".ln2", h);
  m = linear(tape, store, prefix + ".mlp.w1", m);
  m = tape.gelu(m);
  m = linear(tape, store, prefix + ".mlp.w2", m);
  return tape.add(h, m);
}

Tensor multihead_cross_attention(Tape& tape, const ParamStore& store, const std::string& prefix,
                                 Tensor queries, Tensor kv, int n_heads) {
  int64_t d = queries.shape().back();
  if (d % n_heads != 0) throw std::invalid_argument("d_model must divide by n_heads");
  int64_t hd = d / n_heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor q = linear(tape, store, prefix + ".wq", queries);
  Tensor k = linear(tape, store, prefix + ".wk", kv);
  Tensor v = linear(tape, store, prefix + ".wv", kv);
  std::vector<Tensor> ctx;
  ctx.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    Tensor qh = tape.slice(q, 1, h * hd, (h + 1) * hd);
    Tensor kh = tape.slice(k, 1, h * hd, (h + 1) * hd);
    Tensor vh = tape.slice(v, 1, h * hd, (h + 1) * hd);
    Tensor probs = tape.softmax(tape.mul_scalar(tape.matmul(qh, kh, false, true), scale));
    ctx.push_back(tape.matmul(probs, vh));
  }
  return linear(tape, store, prefix + ".wo", tape.concat(ctx, 1));
}

void init_cross_attention_block(ParamStore& store, const std::string& prefix, int64_t d,
                                Rng& rng) {
  init_rmsnorm(store, prefix + ".ln1", d);
  init_attention(store, prefix + ".xattn", d, rng);
  init_rmsnorm(store, prefix + ".ln2", d);
  init_linear(store, prefix + ".mlp.w1", d, 4 * d, rng, 0.02, false);
  init_linear(store, prefix + ".mlp.w2", 4 * d, d, rng, 0.02, false);
}

Tensor cross_attention_block(Tape& tape, const ParamStore& store, const std::string& prefix,
                             Tensor queries, Tensor kv, int n_heads) {
  Tensor h = tape.add(queries,
                      multihead_cross_attention(tape, store, prefix + ".xattn",
                                                rmsnorm(tape, store, prefix + ".ln1", queries),
                                                kv, n_heads));
  Tensor m = rmsnorm(tape, store, prefix + ".ln2", h);
  m = linear(tape, store, prefix + ".mlp.w1", m);
  m = tape.gelu(m);
  m = linear(tape, store, prefix + ".mlp.w2", m);
  return tape.add(h, m);
}

Array causal_bias(const std::vector<int32_t>& doc_ids) {
  int64_t T = static_cast<int64_t>(doc_ids.size());
  Array bias = Array::zeros({T, T});
  for (int64_t i = 0; i < T; ++i) {
    for (int64_t j = 0; j < T; ++j) {
      bool visible = j <= i && doc_ids[i] == doc_ids[j];
      bias.data[i * T + j] = visible ? 0.0 : -1e30;
    }
  }
  return bias;
}

std::vector<int64_t> doc_positions(const std::vector<int32_t>& doc_ids) {
  std::vector<int64_t> pos(doc_ids.size());
  int64_t p = 0;
  for (size_t t = 0; t < doc_ids.size(); ++t) {
    if (t > 0 && doc_ids[t] != doc_ids[t - 1]) p = 0;
    pos[t] = p++;
  }
  return pos;
}

}  // namespace aural
