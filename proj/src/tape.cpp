#include "aural/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aural {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Iterate a broadcast elementwise op: out[i] = f(a[ia], b[ib]) with
// right-aligned index mapping (size-1 dims repeat).
template <typename F>
void broadcast_binary(const Array& a, const Array& b, Array& out, F&& f) {
  const auto& os = out.shape;
  auto ost = strides_of(os);
  auto map_index = [&](const Array& x, int64_t flat) {
    int64_t off = 0, stride = 1;
    int64_t xr = x.rank(), orank = out.rank();
    for (int64_t i = orank - 1; i >= 0; --i) {
      int64_t oi = (flat / ost[i]) % os[i];
      int64_t xi = i - (orank - xr);
      if (xi >= 0) {
        int64_t d = x.shape[xi];
        off += (d == 1 ? 0 : oi) * stride;
        stride *= d;
      }
    }
    return off;
  };
  int64_t n = out.numel();
  // Fast path: identical shapes.
  if (a.shape == os && b.shape == os) {
    for (int64_t i = 0; i < n; ++i) out.data[i] = f(a.data[i], b.data[i]);
    return;
  }
  if (a.numel() == 1 && b.shape == os) {
    for (int64_t i = 0; i < n; ++i) out.data[i] = f(a.data[0], b.data[i]);
    return;
  }
  if (b.numel() == 1 && a.shape == os) {
    for (int64_t i = 0; i < n; ++i) out.data[i] = f(a.data[i], b.data[0]);
    return;
  }
  for (int64_t i = 0; i < n; ++i) {
    out.data[i] = f(a.data[map_index(a, i)], b.data[map_index(b, i)]);
  }
}

// Sum `grad` (shaped like `out_shape`) down to `target_shape` by reducing the
// broadcast dimensions. Inverse of the broadcast above.
Array reduce_to_shape(const Array& grad, const std::vector<int64_t>& target_shape) {
  if (grad.shape == target_shape) return grad;
  Array out = Array::zeros(target_shape);
  const auto& gs = grad.shape;
  auto gst = strides_of(gs);
  auto tst = strides_of(target_shape);
  int64_t grank = grad.rank(), trank = static_cast<int64_t>(target_shape.size());
  for (int64_t i = 0, n = grad.numel(); i < n; ++i) {
    int64_t off = 0;
    for (int64_t d = grank - 1; d >= 0; --d) {
      int64_t gi = (i / gst[d]) % gs[d];
      int64_t td = d - (grank - trank);
      if (td >= 0) off += (target_shape[td] == 1 ? 0 : gi) * tst[td];
    }
    out.data[off] += grad.data[i];
  }
  return out;
}

struct MatmulDims {
  int64_t batch, m, k, n;
  bool batched_a, batched_b;
};

MatmulDims matmul_dims(const Array& a, const Array& b, bool ta, bool tb) {
  auto rank_err = [&](const char* which) {
    throw std::invalid_argument(std::string("matmul: ") + which + " must be rank 2 or 3, got " +
                                shape_str(a.shape) + " x " + shape_str(b.shape));
  };
  if (a.rank() != 2 && a.rank() != 3) rank_err("lhs");
  if (b.rank() != 2 && b.rank() != 3) rank_err("rhs");
  MatmulDims d{};
  d.batched_a = a.rank() == 3;
  d.batched_b = b.rank() == 3;
  int64_t am = a.shape[a.rank() - 2], ak = a.shape[a.rank() - 1];
  if (ta) std::swap(am, ak);
  int64_t bk = b.shape[b.rank() - 2], bn = b.shape[b.rank() - 1];
  if (tb) std::swap(bk, bn);
  if (ak != bk) {
    throw std::invalid_argument("matmul: inner dims differ, " + shape_str(a.shape) + " x " +
                                shape_str(b.shape) + (ta ? " (lhs transposed)" : "") +
                                (tb ? " (rhs transposed)" : ""));
  }
  d.m = am;
  d.k = ak;
  d.n = bn;
  d.batch = 1;
  if (d.batched_a && d.batched_b) {
    if (a.shape[0] != b.shape[0]) {
      throw std::invalid_argument("matmul: batch dims differ, " + shape_str(a.shape) + " x " +
                                  shape_str(b.shape));
    }
    d.batch = a.shape[0];
  } else if (d.batched_a || d.batched_b) {
    d.batch = d.batched_a ? a.shape[0] : b.shape[0];
  }
  return d;
}

// C[bi] (m x n) += A_slice (m x k, maybe transposed) * B_slice (k x n, maybe
// transposed). Plain ikj loops; k-major accumulation is deterministic.
void gemm_slice(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
                bool ta, bool tb) {
  for (int64_t i = 0; i < m; ++i) {
    double* crow = C + i * n;
    for (int64_t p = 0; p < k; ++p) {
      double av = ta ? A[p * m + i] : A[i * k + p];
      if (av == 0.0) continue;
      if (!tb) {
        const double* brow = B + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (int64_t j = 0; j < n; ++j) crow[j] += av * B[j * k + p];
      }
    }
  }
}

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_grad(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

OpKind kind_from_string(std::string_view s) {
  if (s == "matmul") return OpKind::matmul;
  if (s == "add") return OpKind::add;
  if (s == "mul") return OpKind::mul;
  if (s == "embedding-lookup") return OpKind::embedding_lookup;
  if (s == "softmax") return OpKind::softmax;
  if (s == "log-softmax") return OpKind::log_softmax;
  if (s == "rms-normalize") return OpKind::rms_normalize;
  if (s == "gelu") return OpKind::gelu;
  if (s == "masked-select-add") return OpKind::masked_select_add;
  if (s == "slice") return OpKind::slice;
  if (s == "concat") return OpKind::concat;
  if (s == "mean") return OpKind::mean;
  if (s == "sum-of-squares") return OpKind::sum_of_squares;
  throw std::invalid_argument("forward_op: unknown op kind '" + std::string(s) + "'");
}

}  // namespace

const Array& Tensor::value() const { return tape->value(*this); }

Tensor Tape::push(Node n) {
  if (dtype_ == Dtype::f32) round_f32_inplace(n.value.data);
  if (check_finite_ && n.kind != OpKind::leaf) {
    for (double v : n.value.data) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("non-finite value produced by op on tape");
      }
    }
  }
  nodes_.push_back(std::move(n));
  return Tensor{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::leaf(Array a) {
  Node n;
  n.kind = OpKind::leaf;
  n.requires_grad = a.requires_grad;
  n.value = std::move(a);
  return push(std::move(n));
}

Tensor Tape::constant(Array a) {
  a.requires_grad = false;
  return leaf(std::move(a));
}

void Tape::check_owned(const std::vector<Tensor>& ts) const {
  for (const Tensor& t : ts) {
    if (t.tape != this || t.id < 0 || t.id >= static_cast<int>(nodes_.size())) {
      throw std::invalid_argument("tensor does not belong to this tape");
    }
  }
}

const Array& Tape::value(Tensor t) const { return nodes_[t.id].value; }

Tensor Tape::forward_op(std::string_view kind, const std::vector<Tensor>& inputs, Attrs attrs) {
  return apply(kind_from_string(kind), inputs, std::move(attrs));
}

Tensor Tape::matmul(Tensor a, Tensor b, bool ta, bool tb) {
  Attrs at;
  at.transpose_a = ta;
  at.transpose_b = tb;
  return apply(OpKind::matmul, {a, b}, at);
}
Tensor Tape::add(Tensor a, Tensor b) { return apply(OpKind::add, {a, b}, {}); }
Tensor Tape::mul(Tensor a, Tensor b) { return apply(OpKind::mul, {a, b}, {}); }
Tensor Tape::embedding(Tensor table, std::vector<int64_t> ids, std::vector<int64_t> ids_shape) {
  Attrs at;
  if (ids_shape.empty()) ids_shape = {static_cast<int64_t>(ids.size())};
  at.ids = std::move(ids);
  at.ids_shape = std::move(ids_shape);
  return apply(OpKind::embedding_lookup, {table}, at);
}
Tensor Tape::softmax(Tensor x) { return apply(OpKind::softmax, {x}, {}); }
Tensor Tape::log_softmax(Tensor x) { return apply(OpKind::log_softmax, {x}, {}); }
Tensor Tape::rms_normalize(Tensor x, double eps) {
  Attrs at;
  at.eps = eps;
  return apply(OpKind::rms_normalize, {x}, at);
}
Tensor Tape::gelu(Tensor x) { return apply(OpKind::gelu, {x}, {}); }
Tensor Tape::masked_select_add(Tensor a, Tensor b, Tensor mask) {
  return apply(OpKind::masked_select_add, {a, b, mask}, {});
}
Tensor Tape::slice(Tensor x, int axis, int64_t start, int64_t end) {
  Attrs at;
  at.axis = axis;
  at.start = start;
  at.end = end;
  return apply(OpKind::slice, {x}, at);
}
Tensor Tape::concat(const std::vector<Tensor>& xs, int axis) {
  Attrs at;
  at.axis = axis;
  return apply(OpKind::concat, xs, at);
}
Tensor Tape::mean(Tensor x) { return apply(OpKind::mean, {x}, {}); }
Tensor Tape::sum_of_squares(Tensor x) { return apply(OpKind::sum_of_squares, {x}, {}); }

Tensor Tape::reshape(Tensor x, std::vector<int64_t> new_shape) {
  check_owned({x});
  const Array& v = value(x);
  int64_t n = 1;
  for (int64_t d : new_shape) n *= d;
  if (n != v.numel()) {
    throw std::invalid_argument("reshape: numel mismatch " + shape_str(v.shape) + " -> " +
                                shape_str(new_shape));
  }
  Node node;
  node.kind = OpKind::reshape;
  node.parents = {x.id};
  node.requires_grad = nodes_[x.id].requires_grad;
  node.value = v;
  node.value.shape = std::move(new_shape);
  node.value.requires_grad = node.requires_grad;
  node.value.name.clear();
  return push(std::move(node));
}

Tensor Tape::apply(OpKind kind, const std::vector<Tensor>& inputs, Attrs attrs) {
  check_owned(inputs);
  Node node;
  node.kind = kind;
  node.attrs = std::move(attrs);
  node.parents.reserve(inputs.size());
  for (const Tensor& t : inputs) node.parents.push_back(t.id);
  for (const Tensor& t : inputs) node.requires_grad |= nodes_[t.id].requires_grad;

  auto arity = [&](size_t want, const char* name) {
    if (inputs.size() != want) {
      throw std::invalid_argument(std::string(name) + ": expected " + std::to_string(want) +
                                  " inputs, got " + std::to_string(inputs.size()));
    }
  };

  switch (kind) {
    case OpKind::matmul: {
      arity(2, "matmul");
      const Array& a = value(inputs[0]);
      const Array& b = value(inputs[1]);
      auto d = matmul_dims(a, b, node.attrs.transpose_a, node.attrs.transpose_b);
      std::vector<int64_t> oshape;
      if (d.batched_a || d.batched_b) oshape = {d.batch, d.m, d.n};
      else oshape = {d.m, d.n};
      node.value = Array::zeros(oshape);
      int64_t a_sz = d.m * d.k, b_sz = d.k * d.n, c_sz = d.m * d.n;
      for (int64_t bi = 0; bi < d.batch; ++bi) {
        const double* A = a.data.data() + (d.batched_a ? bi * a_sz : 0);
        const double* B = b.data.data() + (d.batched_b ? bi * b_sz : 0);
        gemm_slice(A, B, node.value.data.data() + bi * c_sz, d.m, d.k, d.n,
                   node.attrs.transpose_a, node.attrs.transpose_b);
      }
      break;
    }
    case OpKind::add:
    case OpKind::mul: {
      arity(2, kind == OpKind::add ? "add" : "mul");
      const Array& a = value(inputs[0]);
      const Array& b = value(inputs[1]);
      node.value = Array::zeros(broadcast_shape(a.shape, b.shape,
                                                kind == OpKind::add ? "add" : "mul"));
      if (kind == OpKind::add) {
        broadcast_binary(a, b, node.value, [](double x, double y) { return x + y; });
      } else {
        broadcast_binary(a, b, node.value, [](double x, double y) { return x * y; });
      }
      break;
    }
    case OpKind::embedding_lookup: {
      arity(1, "embedding-lookup");
      const Array& table = value(inputs[0]);
      if (table.rank() != 2) {
        throw std::invalid_argument("embedding-lookup: table must be rank 2, got " +
                                    shape_str(table.shape));
      }
      int64_t V = table.shape[0], D = table.shape[1];
      int64_t n_ids = 1;
      for (int64_t d : node.attrs.ids_shape) n_ids *= d;
      if (n_ids != static_cast<int64_t>(node.attrs.ids.size())) {
        throw std::invalid_argument("embedding-lookup: ids_shape does not match ids length");
      }
      std::vector<int64_t> oshape = node.attrs.ids_shape;
      oshape.push_back(D);
      node.value = Array::zeros(oshape);
      for (int64_t i = 0; i < n_ids; ++i) {
        int64_t id = node.attrs.ids[i];
        if (id < 0 || id >= V) {
          throw std::out_of_range("embedding-lookup: id " + std::to_string(id) +
                                  " outside table of " + std::to_string(V) + " rows");
        }
        std::copy_n(table.data.data() + id * D, D, node.value.data.data() + i * D);
      }
      break;
    }
    case OpKind::softmax:
    case OpKind::log_softmax: {
      arity(1, kind == OpKind::softmax ? "softmax" : "log-softmax");
      const Array& x = value(inputs[0]);
      if (x.rank() < 1) throw std::invalid_argument("softmax: input must have rank >= 1");
      node.value = Array::zeros(x.shape);
      int64_t D = x.shape.back();
      int64_t rows = x.numel() / D;
      for (int64_t r = 0; r < rows; ++r) {
        const double* in = x.data.data() + r * D;
        double* out = node.value.data.data() + r * D;
        double mx = in[0];
        for (int64_t j = 1; j < D; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < D; ++j) {
          out[j] = std::exp(in[j] - mx);
          sum += out[j];
        }
        if (kind == OpKind::softmax) {
          for (int64_t j = 0; j < D; ++j) out[j] /= sum;
        } else {
          double lse = std::log(sum);
          for (int64_t j = 0; j < D; ++j) out[j] = in[j] - mx - lse;
        }
      }
      break;
    }
    case OpKind::rms_normalize: {
      arity(1, "rms-normalize");
      const Array& x = value(inputs[0]);
      if (x.rank() < 1) throw std::invalid_argument("rms-normalize: input must have rank >= 1");
      node.value = Array::zeros(x.shape);
      int64_t D = x.shape.back();
      int64_t rows = x.numel() / D;
      for (int64_t r = 0; r < rows; ++r) {
        const double* in = x.data.data() + r * D;
        double* out = node.value.data.data() + r * D;
        double ms = 0.0;
        for (int64_t j = 0; j < D; ++j) ms += in[j] * in[j];
        ms /= static_cast<double>(D);
        double inv = 1.0 / std::sqrt(ms + node.attrs.eps);
        for (int64_t j = 0; j < D; ++j) out[j] = in[j] * inv;
      }
      break;
    }
    case OpKind::gelu: {
      arity(1, "gelu");
      const Array& x = value(inputs[0]);
      node.value = Array::zeros(x.shape);
      for (int64_t i = 0, n = x.numel(); i < n; ++i) node.value.data[i] = gelu_fwd(x.data[i]);
      break;
    }
    case OpKind::masked_select_add: {
      arity(3, "masked-select-add");
      const Array& a = value(inputs[0]);
      const Array& b = value(inputs[1]);
      const Array& m = value(inputs[2]);
      if (!same_shape(a, b)) {
        throw std::invalid_argument("masked-select-add: a/b shapes differ " + shape_str(a.shape) +
                                    " vs " + shape_str(b.shape));
      }
      auto bs = broadcast_shape(a.shape, m.shape, "masked-select-add");
      if (bs != a.shape) {
        throw std::invalid_argument("masked-select-add: mask " + shape_str(m.shape) +
                                    " does not broadcast onto " + shape_str(a.shape));
      }
      // Binary masks select exactly (mask 0 -> a, mask 1 -> b); fractional
      // masks interpolate a + m*(b-a).
      Array mexp = Array::zeros(a.shape);
      broadcast_binary(mexp, m, mexp, [](double, double mask) { return mask; });
      node.value = Array::zeros(a.shape);
      for (int64_t i = 0, n = a.numel(); i < n; ++i) {
        double mv = mexp.data[i];
        if (mv == 0.0) node.value.data[i] = a.data[i];
        else if (mv == 1.0) node.value.data[i] = b.data[i];
        else node.value.data[i] = a.data[i] + mv * (b.data[i] - a.data[i]);
      }
      break;
    }
    case OpKind::slice: {
      arity(1, "slice");
      const Array& x = value(inputs[0]);
      int ax = node.attrs.axis;
      if (ax < 0 || ax >= x.rank()) {
        throw std::invalid_argument("slice: axis " + std::to_string(ax) + " out of range for " +
                                    shape_str(x.shape));
      }
      int64_t s = node.attrs.start, e = node.attrs.end;
      if (s < 0 || e > x.shape[ax] || s >= e) {
        throw std::invalid_argument("slice: range [" + std::to_string(s) + ", " +
                                    std::to_string(e) + ") invalid for axis size " +
                                    std::to_string(x.shape[ax]));
      }
      std::vector<int64_t> oshape = x.shape;
      oshape[ax] = e - s;
      node.value = Array::zeros(oshape);
      auto xst = strides_of(x.shape);
      int64_t outer = 1;
      for (int i = 0; i < ax; ++i) outer *= x.shape[i];
      int64_t inner = xst[ax];  // elements per index step along axis
      int64_t in_block = x.shape[ax] * inner;
      int64_t out_block = (e - s) * inner;
      for (int64_t o = 0; o < outer; ++o) {
        std::copy_n(x.data.data() + o * in_block + s * inner, out_block,
                    node.value.data.data() + o * out_block);
      }
      break;
    }
    case OpKind::concat: {
      if (inputs.empty()) throw std::invalid_argument("concat: needs at least one input");
      const Array& first = value(inputs[0]);
      int ax = node.attrs.axis;
      if (ax < 0 || ax >= first.rank()) {
        throw std::invalid_argument("concat: axis " + std::to_string(ax) + " out of range for " +
                                    shape_str(first.shape));
      }
      std::vector<int64_t> oshape = first.shape;
      for (size_t i = 1; i < inputs.size(); ++i) {
        const Array& x = value(inputs[i]);
        if (x.rank() != first.rank()) {
          throw std::invalid_argument("concat: rank mismatch " + shape_str(first.shape) + " vs " +
                                      shape_str(x.shape));
        }
        for (int d = 0; d < first.rank(); ++d) {
          if (d != ax && x.shape[d] != first.shape[d]) {
            throw std::invalid_argument("concat: shape mismatch off-axis " +
                                        shape_str(first.shape) + " vs " + shape_str(x.shape));
          }
        }
        oshape[ax] += x.shape[ax];
      }
      node.value = Array::zeros(oshape);
      int64_t outer = 1;
      for (int i = 0; i < ax; ++i) outer *= oshape[i];
      int64_t inner = 1;
      for (int i = ax + 1; i < static_cast<int>(oshape.size()); ++i) inner *= oshape[i];
      int64_t out_block = oshape[ax] * inner;
      int64_t off_axis = 0;
      for (const Tensor& t : inputs) {
        const Array& x = value(t);
        int64_t in_block = x.shape[ax] * inner;
        for (int64_t o = 0; o < outer; ++o) {
          std::copy_n(x.data.data() + o * in_block, in_block,
                      node.value.data.data() + o * out_block + off_axis * inner);
        }
        off_axis += x.shape[ax];
      }
      break;
    }
    case OpKind::mean: {
      arity(1, "mean");
      const Array& x = value(inputs[0]);
      if (x.numel() == 0) throw std::invalid_argument("mean: empty input");
      double s = 0.0;
      for (double v : x.data) s += v;
      node.value = Array::scalar(s / static_cast<double>(x.numel()));
      break;
    }
    case OpKind::sum_of_squares: {
      arity(1, "sum-of-squares");
      const Array& x = value(inputs[0]);
      double s = 0.0;
      for (double v : x.data) s += v * v;
      node.value = Array::scalar(s);
      break;
    }
    case OpKind::leaf:
    case OpKind::reshape:
      throw std::logic_error("apply: internal kinds are not dispatchable");
  }
  return push(std::move(node));
}

GradMap Tape::backward(Tensor root) {
  check_owned({root});
  const Array& rv = value(root);
  if (rv.numel() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got shape " +
                                shape_str(rv.shape));
  }
  grads_.assign(nodes_.size(), Array{});
  auto grad_ref = [&](int id) -> Array& {
    if (grads_[id].data.empty()) grads_[id] = Array::zeros(nodes_[id].value.shape);
    return grads_[id];
  };
  // Mark nodes reachable from the root so each is visited exactly once.
  std::vector<char> needed(nodes_.size(), 0);
  needed[root.id] = 1;
  for (int i = root.id; i >= 0; --i) {
    if (!needed[i] || !nodes_[i].requires_grad) continue;
    for (int p : nodes_[i].parents) needed[p] = 1;
  }
  grad_ref(root.id).data[0] = 1.0;

  auto maybe_round = [&](Array& g) {
    if (dtype_ == Dtype::f32) round_f32_inplace(g.data);
  };

  for (int i = root.id; i >= 0; --i) {
    const Node& nd = nodes_[i];
    if (!needed[i] || !nd.requires_grad || nd.kind == OpKind::leaf) continue;
    if (grads_[i].data.empty()) continue;  // no gradient flowed here
    Array& g = grads_[i];
    maybe_round(g);
    auto parent_rg = [&](size_t pi) { return nodes_[nd.parents[pi]].requires_grad; };

    switch (nd.kind) {
      case OpKind::reshape: {
        if (!parent_rg(0)) break;
        Array pg = g;
        pg.shape = nodes_[nd.parents[0]].value.shape;
        Array& acc = grad_ref(nd.parents[0]);
        for (int64_t j = 0, n = pg.numel(); j < n; ++j) acc.data[j] += pg.data[j];
        break;
      }
      case OpKind::matmul: {
        const Array& a = nodes_[nd.parents[0]].value;
        const Array& b = nodes_[nd.parents[1]].value;
        auto d = matmul_dims(a, b, nd.attrs.transpose_a, nd.attrs.transpose_b);
        int64_t a_sz = d.m * d.k, b_sz = d.k * d.n, c_sz = d.m * d.n;
        bool ta = nd.attrs.transpose_a, tb = nd.attrs.transpose_b;
        if (parent_rg(0)) {
          Array& ga = grad_ref(nd.parents[0]);
          for (int64_t bi = 0; bi < d.batch; ++bi) {
            const double* G = g.data.data() + bi * c_sz;
            const double* B = b.data.data() + (d.batched_b ? bi * b_sz : 0);
            double* GA = ga.data.data() + (d.batched_a ? bi * a_sz : 0);
            // dA = G * B^T (or layout-adjusted when flags are set)
            if (!ta) {
              gemm_slice(G, B, GA, d.m, d.n, d.k, false, !tb);
            } else {
              // A stored as [k, m]; dA_storage = (dA)^T = B * G^T
              gemm_slice(B, G, GA, d.k, d.n, d.m, tb, true);
            }
          }
        }
        if (parent_rg(1)) {
          Array& gb = grad_ref(nd.parents[1]);
          for (int64_t bi = 0; bi < d.batch; ++bi) {
            const double* G = g.data.data() + bi * c_sz;
            const double* A = a.data.data() + (d.batched_a ? bi * a_sz : 0);
            double* GB = gb.data.data() + (d.batched_b ? bi * b_sz : 0);
            if (!tb) {
              gemm_slice(A, G, GB, d.k, d.m, d.n, !ta, false);
            } else {
              // B stored as [n, k]; dB_storage = (dB)^T = G^T * A
              gemm_slice(G, A, GB, d.n, d.m, d.k, true, ta);
            }
          }
        }
        break;
      }
      case OpKind::add: {
        for (int side = 0; side < 2; ++side) {
          if (!parent_rg(side)) continue;
          const Array& p = nodes_[nd.parents[side]].value;
          Array red = reduce_to_shape(g, p.shape);
          Array& acc = grad_ref(nd.parents[side]);
          for (int64_t j = 0, n = red.numel(); j < n; ++j) acc.data[j] += red.data[j];
        }
        break;
      }
      case OpKind::mul: {
        const Array& a = nodes_[nd.parents[0]].value;
        const Array& b = nodes_[nd.parents[1]].value;
        for (int side = 0; side < 2; ++side) {
          if (!parent_rg(side)) continue;
          const Array& self = side == 0 ? a : b;
          const Array& other = side == 0 ? b : a;
          Array prod = Array::zeros(g.shape);
          broadcast_binary(g, other, prod, [](double x, double y) { return x * y; });
          Array red = reduce_to_shape(prod, self.shape);
          Array& acc = grad_ref(nd.parents[side]);
          for (int64_t j = 0, n = red.numel(); j < n; ++j) acc.data[j] += red.data[j];
        }
        break;
      }
      case OpKind::embedding_lookup: {
        if (!parent_rg(0)) break;
        const Array& table = nodes_[nd.parents[0]].value;
        int64_t D = table.shape[1];
        Array& acc = grad_ref(nd.parents[0]);
        for (size_t r = 0; r < nd.attrs.ids.size(); ++r) {
          int64_t id = nd.attrs.ids[r];
          const double* gr = g.data.data() + r * D;
          double* ar = acc.data.data() + id * D;
          for (int64_t j = 0; j < D; ++j) ar[j] += gr[j];
        }
        break;
      }
      case OpKind::softmax: {
        if (!parent_rg(0)) break;
        const Array& y = nd.value;
        Array& acc = grad_ref(nd.parents[0]);
        int64_t D = y.shape.back();
        int64_t rows = y.numel() / D;
        for (int64_t r = 0; r < rows; ++r) {
          const double* yv = y.data.data() + r * D;
          const double* gv = g.data.data() + r * D;
          double dot = 0.0;
          for (int64_t j = 0; j < D; ++j) dot += gv[j] * yv[j];
          double* av = acc.data.data() + r * D;
          for (int64_t j = 0; j < D; ++j) av[j] += yv[j] * (gv[j] - dot);
        }
        break;
      }
      case OpKind::log_softmax: {
        if (!parent_rg(0)) break;
        const Array& y = nd.value;  // log-probs
        Array& acc = grad_ref(nd.parents[0]);
        int64_t D = y.shape.back();
        int64_t rows = y.numel() / D;
        for (int64_t r = 0; r < rows; ++r) {
          const double* yv = y.data.data() + r * D;
          const double* gv = g.data.data() + r * D;
          double gsum = 0.0;
          for (int64_t j = 0; j < D; ++j) gsum += gv[j];
          double* av = acc.data.data() + r * D;
          for (int64_t j = 0; j < D; ++j) av[j] += gv[j] - std::exp(yv[j]) * gsum;
        }
        break;
      }
      case OpKind::rms_normalize: {
        if (!parent_rg(0)) break;
        const Array& x = nodes_[nd.parents[0]].value;
        const Array& y = nd.value;
        Array& acc = grad_ref(nd.parents[0]);
        int64_t D = x.shape.back();
        int64_t rows = x.numel() / D;
        for (int64_t r = 0; r < rows; ++r) {
          const double* xv = x.data.data() + r * D;
          const double* yv = y.data.data() + r * D;
          const double* gv = g.data.data() + r * D;
          double ms = 0.0;
          for (int64_t j = 0; j < D; ++j) ms += xv[j] * xv[j];
          ms /= static_cast<double>(D);
          double inv = 1.0 / std::sqrt(ms + nd.attrs.eps);
          double dot = 0.0;
          for (int64_t j = 0; j < D; ++j) dot += gv[j] * yv[j];
          dot /= static_cast<double>(D);
          double* av = acc.data.data() + r * D;
          for (int64_t j = 0; j < D; ++j) av[j] += inv * (gv[j] - yv[j] * dot);
        }
        break;
      }
      case OpKind::gelu: {
        if (!parent_rg(0)) break;
        const Array& x = nodes_[nd.parents[0]].value;
        Array& acc = grad_ref(nd.parents[0]);
        for (int64_t j = 0, n = x.numel(); j < n; ++j) {
          acc.data[j] += g.data[j] * gelu_grad(x.data[j]);
        }
        break;
      }
      case OpKind::masked_select_add: {
        const Array& m = nodes_[nd.parents[2]].value;
        const Array& a = nodes_[nd.parents[0]].value;
        // out = a + m*(b-a): da = g*(1-m), db = g*m, mask gets no grad.
        if (parent_rg(0)) {
          Array prod = Array::zeros(g.shape);
          broadcast_binary(g, m, prod, [](double gv, double mv) { return gv * (1.0 - mv); });
          Array red = reduce_to_shape(prod, a.shape);
          Array& acc = grad_ref(nd.parents[0]);
          for (int64_t j = 0, n = red.numel(); j < n; ++j) acc.data[j] += red.data[j];
        }
        if (parent_rg(1)) {
          Array prod = Array::zeros(g.shape);
          broadcast_binary(g, m, prod, [](double gv, double mv) { return gv * mv; });
          Array& acc = grad_ref(nd.parents[1]);
          for (int64_t j = 0, n = prod.numel(); j < n; ++j) acc.data[j] += prod.data[j];
        }
        break;
      }
      case OpKind::slice: {
        if (!parent_rg(0)) break;
        const Array& x = nodes_[nd.parents[0]].value;
        Array& acc = grad_ref(nd.parents[0]);
        int ax = nd.attrs.axis;
        auto xst = strides_of(x.shape);
        int64_t outer = 1;
        for (int d2 = 0; d2 < ax; ++d2) outer *= x.shape[d2];
        int64_t inner = xst[ax];
        int64_t in_block = x.shape[ax] * inner;
        int64_t out_block = (nd.attrs.end - nd.attrs.start) * inner;
        for (int64_t o = 0; o < outer; ++o) {
          const double* gsrc = g.data.data() + o * out_block;
          double* adst = acc.data.data() + o * in_block + nd.attrs.start * inner;
          for (int64_t j = 0; j < out_block; ++j) adst[j] += gsrc[j];
        }
        break;
      }
      case OpKind::concat: {
        int ax = nd.attrs.axis;
        const auto& oshape = nd.value.shape;
        int64_t outer = 1;
        for (int d2 = 0; d2 < ax; ++d2) outer *= oshape[d2];
        int64_t inner = 1;
        for (int d2 = ax + 1; d2 < static_cast<int>(oshape.size()); ++d2) inner *= oshape[d2];
        int64_t out_block = oshape[ax] * inner;
        int64_t off_axis = 0;
        for (size_t pi = 0; pi < nd.parents.size(); ++pi) {
          const Array& p = nodes_[nd.parents[pi]].value;
          int64_t in_block = p.shape[ax] * inner;
          if (parent_rg(pi)) {
            Array& acc = grad_ref(nd.parents[pi]);
            for (int64_t o = 0; o < outer; ++o) {
              const double* gsrc = g.data.data() + o * out_block + off_axis * inner;
              double* adst = acc.data.data() + o * in_block;
              for (int64_t j = 0; j < in_block; ++j) adst[j] += gsrc[j];
            }
          }
          off_axis += p.shape[ax];
        }
        break;
      }
      case OpKind::mean: {
        if (!parent_rg(0)) break;
        const Array& x = nodes_[nd.parents[0]].value;
        Array& acc = grad_ref(nd.parents[0]);
        double gv = g.data[0] / static_cast<double>(x.numel());
        for (int64_t j = 0, n = x.numel(); j < n; ++j) acc.data[j] += gv;
        break;
      }
      case OpKind::sum_of_squares: {
        if (!parent_rg(0)) break;
        const Array& x = nodes_[nd.parents[0]].value;
        Array& acc = grad_ref(nd.parents[0]);
        double gv = g.data[0];
        for (int64_t j = 0, n = x.numel(); j < n; ++j) acc.data[j] += gv * 2.0 * x.data[j];
        break;
      }
      case OpKind::leaf:
        break;
    }
  }

  GradMap out;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& nd = nodes_[i];
    if (nd.kind != OpKind::leaf || !nd.requires_grad || nd.value.name.empty()) continue;
    if (grads_[i].data.empty()) grads_[i] = Array::zeros(nd.value.shape);
    if (dtype_ == Dtype::f32) round_f32_inplace(grads_[i].data);
    out[nd.value.name] = grads_[i];
  }
  return out;
}

const Array& Tape::grad(Tensor t) const {
  static const Array empty{};
  if (t.id < 0 || static_cast<size_t>(t.id) >= grads_.size()) return empty;
  if (grads_[t.id].data.empty()) {
    const_cast<Tape*>(this)->grads_[t.id] = Array::zeros(nodes_[t.id].value.shape);
  }
  return grads_[t.id];
}

}  // namespace aural
