#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "aural/array.hpp"

namespace aural {

enum class OpKind {
  leaf,
  reshape,  // metadata-only alias, not part of the public op vocabulary
  matmul,
  add,
  mul,
  embedding_lookup,
  softmax,
  log_softmax,
  rms_normalize,
  gelu,
  masked_select_add,
  slice,
  concat,
  mean,
  sum_of_squares,
};

struct Attrs {
  int axis = -1;
  int64_t start = 0;
  int64_t end = 0;
  bool transpose_a = false;
  bool transpose_b = false;
  double eps = 1e-6;
  std::vector<int64_t> ids;        // embedding-lookup: row indices into the table
  std::vector<int64_t> ids_shape;  // leading shape of ids; defaults to {ids.size()}
};

class Tape;

struct Tensor {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
  const Array& value() const;
  const std::vector<int64_t>& shape() const { return value().shape; }
};

// Gradients of a scalar root w.r.t. every named requires_grad leaf.
using GradMap = std::map<std::string, Array>;

// Single-threaded record of executed ops. Supports exactly the op vocabulary
// the rest of the project needs; reverse pass visits each reachable node once
// in reverse topological (= creation) order.
class Tape {
 public:
  explicit Tape(Dtype dtype = Dtype::f32, bool check_finite = true)
      : dtype_(dtype), check_finite_(check_finite) {}

  Dtype dtype() const { return dtype_; }
  size_t size() const { return nodes_.size(); }

  Tensor leaf(Array a);             // requires_grad carried by the array
  Tensor constant(Array a);         // requires_grad forced off
  Tensor scalar_const(double v) { return constant(Array::scalar(v)); }

  // String-kind dispatch; throws on unknown kind or malformed inputs.
  Tensor forward_op(std::string_view kind, const std::vector<Tensor>& inputs, Attrs attrs = {});

  // Typed conveniences (all route through the same execution path).
  Tensor matmul(Tensor a, Tensor b, bool transpose_a = false, bool transpose_b = false);
  Tensor add(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);
  Tensor mul_scalar(Tensor a, double s) { return mul(a, scalar_const(s)); }
  Tensor add_scalar(Tensor a, double s) { return add(a, scalar_const(s)); }
  Tensor embedding(Tensor table, std::vector<int64_t> ids, std::vector<int64_t> ids_shape = {});
  Tensor softmax(Tensor x);
  Tensor log_softmax(Tensor x);
  Tensor rms_normalize(Tensor x, double eps = 1e-6);
  Tensor gelu(Tensor x);
  Tensor masked_select_add(Tensor a, Tensor b, Tensor mask);
  Tensor slice(Tensor x, int axis, int64_t start, int64_t end);
  Tensor concat(const std::vector<Tensor>& xs, int axis);
  Tensor mean(Tensor x);
  Tensor sum_of_squares(Tensor x);

  // Alias with identical data and a new shape (same numel).
  Tensor reshape(Tensor x, std::vector<int64_t> new_shape);

  const Array& value(Tensor t) const;

  // Reverse pass from a scalar root. Populates per-node grads and returns the
  // map for named requires_grad leaves; unreachable leaves get zero grads.
  GradMap backward(Tensor root);

  // Gradient of the last backward() w.r.t. a node (zeros if unreached).
  const Array& grad(Tensor t) const;

 private:
  struct Node {
    OpKind kind;
    Attrs attrs;
    std::vector<int> parents;
    Array value;
    bool requires_grad = false;
  };

  Tensor push(Node n);
  Tensor apply(OpKind kind, const std::vector<Tensor>& inputs, Attrs attrs);
  void check_owned(const std::vector<Tensor>& ts) const;

  std::vector<Node> nodes_;
  std::vector<Array> grads_;  // parallel to nodes_ after backward
  Dtype dtype_;
  bool check_finite_;
};

}  // namespace aural
