#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace aural {

enum class Dtype { f32, f64 };

// Dense row-major value container. Storage is double throughout; in f32 mode
// every op rounds its outputs through float, so all stored values are exactly
// float-representable and checkpoints round-trip bit-exactly.
struct Array {
  std::vector<int64_t> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::string name;

  Array() = default;
  Array(std::vector<int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  bool is_scalar() const { return numel() == 1 && shape.empty(); }

  static Array zeros(std::vector<int64_t> shape);
  static Array full(std::vector<int64_t> shape, double v);
  static Array scalar(double v) { return Array({}, {v}); }

  double& at(std::span<const int64_t> idx);
  double at(std::span<const int64_t> idx) const;
};

std::string shape_str(std::span<const int64_t> shape);
bool same_shape(const Array& a, const Array& b);

// Round every element through float. Used after each op in f32 mode.
void round_f32_inplace(std::vector<double>& data);

// Right-aligned broadcast of two shapes; throws on incompatibility.
std::vector<int64_t> broadcast_shape(std::span<const int64_t> a, std::span<const int64_t> b,
                                     const char* op_name);

// Row-major strides for a shape.
std::vector<int64_t> strides_of(std::span<const int64_t> shape);

}  // namespace aural
