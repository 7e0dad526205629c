#include "aural/array.hpp"

#include <sstream>
#include <stdexcept>

namespace aural {

Array Array::zeros(std::vector<int64_t> shape) {
  Array a;
  a.shape = std::move(shape);
  a.data.assign(static_cast<size_t>(a.numel()), 0.0);
  return a;
}

Array Array::full(std::vector<int64_t> shape, double v) {
  Array a;
  a.shape = std::move(shape);
  a.data.assign(static_cast<size_t>(a.numel()), v);
  return a;
}

double& Array::at(std::span<const int64_t> idx) {
  auto st = strides_of(shape);
  int64_t off = 0;
  for (size_t i = 0; i < idx.size(); ++i) off += idx[i] * st[i];
  return data[static_cast<size_t>(off)];
}

double Array::at(std::span<const int64_t> idx) const {
  return const_cast<Array*>(this)->at(idx);
}

std::string shape_str(std::span<const int64_t> shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

bool same_shape(const Array& a, const Array& b) { return a.shape == b.shape; }

void round_f32_inplace(std::vector<double>& data) {
  for (double& v : data) v = static_cast<double>(static_cast<float>(v));
}

std::vector<int64_t> broadcast_shape(std::span<const int64_t> a, std::span<const int64_t> b,
                                     const char* op_name) {
  size_t rank = std::max(a.size(), b.size());
  std::vector<int64_t> out(rank, 1);
  for (size_t i = 0; i < rank; ++i) {
    int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument(std::string(op_name) + ": shapes not broadcastable " +
                                  shape_str(a) + " vs " + shape_str(b));
    }
    out[rank - 1 - i] = std::max(da, db);
  }
  return out;
}

std::vector<int64_t> strides_of(std::span<const int64_t> shape) {
  std::vector<int64_t> st(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    st[i] = st[i + 1] * shape[i + 1];
  }
  return st;
}

}  // namespace aural
