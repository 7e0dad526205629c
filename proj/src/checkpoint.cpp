#include "aural/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace aural {

namespace {

constexpr char kMagic[8] = {'A', 'U', 'R', 'L', 'C', 'K', 'P', '1'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_i64(std::ostream& os, int64_t v) {
  uint64_t u = static_cast<uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

int64_t get_i64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return static_cast<int64_t>(v);
}

void put_f32(std::ostream& os, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(os, u);
}

float get_f32(std::istream& is) {
  uint32_t u = get_u32(is);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void put_f64(std::ostream& os, double d) {
  uint64_t u;
  std::memcpy(&u, &d, 8);
  put_i64(os, static_cast<int64_t>(u));
}

double get_f64(std::istream& is) {
  uint64_t u = static_cast<uint64_t>(get_i64(is));
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

}  // namespace

std::string manifest_path_for(const std::string& ckpt_path) { return ckpt_path + ".manifest.txt"; }

void save_checkpoint(const std::string& path, const std::map<std::string, Array>& arrays,
                     Dtype dtype) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 8);
  put_u32(os, static_cast<uint32_t>(arrays.size()));
  for (const auto& [name, arr] : arrays) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(dtype == Dtype::f32 ? 0 : 1);
    put_u32(os, static_cast<uint32_t>(arr.shape.size()));
    for (int64_t d : arr.shape) put_i64(os, d);
    if (dtype == Dtype::f32) {
      for (double v : arr.data) put_f32(os, static_cast<float>(v));
    } else {
      for (double v : arr.data) put_f64(os, v);
    }
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);

  std::ofstream ms(manifest_path_for(path), std::ios::trunc);
  for (const auto& [name, arr] : arrays) {
    ms << name << " ";
    if (arr.shape.empty()) {
      ms << "scalar";
    } else {
      for (size_t i = 0; i < arr.shape.size(); ++i) {
        if (i) ms << "x";
        ms << arr.shape[i];
      }
    }
    ms << " " << (dtype == Dtype::f32 ? "f32" : "f64") << "\n";
  }
}

std::map<std::string, Array> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("bad checkpoint magic in " + path);
  }
  uint32_t count = get_u32(is);
  std::map<std::string, Array> out;
  for (uint32_t r = 0; r < count; ++r) {
    uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    int tag = is.get();
    uint32_t ndim = get_u32(is);
    Array arr;
    arr.shape.resize(ndim);
    for (uint32_t i = 0; i < ndim; ++i) arr.shape[i] = get_i64(is);
    int64_t n = arr.numel();
    arr.data.resize(static_cast<size_t>(n));
    if (tag == 0) {
      for (int64_t i = 0; i < n; ++i) arr.data[i] = static_cast<double>(get_f32(is));
    } else if (tag == 1) {
      for (int64_t i = 0; i < n; ++i) arr.data[i] = get_f64(is);
    } else {
      throw std::runtime_error("unknown dtype tag in checkpoint record " + name);
    }
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    arr.name = name;
    out.emplace(std::move(name), std::move(arr));
  }
  return out;
}

std::string inspect_checkpoint(const std::string& path) {
  auto arrays = load_checkpoint(path);
  std::ostringstream os;
  int64_t total = 0;
  for (const auto& [name, arr] : arrays) {
    os << name << "  " << shape_str(arr.shape) << "  numel=" << arr.numel();
    os << "  [";
    for (int64_t i = 0; i < std::min<int64_t>(4, arr.numel()); ++i) {
      if (i) os << ", ";
      os << arr.data[i];
    }
    if (arr.numel() > 4) os << ", ...";
    os << "]\n";
    total += arr.numel();
  }
  os << arrays.size() << " records, " << total << " values total\n";
  return os.str();
}

std::vector<std::string> diff_checkpoints(const std::string& a, const std::string& b) {
  auto la = load_checkpoint(a);
  auto lb = load_checkpoint(b);
  std::vector<std::string> out;
  for (const auto& [name, arr] : la) {
    auto it = lb.find(name);
    if (it == lb.end()) {
      out.push_back(name + " (only in first)");
      continue;
    }
    if (arr.shape != it->second.shape || arr.data != it->second.data) out.push_back(name);
  }
  for (const auto& [name, arr] : lb) {
    if (!la.count(name)) out.push_back(name + " (only in second)");
  }
  return out;
}

}  // namespace aural
