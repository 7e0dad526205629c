#pragma once

#include <map>
#include <string>

#include "aural/array.hpp"

namespace aural {

// Flat record container: per record a utf-8 name, a dtype tag, the shape as
// 64-bit little-endian integers, then row-major little-endian payload floats
// (f32 by default, f64 when saved from verification mode). A plain-text
// manifest with one "name shape dtype" line per record is written alongside.
void save_checkpoint(const std::string& path, const std::map<std::string, Array>& arrays,
                     Dtype dtype = Dtype::f32);

std::map<std::string, Array> load_checkpoint(const std::string& path);

std::string manifest_path_for(const std::string& ckpt_path);

// Human-oriented listing: name, shape, dtype, first few values.
std::string inspect_checkpoint(const std::string& path);

// Names whose payload bytes differ between the two files (also reports
// records present in only one of them). Empty result means identical content.
std::vector<std::string> diff_checkpoints(const std::string& a, const std::string& b);

}  // namespace aural
