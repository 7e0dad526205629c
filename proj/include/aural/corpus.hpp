#pragma once

#include <map>
#include <string>
#include <vector>

#include "aural/grid.hpp"

namespace aural {

// One JSON-lines record:
//   { "id": str, "items": [ {"kind": "text"|"reason"|"recon",
//     "tokens": [int] or [[int]]}, ... ], "meta": {...} }
struct Record {
  std::string id;
  std::vector<Item> items;
  std::map<std::string, std::string> meta_str;
  std::map<std::string, double> meta_num;
};

void write_corpus(const std::string& path, const std::vector<Record>& records);
std::vector<Record> read_corpus(const std::string& path);

std::string record_to_json(const Record& rec);
Record record_from_json(const std::string& line);

}  // namespace aural
