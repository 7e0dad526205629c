#include "aural/corpus.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace aural {

using nlohmann::json;

std::string record_to_json(const Record& rec) {
  json j;
  j["id"] = rec.id;
  json items = json::array();
  for (const Item& it : rec.items) {
    json ji;
    switch (it.kind) {
      case Item::Kind::text:
        ji["kind"] = "text";
        ji["tokens"] = it.text_tokens;
        break;
      case Item::Kind::reason:
        ji["kind"] = "reason";
        ji["tokens"] = it.frames;
        break;
      case Item::Kind::recon:
        ji["kind"] = "recon";
        ji["tokens"] = it.frames;
        break;
    }
    items.push_back(std::move(ji));
  }
  j["items"] = std::move(items);
  json meta = json::object();
  for (const auto& [k, v] : rec.meta_str) meta[k] = v;
  for (const auto& [k, v] : rec.meta_num) meta[k] = v;
  j["meta"] = std::move(meta);
  return j.dump();
}

Record record_from_json(const std::string& line) {
  json j = json::parse(line);
  Record rec;
  rec.id = j.at("id").get<std::string>();
  for (const auto& ji : j.at("items")) {
    std::string kind = ji.at("kind").get<std::string>();
    if (kind == "text") {
      rec.items.push_back(Item::text(ji.at("tokens").get<std::vector<int32_t>>()));
    } else if (kind == "reason" || kind == "recon") {
      rec.items.push_back(Item::audio(
          kind == "reason" ? Item::Kind::reason : Item::Kind::recon,
          ji.at("tokens").get<std::vector<std::vector<int32_t>>>()));
    } else {
      throw std::runtime_error("unknown item kind '" + kind + "' in record " + rec.id);
    }
  }
  if (j.contains("meta")) {
    for (const auto& [k, v] : j.at("meta").items()) {
      if (v.is_string()) rec.meta_str[k] = v.get<std::string>();
      else if (v.is_number()) rec.meta_num[k] = v.get<double>();
    }
  }
  return rec;
}

void write_corpus(const std::string& path, const std::vector<Record>& records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open corpus for writing: " + path);
  for (const Record& rec : records) os << record_to_json(rec) << "\n";
}

std::vector<Record> read_corpus(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open corpus: " + path);
  std::vector<Record> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json(line));
  }
  return out;
}

}  // namespace aural
