#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vacscreen/error.hpp"

namespace vacscreen::io {

using nlohmann::json;

inline std::string read_file(const std::filesystem::path& path, std::string_view module) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(module, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content,
                       std::string_view module) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError(module, "cannot write " + path.string());
  out << content;
  if (!out) throw ParseError(module, "write failed for " + path.string());
}

struct JsonLine {
  std::size_t line;  // 1-based
  json value;
};

// Blank lines are skipped; a line that fails to parse raises a ParseError
// naming the file and line.
inline std::vector<JsonLine> parse_jsonl(std::string_view content, std::string_view name,
                                         std::string_view module) {
  std::vector<JsonLine> out;
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    ++line;
    std::string_view raw = content.substr(pos, nl - pos);
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (raw.find_first_not_of(" \t") != std::string_view::npos) {
      try {
        out.push_back({line, json::parse(raw)});
      } catch (const json::parse_error& e) {
        throw ParseError(module, std::string(name) + ":" + std::to_string(line) +
                                     ": malformed JSON record (" + e.what() + ")");
      }
    }
    pos = nl + 1;
  }
  return out;
}

inline std::vector<JsonLine> read_jsonl(const std::filesystem::path& path, std::string_view module) {
  return parse_jsonl(read_file(path, module), path.filename().string(), module);
}

inline std::string to_jsonl(const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

// Fetches a required string field or throws naming the record's line.
inline std::string require_string(const JsonLine& rec, const char* key, std::string_view name,
                                  std::string_view module) {
  auto it = rec.value.find(key);
  if (!rec.value.is_object() || it == rec.value.end() || !it->is_string())
    throw ParseError(module, std::string(name) + ":" + std::to_string(rec.line) +
                                 ": missing or non-string field \"" + key + "\"");
  return it->get<std::string>();
}

}  // namespace vacscreen::io
