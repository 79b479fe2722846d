#pragma once

// File plumbing: content hashes, atomic writes and JSONL readers/writers.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "fedbroker/error.hpp"
#include "fedbroker/model.hpp"

namespace fedbroker {

namespace fs = std::filesystem;

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::IoError, "sha256 failed");
  std::ostringstream out;
  out << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) out << std::setw(2) << static_cast<int>(digest[i]);
  return out.str();
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Writes via a sibling temp file and rename, so readers of `path` see
/// either the old content or the complete new content. If `writer` throws,
/// the temp file is removed and `path` is untouched.
inline void write_atomic(const fs::path& path, const std::function<void(std::ostream&)>& writer) {
  fs::path tmp = path;
  tmp += ".tmp";
  try {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorCode::IoError, "cannot open " + tmp.string() + " for writing");
      writer(out);
      out.flush();
      if (!out) throw Error(ErrorCode::IoError, "write to " + tmp.string() + " failed");
    }
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    try {
      throw;
    } catch (const fs::filesystem_error& e) {
      throw Error(ErrorCode::IoError, e.what());
    }
  }
}

inline void write_atomic(const fs::path& path, std::string_view content) {
  write_atomic(path, [&](std::ostream& out) { out.write(content.data(), static_cast<std::streamsize>(content.size())); });
}

/// One persisted artifact: where it is, how many records, its content hash.
struct ManifestEntry {
  std::string path;
  std::size_t count = 0;
  std::string sha256;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline OrderedJson to_json_value(const ManifestEntry& e) {
  return OrderedJson{{"path", e.path}, {"count", e.count}, {"sha256", e.sha256}};
}

/// Serializes each record as one compact JSON line and writes atomically.
template <typename Range, typename ToJson>
ManifestEntry write_jsonl(const fs::path& path, const Range& records, ToJson&& to_json) {
  std::string content;
  std::size_t count = 0;
  for (const auto& r : records) {
    content += to_json(r).dump();
    content += '\n';
    ++count;
  }
  write_atomic(path, content);
  return {path.string(), count, sha256_hex(content)};
}

template <typename Range>
ManifestEntry write_jsonl(const fs::path& path, const Range& records) {
  return write_jsonl(path, records, [](const auto& r) { return to_json_value(r); });
}

/// Counts non-blank lines.
inline std::size_t count_records(std::string_view content) {
  std::size_t n = 0;
  std::size_t start = 0;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    if (!trim(content.substr(start, end - start)).empty()) ++n;
    start = end + 1;
  }
  return n;
}

/// Parses every non-blank line; errors name the file and 1-based line.
template <typename Parse>
auto read_jsonl(const fs::path& path, Parse&& parse) {
  using T = decltype(parse(std::declval<const Json&>()));
  std::vector<T> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ParseError && e.code() != ErrorCode::EmptyField && e.code() != ErrorCode::OutOfRange)
        throw;
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace fedbroker
