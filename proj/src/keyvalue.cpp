#include "fisheval/keyvalue.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "fisheval/error.hpp"

namespace fisheval {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::InvalidDistance: return "InvalidDistance";
    case ErrorCode::OutOfCircle: return "OutOfCircle";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::ModelMismatch: return "ModelMismatch";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadPoseRecord: return "BadPoseRecord";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::UnknownEncoding: return "UnknownEncoding";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::UnsupportedMetric: return "UnsupportedMetric";
    case ErrorCode::MissingDistanceMap: return "MissingDistanceMap";
    case ErrorCode::ZeroDetections: return "ZeroDetections";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::TooFewMatches: return "TooFewMatches";
    case ErrorCode::NoModel: return "NoModel";
    case ErrorCode::TooFewRuns: return "TooFewRuns";
    case ErrorCode::BadConfig: return "BadConfig";
  }
  return "Unknown";
}

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find(sep, start);
    const auto piece = trim(text.substr(start, pos == std::string_view::npos ? text.size() - start
                                                                             : pos - start));
    if (!piece.empty()) out.push_back(piece);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view text, bool* ok) {
  const std::string s = trim(text);
  double value = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  *ok = !s.empty() && res.ec == std::errc() && res.ptr == s.data() + s.size();
  return value;
}

unsigned long long fnv1a64(std::string_view bytes) {
  unsigned long long h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

KeyValueFile KeyValueFile::parse(std::string_view text, std::string source) {
  KeyValueFile kv;
  kv.source_ = std::move(source);
  std::istringstream in{std::string(text)};
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') kv.fail_line(line_no, "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      kv.tables_[section];
      continue;
    }
    if (!section.empty()) {
      Row row;
      row.line = line_no;
      std::istringstream tokens(line);
      for (std::string tok; tokens >> tok;) row.tokens.push_back(tok);
      kv.tables_[section].push_back(std::move(row));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) kv.fail_line(line_no, "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) kv.fail_line(line_no, "empty key");
    if (kv.entries_.count(key)) kv.fail_line(line_no, "duplicate key '" + key + "'");
    kv.entries_[key] = Entry{trim(std::string_view(line).substr(eq + 1)), line_no};
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::vector<std::string> KeyValueFile::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

void KeyValueFile::fail(const std::string& key, const std::string& message) const {
  const auto it = entries_.find(key);
  const int line = it == entries_.end() ? 0 : it->second.line;
  throw Error(ErrorCode::BadConfig,
              source_ + ":" + std::to_string(line) + ": field '" + key + "': " + message);
}

void KeyValueFile::fail_line(int line, const std::string& message) const {
  throw Error(ErrorCode::BadConfig, source_ + ":" + std::to_string(line) + ": " + message);
}

const std::string& KeyValueFile::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) fail(key, "missing required key");
  return it->second.value;
}

std::string KeyValueFile::get_or(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second.value;
}

double KeyValueFile::get_double(const std::string& key) const {
  bool ok = false;
  const double v = parse_double(get(key), &ok);
  if (!ok) fail(key, "expected a number, got '" + get(key) + "'");
  return v;
}

double KeyValueFile::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long KeyValueFile::get_int(const std::string& key) const {
  const std::string& s = get(key);
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(key, "expected an integer, got '" + s + "'");
  return v;
}

long KeyValueFile::get_int_or(const std::string& key, long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::vector<std::string> KeyValueFile::get_list(const std::string& key) const {
  return split_list(get(key));
}

std::vector<double> KeyValueFile::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : get_list(key)) {
    bool ok = false;
    out.push_back(parse_double(item, &ok));
    if (!ok) fail(key, "expected a number, got '" + item + "'");
  }
  return out;
}

const std::vector<KeyValueFile::Row>& KeyValueFile::table(const std::string& name) const {
  const auto it = tables_.find(name);
  if (it == tables_.end())
    throw Error(ErrorCode::BadConfig, source_ + ": missing [" + name + "] section");
  return it->second;
}

}  // namespace fisheval
