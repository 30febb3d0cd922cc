#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace fisheval {

/// Plain-text `key = value` file with optional `[name]` table sections whose
/// rows are whitespace-separated tokens. `#` starts a comment. Every lookup
/// error is raised as BadConfig naming the source, line and field.
class KeyValueFile {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };
  struct Row {
    std::vector<std::string> tokens;
    int line = 0;
  };

  static KeyValueFile parse(std::string_view text, std::string source = "<memory>");
  static KeyValueFile load(const std::filesystem::path& path);

  const std::string& source() const { return source_; }
  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  std::vector<std::string> keys() const;

  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  long get_int(const std::string& key) const;
  long get_int_or(const std::string& key, long fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  bool has_table(const std::string& name) const { return tables_.count(name) > 0; }
  const std::vector<Row>& table(const std::string& name) const;

  /// Raises BadConfig pointing at `key`'s line.
  [[noreturn]] void fail(const std::string& key, const std::string& message) const;
  [[noreturn]] void fail_line(int line, const std::string& message) const;

  void set(const std::string& key, std::string value) { entries_[key] = Entry{std::move(value), 0}; }

 private:
  std::string source_;
  std::map<std::string, Entry> entries_;
  std::map<std::string, std::vector<Row>> tables_;
};

double parse_double(std::string_view text, bool* ok);
std::vector<std::string> split_list(std::string_view text, char sep = ',');
std::string trim(std::string_view text);

/// 64-bit FNV-1a, stable across platforms and builds.
unsigned long long fnv1a64(std::string_view bytes);

}  // namespace fisheval
