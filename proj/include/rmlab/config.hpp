#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace rmlab {

enum class ConfigType { integer, real, boolean, text };

// Known keys, "section.key" -> type. Parsing and overrides reject anything
// not listed, so a typo fails before any work starts.
using ConfigSchema = std::map<std::string, ConfigType>;

const ConfigSchema& default_schema();

// Sectioned key = value text, '#' starts a comment, values typed against the
// schema. Getters with a fallback are optional keys; getters without are
// required. Every value a getter hands out is recorded so the manifest can
// list the configuration a run actually used, defaults included.
class Config {
 public:
  Config();
  explicit Config(const ConfigSchema& schema);

  static Config from_file(const std::filesystem::path& path);
  static Config from_text(const std::string& text, const std::string& origin);
  static Config from_text(const std::string& text, const std::string& origin,
                          const ConfigSchema& schema);

  // "section.key=value", the --set grammar. Replaces any file value.
  void apply_override(const std::string& spec);

  bool has(const std::string& key) const;

  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_real(const std::string& key) const;
  double get_real(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_text(const std::string& key) const;
  std::string get_text(const std::string& key, const std::string& fallback) const;

  // Raw entries as parsed (file plus overrides).
  const std::map<std::string, std::string>& entries() const { return entries_; }
  // Effective values seen by getters so far, defaults included.
  const std::map<std::string, std::string>& consumed() const { return consumed_; }

  // Hash of the raw entries; names run directories.
  std::string content_hash() const;

 private:
  const ConfigSchema* schema_;
  std::map<std::string, std::string> entries_;
  mutable std::map<std::string, std::string> consumed_;

  const std::string& raw_or_fail(const std::string& key, ConfigType want) const;
  const std::string* raw_or_null(const std::string& key, ConfigType want) const;
};

}  // namespace rmlab
