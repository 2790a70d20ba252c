#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctpipe/errors.hpp"

namespace ctpipe::cli {

enum class ValueType { integer, unsigned64, real, boolean, text };

struct SchemaEntry {
  ValueType type = ValueType::text;
  const char* default_value = "";
  const char* help = "";
};

// The full flat key space. Unknown keys are rejected at load time.
const std::map<std::string, SchemaEntry>& config_schema();

inline constexpr const char* kEnvPrefix = "CTPIPE_";

// Flat key-value run configuration. Precedence: defaults < config file <
// CTPIPE_* environment variables < command-line flags.
class RunConfig {
 public:
  static RunConfig load(const std::optional<std::filesystem::path>& file);

  void set(const std::string& key, const std::string& raw_value);  // validates

  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;

  // helpers for list-typed text values
  std::vector<double> get_double_list(const std::string& key) const;  // comma separated
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  // resolved config embedded next to every command's outputs
  void write_resolved(const std::filesystem::path& path, const std::string& command) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ctpipe::cli
