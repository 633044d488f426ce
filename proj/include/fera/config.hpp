#pragma once

// Flat INI-style run configuration. Every key has a default; files and
// command-line overrides may only set known keys.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fera/datagen.hpp"
#include "fera/objective.hpp"

namespace fera {

class RunConfig {
 public:
  /// Every known key with its default value.
  static RunConfig defaults();

  /// Reads `[section]` headers and `key = value` lines; `#` and `;` start comments.
  void load_file(const std::filesystem::path& path);
  void load_stream(std::istream& is, const std::string& source);
  /// Sets "section.key". Throws ConfigError naming the key if it is unknown.
  void set(const std::string& key, const std::string& value);
  /// Parses "section.key=value".
  void apply_override(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  double get_real(const std::string& key) const;
  std::size_t get_count(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  /// Comma-separated list; an empty value is an empty list.
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_reals(const std::string& key) const;
  std::vector<std::size_t> get_counts(const std::string& key) const;

  /// Resolved configuration, grouped by section in key order.
  void write(std::ostream& os) const;

 private:
  std::map<std::string, std::string> values_;
};

/// Training settings for a stage ("pretrain" or "adapt").
TrainConfig train_config_from(const RunConfig& cfg, const std::string& stage);

/// Synthetic data spec of the given kind built from the data.* keys.
SyntheticSpec synthetic_spec_from(const RunConfig& cfg, SyntheticKind kind);

/// Training and validation data for a stage: pretraining always uses power-law fields,
/// adaptation uses train.target.
TrainData train_data_from(const RunConfig& cfg, const std::string& stage, const FilterBank& bank);

}  // namespace fera
