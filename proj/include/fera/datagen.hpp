#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fera/field.hpp"
#include "fera/spectrum.hpp"

namespace fera {

enum class SyntheticKind { powerlaw, band_boost };

SyntheticKind parse_synthetic_kind(const std::string& name);
const char* synthetic_kind_name(SyntheticKind kind) noexcept;

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::powerlaw;
  double gamma = 2.0;            ///< power-spectrum exponent, |X(f)|^2 ~ f^-gamma
  std::size_t boost_band = 3;    ///< 1-based band index (band_boost only)
  double boost_factor = 3.0;
  std::size_t size = 32;         ///< H = W
  std::size_t channels = 1;
  std::uint64_t seed = 0;

  /// Throws DomainError on invalid fields.
  void validate() const;
};

/// Real Gaussian field with power spectrum ~ f^-gamma, zero DC, unit variance.
template <class T = float>
BasicField<T> gen_powerlaw(const SyntheticSpec& spec);

/// The power-law field for the same seed with one band multiplied by boost_factor,
/// then renormalised to unit variance.
template <class T = float>
BasicField<T> gen_band_boost(const SyntheticSpec& spec, const FilterBank& bank);

/// Draws one field of the spec's kind (the bank is only consulted for band_boost).
template <class T = float>
BasicField<T> generate(const SyntheticSpec& spec, const FilterBank& bank);

/// Seed of the i-th member of a dataset rooted at base_seed.
std::uint64_t dataset_member_seed(std::uint64_t base_seed, std::size_t index) noexcept;

std::vector<Field> make_dataset(const SyntheticSpec& spec, const FilterBank& bank, std::size_t count,
                                std::uint64_t base_seed);

/// Writes sample_XXXXX.fera files plus manifest.txt (spec fields and per-file seeds).
void write_dataset(const std::filesystem::path& dir, const SyntheticSpec& spec, std::uint64_t base_seed,
                   const std::vector<Field>& fields);

/// Loads every file listed in dir/manifest.txt, in manifest order.
std::vector<Field> read_dataset(const std::filesystem::path& dir);

}  // namespace fera
