#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "landcls/model.hpp"
#include "landcls/preprocessing.hpp"
#include "landcls/tensor.hpp"

namespace landcls {

inline constexpr std::array<std::uint8_t, 4> kWeightsMagic{'L', 'W', 'T', 'S'};
inline constexpr std::uint32_t kWeightsFormatVersion = 1;

struct WeightContainer {
  std::uint32_t format_version = kWeightsFormatVersion;
  std::string architecture_id;
  Preprocessing preprocessing;
  // File order is preserved on load and save.
  std::vector<std::pair<std::string, Tensor<float>>> entries;

  const Tensor<float>* find(const std::string& name) const noexcept;
  std::size_t parameter_count() const noexcept;
  bool operator==(const WeightContainer& o) const;
};

// `<block>[/<block>...]/<layerkind>_<index>/<role>` with role one of
// weight, bias, gamma, beta, moving_mean, moving_variance.
bool is_conventional_name(const std::string& name);
// Unique, conventional names. Throws ValidationError listing offenders.
void validate_container(const WeightContainer& container);

// File image, checksum included.
std::vector<std::uint8_t> serialize_weights(const WeightContainer& container);
// Inverse of serialize_weights. Throws FormatError.
WeightContainer parse_weights(std::span<const std::uint8_t> bytes);

void save_weights(const WeightContainer& container, const std::filesystem::path& path);
WeightContainer load_weights(const std::filesystem::path& path);

enum class ApplyScope {
  all,   // container describes the whole graph
  base,  // container describes the imported base of a transfer graph
};

struct ApplyOptions {
  bool strict = true;  // reject entries the graph does not use
  ApplyScope scope = ApplyScope::all;
};

// All or nothing: on any error the model is left exactly as it was. For the
// base scope the remaining (head) parameters must already be populated.
template <typename T>
void apply_weights(Model<T>& model, const WeightContainer& container, const ApplyOptions& options = {});

// Parameters in graph order, narrowed to 32-bit.
template <typename T>
WeightContainer to_container(const Model<T>& model, const Preprocessing& preprocessing);

}  // namespace landcls
