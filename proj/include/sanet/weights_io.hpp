#pragma once

// Weights container: one line of UTF-8 JSON (format version, entries with
// name/shape/trainable, seed, config hash, free-form metadata) terminated by
// '\n', followed by every entry's values as little-endian float32 in header
// order.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sanet/param_store.hpp"

namespace sanet {

inline constexpr int kWeightsFormatVersion = 1;

class WeightsFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WeightsFile {
  ParamStore params;
  std::uint64_t seed = 0;
  std::string config_hash;
  nlohmann::json metadata = nlohmann::json::object();
};

std::string encode_weights(const WeightsFile& file);
WeightsFile decode_weights(const std::string& bytes);

void save_weights(const WeightsFile& file, const std::filesystem::path& path);
WeightsFile load_weights(const std::filesystem::path& path);

}  // namespace sanet
