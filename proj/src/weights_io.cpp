#include "sanet/weights_io.hpp"

#include <fmt/format.h>

#include <bit>
#include <fstream>
#include <sstream>

namespace sanet {

std::string encode_weights(const WeightsFile& file) {
  nlohmann::json header;
  header["format"] = "sanet-weights";
  header["format_version"] = kWeightsFormatVersion;
  header["seed"] = file.seed;
  header["config_hash"] = file.config_hash;
  header["metadata"] = file.metadata;
  auto entries = nlohmann::json::array();
  for (const auto& e : file.params.entries()) {
    entries.push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"trainable", e.trainable}});
  }
  header["entries"] = std::move(entries);

  std::string out = header.dump();
  out.push_back('\n');
  for (const auto& e : file.params.entries()) {
    for (float v : e.tensor.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
    }
  }
  return out;
}

WeightsFile decode_weights(const std::string& bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw WeightsFormatError("weights: missing header terminator");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::exception& e) {
    throw WeightsFormatError(std::string("weights: corrupt header: ") + e.what());
  }
  WeightsFile file;
  try {
    if (header.at("format").get<std::string>() != "sanet-weights") throw WeightsFormatError("weights: not a sanet weights file");
    const int version = header.at("format_version").get<int>();
    if (version != kWeightsFormatVersion) {
      throw WeightsFormatError(fmt::format("weights: format version {} not supported (expected {})", version,
                                           kWeightsFormatVersion));
    }
    file.seed = header.at("seed").get<std::uint64_t>();
    file.config_hash = header.at("config_hash").get<std::string>();
    file.metadata = header.at("metadata");
    std::size_t offset = newline + 1;
    for (const auto& entry : header.at("entries")) {
      auto shape = entry.at("shape").get<Shape>();
      const std::size_t n = shape_numel(shape);
      if (offset + 4 * n > bytes.size()) {
        throw WeightsFormatError(fmt::format("weights: truncated data for entry '{}'", entry.at("name").get<std::string>()));
      }
      std::vector<float> values(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 4 * i + b])) << (8 * b);
        values[i] = std::bit_cast<float>(bits);
      }
      offset += 4 * n;
      file.params.add(entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values)),
                      entry.at("trainable").get<bool>());
    }
    if (offset != bytes.size()) throw WeightsFormatError("weights: trailing bytes after last entry");
  } catch (const nlohmann::json::exception& e) {
    throw WeightsFormatError(std::string("weights: corrupt header: ") + e.what());
  } catch (const ShapeError& e) {
    throw WeightsFormatError(std::string("weights: corrupt header: ") + e.what());
  }
  return file;
}

void save_weights(const WeightsFile& file, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write weights file: " + path.string());
  const auto bytes = encode_weights(file);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing weights file: " + path.string());
}

WeightsFile load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weights file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_weights(ss.str());
}

}  // namespace sanet
