#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sanet/tensor.hpp"

namespace sanet {

enum class Gender : int { Female = 0, Male = 1 };

enum class Split { Train, Test };

struct FaceRecord {
  Tensor image;  // [1, H, W] in [0, 1]
  Gender gender = Gender::Female;
  std::size_t identity = 0;
  Split split = Split::Train;
  std::string filename;
};

inline int label(Gender g) { return static_cast<int>(g); }

struct DatasetSplit {
  std::vector<FaceRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  std::size_t n_male() const;
  std::size_t n_female() const;
  std::size_t n_identities() const;
  std::size_t image_size() const;

  /// Throws if any record violates the shape/range/label invariants.
  void validate(std::size_t expected_size) const;
};

struct SyntheticSpec {
  std::size_t n_identities = 120;
  std::size_t images_per_identity = 5;
  std::size_t image_size = 64;
  double gender_signal_strength = 1.0;
  std::uint64_t identity_texture_seed = 0;
};

/// Per-identity latent parameters of the synthetic generator.
struct SyntheticIdentity {
  Gender gender;
  std::vector<double> texture_coefficients;
};

inline constexpr double kSyntheticNoiseSigma = 0.05;

std::vector<SyntheticIdentity> synthetic_identities(const SyntheticSpec& spec, std::uint64_t seed);

/// Face-like synthetic images: a per-identity low-frequency texture carries
/// identity; a horizontal band whose brightness depends on gender (scaled by
/// gender_signal_strength) carries gender; per-image Gaussian noise.
DatasetSplit generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

struct LoadedDataset {
  DatasetSplit data;
  std::size_t skipped_unlabeled = 0;
};

/// Loads every PNG/PGM image under root that has a row in labels_file
/// (CSV header `filename,gender,identity`), converted to gray and resized.
LoadedDataset load_dataset(const std::filesystem::path& root, const std::filesystem::path& labels_file,
                           std::size_t image_size);

/// Writes PNG images plus labels.csv in the layout load_dataset reads.
void export_dataset(const DatasetSplit& ds, const std::filesystem::path& dir);

/// Identity-disjoint split, stratified by gender, deterministic in seed.
std::pair<DatasetSplit, DatasetSplit> split_dataset(const DatasetSplit& ds, double train_fraction, std::uint64_t seed);

/// Stacks record images into [N, 1, H, W].
Tensor stack_images(const DatasetSplit& ds, std::size_t begin, std::size_t end);
Tensor stack_images(const std::vector<const FaceRecord*>& records);

}  // namespace sanet
