#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sanet/config.hpp"
#include "sanet/data.hpp"
#include "sanet/losses.hpp"
#include "sanet/models.hpp"
#include "sanet/prototypes.hpp"

namespace sanet {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stable per-purpose seed derived from the master seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

/// Rows of `step,phase,J_D,J_G,J_M,J_total`. Terms that do not apply to a
/// phase are left empty; auxiliary phases report their own objective as J_total.
class TrainingLog {
 public:
  struct Row {
    std::size_t step;
    std::string phase;
    std::optional<double> jd, jg, jm;
    double total;
  };

  static constexpr const char* kHeader = "step,phase,J_D,J_G,J_M,J_total";

  void add(Row row) { rows_.push_back(std::move(row)); }
  void warn(std::string message);

  const std::vector<Row>& rows() const { return rows_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  std::vector<double> epoch_means(const std::string& phase, std::size_t steps_per_epoch) const;

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;

 private:
  std::vector<Row> rows_;
  std::vector<std::string> warnings_;
};

/// Mini-batch index order for one epoch.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Cross-entropy training of a gender classifier with dropout active.
GenderClassifierParams train_gender_classifier(const DatasetSplit& train, const ClassifierArch& arch,
                                               const Config& config, std::uint64_t seed, std::string_view phase,
                                               TrainingLog* log = nullptr);

/// Identity-classification training of a matcher; the head is discarded before returning.
MatcherParams train_matcher(const DatasetSplit& train, const ClassifierArch& arch, const Config& config,
                            std::uint64_t seed, std::string_view phase, TrainingLog* log = nullptr);

GenderClassifierParams train_aux_gender(const DatasetSplit& train, const Config& config, TrainingLog* log = nullptr);
MatcherParams train_aux_matcher(const DatasetSplit& train, const Config& config, TrainingLog* log = nullptr);

/// Reconstruction-only training of the autoencoder on its same-gender output.
AutoencoderParams pretrain_autoencoder(const DatasetSplit& train, const PrototypeSet& ps, const Config& config,
                                       TrainingLog* log = nullptr);

struct SemiAdversarialStats {
  std::uint64_t gender_fingerprint_before = 0, gender_fingerprint_after = 0;
  std::uint64_t matcher_fingerprint_before = 0, matcher_fingerprint_after = 0;
  /// Autoencoder entries that received a non-zero gradient in at least one batch.
  std::vector<std::string> params_with_gradient;
};

/// Trains only the autoencoder against the frozen gender classifier and matcher
/// with lambda_G * J_G + lambda_M * J_M.
AutoencoderParams train_semi_adversarial(const AutoencoderParams& ae, const GenderClassifierParams& gender,
                                         const MatcherParams& matcher, const DatasetSplit& train,
                                         const PrototypeSet& ps, const LossWeights& weights, const Config& config,
                                         TrainingLog* log = nullptr, SemiAdversarialStats* stats = nullptr);

struct CheckpointInfo {
  std::string phase;
  std::uint64_t seed = 0;
  std::string config_hash;
};

void save_checkpoint(const AutoencoderParams& p, const std::filesystem::path& path, const CheckpointInfo& info);
void save_checkpoint(const GenderClassifierParams& p, const std::filesystem::path& path, const CheckpointInfo& info);
void save_checkpoint(const MatcherParams& p, const std::filesystem::path& path, const CheckpointInfo& info);

template <typename Params>
Params load_checkpoint(const std::filesystem::path& path);

template <>
AutoencoderParams load_checkpoint<AutoencoderParams>(const std::filesystem::path& path);
template <>
GenderClassifierParams load_checkpoint<GenderClassifierParams>(const std::filesystem::path& path);
template <>
MatcherParams load_checkpoint<MatcherParams>(const std::filesystem::path& path);

}  // namespace sanet
