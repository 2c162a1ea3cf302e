#pragma once

// Hyperparameters for every phase. The text form is one `key = value` per
// line; `#` starts a comment. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace sanet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Config {
  // data
  std::size_t image_size = 64;
  std::size_t n_identities = 120;
  std::size_t images_per_identity = 5;
  double gender_signal_strength = 1.0;
  double train_fraction = 0.8;

  // architecture
  std::size_t kernel_size = 3;
  double leaky_slope = 0.2;
  std::vector<std::size_t> ae_channels{12, 12, 64, 128};
  std::vector<std::size_t> clf_channels{8, 16, 32, 64, 128, 256};
  std::size_t clf_hidden = 256;
  std::vector<std::size_t> eval_clf_channels{12, 24, 48, 96, 192};
  std::size_t eval_clf_hidden = 128;
  std::size_t descriptor_dim = 64;
  double dropout = 0.5;

  // optimisation
  std::uint64_t seed = 1234;
  std::size_t batch = 32;
  std::size_t epochs_aux = 5;
  std::size_t epochs_pretrain = 30;
  std::size_t epochs_train = 10;
  double lr_aux = 1e-3;
  double lr_pretrain = 1e-3;
  double lr_train = 1e-3;
  double lambda_G = 1.0;
  double lambda_M = 0.01;

  // evaluation
  std::size_t impostor_limit = 50000;
  double fmr_target = 0.01;

  static Config defaults() { return Config{}; }
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  /// Applies one `key=value` override.
  void set(const std::string& key, const std::string& value);
  std::string to_text() const;
  /// FNV-1a of to_text(), hex encoded.
  std::string hash() const;
};

}  // namespace sanet
