#pragma once

// Subnetwork I: convolutional autoencoder with proto-combiner.
// Subnetwork II: CNN gender classifier.
// Subnetwork III: face matcher producing fixed-length descriptors.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "sanet/config.hpp"
#include "sanet/param_store.hpp"
#include "sanet/prototypes.hpp"
#include "sanet/weights_io.hpp"

namespace sanet {

// ---------------------------------------------------------------------------
// Autoencoder

struct AutoencoderArch {
  std::size_t image_size = 64;
  std::size_t kernel_size = 3;
  std::size_t encoder1 = 12;
  std::size_t encoder2 = 12;
  std::size_t decoder1 = 64;
  std::size_t decoder2 = 128;
  double leaky_slope = 0.2;

  static AutoencoderArch from_config(const Config& c);
  /// Channels entering the final conv: decoder output plus an RGB prototype.
  std::size_t combiner_channels() const { return decoder2 + 3; }
};

struct AutoencoderParams {
  AutoencoderArch arch;
  ParamStore store;
};

AutoencoderParams init_autoencoder(const AutoencoderArch& arch, std::uint64_t seed);

/// Intermediate maps of one autoencoder pass.
template <typename T>
struct AutoencoderTrace {
  BasicTensor<T> encoded;   // [N, encoder2, H/4, W/4]
  BasicTensor<T> decoded;   // [N, decoder2, H, W]
  BasicTensor<T> combined;  // [N, decoder2 + 3, H, W]
  BasicTensor<T> output;    // [N, 1, H, W]
};

/// Encoder/decoder on concat(x, same-gender prototype). x: [N,1,H,W], proto: [N,3,H,W].
template <typename T>
BasicTensor<T> autoencoder_decode(const BasicParamStore<T>& store, const AutoencoderArch& arch,
                                  const BasicTensor<T>& x, const BasicTensor<T>& proto_same,
                                  BasicTensor<T>* encoded = nullptr);

/// Proto-combiner, final conv and sigmoid on decoder features.
template <typename T>
BasicTensor<T> autoencoder_combine(const BasicParamStore<T>& store, const AutoencoderArch& arch,
                                   const BasicTensor<T>& decoded, const BasicTensor<T>& proto_out,
                                   BasicTensor<T>* combined = nullptr);

/// Full batched pass. The encoder always sees the same-gender prototype;
/// proto_out selects the output variant.
template <typename T>
AutoencoderTrace<T> autoencoder_forward(const BasicParamStore<T>& store, const AutoencoderArch& arch,
                                        const BasicTensor<T>& x, const BasicTensor<T>& proto_same,
                                        const BasicTensor<T>& proto_out);

/// Single image [1,H,W] -> perturbed image [1,H,W].
Tensor autoencode(const AutoencoderParams& params, const Tensor& x, const PrototypeSet& ps, Gender y,
                  PrototypeKind kind);

struct PerturbationTriple {
  Tensor x_sm;
  Tensor x_nt;
  Tensor x_op;
};

/// All three variants from one shared encoder/decoder pass.
PerturbationTriple perturb_triple(const AutoencoderParams& params, const Tensor& x, const PrototypeSet& ps, Gender y);

/// Batched variant: x [N,1,H,W] -> per-kind [N,1,H,W], decoder shared.
std::map<PrototypeKind, Tensor> perturb_batch(const AutoencoderParams& params, const Tensor& x,
                                              const PrototypeSet& ps, const std::vector<Gender>& genders,
                                              const std::vector<PrototypeKind>& kinds);

// ---------------------------------------------------------------------------
// Convolutional trunk shared by the classifier and the matcher

struct ClassifierArch {
  std::size_t image_size = 64;
  std::size_t kernel_size = 3;
  std::vector<std::size_t> channels;  // one entry per conv block
  std::size_t hidden = 256;
  double leaky_slope = 0.2;
  double dropout = 0.5;

  /// Number of conv/max-pool blocks that brings image_size down to 4 with
  /// ceil-mode pooling (6 at 224, 4 at 64).
  static std::size_t blocks_for(std::size_t image_size);
  /// Uses the trailing blocks_for(image_size) - drop_blocks entries of the progression.
  static ClassifierArch from_progression(std::size_t image_size, std::size_t kernel_size,
                                         const std::vector<std::size_t>& progression, std::size_t drop_blocks,
                                         std::size_t hidden, double leaky_slope, double dropout);
  static ClassifierArch auxiliary_from_config(const Config& c);
  static ClassifierArch evaluation_from_config(const Config& c);

  std::size_t final_spatial() const;
  std::size_t flat_features() const { return final_spatial() * final_spatial() * channels.back(); }
};

nlohmann::json to_json(const ClassifierArch& arch);
ClassifierArch classifier_arch_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AutoencoderArch& arch);
AutoencoderArch autoencoder_arch_from_json(const nlohmann::json& j);

template <typename T>
BasicTensor<T> trunk_forward(const BasicParamStore<T>& store, const ClassifierArch& arch, const BasicTensor<T>& x);

// ---------------------------------------------------------------------------
// Gender classifier

struct GenderClassifierParams {
  ClassifierArch arch;
  ParamStore store;
};

GenderClassifierParams init_gender_classifier(const ClassifierArch& arch, std::uint64_t seed);

/// x [N,1,H,W] -> pre-sigmoid "male" scores [N,1]. Dropout only when rng is given.
template <typename T>
BasicTensor<T> gender_logits_batch(const BasicParamStore<T>& store, const ClassifierArch& arch,
                                   const BasicTensor<T>& x, std::mt19937_64* dropout_rng = nullptr);

/// Probabilities of "male" [N,1].
template <typename T>
BasicTensor<T> gender_forward_batch(const BasicParamStore<T>& store, const ClassifierArch& arch,
                                    const BasicTensor<T>& x, std::mt19937_64* dropout_rng = nullptr);

/// Single image [1,H,W]. training=true enables dropout (drawn from rng).
float gender_forward(const GenderClassifierParams& params, const Tensor& x, bool training = false,
                     std::mt19937_64* rng = nullptr);

// ---------------------------------------------------------------------------
// Matcher

struct MatcherParams {
  ClassifierArch arch;
  std::size_t descriptor_dim = 64;
  std::size_t head_classes = 0;  // 0 once the identity head is discarded
  ParamStore store;
};

MatcherParams init_matcher(const ClassifierArch& arch, std::size_t descriptor_dim, std::size_t head_classes,
                           std::uint64_t seed);

/// x [N,1,H,W] -> descriptors [N, descriptor_dim].
template <typename T>
BasicTensor<T> matcher_embed_batch(const BasicParamStore<T>& store, const ClassifierArch& arch,
                                   const BasicTensor<T>& x, std::mt19937_64* dropout_rng = nullptr);

/// Identity logits [N, head_classes] from descriptors.
Tensor matcher_head(const MatcherParams& params, const Tensor& descriptors);

/// Removes the identity head entries.
void discard_matcher_head(MatcherParams& params);

Tensor matcher_embed(const MatcherParams& params, const Tensor& x);

/// Sums the three input-channel slices of an RGB first-layer kernel.
Tensor adapt_rgb_filters_to_gray(const Tensor& kernel);

// ---------------------------------------------------------------------------
// Serialisation with a `subnetwork` tag (I, II, III).

WeightsFile to_weights(const AutoencoderParams& p);
WeightsFile to_weights(const GenderClassifierParams& p);
WeightsFile to_weights(const MatcherParams& p);
AutoencoderParams autoencoder_from_weights(const WeightsFile& f);
GenderClassifierParams gender_classifier_from_weights(const WeightsFile& f);
MatcherParams matcher_from_weights(const WeightsFile& f);

}  // namespace sanet
