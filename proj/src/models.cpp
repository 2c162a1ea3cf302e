#include "sanet/models.hpp"

#include <fmt/format.h>

#include <cmath>

#include "sanet/ops.hpp"

namespace sanet {
namespace {

void add_conv(ParamStore& store, const std::string& name, std::size_t out, std::size_t in, std::size_t k,
              std::mt19937_64& rng) {
  store.add(name + ".weight", he_uniform(Shape{out, in, k, k}, in * k * k, rng));
  store.add(name + ".bias", Tensor::zeros(Shape{out}));
}

void add_dense(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  store.add(name + ".weight", he_uniform(Shape{in, out}, in, rng));
  store.add(name + ".bias", Tensor::zeros(Shape{out}));
}

template <typename T>
BasicTensor<T> conv_layer(const BasicParamStore<T>& store, const std::string& name, const BasicTensor<T>& x) {
  return conv2d(x, store.at(name + ".weight"), store.at(name + ".bias"));
}

template <typename T>
BasicTensor<T> dense_layer(const BasicParamStore<T>& store, const std::string& name, const BasicTensor<T>& x) {
  return dense(x, store.at(name + ".weight"), store.at(name + ".bias"));
}

void require_image_batch(const Shape& s, std::size_t channels, std::size_t size, const char* what) {
  if (s.size() != 4 || s[1] != channels || s[2] != size || s[3] != size) {
    throw ShapeError(fmt::format("{}: expected [N,{},{},{}], got {}", what, channels, size, size, shape_to_string(s)));
  }
}

const std::string& subnetwork_tag(const WeightsFile& f) {
  static const std::string none;
  if (!f.metadata.contains("subnetwork")) return none;
  return f.metadata.at("subnetwork").get_ref<const std::string&>();
}

void expect_tag(const WeightsFile& f, const char* tag, const char* what) {
  if (subnetwork_tag(f) != tag) {
    throw WeightsFormatError(fmt::format("checkpoint holds subnetwork '{}' but {} (subnetwork {}) was requested",
                                         subnetwork_tag(f), what, tag));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Autoencoder

AutoencoderArch AutoencoderArch::from_config(const Config& c) {
  AutoencoderArch a;
  a.image_size = c.image_size;
  a.kernel_size = c.kernel_size;
  a.encoder1 = c.ae_channels.at(0);
  a.encoder2 = c.ae_channels.at(1);
  a.decoder1 = c.ae_channels.at(2);
  a.decoder2 = c.ae_channels.at(3);
  a.leaky_slope = c.leaky_slope;
  return a;
}

AutoencoderParams init_autoencoder(const AutoencoderArch& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AutoencoderParams p{arch, {}};
  const std::size_t k = arch.kernel_size;
  add_conv(p.store, "encoder1", arch.encoder1, 1 + 3, k, rng);
  add_conv(p.store, "encoder2", arch.encoder2, arch.encoder1, k, rng);
  add_conv(p.store, "decoder1", arch.decoder1, arch.encoder2, k, rng);
  add_conv(p.store, "decoder2", arch.decoder2, arch.decoder1, k, rng);
  add_conv(p.store, "final", 1, arch.combiner_channels(), k, rng);
  return p;
}

template <typename T>
BasicTensor<T> autoencoder_decode(const BasicParamStore<T>& store, const AutoencoderArch& arch,
                                  const BasicTensor<T>& x, const BasicTensor<T>& proto_same, BasicTensor<T>* encoded) {
  require_image_batch(x.shape(), 1, arch.image_size, "autoencoder input");
  require_image_batch(proto_same.shape(), 3, arch.image_size, "autoencoder prototype");
  if (proto_same.dim(0) != x.dim(0)) throw ShapeError("autoencoder: prototype batch differs from image batch");
  const T slope = static_cast<T>(arch.leaky_slope);
  auto h = concat_channels(x, proto_same);
  h = avg_pool2d(leaky_relu(conv_layer(store, "encoder1", h), slope));
  h = avg_pool2d(leaky_relu(conv_layer(store, "encoder2", h), slope));
  if (encoded) *encoded = h;
  h = upsample_nearest2d(leaky_relu(conv_layer(store, "decoder1", h), slope));
  h = upsample_nearest2d(leaky_relu(conv_layer(store, "decoder2", h), slope));
  return h;
}

template <typename T>
BasicTensor<T> autoencoder_combine(const BasicParamStore<T>& store, const AutoencoderArch& arch,
                                   const BasicTensor<T>& decoded, const BasicTensor<T>& proto_out,
                                   BasicTensor<T>* combined) {
  require_image_batch(proto_out.shape(), 3, arch.image_size, "proto-combiner prototype");
  auto c = concat_channels(decoded, proto_out);
  if (combined) *combined = c;
  return sigmoid(conv_layer(store, "final", c));
}

template <typename T>
AutoencoderTrace<T> autoencoder_forward(const BasicParamStore<T>& store, const AutoencoderArch& arch,
                                        const BasicTensor<T>& x, const BasicTensor<T>& proto_same,
                                        const BasicTensor<T>& proto_out) {
  AutoencoderTrace<T> t;
  t.decoded = autoencoder_decode(store, arch, x, proto_same, &t.encoded);
  t.output = autoencoder_combine(store, arch, t.decoded, proto_out, &t.combined);
  return t;
}

namespace {

Tensor as_batch(const Tensor& x, std::size_t size) {
  if (x.shape() != Shape{1, size, size}) {
    throw ShapeError(fmt::format("expected image [1,{},{}], got {}", size, size, shape_to_string(x.shape())));
  }
  return x.reshape(Shape{1, 1, size, size});
}

}  // namespace

Tensor autoencode(const AutoencoderParams& params, const Tensor& x, const PrototypeSet& ps, Gender y,
                  PrototypeKind kind) {
  const auto out = perturb_batch(params, as_batch(x, params.arch.image_size), ps, {y}, {kind});
  return out.at(kind).reshape(Shape{1, params.arch.image_size, params.arch.image_size});
}

PerturbationTriple perturb_triple(const AutoencoderParams& params, const Tensor& x, const PrototypeSet& ps, Gender y) {
  const std::size_t S = params.arch.image_size;
  auto out = perturb_batch(params, as_batch(x, S), ps, {y},
                           {PrototypeKind::SameGender, PrototypeKind::Neutral, PrototypeKind::OppositeGender});
  return {out.at(PrototypeKind::SameGender).reshape(Shape{1, S, S}),
          out.at(PrototypeKind::Neutral).reshape(Shape{1, S, S}),
          out.at(PrototypeKind::OppositeGender).reshape(Shape{1, S, S})};
}

std::map<PrototypeKind, Tensor> perturb_batch(const AutoencoderParams& params, const Tensor& x,
                                              const PrototypeSet& ps, const std::vector<Gender>& genders,
                                              const std::vector<PrototypeKind>& kinds) {
  if (ps.male.dim(1) != params.arch.image_size) {
    throw ShapeError(fmt::format("prototypes are {}x{} but the autoencoder expects {}", ps.male.dim(1), ps.male.dim(2),
                                 params.arch.image_size));
  }
  const auto decoded = autoencoder_decode(params.store, params.arch, x.detach(),
                                          prototype_batch(ps, genders, PrototypeKind::SameGender));
  std::map<PrototypeKind, Tensor> out;
  for (auto kind : kinds) {
    out[kind] = autoencoder_combine(params.store, params.arch, decoded, prototype_batch(ps, genders, kind)).detach();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classifier trunk

std::size_t ClassifierArch::blocks_for(std::size_t image_size) {
  std::size_t blocks = 0;
  for (std::size_t s = image_size; s > 4; s = (s + 1) / 2) ++blocks;
  return std::max<std::size_t>(blocks, 1);
}

ClassifierArch ClassifierArch::from_progression(std::size_t image_size, std::size_t kernel_size,
                                                const std::vector<std::size_t>& progression, std::size_t drop_blocks,
                                                std::size_t hidden, double leaky_slope, double dropout) {
  const std::size_t full = blocks_for(image_size);
  if (drop_blocks >= full) throw std::invalid_argument("classifier would have no conv blocks");
  const std::size_t blocks = full - drop_blocks;
  if (progression.size() < blocks) {
    throw std::invalid_argument(fmt::format("channel progression has {} entries, {} blocks needed at image size {}",
                                            progression.size(), blocks, image_size));
  }
  ClassifierArch a;
  a.image_size = image_size;
  a.kernel_size = kernel_size;
  a.channels.assign(progression.end() - static_cast<long>(blocks), progression.end());
  a.hidden = hidden;
  a.leaky_slope = leaky_slope;
  a.dropout = dropout;
  return a;
}

ClassifierArch ClassifierArch::auxiliary_from_config(const Config& c) {
  return from_progression(c.image_size, c.kernel_size, c.clf_channels, 0, c.clf_hidden, c.leaky_slope, c.dropout);
}

ClassifierArch ClassifierArch::evaluation_from_config(const Config& c) {
  return from_progression(c.image_size, c.kernel_size, c.eval_clf_channels, 1, c.eval_clf_hidden, c.leaky_slope,
                          c.dropout);
}

std::size_t ClassifierArch::final_spatial() const {
  std::size_t s = image_size;
  for (std::size_t i = 0; i < channels.size(); ++i) s = (s + 1) / 2;
  return s;
}

nlohmann::json to_json(const ClassifierArch& a) {
  return {{"image_size", a.image_size}, {"kernel_size", a.kernel_size}, {"channels", a.channels},
          {"hidden", a.hidden},         {"leaky_slope", a.leaky_slope}, {"dropout", a.dropout}};
}

ClassifierArch classifier_arch_from_json(const nlohmann::json& j) {
  ClassifierArch a;
  a.image_size = j.at("image_size").get<std::size_t>();
  a.kernel_size = j.at("kernel_size").get<std::size_t>();
  a.channels = j.at("channels").get<std::vector<std::size_t>>();
  a.hidden = j.at("hidden").get<std::size_t>();
  a.leaky_slope = j.at("leaky_slope").get<double>();
  a.dropout = j.at("dropout").get<double>();
  return a;
}

nlohmann::json to_json(const AutoencoderArch& a) {
  return {{"image_size", a.image_size}, {"kernel_size", a.kernel_size}, {"encoder1", a.encoder1},
          {"encoder2", a.encoder2},     {"decoder1", a.decoder1},       {"decoder2", a.decoder2},
          {"leaky_slope", a.leaky_slope}};
}

AutoencoderArch autoencoder_arch_from_json(const nlohmann::json& j) {
  AutoencoderArch a;
  a.image_size = j.at("image_size").get<std::size_t>();
  a.kernel_size = j.at("kernel_size").get<std::size_t>();
  a.encoder1 = j.at("encoder1").get<std::size_t>();
  a.encoder2 = j.at("encoder2").get<std::size_t>();
  a.decoder1 = j.at("decoder1").get<std::size_t>();
  a.decoder2 = j.at("decoder2").get<std::size_t>();
  a.leaky_slope = j.at("leaky_slope").get<double>();
  return a;
}

namespace {

void add_trunk(ParamStore& store, const ClassifierArch& arch, std::mt19937_64& rng) {
  std::size_t in = 1;
  for (std::size_t i = 0; i < arch.channels.size(); ++i) {
    add_conv(store, fmt::format("conv{}", i + 1), arch.channels[i], in, arch.kernel_size, rng);
    in = arch.channels[i];
  }
}

}  // namespace

template <typename T>
BasicTensor<T> trunk_forward(const BasicParamStore<T>& store, const ClassifierArch& arch, const BasicTensor<T>& x) {
  require_image_batch(x.shape(), 1, arch.image_size, "classifier input");
  const T slope = static_cast<T>(arch.leaky_slope);
  // Inputs are centred on mid-grey.
  BasicTensor<T> h = add_scalar(x, T(-0.5));
  for (std::size_t i = 0; i < arch.channels.size(); ++i) {
    h = max_pool2d(leaky_relu(conv_layer(store, fmt::format("conv{}", i + 1), h), slope), true);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Gender classifier

GenderClassifierParams init_gender_classifier(const ClassifierArch& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GenderClassifierParams p{arch, {}};
  add_trunk(p.store, arch, rng);
  add_dense(p.store, "fc1", arch.flat_features(), arch.hidden, rng);
  add_dense(p.store, "fc2", arch.hidden, 1, rng);
  return p;
}

template <typename T>
BasicTensor<T> gender_logits_batch(const BasicParamStore<T>& store, const ClassifierArch& arch,
                                   const BasicTensor<T>& x, std::mt19937_64* dropout_rng) {
  const T slope = static_cast<T>(arch.leaky_slope);
  const T p = static_cast<T>(arch.dropout);
  auto h = flatten(trunk_forward(store, arch, x));
  if (dropout_rng) h = dropout(h, p, *dropout_rng);
  h = leaky_relu(dense_layer(store, "fc1", h), slope);
  if (dropout_rng) h = dropout(h, p, *dropout_rng);
  return dense_layer(store, "fc2", h);
}

template <typename T>
BasicTensor<T> gender_forward_batch(const BasicParamStore<T>& store, const ClassifierArch& arch,
                                    const BasicTensor<T>& x, std::mt19937_64* dropout_rng) {
  return sigmoid(gender_logits_batch(store, arch, x, dropout_rng));
}

float gender_forward(const GenderClassifierParams& params, const Tensor& x, bool training, std::mt19937_64* rng) {
  if (training && !rng) throw std::invalid_argument("gender_forward: training mode needs a dropout generator");
  const std::size_t S = params.arch.image_size;
  return gender_forward_batch(params.store, params.arch, as_batch(x, S).detach(), training ? rng : nullptr).item();
}

// ---------------------------------------------------------------------------
// Matcher

MatcherParams init_matcher(const ClassifierArch& arch, std::size_t descriptor_dim, std::size_t head_classes,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MatcherParams p{arch, descriptor_dim, head_classes, {}};
  add_trunk(p.store, arch, rng);
  add_dense(p.store, "embed", arch.flat_features(), descriptor_dim, rng);
  if (head_classes > 0) add_dense(p.store, "head", descriptor_dim, head_classes, rng);
  return p;
}

template <typename T>
BasicTensor<T> matcher_embed_batch(const BasicParamStore<T>& store, const ClassifierArch& arch,
                                   const BasicTensor<T>& x, std::mt19937_64* dropout_rng) {
  auto h = flatten(trunk_forward(store, arch, x));
  if (dropout_rng) h = dropout(h, static_cast<T>(arch.dropout), *dropout_rng);
  return leaky_relu(dense_layer(store, "embed", h), static_cast<T>(arch.leaky_slope));
}

Tensor matcher_head(const MatcherParams& params, const Tensor& descriptors) {
  if (params.head_classes == 0) throw std::logic_error("matcher identity head has been discarded");
  return dense_layer(params.store, "head", descriptors);
}

void discard_matcher_head(MatcherParams& params) {
  ParamStore kept;
  for (const auto& e : params.store.entries()) {
    if (e.name.rfind("head.", 0) != 0) kept.add(e.name, e.tensor.detach(), e.trainable);
  }
  params.store = std::move(kept);
  params.head_classes = 0;
}

Tensor matcher_embed(const MatcherParams& params, const Tensor& x) {
  const std::size_t S = params.arch.image_size;
  return matcher_embed_batch(params.store, params.arch, as_batch(x, S).detach())
      .detach()
      .reshape(Shape{params.descriptor_dim});
}

Tensor adapt_rgb_filters_to_gray(const Tensor& kernel) {
  if (kernel.rank() != 4 || kernel.dim(1) != 3) {
    throw ShapeError("adapt_rgb_filters_to_gray: expected kernel [K,3,kh,kw], got " + shape_to_string(kernel.shape()));
  }
  const std::size_t K = kernel.dim(0), plane = kernel.dim(2) * kernel.dim(3);
  std::vector<float> out(K * plane, 0.0f);
  auto v = kernel.values();
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < plane; ++i) out[k * plane + i] += v[(k * 3 + c) * plane + i];
    }
  }
  return Tensor(Shape{K, 1, kernel.dim(2), kernel.dim(3)}, std::move(out));
}

// ---------------------------------------------------------------------------
// Serialisation

WeightsFile to_weights(const AutoencoderParams& p) {
  WeightsFile f{p.store.clone(), 0, {}, {{"subnetwork", "I"}, {"arch", to_json(p.arch)}}};
  return f;
}

WeightsFile to_weights(const GenderClassifierParams& p) {
  return WeightsFile{p.store.clone(), 0, {}, {{"subnetwork", "II"}, {"arch", to_json(p.arch)}}};
}

WeightsFile to_weights(const MatcherParams& p) {
  return WeightsFile{p.store.clone(),
                     0,
                     {},
                     {{"subnetwork", "III"},
                      {"arch", to_json(p.arch)},
                      {"descriptor_dim", p.descriptor_dim},
                      {"head_classes", p.head_classes}}};
}

AutoencoderParams autoencoder_from_weights(const WeightsFile& f) {
  expect_tag(f, "I", "an autoencoder");
  return AutoencoderParams{autoencoder_arch_from_json(f.metadata.at("arch")), f.params.clone()};
}

GenderClassifierParams gender_classifier_from_weights(const WeightsFile& f) {
  expect_tag(f, "II", "a gender classifier");
  return GenderClassifierParams{classifier_arch_from_json(f.metadata.at("arch")), f.params.clone()};
}

MatcherParams matcher_from_weights(const WeightsFile& f) {
  expect_tag(f, "III", "a matcher");
  return MatcherParams{classifier_arch_from_json(f.metadata.at("arch")), f.metadata.at("descriptor_dim").get<std::size_t>(),
                       f.metadata.at("head_classes").get<std::size_t>(), f.params.clone()};
}

#define SANET_INSTANTIATE_MODELS(T)                                                                             \
  template BasicTensor<T> autoencoder_decode(const BasicParamStore<T>&, const AutoencoderArch&,                 \
                                             const BasicTensor<T>&, const BasicTensor<T>&, BasicTensor<T>*);    \
  template BasicTensor<T> autoencoder_combine(const BasicParamStore<T>&, const AutoencoderArch&,                \
                                              const BasicTensor<T>&, const BasicTensor<T>&, BasicTensor<T>*);   \
  template AutoencoderTrace<T> autoencoder_forward(const BasicParamStore<T>&, const AutoencoderArch&,           \
                                                   const BasicTensor<T>&, const BasicTensor<T>&,                \
                                                   const BasicTensor<T>&);                                      \
  template BasicTensor<T> trunk_forward(const BasicParamStore<T>&, const ClassifierArch&, const BasicTensor<T>&); \
  template BasicTensor<T> gender_logits_batch(const BasicParamStore<T>&, const ClassifierArch&,                 \
                                              const BasicTensor<T>&, std::mt19937_64*);                       \
  template BasicTensor<T> gender_forward_batch(const BasicParamStore<T>&, const ClassifierArch&,                \
                                               const BasicTensor<T>&, std::mt19937_64*);                        \
  template BasicTensor<T> matcher_embed_batch(const BasicParamStore<T>&, const ClassifierArch&,                 \
                                              const BasicTensor<T>&, std::mt19937_64*);

SANET_INSTANTIATE_MODELS(float)
SANET_INSTANTIATE_MODELS(double)

#undef SANET_INSTANTIATE_MODELS

}  // namespace sanet
