#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "sanet/ops.hpp"
#include "sanet/training.hpp"
#include "support/full_scale_shapes.hpp"
#include "support/serialization_checks.hpp"

using namespace sanet;
namespace fs = std::filesystem;

namespace {

Config small_config() {
  Config c;
  c.image_size = 16;
  c.ae_channels = {4, 4, 6, 8};
  c.clf_channels = {4, 6, 8};
  c.clf_hidden = 8;
  c.eval_clf_channels = {4, 6};
  c.eval_clf_hidden = 8;
  c.descriptor_dim = 5;
  return c;
}

PrototypeSet flat_prototypes(std::size_t S) {
  return make_prototypes(Tensor::full({3, S, S}, 0.3f), Tensor::full({3, S, S}, 0.7f), 3, 5);
}

Tensor random_image(std::size_t S, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(S * S);
  for (auto& x : v) x = u(rng);
  return Tensor({1, S, S}, std::move(v));
}

bool same_values(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

}  // namespace

TEST_CASE("full-scale shapes at 224") {
  const auto s = testing::full_scale_shapes();
  CHECK(s.encoded == Shape{1, 12, 56, 56});
  CHECK(s.decoded == Shape{1, 128, 224, 224});
  CHECK(s.combined == Shape{1, 131, 224, 224});
  CHECK(s.output == Shape{1, 1, 224, 224});
  CHECK(s.classifier_map == Shape{1, 256, 4, 4});
  CHECK(s.gender_out == Shape{1, 1});
}

TEST_CASE("classifier depth follows the image size") {
  CHECK(ClassifierArch::blocks_for(224) == 6);
  CHECK(ClassifierArch::blocks_for(64) == 4);
  const auto a = ClassifierArch::auxiliary_from_config(Config{});
  CHECK(a.channels == std::vector<std::size_t>{32, 64, 128, 256});
  CHECK(a.final_spatial() == 4);
  CHECK(a.flat_features() == 4 * 4 * 256);
  const auto e = ClassifierArch::evaluation_from_config(Config{});
  CHECK(e.channels.size() == 3);
  CHECK_THROWS(ClassifierArch::from_progression(64, 3, {8, 16}, 0, 8, 0.2, 0.5));
}

TEST_CASE("autoencoder parameters") {
  const auto ae = init_autoencoder(AutoencoderArch::from_config(Config{}), 3);
  CHECK(ae.store.at("encoder1.weight").shape() == Shape{12, 4, 3, 3});
  CHECK(ae.store.at("final.weight").shape() == Shape{1, 131, 3, 3});
  CHECK(ae.store.size() == 10);
}

TEST_CASE("autoencoder output lies in (0,1) and is deterministic") {
  const auto c = small_config();
  const auto ae = init_autoencoder(AutoencoderArch::from_config(c), 4);
  const auto ps = flat_prototypes(16);
  const auto x = random_image(16, 1);
  const auto a = autoencode(ae, x, ps, Gender::Male, PrototypeKind::OppositeGender);
  CHECK(a.shape() == Shape{1, 16, 16});
  for (float v : a.values()) CHECK((v > 0.0f && v < 1.0f));
  CHECK(same_values(a, autoencode(ae, x, ps, Gender::Male, PrototypeKind::OppositeGender)));
  CHECK_THROWS_AS(autoencode(ae, random_image(8, 1), ps, Gender::Male, PrototypeKind::SameGender), ShapeError);
}

TEST_CASE("triple members differ only through the output prototype") {
  const auto c = small_config();
  auto ae = init_autoencoder(AutoencoderArch::from_config(c), 5);
  const auto ps = flat_prototypes(16);
  const auto x = random_image(16, 2);
  const auto t = perturb_triple(ae, x, ps, Gender::Female);
  CHECK(same_values(t.x_sm, autoencode(ae, x, ps, Gender::Female, PrototypeKind::SameGender)));
  CHECK(same_values(t.x_op, autoencode(ae, x, ps, Gender::Female, PrototypeKind::OppositeGender)));
  CHECK_FALSE(same_values(t.x_sm, t.x_op));

  // Zeroing the final-conv weights on the prototype channels removes the difference.
  auto w = ae.store.at("final.weight").mutable_values();
  const std::size_t plane = 9, C = ae.arch.combiner_channels();
  for (std::size_t ch = C - 3; ch < C; ++ch) std::fill_n(w.begin() + ch * plane, plane, 0.0f);
  const auto z = perturb_triple(ae, x, ps, Gender::Female);
  CHECK(same_values(z.x_sm, z.x_op));
  CHECK(same_values(z.x_sm, z.x_nt));
}

TEST_CASE("gender classifier output") {
  const auto c = small_config();
  const auto clf = init_gender_classifier(ClassifierArch::auxiliary_from_config(c), 6);
  const auto x = random_image(16, 3);
  const float p = gender_forward(clf, x);
  CHECK(p > 0.0f);
  CHECK(p < 1.0f);
  CHECK(gender_forward(clf, x) == p);
  std::mt19937_64 rng(1);
  CHECK_NOTHROW(gender_forward(clf, x, true, &rng));
  CHECK_THROWS(gender_forward(clf, x, true));
}

TEST_CASE("matcher descriptors") {
  auto c = small_config();
  auto m = init_matcher(ClassifierArch::auxiliary_from_config(c), 5, 3, 7);
  const auto x = random_image(16, 4);
  const auto e = matcher_embed(m, x);
  CHECK(e.shape() == Shape{5});
  CHECK(same_values(e, matcher_embed(m, x)));
  CHECK(matcher_head(m, e.reshape({1, 5})).shape() == Shape{1, 3});
  discard_matcher_head(m);
  CHECK(m.head_classes == 0);
  CHECK_FALSE(m.store.contains("head.weight"));
  CHECK(same_values(e, matcher_embed(m, x)));

  c.descriptor_dim = 2622;
  const auto big = init_matcher(ClassifierArch::auxiliary_from_config(c), c.descriptor_dim, 0, 8);
  CHECK(matcher_embed(big, x).numel() == 2622);
}

TEST_CASE("rgb filter adaptation") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> slice(9);
  for (auto& v : slice) v = u(rng);
  std::vector<float> equal;
  for (int k = 0; k < 2; ++k)
    for (int c = 0; c < 3; ++c) equal.insert(equal.end(), slice.begin(), slice.end());
  const auto adapted = adapt_rgb_filters_to_gray(Tensor({2, 3, 3, 3}, equal));
  REQUIRE(adapted.shape() == Shape{2, 1, 3, 3});
  for (std::size_t i = 0; i < 18; ++i) CHECK(adapted.values()[i] == doctest::Approx(3.0f * slice[i % 9]));
  const auto zero = adapt_rgb_filters_to_gray(Tensor::zeros({4, 3, 3, 3}));
  for (float v : zero.values()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(adapt_rgb_filters_to_gray(Tensor::zeros({4, 1, 3, 3})), ShapeError);
}

TEST_CASE("checkpoints round-trip and carry their subnetwork") {
  const auto dir = fs::temp_directory_path() / "sanet_test_models";
  fs::create_directories(dir);
  const auto c = small_config();
  const CheckpointInfo info{"pretrain", 11, c.hash()};
  const auto ae = init_autoencoder(AutoencoderArch::from_config(c), 1);
  const auto clf = init_gender_classifier(ClassifierArch::auxiliary_from_config(c), 2);
  const auto m = init_matcher(ClassifierArch::auxiliary_from_config(c), 5, 0, 3);
  save_checkpoint(ae, dir / "ae.bin", info);
  save_checkpoint(clf, dir / "g.bin", info);
  save_checkpoint(m, dir / "m.bin", info);
  CHECK(load_checkpoint<AutoencoderParams>(dir / "ae.bin").store.fingerprint() == ae.store.fingerprint());
  CHECK(load_checkpoint<GenderClassifierParams>(dir / "g.bin").arch.channels == clf.arch.channels);
  CHECK(load_checkpoint<MatcherParams>(dir / "m.bin").descriptor_dim == 5);
  CHECK_THROWS_AS(load_checkpoint<GenderClassifierParams>(dir / "ae.bin"), WeightsFormatError);
  CHECK_THROWS_AS(load_checkpoint<MatcherParams>(dir / "g.bin"), WeightsFormatError);
  const auto meta = load_weights(dir / "ae.bin");
  CHECK(meta.seed == 11);
  CHECK(meta.config_hash == c.hash());
  CHECK(meta.metadata.at("phase") == "pretrain");
  fs::remove_all(dir);
}

TEST_CASE("adapted filters on gray equal the original filters on an RGB replica") {
  CHECK(testing::rgb_adaptation_max_diff() < 1e-6);
}

TEST_CASE("checkpoint save, load, save is byte-identical") {
  CHECK(testing::checkpoints_resave_identically(fs::temp_directory_path() / "sanet_test_resave"));
}
