#include <doctest.h>

#include <fmt/format.h>

#include <filesystem>

#include "sanet/prototypes.hpp"

using namespace sanet;

namespace {

FaceRecord flat_record(float value, Gender g, std::size_t id) {
  return {Tensor::full({1, 2, 2}, value), g, id, Split::Train, fmt::format("r{}.png", id)};
}

DatasetSplit four_records() {
  DatasetSplit ds;
  ds.records = {flat_record(0.2f, Gender::Male, 0), flat_record(0.4f, Gender::Male, 1),
                flat_record(0.9f, Gender::Female, 2), flat_record(0.5f, Gender::Female, 3)};
  ds.records[3].image.mutable_values()[1] = 0.7f;
  return ds;
}

}  // namespace

TEST_CASE("prototypes are per-gender pixel means replicated to three channels") {
  const auto ps = compute_prototypes(four_records());
  REQUIRE(ps.male.shape() == Shape{3, 2, 2});
  for (float v : ps.male.values()) CHECK(v == doctest::Approx(0.3f));
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(ps.female.values()[c * 4 + 0] == doctest::Approx(0.7f));
    CHECK(ps.female.values()[c * 4 + 1] == doctest::Approx(0.8f));
  }
  CHECK(ps.alpha_male == 0.5);
  CHECK(ps.alpha_female == 0.5);
}

TEST_CASE("neutral prototype is the weighted mean, exactly") {
  const auto ps = compute_prototypes(four_records());
  for (std::size_t i = 0; i < ps.neutral.numel(); ++i) {
    const double expect = ps.alpha_female * ps.female.values()[i] + ps.alpha_male * ps.male.values()[i];
    CHECK(ps.neutral.values()[i] == static_cast<float>(expect));
  }
  CHECK(ps.alpha_male + ps.alpha_female == 1.0);
}

TEST_CASE("class proportions from the large-scale training counts") {
  const auto ps = make_prototypes(Tensor::full({3, 1, 1}, 0.6f), Tensor::full({3, 1, 1}, 0.2f), 65160, 92190);
  CHECK(ps.alpha_male == doctest::Approx(0.4141).epsilon(1e-4));
  CHECK(ps.alpha_male == 65160.0 / 157350.0);
  CHECK(ps.neutral.values()[0] == static_cast<float>(ps.alpha_female * 0.2f + ps.alpha_male * 0.6f));
}

TEST_CASE("selection follows the label") {
  const auto ps = compute_prototypes(four_records());
  CHECK(&select_prototype(ps, Gender::Male, PrototypeKind::SameGender) == &ps.male);
  CHECK(&select_prototype(ps, Gender::Male, PrototypeKind::OppositeGender) == &ps.female);
  CHECK(&select_prototype(ps, Gender::Female, PrototypeKind::OppositeGender) == &ps.male);
  CHECK(&select_prototype(ps, Gender::Female, PrototypeKind::SameGender) == &ps.female);
  CHECK(&select_prototype(ps, Gender::Female, PrototypeKind::Neutral) ==
        &select_prototype(ps, Gender::Male, PrototypeKind::Neutral));
  for (Gender y : {Gender::Male, Gender::Female}) {
    const Gender flipped = y == Gender::Male ? Gender::Female : Gender::Male;
    CHECK(&select_prototype(ps, y, PrototypeKind::SameGender) ==
          &select_prototype(ps, flipped, PrototypeKind::OppositeGender));
  }
  const auto batch = prototype_batch(ps, {Gender::Male, Gender::Female}, PrototypeKind::OppositeGender);
  CHECK(batch.shape() == Shape{2, 3, 2, 2});
  CHECK(batch.values()[0] == ps.female.values()[0]);
  CHECK(batch.values()[12] == ps.male.values()[0]);
}

TEST_CASE("kind names") {
  CHECK(parse_prototype_kind("SM") == PrototypeKind::SameGender);
  CHECK(parse_prototype_kind("NT") == PrototypeKind::Neutral);
  CHECK(parse_prototype_kind("OP") == PrototypeKind::OppositeGender);
  CHECK(to_string(PrototypeKind::Neutral) == "NT");
  CHECK_THROWS(parse_prototype_kind("XX"));
}

TEST_CASE("single-gender data is rejected") {
  DatasetSplit ds;
  ds.records = {flat_record(0.2f, Gender::Male, 0), flat_record(0.4f, Gender::Male, 1)};
  CHECK_THROWS(compute_prototypes(ds));
}

TEST_CASE("saved prototypes reload to 8-bit precision with exact proportions") {
  const auto dir = std::filesystem::temp_directory_path() / "sanet_test_protos";
  const auto ps = compute_prototypes(four_records());
  save_prototypes(ps, dir);
  const auto back = load_prototypes(dir);
  CHECK(back.n_male == 2);
  CHECK(back.alpha_male == ps.alpha_male);
  for (std::size_t i = 0; i < ps.male.numel(); ++i) {
    CHECK(std::abs(back.male.values()[i] - ps.male.values()[i]) <= 0.5f / 255 + 1e-6f);
    CHECK(std::abs(back.female.values()[i] - ps.female.values()[i]) <= 0.5f / 255 + 1e-6f);
  }
  std::filesystem::remove_all(dir);
}
