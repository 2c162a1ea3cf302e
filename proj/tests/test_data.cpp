#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "sanet/data.hpp"
#include "sanet/image_io.hpp"

using namespace sanet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const char* name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Logistic regression on standardised pixels, plain batch gradient descent.
double gender_probe_accuracy(const DatasetSplit& train, const DatasetSplit& test) {
  const std::size_t D = train.records.front().image.numel();
  std::vector<double> mean(D, 0.0), sd(D, 0.0);
  for (const auto& r : train.records)
    for (std::size_t i = 0; i < D; ++i) mean[i] += r.image.values()[i] / train.size();
  for (const auto& r : train.records)
    for (std::size_t i = 0; i < D; ++i) sd[i] += std::pow(r.image.values()[i] - mean[i], 2) / train.size();
  for (auto& s : sd) s = std::sqrt(s) + 1e-6;
  auto feat = [&](const FaceRecord& r, std::size_t i) { return (r.image.values()[i] - mean[i]) / sd[i]; };

  std::vector<double> w(D, 0.0);
  double b = 0.0;
  for (int it = 0; it < 200; ++it) {
    std::vector<double> gw(D, 0.0);
    double gb = 0.0;
    for (const auto& r : train.records) {
      double z = b;
      for (std::size_t i = 0; i < D; ++i) z += w[i] * feat(r, i);
      const double err = 1.0 / (1.0 + std::exp(-z)) - label(r.gender);
      for (std::size_t i = 0; i < D; ++i) gw[i] += err * feat(r, i);
      gb += err;
    }
    for (std::size_t i = 0; i < D; ++i) w[i] -= 0.01 * (gw[i] / train.size() + 1e-2 * w[i]);
    b -= 0.01 * gb / train.size();
  }
  std::size_t correct = 0;
  for (const auto& r : test.records) {
    double z = b;
    for (std::size_t i = 0; i < D; ++i) z += w[i] * feat(r, i);
    correct += (z > 0) == (r.gender == Gender::Male);
  }
  return 100.0 * correct / test.size();
}

// Nearest identity centroid: first images of each identity build the centroid,
// the last one is classified.
double identity_probe_accuracy(const DatasetSplit& ds, std::size_t per_identity) {
  std::map<std::size_t, std::vector<double>> centroid;
  std::map<std::size_t, std::size_t> seen;
  std::vector<const FaceRecord*> probes;
  for (const auto& r : ds.records) {
    if (++seen[r.identity] == per_identity) {
      probes.push_back(&r);
      continue;
    }
    auto& c = centroid[r.identity];
    c.resize(r.image.numel(), 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += r.image.values()[i];
  }
  std::size_t correct = 0;
  for (const auto* p : probes) {
    double best = 1e300;
    std::size_t who = 0;
    for (const auto& [id, c] : centroid) {
      double d = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) d += std::pow(p->image.values()[i] - c[i] / (per_identity - 1), 2);
      if (d < best) best = d, who = id;
    }
    correct += who == p->identity;
  }
  return 100.0 * correct / probes.size();
}

}  // namespace

TEST_CASE("synthetic dataset shape, range and balance") {
  const auto ds = generate_synthetic({2, 2, 16, 1.0, 0}, 1);
  CHECK(ds.size() == 4);
  CHECK(ds.n_identities() == 2);
  CHECK(ds.n_male() == 2);
  CHECK(ds.n_female() == 2);
  CHECK_NOTHROW(ds.validate(16));
  for (const auto& r : ds.records) {
    CHECK(r.image.shape() == Shape{1, 16, 16});
    for (float v : r.image.values()) CHECK((v >= 0.0f && v <= 1.0f));
  }
  CHECK_THROWS(ds.validate(32));
}

TEST_CASE("synthetic generation is deterministic in the seed") {
  const auto a = generate_synthetic({6, 3, 24, 1.0, 0}, 5);
  const auto b = generate_synthetic({6, 3, 24, 1.0, 0}, 5);
  const auto c = generate_synthetic({6, 3, 24, 1.0, 0}, 6);
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    all_equal &= std::equal(a.records[i].image.values().begin(), a.records[i].image.values().end(),
                            b.records[i].image.values().begin());
    any_diff |= !std::equal(a.records[i].image.values().begin(), a.records[i].image.values().end(),
                            c.records[i].image.values().begin());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("gender and identity parameters are uncorrelated") {
  const auto ids = synthetic_identities({500, 1, 64, 1.0, 0}, 17);
  const std::size_t K = ids.front().texture_coefficients.size() / 4;
  std::vector<double> g, energy;
  for (const auto& id : ids) {
    g.push_back(label(id.gender));
    double e = 0.0;
    for (std::size_t k = 0; k < K; ++k) e += std::pow(id.texture_coefficients[4 * k], 2);
    energy.push_back(e);
  }
  auto corr = [](const std::vector<double>& a, const std::vector<double>& b) {
    const double n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
  };
  CHECK(std::abs(corr(g, energy)) < 0.1);
  double mean_abs = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> amp;
    for (const auto& id : ids) amp.push_back(id.texture_coefficients[4 * k]);
    mean_abs += std::abs(corr(g, amp)) / K;
  }
  CHECK(mean_abs < 0.1);
}

TEST_CASE("linear probes recover gender and identity at full strength") {
  const auto ds = generate_synthetic({120, 5, 32, 1.0, 0}, 3);
  auto [train, test] = split_dataset(ds, 0.8, 3);
  CHECK(gender_probe_accuracy(train, test) > 90.0);
  CHECK(identity_probe_accuracy(ds, 5) > 90.0);
}

TEST_CASE("without the band a gender probe is at chance") {
  const auto ds = generate_synthetic({120, 5, 32, 0.0, 0}, 3);
  auto [train, test] = split_dataset(ds, 0.8, 3);
  CHECK(gender_probe_accuracy(train, test) == doctest::Approx(50.0).epsilon(0.1));
}

TEST_CASE("identity-disjoint stratified split") {
  const auto ds = generate_synthetic({10, 3, 8, 1.0, 0}, 2);
  auto [train, test] = split_dataset(ds, 0.8, 4);
  CHECK(train.n_identities() == 8);
  CHECK(test.n_identities() == 2);
  CHECK(train.size() + test.size() == ds.size());
  std::set<std::size_t> a, b;
  for (const auto& r : train.records) a.insert(r.identity);
  for (const auto& r : test.records) b.insert(r.identity);
  for (auto id : b) CHECK(a.count(id) == 0);
  CHECK(test.n_male() > 0);
  CHECK(test.n_female() > 0);
  auto [train2, test2] = split_dataset(ds, 0.8, 4);
  for (std::size_t i = 0; i < test.size(); ++i) CHECK(test.records[i].filename == test2.records[i].filename);
  CHECK_THROWS(split_dataset(ds, 1.0, 4));
  CHECK_THROWS(split_dataset(generate_synthetic({1, 3, 8, 1.0, 0}, 2), 0.5, 4));
}

TEST_CASE("export then load reproduces the dataset to 8-bit precision") {
  const auto dir = scratch("sanet_test_export");
  const auto ds = generate_synthetic({4, 2, 16, 1.0, 0}, 9);
  export_dataset(ds, dir);
  const auto loaded = load_dataset(dir, dir / "labels.csv", 16);
  REQUIRE(loaded.data.size() == ds.size());
  CHECK(loaded.skipped_unlabeled == 0);
  std::map<std::string, const FaceRecord*> by_name;
  for (const auto& r : loaded.data.records) by_name[r.filename] = &r;
  for (const auto& r : ds.records) {
    const auto* l = by_name.at(r.filename);
    CHECK(l->gender == r.gender);
    CHECK(l->identity == r.identity);
    for (std::size_t i = 0; i < r.image.numel(); ++i) {
      CHECK(std::abs(l->image.values()[i] - r.image.values()[i]) <= 0.5f / 255.0f + 1e-6f);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("loading converts colour, rescales and counts unlabeled files") {
  const auto dir = scratch("sanet_test_load");
  write_png({2, 2, 3, {255, 0, 0, 255, 0, 0, 255, 0, 0, 255, 0, 0}}, dir / "red.png");
  write_png({2, 2, 1, {255, 255, 255, 255}}, dir / "white.png");
  write_pgm({2, 2, 1, {0, 0, 0, 0}}, dir / "black.pgm");
  write_png({2, 2, 1, {9, 9, 9, 9}}, dir / "unlabeled.png");
  std::ofstream(dir / "labels.csv") << "filename,gender,identity\nred.png,1,0\nwhite.png,0,1\nblack.pgm,1,0\n";
  const auto loaded = load_dataset(dir, dir / "labels.csv", 4);
  CHECK(loaded.data.size() == 3);
  CHECK(loaded.skipped_unlabeled == 1);
  for (const auto& r : loaded.data.records) {
    CHECK(r.image.shape() == Shape{1, 4, 4});
    const float expect = r.filename == "red.png" ? 0.299f : r.filename == "white.png" ? 1.0f : 0.0f;
    for (float v : r.image.values()) CHECK(v == doctest::Approx(expect).epsilon(1e-6));
  }
  std::ofstream(dir / "broken.png") << "not an image";
  std::ofstream(dir / "labels.csv", std::ios::app) << "broken.png,0,2\n";
  try {
    load_dataset(dir, dir / "labels.csv", 4);
    FAIL("expected a decode error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("broken.png") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("bilinear resize keeps constants and averages neighbours") {
  const std::vector<float> flat(9, 0.25f);
  for (float v : resize_bilinear(flat, 3, 3, 7, 5)) CHECK(v == doctest::Approx(0.25f));
  const auto half = resize_bilinear({0.0f, 1.0f, 0.0f, 1.0f}, 2, 2, 1, 1);
  CHECK(half[0] == doctest::Approx(0.5f));
  CHECK(to_byte(1.0f) == 255);
  CHECK(to_byte(0.0f) == 0);
}
