#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "sanet/evaluate.hpp"
#include "sanet/training.hpp"
#include "support/tiny_pipeline.hpp"

using namespace sanet;
namespace fs = std::filesystem;

namespace {

struct Rates {
  double false_rate, true_rate;
};

// Counts directly at one threshold.
Rates rates_at(double t, const std::vector<double>& pos, const std::vector<double>& neg) {
  double tp = 0, fp = 0;
  for (double p : pos) tp += p >= t;
  for (double n : neg) fp += n >= t;
  return {fp / neg.size(), tp / pos.size()};
}

// Probability that a positive outranks a negative, ties counted half.
double rank_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : p == n ? 0.5 : 0.0;
  return wins / (pos.size() * neg.size());
}

double brute_tmr(const std::vector<double>& pos, const std::vector<double>& neg, double fmr) {
  std::vector<double> ts(pos);
  ts.insert(ts.end(), neg.begin(), neg.end());
  ts.push_back(std::numeric_limits<double>::infinity());
  double best = 0;
  for (double t : ts) {
    const auto r = rates_at(t, pos, neg);
    if (r.false_rate <= fmr) best = std::max(best, r.true_rate);
  }
  return 100 * best;
}

MatcherParams tiny_matcher(const Config& c) {
  return init_matcher(ClassifierArch::auxiliary_from_config(c), c.descriptor_dim, 0, 5);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("roc curve against counting at every threshold") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> u(0, 9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> pos(7), neg(9);
    for (auto& v : pos) v = u(rng) + 2;
    for (auto& v : neg) v = u(rng);
    const auto roc = roc_from_scores(pos, neg);
    CHECK(roc.points.front().threshold == std::numeric_limits<double>::infinity());
    CHECK(roc.points.back().threshold == -std::numeric_limits<double>::infinity());
    for (std::size_t i = 1; i + 1 < roc.points.size(); ++i) {
      const auto& p = roc.points[i];
      const auto want = rates_at(p.threshold, pos, neg);
      CHECK(p.false_rate == want.false_rate);
      CHECK(p.true_rate == want.true_rate);
      CHECK(p.threshold < roc.points[i - 1].threshold);
      CHECK(p.true_rate >= roc.points[i - 1].true_rate);
      CHECK(p.false_rate >= roc.points[i - 1].false_rate);
    }
    CHECK(roc.auc == doctest::Approx(rank_auc(pos, neg)).epsilon(1e-12));
    for (double fmr : {0.0, 0.1, 0.25, 0.5}) CHECK(tmr_at_fmr(roc, fmr) == doctest::Approx(brute_tmr(pos, neg, fmr)));
  }
}

TEST_CASE("small roc cases") {
  const auto sep = roc_from_scores({3, 4}, {1, 2});
  CHECK(sep.auc == 1.0);
  CHECK(tmr_at_fmr(sep, 0.01) == 100.0);

  // Four scores: thresholds 4, 3, 2, 1.
  const auto toy = roc_from_scores({4, 2}, {3, 1});
  CHECK(toy.points.size() == 6);
  CHECK(toy.auc == doctest::Approx(0.75));

  // Six scores; at FMR 1/3 the threshold 6 admits one impostor and two genuines.
  const std::vector<double> g{9, 6, 4}, i{7, 5, 1};
  CHECK(tmr_at_fmr(roc_from_scores(g, i), 1.0 / 3) == doctest::Approx(200.0 / 3));
  CHECK(tmr_at_fmr(roc_from_scores(g, i), 0.0) == doctest::Approx(100.0 / 3));

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> a(3000), b(3000);
  for (auto& v : a) v = n(rng);
  for (auto& v : b) v = n(rng);
  CHECK(roc_from_scores(a, b).auc == doctest::Approx(0.5).epsilon(0.05));

  CHECK_THROWS(roc_from_scores({}, {1.0}));
  CHECK_THROWS(roc_from_scores({1.0}, {}));
}

TEST_CASE("tmr does not increase as the fmr target tightens") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> g(500), i(2000);
  for (auto& v : g) v = n(rng) + 1.5;
  for (auto& v : i) v = n(rng);
  const auto roc = roc_from_scores(g, i);
  double prev = 101;
  for (double fmr : {0.5, 0.1, 0.05, 0.01, 0.001, 0.0}) {
    const double t = tmr_at_fmr(roc, fmr);
    CHECK(t <= prev);
    prev = t;
  }
  bool low = false;
  tmr_at_fmr(roc_from_scores(g, {0.1, 0.2}), 0.01, &low);
  CHECK(low);
  tmr_at_fmr(roc, 0.01, &low);
  CHECK_FALSE(low);
}

TEST_CASE("gender error rate") {
  DatasetSplit ds;
  for (Gender g : {Gender::Male, Gender::Male, Gender::Female, Gender::Female})
    ds.records.push_back({Tensor::zeros({1, 2, 2}), g, 0, Split::Test, "x.png"});
  CHECK(error_rate_from_scores({0.9, 0.6, 0.1, 0.2}, ds) == 0.0);
  CHECK(error_rate_from_scores({0.9, 0.4, 0.1, 0.2}, ds) == 25.0);
  CHECK(error_rate_from_scores({0.1, 0.1, 0.9, 0.9}, ds) == 100.0);
  CHECK_THROWS(error_rate_from_scores({}, DatasetSplit{}));
  CHECK_THROWS(error_rate_from_scores({0.5}, ds));
}

TEST_CASE("match score pair counts follow the identity sizes") {
  const auto c = testing::tiny_config();
  auto ds = generate_synthetic({3, 3, c.image_size, 1.0, 0}, 1);
  // Identity sizes 3, 3, 2.
  for (auto it = ds.records.begin(); it != ds.records.end(); ++it) {
    if (it->identity == ds.records.back().identity) {
      ds.records.erase(it);
      break;
    }
  }
  const auto m = tiny_matcher(c);
  const auto s = match_scores(m, ds, ds);
  CHECK(s.genuine.size() == 3 * 2 + 3 * 2 + 2 * 1);
  CHECK(s.impostor.size() == 8 * 7 - 14);

  const auto capped = match_scores(m, ds, ds, 10, 4);
  CHECK(capped.impostor.size() == 10);
  CHECK(match_scores(m, ds, ds, 10, 4).impostor == capped.impostor);
  CHECK(match_scores(m, ds, ds, 10, 5).impostor != capped.impostor);
  CHECK(roc_from_scores(s.genuine, s.impostor).auc == roc_from_scores(match_scores(m, ds, ds).genuine,
                                                                       match_scores(m, ds, ds).impostor).auc);
}

TEST_CASE("identical images score zero, the maximum") {
  const auto c = testing::tiny_config();
  auto ds = generate_synthetic({2, 2, c.image_size, 1.0, 0}, 2);
  ds.records[1].image = ds.records[0].image;
  REQUIRE(ds.records[1].identity == ds.records[0].identity);
  const auto s = match_scores(tiny_matcher(c), ds, ds);
  CHECK(s.genuine[0] == 0.0);
  for (double v : s.genuine) CHECK(v <= 0.0);
  for (double v : s.impostor) CHECK(v <= 0.0);
}

TEST_CASE("match score preconditions") {
  const auto c = testing::tiny_config();
  const auto ds = generate_synthetic({3, 1, c.image_size, 1.0, 0}, 3);
  const auto m = tiny_matcher(c);
  CHECK_THROWS(match_scores(m, ds, ds));
  auto shifted = generate_synthetic({3, 2, c.image_size, 1.0, 0}, 3);
  auto other = shifted;
  std::swap(other.records[0], other.records[5]);
  CHECK_THROWS(match_scores(m, shifted, other));
}

TEST_CASE("perturbation keeps records aligned") {
  const auto c = testing::tiny_config();
  const auto ds = generate_synthetic({4, 2, c.image_size, 1.0, 0}, 4);
  const auto ps = compute_prototypes(ds);
  const auto ae = init_autoencoder(AutoencoderArch::from_config(c), 3);
  const auto p = perturb_dataset(ae, ds, ps, 3);
  REQUIRE(p.size() == 4);
  for (const auto& [cond, split] : p) {
    REQUIRE(split.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(split.records[i].identity == ds.records[i].identity);
      CHECK(split.records[i].gender == ds.records[i].gender);
      if (cond == Condition::Before) {
        CHECK(std::equal(split.records[i].image.values().begin(), split.records[i].image.values().end(),
                         ds.records[i].image.values().begin()));
      } else {
        for (float v : split.records[i].image.values()) CHECK((v > 0.0f && v < 1.0f));
      }
    }
  }
  const auto& sm = p.at(Condition::SameGender).records[0].image;
  const auto direct = autoencode(ae, ds.records[0].image, ps, ds.records[0].gender, PrototypeKind::SameGender);
  CHECK(std::equal(sm.values().begin(), sm.values().end(), direct.values().begin()));
}

TEST_CASE("evaluation networks differ from the auxiliaries") {
  const auto c = Config{};
  const auto aux = ClassifierArch::auxiliary_from_config(c);
  const auto ev = ClassifierArch::evaluation_from_config(c);
  CHECK(aux.channels != ev.channels);
  CHECK(aux.channels.size() != ev.channels.size());
}

TEST_CASE("reports: csv, json and files") {
  const auto c = testing::tiny_config();
  const auto ds = generate_synthetic({4, 2, c.image_size, 1.0, 0}, 4);
  const auto ps = compute_prototypes(ds);
  const auto ae = init_autoencoder(AutoencoderArch::from_config(c), 3);
  const auto clf = init_gender_classifier(ClassifierArch::evaluation_from_config(c), 4);
  const auto report = evaluate_conditions(perturb_dataset(ae, ds, ps), clf, tiny_matcher(c), c, "toy");

  const auto csv = report_csv(report);
  CHECK(csv.rfind("condition,gender_error_pct,gender_auc,tmr_pct,fmr_target_pct,match_auc,n_genuine,n_impostor\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(csv.find("\nbefore,") != std::string::npos);
  CHECK(csv.find("\nop,") != std::string::npos);
  for (const auto& [cond, r] : report.conditions) {
    CHECK((r.gender_error >= 0 && r.gender_error <= 100));
    CHECK(r.n_genuine == 8);
  }

  const auto back = report_from_json(to_json(report));
  CHECK(report_csv(back) == csv);
  CHECK(to_json(back) == to_json(report));

  const auto dir = fs::temp_directory_path() / "sanet_test_report";
  fs::remove_all(dir);
  emit_report(report, dir);
  for (const char* f : {"report.csv", "report.json", "roc_gender_before.csv", "roc_match_op.csv", "roc_gender.png",
                        "roc_match.png"})
    CHECK(fs::exists(dir / f));
  const auto first = slurp(dir / "report.csv");
  emit_report(report, dir);
  CHECK(slurp(dir / "report.csv") == first);
  CHECK(first == csv);
  fs::remove_all(dir);

  CHECK(parse_condition("nt") == Condition::Neutral);
  CHECK(condition_name(Condition::OppositeGender) == "op");
  CHECK_THROWS(parse_condition("xx"));
}
