#include "sanet/evaluate.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "sanet/image_io.hpp"
#include "sanet/training.hpp"

namespace sanet {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.9g}", v);
}

nlohmann::json number_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from_json(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>() == "inf" ? kInf : -kInf;
  return j.get<double>();
}

nlohmann::json roc_to_json(const RocCurve& roc) {
  auto pts = nlohmann::json::array();
  for (const auto& p : roc.points) pts.push_back({number_to_json(p.threshold), p.false_rate, p.true_rate});
  return {{"points", pts}, {"auc", roc.auc}};
}

RocCurve roc_from_json(const nlohmann::json& j) {
  RocCurve roc;
  for (const auto& p : j.at("points")) {
    roc.points.push_back({number_from_json(p.at(0)), p.at(1).get<double>(), p.at(2).get<double>()});
  }
  roc.auc = j.at("auc").get<double>();
  return roc;
}

// Minimal raster for the ROC figures.
class Canvas {
 public:
  Canvas(std::size_t w, std::size_t h) : img_{w, h, 3, std::vector<std::uint8_t>(w * h * 3, 255)} {}

  void pixel(long x, long y, std::array<std::uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= static_cast<long>(img_.width) || y >= static_cast<long>(img_.height)) return;
    auto* px = &img_.pixels[(static_cast<std::size_t>(y) * img_.width + static_cast<std::size_t>(x)) * 3];
    px[0] = c[0];
    px[1] = c[1];
    px[2] = c[2];
  }

  void line(double x0, double y0, double x1, double y1, std::array<std::uint8_t, 3> c, int thickness = 1) {
    const double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
    const auto steps = static_cast<long>(std::ceil(len)) + 1;
    for (long s = 0; s <= steps; ++s) {
      const double t = steps == 0 ? 0.0 : static_cast<double>(s) / steps;
      const auto x = std::lround(x0 + t * (x1 - x0)), y = std::lround(y0 + t * (y1 - y0));
      for (int dy = 0; dy < thickness; ++dy) {
        for (int dx = 0; dx < thickness; ++dx) pixel(x + dx, y + dy, c);
      }
    }
  }

  void rect(long x, long y, long w, long h, std::array<std::uint8_t, 3> c) {
    for (long j = 0; j < h; ++j) {
      for (long i = 0; i < w; ++i) pixel(x + i, y + j, c);
    }
  }

  const Image8& image() const { return img_; }

 private:
  Image8 img_;
};

// before: black, SM: blue, NT: green, OP: red. Legend swatches top to bottom in that order.
void plot_roc_family(const std::map<Condition, const RocCurve*>& curves, const std::filesystem::path& path) {
  constexpr std::size_t kSize = 420, kMargin = 40, kPlot = kSize - 2 * kMargin;
  const std::map<Condition, std::array<std::uint8_t, 3>> colours{{Condition::Before, {0, 0, 0}},
                                                                 {Condition::SameGender, {31, 90, 200}},
                                                                 {Condition::Neutral, {40, 160, 60}},
                                                                 {Condition::OppositeGender, {210, 40, 40}}};
  Canvas canvas(kSize, kSize);
  const std::array<std::uint8_t, 3> grid{220, 220, 220}, axis{90, 90, 90};
  for (int i = 0; i <= 10; ++i) {
    const double v = kMargin + kPlot * i / 10.0;
    canvas.line(v, kMargin, v, kMargin + kPlot, grid);
    canvas.line(kMargin, v, kMargin + kPlot, v, grid);
  }
  canvas.line(kMargin, kMargin + kPlot, kMargin + kPlot, kMargin, grid);  // chance diagonal
  canvas.line(kMargin, kMargin, kMargin, kMargin + kPlot, axis);
  canvas.line(kMargin, kMargin + kPlot, kMargin + kPlot, kMargin + kPlot, axis);
  long legend_y = kMargin + 10;
  for (const auto& [cond, roc] : curves) {
    const auto colour = colours.at(cond);
    for (std::size_t i = 1; i < roc->points.size(); ++i) {
      const auto& a = roc->points[i - 1];
      const auto& b = roc->points[i];
      canvas.line(kMargin + a.false_rate * kPlot, kMargin + (1.0 - a.true_rate) * kPlot, kMargin + b.false_rate * kPlot,
                  kMargin + (1.0 - b.true_rate) * kPlot, colour, 2);
    }
    canvas.rect(kMargin + kPlot - 30, legend_y, 20, 10, colour);
    legend_y += 16;
  }
  write_png(canvas.image(), path);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

std::string_view condition_name(Condition c) {
  switch (c) {
    case Condition::Before:
      return "before";
    case Condition::SameGender:
      return "sm";
    case Condition::Neutral:
      return "nt";
    case Condition::OppositeGender:
      return "op";
  }
  throw std::invalid_argument("unknown condition");
}

Condition parse_condition(std::string_view name) {
  for (auto c : kAllConditions) {
    if (condition_name(c) == name) return c;
  }
  throw std::invalid_argument(fmt::format("unknown condition '{}'", name));
}

std::map<Condition, DatasetSplit> perturb_dataset(const AutoencoderParams& ae, const DatasetSplit& ds,
                                                  const PrototypeSet& ps, std::size_t batch) {
  std::map<Condition, DatasetSplit> out;
  out[Condition::Before] = ds;
  const std::array<std::pair<Condition, PrototypeKind>, 3> kinds{
      {{Condition::SameGender, PrototypeKind::SameGender},
       {Condition::Neutral, PrototypeKind::Neutral},
       {Condition::OppositeGender, PrototypeKind::OppositeGender}}};
  for (const auto& [cond, kind] : kinds) out[cond].records.reserve(ds.size());
  const std::size_t S = ae.arch.image_size;
  for (std::size_t start = 0; start < ds.size(); start += batch) {
    const std::size_t end = std::min(ds.size(), start + batch);
    std::vector<Gender> genders;
    for (std::size_t i = start; i < end; ++i) genders.push_back(ds.records[i].gender);
    const auto images = perturb_batch(ae, stack_images(ds, start, end), ps, genders,
                                      {PrototypeKind::SameGender, PrototypeKind::Neutral, PrototypeKind::OppositeGender});
    for (const auto& [cond, kind] : kinds) {
      auto vals = images.at(kind).values();
      for (std::size_t i = start; i < end; ++i) {
        FaceRecord rec = ds.records[i];
        auto px = vals.subspan((i - start) * S * S, S * S);
        rec.image = Tensor(Shape{1, S, S}, std::vector<float>(px.begin(), px.end()));
        out[cond].records.push_back(std::move(rec));
      }
    }
  }
  return out;
}

GenderClassifierParams train_eval_gender_classifier(const DatasetSplit& train, const Config& config, std::uint64_t seed) {
  return train_gender_classifier(train, ClassifierArch::evaluation_from_config(config), config, seed, "eval_gender");
}

MatcherParams train_eval_matcher(const DatasetSplit& train, const Config& config, std::uint64_t seed) {
  return train_matcher(train, ClassifierArch::evaluation_from_config(config), config, seed, "eval_matcher");
}

std::vector<double> gender_scores(const GenderClassifierParams& clf, const DatasetSplit& ds, std::size_t batch) {
  std::vector<double> scores;
  scores.reserve(ds.size());
  for (std::size_t start = 0; start < ds.size(); start += batch) {
    const auto p = gender_forward_batch(clf.store, clf.arch, stack_images(ds, start, std::min(ds.size(), start + batch)));
    for (float v : p.values()) scores.push_back(v);
  }
  return scores;
}

double error_rate_from_scores(const std::vector<double>& scores, const DatasetSplit& ds, double threshold) {
  if (ds.empty()) throw std::invalid_argument("gender_error_rate: empty split");
  if (scores.size() != ds.size()) throw std::invalid_argument("gender_error_rate: score count differs from records");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted_male = scores[i] >= threshold;
    if (predicted_male != (ds.records[i].gender == Gender::Male)) ++wrong;
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(ds.size());
}

double gender_error_rate(const GenderClassifierParams& clf, const DatasetSplit& ds, double threshold) {
  if (ds.empty()) throw std::invalid_argument("gender_error_rate: empty split");
  return error_rate_from_scores(gender_scores(clf, ds), ds, threshold);
}

RocCurve roc_from_scores(const std::vector<double>& positive, const std::vector<double>& negative) {
  if (positive.empty() || negative.empty()) throw std::invalid_argument("roc_from_scores: empty score list");
  std::vector<double> pos(positive), neg(negative);
  std::sort(pos.begin(), pos.end(), std::greater<>());
  std::sort(neg.begin(), neg.end(), std::greater<>());
  std::vector<double> thresholds(pos);
  thresholds.insert(thresholds.end(), neg.begin(), neg.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  RocCurve roc;
  roc.points.push_back({kInf, 0.0, 0.0});
  std::size_t ip = 0, in = 0;
  for (double t : thresholds) {
    while (ip < pos.size() && pos[ip] >= t) ++ip;
    while (in < neg.size() && neg[in] >= t) ++in;
    roc.points.push_back({t, static_cast<double>(in) / neg.size(), static_cast<double>(ip) / pos.size()});
  }
  roc.points.push_back({-kInf, 1.0, 1.0});
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const auto& a = roc.points[i - 1];
    const auto& b = roc.points[i];
    roc.auc += (b.false_rate - a.false_rate) * (a.true_rate + b.true_rate) * 0.5;
  }
  return roc;
}

MatchScores match_scores(const MatcherParams& m, const DatasetSplit& probe, const DatasetSplit& gallery,
                         std::size_t impostor_limit, std::uint64_t seed) {
  if (probe.size() != gallery.size()) throw std::invalid_argument("match_scores: probe and gallery must be aligned");
  for (std::size_t i = 0; i < probe.size(); ++i) {
    if (probe.records[i].identity != gallery.records[i].identity) {
      throw std::invalid_argument(fmt::format("match_scores: identity labels differ at record {}", i));
    }
  }
  const std::size_t n = probe.size(), D = m.descriptor_dim;
  auto embed_all = [&](const DatasetSplit& ds) {
    std::vector<float> out;
    out.reserve(n * D);
    for (std::size_t start = 0; start < n; start += 32) {
      const auto e = matcher_embed_batch(m.store, m.arch, stack_images(ds, start, std::min(n, start + 32)));
      out.insert(out.end(), e.values().begin(), e.values().end());
    }
    return out;
  };
  const auto ep = embed_all(probe);
  const auto eg = embed_all(gallery);
  auto score = [&](std::size_t i, std::size_t j) {
    double d = 0.0;
    for (std::size_t k = 0; k < D; ++k) {
      const double diff = static_cast<double>(ep[i * D + k]) - eg[j * D + k];
      d += diff * diff;
    }
    return -d;
  };

  MatchScores out;
  // Reservoir sample of impostor pair indices (i * n + j), then scored in index order.
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> reservoir;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (probe.records[i].identity == gallery.records[j].identity) {
        out.genuine.push_back(score(i, j));
        continue;
      }
      ++seen;
      if (reservoir.size() < impostor_limit) {
        reservoir.push_back(i * n + j);
      } else {
        const std::size_t r = rng() % seen;
        if (r < impostor_limit) reservoir[r] = i * n + j;
      }
    }
  }
  if (out.genuine.empty()) throw std::invalid_argument("match_scores: no genuine pairs (every identity has one image)");
  std::sort(reservoir.begin(), reservoir.end());
  out.impostor.reserve(reservoir.size());
  for (auto idx : reservoir) out.impostor.push_back(score(idx / n, idx % n));
  return out;
}

double tmr_at_fmr(const RocCurve& roc, double fmr, bool* low_resolution) {
  if (roc.points.size() < 2) throw std::invalid_argument("tmr_at_fmr: degenerate ROC curve");
  double best = 0.0;
  for (const auto& p : roc.points) {
    if (p.false_rate <= fmr) best = std::max(best, p.true_rate);
  }
  if (low_resolution) {
    // The smallest non-zero false rate step reveals the negative count.
    double step = 1.0;
    for (const auto& p : roc.points) {
      if (p.false_rate > 0.0) step = std::min(step, p.false_rate);
    }
    *low_resolution = step > fmr;
  }
  return 100.0 * best;
}

EvalReport evaluate_conditions(const std::map<Condition, DatasetSplit>& perturbed, const GenderClassifierParams& clf,
                               const MatcherParams& matcher, const Config& config, std::string dataset_name) {
  EvalReport report;
  report.dataset = std::move(dataset_name);
  report.fmr_target = config.fmr_target;
  const auto& originals = perturbed.at(Condition::Before);
  for (auto cond : kAllConditions) {
    const auto& ds = perturbed.at(cond);
    ConditionResult r;
    const auto scores = gender_scores(clf, ds);
    r.gender_error = error_rate_from_scores(scores, ds);
    std::vector<double> male, female;
    for (std::size_t i = 0; i < ds.size(); ++i) (ds.records[i].gender == Gender::Male ? male : female).push_back(scores[i]);
    if (!male.empty() && !female.empty()) r.gender_roc = roc_from_scores(male, female);
    const auto ms = match_scores(matcher, ds, originals, config.impostor_limit, derive_seed(config.seed, "impostors"));
    r.match_roc = roc_from_scores(ms.genuine, ms.impostor);
    bool low_res = false;
    r.tmr = tmr_at_fmr(r.match_roc, config.fmr_target, &low_res);
    if (low_res) {
      fmt::print(stderr, "warning: {} impostor scores are too few to resolve FMR={}\n", ms.impostor.size(),
                 config.fmr_target);
    }
    r.n_genuine = ms.genuine.size();
    r.n_impostor = ms.impostor.size();
    report.conditions[cond] = std::move(r);
  }
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["dataset"] = report.dataset;
  j["fmr_target"] = report.fmr_target;
  auto conds = nlohmann::json::object();
  for (const auto& [cond, r] : report.conditions) {
    conds[std::string(condition_name(cond))] = {{"gender_error", r.gender_error}, {"gender_roc", roc_to_json(r.gender_roc)},
                                                {"tmr", r.tmr},                   {"match_roc", roc_to_json(r.match_roc)},
                                                {"n_genuine", r.n_genuine},       {"n_impostor", r.n_impostor}};
  }
  j["conditions"] = conds;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport report;
  report.dataset = j.at("dataset").get<std::string>();
  report.fmr_target = j.at("fmr_target").get<double>();
  for (const auto& [name, c] : j.at("conditions").items()) {
    ConditionResult r;
    r.gender_error = c.at("gender_error").get<double>();
    r.gender_roc = roc_from_json(c.at("gender_roc"));
    r.tmr = c.at("tmr").get<double>();
    r.match_roc = roc_from_json(c.at("match_roc"));
    r.n_genuine = c.at("n_genuine").get<std::size_t>();
    r.n_impostor = c.at("n_impostor").get<std::size_t>();
    report.conditions[parse_condition(name)] = std::move(r);
  }
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::string out = std::string(kReportHeader) + "\n";
  for (auto cond : kAllConditions) {
    auto it = report.conditions.find(cond);
    if (it == report.conditions.end()) continue;
    const auto& r = it->second;
    out += fmt::format("{},{},{},{},{},{},{},{}\n", condition_name(cond), format_number(r.gender_error),
                       format_number(r.gender_roc.auc), format_number(r.tmr), format_number(100.0 * report.fmr_target),
                       format_number(r.match_roc.auc), r.n_genuine, r.n_impostor);
  }
  return out;
}

std::string roc_csv(const RocCurve& roc) {
  std::string out = std::string(kRocHeader) + "\n";
  for (const auto& p : roc.points) {
    out += fmt::format("{},{},{}\n", format_number(p.threshold), format_number(p.false_rate), format_number(p.true_rate));
  }
  return out;
}

void emit_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error(fmt::format("cannot create report directory {}: {}", out_dir.string(), ec.message()));
  write_text(out_dir / "report.csv", report_csv(report));
  write_text(out_dir / "report.json", to_json(report).dump(1) + "\n");
  std::map<Condition, const RocCurve*> gender, match;
  for (const auto& [cond, r] : report.conditions) {
    const std::string suffix(condition_name(cond));
    write_text(out_dir / ("roc_gender_" + suffix + ".csv"), roc_csv(r.gender_roc));
    write_text(out_dir / ("roc_match_" + suffix + ".csv"), roc_csv(r.match_roc));
    if (!r.gender_roc.points.empty()) gender[cond] = &r.gender_roc;
    match[cond] = &r.match_roc;
  }
  plot_roc_family(gender, out_dir / "roc_gender.png");
  plot_roc_family(match, out_dir / "roc_match.png");
}

}  // namespace sanet
