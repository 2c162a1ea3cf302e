#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sanet/config.hpp"
#include "sanet/data.hpp"
#include "sanet/models.hpp"
#include "sanet/prototypes.hpp"

namespace sanet {

enum class Condition { Before, SameGender, Neutral, OppositeGender };

inline constexpr std::array<Condition, 4> kAllConditions{Condition::Before, Condition::SameGender, Condition::Neutral,
                                                          Condition::OppositeGender};

/// "before", "sm", "nt", "op".
std::string_view condition_name(Condition c);
Condition parse_condition(std::string_view name);

/// Original split plus its SM/NT/OP reconstructions, record order preserved.
std::map<Condition, DatasetSplit> perturb_dataset(const AutoencoderParams& ae, const DatasetSplit& ds,
                                                  const PrototypeSet& ps, std::size_t batch = 32);

/// Evaluation networks: a different trunk (one block fewer, other widths) and
/// seeds unrelated to the auxiliaries.
GenderClassifierParams train_eval_gender_classifier(const DatasetSplit& train, const Config& config, std::uint64_t seed);
MatcherParams train_eval_matcher(const DatasetSplit& train, const Config& config, std::uint64_t seed);

/// P(male) for each record, batched.
std::vector<double> gender_scores(const GenderClassifierParams& clf, const DatasetSplit& ds, std::size_t batch = 32);

/// Percentage of records whose thresholded prediction disagrees with the label.
double gender_error_rate(const GenderClassifierParams& clf, const DatasetSplit& ds, double threshold = 0.5);
double error_rate_from_scores(const std::vector<double>& scores, const DatasetSplit& ds, double threshold = 0.5);

struct RocPoint {
  double threshold;
  double false_rate;
  double true_rate;
};

/// Points ordered by decreasing threshold (+inf first, -inf last); a score is
/// accepted when score >= threshold.
struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

RocCurve roc_from_scores(const std::vector<double>& positive, const std::vector<double>& negative);

struct MatchScores {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

/// Probe i against gallery j (i != j), score = -||e_i - e_j||^2. Impostor
/// pairs beyond impostor_limit are subsampled deterministically from seed.
MatchScores match_scores(const MatcherParams& m, const DatasetSplit& probe, const DatasetSplit& gallery,
                         std::size_t impostor_limit = 50000, std::uint64_t seed = 0);

/// Best true rate (percent) among operating points whose false rate is <= fmr.
/// Sets *low_resolution when fewer than 1/fmr negatives back the curve.
double tmr_at_fmr(const RocCurve& roc, double fmr, bool* low_resolution = nullptr);

struct ConditionResult {
  double gender_error = 0.0;  // percent
  RocCurve gender_roc;
  double tmr = 0.0;  // percent at the configured FMR
  RocCurve match_roc;
  std::size_t n_genuine = 0;
  std::size_t n_impostor = 0;
};

struct EvalReport {
  std::string dataset;
  double fmr_target = 0.01;
  std::map<Condition, ConditionResult> conditions;
};

EvalReport evaluate_conditions(const std::map<Condition, DatasetSplit>& perturbed, const GenderClassifierParams& clf,
                               const MatcherParams& matcher, const Config& config, std::string dataset_name);

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

inline constexpr const char* kReportHeader =
    "condition,gender_error_pct,gender_auc,tmr_pct,fmr_target_pct,match_auc,n_genuine,n_impostor";
inline constexpr const char* kRocHeader = "threshold,false_rate,true_rate";

std::string report_csv(const EvalReport& report);
std::string roc_csv(const RocCurve& roc);

/// report.csv, roc_gender_<cond>.csv, roc_match_<cond>.csv, roc_gender.png,
/// roc_match.png and report.json under out_dir.
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);

}  // namespace sanet
