#include "sanet/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <fstream>

#include "sanet/config.hpp"
#include "sanet/data.hpp"
#include "sanet/evaluate.hpp"
#include "sanet/prototypes.hpp"
#include "sanet/training.hpp"
#include "sanet/weights_io.hpp"

namespace sanet::cli {
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config = "default";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out;
};

struct Inputs {
  std::string data, prototypes, autoencoder, gender, matcher, report;
  std::string split = "test";
};

class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Config resolve_config(const Globals& g) {
  Config c = g.config == "default" ? Config::defaults() : Config::load(g.config);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) c.seed = *g.seed;
  return c;
}

void require_path(const std::string& path, const char* what) {
  if (path.empty()) throw RuntimeFailure(fmt::format("{} path is required", what));
  if (!fs::exists(path)) throw RuntimeFailure(fmt::format("{} not found: {}", what, path));
}

DatasetSplit load_data(const std::string& dir, const Config& c, std::ostream& err) {
  require_path(dir, "dataset");
  auto loaded = load_dataset(dir, fs::path(dir) / "labels.csv", c.image_size);
  if (loaded.skipped_unlabeled > 0) {
    err << fmt::format("warning: skipped {} unlabeled image(s) in {}\n", loaded.skipped_unlabeled, dir);
  }
  if (loaded.data.empty()) throw RuntimeFailure("dataset is empty: " + dir);
  return std::move(loaded.data);
}

std::pair<DatasetSplit, DatasetSplit> load_split(const std::string& dir, const Config& c, std::ostream& err) {
  return split_dataset(load_data(dir, c, err), c.train_fraction, c.seed);
}

PrototypeSet load_protos(const std::string& dir) {
  require_path(dir, "prototype directory");
  return load_prototypes(dir);
}

template <typename P>
P load_ckpt(const std::string& path, const char* what) {
  require_path(path, what);
  return load_checkpoint<P>(path);
}

CheckpointInfo info(const Config& c, const char* phase) { return {phase, c.seed, c.hash()}; }

fs::path out_dir(const Globals& g) {
  if (g.out.empty()) throw RuntimeFailure("--out is required");
  fs::create_directories(g.out);
  return g.out;
}

void write_log(const TrainingLog& log, const fs::path& dir, const char* phase) {
  fs::create_directories(dir / "logs");
  log.write_csv(dir / "logs" / fmt::format("{}.csv", phase));
}

void write_config(const Config& c, const fs::path& dir) {
  std::ofstream f(dir / "config.txt");
  f << c.to_text();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-adversarial gender-privacy autoencoder: data, training, perturbation and evaluation.", "sanet"};
  app.require_subcommand(1);
  Globals g;
  Inputs in;

  auto add_globals = [&](CLI::App* sub) {
    sub->add_option("--config", g.config, "Config file, or 'default' for built-in defaults")->capture_default_str();
    sub->add_option("--seed", g.seed, "Master seed (overrides the config)");
    sub->add_option("--set", g.overrides, "Override one config key, key=value (repeatable)");
    sub->add_option("--out", g.out, "Output directory")->required();
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", in.data, "Dataset directory holding images and labels.csv")->required();
  };
  auto add_protos = [&](CLI::App* sub) {
    sub->add_option("--prototypes", in.prototypes, "Prototype directory")->required();
  };
  auto add_ae = [&](CLI::App* sub) {
    sub->add_option("--autoencoder", in.autoencoder, "Autoencoder checkpoint")->required();
  };

  auto* synth = app.add_subcommand("synth", "Generate the synthetic face dataset");
  add_globals(synth);
  auto* protos = app.add_subcommand("prototypes", "Compute gender prototypes from the training split");
  add_globals(protos);
  add_data(protos);
  auto* aux_g = app.add_subcommand("train-aux-gender", "Train the auxiliary gender classifier");
  add_globals(aux_g);
  add_data(aux_g);
  auto* aux_m = app.add_subcommand("train-aux-matcher", "Train the auxiliary face matcher");
  add_globals(aux_m);
  add_data(aux_m);
  auto* pre = app.add_subcommand("pretrain", "Pre-train the autoencoder on reconstruction only");
  add_globals(pre);
  add_data(pre);
  add_protos(pre);
  auto* train = app.add_subcommand("train", "Semi-adversarial training against the frozen auxiliaries");
  add_globals(train);
  add_data(train);
  add_protos(train);
  add_ae(train);
  train->add_option("--gender", in.gender, "Auxiliary gender classifier checkpoint")->required();
  train->add_option("--matcher", in.matcher, "Auxiliary matcher checkpoint")->required();
  auto* perturb = app.add_subcommand("perturb", "Write SM, NT and OP perturbations of a split");
  add_globals(perturb);
  add_data(perturb);
  add_protos(perturb);
  add_ae(perturb);
  perturb->add_option("--split", in.split, "Which records to perturb")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();
  auto* evaluate = app.add_subcommand("evaluate", "Train evaluation networks and score all conditions");
  add_globals(evaluate);
  add_data(evaluate);
  add_protos(evaluate);
  add_ae(evaluate);
  auto* report = app.add_subcommand("report", "Re-render CSV and ROC plots from report.json");
  add_globals(report);
  report->add_option("--report", in.report, "report.json written by evaluate")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    const Config c = resolve_config(g);
    auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();

    if (name == "synth") {
      const auto dir = out_dir(g);
      SyntheticSpec spec{c.n_identities, c.images_per_identity, c.image_size, c.gender_signal_strength, 0};
      const auto ds = generate_synthetic(spec, c.seed);
      export_dataset(ds, dir);
      write_config(c, dir);
      out << fmt::format("wrote {} images ({} identities) to {}\n", ds.size(), ds.n_identities(), dir.string());
    } else if (name == "prototypes") {
      auto [tr, te] = load_split(in.data, c, err);
      const auto ps = compute_prototypes(tr);
      const auto dir = out_dir(g);
      save_prototypes(ps, dir);
      out << fmt::format("prototypes from {} male / {} female training images, alpha_M={:.4f}\n", ps.n_male,
                         ps.n_female, ps.alpha_male);
    } else if (name == "train-aux-gender") {
      auto [tr, te] = load_split(in.data, c, err);
      TrainingLog log;
      const auto p = train_aux_gender(tr, c, &log);
      const auto dir = out_dir(g);
      save_checkpoint(p, dir / "aux_gender.bin", info(c, "aux_gender"));
      write_log(log, dir, "aux_gender");
      out << fmt::format("held-out gender error {:.2f}%\n", gender_error_rate(p, te));
    } else if (name == "train-aux-matcher") {
      auto [tr, te] = load_split(in.data, c, err);
      TrainingLog log;
      const auto p = train_aux_matcher(tr, c, &log);
      const auto dir = out_dir(g);
      save_checkpoint(p, dir / "aux_matcher.bin", info(c, "aux_matcher"));
      write_log(log, dir, "aux_matcher");
      const auto ms = match_scores(p, te, te, c.impostor_limit, c.seed);
      out << fmt::format("held-out TMR {:.2f}% at FMR {}%\n",
                         tmr_at_fmr(roc_from_scores(ms.genuine, ms.impostor), c.fmr_target), c.fmr_target * 100);
    } else if (name == "pretrain") {
      auto [tr, te] = load_split(in.data, c, err);
      const auto ps = load_protos(in.prototypes);
      TrainingLog log;
      const auto p = pretrain_autoencoder(tr, ps, c, &log);
      const auto dir = out_dir(g);
      save_checkpoint(p, dir / "autoencoder_pretrained.bin", info(c, "pretrain"));
      write_log(log, dir, "pretrain");
      const auto pt = perturb_dataset(p, te, ps);
      double mae = 0.0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < te.size(); ++i) {
        const auto a = te.records[i].image.values();
        const auto b = pt.at(Condition::SameGender).records[i].image.values();
        for (std::size_t k = 0; k < a.size(); ++k, ++n) mae += std::abs(a[k] - b[k]);
      }
      out << fmt::format("held-out reconstruction MAE {:.4f}\n", n ? mae / n : 0.0);
    } else if (name == "train") {
      auto [tr, te] = load_split(in.data, c, err);
      const auto ps = load_protos(in.prototypes);
      const auto ae = load_ckpt<AutoencoderParams>(in.autoencoder, "autoencoder checkpoint");
      const auto gc = load_ckpt<GenderClassifierParams>(in.gender, "gender classifier checkpoint");
      const auto mc = load_ckpt<MatcherParams>(in.matcher, "matcher checkpoint");
      TrainingLog log;
      const auto p = train_semi_adversarial(ae, gc, mc, tr, ps, {1.0, c.lambda_G, c.lambda_M}, c, &log);
      const auto dir = out_dir(g);
      save_checkpoint(p, dir / "autoencoder.bin", info(c, "train"));
      write_log(log, dir, "train");
      const auto pt = perturb_dataset(p, te, ps);
      out << fmt::format("auxiliary gender error: sm {:.2f}% op {:.2f}%\n",
                         gender_error_rate(gc, pt.at(Condition::SameGender)),
                         gender_error_rate(gc, pt.at(Condition::OppositeGender)));
    } else if (name == "perturb") {
      auto [tr, te] = load_split(in.data, c, err);
      DatasetSplit source;
      if (in.split == "train") {
        source = std::move(tr);
      } else if (in.split == "test") {
        source = std::move(te);
      } else {
        source = load_data(in.data, c, err);
      }
      const auto ps = load_protos(in.prototypes);
      const auto ae = load_ckpt<AutoencoderParams>(in.autoencoder, "autoencoder checkpoint");
      const auto pt = perturb_dataset(ae, source, ps);
      const auto dir = out_dir(g);
      for (auto cond : {Condition::SameGender, Condition::Neutral, Condition::OppositeGender}) {
        export_dataset(pt.at(cond), dir / std::string(condition_name(cond)));
      }
      out << fmt::format("perturbed {} images into {}\n", source.size(), dir.string());
    } else if (name == "evaluate") {
      auto [tr, te] = load_split(in.data, c, err);
      const auto ps = load_protos(in.prototypes);
      const auto ae = load_ckpt<AutoencoderParams>(in.autoencoder, "autoencoder checkpoint");
      const auto dir = out_dir(g);
      const auto eg = train_eval_gender_classifier(tr, c, derive_seed(c.seed, "eval_gender"));
      const auto em = train_eval_matcher(tr, c, derive_seed(c.seed, "eval_matcher"));
      save_checkpoint(eg, dir / "eval_gender.bin", info(c, "eval_gender"));
      save_checkpoint(em, dir / "eval_matcher.bin", info(c, "eval_matcher"));
      auto data_name = fs::path(in.data).lexically_normal();
      if (data_name.filename().empty()) data_name = data_name.parent_path();
      const auto rep = evaluate_conditions(perturb_dataset(ae, te, ps), eg, em, c, data_name.filename().string());
      emit_report(rep, dir);
      out << report_csv(rep);
    } else if (name == "report") {
      require_path(in.report, "report");
      std::ifstream f(in.report);
      const auto rep = report_from_json(nlohmann::json::parse(f));
      emit_report(rep, out_dir(g));
      out << report_csv(rep);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace sanet::cli
