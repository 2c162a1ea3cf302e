#include "sanet/training.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <map>

#include "sanet/ops.hpp"
#include "sanet/weights_io.hpp"

namespace sanet {
namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string format_value(double v) { return fmt::format("{:.9g}", v); }

struct Batch {
  std::vector<const FaceRecord*> records;
  std::vector<std::size_t> indices;
  std::vector<Gender> genders;
  Tensor images;
};

std::vector<Batch> make_batches(const DatasetSplit& ds, const std::vector<std::size_t>& order, std::size_t batch) {
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    Batch b;
    for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i) {
      b.indices.push_back(order[i]);
      b.records.push_back(&ds.records[order[i]]);
      b.genders.push_back(ds.records[order[i]].gender);
    }
    b.images = stack_images(b.records);
    out.push_back(std::move(b));
  }
  return out;
}

void check_finite(double loss, std::string_view phase, std::size_t step) {
  if (!std::isfinite(loss)) throw TrainingError(fmt::format("{}: loss diverged (non-finite) at step {}", phase, step));
}

void check_epoch_progress(TrainingLog* log, std::string_view phase, std::size_t epoch, double first_half,
                          double second_half) {
  if (log && epoch > 0 && second_half >= first_half) {
    log->warn(fmt::format("{}: loss did not decrease during epoch {} ({} -> {})", phase, epoch + 1, first_half,
                          second_half));
  }
}

// Mean of the first and second half of an epoch's batch losses.
std::pair<double, double> halves(const std::vector<double>& losses) {
  const std::size_t mid = std::max<std::size_t>(1, losses.size() / 2);
  double a = 0, b = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) (i < mid ? a : b) += losses[i];
  const double nb = static_cast<double>(losses.size() - mid);
  return {a / mid, nb > 0 ? b / nb : a / mid};
}

bool any_nonzero(std::span<const float> g) {
  for (float v : g) {
    if (v != 0.0f) return true;
  }
  return false;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : purpose) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return splitmix(seed ^ h);
}

void TrainingLog::warn(std::string message) {
  fmt::print(stderr, "warning: {}\n", message);
  warnings_.push_back(std::move(message));
}

std::vector<double> TrainingLog::epoch_means(const std::string& phase, std::size_t steps_per_epoch) const {
  std::vector<double> means;
  double acc = 0;
  std::size_t count = 0;
  for (const auto& r : rows_) {
    if (r.phase != phase) continue;
    acc += r.total;
    if (++count == steps_per_epoch) {
      means.push_back(acc / static_cast<double>(count));
      acc = 0;
      count = 0;
    }
  }
  return means;
}

std::string TrainingLog::to_csv() const {
  std::string out = std::string(kHeader) + "\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_value(*v) : std::string(); };
  for (const auto& r : rows_) {
    out += fmt::format("{},{},{},{},{},{}\n", r.step, r.phase, opt(r.jd), opt(r.jg), opt(r.jm), format_value(r.total));
  }
  return out;
}

void TrainingLog::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write training log " + path.string());
  out << to_csv();
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(splitmix(seed + epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
  return idx;
}

GenderClassifierParams train_gender_classifier(const DatasetSplit& train, const ClassifierArch& arch,
                                               const Config& config, std::uint64_t seed, std::string_view phase,
                                               TrainingLog* log) {
  if (train.n_male() == 0 || train.n_female() == 0) {
    throw TrainingError(fmt::format("{}: training split needs both genders", phase));
  }
  auto params = init_gender_classifier(arch, derive_seed(seed, "init"));
  Adam adam({.lr = config.lr_aux});
  std::mt19937_64 dropout_rng(derive_seed(seed, "dropout"));
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs_aux; ++epoch) {
    std::vector<double> losses;
    for (auto& batch : make_batches(train, shuffled_indices(train.size(), derive_seed(seed, "order"), epoch), config.batch)) {
      ++step;
      params.store.zero_grad();
      const auto z = gender_logits_batch(params.store, arch, batch.images, &dropout_rng);
      const auto loss = scale(binary_cross_entropy_logits(label_column<float>(batch.genders), z),
                              1.0f / static_cast<float>(batch.records.size()));
      check_finite(loss.item(), phase, step);
      loss.backward();
      adam.step(params.store);
      losses.push_back(loss.item());
      if (log) log->add({step, std::string(phase), {}, {}, {}, loss.item()});
    }
    auto [a, b] = halves(losses);
    check_epoch_progress(log, phase, epoch, a, b);
  }
  params.store.zero_grad();
  return params;
}

MatcherParams train_matcher(const DatasetSplit& train, const ClassifierArch& arch, const Config& config,
                            std::uint64_t seed, std::string_view phase, TrainingLog* log) {
  std::map<std::size_t, std::size_t> class_of;
  std::map<std::size_t, std::size_t> count;
  for (const auto& r : train.records) {
    class_of.emplace(r.identity, class_of.size());
    ++count[r.identity];
  }
  for (const auto& [id, n] : count) {
    if (n < 2) throw TrainingError(fmt::format("{}: identity {} has a single image", phase, id));
  }
  auto params = init_matcher(arch, config.descriptor_dim, class_of.size(), derive_seed(seed, "init"));
  Adam adam({.lr = config.lr_aux});
  std::mt19937_64 dropout_rng(derive_seed(seed, "dropout"));
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs_aux; ++epoch) {
    std::vector<double> losses;
    for (auto& batch : make_batches(train, shuffled_indices(train.size(), derive_seed(seed, "order"), epoch), config.batch)) {
      ++step;
      params.store.zero_grad();
      std::vector<std::size_t> labels;
      for (const auto* r : batch.records) labels.push_back(class_of.at(r->identity));
      const auto emb = matcher_embed_batch(params.store, arch, batch.images, &dropout_rng);
      const auto loss = scale(softmax_cross_entropy(matcher_head(params, emb), labels),
                              1.0f / static_cast<float>(labels.size()));
      check_finite(loss.item(), phase, step);
      loss.backward();
      adam.step(params.store);
      losses.push_back(loss.item());
      if (log) log->add({step, std::string(phase), {}, {}, {}, loss.item()});
    }
    auto [a, b] = halves(losses);
    check_epoch_progress(log, phase, epoch, a, b);
  }
  discard_matcher_head(params);
  return params;
}

GenderClassifierParams train_aux_gender(const DatasetSplit& train, const Config& config, TrainingLog* log) {
  return train_gender_classifier(train, ClassifierArch::auxiliary_from_config(config), config,
                                 derive_seed(config.seed, "aux_gender"), "aux_gender", log);
}

MatcherParams train_aux_matcher(const DatasetSplit& train, const Config& config, TrainingLog* log) {
  return train_matcher(train, ClassifierArch::auxiliary_from_config(config), config,
                       derive_seed(config.seed, "aux_matcher"), "aux_matcher", log);
}

AutoencoderParams pretrain_autoencoder(const DatasetSplit& train, const PrototypeSet& ps, const Config& config,
                                       TrainingLog* log) {
  if (train.empty()) throw TrainingError("pretrain: empty training split");
  const std::uint64_t seed = derive_seed(config.seed, "pretrain");
  auto params = init_autoencoder(AutoencoderArch::from_config(config), derive_seed(seed, "init"));
  Adam adam({.lr = config.lr_pretrain});
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs_pretrain; ++epoch) {
    std::vector<double> losses;
    for (auto& batch : make_batches(train, shuffled_indices(train.size(), derive_seed(seed, "order"), epoch), config.batch)) {
      ++step;
      params.store.zero_grad();
      const auto sm = prototype_batch(ps, batch.genders, PrototypeKind::SameGender);
      const auto trace = autoencoder_forward(params.store, params.arch, batch.images, sm, sm);
      const auto jd = loss_JD(batch.images, trace.output);
      check_finite(jd.item(), "pretrain", step);
      jd.backward();
      adam.step(params.store);
      losses.push_back(jd.item());
      if (log) log->add({step, "pretrain", jd.item(), {}, {}, jd.item()});
    }
    auto [a, b] = halves(losses);
    check_epoch_progress(log, "pretrain", epoch, a, b);
  }
  params.store.zero_grad();
  return params;
}

AutoencoderParams train_semi_adversarial(const AutoencoderParams& ae, const GenderClassifierParams& gender,
                                         const MatcherParams& matcher, const DatasetSplit& train,
                                         const PrototypeSet& ps, const LossWeights& weights, const Config& config,
                                         TrainingLog* log, SemiAdversarialStats* stats) {
  if (train.empty()) throw TrainingError("train: empty training split");
  const std::uint64_t seed = derive_seed(config.seed, "train");
  AutoencoderParams params{ae.arch, ae.store.clone()};
  params.store.set_all_trainable(true);

  // Frozen working copies: gradients pass through them to the generator only.
  auto g_store = gender.store.clone();
  auto m_store = matcher.store.clone();
  g_store.set_all_trainable(false);
  m_store.set_all_trainable(false);
  const auto g_before = g_store.fingerprint();
  const auto m_before = m_store.fingerprint();

  // Descriptors of the originals, computed once.
  std::vector<std::vector<float>> original_descriptors(train.size());
  for (std::size_t start = 0; start < train.size(); start += config.batch) {
    const std::size_t end = std::min(train.size(), start + config.batch);
    const auto e = matcher_embed_batch(m_store, matcher.arch, stack_images(train, start, end));
    for (std::size_t i = start; i < end; ++i) {
      auto row = e.values().subspan((i - start) * matcher.descriptor_dim, matcher.descriptor_dim);
      original_descriptors[i].assign(row.begin(), row.end());
    }
  }

  std::map<std::string, bool> touched;
  Adam adam({.lr = config.lr_train});
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs_train; ++epoch) {
    for (auto& batch : make_batches(train, shuffled_indices(train.size(), derive_seed(seed, "order"), epoch), config.batch)) {
      ++step;
      params.store.zero_grad();
      const std::size_t n = batch.records.size();
      const auto decoded = autoencoder_decode(params.store, params.arch, batch.images,
                                              prototype_batch(ps, batch.genders, PrototypeKind::SameGender));
      const auto x_sm = autoencoder_combine(params.store, params.arch, decoded,
                                            prototype_batch(ps, batch.genders, PrototypeKind::SameGender));
      const auto x_op = autoencoder_combine(params.store, params.arch, decoded,
                                            prototype_batch(ps, batch.genders, PrototypeKind::OppositeGender));
      const auto z_sm = gender_logits_batch(g_store, gender.arch, x_sm);
      const auto z_op = gender_logits_batch(g_store, gender.arch, x_op);
      std::vector<float> ex;
      ex.reserve(n * matcher.descriptor_dim);
      for (auto i : batch.indices) ex.insert(ex.end(), original_descriptors[i].begin(), original_descriptors[i].end());
      const Tensor e_x(Shape{n, matcher.descriptor_dim}, std::move(ex));
      const auto e_sm = matcher_embed_batch(m_store, matcher.arch, x_sm);

      const auto jg = loss_JG_logits(label_column<float>(batch.genders), z_sm, z_op);
      const auto jm = loss_JM(e_x, e_sm);
      const auto total = loss_total(jg, jm, weights);
      check_finite(total.item(), "train", step);
      const double jd = loss_JD(batch.images, x_sm.detach()).item();
      total.backward();
      for (const auto& e : params.store.entries()) {
        if (e.tensor.has_grad() && any_nonzero(e.tensor.grad())) touched[e.name] = true;
      }
      adam.step(params.store);
      if (log) log->add({step, "train", jd, jg.item(), jm.item(), total.item()});
    }
  }
  params.store.zero_grad();

  for (const auto* store : {&g_store, &m_store}) {
    for (const auto& e : store->entries()) {
      if (e.tensor.has_grad()) throw TrainingError("auxiliary parameter '" + e.name + "' accumulated a gradient");
    }
  }
  const auto g_after = g_store.fingerprint();
  const auto m_after = m_store.fingerprint();
  if (g_after != g_before) throw TrainingError("auxiliary gender classifier changed during semi-adversarial training");
  if (m_after != m_before) throw TrainingError("auxiliary matcher changed during semi-adversarial training");
  if (stats) {
    stats->gender_fingerprint_before = g_before;
    stats->gender_fingerprint_after = g_after;
    stats->matcher_fingerprint_before = m_before;
    stats->matcher_fingerprint_after = m_after;
    stats->params_with_gradient.clear();
    for (const auto& [name, hit] : touched) {
      if (hit) stats->params_with_gradient.push_back(name);
    }
  }
  return params;
}

namespace {

template <typename P>
void save_tagged(const P& p, const std::filesystem::path& path, const CheckpointInfo& info) {
  auto file = to_weights(p);
  file.seed = info.seed;
  file.config_hash = info.config_hash;
  file.metadata["phase"] = info.phase;
  save_weights(file, path);
}

}  // namespace

void save_checkpoint(const AutoencoderParams& p, const std::filesystem::path& path, const CheckpointInfo& info) {
  save_tagged(p, path, info);
}
void save_checkpoint(const GenderClassifierParams& p, const std::filesystem::path& path, const CheckpointInfo& info) {
  save_tagged(p, path, info);
}
void save_checkpoint(const MatcherParams& p, const std::filesystem::path& path, const CheckpointInfo& info) {
  save_tagged(p, path, info);
}

template <>
AutoencoderParams load_checkpoint<AutoencoderParams>(const std::filesystem::path& path) {
  return autoencoder_from_weights(load_weights(path));
}
template <>
GenderClassifierParams load_checkpoint<GenderClassifierParams>(const std::filesystem::path& path) {
  return gender_classifier_from_weights(load_weights(path));
}
template <>
MatcherParams load_checkpoint<MatcherParams>(const std::filesystem::path& path) {
  return matcher_from_weights(load_weights(path));
}

}  // namespace sanet
