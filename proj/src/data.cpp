#include "sanet/data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "sanet/image_io.hpp"
#include "sanet/param_store.hpp"

namespace sanet {
namespace {

constexpr std::size_t kTextureComponents = 12;
constexpr double kTextureAmplitude = 0.12;
constexpr double kBandAmplitude = 0.15;
constexpr double kBandCentre = 0.68;
constexpr double kBandHalfWidth = 0.08;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  return out;
}

}  // namespace

std::size_t DatasetSplit::n_male() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const FaceRecord& r) { return r.gender == Gender::Male; }));
}

std::size_t DatasetSplit::n_female() const { return records.size() - n_male(); }

std::size_t DatasetSplit::n_identities() const {
  std::set<std::size_t> ids;
  for (const auto& r : records) ids.insert(r.identity);
  return ids.size();
}

std::size_t DatasetSplit::image_size() const {
  if (records.empty()) throw std::logic_error("image_size() of an empty dataset");
  return records.front().image.dim(1);
}

void DatasetSplit::validate(std::size_t expected_size) const {
  for (const auto& r : records) {
    if (r.image.shape() != Shape{1, expected_size, expected_size}) {
      throw ShapeError(fmt::format("record {} has shape {}, expected [1,{},{}]", r.filename,
                                   shape_to_string(r.image.shape()), expected_size, expected_size));
    }
    for (float v : r.image.values()) {
      if (!(v >= 0.0f && v <= 1.0f)) throw std::domain_error("record " + r.filename + " has a pixel outside [0,1]");
    }
    if (label(r.gender) != 0 && label(r.gender) != 1) throw std::domain_error("record " + r.filename + " has a bad gender");
  }
}

std::vector<SyntheticIdentity> synthetic_identities(const SyntheticSpec& spec, std::uint64_t seed) {
  std::mt19937_64 texture_rng(mix_seed(seed ^ spec.identity_texture_seed, 1));
  std::mt19937_64 gender_rng(mix_seed(seed, 2));

  // Balanced genders, randomly assigned to identities.
  std::vector<Gender> genders(spec.n_identities, Gender::Female);
  for (std::size_t i = 0; i < spec.n_identities / 2; ++i) genders[i] = Gender::Male;
  for (std::size_t i = genders.size(); i > 1; --i) std::swap(genders[i - 1], genders[gender_rng() % i]);

  std::vector<SyntheticIdentity> out;
  out.reserve(spec.n_identities);
  for (std::size_t id = 0; id < spec.n_identities; ++id) {
    SyntheticIdentity ident{genders[id], {}};
    // Per component: amplitude, phase, x-frequency, y-frequency.
    for (std::size_t k = 0; k < kTextureComponents; ++k) {
      const double amp = standard_normal(texture_rng);
      const double phase = 2.0 * std::numbers::pi * uniform01(texture_rng);
      int fx = 0, fy = 0;
      while (fx == 0 && fy == 0) {
        fx = static_cast<int>(texture_rng() % 4);
        fy = static_cast<int>(texture_rng() % 4);
      }
      ident.texture_coefficients.insert(ident.texture_coefficients.end(), {amp, phase, double(fx), double(fy)});
    }
    out.push_back(std::move(ident));
  }
  return out;
}

DatasetSplit generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.gender_signal_strength < 0.0 || spec.gender_signal_strength > 1.0) {
    throw std::invalid_argument("gender_signal_strength must lie in [0,1]");
  }
  if (spec.image_size < 4) throw std::invalid_argument("image_size must be at least 4");
  const auto identities = synthetic_identities(spec, seed);
  std::mt19937_64 noise_rng(mix_seed(seed, 3));
  const std::size_t S = spec.image_size;

  // Shared face-like base: bright ellipse on a darker background.
  std::vector<double> base(S * S);
  std::vector<double> band(S * S);
  for (std::size_t y = 0; y < S; ++y) {
    for (std::size_t x = 0; x < S; ++x) {
      const double u = (x + 0.5) / S - 0.5, v = (y + 0.5) / S - 0.5;
      const double r = std::sqrt((u / 0.38) * (u / 0.38) + (v / 0.46) * (v / 0.46));
      const double mask = 1.0 / (1.0 + std::exp((r - 1.0) * 12.0));
      base[y * S + x] = 0.3 + 0.3 * mask;
      const double dy = ((y + 0.5) / S - kBandCentre) / kBandHalfWidth;
      const double profile = std::abs(dy) < 1.0 ? std::pow(std::cos(0.5 * std::numbers::pi * dy), 2) : 0.0;
      band[y * S + x] = profile * mask;
    }
  }

  DatasetSplit ds;
  ds.records.reserve(spec.n_identities * spec.images_per_identity);
  for (std::size_t id = 0; id < identities.size(); ++id) {
    const auto& ident = identities[id];
    std::vector<double> texture(S * S, 0.0);
    const auto& c = ident.texture_coefficients;
    for (std::size_t k = 0; k < kTextureComponents; ++k) {
      const double amp = c[4 * k] * kTextureAmplitude / std::sqrt(double(kTextureComponents) / 2.0);
      for (std::size_t y = 0; y < S; ++y) {
        for (std::size_t x = 0; x < S; ++x) {
          const double arg = 2.0 * std::numbers::pi * (c[4 * k + 2] * (x + 0.5) / S + c[4 * k + 3] * (y + 0.5) / S);
          texture[y * S + x] += amp * std::cos(arg + c[4 * k + 1]);
        }
      }
    }
    const double sign = ident.gender == Gender::Male ? -1.0 : 1.0;
    const double band_amp = sign * kBandAmplitude * spec.gender_signal_strength;
    for (std::size_t j = 0; j < spec.images_per_identity; ++j) {
      std::vector<float> px(S * S);
      for (std::size_t i = 0; i < S * S; ++i) {
        const double v = base[i] + texture[i] + band_amp * band[i] + kSyntheticNoiseSigma * standard_normal(noise_rng);
        px[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      FaceRecord rec;
      rec.image = Tensor(Shape{1, S, S}, std::move(px));
      rec.gender = ident.gender;
      rec.identity = id;
      rec.filename = fmt::format("id{:04}_{:02}.png", id, j);
      ds.records.push_back(std::move(rec));
    }
  }
  return ds;
}

LoadedDataset load_dataset(const std::filesystem::path& root, const std::filesystem::path& labels_file,
                           std::size_t image_size) {
  std::ifstream in(labels_file);
  if (!in) throw std::runtime_error("cannot open labels file " + labels_file.string());
  std::string line;
  std::getline(in, line);
  if (split_csv_line(line) != std::vector<std::string>{"filename", "gender", "identity"}) {
    throw std::runtime_error("labels file " + labels_file.string() + " must start with header filename,gender,identity");
  }
  std::map<std::string, std::pair<Gender, std::size_t>> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != 3 || (f[1] != "0" && f[1] != "1")) {
      throw std::runtime_error(fmt::format("{}:{}: malformed label row", labels_file.string(), line_no));
    }
    labels[f[0]] = {f[1] == "1" ? Gender::Male : Gender::Female, std::stoul(f[2])};
  }

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".pgm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  LoadedDataset out;
  for (const auto& path : files) {
    const auto name = path.filename().string();
    auto it = labels.find(name);
    if (it == labels.end()) {
      ++out.skipped_unlabeled;
      continue;
    }
    const Image8 img = read_image(path);
    auto gray = resize_bilinear(to_gray_unit(img), img.width, img.height, image_size, image_size);
    for (auto& v : gray) v = std::clamp(v, 0.0f, 1.0f);
    FaceRecord rec;
    rec.image = Tensor(Shape{1, image_size, image_size}, std::move(gray));
    rec.gender = it->second.first;
    rec.identity = it->second.second;
    rec.filename = name;
    out.data.records.push_back(std::move(rec));
  }
  return out;
}

void export_dataset(const DatasetSplit& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream labels(dir / "labels.csv");
  if (!labels) throw std::runtime_error("cannot write " + (dir / "labels.csv").string());
  labels << "filename,gender,identity\n";
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    const std::string name = r.filename.empty() ? fmt::format("img{:05}.png", i) : r.filename;
    Image8 img;
    img.width = r.image.dim(2);
    img.height = r.image.dim(1);
    img.channels = 1;
    img.pixels.reserve(r.image.numel());
    for (float v : r.image.values()) img.pixels.push_back(to_byte(v));
    const auto path = dir / name;
    if (path.extension() == ".pgm") {
      write_pgm(img, path);
    } else {
      write_png(img, path);
    }
    labels << name << ',' << label(r.gender) << ',' << r.identity << '\n';
  }
}

std::pair<DatasetSplit, DatasetSplit> split_dataset(const DatasetSplit& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument(fmt::format("train_fraction {} must lie strictly between 0 and 1", train_fraction));
  }
  // Identities grouped by gender, each group shuffled independently.
  std::map<std::size_t, Gender> id_gender;
  for (const auto& r : ds.records) id_gender.emplace(r.identity, r.gender);
  if (id_gender.size() < 2) {
    throw std::invalid_argument(fmt::format("split_dataset: need at least 2 identities, got {}", id_gender.size()));
  }
  std::mt19937_64 rng(seed);
  std::set<std::size_t> train_ids;
  std::vector<std::size_t> leftovers;
  for (Gender g : {Gender::Female, Gender::Male}) {
    std::vector<std::size_t> group;
    for (const auto& [id, gender] : id_gender) {
      if (gender == g) group.push_back(id);
    }
    for (std::size_t i = group.size(); i > 1; --i) std::swap(group[i - 1], group[rng() % i]);
    const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(group.size())));
    for (std::size_t i = 0; i < group.size(); ++i) {
      if (i < n_train) {
        train_ids.insert(group[i]);
      } else {
        leftovers.push_back(group[i]);
      }
    }
  }
  if (train_ids.empty()) train_ids.insert(leftovers.front());
  if (train_ids.size() == id_gender.size()) train_ids.erase(std::prev(train_ids.end()));

  std::pair<DatasetSplit, DatasetSplit> out;
  for (const auto& r : ds.records) {
    FaceRecord copy = r;
    if (train_ids.count(r.identity)) {
      copy.split = Split::Train;
      out.first.records.push_back(std::move(copy));
    } else {
      copy.split = Split::Test;
      out.second.records.push_back(std::move(copy));
    }
  }
  return out;
}

Tensor stack_images(const std::vector<const FaceRecord*>& records) {
  if (records.empty()) throw std::invalid_argument("stack_images: no records");
  const auto& shape = records.front()->image.shape();
  const std::size_t per = records.front()->image.numel();
  std::vector<float> values;
  values.reserve(per * records.size());
  for (const auto* r : records) {
    if (r->image.shape() != shape) throw ShapeError("stack_images: records differ in shape");
    values.insert(values.end(), r->image.values().begin(), r->image.values().end());
  }
  return Tensor(Shape{records.size(), shape[0], shape[1], shape[2]}, std::move(values));
}

Tensor stack_images(const DatasetSplit& ds, std::size_t begin, std::size_t end) {
  std::vector<const FaceRecord*> ptrs;
  for (std::size_t i = begin; i < end && i < ds.records.size(); ++i) ptrs.push_back(&ds.records[i]);
  return stack_images(ptrs);
}

}  // namespace sanet
