#include "sanet/prototypes.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>

#include "sanet/image_io.hpp"

namespace sanet {
namespace {

Tensor replicate_rgb(const std::vector<double>& mean, std::size_t H, std::size_t W) {
  std::vector<float> v(3 * H * W);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < H * W; ++i) v[c * H * W + i] = static_cast<float>(mean[i]);
  }
  return Tensor(Shape{3, H, W}, std::move(v));
}

Tensor rgb_from_image(const Image8& img) {
  const std::size_t HW = img.width * img.height;
  std::vector<float> v(3 * HW);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < HW; ++i) {
      const std::size_t src = img.channels == 1 ? i : i * img.channels + c;
      v[c * HW + i] = static_cast<float>(img.pixels[src] / 255.0);
    }
  }
  return Tensor(Shape{3, img.height, img.width}, std::move(v));
}

Image8 image_from_rgb(const Tensor& t) {
  Image8 img;
  img.channels = 3;
  img.height = t.dim(1);
  img.width = t.dim(2);
  const std::size_t HW = img.width * img.height;
  img.pixels.resize(3 * HW);
  for (std::size_t i = 0; i < HW; ++i) {
    for (std::size_t c = 0; c < 3; ++c) img.pixels[3 * i + c] = to_byte(t.values()[c * HW + i]);
  }
  return img;
}

}  // namespace

PrototypeKind parse_prototype_kind(std::string_view name) {
  if (name == "SM" || name == "sm") return PrototypeKind::SameGender;
  if (name == "NT" || name == "nt") return PrototypeKind::Neutral;
  if (name == "OP" || name == "op") return PrototypeKind::OppositeGender;
  throw std::invalid_argument(fmt::format("unknown prototype kind '{}' (expected SM, NT or OP)", name));
}

std::string_view to_string(PrototypeKind kind) {
  switch (kind) {
    case PrototypeKind::SameGender:
      return "SM";
    case PrototypeKind::Neutral:
      return "NT";
    case PrototypeKind::OppositeGender:
      return "OP";
  }
  throw std::invalid_argument("unknown prototype kind");
}

PrototypeSet make_prototypes(Tensor male, Tensor female, std::size_t n_male, std::size_t n_female) {
  if (n_male == 0 || n_female == 0) {
    throw std::invalid_argument(fmt::format("prototypes need both genders (male={}, female={})", n_male, n_female));
  }
  if (male.shape() != female.shape() || male.rank() != 3 || male.dim(0) != 3) {
    throw ShapeError("prototypes must be matching [3,H,W] tensors");
  }
  PrototypeSet ps;
  ps.n_male = n_male;
  ps.n_female = n_female;
  ps.alpha_male = static_cast<double>(n_male) / static_cast<double>(n_male + n_female);
  ps.alpha_female = static_cast<double>(n_female) / static_cast<double>(n_male + n_female);
  std::vector<float> nt(male.numel());
  for (std::size_t i = 0; i < nt.size(); ++i) {
    nt[i] = static_cast<float>(ps.alpha_female * female.values()[i] + ps.alpha_male * male.values()[i]);
  }
  ps.neutral = Tensor(male.shape(), std::move(nt));
  ps.male = std::move(male);
  ps.female = std::move(female);
  return ps;
}

PrototypeSet compute_prototypes(const DatasetSplit& train) {
  if (train.empty()) throw std::invalid_argument("compute_prototypes: empty training split");
  const std::size_t H = train.records.front().image.dim(1), W = train.records.front().image.dim(2);
  std::vector<double> male(H * W, 0.0), female(H * W, 0.0);
  std::size_t n_male = 0, n_female = 0;
  for (const auto& r : train.records) {
    if (r.image.shape() != Shape{1, H, W}) throw ShapeError("compute_prototypes: records differ in shape");
    auto& acc = r.gender == Gender::Male ? male : female;
    (r.gender == Gender::Male ? n_male : n_female)++;
    for (std::size_t i = 0; i < H * W; ++i) acc[i] += r.image.values()[i];
  }
  if (n_male == 0 || n_female == 0) {
    throw std::invalid_argument(
        fmt::format("compute_prototypes: single-gender training split (male={}, female={})", n_male, n_female));
  }
  for (auto& v : male) v /= static_cast<double>(n_male);
  for (auto& v : female) v /= static_cast<double>(n_female);
  return make_prototypes(replicate_rgb(male, H, W), replicate_rgb(female, H, W), n_male, n_female);
}

const Tensor& select_prototype(const PrototypeSet& ps, Gender y, PrototypeKind kind) {
  switch (kind) {
    case PrototypeKind::SameGender:
      return y == Gender::Male ? ps.male : ps.female;
    case PrototypeKind::OppositeGender:
      return y == Gender::Male ? ps.female : ps.male;
    case PrototypeKind::Neutral:
      return ps.neutral;
  }
  throw std::invalid_argument("unknown prototype kind");
}

Tensor prototype_batch(const PrototypeSet& ps, const std::vector<Gender>& genders, PrototypeKind kind) {
  const Shape& s = ps.male.shape();
  std::vector<float> values;
  values.reserve(genders.size() * ps.male.numel());
  for (Gender g : genders) {
    auto v = select_prototype(ps, g, kind).values();
    values.insert(values.end(), v.begin(), v.end());
  }
  return Tensor(Shape{genders.size(), s[0], s[1], s[2]}, std::move(values));
}

void save_prototypes(const PrototypeSet& ps, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_png(image_from_rgb(ps.male), dir / "male.png");
  write_png(image_from_rgb(ps.female), dir / "female.png");
  write_png(image_from_rgb(ps.neutral), dir / "neutral.png");
  nlohmann::json sidecar{{"alpha_male", ps.alpha_male},
                         {"alpha_female", ps.alpha_female},
                         {"n_male", ps.n_male},
                         {"n_female", ps.n_female},
                         {"image_size", ps.male.dim(1)}};
  std::ofstream out(dir / "prototypes.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "prototypes.json").string());
  out << sidecar.dump(2) << '\n';
}

PrototypeSet load_prototypes(const std::filesystem::path& dir) {
  std::ifstream in(dir / "prototypes.json");
  if (!in) throw std::runtime_error("cannot open " + (dir / "prototypes.json").string());
  const auto sidecar = nlohmann::json::parse(in);
  return make_prototypes(rgb_from_image(read_image(dir / "male.png")), rgb_from_image(read_image(dir / "female.png")),
                         sidecar.at("n_male").get<std::size_t>(), sidecar.at("n_female").get<std::size_t>());
}

}  // namespace sanet
