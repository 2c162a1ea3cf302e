#include "sanet/config.hpp"

#include <fmt/format.h>

#include <fstream>
#include <functional>
#include <sstream>

namespace sanet {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("config key '{}': expected a non-negative integer, got '{}'", key, v));
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("config key '{}': expected a number, got '{}'", key, v));
  }
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, trim(item)));
  if (out.empty()) throw ConfigError(fmt::format("config key '{}': empty list", key));
  return out;
}

struct Field {
  const char* name;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

#define SIZE_FIELD(member)                                                        \
  Field {                                                                         \
    #member, [](const Config& c) { return std::to_string(c.member); },            \
        [](Config& c, const std::string& v) { c.member = parse_size(#member, v); } \
  }
#define DOUBLE_FIELD(member)                                                        \
  Field {                                                                           \
    #member, [](const Config& c) { return fmt::format("{}", c.member); },           \
        [](Config& c, const std::string& v) { c.member = parse_double(#member, v); } \
  }
#define LIST_FIELD(member)                                                        \
  Field {                                                                         \
    #member, [](const Config& c) { return fmt::format("{}", fmt::join(c.member, ",")); }, \
        [](Config& c, const std::string& v) { c.member = parse_list(#member, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      SIZE_FIELD(image_size),
      SIZE_FIELD(n_identities),
      SIZE_FIELD(images_per_identity),
      DOUBLE_FIELD(gender_signal_strength),
      DOUBLE_FIELD(train_fraction),
      SIZE_FIELD(kernel_size),
      DOUBLE_FIELD(leaky_slope),
      LIST_FIELD(ae_channels),
      LIST_FIELD(clf_channels),
      SIZE_FIELD(clf_hidden),
      LIST_FIELD(eval_clf_channels),
      SIZE_FIELD(eval_clf_hidden),
      SIZE_FIELD(descriptor_dim),
      DOUBLE_FIELD(dropout),
      Field{"seed", [](const Config& c) { return std::to_string(c.seed); },
            [](Config& c, const std::string& v) { c.seed = parse_size("seed", v); }},
      SIZE_FIELD(batch),
      SIZE_FIELD(epochs_aux),
      SIZE_FIELD(epochs_pretrain),
      SIZE_FIELD(epochs_train),
      DOUBLE_FIELD(lr_aux),
      DOUBLE_FIELD(lr_pretrain),
      DOUBLE_FIELD(lr_train),
      DOUBLE_FIELD(lambda_G),
      DOUBLE_FIELD(lambda_M),
      SIZE_FIELD(impostor_limit),
      DOUBLE_FIELD(fmr_target),
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef LIST_FIELD

void check(const Config& c) {
  if (c.image_size < 8) throw ConfigError("image_size must be at least 8");
  if (c.ae_channels.size() != 4) throw ConfigError("ae_channels needs 4 entries (encoder1, encoder2, decoder1, decoder2)");
  if (c.image_size % 4 != 0) throw ConfigError("image_size must be divisible by 4 (two 2x average pools)");
  if (c.kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd");
  if (!(c.leaky_slope > 0.0 && c.leaky_slope < 1.0)) throw ConfigError("leaky_slope must lie in (0,1)");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0,1)");
  if (c.batch == 0) throw ConfigError("batch must be positive");
  if (c.lambda_G < 0.0 || c.lambda_M < 0.0) throw ConfigError("loss weights must be non-negative");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  if (!(c.fmr_target > 0.0 && c.fmr_target < 1.0)) throw ConfigError("fmr_target must lie in (0,1)");
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.name) {
      f.set(*this, trim(value));
      return;
    }
  }
  throw ConfigError(fmt::format("unknown config key '{}'", key));
}

Config Config::parse(const std::string& text) {
  Config c;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("config line {}: expected key = value", line_no));
    c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  check(c);
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Config::to_text() const {
  check(*this);
  std::string out;
  for (const auto& f : fields()) out += fmt::format("{} = {}\n", f.name, f.get(*this));
  return out;
}

std::string Config::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_text()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace sanet
