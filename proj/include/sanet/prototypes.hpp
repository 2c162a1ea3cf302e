#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include "sanet/data.hpp"

namespace sanet {

enum class PrototypeKind { SameGender, Neutral, OppositeGender };

PrototypeKind parse_prototype_kind(std::string_view name);
std::string_view to_string(PrototypeKind kind);

/// Mean male/female faces ([3,H,W], gray replicated across channels) and the
/// neutral blend alpha_female * female + alpha_male * male.
struct PrototypeSet {
  Tensor male;
  Tensor female;
  Tensor neutral;
  double alpha_male = 0.5;
  double alpha_female = 0.5;
  std::size_t n_male = 0;
  std::size_t n_female = 0;
};

/// Fills in alphas and the neutral prototype from the two means and the class counts.
PrototypeSet make_prototypes(Tensor male, Tensor female, std::size_t n_male, std::size_t n_female);

/// Pixel means over male and female records (accumulated in double).
PrototypeSet compute_prototypes(const DatasetSplit& train);

const Tensor& select_prototype(const PrototypeSet& ps, Gender y, PrototypeKind kind);

/// [N,3,H,W] stack of the selected prototype for each gender label.
Tensor prototype_batch(const PrototypeSet& ps, const std::vector<Gender>& genders, PrototypeKind kind);

/// male.png, female.png, neutral.png and prototypes.json (alphas and counts).
void save_prototypes(const PrototypeSet& ps, const std::filesystem::path& dir);
PrototypeSet load_prototypes(const std::filesystem::path& dir);

}  // namespace sanet
