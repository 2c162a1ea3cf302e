#pragma once

// Accumulates named failures so a property can be reported from a unit test
// and from the acceptance driver alike.

#include <fmt/format.h>

#include <string>
#include <vector>

namespace sanet::testing {

class CheckList {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void near(double got, double want, double tol, const std::string& what) {
    expect(std::abs(got - want) <= tol, fmt::format("{}: got {} want {} (tol {})", what, got, want, tol));
  }
  bool ok() const { return failures_.empty(); }
  const std::vector<std::string>& failures() const { return failures_; }
  std::string summary() const {
    std::string s;
    for (const auto& f : failures_) s += f + "; ";
    return s;
  }

 private:
  std::vector<std::string> failures_;
};

}  // namespace sanet::testing
