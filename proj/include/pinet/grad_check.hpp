#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pinet/autodiff.hpp"
#include "pinet/tensor.hpp"

namespace pinet {

using ParamMap = std::map<std::string, Tensor>;

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  bool passed() const;
  double max_relative_error() const;
};

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-5;
  double absolute_floor = 1e-8;
};

/// Compares analytic gradients against central differences
/// (L(p + h e_i) - L(p - h e_i)) / 2h for every element of every parameter.
///
/// The relative error of an element is |a - n| / max(|a|, |n|, floor / tol),
/// so an element passes when |a - n| <= max(tol * max(|a|, |n|), floor).
GradCheckReport grad_check(const std::function<double(const ParamMap&)>& loss,
                           const std::function<ad::Gradients(const ParamMap&)>& analytic,
                           const ParamMap& params, const GradCheckOptions& options = {});

}  // namespace pinet
