#include "pinet/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace pinet {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradCheckReport::max_relative_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_relative_error);
  return m;
}

GradCheckReport grad_check(const std::function<double(const ParamMap&)>& loss,
                           const std::function<ad::Gradients(const ParamMap&)>& analytic,
                           const ParamMap& params, const GradCheckOptions& options) {
  const ad::Gradients grads = analytic(params);
  const double denom_floor = options.absolute_floor / options.tolerance;
  GradCheckReport report;
  ParamMap probe = params;
  for (const auto& [name, value] : params) {
    GradCheckEntry entry{.name = name};
    auto found = grads.by_name.find(name);
    Tensor& slot = probe.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = slot[i];
      slot[i] = saved + options.step;
      const double up = loss(probe);
      slot[i] = saved - options.step;
      const double down = loss(probe);
      slot[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = found == grads.by_name.end() ? 0.0 : found->second[i];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), denom_floor});
      if (i == 0 || err > entry.max_relative_error || std::isnan(err)) {
        entry.max_relative_error = err;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    entry.passed = entry.max_relative_error <= options.tolerance;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace pinet
