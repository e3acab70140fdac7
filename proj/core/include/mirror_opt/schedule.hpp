#pragma once

#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace mirror_opt {

enum class ExtensionRule { kConstantMean, kConstantMin, kConstantFinal, kReciprocal, kRootReciprocal, kFixed };

std::string_view to_string(ExtensionRule rule);
ExtensionRule extension_rule_from_string(std::string_view name);

/// Step sizes t_1..t_N followed by an extension rule for k > N.
///
/// The reciprocal rules use c = sum_i i t_i and c' = sum_i i sqrt(t_i), each divided by an
/// optional divisor (1 by default), giving t_k = c/k and t_k = c'/sqrt(k).
class StepSchedule {
 public:
  StepSchedule(std::vector<double> learned, ExtensionRule rule, double fixed_value = 0.0, double divisor = 1.0);

  /// t_k = t for every k.
  static StepSchedule constant(double t);

  /// t_k for k >= 1.
  double at(long k) const;
  /// Step used by iteration k of a run (0-based), i.e. at(k + 1).
  double step(long iteration) const { return at(iteration + 1); }

  const std::vector<double>& learned() const { return learned_; }
  ExtensionRule rule() const { return rule_; }
  double fixed_value() const { return fixed_; }
  double divisor() const { return divisor_; }
  double c() const { return c_; }
  double c_prime() const { return c_prime_; }

  nlohmann::json to_json() const;
  static StepSchedule from_json(const nlohmann::json& doc);

 private:
  std::vector<double> learned_;
  ExtensionRule rule_;
  double fixed_;
  double divisor_;
  double extension_;  // value of the constant rules
  double c_;
  double c_prime_;
};

}  // namespace mirror_opt
