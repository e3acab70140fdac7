#include "mirror_opt/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"

namespace mirror_opt {

std::string_view to_string(ExtensionRule rule) {
  switch (rule) {
    case ExtensionRule::kConstantMean:
      return "constant_mean";
    case ExtensionRule::kConstantMin:
      return "constant_min";
    case ExtensionRule::kConstantFinal:
      return "constant_final";
    case ExtensionRule::kReciprocal:
      return "reciprocal";
    case ExtensionRule::kRootReciprocal:
      return "root_reciprocal";
    case ExtensionRule::kFixed:
      return "fixed";
  }
  return "unknown";
}

ExtensionRule extension_rule_from_string(std::string_view name) {
  for (ExtensionRule r : {ExtensionRule::kConstantMean, ExtensionRule::kConstantMin, ExtensionRule::kConstantFinal,
                          ExtensionRule::kReciprocal, ExtensionRule::kRootReciprocal, ExtensionRule::kFixed}) {
    if (to_string(r) == name) return r;
  }
  throw ConfigError(fmt::format("unknown extension rule '{}'", name));
}

StepSchedule::StepSchedule(std::vector<double> learned, ExtensionRule rule, double fixed_value, double divisor)
    : learned_(std::move(learned)), rule_(rule), fixed_(fixed_value), divisor_(divisor) {
  if (learned_.empty() && rule_ != ExtensionRule::kFixed) throw ConfigError("schedule: no learned step sizes");
  for (double t : learned_) {
    if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError(fmt::format("schedule: step size {} must be > 0", t));
  }
  if (rule_ == ExtensionRule::kFixed && !(fixed_ > 0.0)) throw ConfigError("schedule: fixed value must be > 0");
  if (!(divisor_ > 0.0)) throw ConfigError("schedule: divisor must be > 0");
  c_ = 0.0;
  c_prime_ = 0.0;
  for (std::size_t i = 0; i < learned_.size(); ++i) {
    c_ += static_cast<double>(i + 1) * learned_[i];
    c_prime_ += static_cast<double>(i + 1) * std::sqrt(learned_[i]);
  }
  c_ /= divisor_;
  c_prime_ /= divisor_;
  switch (rule_) {
    case ExtensionRule::kConstantMean:
      extension_ = std::accumulate(learned_.begin(), learned_.end(), 0.0) / static_cast<double>(learned_.size());
      break;
    case ExtensionRule::kConstantMin:
      extension_ = *std::min_element(learned_.begin(), learned_.end());
      break;
    case ExtensionRule::kConstantFinal:
      extension_ = learned_.back();
      break;
    case ExtensionRule::kFixed:
      extension_ = fixed_;
      break;
    default:
      extension_ = 0.0;
  }
}

StepSchedule StepSchedule::constant(double t) { return StepSchedule({t}, ExtensionRule::kConstantFinal); }

double StepSchedule::at(long k) const {
  if (k < 1) throw ConfigError(fmt::format("schedule: index {} must be >= 1", k));
  if (static_cast<std::size_t>(k) <= learned_.size()) return learned_[static_cast<std::size_t>(k - 1)];
  switch (rule_) {
    case ExtensionRule::kReciprocal:
      return c_ / static_cast<double>(k);
    case ExtensionRule::kRootReciprocal:
      return c_prime_ / std::sqrt(static_cast<double>(k));
    default:
      return extension_;
  }
}

nlohmann::json StepSchedule::to_json() const {
  nlohmann::json doc;
  doc["learned"] = learned_;
  doc["rule"] = to_string(rule_);
  if (rule_ == ExtensionRule::kFixed) doc["fixed_value"] = fixed_;
  if (divisor_ != 1.0) doc["divisor"] = divisor_;
  return doc;
}

StepSchedule StepSchedule::from_json(const nlohmann::json& doc) {
  try {
    return StepSchedule(doc.at("learned").get<std::vector<double>>(),
                        extension_rule_from_string(doc.at("rule").get<std::string>()), doc.value("fixed_value", 0.0),
                        doc.value("divisor", 1.0));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed schedule document: {}", e.what()));
  }
}

}  // namespace mirror_opt
