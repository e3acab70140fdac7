#include <gtest/gtest.h>

#include <cmath>

#include "mirror_opt/error.hpp"
#include "mirror_opt/schedule.hpp"

namespace mo = mirror_opt;
using mo::ExtensionRule;
using mo::StepSchedule;

TEST(Schedule, LearnedPrefixThenExtension) {
  const std::vector<double> t{0.4, 0.2, 0.3};
  EXPECT_DOUBLE_EQ(StepSchedule(t, ExtensionRule::kConstantMean).at(10), 0.3);
  EXPECT_DOUBLE_EQ(StepSchedule(t, ExtensionRule::kConstantMin).at(4), 0.2);
  EXPECT_DOUBLE_EQ(StepSchedule(t, ExtensionRule::kConstantFinal).at(4), 0.3);
  EXPECT_DOUBLE_EQ(StepSchedule(t, ExtensionRule::kFixed, 0.01).at(99), 0.01);
  const StepSchedule rec(t, ExtensionRule::kReciprocal);
  EXPECT_DOUBLE_EQ(rec.at(2), 0.2);
  // c = 1*0.4 + 2*0.2 + 3*0.3
  EXPECT_DOUBLE_EQ(rec.c(), 1.7);
  EXPECT_DOUBLE_EQ(rec.at(10), 0.17);
  const StepSchedule root(t, ExtensionRule::kRootReciprocal);
  const double cp = std::sqrt(0.4) + 2 * std::sqrt(0.2) + 3 * std::sqrt(0.3);
  EXPECT_NEAR(root.c_prime(), cp, 1e-15);
  EXPECT_NEAR(root.at(16), cp / 4.0, 1e-15);
  EXPECT_DOUBLE_EQ(StepSchedule(t, ExtensionRule::kReciprocal, 0.0, 2.0).at(17), 1.7 / 2.0 / 17.0);
}

TEST(Schedule, StepIsOneBased) {
  const StepSchedule s({0.5, 0.25}, ExtensionRule::kConstantFinal);
  EXPECT_DOUBLE_EQ(s.step(0), 0.5);
  EXPECT_DOUBLE_EQ(s.step(1), 0.25);
  EXPECT_THROW(s.at(0), mo::ConfigError);
}

TEST(Schedule, Validation) {
  EXPECT_THROW(StepSchedule({0.1, -0.1}, ExtensionRule::kConstantMean), mo::ConfigError);
  EXPECT_THROW(StepSchedule({}, ExtensionRule::kConstantMean), mo::ConfigError);
  EXPECT_THROW(StepSchedule({0.1}, ExtensionRule::kFixed, 0.0), mo::ConfigError);
  EXPECT_THROW(mo::extension_rule_from_string("cosine"), mo::ConfigError);
}

TEST(Schedule, JsonRoundTrip) {
  const StepSchedule s({0.1, 0.3}, ExtensionRule::kRootReciprocal, 0.0, 3.0);
  const StepSchedule back = StepSchedule::from_json(nlohmann::json::parse(s.to_json().dump()));
  for (long k = 1; k < 50; ++k) EXPECT_EQ(back.at(k), s.at(k));
}

// Reciprocal extension: partial sums of t grow like log k while those of t^2 stay bounded.
TEST(ScheduleProperty, ReciprocalIsL2NotL1) {
  const StepSchedule s({0.5, 0.4, 0.3}, ExtensionRule::kReciprocal);
  double sum = 0.0;
  double sum_sq = 0.0;
  double sum_at_1e3 = 0.0;
  for (long k = 1; k <= 1000000; ++k) {
    const double t = s.at(k);
    if (k > 4) EXPECT_LE(t, s.at(k - 1));
    sum += t;
    sum_sq += t * t;
    if (k == 1000) sum_at_1e3 = sum;
  }
  // Growth between k = 1e3 and 1e6 is c * ln(1000).
  EXPECT_NEAR(sum - sum_at_1e3, s.c() * std::log(1000.0), 2e-3);
  EXPECT_LT(sum_sq, 0.5 * 0.5 + 0.4 * 0.4 + 0.3 * 0.3 + s.c() * s.c() * (M_PI * M_PI / 6.0));
}

TEST(Schedule, WorkedExamples) {
  const std::vector<double> t(10, 0.01);
  EXPECT_DOUBLE_EQ(StepSchedule(t, ExtensionRule::kConstantMean).at(500), 0.01);
  const StepSchedule rec(t, ExtensionRule::kReciprocal);
  EXPECT_NEAR(rec.c(), 0.55, 1e-15);
  EXPECT_NEAR(rec.at(50), 0.011, 1e-15);
  EXPECT_DOUBLE_EQ(StepSchedule(t, ExtensionRule::kFixed, 0.02).at(11), 0.02);
}
