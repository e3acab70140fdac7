#pragma once

#include <optional>

#include "config.hpp"

namespace mirror_opt::cli {

int cmd_train_map(const GlobalOptions& g);
int cmd_optimize(const GlobalOptions& g);
int cmd_benchmark(const GlobalOptions& g);

struct RateCheckOptions {
  fs::path trace;
  std::optional<double> f_star;
  long k_lo = 100;
  long k_hi = 2000;
  double threshold = -1.8;
};
int cmd_rate_check(const GlobalOptions& g, const RateCheckOptions& opts);

int cmd_equivariance_check(const GlobalOptions& g);

}  // namespace mirror_opt::cli
