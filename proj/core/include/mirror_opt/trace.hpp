#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mirror_opt/types.hpp"

namespace mirror_opt {

struct TraceRow {
  long k = 0;
  double t = 0.0;
  double f = 0.0;
  double grad_norm = 0.0;
  double consistency_error = 0.0;
  std::int64_t wall_ns = 0;
};

struct TraceMetadata {
  std::string algorithm;
  std::string map_kind;
  std::string problem_kind;
  std::uint64_t seed = 0;
};

/// Iterates kept when a run records its states. For LAMD x holds x^(k), x_tilde holds
/// x~^(k) and dual holds z^(k); other algorithms fill x and dual only.
struct IterateStates {
  std::vector<Vector> x;
  std::vector<Vector> x_tilde;
  std::vector<Vector> dual;
};

/// Per-iteration record of one optimizer run.
struct Trace {
  TraceMetadata meta;
  std::vector<TraceRow> rows;
  IterateStates states;
  /// Iteration at which the divergence detector stopped the run.
  std::optional<long> diverged_at;

  bool diverged() const { return diverged_at.has_value(); }
  double final_value() const;
  std::vector<double> values() const;

  void write_csv(std::ostream& out) const;
  void write_csv(const std::filesystem::path& path) const;
  static Trace read_csv(std::istream& in);
  static Trace read_csv(const std::filesystem::path& path);
};

/// Decimal with 17 significant digits, enough to round-trip a double.
std::string format_real(double v);

}  // namespace mirror_opt
