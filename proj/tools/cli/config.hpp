#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mirror_opt/equivariance.hpp"
#include "mirror_opt/error.hpp"
#include "mirror_opt/mirror_map.hpp"
#include "mirror_opt/networks.hpp"
#include "mirror_opt/optimizers.hpp"
#include "mirror_opt/oracle.hpp"
#include "mirror_opt/problems.hpp"
#include "mirror_opt/schedule.hpp"

namespace mirror_opt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Flags shared by every subcommand.
struct GlobalOptions {
  fs::path config;
  fs::path out = ".";
  std::optional<std::uint64_t> seed;
  int threads = 0;  // 0: MIRROR_OPT_THREADS, then 1
};

int resolve_threads(const GlobalOptions& g);

/// Parsed config document plus the directory relative paths are resolved against.
struct Config {
  json doc;
  fs::path base;

  fs::path path(const std::string& p) const;
};

/// Missing files and malformed JSON are config errors; so is a schema_version other than 1.
Config load_config(const fs::path& path);
/// The seeds list (default [0]), replaced by --seed when given.
std::vector<std::uint64_t> seeds(const Config& cfg, const GlobalOptions& g);

/// Typed lookup that reports the offending key as a ConfigError.
template <typename T>
T get(const json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}
template <typename T>
T require(const json& doc, const char* key) {
  if (!doc.contains(key)) throw ConfigError(std::string("config: missing key '") + key + "'");
  return get<T>(doc, key, T{});
}

Vector vector_spec(const json& spec, const char* what);

/// A problem instance and how to start on it.
struct ProblemSetup {
  std::shared_ptr<const Problem> problem;
  /// Start point for a given run seed.
  std::function<Vector(std::uint64_t)> x0;
  /// Set for network problems; used by tying and families.
  std::optional<DenseArchitecture> dense;
  std::optional<ConvArchitecture> conv;
  std::function<Vector(std::mt19937_64&)> init;
};

ProblemSetup build_problem(const Config& cfg, const json& spec);

/// Null when the spec is absent.
std::unique_ptr<StochasticOracle> build_oracle(const json& spec, const ProblemSetup& setup, std::uint64_t seed);

MirrorMap build_map(const Config& cfg, const json& spec, Index dim);
StepSchedule build_schedule(const Config& cfg, const json& spec, double fallback_step);

/// One entry of an "algorithms" list: a name or an object with a "name" field.
struct AlgorithmSpec {
  std::string name;
  std::string label;
  json params;
  bool is_baseline() const;
  BaselineKind baseline() const;
};
std::vector<AlgorithmSpec> algorithms(const json& list);

/// Per-run options from the top-level "iterations", "record_every" and "record_wall_time".
RunOptions run_options(const json& doc, std::uint64_t seed);

void write_json(const fs::path& path, const json& doc);

}  // namespace mirror_opt::cli
