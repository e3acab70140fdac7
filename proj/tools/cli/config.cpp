#include "config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

#include <fmt/format.h>

#include "mirror_opt/datasets.hpp"
#include "mirror_opt/error.hpp"
#include "mirror_opt/image_io.hpp"

namespace mirror_opt::cli {

namespace {

constexpr std::uint64_t kStartStream = 0x5830;
constexpr std::uint64_t kInitStream = 0x4e4e;

json read_json_file(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("{} '{}' cannot be opened", what, path.string()));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{} '{}' is not valid JSON: {}", what, path.string(), e.what()));
  }
}

std::shared_ptr<const ClassificationData> mnist(const Config& cfg, const json& spec) {
  const fs::path dir = cfg.path(require<std::string>(spec, "mnist_dir"));
  auto data = load_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  const auto limit = get<Index>(spec, "limit", 0);
  if (limit > 0 && limit < data.size()) {
    data.features = data.features.leftCols(limit).eval();
    data.labels.resize(static_cast<std::size_t>(limit));
  }
  return std::make_shared<const ClassificationData>(std::move(data));
}

Matrix observed_image(const Config& cfg, const json& spec) {
  const json image = spec.value("image", json::object());
  if (image.contains("file")) {
    const fs::path p = cfg.path(image.at("file").get<std::string>());
    return p.extension() == ".pgm" ? read_pgm(p) : read_raw(p);
  }
  const json ph = image.value("phantom", json::object());
  EllipsePhantomSpec s;
  s.height = get(ph, "height", s.height);
  s.width = get(ph, "width", s.width);
  s.min_ellipses = get(ph, "min_ellipses", s.min_ellipses);
  s.max_ellipses = get(ph, "max_ellipses", s.max_ellipses);
  s.min_intensity = get(ph, "min_intensity", s.min_intensity);
  s.max_intensity = get(ph, "max_intensity", s.max_intensity);
  s.noise_std = get(ph, "noise_std", s.noise_std);
  s.seed = get<std::uint64_t>(ph, "seed", 0);
  return generate_ellipse_phantom(s).noisy;
}

DenseArchitecture dense_arch(const json& spec, std::vector<Index> fallback) {
  DenseArchitecture arch{get(spec, "layers", std::move(fallback))};
  arch.validate();
  return arch;
}

}  // namespace

int resolve_threads(const GlobalOptions& g) {
  if (g.threads > 0) return g.threads;
  if (const char* env = std::getenv("MIRROR_OPT_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ConfigError(fmt::format("MIRROR_OPT_THREADS='{}' is not a positive integer", env));
    return static_cast<int>(v);
  }
  return 1;
}

fs::path Config::path(const std::string& p) const {
  const fs::path raw(p);
  return raw.is_absolute() ? raw : base / raw;
}

Config load_config(const fs::path& path) {
  if (path.empty()) throw ConfigError("--config is required for this command");
  if (!fs::exists(path)) throw ConfigError(fmt::format("config file '{}' does not exist", path.string()));
  Config cfg{read_json_file(path, "config"), fs::absolute(path).parent_path()};
  if (!cfg.doc.is_object()) throw ConfigError("config: top level must be an object");
  const int version = require<int>(cfg.doc, "schema_version");
  if (version != kSchemaVersion) {
    throw ConfigError(fmt::format("config: schema_version {} is not supported (expected {})", version, kSchemaVersion));
  }
  return cfg;
}

std::vector<std::uint64_t> seeds(const Config& cfg, const GlobalOptions& g) {
  if (g.seed) return {*g.seed};
  auto out = get(cfg.doc, "seeds", std::vector<std::uint64_t>{0});
  if (out.empty()) throw ConfigError("config: seeds must be nonempty");
  return out;
}

Vector vector_spec(const json& spec, const char* what) {
  try {
    if (spec.is_array()) {
      const auto v = spec.get<std::vector<double>>();
      return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
    }
    const auto n = spec.at("n").get<Index>();
    if (n < 1) throw ConfigError(fmt::format("{}: n must be >= 1", what));
    if (spec.contains("constant")) return Vector::Constant(n, spec.at("constant").get<double>());
    const auto range = spec.at("logspace").get<std::vector<double>>();
    if (range.size() != 2 || !(range[0] > 0.0) || !(range[1] > 0.0)) {
      throw ConfigError(fmt::format("{}: logspace needs two positive endpoints", what));
    }
    Vector v(n);
    for (Index i = 0; i < n; ++i) {
      const double f = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
      v[i] = range[0] * std::pow(range[1] / range[0], f);
    }
    return v;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: expected a list or {{n, constant|logspace}}: {}", what, e.what()));
  }
}

ProblemSetup build_problem(const Config& cfg, const json& spec) {
  if (!spec.is_object()) throw ConfigError("config: 'problem' must be an object");
  const auto kind = require<std::string>(spec, "kind");
  ProblemSetup s;
  if (kind == "quadratic") {
    const Vector a = vector_spec(spec.at("a"), "problem.a");
    s.problem = spec.contains("b") ? std::make_shared<QuadraticProblem>(a, vector_spec(spec.at("b"), "problem.b"))
                                   : std::make_shared<QuadraticProblem>(a);
    const json start = spec.value("x0", json(nullptr));
    const Index n = a.size();
    if (start.is_object() && start.contains("gaussian")) {
      const double scale = start.at("gaussian").get<double>();
      s.x0 = [n, scale](std::uint64_t seed) {
        auto rng = make_rng(seed, kStartStream);
        std::normal_distribution<double> nd(0.0, scale);
        Vector v(n);
        for (Index i = 0; i < n; ++i) v[i] = nd(rng);
        return v;
      };
    } else {
      const Vector v = start.is_null() ? Vector::Ones(n) : vector_spec(start, "problem.x0");
      if (v.size() != n) throw DimensionError("problem.x0 does not match the dimension of a");
      s.x0 = [v](std::uint64_t) { return v; };
    }
  } else if (kind == "denoise" || kind == "inpaint") {
    Matrix y = observed_image(cfg, spec);
    const double lambda = get(spec, "lambda", TvProblem::kDefaultLambda);
    const double eps = get(spec, "eps", TvProblem::kDefaultEps);
    if (kind == "inpaint") {
      const Matrix mask = random_mask(y.rows(), y.cols(), get(spec, "missing_fraction", 0.1),
                                      get<std::uint64_t>(spec, "mask_seed", 0));
      y = y.cwiseProduct(mask).eval();
      s.problem = std::make_shared<TvProblem>(y, mask, lambda, eps);
    } else {
      s.problem = std::make_shared<TvProblem>(y, lambda, eps);
    }
    const Vector start = y.reshaped();
    s.x0 = [start](std::uint64_t) { return start; };
  } else if (kind == "svm") {
    const auto digits = filter_digits(*mnist(cfg, spec), {4, 9});
    const SvmData svm = make_svm_features(digits, get<std::uint64_t>(spec, "feature_seed", 0));
    s.problem = std::make_shared<SvmHingeProblem>(svm.features, svm.labels, get(spec, "c", 1.0));
    const Index n = s.problem->dim();
    s.x0 = [n](std::uint64_t) { return Vector(Vector::Zero(n)); };
  } else if (kind == "moons" || kind == "mnist_mlp") {
    std::shared_ptr<const ClassificationData> data;
    DenseArchitecture arch;
    if (kind == "moons") {
      data = std::make_shared<const ClassificationData>(
          make_moons(get<Index>(spec, "per_moon", 100), get(spec, "noise", 0.1), get<std::uint64_t>(spec, "data_seed", 0)));
      arch = dense_arch(spec, {2, 50, 1});
    } else {
      data = mnist(cfg, spec);
      arch = dense_arch(spec, {784, 50, 40, 30, 20, 10});
    }
    s.problem = std::make_shared<DenseClassifier>(arch, data);
    s.dense = arch;
    s.init = [arch](std::mt19937_64& rng) { return init_dense_params(arch, rng); };
  } else if (kind == "mnist_cnn") {
    const auto data = std::make_shared<const ClassificationData>(downscale_half(*mnist(cfg, spec)));
    ConvArchitecture arch;
    arch.channels = get(spec, "channels", arch.channels);
    arch.image_size = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(data->feature_dim()))));
    arch.validate();
    s.problem = std::make_shared<ConvClassifier>(arch, data);
    s.conv = arch;
    s.init = [arch](std::mt19937_64& rng) { return init_conv_params(arch, rng); };
  } else {
    throw ConfigError(fmt::format("problem kind '{}' is not one of quadratic, denoise, inpaint, svm, moons, "
                                  "mnist_mlp, mnist_cnn",
                                  kind));
  }
  if (s.init) {
    auto init = s.init;
    s.x0 = [init](std::uint64_t seed) {
      auto rng = make_rng(seed, kInitStream);
      return init(rng);
    };
  }
  return s;
}

std::unique_ptr<StochasticOracle> build_oracle(const json& spec, const ProblemSetup& setup, std::uint64_t seed) {
  if (spec.is_null()) return nullptr;
  const auto kind = require<std::string>(spec, "kind");
  if (kind == "gaussian") {
    return std::make_unique<StochasticOracle>(StochasticOracle::gaussian(setup.problem, require<double>(spec, "sigma"), seed));
  }
  if (kind == "minibatch") {
    return std::make_unique<StochasticOracle>(
        StochasticOracle::minibatch(setup.problem, require<Index>(spec, "batch_size"), seed));
  }
  throw ConfigError(fmt::format("oracle kind '{}' is not gaussian or minibatch", kind));
}

MirrorMap build_map(const Config& cfg, const json& spec, Index dim) {
  MirrorMap map = MirrorMap::euclidean(dim);
  if (spec.is_null()) return map;
  if (spec.contains("file")) {
    map = MirrorMap::from_json(read_json_file(cfg.path(spec.at("file").get<std::string>()), "map file"));
  } else {
    const auto kind = require<std::string>(spec, "kind");
    if (kind == "euclidean" && !spec.contains("params")) {
      return map;
    } else if (kind == "diagonal" && spec.contains("d")) {
      const json& d = spec.at("d");
      map = MirrorMap::diagonal(d.is_number() ? Vector::Constant(dim, d.get<double>()) : vector_spec(d, "map.d"));
    } else {
      map = MirrorMap::from_json(spec);
    }
  }
  if (map.dimension() != dim) {
    throw DimensionError(fmt::format("map has dimension {}, problem {}", map.dimension(), dim));
  }
  return map;
}

StepSchedule build_schedule(const Config& cfg, const json& spec, double fallback_step) {
  if (spec.is_null()) return StepSchedule::constant(fallback_step);
  if (spec.contains("file")) return StepSchedule::from_json(read_json_file(cfg.path(spec.at("file").get<std::string>()), "schedule file"));
  if (spec.contains("constant")) return StepSchedule::constant(spec.at("constant").get<double>());
  return StepSchedule::from_json(spec);
}

bool AlgorithmSpec::is_baseline() const { return name == "gd" || name == "nesterov" || name == "adam" || name == "sgd"; }

BaselineKind AlgorithmSpec::baseline() const { return baseline_kind_from_string(name); }

std::vector<AlgorithmSpec> algorithms(const json& list) {
  if (!list.is_array() || list.empty()) throw ConfigError("config: 'algorithms' must be a nonempty list");
  static const std::vector<std::string> known{"gd", "nesterov", "adam", "sgd", "md", "md_primal", "lamd", "lsmd", "lasmd"};
  std::vector<AlgorithmSpec> out;
  for (const json& item : list) {
    AlgorithmSpec a;
    if (item.is_string()) {
      a.name = item.get<std::string>();
      a.params = json::object();
    } else if (item.is_object()) {
      a.name = require<std::string>(item, "name");
      a.params = item;
    } else {
      throw ConfigError("config: algorithm entries are names or objects");
    }
    if (std::find(known.begin(), known.end(), a.name) == known.end()) {
      throw ConfigError(fmt::format("unknown algorithm '{}'", a.name));
    }
    a.label = get(a.params, "label", a.name);
    for (const auto& prev : out) {
      if (prev.label == a.label) throw ConfigError(fmt::format("algorithm label '{}' is used twice", a.label));
    }
    out.push_back(std::move(a));
  }
  return out;
}

RunOptions run_options(const json& doc, std::uint64_t seed) {
  RunOptions o;
  o.iterations = get(doc, "iterations", 1000L);
  o.record_every = get(doc, "record_every", 1L);
  o.record_wall_time = get(doc, "record_wall_time", false);
  o.divergence_factor = get(doc, "divergence_factor", o.divergence_factor);
  o.seed = seed;
  return o;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out << doc.dump(2) << '\n';
  if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

}  // namespace mirror_opt::cli
