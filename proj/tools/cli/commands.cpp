#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>

#include <fmt/format.h>

#include "mirror_opt/diagnostics.hpp"
#include "mirror_opt/error.hpp"
#include "mirror_opt/map_parameterization.hpp"
#include "mirror_opt/meta_training.hpp"
#include "mirror_opt/parallel.hpp"

namespace mirror_opt::cli {

namespace {

constexpr double kEquivarianceThreshold = 1e-8;
constexpr std::uint64_t kDataStream = 0x4551;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create output directory '{}': {}", dir.string(), ec.message()));
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  return out;
}

const json& pick(const AlgorithmSpec& a, const json& doc, const char* key) {
  static const json kNull;
  if (a.params.contains(key)) return a.params.at(key);
  if (doc.contains(key)) return doc.at(key);
  return kNull;
}

struct RunOutput {
  std::string suffix;
  Trace trace;
};

std::vector<RunOutput> run_algorithm(const Config& cfg, const AlgorithmSpec& a, const ProblemSetup& setup,
                                     const BaselineConfig* tuned, std::uint64_t seed) {
  const RunOptions opts = run_options(cfg.doc, seed);
  const auto oracle = build_oracle(pick(a, cfg.doc, "oracle"), setup, seed);
  const Problem& problem = *setup.problem;
  const Vector x0 = setup.x0(seed);
  if (a.is_baseline()) {
    BaselineConfig c;
    if (tuned != nullptr) {
      c = *tuned;
    } else {
      c.kind = a.baseline();
      c.step = get(a.params, "step", c.step);
    }
    c.beta1 = get(a.params, "beta1", c.beta1);
    c.beta2 = get(a.params, "beta2", c.beta2);
    c.eps = get(a.params, "eps", c.eps);
    return {{"", run_baseline(c, problem, oracle.get(), x0, opts)}};
  }
  const MirrorMap map = build_map(cfg, pick(a, cfg.doc, "map"), problem.dim());
  const StepSchedule schedule = build_schedule(cfg, pick(a, cfg.doc, "schedule"), get(a.params, "step", 1e-2));
  if (a.name == "md" || a.name == "md_primal") {
    const MdForm form = a.name == "md" ? MdForm::kDual : MdForm::kPrimal;
    return {{"", run_md(map, problem, oracle.get(), schedule, x0, form, opts)}};
  }
  if (a.name == "lamd") {
    LamdParams p;
    p.r = get(a.params, "r", p.r);
    p.gamma = get(a.params, "gamma", p.gamma);
    return {{"", run_lamd(map, problem, oracle.get(), schedule, x0, p, opts)}};
  }
  if (a.name == "lsmd") {
    LsmdResult r = run_lsmd(map, problem, oracle.get(), schedule, x0, opts);
    return {{"", std::move(r.trace)}, {"_ergodic", std::move(r.ergodic)}};
  }
  return {{"", run_lasmd(map, problem, oracle.get(), schedule, x0, opts)}};
}

fs::path trace_path(const fs::path& out, const std::string& label, const std::string& suffix, std::uint64_t seed) {
  return out / fmt::format("trace_{}{}_seed{}.csv", label, suffix, seed);
}

std::vector<double> penalty_weights(const json& spec, int steps) {
  if (spec.is_null()) return {};
  if (spec.is_number()) return std::vector<double>(static_cast<std::size_t>(steps), spec.get<double>());
  return spec.get<std::vector<double>>();
}

std::unique_ptr<MapParameterization> build_parameterization(const json& spec, Index dim, const ProblemSetup* net,
                                                            std::optional<TyingSchema>& schema) {
  const auto kind = get<std::string>(spec, "kind", "diagonal");
  const auto tying = get<std::string>(spec, "tying", "none");
  if (tying != "none") {
    if (net == nullptr || (!net->dense && !net->conv)) throw ConfigError("tying needs a network family");
    if (net->conv) {
      schema = build_tying_schema(*net->conv);
    } else if (tying == "orbit" || tying == "layer") {
      schema = build_tying_schema(*net->dense, tying == "orbit" ? TyingGranularity::kOrbit : TyingGranularity::kLayer);
    } else {
      throw ConfigError(fmt::format("tying '{}' is not none, orbit or layer", tying));
    }
  }
  if (kind == "euclidean") return std::make_unique<EuclideanParameterization>(dim);
  if (kind == "diagonal") {
    if (schema) return std::make_unique<DiagonalParameterization>(dim, schema->orbit_of());
    return std::make_unique<DiagonalParameterization>(dim);
  }
  if (kind == "spline") {
    if (schema) {
      return std::make_unique<SplineParameterization>(dim, schema->spline_blocks(), static_cast<int>(schema->num_orbits()));
    }
    return std::make_unique<SplineParameterization>(dim);
  }
  throw ConfigError(fmt::format("parameterization kind '{}' is not euclidean, diagonal or spline", kind));
}

// D against A after dividing each by its geometric mean.
void report_recovered_diagonal(const fs::path& out, const Vector& a, const Vector& d) {
  const double ga = std::exp(a.array().log().mean());
  const double gd = std::exp(d.array().log().mean());
  auto f = open_out(out / "recovered_d.csv");
  f << "i,a,d,a_normalized,d_normalized,rel_error\n";
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double an = a[i] / ga;
    const double dn = d[i] / gd;
    const double err = std::abs(dn - an) / an;
    worst = std::max(worst, err);
    f << i << ',' << format_real(a[i]) << ',' << format_real(d[i]) << ',' << format_real(an) << ','
      << format_real(dn) << ',' << format_real(err) << '\n';
  }
  fmt::print("recovered D vs A after scale normalization: max relative error {:.4g}\n", worst);
}

}  // namespace

int cmd_train_map(const GlobalOptions& g) {
  const Config cfg = load_config(g.config);
  const json& doc = cfg.doc;
  const std::uint64_t seed = seeds(cfg, g).front();
  const json unroll = get(doc, "unroll", json::object());
  TrainConfig tc;
  tc.unroll.algorithm = in_loop_algorithm_from_string(get<std::string>(unroll, "algorithm", "lmd_dual"));
  tc.unroll.steps = get(unroll, "steps", 10);
  tc.unroll.penalty = penalty_weights(unroll.value("penalty", json(nullptr)), tc.unroll.steps);
  tc.unroll.final_iterate_only = get(unroll, "final_iterate_only", false);
  tc.unroll.r = get(unroll, "r", tc.unroll.r);
  tc.unroll.gamma = get(unroll, "gamma", tc.unroll.gamma);
  tc.meta_iterations = get(doc, "meta_iterations", tc.meta_iterations);
  tc.meta_step = get(doc, "meta_step", tc.meta_step);
  tc.batch_size = get(doc, "batch_size", tc.batch_size);
  tc.divergence_factor = get(doc, "divergence_factor", tc.divergence_factor);
  tc.extension = extension_rule_from_string(get<std::string>(doc, "extension", "constant_mean"));
  tc.threads = resolve_threads(g);
  const double initial_step = get(unroll, "initial_step", 1e-2);
  if (!(initial_step > 0.0)) throw ConfigError("unroll.initial_step must be > 0");

  const json family_spec = require<json>(doc, "family");
  const auto family_kind = require<std::string>(family_spec, "kind");
  const std::uint64_t family_seed = get(family_spec, "seed", seed);
  std::unique_ptr<ProblemFamily> family;
  std::optional<ProblemSetup> net;
  Vector quad_diag;
  if (family_kind == "quadratic") {
    quad_diag = vector_spec(require<json>(family_spec, "diag"), "family.diag");
    family = std::make_unique<QuadraticFamily>(quad_diag, family_seed, get(family_spec, "x0_scale", 1.0),
                                               get(family_spec, "noise_sigma", 0.0), tc.unroll.steps);
  } else {
    net = build_problem(cfg, family_spec);
    if (!net->init) throw ConfigError(fmt::format("family kind '{}' is not quadratic or a network problem", family_kind));
    family = std::make_unique<ClassifierFamily>(net->problem, net->init, family_seed,
                                                get<Index>(family_spec, "batch_size", 0), tc.unroll.steps);
  }
  std::optional<TyingSchema> schema;
  const json param_spec = get(doc, "parameterization", json::object());
  const auto param = build_parameterization(param_spec, family->dim(), net ? &*net : nullptr, schema);

  MetaParameters init{param->identity_params(), Vector::Constant(tc.unroll.steps, std::log(initial_step))};
  const TrainResult result = train_map(tc, *param, init, *family);

  ensure_dir(g.out);
  const MirrorMap map = result.map(*param);
  write_json(g.out / "map.json", map.to_json());
  write_json(g.out / "schedule.json", result.schedule(tc.extension).to_json());
  const Vector& th = result.params.map;
  const Vector& ls = result.params.log_steps;
  write_json(g.out / "params.json", {{"map", std::vector<double>(th.data(), th.data() + th.size())},
                                     {"log_steps", std::vector<double>(ls.data(), ls.data() + ls.size())}});
  if (schema) write_json(g.out / "schema.json", schema->to_json());
  write_train_log(g.out / "train_log.csv", result.log);
  if (!result.log.empty()) {
    fmt::print("meta-loss {:.6g} -> {:.6g} over {} meta-iterations\n", result.log.front().meta_loss,
               result.log.back().meta_loss, result.log.size());
  } else {
    fmt::print("no meta-iterations; wrote the initialization\n");
  }
  if (family_kind == "quadratic" && map.kind() == MapKind::kDiagonalQuadratic && !schema) {
    report_recovered_diagonal(g.out, quad_diag, th.array().exp().matrix());
  }
  return 0;
}

int cmd_optimize(const GlobalOptions& g) {
  const Config cfg = load_config(g.config);
  const ProblemSetup setup = build_problem(cfg, require<json>(cfg.doc, "problem"));
  const auto algs = algorithms(require<json>(cfg.doc, "algorithms"));
  const auto seed_list = seeds(cfg, g);
  ensure_dir(g.out);
  struct Job {
    std::size_t alg;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::uint64_t s : seed_list) {
    for (std::size_t a = 0; a < algs.size(); ++a) jobs.push_back({a, s});
  }
  std::vector<std::vector<RunOutput>> results(jobs.size());
  // Duplicate seeds produce the same file twice, so each path is written by one job only.
  parallel_for(jobs.size(), resolve_threads(g), [&](std::size_t i) {
    results[i] = run_algorithm(cfg, algs[jobs[i].alg], setup, nullptr, jobs[i].seed);
  });
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const AlgorithmSpec& a = algs[jobs[i].alg];
    for (RunOutput& r : results[i]) {
      r.trace.meta.seed = jobs[i].seed;
      r.trace.write_csv(trace_path(g.out, a.label, r.suffix, jobs[i].seed));
    }
    const Trace& main = results[i].front().trace;
    fmt::print("{:<12} seed {:<6} f_final {:.10g}{}\n", a.label, jobs[i].seed, main.final_value(),
               main.diverged() ? fmt::format(" (diverged at k = {})", *main.diverged_at) : std::string());
  }
  return 0;
}

int cmd_benchmark(const GlobalOptions& g) {
  const Config cfg = load_config(g.config);
  json doc = cfg.doc;
  if (!doc.contains("iterations")) doc["iterations"] = 2000;
  const Config run_cfg{doc, cfg.base};
  const ProblemSetup setup = build_problem(cfg, require<json>(doc, "problem"));
  const auto algs = algorithms(require<json>(doc, "algorithms"));
  const auto seed_list = seeds(cfg, g);
  const auto checkpoints = get(doc, "checkpoints", std::vector<long>{10, 100, 1000, 2000});
  GridSearchOptions gopts;
  gopts.eval_iteration = get(doc, "grid_eval_iteration", gopts.eval_iteration);
  gopts.late_factor = get(doc, "grid_late_factor", gopts.late_factor);
  ensure_dir(g.out);

  std::vector<std::optional<BaselineConfig>> tuned(algs.size());
  parallel_for(algs.size(), resolve_threads(g), [&](std::size_t i) {
    const AlgorithmSpec& a = algs[i];
    if (!a.is_baseline()) return;
    const std::uint64_t s = seed_list.front();
    const auto oracle = build_oracle(pick(a, doc, "oracle"), setup, s);
    BaselineConfig c;
    c.kind = a.baseline();
    c.beta1 = get(a.params, "beta1", c.beta1);
    c.beta2 = get(a.params, "beta2", c.beta2);
    c.eps = get(a.params, "eps", c.eps);
    const auto grid = a.params.contains("grid") ? a.params.at("grid").get<std::vector<double>>() : default_grid(c.kind);
    const GridSearchResult r = grid_search_baseline(c, *setup.problem, oracle.get(), setup.x0(s), grid, gopts);
    auto f = open_out(g.out / fmt::format("grid_{}.csv", a.label));
    write_grid_csv(f, r);
    tuned[i] = r.best;
  });

  struct Row {
    std::string label;
    std::uint64_t seed;
    std::optional<double> step;
    Trace trace;
  };
  std::vector<Row> rows;
  for (std::uint64_t s : seed_list) {
    for (std::size_t i = 0; i < algs.size(); ++i) {
      rows.push_back({algs[i].label, s, tuned[i] ? std::optional<double>(tuned[i]->step) : std::nullopt, {}});
    }
  }
  parallel_for(rows.size(), resolve_threads(g), [&](std::size_t j) {
    const std::size_t i = j % algs.size();
    rows[j].trace = run_algorithm(run_cfg, algs[i], setup, tuned[i] ? &*tuned[i] : nullptr, rows[j].seed).front().trace;
  });

  auto table = open_out(g.out / "benchmark.csv");
  table << "algorithm,seed,step";
  for (long k : checkpoints) table << ",f_" << k;
  table << '\n';
  for (const Row& r : rows) {
    table << r.label << ',' << r.seed << ',' << (r.step ? format_real(*r.step) : std::string());
    std::string line = fmt::format("{:<12} seed {:<4}", r.label, r.seed);
    for (long k : checkpoints) {
      table << ',';
      for (const TraceRow& row : r.trace.rows) {
        if (row.k == k) {
          table << format_real(row.f);
          line += fmt::format("  f_{}={:.6g}", k, row.f);
        }
      }
    }
    table << '\n';
    fmt::print("{}{}\n", line, r.step ? fmt::format("  (tuned step {})", *r.step) : std::string());
  }
  return 0;
}

int cmd_rate_check(const GlobalOptions& g, const RateCheckOptions& opts) {
  if (opts.trace.empty()) throw ConfigError("rate-check needs --trace");
  double f_star = 0.0;
  if (opts.f_star) {
    f_star = *opts.f_star;
  } else if (!g.config.empty()) {
    const Config cfg = load_config(g.config);
    const ProblemSetup setup = build_problem(cfg, require<json>(cfg.doc, "problem"));
    f_star = reference_minimum(*setup.problem, setup.x0(seeds(cfg, g).front())).f_star + 0.0;
  } else {
    throw ConfigError("rate-check needs --f-star or a --config with the problem");
  }
  if (!fs::exists(opts.trace)) throw IoError(fmt::format("trace '{}' does not exist", opts.trace.string()));
  const Trace trace = Trace::read_csv(opts.trace);
  const double slope = fit_rate(trace, f_star, opts.k_lo, opts.k_hi);
  const bool pass = slope <= opts.threshold;
  fmt::print("slope {:.4f} over k in [{}, {}] with f* = {:.17g}; threshold {}: {}\n", slope, opts.k_lo, opts.k_hi,
             f_star, opts.threshold, pass ? "PASS" : "FAIL");
  return 0;
}

int cmd_equivariance_check(const GlobalOptions& g) {
  json doc = json::object();
  if (!g.config.empty()) doc = load_config(g.config).doc;
  const std::uint64_t seed = g.seed.value_or(get<std::uint64_t>(doc, "seed", 0));
  const json arch_spec = get(doc, "architecture", json{{"kind", "dense"}, {"layers", {2, 50, 1}}});
  const int samples = get(doc, "samples", 100);
  const double t = get(doc, "t", 0.1);
  const auto steps = get(doc, "steps", std::vector<std::string>{"gd", "tied_diagonal", "untied_diagonal"});
  const Index n_data = get<Index>(doc, "data_size", 32);
  if (samples < 1) throw ConfigError("samples must be >= 1");

  auto rng = make_rng(seed, kDataStream);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  auto data = std::make_shared<ClassificationData>();
  std::shared_ptr<const Problem> problem;
  TyingSchema schema;
  std::function<GroupElement(std::mt19937_64&)> sample_g;
  std::function<Vector(std::mt19937_64&)> init;
  const auto kind = require<std::string>(arch_spec, "kind");
  auto fill = [&](Index rows, int classes) {
    data->features.resize(rows, n_data);
    for (Index j = 0; j < n_data; ++j) {
      for (Index i = 0; i < rows; ++i) data->features(i, j) = nd(rng);
      data->labels.push_back(static_cast<int>(j % classes));
    }
    data->num_classes = classes;
  };
  if (kind == "dense") {
    DenseArchitecture arch{require<std::vector<Index>>(arch_spec, "layers")};
    arch.validate();
    fill(arch.layer_sizes.front(), arch.layer_sizes.back() == 1 ? 2 : static_cast<int>(arch.layer_sizes.back()));
    problem = std::make_shared<DenseClassifier>(arch, data);
    schema = build_tying_schema(arch);
    sample_g = [arch](std::mt19937_64& r) { return sample_group_element(arch, r); };
    init = [arch](std::mt19937_64& r) { return init_dense_params(arch, r); };
  } else if (kind == "conv") {
    ConvArchitecture arch;
    arch.image_size = get(arch_spec, "image_size", arch.image_size);
    arch.channels = get(arch_spec, "channels", arch.channels);
    arch.classes = get(arch_spec, "classes", arch.classes);
    arch.validate();
    fill(arch.image_size * arch.image_size, static_cast<int>(arch.classes));
    problem = std::make_shared<ConvClassifier>(arch, data);
    schema = build_tying_schema(arch);
    sample_g = [arch](std::mt19937_64& r) { return sample_group_element(arch, r); };
    init = [arch](std::mt19937_64& r) { return init_conv_params(arch, r); };
  } else {
    throw ConfigError(fmt::format("architecture kind '{}' is not dense or conv", kind));
  }

  const Index dim = problem->dim();
  std::uniform_real_distribution<double> ud(0.5, 2.0);
  Vector tied(schema.num_orbits());
  for (Index i = 0; i < tied.size(); ++i) tied[i] = ud(rng);
  Vector untied(dim);
  for (Index i = 0; i < dim; ++i) untied[i] = ud(rng);
  const MirrorMap tied_map = MirrorMap::diagonal(expand_tied(schema, tied));
  const MirrorMap untied_map = MirrorMap::diagonal(untied);

  ensure_dir(g.out);
  auto csv = open_out(g.out / "equivariance.csv");
  csv << "step,sample,residual\n";
  for (const std::string& step : steps) {
    std::function<Vector(const Vector&)> fn;
    if (step == "gd") {
      fn = [&](const Vector& z) { return Vector(z - t * problem->gradient(z)); };
    } else if (step == "tied_diagonal" || step == "untied_diagonal") {
      const MirrorMap& m = step == "tied_diagonal" ? tied_map : untied_map;
      fn = [&m, &problem, t](const Vector& z) { return md_step_primal(m, z, problem->gradient(z), t); };
    } else {
      throw ConfigError(fmt::format("step '{}' is not gd, tied_diagonal or untied_diagonal", step));
    }
    auto srng = make_rng(seed, 0x4751);
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
      const GroupElement el = sample_g(srng);
      const Vector z = init(srng);
      const double r = check_equivariance(fn, el, z);
      worst = std::max(worst, r);
      csv << step << ',' << s << ',' << format_real(r) << '\n';
    }
    fmt::print("{:<16} max residual {:.3e} over {} group elements (threshold {:.0e}): {}\n", step, worst, samples,
               kEquivarianceThreshold, worst <= kEquivarianceThreshold ? "PASS" : "FAIL");
  }
  fmt::print("tying schema: {} parameters in {} orbits\n", schema.total_dim, schema.num_orbits());
  return 0;
}

}  // namespace mirror_opt::cli
