#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "svcam/dataset.hpp"
#include "svcam/error.hpp"
#include "svcam/hypotest.hpp"
#include "svcam/inference.hpp"
#include "svcam/peblle.hpp"
#include "svcam/simlab.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace svcam;

namespace {

constexpr const char* kVersion = "0.1.0";

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Schema:
    case ErrorKind::Parse:
    case ErrorKind::EmptyData:
    case ErrorKind::InvalidData:
    case ErrorKind::Argument:
    case ErrorKind::KnotPlacement:
      return 2;
    case ErrorKind::Io:
      return 4;
    default:
      return 3;
  }
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Outputs {
 public:
  explicit Outputs(std::string dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create output directory " + dir_ + ": " + ec.message());
  }

  void write(const std::string& name, const std::string& bytes) {
    const std::string path = (fs::path(dir_) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
    out << bytes;
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
    files_.push_back({name, sha256_hex(bytes)});
  }

  void manifest(const std::string& command, const json& config, std::uint64_t seed,
                const std::vector<std::string>& inputs, double wall_seconds) {
    json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["config"] = config;
    m["seed"] = seed;
    json in = json::array();
    for (const auto& path : inputs) in.push_back({{"path", path}, {"sha256", sha256_hex(read_file(path))}});
    m["inputs"] = in;
    json out = json::array();
    for (const auto& [name, digest] : files_) out.push_back({{"path", name}, {"sha256", digest}});
    m["outputs"] = out;
    m["wall_time_seconds"] = wall_seconds;
    const std::string path = (fs::path(dir_) / "manifest.json").string();
    std::ofstream f(path);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + path);
    f << m.dump(2) << "\n";
  }

 private:
  std::string dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

struct DataArgs {
  std::string path;
  std::string subject = "subject";
  std::string time = "time";
  std::string response = "y";
  std::vector<std::string> z;
  std::vector<std::string> x;

  void attach(CLI::App* app) {
    app->add_option("data", path, "long-format CSV")->required();
    app->add_option("--subject-col", subject, "subject id column");
    app->add_option("--time-col", time, "time column");
    app->add_option("--response-col", response, "response column");
    app->add_option("--z-cols", z, "discrete covariate columns (default z1..zq)")->delimiter(',');
    app->add_option("--x-cols", x, "continuous covariate columns (default x1..xp)")->delimiter(',');
  }

  LongitudinalDataset load() const {
    ColumnSchema schema;
    schema.subject = subject;
    schema.time = time;
    schema.response = response;
    schema.z_columns = z;
    schema.x_columns = x;
    schema.detect = z.empty() && x.empty();
    return load_longitudinal(path, schema);
  }
};

struct FitArgs {
  std::string h_c = "auto";
  std::string h_a = "auto";
  std::string knots = "auto";
  std::size_t grid = 101;

  void attach(CLI::App* app) {
    app->add_option("--h-c", h_c, "time bandwidth or auto (CV)");
    app->add_option("--h-a", h_a, "covariate bandwidth or auto (CV)");
    app->add_option("--knots", knots, "interior knots K_C,K_A or auto (BIC)");
    app->add_option("--grid", grid, "evaluation grid size")->check(CLI::Range(2, 100000));
  }

  static std::optional<double> bandwidth(const std::string& text, const char* flag) {
    if (text == "auto") return std::nullopt;
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used == text.size() && v > 0.0) return v;
    } catch (const std::logic_error&) {
    }
    throw Error(ErrorKind::Argument, std::string(flag) + " must be a positive number or auto");
  }

  FitConfig config(unsigned threads) const {
    FitConfig fc;
    fc.h_c = bandwidth(h_c, "--h-c");
    fc.h_a = bandwidth(h_a, "--h-a");
    fc.grid_size = grid;
    fc.threads = threads;
    if (knots != "auto") {
      int a = 0, b = 0;
      char comma = 0, extra = 0;
      std::istringstream ss(knots);
      if (!(ss >> a >> comma >> b) || comma != ',' || (ss >> extra) || a < 0 || b < 0)
        throw Error(ErrorKind::Argument, "--knots must be K_C,K_A or auto");
      fc.knots = std::pair{a, b};
    }
    return fc;
  }
};

json curve_json(const ComponentCurve& c) {
  return {{"grid", c.grid}, {"values", c.values}, {"bandwidth", c.bandwidth}};
}

json regime_json(const RegimeReport& r) {
  return {{"r", r.r}, {"ratio", r.ratio}, {"label", r.label}, {"lo", r.lo}, {"hi", r.hi}};
}

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::Argument, std::string(flag) + ": invalid number '" + item + "'");
    }
  }
  if (out.empty()) throw Error(ErrorKind::Argument, std::string(flag) + " is empty");
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::pair<int, int> knots_of(const SemiVcamFit& f) {
  const int kc = static_cast<int>(f.pilot.basis_c.interior_knots().size());
  const int ka = f.pilot.basis_a.empty() ? 0 : static_cast<int>(f.pilot.basis_a[0].interior_knots().size());
  return {kc, ka};
}

std::vector<Curve1D> clamped_additive(const SemiVcamFit& f) {
  std::vector<Curve1D> out;
  for (const auto& c : f.additive_curves) out.push_back([c](double x) { return c.clamped(x); });
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-VCAM estimation, confidence bands and specification tests"};
  app.set_config("--config", "", "key = value config file; flags override it");
  app.require_subcommand(1);
  unsigned threads = 1;
  app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit the model and write curves and confidence bands");
  DataArgs fit_data;
  FitArgs fit_args;
  double level = 0.95;
  std::string method = "unified";
  std::string fit_out = "svcam_fit";
  int regime_r = 2;
  std::uint64_t fit_seed = 1;
  fit_data.attach(fit_cmd);
  fit_args.attach(fit_cmd);
  fit_cmd->add_option("--level", level, "confidence level")->check(CLI::Range(0.5, 0.999999));
  fit_cmd->add_option("--method", method, "unified|sparse|dense|ultradense");
  fit_cmd->add_option("--regime-r", regime_r, "smoothness order r of the regime ratio")->check(CLI::Range(1, 10));
  fit_cmd->add_option("--seed", fit_seed, "recorded in the manifest");
  fit_cmd->add_option("--out", fit_out, "output directory");

  // test
  auto* test_cmd = app.add_subcommand("test", "bootstrap specification test");
  DataArgs test_data;
  FitArgs test_args;
  std::string which = "time-varying";
  std::size_t B = 199;
  std::uint64_t test_seed = 1;
  std::string test_out = "svcam_test";
  double test_h_c = 0.0, test_h_a = 0.0;
  test_data.attach(test_cmd);
  test_args.attach(test_cmd);
  test_cmd->add_option("--which", which, "time-varying|linearity");
  test_cmd->add_option("--B", B, "bootstrap replicates (>= 99)");
  test_cmd->add_option("--seed", test_seed, "bootstrap seed");
  test_cmd->add_option("--test-h-c", test_h_c, "test time bandwidth (default h_C * N^-1/20)");
  test_cmd->add_option("--test-h-a", test_h_a, "test covariate bandwidth (default h_A * N^-1/20)");
  test_cmd->add_option("--out", test_out, "output directory");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo studies");
  std::string study = "table1", cells = "50x5", thetas = "0,0.8", levels = "0.9,0.95", methods = "unified";
  std::string dgp = "dgp1", sim_out = "svcam_sim", sim_knots = "auto";
  std::size_t Q = 100, sim_B = 200, pilot_reps = 3, cv_points = 9;
  std::uint64_t sim_seed = 1;
  double sim_h_c = 0.0, sim_h_a = 0.0;
  bool per_rep_cv = false;
  sim_cmd->add_option("--study", study, "table1|coverage|power");
  sim_cmd->add_option("--cells", cells, "comma separated NxM cells");
  sim_cmd->add_option("--Q", Q, "replications per cell");
  sim_cmd->add_option("--B", sim_B, "bootstrap replicates (power)");
  sim_cmd->add_option("--seed", sim_seed, "master seed");
  sim_cmd->add_option("--thetas", thetas, "deviation parameters (power)");
  sim_cmd->add_option("--levels", levels, "levels (coverage: confidence, power: test)");
  sim_cmd->add_option("--methods", methods, "interval methods (coverage)");
  sim_cmd->add_option("--dgp", dgp, "dgp1|dgp2 (power)");
  sim_cmd->add_option("--h-c", sim_h_c, "fixed time bandwidth (skips CV)");
  sim_cmd->add_option("--h-a", sim_h_a, "fixed covariate bandwidth (skips CV)");
  sim_cmd->add_option("--knots", sim_knots, "K_C,K_A or auto (BIC)");
  sim_cmd->add_flag("--per-rep-cv", per_rep_cv, "cross-validate in every replication");
  sim_cmd->add_option("--pilot-reps", pilot_reps, "pilot replications for the cell bandwidths");
  sim_cmd->add_option("--cv-points", cv_points, "CV grid points per bandwidth");
  sim_cmd->add_option("--out", sim_out, "output directory");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "time fits on simulated Example 1 data");
  std::string bench_cells = "50x10,100x10";
  std::size_t bench_reps = 5;
  double bench_h_c = 0.16, bench_h_a = 0.395;
  bench_cmd->add_option("--cells", bench_cells, "comma separated NxM cells");
  bench_cmd->add_option("--reps", bench_reps, "fits per cell")->check(CLI::Range(1, 100000));
  bench_cmd->add_option("--h-c", bench_h_c, "time bandwidth");
  bench_cmd->add_option("--h-a", bench_h_a, "covariate bandwidth");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    if (*fit_cmd) {
      const auto ds = fit_data.load();
      const auto cfg = fit_args.config(threads);
      const IntervalMethod im = parse_method(method);
      const auto f = fit(ds, cfg);
      const auto s = summarize(ds);
      const auto ne = estimate_nuisance(ds, f, {}, im == IntervalMethod::Sparse);
      const auto bands = all_bands(f, ne, s, level, im, regime_r);
      const auto regime = classify_regime(s, regime_r);
      Outputs out(fit_out);
      json doc;
      doc["n"] = s.n;
      doc["N"] = s.N;
      doc["q"] = f.q;
      doc["p"] = f.p;
      doc["h_c"] = f.h_c;
      doc["h_a"] = f.h_a;
      const auto [kc, ka] = knots_of(f);
      doc["knots"] = {kc, ka};
      const auto names = component_names(f.q, f.p);
      json comps;
      for (std::size_t c = 0; c < f.vc_curves.size(); ++c) comps[names[c]] = curve_json(f.vc_curves[c]);
      for (std::size_t k = 0; k < f.p; ++k) comps[names[f.vc_curves.size() + k]] = curve_json(f.additive_curves[k]);
      doc["components"] = comps;
      doc["normalization"] = {{"beta_center", f.normalization.beta_center},
                              {"alpha_scale", f.normalization.alpha_scale},
                              {"refit_scale", f.normalization.refit_scale},
                              {"filled_targets", f.normalization.filled_targets},
                              {"singleton_subjects", f.normalization.singleton_subjects}};
      doc["regime"] = regime_json(regime);
      doc["level"] = level;
      doc["method"] = to_string(im);
      json band_files = json::array();
      for (const auto& b : bands) {
        const std::string name = "band_" + b.component + ".csv";
        out.write(name, format_band_csv(b));
        band_files.push_back(name);
      }
      doc["bands"] = band_files;
      out.write("fit.json", doc.dump(2) + "\n");
      out.write("regime.json", regime_json(regime).dump(2) + "\n");
      std::printf("fit: n=%zu N=%zu h_c=%.6g h_a=%.6g knots=(%d,%d) regime=%s (ratio %.4g)\n", s.n, s.N, f.h_c,
                  f.h_a, kc, ka, regime.label.c_str(), regime.ratio);
      json config = {{"data", fit_data.path}, {"h_c", fit_args.h_c}, {"h_a", fit_args.h_a},
                     {"knots", fit_args.knots}, {"grid", fit_args.grid}, {"level", level},
                     {"method", method}, {"regime_r", regime_r}, {"threads", threads}};
      out.manifest("fit", config, fit_seed, {fit_data.path}, seconds_since(start));
    } else if (*test_cmd) {
      const TestKind kind = parse_test_kind(which);
      if (B < 99) throw Error(ErrorKind::Argument, "--B must be at least 99");
      const auto ds = test_data.load();
      auto cfg = test_args.config(threads);
      const auto f = fit(ds, cfg);
      cfg.h_c = f.h_c;
      cfg.h_a = f.h_a;
      cfg.knots = knots_of(f);
      TestConfig tc;
      std::tie(tc.h_c, tc.h_a) = test_bandwidths(ds, f.h_c, f.h_a);
      if (test_h_c > 0.0) tc.h_c = test_h_c;
      if (test_h_a > 0.0) tc.h_a = test_h_a;
      tc.B = B;
      tc.seed = test_seed;
      tc.threads = threads;
      tc.grid_size = test_args.grid;
      BetaProvider provider;
      if (kind == TestKind::TimeVarying) {
        auto refit_cfg = cfg;
        refit_cfg.threads = 1;
        provider = [refit_cfg](const LongitudinalDataset& d) { return clamped_additive(fit(d, refit_cfg)); };
      }
      const auto res = bootstrap_test(ds, kind, tc, clamped_additive(f), provider);
      Outputs out(test_out);
      json doc;
      doc["which"] = to_string(res.which);
      doc["statistic"] = res.stat;
      doc["z"] = res.z;
      doc["sigma1"] = res.sigma1;
      doc["p_asymptotic"] = res.p_asymptotic;
      doc["p_bootstrap"] = res.p_bootstrap;
      doc["B"] = res.B;
      doc["dropped"] = res.dropped;
      doc["seed"] = res.seed;
      doc["bandwidths"] = {{"h_c", res.h_c}, {"h_a", res.h_a}};
      doc["estimation_bandwidths"] = {{"h_c", f.h_c}, {"h_a", f.h_a}};
      doc["boot_stats"] = res.boot_stats;
      out.write("test.json", doc.dump(2) + "\n");
      std::printf("test %s: statistic=%.6g z=%.4f p_asymptotic=%.4f p_bootstrap=%.4f (B=%zu)\n",
                  to_string(res.which), res.stat, res.z, res.p_asymptotic, res.p_bootstrap, res.B);
      json config = {{"data", test_data.path}, {"which", which}, {"B", B}, {"h_c", test_args.h_c},
                     {"h_a", test_args.h_a}, {"knots", test_args.knots}, {"test_h_c", tc.h_c},
                     {"test_h_a", tc.h_a}, {"threads", threads}};
      out.manifest("test", config, test_seed, {test_data.path}, seconds_since(start));
    } else if (*sim_cmd) {
      StudyConfig sc;
      sc.cells = parse_cells(cells);
      sc.Q = Q;
      sc.seed = sim_seed;
      sc.threads = threads;
      sc.per_replication_cv = per_rep_cv;
      sc.pilot_reps = pilot_reps;
      sc.cv_points = cv_points;
      if (sim_h_c > 0.0 || sim_h_a > 0.0) {
        if (!(sim_h_c > 0.0 && sim_h_a > 0.0))
          throw Error(ErrorKind::Argument, "--h-c and --h-a must be given together");
        sc.bandwidths = std::pair{sim_h_c, sim_h_a};
      }
      if (sim_knots != "auto") sc.knots = FitArgs{"auto", "auto", sim_knots, 101}.config(1).knots;
      SimReport report;
      if (study == "table1") {
        report = table1_study(sc);
      } else if (study == "coverage") {
        std::vector<IntervalMethod> ms;
        std::stringstream ss(methods);
        std::string item;
        while (std::getline(ss, item, ',')) ms.push_back(parse_method(item));
        report = coverage_study(sc, parse_list(levels, "--levels"), ms);
      } else if (study == "power") {
        const bool levels_given = sim_cmd->count("--levels") > 0;
        report = power_study(sc, parse_dgp(dgp), parse_list(thetas, "--thetas"),
                             levels_given ? parse_list(levels, "--levels") : std::vector<double>{0.05, 0.1}, sim_B);
      } else {
        throw Error(ErrorKind::Argument, "--study must be table1, coverage or power");
      }
      Outputs out(sim_out);
      const std::string csv = report.to_csv();
      out.write("report.csv", csv);
      std::fputs(csv.c_str(), stdout);
      json notes;
      for (const auto& [k, v] : report.notes) notes[k] = v;
      json config = {{"study", study}, {"cells", cells}, {"Q", Q}, {"B", sim_B}, {"thetas", thetas},
                     {"levels", levels}, {"methods", methods}, {"dgp", dgp}, {"knots", sim_knots},
                     {"per_rep_cv", per_rep_cv}, {"pilot_reps", pilot_reps}, {"cv_points", cv_points},
                     {"threads", threads}, {"cell_settings", notes}, {"failed", report.failed}};
      out.manifest("simulate", config, sim_seed, {}, seconds_since(start));
    } else if (*bench_cmd) {
      json doc = json::array();
      for (const Cell cell : parse_cells(bench_cells)) {
        const auto sim = generate({DgpKind::Example1, cell.n, cell.m, 0.0, 1});
        FitConfig fc;
        fc.h_c = bench_h_c;
        fc.h_a = bench_h_a;
        fc.knots = std::pair{1, 1};
        fc.threads = threads;
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t r = 0; r < bench_reps; ++r) (void)fit(sim.data, fc);
        const double per_fit = seconds_since(t0) / static_cast<double>(bench_reps);
        doc.push_back({{"cell", std::to_string(cell.n) + "x" + std::to_string(cell.m)},
                       {"N", sim.data.N()},
                       {"seconds_per_fit", per_fit}});
      }
      std::printf("%s\n", doc.dump(2).c_str());
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
