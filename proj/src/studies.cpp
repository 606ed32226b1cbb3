#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "svcam/error.hpp"
#include "svcam/hypotest.hpp"
#include "svcam/parallel.hpp"
#include "svcam/simlab.hpp"

namespace svcam {

Cell parse_cell(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos || x == 0 || x + 1 == text.size())
    throw Error(ErrorKind::Argument, "invalid cell '" + text + "' (expected NxM, e.g. 50x10)");
  Cell c;
  try {
    std::size_t used = 0;
    c.n = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    c.m = std::stoul(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument(text);
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::Argument, "invalid cell '" + text + "' (expected NxM, e.g. 50x10)");
  }
  if (c.n < 2 || c.m < 1) throw Error(ErrorKind::Argument, "cell '" + text + "' needs n >= 2 and m >= 1");
  return c;
}

std::vector<Cell> parse_cells(const std::string& text) {
  std::vector<Cell> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_cell(item));
  }
  if (out.empty()) throw Error(ErrorKind::Argument, "no cells given");
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string cell_label(Cell c) { return std::to_string(c.n) + "x" + std::to_string(c.m); }

Curve1D clamped_curve(const ComponentCurve& c) {
  return [c](double x) { return c.clamped(x); };
}

std::pair<int, int> knots_for(const LongitudinalDataset& ds, const StudyConfig& cfg) {
  if (cfg.knots) return *cfg.knots;
  const FitConfig defaults;
  const auto sel = select_knots_bic(ds, defaults.knot_grid_c, defaults.knot_grid_a, defaults.order);
  return {sel.k_c, sel.k_a};
}

struct CellSetup {
  double h_c = 0.0;
  double h_a = 0.0;
};

CellSetup setup_cell(DgpKind kind, double theta, Cell cell, std::size_t index, const StudyConfig& cfg,
                     SimReport& report, const std::string& tag = "") {
  CellSetup out;
  if (cfg.bandwidths) {
    out.h_c = cfg.bandwidths->first;
    out.h_a = cfg.bandwidths->second;
  } else if (!cfg.per_replication_cv) {
    std::tie(out.h_c, out.h_a) = pilot_bandwidths(kind, theta, cell, index, cfg);
  }
  if (out.h_c > 0.0) {
    report.notes.emplace_back(cell_label(cell) + tag + ".h_c", fmt(out.h_c));
    report.notes.emplace_back(cell_label(cell) + tag + ".h_a", fmt(out.h_a));
  } else {
    report.notes.emplace_back(cell_label(cell) + tag + ".bandwidths", "per-replication CV");
  }
  return out;
}

FitConfig fit_config(const CellSetup& setup, std::pair<int, int> knots) {
  FitConfig fc;
  fc.knots = knots;
  if (setup.h_c > 0.0) {
    fc.h_c = setup.h_c;
    fc.h_a = setup.h_a;
  }
  return fc;
}

void check_failures(std::size_t failed, std::size_t total, const std::string& what) {
  if (static_cast<double>(failed) > 0.05 * static_cast<double>(total))
    throw Error(ErrorKind::Degenerate, what + ": " + std::to_string(failed) + " of " + std::to_string(total) +
                                           " replications failed");
}

}  // namespace

std::string SimReport::to_csv() const {
  std::string out;
  for (const auto& k : key_names) out += k + ",";
  out += "value,mcse\n";
  for (const auto& row : rows) {
    for (const auto& k : row.keys) out += k + ",";
    out += fmt(row.value) + "," + fmt(row.mcse) + "\n";
  }
  return out;
}

const ReportRow& SimReport::find(const std::vector<std::string>& keys) const {
  for (const auto& row : rows) {
    if (row.keys == keys) return row;
  }
  std::string joined;
  for (const auto& k : keys) joined += k + " ";
  throw Error(ErrorKind::Argument, "no report row for " + joined);
}

std::uint64_t replication_seed(std::uint64_t seed, std::size_t cell, std::size_t r) {
  return stream_seed(stream_seed(seed, cell), r);
}

std::pair<double, double> pilot_bandwidths(DgpKind kind, double theta, Cell cell, std::size_t cell_index,
                                           const StudyConfig& cfg) {
  if (cfg.pilot_reps == 0) throw Error(ErrorKind::Argument, "pilot CV needs at least one replication");
  std::vector<double> grid_c, grid_a;
  std::pair<int, int> knots;
  Eigen::MatrixXd total;
  for (std::size_t j = 0; j < cfg.pilot_reps; ++j) {
    const auto sim = generate({kind, cell.n, cell.m, theta, replication_seed(cfg.seed, cell_index, 1000000 + j)});
    if (j == 0) {
      knots = knots_for(sim.data, cfg);
      grid_c = default_bandwidth_grid(sim.data.time_support(), 0.06, 0.30, cfg.cv_points);
      grid_a = default_bandwidth_grid(sim.data.covariate_support(0), 0.06, 0.30, cfg.cv_points);
    }
    const auto cv = cv_bandwidths(sim.data, grid_c, grid_a, knots, 4, 101, true, cfg.threads);
    if (j == 0)
      total = cv.scores;
    else
      total += cv.scores;
  }
  double best = std::numeric_limits<double>::infinity();
  std::pair<double, double> out{0.0, 0.0};
  for (Eigen::Index a = 0; a < total.rows(); ++a) {
    for (Eigen::Index b = 0; b < total.cols(); ++b) {
      if (total(a, b) <= best) {
        best = total(a, b);
        out = {grid_c[static_cast<std::size_t>(a)], grid_a[static_cast<std::size_t>(b)]};
      }
    }
  }
  if (!std::isfinite(best)) throw Error(ErrorKind::Selection, "every pilot CV cell failed");
  return out;
}

SimReport table1_study(const StudyConfig& cfg) {
  if (cfg.Q < 1) throw Error(ErrorKind::Argument, "the MPISE study needs Q >= 1");
  SimReport report;
  report.study = "table1";
  report.key_names = {"n", "m", "component"};
  report.Q = cfg.Q;
  const auto names = component_names(1, 1);
  for (std::size_t ci = 0; ci < cfg.cells.size(); ++ci) {
    const Cell cell = cfg.cells[ci];
    const CellSetup setup = setup_cell(DgpKind::Example1, 0.0, cell, ci, cfg, report);
    std::vector<std::vector<double>> ise(cfg.Q);
    std::vector<char> ok(cfg.Q, 0);
    parallel_for(cfg.Q, cfg.threads, [&](std::size_t r) {
      try {
        const auto sim = generate({DgpKind::Example1, cell.n, cell.m, 0.0, replication_seed(cfg.seed, ci, r)});
        const auto f = fit(sim.data, fit_config(setup, knots_for(sim.data, cfg)));
        ise[r] = component_ise(f, reidentify(sim.truth, sim.data), sim.data);
        ok[r] = 1;
      } catch (const Error&) {
      }
    });
    const auto failed = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 0));
    check_failures(failed, cfg.Q, "MPISE study");
    report.failed += failed;
    for (std::size_t c = 0; c < names.size(); ++c) {
      std::vector<double> values;
      for (std::size_t r = 0; r < cfg.Q; ++r) {
        if (ok[r]) values.push_back(ise[r][c]);
      }
      const auto ms = mean_and_se(values);
      report.rows.push_back({{std::to_string(cell.n), std::to_string(cell.m), names[c]}, ms.mean, ms.se});
    }
  }
  return report;
}

SimReport coverage_study(const StudyConfig& cfg, const std::vector<double>& levels,
                         const std::vector<IntervalMethod>& methods) {
  if (cfg.Q < 50) throw Error(ErrorKind::Argument, "the coverage study needs Q >= 50");
  SimReport report;
  report.study = "coverage";
  report.key_names = {"n", "m", "component", "method", "level", "metric"};
  report.Q = cfg.Q;
  const auto names = component_names(1, 1);
  const std::size_t nc = names.size(), nl = levels.size(), nm = methods.size(), G = 20;
  for (std::size_t ci = 0; ci < cfg.cells.size(); ++ci) {
    const Cell cell = cfg.cells[ci];
    const CellSetup setup = setup_cell(DgpKind::Example1, 0.0, cell, ci, cfg, report);
    // per replication: [component][method][level] hits and summed lengths
    std::vector<std::vector<double>> hits(cfg.Q), lengths(cfg.Q);
    std::vector<char> ok(cfg.Q, 0);
    parallel_for(cfg.Q, cfg.threads, [&](std::size_t r) {
      try {
        const auto sim = generate({DgpKind::Example1, cell.n, cell.m, 0.0, replication_seed(cfg.seed, ci, r)});
        const auto f = fit(sim.data, fit_config(setup, knots_for(sim.data, cfg)));
        const auto truth = reidentify(sim.truth, sim.data);
        const auto ne = estimate_nuisance(sim.data, f);
        const auto s = summarize(sim.data);
        const auto T = sim.data.time_support();
        const auto X = sim.data.covariate_support(0);
        const auto ts = linspace(T.lo, T.hi, G), xs = linspace(X.lo, X.hi, G);
        std::vector<double> h(nc * nm * nl, 0.0), len(nc * nm * nl, 0.0);
        for (std::size_t c = 0; c < nc; ++c) {
          for (std::size_t mi = 0; mi < nm; ++mi) {
            for (std::size_t li = 0; li < nl; ++li) {
              const std::size_t slot = (c * nm + mi) * nl + li;
              for (std::size_t g = 0; g < G; ++g) {
                BandPoint b;
                double v;
                if (c + 1 < nc) {
                  b = ci_vc(f, ne, s, c, ts[g], levels[li], methods[mi]);
                  v = truth.vc[c](ts[g]);
                } else {
                  b = ci_additive(f, ne, s, 0, xs[g], levels[li], methods[mi]);
                  v = truth.additive[0](xs[g]);
                }
                if (v >= b.lower && v <= b.upper) h[slot] += 1.0;
                len[slot] += b.upper - b.lower;
              }
            }
          }
        }
        hits[r] = std::move(h);
        lengths[r] = std::move(len);
        ok[r] = 1;
      } catch (const Error&) {
      }
    });
    const auto failed = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 0));
    check_failures(failed, cfg.Q, "coverage study");
    report.failed += failed;
    const std::size_t good = cfg.Q - failed;
    for (std::size_t c = 0; c < nc; ++c) {
      for (std::size_t mi = 0; mi < nm; ++mi) {
        for (std::size_t li = 0; li < nl; ++li) {
          const std::size_t slot = (c * nm + mi) * nl + li;
          double total_hits = 0.0;
          std::vector<double> mean_len;
          for (std::size_t r = 0; r < cfg.Q; ++r) {
            if (!ok[r]) continue;
            total_hits += hits[r][slot];
            mean_len.push_back(lengths[r][slot] / static_cast<double>(G));
          }
          const auto p = proportion(static_cast<std::size_t>(total_hits), good * G);
          const auto l = mean_and_se(mean_len);
          const std::vector<std::string> base{std::to_string(cell.n), std::to_string(cell.m), names[c],
                                              to_string(methods[mi]), short_fmt(levels[li])};
          auto k1 = base, k2 = base;
          k1.push_back("aecp");
          k2.push_back("ael");
          const double se = std::sqrt(p.mean * (1 - p.mean) / static_cast<double>(good));
          report.rows.push_back({k1, 100.0 * p.mean, 100.0 * se});
          report.rows.push_back({k2, l.mean, l.se});
        }
      }
    }
  }
  return report;
}

SimReport power_study(const StudyConfig& cfg, DgpKind kind, const std::vector<double>& thetas,
                      const std::vector<double>& levels, std::size_t B) {
  if (kind == DgpKind::Example1) throw Error(ErrorKind::Argument, "the power study runs dgp1 or dgp2");
  if (B < 99) throw Error(ErrorKind::Argument, "the power study needs B >= 99");
  if (thetas.empty() || levels.empty()) throw Error(ErrorKind::Argument, "thetas and levels must be non-empty");
  SimReport report;
  report.study = "power";
  report.key_names = {"dgp", "n", "m", "theta", "level"};
  report.Q = cfg.Q;
  const TestKind which = kind == DgpKind::Dgp1 ? TestKind::TimeVarying : TestKind::Linearity;
  for (std::size_t ci = 0; ci < cfg.cells.size(); ++ci) {
    const Cell cell = cfg.cells[ci];
    for (double theta : thetas) {
      const CellSetup setup = setup_cell(kind, theta, cell, ci, cfg, report, ".theta=" + short_fmt(theta));
      std::vector<double> pvals(cfg.Q, std::numeric_limits<double>::quiet_NaN());
      parallel_for(cfg.Q, cfg.threads, [&](std::size_t r) {
        try {
          const std::uint64_t seed = replication_seed(cfg.seed, ci, r);
          const auto sim = generate({kind, cell.n, cell.m, theta, seed});
          const auto knots = knots_for(sim.data, cfg);
          FitConfig fc = fit_config(setup, knots);
          const auto f = fit(sim.data, fc);
          fc.h_c = f.h_c;
          fc.h_a = f.h_a;
          TestConfig tc;
          std::tie(tc.h_c, tc.h_a) = test_bandwidths(sim.data, f.h_c, f.h_a);
          tc.B = B;
          tc.seed = stream_seed(seed, 0xb0075ULL);
          std::vector<Curve1D> betas;
          BetaProvider provider;
          if (which == TestKind::TimeVarying) {
            for (const auto& c : f.additive_curves) betas.push_back(clamped_curve(c));
            provider = [fc](const LongitudinalDataset& d) {
              const auto g = fit(d, fc);
              std::vector<Curve1D> out;
              for (const auto& c : g.additive_curves) out.push_back(clamped_curve(c));
              return out;
            };
          }
          pvals[r] = bootstrap_test(sim.data, which, tc, betas, provider).p_bootstrap;
        } catch (const Error&) {
        }
      });
      std::size_t failed = 0;
      for (double p : pvals) failed += std::isnan(p) ? 1 : 0;
      check_failures(failed, cfg.Q, "power study");
      report.failed += failed;
      for (double level : levels) {
        std::size_t rejections = 0;
        for (double p : pvals) rejections += (!std::isnan(p) && p <= level) ? 1 : 0;
        const auto pr = proportion(rejections, cfg.Q - failed);
        report.rows.push_back(
            {{to_string(kind), std::to_string(cell.n), std::to_string(cell.m), short_fmt(theta), short_fmt(level)},
             pr.mean,
             pr.se});
      }
    }
  }
  return report;
}

}  // namespace svcam
