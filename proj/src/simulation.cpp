#include "simdex/simulation.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <thread>

#include "simdex/inference.hpp"

namespace simdex {
namespace {

constexpr std::array<double, 3> kSinFrequencies{std::numbers::pi / 2, 3 * std::numbers::pi / 4,
                                                3 * std::numbers::pi / 2};

std::mt19937_64 replication_stream(const SimScenario& sc, std::uint64_t rep) {
  std::seed_seq seq{static_cast<std::uint32_t>(sc.seed), static_cast<std::uint32_t>(sc.seed >> 32),
                    static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32),
                    static_cast<std::uint32_t>(sc.id)};
  return std::mt19937_64(seq);
}

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

std::string to_string(ScenarioId id) {
  switch (id) {
    case ScenarioId::kQuadratic2d: return "quadratic2d";
    case ScenarioId::kDependent6d: return "dependent6d";
    case ScenarioId::kHighdimSin: return "highdim_sin";
  }
  return "?";
}

std::string to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kHomoGauss: return "homo_gauss";
    case ErrorKind::kHeteroGauss: return "hetero_gauss";
    case ErrorKind::kHomoBeta: return "homo_beta";
  }
  return "?";
}

ScenarioId parse_scenario_id(const std::string& s) {
  for (ScenarioId id : {ScenarioId::kQuadratic2d, ScenarioId::kDependent6d, ScenarioId::kHighdimSin}) {
    if (to_string(id) == s) return id;
  }
  throw std::domain_error("unknown scenario '" + s + "'");
}

ErrorKind parse_error_kind(const std::string& s) {
  for (ErrorKind k : {ErrorKind::kHomoGauss, ErrorKind::kHeteroGauss, ErrorKind::kHomoBeta}) {
    if (to_string(k) == s) return k;
  }
  throw std::domain_error("unknown error kind '" + s + "'");
}

void validate_scenario(const SimScenario& sc) {
  if (sc.n < 10) throw std::domain_error("scenario: n must be at least 10");
  if (sc.id == ScenarioId::kHighdimSin) {
    if (sc.dim != 10 && sc.dim != 50 && sc.dim != 100) {
      throw std::domain_error("scenario: highdim_sin dimension must be 10, 50 or 100");
    }
    const bool known = std::any_of(kSinFrequencies.begin(), kSinFrequencies.end(),
                                   [&](double a) { return std::abs(a - sc.a) < 1e-9; });
    if (!known) throw std::domain_error("scenario: highdim_sin a must be pi/2, 3pi/4 or 3pi/2");
  }
}

Eigen::Index scenario_dim(const SimScenario& sc) {
  switch (sc.id) {
    case ScenarioId::kQuadratic2d: return 2;
    case ScenarioId::kDependent6d: return 6;
    case ScenarioId::kHighdimSin: return sc.dim;
  }
  return 0;
}

Vector true_theta(const SimScenario& sc) {
  switch (sc.id) {
    case ScenarioId::kQuadratic2d: return Vector{{1.0, -1.0}} / std::sqrt(2.0);
    case ScenarioId::kDependent6d:
      return Vector{{1.3, -1.3, 1.0, -0.5, -0.5, -0.5}} / std::sqrt(5.13);
    case ScenarioId::kHighdimSin: {
      Vector t = Vector::Zero(sc.dim);
      t(0) = 2.0 / std::sqrt(5.0);
      t(1) = 1.0 / std::sqrt(5.0);
      return t;
    }
  }
  return {};
}

Dataset generate(const SimScenario& sc, std::uint64_t rep_index) {
  validate_scenario(sc);
  auto rng = replication_stream(sc, rep_index);
  const Eigen::Index n = sc.n, d = scenario_dim(sc);
  const Vector theta0 = true_theta(sc);
  Dataset data{Matrix(n, d), Vector(n)};
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (Eigen::Index i = 0; i < n; ++i) {
    switch (sc.id) {
      case ScenarioId::kQuadratic2d: {
        data.x(i, 0) = -2.0 + 4.0 * unit(rng);
        data.x(i, 1) = unit(rng);
        const double t = data.x.row(i).dot(theta0);
        data.y(i) = t * t + 0.5 * gauss(rng);
        break;
      }
      case ScenarioId::kDependent6d: {
        const double x1 = -1.0 + 2.0 * unit(rng);
        const double x2 = -1.0 + 2.0 * unit(rng);
        const double z1 = -1.0 + 2.0 * unit(rng);
        const double z2 = -1.0 + 2.0 * unit(rng);
        data.x(i, 0) = x1;
        data.x(i, 1) = x2;
        data.x(i, 2) = 0.2 * x1 + 0.2 * (x2 + 2.0) * (x2 + 2.0) + 0.2 * z1;
        data.x(i, 3) = 0.1 + 0.1 * (x1 + x2) + 0.3 * (x1 + 1.5) * (x1 + 1.5) + 0.2 * z2;
        data.x(i, 4) = unit(rng) < logistic(x1) ? 1.0 : 0.0;
        data.x(i, 5) = unit(rng) < logistic(x2) ? 1.0 : 0.0;
        const double t = data.x.row(i).dot(theta0);
        double eps = 0.0;
        switch (sc.error_kind) {
          case ErrorKind::kHomoGauss: eps = gauss(rng); break;
          case ErrorKind::kHeteroGauss: eps = std::sqrt(std::log(2.0 + t * t)) * gauss(rng); break;
          case ErrorKind::kHomoBeta: {
            std::gamma_distribution<double> g2(2.0, 1.0), g3(3.0, 1.0);
            const double a = g2(rng), b = g3(rng);
            const double sign = unit(rng) < 0.5 ? 1.0 : -1.0;
            eps = sign * a / (a + b);
            break;
          }
        }
        data.y(i) = std::sin(2.0 * t) + 2.0 * std::exp(t) + eps;
        break;
      }
      case ScenarioId::kHighdimSin: {
        for (Eigen::Index j = 0; j < d; ++j) data.x(i, j) = 5.0 * unit(rng);
        const double t = data.x.row(i).dot(theta0);
        data.y(i) = std::sin(sc.a * t) + 0.2 * gauss(rng);
        break;
      }
    }
  }
  return data;
}

Estimate default_estimate(const Dataset& data, const SimOptions& opts) {
  const LambdaGrid grid = lambda_grid(data.n(), opts.grid_count, opts.grid_lo, opts.grid_hi);
  const PlseFit fit = select_lambda(data, grid, opts.optim);
  Estimate est{fit.theta_hat.coords(), fit.converged, fit.lambda, fit.gcv, std::nullopt};
  if (opts.with_inference) {
    try {
      est.se = infer(data, fit).se;
    } catch (const NumericalError&) {
      // se stays empty; the estimate itself is still usable
    }
  }
  return est;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

SimReport run_simulation(const SimScenario& sc, int reps, const SimOptions& opts) {
  if (reps < 1) throw std::domain_error("run_simulation: reps must be at least 1");
  validate_scenario(sc);
  const auto started = std::chrono::steady_clock::now();
  const Vector theta0 = true_theta(sc);
  const auto d = static_cast<double>(theta0.size());
  SimOptions local = opts;
  local.optim.seed = sc.seed;
  const Estimator estimator = opts.estimator
                                  ? opts.estimator
                                  : Estimator([local](const Dataset& data, std::uint64_t) {
                                      return default_estimate(data, local);
                                    });

  SimReport report;
  report.scenario = sc;
  report.reps = reps;
  report.records.resize(static_cast<std::size_t>(reps));

  auto run_one = [&](std::size_t r) {
    ReplicationRecord& rec = report.records[r];
    rec.rep = r;
    try {
      const Dataset data = generate(sc, r);
      const Estimate est = estimator(data, r);
      rec.theta_hat = est.theta;
      rec.lambda = est.lambda;
      rec.gcv = est.gcv;
      rec.l1 = (est.theta - theta0).cwiseAbs().sum();
      rec.l1_per_dim = rec.l1 / d;
      if (est.se) rec.se1 = (*est.se)(0);
      rec.success = est.converged;
      if (!est.converged) rec.failure = "not converged";
    } catch (const std::exception& e) {
      rec.success = false;
      rec.failure = e.what();
    }
  };

  const int threads = std::max(1, std::min(opts.threads, reps));
  if (threads == 1) {
    for (std::size_t r = 0; r < report.records.size(); ++r) run_one(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < report.records.size(); r = next++) run_one(r);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::vector<double> l1, l1d, dev;
  int covered = 0;
  const double root_n = std::sqrt(static_cast<double>(sc.n));
  for (const auto& rec : report.records) {
    if (!rec.success) {
      ++report.failures;
      continue;
    }
    l1.push_back(rec.l1);
    l1d.push_back(rec.l1_per_dim);
    dev.push_back(root_n * (rec.theta_hat(0) - theta0(0)));
    if (rec.se1) {
      ++report.coverage_count;
      if (std::abs(rec.theta_hat(0) - theta0(0)) <= 1.96 * *rec.se1) ++covered;
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (report.failures * 5 > reps) {
    throw NumericalError("run_simulation: " + std::to_string(report.failures) + " of " +
                         std::to_string(reps) + " replications failed");
  }
  report.median_l1 = quantile(l1, 0.5);
  report.iqr_l1 = quantile(l1, 0.75) - quantile(l1, 0.25);
  report.median_l1_per_dim = quantile(l1d, 0.5);
  report.iqr_l1_per_dim = quantile(l1d, 0.75) - quantile(l1d, 0.25);
  if (dev.size() >= 2) {
    double mean = 0.0;
    for (double v : dev) mean += v;
    mean /= static_cast<double>(dev.size());
    double ss = 0.0;
    for (double v : dev) ss += (v - mean) * (v - mean);
    report.var_sqrt_n_theta1 = ss / static_cast<double>(dev.size() - 1);
  }
  if (report.coverage_count > 0) {
    report.coverage_theta1 = static_cast<double>(covered) / report.coverage_count;
  }
  return report;
}

double theoretical_variance_quadratic2d(double noise_var, int panels) {
  if (!(noise_var > 0.0) || panels < 1) {
    throw std::domain_error("theoretical_variance_quadratic2d: bad arguments");
  }
  // Gauss-Legendre, 5 nodes on [-1, 1].
  constexpr std::array<double, 5> nodes{0.0, -0.5384693101056831, 0.5384693101056831,
                                        -0.9061798459386640, 0.9061798459386640};
  constexpr std::array<double, 5> weights{0.5688888888888889, 0.4786286704993665,
                                          0.4786286704993665, 0.2369268850561891,
                                          0.2369268850561891};
  const double r2 = std::sqrt(2.0);
  const Vector theta0 = Vector{{1.0, -1.0}} / r2;
  const Vector frame = reference_completion(theta0).col(0);

  // Change of variables (u, v) = (theta0'x, x2), x1 = v + sqrt(2) u; the
  // joint density of (u, v) is sqrt(2)/4 on the image of the square.
  // Pieces of the u-range where the v-interval has linear end points:
  const std::array<double, 4> breaks{-3.0 / r2, -r2, 1.0 / r2, r2};
  double moment = 0.0;  // E[u^2 H'Var(X|u)H]
  for (std::size_t piece = 0; piece + 1 < breaks.size(); ++piece) {
    const double width = (breaks[piece + 1] - breaks[piece]) / panels;
    for (int p = 0; p < panels; ++p) {
      const double a = breaks[piece] + p * width;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        const double u = a + 0.5 * width * (nodes[i] + 1.0);
        const double wu = 0.5 * width * weights[i];
        const double lo = std::max(0.0, -2.0 - r2 * u);
        const double hi = std::min(1.0, 2.0 - r2 * u);
        if (!(hi > lo)) continue;
        double mass = 0.0;
        Vector first = Vector::Zero(2);
        Matrix second = Matrix::Zero(2, 2);
        for (std::size_t j = 0; j < nodes.size(); ++j) {
          const double v = lo + 0.5 * (hi - lo) * (nodes[j] + 1.0);
          const double wv = 0.5 * (hi - lo) * weights[j] * r2 / 4.0;
          const Vector x{{v + r2 * u, v}};
          mass += wv;
          first += wv * x;
          second += wv * x * x.transpose();
        }
        const Vector mean = first / mass;
        const Matrix cond_cov = second / mass - mean * mean.transpose();
        moment += wu * mass * u * u * frame.dot(cond_cov * frame);
      }
    }
  }
  const double info = 4.0 * noise_var * moment;
  return noise_var * noise_var * frame(0) * frame(0) / info;
}

nlohmann::json to_json(const SimReport& report) {
  using nlohmann::json;
  const auto& sc = report.scenario;
  json scenario{{"id", to_string(sc.id)}, {"n", sc.n}, {"seed", sc.seed}, {"dim", scenario_dim(sc)}};
  if (sc.id == ScenarioId::kDependent6d) scenario["error_kind"] = to_string(sc.error_kind);
  if (sc.id == ScenarioId::kHighdimSin) scenario["a"] = sc.a;
  json reps = json::array();
  for (const auto& rec : report.records) {
    json r{{"rep", rec.rep}, {"success", rec.success}};
    if (rec.success || rec.theta_hat.size() > 0) {
      r["theta_hat"] = std::vector<double>(rec.theta_hat.begin(), rec.theta_hat.end());
      r["l1"] = rec.l1;
      r["l1_per_dim"] = rec.l1_per_dim;
      r["lambda"] = rec.lambda;
      r["gcv"] = rec.gcv;
    }
    if (rec.se1) r["se1"] = *rec.se1;
    if (!rec.failure.empty()) r["failure"] = rec.failure;
    reps.push_back(std::move(r));
  }
  json out{{"schema_version", kReportSchemaVersion},
           {"kind", "simulation_report"},
           {"scenario", scenario},
           {"reps", report.reps},
           {"failures", report.failures},
           {"median_l1", report.median_l1},
           {"iqr_l1", report.iqr_l1},
           {"median_l1_per_dim", report.median_l1_per_dim},
           {"iqr_l1_per_dim", report.iqr_l1_per_dim},
           {"var_sqrt_n_theta1", report.var_sqrt_n_theta1},
           {"coverage_count", report.coverage_count},
           {"replications", reps}};
  if (report.coverage_theta1) out["coverage_theta1"] = *report.coverage_theta1;
  return out;
}

void write_records_csv(const SimReport& report, std::ostream& out) {
  const Eigen::Index d = scenario_dim(report.scenario);
  out << "rep,success,l1,l1_per_dim,lambda,gcv,se1";
  for (Eigen::Index j = 0; j < d; ++j) out << ",theta" << (j + 1);
  out << '\n' << std::setprecision(17);
  for (const auto& rec : report.records) {
    out << rec.rep << ',' << (rec.success ? 1 : 0) << ',' << rec.l1 << ',' << rec.l1_per_dim << ','
        << rec.lambda << ',' << rec.gcv << ',';
    if (rec.se1) out << *rec.se1;
    for (Eigen::Index j = 0; j < d; ++j) {
      out << ',';
      if (j < rec.theta_hat.size()) out << rec.theta_hat(j);
    }
    out << '\n';
  }
}

}  // namespace simdex
