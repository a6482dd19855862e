// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "cli_runner.hpp"
#include "oracles.hpp"
#include "schema_check.hpp"
#include "simdex/cli_io.hpp"

using namespace simdex;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSeed = 2024;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int worker_threads() { return static_cast<int>(std::max(2u, std::thread::hardware_concurrency())); }

Vector random_unit(std::mt19937_64& rng, Eigen::Index d) {
  std::normal_distribution<double> g;
  Vector v(d);
  for (auto& x : v) x = g(rng);
  return canonicalize(v).coords();
}

double spectral_norm(const Matrix& m) { return Eigen::JacobiSVD<Matrix>(m).singularValues()(0); }

Verdict spline_oracle() {
  std::mt19937_64 rng(kSeed);
  std::uniform_int_distribution<int> knots(3, 30);
  std::uniform_real_distribution<double> log_lambda(-3.0, 2.0), log_width(-1.0, 1.0);
  double worst = 0.0;
  double solver_seconds = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int inst = 0; inst < 200; ++inst) {
    const KnotVector k = oracle::random_knots(rng, knots(rng), std::pow(10.0, log_width(rng)));
    const double lambda = std::pow(10.0, log_lambda(rng));
    const auto s0 = std::chrono::steady_clock::now();
    const double ours = pooled_objective(fit_spline(k, lambda));
    solver_seconds += seconds_since(s0);
    const double ref = static_cast<double>(oracle::dense_spline(k, lambda).objective);
    worst = std::max(worst, std::abs(ours - ref) / std::abs(ref));
  }
  const double total = seconds_since(t0);
  return {worst <= 1e-8 && total < 10.0,
          fmt("worst relative objective gap %.2e (<= 1e-8), %.2f s total, %.3f s in fit_spline (< 10 s)",
              worst, total, solver_seconds)};
}

Verdict hat_trace_identity() {
  std::mt19937_64 rng(kSeed + 1);
  std::uniform_int_distribution<int> knots(4, 30);
  std::uniform_real_distribution<double> log_lambda(-3.0, 2.0);
  double worst = 0.0, worst_big = 0.0, worst_small = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const KnotVector k = oracle::random_knots(rng, knots(rng), 1.5);
    const double lambda = std::pow(10.0, log_lambda(rng));
    double diag = 0.0;
    for (std::size_t j = 0; j < k.size(); ++j) {
      KnotVector e = k;
      std::fill(e.pooled.begin(), e.pooled.end(), 0.0);
      e.pooled[j] = 1.0;
      diag += fit_spline(e, lambda).values[j];
    }
    worst = std::max(worst, std::abs(hat_trace(k, lambda) - diag));
    worst_big = std::max(worst_big, std::abs(hat_trace(k, 1e8) - 2.0));
    worst_small = std::max(worst_small, std::abs(hat_trace(k, 1e-8) - static_cast<double>(k.size())));
  }
  return {worst <= 1e-8 && worst_big <= 1e-3 && worst_small <= 1e-3,
          fmt("worst |trace - diag sum| %.2e (<= 1e-8); |trace - 2| %.2e and |trace - k| %.2e (<= 1e-3)",
              worst, worst_big, worst_small)};
}

Verdict frame_geometry() {
  std::mt19937_64 rng(kSeed + 2);
  const double part_d = 8.0 * (1.0 + 8.0 / std::sqrt(15.0));
  double worst_orth = 0.0, worst_tan = 0.0;
  int lipschitz = 0, part_d_bad = 0, part_d_checked = 0, pairs = 0;
  std::uniform_real_distribution<double> log_spread(-4.0, -0.5);
  for (Eigen::Index d : {2, 3, 6, 10}) {
    for (int rep = 0; rep < 2500; ++rep, ++pairs) {
      const Vector ref = random_unit(rng, d);
      const Vector theta = random_unit(rng, d);
      const TangentFrame f = tangent_frame(theta, ref);
      const TangentFrame f0 = tangent_frame(ref, ref);
      worst_orth = std::max(worst_orth, (f.h.transpose() * f.h - Matrix::Identity(d - 1, d - 1)).cwiseAbs().maxCoeff());
      worst_tan = std::max(worst_tan, (theta.transpose() * f.h).cwiseAbs().maxCoeff());
      if (spectral_norm(f.h - f0.h) > (theta - ref).norm() * (1 + 1e-12) + 1e-14) ++lipschitz;

      // Two points near the anchor at a random scale, both framed against it.
      std::normal_distribution<double> g(0.0, std::pow(10.0, log_spread(rng)));
      Vector a = ref, b = ref;
      for (Eigen::Index i = 0; i < d; ++i) {
        a(i) += g(rng);
        b(i) += g(rng);
      }
      a = canonicalize(a).coords();
      b = canonicalize(b).coords();
      const double da = (a - ref).norm(), db = (b - ref).norm();
      if (da < 0.5 && db < 0.5 && da + db > 0.0) {
        ++part_d_checked;
        const double lhs = spectral_norm(tangent_frame(a, ref).h - tangent_frame(b, ref).h);
        if (lhs > part_d * (a - b).norm() / (da + db) + 1e-12) ++part_d_bad;
      }
    }
  }
  return {worst_orth <= 1e-10 && worst_tan <= 1e-10 && lipschitz == 0 && part_d_bad == 0,
          fmt("%d pairs: orthonormality %.1e, theta'H %.1e (<= 1e-10); Lipschitz violations %d; "
              "local bound violations %d of %d admissible pairs",
              pairs, worst_orth, worst_tan, lipschitz, part_d_bad, part_d_checked)};
}

Verdict gradient_check() {
  const SimScenario sc{.id = ScenarioId::kDependent6d, .n = 200, .seed = kSeed};
  std::mt19937_64 rng(kSeed + 3);
  std::normal_distribution<double> g(0.0, 0.3);
  std::uniform_real_distribution<double> log_lambda(-2.0, 0.0);
  double worst = 0.0;
  for (std::uint64_t inst = 0; inst < 30; ++inst) {
    const Dataset data = generate(sc, inst);
    Vector v = true_theta(sc);
    for (auto& x : v) x += g(rng);
    const UnitIndex theta = canonicalize(v);
    const double lambda = std::pow(10.0, log_lambda(rng));
    const TangentFrame frame = tangent_frame(theta, theta);
    const Vector grad = profile_gradient(data, theta, profile_loss(data, theta, lambda).spline, frame);
    Vector fd(grad.size());
    constexpr double step = 1e-5;
    for (Eigen::Index j = 0; j < fd.size(); ++j) {
      const Vector e = Vector::Unit(fd.size(), j);
      const auto at = [&](double s) {
        return profile_loss(data, canonicalize(path_point(frame, e, s)), lambda).loss;
      };
      fd(j) = (at(step) - at(-step)) / (2.0 * step);
    }
    worst = std::max(worst, (fd - grad).norm() / grad.norm());
  }
  return {worst <= 1e-4, fmt("worst |fd - grad| / |grad| over 30 instances %.2e (<= 1e-4)", worst)};
}

Verdict variance(const SimReport& quad, double seconds) {
  const double v = theoretical_variance_quadratic2d();
  const double mc = quad.var_sqrt_n_theta1;
  return {std::abs(v - 0.328) <= 0.005 && mc >= 0.23 && mc <= 0.43,
          fmt("quadrature %.4f (0.328 +- 0.005); Monte Carlo %.4f over %d reps (in [0.23, 0.43]), "
              "%d failures, %.1f s",
              v, mc, quad.reps - quad.failures, quad.failures, seconds)};
}

Verdict table_one() {
  const SimScenario sc{.id = ScenarioId::kHighdimSin, .n = 400, .a = std::numbers::pi / 2, .dim = 10, .seed = kSeed};
  SimOptions opts;
  opts.threads = worker_threads();
  opts.with_inference = false;
  const auto t0 = std::chrono::steady_clock::now();
  const SimReport r = run_simulation(sc, 100, opts);
  const double m = r.median_l1_per_dim;
  return {m >= 0.003 && m <= 0.010,
          fmt("median L1/d %.5f (in [0.003, 0.010]), IQR %.5f, %d failures, %.1f s", m, r.iqr_l1_per_dim,
              r.failures, seconds_since(t0))};
}

Verdict consistency() {
  SimOptions opts;
  opts.threads = worker_threads();
  opts.with_inference = false;
  const auto t0 = std::chrono::steady_clock::now();
  const SimReport small = run_simulation({.id = ScenarioId::kDependent6d, .n = 200, .seed = kSeed}, 100, opts);
  const SimReport large = run_simulation({.id = ScenarioId::kDependent6d, .n = 800, .seed = kSeed}, 100, opts);
  return {large.median_l1 < small.median_l1,
          fmt("median L1 %.4f at n = 800 vs %.4f at n = 200 (must decrease), %.1f s", large.median_l1,
              small.median_l1, seconds_since(t0))};
}

Verdict coverage(const SimReport& quad) {
  if (!quad.coverage_theta1) return {false, "no replication produced a standard error"};
  const double c = *quad.coverage_theta1;
  return {c >= 0.90 && c <= 0.99,
          fmt("coverage %.3f over %d intervals (in [0.90, 0.99])", c, quad.coverage_count)};
}

Verdict determinism() {
  std::ostringstream notes;
  bool ok = true;
  // In process, several thread counts.
  const SimScenario sc{.id = ScenarioId::kDependent6d, .n = 150, .seed = kSeed};
  std::string first_json, first_csv;
  for (int threads : {1, 2, 5}) {
    SimOptions opts;
    opts.threads = threads;
    const SimReport r = run_simulation(sc, 8, opts);
    std::ostringstream csv;
    write_records_csv(r, csv);
    if (threads == 1) {
      first_json = to_json(r).dump();
      first_csv = csv.str();
    } else {
      ok = ok && to_json(r).dump() == first_json && csv.str() == first_csv;
    }
  }
  notes << "in-process reports at 1/2/5 threads " << (ok ? "identical" : "DIFFER");

  // Through the command line, flag and environment variable.
  const auto dir = cli_runner::scratch_dir("determinism");
  const std::string sim = "simulate --scenario quadratic2d --n 300 --reps 6 --seed 7";
  const auto a = cli_runner::run(sim + " --threads 1", dir);
  const auto b = cli_runner::run(sim + " --threads 3", dir);
  const auto c = cli_runner::run(sim, dir, "SIMDEX_THREADS=4");
  const bool cli_sim = a.code == 0 && a.out == b.out && a.out == c.out &&
                       schema_check::validate(json::parse(a.out), "sim_report.schema.json").empty();
  notes << "; CLI SimReports " << (cli_sim ? "identical" : "DIFFER");

  emit_scenario_data({.id = ScenarioId::kDependent6d, .n = 200, .seed = 3}, 1, (dir / "data").string());
  const std::string fit = "fit --input '" + (dir / "data" / "rep_0000.csv").string() + "' --response y --seed 3 --standardize";
  const auto f1 = cli_runner::run(fit + " --threads 1", dir);
  const auto f2 = cli_runner::run(fit, dir, "SIMDEX_THREADS=3");
  const auto f3 = cli_runner::run(fit + " --threads 2", dir);
  const bool cli_fit = f1.code == 0 && f1.out == f2.out && f1.out == f3.out &&
                       schema_check::validate(json::parse(f1.out), "fit_report.schema.json").empty();
  notes << "; CLI fit JSONs " << (cli_fit ? "identical" : "DIFFER");
  std::filesystem::remove_all(dir);
  return {ok && cli_sim && cli_fit, notes.str()};
}

// Car-mileage-like data: mileage falls off nonlinearly in a weighted
// combination of engine size, power, weight and acceleration.
void write_mileage_data(const std::filesystem::path& path) {
  std::mt19937_64 rng(kSeed + 10);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix rows(392, 5);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double size = u(rng);
    const double displacement = 70.0 + 380.0 * size + 20.0 * g(rng);
    const double horsepower = 45.0 + 170.0 * size + 15.0 * g(rng);
    const double weight = 1600.0 + 3000.0 * size + 250.0 * g(rng);
    const double acceleration = 20.0 - 8.0 * size + 2.0 * g(rng);
    const double index = 0.004 * displacement + 0.01 * horsepower + 0.0006 * weight - 0.05 * acceleration;
    const double mpg = 50.0 * std::exp(-0.45 * index) + 2.0 * g(rng);
    rows.row(i) << displacement, horsepower, weight, acceleration, mpg;
  }
  std::ofstream out(path);
  write_csv(out, {"displacement", "horsepower", "weight", "acceleration", "mpg"}, rows);
}

Verdict holdout_workflow() {
  const auto dir = cli_runner::scratch_dir("holdout");
  write_mileage_data(dir / "cars.csv");
  const auto r = cli_runner::run("holdout --input '" + (dir / "cars.csv").string() +
                                     "' --response mpg --standardize --train-size 260 --seed 1",
                                 dir);
  std::filesystem::remove_all(dir);
  if (r.code != 0) return {false, "holdout exited with " + std::to_string(r.code) + ": " + r.err};
  const json j = json::parse(r.out);
  const auto errors = schema_check::validate(j, "holdout_report.schema.json");
  const double lin = j.value("mse_linear", -1.0), plse = j.value("mse_plse", -1.0);
  const bool ok = errors.empty() && j["n_train"] == 260 && j["n_test"] == 132 && std::isfinite(lin) &&
                  std::isfinite(plse) && lin > 0.0 && plse > 0.0;
  return {ok, fmt("392 rows split 260/132: test MSE linear %.3f, PLSE %.3f%s", lin, plse,
                  errors.empty() ? "" : " (schema errors)")};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const Verdict& v) {
    std::printf("criterion %2d: %s  %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass) ++failed;
  };
  auto guarded = [&](int id, const std::function<Verdict()>& f) {
    try {
      report(id, f());
    } catch (const std::exception& e) {
      report(id, {false, std::string("threw: ") + e.what()});
    }
  };

  guarded(1, spline_oracle);
  guarded(2, hat_trace_identity);
  guarded(3, frame_geometry);
  guarded(4, gradient_check);

  std::optional<SimReport> quad;
  double quad_seconds = 0.0;
  std::string quad_error;
  try {
    SimOptions opts;
    opts.threads = worker_threads();
    const auto t0 = std::chrono::steady_clock::now();
    quad = run_simulation({.id = ScenarioId::kQuadratic2d, .n = 500, .seed = kSeed}, 300, opts);
    quad_seconds = seconds_since(t0);
  } catch (const std::exception& e) {
    quad_error = std::string("threw: ") + e.what();
  }
  report(5, quad ? variance(*quad, quad_seconds) : Verdict{false, quad_error});
  guarded(6, table_one);
  guarded(7, consistency);
  report(8, quad ? coverage(*quad) : Verdict{false, quad_error});
  guarded(9, determinism);
  guarded(10, holdout_workflow);

  std::printf("%d of 10 criteria passed\n", 10 - failed);
  return failed == 0 ? 0 : 1;
}
