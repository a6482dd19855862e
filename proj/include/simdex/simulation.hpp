#pragma once

// Monte Carlo designs for the single index estimator and a replication
// driver that aggregates error metrics.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "simdex/lambda_tuning.hpp"

namespace simdex {

enum class ScenarioId { kQuadratic2d, kDependent6d, kHighdimSin };
enum class ErrorKind { kHomoGauss, kHeteroGauss, kHomoBeta };

struct SimScenario {
  ScenarioId id = ScenarioId::kQuadratic2d;
  Eigen::Index n = 500;
  ErrorKind error_kind = ErrorKind::kHomoGauss;  // dependent6d only
  double a = std::numbers::pi / 2;               // highdim_sin only
  Eigen::Index dim = 10;                         // highdim_sin only
  std::uint64_t seed = 0;
};

[[nodiscard]] std::string to_string(ScenarioId id);
[[nodiscard]] std::string to_string(ErrorKind kind);
[[nodiscard]] ScenarioId parse_scenario_id(const std::string& s);
[[nodiscard]] ErrorKind parse_error_kind(const std::string& s);

/// Throws std::domain_error for combinations outside the three designs.
void validate_scenario(const SimScenario& sc);
[[nodiscard]] Eigen::Index scenario_dim(const SimScenario& sc);
[[nodiscard]] Vector true_theta(const SimScenario& sc);

/// Draws replication rep_index. The random stream depends only on
/// (seed, rep_index), so replications are independent of scheduling.
[[nodiscard]] Dataset generate(const SimScenario& sc, std::uint64_t rep_index);

/// What one replication produced.
struct Estimate {
  Vector theta;
  bool converged = true;
  double lambda = 0.0;
  double gcv = 0.0;
  std::optional<Vector> se;  // present when inference succeeded
};

using Estimator = std::function<Estimate(const Dataset&, std::uint64_t rep_index)>;

struct SimOptions {
  OptimOptions optim;
  int grid_count = kDefaultGridCount;
  double grid_lo = kDefaultGridLo;
  double grid_hi = kDefaultGridHi;
  bool with_inference = true;
  int threads = 1;
  Estimator estimator;  // empty: GCV-selected PLSE (+ inference)
};

/// GCV-selected fit for one dataset, as the harness runs it.
[[nodiscard]] Estimate default_estimate(const Dataset& data, const SimOptions& opts);

struct ReplicationRecord {
  std::uint64_t rep = 0;
  bool success = false;
  std::string failure;
  Vector theta_hat;
  double l1 = 0.0;
  double l1_per_dim = 0.0;
  double lambda = 0.0;
  double gcv = 0.0;
  std::optional<double> se1;
};

struct SimReport {
  SimScenario scenario;
  int reps = 0;
  std::vector<ReplicationRecord> records;
  int failures = 0;
  // Over successful replications only.
  double median_l1 = 0.0, iqr_l1 = 0.0;
  double median_l1_per_dim = 0.0, iqr_l1_per_dim = 0.0;
  double var_sqrt_n_theta1 = 0.0;  // sample variance of sqrt(n)(theta1_hat - theta0_1)
  std::optional<double> coverage_theta1;  // fraction of theta1 +- 1.96 se covering the truth
  int coverage_count = 0;
  double wall_seconds = 0.0;  // not part of the JSON report
};

/// Throws NumericalError when more than 20% of replications fail.
[[nodiscard]] SimReport run_simulation(const SimScenario& sc, int reps,
                                       const SimOptions& opts = {});

/// R type-7 quantile of the values.
[[nodiscard]] double quantile(std::vector<double> values, double p);

/// Asymptotic variance of sqrt(n)(theta1_hat - theta0_1) for the quadratic
/// design, by product Gauss-Legendre quadrature over the covariate square
/// with `panels` panels per smooth piece of the index range.
[[nodiscard]] double theoretical_variance_quadratic2d(double noise_var = 0.25, int panels = 16);

inline constexpr int kReportSchemaVersion = 1;

[[nodiscard]] nlohmann::json to_json(const SimReport& report);
void write_records_csv(const SimReport& report, std::ostream& out);

}  // namespace simdex
