#pragma once
// CSV ingestion, standardization, JSON reports and the command-line front
// end (fit, predict, gcv, simulate, holdout).
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "simdex/inference.hpp"
#include "simdex/lambda_tuning.hpp"
#include "simdex/simulation.hpp"

namespace simdex {

inline constexpr int kFitSchemaVersion = 1;

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitParse = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitUsage = 4;

/// Malformed input file. row is the 1-based line number (the header is
/// line 1), column the header name when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t row, std::string column)
      : std::runtime_error(what), row_(row), column_(std::move(column)) {}
  [[nodiscard]] std::size_t row() const { return row_; }
  [[nodiscard]] const std::string& column() const { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

/// Bad flags or a request that cannot be satisfied by the given file.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;  // rows x header.size()

  [[nodiscard]] Eigen::Index column_index(const std::string& name) const;  // -1 if absent
};

/// Comma separated, header required, numeric cells only. Empty and NA cells
/// are rejected.
[[nodiscard]] CsvTable read_csv(std::istream& in);
[[nodiscard]] CsvTable read_csv_file(const std::string& path);

/// Writes with 17 significant digits so values round-trip exactly.
void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& values);

[[nodiscard]] std::vector<std::string> split_list(const std::string& s);

struct Standardization {
  Vector center;
  Vector scale;  // sample standard deviations

  [[nodiscard]] Matrix apply(const Matrix& x) const;
  /// Index direction in original coordinates: theta / scale, renormalized.
  [[nodiscard]] UnitIndex to_original(const UnitIndex& theta) const;
};

/// Throws UsageError for a constant column.
[[nodiscard]] Standardization fit_standardization(const Matrix& x,
                                                  const std::vector<std::string>& names);

struct GridSpec {
  double c_lo = kDefaultGridLo;
  double c_hi = kDefaultGridHi;
  int count = kDefaultGridCount;
};

/// "lo,hi,count"
[[nodiscard]] GridSpec parse_grid_spec(const std::string& s);

struct FitRequest {
  std::string input;
  std::string response;
  std::vector<std::string> covariates;  // empty: every other column
  bool standardize = false;
  std::optional<double> lambda;  // fixed lambda, else GCV over grid
  GridSpec grid;
  GcvForm gcv_form = GcvForm::kLinear;
  std::uint64_t seed = 0;
  OptimOptions optim;
};

/// Response and covariates picked out of a table. Throws UsageError naming
/// a missing column.
struct ModelData {
  std::vector<std::string> covariates;
  std::string response;
  Dataset data;
};
[[nodiscard]] ModelData select_columns(const CsvTable& table, const std::string& response,
                                       const std::vector<std::string>& covariates);

struct FitOutcome {
  ModelData model;
  std::optional<Standardization> standardization;
  Dataset working;  // what the estimator saw
  PlseFit fit;
  std::optional<InferenceReport> inference;
  std::string inference_error;
};

[[nodiscard]] FitOutcome run_fit(const FitRequest& req, const CsvTable& table);
[[nodiscard]] nlohmann::json fit_report(const FitRequest& req, const FitOutcome& out);

/// A fitted model read back from a fit report.
struct LoadedModel {
  std::vector<std::string> covariates;
  std::optional<Standardization> standardization;
  UnitIndex theta;  // working coordinates
  SmoothingSplineFit spline;
};
/// Throws ParseError when the report does not match the fit schema.
[[nodiscard]] LoadedModel load_model(const nlohmann::json& report);
[[nodiscard]] Vector predict(const LoadedModel& model, const CsvTable& table);

/// Rows (lambda, qn, trace, gcv) ascending in lambda.
[[nodiscard]] Matrix gcv_curve(const FitRequest& req, const CsvTable& table);

struct HoldoutResult {
  std::size_t n_train = 0, n_test = 0;
  double mse_linear = 0.0;
  double mse_plse = 0.0;
  FitOutcome plse;
};
/// Seeded random split, then least squares and the GCV-selected PLSE on the
/// training rows, both scored on the test rows.
[[nodiscard]] HoldoutResult run_holdout(const FitRequest& req, const CsvTable& table,
                                        std::size_t n_train);
[[nodiscard]] nlohmann::json holdout_report(const FitRequest& req, const HoldoutResult& res);

/// Writes rep_<index>.csv with columns x1..xd,y for every replication.
void emit_scenario_data(const SimScenario& sc, int reps, const std::string& dir);

/// Full command line. Returns the exit code; errors go to err as JSON.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace simdex
