#include "simdex/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <CLI11.hpp>

namespace simdex {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

bool is_missing_token(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s == "na" || s == "nan" || s == "null" || s == "n/a";
}

std::string cell_context(std::size_t row, const std::string& column) {
  return "row " + std::to_string(row) + ", column '" + column + "'";
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
  if (cell.empty()) throw ParseError(cell_context(row, column) + ": empty cell", row, column);
  if (is_missing_token(cell)) {
    throw ParseError(cell_context(row, column) + ": missing value '" + cell + "'", row, column);
  }
  std::string_view text = cell;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || !std::isfinite(value)) {
    throw ParseError(cell_context(row, column) + ": cannot parse '" + cell + "' as a finite number",
                     row, column);
  }
  return value;
}

std::vector<double> to_vector(const Vector& v) { return {v.begin(), v.end()}; }

nlohmann::json to_rows(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_vector(m.row(i).transpose()));
  return rows;
}

CsvTable subset_rows(const CsvTable& table, const std::vector<Eigen::Index>& rows) {
  CsvTable out{table.header, Matrix(static_cast<Eigen::Index>(rows.size()), table.values.cols())};
  for (std::size_t i = 0; i < rows.size(); ++i) out.values.row(static_cast<Eigen::Index>(i)) = table.values.row(rows[i]);
  return out;
}

const nlohmann::json& require_field(const nlohmann::json& j, const std::string& key,
                                    nlohmann::json::value_t type) {
  const auto it = j.find(key);
  const bool ok = it != j.end() &&
                  (it->type() == type ||
                   (type == nlohmann::json::value_t::number_float && it->is_number()) ||
                   (type == nlohmann::json::value_t::number_unsigned && it->is_number_integer()));
  if (!ok) throw ParseError("model report: missing or malformed field '" + key + "'", 0, key);
  return *it;
}

std::vector<double> number_array(const nlohmann::json& j, const std::string& key) {
  const auto& arr = require_field(j, key, nlohmann::json::value_t::array);
  std::vector<double> out;
  for (const auto& v : arr) {
    if (!v.is_number()) throw ParseError("model report: non-numeric entry in '" + key + "'", 0, key);
    out.push_back(v.get<double>());
  }
  return out;
}

Vector as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Eigen::Index CsvTable::column_index(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<Eigen::Index>(it - header.begin());
}

CsvTable read_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  CsvTable table;
  bool have_header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (!have_header) {
      for (const auto& f : fields) {
        const std::string name = unquote(f);
        if (name.empty()) throw ParseError("row " + std::to_string(line_no) + ": empty column name in header", line_no, "");
        if (std::find(table.header.begin(), table.header.end(), name) != table.header.end()) {
          throw ParseError("row " + std::to_string(line_no) + ": duplicate column '" + name + "'", line_no, name);
        }
        table.header.push_back(name);
      }
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw ParseError("row " + std::to_string(line_no) + ": expected " +
                           std::to_string(table.header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no, "");
    }
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) row[j] = parse_cell(fields[j], line_no, table.header[j]);
    rows.push_back(std::move(row));
  }
  if (!have_header) throw ParseError("row 1: missing header", 1, "");
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open input file '" + path + "'");
  return read_csv(in);
}

void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& values) {
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << values(i, j);
    out << '\n';
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& f : split_fields(s)) {
    if (!f.empty()) out.push_back(unquote(f));
  }
  return out;
}

Matrix Standardization::apply(const Matrix& x) const {
  return (x.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
}

UnitIndex Standardization::to_original(const UnitIndex& theta) const {
  return canonicalize(theta.coords().cwiseQuotient(scale));
}

Standardization fit_standardization(const Matrix& x, const std::vector<std::string>& names) {
  const double n = static_cast<double>(x.rows());
  if (x.rows() < 2) throw UsageError("standardize: need at least two rows");
  Standardization s{x.colwise().mean().transpose(), Vector(x.cols())};
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double ss = (x.col(j).array() - s.center(j)).square().sum();
    s.scale(j) = std::sqrt(ss / (n - 1.0));
    if (!(s.scale(j) > 0.0)) {
      throw UsageError("standardize: column '" + names[static_cast<std::size_t>(j)] + "' is constant");
    }
  }
  return s;
}

GridSpec parse_grid_spec(const std::string& s) {
  const auto parts = split_fields(s);
  if (parts.size() != 3) throw UsageError("--grid expects \"lo,hi,count\", got '" + s + "'");
  GridSpec g;
  try {
    std::size_t used = 0;
    g.c_lo = std::stod(parts[0], &used);
    if (used != parts[0].size()) throw std::invalid_argument(parts[0]);
    g.c_hi = std::stod(parts[1], &used);
    if (used != parts[1].size()) throw std::invalid_argument(parts[1]);
    g.count = std::stoi(parts[2], &used);
    if (used != parts[2].size()) throw std::invalid_argument(parts[2]);
  } catch (const std::logic_error&) {
    throw UsageError("--grid expects \"lo,hi,count\", got '" + s + "'");
  }
  if (!(g.c_lo > 0.0) || !(g.c_hi > 0.0) || g.count < 1) {
    throw UsageError("--grid needs positive constants and count >= 1");
  }
  return g;
}

ModelData select_columns(const CsvTable& table, const std::string& response,
                         const std::vector<std::string>& covariates) {
  const Eigen::Index yi = table.column_index(response);
  if (yi < 0) throw UsageError("response column '" + response + "' not found");
  ModelData md;
  md.response = response;
  if (covariates.empty()) {
    for (const auto& h : table.header) {
      if (h != response) md.covariates.push_back(h);
    }
  } else {
    md.covariates = covariates;
  }
  if (md.covariates.empty()) throw UsageError("no covariate columns");
  md.data.x.resize(table.values.rows(), static_cast<Eigen::Index>(md.covariates.size()));
  for (std::size_t j = 0; j < md.covariates.size(); ++j) {
    const Eigen::Index cj = table.column_index(md.covariates[j]);
    if (cj < 0) throw UsageError("covariate column '" + md.covariates[j] + "' not found");
    if (cj == yi) throw UsageError("column '" + response + "' is both response and covariate");
    md.data.x.col(static_cast<Eigen::Index>(j)) = table.values.col(cj);
  }
  md.data.y = table.values.col(yi);
  return md;
}

FitOutcome run_fit(const FitRequest& req, const CsvTable& table) {
  ModelData model = select_columns(table, req.response, req.covariates);
  if (model.data.n() < 3) {
    throw UsageError("need at least 3 data rows, found " + std::to_string(model.data.n()));
  }
  std::optional<Standardization> stdz;
  Dataset working = model.data;
  if (req.standardize) {
    stdz = fit_standardization(model.data.x, model.covariates);
    working.x = stdz->apply(model.data.x);
  }
  if (req.lambda && !(*req.lambda > 0.0)) throw UsageError("--lambda must be positive");
  OptimOptions opts = req.optim;
  opts.seed = req.seed;
  auto fit = [&] {
    try {
      if (req.lambda) {
        PlseFit f = fit_plse(working, *req.lambda, opts);
        f.gcv = gcv_score(f.qn, f.trace, working.n(), req.gcv_form);
        f.gcv_curve = {GcvPoint{*req.lambda, f.qn, f.trace, f.gcv, f.loss, f.converged}};
        return f;
      }
      const LambdaGrid grid = lambda_grid(working.n(), req.grid.count, req.grid.c_lo, req.grid.c_hi);
      return select_lambda(working, grid, opts, req.gcv_form);
    } catch (const std::domain_error& e) {
      throw NumericalError(e.what());
    }
  }();
  std::optional<InferenceReport> inference;
  std::string inference_error;
  try {
    inference = infer(working, fit);
  } catch (const std::exception& e) {
    inference_error = e.what();
  }
  return FitOutcome{std::move(model), std::move(stdz), std::move(working), std::move(fit),
                    std::move(inference), std::move(inference_error)};
}

nlohmann::json fit_report(const FitRequest& req, const FitOutcome& out) {
  using nlohmann::json;
  const PlseFit& fit = out.fit;
  json j{{"schema_version", kFitSchemaVersion},
         {"kind", "fit_report"},
         {"response", out.model.response},
         {"covariates", out.model.covariates},
         {"n", out.working.n()},
         {"d", out.working.d()},
         {"seed", req.seed}};
  json stdz{{"applied", out.standardization.has_value()}};
  if (out.standardization) {
    stdz["center"] = to_vector(out.standardization->center);
    stdz["scale"] = to_vector(out.standardization->scale);
    stdz["back_transform"] = "theta_original = normalize(theta_hat / scale)";
  }
  j["standardization"] = stdz;
  j["theta_hat"] = to_vector(fit.theta_hat.coords());
  j["theta_hat_original"] = out.standardization
                                ? to_vector(out.standardization->to_original(fit.theta_hat).coords())
                                : to_vector(fit.theta_hat.coords());
  if (out.inference) {
    j["se"] = to_vector(out.inference->se);
    j["cov_theta"] = to_rows(out.inference->cov_theta);
    j["sigma2_hat"] = out.inference->sigma2_hat;
    j["h_bandwidth"] = out.inference->h_bandwidths.size() ? out.inference->h_bandwidths(0) : 0.0;
  } else {
    j["se"] = nullptr;
    j["sigma2_hat"] = fit.qn;
    j["inference_error"] = out.inference_error;
  }
  j["lambda"] = fit.lambda;
  j["lambda_selection"] = req.lambda ? "fixed" : "gcv";
  j["gcv_form"] = req.gcv_form == GcvForm::kSquared ? "squared" : "linear";
  j["gcv"] = fit.gcv;
  j["edf"] = fit.trace;
  j["loss"] = fit.loss;
  j["qn"] = fit.qn;
  json curve = json::array();
  for (const auto& p : fit.gcv_curve) {
    curve.push_back({{"lambda", p.lambda}, {"qn", p.qn}, {"trace", p.trace}, {"gcv", p.gcv}});
  }
  j["gcv_curve"] = curve;
  const auto& sp = fit.spline;
  j["knot_hull"] = {sp.lower(), sp.upper()};
  j["spline"] = {{"sites", sp.knots.sites},
                 {"weights", sp.knots.weights},
                 {"pooled_responses", sp.knots.pooled},
                 {"values", sp.values},
                 {"second_derivatives", sp.second_derivatives},
                 {"roughness", sp.roughness}};
  j["fitted_values"] = to_vector(predict(fit, out.working.x));
  j["convergence"] = {{"converged", fit.converged},
                      {"iterations", fit.iterations},
                      {"starts", fit.restarts_used},
                      {"best_start", fit.best_start},
                      {"stop_reason", fit.stop_reason}};
  return j;
}

LoadedModel load_model(const nlohmann::json& report) {
  using vt = nlohmann::json::value_t;
  if (!report.is_object()) throw ParseError("model report: not a JSON object", 0, "");
  const auto& version = require_field(report, "schema_version", vt::number_unsigned);
  if (version.get<int>() != kFitSchemaVersion) {
    throw ParseError("model report: unsupported schema_version " + version.dump(), 0, "schema_version");
  }
  if (require_field(report, "kind", vt::string).get<std::string>() != "fit_report") {
    throw ParseError("model report: kind must be 'fit_report'", 0, "kind");
  }
  std::vector<std::string> covariates;
  for (const auto& c : require_field(report, "covariates", vt::array)) {
    if (!c.is_string()) throw ParseError("model report: covariate names must be strings", 0, "covariates");
    covariates.push_back(c.get<std::string>());
  }
  const std::vector<double> theta = number_array(report, "theta_hat");
  if (theta.size() != covariates.size() || theta.empty()) {
    throw ParseError("model report: theta_hat length does not match covariates", 0, "theta_hat");
  }
  LoadedModel m = [&] {
    try {
      return LoadedModel{std::move(covariates), std::nullopt, UnitIndex::from_unit(as_vector(theta)), {}};
    } catch (const std::domain_error& e) {
      throw ParseError(std::string("model report: ") + e.what(), 0, "theta_hat");
    }
  }();
  const auto& stdz = require_field(report, "standardization", vt::object);
  if (require_field(stdz, "applied", vt::boolean).get<bool>()) {
    Standardization s{as_vector(number_array(stdz, "center")), as_vector(number_array(stdz, "scale"))};
    if (s.center.size() != static_cast<Eigen::Index>(theta.size()) || s.scale.size() != s.center.size() ||
        !(s.scale.array() > 0.0).all()) {
      throw ParseError("model report: malformed standardization", 0, "standardization");
    }
    m.standardization = s;
  }
  const auto& sp = require_field(report, "spline", vt::object);
  m.spline.knots.sites = number_array(sp, "sites");
  m.spline.knots.weights = number_array(sp, "weights");
  m.spline.knots.pooled = number_array(sp, "pooled_responses");
  m.spline.values = number_array(sp, "values");
  m.spline.second_derivatives = number_array(sp, "second_derivatives");
  m.spline.roughness = require_field(sp, "roughness", vt::number_float).get<double>();
  m.spline.lambda = require_field(report, "lambda", vt::number_float).get<double>();
  m.spline.edf = require_field(report, "edf", vt::number_float).get<double>();
  const std::size_t k = m.spline.knots.sites.size();
  if (k == 0 || m.spline.values.size() != k || m.spline.second_derivatives.size() != k ||
      m.spline.knots.weights.size() != k || m.spline.knots.pooled.size() != k ||
      !std::is_sorted(m.spline.knots.sites.begin(), m.spline.knots.sites.end())) {
    throw ParseError("model report: inconsistent spline arrays", 0, "spline");
  }
  return m;
}

Vector predict(const LoadedModel& model, const CsvTable& table) {
  Matrix x(table.values.rows(), static_cast<Eigen::Index>(model.covariates.size()));
  for (std::size_t j = 0; j < model.covariates.size(); ++j) {
    const Eigen::Index cj = table.column_index(model.covariates[j]);
    if (cj < 0) throw ParseError("input lacks covariate column '" + model.covariates[j] + "'", 1, model.covariates[j]);
    x.col(static_cast<Eigen::Index>(j)) = table.values.col(cj);
  }
  if (model.standardization) x = model.standardization->apply(x);
  const Vector t = x * model.theta.coords();
  Vector out(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) out(i) = model.spline(t(i));
  return out;
}

Matrix gcv_curve(const FitRequest& req, const CsvTable& table) {
  // A fixed lambda gives a one-point curve.
  const FitOutcome out = run_fit(req, table);
  const auto& curve = out.fit.gcv_curve;
  Matrix rows(static_cast<Eigen::Index>(curve.size()), 4);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) << curve[i].lambda, curve[i].qn, curve[i].trace, curve[i].gcv;
  }
  return rows;
}

HoldoutResult run_holdout(const FitRequest& req, const CsvTable& table, std::size_t n_train) {
  const auto n = static_cast<std::size_t>(table.values.rows());
  if (n_train < 3 || n_train >= n) {
    throw UsageError("--train-size must be between 3 and " + std::to_string(n - 1) + ", got " +
                     std::to_string(n_train));
  }
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(req.seed);
  // Fisher-Yates with explicit draws, independent of the library's shuffle.
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<Eigen::Index> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<Eigen::Index> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  const CsvTable train_table = subset_rows(table, train);
  const CsvTable test_table = subset_rows(table, test);

  HoldoutResult res{train.size(), test.size(), 0.0, 0.0, run_fit(req, train_table)};
  const ModelData test_data = select_columns(test_table, req.response, res.plse.model.covariates);

  Matrix design(static_cast<Eigen::Index>(n_train), res.plse.model.data.d() + 1);
  design.col(0).setOnes();
  design.rightCols(res.plse.model.data.d()) = res.plse.model.data.x;
  const Vector beta = design.colPivHouseholderQr().solve(res.plse.model.data.y);
  const Vector linear = (test_data.data.x * beta.tail(beta.size() - 1)).array() + beta(0);
  res.mse_linear = (linear - test_data.data.y).squaredNorm() / static_cast<double>(res.n_test);

  Matrix x_test = test_data.data.x;
  if (res.plse.standardization) x_test = res.plse.standardization->apply(x_test);
  const Vector yhat = predict(res.plse.fit, x_test);
  res.mse_plse = (yhat - test_data.data.y).squaredNorm() / static_cast<double>(res.n_test);
  return res;
}

nlohmann::json holdout_report(const FitRequest& req, const HoldoutResult& res) {
  const FitOutcome& f = res.plse;
  return {{"schema_version", kFitSchemaVersion},
          {"kind", "holdout_report"},
          {"response", f.model.response},
          {"covariates", f.model.covariates},
          {"seed", req.seed},
          {"n_train", res.n_train},
          {"n_test", res.n_test},
          {"mse_linear", res.mse_linear},
          {"mse_plse", res.mse_plse},
          {"lambda", f.fit.lambda},
          {"theta_hat", to_vector(f.fit.theta_hat.coords())},
          {"theta_hat_original", f.standardization
                                     ? to_vector(f.standardization->to_original(f.fit.theta_hat).coords())
                                     : to_vector(f.fit.theta_hat.coords())}};
}

void emit_scenario_data(const SimScenario& sc, int reps, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const Eigen::Index d = scenario_dim(sc);
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < d; ++j) header.push_back("x" + std::to_string(j + 1));
  header.push_back("y");
  for (int r = 0; r < reps; ++r) {
    const Dataset data = generate(sc, static_cast<std::uint64_t>(r));
    Matrix all(data.n(), d + 1);
    all.leftCols(d) = data.x;
    all.col(d) = data.y;
    std::ostringstream name;
    name << "rep_" << std::setw(4) << std::setfill('0') << r << ".csv";
    std::ofstream f(std::filesystem::path(dir) / name.str());
    if (!f) throw UsageError("cannot write to '" + dir + "'");
    write_csv(f, header, all);
  }
}

namespace {

struct OutputSink {
  std::ofstream file;
  std::ostream* stream;

  OutputSink(const std::string& path, std::ostream& fallback) : stream(&fallback) {
    if (path.empty()) return;
    file.open(path);
    if (!file) throw UsageError("cannot open output file '" + path + "'");
    stream = &file;
  }
};

double parse_frequency(const std::string& s) {
  constexpr double pi = std::numbers::pi;
  if (s == "pi/2") return pi / 2;
  if (s == "3pi/4") return 3 * pi / 4;
  if (s == "3pi/2") return 3 * pi / 2;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw UsageError("--a expects pi/2, 3pi/4, 3pi/2 or a number, got '" + s + "'");
}

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("SIMDEX_THREADS"); env && *env) {
    int v = 0;
    const std::string_view text(env);
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size() || v < 1) {
      throw UsageError("SIMDEX_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
    return v;
  }
  return 1;
}

void write_error(std::ostream& err, int code, const std::string& kind, const std::string& message,
                 const ParseError* parse = nullptr) {
  nlohmann::json e{{"code", code}, {"kind", kind}, {"message", message}};
  if (parse) {
    e["row"] = parse->row();
    e["column"] = parse->column();
  }
  err << nlohmann::json{{"error", e}}.dump() << '\n';
}

struct FitFlags {
  FitRequest req;
  std::string covariates;
  std::string grid;
  double lambda = 0.0;
  bool squared = false;
  int max_iter = OptimOptions{}.max_iter;
  int starts = OptimOptions{}.extra_starts;
  std::string out;
  int threads = 0;
};

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--input", f.req.input, "CSV file with a header row")->required();
  cmd->add_option("--response", f.req.response, "response column")->required();
  cmd->add_option("--covariates", f.covariates, "comma-separated covariate columns (default: all others)");
  cmd->add_flag("--standardize", f.req.standardize, "center and scale covariates");
  auto* lam = cmd->add_option("--lambda", f.lambda, "fixed penalty");
  auto* grid = cmd->add_option("--grid", f.grid, "GCV grid constants \"lo,hi,count\" on [lo n^-2/5, hi n^-1/4]");
  lam->excludes(grid);
  cmd->add_flag("--gcv-squared", f.squared, "classical squared GCV denominator");
  cmd->add_option("--seed", f.req.seed, "seed for the random starts");
  cmd->add_option("--max-iter", f.max_iter, "descent iterations per start")->check(CLI::NonNegativeNumber);
  cmd->add_option("--starts", f.starts, "random starts besides OLS")->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", f.out, "output path (default: stdout)");
  cmd->add_option("--threads", f.threads, "accepted for symmetry; fits are single-threaded")->check(CLI::PositiveNumber);
}

FitRequest finish_fit_flags(const CLI::App* cmd, FitFlags& f) {
  FitRequest req = f.req;
  req.covariates = split_list(f.covariates);
  if (cmd->count("--lambda")) req.lambda = f.lambda;
  if (cmd->count("--grid")) req.grid = parse_grid_spec(f.grid);
  req.gcv_form = f.squared ? GcvForm::kSquared : GcvForm::kLinear;
  req.optim.max_iter = f.max_iter;
  req.optim.extra_starts = f.starts;
  resolve_threads(f.threads);
  return req;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Penalized least squares for single index models"};
  app.require_subcommand(1);

  FitFlags fit_flags, gcv_flags, holdout_flags;
  auto* fit_cmd = app.add_subcommand("fit", "fit the model and write a JSON report");
  add_fit_flags(fit_cmd, fit_flags);
  auto* gcv_cmd = app.add_subcommand("gcv", "write the GCV curve as CSV");
  add_fit_flags(gcv_cmd, gcv_flags);
  auto* holdout_cmd = app.add_subcommand("holdout", "train/test comparison with a linear fit");
  add_fit_flags(holdout_cmd, holdout_flags);
  std::size_t train_size = 260;
  holdout_cmd->add_option("--train-size", train_size, "training rows");

  std::string model_path, predict_input, predict_out;
  auto* predict_cmd = app.add_subcommand("predict", "predict from a fit report");
  predict_cmd->add_option("--model", model_path, "JSON report from fit")->required();
  predict_cmd->add_option("--input", predict_input, "CSV with the covariate columns")->required();
  predict_cmd->add_option("--out", predict_out, "output CSV (default: stdout)");

  std::string scenario, error_kind = "homo_gauss", freq = "pi/2", sim_out, emit_dir, records_path, sim_grid;
  Eigen::Index sim_n = -1, dim = 10;
  int reps = 100, sim_threads = 0;
  std::uint64_t sim_seed = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "run a Monte Carlo design");
  sim_cmd->add_option("--scenario", scenario, "quadratic2d, dependent6d or highdim_sin")->required();
  sim_cmd->add_option("--error-kind", error_kind, "homo_gauss, hetero_gauss or homo_beta");
  sim_cmd->add_option("--a", freq, "highdim_sin frequency: pi/2, 3pi/4 or 3pi/2");
  sim_cmd->add_option("--dim", dim, "highdim_sin dimension: 10, 50 or 100");
  sim_cmd->add_option("--n", sim_n, "sample size (default 500, 200 for dependent6d, 400 for highdim_sin)");
  sim_cmd->add_option("--reps", reps, "replications")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim_seed, "base seed");
  sim_cmd->add_option("--threads", sim_threads, "worker threads (env SIMDEX_THREADS)")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--grid", sim_grid, "GCV grid constants \"lo,hi,count\"");
  sim_cmd->add_option("--out", sim_out, "JSON report path (default: stdout)");
  sim_cmd->add_option("--emit-data", emit_dir, "directory for per-replication CSV files");
  sim_cmd->add_option("--records", records_path, "per-replication CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    write_error(err, kExitUsage, "bad_flags", e.what());
    return kExitUsage;
  }

  try {
    if (fit_cmd->parsed()) {
      const FitRequest req = finish_fit_flags(fit_cmd, fit_flags);
      const FitOutcome res = run_fit(req, read_csv_file(req.input));
      OutputSink sink(fit_flags.out, out);
      *sink.stream << fit_report(req, res).dump(2) << '\n';
    } else if (gcv_cmd->parsed()) {
      const FitRequest req = finish_fit_flags(gcv_cmd, gcv_flags);
      const Matrix curve = gcv_curve(req, read_csv_file(req.input));
      OutputSink sink(gcv_flags.out, out);
      write_csv(*sink.stream, {"lambda", "qn", "trace", "gcv"}, curve);
    } else if (holdout_cmd->parsed()) {
      const FitRequest req = finish_fit_flags(holdout_cmd, holdout_flags);
      const HoldoutResult res = run_holdout(req, read_csv_file(req.input), train_size);
      OutputSink sink(holdout_flags.out, out);
      *sink.stream << holdout_report(req, res).dump(2) << '\n';
    } else if (predict_cmd->parsed()) {
      std::ifstream mf(model_path);
      if (!mf) throw UsageError("cannot open model file '" + model_path + "'");
      nlohmann::json report;
      try {
        report = nlohmann::json::parse(mf);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("model report: ") + e.what(), 0, "");
      }
      const LoadedModel model = load_model(report);
      const Vector yhat = predict(model, read_csv_file(predict_input));
      OutputSink sink(predict_out, out);
      write_csv(*sink.stream, {"y_hat"}, yhat);
    } else if (sim_cmd->parsed()) {
      SimScenario sc;
      try {
        sc.id = parse_scenario_id(scenario);
        sc.error_kind = parse_error_kind(error_kind);
      } catch (const std::domain_error& e) {
        throw UsageError(e.what());
      }
      sc.a = parse_frequency(freq);
      sc.dim = dim;
      sc.seed = sim_seed;
      if (sim_n > 0) sc.n = sim_n;
      else if (sc.id == ScenarioId::kDependent6d) sc.n = 200;
      else if (sc.id == ScenarioId::kHighdimSin) sc.n = 400;
      try {
        validate_scenario(sc);
      } catch (const std::domain_error& e) {
        throw UsageError(e.what());
      }
      SimOptions opts;
      opts.threads = resolve_threads(sim_threads);
      if (!sim_grid.empty()) {
        const GridSpec g = parse_grid_spec(sim_grid);
        opts.grid_lo = g.c_lo;
        opts.grid_hi = g.c_hi;
        opts.grid_count = g.count;
      }
      OutputSink sink(sim_out, out);
      if (!emit_dir.empty()) emit_scenario_data(sc, reps, emit_dir);
      const SimReport report = run_simulation(sc, reps, opts);
      *sink.stream << to_json(report).dump(2) << '\n';
      if (!records_path.empty()) {
        std::ofstream rf(records_path);
        if (!rf) throw UsageError("cannot open records file '" + records_path + "'");
        write_records_csv(report, rf);
      }
    }
  } catch (const ParseError& e) {
    write_error(err, kExitParse, "parse_error", e.what(), &e);
    return kExitParse;
  } catch (const UsageError& e) {
    write_error(err, kExitUsage, "bad_flags", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    write_error(err, kExitNumerical, "numerical_failure", e.what());
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace simdex
