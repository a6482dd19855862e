#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cli_runner.hpp"
#include "schema_check.hpp"
#include "simdex/cli_io.hpp"

using namespace simdex;
using nlohmann::json;

namespace {

CsvTable parse(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

CsvTable table_of(const Dataset& data) {
  CsvTable t;
  for (Eigen::Index j = 0; j < data.d(); ++j) t.header.push_back("x" + std::to_string(j + 1));
  t.header.push_back("y");
  t.values.resize(data.n(), data.d() + 1);
  t.values.leftCols(data.d()) = data.x;
  t.values.col(data.d()) = data.y;
  return t;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("csv reader accepts the usual dialect") {
  const CsvTable t = parse("\"a\", b ,c\r\n1,2.5e-3, -4E2\r\n\n+3,1.5,7\n\n");
  REQUIRE(t.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.values.rows() == 2);
  CHECK(t.values(0, 1) == 2.5e-3);
  CHECK(t.values(0, 2) == -400.0);
  CHECK(t.values(1, 0) == 3.0);
  CHECK(t.column_index("c") == 2);
  CHECK(t.column_index("zz") == -1);
  CHECK(parse("x,y\n").values.rows() == 0);
}

TEST_CASE("csv reader names the row and column of bad cells") {
  auto expect = [](const std::string& text, std::size_t row, const std::string& col) {
    try {
      (void)parse(text);
      FAIL("no error for " << text);
    } catch (const ParseError& e) {
      CHECK(e.row() == row);
      CHECK(e.column() == col);
      CHECK(std::string(e.what()).find("row " + std::to_string(row)) != std::string::npos);
    }
  };
  expect("x,y\n1,2\n3,NA\n", 3, "y");
  expect("x,y\n1,\n", 2, "y");
  expect("x,y\n1,2\nabc,4\n", 3, "x");
  expect("x,y\n1,nan\n", 2, "y");
  expect("x,y\n1,inf\n", 2, "y");
  expect("x,y\n1,2x\n", 2, "y");
  expect("x,y\n1,2,3\n", 2, "");
  expect("x,x\n", 1, "x");
  expect("", 1, "");
}

TEST_CASE("csv writer round-trips doubles exactly") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  Matrix m(20, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = z(rng) * std::pow(10.0, static_cast<double>(i % 9) - 4);
  std::ostringstream out;
  write_csv(out, {"a", "b", "c"}, m);
  const CsvTable back = parse(out.str());
  CHECK(back.values == m);
}

TEST_CASE("standardization centers, scales and maps the index back") {
  const Dataset data = generate(SimScenario{.id = ScenarioId::kDependent6d, .n = 150, .seed = 2}, 0);
  const Standardization s = fit_standardization(data.x, {"a", "b", "c", "d", "e", "f"});
  const Matrix z = s.apply(data.x);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    CHECK(std::abs(z.col(j).mean()) < 1e-12);
    CHECK(z.col(j).squaredNorm() / (z.rows() - 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  // The index in original units is an affine function of the working index.
  const UnitIndex theta = canonicalize(Vector{{0.3, -0.5, 0.2, 0.6, -0.1, 0.4}});
  const UnitIndex orig = s.to_original(theta);
  CHECK(orig.coords().norm() == doctest::Approx(1.0).epsilon(1e-14));
  const Vector tw = z * theta.coords();
  const Vector to = data.x * orig.coords();
  const double ratio = (tw(1) - tw(0)) / (to(1) - to(0));
  const double shift = tw(0) - ratio * to(0);
  CHECK(((ratio * to).array() + shift - tw.array()).abs().maxCoeff() < 1e-10);

  Matrix constant = data.x;
  constant.col(2).setConstant(1.5);
  CHECK_THROWS_AS((void)fit_standardization(constant, {"a", "b", "c", "d", "e", "f"}), UsageError);
}

TEST_CASE("grid spec parsing") {
  const GridSpec g = parse_grid_spec("0.5, 3,7");
  CHECK(g.c_lo == 0.5);
  CHECK(g.c_hi == 3.0);
  CHECK(g.count == 7);
  CHECK_THROWS_AS((void)parse_grid_spec("1,2"), UsageError);
  CHECK_THROWS_AS((void)parse_grid_spec("1,2,x"), UsageError);
  CHECK_THROWS_AS((void)parse_grid_spec("-1,2,3"), UsageError);
  CHECK_THROWS_AS((void)parse_grid_spec("1,2,0"), UsageError);
}

TEST_CASE("column selection") {
  const CsvTable t = parse("a,y,b\n1,2,3\n4,5,6\n");
  const ModelData all = select_columns(t, "y", {});
  CHECK(all.covariates == std::vector<std::string>{"a", "b"});
  CHECK(all.data.x(1, 1) == 6.0);
  CHECK(all.data.y(0) == 2.0);
  CHECK(select_columns(t, "y", {"b"}).data.d() == 1);
  try {
    (void)select_columns(t, "resp", {});
    FAIL("missing response accepted");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("resp") != std::string::npos);
  }
  CHECK_THROWS_AS((void)select_columns(t, "y", {"q"}), UsageError);
  CHECK_THROWS_AS((void)select_columns(t, "y", {"y"}), UsageError);
}

TEST_CASE("identity toy data") {
  const CsvTable t = parse("x,y\n0,0\n1,1\n2,2\n3,3\n4,4\n5,5\n");
  FitRequest req;
  req.response = "y";
  const FitOutcome out = run_fit(req, t);
  CHECK(out.fit.theta_hat.coords() == Vector::Ones(1));
  CHECK(out.fit.qn < 1e-20);
  const json j = fit_report(req, out);
  CHECK(j["theta_hat"] == json::array({1.0}));
  CHECK(schema_check::validate(j, "fit_report.schema.json").empty());
}

TEST_CASE("fit report, reload and predict") {
  const Dataset data = generate(SimScenario{.id = ScenarioId::kQuadratic2d, .n = 200, .seed = 8}, 0);
  const CsvTable t = table_of(data);
  for (bool standardize : {false, true}) {
    FitRequest req;
    req.response = "y";
    req.standardize = standardize;
    req.seed = 3;
    const FitOutcome out = run_fit(req, t);
    const json j = fit_report(req, out);
    const auto errors = schema_check::validate(j, "fit_report.schema.json");
    CHECK_MESSAGE(errors.empty(), (errors.empty() ? "" : errors.front()));
    CHECK(j["standardization"]["applied"] == standardize);
    // Serialize and read back, as predict does.
    const LoadedModel model = load_model(json::parse(j.dump()));
    const Vector yhat = predict(model, t);
    const auto fitted = j["fitted_values"].get<std::vector<double>>();
    REQUIRE(static_cast<Eigen::Index>(fitted.size()) == yhat.size());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < yhat.size(); ++i) worst = std::max(worst, std::abs(yhat(i) - fitted[i]));
    CHECK(worst <= 1e-10);
    if (standardize) {
      const Vector orig = out.standardization->to_original(out.fit.theta_hat).coords();
      CHECK(j["theta_hat_original"][0].get<double>() == orig(0));
    } else {
      CHECK(j["theta_hat_original"] == j["theta_hat"]);
    }
  }
}

TEST_CASE("malformed model reports are parse errors") {
  const CsvTable t = parse("x,y\n0,0\n1,1\n2,2.5\n3,3\n");
  FitRequest req;
  req.response = "y";
  const json good = fit_report(req, run_fit(req, t));
  CHECK_NOTHROW((void)load_model(good));
  for (const char* field : {"schema_version", "theta_hat", "spline", "covariates", "standardization"}) {
    json bad = good;
    bad.erase(field);
    CHECK_THROWS_AS((void)load_model(bad), ParseError);
  }
  json wrong = good;
  wrong["schema_version"] = 99;
  CHECK_THROWS_AS((void)load_model(wrong), ParseError);
  wrong = good;
  wrong["spline"]["values"].erase(0);
  CHECK_THROWS_AS((void)load_model(wrong), ParseError);
  const LoadedModel m = load_model(good);
  CHECK_THROWS_AS((void)predict(m, parse("q,y\n1,1\n")), ParseError);
  CHECK(predict(m, parse("x\n")).size() == 0);
}

TEST_CASE("gcv curve is ordered and its minimum is the selected lambda") {
  const Dataset data = generate(SimScenario{.id = ScenarioId::kQuadratic2d, .n = 300, .seed = 4}, 0);
  const CsvTable t = table_of(data);
  FitRequest req;
  req.response = "y";
  req.grid = GridSpec{0.1, 2.0, 9};
  const Matrix curve = gcv_curve(req, t);
  REQUIRE(curve.rows() == 9);
  Eigen::Index best = 0;
  for (Eigen::Index i = 0; i < curve.rows(); ++i) {
    if (i > 0) {
      CHECK(curve(i, 0) > curve(i - 1, 0));
      CHECK(curve(i, 2) < curve(i - 1, 2));
    }
    if (curve(i, 3) < curve(best, 3)) best = i;
  }
  CHECK(curve(best, 0) == run_fit(req, t).fit.lambda);

  req.grid = GridSpec{0.5, 0.5, 1};
  CHECK(gcv_curve(req, t).rows() == 1);
  req.lambda = 0.07;
  const Matrix fixed = gcv_curve(req, t);
  REQUIRE(fixed.rows() == 1);
  CHECK(fixed(0, 0) == 0.07);
}

TEST_CASE("holdout split is seeded and complete") {
  const Dataset data = generate(SimScenario{.id = ScenarioId::kDependent6d, .n = 120, .seed = 6}, 0);
  FitRequest req;
  req.response = "y";
  req.grid = GridSpec{0.1, 2.0, 4};
  req.seed = 11;
  const HoldoutResult a = run_holdout(req, table_of(data), 80);
  const HoldoutResult b = run_holdout(req, table_of(data), 80);
  CHECK(a.n_train == 80);
  CHECK(a.n_test == 40);
  CHECK(a.mse_plse == b.mse_plse);
  CHECK(a.mse_linear == b.mse_linear);
  CHECK(a.mse_linear > 0.0);
  const json j = holdout_report(req, a);
  CHECK(schema_check::validate(j, "holdout_report.schema.json").empty());
  CHECK_THROWS_AS((void)run_holdout(req, table_of(data), 120), UsageError);
  CHECK_THROWS_AS((void)run_holdout(req, table_of(data), 2), UsageError);
}

TEST_CASE("command line exit codes and error reports") {
  const auto dir = cli_runner::scratch_dir("cli");
  write_file(dir / "toy.csv", "x,y\n0,0\n1,1\n2,2\n3,3\n4,4\n");
  write_file(dir / "na.csv", "x,y\n0,0\n1,NA\n");

  auto check_error = [](const cli_runner::Result& r, int code) {
    CHECK(r.code == code);
    CHECK(r.out.empty());
    const json e = json::parse(r.err);
    CHECK(schema_check::validate(e, "error.schema.json").empty());
    CHECK(e["error"]["code"] == code);
    return e;
  };

  const auto toy = quoted(dir / "toy.csv");
  auto e = check_error(cli_runner::run("fit --input " + quoted(dir / "na.csv") + " --response y", dir), 2);
  CHECK(e["error"]["row"] == 3);
  CHECK(e["error"]["column"] == "y");
  e = check_error(cli_runner::run("fit --input " + toy + " --response price", dir), 4);
  CHECK(e["error"]["message"].get<std::string>().find("price") != std::string::npos);
  check_error(cli_runner::run("fit --input " + toy + " --response y --lambda 1 --grid 1,2,3", dir), 4);
  check_error(cli_runner::run("fit --input " + toy + " --response y --grid 1,2", dir), 4);
  check_error(cli_runner::run("fit --input " + toy, dir), 4);
  check_error(cli_runner::run("frobnicate", dir), 4);
  check_error(cli_runner::run("simulate --scenario quadratic2d --a 7pi", dir), 4);
  check_error(cli_runner::run("simulate --scenario quadratic2d --reps 1", dir, "SIMDEX_THREADS=abc"), 4);
  check_error(cli_runner::run("fit --input " + quoted(dir / "missing.csv") + " --response y", dir), 4);

  const auto fit = cli_runner::run("fit --input " + toy + " --response y --out " + quoted(dir / "m.json"), dir);
  REQUIRE(fit.code == 0);
  const json report = json::parse(cli_runner::slurp(dir / "m.json"));
  CHECK(report["theta_hat"] == json::array({1.0}));
  CHECK(report["qn"].get<double>() < 1e-20);

  const auto model = quoted(dir / "m.json");
  auto pred = cli_runner::run("predict --model " + model + " --input " + toy, dir);
  CHECK(pred.code == 0);
  const CsvTable yhat = parse(pred.out);
  CHECK(yhat.header == std::vector<std::string>{"y_hat"});
  REQUIRE(yhat.values.rows() == 5);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(std::abs(yhat.values(i, 0) - static_cast<double>(i)) < 1e-10);
  write_file(dir / "empty.csv", "x\n");
  pred = cli_runner::run("predict --model " + model + " --input " + quoted(dir / "empty.csv"), dir);
  CHECK(pred.code == 0);
  CHECK(pred.out == "y_hat\n");
  write_file(dir / "other.csv", "z\n1\n");
  check_error(cli_runner::run("predict --model " + model + " --input " + quoted(dir / "other.csv"), dir), 2);
  write_file(dir / "junk.json", "{\"schema_version\": 1");
  check_error(cli_runner::run("predict --model " + quoted(dir / "junk.json") + " --input " + toy, dir), 2);

  const auto gcv = cli_runner::run("gcv --input " + toy + " --response y --grid 1,1,1", dir);
  CHECK(gcv.code == 0);
  const CsvTable curve = parse(gcv.out);
  CHECK(curve.header == std::vector<std::string>{"lambda", "qn", "trace", "gcv"});
  CHECK(curve.values.rows() == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("emitted data refit through the command line matches the harness") {
  const auto dir = cli_runner::scratch_dir("roundtrip");
  const SimScenario sc{.id = ScenarioId::kDependent6d, .n = 120, .seed = 17};
  SimOptions opts;
  opts.grid_count = 4;
  const SimReport harness = run_simulation(sc, 2, opts);
  const json expected = to_json(harness);

  const auto sim = cli_runner::run("simulate --scenario dependent6d --n 120 --reps 2 --seed 17 --grid 0.1,2,4 "
                                   "--emit-data " + quoted(dir / "data") + " --threads 2",
                                   dir);
  REQUIRE(sim.code == 0);
  const json from_cli = json::parse(sim.out);
  CHECK(from_cli == expected);
  CHECK(schema_check::validate(from_cli, "sim_report.schema.json").empty());

  for (int rep = 0; rep < 2; ++rep) {
    const auto csv = dir / "data" / ("rep_000" + std::to_string(rep) + ".csv");
    const Dataset original = generate(sc, static_cast<std::uint64_t>(rep));
    const CsvTable t = read_csv_file(csv.string());
    CHECK(t.values.leftCols(6) == original.x);
    CHECK(t.values.col(6) == original.y);
    const auto fit = cli_runner::run("fit --input " + quoted(csv) + " --response y --seed 17 --grid 0.1,2,4", dir);
    REQUIRE(fit.code == 0);
    const json j = json::parse(fit.out);
    CHECK(j["theta_hat"] == expected["replications"][rep]["theta_hat"]);
    CHECK(j["lambda"] == expected["replications"][rep]["lambda"]);
    CHECK(j["gcv"] == expected["replications"][rep]["gcv"]);
  }
  std::filesystem::remove_all(dir);
}
