#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "marloc/simulation.hpp"

using Catch::Approx;
using namespace marloc;

TEST_CASE("missingness rate and response mean of the design", "[simulation]") {
  SimScenario scenario;
  scenario.n = 1000;
  scenario.seed = 3;
  double observed = 0.0, y_sum = 0.0;
  for (std::uint64_t r = 0; r < 100; ++r) {
    const auto full = generate_full(scenario, r);
    for (auto a : full.observed) observed += a;
    y_sum += full.y.sum();
  }
  CHECK(observed / 1e5 == Approx(0.80).margin(0.005));
  CHECK(y_sum / 1e5 == Approx(7.5).margin(0.02));
  CHECK(scenario.mu0() == 7.5);
}

TEST_CASE("replicates are reproducible and independent of each other", "[simulation]") {
  SimScenario scenario;
  const auto a = generate_replicate(scenario, 4);
  const auto b = generate_replicate(scenario, 4);
  const auto c = generate_replicate(scenario, 5);
  CHECK(a.x() == b.x());
  CHECK(a.indicators() == b.indicators());
  CHECK(a.observed_y() == b.observed_y());
  CHECK(a.x() != c.x());
  CHECK(stream_seed(1, 2, 0) != stream_seed(1, 2, 1));
  CHECK(stream_seed(1, 2, 0) != stream_seed(1, 3, 0));
}

TEST_CASE("contamination keeps indicators and replaces observed rows only", "[simulation]") {
  SimScenario scenario;
  const auto clean = generate_replicate(scenario, 0);
  const auto dirty = contaminate(clean, scenario, 0, 0.1, 3.0, 40.0);
  CHECK(dirty.indicators() == clean.indicators());
  int replaced = 0;
  for (Eigen::Index i = 0; i < clean.n(); ++i) {
    if (dirty.x().row(i) != clean.x().row(i)) {
      CHECK(clean.observed(i));
      CHECK((dirty.x().row(i).array() == 3.0).all());
      CHECK(dirty.y()[i] == 40.0);
      ++replaced;
    }
  }
  CHECK(replaced == static_cast<int>(std::lround(0.1 * static_cast<double>(clean.m()))));
  // Same rows for every y*.
  const auto other = contaminate(clean, scenario, 0, 0.1, 3.0, 12.0);
  for (Eigen::Index i = 0; i < clean.n(); ++i) {
    CHECK((other.x().row(i) != clean.x().row(i)) == (dirty.x().row(i) != clean.x().row(i)));
  }
}

TEST_CASE("default y* grid spans 8 to 50 in steps of 0.2", "[simulation]") {
  const auto grid = Contamination::default_grid();
  REQUIRE(grid.size() == 211);
  CHECK(grid.front() == 8.0);
  CHECK(grid.back() == Approx(50.0).margin(1e-12));
  CHECK(grid[1] == Approx(8.2));
}

TEST_CASE("study results do not depend on the thread count", "[simulation]") {
  SimScenario scenario;
  scenario.replications = 24;
  const auto one = run_study(scenario, all_estimators(), {}, 1);
  const auto four = run_study(scenario, all_estimators(), {}, 4);
  REQUIRE(one.estimators.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(one.estimators[k].mse == four.estimators[k].mse);
    CHECK(one.estimators[k].bias == four.estimators[k].bias);
    CHECK(one.estimators[k].failures == 0);
  }
  CHECK(one.estimators[0].efficiency == 1.0);
  CHECK(format_csv(one) == format_csv(four));
  CHECK(format_table(one).find("MM95") != std::string::npos);
}

TEST_CASE("estimator names round trip", "[simulation]") {
  for (auto e : all_estimators()) CHECK(estimator_from_name(estimator_name(e)) == e);
  CHECK(estimator_from_name("mm90") == Estimator::MM90);
  CHECK_THROWS_AS(estimator_from_name("L1"), Error);
}

TEST_CASE("contamination sweep separates the mean from the robust estimators", "[simulation]") {
  SimScenario scenario;
  scenario.replications = 20;
  Contamination c;
  c.x_star = 1.0;
  c.y_star_grid = {8.0, 50.0};
  const auto sweep = run_contamination_sweep(scenario, c, all_estimators(), {}, 2);
  REQUIRE(sweep.mse.size() == 4);
  CHECK(sweep.mse[0][1] > 10.0 * sweep.mse[0][0]);
  for (std::size_t k = 1; k < 4; ++k) CHECK(sweep.mse[k][1] < 1.0);
  const auto csv = format_csv(sweep);
  CHECK(csv.rfind("x_star,y_star,mse_MEAN,mse_MEDIAN,mse_MM90,mse_MM95\n", 0) == 0);
}

TEST_CASE("parallel_map keeps results in index order", "[simulation]") {
  const auto out = parallel_map(100, 7, [](std::size_t i) { return static_cast<int>(i * i); });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i));
}
