#include <doctest.h>

#include "nfl/experiment.hpp"
#include "support.hpp"

using namespace nfl;

namespace {

PlantModel<double> scalar_plant(double a = 0.5, double b = 1.0) {
  PlantModel<double> plant;
  plant.A = Matd::Constant(1, 1, a);
  plant.B = Matd::Constant(1, 1, b);
  return plant;
}

StateBox<double> unit_box(Index n) {
  return StateBox<double>::symmetric(Vecd::Constant(n, 1.0));
}

}  // namespace

TEST_CASE("minimum experiment length matches the persistency bound") {
  CHECK(minimum_experiment_length(4, 1) == 9);
  CHECK(minimum_experiment_length(1, 1) == 3);
  CHECK(minimum_experiment_length(3, 2) == 11);
}

TEST_CASE("collect rejects experiments below the bound") {
  const auto plant = vehicle_lateral_plant();
  CHECK_THROWS_AS(
      collect(plant, vehicle_state_box(), 5, UniformExcitation{}, 1), DataTooShort);
}

TEST_CASE("collect: uniformly excited scalar plant is persistently exciting") {
  const auto data = collect(scalar_plant(), unit_box(1), 10, UniformExcitation{-1.0, 1.0}, 42);
  CHECK(data.pe_ok);
  CHECK(data.T() == 10);
  CHECK(check_rank_condition(data, 1e-9));
}

TEST_CASE("collect: all-zero excitation cannot be persistently exciting") {
  const auto data = collect(scalar_plant(), unit_box(1), 10, UniformExcitation{0.0, 0.0}, 42);
  CHECK_FALSE(data.pe_ok);
}

TEST_CASE("collect: successor columns reproduce the plant map exactly") {
  const auto plant = vehicle_lateral_plant();
  const auto data = collect(plant, vehicle_state_box(), 30, UniformExcitation{}, 5);
  CHECK((data.X1 - (plant.A * data.X0 + plant.B * data.U0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("collect is deterministic for a fixed seed") {
  const auto a = collect(scalar_plant(), unit_box(1), 12, GaussianExcitation{0.5}, 99);
  const auto b = collect(scalar_plant(), unit_box(1), 12, GaussianExcitation{0.5}, 99);
  CHECK(a.U0 == b.U0);
  CHECK(a.X0 == b.X0);
  CHECK(a.X1 == b.X1);
  const auto c = collect(scalar_plant(), unit_box(1), 12, GaussianExcitation{0.5}, 100);
  CHECK(a.U0 != c.U0);
}

TEST_CASE("rank condition: duplicated columns are rank deficient") {
  ExperimentData<double> data;
  data.U0 = Matd::Ones(1, 6);
  data.X0 = Matd::Ones(2, 6) * 0.5;
  data.X1 = Matd::Ones(2, 6);
  CHECK_FALSE(check_rank_condition(data, 1e-9));
}

TEST_CASE("rank condition: vehicle data at and above the minimal length") {
  const auto plant = vehicle_lateral_plant();
  for (Index T : {Index(9), Index(20), Index(50)}) {
    const auto data = collect(plant, vehicle_state_box(), T, UniformExcitation{}, 3);
    CHECK(check_rank_condition(data, 1e-9));
  }
}

TEST_CASE("rank monotonicity: appending columns never destroys excitation") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto plant = test::random_plant(rng, 3, 2, 0.8);
    const auto box = unit_box(3);
    auto data = collect(plant, box, 15, UniformExcitation{}, 1000 + trial);
    REQUIRE(data.pe_ok);
    // Append fresh columns, including degenerate all-zero ones.
    const Index extra = 4;
    Matd u2(2, data.T() + extra), x0_2(3, data.T() + extra), x1_2(3, data.T() + extra);
    u2 << data.U0, Matd::Zero(2, extra);
    Matd xcols = test::random_matrix(rng, 3, extra);
    x0_2 << data.X0, xcols;
    x1_2 << data.X1, plant.A * xcols;
    data.U0 = u2;
    data.X0 = x0_2;
    data.X1 = x1_2;
    CHECK(check_rank_condition(data, 1e-9));
  }
}
