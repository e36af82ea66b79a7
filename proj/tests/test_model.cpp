#include <cmath>
#include <vector>

#include "doctest.h"
#include "gridcomp/error.hpp"
#include "gridcomp/model.hpp"

using namespace gridcomp;

TEST_CASE("TaxonRegistry") {
  TaxonRegistry r({"oak", "beech"});
  CHECK(r.size() == 2);
  CHECK(r.index_of("beech") == 1);
  CHECK(r.add("oak") == 0);
  CHECK(r.add("pine") == 2);
  CHECK(r.name(2) == "pine");
  CHECK_THROWS_AS(r.index_of("elm"), InvalidArgument);
  CHECK_THROWS_AS(TaxonRegistry({"a", "a"}), InvalidArgument);
}

TEST_CASE("multinomial_log_pmf examples") {
  CHECK(multinomial_log_pmf(std::vector<int>{1, 0}, std::vector<double>{1.0, 0.0}) == 0.0);
  CHECK(multinomial_log_pmf(std::vector<int>{1, 1}, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(std::log(0.5)).epsilon(1e-14));
  CHECK(multinomial_log_pmf(std::vector<int>{0, 0, 0}, std::vector<double>{0.2, 0.3, 0.5}) == 0.0);
  CHECK(std::isinf(multinomial_log_pmf(std::vector<int>{0, 2}, std::vector<double>{1.0, 0.0})));
  CHECK_THROWS_AS(multinomial_log_pmf(std::vector<int>{1}, std::vector<double>{0.5, 0.5}), InvalidArgument);
}

TEST_CASE("multinomial_log_pmf sums to one over all outcomes") {
  const std::vector<double> theta = {0.2, 0.5, 0.3};
  for (int n = 0; n <= 4; ++n) {
    double total = 0.0;
    for (int a = 0; a <= n; ++a)
      for (int b = 0; a + b <= n; ++b)
        total += std::exp(multinomial_log_pmf(std::vector<int>{a, b, n - a - b}, theta));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("probit closed form for two taxa") {
  CHECK(probit_theta_closed_form_p2(0.3, 0.3) == doctest::Approx(0.5));
  CHECK(probit_theta_closed_form_p2(std::sqrt(2.0), 0.0) == doctest::Approx(0.841344746).epsilon(1e-9));
  CHECK(probit_theta_closed_form_p2(-40.0, 0.0) < 1e-100);
}

TEST_CASE("probit quadrature agrees with the closed form and symmetry") {
  for (double d : {-2.0, -0.5, 0.0, 1.0, 3.0}) {
    const std::vector<double> alpha = {d, 0.0};
    const auto theta = probit_theta_quadrature(alpha);
    CHECK(theta[0] == doctest::Approx(probit_theta_closed_form_p2(d, 0.0)).epsilon(1e-9));
    CHECK(theta.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  const std::vector<double> same = {0.7, 0.7, 0.7};
  const auto t3 = probit_theta_quadrature(same);
  for (int p = 0; p < 3; ++p) CHECK(t3[p] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("Dataset validation") {
  const auto grid = build_grid(3, 3, 1);
  Dataset d;
  d.taxa = TaxonRegistry({"a", "b"});
  d.cells.push_back({grid.interior_index(0, 0), {1, 2}});
  CHECK_NOTHROW(d.validate(grid));
  CHECK(d.gridded_trees() == 3);

  SUBCASE("duplicate cell names coordinates") {
    d.cells.push_back({grid.interior_index(0, 0), {0, 1}});
    CHECK_THROWS_WITH_AS(d.validate(grid), doctest::Contains("(0,0)"), InvalidArgument);
  }
  SUBCASE("buffer cell rejected") {
    d.cells.push_back({grid.index(0, 0), {0, 1}});
    CHECK_THROWS_AS(d.validate(grid), InvalidArgument);
  }
  SUBCASE("negative count") {
    d.cells.push_back({grid.interior_index(1, 0), {-1, 1}});
    CHECK_THROWS_AS(d.validate(grid), InvalidArgument);
  }
  SUBCASE("empty township") {
    d.townships.push_back({"T1", {}, {"T1", {{grid.interior_index(1, 1), 1.0}}}});
    CHECK_THROWS_AS(d.validate(grid), InvalidArgument);
  }
  SUBCASE("cells with zero trees are allowed") {
    d.cells.push_back({grid.interior_index(2, 2), {0, 0}});
    CHECK_NOTHROW(d.validate(grid));
  }
}

TEST_CASE("Hyperpriors validation") {
  Hyperpriors h;
  CHECK_NOTHROW(h.validate());
  CHECK(h.rho_upper == doctest::Approx(std::exp(5.0)));
  h.rho_lower = 200.0;
  CHECK_THROWS_AS(h.validate(), InvalidArgument);
}
