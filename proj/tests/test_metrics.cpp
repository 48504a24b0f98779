#include <doctest.h>

#include <cmath>
#include <vector>

#include "spinal/metrics.hpp"
#include "spinal/rng.hpp"

using namespace spinal;

namespace {

// Simpson-rule oracle for I_x(a,b); independent of the continued-fraction
// implementation. Valid for a >= 1 (no singularity on [0, x]).
double incbeta_quadrature(double x, double a, double b, int panels = 400000) {
  auto integrand = [&](double t) {
    return std::pow(t, a - 1.0) * std::pow(1.0 - t, b - 1.0);
  };
  // composite Simpson on [0, x]; std::pow(0,0)==1 handles the a==1 endpoint
  const double h = x / (2 * panels);
  double s = integrand(0.0) + integrand(x);
  for (int i = 1; i < 2 * panels; ++i)
    s += integrand(i * h) * (i % 2 ? 4.0 : 2.0);
  const double integral = s * h / 3.0;
  const double ln_beta =
      std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  return integral / std::exp(ln_beta);
}

}  // namespace

TEST_CASE("pearson_r trivial cases") {
  std::vector<double> a = {1, 2, 3, 4};
  CHECK(pearson_r(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> neg = {-1, -2, -3, -4};
  CHECK(pearson_r(a, neg) == doctest::Approx(-1.0).epsilon(1e-12));
  std::vector<double> constant = {2, 2, 2, 2};
  CHECK_THROWS_AS(pearson_r(a, constant), NumericError);
  std::vector<double> shorter = {1, 2};
  CHECK_THROWS_AS(pearson_r(a, shorter), ContractError);
}

TEST_CASE("pearson_r against the direct formula") {
  std::vector<double> a = {1, 2, 3, 4};
  std::vector<double> b = {2, 4, 5, 4};
  // direct evaluation of sum formulas
  const double n = 4, sa = 10, sb = 15, saa = 30, sbb = 61, sab = 41;
  const double expected = (n * sab - sa * sb) /
                          std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
  CHECK(pearson_r(a, b) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("pearson_r is invariant under positive affine maps") {
  Rng rng(1);
  std::vector<double> a(50), b(50), b2(50);
  for (int i = 0; i < 50; ++i) {
    a[static_cast<size_t>(i)] = rng.uniform();
    b[static_cast<size_t>(i)] = rng.uniform();
  }
  for (int i = 0; i < 50; ++i)
    b2[static_cast<size_t>(i)] = 2.7 * b[static_cast<size_t>(i)] + 0.4;
  CHECK(std::abs(pearson_r(a, b) - pearson_r(a, b2)) < 1e-12);
}

TEST_CASE("anova_oneway identical groups") {
  std::vector<double> g = {1, 2, 3, 4};
  AnovaResult res = anova_oneway(g, g);
  CHECK(res.f == 0.0);
  CHECK(res.p == 1.0);
}

TEST_CASE("anova_oneway hand example {1,2,3} vs {2,3,4}") {
  std::vector<double> g1 = {1, 2, 3}, g2 = {2, 3, 4};
  AnovaResult res = anova_oneway(g1, g2);
  CHECK(res.f == doctest::Approx(1.5).epsilon(1e-12));
  // tail oracle: p = I_{df2/(df2 + df1 F)}(df2/2, df1/2); the integrand is
  // smooth on [0, x] since x < 1 and a = df2/2 = 2 >= 1
  const double x = 4.0 / (4.0 + 1.5);
  const double p_oracle = incbeta_quadrature(x, 2.0, 0.5);
  CHECK(res.p == doctest::Approx(p_oracle).epsilon(1e-8));
}

TEST_CASE("anova F equals the squared pooled t statistic") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n1 = 3 + rng.next_u64() % 8, n2 = 3 + rng.next_u64() % 8;
    std::vector<double> g1(n1), g2(n2);
    for (double& v : g1) v = rng.uniform(-1.0, 1.0);
    for (double& v : g2) v = rng.uniform(-1.0, 1.0) + 0.2;
    AnovaResult res = anova_oneway(g1, g2);

    // independent two-sample pooled t statistic
    double m1 = 0, m2 = 0;
    for (double v : g1) m1 += v;
    for (double v : g2) m2 += v;
    m1 /= static_cast<double>(n1);
    m2 /= static_cast<double>(n2);
    double ss = 0;
    for (double v : g1) ss += (v - m1) * (v - m1);
    for (double v : g2) ss += (v - m2) * (v - m2);
    const double sp2 = ss / static_cast<double>(n1 + n2 - 2);
    const double t =
        (m1 - m2) / std::sqrt(sp2 * (1.0 / static_cast<double>(n1) +
                                     1.0 / static_cast<double>(n2)));
    CHECK(std::abs(res.f - t * t) < 1e-9 * std::max(1.0, t * t));
  }
}

TEST_CASE("anova infinite-F sentinel") {
  std::vector<double> g1 = {1, 1, 1}, g2 = {2, 2, 2};
  AnovaResult res = anova_oneway(g1, g2);
  CHECK(std::isinf(res.f));
  CHECK(res.p == 0.0);
}

TEST_CASE("anova p decreases as F grows") {
  // fixed group sizes, increasing separation
  double last_p = 1.1;
  for (double shift : {0.1, 0.5, 1.0, 2.0, 4.0}) {
    std::vector<double> g1 = {0.0, 0.3, -0.3, 0.1};
    std::vector<double> g2 = {shift, shift + 0.3, shift - 0.3, shift + 0.1};
    AnovaResult res = anova_oneway(g1, g2);
    CHECK(res.p < last_p);
    last_p = res.p;
  }
}

TEST_CASE("regularized incomplete beta endpoints and identities") {
  CHECK(regularized_incomplete_beta(0.0, 2.0, 3.0) == 0.0);
  CHECK(regularized_incomplete_beta(1.0, 2.0, 3.0) == 1.0);
  for (double x : {0.1, 0.4, 0.9})
    CHECK(regularized_incomplete_beta(x, 1.0, 1.0) ==
          doctest::Approx(x).epsilon(1e-12));
  for (double a : {0.5, 1.0, 3.0, 10.0})
    CHECK(regularized_incomplete_beta(0.5, a, a) ==
          doctest::Approx(0.5).epsilon(1e-10));
  CHECK_THROWS_AS(regularized_incomplete_beta(-0.1, 1, 1), ContractError);
  CHECK_THROWS_AS(regularized_incomplete_beta(0.5, 0.0, 1), ContractError);
}

TEST_CASE("incomplete beta reflection identity") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const double x = rng.uniform(0.05, 0.95);
    const double a = rng.uniform(0.5, 8.0);
    const double b = rng.uniform(0.5, 8.0);
    const double lhs = regularized_incomplete_beta(x, a, b);
    const double rhs = 1.0 - regularized_incomplete_beta(1.0 - x, b, a);
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("incomplete beta matches quadrature on a grid") {
  for (double a : {1.0, 2.0, 3.5, 5.0}) {
    for (double b : {1.0, 2.0, 3.5, 5.0}) {
      for (double x : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        const double oracle = incbeta_quadrature(x, a, b);
        CHECK(std::abs(regularized_incomplete_beta(x, a, b) - oracle) < 1e-10);
      }
    }
  }
}

TEST_CASE("mean_radial_error basics and brute-force agreement") {
  LandmarkMatrix gt(2, 2), pred(2, 2);
  gt << 0.2, 0.3, 0.6, 0.7;
  pred = gt;
  CHECK(mean_radial_error({pred}, {gt}, 100, 100) == 0.0);

  pred(0, 0) += 3.0 / 100.0;  // 3 px in x
  pred(0, 1) += 4.0 / 100.0;  // 4 px in y
  CHECK(mean_radial_error({pred}, {gt}, 100, 100) ==
        doctest::Approx(2.5).epsilon(1e-9));  // (5 + 0) / 2

  Rng rng(4);
  LandmarkBatch p, g;
  for (int s = 0; s < 3; ++s) {
    LandmarkMatrix pm(7, 2), gm(7, 2);
    for (int i = 0; i < 7; ++i)
      for (int c = 0; c < 2; ++c) {
        pm(i, c) = rng.uniform();
        gm(i, c) = rng.uniform();
      }
    p.push_back(pm);
    g.push_back(gm);
  }
  double oracle = 0.0;
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < 7; ++i) {
      const double dx = (p[s](i, 0) - g[s](i, 0)) * 64;
      const double dy = (p[s](i, 1) - g[s](i, 1)) * 128;
      oracle += std::hypot(dx, dy);
    }
  oracle /= 21.0;
  CHECK(std::abs(mean_radial_error(p, g, 128, 64) - oracle) < 1e-12);

  LandmarkBatch bad = {LandmarkMatrix(3, 2)};
  CHECK_THROWS_AS(mean_radial_error(p, bad, 128, 64), ContractError);
}

TEST_CASE("EvalReport serializes the declared fields") {
  EvalReport report;
  report.pearson_r = 0.9;
  report.anova_f = 1.5;
  report.anova_p = 0.22;
  report.mean_radial_error = 2.0;
  report.per_vertebra = {1.0, 2.0};
  const std::string json = report.to_json();
  CHECK(json.find("\"pearson_r\"") != std::string::npos);
  CHECK(json.find("\"anova_f\"") != std::string::npos);
  CHECK(json.find("\"anova_p\"") != std::string::npos);
  CHECK(json.find("\"mean_radial_error\"") != std::string::npos);
  CHECK(json.find("\"per_vertebra\"") != std::string::npos);
}
