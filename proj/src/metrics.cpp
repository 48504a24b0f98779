#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "spinal/metrics.hpp"

namespace spinal {

double pearson_r(std::span<const double> a, std::span<const double> b) {
  check(a.size() == b.size(), "pearson_r: length mismatch");
  check(a.size() >= 2, "pearson_r: need at least two points");
  const double n = static_cast<double>(a.size());
  double mean_a = 0.0, mean_b = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a, db = b[i] - mean_b;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0)
    throw NumericError("pearson_r: undefined for a constant sequence");
  return sab / std::sqrt(saa * sbb);
}

namespace {

// Continued fraction for the incomplete beta (Lentz's method).
double beta_cf(double x, double a, double b) {
  constexpr double kTiny = 1e-300;
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError("regularized_incomplete_beta: continued fraction failed");
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
  check(x >= 0.0 && x <= 1.0, "regularized_incomplete_beta: x outside [0,1]");
  check(a > 0.0 && b > 0.0, "regularized_incomplete_beta: a, b must be > 0");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(x, a, b) / a;
  return 1.0 - front * beta_cf(1.0 - x, b, a) / b;
}

AnovaResult anova_oneway(std::span<const double> group1,
                         std::span<const double> group2) {
  check(group1.size() >= 2 && group2.size() >= 2,
        "anova_oneway: each group needs at least two values");
  const double n1 = static_cast<double>(group1.size());
  const double n2 = static_cast<double>(group2.size());
  double m1 = 0.0, m2 = 0.0;
  for (double v : group1) m1 += v;
  for (double v : group2) m2 += v;
  m1 /= n1;
  m2 /= n2;
  const double grand = (n1 * m1 + n2 * m2) / (n1 + n2);
  const double ssb =
      n1 * (m1 - grand) * (m1 - grand) + n2 * (m2 - grand) * (m2 - grand);
  double ssw = 0.0;
  for (double v : group1) ssw += (v - m1) * (v - m1);
  for (double v : group2) ssw += (v - m2) * (v - m2);
  const double df1 = 1.0;
  const double df2 = n1 + n2 - 2.0;

  AnovaResult res;
  if (ssw == 0.0) {
    if (ssb == 0.0) {
      res.f = 0.0;
      res.p = 1.0;
    } else {
      res.f = std::numeric_limits<double>::infinity();
      res.p = 0.0;
    }
    return res;
  }
  res.f = (ssb / df1) / (ssw / df2);
  // F-distribution survival function
  res.p = regularized_incomplete_beta(df2 / (df2 + df1 * res.f), df2 / 2.0,
                                      df1 / 2.0);
  return res;
}

double mean_radial_error(const LandmarkBatch& pred, const LandmarkBatch& gt,
                         int height, int width) {
  check(pred.size() == gt.size() && !pred.empty(),
        "mean_radial_error: batch size mismatch");
  double sum = 0.0;
  long count = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    check(pred[i].rows() == gt[i].rows(), "mean_radial_error: shape mismatch");
    for (Eigen::Index k = 0; k < pred[i].rows(); ++k) {
      const double dx = (pred[i](k, 0) - gt[i](k, 0)) * width;
      const double dy = (pred[i](k, 1) - gt[i](k, 1)) * height;
      sum += std::sqrt(dx * dx + dy * dy);
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["pearson_r"] = pearson_r;
  j["anova_f"] = anova_f;
  j["anova_p"] = anova_p;
  j["mean_radial_error"] = mean_radial_error;
  j["per_vertebra"] = per_vertebra;
  return j.dump(2);
}

}  // namespace spinal
