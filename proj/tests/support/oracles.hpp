#pragma once

// Reference computations used by the tests. They deliberately avoid the library's own
// linear algebra, Jacobian and density code paths.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <utility>
#include <vector>

namespace oracle {

// Φ(x) from the Maclaurin series of erf, summed until terms vanish. Good to ~1e-15 for |x| <= 4.
inline double normal_cdf(double x) {
  const double z = x / std::numbers::sqrt2;
  double term = z;
  double sum = z;
  for (int n = 1; n < 200; ++n) {
    term *= -z * z / n;
    const double add = term / (2 * n + 1);
    sum += add;
    if (std::fabs(add) < 1e-18) break;
  }
  return 0.5 * (1.0 + 2.0 / std::sqrt(std::numbers::pi) * sum);
}

struct SignLogDet {
  double sign = 0.0;
  double log_abs = 0.0;
};

// Gaussian elimination with partial pivoting on a row-major n x n copy.
inline SignLogDet slogdet(std::vector<double> a, std::size_t n) {
  SignLogDet out{1.0, 0.0};
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(a[r * n + col]) > std::fabs(a[pivot * n + col])) pivot = r;
    }
    if (a[pivot * n + col] == 0.0) return {0.0, -INFINITY};
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
      out.sign = -out.sign;
    }
    const double p = a[col * n + col];
    if (p < 0) out.sign = -out.sign;
    out.log_abs += std::log(std::fabs(p));
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / p;
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
    }
  }
  return out;
}

// Central-difference Jacobian of a vector map, one coordinate at a time. Row-major out x in.
inline std::vector<double> jacobian(const std::function<std::vector<double>(const std::vector<double>&)>& f,
                                    const std::vector<double>& x, double h = 1e-5) {
  const std::size_t n = x.size();
  std::vector<double> j;
  std::size_t m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> xp = x;
    std::vector<double> xm = x;
    xp[i] += h;
    xm[i] -= h;
    const std::vector<double> fp = f(xp);
    const std::vector<double> fm = f(xm);
    if (i == 0) {
      m = fp.size();
      j.assign(m * n, 0.0);
    }
    for (std::size_t r = 0; r < m; ++r) j[r * n + i] = (fp[r] - fm[r]) / (2 * h);
  }
  return j;
}

// Standard normal log density summed over a vector.
inline double normal_log_density(const std::vector<double>& z) {
  double s = 0.0;
  for (double v : z) s += -0.5 * v * v - 0.5 * std::log(2 * std::numbers::pi);
  return s;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace oracle
