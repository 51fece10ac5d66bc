#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <span>

namespace relimine::testing {

// Student t density.
inline double t_density(double x, double df) {
  const double c = std::lgamma((df + 1) / 2) - std::lgamma(df / 2) - 0.5 * std::log(df * M_PI);
  return std::exp(c - (df + 1) / 2 * std::log1p(x * x / df));
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                               double fb, double whole, double tol, int depth) {
  const double m = (a + b) / 2, lm = (a + m) / 2, rm = (m + b) / 2;
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::fabs(left + right - whole) <= 15 * tol)
    return left + right + (left + right - whole) / 15;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-13) {
  const double fa = f(a), fb = f(b), fm = f((a + b) / 2);
  return adaptive_simpson(f, a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol, 60);
}

// Two-tailed p = 1 - 2 * integral of the density over [0, |t|], integrated
// piecewise on unit intervals for accuracy.
inline double two_tailed_p(double t, double df) {
  const double x = std::fabs(t);
  auto f = [df](double u) { return t_density(u, df); };
  double area = 0;
  for (double lo = 0; lo < x; lo += 1.0) area += integrate(f, lo, std::min(lo + 1.0, x));
  return std::max(0.0, 1.0 - 2.0 * area);
}

struct WelchReference {
  double t, df, p;
};

inline WelchReference welch_reference(std::span<const double> a, std::span<const double> b) {
  auto mean = [](std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  auto var = [&](std::span<const double> v) {
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / (v.size() - 1);
  };
  const double va = var(a) / a.size(), vb = var(b) / b.size();
  const double t = (mean(a) - mean(b)) / std::sqrt(va + vb);
  const double df = (va + vb) * (va + vb) / (va * va / (a.size() - 1) + vb * vb / (b.size() - 1));
  return {t, df, two_tailed_p(t, df)};
}

inline WelchReference student_reference(std::span<const double> a, std::span<const double> b) {
  auto mean = [](std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  double ss = 0;
  for (double x : a) ss += (x - mean(a)) * (x - mean(a));
  for (double x : b) ss += (x - mean(b)) * (x - mean(b));
  const double df = static_cast<double>(a.size() + b.size() - 2);
  const double sp2 = ss / df;
  const double t = (mean(a) - mean(b)) / std::sqrt(sp2 * (1.0 / a.size() + 1.0 / b.size()));
  return {t, df, two_tailed_p(t, df)};
}

}  // namespace relimine::testing
