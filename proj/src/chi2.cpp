#include <cmath>
#include <limits>

#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>

#include "ddac/errors.hpp"
#include "ddac/inference.hpp"

namespace ddac::inference {

namespace {

void check_dof(double dof) {
  if (!(dof > 0.0) || !std::isfinite(dof)) fail(ErrorKind::InvalidArgument, fmt::format("chi2 dof must be positive, got {}", dof));
}

}  // namespace

double chi2_cdf(double x, double dof) {
  check_dof(dof);
  if (std::isnan(x)) fail(ErrorKind::InvalidArgument, "chi2_cdf of NaN");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_sf(double x, double dof) {
  check_dof(dof);
  if (std::isnan(x)) fail(ErrorKind::InvalidArgument, "chi2_sf of NaN");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

double chi2_quantile(double dof, double prob) {
  check_dof(dof);
  if (!(prob > 0.0 && prob < 1.0)) fail(ErrorKind::InvalidArgument, fmt::format("chi2 quantile needs 0 < prob < 1, got {}", prob));

  // Bracket: the cdf is increasing, so grow hi until it passes prob.
  double lo = 0.0;
  double hi = std::max(1.0, dof);
  while (chi2_cdf(hi, dof) < prob) {
    lo = hi;
    hi *= 2.0;
  }
  // Work on whichever tail is smaller so the target is resolved in relative terms.
  const bool upper = prob > 0.5;
  const double target = upper ? 1.0 - prob : prob;
  auto g = [&](double x) { return upper ? target - chi2_sf(x, dof) : chi2_cdf(x, dof) - target; };

  for (int it = 0; it < 400 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  double x = 0.5 * (lo + hi);
  // A couple of Newton polish steps on the density.
  for (int it = 0; it < 3; ++it) {
    const double density = boost::math::gamma_p_derivative(0.5 * dof, 0.5 * x) * 0.5;
    if (!(density > 0.0)) break;
    const double step = g(x) / density;
    const double next = x - step;
    if (!(next > lo && next < hi)) break;
    x = next;
  }
  return x;
}

}  // namespace ddac::inference
