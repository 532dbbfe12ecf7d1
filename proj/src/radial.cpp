#include "motionpred/radial.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace motionpred {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;
constexpr double kInvSqrt2 = 0.7071067811865476;

double phi_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double phi_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

}  // namespace

double sphere_capture_probability(double distance, double sigma,
                                  double radius) {
  if (!(distance >= 0.0))
    throw std::invalid_argument(
        "sphere_capture_probability: distance must be >= 0");
  if (!(sigma >= 0.0))
    throw std::invalid_argument(
        "sphere_capture_probability: sigma must be >= 0");
  if (!(radius >= 0.0))
    throw std::invalid_argument(
        "sphere_capture_probability: radius must be >= 0");
  if (radius == 0.0) return 0.0;
  if (sigma == 0.0) return distance <= radius ? 1.0 : 0.0;

  const double rho = radius / sigma;
  const double delta = distance / sigma;
  const double a = rho * delta;
  double f = phi_cdf(rho - delta) - phi_cdf(-rho - delta);
  if (a < 0.5) {
    // Difference of normal densities rewritten through sinh to dodge the
    // cancellation that the direct form suffers when rho*delta is small.
    const double sinhc = a < 1e-8 ? 1.0 + a * a / 6.0 : std::sinh(a) / a;
    f -= 2.0 * phi_pdf(rho) * std::exp(-0.5 * delta * delta) * rho * sinhc;
  } else {
    f += (phi_pdf(rho + delta) - phi_pdf(rho - delta)) / delta;
  }
  return std::clamp(f, 0.0, 1.0);
}

}  // namespace motionpred
