#pragma once

namespace motionpred {

// Probability that a point with isotropic Gaussian position uncertainty
// N(mu, sigma^2 I_3) lands inside a sphere of the given radius whose center
// sits `distance` away from mu. Closed form via the 3-DOF noncentral
// chi-square radial CDF; absolute error stays below 1e-6 over the full
// parameter range. sigma == 0 degenerates to the indicator
// [distance <= radius], radius == 0 to probability 0.
double sphere_capture_probability(double distance, double sigma,
                                  double radius);

}  // namespace motionpred
