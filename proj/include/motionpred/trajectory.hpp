#pragma once

#include <string>
#include <vector>

#include "motionpred/types.hpp"

namespace motionpred {

// Planner path, one 3-D waypoint per row. The first and last rows are pinned:
// optimization never touches them.
using Trajectory = Mat;

// Evenly spaced waypoints from start to goal, endpoints inclusive. steps >= 2.
Trajectory straight_line(const Vec3& start, const Vec3& goal, Index steps);

// Time-indexed set of isotropic position Gaussians, one per joint per frame.
// Queries past the last frame reuse that frame with sigma inflated by
// growth^(steps beyond), encoding rising ignorance; static scenes use
// growth = 1 so their obstacles stay put.
struct UncertaintyField {
  Mat mean_frames;  // T x 3J, meters
  Mat sigma;        // T x J, strictly positive, meters
  double safety_radius = 0.1;
  double growth = 1.05;
};

UncertaintyField field_from_prediction(const Mat& mean_frames,
                                       const Mat& sigma, double safety_radius,
                                       double growth = 1.05);

// Time-invariant scene of free-floating Gaussians, one per row of centers.
UncertaintyField field_from_static(const Mat& centers, const Vec& sigmas,
                                   double safety_radius);

// max over joints j of P(||point - X_j|| <= safety_radius) with
// X_j ~ Normal(mean at frame t, sigma^2 I_3). t is clamped into [0, T-1];
// beyond the top the growth inflation applies.
double field_value(const UncertaintyField& field, const Vec3& point, Index t);

// Linear interpolation of means and sigmas onto `steps` frames, so waypoint k
// of a steps-long trajectory lines up with field frame k. Cost and profile
// functions call this when the two lengths differ.
UncertaintyField resample_field(const UncertaintyField& field, Index steps);

struct PlanConfig {
  double w_obstacle = 1.0;
  double w_smoothness = 0.5;
  double w_goal = 0.0;
  double step_size = 0.05;
  Index max_iters = 100;
  double tolerance = 1e-6;  // relative cost improvement that counts as done
  double safety_radius = 0.1;
  double collision_threshold = 1.0;
};

struct CostBreakdown {
  double obstacle = 0.0;    // sum over waypoints of field_value * local length
  double smoothness = 0.0;  // sum of squared second differences
  double goal = 0.0;        // identically zero while endpoints stay pinned
  double total = 0.0;
};

CostBreakdown plan_cost(const Trajectory& traj, const UncertaintyField& field,
                        const PlanConfig& config);

struct IterationRecord {
  Index iter = 0;  // 0 records the starting cost, before any step
  double cost = 0.0;
  double obstacle = 0.0;
  double smoothness = 0.0;
  double step = 0.0;  // accepted step length, 0 for the iter-0 record
};

struct PlanResult {
  Trajectory trajectory;
  std::vector<IterationRecord> log;  // front() is the input cost; totals
                                     // non-increasing by the acceptance rule
};

// Gradient descent on the interior waypoints: analytic smoothness gradient,
// central-difference obstacle gradient (h = 1e-4 m, only the local cost terms
// re-evaluated), backtracking halving from step_size down to 1e-6 with steps
// accepted only on a cost decrease. Stops at max_iters, when no scale of the
// step improves, or when the relative improvement drops below tolerance. A
// non-improving start returns the input unchanged with only the iter-0 record.
PlanResult optimize(const Trajectory& traj, const UncertaintyField& field,
                    const PlanConfig& config);

struct CollisionProfile {
  std::vector<double> values;  // field_value at each waypoint/time pair
  double max_value = 0.0;
};

CollisionProfile collision_probability_profile(const Trajectory& traj,
                                               const UncertaintyField& field);

// Text scene description. Line format, '#' comments:
//   SCENE v1
//   start x y z          (required)
//   goal x y z           (required)
//   steps N              w_obstacle V      w_smoothness V    w_goal V
//   step_size V          max_iters N       tolerance V       safety_radius V
//   collision_threshold V                  growth V
//   gaussian x y z sigma (repeatable, static obstacle)
//   prediction PATH      (CSV of a predicted trajectory; excludes gaussian)
struct Scene {
  Vec3 start = Vec3::Zero();
  Vec3 goal = Vec3::Zero();
  Index steps = 40;
  PlanConfig config;
  double growth = 1.05;         // only used for prediction-backed fields
  Mat gaussian_centers;         // G x 3
  Vec gaussian_sigmas;          // G
  std::string prediction_path;  // empty for static scenes
};

Scene parse_scene(const std::string& text);
std::string format_scene(const Scene& scene);
Scene load_scene(const std::string& path);

}  // namespace motionpred
