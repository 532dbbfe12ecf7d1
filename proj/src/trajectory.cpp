#include "motionpred/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "motionpred/radial.hpp"

namespace motionpred {

namespace {

constexpr double kFdStep = 1e-4;
constexpr double kMinStep = 1e-6;

void check_field(const UncertaintyField& field, const char* where) {
  const Index frames = field.mean_frames.rows();
  if (frames < 1 || field.sigma.rows() != frames ||
      field.mean_frames.cols() != 3 * field.sigma.cols())
    throw std::invalid_argument(std::string(where) + ": malformed field");
  if (field.sigma.size() > 0 && !(field.sigma.minCoeff() > 0.0))
    throw std::invalid_argument(std::string(where) +
                                ": sigma entries must be > 0");
  if (!(field.safety_radius >= 0.0) || !(field.growth > 0.0))
    throw std::invalid_argument(std::string(where) +
                                ": bad safety radius or growth");
}

void check_trajectory(const Trajectory& traj, const char* where) {
  if (traj.rows() < 3 || traj.cols() != 3)
    throw std::invalid_argument(std::string(where) +
                                ": trajectory needs >= 3 waypoints of 3 "
                                "coordinates");
}

void check_config(const PlanConfig& config, const char* where) {
  if (!(config.w_obstacle >= 0.0) || !(config.w_smoothness >= 0.0) ||
      !(config.w_goal >= 0.0))
    throw std::invalid_argument(std::string(where) + ": weights must be >= 0");
  if (!(config.step_size > 0.0))
    throw std::invalid_argument(std::string(where) + ": step size must be > 0");
  if (config.max_iters < 0 || !(config.tolerance >= 0.0))
    throw std::invalid_argument(std::string(where) +
                                ": bad iteration limit or tolerance");
}

// Half the length of the adjacent segments; single half-segment at the ends.
double local_length(const Trajectory& traj, Index k) {
  const Index last = traj.rows() - 1;
  double len = 0.0;
  if (k > 0) len += 0.5 * (traj.row(k) - traj.row(k - 1)).norm();
  if (k < last) len += 0.5 * (traj.row(k + 1) - traj.row(k)).norm();
  return len;
}

double waypoint_obstacle(const Trajectory& traj, const UncertaintyField& field,
                         Index k) {
  const Vec3 p = traj.row(k).transpose();
  return field_value(field, p, k) * local_length(traj, k);
}

// Obstacle terms that move when waypoint i moves: its own field value plus
// the local lengths of steps i-1, i, i+1.
double local_obstacle(const Trajectory& traj, const UncertaintyField& field,
                      Index i) {
  double sum = 0.0;
  for (Index k = std::max<Index>(i - 1, 0);
       k <= std::min<Index>(i + 1, traj.rows() - 1); ++k)
    sum += waypoint_obstacle(traj, field, k);
  return sum;
}

CostBreakdown cost_aligned(const Trajectory& traj,
                           const UncertaintyField& field,
                           const PlanConfig& config) {
  CostBreakdown out;
  for (Index k = 0; k < traj.rows(); ++k)
    out.obstacle += waypoint_obstacle(traj, field, k);
  for (Index i = 1; i + 1 < traj.rows(); ++i)
    out.smoothness +=
        (traj.row(i - 1) - 2.0 * traj.row(i) + traj.row(i + 1)).squaredNorm();
  out.total = config.w_obstacle * out.obstacle +
              config.w_smoothness * out.smoothness + config.w_goal * out.goal;
  return out;
}

}  // namespace

Trajectory straight_line(const Vec3& start, const Vec3& goal, Index steps) {
  if (steps < 2)
    throw std::invalid_argument("straight_line: need at least 2 waypoints");
  Trajectory traj(steps, 3);
  for (Index k = 0; k < steps; ++k) {
    const double s =
        static_cast<double>(k) / static_cast<double>(steps - 1);
    traj.row(k) = ((1.0 - s) * start + s * goal).transpose();
  }
  // Exact endpoints, no interpolation residue.
  traj.row(0) = start.transpose();
  traj.row(steps - 1) = goal.transpose();
  return traj;
}

UncertaintyField field_from_prediction(const Mat& mean_frames,
                                       const Mat& sigma, double safety_radius,
                                       double growth) {
  UncertaintyField field{mean_frames, sigma, safety_radius, growth};
  check_field(field, "field_from_prediction");
  return field;
}

UncertaintyField field_from_static(const Mat& centers, const Vec& sigmas,
                                   double safety_radius) {
  if ((centers.rows() > 0 && centers.cols() != 3) ||
      sigmas.size() != centers.rows())
    throw std::invalid_argument(
        "field_from_static: centers must be G x 3 with one sigma each");
  UncertaintyField field;
  field.mean_frames.resize(1, 3 * centers.rows());
  field.sigma.resize(1, centers.rows());
  for (Index g = 0; g < centers.rows(); ++g) {
    field.mean_frames.block(0, 3 * g, 1, 3) = centers.row(g);
    field.sigma(0, g) = sigmas(g);
  }
  field.safety_radius = safety_radius;
  field.growth = 1.0;
  check_field(field, "field_from_static");
  return field;
}

double field_value(const UncertaintyField& field, const Vec3& point, Index t) {
  check_field(field, "field_value");
  const Index frames = field.mean_frames.rows();
  const Index j_n = field.sigma.cols();
  const Index frame = std::clamp<Index>(t, 0, frames - 1);
  const double inflate =
      t > frames - 1
          ? std::pow(field.growth, static_cast<double>(t - (frames - 1)))
          : 1.0;
  double best = 0.0;
  for (Index j = 0; j < j_n; ++j) {
    const double dist =
        (point.transpose() - field.mean_frames.row(frame).segment(3 * j, 3))
            .norm();
    best = std::max(best,
                    sphere_capture_probability(dist,
                                               field.sigma(frame, j) * inflate,
                                               field.safety_radius));
  }
  return best;
}

UncertaintyField resample_field(const UncertaintyField& field, Index steps) {
  check_field(field, "resample_field");
  if (steps < 1)
    throw std::invalid_argument("resample_field: steps must be >= 1");
  const Index frames = field.mean_frames.rows();
  UncertaintyField out;
  out.safety_radius = field.safety_radius;
  out.growth = field.growth;
  out.mean_frames.resize(steps, field.mean_frames.cols());
  out.sigma.resize(steps, field.sigma.cols());
  for (Index k = 0; k < steps; ++k) {
    double u = 0.0;
    if (frames > 1 && steps > 1)
      u = static_cast<double>(k) * static_cast<double>(frames - 1) /
          static_cast<double>(steps - 1);
    const Index i0 = std::min<Index>(static_cast<Index>(u), frames - 1);
    const Index i1 = std::min<Index>(i0 + 1, frames - 1);
    const double w = u - static_cast<double>(i0);
    out.mean_frames.row(k) =
        (1.0 - w) * field.mean_frames.row(i0) + w * field.mean_frames.row(i1);
    out.sigma.row(k) = (1.0 - w) * field.sigma.row(i0) + w * field.sigma.row(i1);
  }
  return out;
}

CostBreakdown plan_cost(const Trajectory& traj, const UncertaintyField& field,
                        const PlanConfig& config) {
  check_trajectory(traj, "plan_cost");
  check_config(config, "plan_cost");
  check_field(field, "plan_cost");
  if (field.mean_frames.rows() != traj.rows())
    return cost_aligned(traj, resample_field(field, traj.rows()), config);
  return cost_aligned(traj, field, config);
}

PlanResult optimize(const Trajectory& traj, const UncertaintyField& field,
                    const PlanConfig& config) {
  check_trajectory(traj, "optimize");
  check_config(config, "optimize");
  check_field(field, "optimize");
  const Index steps = traj.rows();
  const UncertaintyField aligned = field.mean_frames.rows() != steps
                                       ? resample_field(field, steps)
                                       : field;

  PlanResult result;
  result.trajectory = traj;
  CostBreakdown best = cost_aligned(result.trajectory, aligned, config);
  result.log.push_back({0, best.total, best.obstacle, best.smoothness, 0.0});

  auto second_diff = [&](const Trajectory& t, Index j) {
    Eigen::RowVector3d d = Eigen::RowVector3d::Zero();
    if (j >= 1 && j + 1 < steps)
      d = t.row(j - 1) - 2.0 * t.row(j) + t.row(j + 1);
    return d;
  };

  Trajectory work = result.trajectory;
  for (Index it = 1; it <= config.max_iters; ++it) {
    Mat grad = Mat::Zero(steps, 3);
    for (Index i = 1; i + 1 < steps; ++i) {
      grad.row(i) += config.w_smoothness * 2.0 *
                     (second_diff(result.trajectory, i - 1) -
                      2.0 * second_diff(result.trajectory, i) +
                      second_diff(result.trajectory, i + 1));
      if (config.w_obstacle > 0.0) {
        for (Index c = 0; c < 3; ++c) {
          const double saved = work(i, c);
          work(i, c) = saved + kFdStep;
          const double up = local_obstacle(work, aligned, i);
          work(i, c) = saved - kFdStep;
          const double down = local_obstacle(work, aligned, i);
          work(i, c) = saved;
          grad(i, c) += config.w_obstacle * (up - down) / (2.0 * kFdStep);
        }
      }
    }

    bool accepted = false;
    for (double alpha = config.step_size; alpha >= kMinStep; alpha *= 0.5) {
      Trajectory cand = result.trajectory;
      cand.middleRows(1, steps - 2) -= alpha * grad.middleRows(1, steps - 2);
      const CostBreakdown cb = cost_aligned(cand, aligned, config);
      if (cb.total < best.total) {
        const double drop = best.total - cb.total;
        result.trajectory = std::move(cand);
        work = result.trajectory;
        best = cb;
        result.log.push_back({it, cb.total, cb.obstacle, cb.smoothness, alpha});
        accepted = true;
        if (drop < config.tolerance * std::max(best.total + drop, 1e-12))
          return result;
        break;
      }
    }
    if (!accepted) break;
  }
  return result;
}

CollisionProfile collision_probability_profile(const Trajectory& traj,
                                               const UncertaintyField& field) {
  check_trajectory(traj, "collision_probability_profile");
  check_field(field, "collision_probability_profile");
  const UncertaintyField aligned = field.mean_frames.rows() != traj.rows()
                                       ? resample_field(field, traj.rows())
                                       : field;
  CollisionProfile profile;
  profile.values.reserve(traj.rows());
  for (Index k = 0; k < traj.rows(); ++k) {
    const Vec3 p = traj.row(k).transpose();
    profile.values.push_back(field_value(aligned, p, k));
    profile.max_value = std::max(profile.max_value, profile.values.back());
  }
  return profile;
}

namespace {

double parse_double(std::istringstream& iss, const std::string& key) {
  double v = 0.0;
  if (!(iss >> v) || !std::isfinite(v))
    throw std::invalid_argument("scene: bad number for '" + key + "'");
  return v;
}

Index parse_index(std::istringstream& iss, const std::string& key) {
  long long v = 0;
  if (!(iss >> v))
    throw std::invalid_argument("scene: bad integer for '" + key + "'");
  return static_cast<Index>(v);
}

Vec3 parse_vec3(std::istringstream& iss, const std::string& key) {
  Vec3 v;
  for (int c = 0; c < 3; ++c) v(c) = parse_double(iss, key);
  return v;
}

}  // namespace

Scene parse_scene(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  bool saw_header = false, saw_start = false, saw_goal = false;
  Scene scene;
  std::vector<Vec3> centers;
  std::vector<double> sigmas;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream iss(line);
    std::string key;
    if (!(iss >> key)) continue;
    if (!saw_header) {
      std::string version;
      if (key != "SCENE" || !(iss >> version) || version != "v1")
        throw std::invalid_argument("scene: expected 'SCENE v1' header");
      saw_header = true;
      continue;
    }
    if (key == "start") {
      scene.start = parse_vec3(iss, key);
      saw_start = true;
    } else if (key == "goal") {
      scene.goal = parse_vec3(iss, key);
      saw_goal = true;
    } else if (key == "steps") {
      scene.steps = parse_index(iss, key);
    } else if (key == "w_obstacle") {
      scene.config.w_obstacle = parse_double(iss, key);
    } else if (key == "w_smoothness") {
      scene.config.w_smoothness = parse_double(iss, key);
    } else if (key == "w_goal") {
      scene.config.w_goal = parse_double(iss, key);
    } else if (key == "step_size") {
      scene.config.step_size = parse_double(iss, key);
    } else if (key == "max_iters") {
      scene.config.max_iters = parse_index(iss, key);
    } else if (key == "tolerance") {
      scene.config.tolerance = parse_double(iss, key);
    } else if (key == "safety_radius") {
      scene.config.safety_radius = parse_double(iss, key);
    } else if (key == "collision_threshold") {
      scene.config.collision_threshold = parse_double(iss, key);
    } else if (key == "growth") {
      scene.growth = parse_double(iss, key);
    } else if (key == "gaussian") {
      centers.push_back(parse_vec3(iss, key));
      const double s = parse_double(iss, key);
      if (!(s > 0.0))
        throw std::invalid_argument("scene: gaussian sigma must be > 0");
      sigmas.push_back(s);
    } else if (key == "prediction") {
      if (!(iss >> scene.prediction_path))
        throw std::invalid_argument("scene: missing prediction path");
    } else {
      throw std::invalid_argument("scene: unknown key '" + key + "'");
    }
    std::string extra;
    if (iss >> extra)
      throw std::invalid_argument("scene: trailing tokens after '" + key + "'");
  }
  if (!saw_header)
    throw std::invalid_argument("scene: expected 'SCENE v1' header");
  if (!saw_start || !saw_goal)
    throw std::invalid_argument("scene: 'start' and 'goal' are required");
  if (scene.steps < 3)
    throw std::invalid_argument("scene: steps must be >= 3");
  if (!centers.empty() && !scene.prediction_path.empty())
    throw std::invalid_argument(
        "scene: 'gaussian' and 'prediction' are mutually exclusive");
  if (!(scene.config.safety_radius > 0.0))
    throw std::invalid_argument("scene: safety_radius must be > 0");
  if (!(scene.growth > 0.0))
    throw std::invalid_argument("scene: growth must be > 0");
  check_config(scene.config, "scene");
  scene.gaussian_centers.resize(static_cast<Index>(centers.size()), 3);
  scene.gaussian_sigmas.resize(static_cast<Index>(sigmas.size()));
  for (std::size_t g = 0; g < centers.size(); ++g) {
    scene.gaussian_centers.row(static_cast<Index>(g)) = centers[g].transpose();
    scene.gaussian_sigmas(static_cast<Index>(g)) = sigmas[g];
  }
  return scene;
}

std::string format_scene(const Scene& scene) {
  char buf[256];
  std::string out = "SCENE v1\n";
  auto emit3 = [&](const char* key, const Vec3& v) {
    std::snprintf(buf, sizeof(buf), "%s %.17g %.17g %.17g\n", key, v(0), v(1),
                  v(2));
    out += buf;
  };
  auto emit1 = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s %.17g\n", key, v);
    out += buf;
  };
  emit3("start", scene.start);
  emit3("goal", scene.goal);
  std::snprintf(buf, sizeof(buf), "steps %lld\n",
                static_cast<long long>(scene.steps));
  out += buf;
  emit1("w_obstacle", scene.config.w_obstacle);
  emit1("w_smoothness", scene.config.w_smoothness);
  emit1("w_goal", scene.config.w_goal);
  emit1("step_size", scene.config.step_size);
  std::snprintf(buf, sizeof(buf), "max_iters %lld\n",
                static_cast<long long>(scene.config.max_iters));
  out += buf;
  emit1("tolerance", scene.config.tolerance);
  emit1("safety_radius", scene.config.safety_radius);
  emit1("collision_threshold", scene.config.collision_threshold);
  emit1("growth", scene.growth);
  for (Index g = 0; g < scene.gaussian_centers.rows(); ++g) {
    std::snprintf(buf, sizeof(buf), "gaussian %.17g %.17g %.17g %.17g\n",
                  scene.gaussian_centers(g, 0), scene.gaussian_centers(g, 1),
                  scene.gaussian_centers(g, 2), scene.gaussian_sigmas(g));
    out += buf;
  }
  if (!scene.prediction_path.empty())
    out += "prediction " + scene.prediction_path + "\n";
  return out;
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_scene(buffer.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace motionpred
