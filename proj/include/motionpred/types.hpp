#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace motionpred {

template <class Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using RowVecX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Mat = MatX<double>;
using Vec = VecX<double>;
using RowVec = RowVecX<double>;
using Vec3 = Eigen::Vector3d;
using Index = Eigen::Index;

// One skeleton frame: 3J Cartesian coordinates in meters, joint-major order
// (x1 y1 z1 x2 y2 z2 ...).
using Pose = RowVec;

// A timed sequence of poses. Frames are rows of a F x 3J matrix so that
// per-coordinate statistics and windowing stay plain Eigen expressions.
struct MotionSequence {
  Mat frames;
  double frame_rate_hz = 25.0;
  std::string label;

  Index num_frames() const { return frames.rows(); }
  Index num_joints() const { return frames.cols() / 3; }
};

// Contiguous observed/future slice pair; future starts one frame after
// observed ends.
struct WindowPair {
  MotionSequence observed;
  MotionSequence future;
};

// Per-coordinate standardization fitted on training data.
struct NormalizationStats {
  RowVec mean;
  RowVec scale;
};

inline Eigen::Block<const Mat, 1, 3> joint_of(const Mat& frames, Index frame,
                                              Index joint) {
  return frames.block<1, 3>(frame, 3 * joint);
}

}  // namespace motionpred
