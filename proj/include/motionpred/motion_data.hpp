#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motionpred/types.hpp"

namespace motionpred {

// Text motion container:
//   line 1: MOTION v1
//   line 2: joints=<J> rate=<hz> frames=<F> label=<tag>
//   then F lines of 3*J coordinates, joint-major (x1 y1 z1 x2 ...).
MotionSequence load_motion_file(const std::string& path);
std::string format_motion_file(const MotionSequence& seq);
void save_motion_file(const MotionSequence& seq, const std::string& path);

// All contiguous (t_p, t_f) pairs at offsets 0, stride, 2*stride, ... that fit
// entirely in seq, ascending by offset. A sequence shorter than t_p + t_f
// yields an empty list.
std::vector<WindowPair> window_dataset(const MotionSequence& seq, Index t_p,
                                       Index t_f, Index stride);

// Per-coordinate mean and population standard deviation over every frame of
// the training set; zero deviations are replaced by 1.
NormalizationStats fit_normalization(const std::vector<MotionSequence>& train);

Mat normalize(const Mat& frames, const NormalizationStats& stats);
Mat denormalize(const Mat& frames, const NormalizationStats& stats);
MotionSequence normalize(const MotionSequence& seq,
                         const NormalizationStats& stats);
MotionSequence denormalize(const MotionSequence& seq,
                           const NormalizationStats& stats);
WindowPair normalize(const WindowPair& window, const NormalizationStats& stats);

// t_f copies of the final observed frame.
MotionSequence zero_velocity_baseline(const MotionSequence& observed,
                                      Index t_f);

enum class SynthFamily { A, B };

SynthFamily parse_family(const std::string& name);
std::string family_name(SynthFamily family);

// Deterministic synthetic skeleton motion. Family A is a smooth limb-swing
// pattern with per-seed phase/amplitude jitter; family B bobs the whole chain
// vertically at a much lower base frequency with a fast traveling-wave tremor
// coupling the joints, so the two families are visually and statistically
// distinct. Output depends only on (family, seed, n_frames).
MotionSequence synth_generate(SynthFamily family, std::uint64_t seed,
                              Index n_frames);

inline constexpr Index kSynthJoints = 17;
inline constexpr double kSynthFrameRateHz = 25.0;

}  // namespace motionpred
