#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motionpred/model.hpp"
#include "motionpred/types.hpp"
#include "motionpred/uncertainty.hpp"

namespace motionpred {

// Nearest frame index (1-based horizon) for a milestone in milliseconds.
Index milestone_frame(double milestone_ms, double frame_rate_hz);

// Mean over frames 1..horizon and joints of the Euclidean distance between
// predicted and true joint positions, meters.
double mpjpe(const Mat& pred_frames, const Mat& truth_frames,
             Index horizon_frames);

enum class EvalMethod { kZeroVel, kFmp, kFmpUmd, kFmpUmdOms };

const char* method_name(EvalMethod method);
EvalMethod parse_method(const std::string& name);

struct EvalOptions {
  std::vector<EvalMethod> methods = {EvalMethod::kZeroVel, EvalMethod::kFmp,
                                     EvalMethod::kFmpUmd,
                                     EvalMethod::kFmpUmdOms};
  std::vector<double> milestones_ms = {400, 800, 1200, 1600, 2000};
  Index n_samples = 30;
  std::uint64_t seed = 0;
  double lambda = 1.28;
  double e_max = 0.20;
  // Trustworthy-length truncation for the selector method. Off by default:
  // the selector then scores the optimal member over the full horizon, and a
  // milestone cell only averages windows whose trustworthy length covers it
  // when this is on.
  bool truncate = false;
  // Per-window ensemble score: MPJPE of the mean prediction (default) or the
  // mean of the member MPJPEs.
  bool mean_of_errors = false;
  std::string train_label;  // empty: use the checkpoint's label
  std::string test_label;
};

struct MethodRow {
  std::string method;
  double det_pct = 0.0;           // rejected / total * 100
  std::vector<double> mpjpe_ms;   // per milestone; NaN marks an absent cell
  Index accepted = 0;
  Index rejected = 0;
};

struct EvalReport {
  std::vector<MethodRow> rows;
  std::vector<double> milestones_ms;
  std::string train_label;
  std::string test_label;
  double frame_rate_hz = 25.0;
};

// Shared per-window ensembles (window w seeds at options.seed + w*n_samples);
// gated methods exclude windows with scalar_eu >= threshold and average MPJPE
// over accepted windows only.
EvalReport evaluate(const Checkpoint& ckpt,
                    const std::vector<WindowPair>& test_windows,
                    const DetectorCalibration* calibration,
                    double frame_rate_hz, const EvalOptions& options);

struct RenderedReport {
  std::string text;  // fixed-width table
  std::string csv;   // method,train_set,test_set,det_pct,mpjpe_*,accepted,rejected
};

// 3 decimal places for MPJPE, 2 for the detection rate, "-" for absent cells.
RenderedReport report_render(const EvalReport& report);

}  // namespace motionpred
