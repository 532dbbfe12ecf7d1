#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motionpred/model.hpp"
#include "motionpred/predictor.hpp"
#include "motionpred/types.hpp"

namespace motionpred {

struct EpistemicReport {
  Mat elementwise_variance;  // T_f x 3J population variance across members
  double scalar_eu = 0.0;    // mean over all elements
};

// Population variance of the N member mean tensors, two-pass form. Rounding
// residue in (-1e-12, 0) is clamped to zero; anything more negative would be
// a bug and is left visible. Requires N >= 2 and identical member shapes.
EpistemicReport epistemic_variance(const McEnsemble& ensemble);

struct DetectorCalibration {
  double threshold = 0.0;
  double quantile = 0.95;
  Index calibration_size = 0;
  std::string model_hash;  // hex digest of the checkpoint file; set by the CLI
};

// k-th smallest of the EU values with k = ceil(quantile * M) clamped to
// [1, M] (1-based). The ceiling keeps the self-acceptance rate (k-1)/M within
// 1/M of the quantile for every M; an epsilon guard protects exact products
// like 0.95*20 from rounding up.
double threshold_order_statistic(std::vector<double> eu_values, double quantile);

// Meter-space scalar EU for every calibration window; window w draws its
// ensemble from mask seeds base_seed + w*n_samples onward. Needs >= 2 windows.
DetectorCalibration calibrate_threshold(const Checkpoint& ckpt,
                                        const std::vector<Mat>& observed_windows,
                                        Index n_samples, double quantile,
                                        std::uint64_t base_seed);

// True = accept: scalar_eu strictly below the calibrated threshold.
bool detect_unseen(const EpistemicReport& report,
                   const DetectorCalibration& calib);

// Index minimizing the summed sigma over all frames and joints; ties go to
// the lowest index.
Index select_optimal(const McEnsemble& ensemble);

// Largest prefix length T such that lambda * max_j sigma(t, j) < e_max for
// every frame t <= T. Returns 0 when the first frame already violates.
Index trustworthy_length(const Mat& sigma, double lambda, double e_max);

struct SelectionResult {
  Index optimal_index = 0;
  Index trustworthy_len = 0;
  Mat mean_frames;  // rows 1..trustworthy_len of the optimal member
  Mat sigma;
};

SelectionResult select_and_truncate(const McEnsemble& ensemble, double lambda,
                                    double e_max);

// Single-line text record:
// threshold=<float> quantile=<float> M=<int> model_hash=<hex>
std::string format_calibration(const DetectorCalibration& calib);
void save_calibration(const DetectorCalibration& calib, const std::string& path);
DetectorCalibration load_calibration(const std::string& path);

}  // namespace motionpred
