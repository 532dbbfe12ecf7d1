#include "motionpred/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace motionpred {

EpistemicReport epistemic_variance(const McEnsemble& ensemble) {
  const Index n = static_cast<Index>(ensemble.members.size());
  if (n < 2)
    throw std::invalid_argument("epistemic_variance: need at least 2 members");
  const Index rows = ensemble.members[0].mean_frames.rows();
  const Index cols = ensemble.members[0].mean_frames.cols();
  for (const auto& m : ensemble.members)
    if (m.mean_frames.rows() != rows || m.mean_frames.cols() != cols)
      throw std::invalid_argument("epistemic_variance: member shape mismatch");

  Mat mean = Mat::Zero(rows, cols);
  for (const auto& m : ensemble.members) mean += m.mean_frames;
  mean /= static_cast<double>(n);

  Mat var = Mat::Zero(rows, cols);
  for (const auto& m : ensemble.members)
    var += (m.mean_frames - mean).cwiseAbs2();
  var /= static_cast<double>(n);

  var = var.unaryExpr([](double v) {
    return (v < 0.0 && v > -1e-12) ? 0.0 : v;
  });

  EpistemicReport report;
  report.scalar_eu = var.mean();
  report.elementwise_variance = std::move(var);
  return report;
}

double threshold_order_statistic(std::vector<double> eu_values,
                                 double quantile) {
  if (eu_values.empty())
    throw std::invalid_argument("threshold: empty calibration set");
  if (!(quantile > 0.0) || quantile > 1.0)
    throw std::invalid_argument("threshold: quantile must be in (0, 1]");
  const Index m = static_cast<Index>(eu_values.size());
  const Index k = std::clamp<Index>(
      static_cast<Index>(
          std::ceil(quantile * static_cast<double>(m) - 1e-9)),
      1, m);
  std::nth_element(eu_values.begin(), eu_values.begin() + (k - 1),
                   eu_values.end());
  return eu_values[k - 1];
}

DetectorCalibration calibrate_threshold(const Checkpoint& ckpt,
                                        const std::vector<Mat>& observed_windows,
                                        Index n_samples, double quantile,
                                        std::uint64_t base_seed) {
  if (observed_windows.size() < 2)
    throw std::invalid_argument(
        "calibrate_threshold: need at least 2 calibration windows");
  std::vector<double> eu;
  eu.reserve(observed_windows.size());
  for (std::size_t w = 0; w < observed_windows.size(); ++w) {
    const McEnsemble ens = sample_ensemble_meters(
        ckpt.params, ckpt.stats, observed_windows[w], n_samples, ckpt.t_f,
        base_seed + static_cast<std::uint64_t>(w) *
                        static_cast<std::uint64_t>(n_samples));
    eu.push_back(epistemic_variance(ens).scalar_eu);
  }
  DetectorCalibration calib;
  calib.quantile = quantile;
  calib.calibration_size = static_cast<Index>(eu.size());
  calib.threshold = threshold_order_statistic(std::move(eu), quantile);
  return calib;
}

bool detect_unseen(const EpistemicReport& report,
                   const DetectorCalibration& calib) {
  return report.scalar_eu < calib.threshold;
}

Index select_optimal(const McEnsemble& ensemble) {
  if (ensemble.members.empty())
    throw std::invalid_argument("select_optimal: empty ensemble");
  Index best = 0;
  double best_sum = ensemble.members[0].sigma.sum();
  for (Index i = 1; i < static_cast<Index>(ensemble.members.size()); ++i) {
    const double s = ensemble.members[i].sigma.sum();
    if (s < best_sum) {
      best_sum = s;
      best = i;
    }
  }
  return best;
}

Index trustworthy_length(const Mat& sigma, double lambda, double e_max) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("trustworthy_length: lambda must be > 0");
  if (!(e_max > 0.0))
    throw std::invalid_argument("trustworthy_length: e_max must be > 0");
  Index len = 0;
  for (Index t = 0; t < sigma.rows(); ++t) {
    if (lambda * sigma.row(t).maxCoeff() < e_max)
      ++len;
    else
      break;
  }
  return len;
}

SelectionResult select_and_truncate(const McEnsemble& ensemble, double lambda,
                                    double e_max) {
  SelectionResult result;
  result.optimal_index = select_optimal(ensemble);
  const ProbabilisticPrediction& best =
      ensemble.members[result.optimal_index];
  result.trustworthy_len = trustworthy_length(best.sigma, lambda, e_max);
  result.mean_frames = best.mean_frames.topRows(result.trustworthy_len);
  result.sigma = best.sigma.topRows(result.trustworthy_len);
  return result;
}

std::string format_calibration(const DetectorCalibration& calib) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "threshold=%.17g quantile=%.17g M=%lld model_hash=%s\n",
                calib.threshold, calib.quantile,
                static_cast<long long>(calib.calibration_size),
                calib.model_hash.c_str());
  return buf;
}

void save_calibration(const DetectorCalibration& calib,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << format_calibration(calib);
  if (!out) throw std::runtime_error(path + ": write failed");
}

DetectorCalibration load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open calibration file");
  std::string line;
  std::getline(in, line);
  std::istringstream tokens(line);
  DetectorCalibration calib;
  bool got_threshold = false, got_quantile = false, got_m = false,
       got_hash = false;
  std::string tok;
  while (tokens >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ": malformed calibration token '" + tok +
                               "'");
    const std::string key = tok.substr(0, eq);
    const std::string value = tok.substr(eq + 1);
    try {
      if (key == "threshold") {
        calib.threshold = std::stod(value);
        got_threshold = true;
      } else if (key == "quantile") {
        calib.quantile = std::stod(value);
        got_quantile = true;
      } else if (key == "M") {
        calib.calibration_size = static_cast<Index>(std::stoll(value));
        got_m = true;
      } else if (key == "model_hash") {
        calib.model_hash = value;
        got_hash = true;
      } else {
        throw std::runtime_error(path + ": unknown calibration key '" + key +
                                 "'");
      }
    } catch (const std::invalid_argument&) {
      throw std::runtime_error(path + ": non-numeric value for '" + key + "'");
    }
  }
  if (!got_threshold || !got_quantile || !got_m || !got_hash)
    throw std::runtime_error(path + ": calibration file missing fields");
  if (calib.threshold < 0.0 || !(calib.quantile > 0.0) || calib.quantile > 1.0 ||
      calib.calibration_size < 1)
    throw std::runtime_error(path + ": calibration values out of range");
  return calib;
}

}  // namespace motionpred
