#include "motionpred/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "motionpred/motion_data.hpp"
#include "motionpred/predictor.hpp"

namespace motionpred {

namespace {

constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

std::string milestone_label(double ms) {
  char buf[64];
  if (std::abs(ms - std::llround(ms)) < 1e-9)
    std::snprintf(buf, sizeof(buf), "mpjpe_%lld",
                  static_cast<long long>(std::llround(ms)));
  else
    std::snprintf(buf, sizeof(buf), "mpjpe_%g", ms);
  return buf;
}

}  // namespace

Index milestone_frame(double milestone_ms, double frame_rate_hz) {
  if (!(milestone_ms > 0.0))
    throw std::invalid_argument("milestone_frame: milestone must be > 0 ms");
  if (!(frame_rate_hz > 0.0))
    throw std::invalid_argument("milestone_frame: frame rate must be > 0");
  return static_cast<Index>(std::llround(milestone_ms / 1000.0 * frame_rate_hz));
}

double mpjpe(const Mat& pred_frames, const Mat& truth_frames,
             Index horizon_frames) {
  if (horizon_frames < 1)
    throw std::invalid_argument("mpjpe: horizon must be >= 1 frame");
  if (pred_frames.rows() < horizon_frames ||
      truth_frames.rows() < horizon_frames)
    throw std::invalid_argument("mpjpe: horizon exceeds a sequence length");
  if (pred_frames.cols() != truth_frames.cols() || pred_frames.cols() % 3 != 0)
    throw std::invalid_argument("mpjpe: pose width mismatch");
  const Index j_n = pred_frames.cols() / 3;
  double sum = 0.0;
  for (Index t = 0; t < horizon_frames; ++t)
    for (Index j = 0; j < j_n; ++j)
      sum += (pred_frames.row(t).segment(3 * j, 3) -
              truth_frames.row(t).segment(3 * j, 3))
                 .norm();
  return sum / static_cast<double>(horizon_frames * j_n);
}

const char* method_name(EvalMethod method) {
  switch (method) {
    case EvalMethod::kZeroVel: return "zerovel";
    case EvalMethod::kFmp: return "fmp";
    case EvalMethod::kFmpUmd: return "fmp_umd";
    case EvalMethod::kFmpUmdOms: return "fmp_umd_oms";
  }
  throw std::logic_error("method_name: unreachable");
}

EvalMethod parse_method(const std::string& name) {
  if (name == "zerovel") return EvalMethod::kZeroVel;
  if (name == "fmp") return EvalMethod::kFmp;
  if (name == "fmp_umd") return EvalMethod::kFmpUmd;
  if (name == "fmp_umd_oms") return EvalMethod::kFmpUmdOms;
  throw std::invalid_argument("unknown evaluation method '" + name + "'");
}

EvalReport evaluate(const Checkpoint& ckpt,
                    const std::vector<WindowPair>& test_windows,
                    const DetectorCalibration* calibration,
                    double frame_rate_hz, const EvalOptions& options) {
  if (test_windows.empty())
    throw std::invalid_argument("evaluate: empty test set");
  if (options.methods.empty())
    throw std::invalid_argument("evaluate: no methods requested");
  if (options.milestones_ms.empty())
    throw std::invalid_argument("evaluate: no milestones configured");
  if (options.n_samples < 2)
    throw std::invalid_argument("evaluate: n_samples must be >= 2");

  const Index d = 3 * ckpt.params.num_joints;
  for (const WindowPair& w : test_windows)
    if (w.observed.frames.rows() != ckpt.t_p ||
        w.future.frames.rows() != ckpt.t_f ||
        w.observed.frames.cols() != d || w.future.frames.cols() != d)
      throw std::invalid_argument(
          "evaluate: test window dimensions mismatch the checkpoint");

  std::vector<Index> frames;
  for (double ms : options.milestones_ms) {
    const Index f = milestone_frame(ms, frame_rate_hz);
    if (f < 1 || f > ckpt.t_f)
      throw std::invalid_argument("evaluate: milestone " + std::to_string(ms) +
                                  " ms maps outside the prediction horizon");
    frames.push_back(f);
  }

  bool need_ensembles = false, need_gate = false;
  for (EvalMethod m : options.methods) {
    if (m != EvalMethod::kZeroVel) need_ensembles = true;
    if (m == EvalMethod::kFmpUmd || m == EvalMethod::kFmpUmdOms)
      need_gate = true;
  }
  if (need_gate && calibration == nullptr)
    throw std::invalid_argument("evaluate: gated methods need a calibration");

  const Index n_win = static_cast<Index>(test_windows.size());
  const Index n_ms = static_cast<Index>(frames.size());
  std::vector<McEnsemble> ensembles;
  std::vector<bool> accepted(n_win, true);
  if (need_ensembles) {
    ensembles.reserve(n_win);
    for (Index w = 0; w < n_win; ++w) {
      ensembles.push_back(sample_ensemble_meters(
          ckpt.params, ckpt.stats, test_windows[w].observed.frames,
          options.n_samples, ckpt.t_f,
          options.seed + static_cast<std::uint64_t>(w) *
                             static_cast<std::uint64_t>(options.n_samples)));
      if (need_gate)
        accepted[w] =
            detect_unseen(epistemic_variance(ensembles[w]), *calibration);
    }
  }

  auto ensemble_score = [&](Index w, Index horizon) {
    if (options.mean_of_errors) {
      double sum = 0.0;
      for (const auto& member : ensembles[w].members)
        sum += mpjpe(member.mean_frames, test_windows[w].future.frames, horizon);
      return sum / static_cast<double>(ensembles[w].members.size());
    }
    return mpjpe(ensemble_mean(ensembles[w]), test_windows[w].future.frames,
                 horizon);
  };

  EvalReport report;
  report.milestones_ms = options.milestones_ms;
  report.train_label =
      options.train_label.empty() ? ckpt.train_label : options.train_label;
  report.test_label = options.test_label;
  report.frame_rate_hz = frame_rate_hz;

  for (EvalMethod method : options.methods) {
    MethodRow row;
    row.method = method_name(method);
    row.mpjpe_ms.assign(n_ms, kAbsent);
    switch (method) {
      case EvalMethod::kZeroVel: {
        row.accepted = n_win;
        for (Index mi = 0; mi < n_ms; ++mi) {
          double sum = 0.0;
          for (Index w = 0; w < n_win; ++w)
            sum += mpjpe(
                zero_velocity_baseline(test_windows[w].observed, ckpt.t_f)
                    .frames,
                test_windows[w].future.frames, frames[mi]);
          row.mpjpe_ms[mi] = sum / static_cast<double>(n_win);
        }
        break;
      }
      case EvalMethod::kFmp: {
        row.accepted = n_win;
        for (Index mi = 0; mi < n_ms; ++mi) {
          double sum = 0.0;
          for (Index w = 0; w < n_win; ++w) sum += ensemble_score(w, frames[mi]);
          row.mpjpe_ms[mi] = sum / static_cast<double>(n_win);
        }
        break;
      }
      case EvalMethod::kFmpUmd: {
        for (Index w = 0; w < n_win; ++w)
          (accepted[w] ? row.accepted : row.rejected) += 1;
        if (row.accepted > 0)
          for (Index mi = 0; mi < n_ms; ++mi) {
            double sum = 0.0;
            for (Index w = 0; w < n_win; ++w)
              if (accepted[w]) sum += ensemble_score(w, frames[mi]);
            row.mpjpe_ms[mi] = sum / static_cast<double>(row.accepted);
          }
        break;
      }
      case EvalMethod::kFmpUmdOms: {
        for (Index w = 0; w < n_win; ++w)
          (accepted[w] ? row.accepted : row.rejected) += 1;
        std::vector<double> sums(n_ms, 0.0);
        std::vector<Index> counts(n_ms, 0);
        for (Index w = 0; w < n_win; ++w) {
          if (!accepted[w]) continue;
          const Index best = select_optimal(ensembles[w]);
          const ProbabilisticPrediction& sel = ensembles[w].members[best];
          Index usable = ckpt.t_f;
          if (options.truncate)
            usable =
                trustworthy_length(sel.sigma, options.lambda, options.e_max);
          for (Index mi = 0; mi < n_ms; ++mi) {
            if (frames[mi] > usable) continue;
            sums[mi] += mpjpe(sel.mean_frames, test_windows[w].future.frames,
                              frames[mi]);
            counts[mi] += 1;
          }
        }
        for (Index mi = 0; mi < n_ms; ++mi)
          if (counts[mi] > 0)
            row.mpjpe_ms[mi] = sums[mi] / static_cast<double>(counts[mi]);
        break;
      }
    }
    row.det_pct =
        100.0 * static_cast<double>(row.rejected) / static_cast<double>(n_win);
    report.rows.push_back(std::move(row));
  }
  return report;
}

RenderedReport report_render(const EvalReport& report) {
  if (report.rows.empty())
    throw std::invalid_argument("report_render: empty report");

  std::vector<std::string> labels;
  for (double ms : report.milestones_ms) labels.push_back(milestone_label(ms));

  char buf[256];
  std::string csv = "method,train_set,test_set,det_pct";
  for (const auto& label : labels) csv += "," + label;
  csv += ",accepted,rejected\n";
  for (const MethodRow& row : report.rows) {
    csv += row.method + "," + report.train_label + "," + report.test_label;
    std::snprintf(buf, sizeof(buf), ",%.2f", row.det_pct);
    csv += buf;
    for (double v : row.mpjpe_ms) {
      if (std::isnan(v)) {
        csv += ",-";
      } else {
        std::snprintf(buf, sizeof(buf), ",%.3f", v);
        csv += buf;
      }
    }
    std::snprintf(buf, sizeof(buf), ",%lld,%lld\n",
                  static_cast<long long>(row.accepted),
                  static_cast<long long>(row.rejected));
    csv += buf;
  }

  std::size_t method_w = 6;  // "method"
  for (const MethodRow& row : report.rows)
    method_w = std::max(method_w, row.method.size());

  std::string text;
  std::snprintf(buf, sizeof(buf), "%-*s %8s", static_cast<int>(method_w),
                "method", "det_pct");
  text += buf;
  for (const auto& label : labels) {
    std::snprintf(buf, sizeof(buf), " %11s", label.c_str());
    text += buf;
  }
  std::snprintf(buf, sizeof(buf), " %9s %9s\n", "accepted", "rejected");
  text += buf;
  for (const MethodRow& row : report.rows) {
    std::snprintf(buf, sizeof(buf), "%-*s %8.2f", static_cast<int>(method_w),
                  row.method.c_str(), row.det_pct);
    text += buf;
    for (double v : row.mpjpe_ms) {
      if (std::isnan(v))
        std::snprintf(buf, sizeof(buf), " %11s", "-");
      else
        std::snprintf(buf, sizeof(buf), " %11.3f", v);
      text += buf;
    }
    std::snprintf(buf, sizeof(buf), " %9lld %9lld\n",
                  static_cast<long long>(row.accepted),
                  static_cast<long long>(row.rejected));
    text += buf;
  }

  return RenderedReport{std::move(text), std::move(csv)};
}

}  // namespace motionpred
