#include "motionpred/motion_data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "motionpred/rng.hpp"

namespace motionpred {

namespace {

[[noreturn]] void parse_fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

MotionSequence load_motion_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) parse_fail(path, "cannot open file");

  std::string line;
  if (!std::getline(in, line) || line != "MOTION v1")
    parse_fail(path, "line 1: expected 'MOTION v1' header");

  if (!std::getline(in, line)) parse_fail(path, "line 2: missing header fields");

  Index joints = -1, frames = -1;
  double rate = -1.0;
  std::string label;
  {
    std::istringstream hs(line);
    std::string tok;
    while (hs >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos)
        parse_fail(path, "line 2: malformed field '" + tok + "'");
      const std::string key = tok.substr(0, eq);
      const std::string value = tok.substr(eq + 1);
      try {
        if (key == "joints")
          joints = std::stol(value);
        else if (key == "rate")
          rate = std::stod(value);
        else if (key == "frames")
          frames = std::stol(value);
        else if (key == "label")
          label = value;
        else
          parse_fail(path, "line 2: unknown field '" + key + "'");
      } catch (const std::logic_error&) {
        parse_fail(path, "line 2: bad value for '" + key + "'");
      }
    }
  }
  if (joints < 1) parse_fail(path, "line 2: joints must be >= 1");
  if (frames < 1) parse_fail(path, "line 2: frames must be >= 1");
  if (!(rate > 0.0) || !std::isfinite(rate))
    parse_fail(path, "line 2: rate must be positive");

  MotionSequence seq;
  seq.frame_rate_hz = rate;
  seq.label = label;
  seq.frames.resize(frames, 3 * joints);

  for (Index f = 0; f < frames; ++f) {
    if (!std::getline(in, line))
      parse_fail(path, "frame " + std::to_string(f + 1) + ": missing data line");
    std::istringstream ls(line);
    Index c = 0;
    double v;
    while (ls >> v) {
      if (c >= 3 * joints)
        parse_fail(path, "frame " + std::to_string(f + 1) +
                             ": more than " + std::to_string(3 * joints) +
                             " values (joint count mismatch)");
      if (!std::isfinite(v))
        parse_fail(path, "frame " + std::to_string(f + 1) + ", joint " +
                             std::to_string(c / 3 + 1) +
                             ": non-finite coordinate " +
                             std::to_string(c % 3 + 1));
      seq.frames(f, c++) = v;
    }
    if (!ls.eof())
      parse_fail(path, "frame " + std::to_string(f + 1) + ": unparsable value");
    if (c != 3 * joints)
      parse_fail(path, "frame " + std::to_string(f + 1) + ": expected " +
                           std::to_string(3 * joints) + " values, got " +
                           std::to_string(c) + " (joint count mismatch)");
  }
  return seq;
}

std::string format_motion_file(const MotionSequence& seq) {
  if (seq.num_frames() < 1)
    throw std::invalid_argument("format_motion_file: empty sequence");
  std::ostringstream out;
  out << "MOTION v1\n";
  out << "joints=" << seq.num_joints() << " rate=" << format_double(seq.frame_rate_hz)
      << " frames=" << seq.num_frames() << " label=" << seq.label << "\n";
  for (Index f = 0; f < seq.num_frames(); ++f) {
    for (Index c = 0; c < seq.frames.cols(); ++c) {
      if (c) out << ' ';
      out << format_double(seq.frames(f, c));
    }
    out << '\n';
  }
  return std::move(out).str();
}

void save_motion_file(const MotionSequence& seq, const std::string& path) {
  const std::string text = format_motion_file(seq);
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << text;
  if (!out) throw std::runtime_error(path + ": write failed");
}

std::vector<WindowPair> window_dataset(const MotionSequence& seq, Index t_p,
                                       Index t_f, Index stride) {
  if (t_p < 3)
    throw std::invalid_argument("window_dataset: t_p must be >= 3");
  if (t_f < 1) throw std::invalid_argument("window_dataset: t_f must be >= 1");
  if (stride < 1)
    throw std::invalid_argument("window_dataset: stride must be >= 1");
  if (static_cast<double>(t_f) > 2.0 * seq.frame_rate_hz + 1e-9)
    throw std::invalid_argument(
        "window_dataset: t_f spans more than the 2 s prediction horizon");

  std::vector<WindowPair> out;
  const Index len = seq.num_frames();
  for (Index offset = 0; offset + t_p + t_f <= len; offset += stride) {
    WindowPair w;
    w.observed.frames = seq.frames.middleRows(offset, t_p);
    w.observed.frame_rate_hz = seq.frame_rate_hz;
    w.observed.label = seq.label;
    w.future.frames = seq.frames.middleRows(offset + t_p, t_f);
    w.future.frame_rate_hz = seq.frame_rate_hz;
    w.future.label = seq.label;
    out.push_back(std::move(w));
  }
  return out;
}

NormalizationStats fit_normalization(
    const std::vector<MotionSequence>& train) {
  Index total = 0;
  Index cols = -1;
  for (const auto& seq : train) {
    total += seq.num_frames();
    if (cols < 0)
      cols = seq.frames.cols();
    else if (cols != seq.frames.cols())
      throw std::invalid_argument("fit_normalization: joint count mismatch");
  }
  if (total < 1)
    throw std::invalid_argument("fit_normalization: no frames given");

  NormalizationStats stats;
  stats.mean = RowVec::Zero(cols);
  for (const auto& seq : train) stats.mean += seq.frames.colwise().sum();
  stats.mean /= static_cast<double>(total);

  RowVec sq = RowVec::Zero(cols);
  for (const auto& seq : train)
    sq += (seq.frames.rowwise() - stats.mean).array().square().colwise().sum().matrix();
  stats.scale = (sq / static_cast<double>(total)).cwiseSqrt();
  for (Index c = 0; c < cols; ++c)
    if (stats.scale(c) == 0.0) stats.scale(c) = 1.0;
  return stats;
}

namespace {

void check_stats(const Mat& frames, const NormalizationStats& stats,
                 const char* who) {
  if (frames.cols() != stats.mean.cols() || frames.cols() != stats.scale.cols())
    throw std::invalid_argument(std::string(who) +
                                ": stats dimension mismatch");
}

}  // namespace

Mat normalize(const Mat& frames, const NormalizationStats& stats) {
  check_stats(frames, stats, "normalize");
  return ((frames.rowwise() - stats.mean).array().rowwise() /
          stats.scale.array())
      .matrix();
}

Mat denormalize(const Mat& frames, const NormalizationStats& stats) {
  check_stats(frames, stats, "denormalize");
  return (frames.array().rowwise() * stats.scale.array()).matrix().rowwise() +
         stats.mean;
}

MotionSequence normalize(const MotionSequence& seq,
                         const NormalizationStats& stats) {
  MotionSequence out = seq;
  out.frames = normalize(seq.frames, stats);
  return out;
}

MotionSequence denormalize(const MotionSequence& seq,
                           const NormalizationStats& stats) {
  MotionSequence out = seq;
  out.frames = denormalize(seq.frames, stats);
  return out;
}

WindowPair normalize(const WindowPair& window,
                     const NormalizationStats& stats) {
  return WindowPair{normalize(window.observed, stats),
                    normalize(window.future, stats)};
}

MotionSequence zero_velocity_baseline(const MotionSequence& observed,
                                      Index t_f) {
  if (observed.num_frames() < 1)
    throw std::invalid_argument("zero_velocity_baseline: empty observation");
  MotionSequence out;
  out.frame_rate_hz = observed.frame_rate_hz;
  out.label = observed.label;
  out.frames = observed.frames.row(observed.num_frames() - 1)
                   .replicate(t_f, 1);
  return out;
}

SynthFamily parse_family(const std::string& name) {
  if (name == "A" || name == "a") return SynthFamily::A;
  if (name == "B" || name == "b") return SynthFamily::B;
  throw std::invalid_argument("unknown synthetic family '" + name +
                              "' (expected A or B)");
}

std::string family_name(SynthFamily family) {
  return family == SynthFamily::A ? "A" : "B";
}

MotionSequence synth_generate(SynthFamily family, std::uint64_t seed,
                              Index n_frames) {
  if (n_frames < 1)
    throw std::invalid_argument("synth_generate: n_frames must be >= 1");

  const Index joints = kSynthJoints;
  const double rate = kSynthFrameRateHz;
  const double two_pi = 2.0 * 3.14159265358979323846;

  MotionSequence seq;
  seq.frame_rate_hz = rate;
  seq.label = family == SynthFamily::A ? "synthA" : "synthB";
  seq.frames.resize(n_frames, 3 * joints);

  // Rest skeleton: a vertical chain with small alternating lateral offsets.
  Vec base_x(joints), base_y(joints);
  for (Index j = 0; j < joints; ++j) {
    base_x(j) = 0.06 * ((j % 4) - 1.5);
    base_y(j) = 0.10 * static_cast<double>(j);
  }

  Rng rng(mix_seed(seed, family == SynthFamily::A ? 0xA : 0xB));

  if (family == SynthFamily::A) {
    // Limb swing: per-joint sinusoids near 1 Hz, alternating phase, with
    // per-seed jitter drawn from a fixed band.
    const double freq = rng.uniform(0.9, 1.1);
    const double phase0 = rng.uniform(0.0, two_pi);
    Vec amp(joints), phase(joints);
    for (Index j = 0; j < joints; ++j) {
      amp(j) = (0.06 + 0.10 * static_cast<double>(j % 4) / 3.0) *
               rng.uniform(0.85, 1.15);
      phase(j) = 3.14159265358979323846 * static_cast<double>(j % 2) +
                 rng.uniform(-0.3, 0.3);
    }
    const double sway_phase = rng.uniform(0.0, two_pi);
    for (Index f = 0; f < n_frames; ++f) {
      const double t = static_cast<double>(f) / rate;
      const double w = two_pi * freq * t + phase0;
      for (Index j = 0; j < joints; ++j) {
        seq.frames(f, 3 * j + 0) = base_x(j) + amp(j) * std::sin(w + phase(j));
        seq.frames(f, 3 * j + 1) =
            base_y(j) + 0.03 * std::sin(2.0 * w + sway_phase);
        seq.frames(f, 3 * j + 2) =
            0.6 * amp(j) * std::cos(w + 0.5 * phase(j));
      }
    }
  } else {
    // Whole-chain vertical bob at a much lower base frequency, joints pulled
    // inward as the chain sinks, plus a fast traveling-wave tremor that
    // couples neighboring joints.
    const double bob_freq = rng.uniform(0.25, 0.35);
    const double tremor_freq = rng.uniform(2.6, 3.0);
    const double bob_phase = rng.uniform(0.0, two_pi);
    const double wave = rng.uniform(0.7, 0.9);
    Vec tremor_amp(joints);
    for (Index j = 0; j < joints; ++j)
      tremor_amp(j) = 0.05 * rng.uniform(0.8, 1.2);
    for (Index f = 0; f < n_frames; ++f) {
      const double t = static_cast<double>(f) / rate;
      const double crouch =
          0.5 + 0.5 * std::cos(two_pi * bob_freq * t + bob_phase);  // in [0,1]
      const double squeeze = 1.0 - 0.45 * crouch;
      for (Index j = 0; j < joints; ++j) {
        const double ripple = std::sin(two_pi * tremor_freq * t +
                                       wave * static_cast<double>(j));
        seq.frames(f, 3 * j + 0) =
            0.6 * base_x(j) * squeeze + tremor_amp(j) * ripple;
        seq.frames(f, 3 * j + 1) =
            base_y(j) * squeeze - 0.35 * crouch + 0.4 * tremor_amp(j) * ripple;
        seq.frames(f, 3 * j + 2) =
            0.25 * crouch + tremor_amp(j) * std::cos(
                 two_pi * tremor_freq * t + wave * static_cast<double>(j) + 1.3);
      }
    }
  }
  return seq;
}

}  // namespace motionpred
