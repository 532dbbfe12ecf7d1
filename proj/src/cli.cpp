#include "motionpred/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "motionpred/evaluation.hpp"
#include "motionpred/model.hpp"
#include "motionpred/motion_data.hpp"
#include "motionpred/predictor.hpp"
#include "motionpred/rng.hpp"
#include "motionpred/trajectory.hpp"
#include "motionpred/training.hpp"
#include "motionpred/uncertainty.hpp"

namespace motionpred::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double to_double(const std::string& value, const std::string& key) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos != value.size() || !std::isfinite(out))
    throw std::invalid_argument("bad number for '" + key + "': " + value);
  return out;
}

long long to_ll(const std::string& value, const std::string& key) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(value, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos != value.size())
    throw std::invalid_argument("bad integer for '" + key + "': " + value);
  return out;
}

std::uint64_t to_u64(const std::string& value, const std::string& key) {
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(value, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos != value.size() || value.find('-') != std::string::npos)
    throw std::invalid_argument("bad seed for '" + key + "': " + value);
  return out;
}

std::string trim(const std::string& s) {
  const auto from = s.find_first_not_of(" \t\r");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t\r");
  return s.substr(from, to - from + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// All outputs of one command, staged in memory and committed together so a
// failing run never leaves partial files behind.
class OutputSet {
 public:
  explicit OutputSet(std::string dir) : dir_(std::move(dir)) {
    if (dir_.empty()) throw std::invalid_argument("--out must not be empty");
  }

  void add(const std::string& name, std::string content) {
    files_.push_back({name, std::move(content)});
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(files_.size());
    for (const auto& f : files_) out.push_back(f.name);
    return out;
  }

  const std::string& dir() const { return dir_; }

  std::string path_of(const std::string& name) const {
    return (fs::path(dir_) / name).string();
  }

  void commit() const {
    fs::create_directories(dir_);
    std::vector<fs::path> done;
    try {
      for (const auto& f : files_) {
        const fs::path target = fs::path(dir_) / f.name;
        const fs::path tmp = target.string() + ".tmp";
        {
          std::ofstream out(tmp, std::ios::binary);
          if (!out) throw std::runtime_error("cannot write " + tmp.string());
          out.write(f.content.data(),
                    static_cast<std::streamsize>(f.content.size()));
          if (!out) throw std::runtime_error("write failed: " + tmp.string());
        }
        fs::rename(tmp, target);
        done.push_back(target);
      }
    } catch (...) {
      std::error_code ec;
      for (const auto& p : done) fs::remove(p, ec);
      for (const auto& f : files_)
        fs::remove(fs::path(dir_) / (f.name + ".tmp"), ec);
      throw;
    }
  }

 private:
  struct Entry {
    std::string name;
    std::string content;
  };
  std::string dir_;
  std::vector<Entry> files_;
};

using Clock = std::chrono::steady_clock;

// The manifest records what produced the outputs. duration_seconds is the one
// field that varies between identical reruns; byte-level determinism claims
// therefore exclude manifest.json.
void add_manifest(OutputSet& stage, const std::string& command,
                  const std::vector<std::string>& args, json config,
                  json seeds, json inputs, const std::string& checkpoint_hash,
                  Clock::time_point t0) {
  json m;
  m["command"] = command;
  m["args"] = args;
  m["config"] = std::move(config);
  m["seeds"] = std::move(seeds);
  m["inputs"] = std::move(inputs);
  std::vector<std::string> outs = stage.names();
  outs.push_back("manifest.json");
  std::sort(outs.begin(), outs.end());
  m["outputs"] = outs;
  if (!checkpoint_hash.empty()) m["checkpoint_hash"] = checkpoint_hash;
  m["duration_seconds"] =
      std::chrono::duration<double>(Clock::now() - t0).count();
  stage.add("manifest.json", m.dump(2) + "\n");
}

std::vector<MotionSequence> load_sequences(
    const std::vector<std::string>& paths) {
  if (paths.empty())
    throw std::invalid_argument("no input motion files given");
  std::vector<MotionSequence> seqs;
  seqs.reserve(paths.size());
  for (const auto& p : paths) {
    seqs.push_back(load_motion_file(p));
    if (seqs.size() > 1) {
      if (seqs.back().num_joints() != seqs.front().num_joints())
        throw std::invalid_argument(
            p + ": joint count differs from " + paths.front());
      if (seqs.back().frame_rate_hz != seqs.front().frame_rate_hz)
        throw std::invalid_argument(
            p + ": frame rate differs from " + paths.front());
    }
  }
  return seqs;
}

std::vector<WindowPair> collect_windows(const std::vector<MotionSequence>& seqs,
                                        Index t_p, Index t_f, Index stride) {
  std::vector<WindowPair> all;
  for (const auto& seq : seqs) {
    auto w = window_dataset(seq, t_p, t_f, stride);
    all.insert(all.end(), std::make_move_iterator(w.begin()),
               std::make_move_iterator(w.end()));
  }
  if (all.empty())
    throw std::invalid_argument(
        "inputs yield no windows of " + std::to_string(t_p) + "+" +
        std::to_string(t_f) + " frames");
  return all;
}

// ---- train configuration -------------------------------------------------

struct TrainCliConfig {
  TrainConfig train;
  Index window_stride = 10;
  double val_fraction = 0.2;
  std::string train_label;
};

void apply_train_key(TrainCliConfig& cfg, const std::string& key,
                     const std::string& value) {
  if (key == "learning_rate")
    cfg.train.learning_rate = to_double(value, key);
  else if (key == "weight_decay")
    cfg.train.weight_decay = to_double(value, key);
  else if (key == "batch_size")
    cfg.train.batch_size = to_ll(value, key);
  else if (key == "dropout_rate")
    cfg.train.dropout_rate = to_double(value, key);
  else if (key == "epochs")
    cfg.train.epochs = to_ll(value, key);
  else if (key == "rng_seed")
    cfg.train.rng_seed = to_u64(value, key);
  else if (key == "t_p")
    cfg.train.t_p = to_ll(value, key);
  else if (key == "t_f")
    cfg.train.t_f = to_ll(value, key);
  else if (key == "mc_train_seed_policy")
    cfg.train.mc_train_seed_policy = value;
  else if (key == "hidden_size")
    cfg.train.hidden_size = to_ll(value, key);
  else if (key == "grad_clip_norm")
    cfg.train.grad_clip_norm = to_double(value, key);
  else if (key == "window_stride")
    cfg.window_stride = to_ll(value, key);
  else if (key == "val_fraction")
    cfg.val_fraction = to_double(value, key);
  else if (key == "train_label")
    cfg.train_label = value;
  else
    throw std::invalid_argument("unknown config key '" + key + "'");
}

void apply_config_file(TrainCliConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open config file");
  std::string line;
  Index line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected key=value");
    apply_train_key(cfg, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
}

json train_config_json(const TrainCliConfig& cfg) {
  json j;
  j["learning_rate"] = cfg.train.learning_rate;
  j["weight_decay"] = cfg.train.weight_decay;
  j["batch_size"] = cfg.train.batch_size;
  j["dropout_rate"] = cfg.train.dropout_rate;
  j["epochs"] = cfg.train.epochs;
  j["rng_seed"] = cfg.train.rng_seed;
  j["t_p"] = cfg.train.t_p;
  j["t_f"] = cfg.train.t_f;
  j["mc_train_seed_policy"] = cfg.train.mc_train_seed_policy;
  j["hidden_size"] = cfg.train.hidden_size;
  j["grad_clip_norm"] = cfg.train.grad_clip_norm;
  j["window_stride"] = cfg.window_stride;
  j["val_fraction"] = cfg.val_fraction;
  j["train_label"] = cfg.train_label;
  return j;
}

std::string hash_of_file(const std::string& path) {
  return hash_hex(fnv1a64_file(path));
}

void check_calibration_hash(const DetectorCalibration& calib,
                            const std::string& checkpoint_path,
                            const std::string& calibration_path) {
  if (calib.model_hash != hash_of_file(checkpoint_path))
    throw std::invalid_argument(
        calibration_path + ": calibration was made for a different checkpoint");
}

// ---- commands ------------------------------------------------------------

struct GenDataOpts {
  std::string family;
  std::uint64_t seed = 1;
  long long n_sequences = 1;
  long long n_frames = 200;
  std::string out = "out";
};

int cmd_gen_data(const GenDataOpts& o, const std::vector<std::string>& args,
                 Clock::time_point t0) {
  const SynthFamily family = parse_family(o.family);
  if (o.n_sequences < 1)
    throw std::invalid_argument("n_sequences must be >= 1");
  if (o.n_frames < 1) throw std::invalid_argument("n_frames must be >= 1");

  OutputSet stage(o.out);
  for (long long i = 0; i < o.n_sequences; ++i) {
    const MotionSequence seq = synth_generate(
        family, mix_seed(o.seed, static_cast<std::uint64_t>(i)),
        static_cast<Index>(o.n_frames));
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%llu_%03lld.motion",
                  family_name(family).c_str(),
                  static_cast<unsigned long long>(o.seed), i);
    stage.add(name, format_motion_file(seq));
  }

  json config;
  config["family"] = family_name(family);
  config["n_sequences"] = o.n_sequences;
  config["n_frames"] = o.n_frames;
  add_manifest(stage, "gen-data", args, config, json{{"seed", o.seed}},
               json::array(), "", t0);
  stage.commit();
  std::printf("wrote %lld motion files to %s\n", o.n_sequences,
              stage.dir().c_str());
  return 0;
}

struct TrainOpts {
  std::vector<std::string> inputs;
  std::string config_path;
  std::string out = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_train(const TrainOpts& o, const std::vector<std::string>& args,
              Clock::time_point t0) {
  TrainCliConfig cfg;
  if (!o.config_path.empty()) apply_config_file(cfg, o.config_path);
  if (o.seed_set) cfg.train.rng_seed = o.seed;
  if (cfg.window_stride < 1)
    throw std::invalid_argument("window_stride must be >= 1");
  if (cfg.val_fraction < 0.0 || cfg.val_fraction >= 1.0)
    throw std::invalid_argument("val_fraction must be in [0, 1)");

  const auto seqs = load_sequences(o.inputs);
  auto all = collect_windows(seqs, cfg.train.t_p, cfg.train.t_f,
                             cfg.window_stride);

  // Window-level validation split, seeded independently of the training loop.
  std::vector<Index> order(all.size());
  std::iota(order.begin(), order.end(), Index{0});
  Rng split_rng(mix_seed(cfg.train.rng_seed, 0x73706c6974ULL));
  shuffle_inplace(order, split_rng);
  Index n_val = static_cast<Index>(
      std::llround(cfg.val_fraction * static_cast<double>(all.size())));
  n_val = std::clamp<Index>(n_val, 0, static_cast<Index>(all.size()) - 1);
  std::vector<WindowPair> train_set, val_set;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dst = (static_cast<Index>(i) < static_cast<Index>(order.size()) - n_val)
                    ? train_set
                    : val_set;
    dst.push_back(all[order[i]]);
  }

  const std::string label = !cfg.train_label.empty() ? cfg.train_label
                            : !seqs.front().label.empty() ? seqs.front().label
                                                          : "train";
  const TrainResult res = train(cfg.train, train_set, val_set,
                                seqs.front().frame_rate_hz, label);

  std::string curve = "epoch,train_loss,val_loss,val_mpjpe_400ms\n";
  for (const EpochStats& es : res.curve)
    curve += std::to_string(es.epoch) + "," + fmt(es.train_loss) + "," +
             fmt(es.val_loss) + "," + fmt(es.val_mpjpe_400ms) + "\n";

  const std::string ckpt = checkpoint_bytes(res.checkpoint);
  const std::string ckpt_hash = hash_hex(fnv1a64_bytes(ckpt));

  OutputSet stage(o.out);
  stage.add("model.ckpt", ckpt);
  stage.add("loss_curve.csv", std::move(curve));
  json inputs = o.inputs;
  json config = train_config_json(cfg);
  config["train_windows"] = static_cast<long long>(train_set.size());
  config["val_windows"] = static_cast<long long>(val_set.size());
  add_manifest(stage, "train", args, config,
               json{{"rng_seed", cfg.train.rng_seed}}, inputs, ckpt_hash, t0);
  stage.commit();
  std::printf("best_epoch=%lld val_loss=%s checkpoint=%s\n",
              static_cast<long long>(res.best_epoch),
              fmt(res.curve[res.best_epoch - 1].val_loss).c_str(),
              stage.path_of("model.ckpt").c_str());
  return 0;
}

struct CalibrateOpts {
  std::vector<std::string> inputs;
  std::string checkpoint;
  std::string out = "out";
  long long n_samples = 30;
  double quantile = 0.95;
  std::uint64_t seed = 1;
  long long stride = 10;
};

int cmd_calibrate(const CalibrateOpts& o, const std::vector<std::string>& args,
                  Clock::time_point t0) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const auto seqs = load_sequences(o.inputs);
  if (seqs.front().num_joints() != ckpt.params.num_joints)
    throw std::invalid_argument(
        o.inputs.front() + ": joint count mismatches the checkpoint");
  const auto windows = collect_windows(seqs, ckpt.t_p, ckpt.t_f,
                                       static_cast<Index>(o.stride));
  std::vector<Mat> observed;
  observed.reserve(windows.size());
  for (const auto& w : windows) observed.push_back(w.observed.frames);

  DetectorCalibration calib = calibrate_threshold(
      ckpt, observed, static_cast<Index>(o.n_samples), o.quantile, o.seed);
  calib.model_hash = hash_of_file(o.checkpoint);

  OutputSet stage(o.out);
  stage.add("calibration.txt", format_calibration(calib));
  json config;
  config["n_samples"] = o.n_samples;
  config["quantile"] = o.quantile;
  config["stride"] = o.stride;
  json inputs = o.inputs;
  inputs.push_back(o.checkpoint);
  add_manifest(stage, "calibrate", args, config, json{{"seed", o.seed}},
               inputs, calib.model_hash, t0);
  stage.commit();
  std::printf("threshold=%s M=%lld calibration=%s\n",
              fmt(calib.threshold).c_str(),
              static_cast<long long>(calib.calibration_size),
              stage.path_of("calibration.txt").c_str());
  return 0;
}

struct PredictOpts {
  std::string input;
  std::string checkpoint;
  std::string calibration;
  std::string out = "out";
  long long n_samples = 30;
  std::uint64_t seed = 1;
  long long window_start = 0;
  double lambda = 1.28;
  double e_max = 0.20;
};

int cmd_predict(const PredictOpts& o, const std::vector<std::string>& args,
                Clock::time_point t0) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const DetectorCalibration calib = load_calibration(o.calibration);
  check_calibration_hash(calib, o.checkpoint, o.calibration);

  const MotionSequence seq = load_motion_file(o.input);
  if (seq.num_joints() != ckpt.params.num_joints)
    throw std::invalid_argument(o.input +
                                ": joint count mismatches the checkpoint");
  if (o.window_start < 0 ||
      static_cast<Index>(o.window_start) + ckpt.t_p > seq.num_frames())
    throw std::invalid_argument(
        "--window-start leaves fewer than t_p observed frames");

  const Mat observed =
      seq.frames.middleRows(static_cast<Index>(o.window_start), ckpt.t_p);
  const McEnsemble ens =
      sample_ensemble_meters(ckpt.params, ckpt.stats, observed,
                             static_cast<Index>(o.n_samples), ckpt.t_f, o.seed);
  const EpistemicReport report = epistemic_variance(ens);
  const bool accept = detect_unseen(report, calib);

  const double rate = seq.frame_rate_hz;
  const Index j_n = ckpt.params.num_joints;

  std::string samples = "member,frame,t_ms,joint,x,y,z,sigma\n";
  for (std::size_t m = 0; m < ens.members.size(); ++m) {
    const auto& pred = ens.members[m];
    for (Index f = 0; f < ckpt.t_f; ++f) {
      const std::string t_ms = fmt(1000.0 * static_cast<double>(f + 1) / rate);
      for (Index j = 0; j < j_n; ++j) {
        samples += std::to_string(m) + "," + std::to_string(f + 1) + "," +
                   t_ms + "," + std::to_string(j) + "," +
                   fmt(pred.mean_frames(f, 3 * j)) + "," +
                   fmt(pred.mean_frames(f, 3 * j + 1)) + "," +
                   fmt(pred.mean_frames(f, 3 * j + 2)) + "," +
                   fmt(pred.sigma(f, j)) + "\n";
      }
    }
  }

  std::string summary;
  summary += "n_samples=" + std::to_string(o.n_samples) + "\n";
  summary += "window_start=" + std::to_string(o.window_start) + "\n";
  summary += "scalar_eu=" + fmt(report.scalar_eu) + "\n";
  summary += "threshold=" + fmt(calib.threshold) + "\n";
  summary += "quantile=" + fmt(calib.quantile) + "\n";
  summary += std::string("verdict=") + (accept ? "accept" : "reject") + "\n";
  summary += std::string("status=") + (accept ? "ok" : "rejected") + "\n";

  OutputSet stage(o.out);
  if (accept) {
    const SelectionResult sel = select_and_truncate(ens, o.lambda, o.e_max);
    summary += "selected_member=" + std::to_string(sel.optimal_index) + "\n";
    summary +=
        "trustworthy_length=" + std::to_string(sel.trustworthy_len) + "\n";
    std::string selected = "frame,t_ms";
    for (Index j = 0; j < j_n; ++j) {
      const std::string js = std::to_string(j);
      selected += ",x" + js + ",y" + js + ",z" + js;
    }
    for (Index j = 0; j < j_n; ++j) selected += ",sigma" + std::to_string(j);
    selected += "\n";
    for (Index f = 0; f < sel.trustworthy_len; ++f) {
      selected += std::to_string(f + 1) + "," +
                  fmt(1000.0 * static_cast<double>(f + 1) / rate);
      for (Index c = 0; c < 3 * j_n; ++c)
        selected += "," + fmt(sel.mean_frames(f, c));
      for (Index j = 0; j < j_n; ++j) selected += "," + fmt(sel.sigma(f, j));
      selected += "\n";
    }
    stage.add("selected.csv", std::move(selected));
  }
  stage.add("samples.csv", std::move(samples));
  stage.add("summary.txt", std::move(summary));

  json config;
  config["n_samples"] = o.n_samples;
  config["window_start"] = o.window_start;
  config["lambda"] = o.lambda;
  config["e_max"] = o.e_max;
  json inputs = json::array({o.input, o.checkpoint, o.calibration});
  add_manifest(stage, "predict", args, config, json{{"seed", o.seed}}, inputs,
               calib.model_hash, t0);
  stage.commit();
  std::printf("verdict=%s scalar_eu=%s threshold=%s\n",
              accept ? "accept" : "reject", fmt(report.scalar_eu).c_str(),
              fmt(calib.threshold).c_str());
  return 0;
}

struct EvaluateOpts {
  std::vector<std::string> inputs;
  std::string checkpoint;
  std::string calibration;
  std::string out = "out";
  long long n_samples = 30;
  std::uint64_t seed = 1;
  std::string methods = "zerovel,fmp,fmp_umd,fmp_umd_oms";
  double lambda = 1.28;
  double e_max = 0.20;
  bool truncate = false;
  long long stride = 0;  // 0 = non-overlapping (t_f)
  std::string test_label;
};

int cmd_evaluate(const EvaluateOpts& o, const std::vector<std::string>& args,
                 Clock::time_point t0) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  DetectorCalibration calib;
  const bool have_calib = !o.calibration.empty();
  if (have_calib) {
    calib = load_calibration(o.calibration);
    check_calibration_hash(calib, o.checkpoint, o.calibration);
  }

  const auto seqs = load_sequences(o.inputs);
  if (seqs.front().num_joints() != ckpt.params.num_joints)
    throw std::invalid_argument(
        o.inputs.front() + ": joint count mismatches the checkpoint");
  const Index stride = o.stride > 0 ? static_cast<Index>(o.stride) : ckpt.t_f;
  const auto windows = collect_windows(seqs, ckpt.t_p, ckpt.t_f, stride);

  EvalOptions eo;
  eo.methods.clear();
  for (const std::string& tok : split(o.methods, ','))
    if (!trim(tok).empty()) eo.methods.push_back(parse_method(trim(tok)));
  eo.n_samples = static_cast<Index>(o.n_samples);
  eo.seed = o.seed;
  eo.lambda = o.lambda;
  eo.e_max = o.e_max;
  eo.truncate = o.truncate;
  eo.test_label = !o.test_label.empty() ? o.test_label
                  : !seqs.front().label.empty() ? seqs.front().label
                                                : "test";

  const EvalReport report =
      evaluate(ckpt, windows, have_calib ? &calib : nullptr,
               seqs.front().frame_rate_hz, eo);
  const RenderedReport rendered = report_render(report);

  OutputSet stage(o.out);
  stage.add("eval.csv", rendered.csv);
  stage.add("eval.txt", rendered.text);
  json config;
  config["methods"] = o.methods;
  config["n_samples"] = o.n_samples;
  config["lambda"] = o.lambda;
  config["e_max"] = o.e_max;
  config["truncate"] = o.truncate;
  config["stride"] = static_cast<long long>(stride);
  config["windows"] = static_cast<long long>(windows.size());
  json inputs = o.inputs;
  inputs.push_back(o.checkpoint);
  if (have_calib) inputs.push_back(o.calibration);
  add_manifest(stage, "evaluate", args, config, json{{"seed", o.seed}}, inputs,
               hash_of_file(o.checkpoint), t0);
  stage.commit();
  std::fputs(rendered.text.c_str(), stdout);
  return 0;
}

struct PlanOpts {
  std::string scene;
  std::string out = "out";
};

// selected.csv layout: frame,t_ms,x0,y0,z0,...,sigma0,...
std::pair<Mat, Mat> load_prediction_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open prediction csv");
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty prediction csv");
  const Index cols = static_cast<Index>(split(trim(line), ',').size());
  if (cols < 6 || (cols - 2) % 4 != 0)
    throw std::runtime_error(path + ": not a prediction csv (bad column count)");
  const Index j_n = (cols - 2) / 4;
  std::vector<std::vector<double>> rows;
  Index line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (static_cast<Index>(cells.size()) != cols)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": ragged row");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(to_double(c, "prediction csv"));
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw std::runtime_error(path + ": prediction csv has no frames");
  Mat mean(static_cast<Index>(rows.size()), 3 * j_n);
  Mat sigma(static_cast<Index>(rows.size()), j_n);
  for (Index r = 0; r < mean.rows(); ++r) {
    for (Index c = 0; c < 3 * j_n; ++c) mean(r, c) = rows[r][2 + c];
    for (Index j = 0; j < j_n; ++j) sigma(r, j) = rows[r][2 + 3 * j_n + j];
  }
  return {std::move(mean), std::move(sigma)};
}

int cmd_plan(const PlanOpts& o, const std::vector<std::string>& args,
             Clock::time_point t0) {
  const Scene scene = load_scene(o.scene);
  json inputs = json::array({o.scene});

  UncertaintyField field;
  if (!scene.prediction_path.empty()) {
    fs::path pred_path(scene.prediction_path);
    if (pred_path.is_relative())
      pred_path = fs::path(o.scene).parent_path() / pred_path;
    const auto [mean, sigma] = load_prediction_csv(pred_path.string());
    field = field_from_prediction(mean, sigma, scene.config.safety_radius,
                                  scene.growth);
    inputs.push_back(pred_path.string());
  } else {
    field = field_from_static(scene.gaussian_centers, scene.gaussian_sigmas,
                              scene.config.safety_radius);
  }

  const Trajectory start = straight_line(scene.start, scene.goal, scene.steps);
  const PlanResult res = optimize(start, field, scene.config);
  const CollisionProfile profile =
      collision_probability_profile(res.trajectory, field);

  const Trajectory& traj = res.trajectory;
  const Index steps = traj.rows();
  std::string plan = "step,x,y,z,field_value,cost_running\n";
  double running = 0.0;
  for (Index k = 0; k < steps; ++k) {
    double len = 0.0;
    if (k > 0) len += 0.5 * (traj.row(k) - traj.row(k - 1)).norm();
    if (k + 1 < steps) len += 0.5 * (traj.row(k + 1) - traj.row(k)).norm();
    running += scene.config.w_obstacle * profile.values[k] * len;
    if (k >= 2)
      running += scene.config.w_smoothness *
                 (traj.row(k - 2) - 2.0 * traj.row(k - 1) + traj.row(k))
                     .squaredNorm();
    plan += std::to_string(k) + "," + fmt(traj(k, 0)) + "," + fmt(traj(k, 1)) +
            "," + fmt(traj(k, 2)) + "," + fmt(profile.values[k]) + "," +
            fmt(running) + "\n";
  }

  std::string iters = "iter,cost,obstacle,smoothness,step\n";
  for (const IterationRecord& r : res.log)
    iters += std::to_string(r.iter) + "," + fmt(r.cost) + "," +
             fmt(r.obstacle) + "," + fmt(r.smoothness) + "," + fmt(r.step) +
             "\n";

  const bool ok = profile.max_value <= scene.config.collision_threshold;
  std::string summary;
  summary += "iterations=" + std::to_string(res.log.size() - 1) + "\n";
  summary += "initial_cost=" + fmt(res.log.front().cost) + "\n";
  summary += "final_cost=" + fmt(res.log.back().cost) + "\n";
  summary += "max_collision=" + fmt(profile.max_value) + "\n";
  summary +=
      "collision_threshold=" + fmt(scene.config.collision_threshold) + "\n";
  summary += std::string("verdict=") + (ok ? "ok" : "violation") + "\n";

  OutputSet stage(o.out);
  stage.add("plan.csv", std::move(plan));
  stage.add("iterations.csv", std::move(iters));
  stage.add("summary.txt", std::move(summary));
  json config;
  config["steps"] = static_cast<long long>(scene.steps);
  config["w_obstacle"] = scene.config.w_obstacle;
  config["w_smoothness"] = scene.config.w_smoothness;
  config["w_goal"] = scene.config.w_goal;
  config["step_size"] = scene.config.step_size;
  config["max_iters"] = static_cast<long long>(scene.config.max_iters);
  config["tolerance"] = scene.config.tolerance;
  config["safety_radius"] = scene.config.safety_radius;
  config["collision_threshold"] = scene.config.collision_threshold;
  config["growth"] = scene.growth;
  add_manifest(stage, "plan", args, config, json::object(), inputs, "", t0);
  stage.commit();
  std::printf("iterations=%lld final_cost=%s max_collision=%s verdict=%s\n",
              static_cast<long long>(res.log.size() - 1),
              fmt(res.log.back().cost).c_str(), fmt(profile.max_value).c_str(),
              ok ? "ok" : "violation");
  return 0;
}

struct ExportPlotOpts {
  std::string input;
  std::string out = "out";
};

int cmd_export_plot(const ExportPlotOpts& o,
                    const std::vector<std::string>& args,
                    Clock::time_point t0) {
  std::ifstream in(o.input);
  if (!in) throw std::runtime_error(o.input + ": cannot open csv");
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(o.input + ": empty csv");
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
    line.pop_back();
  const std::vector<std::string> header = split(line, ',');
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
      line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != header.size())
      throw std::runtime_error(o.input + ": ragged csv row");
    rows.push_back(std::move(cells));
  }

  auto is_numeric_cell = [](const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
  };
  const Index n_cols = static_cast<Index>(header.size());
  std::vector<bool> numeric(n_cols, true);
  for (Index c = 0; c < n_cols; ++c)
    for (const auto& row : rows)
      if (row[c] != "-" && !is_numeric_cell(row[c])) {
        numeric[c] = false;
        break;
      }

  // The x axis: first recognized time-like column, else the row index.
  Index x_col = -1;
  for (const char* cand : {"t_ms", "epoch", "step", "frame", "iter"}) {
    for (Index c = 0; c < n_cols; ++c)
      if (header[c] == cand && numeric[c]) {
        x_col = c;
        break;
      }
    if (x_col >= 0) break;
  }
  Index prefix_col = -1;
  for (Index c = 0; c < n_cols; ++c)
    if (!numeric[c]) {
      prefix_col = c;
      break;
    }

  std::string plot = "series,t_ms,value\n";
  Index n_points = 0;
  for (Index c = 0; c < n_cols; ++c) {
    if (!numeric[c] || c == x_col) continue;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::string& cell = rows[r][c];
      if (cell == "-") continue;
      const std::string x =
          x_col >= 0 ? rows[r][x_col] : std::to_string(r);
      if (x == "-") continue;
      const std::string series =
          (prefix_col >= 0 ? rows[r][prefix_col] + "." : "") + header[c];
      plot += series + "," + x + "," + cell + "\n";
      ++n_points;
    }
  }

  OutputSet stage(o.out);
  stage.add("plot.csv", std::move(plot));
  add_manifest(stage, "export-plot", args, json::object(), json::object(),
               json::array({o.input}), "", t0);
  stage.commit();
  std::printf("wrote %lld points to %s\n", static_cast<long long>(n_points),
              stage.path_of("plot.csv").c_str());
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  const auto t0 = Clock::now();
  CLI::App app{"probabilistic human-motion prediction toolkit"};
  app.require_subcommand(1);

  GenDataOpts gen;
  CLI::App* gen_cmd = app.add_subcommand(
      "gen-data", "synthesize deterministic motion files");
  gen_cmd->add_option("family", gen.family, "motion family (A or B)")
      ->required();
  gen_cmd->add_option("seed", gen.seed, "base seed")->required();
  gen_cmd->add_option("n_sequences", gen.n_sequences, "number of files")
      ->required();
  gen_cmd->add_option("n_frames", gen.n_frames, "frames per file")->required();
  gen_cmd->add_option("--out", gen.out, "output directory");

  TrainOpts tr;
  CLI::App* train_cmd =
      app.add_subcommand("train", "train a predictor on motion files");
  train_cmd->add_option("inputs", tr.inputs, "motion files")->required();
  train_cmd->add_option("--config", tr.config_path, "key=value config file");
  train_cmd->add_option("--seed", tr.seed, "overrides rng_seed");
  train_cmd->add_option("--out", tr.out, "output directory");

  CalibrateOpts ca;
  CLI::App* cal_cmd = app.add_subcommand(
      "calibrate", "fit the unseen-motion threshold on training data");
  cal_cmd->add_option("inputs", ca.inputs, "motion files")->required();
  cal_cmd->add_option("--checkpoint", ca.checkpoint, "model checkpoint")
      ->required();
  cal_cmd->add_option("--n-samples", ca.n_samples, "ensemble size");
  cal_cmd->add_option("--quantile", ca.quantile, "EU quantile");
  cal_cmd->add_option("--seed", ca.seed, "mask seed base");
  cal_cmd->add_option("--stride", ca.stride, "window stride");
  cal_cmd->add_option("--out", ca.out, "output directory");

  PredictOpts pr;
  CLI::App* pred_cmd = app.add_subcommand(
      "predict", "predict one window with uncertainty and gating");
  pred_cmd->add_option("input", pr.input, "motion file")->required();
  pred_cmd->add_option("--checkpoint", pr.checkpoint, "model checkpoint")
      ->required();
  pred_cmd->add_option("--calibration", pr.calibration, "detector calibration")
      ->required();
  pred_cmd->add_option("--n-samples", pr.n_samples, "ensemble size");
  pred_cmd->add_option("--seed", pr.seed, "mask seed base");
  pred_cmd->add_option("--window-start", pr.window_start,
                       "first observed frame");
  pred_cmd->add_option("--lambda", pr.lambda, "sigma scale for truncation");
  pred_cmd->add_option("--e-max", pr.e_max, "error budget in meters");
  pred_cmd->add_option("--out", pr.out, "output directory");

  EvaluateOpts ev;
  CLI::App* eval_cmd =
      app.add_subcommand("evaluate", "MPJPE tables over test windows");
  eval_cmd->add_option("inputs", ev.inputs, "motion files")->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "model checkpoint")
      ->required();
  eval_cmd->add_option("--calibration", ev.calibration,
                       "detector calibration (needed for gated methods)");
  eval_cmd->add_option("--n-samples", ev.n_samples, "ensemble size");
  eval_cmd->add_option("--seed", ev.seed, "mask seed base");
  eval_cmd->add_option("--methods", ev.methods, "comma list of methods");
  eval_cmd->add_option("--lambda", ev.lambda, "sigma scale for truncation");
  eval_cmd->add_option("--e-max", ev.e_max, "error budget in meters");
  eval_cmd->add_flag("--truncate", ev.truncate,
                     "drop milestones beyond the trustworthy length");
  eval_cmd->add_option("--stride", ev.stride, "window stride (0 = t_f)");
  eval_cmd->add_option("--test-label", ev.test_label, "label for the report");
  eval_cmd->add_option("--out", ev.out, "output directory");

  PlanOpts pl;
  CLI::App* plan_cmd =
      app.add_subcommand("plan", "collision-averse trajectory optimization");
  plan_cmd->add_option("--scene", pl.scene, "scene file")->required();
  plan_cmd->add_option("--out", pl.out, "output directory");

  ExportPlotOpts ex;
  CLI::App* export_cmd = app.add_subcommand(
      "export-plot", "convert an output CSV to long format");
  export_cmd->add_option("input", ex.input, "csv file")->required();
  export_cmd->add_option("--out", ex.out, "output directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, args, t0);
    if (*train_cmd) {
      tr.seed_set = train_cmd->count("--seed") > 0;
      return cmd_train(tr, args, t0);
    }
    if (*cal_cmd) return cmd_calibrate(ca, args, t0);
    if (*pred_cmd) return cmd_predict(pr, args, t0);
    if (*eval_cmd) return cmd_evaluate(ev, args, t0);
    if (*plan_cmd) return cmd_plan(pl, args, t0);
    if (*export_cmd) return cmd_export_plot(ex, args, t0);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  std::fprintf(stderr, "error: no command selected\n");
  return 1;
}

}  // namespace motionpred::cli
