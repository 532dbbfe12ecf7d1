#include <doctest.h>

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "motionpred/cli.hpp"
#include "motionpred/model.hpp"
#include "motionpred/motion_data.hpp"
#include "motionpred/uncertainty.hpp"
#include "test_util.hpp"

using namespace motionpred;
using nlohmann::json;
using testutil::slurp;
using testutil::TempDir;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("cli");

namespace {

int run_cli(std::vector<std::string> args) { return cli::run(args); }

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// key=value files (predict/plan summaries).
std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  for (const std::string& line : lines_of(text)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

json manifest_of(const std::string& dir) {
  return json::parse(slurp(dir + "/manifest.json"));
}

// One trained pipeline shared by the checkpoint-consuming tests. Built on
// first use; tests REQUIRE(ok) so a fixture failure reads as theirs.
struct Pipeline {
  TempDir dir{"cli_fixture"};
  std::string data_a = dir.file("data_a");
  std::string data_b = dir.file("data_b");
  std::string config = dir.file("train.cfg");
  std::string train_out = dir.file("train_out");
  std::string calib_out = dir.file("calib_out");
  bool ok = false;

  std::string a_file(int i) const {
    return data_a + "/A_7_00" + std::to_string(i) + ".motion";
  }
  std::string b_file() const { return data_b + "/B_9_000.motion"; }
  std::string ckpt() const { return train_out + "/model.ckpt"; }
  std::string calibration() const { return calib_out + "/calibration.txt"; }

  Pipeline() {
    if (run_cli({"gen-data", "A", "7", "2", "150", "--out", data_a}) != 0)
      return;
    if (run_cli({"gen-data", "B", "9", "1", "150", "--out", data_b}) != 0)
      return;
    std::ofstream cfg(config);
    cfg << "# smoke-scale training\n"
        << "t_p = 10\n"
        << "t_f = 50\n"
        << "epochs = 2\n"
        << "hidden_size = 8\n"
        << "batch_size = 8\n"
        << "learning_rate = 1e-3\n"
        << "dropout_rate = 0.3\n"
        << "rng_seed = 5\n"
        << "window_stride = 10\n"
        << "val_fraction = 0.25\n";
    cfg.close();
    if (run_cli({"train", a_file(0), a_file(1), "--config", config, "--out",
                 train_out}) != 0)
      return;
    if (run_cli({"calibrate", a_file(0), a_file(1), "--checkpoint", ckpt(),
                 "--n-samples", "6", "--stride", "20", "--out",
                 calib_out}) != 0)
      return;
    ok = true;
  }

  static const Pipeline& get() {
    static Pipeline p;
    return p;
  }
};

}  // namespace

TEST_CASE("gen-data writes deterministic, loadable motion files") {
  TempDir tmp("cli_gen");
  const std::string out1 = tmp.file("run1");
  const std::string out2 = tmp.file("run2");
  REQUIRE(run_cli({"gen-data", "A", "3", "2", "60", "--out", out1}) == 0);
  REQUIRE(run_cli({"gen-data", "A", "3", "2", "60", "--out", out2}) == 0);

  for (const char* name : {"A_3_000.motion", "A_3_001.motion"}) {
    const std::string p1 = out1 + "/" + name;
    REQUIRE(fs::exists(p1));
    CHECK(slurp(p1) == slurp(out2 + "/" + name));
  }
  const MotionSequence seq = load_motion_file(out1 + "/A_3_000.motion");
  CHECK(seq.num_frames() == 60);
  CHECK(seq.num_joints() == 17);
  CHECK(seq.label == "synthA");
  CHECK(seq.frame_rate_hz == 25.0);

  const json m = manifest_of(out1);
  CHECK(m["command"] == "gen-data");
  CHECK(m["config"]["family"] == "A");
  CHECK(m["config"]["n_sequences"] == 2);
  CHECK(m["seeds"]["seed"] == 3);
  CHECK(m["outputs"].size() == 3);  // two files + the manifest itself
  CHECK(m.contains("duration_seconds"));

  const std::string bad = tmp.file("bad");
  CHECK(run_cli({"gen-data", "C", "3", "1", "60", "--out", bad}) == 1);
  CHECK(!fs::exists(bad));
  CHECK(run_cli({"gen-data", "A", "3", "0", "60", "--out", bad}) == 1);
}

TEST_CASE("train writes a checkpoint, a loss curve, and a manifest") {
  const Pipeline& pipe = Pipeline::get();
  REQUIRE(pipe.ok);

  const Checkpoint ckpt = load_checkpoint(pipe.ckpt());
  CHECK(ckpt.t_p == 10);
  CHECK(ckpt.t_f == 50);
  CHECK(ckpt.train_label == "synthA");
  CHECK(ckpt.params.num_joints == 17);
  CHECK(ckpt.params.hidden_size == 8);
  CHECK(ckpt.params.dropout_rate == 0.3);

  const auto curve = lines_of(slurp(pipe.train_out + "/loss_curve.csv"));
  REQUIRE(curve.size() == 3);  // header + one row per epoch
  CHECK(curve[0] == "epoch,train_loss,val_loss,val_mpjpe_400ms");
  CHECK(curve[1].substr(0, 2) == "1,");
  CHECK(curve[2].substr(0, 2) == "2,");

  const json m = manifest_of(pipe.train_out);
  CHECK(m["command"] == "train");
  CHECK(m["config"]["epochs"] == 2);
  CHECK(m["config"]["hidden_size"] == 8);
  // Two 150-frame files, 60-frame windows, stride 10: 10 windows each.
  CHECK(m["config"]["train_windows"] == 15);
  CHECK(m["config"]["val_windows"] == 5);
  CHECK(m["checkpoint_hash"] == hash_hex(fnv1a64_file(pipe.ckpt())));
  CHECK(m["seeds"]["rng_seed"] == 5);
}

TEST_CASE("train rejects malformed configuration") {
  const Pipeline& pipe = Pipeline::get();
  REQUIRE(pipe.ok);
  TempDir tmp("cli_badcfg");

  const std::string bad_key = tmp.file("bad_key.cfg");
  std::ofstream(bad_key) << "warble = 3\n";
  const std::string out = tmp.file("out");
  CHECK(run_cli({"train", pipe.a_file(0), "--config", bad_key, "--out",
                 out}) == 1);
  CHECK(!fs::exists(out));

  const std::string bad_val = tmp.file("bad_val.cfg");
  std::ofstream(bad_val) << "val_fraction = 1.5\n";
  CHECK(run_cli({"train", pipe.a_file(0), "--config", bad_val, "--out",
                 out}) == 1);

  const std::string no_eq = tmp.file("no_eq.cfg");
  std::ofstream(no_eq) << "epochs 3\n";
  CHECK(run_cli({"train", pipe.a_file(0), "--config", no_eq, "--out",
                 out}) == 1);
  CHECK(!fs::exists(out));
}

TEST_CASE("calibrate pins the detector to the checkpoint file") {
  const Pipeline& pipe = Pipeline::get();
  REQUIRE(pipe.ok);

  const DetectorCalibration calib = load_calibration(pipe.calibration());
  CHECK(calib.quantile == 0.95);
  // Two 150-frame files, 60-frame windows, stride 20: 5 windows each.
  CHECK(calib.calibration_size == 10);
  CHECK(calib.threshold > 0.0);
  CHECK(calib.model_hash == hash_hex(fnv1a64_file(pipe.ckpt())));

  const json m = manifest_of(pipe.calib_out);
  CHECK(m["command"] == "calibrate");
  CHECK(m["config"]["n_samples"] == 6);
  std::vector<std::string> inputs = m["inputs"];
  CHECK(std::find(inputs.begin(), inputs.end(), pipe.ckpt()) != inputs.end());
}

TEST_CASE("predict accepts below threshold and emits the selected member") {
  const Pipeline& pipe = Pipeline::get();
  REQUIRE(pipe.ok);
  TempDir tmp("cli_predict");

  DetectorCalibration generous;
  generous.threshold = 1e18;
  generous.quantile = 0.95;
  generous.calibration_size = 10;
  generous.model_hash = hash_hex(fnv1a64_file(pipe.ckpt()));
  const std::string calib_path = tmp.file("generous.txt");
  save_calibration(generous, calib_path);

  const std::string out = tmp.file("out");
  REQUIRE(run_cli({"predict", pipe.a_file(0), "--checkpoint", pipe.ckpt(),
                   "--calibration", calib_path, "--n-samples", "5", "--seed",
                   "3", "--out", out}) == 0);

  const auto kv = parse_kv(slurp(out + "/summary.txt"));
  CHECK(kv.at("verdict") == "accept");
  CHECK(kv.at("status") == "ok");
  CHECK(kv.at("n_samples") == "5");
  CHECK(kv.at("window_start") == "0");
  REQUIRE(kv.count("selected_member") == 1);
  REQUIRE(kv.count("trustworthy_length") == 1);
  const int member = std::stoi(kv.at("selected_member"));
  CHECK(member >= 0);
  CHECK(member < 5);
  const int trust = std::stoi(kv.at("trustworthy_length"));
  CHECK(trust >= 0);
  CHECK(trust <= 50);

  const auto samples = lines_of(slurp(out + "/samples.csv"));
  REQUIRE(samples.size() == 1 + 5 * 50 * 17);
  CHECK(samples[0] == "member,frame,t_ms,joint,x,y,z,sigma");
  CHECK(samples[1].substr(0, 7) == "0,1,40,");  // 25 Hz: frame 1 at 40 ms
  CHECK(samples.back().substr(0, 10) == "4,50,2000,");

  const auto selected = lines_of(slurp(out + "/selected.csv"));
  REQUIRE(static_cast<int>(selected.size()) == 1 + trust);
  CHECK(selected[0].substr(0, 19) == "frame,t_ms,x0,y0,z0");
  CHECK(selected[0].find(",sigma16") != std::string::npos);
}

TEST_CASE("predict rejects above threshold without a selected member") {
  const Pipeline& pipe = Pipeline::get();
  REQUIRE(pipe.ok);
  TempDir tmp("cli_reject");

  DetectorCalibration strict;
  strict.threshold = 0.0;  // nothing is strictly below zero
  strict.quantile = 0.95;
  strict.calibration_size = 10;
  strict.model_hash = hash_hex(fnv1a64_file(pipe.ckpt()));
  const std::string calib_path = tmp.file("strict.txt");
  save_calibration(strict, calib_path);

  const std::string out = tmp.file("out");
  REQUIRE(run_cli({"predict", pipe.b_file(), "--checkpoint", pipe.ckpt(),
                   "--calibration", calib_path, "--n-samples", "4", "--out",
                   out}) == 0);
  const auto kv = parse_kv(slurp(out + "/summary.txt"));
  CHECK(kv.at("verdict") == "reject");
  CHECK(kv.at("status") == "rejected");
  CHECK(kv.count("selected_member") == 0);
  CHECK(!fs::exists(out + "/selected.csv"));
  CHECK(fs::exists(out + "/samples.csv"));
}

TEST_CASE("predict refuses mismatched calibrations and bad windows") {
  const Pipeline& pipe = Pipeline::get();
  REQUIRE(pipe.ok);
  TempDir tmp("cli_gate");

  DetectorCalibration foreign;
  foreign.threshold = 1.0;
  foreign.model_hash = "0123456789abcdef";
  const std::string calib_path = tmp.file("foreign.txt");
  save_calibration(foreign, calib_path);

  const std::string out = tmp.file("out");
  CHECK(run_cli({"predict", pipe.a_file(0), "--checkpoint", pipe.ckpt(),
                 "--calibration", calib_path, "--out", out}) == 1);
  CHECK(!fs::exists(out));

  // 145 + t_p exceeds the 150 available frames.
  CHECK(run_cli({"predict", pipe.a_file(0), "--checkpoint", pipe.ckpt(),
                 "--calibration", pipe.calibration(), "--window-start", "145",
                 "--out", out}) == 1);
  CHECK(!fs::exists(out));
}

TEST_CASE("evaluate renders the four-method table") {
  const Pipeline& pipe = Pipeline::get();
  REQUIRE(pipe.ok);
  TempDir tmp("cli_eval");

  const std::string out = tmp.file("out");
  REQUIRE(run_cli({"evaluate", pipe.a_file(1), "--checkpoint", pipe.ckpt(),
                   "--calibration", pipe.calibration(), "--n-samples", "5",
                   "--seed", "11", "--test-label", "heldout", "--out",
                   out}) == 0);

  const auto rows = lines_of(slurp(out + "/eval.csv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] ==
        "method,train_set,test_set,det_pct,mpjpe_400,mpjpe_800,mpjpe_1200,"
        "mpjpe_1600,mpjpe_2000,accepted,rejected");
  CHECK(rows[1].substr(0, 8) == "zerovel,");
  CHECK(rows[2].substr(0, 4) == "fmp,");
  CHECK(rows[3].substr(0, 8) == "fmp_umd,");
  CHECK(rows[4].substr(0, 12) == "fmp_umd_oms,");
  for (std::size_t r = 1; r < rows.size(); ++r)
    CHECK(rows[r].find(",synthA,heldout,") != std::string::npos);
  CHECK(slurp(out + "/eval.txt").find("zerovel") != std::string::npos);

  const json m = manifest_of(out);
  CHECK(m["command"] == "evaluate");
  CHECK(m["config"]["stride"] == 50);  // 0 sentinel resolved to t_f
  CHECK(m["config"]["windows"] == 2);

  // Ungated methods run without a calibration; gated ones refuse.
  const std::string plain = tmp.file("plain");
  CHECK(run_cli({"evaluate", pipe.a_file(1), "--checkpoint", pipe.ckpt(),
                 "--methods", "zerovel,fmp", "--n-samples", "4", "--out",
                 plain}) == 0);
  CHECK(lines_of(slurp(plain + "/eval.csv")).size() == 3);
  const std::string gated = tmp.file("gated");
  CHECK(run_cli({"evaluate", pipe.a_file(1), "--checkpoint", pipe.ckpt(),
                 "--methods", "fmp_umd", "--n-samples", "4", "--out",
                 gated}) == 1);
  CHECK(!fs::exists(gated));

  const std::string bad = tmp.file("bad");
  CHECK(run_cli({"evaluate", pipe.a_file(1), "--checkpoint", pipe.ckpt(),
                 "--methods", "warble", "--out", bad}) == 1);
  CHECK(!fs::exists(bad));
}

TEST_CASE("plan optimizes the bundled scene and writes a cost ledger") {
  TempDir tmp("cli_plan");
  const std::string scene = std::string(REPO_ROOT) + "/assets/one_obstacle.scene";
  const std::string out = tmp.file("out");
  REQUIRE(run_cli({"plan", "--scene", scene, "--out", out}) == 0);

  const auto plan = lines_of(slurp(out + "/plan.csv"));
  REQUIRE(plan.size() == 41);  // header + the scene's 40 steps
  CHECK(plan[0] == "step,x,y,z,field_value,cost_running");

  const auto iters = lines_of(slurp(out + "/iterations.csv"));
  REQUIRE(iters.size() >= 3);  // header, start record, >= 1 accepted step
  CHECK(iters[0] == "iter,cost,obstacle,smoothness,step");
  CHECK(iters[1].substr(0, 2) == "0,");

  const auto kv = parse_kv(slurp(out + "/summary.txt"));
  CHECK(kv.at("verdict") == "ok");
  CHECK(std::stod(kv.at("final_cost")) < std::stod(kv.at("initial_cost")));
  CHECK(std::stod(kv.at("max_collision")) <=
        std::stod(kv.at("collision_threshold")));

  // The running cost column ends at the reported total.
  const std::string& last = plan.back();
  const double running = std::stod(last.substr(last.rfind(',') + 1));
  CHECK(running == doctest::Approx(std::stod(kv.at("final_cost")))
                       .epsilon(1e-9));

  CHECK(run_cli({"plan", "--scene", tmp.file("missing.scene"), "--out",
                 tmp.file("nope")}) == 1);
  CHECK(!fs::exists(tmp.file("nope")));
}

TEST_CASE("plan reads a prediction-backed scene relative to the scene file") {
  const Pipeline& pipe = Pipeline::get();
  REQUIRE(pipe.ok);
  TempDir tmp("cli_plan_pred");

  // A prediction whose selected.csv came from an accepting run.
  DetectorCalibration generous;
  generous.threshold = 1e18;
  generous.calibration_size = 10;
  generous.model_hash = hash_hex(fnv1a64_file(pipe.ckpt()));
  const std::string calib_path = tmp.file("generous.txt");
  save_calibration(generous, calib_path);
  const std::string pred_out = tmp.file("pred");
  REQUIRE(run_cli({"predict", pipe.a_file(0), "--checkpoint", pipe.ckpt(),
                   "--calibration", calib_path, "--n-samples", "4",
                   "--e-max", "1e9", "--out", pred_out}) == 0);
  REQUIRE(fs::exists(pred_out + "/selected.csv"));

  std::ofstream scene(tmp.file("pred.scene"));
  scene << "SCENE v1\n"
        << "start -0.6 0 0\n"
        << "goal 0.6 0 0\n"
        << "steps 12\n"
        << "max_iters 5\n"
        << "prediction pred/selected.csv\n";
  scene.close();

  const std::string out = tmp.file("out");
  REQUIRE(run_cli({"plan", "--scene", tmp.file("pred.scene"), "--out",
                   out}) == 0);
  CHECK(lines_of(slurp(out + "/plan.csv")).size() == 13);
  const json m = manifest_of(out);
  std::vector<std::string> inputs = m["inputs"];
  REQUIRE(inputs.size() == 2);
  CHECK(inputs[1].find("selected.csv") != std::string::npos);
}

TEST_CASE("export-plot flattens report tables into series points") {
  const Pipeline& pipe = Pipeline::get();
  REQUIRE(pipe.ok);
  TempDir tmp("cli_plot");

  SUBCASE("loss curves keep the epoch axis") {
    const std::string out = tmp.file("out");
    REQUIRE(run_cli({"export-plot", pipe.train_out + "/loss_curve.csv",
                     "--out", out}) == 0);
    const std::string plot = slurp(out + "/plot.csv");
    const auto rows = lines_of(plot);
    CHECK(rows[0] == "series,t_ms,value");
    // 2 epochs x 3 numeric columns besides the axis.
    CHECK(rows.size() == 1 + 6);
    CHECK(plot.find("train_loss,1,") != std::string::npos);
    CHECK(plot.find("val_mpjpe_400ms,2,") != std::string::npos);
  }

  SUBCASE("non-numeric lead columns become series prefixes, dashes drop") {
    const std::string csv_path = tmp.file("mini.csv");
    std::ofstream(csv_path) << "method,epoch,score\n"
                            << "alpha,1,0.5\n"
                            << "beta,2,-\n";
    const std::string out = tmp.file("out2");
    REQUIRE(run_cli({"export-plot", csv_path, "--out", out}) == 0);
    const auto rows = lines_of(slurp(out + "/plot.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[1] == "alpha.score,1,0.5");
  }

  SUBCASE("empty input fails cleanly") {
    const std::string csv_path = tmp.file("empty.csv");
    std::ofstream(csv_path).close();
    const std::string out = tmp.file("out3");
    CHECK(run_cli({"export-plot", csv_path, "--out", out}) == 1);
    CHECK(!fs::exists(out));
  }
}

TEST_CASE("bad command lines exit nonzero") {
  CHECK(run_cli({}) != 0);
  CHECK(run_cli({"no-such-command"}) != 0);
  CHECK(run_cli({"train"}) != 0);            // missing required inputs
  CHECK(run_cli({"predict", "x.motion"}) != 0);  // missing checkpoint
}

TEST_SUITE_END();
