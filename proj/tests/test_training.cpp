#include <doctest.h>

#include <cmath>

#include "motionpred/model.hpp"
#include "motionpred/motion_data.hpp"
#include "motionpred/predictor.hpp"
#include "motionpred/training.hpp"
#include "test_util.hpp"

using namespace motionpred;
using testutil::random_mat;

TEST_SUITE_BEGIN("training");

namespace {

// Random-walk windows, small enough for finite differences.
std::vector<WindowPair> walk_windows(Index count, Index t_p, Index t_f,
                                     Index joints, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<WindowPair> out;
  for (Index w = 0; w < count; ++w) {
    Mat frames(t_p + t_f, 3 * joints);
    for (Index c = 0; c < frames.cols(); ++c) frames(0, c) = rng.uniform(-1, 1);
    for (Index f = 1; f < frames.rows(); ++f)
      for (Index c = 0; c < frames.cols(); ++c)
        frames(f, c) = frames(f - 1, c) + 0.05 * rng.uniform(-1, 1);
    WindowPair pair;
    pair.observed.frames = frames.topRows(t_p);
    pair.future.frames = frames.bottomRows(t_f);
    pair.observed.frame_rate_hz = pair.future.frame_rate_hz = 25.0;
    out.push_back(std::move(pair));
  }
  return out;
}

ModelParams tiny_model(std::uint64_t seed, Index joints = 2, Index hidden = 4,
                       double rate = 0.5) {
  ModelParams p = init_model(joints, hidden, rate, seed);
  // A zero head hides the decoder from the loss; give it signal.
  Rng rng(mix_seed(seed, 0xf00d));
  p.head_weight = random_mat(4 * joints, hidden, rng, -0.3, 0.3);
  p.head_bias = random_mat(4 * joints, 1, rng, -0.1, 0.1);
  return p;
}

}  // namespace

TEST_CASE("loss is zero for a perfect unit-sigma prediction") {
  ProbabilisticPrediction pred;
  pred.mean_frames = Mat::Constant(3, 6, 0.7);
  pred.sigma = Mat::Ones(3, 2);
  const Mat truth = pred.mean_frames;
  const LossTerms t = hetero_nll_terms(pred.mean_frames, pred.sigma, truth);
  CHECK(t.weighted_mse == 0.0);
  CHECK(t.regularizer == 0.0);
  CHECK(t.total == 0.0);
  CHECK(hetero_nll_loss(pred, truth) == 0.0);
}

TEST_CASE("loss matches a hand-computed single-joint example") {
  // One frame, one joint, residual (0.3, 0, 0.4): |r|^2 = 0.25, sigma = 0.5.
  ProbabilisticPrediction pred;
  pred.mean_frames = Mat::Zero(1, 3);
  pred.sigma = Mat::Constant(1, 1, 0.5);
  Mat truth(1, 3);
  truth << 0.3, 0.0, 0.4;
  const LossTerms t = hetero_nll_terms(pred.mean_frames, pred.sigma, truth);
  CHECK(t.weighted_mse == doctest::Approx(0.25 / (2.0 * 0.25)).epsilon(1e-13));
  CHECK(t.regularizer == doctest::Approx(0.5 * std::log(0.25)).epsilon(1e-13));
  CHECK(t.total ==
        doctest::Approx(t.weighted_mse + t.regularizer).epsilon(1e-13));
}

TEST_CASE("loss averages over frames and joints") {
  // Two frames, two joints, all residual norms 1 and sigma e: each term is
  // 1/(2 e^2) + 1/2 log e^2 = 1/(2 e^2) + 1.
  const double e = std::exp(1.0);
  ProbabilisticPrediction pred;
  pred.mean_frames = Mat::Zero(2, 6);
  pred.sigma = Mat::Constant(2, 2, e);
  Mat truth = Mat::Zero(2, 6);
  truth.col(0).setOnes();  // joint 0 residual norm 1 in both frames
  truth.col(4).setOnes();  // joint 1 residual norm 1 in both frames
  const double per = 1.0 / (2.0 * e * e) + 1.0;
  CHECK(hetero_nll_loss(pred, truth) == doctest::Approx(per).epsilon(1e-14));
}

TEST_CASE("loss optimum sits at sigma^2 equal to the squared residual norm") {
  Mat truth(1, 3);
  truth << 0.6, -0.3, 0.2;
  const double r2 = truth.squaredNorm();
  ProbabilisticPrediction pred;
  pred.mean_frames = Mat::Zero(1, 3);
  auto loss_at = [&](double sigma) {
    pred.sigma = Mat::Constant(1, 1, sigma);
    return hetero_nll_loss(pred, truth);
  };
  const double best = loss_at(std::sqrt(r2));
  for (double scale : {0.25, 0.5, 0.9, 1.1, 2.0, 4.0})
    CHECK(loss_at(std::sqrt(r2) * scale) > best);
}

TEST_CASE("variance is clamped away from zero, nonpositive sigma rejected") {
  ProbabilisticPrediction pred;
  pred.mean_frames = Mat::Zero(1, 3);
  pred.sigma = Mat::Constant(1, 1, 1e-9);
  Mat truth(1, 3);
  truth << 1.0, 0.0, 0.0;
  // sigma^2 = 1e-18 hits the 1e-8 floor: 1/(2e-8) + 0.5 log(1e-8), finite.
  const double want = 1.0 / 2e-8 + 0.5 * std::log(1e-8);
  CHECK(hetero_nll_loss(pred, truth) == doctest::Approx(want).epsilon(1e-12));
  CHECK(std::isfinite(hetero_nll_loss(pred, truth)));

  pred.sigma = Mat::Constant(1, 1, 0.0);
  CHECK_THROWS_WITH_AS(hetero_nll_loss(pred, truth),
                       doctest::Contains("strictly positive"),
                       std::invalid_argument);
}

TEST_CASE("terms decompose exactly") {
  Rng rng(71);
  for (int trial = 0; trial < 25; ++trial) {
    const Mat mean = random_mat(3, 6, rng);
    const Mat sigma = random_mat(3, 2, rng, 0.1, 2.0);
    const Mat truth = random_mat(3, 6, rng);
    const LossTerms t = hetero_nll_terms(mean, sigma, truth);
    CHECK(t.total ==
          doctest::Approx(t.weighted_mse + t.regularizer).epsilon(1e-12));
  }
}

TEST_CASE("batch forward equals the predictor path") {
  const ModelParams params = tiny_model(31);
  const auto windows = walk_windows(3, 5, 4, 2, 9);
  std::vector<const WindowPair*> batch;
  std::vector<DropoutMaskSet> masks;
  double manual = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    batch.push_back(&windows[i]);
    masks.push_back(sample_masks(2, 4, 0.5, 1000 + i));
    const ProbabilisticPrediction pred = predict_with_masks(
        params, masks.back(), windows[i].observed.frames, 4);
    manual += hetero_nll_loss(pred, windows[i].future.frames);
  }
  manual /= static_cast<double>(windows.size());
  const double batched = batch_loss(params, batch, masks);
  CHECK(batched == doctest::Approx(manual).epsilon(1e-12));

  // Gradient entry point reports the same loss value.
  ModelParams grads = zeros_like(params);
  CHECK(batch_loss_and_gradients(params, batch, masks, grads) ==
        doctest::Approx(batched).epsilon(1e-12));
}

TEST_CASE("analytic gradients agree with finite differences") {
  const auto windows = walk_windows(1, 5, 3, 2, 33);
  const ModelParams params = tiny_model(41);

  SUBCASE("without dropout") {
    const DropoutMaskSet masks = all_keep_masks(2, 4);
    const GradCheckReport rep = grad_check(params, masks, windows[0], 1e-5);
    CAPTURE(rep.worst_tensor);
    CAPTURE(rep.worst_index);
    CHECK(rep.max_rel_error < 1e-4);
  }
  SUBCASE("with active masks") {
    const DropoutMaskSet masks = sample_masks(2, 4, 0.5, 5);
    const GradCheckReport rep = grad_check(params, masks, windows[0], 1e-5);
    CAPTURE(rep.worst_tensor);
    CHECK(rep.max_rel_error < 1e-4);
  }
}

TEST_CASE("input columns of dropped joints receive zero gradient") {
  const ModelParams params = tiny_model(51);
  const auto windows = walk_windows(1, 5, 3, 2, 13);
  DropoutMaskSet masks = all_keep_masks(2, 4);
  // Drop joint 0 entirely: all nine of its feature channels.
  for (Index block = 0; block < 3; ++block)
    masks.input_feature.segment(3 * (block * 2 + 0), 3).setZero();

  ModelParams grads = zeros_like(params);
  loss_gradients(params, masks, windows[0], grads);

  for (Index block = 0; block < 3; ++block)
    for (Index c = 3 * (block * 2 + 0); c < 3 * (block * 2 + 0) + 3; ++c) {
      CHECK(grads.encoder.w_update.col(c).cwiseAbs().maxCoeff() == 0.0);
      CHECK(grads.encoder.w_reset.col(c).cwiseAbs().maxCoeff() == 0.0);
      CHECK(grads.encoder.w_cand.col(c).cwiseAbs().maxCoeff() == 0.0);
      CHECK(grads.decoder.w_update.col(c).cwiseAbs().maxCoeff() == 0.0);
      CHECK(grads.decoder.w_reset.col(c).cwiseAbs().maxCoeff() == 0.0);
      CHECK(grads.decoder.w_cand.col(c).cwiseAbs().maxCoeff() == 0.0);
    }
  // The surviving joint still trains.
  CHECK(grads.encoder.w_update.col(3).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("fault injection: a corrupted gradient is caught and named") {
  const ModelParams params = tiny_model(61);
  const auto windows = walk_windows(1, 5, 3, 2, 17);
  const DropoutMaskSet masks = all_keep_masks(2, 4);

  ModelParams grads = zeros_like(params);
  loss_gradients(params, masks, windows[0], grads);
  grads.decoder.u_cand(1, 2) += 0.5;

  const GradCheckReport rep =
      grad_check_against(params, masks, windows[0], grads, 1e-5);
  CHECK(rep.max_rel_error > 1e-3);
  CHECK(rep.worst_tensor == "decoder.u_cand");
}

TEST_CASE("grad_check guards its preconditions") {
  const ModelParams params = tiny_model(71);
  const auto windows = walk_windows(1, 5, 3, 2, 19);
  const DropoutMaskSet masks = all_keep_masks(2, 4);
  CHECK_THROWS_AS(grad_check(params, masks, windows[0], 0.0),
                  std::invalid_argument);

  const ModelParams big = init_model(17, 64, 0.5, 1);
  CHECK(param_count(big) > 20000);
  const auto big_windows = walk_windows(1, 5, 3, 17, 23);
  CHECK_THROWS_WITH_AS(
      grad_check(big, all_keep_masks(17, 64), big_windows[0], 1e-5),
      doctest::Contains("20000"), std::invalid_argument);
}

TEST_CASE("loss_gradients reports non-finite losses loudly") {
  ModelParams params = tiny_model(81);
  params.encoder.w_update(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto windows = walk_windows(1, 5, 3, 2, 29);
  ModelParams grads = zeros_like(params);
  CHECK_THROWS_AS(
      loss_gradients(params, all_keep_masks(2, 4), windows[0], grads),
      std::runtime_error);
}

TEST_CASE("global norm clipping") {
  ModelParams grads = zeros_like(tiny_model(91));
  grads.encoder.w_update.setConstant(1.0);
  grads.head_bias.setConstant(2.0);
  const double norm = global_grad_norm(grads);
  const double expect = std::sqrt(grads.encoder.w_update.size() * 1.0 +
                                  grads.head_bias.size() * 4.0);
  CHECK(norm == doctest::Approx(expect).epsilon(1e-12));

  ModelParams clipped = grads;
  const double pre = clip_global_norm(clipped, 1.0);
  CHECK(pre == doctest::Approx(norm).epsilon(1e-12));
  CHECK(global_grad_norm(clipped) == doctest::Approx(1.0).epsilon(1e-12));
  // Direction is preserved.
  CHECK(clipped.head_bias(0) / clipped.encoder.w_update(0, 0) ==
        doctest::Approx(2.0).epsilon(1e-12));

  ModelParams small = zeros_like(grads);
  small.head_bias(0) = 0.25;
  clip_global_norm(small, 1.0);
  CHECK(small.head_bias(0) == 0.25);  // under the cap: untouched

  ModelParams off = grads;
  clip_global_norm(off, 0.0);  // disabled
  CHECK(off.encoder.w_update(0, 0) == 1.0);
}

TEST_CASE("adam: zero gradients with zero decay leave parameters fixed") {
  ModelParams params = tiny_model(95);
  const ModelParams before = params;
  OptimizerState opt = make_optimizer_state(params);
  const ModelParams zero_grads = zeros_like(params);
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  adam_step(params, opt, zero_grads, cfg);
  CHECK(params.encoder.w_update == before.encoder.w_update);
  CHECK(params.head_bias == before.head_bias);
  CHECK(opt.step == 1);
}

TEST_CASE("adam: first step matches the closed form") {
  // With bias correction, step 1 moves by -lr * g / (|g| + eps) elementwise.
  ModelParams params = tiny_model(97);
  OptimizerState opt = make_optimizer_state(params);
  ModelParams grads = zeros_like(params);
  grads.head_bias(0) = 0.7;
  grads.encoder.b_cand(1) = -0.02;

  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.weight_decay = 0.0;
  const double b0 = params.head_bias(0);
  const double c1 = params.encoder.b_cand(1);
  adam_step(params, opt, grads, cfg);
  CHECK(params.head_bias(0) ==
        doctest::Approx(b0 - 1e-3 * 0.7 / (0.7 + 1e-8)).epsilon(1e-12));
  CHECK(params.encoder.b_cand(1) ==
        doctest::Approx(c1 + 1e-3 * 0.02 / (0.02 + 1e-8)).epsilon(1e-12));
  // Untouched coordinates have zero gradient and zero decay: unchanged.
  CHECK(params.head_bias(1) == tiny_model(97).head_bias(1));
}

TEST_CASE("adam: constant gradient approaches a unit-scaled step") {
  ModelParams params = tiny_model(99);
  OptimizerState opt = make_optimizer_state(params);
  ModelParams grads = zeros_like(params);
  grads.head_bias(0) = 0.3;
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.weight_decay = 0.0;
  double prev = params.head_bias(0);
  double step_size = 0.0;
  for (int i = 0; i < 200; ++i) {
    adam_step(params, opt, grads, cfg);
    step_size = prev - params.head_bias(0);
    prev = params.head_bias(0);
  }
  // m_hat / sqrt(v_hat) -> 1 for a constant gradient.
  CHECK(step_size == doctest::Approx(1e-2).epsilon(1e-3));
}

TEST_CASE("adam: decoupled decay shrinks all tensors multiplicatively") {
  ModelParams params = tiny_model(103);
  const double w0 = params.encoder.u_reset(2, 2);
  OptimizerState opt = make_optimizer_state(params);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.5;
  adam_step(params, opt, zeros_like(params), cfg);
  CHECK(params.encoder.u_reset(2, 2) ==
        doctest::Approx(w0 * (1.0 - 0.1 * 0.5)).epsilon(1e-14));
}

TEST_CASE("training runs, learns, and is seed-deterministic") {
  TrainConfig cfg;
  cfg.t_p = 5;
  cfg.t_f = 4;
  cfg.hidden_size = 6;
  cfg.batch_size = 4;
  cfg.epochs = 4;
  cfg.learning_rate = 3e-3;
  cfg.dropout_rate = 0.2;
  cfg.rng_seed = 12;

  const auto train_set = walk_windows(12, 5, 4, 2, 301);
  const auto val_set = walk_windows(4, 5, 4, 2, 302);

  const TrainResult a = train(cfg, train_set, val_set, 25.0, "walk");
  REQUIRE(a.curve.size() == 4);
  CHECK(a.best_epoch >= 1);
  CHECK(a.best_epoch <= 4);
  CHECK(a.checkpoint.train_label == "walk");
  CHECK(a.checkpoint.t_p == 5);
  CHECK(a.checkpoint.t_f == 4);
  for (const EpochStats& es : a.curve) {
    CHECK(std::isfinite(es.train_loss));
    CHECK(std::isfinite(es.val_loss));
    CHECK(es.val_mpjpe_400ms >= 0.0);
  }
  // The best epoch holds the minimum validation loss on the curve.
  double min_val = a.curve[0].val_loss;
  for (const EpochStats& es : a.curve) min_val = std::min(min_val, es.val_loss);
  CHECK(a.curve[a.best_epoch - 1].val_loss == min_val);

  const TrainResult b = train(cfg, train_set, val_set, 25.0, "walk");
  CHECK(checkpoint_bytes(a.checkpoint) == checkpoint_bytes(b.checkpoint));
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].train_loss == b.curve[i].train_loss);
    CHECK(a.curve[i].val_loss == b.curve[i].val_loss);
  }

  TrainConfig other = cfg;
  other.rng_seed = 13;
  const TrainResult c = train(other, train_set, val_set, 25.0, "walk");
  CHECK(checkpoint_bytes(a.checkpoint) != checkpoint_bytes(c.checkpoint));
}

TEST_CASE("empty validation set falls back to training windows") {
  TrainConfig cfg;
  cfg.t_p = 5;
  cfg.t_f = 3;
  cfg.hidden_size = 4;
  cfg.batch_size = 8;
  cfg.epochs = 2;
  cfg.rng_seed = 5;
  const auto train_set = walk_windows(6, 5, 3, 2, 401);
  const TrainResult res = train(cfg, train_set, {}, 25.0, "walk");
  CHECK(res.curve.size() == 2);
  CHECK(std::isfinite(res.curve.back().val_loss));
}

TEST_CASE("train validates its configuration") {
  const auto train_set = walk_windows(2, 5, 3, 2, 501);
  TrainConfig cfg;
  cfg.t_p = 5;
  cfg.t_f = 3;
  cfg.hidden_size = 4;
  cfg.epochs = 1;

  TrainConfig bad = cfg;
  bad.mc_train_seed_policy = "shared";
  CHECK_THROWS_WITH_AS(train(bad, train_set, {}, 25.0, ""),
                       doctest::Contains("mc_train_seed_policy"),
                       std::invalid_argument);

  bad = cfg;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(train(bad, train_set, {}, 25.0, ""), std::invalid_argument);

  bad = cfg;
  bad.dropout_rate = 1.0;
  CHECK_THROWS_AS(train(bad, train_set, {}, 25.0, ""), std::invalid_argument);

  bad = cfg;
  bad.t_p = 6;  // windows were cut for t_p = 5
  CHECK_THROWS_AS(train(bad, train_set, {}, 25.0, ""), std::invalid_argument);

  CHECK_THROWS_AS(train(cfg, {}, {}, 25.0, ""), std::invalid_argument);
  CHECK_THROWS_AS(train(cfg, train_set, {}, 0.0, ""), std::invalid_argument);
}

TEST_SUITE_END();
