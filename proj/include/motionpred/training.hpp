#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motionpred/model.hpp"
#include "motionpred/predictor.hpp"
#include "motionpred/types.hpp"

namespace motionpred {

struct TrainConfig {
  double learning_rate = 5e-4;
  double weight_decay = 1e-4;
  Index batch_size = 16;  // 128 at full scale
  double dropout_rate = 0.5;
  Index epochs = 40;
  std::uint64_t rng_seed = 1;
  Index t_p = 50;
  Index t_f = 50;
  // "per-sample" draws a fresh mask set per sample per step; the only policy.
  std::string mc_train_seed_policy = "per-sample";
  Index hidden_size = 64;  // 1440 at full scale
  double grad_clip_norm = 5.0;  // global norm; 0 disables clipping
};

struct LossTerms {
  double weighted_mse = 0.0;  // mean of |x - xhat|^2 / (2 sigma^2)
  double regularizer = 0.0;   // mean of (1/2) log sigma^2
  double total = 0.0;
};

// Heteroscedastic NLL over a horizon: mean over frames and joints of
// |x - xhat|^2 / (2 sigma^2) + (1/2) log sigma^2, with |.| the Euclidean
// norm over the joint's 3 coordinates and sigma^2 clamped at 1e-8.
// total is accumulated in one fused loop; the two terms separately.
LossTerms hetero_nll_terms(const Mat& pred_mean, const Mat& sigma,
                           const Mat& truth);
double hetero_nll_loss(const ProbabilisticPrediction& pred, const Mat& truth);

// Batched stochastic forward over normalized windows; masks[i] applies to
// batch[i] and stays fixed across all time steps of that sample. Returns the
// batch-mean NLL. All windows must share t_p, t_f and J.
double batch_loss(const ModelParams& params,
                  const std::vector<const WindowPair*>& batch,
                  const std::vector<DropoutMaskSet>& masks);

// Same forward plus exact BPTT through the closed-loop decoder and the
// encoder; grads is overwritten. Dropout masks are constants.
double batch_loss_and_gradients(const ModelParams& params,
                                const std::vector<const WindowPair*>& batch,
                                const std::vector<DropoutMaskSet>& masks,
                                ModelParams& grads);

// Single-window convenience wrapper; throws on non-finite loss with the
// offending decode step in the message.
double loss_gradients(const ModelParams& params, const DropoutMaskSet& masks,
                      const WindowPair& window, ModelParams& grads);

double global_grad_norm(const ModelParams& grads);

// Scales all gradients to max_norm when the global norm exceeds it
// (no-op when max_norm <= 0). Returns the pre-clip norm.
double clip_global_norm(ModelParams& grads, double max_norm);

struct OptimizerState {
  ModelParams m;
  ModelParams v;
  Index step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

OptimizerState make_optimizer_state(const ModelParams& params);

// Bias-corrected Adam update -lr * mhat / (sqrt(vhat) + eps), then decoupled
// multiplicative decay *(1 - lr * weight_decay) on every tensor.
void adam_step(ModelParams& params, OptimizerState& state,
               const ModelParams& grads, const TrainConfig& config);

struct EpochStats {
  Index epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_mpjpe_400ms = 0.0;  // meters, deterministic (all-keep) pass
};

struct TrainResult {
  Checkpoint checkpoint;  // parameters with best validation loss
  std::vector<EpochStats> curve;
  Index best_epoch = 0;
};

// Seeded mini-batch training on meter-space windows. Normalization is fit on
// train_set only; training runs in normalized space; val_mpjpe_400ms is in
// meters. With an empty val_set the validation metrics are computed on the
// training windows in eval mode. Non-finite loss aborts with epoch/step.
TrainResult train(const TrainConfig& config,
                  const std::vector<WindowPair>& train_set,
                  const std::vector<WindowPair>& val_set, double frame_rate_hz,
                  const std::string& train_label);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of every parameter against analytic gradients.
// Relative error is |a - n| / max(|a|, |n|, 1e-4); the floor keeps
// finite-difference noise on near-zero gradients from dominating while still
// bounding their absolute disagreement at 1e-8 under the 1e-4 gate.
// Guard: param_count <= 20000; epsilon must be > 0.
GradCheckReport grad_check(const ModelParams& params,
                           const DropoutMaskSet& masks,
                           const WindowPair& window, double epsilon);

// Same scan against caller-supplied gradients (fault-injection support).
GradCheckReport grad_check_against(const ModelParams& params,
                                   const DropoutMaskSet& masks,
                                   const WindowPair& window,
                                   const ModelParams& analytic, double epsilon);

}  // namespace motionpred
