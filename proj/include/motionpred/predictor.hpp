#pragma once

#include <cstdint>
#include <vector>

#include "motionpred/model.hpp"
#include "motionpred/types.hpp"

namespace motionpred {

// Per-frame dynamics features [x, v, a], each 3J wide (9J total). Row i
// describes input frame i+2: v = x_t - x_{t-1}, a = v_t - v_{t-1}. F input
// frames yield F-2 rows, so the encoder starts at the third observed frame.
Mat dynamics_features(const Mat& frames);

// One GRU step for a column batch: u is D x B, h_prev is H x B.
// z, r are sigmoid gates; the candidate is tanh over (u, r (*) h_prev);
// h' = (1 - z) (*) h_prev + z (*) candidate.
Mat gru_cell_forward(const GruCellParams& cell, const Mat& u, const Mat& h_prev);

struct ProbabilisticPrediction {
  Mat mean_frames;             // T_f x 3J positions
  Mat sigma;                   // T_f x J per-joint isotropic spread
  std::uint64_t mask_seed = 0; // dropout draw that produced this member
};

struct McEnsemble {
  std::vector<ProbabilisticPrediction> members;
};

// Encoder pass over an observed window (>= 3 frames). h starts at zero; each
// step masks the feature with input_feature and feeds the hidden_enc-masked
// state to the gates, while the carried state stays unmasked so the keep
// scale cannot compound across steps. Returns the final hidden state.
Vec encode(const ModelParams& params, const DropoutMaskSet& masks,
           const Mat& observed);

struct DecodeStep {
  Vec velocity;  // 3J
  Vec log_var;   // J
  Vec hidden;    // H, unmasked carry; feed back as h for the next step
};

// One decoder step on a raw (unmasked) 9J feature. The gates and the head
// consume the hidden_dec-masked state; sigma for the step is exp(log_var / 2).
DecodeStep decode_step(const ModelParams& params, const DropoutMaskSet& masks,
                       const Vec& h, const Vec& feature);

// Closed-loop decode for t_f steps: each step's feature is rebuilt from the
// last three positions, seeded by the final three observed frames, and
// x_t = x_{t-1} + v_t.
ProbabilisticPrediction decode(const ModelParams& params,
                               const DropoutMaskSet& masks, const Mat& observed,
                               const Vec& hidden, Index t_f);

// One stochastic pass with the given masks held fixed across all time steps.
ProbabilisticPrediction predict_with_masks(const ModelParams& params,
                                           const DropoutMaskSet& masks,
                                           const Mat& observed, Index t_f);

// Samples one mask set from mask_seed at the model's dropout rate, then runs
// predict_with_masks. Pure function of (params, mask_seed, observed, t_f).
ProbabilisticPrediction predict_once(const ModelParams& params,
                                     std::uint64_t mask_seed,
                                     const Mat& observed, Index t_f);

// All-keep masks: the dropout-free prediction.
ProbabilisticPrediction predict_deterministic(const ModelParams& params,
                                              const Mat& observed, Index t_f);

// n >= 2 stochastic passes with mask seeds base_seed .. base_seed + n - 1,
// members ordered by seed.
McEnsemble mc_sample(const ModelParams& params, const Mat& observed, Index n,
                     Index t_f, std::uint64_t base_seed);

// Elementwise mean of the member mean tensors.
Mat ensemble_mean(const McEnsemble& ensemble);

// Maps a normalized-space prediction to meters: positions are denormalized,
// each joint's sigma is scaled by the RMS of its three coordinate scales.
ProbabilisticPrediction prediction_to_meters(const ProbabilisticPrediction& pred,
                                             const NormalizationStats& stats);

// Normalizes a meter-space observed window, samples the ensemble, maps every
// member back to meters.
McEnsemble sample_ensemble_meters(const ModelParams& params,
                                  const NormalizationStats& stats,
                                  const Mat& observed_meters, Index n, Index t_f,
                                  std::uint64_t base_seed);

}  // namespace motionpred
