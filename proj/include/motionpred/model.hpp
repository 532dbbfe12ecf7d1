#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "motionpred/types.hpp"

namespace motionpred {

// One gated recurrent cell. Update/reset gates are logistic, the candidate is
// tanh, and the new state mixes as (1-z) (.) h + z (.) candidate.
struct GruCellParams {
  Mat w_update, u_update;
  Vec b_update;
  Mat w_reset, u_reset;
  Vec b_reset;
  Mat w_cand, u_cand;
  Vec b_cand;

  Index input_size() const { return w_update.cols(); }
  Index hidden_size() const { return w_update.rows(); }
};

// Full predictor: difference-feature encoder cell, closed-loop decoder cell,
// and a single affine head emitting 3J velocity means followed by J
// log-variances.
struct ModelParams {
  GruCellParams encoder;
  GruCellParams decoder;
  Mat head_weight;  // (3J + J) x H
  Vec head_bias;    // 3J + J
  Index num_joints = 17;
  Index hidden_size = 64;
  double dropout_rate = 0.5;

  Index feature_size() const { return 9 * num_joints; }
};

// Weights drawn uniformly in +-1/sqrt(fan_in); the output head starts at zero
// so an untrained model reproduces the zero-velocity baseline with unit sigma.
ModelParams init_model(Index num_joints, Index hidden_size,
                       double dropout_rate, std::uint64_t seed);

ModelParams zeros_like(const ModelParams& params);
Index param_count(const ModelParams& params);

// Mutable view of one named parameter tensor; Eigen storage is contiguous.
struct TensorRef {
  std::string name;
  double* data;
  Index size;
};
std::vector<TensorRef> tensor_refs(ModelParams& params);

// Applies fn(name, matrix_or_vector) to every tensor, in a fixed order shared
// with tensor_refs.
template <class Params, class Fn>
void for_each_tensor(Params& params, Fn&& fn) {
  auto cell = [&](const char* prefix, auto& c) {
    const std::string p(prefix);
    fn(p + ".w_update", c.w_update);
    fn(p + ".u_update", c.u_update);
    fn(p + ".b_update", c.b_update);
    fn(p + ".w_reset", c.w_reset);
    fn(p + ".u_reset", c.u_reset);
    fn(p + ".b_reset", c.b_reset);
    fn(p + ".w_cand", c.w_cand);
    fn(p + ".u_cand", c.u_cand);
    fn(p + ".b_cand", c.b_cand);
  };
  cell("encoder", params.encoder);
  cell("decoder", params.decoder);
  fn(std::string("head.weight"), params.head_weight);
  fn(std::string("head.bias"), params.head_bias);
}

// Multipliers for one stochastic forward pass: 0 for dropped units and
// 1/(1-rate) for kept ones, sampled once and reused at every time step.
// The input mask drops all nine feature channels of a joint together.
struct DropoutMaskSet {
  Vec input_feature;  // 9J
  Vec hidden_enc;     // H
  Vec hidden_dec;     // H
};

DropoutMaskSet sample_masks(Index num_joints, Index hidden_size, double rate,
                            std::uint64_t seed);
DropoutMaskSet all_keep_masks(Index num_joints, Index hidden_size);

// Versioned binary checkpoint: model dimensions, dropout rate, training tag,
// default window lengths, normalization stats, and every named tensor.
// Round-trips bit-exactly.
struct Checkpoint {
  ModelParams params;
  NormalizationStats stats;
  std::string train_label;
  Index t_p = 50;
  Index t_f = 50;
};

std::string checkpoint_bytes(const Checkpoint& ck);
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a; used to pin calibrations to one checkpoint file.
std::uint64_t fnv1a64_bytes(std::string_view bytes);
std::uint64_t fnv1a64_file(const std::string& path);
std::string hash_hex(std::uint64_t hash);

}  // namespace motionpred
