#include "motionpred/predictor.hpp"

#include <cmath>
#include <stdexcept>

#include "motionpred/motion_data.hpp"

namespace motionpred {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Variational-dropout recurrence: the mask scales the state where the gates
// consume it, while the carried state stays unmasked. Carrying the masked
// value instead would compound the 1/(1-p) keep scale every step and overflow
// the exp in the sigma head on long horizons.
Vec gru_step_masked(const GruCellParams& cell, const Vec& u, const Vec& h_prev,
                    const Vec& m) {
  const Vec hm = m.cwiseProduct(h_prev);
  const Vec z = (cell.w_update * u + cell.u_update * hm + cell.b_update)
                    .unaryExpr([](double x) { return sigmoid(x); });
  const Vec r = (cell.w_reset * u + cell.u_reset * hm + cell.b_reset)
                    .unaryExpr([](double x) { return sigmoid(x); });
  const Vec c =
      (cell.w_cand * u + cell.u_cand * r.cwiseProduct(hm) + cell.b_cand)
          .array()
          .tanh()
          .matrix();
  return ((1.0 - z.array()) * h_prev.array() + z.array() * c.array()).matrix();
}

}  // namespace

Mat dynamics_features(const Mat& frames) {
  if (frames.rows() < 3)
    throw std::invalid_argument("dynamics_features: need at least 3 frames");
  const Index f = frames.rows();
  const Index d = frames.cols();
  Mat feats(f - 2, 3 * d);
  for (Index t = 2; t < f; ++t) {
    feats.block(t - 2, 0, 1, d) = frames.row(t);
    feats.block(t - 2, d, 1, d) = frames.row(t) - frames.row(t - 1);
    feats.block(t - 2, 2 * d, 1, d) =
        frames.row(t) - 2.0 * frames.row(t - 1) + frames.row(t - 2);
  }
  return feats;
}

Mat gru_cell_forward(const GruCellParams& cell, const Mat& u,
                     const Mat& h_prev) {
  if (u.rows() != cell.input_size() || h_prev.rows() != cell.hidden_size() ||
      u.cols() != h_prev.cols())
    throw std::invalid_argument("gru_cell_forward: dimension mismatch");
  const Mat z = ((cell.w_update * u + cell.u_update * h_prev).colwise() +
                 cell.b_update)
                    .unaryExpr([](double x) { return sigmoid(x); });
  const Mat r =
      ((cell.w_reset * u + cell.u_reset * h_prev).colwise() + cell.b_reset)
          .unaryExpr([](double x) { return sigmoid(x); });
  const Mat c =
      ((cell.w_cand * u + cell.u_cand * r.cwiseProduct(h_prev)).colwise() +
       cell.b_cand)
          .array()
          .tanh()
          .matrix();
  return ((1.0 - z.array()) * h_prev.array() + z.array() * c.array()).matrix();
}

Vec encode(const ModelParams& params, const DropoutMaskSet& masks,
           const Mat& observed) {
  if (observed.cols() != 3 * params.num_joints)
    throw std::invalid_argument("encode: joint count mismatch");
  if (observed.rows() < 3)
    throw std::invalid_argument("encode: need at least 3 observed frames");
  const Mat feats = dynamics_features(observed);
  Vec h = Vec::Zero(params.hidden_size);
  for (Index t = 0; t < feats.rows(); ++t) {
    const Vec u = masks.input_feature.cwiseProduct(feats.row(t).transpose());
    h = gru_step_masked(params.encoder, u, h, masks.hidden_enc);
  }
  return h;
}

DecodeStep decode_step(const ModelParams& params, const DropoutMaskSet& masks,
                       const Vec& h, const Vec& feature) {
  const Index d = 3 * params.num_joints;
  const Vec u = masks.input_feature.cwiseProduct(feature);
  DecodeStep step;
  step.hidden = gru_step_masked(params.decoder, u, h, masks.hidden_dec);
  const Vec head =
      params.head_weight * masks.hidden_dec.cwiseProduct(step.hidden) +
      params.head_bias;
  step.velocity = head.head(d);
  step.log_var = head.tail(params.num_joints);
  return step;
}

ProbabilisticPrediction decode(const ModelParams& params,
                               const DropoutMaskSet& masks, const Mat& observed,
                               const Vec& hidden, Index t_f) {
  if (t_f < 1) throw std::invalid_argument("decode: t_f must be >= 1");
  const Index d = 3 * params.num_joints;
  ProbabilisticPrediction out;
  out.mean_frames.resize(t_f, d);
  out.sigma.resize(t_f, params.num_joints);

  RowVec p_a = observed.row(observed.rows() - 3);
  RowVec p_b = observed.row(observed.rows() - 2);
  RowVec p_c = observed.row(observed.rows() - 1);
  Vec h = hidden;
  Vec feature(3 * d);
  for (Index s = 0; s < t_f; ++s) {
    feature.segment(0, d) = p_c.transpose();
    feature.segment(d, d) = (p_c - p_b).transpose();
    feature.segment(2 * d, d) = (p_c - 2.0 * p_b + p_a).transpose();
    const DecodeStep step = decode_step(params, masks, h, feature);
    h = step.hidden;
    out.mean_frames.row(s) = p_c + step.velocity.transpose();
    out.sigma.row(s) = (step.log_var.array() * 0.5).exp().transpose();
    p_a = p_b;
    p_b = p_c;
    p_c = out.mean_frames.row(s);
  }
  return out;
}

ProbabilisticPrediction predict_with_masks(const ModelParams& params,
                                           const DropoutMaskSet& masks,
                                           const Mat& observed, Index t_f) {
  return decode(params, masks, observed, encode(params, masks, observed), t_f);
}

ProbabilisticPrediction predict_once(const ModelParams& params,
                                     std::uint64_t mask_seed,
                                     const Mat& observed, Index t_f) {
  const DropoutMaskSet masks = sample_masks(
      params.num_joints, params.hidden_size, params.dropout_rate, mask_seed);
  ProbabilisticPrediction pred =
      predict_with_masks(params, masks, observed, t_f);
  pred.mask_seed = mask_seed;
  return pred;
}

ProbabilisticPrediction predict_deterministic(const ModelParams& params,
                                              const Mat& observed, Index t_f) {
  return predict_with_masks(
      params, all_keep_masks(params.num_joints, params.hidden_size), observed,
      t_f);
}

McEnsemble mc_sample(const ModelParams& params, const Mat& observed, Index n,
                     Index t_f, std::uint64_t base_seed) {
  if (n < 2) throw std::invalid_argument("mc_sample: need n >= 2 members");
  McEnsemble ens;
  ens.members.reserve(n);
  for (Index i = 0; i < n; ++i)
    ens.members.push_back(predict_once(
        params, base_seed + static_cast<std::uint64_t>(i), observed, t_f));
  return ens;
}

Mat ensemble_mean(const McEnsemble& ensemble) {
  if (ensemble.members.empty())
    throw std::invalid_argument("ensemble_mean: empty ensemble");
  Mat acc = Mat::Zero(ensemble.members[0].mean_frames.rows(),
                      ensemble.members[0].mean_frames.cols());
  for (const auto& m : ensemble.members) {
    if (m.mean_frames.rows() != acc.rows() || m.mean_frames.cols() != acc.cols())
      throw std::invalid_argument("ensemble_mean: member shape mismatch");
    acc += m.mean_frames;
  }
  return acc / static_cast<double>(ensemble.members.size());
}

ProbabilisticPrediction prediction_to_meters(
    const ProbabilisticPrediction& pred, const NormalizationStats& stats) {
  ProbabilisticPrediction out;
  out.mask_seed = pred.mask_seed;
  out.mean_frames = denormalize(pred.mean_frames, stats);
  const Index j = pred.sigma.cols();
  RowVec rms(j);
  for (Index k = 0; k < j; ++k)
    rms(k) = std::sqrt(stats.scale.segment(3 * k, 3).squaredNorm() / 3.0);
  out.sigma = pred.sigma.array().rowwise() * rms.array();
  return out;
}

McEnsemble sample_ensemble_meters(const ModelParams& params,
                                  const NormalizationStats& stats,
                                  const Mat& observed_meters, Index n,
                                  Index t_f, std::uint64_t base_seed) {
  const Mat observed = normalize(observed_meters, stats);
  McEnsemble ens = mc_sample(params, observed, n, t_f, base_seed);
  for (auto& m : ens.members) m = prediction_to_meters(m, stats);
  return ens;
}

}  // namespace motionpred
