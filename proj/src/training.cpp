#include "motionpred/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "motionpred/evaluation.hpp"
#include "motionpred/motion_data.hpp"
#include "motionpred/rng.hpp"

namespace motionpred {

namespace {

constexpr double kVarianceFloor = 1e-8;
constexpr std::uint64_t kSeedInit = 0x696e6974ULL;
constexpr std::uint64_t kSeedShuffle = 0x73687566ULL;
constexpr std::uint64_t kSeedMask = 0x6d61736bULL;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct CellCache {
  Mat u;       // masked input, D x B
  Mat h_prev;  // previous carried state (unmasked), H x B
  Mat hm;      // mask (*) h_prev as the gates consumed it, H x B
  Mat z, r, c;
};

// Variational-dropout recurrence: the mask scales the state where the gates
// consume it; the carry h = (1-z)(*)h_prev + z(*)c stays unmasked so the
// 1/(1-p) keep scale cannot compound across steps.
Mat gru_step(const GruCellParams& cell, const Mat& u, const Mat& h_prev,
             const Mat& m, CellCache* cc) {
  Mat hm = m.cwiseProduct(h_prev);
  Mat z = ((cell.w_update * u + cell.u_update * hm).colwise() + cell.b_update)
              .unaryExpr([](double x) { return sigmoid(x); });
  Mat r = ((cell.w_reset * u + cell.u_reset * hm).colwise() + cell.b_reset)
              .unaryExpr([](double x) { return sigmoid(x); });
  Mat c = ((cell.w_cand * u + cell.u_cand * r.cwiseProduct(hm)).colwise() +
           cell.b_cand)
              .array()
              .tanh()
              .matrix();
  Mat h = ((1.0 - z.array()) * h_prev.array() + z.array() * c.array()).matrix();
  if (cc) {
    cc->u = u;
    cc->h_prev = h_prev;
    cc->hm = std::move(hm);
    cc->z = std::move(z);
    cc->r = std::move(r);
    cc->c = std::move(c);
  }
  return h;
}

// dh is the gradient on the carried state h = (1-z)(*)h_prev + z(*)c.
void gru_backward(const GruCellParams& cell, const CellCache& cc, const Mat& dh,
                  const Mat& m, GruCellParams& g, Mat* dh_prev_out,
                  Mat* du_out) {
  const Mat dc = dh.cwiseProduct(cc.z);
  const Mat dz = dh.cwiseProduct(cc.c - cc.h_prev);
  Mat dh_prev = (dh.array() * (1.0 - cc.z.array())).matrix();
  const Mat dah = (dc.array() * (1.0 - cc.c.array().square())).matrix();
  const Mat drh = cell.u_cand.transpose() * dah;
  const Mat dr = drh.cwiseProduct(cc.hm);
  Mat dhm = drh.cwiseProduct(cc.r);
  const Mat daz = (dz.array() * cc.z.array() * (1.0 - cc.z.array())).matrix();
  const Mat dar = (dr.array() * cc.r.array() * (1.0 - cc.r.array())).matrix();
  g.w_cand.noalias() += dah * cc.u.transpose();
  g.u_cand.noalias() += dah * cc.r.cwiseProduct(cc.hm).transpose();
  g.b_cand += dah.rowwise().sum();
  g.w_update.noalias() += daz * cc.u.transpose();
  g.u_update.noalias() += daz * cc.hm.transpose();
  g.b_update += daz.rowwise().sum();
  dhm.noalias() += cell.u_update.transpose() * daz;
  g.w_reset.noalias() += dar * cc.u.transpose();
  g.u_reset.noalias() += dar * cc.hm.transpose();
  g.b_reset += dar.rowwise().sum();
  dhm.noalias() += cell.u_reset.transpose() * dar;
  dh_prev += m.cwiseProduct(dhm);
  if (du_out)
    du_out->noalias() = cell.w_update.transpose() * daz +
                        cell.w_reset.transpose() * dar +
                        cell.w_cand.transpose() * dah;
  *dh_prev_out = std::move(dh_prev);
}

struct ForwardCache {
  Index batch = 0, t_enc = 0, t_fut = 0, joints = 0;
  Mat m_in, m_enc, m_dec;  // per-sample masks as columns
  std::vector<CellCache> enc;
  std::vector<CellCache> dec;
  std::vector<Mat> dec_state;  // D_s after hidden_dec mask, H x B
  std::vector<Mat> s2;         // clamped variance, J x B
  std::vector<Mat> unclamped;  // 1 where variance above the floor, J x B
  std::vector<Mat> resid;      // prediction - truth, 3J x B
  std::vector<Mat> sq;         // per-joint squared residual norm, J x B
};

double forward_pass(const ModelParams& params,
                    const std::vector<const WindowPair*>& batch,
                    const std::vector<DropoutMaskSet>& masks,
                    ForwardCache* cache, Index* bad_step) {
  if (batch.empty())
    throw std::invalid_argument("forward: batch must be non-empty");
  if (masks.size() != batch.size())
    throw std::invalid_argument("forward: one mask set per sample required");
  const Index b_n = static_cast<Index>(batch.size());
  const Index j_n = params.num_joints;
  const Index d = 3 * j_n;
  const Index feat = 9 * j_n;
  const Index h_n = params.hidden_size;
  const Index t_p = batch[0]->observed.frames.rows();
  const Index t_fut = batch[0]->future.frames.rows();
  if (t_p < 3)
    throw std::invalid_argument("forward: observed window needs >= 3 frames");
  if (t_fut < 1) throw std::invalid_argument("forward: empty future window");
  for (const WindowPair* w : batch)
    if (w->observed.frames.rows() != t_p || w->future.frames.rows() != t_fut ||
        w->observed.frames.cols() != d || w->future.frames.cols() != d)
      throw std::invalid_argument("forward: batch windows must share t_p, t_f and J");

  const Index t_enc = t_p - 2;
  Mat m_in(feat, b_n), m_enc(h_n, b_n), m_dec(h_n, b_n);
  for (Index b = 0; b < b_n; ++b) {
    if (masks[b].input_feature.size() != feat ||
        masks[b].hidden_enc.size() != h_n || masks[b].hidden_dec.size() != h_n)
      throw std::invalid_argument("forward: mask dimensions mismatch the model");
    m_in.col(b) = masks[b].input_feature;
    m_enc.col(b) = masks[b].hidden_enc;
    m_dec.col(b) = masks[b].hidden_dec;
  }
  if (cache) {
    cache->batch = b_n;
    cache->t_enc = t_enc;
    cache->t_fut = t_fut;
    cache->joints = j_n;
    cache->m_in = m_in;
    cache->m_enc = m_enc;
    cache->m_dec = m_dec;
    cache->enc.reserve(t_enc);
    cache->dec.reserve(t_fut);
    cache->dec_state.reserve(t_fut);
    cache->s2.reserve(t_fut);
    cache->unclamped.reserve(t_fut);
    cache->resid.reserve(t_fut);
    cache->sq.reserve(t_fut);
  }

  Mat f(feat, b_n);
  Mat h = Mat::Zero(h_n, b_n);
  for (Index t = 0; t < t_enc; ++t) {
    for (Index b = 0; b < b_n; ++b) {
      const Mat& o = batch[b]->observed.frames;
      f.col(b).segment(0, d) = o.row(t + 2).transpose();
      f.col(b).segment(d, d) = (o.row(t + 2) - o.row(t + 1)).transpose();
      f.col(b).segment(2 * d, d) =
          (o.row(t + 2) - 2.0 * o.row(t + 1) + o.row(t)).transpose();
    }
    const Mat u = m_in.cwiseProduct(f);
    CellCache cc;
    h = gru_step(params.encoder, u, h, m_enc, cache ? &cc : nullptr);
    if (cache) cache->enc.push_back(std::move(cc));
  }

  std::vector<Mat> pos(3);
  for (Index k = 0; k < 3; ++k) {
    pos[k].resize(d, b_n);
    for (Index b = 0; b < b_n; ++b)
      pos[k].col(b) = batch[b]->observed.frames.row(t_p - 3 + k).transpose();
  }
  Mat p_a = pos[0], p_b = pos[1], p_c = pos[2];

  double loss = 0.0;
  Index bad = -1;
  Mat state = h;
  for (Index s = 0; s < t_fut; ++s) {
    f.topRows(d) = p_c;
    f.middleRows(d, d) = p_c - p_b;
    f.bottomRows(d) = p_c - 2.0 * p_b + p_a;
    const Mat u = m_in.cwiseProduct(f);
    CellCache cc;
    Mat h_new = gru_step(params.decoder, u, state, m_dec, cache ? &cc : nullptr);
    Mat d_s = m_dec.cwiseProduct(h_new);
    const Mat head = (params.head_weight * d_s).colwise() + params.head_bias;
    Mat p_new = p_c + head.topRows(d);
    const Mat var_raw =
        (head.bottomRows(j_n).array() * 0.5).exp().square().matrix();
    Mat s2 = var_raw.array().max(kVarianceFloor).matrix();
    Mat unclamped = (var_raw.array() > kVarianceFloor).cast<double>().matrix();
    Mat resid(d, b_n);
    for (Index b = 0; b < b_n; ++b)
      resid.col(b) = p_new.col(b) - batch[b]->future.frames.row(s).transpose();
    Mat sq(j_n, b_n);
    for (Index jj = 0; jj < j_n; ++jj)
      sq.row(jj) = resid.middleRows(3 * jj, 3).colwise().squaredNorm();
    const double step_loss =
        (sq.array() / (2.0 * s2.array()) + 0.5 * s2.array().log()).sum();
    if (!std::isfinite(step_loss) && bad < 0) bad = s;
    loss += step_loss;
    if (cache) {
      cache->dec.push_back(std::move(cc));
      cache->dec_state.push_back(std::move(d_s));
      cache->s2.push_back(std::move(s2));
      cache->unclamped.push_back(std::move(unclamped));
      cache->resid.push_back(std::move(resid));
      cache->sq.push_back(std::move(sq));
    }
    state = std::move(h_new);
    p_a = std::move(p_b);
    p_b = std::move(p_c);
    p_c = std::move(p_new);
  }
  if (bad_step) *bad_step = bad;
  return loss / static_cast<double>(b_n * t_fut * j_n);
}

void backward_pass(const ModelParams& params, const ForwardCache& c,
                   ModelParams& grads) {
  grads = zeros_like(params);
  const Index b_n = c.batch;
  const Index j_n = c.joints;
  const Index d = 3 * j_n;
  const Index h_n = params.hidden_size;
  const double inv = 1.0 / static_cast<double>(b_n * c.t_fut * j_n);

  std::vector<Mat> dpos(c.t_fut + 3, Mat::Zero(d, b_n));
  Mat dcarry = Mat::Zero(h_n, b_n);
  Mat dhead(4 * j_n, b_n);
  Mat dh_prev, du;
  for (Index s = c.t_fut; s-- > 0;) {
    for (Index jj = 0; jj < j_n; ++jj)
      dpos[s + 3].middleRows(3 * jj, 3) +=
          inv * (c.resid[s].middleRows(3 * jj, 3).array() /
                 c.s2[s].row(jj).replicate(3, 1).array())
                    .matrix();
    dhead.topRows(d) = dpos[s + 3];
    dhead.bottomRows(j_n) =
        (inv * c.unclamped[s].array() *
         (0.5 - c.sq[s].array() / (2.0 * c.s2[s].array())))
            .matrix();
    grads.head_weight.noalias() += dhead * c.dec_state[s].transpose();
    grads.head_bias += dhead.rowwise().sum();
    const Mat dd =
        c.m_dec.cwiseProduct(params.head_weight.transpose() * dhead) + dcarry;
    dpos[s + 2] += dpos[s + 3];
    gru_backward(params.decoder, c.dec[s], dd, c.m_dec, grads.decoder,
                 &dh_prev, &du);
    dcarry = std::move(dh_prev);
    const Mat df = c.m_in.cwiseProduct(du);
    dpos[s + 2] += df.topRows(d) + df.middleRows(d, d) + df.bottomRows(d);
    dpos[s + 1] -= df.middleRows(d, d) + 2.0 * df.bottomRows(d);
    dpos[s] += df.bottomRows(d);
  }
  Mat dh = std::move(dcarry);
  for (Index t = c.t_enc; t-- > 0;) {
    gru_backward(params.encoder, c.enc[t], dh, c.m_enc, grads.encoder,
                 &dh_prev, nullptr);
    dh = std::move(dh_prev);
  }
}

double eval_set_loss(const ModelParams& params,
                     const std::vector<WindowPair>& set) {
  const DropoutMaskSet keep =
      all_keep_masks(params.num_joints, params.hidden_size);
  constexpr Index kChunk = 128;
  double sum = 0.0;
  for (Index start = 0; start < static_cast<Index>(set.size());
       start += kChunk) {
    const Index n =
        std::min<Index>(kChunk, static_cast<Index>(set.size()) - start);
    std::vector<const WindowPair*> batch(n);
    for (Index i = 0; i < n; ++i) batch[i] = &set[start + i];
    const std::vector<DropoutMaskSet> masks(n, keep);
    sum += batch_loss(params, batch, masks) * static_cast<double>(n);
  }
  return sum / static_cast<double>(set.size());
}

}  // namespace

LossTerms hetero_nll_terms(const Mat& pred_mean, const Mat& sigma,
                           const Mat& truth) {
  if (pred_mean.rows() != truth.rows() || pred_mean.cols() != truth.cols())
    throw std::invalid_argument("hetero_nll: prediction/truth shape mismatch");
  if (sigma.rows() != pred_mean.rows() || sigma.cols() * 3 != pred_mean.cols())
    throw std::invalid_argument("hetero_nll: sigma shape mismatch");
  if (!(sigma.array() > 0.0).all())
    throw std::invalid_argument("hetero_nll: sigma must be strictly positive");
  LossTerms out;
  const Index t = pred_mean.rows();
  const Index j = sigma.cols();
  for (Index s = 0; s < t; ++s)
    for (Index k = 0; k < j; ++k) {
      const double s2 = std::max(sigma(s, k) * sigma(s, k), kVarianceFloor);
      const double sq =
          (pred_mean.row(s).segment(3 * k, 3) - truth.row(s).segment(3 * k, 3))
              .squaredNorm();
      out.weighted_mse += sq / (2.0 * s2);
      out.regularizer += 0.5 * std::log(s2);
      out.total += sq / (2.0 * s2) + 0.5 * std::log(s2);
    }
  const double n = static_cast<double>(t * j);
  out.weighted_mse /= n;
  out.regularizer /= n;
  out.total /= n;
  return out;
}

double hetero_nll_loss(const ProbabilisticPrediction& pred, const Mat& truth) {
  return hetero_nll_terms(pred.mean_frames, pred.sigma, truth).total;
}

double batch_loss(const ModelParams& params,
                  const std::vector<const WindowPair*>& batch,
                  const std::vector<DropoutMaskSet>& masks) {
  return forward_pass(params, batch, masks, nullptr, nullptr);
}

double batch_loss_and_gradients(const ModelParams& params,
                                const std::vector<const WindowPair*>& batch,
                                const std::vector<DropoutMaskSet>& masks,
                                ModelParams& grads) {
  ForwardCache cache;
  Index bad = -1;
  const double loss = forward_pass(params, batch, masks, &cache, &bad);
  if (bad >= 0) {
    grads = zeros_like(params);
    return loss;
  }
  backward_pass(params, cache, grads);
  return loss;
}

double loss_gradients(const ModelParams& params, const DropoutMaskSet& masks,
                      const WindowPair& window, ModelParams& grads) {
  const std::vector<const WindowPair*> batch{&window};
  const std::vector<DropoutMaskSet> mask_vec{masks};
  ForwardCache cache;
  Index bad = -1;
  const double loss = forward_pass(params, batch, mask_vec, &cache, &bad);
  if (bad >= 0)
    throw std::runtime_error("loss_gradients: non-finite loss at decode step " +
                             std::to_string(bad));
  backward_pass(params, cache, grads);
  return loss;
}

double global_grad_norm(const ModelParams& grads) {
  double sum = 0.0;
  for_each_tensor(const_cast<ModelParams&>(grads),
                  [&](const std::string&, auto& t) { sum += t.squaredNorm(); });
  return std::sqrt(sum);
}

double clip_global_norm(ModelParams& grads, double max_norm) {
  const double norm = global_grad_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for_each_tensor(grads, [&](const std::string&, auto& t) { t *= scale; });
  }
  return norm;
}

OptimizerState make_optimizer_state(const ModelParams& params) {
  OptimizerState state;
  state.m = zeros_like(params);
  state.v = zeros_like(params);
  return state;
}

void adam_step(ModelParams& params, OptimizerState& state,
               const ModelParams& grads, const TrainConfig& config) {
  const auto pr = tensor_refs(params);
  const auto gr = tensor_refs(const_cast<ModelParams&>(grads));
  const auto mr = tensor_refs(state.m);
  const auto vr = tensor_refs(state.v);
  for (std::size_t k = 0; k < pr.size(); ++k)
    if (gr[k].size != pr[k].size || mr[k].size != pr[k].size)
      throw std::invalid_argument("adam_step: tensor shapes mismatch");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const double shrink = 1.0 - config.learning_rate * config.weight_decay;
  for (std::size_t k = 0; k < pr.size(); ++k) {
    Eigen::Map<Eigen::ArrayXd> p(pr[k].data, pr[k].size);
    Eigen::Map<const Eigen::ArrayXd> g(gr[k].data, gr[k].size);
    Eigen::Map<Eigen::ArrayXd> m(mr[k].data, mr[k].size);
    Eigen::Map<Eigen::ArrayXd> v(vr[k].data, vr[k].size);
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.square();
    p -= config.learning_rate * (m / bc1) / ((v / bc2).sqrt() + state.epsilon);
    p *= shrink;
  }
}

TrainResult train(const TrainConfig& config,
                  const std::vector<WindowPair>& train_set,
                  const std::vector<WindowPair>& val_set, double frame_rate_hz,
                  const std::string& train_label) {
  if (train_set.empty())
    throw std::invalid_argument("train: empty training set");
  if (config.learning_rate <= 0.0)
    throw std::invalid_argument("train: learning_rate must be > 0");
  if (config.dropout_rate < 0.0 || config.dropout_rate >= 1.0)
    throw std::invalid_argument("train: dropout_rate must be in [0, 1)");
  if (config.batch_size < 1)
    throw std::invalid_argument("train: batch_size must be >= 1");
  if (config.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (config.t_p < 3 || config.t_f < 1)
    throw std::invalid_argument("train: need t_p >= 3 and t_f >= 1");
  if (config.hidden_size < 1)
    throw std::invalid_argument("train: hidden_size must be >= 1");
  if (frame_rate_hz <= 0.0)
    throw std::invalid_argument("train: frame rate must be positive");
  if (config.mc_train_seed_policy != "per-sample")
    throw std::invalid_argument("train: unsupported mc_train_seed_policy '" +
                                config.mc_train_seed_policy + "'");

  const Index d = train_set[0].observed.frames.cols();
  if (d % 3 != 0) throw std::invalid_argument("train: pose width must be 3J");
  const Index j_n = d / 3;
  auto check_set = [&](const std::vector<WindowPair>& set, const char* name) {
    for (const WindowPair& w : set)
      if (w.observed.frames.rows() != config.t_p ||
          w.future.frames.rows() != config.t_f ||
          w.observed.frames.cols() != d || w.future.frames.cols() != d)
        throw std::invalid_argument(std::string("train: ") + name +
                                    " window dimensions mismatch the config");
  };
  check_set(train_set, "train");
  check_set(val_set, "validation");

  const Index n_train = static_cast<Index>(train_set.size());
  MotionSequence stacked;
  stacked.frames.resize((config.t_p + config.t_f) * n_train, d);
  stacked.frame_rate_hz = frame_rate_hz;
  Index row = 0;
  for (const WindowPair& w : train_set) {
    stacked.frames.middleRows(row, config.t_p) = w.observed.frames;
    row += config.t_p;
    stacked.frames.middleRows(row, config.t_f) = w.future.frames;
    row += config.t_f;
  }
  const NormalizationStats stats = fit_normalization({stacked});

  std::vector<WindowPair> tr(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i)
    tr[i] = normalize(train_set[i], stats);
  std::vector<WindowPair> va(val_set.size());
  for (std::size_t i = 0; i < val_set.size(); ++i)
    va[i] = normalize(val_set[i], stats);
  const std::vector<WindowPair>& eval_norm = va.empty() ? tr : va;
  const std::vector<WindowPair>& eval_meters = val_set.empty() ? train_set : val_set;

  ModelParams params =
      init_model(j_n, config.hidden_size, config.dropout_rate,
                 mix_seed(config.rng_seed, kSeedInit));
  OptimizerState opt = make_optimizer_state(params);
  ModelParams grads = zeros_like(params);

  const Index ms_frame = std::clamp<Index>(
      static_cast<Index>(std::llround(0.4 * frame_rate_hz)), 1, config.t_f);

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  ModelParams best_params = params;
  Index best_epoch = 0;

  std::vector<Index> order(train_set.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::vector<const WindowPair*> batch;
  std::vector<DropoutMaskSet> masks;
  for (Index epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(config.rng_seed, kSeedShuffle,
                             static_cast<std::uint64_t>(epoch)));
    shuffle_inplace(order, shuffle_rng);
    double loss_sum = 0.0;
    Index seen = 0;
    Index step = 0;
    for (Index start = 0; start < n_train; start += config.batch_size, ++step) {
      const Index bs = std::min<Index>(config.batch_size, n_train - start);
      batch.resize(bs);
      masks.resize(bs);
      for (Index slot = 0; slot < bs; ++slot) {
        batch[slot] = &tr[order[start + slot]];
        masks[slot] = sample_masks(
            j_n, config.hidden_size, config.dropout_rate,
            mix_seed(config.rng_seed, kSeedMask,
                     static_cast<std::uint64_t>(epoch),
                     static_cast<std::uint64_t>(step),
                     static_cast<std::uint64_t>(slot)));
      }
      const double loss = batch_loss_and_gradients(params, batch, masks, grads);
      if (!std::isfinite(loss))
        throw std::runtime_error("training diverged at epoch " +
                                 std::to_string(epoch) + ", step " +
                                 std::to_string(step));
      clip_global_norm(grads, config.grad_clip_norm);
      adam_step(params, opt, grads, config);
      loss_sum += loss * static_cast<double>(bs);
      seen += bs;
    }

    EpochStats es;
    es.epoch = epoch;
    es.train_loss = loss_sum / static_cast<double>(seen);
    es.val_loss = eval_set_loss(params, eval_norm);
    double mpjpe_sum = 0.0;
    for (std::size_t i = 0; i < eval_norm.size(); ++i) {
      const ProbabilisticPrediction pred = predict_deterministic(
          params, eval_norm[i].observed.frames, config.t_f);
      mpjpe_sum += mpjpe(denormalize(pred.mean_frames, stats),
                         eval_meters[i].future.frames, ms_frame);
    }
    es.val_mpjpe_400ms = mpjpe_sum / static_cast<double>(eval_norm.size());
    result.curve.push_back(es);
    if (es.val_loss < best_val) {
      best_val = es.val_loss;
      best_params = params;
      best_epoch = epoch;
    }
  }

  result.best_epoch = best_epoch;
  result.checkpoint.params = std::move(best_params);
  result.checkpoint.stats = stats;
  result.checkpoint.train_label = train_label;
  result.checkpoint.t_p = config.t_p;
  result.checkpoint.t_f = config.t_f;
  return result;
}

GradCheckReport grad_check_against(const ModelParams& params,
                                   const DropoutMaskSet& masks,
                                   const WindowPair& window,
                                   const ModelParams& analytic,
                                   double epsilon) {
  if (epsilon <= 0.0)
    throw std::invalid_argument("grad_check: epsilon must be > 0");
  if (param_count(params) > 20000)
    throw std::invalid_argument(
        "grad_check: model too large to perturb every parameter; use a model "
        "with <= 20000 parameters");

  ModelParams work = params;
  const auto wr = tensor_refs(work);
  const auto ar = tensor_refs(const_cast<ModelParams&>(analytic));
  const std::vector<const WindowPair*> batch{&window};
  const std::vector<DropoutMaskSet> mask_vec{masks};

  GradCheckReport report;
  for (std::size_t k = 0; k < wr.size(); ++k) {
    for (Index i = 0; i < wr[k].size; ++i) {
      const double orig = wr[k].data[i];
      wr[k].data[i] = orig + epsilon;
      const double lp = batch_loss(work, batch, mask_vec);
      wr[k].data[i] = orig - epsilon;
      const double lm = batch_loss(work, batch, mask_vec);
      wr[k].data[i] = orig;
      const double numeric = (lp - lm) / (2.0 * epsilon);
      const double a = ar[k].data[i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-4});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = wr[k].name;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

GradCheckReport grad_check(const ModelParams& params,
                           const DropoutMaskSet& masks,
                           const WindowPair& window, double epsilon) {
  ModelParams grads = zeros_like(params);
  loss_gradients(params, masks, window, grads);
  return grad_check_against(params, masks, window, grads, epsilon);
}

}  // namespace motionpred
