#include "motionpred/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string_view>

#include "motionpred/rng.hpp"

namespace motionpred {

namespace {

void fill_uniform(Mat& m, double bound, Rng& rng) {
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r)
      m(r, c) = rng.uniform(-bound, bound);
}

GruCellParams init_cell(Index input, Index hidden, Rng& rng) {
  GruCellParams c;
  const double wb = 1.0 / std::sqrt(static_cast<double>(input));
  const double ub = 1.0 / std::sqrt(static_cast<double>(hidden));
  c.w_update.resize(hidden, input);
  c.w_reset.resize(hidden, input);
  c.w_cand.resize(hidden, input);
  c.u_update.resize(hidden, hidden);
  c.u_reset.resize(hidden, hidden);
  c.u_cand.resize(hidden, hidden);
  fill_uniform(c.w_update, wb, rng);
  fill_uniform(c.w_reset, wb, rng);
  fill_uniform(c.w_cand, wb, rng);
  fill_uniform(c.u_update, ub, rng);
  fill_uniform(c.u_reset, ub, rng);
  fill_uniform(c.u_cand, ub, rng);
  c.b_update = Vec::Zero(hidden);
  c.b_reset = Vec::Zero(hidden);
  c.b_cand = Vec::Zero(hidden);
  return c;
}

}  // namespace

ModelParams init_model(Index num_joints, Index hidden_size,
                       double dropout_rate, std::uint64_t seed) {
  if (num_joints < 1 || hidden_size < 1)
    throw std::invalid_argument("init_model: dimensions must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("init_model: dropout rate must be in [0, 1)");

  ModelParams p;
  p.num_joints = num_joints;
  p.hidden_size = hidden_size;
  p.dropout_rate = dropout_rate;

  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  p.encoder = init_cell(p.feature_size(), hidden_size, rng);
  p.decoder = init_cell(p.feature_size(), hidden_size, rng);
  p.head_weight = Mat::Zero(4 * num_joints, hidden_size);
  p.head_bias = Vec::Zero(4 * num_joints);
  return p;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  for_each_tensor(z, [](const std::string&, auto& t) { t.setZero(); });
  return z;
}

Index param_count(const ModelParams& params) {
  Index n = 0;
  for_each_tensor(const_cast<ModelParams&>(params),
                  [&](const std::string&, auto& t) { n += t.size(); });
  return n;
}

std::vector<TensorRef> tensor_refs(ModelParams& params) {
  std::vector<TensorRef> refs;
  for_each_tensor(params, [&](const std::string& name, auto& t) {
    refs.push_back(TensorRef{name, t.data(), t.size()});
  });
  return refs;
}

DropoutMaskSet sample_masks(Index num_joints, Index hidden_size, double rate,
                            std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("sample_masks: rate must be in [0, 1)");
  DropoutMaskSet m;
  if (rate == 0.0) return all_keep_masks(num_joints, hidden_size);

  const double keep_scale = 1.0 / (1.0 - rate);
  Rng rng(mix_seed(seed, 0x6d61736bULL));

  m.input_feature = Vec::Zero(9 * num_joints);
  for (Index j = 0; j < num_joints; ++j) {
    const double mult = rng.bernoulli(rate) ? 0.0 : keep_scale;
    for (Index block = 0; block < 3; ++block)
      m.input_feature.segment(3 * (block * num_joints + j), 3).setConstant(mult);
  }
  m.hidden_enc.resize(hidden_size);
  for (Index i = 0; i < hidden_size; ++i)
    m.hidden_enc(i) = rng.bernoulli(rate) ? 0.0 : keep_scale;
  m.hidden_dec.resize(hidden_size);
  for (Index i = 0; i < hidden_size; ++i)
    m.hidden_dec(i) = rng.bernoulli(rate) ? 0.0 : keep_scale;
  return m;
}

DropoutMaskSet all_keep_masks(Index num_joints, Index hidden_size) {
  DropoutMaskSet m;
  m.input_feature = Vec::Ones(9 * num_joints);
  m.hidden_enc = Vec::Ones(hidden_size);
  m.hidden_dec = Vec::Ones(hidden_size);
  return m;
}

namespace {

constexpr char kMagic[8] = {'M', 'P', 'C', 'K', 'P', 'T', '0', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

double read_f64(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  if (n > (1u << 20)) throw std::runtime_error("checkpoint: oversized string");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

void write_doubles(std::ostream& out, const double* data, Index n) {
  for (Index i = 0; i < n; ++i) write_f64(out, data[i]);
}

void read_doubles(std::istream& in, double* data, Index n) {
  for (Index i = 0; i < n; ++i) data[i] = read_f64(in);
}

}  // namespace

std::string checkpoint_bytes(const Checkpoint& ck) {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, static_cast<std::uint64_t>(ck.params.num_joints));
  write_u64(out, static_cast<std::uint64_t>(ck.params.hidden_size));
  write_f64(out, ck.params.dropout_rate);
  write_string(out, ck.train_label);
  write_u64(out, static_cast<std::uint64_t>(ck.t_p));
  write_u64(out, static_cast<std::uint64_t>(ck.t_f));

  write_u64(out, static_cast<std::uint64_t>(ck.stats.mean.cols()));
  write_doubles(out, ck.stats.mean.data(), ck.stats.mean.cols());
  write_doubles(out, ck.stats.scale.data(), ck.stats.scale.cols());

  auto& params = const_cast<ModelParams&>(ck.params);
  const auto refs = tensor_refs(params);
  write_u64(out, refs.size());
  for_each_tensor(params, [&](const std::string& name, auto& t) {
    write_string(out, name);
    write_u64(out, static_cast<std::uint64_t>(t.rows()));
    write_u64(out, static_cast<std::uint64_t>(t.cols()));
    write_doubles(out, t.data(), t.size());
  });
  return std::move(out).str();
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const std::string bytes = checkpoint_bytes(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open checkpoint");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error(path + ": not a model checkpoint (bad magic)");

  Checkpoint ck;
  const Index joints = static_cast<Index>(read_u64(in));
  const Index hidden = static_cast<Index>(read_u64(in));
  const double rate = read_f64(in);
  ck.train_label = read_string(in);
  ck.t_p = static_cast<Index>(read_u64(in));
  ck.t_f = static_cast<Index>(read_u64(in));

  const Index stat_cols = static_cast<Index>(read_u64(in));
  if (stat_cols != 3 * joints)
    throw std::runtime_error(path + ": stats dimension mismatch");
  ck.stats.mean.resize(stat_cols);
  ck.stats.scale.resize(stat_cols);
  read_doubles(in, ck.stats.mean.data(), stat_cols);
  read_doubles(in, ck.stats.scale.data(), stat_cols);

  ck.params = init_model(joints, hidden, rate, 0);
  const std::uint64_t n_tensors = read_u64(in);
  std::uint64_t seen = 0;
  for_each_tensor(ck.params, [&](const std::string& name, auto& t) {
    const std::string stored = read_string(in);
    if (stored != name)
      throw std::runtime_error(path + ": unexpected tensor '" + stored +
                               "' (wanted '" + name + "')");
    const Index rows = static_cast<Index>(read_u64(in));
    const Index cols = static_cast<Index>(read_u64(in));
    if (rows != t.rows() || cols != t.cols())
      throw std::runtime_error(path + ": tensor '" + name +
                               "' has wrong dimensions");
    read_doubles(in, t.data(), t.size());
    ++seen;
  });
  if (seen != n_tensors || !in)
    throw std::runtime_error(path + ": truncated checkpoint");
  return ck;
}

std::uint64_t fnv1a64_bytes(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open for hashing");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace motionpred
