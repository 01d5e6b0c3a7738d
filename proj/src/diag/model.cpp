#include "pacq/diag/model.hpp"

#include <algorithm>
#include <cmath>

#include "pacq/common/binio.hpp"

namespace pacq::diag {

using num::Tensor;

namespace {
constexpr double kTwoPi = 6.283185307179586;
}

void EncoderConfig::validate() const {
  if (layers < 1 || heads < 1 || token_dim < 2 || ff_dim < 1)
    throw ConfigError("encoder: layers/heads/dims must be positive");
  if (token_dim % heads != 0)
    throw ConfigError("encoder: token_dim must be divisible by heads");
  if (input_dim < 1 || n_views < 1 || n_classes < 2 || head_hidden < 1)
    throw ConfigError("encoder: invalid input/view/class dimensions");
}

std::vector<Tensor> DiagnosticModel::parameters() const {
  std::vector<Tensor> ps{w_in, b_in, task_tokens, view_embed};
  for (const auto& l : layers) {
    ps.insert(ps.end(), {l.ln1_g, l.ln1_b, l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo,
                         l.bo, l.ln2_g, l.ln2_b, l.w1, l.b1, l.w2, l.b2});
  }
  ps.insert(ps.end(), {lnf_g, lnf_b, wh1, bh1, wh2, bh2, wg1, bg1, wg2, bg2});
  return ps;
}

DiagnosticModel init_model(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DiagnosticModel m;
  m.cfg = cfg;
  Rng rng(seed, "diag-init");
  int d = cfg.token_dim;

  auto dense = [&](int in, int out) { return Tensor::xavier_uniform(in, out, rng); };
  auto bias = [&](int n) { return Tensor::zeros(1, n, true); };
  auto embed = [&](int rows) {
    auto t = Tensor::zeros(rows, d, true);
    for (auto& v : t.values()) v = rng.normal(0.0, 0.1);
    return t;
  };

  m.w_in = dense(cfg.input_dim, d);
  m.b_in = bias(d);
  m.task_tokens = embed(2);
  m.view_embed = embed(cfg.n_views);
  m.layers.resize(cfg.layers);
  for (auto& l : m.layers) {
    l.ln1_g = Tensor::full(1, d, 1.0, true);
    l.ln1_b = bias(d);
    l.wq = dense(d, d);
    l.bq = bias(d);
    l.wk = dense(d, d);
    l.bk = bias(d);
    l.wv = dense(d, d);
    l.bv = bias(d);
    l.wo = dense(d, d);
    l.bo = bias(d);
    l.ln2_g = Tensor::full(1, d, 1.0, true);
    l.ln2_b = bias(d);
    l.w1 = dense(d, cfg.ff_dim);
    l.b1 = bias(cfg.ff_dim);
    l.w2 = dense(cfg.ff_dim, d);
    l.b2 = bias(d);
  }
  m.lnf_g = Tensor::full(1, d, 1.0, true);
  m.lnf_b = bias(d);
  m.wh1 = dense(2 * d, cfg.head_hidden);
  m.bh1 = bias(cfg.head_hidden);
  m.wh2 = dense(cfg.head_hidden, 2);
  m.bh2 = bias(2);
  m.wg1 = dense(2 * d, cfg.head_hidden);
  m.bg1 = bias(cfg.head_hidden);
  m.wg2 = dense(cfg.head_hidden, 3);
  m.bg2 = bias(3);
  return m;
}

Tensor encode_tokens(const DiagnosticModel& m, const Tensor& flat_views,
                     const std::vector<std::uint8_t>& view_mask, int batch) {
  const auto& cfg = m.cfg;
  int n = cfg.n_views, t = n + 2, d = cfg.token_dim;
  if (flat_views.cols() != cfg.input_dim)
    throw ConfigError("encode: embedding dim does not match input projection");
  if (flat_views.rows() != batch * n || static_cast<int>(view_mask.size()) != batch * n)
    throw ShapeError("encode: expected batch*n_views rows and mask bits");

  // project views and add per-slot embeddings
  Tensor proj = num::add_rowvec(num::matmul(flat_views, m.w_in), m.b_in);
  std::vector<int> vidx(static_cast<std::size_t>(batch) * n);
  for (int b = 0; b < batch; ++b)
    for (int v = 0; v < n; ++v) vidx[static_cast<std::size_t>(b) * n + v] = v;
  proj = num::add(proj, num::gather_rows(m.view_embed, vidx));

  // tile the two task tokens over the batch
  std::vector<int> tidx(static_cast<std::size_t>(batch) * 2);
  for (int b = 0; b < batch; ++b) {
    tidx[static_cast<std::size_t>(b) * 2] = 0;
    tidx[static_cast<std::size_t>(b) * 2 + 1] = 1;
  }
  Tensor tasks = num::gather_rows(m.task_tokens, tidx);

  // interleave [task0, task1, view0..viewN-1] per sample
  std::vector<int> perm(static_cast<std::size_t>(batch) * t);
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < t; ++i)
      perm[static_cast<std::size_t>(b) * t + i] =
          i < 2 ? b * 2 + i : batch * 2 + b * n + (i - 2);
  Tensor h = num::gather_rows(num::concat_rows({tasks, proj}), perm);

  // attention legality: task tokens always, views only when acquired
  std::vector<std::uint8_t> legal(static_cast<std::size_t>(batch) * t, 0);
  for (int b = 0; b < batch; ++b) {
    legal[static_cast<std::size_t>(b) * t] = 1;
    legal[static_cast<std::size_t>(b) * t + 1] = 1;
    for (int v = 0; v < n; ++v)
      legal[static_cast<std::size_t>(b) * t + 2 + v] = view_mask[b * n + v];
  }

  for (const auto& l : m.layers) {
    Tensor a = num::add_rowvec(num::mul_rowvec(num::layernorm_rows(h), l.ln1_g), l.ln1_b);
    Tensor q = num::add_rowvec(num::matmul(a, l.wq), l.bq);
    Tensor k = num::add_rowvec(num::matmul(a, l.wk), l.bk);
    Tensor v = num::add_rowvec(num::matmul(a, l.wv), l.bv);
    Tensor attn = num::masked_mha(q, k, v, legal, batch, t, cfg.heads);
    h = num::add(h, num::add_rowvec(num::matmul(attn, l.wo), l.bo));
    Tensor f = num::add_rowvec(num::mul_rowvec(num::layernorm_rows(h), l.ln2_g), l.ln2_b);
    Tensor ff = num::add_rowvec(
        num::matmul(num::tanh(num::add_rowvec(num::matmul(f, l.w1), l.b1)), l.w2), l.b2);
    h = num::add(h, ff);
  }
  h = num::add_rowvec(num::mul_rowvec(num::layernorm_rows(h), m.lnf_g), m.lnf_b);

  // pull the two task-token rows of every sample
  std::vector<int> out_idx(static_cast<std::size_t>(batch) * 2);
  for (int b = 0; b < batch; ++b) {
    out_idx[static_cast<std::size_t>(b) * 2] = b * t;
    out_idx[static_cast<std::size_t>(b) * 2 + 1] = b * t + 1;
  }
  return num::reshape(num::gather_rows(h, out_idx), batch, 2 * d);
}

HeadOut head_forward(const DiagnosticModel& m, const Tensor& enc) {
  HeadOut out;
  Tensor mh = num::tanh(num::add_rowvec(num::matmul(enc, m.wh1), m.bh1));
  out.mu = num::logistic(num::add_rowvec(num::matmul(mh, m.wh2), m.bh2));
  Tensor gh = num::tanh(num::add_rowvec(num::matmul(enc, m.wg1), m.bg1));
  Tensor raw = num::add_rowvec(num::matmul(gh, m.wg2), m.bg2);
  out.sigma = num::add_scalar(
      num::scale(num::logistic(num::slice_cols(raw, 0, 2)), 1.0 - kSigmaMin), kSigmaMin);
  out.rho = num::scale(num::tanh(num::slice_cols(raw, 2, 3)), kRhoMax);
  return out;
}

namespace {

Tensor flat_masked_views(const EncoderConfig& cfg,
                         const std::vector<const synth::StudyRecord*>& studies,
                         const std::vector<std::uint8_t>& masks) {
  int n = cfg.n_views, d = cfg.input_dim;
  int batch = static_cast<int>(studies.size());
  std::vector<double> flat(static_cast<std::size_t>(batch) * n * d, 0.0);
  for (int b = 0; b < batch; ++b) {
    if (static_cast<int>(studies[b]->embeddings.size()) != n * d)
      throw ConfigError("predict: study embedding size does not match model config");
    for (int v = 0; v < n; ++v) {
      if (!masks[static_cast<std::size_t>(b) * n + v]) continue;
      const double* src = &studies[b]->embeddings[static_cast<std::size_t>(v) * d];
      double* dst = &flat[(static_cast<std::size_t>(b) * n + v) * d];
      std::copy(src, src + d, dst);
    }
  }
  return Tensor::from(std::move(flat), batch * n, d);
}

}  // namespace

std::vector<prob::GaussianJoint> predict_batch(
    const DiagnosticModel& m, const std::vector<const synth::StudyRecord*>& studies,
    const std::vector<std::uint8_t>& masks) {
  int batch = static_cast<int>(studies.size());
  if (batch == 0) return {};
  if (masks.size() != static_cast<std::size_t>(batch) * m.cfg.n_views)
    throw ShapeError("predict: mask size must be batch*n_views");
  Tensor flat = flat_masked_views(m.cfg, studies, masks);
  Tensor enc = encode_tokens(m, flat, masks, batch);
  HeadOut h = head_forward(m, enc);
  std::vector<prob::GaussianJoint> out(batch);
  for (int b = 0; b < batch; ++b) {
    double s1 = h.sigma.at(b, 0), s2 = h.sigma.at(b, 1), r = h.rho.at(b, 0);
    out[b].mu = {h.mu.at(b, 0), h.mu.at(b, 1)};
    out[b].sigma = {s1 * s1, r * s1 * s2, r * s1 * s2, s2 * s2};
  }
  return out;
}

prob::GaussianJoint predict_joint(const DiagnosticModel& m,
                                  const synth::StudyRecord& study,
                                  const std::vector<std::uint8_t>& mask) {
  return predict_batch(m, {&study}, mask)[0];
}

Tensor loss_as_batch(const HeadOut& h, const std::vector<int>& classes,
                     const prob::CategoryGrid& grid, LossStats* stats) {
  int k = grid.n_as();
  for (int c : classes)
    if (c < 0 || c >= k) throw LabelError("loss_as: class out of range");
  Tensor mu = num::slice_cols(h.mu, 0, 1);
  Tensor sig = num::slice_cols(h.sigma, 0, 1);
  // CDF at the k-1 interior edges
  std::vector<Tensor> cdfs;
  for (int e = 1; e < k; ++e) {
    Tensor z = num::div(num::add_scalar(num::neg(mu), grid.as_edges[e]), sig);
    cdfs.push_back(num::normal_cdf(z));
  }
  std::vector<Tensor> bins;
  bins.push_back(cdfs.front());
  for (int e = 1; e < k - 1; ++e) bins.push_back(num::sub(cdfs[e], cdfs[e - 1]));
  bins.push_back(num::add_scalar(num::neg(cdfs.back()), 1.0));
  Tensor mass = num::select_cols_per_row(num::concat_cols(bins), classes);
  if (stats)
    for (double v : mass.values())
      if (v < 1e-12) ++stats->as_mass_clamps;
  return num::neg(num::mean_all(num::log(num::clamp_min(mass, 1e-12))));
}

Tensor loss_ef_batch(const HeadOut& h, const std::vector<double>& y_ef,
                     LossStats* stats) {
  int batch = h.mu.rows();
  if (static_cast<int>(y_ef.size()) != batch)
    throw ShapeError("loss_ef: label count must match batch");
  Tensor mu = num::slice_cols(h.mu, 1, 2);
  Tensor var = num::square(num::slice_cols(h.sigma, 1, 2));
  if (stats)
    for (double v : var.values())
      if (v < 1e-12) ++stats->ef_var_clamps;
  var = num::clamp_min(var, 1e-12);
  Tensor y = Tensor::from(std::vector<double>(y_ef), batch, 1);
  Tensor nll = num::scale(
      num::add(num::log(num::scale(var, kTwoPi)), num::div(num::square(num::sub(y, mu)), var)),
      0.5);
  return num::mean_all(nll);
}

double loss_as(const prob::GaussianJoint& joint, int y_as_class,
               const prob::CategoryGrid& grid) {
  int k = grid.n_as();
  if (y_as_class < 0 || y_as_class >= k) throw LabelError("loss_as: class out of range");
  double sd = std::sqrt(joint.sigma.a11);
  double lo = y_as_class == 0 ? 0.0
                              : num::std_normal_cdf((grid.as_edges[y_as_class] - joint.mu.x) / sd);
  double hi = y_as_class == k - 1
                  ? 1.0
                  : num::std_normal_cdf((grid.as_edges[y_as_class + 1] - joint.mu.x) / sd);
  double mass = std::max(hi - lo, 1e-12);
  return -std::log(mass);
}

double loss_ef(const prob::GaussianJoint& joint, double y_ef) {
  double var = std::max(joint.sigma.a22, 1e-12);
  double r = y_ef - joint.mu.y;
  return 0.5 * (std::log(kTwoPi * var) + r * r / var);
}

double loss_total(const prob::GaussianJoint& joint, int y_as_class, double y_ef,
                  double lambda_as, double lambda_ef, const prob::CategoryGrid& grid) {
  if (lambda_as < 0.0 || lambda_ef < 0.0)
    throw ConfigError("loss_total: weights must be non-negative");
  return lambda_as * loss_as(joint, y_as_class, grid) + lambda_ef * loss_ef(joint, y_ef);
}

namespace {
constexpr char kMagic[4] = {'P', 'D', 'X', 'M'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

void save_model(const DiagnosticModel& m, const std::string& path) {
  BinWriter w(path);
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  w.mark_crc_start();
  w.u32(static_cast<std::uint32_t>(m.cfg.layers));
  w.u32(static_cast<std::uint32_t>(m.cfg.heads));
  w.u32(static_cast<std::uint32_t>(m.cfg.token_dim));
  w.u32(static_cast<std::uint32_t>(m.cfg.ff_dim));
  w.u32(static_cast<std::uint32_t>(m.cfg.input_dim));
  w.u32(static_cast<std::uint32_t>(m.cfg.n_views));
  w.u32(static_cast<std::uint32_t>(m.cfg.n_classes));
  w.u32(static_cast<std::uint32_t>(m.cfg.head_hidden));
  for (const auto& p : m.parameters()) w.f64_array(p.values());
  w.write_crc();
  w.close();
}

DiagnosticModel load_model(const std::string& path) {
  BinReader r(path);
  r.expect_magic(kMagic, "diagnostic checkpoint");
  std::uint16_t version = r.u16();
  if (version != kVersion)
    throw DataError(DataError::Kind::Version,
                    "diagnostic checkpoint: unsupported version " + std::to_string(version));
  r.mark_crc_start();
  EncoderConfig cfg;
  cfg.layers = static_cast<int>(r.u32());
  cfg.heads = static_cast<int>(r.u32());
  cfg.token_dim = static_cast<int>(r.u32());
  cfg.ff_dim = static_cast<int>(r.u32());
  cfg.input_dim = static_cast<int>(r.u32());
  cfg.n_views = static_cast<int>(r.u32());
  cfg.n_classes = static_cast<int>(r.u32());
  cfg.head_hidden = static_cast<int>(r.u32());
  DiagnosticModel m = init_model(cfg, 0);
  for (auto& p : m.parameters()) {
    auto vals = r.f64_array();
    if (vals.size() != p.size())
      throw DataError(DataError::Kind::Dimension,
                      "diagnostic checkpoint: weight blob shape mismatch");
    p.values() = std::move(vals);
  }
  r.check_crc("diagnostic checkpoint");
  m.frozen = true;
  return m;
}

}  // namespace pacq::diag
