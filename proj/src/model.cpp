#include "coat/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "coat/errors.hpp"
#include "coat/rng.hpp"

namespace coat {

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kInitStd = 0.02;

template <typename Scalar>
using Array = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Layer norm
// ---------------------------------------------------------------------------

template <typename Scalar>
Matrix<Scalar> layer_norm(const Matrix<Scalar>& x, const RowVector<Scalar>& gain, const RowVector<Scalar>& bias,
                          Matrix<Scalar>* xhat_out = nullptr, ColVector<Scalar>* rstd_out = nullptr) {
  const Eigen::Index rows = x.rows();
  Matrix<Scalar> xhat(rows, x.cols());
  ColVector<Scalar> rstd(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Scalar mean = x.row(i).mean();
    const auto centered = (x.row(i).array() - mean).eval();
    const Scalar var = centered.square().mean();
    const Scalar r = Scalar(1) / std::sqrt(var + Scalar(kNormEps));
    xhat.row(i) = centered * r;
    rstd(i) = r;
  }
  Matrix<Scalar> y = ((xhat.array().rowwise() * gain.array()).rowwise() + bias.array()).matrix();
  if (xhat_out) *xhat_out = std::move(xhat);
  if (rstd_out) *rstd_out = std::move(rstd);
  return y;
}

template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const Matrix<Scalar>& dy, const Matrix<Scalar>& xhat, const ColVector<Scalar>& rstd,
                                   const RowVector<Scalar>& gain, RowVector<Scalar>& dgain, RowVector<Scalar>& dbias) {
  dgain += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  const Array<Scalar> dxhat = dy.array().rowwise() * gain.array();
  Matrix<Scalar> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const Scalar m1 = dxhat.row(i).mean();
    const Scalar m2 = (dxhat.row(i) * xhat.row(i).array()).mean();
    dx.row(i) = (rstd(i) * (dxhat.row(i) - m1 - xhat.row(i).array() * m2)).matrix();
  }
  return dx;
}

// ---------------------------------------------------------------------------
// GELU (tanh approximation)
// ---------------------------------------------------------------------------

template <typename Scalar>
constexpr Scalar kGeluC = Scalar(0.7978845608028654);  // sqrt(2 / pi)

template <typename Scalar>
Matrix<Scalar> gelu(const Matrix<Scalar>& x) {
  const auto a = x.array();
  return (Scalar(0.5) * a * (Scalar(1) + (kGeluC<Scalar> * (a + Scalar(0.044715) * a.cube())).tanh())).matrix();
}

template <typename Scalar>
Matrix<Scalar> gelu_grad(const Matrix<Scalar>& x) {
  const auto a = x.array();
  const Array<Scalar> t = (kGeluC<Scalar> * (a + Scalar(0.044715) * a.cube())).tanh();
  return (Scalar(0.5) * (Scalar(1) + t) +
          Scalar(0.5) * a * (Scalar(1) - t.square()) * kGeluC<Scalar> * (Scalar(1) + Scalar(3 * 0.044715) * a.square()))
      .matrix();
}

// ---------------------------------------------------------------------------
// Causal attention
// ---------------------------------------------------------------------------

// Rows of `q` sit at absolute positions offset..offset+n-1 and attend to key
// rows 0..position. `keys`/`values` hold at least offset+n live rows.
template <typename Scalar>
Matrix<Scalar> causal_attention(const Matrix<Scalar>& q, const Matrix<Scalar>& keys, const Matrix<Scalar>& values,
                                Eigen::Index offset, int n_heads, std::vector<Matrix<Scalar>>* probs_out) {
  const Eigen::Index n = q.rows();
  const Eigen::Index total = offset + n;
  const Eigen::Index dh = q.cols() / n_heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  Matrix<Scalar> out(n, q.cols());
  if (probs_out) probs_out->resize(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const auto qh = q.middleCols(h * dh, dh);
    const auto kh = keys.block(0, h * dh, total, dh);
    const auto vh = values.block(0, h * dh, total, dh);
    Matrix<Scalar> p = (qh * kh.transpose()) * scale;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index visible = offset + i + 1;
      auto row = p.row(i);
      const Scalar mx = row.head(visible).maxCoeff();
      row.head(visible) = (row.head(visible).array() - mx).exp().matrix();
      const Scalar sum = row.head(visible).sum();
      row.head(visible) /= sum;
      if (visible < total) row.tail(total - visible).setZero();
    }
    out.middleCols(h * dh, dh).noalias() = p * vh;
    if (probs_out) (*probs_out)[static_cast<std::size_t>(h)] = std::move(p);
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> log_softmax_rows(const Matrix<Scalar>& logits) {
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar mx = logits.row(i).maxCoeff();
    const Scalar lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Matrix<Scalar> mask(rows, cols);
  const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? Scalar(0) : keep;
  return mask;
}

// ---------------------------------------------------------------------------
// Training forward/backward for one sequence
// ---------------------------------------------------------------------------

template <typename Scalar>
struct LayerActivations {
  Matrix<Scalar> x_in, xhat1, a1, q, k, v, attn, x_mid, xhat2, a2, h_pre, h_act;
  ColVector<Scalar> rstd1, rstd2;
  std::vector<Matrix<Scalar>> probs;
  Matrix<Scalar> drop_attn, drop_ffn;
};

void check_ids(const ModelConfig& cfg, std::span<const TokenId> ids) {
  if (ids.size() > static_cast<std::size_t>(cfg.max_seq_len))
    throw InvalidArgument("sequence of length " + std::to_string(ids.size()) + " exceeds max_seq_len " +
                          std::to_string(cfg.max_seq_len));
  for (TokenId t : ids)
    if (t < 0 || t >= cfg.vocab_size) throw InvalidArgument("token id " + std::to_string(t) + " outside the vocabulary");
}

// Returns the summed NLL over masked positions. When `grad` is non-null the
// gradient of grad_scale * (summed NLL) is accumulated into it.
template <typename Scalar>
double sequence_pass(const TinyLM<Scalar>& m, std::span<const TokenId> ids, std::span<const std::uint8_t> mask,
                     Scalar grad_scale, Parameters<Scalar>* grad, Rng* dropout_rng) {
  const ModelConfig& cfg = m.config;
  const auto& P = m.params;
  const auto T = static_cast<Eigen::Index>(ids.size());

  std::vector<Eigen::Index> rows;
  std::vector<TokenId> labels;
  for (Eigen::Index t = 0; t < T; ++t) {
    if (!mask[static_cast<std::size_t>(t)]) continue;
    if (t + 1 >= T) throw InvalidArgument("loss mask set on the last position, which has no label");
    rows.push_back(t);
    labels.push_back(ids[static_cast<std::size_t>(t + 1)]);
  }
  if (rows.empty()) return 0.0;
  const bool use_dropout = dropout_rng && cfg.dropout > 0.0;

  Matrix<Scalar> x(T, cfg.d_model);
  for (Eigen::Index t = 0; t < T; ++t)
    x.row(t) = P.token_embedding.row(ids[static_cast<std::size_t>(t)]) + P.position_embedding.row(t);

  std::vector<LayerActivations<Scalar>> acts(P.layers.size());
  for (std::size_t l = 0; l < P.layers.size(); ++l) {
    const auto& L = P.layers[l];
    auto& A = acts[l];
    A.x_in = x;
    A.a1 = layer_norm(x, L.ln1_gain, L.ln1_bias, &A.xhat1, &A.rstd1);
    A.q.noalias() = A.a1 * L.wq;
    A.k.noalias() = A.a1 * L.wk;
    A.v.noalias() = A.a1 * L.wv;
    A.attn = causal_attention(A.q, A.k, A.v, 0, cfg.n_heads, &A.probs);
    Matrix<Scalar> attn_out = A.attn * L.wo;
    if (use_dropout) {
      A.drop_attn = dropout_mask<Scalar>(T, cfg.d_model, cfg.dropout, *dropout_rng);
      attn_out.array() *= A.drop_attn.array();
    }
    A.x_mid = x + attn_out;
    A.a2 = layer_norm(A.x_mid, L.ln2_gain, L.ln2_bias, &A.xhat2, &A.rstd2);
    A.h_pre = (A.a2 * L.w1).rowwise() + L.b1;
    A.h_act = gelu(A.h_pre);
    Matrix<Scalar> ffn_out = (A.h_act * L.w2).rowwise() + L.b2;
    if (use_dropout) {
      A.drop_ffn = dropout_mask<Scalar>(T, cfg.d_model, cfg.dropout, *dropout_rng);
      ffn_out.array() *= A.drop_ffn.array();
    }
    x = A.x_mid + ffn_out;
  }

  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  Matrix<Scalar> x_sel(n_rows, cfg.d_model);
  for (Eigen::Index r = 0; r < n_rows; ++r) x_sel.row(r) = x.row(rows[static_cast<std::size_t>(r)]);
  Matrix<Scalar> xhat_f;
  ColVector<Scalar> rstd_f;
  const Matrix<Scalar> xf = layer_norm(x_sel, P.final_gain, P.final_bias, &xhat_f, &rstd_f);
  const Matrix<Scalar> logp = log_softmax_rows<Scalar>(xf * P.lm_head);

  double nll = 0.0;
  for (Eigen::Index r = 0; r < n_rows; ++r) nll -= static_cast<double>(logp(r, labels[static_cast<std::size_t>(r)]));
  if (!grad) return nll;

  // ---- backward ----
  auto& G = *grad;
  Matrix<Scalar> dlogits = logp.array().exp().matrix();
  for (Eigen::Index r = 0; r < n_rows; ++r) dlogits(r, labels[static_cast<std::size_t>(r)]) -= Scalar(1);
  dlogits *= grad_scale;
  G.lm_head.noalias() += xf.transpose() * dlogits;
  const Matrix<Scalar> dxf = dlogits * P.lm_head.transpose();
  const Matrix<Scalar> dx_sel = layer_norm_backward(dxf, xhat_f, rstd_f, P.final_gain, G.final_gain, G.final_bias);
  Matrix<Scalar> dx = Matrix<Scalar>::Zero(T, cfg.d_model);
  for (Eigen::Index r = 0; r < n_rows; ++r) dx.row(rows[static_cast<std::size_t>(r)]) += dx_sel.row(r);

  const Eigen::Index dh = cfg.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  for (std::size_t li = P.layers.size(); li-- > 0;) {
    const auto& L = P.layers[li];
    auto& GL = G.layers[li];
    const auto& A = acts[li];

    // feed-forward branch
    Matrix<Scalar> dffn = dx;
    if (use_dropout) dffn.array() *= A.drop_ffn.array();
    GL.b2 += dffn.colwise().sum();
    GL.w2.noalias() += A.h_act.transpose() * dffn;
    Matrix<Scalar> dh_pre = ((dffn * L.w2.transpose()).array() * gelu_grad(A.h_pre).array()).matrix();
    GL.w1.noalias() += A.a2.transpose() * dh_pre;
    GL.b1 += dh_pre.colwise().sum();
    const Matrix<Scalar> da2 = dh_pre * L.w1.transpose();
    Matrix<Scalar> dx_mid = dx + layer_norm_backward(da2, A.xhat2, A.rstd2, L.ln2_gain, GL.ln2_gain, GL.ln2_bias);

    // attention branch
    Matrix<Scalar> dattn_out = dx_mid;
    if (use_dropout) dattn_out.array() *= A.drop_attn.array();
    GL.wo.noalias() += A.attn.transpose() * dattn_out;
    const Matrix<Scalar> dattn = dattn_out * L.wo.transpose();
    Matrix<Scalar> dq(T, cfg.d_model), dk(T, cfg.d_model), dv(T, cfg.d_model);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const Matrix<Scalar>& p = A.probs[static_cast<std::size_t>(h)];
      const auto doh = dattn.middleCols(h * dh, dh);
      const Matrix<Scalar> dp = doh * A.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh).noalias() = p.transpose() * doh;
      const ColVector<Scalar> row_dot = (dp.array() * p.array()).rowwise().sum();
      const Matrix<Scalar> ds = (p.array() * (dp.array().colwise() - row_dot.array())).matrix() * scale;
      dq.middleCols(h * dh, dh).noalias() = ds * A.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh).noalias() = ds.transpose() * A.q.middleCols(h * dh, dh);
    }
    GL.wq.noalias() += A.a1.transpose() * dq;
    GL.wk.noalias() += A.a1.transpose() * dk;
    GL.wv.noalias() += A.a1.transpose() * dv;
    Matrix<Scalar> da1 = dq * L.wq.transpose();
    da1.noalias() += dk * L.wk.transpose();
    da1.noalias() += dv * L.wv.transpose();
    dx = dx_mid + layer_norm_backward(da1, A.xhat1, A.rstd1, L.ln1_gain, GL.ln1_gain, GL.ln1_bias);
  }
  for (Eigen::Index t = 0; t < T; ++t) {
    G.token_embedding.row(ids[static_cast<std::size_t>(t)]) += dx.row(t);
    G.position_embedding.row(t) += dx.row(t);
  }
  return nll;
}

void check_batch(const ModelConfig& cfg, std::span<const TrainingSequence> batch) {
  if (batch.empty()) throw InvalidArgument("batch is empty");
  for (const auto& s : batch) {
    if (s.ids.size() != s.loss_mask.size()) throw InvalidArgument("loss mask length differs from sequence length");
    check_ids(cfg, s.ids);
  }
}

std::size_t count_targets(std::span<const TrainingSequence> batch) {
  std::size_t n = 0;
  for (const auto& s : batch)
    for (auto b : s.loss_mask) n += b ? 1 : 0;
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || max_seq_len < 1 || vocab_size < 1)
    throw InvalidArgument("model sizes must be positive");
  if (d_model % n_heads != 0) throw InvalidArgument("d_model must be divisible by n_heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must lie in [0, 1)");
}

template <typename Scalar>
Parameters<Scalar> Parameters<Scalar>::zeros(const ModelConfig& cfg) {
  Parameters p;
  p.token_embedding = Matrix<Scalar>::Zero(cfg.vocab_size, cfg.d_model);
  p.position_embedding = Matrix<Scalar>::Zero(cfg.max_seq_len, cfg.d_model);
  p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& L : p.layers) {
    L.ln1_gain = L.ln1_bias = L.ln2_gain = L.ln2_bias = RowVector<Scalar>::Zero(cfg.d_model);
    L.wq = L.wk = L.wv = L.wo = Matrix<Scalar>::Zero(cfg.d_model, cfg.d_model);
    L.w1 = Matrix<Scalar>::Zero(cfg.d_model, cfg.d_ff);
    L.b1 = RowVector<Scalar>::Zero(cfg.d_ff);
    L.w2 = Matrix<Scalar>::Zero(cfg.d_ff, cfg.d_model);
    L.b2 = RowVector<Scalar>::Zero(cfg.d_model);
  }
  p.final_gain = p.final_bias = RowVector<Scalar>::Zero(cfg.d_model);
  p.lm_head = Matrix<Scalar>::Zero(cfg.d_model, cfg.vocab_size);
  return p;
}

template <typename Scalar>
std::size_t Parameters<Scalar>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

template <typename Scalar>
void Parameters<Scalar>::set_zero() {
  visit([](const std::string&, auto& t) { t.setZero(); });
}

template <typename Scalar>
bool Parameters<Scalar>::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

template <typename Scalar>
TinyLM<Scalar> TinyLM<Scalar>::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TinyLM m;
  m.config = cfg;
  m.params = Parameters<Scalar>::zeros(cfg);
  Rng rng(seed);
  m.params.visit([&](const std::string& name, auto& t) {
    if (name.ends_with(".gain")) {
      t.setOnes();
    } else if (name.ends_with(".bias") || name.ends_with(".b1") || name.ends_with(".b2")) {
      t.setZero();
    } else {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(kInitStd * rng.normal());
    }
  });
  return m;
}

template <typename Scalar>
template <typename Other>
TinyLM<Other> TinyLM<Scalar>::cast() const {
  TinyLM<Other> out;
  out.config = config;
  out.params = Parameters<Other>::zeros(config);
  std::vector<const Scalar*> src;
  params.visit([&](const std::string&, const auto& t) { src.push_back(t.data()); });
  std::size_t i = 0;
  out.params.visit([&](const std::string&, auto& t) {
    for (Eigen::Index j = 0; j < t.size(); ++j) t.data()[j] = static_cast<Other>(src[i][j]);
    ++i;
  });
  return out;
}

template <typename Scalar>
Matrix<Scalar> forward(const TinyLM<Scalar>& m, std::span<const TokenId> ids) {
  KvCache<Scalar> cache(m.config);
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return extend(m, cache, ids, rows).array().exp().matrix();
}

template <typename Scalar>
double nll_loss(const TinyLM<Scalar>& m, std::span<const TokenId> ids, std::span<const std::uint8_t> mask) {
  if (ids.size() != mask.size()) throw InvalidArgument("loss mask length differs from sequence length");
  check_ids(m.config, ids);
  std::size_t n = 0;
  for (auto b : mask) n += b ? 1 : 0;
  if (n == 0) throw InvalidArgument("nll_loss: mask selects no position");
  return sequence_pass<Scalar>(m, ids, mask, Scalar(0), nullptr, nullptr) / static_cast<double>(n);
}

TrainingSequence to_training_sequence(const TokenizedInstance& t) { return {t.ids, t.loss_mask}; }

template <typename Scalar>
LossAndGradient<Scalar> compute_gradients(const TinyLM<Scalar>& m, std::span<const TrainingSequence> batch,
                                          const std::uint64_t* dropout_seed) {
  check_batch(m.config, batch);
  LossAndGradient<Scalar> out;
  out.n_targets = count_targets(batch);
  if (out.n_targets == 0) throw InvalidArgument("batch has no target positions");
  out.gradient = Parameters<Scalar>::zeros(m.config);
  const Scalar scale = Scalar(1) / static_cast<Scalar>(out.n_targets);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::optional<Rng> rng;
    if (dropout_seed) rng.emplace(derive_seed(*dropout_seed, "dropout", i));
    total += sequence_pass<Scalar>(m, batch[i].ids, batch[i].loss_mask, scale, &out.gradient, rng ? &*rng : nullptr);
  }
  out.loss = total / static_cast<double>(out.n_targets);
  return out;
}

template <typename Scalar>
double batch_loss(const TinyLM<Scalar>& m, std::span<const TrainingSequence> batch) {
  check_batch(m.config, batch);
  const std::size_t n = count_targets(batch);
  if (n == 0) throw InvalidArgument("batch has no target positions");
  double total = 0.0;
  for (const auto& s : batch) total += sequence_pass<Scalar>(m, s.ids, s.loss_mask, Scalar(0), nullptr, nullptr);
  return total / static_cast<double>(n);
}

template <typename Scalar>
OptimizerState<Scalar> OptimizerState<Scalar>::create(const ModelConfig& cfg, double learning_rate) {
  OptimizerState s;
  s.learning_rate = learning_rate;
  s.first_moment = Parameters<Scalar>::zeros(cfg);
  s.second_moment = Parameters<Scalar>::zeros(cfg);
  return s;
}

template <typename Scalar>
void adam_update(TinyLM<Scalar>& m, OptimizerState<Scalar>& opt, const Parameters<Scalar>& gradient) {
  double clip_factor = 1.0;
  if (opt.grad_clip > 0.0) {
    double sq = 0.0;
    gradient.visit([&](const std::string&, const auto& g) { sq += g.template cast<double>().squaredNorm(); });
    const double norm = std::sqrt(sq);
    if (norm > opt.grad_clip) clip_factor = opt.grad_clip / norm;
  }
  opt.step += 1;
  const double t = static_cast<double>(opt.step);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(opt.beta1, t));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(opt.beta2, t));
  const auto b1 = static_cast<Scalar>(opt.beta1), b2 = static_cast<Scalar>(opt.beta2);
  const auto lr = static_cast<Scalar>(opt.learning_rate), eps = static_cast<Scalar>(opt.epsilon);
  const auto cf = static_cast<Scalar>(clip_factor);

  std::vector<const Scalar*> grads;
  std::vector<Scalar*> firsts, seconds;
  gradient.visit([&](const std::string&, const auto& g) { grads.push_back(g.data()); });
  opt.first_moment.visit([&](const std::string&, auto& x) { firsts.push_back(x.data()); });
  opt.second_moment.visit([&](const std::string&, auto& x) { seconds.push_back(x.data()); });
  std::size_t i = 0;
  m.params.visit([&](const std::string&, auto& p) {
    const auto size = p.size();
    Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> g(grads[i], size);
    Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> mom1(firsts[i], size), mom2(seconds[i], size);
    Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> w(p.data(), size);
    mom1 = b1 * mom1 + (Scalar(1) - b1) * (cf * g);
    mom2 = b2 * mom2 + (Scalar(1) - b2) * (cf * g).square();
    w -= lr * (mom1 / c1) / ((mom2 / c2).sqrt() + eps);
    ++i;
  });
}

template <typename Scalar>
double backward_and_step(TinyLM<Scalar>& m, OptimizerState<Scalar>& opt, std::span<const TrainingSequence> batch,
                         const std::uint64_t* dropout_seed) {
  auto lg = compute_gradients(m, batch, dropout_seed);
  if (!std::isfinite(lg.loss) || !lg.gradient.all_finite())
    throw NonFiniteLoss("non-finite loss " + std::to_string(lg.loss) + " at optimizer step " +
                        std::to_string(opt.step + 1) + " over " + std::to_string(batch.size()) + " sequences / " +
                        std::to_string(lg.n_targets) + " targets");
  adam_update(m, opt, lg.gradient);
  return lg.loss;
}

GradCheckResult grad_check(const TinyLM<double>& m, std::span<const TrainingSequence> batch, double epsilon,
                           std::size_t n_coordinates, std::uint64_t seed) {
  const auto analytic = compute_gradients(m, batch);

  struct Slot {
    std::string name;
    std::size_t size;
  };
  std::vector<Slot> slots;
  std::size_t total = 0;
  m.params.visit([&](const std::string& name, const auto& t) {
    slots.push_back({name, static_cast<std::size_t>(t.size())});
    total += static_cast<std::size_t>(t.size());
  });
  std::vector<const double*> grads;
  analytic.gradient.visit([&](const std::string&, const auto& g) { grads.push_back(g.data()); });

  TinyLM<double> probe = m;
  std::vector<double*> data;
  probe.params.visit([&](const std::string&, auto& t) { data.push_back(t.data()); });

  GradCheckResult result;
  Rng rng(seed);
  for (std::size_t c = 0; c < n_coordinates; ++c) {
    std::size_t flat = static_cast<std::size_t>(rng.below(total));
    std::size_t s = 0;
    while (flat >= slots[s].size) flat -= slots[s++].size;
    double& w = data[s][flat];
    const double saved = w;
    w = saved + epsilon;
    const double up = batch_loss(probe, batch);
    w = saved - epsilon;
    const double down = batch_loss(probe, batch);
    w = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = grads[s][flat];
    const double denom = std::max(std::abs(a), std::abs(numeric));
    const double err = denom < 1e-6 ? std::abs(a - numeric) : std::abs(a - numeric) / denom;
    if (err > result.max_relative_error || c == 0) {
      result.max_relative_error = std::max(result.max_relative_error, err);
      result.worst_tensor = slots[s].name;
      result.worst_index = flat;
    }
    ++result.coordinates;
  }
  return result;
}

template <typename Scalar>
std::vector<TokenId> greedy_decode(const TinyLM<Scalar>& m, std::span<const TokenId> prompt_ids, int max_new) {
  if (max_new < 0) throw InvalidArgument("max_new must be non-negative");
  if (prompt_ids.empty()) throw InvalidArgument("greedy_decode needs a non-empty prompt");
  if (prompt_ids.size() + static_cast<std::size_t>(max_new) > static_cast<std::size_t>(m.config.max_seq_len))
    throw InvalidArgument("prompt plus max_new exceeds max_seq_len");
  KvCache<Scalar> cache(m.config);
  std::vector<TokenId> out;
  const std::size_t last = prompt_ids.size() - 1;
  Matrix<Scalar> logp = extend(m, cache, prompt_ids, std::span<const std::size_t>(&last, 1));
  const std::size_t zero = 0;
  for (int step = 0; step < max_new; ++step) {
    const auto next = static_cast<TokenId>(argmax_lowest(logp.row(0)));
    if (next == Vocabulary::kEos) break;
    out.push_back(next);
    if (step + 1 == max_new) break;
    logp = extend(m, cache, std::span<const TokenId>(&out.back(), 1), std::span<const std::size_t>(&zero, 1));
  }
  return out;
}

template <typename Scalar>
std::uint64_t parameter_checksum(const TinyLM<Scalar>& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  m.params.visit([&](const std::string&, const auto& t) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(t.size()) * sizeof(Scalar); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  });
  return h;
}

// ---------------------------------------------------------------------------
// Explicit instantiations
// ---------------------------------------------------------------------------

#define COAT_INSTANTIATE(S)                                                                                      \
  template struct Parameters<S>;                                                                                 \
  template struct TinyLM<S>;                                                                                     \
  template struct OptimizerState<S>;                                                                             \
  template Matrix<S> forward(const TinyLM<S>&, std::span<const TokenId>);                                        \
  template double nll_loss(const TinyLM<S>&, std::span<const TokenId>, std::span<const std::uint8_t>);           \
  template LossAndGradient<S> compute_gradients(const TinyLM<S>&, std::span<const TrainingSequence>,             \
                                                const std::uint64_t*);                                           \
  template double batch_loss(const TinyLM<S>&, std::span<const TrainingSequence>);                               \
  template void adam_update(TinyLM<S>&, OptimizerState<S>&, const Parameters<S>&);                               \
  template double backward_and_step(TinyLM<S>&, OptimizerState<S>&, std::span<const TrainingSequence>,           \
                                    const std::uint64_t*);                                                       \
  template std::vector<TokenId> greedy_decode(const TinyLM<S>&, std::span<const TokenId>, int);                  \
  template std::uint64_t parameter_checksum(const TinyLM<S>&);

COAT_INSTANTIATE(float)
COAT_INSTANTIATE(double)
#undef COAT_INSTANTIATE

template TinyLM<double> TinyLM<float>::cast<double>() const;
template TinyLM<float> TinyLM<double>::cast<float>() const;
template TinyLM<float> TinyLM<float>::cast<float>() const;
template TinyLM<double> TinyLM<double>::cast<double>() const;

}  // namespace coat
