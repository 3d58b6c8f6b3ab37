// Incremental inference with a fixed per-row operation order.
//
// Matrix products accumulate every output element over the inner dimension
// in increasing order with fused multiply-adds, independent of how many rows
// are processed together. Transcendentals run on zero-padded fixed-size
// chunks so every element takes the same vectorized path. This file is built
// with floating-point contraction disabled so plain arithmetic is never fused
// differently in vector and scalar code.

#pragma GCC diagnostic ignored "-Wignored-attributes"

#include <algorithm>
#include <cmath>

#include "coat/errors.hpp"
#include "coat/model.hpp"

namespace coat {

namespace {

constexpr double kNormEps = 1e-5;

template <typename S>
constexpr std::size_t kChunk = 64 / sizeof(S);
template <typename S>
using Chunk = Eigen::Array<S, static_cast<int>(kChunk<S>), 1>;

template <typename S, typename F>
void chunked(S* p, std::size_t n, F&& f) {
  constexpr std::size_t C = kChunk<S>;
  std::size_t i = 0;
  for (; i + C <= n; i += C) {
    Eigen::Map<Chunk<S>> view(p + i);
    Chunk<S> v = view;
    f(v);
    view = v;
  }
  if (i < n) {
    Chunk<S> v = Chunk<S>::Zero();
    std::copy(p + i, p + n, v.data());
    f(v);
    std::copy(v.data(), v.data() + (n - i), p + i);
  }
}

template <typename S>
S chunked_sum(const S* p, std::size_t n) {
  constexpr std::size_t C = kChunk<S>;
  Chunk<S> acc = Chunk<S>::Zero();
  std::size_t i = 0;
  for (; i + C <= n; i += C) acc += Eigen::Map<const Chunk<S>>(p + i);
  if (i < n) {
    Chunk<S> v = Chunk<S>::Zero();
    std::copy(p + i, p + n, v.data());
    acc += v;
  }
  return acc.sum();
}

template <std::size_t R, typename S>
void product_block(const S* x, std::size_t k_dim, const S* w, std::size_t n, S* out) {
  using namespace Eigen::internal;
  using P = typename packet_traits<S>::type;
  constexpr std::size_t L = unpacket_traits<P>::size;
  constexpr std::size_t NP = 4;
  constexpr std::size_t CB = NP * L;
  std::size_t j0 = 0;
  for (; j0 + CB <= n; j0 += CB) {
    P acc[R][NP];
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < NP; ++c) acc[r][c] = pset1<P>(S(0));
    for (std::size_t k = 0; k < k_dim; ++k) {
      const S* wk = w + k * n + j0;
      P wv[NP];
      for (std::size_t c = 0; c < NP; ++c) wv[c] = ploadu<P>(wk + c * L);
      for (std::size_t r = 0; r < R; ++r) {
        const P a = pset1<P>(x[r * k_dim + k]);
        for (std::size_t c = 0; c < NP; ++c) acc[r][c] = pmadd(a, wv[c], acc[r][c]);
      }
    }
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < NP; ++c) pstoreu(out + r * n + j0 + c * L, acc[r][c]);
  }
  for (; j0 + L <= n; j0 += L) {
    P acc[R];
    for (std::size_t r = 0; r < R; ++r) acc[r] = pset1<P>(S(0));
    for (std::size_t k = 0; k < k_dim; ++k) {
      const P wv = ploadu<P>(w + k * n + j0);
      for (std::size_t r = 0; r < R; ++r) acc[r] = pmadd(pset1<P>(x[r * k_dim + k]), wv, acc[r]);
    }
    for (std::size_t r = 0; r < R; ++r) pstoreu(out + r * n + j0, acc[r]);
  }
  for (; j0 < n; ++j0) {
    for (std::size_t r = 0; r < R; ++r) {
      S acc = 0;
      for (std::size_t k = 0; k < k_dim; ++k) acc = std::fma(x[r * k_dim + k], w[k * n + j0], acc);
      out[r * n + j0] = acc;
    }
  }
}

// out = x * w for row-major x (rows x k) and w (k x n).
template <typename S>
Matrix<S> rows_times(const Matrix<S>& x, const Matrix<S>& w) {
  const auto rows = static_cast<std::size_t>(x.rows());
  const auto k_dim = static_cast<std::size_t>(x.cols());
  const auto n = static_cast<std::size_t>(w.cols());
  Matrix<S> out(x.rows(), w.cols());
  std::size_t i = 0;
  for (; i + 4 <= rows; i += 4) product_block<4>(x.data() + i * k_dim, k_dim, w.data(), n, out.data() + i * n);
  for (; i < rows; ++i) product_block<1>(x.data() + i * k_dim, k_dim, w.data(), n, out.data() + i * n);
  return out;
}

template <typename S>
Matrix<S> norm_rows(const Matrix<S>& x, const RowVector<S>& gain, const RowVector<S>& bias) {
  const auto d = static_cast<std::size_t>(x.cols());
  Matrix<S> y(x.rows(), x.cols());
  std::vector<S> sq(d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const S* xi = x.data() + static_cast<std::size_t>(i) * d;
    S* yi = y.data() + static_cast<std::size_t>(i) * d;
    const S mean = chunked_sum(xi, d) / static_cast<S>(d);
    for (std::size_t j = 0; j < d; ++j) {
      yi[j] = xi[j] - mean;
      sq[j] = yi[j] * yi[j];
    }
    const S r = S(1) / std::sqrt(chunked_sum(sq.data(), d) / static_cast<S>(d) + static_cast<S>(kNormEps));
    for (std::size_t j = 0; j < d; ++j) yi[j] = yi[j] * r * gain(static_cast<Eigen::Index>(j)) + bias(static_cast<Eigen::Index>(j));
  }
  return y;
}

template <typename S>
void gelu_inplace(Matrix<S>& h) {
  chunked(h.data(), static_cast<std::size_t>(h.size()), [](Chunk<S>& v) {
    const S c = static_cast<S>(0.7978845608028654);
    v = S(0.5) * v * (S(1) + (c * (v + S(0.044715) * v * v * v)).tanh());
  });
}

template <typename S>
RowVector<S> log_softmax_row(const S* logits, std::size_t n) {
  const S mx = *std::max_element(logits, logits + n);
  std::vector<S> e(logits, logits + n);
  for (auto& v : e) v -= mx;
  chunked(e.data(), n, [](Chunk<S>& v) { v = v.exp(); });
  const S lse = mx + std::log(chunked_sum(e.data(), n));
  RowVector<S> out(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) out(static_cast<Eigen::Index>(j)) = logits[j] - lse;
  return out;
}

void check_ids(const ModelConfig& cfg, std::span<const TokenId> ids) {
  for (TokenId t : ids)
    if (t < 0 || t >= cfg.vocab_size) throw InvalidArgument("token id " + std::to_string(t) + " outside the vocabulary");
}

// Runs the branches on top of the cache prefix. With `append` (single branch)
// the branch's keys and values are written into the cache.
template <typename S>
std::vector<Matrix<S>> run_branches(const TinyLM<S>& m, KvCache<S>& cache, std::span<const Continuation> branches,
                                    bool append) {
  const ModelConfig& cfg = m.config;
  const auto& P = m.params;
  const std::size_t prefix = cache.length;
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto dh = static_cast<std::size_t>(cfg.head_dim());
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& b : branches) {
    if (prefix + b.ids.size() > static_cast<std::size_t>(cfg.max_seq_len))
      throw InvalidArgument("sequence of length " + std::to_string(prefix + b.ids.size()) + " exceeds max_seq_len " +
                            std::to_string(cfg.max_seq_len));
    check_ids(cfg, b.ids);
    for (auto r : b.output_rows)
      if (r >= b.ids.size()) throw InvalidArgument("output row outside the chunk");
    offsets.push_back(total);
    total += b.ids.size();
  }
  std::vector<Matrix<S>> results(branches.size());
  for (std::size_t b = 0; b < branches.size(); ++b)
    results[b].resize(static_cast<Eigen::Index>(branches[b].output_rows.size()), cfg.vocab_size);
  if (total == 0) return results;

  const auto rows = static_cast<Eigen::Index>(total);
  Matrix<S> x(rows, cfg.d_model);
  for (std::size_t b = 0; b < branches.size(); ++b)
    for (std::size_t t = 0; t < branches[b].ids.size(); ++t)
      x.row(static_cast<Eigen::Index>(offsets[b] + t)) =
          P.token_embedding.row(branches[b].ids[t]) + P.position_embedding.row(static_cast<Eigen::Index>(prefix + t));

  std::vector<S> s(static_cast<std::size_t>(cfg.max_seq_len));
  for (std::size_t l = 0; l < P.layers.size(); ++l) {
    const auto& L = P.layers[l];
    const Matrix<S> a1 = norm_rows(x, L.ln1_gain, L.ln1_bias);
    const Matrix<S> q = rows_times(a1, L.wq);
    const Matrix<S> k = rows_times(a1, L.wk);
    const Matrix<S> v = rows_times(a1, L.wv);
    const Matrix<S> kt = k.transpose();
    const Matrix<S>& cache_kt = cache.keys[l];
    const Matrix<S>& cache_v = cache.values[l];

    Matrix<S> attn = Matrix<S>::Zero(rows, cfg.d_model);
    for (std::size_t b = 0; b < branches.size(); ++b) {
      const std::size_t own0 = offsets[b];
      for (std::size_t t = 0; t < branches[b].ids.size(); ++t) {
        const std::size_t row = own0 + t;
        const std::size_t visible = prefix + t + 1;
        for (std::size_t h = 0; h < static_cast<std::size_t>(cfg.n_heads); ++h) {
          std::fill(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(visible), S(0));
          for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) {
            const S qc = q(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c));
            const S* kp = cache_kt.data() + c * static_cast<std::size_t>(cache_kt.cols());
            for (std::size_t j = 0; j < prefix; ++j) s[j] = std::fma(qc, kp[j], s[j]);
            const S* ko = kt.data() + c * total + own0;
            for (std::size_t j = 0; j <= t; ++j) s[prefix + j] = std::fma(qc, ko[j], s[prefix + j]);
          }
          S mx = s[0] * scale;
          for (std::size_t j = 0; j < visible; ++j) {
            s[j] *= scale;
            mx = std::max(mx, s[j]);
          }
          for (std::size_t j = 0; j < visible; ++j) s[j] -= mx;
          chunked(s.data(), visible, [](Chunk<S>& e) { e = e.exp(); });
          const S sum = chunked_sum(s.data(), visible);
          S* o = attn.data() + row * d + h * dh;
          for (std::size_t j = 0; j < visible; ++j) {
            const S p = s[j] / sum;
            const S* vj = j < prefix ? cache_v.data() + j * d + h * dh : v.data() + (own0 + j - prefix) * d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) o[c] = std::fma(p, vj[c], o[c]);
          }
        }
      }
    }
    if (append) {
      const auto n = static_cast<Eigen::Index>(total);
      cache.keys[l].middleCols(static_cast<Eigen::Index>(prefix), n) = kt;
      cache.values[l].middleRows(static_cast<Eigen::Index>(prefix), n) = v;
    }
    x += rows_times(attn, L.wo);
    const Matrix<S> a2 = norm_rows(x, L.ln2_gain, L.ln2_bias);
    Matrix<S> hidden = rows_times(a2, L.w1);
    hidden.rowwise() += L.b1;
    gelu_inplace(hidden);
    x += rows_times(hidden, L.w2);
    x.rowwise() += L.b2;
  }
  if (append) cache.length += total;

  for (std::size_t b = 0; b < branches.size(); ++b) {
    const auto& out_rows = branches[b].output_rows;
    if (out_rows.empty()) continue;
    Matrix<S> sel(static_cast<Eigen::Index>(out_rows.size()), cfg.d_model);
    for (std::size_t r = 0; r < out_rows.size(); ++r)
      sel.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(offsets[b] + out_rows[r]));
    const Matrix<S> logits = rows_times(norm_rows(sel, P.final_gain, P.final_bias), P.lm_head);
    for (Eigen::Index r = 0; r < logits.rows(); ++r)
      results[b].row(r) = log_softmax_row(logits.data() + r * logits.cols(), static_cast<std::size_t>(logits.cols()));
  }
  return results;
}

}  // namespace

template <typename Scalar>
KvCache<Scalar>::KvCache(const ModelConfig& cfg) {
  keys.assign(static_cast<std::size_t>(cfg.n_layers), Matrix<Scalar>(cfg.d_model, cfg.max_seq_len));
  values.assign(static_cast<std::size_t>(cfg.n_layers), Matrix<Scalar>(cfg.max_seq_len, cfg.d_model));
}

template <typename Scalar>
Matrix<Scalar> extend(const TinyLM<Scalar>& m, KvCache<Scalar>& cache, std::span<const TokenId> ids,
                      std::span<const std::size_t> output_rows) {
  const Continuation c{ids, output_rows};
  return std::move(run_branches(m, cache, std::span<const Continuation>(&c, 1), true).front());
}

template <typename Scalar>
std::vector<Matrix<Scalar>> extend_branches(const TinyLM<Scalar>& m, const KvCache<Scalar>& cache,
                                            std::span<const Continuation> branches) {
  return run_branches(m, const_cast<KvCache<Scalar>&>(cache), branches, false);
}

template struct KvCache<float>;
template struct KvCache<double>;
template Matrix<float> extend(const TinyLM<float>&, KvCache<float>&, std::span<const TokenId>,
                              std::span<const std::size_t>);
template Matrix<double> extend(const TinyLM<double>&, KvCache<double>&, std::span<const TokenId>,
                               std::span<const std::size_t>);
template std::vector<Matrix<float>> extend_branches(const TinyLM<float>&, const KvCache<float>&,
                                                    std::span<const Continuation>);
template std::vector<Matrix<double>> extend_branches(const TinyLM<double>&, const KvCache<double>&,
                                                     std::span<const Continuation>);

}  // namespace coat
