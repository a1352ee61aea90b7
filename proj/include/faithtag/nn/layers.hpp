#pragma once

#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "faithtag/errors.hpp"
#include "faithtag/nn/tensor.hpp"

namespace faithtag::nn {

inline constexpr double kInitStd = 0.02;

/// y = x W^T + b. Weight is (out x in).
template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  /// Without a bias, `bias` stays zero and is not collected.
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng, bool with_bias = true)
      : weight(name + ".weight", out, in), bias(name + ".bias", 1, out, /*decay=*/false), has_bias_(with_bias) {
    normal_init(weight.value, kInitStd, rng);
  }

  bool has_bias() const { return has_bias_; }

  Eigen::Index in_features() const { return weight.value.cols(); }
  Eigen::Index out_features() const { return weight.value.rows(); }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
    if (x.cols() != in_features()) {
      throw DimensionMismatch(weight.name + ": input has " + std::to_string(x.cols()) +
                              " features, expected " + std::to_string(in_features()));
    }
    Matrix<Scalar> y = x * weight.value.transpose();
    if (has_bias_) y.rowwise() += bias.value.row(0);
    return y;
  }

  /// Accumulates parameter gradients; returns dL/dx.
  Matrix<Scalar> backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
    weight.grad.noalias() += dy.transpose() * x;
    if (has_bias_) bias.grad.row(0) += dy.colwise().sum();
    return dy * weight.value;
  }

  /// Parameter gradients only, for frozen inputs.
  void backward_params(const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
    weight.grad.noalias() += dy.transpose() * x;
    if (has_bias_) bias.grad.row(0) += dy.colwise().sum();
  }

  void collect(ParameterRefs<Scalar>& out) {
    out.push_back(&weight);
    if (has_bias_) out.push_back(&bias);
  }

  Parameter<Scalar> weight;
  Parameter<Scalar> bias;

 private:
  bool has_bias_ = true;
};

template <typename Scalar>
class LayerNorm {
 public:
  struct Cache {
    Matrix<Scalar> normalized;
    Vector<Scalar> inv_std;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, Eigen::Index dim)
      : gain(name + ".gain", 1, dim, false), shift(name + ".shift", 1, dim, false) {
    gain.value.setOnes();
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache) const {
    const Scalar d = static_cast<Scalar>(x.cols());
    cache.normalized.resize(x.rows(), x.cols());
    cache.inv_std.resize(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Scalar mean = x.row(r).sum() / d;
      auto centered = (x.row(r).array() - mean).eval();
      const Scalar var = centered.square().sum() / d;
      const Scalar inv = Scalar(1) / std::sqrt(var + Scalar(kEps));
      cache.inv_std(r) = inv;
      cache.normalized.row(r) = centered * inv;
    }
    Matrix<Scalar> y = cache.normalized.array().rowwise() * gain.value.row(0).array();
    y.rowwise() += shift.value.row(0);
    return y;
  }

  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dy) {
    const auto& xhat = cache.normalized;
    gain.grad.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
    shift.grad.row(0) += dy.colwise().sum();
    Matrix<Scalar> dxhat = dy.array().rowwise() * gain.value.row(0).array();
    const Scalar d = static_cast<Scalar>(dy.cols());
    Matrix<Scalar> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const Scalar sum_d = dxhat.row(r).sum();
      const Scalar sum_dx = dxhat.row(r).dot(xhat.row(r));
      dx.row(r) = (cache.inv_std(r) / d) *
                  (d * dxhat.row(r).array() - sum_d - xhat.row(r).array() * sum_dx).matrix();
    }
    return dx;
  }

  void collect(ParameterRefs<Scalar>& out) {
    out.push_back(&gain);
    out.push_back(&shift);
  }

  static constexpr double kEps = 1e-5;
  Parameter<Scalar> gain;
  Parameter<Scalar> shift;
};

/// Lookup table; rows are ids.
template <typename Scalar>
class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, Eigen::Index count, Eigen::Index dim, Rng& rng)
      : table(name + ".weight", count, dim) {
    normal_init(table.value, kInitStd, rng);
  }

  Eigen::Index count() const { return table.value.rows(); }
  Eigen::Index dim() const { return table.value.cols(); }

  Matrix<Scalar> forward(std::span<const int> ids) const {
    Matrix<Scalar> out(static_cast<Eigen::Index>(ids.size()), dim());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= count()) {
        throw DimensionMismatch(table.name + ": id " + std::to_string(ids[i]) + " out of range");
      }
      out.row(static_cast<Eigen::Index>(i)) = table.value.row(ids[i]);
    }
    return out;
  }

  void backward(std::span<const int> ids, const Matrix<Scalar>& dy) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      table.grad.row(ids[i]) += dy.row(static_cast<Eigen::Index>(i));
    }
  }

  void collect(ParameterRefs<Scalar>& out) { out.push_back(&table); }

  Parameter<Scalar> table;
};

/// Position-wise fc2(gelu(fc1(x))).
template <typename Scalar>
class FeedForward {
 public:
  struct Cache {
    Matrix<Scalar> input;
    Matrix<Scalar> pre;
    Matrix<Scalar> act;
  };

  FeedForward() = default;
  FeedForward(const std::string& name, Eigen::Index dim, Eigen::Index hidden, Rng& rng)
      : fc1(name + ".fc1", dim, hidden, rng), fc2(name + ".fc2", hidden, dim, rng) {}

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache) const {
    cache.input = x;
    cache.pre = fc1.forward(x);
    cache.act = cache.pre.unaryExpr([](Scalar v) { return gelu(v); });
    return fc2.forward(cache.act);
  }

  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dy) {
    Matrix<Scalar> dact = fc2.backward(cache.act, dy);
    Matrix<Scalar> dpre =
        dact.array() * cache.pre.unaryExpr([](Scalar v) { return gelu_derivative(v); }).array();
    return fc1.backward(cache.input, dpre);
  }

  void collect(ParameterRefs<Scalar>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }

  Linear<Scalar> fc1;
  Linear<Scalar> fc2;
};

/// Multi-head scaled dot-product attention. Queries come from `x`, keys and
/// values from `memory` (the same matrix for self-attention). The key
/// projection has no bias: it would shift every score in a row equally.
template <typename Scalar>
class MultiHeadAttention {
 public:
  struct Cache {
    Matrix<Scalar> x;
    Matrix<Scalar> memory;
    Matrix<Scalar> q, k, v;
    std::vector<Matrix<Scalar>> probs;  // one (Tq x Tk) matrix per head
    Matrix<Scalar> context;
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, Eigen::Index dim, int heads, bool causal, Rng& rng)
      : query(name + ".q", dim, dim, rng),
        key(name + ".k", dim, dim, rng, /*with_bias=*/false),
        value(name + ".v", dim, dim, rng),
        output(name + ".o", dim, dim, rng),
        heads_(heads),
        causal_(causal) {
    if (heads <= 0 || dim % heads != 0) {
      throw DimensionMismatch(name + ": model dimension " + std::to_string(dim) +
                              " not divisible by " + std::to_string(heads) + " heads");
    }
  }

  int heads() const { return heads_; }
  bool causal() const { return causal_; }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Matrix<Scalar>& memory, Cache& cache) const {
    cache.x = x;
    cache.memory = memory;
    cache.q = query.forward(x);
    cache.k = key.forward(memory);
    cache.v = value.forward(memory);
    const Eigen::Index dh = x.cols() / heads_;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    cache.probs.resize(static_cast<std::size_t>(heads_));
    cache.context.resize(x.rows(), x.cols());
    for (int h = 0; h < heads_; ++h) {
      const Eigen::Index c0 = h * dh;
      Matrix<Scalar> scores = (cache.q.middleCols(c0, dh) * cache.k.middleCols(c0, dh).transpose()) * scale;
      if (causal_) {
        for (Eigen::Index i = 0; i < scores.rows(); ++i) {
          for (Eigen::Index j = i + 1; j < scores.cols(); ++j) {
            scores(i, j) = -std::numeric_limits<Scalar>::infinity();
          }
        }
      }
      auto& p = cache.probs[static_cast<std::size_t>(h)];
      p = softmax_rows(scores);
      cache.context.middleCols(c0, dh).noalias() = p * cache.v.middleCols(c0, dh);
    }
    return output.forward(cache.context);
  }

  /// Returns (dL/dx, dL/dmemory).
  std::pair<Matrix<Scalar>, Matrix<Scalar>> backward(const Cache& cache, const Matrix<Scalar>& dy) {
    Matrix<Scalar> dcontext = output.backward(cache.context, dy);
    const Eigen::Index dh = cache.x.cols() / heads_;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    Matrix<Scalar> dq(cache.q.rows(), cache.q.cols());
    Matrix<Scalar> dk(cache.k.rows(), cache.k.cols());
    Matrix<Scalar> dv(cache.v.rows(), cache.v.cols());
    for (int h = 0; h < heads_; ++h) {
      const Eigen::Index c0 = h * dh;
      const auto& p = cache.probs[static_cast<std::size_t>(h)];
      Matrix<Scalar> dctx = dcontext.middleCols(c0, dh);
      dv.middleCols(c0, dh).noalias() = p.transpose() * dctx;
      Matrix<Scalar> dp = dctx * cache.v.middleCols(c0, dh).transpose();
      Vector<Scalar> row_dot = (dp.array() * p.array()).rowwise().sum();
      Matrix<Scalar> dscores = (p.array() * (dp.array().colwise() - row_dot.array())) * scale;
      dq.middleCols(c0, dh).noalias() = dscores * cache.k.middleCols(c0, dh);
      dk.middleCols(c0, dh).noalias() = dscores.transpose() * cache.q.middleCols(c0, dh);
    }
    Matrix<Scalar> dx = query.backward(cache.x, dq);
    Matrix<Scalar> dmem = key.backward(cache.memory, dk);
    dmem += value.backward(cache.memory, dv);
    return {std::move(dx), std::move(dmem)};
  }

  void collect(ParameterRefs<Scalar>& out) {
    query.collect(out);
    key.collect(out);
    value.collect(out);
    output.collect(out);
  }

  Linear<Scalar> query, key, value, output;

 private:
  int heads_ = 1;
  bool causal_ = false;
};

}  // namespace faithtag::nn
