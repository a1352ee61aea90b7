#pragma once

#include <string>
#include <vector>

#include "faithtag/nn/layers.hpp"

namespace faithtag::nn {

struct TransformerDims {
  int encoder_layers = 2;
  int decoder_layers = 2;
  int d_model = 128;
  int heads = 4;
  int d_ff = 512;
  int max_len = 512;
};

// Pre-norm blocks: x + f(norm(x)).

template <typename Scalar>
class EncoderLayer {
 public:
  struct Cache {
    typename LayerNorm<Scalar>::Cache norm1, norm2;
    typename MultiHeadAttention<Scalar>::Cache attn;
    typename FeedForward<Scalar>::Cache ffn;
  };

  EncoderLayer() = default;
  EncoderLayer(const std::string& name, const TransformerDims& dims, Rng& rng)
      : norm1(name + ".norm1", dims.d_model),
        self_attn(name + ".self_attn", dims.d_model, dims.heads, /*causal=*/false, rng),
        norm2(name + ".norm2", dims.d_model),
        ffn(name + ".ffn", dims.d_model, dims.d_ff, rng) {}

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache) const {
    Matrix<Scalar> a = norm1.forward(x, cache.norm1);
    Matrix<Scalar> x1 = x + self_attn.forward(a, a, cache.attn);
    Matrix<Scalar> b = norm2.forward(x1, cache.norm2);
    return x1 + ffn.forward(b, cache.ffn);
  }

  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dy) {
    Matrix<Scalar> dx1 = dy + norm2.backward(cache.norm2, ffn.backward(cache.ffn, dy));
    auto [da_q, da_kv] = self_attn.backward(cache.attn, dx1);
    da_q += da_kv;
    return dx1 + norm1.backward(cache.norm1, da_q);
  }

  void collect(ParameterRefs<Scalar>& out) {
    norm1.collect(out);
    self_attn.collect(out);
    norm2.collect(out);
    ffn.collect(out);
  }

  LayerNorm<Scalar> norm1;
  MultiHeadAttention<Scalar> self_attn;
  LayerNorm<Scalar> norm2;
  FeedForward<Scalar> ffn;
};

template <typename Scalar>
class DecoderLayer {
 public:
  struct Cache {
    typename LayerNorm<Scalar>::Cache norm1, norm2, norm3;
    typename MultiHeadAttention<Scalar>::Cache self, cross;
    typename FeedForward<Scalar>::Cache ffn;
  };

  DecoderLayer() = default;
  DecoderLayer(const std::string& name, const TransformerDims& dims, Rng& rng)
      : norm1(name + ".norm1", dims.d_model),
        self_attn(name + ".self_attn", dims.d_model, dims.heads, /*causal=*/true, rng),
        norm2(name + ".norm2", dims.d_model),
        cross_attn(name + ".cross_attn", dims.d_model, dims.heads, /*causal=*/false, rng),
        norm3(name + ".norm3", dims.d_model),
        ffn(name + ".ffn", dims.d_model, dims.d_ff, rng) {}

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Matrix<Scalar>& memory, Cache& cache) const {
    Matrix<Scalar> a = norm1.forward(x, cache.norm1);
    Matrix<Scalar> x1 = x + self_attn.forward(a, a, cache.self);
    Matrix<Scalar> b = norm2.forward(x1, cache.norm2);
    Matrix<Scalar> x2 = x1 + cross_attn.forward(b, memory, cache.cross);
    Matrix<Scalar> c = norm3.forward(x2, cache.norm3);
    return x2 + ffn.forward(c, cache.ffn);
  }

  /// Returns dL/dx and adds dL/dmemory into `dmemory`.
  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dy, Matrix<Scalar>& dmemory) {
    Matrix<Scalar> dx2 = dy + norm3.backward(cache.norm3, ffn.backward(cache.ffn, dy));
    auto [db, dmem] = cross_attn.backward(cache.cross, dx2);
    dmemory += dmem;
    Matrix<Scalar> dx1 = dx2 + norm2.backward(cache.norm2, db);
    auto [da_q, da_kv] = self_attn.backward(cache.self, dx1);
    da_q += da_kv;
    return dx1 + norm1.backward(cache.norm1, da_q);
  }

  void collect(ParameterRefs<Scalar>& out) {
    norm1.collect(out);
    self_attn.collect(out);
    norm2.collect(out);
    cross_attn.collect(out);
    norm3.collect(out);
    ffn.collect(out);
  }

  LayerNorm<Scalar> norm1;
  MultiHeadAttention<Scalar> self_attn;
  LayerNorm<Scalar> norm2;
  MultiHeadAttention<Scalar> cross_attn;
  LayerNorm<Scalar> norm3;
  FeedForward<Scalar> ffn;
};

/// Token + learned position embedding, a layer stack, and a final norm.
/// The token table is owned by the caller so encoder and decoder can share it.
template <typename Scalar>
class EncoderStack {
 public:
  struct Cache {
    std::vector<typename EncoderLayer<Scalar>::Cache> layers;
    typename LayerNorm<Scalar>::Cache final_norm;
  };

  EncoderStack() = default;
  EncoderStack(const std::string& name, const TransformerDims& dims, Rng& rng)
      : positions(name + ".positions", dims.max_len, dims.d_model, rng), final_norm(name + ".final_norm", dims.d_model) {
    for (int i = 0; i < dims.encoder_layers; ++i) {
      layers.emplace_back(name + ".layers." + std::to_string(i), dims, rng);
    }
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& token_embeddings, Cache& cache) const {
    Matrix<Scalar> x = token_embeddings + positions.forward(position_ids(token_embeddings.rows()));
    cache.layers.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) x = layers[i].forward(x, cache.layers[i]);
    return final_norm.forward(x, cache.final_norm);
  }

  /// Returns dL/d(token embeddings).
  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dy) {
    Matrix<Scalar> dx = final_norm.backward(cache.final_norm, dy);
    for (std::size_t i = layers.size(); i-- > 0;) dx = layers[i].backward(cache.layers[i], dx);
    positions.backward(position_ids(dx.rows()), dx);
    return dx;
  }

  void collect(ParameterRefs<Scalar>& out) {
    positions.collect(out);
    for (auto& l : layers) l.collect(out);
    final_norm.collect(out);
  }

  std::vector<int> position_ids(Eigen::Index length) const {
    if (length > positions.count()) {
      throw DimensionMismatch("sequence length " + std::to_string(length) + " exceeds max_len " +
                              std::to_string(positions.count()));
    }
    std::vector<int> ids(static_cast<std::size_t>(length));
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    return ids;
  }

  Embedding<Scalar> positions;
  std::vector<EncoderLayer<Scalar>> layers;
  LayerNorm<Scalar> final_norm;
};

template <typename Scalar>
class DecoderStack {
 public:
  struct Cache {
    std::vector<typename DecoderLayer<Scalar>::Cache> layers;
    typename LayerNorm<Scalar>::Cache final_norm;
  };

  DecoderStack() = default;
  DecoderStack(const std::string& name, const TransformerDims& dims, Rng& rng)
      : positions(name + ".positions", dims.max_len, dims.d_model, rng), final_norm(name + ".final_norm", dims.d_model) {
    for (int i = 0; i < dims.decoder_layers; ++i) {
      layers.emplace_back(name + ".layers." + std::to_string(i), dims, rng);
    }
  }

  /// Hidden states h_t, one row per decoder position.
  Matrix<Scalar> forward(const Matrix<Scalar>& token_embeddings, const Matrix<Scalar>& memory,
                         Cache& cache) const {
    Matrix<Scalar> x = token_embeddings + positions.forward(position_ids(token_embeddings.rows()));
    cache.layers.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) x = layers[i].forward(x, memory, cache.layers[i]);
    return final_norm.forward(x, cache.final_norm);
  }

  /// Returns dL/d(token embeddings); adds dL/dmemory into `dmemory`.
  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dy, Matrix<Scalar>& dmemory) {
    Matrix<Scalar> dx = final_norm.backward(cache.final_norm, dy);
    for (std::size_t i = layers.size(); i-- > 0;) dx = layers[i].backward(cache.layers[i], dx, dmemory);
    positions.backward(position_ids(dx.rows()), dx);
    return dx;
  }

  void collect(ParameterRefs<Scalar>& out) {
    positions.collect(out);
    for (auto& l : layers) l.collect(out);
    final_norm.collect(out);
  }

  std::vector<int> position_ids(Eigen::Index length) const {
    if (length > positions.count()) {
      throw DimensionMismatch("sequence length " + std::to_string(length) + " exceeds max_len " +
                              std::to_string(positions.count()));
    }
    std::vector<int> ids(static_cast<std::size_t>(length));
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    return ids;
  }

  Embedding<Scalar> positions;
  std::vector<DecoderLayer<Scalar>> layers;
  LayerNorm<Scalar> final_norm;
};

}  // namespace faithtag::nn
