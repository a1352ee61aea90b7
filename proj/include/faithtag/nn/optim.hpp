#pragma once

#include <cmath>
#include <vector>

#include "faithtag/nn/tensor.hpp"

namespace faithtag::nn {

struct AdamWOptions {
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with decoupled weight decay over a fixed parameter set. Only the
/// parameters handed to the constructor are ever updated.
template <typename Scalar>
class AdamW {
 public:
  AdamW(ParameterRefs<Scalar> params, AdamWOptions options)
      : params_(std::move(params)), options_(options) {
    for (auto* p : params_) {
      first_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      second_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++steps_;
    const Scalar lr = static_cast<Scalar>(options_.learning_rate);
    const Scalar b1 = static_cast<Scalar>(options_.beta1);
    const Scalar b2 = static_cast<Scalar>(options_.beta2);
    const Scalar bias1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(steps_));
    const Scalar bias2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(steps_));
    const Scalar eps = static_cast<Scalar>(options_.epsilon);
    const Scalar wd = static_cast<Scalar>(options_.weight_decay);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      if (p.decay && wd > 0) p.value *= (Scalar(1) - lr * wd);
      first_[i] = b1 * first_[i] + (Scalar(1) - b1) * p.grad;
      second_[i] = b2 * second_[i] + (Scalar(1) - b2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= lr * (first_[i].array() / bias1) /
                         ((second_[i].array() / bias2).sqrt() + eps);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  long steps() const { return steps_; }
  const ParameterRefs<Scalar>& parameters() const { return params_; }

 private:
  ParameterRefs<Scalar> params_;
  AdamWOptions options_;
  std::vector<Matrix<Scalar>> first_;
  std::vector<Matrix<Scalar>> second_;
  long steps_ = 0;
};

}  // namespace faithtag::nn
