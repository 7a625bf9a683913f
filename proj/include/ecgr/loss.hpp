#pragma once

#include "ecgr/autodiff.hpp"
#include "ecgr/ecg.hpp"

namespace ecgr {

/// Weights of the composite objective mse + alpha * pearson. `pearson_only`
/// selects the alpha -> infinity regime, where the MSE term is dropped.
struct LossParams {
  double alpha = 0.1;
  double pearson_eps = 1e-8;
  bool pearson_only = false;

  static LossParams PearsonOnly() {
    LossParams p;
    p.pearson_only = true;
    return p;
  }
  void validate() const;
};

template <class T>
struct LossTerms {
  ad::Tensor<T> total;
  ad::Tensor<T> mse;
  ad::Tensor<T> pearson;
};

/// Composite loss on [.., L, N] tensors; differentiable through `tape`.
template <class T>
LossTerms<T> composite_loss(ad::Tape<T>* tape, const ad::Tensor<T>& x_hat,
                            const ad::Tensor<T>& x, const LossParams& params);

struct LossValues {
  double total = 0.0;
  double mse = 0.0;
  double pearson = 0.0;
};

double mse_loss(const EcgRecord& x_hat, const EcgRecord& x);
double pearson_loss(const EcgRecord& x_hat, const EcgRecord& x, double eps = 1e-8);
LossValues composite_loss(const EcgRecord& x_hat, const EcgRecord& x, const LossParams& params);

}  // namespace ecgr
