#include "ecgr/loss.hpp"

#include <cmath>

#include "ecgr/error.hpp"

namespace ecgr {

void LossParams::validate() const {
  if (!std::isfinite(alpha) || alpha < 0.0) fail(ErrorKind::kConfig, "alpha must be finite and >= 0");
  if (!(pearson_eps > 0.0)) fail(ErrorKind::kConfig, "pearson_eps must be positive");
}

template <class T>
LossTerms<T> composite_loss(ad::Tape<T>* tape, const ad::Tensor<T>& x_hat,
                            const ad::Tensor<T>& x, const LossParams& params) {
  params.validate();
  LossTerms<T> terms;
  terms.mse = ad::mse_loss(tape, x_hat, x);
  terms.pearson = ad::pearson_loss(tape, x_hat, x, static_cast<T>(params.pearson_eps));
  if (params.pearson_only) {
    terms.total = terms.pearson;
  } else {
    terms.total = ad::add(tape, terms.mse, ad::scale(tape, terms.pearson, static_cast<T>(params.alpha)));
  }
  return terms;
}

namespace {

ad::Tensor<double> as_tensor(const EcgRecord& r) {
  return ad::Tensor<double>({r.num_leads(), r.num_samples()},
                            std::vector<double>(r.data().begin(), r.data().end()));
}

void check_shapes(const EcgRecord& a, const EcgRecord& b) {
  if (a.num_samples() != b.num_samples()) {
    fail(ErrorKind::kShapeMismatch, "reconstruction and target differ in shape");
  }
}

}  // namespace

double mse_loss(const EcgRecord& x_hat, const EcgRecord& x) {
  check_shapes(x_hat, x);
  return ad::mse_loss<double>(nullptr, as_tensor(x_hat), as_tensor(x)).item();
}

double pearson_loss(const EcgRecord& x_hat, const EcgRecord& x, double eps) {
  check_shapes(x_hat, x);
  return ad::pearson_loss<double>(nullptr, as_tensor(x_hat), as_tensor(x), eps).item();
}

LossValues composite_loss(const EcgRecord& x_hat, const EcgRecord& x, const LossParams& params) {
  check_shapes(x_hat, x);
  const auto terms = composite_loss<double>(nullptr, as_tensor(x_hat), as_tensor(x), params);
  return {terms.total.item(), terms.mse.item(), terms.pearson.item()};
}

template LossTerms<float> composite_loss(ad::Tape<float>*, const ad::Tensor<float>&,
                                         const ad::Tensor<float>&, const LossParams&);
template LossTerms<double> composite_loss(ad::Tape<double>*, const ad::Tensor<double>&,
                                          const ad::Tensor<double>&, const LossParams&);

}  // namespace ecgr
