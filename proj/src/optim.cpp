#include "nidlab/optim.hpp"

#include <cmath>
#include <string>

#include "nidlab/error.hpp"

namespace nidlab {

RmsProp::RmsProp(RmsPropConfig cfg, const std::vector<Tensor*>& params) : cfg_(cfg) {
  s_.reserve(params.size());
  for (const Tensor* p : params) s_.push_back(Tensor::zeros(p->shape));
}

void RmsProp::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != s_.size() || grads.size() != s_.size())
    throw Error("rmsprop: parameter/gradient count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->shape != grads[k].shape)
      throw Error("rmsprop: gradient shape " + grads[k].shape.str() +
                  " does not match parameter shape " + params[k]->shape.str());
    if (!grads[k].all_finite())
      throw Error("rmsprop: non-finite gradient for parameter " + std::to_string(k));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    Tensor& s = s_[k];
    const Tensor& g = grads[k];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      s.data[i] = cfg_.rho * s.data[i] + (1.0 - cfg_.rho) * g.data[i] * g.data[i];
      p.data[i] -= cfg_.lr * g.data[i] / (std::sqrt(s.data[i]) + cfg_.eps);
    }
  }
}

double fd_max_rel_error(const std::function<double(const std::vector<Tensor>&)>& f,
                        const std::vector<Tensor>& params,
                        const std::vector<Tensor>& analytic, double h) {
  if (analytic.size() != params.size())
    throw Error("fd_max_rel_error: analytic gradient count mismatch");
  std::vector<Tensor> work = params;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (analytic[k].shape != params[k].shape)
      throw Error("fd_max_rel_error: analytic gradient shape mismatch for parameter " +
                  std::to_string(k));
    for (std::size_t i = 0; i < params[k].numel(); ++i) {
      const double orig = work[k].data[i];
      work[k].data[i] = orig + h;
      const double fplus = f(work);
      work[k].data[i] = orig - h;
      const double fminus = f(work);
      work[k].data[i] = orig;
      const double fd = (fplus - fminus) / (2.0 * h);
      const double a = analytic[k].data[i];
      const double rel = std::fabs(a - fd) / std::max({1.0, std::fabs(a), std::fabs(fd)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace nidlab
