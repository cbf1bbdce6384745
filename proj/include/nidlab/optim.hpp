#pragma once

#include <functional>
#include <vector>

#include "nidlab/tensor.hpp"

namespace nidlab {

struct RmsPropConfig {
  double lr = 1e-2;
  double rho = 0.99;
  double eps = 1e-8;
};

// Per-coordinate RMSProp: s <- rho*s + (1-rho)*g^2, p <- p - lr*g/(sqrt(s)+eps).
// A zero gradient leaves the parameter unchanged. Non-finite gradients are
// rejected before any state is touched.
class RmsProp {
 public:
  RmsProp(RmsPropConfig cfg, const std::vector<Tensor*>& params);

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

  const RmsPropConfig& config() const { return cfg_; }
  const std::vector<Tensor>& state() const { return s_; }

 private:
  RmsPropConfig cfg_;
  std::vector<Tensor> s_;
};

// Maximum relative error between analytic gradients and central finite
// differences of f at `params`, step h per coordinate. Relative error of a
// pair (a, fd) is |a - fd| / max(1, |a|, |fd|).
double fd_max_rel_error(const std::function<double(const std::vector<Tensor>&)>& f,
                        const std::vector<Tensor>& params,
                        const std::vector<Tensor>& analytic, double h);

}  // namespace nidlab
