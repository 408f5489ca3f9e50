#include "evsal/optim.hpp"

#include <cmath>

#include "evsal/error.hpp"

namespace evsal {

void adamw_step(std::span<Parameter* const> params, const AdamWConfig& cfg) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    if (p->grad.shape() != p->value.shape()) {
      throw Error(ErrorKind::MissingGradient, "no gradient for parameter " + p->name);
    }
    if (p->first_moment.shape() != p->value.shape()) p->first_moment = Tensor(p->value.shape());
    if (p->second_moment.shape() != p->value.shape()) p->second_moment = Tensor(p->value.shape());
    p->step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step));
    const double decay = 1.0 - cfg.lr * cfg.weight_decay;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double g = p->grad[i];
      double& m = p->first_moment[i];
      double& v = p->second_moment[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      double& theta = p->value[i];
      theta *= decay;
      theta -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace evsal
