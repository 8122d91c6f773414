#include "dwm/baselines.hpp"

namespace dwm {

RawAction random_policy(RngStream& rng, int action_dim) {
  RawAction a(action_dim);
  for (int i = 0; i < action_dim; ++i) a(i) = rng.uniform(-1.0, 1.0);
  return a;
}

std::pair<Eigen::VectorXcd, double> egt_policy(const Eigen::VectorXcd& channel, double p_max_mw, double alpha) {
  const int n = static_cast<int>(channel.size());
  Eigen::VectorXcd w = Eigen::VectorXcd::Zero(n);
  if (channel.norm() > 0.0) {
    const double mag = std::sqrt(p_max_mw / n);
    for (int i = 0; i < n; ++i) {
      const double a = std::abs(channel(i));
      w(i) = a > 0.0 ? std::complex<double>(mag * channel(i).real() / a, mag * channel(i).imag() / a)
                     : std::complex<double>(mag, 0.0);
    }
  }
  return {std::move(w), alpha};
}

}  // namespace dwm
