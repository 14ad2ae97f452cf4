#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rie/common.hpp"
#include "rie/sampling.hpp"

namespace rie {

/// Scalar objective with analytic gradient, used by the gradient-descent
/// transfer models. The gradient must match central finite differences.
struct ObjectiveFunction {
  std::function<double(const StateVec&)> value;
  std::function<StateVec(const StateVec&)> gradient;
};

/// A named transfer function T(x, c, t) with its preset parameter densities.
///
/// transfer must be total on the grid window times the parameter support and
/// at least piecewise continuous. Pure and reentrant; callable from any
/// worker concurrently.
struct TransferModel {
  std::string name;
  int state_dim = 0;
  int param_dim = 0;
  ParamDensitySet param_densities;
  std::optional<double> dt;  // set for discretized dynamics
  std::function<StateVec(const StateVec&, const ParamVec&, double)> transfer;
  std::optional<ObjectiveFunction> objective;
  // Grid windows must keep the first state component above this bound
  // (validated at config load).
  std::optional<double> min_x1;

  StateVec apply(const StateVec& x, const ParamVec& c, double t_n = 0.0) const {
    return transfer(x, c, t_n);
  }

  ParamVec param_means() const { return param_densities.means(); }
};

using ModelOverrides = std::map<std::string, double>;

namespace detail {

/// Named scalar parameters with defaults; unknown override keys are an error
/// reported with the full list of valid names.
class ParamReader {
 public:
  ParamReader(const std::string& model, const ModelOverrides& overrides)
      : model_(model), overrides_(overrides) {}

  double get(const std::string& key, double fallback) {
    known_.push_back(key);
    auto it = overrides_.find(key);
    return it == overrides_.end() ? fallback : it->second;
  }

  void finish() const {
    for (const auto& [key, _] : overrides_) {
      bool found = false;
      for (const auto& k : known_)
        if (k == key) found = true;
      if (!found) {
        std::ostringstream os;
        os << "model " << model_ << ": unknown parameter '" << key
           << "' (valid:";
        for (const auto& k : known_) os << ' ' << k;
        os << ")";
        throw Error(os.str());
      }
    }
  }

 private:
  std::string model_;
  const ModelOverrides& overrides_;
  std::vector<std::string> known_;
};

}  // namespace detail

/// 1D pure diffusion: T(x,c) = x + c with C ~ N(0, c_std^2). Iterating it
/// convolves the state density with the noise density every step.
inline TransferModel additive_diffusion(double c_std) {
  if (!(c_std > 0.0)) throw Error("additive_diffusion: c_std must be > 0");
  TransferModel m;
  m.name = "additive_diffusion";
  m.state_dim = 1;
  m.param_dim = 1;
  m.param_densities = {GaussianSpec{0.0, c_std}};
  m.transfer = [](const StateVec& x, const ParamVec& c, double) {
    return StateVec{x[0] + c[0]};
  };
  return m;
}

inline TransferModel additive_diffusion(const ModelOverrides& overrides) {
  detail::ParamReader p("additive_diffusion", overrides);
  const double c_std = p.get("c_std", 0.1);
  p.finish();
  return additive_diffusion(c_std);
}

/// Normalized Rosenzweig-MacArthur predator-prey system with random
/// parameters, Euler-discretized:
///   T1 = x1 + dt*( x1*(1 - x1/c1) - c2*x1*x2/(1+x1) )
///   T2 = x2 + dt*( -c3*x2 + c2*x1*x2/(1+x1) )
/// Presets C1,C2 ~ N(1, 0.01^2), C3 ~ N(0.25, 0.01^2), dt = 0.2.
/// The Holling term has a pole at x1 = -1; windows must stay above -0.5.
inline TransferModel rosenzweig_mcarthur_rde(const ModelOverrides& overrides = {}) {
  detail::ParamReader p("rosenzweig_mcarthur_rde", overrides);
  const double dt = p.get("dt", 0.2);
  const GaussianSpec c1{p.get("c1_mean", 1.0), p.get("c1_std", 0.01)};
  const GaussianSpec c2{p.get("c2_mean", 1.0), p.get("c2_std", 0.01)};
  const GaussianSpec c3{p.get("c3_mean", 0.25), p.get("c3_std", 0.01)};
  p.finish();
  if (!(dt > 0.0)) throw Error("rosenzweig_mcarthur_rde: dt must be > 0");

  TransferModel m;
  m.name = "rosenzweig_mcarthur_rde";
  m.state_dim = 2;
  m.param_dim = 3;
  m.param_densities = {c1, c2, c3};
  m.dt = dt;
  m.min_x1 = -0.5;
  m.transfer = [dt](const StateVec& x, const ParamVec& c, double) {
    const double holling = c[1] * x[0] * x[1] / (1.0 + x[0]);
    return StateVec{x[0] + dt * (x[0] * (1.0 - x[0] / c[0]) - holling),
                    x[1] + dt * (-c[2] * x[1] + holling)};
  };
  return m;
}

/// Rosenzweig-MacArthur SDE with multiplicative noise, Euler-Maruyama:
///   T1 = x1 + ( x1*(1 - x1/k) - m*x1*x2/(1+x1) )*dt + sigma1*x1*c1
///   T2 = x2 + ( -c*x2 + m*x1*x2/(1+x1) )*dt + sigma2*x2*c2
/// The Wiener increments enter as C1,C2 ~ N(0, dt), i.e. standard
/// deviation sqrt(dt). Presets k=1.9, m=1.1, c=0.31, sigma1=sigma2=0.04,
/// dt=0.05 (periodic orbits in the deterministic limit).
inline TransferModel rosenzweig_mcarthur_sde(const ModelOverrides& overrides = {}) {
  detail::ParamReader p("rosenzweig_mcarthur_sde", overrides);
  const double dt = p.get("dt", 0.05);
  const double k = p.get("k", 1.9);
  const double mm = p.get("m", 1.1);
  const double c = p.get("c", 0.31);
  const double s1 = p.get("sigma1", 0.04);
  const double s2 = p.get("sigma2", 0.04);
  p.finish();
  if (!(dt > 0.0)) throw Error("rosenzweig_mcarthur_sde: dt must be > 0");

  TransferModel m;
  m.name = "rosenzweig_mcarthur_sde";
  m.state_dim = 2;
  m.param_dim = 2;
  m.param_densities = {GaussianSpec{0.0, std::sqrt(dt)},
                       GaussianSpec{0.0, std::sqrt(dt)}};
  m.dt = dt;
  m.min_x1 = -0.5;
  m.transfer = [dt, k, mm, c, s1, s2](const StateVec& x, const ParamVec& w,
                                      double) {
    const double holling = mm * x[0] * x[1] / (1.0 + x[0]);
    return StateVec{
        x[0] + (x[0] * (1.0 - x[0] / k) - holling) * dt + s1 * x[0] * w[0],
        x[1] + (-c * x[1] + holling) * dt + s2 * x[1] * w[1]};
  };
  return m;
}

/// Gradient descent with an added diffusion term on the two-minimum quartic
///   F(x) = x1^4 - 3*x1^2 + x1 + 5 + 2*x2^2,
/// T = x - eta*grad F(x) + c. Presets eta=0.075, C1,C2 ~ N(0, 0.04^2).
inline TransferModel fdgd2_two_minima(const ModelOverrides& overrides = {}) {
  detail::ParamReader p("fdgd2_two_minima", overrides);
  const double eta = p.get("eta", 0.075);
  const double c_std = p.get("c_std", 0.04);
  p.finish();

  ObjectiveFunction f;
  f.value = [](const StateVec& x) {
    const double x1 = x[0];
    return x1 * x1 * x1 * x1 - 3.0 * x1 * x1 + x1 + 5.0 + 2.0 * x[1] * x[1];
  };
  f.gradient = [](const StateVec& x) {
    return StateVec{4.0 * x[0] * x[0] * x[0] - 6.0 * x[0] + 1.0, 4.0 * x[1]};
  };

  TransferModel m;
  m.name = "fdgd2_two_minima";
  m.state_dim = 2;
  m.param_dim = 2;
  m.param_densities = {GaussianSpec{0.0, c_std}, GaussianSpec{0.0, c_std}};
  m.objective = f;
  m.transfer = [eta, grad = f.gradient](const StateVec& x, const ParamVec& c,
                                        double) {
    const StateVec g = grad(x);
    return StateVec{x[0] - eta * g[0] + c[0], x[1] - eta * g[1] + c[1]};
  };
  return m;
}

/// Gradient descent with diffusion and a random learning rate on
/// Himmelblau's function F(x) = (x1^2+x2-11)^2 + (x1+x2^2-7)^2,
/// T = x - c3*grad F(x) + (c1,c2). Presets C1,C2 ~ N(0, 0.2^2),
/// C3 ~ N(0.01, 0.003^2).
inline TransferModel fdgd3_himmelblau(const ModelOverrides& overrides = {}) {
  detail::ParamReader p("fdgd3_himmelblau", overrides);
  const double c_std = p.get("c_std", 0.2);
  const double lr_mean = p.get("lr_mean", 0.01);
  const double lr_std = p.get("lr_std", 0.003);
  p.finish();

  ObjectiveFunction f;
  f.value = [](const StateVec& x) {
    const double u = x[0] * x[0] + x[1] - 11.0;
    const double v = x[0] + x[1] * x[1] - 7.0;
    return u * u + v * v;
  };
  f.gradient = [](const StateVec& x) {
    const double u = x[0] * x[0] + x[1] - 11.0;
    const double v = x[0] + x[1] * x[1] - 7.0;
    return StateVec{4.0 * x[0] * u + 2.0 * v, 2.0 * u + 4.0 * x[1] * v};
  };

  TransferModel m;
  m.name = "fdgd3_himmelblau";
  m.state_dim = 2;
  m.param_dim = 3;
  m.param_densities = {GaussianSpec{0.0, c_std}, GaussianSpec{0.0, c_std},
                       GaussianSpec{lr_mean, lr_std}};
  m.objective = f;
  m.transfer = [grad = f.gradient](const StateVec& x, const ParamVec& c, double) {
    const StateVec g = grad(x);
    return StateVec{x[0] - c[2] * g[0] + c[0], x[1] - c[2] * g[1] + c[1]};
  };
  return m;
}

/// Ikeda map with a random amplitude parameter u = C1 ~ N(0.7, 0.02^2):
///   t  = 0.4 - 6/(1 + x1^2 + x2^2)
///   T1 = 1 + u*(x1*cos t - x2*sin t)
///   T2 = u*(x1*sin t + x2*cos t)
inline TransferModel ikeda(const ModelOverrides& overrides = {}) {
  detail::ParamReader p("ikeda", overrides);
  const double u_mean = p.get("u_mean", 0.7);
  const double u_std = p.get("u_std", 0.02);
  p.finish();

  TransferModel m;
  m.name = "ikeda";
  m.state_dim = 2;
  m.param_dim = 1;
  m.param_densities = {GaussianSpec{u_mean, u_std}};
  m.transfer = [](const StateVec& x, const ParamVec& c, double) {
    const double t = 0.4 - 6.0 / (1.0 + x[0] * x[0] + x[1] * x[1]);
    const double ct = std::cos(t);
    const double st = std::sin(t);
    return StateVec{1.0 + c[0] * (x[0] * ct - x[1] * st),
                    c[0] * (x[0] * st + x[1] * ct)};
  };
  return m;
}

/// Lozi map with a random slope parameter a = C1 ~ N(1.55, 0.1^2), b=0.3:
///   T1 = 1 - a*|x1| + x2
///   T2 = b*x1
/// Continuous everywhere, non-differentiable on the line x1 = 0.
inline TransferModel lozi(const ModelOverrides& overrides = {}) {
  detail::ParamReader p("lozi", overrides);
  const double a_mean = p.get("a_mean", 1.55);
  const double a_std = p.get("a_std", 0.1);
  const double b = p.get("b", 0.3);
  p.finish();

  TransferModel m;
  m.name = "lozi";
  m.state_dim = 2;
  m.param_dim = 1;
  m.param_densities = {GaussianSpec{a_mean, a_std}};
  m.transfer = [b](const StateVec& x, const ParamVec& c, double) {
    return StateVec{1.0 - c[0] * std::abs(x[0]) + x[1], b * x[0]};
  };
  return m;
}

/// 2D Ornstein-Uhlenbeck process, Euler-Maruyama:
///   Ti = xi - xi*dt + sigmai*ci,   C1,C2 ~ N(0, dt)
/// (Wiener increments with variance dt, std sqrt(dt)).
/// Presets sigma1=0.4, sigma2=0.6, dt=0.025.
inline TransferModel ornstein_uhlenbeck_2d(const ModelOverrides& overrides = {}) {
  detail::ParamReader p("ornstein_uhlenbeck_2d", overrides);
  const double dt = p.get("dt", 0.025);
  const double s1 = p.get("sigma1", 0.4);
  const double s2 = p.get("sigma2", 0.6);
  p.finish();
  if (!(dt > 0.0)) throw Error("ornstein_uhlenbeck_2d: dt must be > 0");

  TransferModel m;
  m.name = "ornstein_uhlenbeck_2d";
  m.state_dim = 2;
  m.param_dim = 2;
  m.param_densities = {GaussianSpec{0.0, std::sqrt(dt)},
                       GaussianSpec{0.0, std::sqrt(dt)}};
  m.dt = dt;
  m.transfer = [dt, s1, s2](const StateVec& x, const ParamVec& c, double) {
    return StateVec{x[0] - x[0] * dt + s1 * c[0], x[1] - x[1] * dt + s2 * c[1]};
  };
  return m;
}

inline const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names = {
      "additive_diffusion",      "rosenzweig_mcarthur_rde",
      "rosenzweig_mcarthur_sde", "fdgd2_two_minima",
      "fdgd3_himmelblau",        "ikeda",
      "lozi",                    "ornstein_uhlenbeck_2d"};
  return names;
}

/// Builds a registered model by name, applying scalar parameter overrides.
inline TransferModel make_model(const std::string& name,
                                const ModelOverrides& overrides = {}) {
  if (name == "additive_diffusion") return additive_diffusion(overrides);
  if (name == "rosenzweig_mcarthur_rde") return rosenzweig_mcarthur_rde(overrides);
  if (name == "rosenzweig_mcarthur_sde") return rosenzweig_mcarthur_sde(overrides);
  if (name == "fdgd2_two_minima") return fdgd2_two_minima(overrides);
  if (name == "fdgd3_himmelblau") return fdgd3_himmelblau(overrides);
  if (name == "ikeda") return ikeda(overrides);
  if (name == "lozi") return lozi(overrides);
  if (name == "ornstein_uhlenbeck_2d") return ornstein_uhlenbeck_2d(overrides);
  std::ostringstream os;
  os << "unknown model '" << name << "' (valid:";
  for (const auto& n : model_names()) os << ' ' << n;
  os << ")";
  throw Error(os.str());
}

/// Largest relative mismatch between the analytic gradient and central
/// finite differences with h = 1e-5*(1+|x_r|), over the given points.
inline double gradient_check(const ObjectiveFunction& f,
                             const std::vector<StateVec>& points) {
  double worst = 0.0;
  for (const StateVec& x : points) {
    const StateVec g = f.gradient(x);
    for (std::size_t r = 0; r < x.size(); ++r) {
      const double h = 1e-5 * (1.0 + std::abs(x[r]));
      StateVec xp = x;
      StateVec xm = x;
      xp[r] += h;
      xm[r] -= h;
      const double fd = (f.value(xp) - f.value(xm)) / (2.0 * h);
      const double scale = std::max({std::abs(g[r]), std::abs(fd), 1e-8});
      worst = std::max(worst, std::abs(g[r] - fd) / scale);
    }
  }
  return worst;
}

}  // namespace rie
