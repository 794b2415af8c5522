#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <string>

#include "error.hpp"

namespace moe {

enum class ActivationKind { Linear, Sigmoid, Relu, Custom };

/// Scalar link function g with derivatives up to order 3.
///
/// Relu uses the pointwise convention g'(0) = 0 and g'' = g''' = 0; the
/// distributional part of g'' is accounted for analytically where it matters
/// (see cqt.hpp).
class Activation {
 public:
  using Fn = std::function<double(double)>;

  Activation() = default;

  static Activation linear() { return Activation(ActivationKind::Linear, "linear"); }
  static Activation sigmoid() { return Activation(ActivationKind::Sigmoid, "sigmoid"); }
  static Activation relu() { return Activation(ActivationKind::Relu, "relu"); }

  /// User-supplied g, g', g'', g'''.
  static Activation custom(std::string name, std::array<Fn, 4> derivatives) {
    for (const auto& f : derivatives)
      if (!f) throw ConfigError("custom activation '" + name + "' needs g, g', g'', g'''");
    Activation a(ActivationKind::Custom, std::move(name));
    a.custom_ = std::make_shared<const std::array<Fn, 4>>(std::move(derivatives));
    return a;
  }

  static Activation from_name(const std::string& name) {
    if (name == "linear") return linear();
    if (name == "sigmoid") return sigmoid();
    if (name == "relu") return relu();
    throw ConfigError("unknown activation '" + name + "' (expected linear, sigmoid or relu)");
  }

  ActivationKind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }

  double operator()(double t) const { return eval(0, t); }

  double eval(int order, double t) const {
    if (order < 0 || order > 3) throw ConfigError("activation derivative order must be in 0..3");
    switch (kind_) {
      case ActivationKind::Linear:
        return order == 0 ? t : (order == 1 ? 1.0 : 0.0);
      case ActivationKind::Relu:
        if (order == 0) return t > 0 ? t : 0.0;
        if (order == 1) return t > 0 ? 1.0 : 0.0;
        return 0.0;
      case ActivationKind::Sigmoid: {
        const double s = logistic(t);
        const double s1 = s * (1.0 - s);
        switch (order) {
          case 0: return s;
          case 1: return s1;
          case 2: return s1 * (1.0 - 2.0 * s);
          default: return s1 * (1.0 - 6.0 * s + 6.0 * s * s);
        }
      }
      case ActivationKind::Custom:
        return (*custom_)[static_cast<std::size_t>(order)](t);
    }
    return 0.0;
  }

  static double logistic(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
  }

 private:
  Activation(ActivationKind kind, std::string name) : kind_(kind), name_(std::move(name)) {}

  ActivationKind kind_ = ActivationKind::Linear;
  std::string name_ = "linear";
  std::shared_ptr<const std::array<Fn, 4>> custom_;
};

inline double activation_eval(const Activation& act, int order, double t) { return act.eval(order, t); }

}  // namespace moe
