#pragma once

#include "mechid/types.hpp"

#include <memory>
#include <string>
#include <vector>

namespace mechid {

/// Smooth strictly increasing scalar map with a closed-form inverse.
struct MonotoneMap {
  enum class Kind { identity, sinh, tanh, exp, cubic };

  Kind kind = Kind::identity;
  /// Coefficient c of y + c y^3 for the cubic kind; unused otherwise.
  double coefficient = 0.0;

  static MonotoneMap parse(const std::string& name);
  std::string name() const;

  double apply(double y) const;
  /// Throws OffManifoldError outside the range of apply().
  double inverse(double x) const;
  double derivative(double y) const;
};

/// Bijection from the latent space onto its image in observation space.
/// Variants: linear x = G z; structured x_i = phi_i((G z)_i); and a
/// reparametrized decoder base o a^{-1}, whose encoder is a o base^{-1}.
class Decoder {
 public:
  static Decoder linear(Matrix G);
  static Decoder structured(Matrix G, std::vector<MonotoneMap> maps);
  static Decoder reparametrized(const Decoder& base, Bijection a);

  int latent_dim() const;
  int obs_dim() const;

  Vector decode(const Vector& z) const;
  /// Left inverse on the image of decode(); off-image inputs throw
  /// OffManifoldError.
  Vector encode(const Vector& x) const;

  bool is_linear() const;
  /// G for linear and structured variants. Throws for reparametrized.
  const Matrix& linear_part() const;
  std::string describe() const;

  /// Relative residual accepted when projecting onto the column space of G.
  static constexpr double kManifoldTolerance = 1e-8;

 private:
  struct Impl;
  explicit Decoder(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

}  // namespace mechid
