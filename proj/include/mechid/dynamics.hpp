#pragma once

#include "mechid/decoder.hpp"
#include "mechid/noise.hpp"
#include "mechid/rng.hpp"
#include "mechid/types.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace mechid {

/// Any evaluable latent transition.
struct GeneralMechanism {
  std::function<Vector(const Vector&)> map;
  std::string label;
  int d = 0;

  Vector apply(const Vector& z) const;
};

/// m(z) = M z + b with M invertible.
struct AffineMechanism {
  Matrix M;
  Vector b;
  std::string label;

  AffineMechanism() = default;
  AffineMechanism(Matrix transition, Vector offset, std::string name = {});

  int dim() const { return static_cast<int>(M.rows()); }
  Vector apply(const Vector& z) const;
  GeneralMechanism as_general() const;

  static AffineMechanism identity(int d, std::string name = "identity");
  /// Default relative rank tolerance for the invertibility check.
  static constexpr double kRankTolerance = 1e-9;
};

using Mechanism = std::variant<AffineMechanism, GeneralMechanism>;

int mechanism_dim(const Mechanism& m);
const std::string& mechanism_label(const Mechanism& m);

Vector apply_mechanism(const AffineMechanism& m, const Vector& z);
Vector apply_mechanism(const GeneralMechanism& m, const Vector& z);
Vector apply_mechanism(const Mechanism& m, const Vector& z);

/// z_{t+1} = kernel(z_t, u_t) with u_t uniform on (0, 1)^d.
struct StochasticMechanism {
  std::function<Vector(const Vector&, const Vector&)> kernel;
  std::string label;
  int d = 0;

  Vector apply(const Vector& z, const Vector& u) const;
};

/// z -> z + F^{-1}(u) componentwise.
StochasticMechanism additive_noise_mechanism(const NoiseSpec& noise, std::string label = "additive");
/// z -> M z + b + F^{-1}(u) componentwise.
StochasticMechanism affine_noise_mechanism(const AffineMechanism& m, const NoiseSpec& noise);
/// Draws u in (0, 1)^d from the stream.
Vector uniform_vector(CounterRng& rng, int d);

struct Trajectory {
  std::vector<Vector> latents;
  std::vector<Vector> observations;
  /// T - 1 labels; entry t names the mechanism taking z_t to z_{t+1}.
  std::vector<std::string> mechanism_labels;
  std::optional<std::uint64_t> seed;

  std::size_t length() const { return latents.size(); }
};

/// States whose norm exceeds this abort simulation.
inline constexpr double kDivergenceNorm = 1e12;

Trajectory simulate_deterministic(const Decoder& decoder, std::span<const Mechanism> schedule,
                                  const Vector& z1, int T);

using LatentSampler = std::function<Vector(CounterRng&)>;

/// Uniform initial state on [lo, hi]^d.
LatentSampler box_sampler(int d, double lo = -1.0, double hi = 1.0);

/// The initial state uses stream 0 of the seed; step t uses stream t + 1.
Trajectory simulate_stochastic(const Decoder& decoder, std::span<const StochasticMechanism> schedule,
                               const LatentSampler& z1_sampler, int T, std::uint64_t seed);

/// CSV with header t,z_1..z_d,x_1..x_n,mech; the last row has an empty mech.
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);
Trajectory read_trajectory_csv(std::istream& in);

}  // namespace mechid
