#pragma once

// Multiplicative perturbations of the environment physics. A spec scales the
// pendulum's mass/length, or mixes a uniform kernel into the chainworld
// transition matrix; the identity spec leaves the target environment intact.

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cosbo::envs {

struct DynamicsSpec {
  double mass_scale = 1.0;
  double length_scale = 1.0;
  double kernel_mix = 0.0;  // tabular only; weight of the uniform kernel

  void validate() const {
    if (!(mass_scale > 0.0))
      throw std::invalid_argument("DynamicsSpec: mass_scale must be > 0");
    if (!(length_scale > 0.0))
      throw std::invalid_argument("DynamicsSpec: length_scale must be > 0");
    if (!(kernel_mix >= 0.0 && kernel_mix <= 1.0))
      throw std::invalid_argument("DynamicsSpec: kernel_mix must be in [0,1]");
  }

  bool is_identity() const {
    return mass_scale == 1.0 && length_scale == 1.0 && kernel_mix == 0.0;
  }
};

inline DynamicsSpec identity_spec() { return DynamicsSpec{}; }

// The twelve named perturbations, one physical parameter changed per preset.
inline DynamicsSpec preset(std::string_view name) {
  DynamicsSpec s;
  if (name == "light") s.mass_scale = 0.5;
  else if (name == "heavy") s.mass_scale = 1.5;
  else if (name == "short") s.length_scale = 0.5;
  else if (name == "long") s.length_scale = 1.5;
  else if (name == "very_light") s.mass_scale = 0.3;
  else if (name == "very_heavy") s.mass_scale = 2.0;
  else if (name == "very_short") s.length_scale = 0.3;
  else if (name == "very_long") s.length_scale = 2.0;
  else if (name == "extreme_light") s.mass_scale = 0.1;
  else if (name == "extreme_heavy") s.mass_scale = 3.0;
  else if (name == "extreme_short") s.length_scale = 0.1;
  else if (name == "extreme_long") s.length_scale = 3.0;
  else throw std::invalid_argument("unknown dynamics preset: " + std::string(name));
  return s;
}

enum class Tier { medium, very, extreme };

inline const char* tier_name(Tier t) {
  switch (t) {
    case Tier::medium: return "medium";
    case Tier::very: return "very";
    case Tier::extreme: return "extreme";
  }
  return "?";
}

inline Tier tier_from_name(std::string_view name) {
  if (name == "medium") return Tier::medium;
  if (name == "very") return Tier::very;
  if (name == "extreme") return Tier::extreme;
  throw std::invalid_argument("unknown tier: " + std::string(name));
}

// The four preset names belonging to a tier, in a fixed order.
inline std::array<std::string, 4> tier_presets(Tier t) {
  switch (t) {
    case Tier::medium: return {"light", "heavy", "short", "long"};
    case Tier::very: return {"very_light", "very_heavy", "very_short", "very_long"};
    case Tier::extreme:
      return {"extreme_light", "extreme_heavy", "extreme_short", "extreme_long"};
  }
  throw std::logic_error("bad tier");
}

}  // namespace cosbo::envs
