#pragma once

// JSON scenario files: parsing into validated library objects and the normalized echo
// printed by `validate`. Unknown keys are rejected.

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>

#include "thermo_mdp/info_mdp.hpp"
#include "thermo_mdp/kl_control.hpp"
#include "thermo_mdp/trajectory_thermo.hpp"

namespace thermo_mdp {

inline constexpr const char* kSchemaVersion = "1";

struct MdpBlock {
  FiniteMdp mdp;
  VectorXd initial;  ///< law of s_1, uniform when omitted
};

struct ThermoBlock {
  MarkovChain chain;
  std::optional<EnergyModel> energy;
  BackwardMode mode = BackwardMode::reversal;
};

struct CoupledBlock {
  CoupledSystem system;
  std::optional<CoupledEnergyModel> energy;
  BackwardMode mode = BackwardMode::reversal;
};

struct InfoBlock {
  PolicySet policies;
  bool all_deterministic = false;
  std::optional<VectorXd> state_initial;  ///< defaults to the mdp block's initial law
  double beta = 1.0;
  InfoSolveOptions solve;
  double beta_lo = 1.0;  ///< calibration bracket
  double beta_hi = 1e6;
};

struct Scenario {
  std::string schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  std::size_t max_paths = kDefaultMaxPaths;
  std::optional<MdpBlock> mdp;
  std::optional<PassiveDynamics> passive;
  std::optional<ThermoBlock> thermo;
  std::optional<CoupledBlock> coupled;
  std::optional<InfoBlock> info;
  std::optional<ParametricBelief> parametric;
};

/// Throws Error(InvalidScenario) on schema problems and the library's own codes on
/// contract violations inside a block.
Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::string& path);

/// The scenario after validation: rewards negated, rows renormalized, defaults filled in.
nlohmann::json normalized_json(const Scenario& s);

/// JSON number, or the strings "inf", "-inf", "nan" for non-finite values.
nlohmann::json number(double x);
nlohmann::json to_json(const VectorXd& v);
nlohmann::json to_json(const MatrixXd& m);

}  // namespace thermo_mdp
