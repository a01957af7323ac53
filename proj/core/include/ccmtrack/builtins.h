#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ccmtrack/controller.h"
#include "ccmtrack/model.h"

namespace ccmtrack {

/// Initial conditions and integration settings of a worked scenario.
struct Scenario {
  Vector x0;
  Vector z0;
  double ell{0.0};
  double horizon{0.0};
  double h{1e-3};
  /// Controller kind name understood by the simulator.
  std::string controller;
};

struct Builtin {
  SystemModel system;
  /// Named metrics; "primal" is always present.
  std::map<std::string, MetricField> metrics;
  ReferenceSpec reference;
  /// Gain used by the worked scenario.
  GainField gain;
  /// Parameters that reproduce `gain` through SynthesizeGain.
  DampingParams damping;
  Scenario scenario;

  const MetricField& metric(const std::string& key = "primal") const;
};

/// "numex": planar example with B = (0, 1).
/// "microactuator": electrostatic microactuator at m=1, k=1, b=2, R=1, A=3,
/// eps=1/2.
Builtin MakeBuiltin(std::string_view name);
std::vector<std::string> BuiltinNames();

}  // namespace ccmtrack
