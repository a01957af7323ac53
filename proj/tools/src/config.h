#pragma once

#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "ccmtrack/builtins.h"
#include "ccmtrack/certificates.h"
#include "ccmtrack/controller.h"
#include "ccmtrack/model.h"
#include "ccmtrack/sim.h"

namespace ccmtrack::cli {

/// Invalid or inconsistent configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CertificateSettings {
  int grid = 21;
  double tol = 1e-8;
  int threads = 0;
  std::vector<std::string> checks{"c1", "killing", "dual-w", "robust"};
  double robust_lambda = 0.1;
  /// Unset: bisect for the smallest passing gamma0.
  std::optional<double> robust_gamma0;
  RobustLambdaForm robust_form = RobustLambdaForm::kIdentity;
};

struct SimulationSettings {
  RunConfig run;
  /// err(T) below this counts as converged.
  double threshold = 1e-2;
  /// Window for the decay-rate fit; defaults to [T/4, 3T/4].
  std::optional<std::pair<double, double>> decay_window;
};

struct SweepSettings {
  bool enabled = false;
  SweepOptions options;
};

enum class GainSource { kNone, kBuiltin, kExpression, kSynthesized };

struct Config {
  std::string origin;
  boost::property_tree::ptree tree;
  std::optional<std::string> builtin;
  std::optional<SystemModel> system;
  std::optional<MetricField> metric;
  std::string metric_label;
  std::optional<ReferenceSpec> reference;
  GainSource gain_source = GainSource::kNone;
  std::optional<GainField> gain;
  DampingParams damping;
  CertificateSettings certificate;
  SimulationSettings simulation;
  SweepSettings sweep;

  const SystemModel& RequireSystem() const;
  const MetricField& RequireMetric() const;
  const ReferenceSpec& RequireReference() const;
  const GainField& RequireGain() const;
};

/// Reads an INI-style file with sections [system], [metric], [reference],
/// [gain], [simulation], [certificate], [sweep] and the informational
/// [synthesis]. Unknown sections and keys are rejected.
Config LoadConfig(const std::string& path);
Config ParseConfig(std::istream& in, const std::string& origin);

/// "1, 2.5, -3" (optionally bracketed) to a vector.
Vector ParseVector(std::string_view text, std::string_view what);
double ParseNumber(std::string_view text, std::string_view what);
std::string FormatNumber(double value);
std::string FormatVector(const Vector& v);

/// Primal view of the configured metric (constant dual metrics are inverted).
MetricField PrimalMetric(const MetricField& metric);
/// Dual view of the configured metric (constant primal metrics are inverted).
MetricField DualMetric(const MetricField& metric);

}  // namespace ccmtrack::cli
