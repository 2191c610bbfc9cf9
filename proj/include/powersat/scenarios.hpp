// Copyright 2026 The powersat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef POWERSAT_SCENARIOS_HPP_
#define POWERSAT_SCENARIOS_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace powersat::scenarios {

// Thrown for unreadable or malformed configuration files. what() carries the
// path and, for syntax errors, line:column.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string mode;  // empty: scenario default
  bool parallel = false;
  std::uint64_t seed = 1;
};

enum class CheckKind {
  Invariant,   // a violation makes `run` exit nonzero
  Acceptance,  // reported by `verify`
};

struct Check {
  std::string name;
  CheckKind kind = CheckKind::Acceptance;
  int criterion = 0;  // 0 when not tied to a numbered criterion
  bool pass = false;
  double value = 0.0;
  double limit = 0.0;
  std::string note;
};

struct Report {
  std::string scenario;
  std::string mode;
  std::vector<Check> checks;
  nlohmann::json measured = nlohmann::json::object();

  bool invariants_ok() const;
  bool all_ok() const;
  // Checks for one criterion; true when at least one exists and all pass.
  bool criterion_ok(int c) const;
  nlohmann::json to_json() const;
};

const std::vector<std::string>& names();
bool is_scenario(const std::string& name);

// Parses a JSON file. A missing or empty path yields an empty object.
nlohmann::json load_config(const std::string& path);

// Runs one scenario, writing its data files and <name>_report.json into
// out_dir (created if needed). Invalid configuration values throw
// std::invalid_argument.
Report run(const std::string& name, const nlohmann::json& config,
           const std::filesystem::path& out_dir, const Flags& flags = {});

// Like run, but a configuration that fails validation comes back as a report
// with a failed "config" check instead of an exception. Writes
// <name>_verify.json.
Report verify(const std::string& name, const nlohmann::json& config,
              const std::filesystem::path& out_dir, const Flags& flags = {});

// Tolerances of the numbered acceptance criteria.
namespace tol {
inline constexpr double kPowerSlack = 1e-6;
inline constexpr double kDfOracle = 1e-6;
inline constexpr int kDfOracleSamples = 200;
inline constexpr int kDfQuadraturePoints = 10000;
inline constexpr double kRatioFloor = 1e-9;
inline constexpr double kRatioTopLo = 0.98, kRatioTopHi = 1.02;
inline constexpr double kRatioLowLo = 1.7, kRatioLowHi = 2.3;
inline constexpr int kKinksPerCurve = 2;
inline constexpr double kLyapunovStep = 1e-6;
inline constexpr double kFinalNorm = 1e-2;
inline constexpr double kRolloutRel = 1e-8;
inline constexpr double kPowerForm = 1e-9;
inline constexpr double kCostOrder = 1e-6;
inline constexpr double kC1PowerFrac = 0.99;
inline constexpr double kC1PowerBy = 0.05;
inline constexpr double kC3PowerFrac = 0.6;
inline constexpr double kLyapunovEq = 1e-9;
inline constexpr double kKkt = 1e-7;
inline constexpr double kQpPower = 1e-7;
inline constexpr double kDecayBand = 0.05;
inline constexpr double kServoPower = 1e-6;
inline constexpr double kServoFrfAbove = 10.0;  // Hz
}  // namespace tol

}  // namespace powersat::scenarios

#endif  // POWERSAT_SCENARIOS_HPP_
