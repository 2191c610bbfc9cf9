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

// powersat <scenario> [--config path] [--out dir] [--mode m] [--parallel] [--seed n]
// powersat verify <scenario|all> [same flags]

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "powersat/scenarios.hpp"

namespace {

namespace sc = powersat::scenarios;

struct Options {
  std::string config;
  std::string out;
  sc::Flags flags;
};

void add_common(CLI::App* app, Options& o) {
  app->add_option("--config", o.config, "JSON configuration file (defaults when omitted)")
      ->check(CLI::ExistingFile);
  app->add_option("--out", o.out, "output directory (default: $POWERSAT_OUT or ./out)");
  app->add_option("--mode", o.flags.mode, "scenario mode, e.g. single|receding, all|steps|chirp");
  app->add_flag("--parallel", o.flags.parallel, "run independent sweep points on threads");
  app->add_option("--seed", o.flags.seed, "seed for randomized checks")->default_val(1);
}

std::string out_dir(const Options& o) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("POWERSAT_OUT"); env && *env) return env;
  return "out";
}

void print(const sc::Report& r) {
  for (const auto& c : r.checks) {
    std::printf("%s %-12s %-48s value=%.6g limit=%.6g%s%s\n", c.pass ? "PASS" : "FAIL",
                r.scenario.c_str(), c.name.c_str(), c.value, c.limit,
                c.note.empty() ? "" : "  ", c.note.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Power-limited actuator analysis and control experiments"};
  app.require_subcommand(1);
  app.footer("Scenarios: descfun, bandwidth, pbc-2link, mpc-fin, clfqp-2link, servo-1dof");

  Options opts;
  std::string chosen;
  for (const auto& name : sc::names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " scenario");
    add_common(sub, opts);
    sub->callback([&chosen, name] { chosen = name; });
  }
  std::string target;
  CLI::App* ver = app.add_subcommand("verify", "run acceptance checks for a scenario (or all)");
  ver->add_option("scenario", target, "scenario name or 'all'")->required();
  add_common(ver, opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (ver->parsed()) {
      std::vector<std::string> list;
      if (target == "all") {
        list = sc::names();
      } else if (sc::is_scenario(target)) {
        list = {target};
      } else {
        std::cerr << "unknown scenario: " << target << '\n';
        return 2;
      }
      if (list.size() > 1 && !opts.config.empty()) {
        std::cerr << "--config applies to a single scenario\n";
        return 2;
      }
      const auto cfg = sc::load_config(opts.config);
      bool ok = true;
      for (const auto& name : list) {
        const sc::Report r = sc::verify(name, cfg, out_dir(opts), opts.flags);
        print(r);
        ok = ok && r.all_ok();
      }
      return ok ? 0 : 1;
    }
    const auto cfg = sc::load_config(opts.config);
    const sc::Report r = sc::run(chosen, cfg, out_dir(opts), opts.flags);
    print(r);
    return r.invariants_ok() ? 0 : 1;
  } catch (const sc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
