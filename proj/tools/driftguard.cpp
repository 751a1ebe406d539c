// Copyright 2026 The driftguard Authors
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

// driftguard: fit envelopes, run drift scenarios, compare filtered and bypassed runs.
//
// Exit codes: 0 success, 1 model/runtime failure, 2 usage or configuration error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "driftguard/config_io.hpp"
#include "driftguard/envelope_io.hpp"
#include "driftguard/errors.hpp"
#include "driftguard/phase_envelope.hpp"
#include "driftguard/simulator.hpp"
#include "driftguard/trace_io.hpp"

namespace fs = std::filesystem;
using namespace driftguard;

namespace
{

constexpr int kExitOk = 0;
constexpr int kExitModel = 1;
constexpr int kExitUsage = 2;

struct Manifest
{
  std::string params_path;
  std::string config_path;
  std::string envelope_path;
  std::string scenario;
  std::string out;
  double speed{7.0};
  bool bypass{false};
  bool no_timing{false};
  std::uint64_t seed{0};
};

fs::path output_dir(const Manifest & m)
{
  if (!m.out.empty()) {return m.out;}
  if (const char * env = std::getenv("DRIFTGUARD_OUT"); env && *env) {return env;}
  return "driftguard_out";
}

VehicleParams params_of(const Manifest & m)
{
  return m.params_path.empty() ? VehicleParams{} : load_params(m.params_path);
}

RunConfig config_of(const Manifest & m)
{
  RunConfig c = m.config_path.empty() ? RunConfig{} : load_config(m.config_path);
  if (m.no_timing) {c.filter.measure_time = false;}
  return c;
}

void write_file(const fs::path & path, const std::string & text)
{
  if (path.has_parent_path()) {fs::create_directories(path.parent_path());}
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) {throw Error("cannot write '" + path.string() + "'");}
}

template<class Fn>
void write_stream(const fs::path & path, Fn fn)
{
  if (path.has_parent_path()) {fs::create_directories(path.parent_path());}
  std::ofstream out(path, std::ios::binary);
  fn(out);
  if (!out) {throw Error("cannot write '" + path.string() + "'");}
}

/// Ellipse from --envelope, or fitted on the spot when no artifact is given.
EllipseBarrier ellipse_of(const Manifest & m, const VehicleParams & p, const RunConfig & c)
{
  if (!m.envelope_path.empty()) {
    return c.apply_gains(load_envelope(m.envelope_path, p).ellipse);
  }
  return c.apply_gains(fit_mprel(m.speed, p, c.envelope).ellipse);
}

int cmd_fit_envelope(const Manifest & m)
{
  const VehicleParams p = params_of(m);
  const RunConfig c = config_of(m);
  Envelope env = fit_mprel(m.speed, p, c.envelope);
  env.ellipse = c.apply_gains(env.ellipse);
  const fs::path artifact = m.out.empty() ? output_dir(m) / "envelope.json" : fs::path(m.out);
  write_file(artifact, envelope_to_json(env, p));
  fs::path dataset = artifact;
  dataset.replace_extension();
  dataset += "_dataset.csv";
  write_stream(dataset, [&](std::ostream & o) {write_envelope_dataset(o, env);});
  // Round-trip through the loader so a bad artifact never leaves this command silently.
  load_envelope(artifact.string(), p);
  const EllipseBarrier & e = env.ellipse;
  std::cout << "envelope: a=" << format_number(e.a) << " b=" << format_number(e.b) <<
    " c=" << format_number(e.c) << " d=" << format_number(e.d) << " area=" <<
    format_number(e.area()) << "\n" << "wrote " << artifact.string() << " and " <<
    dataset.string() << "\n";
  return kExitOk;
}

TraceRecord run_one(
  const Manifest & m, const VehicleParams & p, const RunConfig & c, const EllipseBarrier & e,
  bool bypass)
{
  EquilibriumOptions eo;
  eo.seed = m.seed;
  Scenario sc = make_scenario(m.scenario, p, m.speed, c.duration, eo);
  sc.filter_on = !bypass;
  SimConfig sim = c.sim();
  TraceRecord rec = run_scenario(sc, e, p, sim);
  if (m.scenario == "transition") {
    rec.sustained_ccw = sustained_counterclockwise(rec, sc.duration, sim.sustain_window);
  }
  return rec;
}

void write_run(
  const fs::path & dir, const std::string & stem, const TraceRecord & rec, const VehicleParams & p,
  const RunConfig & c)
{
  write_stream(dir / (stem + "_trace.csv"), [&](std::ostream & o) {write_trace_csv(o, rec);});
  write_file(dir / (stem + "_metrics.json"), metrics_json(rec, p, c.h_tol).dump(1) + "\n");
  write_stream(dir / (stem + "_phase.csv"), [&](std::ostream & o) {write_phase_dataset(o, rec, p);});
}

std::string stem_of(const std::string & scenario, bool bypass)
{
  return bypass ? scenario + "_bypass" : scenario;
}

void summarize(const TraceRecord & rec, const RunConfig & c)
{
  std::cout << rec.scenario << (rec.bypass ? " [bypass]" : " [filter]") << ": min_h=" <<
    format_number(rec.metrics.min_h) << " spin_out=" << (rec.spin_out ? "true" : "false") <<
    " active_ticks=" << rec.metrics.active_ticks << "\n";
  if (!rec.initial_condition_warning.empty()) {
    std::cerr << "warning: " << rec.initial_condition_warning << "\n";
  }
  if (!rec.bypass && rec.metrics.min_h < -c.h_tol) {
    std::cerr << "warning: barrier dropped below -h_tol (" << format_number(-c.h_tol) << ")\n";
  }
}

int fail_if_truncated(const TraceRecord & rec)
{
  if (rec.truncated) {
    std::cerr << "error: " << rec.scenario << " stopped on a model failure: " << rec.fault << "\n";
    return kExitModel;
  }
  return kExitOk;
}

int cmd_run(const Manifest & m)
{
  const VehicleParams p = params_of(m);
  const RunConfig c = config_of(m);
  require_scenario_name(m.scenario);
  const EllipseBarrier e = ellipse_of(m, p, c);
  const TraceRecord rec = run_one(m, p, c, e, m.bypass || c.filter.bypass);
  const fs::path dir = output_dir(m);
  write_run(dir, stem_of(m.scenario, rec.bypass), rec, p, c);
  summarize(rec, c);
  return fail_if_truncated(rec);
}

int cmd_compare(const Manifest & m)
{
  const VehicleParams p = params_of(m);
  RunConfig c = config_of(m);
  c.filter.bypass = false;
  require_scenario_name(m.scenario);
  const EllipseBarrier e = ellipse_of(m, p, c);
  const TraceRecord filtered = run_one(m, p, c, e, false);
  const TraceRecord bypassed = run_one(m, p, c, e, true);
  const fs::path dir = output_dir(m);
  write_run(dir, stem_of(m.scenario, false), filtered, p, c);
  write_run(dir, stem_of(m.scenario, true), bypassed, p, c);
  write_stream(dir / (m.scenario + "_compare.csv"), [&](std::ostream & o) {
      write_compare_dataset(o, filtered, bypassed, p);
    });
  nlohmann::ordered_json report;
  report["schema"] = kMetricsSchema;
  report["scenario"] = m.scenario;
  report["filtered"] = metrics_json(filtered, p, c.h_tol);
  report["bypassed"] = metrics_json(bypassed, p, c.h_tol);
  report["filter_safe"] = filtered.metrics.min_h >= -c.h_tol && !filtered.spin_out;
  report["bypass_spin_out"] = bypassed.spin_out;
  write_file(dir / (m.scenario + "_compare.json"), report.dump(1) + "\n");
  summarize(filtered, c);
  summarize(bypassed, c);
  const int f = fail_if_truncated(filtered);
  return f != kExitOk ? f : fail_if_truncated(bypassed);
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"driftguard: drift safety filter toolkit"};
  app.require_subcommand(1);
  Manifest m;

  auto common = [&](CLI::App * sub, bool scenario) {
      sub->add_option("--params", m.params_path, "vehicle parameter file (name = value)")
      ->check(CLI::ExistingFile);
      sub->add_option("--config", m.config_path, "run configuration file (name = value)")
      ->check(CLI::ExistingFile);
      sub->add_option("--speed", m.speed, "design speed, m/s")->capture_default_str();
      sub->add_option("--out", m.out, "output path (file for fit-envelope, directory otherwise)");
      sub->add_flag("--no-timing", m.no_timing, "record zero solve times for byte-stable outputs");
      if (scenario) {
        sub->add_option("--envelope", m.envelope_path, "envelope artifact (fitted if omitted)")
        ->check(CLI::ExistingFile);
        sub->add_option("--scenario", m.scenario, "initiation | equilibrium | transition")
        ->required();
        sub->add_option("--seed", m.seed, "seed for equilibrium Newton restarts");
      }
    };

  CLI::App * fit = app.add_subcommand("fit-envelope", "trace the recoverable region and fit the safe ellipse");
  common(fit, false);
  CLI::App * run = app.add_subcommand("run", "run one scenario");
  common(run, true);
  run->add_flag("--bypass", m.bypass, "apply the driver's inputs unfiltered");
  CLI::App * cmp = app.add_subcommand("compare", "run a scenario filtered and bypassed");
  common(cmp, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (!(m.speed > 0.0)) {
      throw ConfigError("--speed must be > 0");
    }
    if (*fit) {return cmd_fit_envelope(m);}
    if (*run) {return cmd_run(m);}
    return cmd_compare(m);
  } catch (const ConfigError & e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitModel;
  }
}
