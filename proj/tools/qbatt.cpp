// Command-line front end: dynamics runs, maxima extraction, parameter
// sweeps, scaling fits, noise ensembles, closed-form references, and the
// built-in validation suite.

#include <CLI11.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "qbatt/cli.hpp"
#include "qbatt/version.hpp"

namespace {

void add_common(CLI::App* sub, qbatt::cli::Command& cmd, bool config_required) {
  auto* copt = sub->add_option("--config", cmd.config_path, "configuration file (key = value)");
  if (config_required) copt->required();
  sub->add_option("--out", cmd.out_dir, "output directory")->capture_default_str();
  sub->add_option("--set", [&cmd](const std::vector<std::string>& vals) {
        for (const std::string& kv : vals) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) return false;
          cmd.overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        }
        return true;
      },
      "override a config key (KEY=VALUE, repeatable)");
  sub->add_option("--engine",
                  [&cmd](const std::vector<std::string>& vals) {
                    const std::string& v = vals.back();
                    if (v == "collective")
                      cmd.engine = qbatt::cli::EngineChoice::collective;
                    else if (v == "full")
                      cmd.engine = qbatt::cli::EngineChoice::full;
                    else if (v == "auto")
                      cmd.engine = qbatt::cli::EngineChoice::auto_select;
                    else
                      return false;
                    return true;
                  },
                  "engine: collective | full | auto");
  sub->add_option("--jobs", cmd.jobs, "worker threads for sweeps/ensembles")
      ->capture_default_str();
  sub->add_option("--seed",
                  [&cmd](const std::vector<std::string>& vals) {
                    cmd.seed = std::stoull(vals.back());
                    return true;
                  },
                  "override the seed");
  sub->add_option("--t-max",
                  [&cmd](const std::vector<std::string>& vals) {
                    cmd.t_max = std::stod(vals.back());
                    return true;
                  },
                  "override t_max");
  sub->add_option("--n-samples",
                  [&cmd](const std::vector<std::string>& vals) {
                    cmd.n_samples = std::stoll(vals.back());
                    return true;
                  },
                  "override n_samples");
}

void add_axis(CLI::App* sub, qbatt::cli::Command& cmd) {
  sub->add_option("--axis", cmd.axis, "charger_size | total_size | jc_dv_grid")
      ->capture_default_str();
  sub->add_option("--points", cmd.points, "sweep points (sizes)")->delimiter(',');
  sub->add_option("--jc", cmd.jc_values, "J_C values for jc_dv_grid")->delimiter(',');
  sub->add_option("--dv", cmd.dv_values, "dV values for jc_dv_grid")->delimiter(',');
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("qbatt ") + qbatt::version_string +
               " - qubit battery-charger dynamics toolkit"};
  app.require_subcommand(1);

  qbatt::cli::Command cmd;

  auto* dynamics = app.add_subcommand("dynamics", "time series of one run");
  add_common(dynamics, cmd, true);
  dynamics->callback([&] { cmd.verb = qbatt::cli::Verb::dynamics; });

  auto* maxima = app.add_subcommand("maxima", "refined E/P maxima of one run");
  add_common(maxima, cmd, true);
  maxima->callback([&] { cmd.verb = qbatt::cli::Verb::maxima; });

  auto* sweep = app.add_subcommand("sweep", "maxima table over a parameter axis");
  add_common(sweep, cmd, true);
  add_axis(sweep, cmd);
  sweep->callback([&] { cmd.verb = qbatt::cli::Verb::sweep; });

  auto* scaling = app.add_subcommand("scaling", "sweep plus log-log exponent fits");
  add_common(scaling, cmd, true);
  add_axis(scaling, cmd);
  scaling->callback([&] { cmd.verb = qbatt::cli::Verb::scaling; });

  auto* noise = app.add_subcommand("noise", "seeded coupling-noise ensembles");
  add_common(noise, cmd, true);
  noise->add_option("--points", cmd.points, "sizes N_B = N_C")->delimiter(',');
  noise->add_option("--delta-j", cmd.delta_j_values, "noise amplitudes")->delimiter(',');
  noise->callback([&] { cmd.verb = qbatt::cli::Verb::noise; });

  auto* parallel = app.add_subcommand("parallel", "independent-pairs closed form");
  add_common(parallel, cmd, true);
  parallel->callback([&] { cmd.verb = qbatt::cli::Verb::parallel; });

  auto* hp = app.add_subcommand("hp", "low-excitation closed form");
  add_common(hp, cmd, true);
  hp->callback([&] { cmd.verb = qbatt::cli::Verb::hp; });

  auto* validate = app.add_subcommand("validate", "built-in oracle suite");
  add_common(validate, cmd, false);
  validate->callback([&] { cmd.verb = qbatt::cli::Verb::validate; });

  CLI11_PARSE(app, argc, argv);
  return qbatt::cli::run(cmd);
}
