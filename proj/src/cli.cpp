#include "ordrd/cli.hpp"

#include <CLI11.hpp>
#include <cstdint>

#include "ordrd/pipeline.hpp"

namespace ordrd {

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ordinal-threshold treatment-effect pipeline"};
  app.require_subcommand(1);

  std::string manifest;
  std::string control;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  bool strict = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--manifest", manifest, "manifest file")->required();
    cmd->add_option("--out", out_dir, "output directory override");
    cmd->add_option("--seed", seed, "seed override");
    cmd->add_option("--workers", workers, "parallel worker cap");
    cmd->add_flag("--strict", strict, "treat any malformed data row as an error");
  };

  CLI::App* validate = app.add_subcommand("validate", "load data, apply exclusions, summarize");
  add_common(validate);
  CLI::App* run = app.add_subcommand("run", "fit, balance search, estimate, diagnostics");
  add_common(run);
  CLI::App* falsify = app.add_subcommand("falsify", "identical pipeline on negative-control data");
  add_common(falsify);
  falsify->add_option("--control", control, "negative-control data file")->required();
  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo study or bootstrap");
  add_common(simulate);

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error\tmanifest\t" << e.what() << "\n";
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  RunOptions options;
  if (sub->count("--out") != 0) options.out_dir = out_dir;
  if (sub->count("--seed") != 0) options.seed = seed;
  if (sub->count("--workers") != 0) options.workers = workers;
  if (sub->count("--strict") != 0) options.strict = true;

  if (sub == validate) return cmd_validate(manifest, options, out);
  if (sub == run) return cmd_run(manifest, options, out);
  if (sub == falsify) return cmd_falsify(manifest, control, options, out);
  return cmd_simulate(manifest, options, out);
}

}  // namespace ordrd
