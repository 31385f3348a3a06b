// Command-line front end: one subcommand per pipeline stage plus `run`.
//
// Settings come from defaults, then --config FILE (key = value lines), then
// --set key=value and the per-key flags, in that order.

#include "gessa/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

namespace {

struct Overrides {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;
};

void add_config_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config_file, "key = value configuration file");
  cmd->add_option("--set", o.sets, "override as key=value (repeatable)");
  for (const auto& key : gessa::PipelineConfig::keys())
    cmd->add_option("--" + key, o.flags[key], "config key '" + key + "'");
}

gessa::PipelineConfig resolve(const Overrides& o) {
  gessa::PipelineConfig config;
  if (!o.config_file.empty()) gessa::apply_config_file(config, o.config_file);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw gessa::ConfigError("--set expects key=value, got '" + s + "'");
    config.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [key, value] : o.flags)
    if (!value.empty()) config.set(key, value);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense surface correspondence, shape traits and twin heritability maps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gessa::version());

  const std::vector<std::pair<std::string, std::string>> commands{
      {"align", "rigidly align input meshes to a reference with ICP"},
      {"sample", "place corresponding landmarks on the aligned meshes"},
      {"curvature", "curvature indices at every landmark"},
      {"traits", "residualize traits, sparse PCA and distance traits"},
      {"herit", "ACE/AE/E fits and heritability maps"},
      {"map", "average shape and annotated PLY maps"},
      {"validate", "ground-truth landmark distance report"},
      {"run", "align, sample, curvature, traits and herit in sequence"},
  };
  std::map<std::string, Overrides> overrides;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    subs[name] = app.add_subcommand(name, help);
    add_config_options(subs[name], overrides[name]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  std::string chosen;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) chosen = name;

  try {
    gessa::Pipeline pipeline(resolve(overrides[chosen]));
    if (chosen == "align") pipeline.align();
    else if (chosen == "sample") pipeline.sample();
    else if (chosen == "curvature") pipeline.curvature();
    else if (chosen == "traits") pipeline.traits();
    else if (chosen == "herit") pipeline.heritability();
    else if (chosen == "map") pipeline.map();
    else if (chosen == "validate") pipeline.validate();
    else pipeline.run();
    for (const auto& s : pipeline.stages())
      std::cout << s.name << ": " << s.status << " in " << s.seconds << " s\n";
  } catch (const gessa::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const gessa::StageError& e) {
    std::cerr << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
