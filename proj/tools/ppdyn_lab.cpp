// ppdyn_lab: staged spectral/transport experiments driven by a config file.
// Exit codes: 0 success, 2 bad config or input, 3 numerical failure, 4 verification failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ppdyn/ppdyn.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfig = 2;
constexpr int kNumerical = 3;
constexpr int kVerification = 4;

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 0;
};

int classify(const std::exception& e) {
  if (dynamic_cast<const ppdyn::ConfigError*>(&e)) return kConfig;
  if (dynamic_cast<const ppdyn::NotNormalized*>(&e)) return kConfig;
  if (dynamic_cast<const ppdyn::SummabilityViolated*>(&e)) return kConfig;
  if (dynamic_cast<const ppdyn::VerificationFailure*>(&e)) return kVerification;
  if (dynamic_cast<const ppdyn::MissingStage*>(&e)) return kConfig;
  return kNumerical;
}

/// Exit code of the innermost nested exception.
int exit_code(const std::exception& e) {
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    return exit_code(inner);
  }
  return classify(e);
}

ppdyn::ExperimentConfig load(const Args& a) {
  if (a.config.empty()) throw ppdyn::ConfigError("--config", "a config file is required");
  auto c = ppdyn::load_config(a.config);
  if (a.seed) c.seeds = {*a.seed};
  if (!a.out.empty()) c.output_dir = a.out;
  if (a.threads) c.threads = a.threads;
  c.validate();
  return c;
}

int run_stages(const Args& a, std::set<ppdyn::Stage> stages) {
  const auto c = load(a);
  ppdyn::RunOptions opt;
  opt.stages = std::move(stages);
  const auto m = ppdyn::run_experiment(c, opt);
  for (const auto& r : m.stages)
    std::cout << r.stage << " seed " << r.seed << ": " << r.files.size() << " file(s), " << r.seconds << " s\n";
  std::cout << "manifest: " << (std::filesystem::path(m.output_dir) / "manifest.json").string() << '\n';
  return kOk;
}

int verify(const Args& a) {
  run_stages(a, {ppdyn::Stage::bounds});
  const auto c = load(a);
  const auto m = ppdyn::load_manifest(c.output_dir);
  bool ok = true;
  for (auto seed : c.seeds) {
    const auto* r = m.find("bounds", seed);
    if (!r) throw ppdyn::MissingStage("bounds");
    std::ifstream in(std::filesystem::path(m.output_dir) / r->files.front());
    const auto j = nlohmann::json::parse(in);
    const bool pass = j.at("all_pass").get<bool>();
    std::cout << "seed " << seed << ": bounds " << (pass ? "hold" : "VIOLATED") << '\n';
    ok = ok && pass;
  }
  return ok ? kOk : kVerification;
}

int report(const Args& a) {
  std::string dir = a.out;
  if (dir.empty()) dir = load(a).output_dir;
  const auto out = ppdyn::report(ppdyn::load_manifest(dir));
  std::cout << out.text;
  for (const auto& f : out.plot_files) std::cout << "plot data: " << (std::filesystem::path(dir) / f).string() << '\n';
  return kOk;
}

/// Small end-to-end run on the free chain: the bound must hold and the run must be
/// reproducible byte for byte.
int selftest(const Args& a) {
  ppdyn::ExperimentConfig c;
  c.model.family = ppdyn::ModelFamily::free;
  c.model.size = 1024;
  c.dimensions.q_grid = {1.0 / 3.0, 0.5};
  c.spacing.alphas = {1.0};
  c.output_dir = (a.out.empty() ? std::filesystem::temp_directory_path() / "ppdyn_selftest"
                                : std::filesystem::path(a.out)).string();
  std::filesystem::remove_all(c.output_dir);
  const auto m = ppdyn::run_experiment(c);
  auto slurp = [&](const std::string& f) {
    std::ifstream in(std::filesystem::path(c.output_dir) / f, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const auto* t = m.find("transport", 0);
  const std::string first = slurp(t->files[1]);
  ppdyn::run_experiment(c);
  const bool reproducible = slurp(t->files[1]) == first;
  const auto b = nlohmann::json::parse(slurp(m.find("bounds", 0)->files.front()));
  const bool bounds = b.at("all_pass").get<bool>();
  ppdyn::report(ppdyn::load_manifest(c.output_dir));
  std::cout << "selftest: reproducible " << (reproducible ? "yes" : "NO") << ", bounds " << (bounds ? "hold" : "VIOLATED")
            << '\n';
  if (!reproducible) return kNumerical;
  return bounds ? kOk : kVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ppdyn_lab: spectral measures, transport exponents and weakly spaced witnesses"};
  app.require_subcommand(1);
  Args args;
  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", args.config, "experiment config (INI)");
    sub->add_option("--seed-override", args.seed, "run this single seed instead of run.seeds");
    sub->add_option("-o,--out", args.out, "output directory (overrides run.output_dir)");
    sub->add_option("-j,--threads", args.threads, "worker threads")->check(CLI::PositiveNumber);
  };
  using ppdyn::Stage;
  struct Cmd {
    const char* name;
    const char* help;
    std::function<int()> fn;
  };
  const std::vector<Cmd> cmds = {
      {"model", "build and diagonalize the Hamiltonian", [&] { return run_stages(args, {Stage::model}); }},
      {"dims", "spectral measure and generalized fractal dimensions", [&] { return run_stages(args, {Stage::dimensions}); }},
      {"transport", "moments and transport exponents", [&] { return run_stages(args, {Stage::transport}); }},
      {"spacing", "weakly spaced witnesses in the spectrum", [&] { return run_stages(args, {Stage::spacing}); }},
      {"construct", "build the configured generic vector and its certificate",
       [&] { return run_stages(args, {Stage::construction}); }},
      {"verify", "check transport lower bounds; exit 4 on violation", [&] { return verify(args); }},
      {"run", "every applicable stage", [&] { return run_stages(args, {}); }},
      {"report", "tables and plot data from a finished run", [&] { return report(args); }},
      {"selftest", "small end-to-end run", [&] { return selftest(args); }},
  };
  std::function<int()> chosen;
  for (const auto& cmd : cmds) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    common(sub);
    sub->callback([&chosen, fn = cmd.fn] { chosen = fn; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  try {
    return chosen();
  } catch (const ppdyn::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const ppdyn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return classify(e);
  }
}
