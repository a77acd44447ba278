#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ppdyn/config.hpp"
#include "ppdyn/lab.hpp"

using namespace ppdyn;
namespace fs = std::filesystem;

namespace {

ExperimentConfig busy_config() {
  ExperimentConfig c;
  c.model.family = ModelFamily::stark;
  c.model.size = 300;
  c.model.index_origin = 17;
  c.model.coupling = 0.1 + 0.2;
  c.model.field = 1.0 / 3.0;
  c.model.background = {0.0, std::sqrt(2.0), -1e-300};
  c.model.hopping = 0.7;
  c.model.potential_coefficients = {0.25, 0.0625};
  c.state.kind = StateKind::high_dim;
  c.state.site = -4;
  c.state.index = 12;
  c.state.path = "some/file.txt";
  c.state.construction.kind = ConstructionKind::high_dim;
  c.state.construction.head = {0.3, -0.7};
  c.state.construction.tail_exponent = 3.5;
  c.state.construction.q = 0.4;
  c.state.construction.n = 5;
  c.state.construction.alpha = 0.2;
  c.state.construction.r_k = 4;
  c.state.construction.p = 1.5;
  c.state.construction.j = 7;
  c.dimensions.q_grid = {1.0 / 3.0, 0.4, 1.0 / 2.5};
  c.dimensions.window = {1e-3, 0.1};
  c.dimensions.routes = {DimensionRoute::correlation, DimensionRoute::ball};
  c.transport.p_grid = {2.0, 1.5};
  c.transport.t_min = 0.5;
  c.transport.t_max = 123.456;
  c.transport.per_decade = 10;
  c.transport.window = {5.0, 100.0};
  c.transport.path = MomentPath::sampled;
  c.transport.samples = 32;
  c.transport.quasiballistic_tol = 0.05;
  c.transport.bound_tol = 0.2;
  c.spacing.alphas = {0.5, 1.0};
  c.spacing.interval = {-1.0, 1.0};
  c.seeds = {3, 1, 4};
  c.output_dir = "out/busy";
  c.threads = 2;
  return c;
}

ExperimentConfig small_free(const fs::path& dir) {
  ExperimentConfig c;
  c.model.family = ModelFamily::free;
  c.model.size = 512;
  c.dimensions.q_grid = {1.0 / 3.0, 0.5};
  c.spacing.alphas = {1.0};
  c.output_dir = dir.string();
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("ppdyn_lab_test_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string field_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

}  // namespace

TEST(Config, DefaultsAreValid) {
  const ExperimentConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(parse_config(""), c);
}

TEST(Config, RenderParseRoundTrip) {
  const auto c = busy_config();
  ASSERT_NO_THROW(c.validate());
  const auto text = render(c);
  const auto back = parse_config(text);
  EXPECT_EQ(back, c);
  EXPECT_EQ(render(back), text);
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, HashTracksContent) {
  auto c = busy_config();
  const auto h = config_hash(c);
  EXPECT_EQ(h.size(), 16u);
  c.output_dir = "elsewhere";
  c.threads = 7;
  EXPECT_EQ(config_hash(c), h);
  c.transport.t_max = std::nextafter(*c.transport.t_max, 1e9);
  EXPECT_NE(config_hash(c), h);
}

TEST(Config, CommentsAndPartialSections) {
  const auto c = parse_config("; note\n[model]\nfamily = anderson\nsize = 64\n# other note\n[run]\nseeds = [5, 6]\n");
  EXPECT_EQ(c.model.family, ModelFamily::anderson);
  EXPECT_EQ(c.model.size, 64u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{5, 6}));
  EXPECT_EQ(c.transport.p_grid, ExperimentConfig{}.transport.p_grid);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_EQ(field_of("[model]\nsizee = 10\n"), "model.sizee");
  EXPECT_EQ(field_of("[modle]\nsize = 10\n"), "modle");
  EXPECT_EQ(field_of("[model]\nsize = ten\n"), "model.size");
  EXPECT_EQ(field_of("[model]\nfamily = ising\n"), "model.family");
  EXPECT_EQ(field_of("[model]\ncoupling = 1.0.0\n"), "model.coupling");
  EXPECT_EQ(field_of("[model]\nfamily = anderson\ncoupling = 0\n"), "model.coupling");
  EXPECT_EQ(field_of("[dimensions]\nq_grid = [0.5, 1.2]\n"), "dimensions.q_grid");
  EXPECT_EQ(field_of("[dimensions]\nq_grid = 0.5\n"), "dimensions.q_grid");
  EXPECT_EQ(field_of("[transport]\np_grid = [3]\n"), "dimensions.q_grid");
  EXPECT_EQ(field_of("[transport]\np_grid = [1]\n[dimensions]\nq_grid = [0.5]\n"), "<accepted>");
  EXPECT_EQ(field_of("[transport]\np_grid = [-1]\n"), "transport.p_grid");
  EXPECT_EQ(field_of("[transport]\nsamples = 3\n"), "transport.samples");
  EXPECT_EQ(field_of("[transport]\nwindow = [5]\n"), "transport.window");
  EXPECT_EQ(field_of("[transport]\npath = fast\n"), "transport.path");
  EXPECT_EQ(field_of("[state]\nkind = gaussian\n"), "state.kind");
  EXPECT_EQ(field_of("[model]\nsize = 16\n[state]\nsite = 40\n"), "state.site");
  EXPECT_EQ(field_of("[state]\nkind = file\n"), "state.path");
  EXPECT_EQ(field_of("[state]\nkind = low_dim\ntail_exponent = 1\nq = 0.5\n"), "construction.tail_exponent");
  EXPECT_EQ(field_of("[state]\nkind = high_dim\nn = 1\n[dimensions]\nq_grid = [0.5, 0.6]\n[transport]\np_grid = [1]\n"),
            "construction.n");
  EXPECT_EQ(field_of("[run]\nseeds = []\n"), "run.seeds");
  EXPECT_EQ(field_of("[run]\nthreads = 0\n"), "run.threads");
  EXPECT_EQ(field_of("size = 10\n"), "size");
}

TEST(Config, LoadMissingFile) { EXPECT_THROW(load_config("/nonexistent/ppdyn.ini"), ConfigError); }

TEST(Lab, RunWritesHashedDeterministicOutputs) {
  const auto dir = fresh_dir("run");
  const auto c = small_free(dir);
  const auto m = run_experiment(c);
  const auto hash = config_hash(c);
  EXPECT_EQ(m.config_hash, hash);
  EXPECT_FALSE(m.failed_stage);
  for (const char* s : {"model", "measure", "dimensions", "transport", "bounds", "spacing"})
    EXPECT_NE(m.find(s, 0), nullptr) << s;
  EXPECT_EQ(m.find("construction", 0), nullptr);

  std::map<std::string, std::string> first;
  for (const auto& r : m.stages)
    for (const auto& f : r.files) {
      if (f.ends_with(".txt") || f.ends_with(".csv") || f.ends_with(".json")) {
        const auto body = slurp(dir / f);
        EXPECT_NE(body.find(hash), std::string::npos) << f;
      }
      first[f] = slurp(dir / f);
    }
  EXPECT_EQ(parse_config(slurp(dir / "config.ini")), c);

  const auto again = run_experiment(c);
  for (const auto& [f, body] : first) EXPECT_EQ(slurp(dir / f), body) << f;
  EXPECT_EQ(load_manifest(dir).timestamp, again.timestamp);
}

TEST(Lab, ReportTablesAndPlots) {
  const auto dir = fresh_dir("report");
  const auto m = run_experiment(small_free(dir));
  const auto out = report(m);
  EXPECT_NE(out.text.find("alpha+"), std::string::npos);
  EXPECT_NE(out.text.find("mean_q"), std::string::npos);
  EXPECT_NE(out.text.find("verified"), std::string::npos);
  ASSERT_EQ(out.plot_files.size(), 2u);
  for (const auto& f : out.plot_files) EXPECT_GT(fs::file_size(dir / f), 100u);
  EXPECT_TRUE(fs::exists(dir / "report.txt"));
}

TEST(Lab, PartialRunsMergeAndReportNeedsStages) {
  const auto dir = fresh_dir("partial");
  const auto c = small_free(dir);
  auto m = run_experiment(c, {{Stage::transport}, {}, {}});
  EXPECT_NE(m.find("transport", 0), nullptr);
  EXPECT_EQ(m.find("dimensions", 0), nullptr);
  EXPECT_THROW(report(m), MissingStage);
  m = run_experiment(c, {{Stage::dimensions}, {}, {}});
  EXPECT_NE(m.find("transport", 0), nullptr);
  EXPECT_NO_THROW(report(load_manifest(dir)));
  EXPECT_THROW(load_manifest(dir / "nowhere"), MissingStage);
}

TEST(Lab, StageFailureKeepsPartialManifest) {
  const auto dir = fresh_dir("failure");
  auto c = small_free(dir);
  c.state.kind = StateKind::file;
  c.state.path = (dir / "state.txt").string();
  fs::create_directories(dir);
  std::ofstream(c.state.path) << "1\n0\n0\n";
  try {
    run_experiment(c);
    FAIL() << "expected a stage failure";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "measure");
    try {
      std::rethrow_if_nested(e);
      FAIL() << "expected a nested exception";
    } catch (const ConfigError& inner) {
      EXPECT_EQ(inner.field(), "state.path");
    }
  }
  const auto m = load_manifest(dir);
  ASSERT_TRUE(m.failed_stage);
  EXPECT_EQ(*m.failed_stage, "measure");
  EXPECT_NE(m.find("model", 0), nullptr);
}

TEST(Lab, FileStateMatchesDelta) {
  const auto dir = fresh_dir("filestate");
  auto c = small_free(dir);
  c.spacing.alphas.clear();
  fs::create_directories(dir);
  const auto path = dir / "state.txt";
  {
    std::ofstream out(path);
    out << "# delta at the origin\n";
    for (std::size_t i = 0; i < c.model.size; ++i) out << (static_cast<long>(i) == c.model.origin() ? 1 : 0) << '\n';
  }
  run_experiment(c, {{Stage::measure}, {}, {}});
  const auto delta = slurp(dir / "measure_s0.txt");
  c.state.kind = StateKind::file;
  c.state.path = path.string();
  c.output_dir = (dir / "b").string();
  run_experiment(c, {{Stage::measure}, {}, {}});
  const auto file = slurp(dir / "b" / "measure_s0.txt");
  EXPECT_EQ(delta.substr(delta.find("# columns")), file.substr(file.find("# columns")));
}

TEST(Lab, LowDimConstructionStage) {
  const auto dir = fresh_dir("construct");
  auto c = small_free(dir);
  c.state.kind = StateKind::low_dim;
  c.state.construction.head = {1.0};
  const auto m = run_experiment(c, {{Stage::construction}, {}, {}});
  const auto* r = m.find("construction", 0);
  ASSERT_NE(r, nullptr);
  ASSERT_EQ(r->files.size(), 2u);
  const auto x = load_expansion((dir / r->files[1]).string());
  EXPECT_EQ(x.dimension, c.model.size);
  EXPECT_NEAR(x.norm(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(x.terms.front().coefficient, low_dim_expansion(c.model.size, c.state.construction.head, 4.0, 0.5).terms.front().coefficient);
}

TEST(Lab, ConstructionNeedsConstructedState) {
  const auto dir = fresh_dir("noconstruct");
  EXPECT_THROW(run_experiment(small_free(dir), {{Stage::construction}, {}, {}}), ConfigError);
}

TEST(Lab, SeedsGetTheirOwnFiles) {
  const auto dir = fresh_dir("seeds");
  auto c = small_free(dir);
  c.model.family = ModelFamily::anderson;
  c.model.size = 128;
  c.seeds = {1, 2};
  run_experiment(c, {{Stage::model}, {}, {}});
  EXPECT_NE(slurp(dir / "eigenvalues_s1.csv").substr(60), slurp(dir / "eigenvalues_s2.csv").substr(60));
}
