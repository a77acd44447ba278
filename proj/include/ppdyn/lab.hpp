#pragma once

// Staged experiment runner. Every output file starts with the config hash and the
// seed; only manifest.json carries wall-clock data, so reruns are byte-identical.

#include <chrono>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ppdyn/config.hpp"
#include "ppdyn/dynamics.hpp"
#include "ppdyn/eigensolver.hpp"
#include "ppdyn/error.hpp"
#include "ppdyn/generic_vectors.hpp"
#include "ppdyn/lattice.hpp"
#include "ppdyn/measure.hpp"
#include "ppdyn/spacing.hpp"
#include "ppdyn/spectral.hpp"

namespace ppdyn {

inline constexpr const char* kVersion = "1.0.0";

enum class Stage { model, measure, construction, dimensions, transport, bounds, spacing };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::model: return "model";
    case Stage::measure: return "measure";
    case Stage::construction: return "construction";
    case Stage::dimensions: return "dimensions";
    case Stage::transport: return "transport";
    case Stage::bounds: return "bounds";
    case Stage::spacing: return "spacing";
  }
  return "?";
}

inline const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> s = {Stage::model,     Stage::measure, Stage::construction, Stage::dimensions,
                                       Stage::transport, Stage::bounds,  Stage::spacing};
  return s;
}

inline Stage stage_from_string(const std::string& s) {
  for (auto st : all_stages())
    if (s == to_string(st)) return st;
  throw ConfigError("stage", "unknown stage '" + s + "'");
}

/// A stage threw; the original exception is nested.
class StageError : public Error {
 public:
  StageError(std::string stage, std::uint64_t seed, const std::string& what)
      : Error("stage " + stage + " (seed " + std::to_string(seed) + ") failed: " + what),
        stage_(std::move(stage)), seed_(seed) {}
  const std::string& stage() const noexcept { return stage_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::string stage_;
  std::uint64_t seed_;
};

struct StageRecord {
  std::string stage;
  std::uint64_t seed = 0;
  std::vector<std::string> files;  // relative to the output directory
  double seconds = 0.0;
};

struct RunManifest {
  std::string config_hash;
  std::string version = kVersion;
  std::string timestamp;
  std::string output_dir;
  std::vector<StageRecord> stages;
  std::optional<std::string> failed_stage;
  std::optional<std::string> error;

  const StageRecord* find(const std::string& stage, std::uint64_t seed) const {
    for (const auto& r : stages)
      if (r.stage == stage && r.seed == seed) return &r;
    return nullptr;
  }
  std::vector<std::uint64_t> seeds() const {
    std::vector<std::uint64_t> out;
    for (const auto& r : stages)
      if (std::find(out.begin(), out.end(), r.seed) == out.end()) out.push_back(r.seed);
    return out;
  }
};

inline nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& r : m.stages)
    stages.push_back({{"stage", r.stage}, {"seed", r.seed}, {"files", r.files}, {"seconds", r.seconds}});
  nlohmann::json j{{"config_hash", m.config_hash}, {"version", m.version},   {"timestamp", m.timestamp},
                   {"output_dir", m.output_dir},   {"stages", std::move(stages)}};
  j["failed_stage"] = m.failed_stage ? nlohmann::json(*m.failed_stage) : nlohmann::json(nullptr);
  j["error"] = m.error ? nlohmann::json(*m.error) : nlohmann::json(nullptr);
  return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.config_hash = j.at("config_hash").get<std::string>();
  m.version = j.at("version").get<std::string>();
  m.timestamp = j.at("timestamp").get<std::string>();
  m.output_dir = j.at("output_dir").get<std::string>();
  for (const auto& r : j.at("stages"))
    m.stages.push_back({r.at("stage").get<std::string>(), r.at("seed").get<std::uint64_t>(),
                        r.at("files").get<std::vector<std::string>>(), r.at("seconds").get<double>()});
  if (j.contains("failed_stage") && !j["failed_stage"].is_null()) m.failed_stage = j["failed_stage"].get<std::string>();
  if (j.contains("error") && !j["error"].is_null()) m.error = j["error"].get<std::string>();
  return m;
}

inline RunManifest load_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw MissingStage("manifest.json in " + dir.string());
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error("unreadable manifest in " + dir.string() + ": " + e.what());
  }
}

struct RunOptions {
  std::set<Stage> stages;  // empty: every stage that applies
  std::optional<std::string> output_dir;
  std::optional<unsigned> threads;
};

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string num(double x) { return fmt(x); }

/// Everything computed for one seed, filled stage by stage.
struct SeedContext {
  std::uint64_t seed = 0;
  ModelSpec model;
  TridiagonalMatrix matrix;
  EigenSystem eig;
  TimeWindow window;
  double t_max = 0.0;
  Eigen::VectorXd state;
  std::optional<Expansion> expansion;
  std::optional<SpacingWitness> witness;
  std::optional<PointMeasure> measure;
  std::optional<WindowSpec> scale_window;
  std::vector<TransportEstimate> transport;
};

class Writer {
 public:
  Writer(std::filesystem::path dir, std::string hash, std::uint64_t seed)
      : dir_(std::move(dir)), hash_(std::move(hash)), seed_(seed) {}

  std::string name(const std::string& stem, const std::string& ext) const {
    return stem + "_s" + std::to_string(seed_) + "." + ext;
  }
  std::ofstream open(const std::string& file) const {
    std::ofstream out(dir_ / file, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir_ / file).string());
    return out;
  }
  std::vector<std::string> header(const std::string& stage) const {
    return {"ppdyn " + stage, "config_hash=" + hash_, "seed=" + std::to_string(seed_)};
  }
  std::string csv(const std::string& stem, const std::string& stage, const std::string& columns,
                  const std::vector<std::vector<std::string>>& rows) const {
    const auto file = name(stem, "csv");
    auto out = open(file);
    for (const auto& h : header(stage)) out << "# " << h << '\n';
    out << columns << '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << '\n';
    }
    return file;
  }
  std::string json(const std::string& stem, const std::string& stage, nlohmann::json body) const {
    const auto file = name(stem, "json");
    body["config_hash"] = hash_;
    body["stage"] = stage;
    body["seed"] = seed_;
    open(file) << body.dump(2) << '\n';
    return file;
  }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::string hash_;
  std::uint64_t seed_;
};

inline Eigen::VectorXd read_state_file(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw ConfigError("state.path", "cannot read " + path);
  std::vector<double> v;
  std::string line;
  while (std::getline(in, line)) {
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::istringstream ls(line);
    for (double x; ls >> x;) v.push_back(x);
  }
  if (v.size() != n)
    throw ConfigError("state.path", path + " holds " + std::to_string(v.size()) + " amplitudes, expected " + std::to_string(n));
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(n));
}

inline SelectOptions witness_options(const Interval& w) {
  SelectOptions o;
  o.lo = w.lo;
  o.hi = w.hi;
  return o;
}

// ---------------------------------------------------------------------------
// Stages

inline std::vector<std::string> run_model(const ExperimentConfig& c, SeedContext& ctx, const Writer& w) {
  ctx.model = c.model;
  ctx.model.seed = ctx.seed;
  ctx.matrix = build_hamiltonian(ctx.model);
  std::filesystem::create_directories(w.dir() / "cache");
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(ctx.matrix.hash()));
  ctx.eig = eigensolve_cached(ctx.matrix, w.dir() / "cache" / (std::string("eig_") + hash + ".bin"));
  ctx.t_max = c.transport.t_max ? *c.transport.t_max : ballistic_time_cap(ctx.matrix);
  ctx.window = c.transport.window.automatic() ? TimeWindow{10.0, ctx.t_max}
                                              : TimeWindow{*c.transport.window.lo, *c.transport.window.hi};
  if (!(ctx.window.lo < ctx.window.hi) || ctx.window.hi > ctx.t_max * (1 + 1e-12) || ctx.window.lo < c.transport.t_min)
    throw DegenerateWindow("transport window [" + num(ctx.window.lo) + ", " + num(ctx.window.hi) +
                           "] does not fit inside [t_min, t_max] = [" + num(c.transport.t_min) + ", " + num(ctx.t_max) + "]");

  const auto residuals = scaled_residuals(ctx.matrix, ctx.eig);
  nlohmann::json body{{"model", {{"family", to_string(ctx.model.family)}, {"size", ctx.model.size},
                                 {"origin", ctx.model.origin()}, {"seed", ctx.seed}}},
                      {"matrix_hash", hash},
                      {"norm_bound", ctx.matrix.norm_bound()},
                      {"velocity_bound", ctx.matrix.velocity_bound()},
                      {"eigenvalue_min", ctx.eig.values.minCoeff()},
                      {"eigenvalue_max", ctx.eig.values.maxCoeff()},
                      {"max_scaled_residual", residuals.maxCoeff()},
                      {"t_max", ctx.t_max},
                      {"time_window", {ctx.window.lo, ctx.window.hi}}};
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index i = 0; i < ctx.eig.values.size(); ++i) rows.push_back({std::to_string(i), num(ctx.eig.values[i])});
  return {w.json("model", "model", std::move(body)), w.csv("eigenvalues", "model", "index,eigenvalue", rows)};
}

inline void build_state(const ExperimentConfig& c, SeedContext& ctx) {
  const auto n = ctx.model.size;
  const auto& k = c.state.construction;
  switch (c.state.kind) {
    case StateKind::delta:
      ctx.state = delta_state(n, static_cast<std::size_t>(ctx.model.origin() + c.state.site));
      break;
    case StateKind::eigenvector:
      ctx.state = ctx.eig.vectors.col(static_cast<Eigen::Index>(c.state.index));
      break;
    case StateKind::file:
      ctx.state = read_state_file(c.state.path, n);
      break;
    case StateKind::low_dim:
      ctx.expansion = low_dim_expansion(n, k.head, k.tail_exponent, k.q);
      ctx.state = to_vector(ctx.eig, *ctx.expansion);
      break;
    case StateKind::high_dim: {
      const auto values = value_span(ctx.eig);
      ctx.witness = select_weakly_spaced(values, k.witness_alpha(), witness_options(c.spacing.interval));
      ctx.expansion = high_dim_expansion(values, *ctx.witness, k.n, k.q, k.head, k.r_k);
      ctx.state = to_vector(ctx.eig, *ctx.expansion);
      break;
    }
    case StateKind::divergent: {
      Eigen::VectorXd head = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
      const long o = ctx.model.origin();
      for (std::size_t i = 0; i < k.head.size(); ++i) {
        const long site = o + static_cast<long>(i);
        if (site < static_cast<long>(n)) head[site] = k.head[i];
      }
      ctx.state = build_divergent_moment_vector(IndexMap::of(ctx.model), k.p, k.j, head, true);
      break;
    }
  }
}

inline std::vector<std::string> run_measure(const ExperimentConfig& c, SeedContext& ctx, const Writer& w) {
  build_state(c, ctx);
  ctx.measure = ctx.expansion ? expansion_measure(value_span(ctx.eig), *ctx.expansion) : spectral_measure(ctx.eig, ctx.state);
  const auto file = w.name("measure", "txt");
  std::ostringstream header;
  for (const auto& h : w.header("measure")) header << h << '\n';
  header << "state=" << to_string(c.state.kind);
  auto out = w.open(file);
  write_text(out, *ctx.measure, header.str());
  return {file};
}

inline WindowSpec scale_window(const ExperimentConfig& c, const SeedContext& ctx) {
  if (!c.dimensions.window.automatic()) return {*c.dimensions.window.lo, *c.dimensions.window.hi};
  const auto w = matched_scale_window(ctx.window, *ctx.measure);
  if (!(w.lo < w.hi))
    throw DegenerateWindow("scale window matched to the time window is empty after clipping to [2 min gap, diameter/4]: [" +
                           num(w.lo) + ", " + num(w.hi) + "]; set dimensions.window explicitly");
  return w;
}

inline std::vector<std::string> run_dimensions(const ExperimentConfig& c, SeedContext& ctx, const Writer& w) {
  ctx.scale_window = scale_window(c, ctx);
  std::vector<std::vector<std::string>> rows, curves;
  for (double q : c.dimensions.q_grid)
    for (auto route : c.dimensions.routes) {
      const auto fit = estimate_dimensions(*ctx.measure, q, route, *ctx.scale_window);
      rows.push_back({num(q), to_string(route), num(fit.lower_slope), num(fit.upper_slope), num(fit.global_slope),
                      num(fit.residual), std::to_string(fit.window_size())});
      for (std::size_t i = 0; i < fit.abscissae.size(); ++i)
        curves.push_back({num(q), to_string(route), num(fit.abscissae[i]), num(fit.ordinates[i])});
    }
  return {w.csv("dimensions", "dimensions", "q,route,lower,upper,global,residual,points", rows),
          w.csv("dimension_curves", "dimensions", "q,route,x,ln_value", curves)};
}

inline std::vector<std::string> run_transport(const ExperimentConfig& c, SeedContext& ctx, const Writer& w,
                                              unsigned threads) {
  MomentOptions opt;
  opt.path = c.transport.path;
  opt.samples = c.transport.samples;
  opt.threads = threads;
  const auto times = time_grid(c.transport.t_min, ctx.t_max, c.transport.per_decade);
  const auto series = moments(ctx.eig, ctx.state, c.transport.p_grid, times, IndexMap::of(ctx.model), opt);
  ctx.transport = transport_exponents(series, ctx.window);

  const auto moments_file = w.name("moments", "csv");
  {
    auto out = w.open(moments_file);
    write_csv(out, series, w.header("transport"));
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : ctx.transport)
    rows.push_back({num(e.p), num(e.alpha_plus), num(e.fit.lower_slope), num(e.fit.global_slope), num(e.fit.residual),
                    std::to_string(e.fit.window_size())});
  nlohmann::json estimates = nlohmann::json::array();
  for (const auto& e : ctx.transport) estimates.push_back(to_json(e));
  nlohmann::json body{{"time_window", {ctx.window.lo, ctx.window.hi}},
                      {"estimates", std::move(estimates)},
                      {"quasiballistic_tolerance", c.transport.quasiballistic_tol},
                      {"quasiballistic", classify_quasiballistic(ctx.transport, c.transport.quasiballistic_tol)},
                      {"moment_surrogates_hold", moment_surrogates_hold(ctx.transport)}};
  return {moments_file, w.csv("exponents", "transport", "p,alpha_plus,lower,global,residual,points", rows),
          w.json("transport", "transport", std::move(body))};
}

inline std::vector<std::string> run_bounds(const ExperimentConfig& c, SeedContext& ctx, const Writer& w) {
  if (!ctx.scale_window) ctx.scale_window = scale_window(c, ctx);
  const auto report = verify_bounds(ctx.transport, *ctx.measure, c.transport.bound_tol, *ctx.scale_window);
  nlohmann::json body = to_json(report);
  body["scale_window"] = {ctx.scale_window->lo, ctx.scale_window->hi};
  body["all_pass"] = report.all_pass();
  return {w.json("bounds", "bounds", std::move(body))};
}

inline std::vector<std::string> run_spacing(const ExperimentConfig& c, SeedContext& ctx, const Writer& w) {
  const auto values = value_span(ctx.eig);
  const auto gaps = gap_statistics(values);
  nlohmann::json witnesses = nlohmann::json::array();
  for (double alpha : c.spacing.alphas) {
    try {
      const auto wit = select_weakly_spaced(values, alpha, witness_options(c.spacing.interval));
      auto j = to_json(wit);
      j["verified"] = verify_weakly_spaced(values, wit);
      witnesses.push_back(std::move(j));
    } catch (const WindowEmpty& e) {
      witnesses.push_back({{"alpha", alpha}, {"error", e.what()}, {"first_empty_level", e.level()}});
    }
  }
  nlohmann::json body{{"spectrum_gaps",
                       {{"min", gaps.min_gap}, {"mean", gaps.mean_gap}, {"max", gaps.max_gap},
                        {"rank_exponent", gaps.rank_exponent}}},
                      {"witnesses", std::move(witnesses)}};
  return {w.json("spacing", "spacing", std::move(body))};
}

inline std::vector<std::string> run_construction(const ExperimentConfig& c, SeedContext& ctx, const Writer& w) {
  auto spec = c.state.construction;
  spec.dimension = ctx.model.size;
  nlohmann::json body{{"construction", to_json(spec)}, {"state_norm", ctx.state.norm()}};
  std::vector<std::string> files;
  if (ctx.expansion) {
    body["terms"] = ctx.expansion->terms.size();
    const auto bin = w.name("construction", "bin");
    save_expansion((w.dir() / bin).string(), *ctx.expansion);
    files.push_back(bin);
  }
  switch (c.state.kind) {
    case StateKind::low_dim:
      body["atom_power_sum"] = atom_power_sum(*ctx.measure, spec.q);
      break;
    case StateKind::high_dim: {
      const auto r = certify_high_dim(value_span(ctx.eig), *ctx.witness, *ctx.expansion, spec.n, spec.q, spec.r_k);
      body["witness"] = to_json(*ctx.witness);
      body["certificate"] = to_json(r);
      break;
    }
    case StateKind::divergent: {
      const long m_hi = static_cast<long>(ctx.model.size) / 2 - 1;
      const long m_lo = spec.j + 1;
      if (m_lo < m_hi) {
        const auto h = harmonic_fit(IndexMap::of(ctx.model), ctx.state, spec.p, spec.j, m_lo, m_hi);
        body["harmonic"] = {{"c", h.c}, {"d", h.d}, {"m", h.m}, {"sums", h.sums}};
      }
      break;
    }
    default:
      throw DomainError("construction stage needs a constructed state kind");
  }
  files.insert(files.begin(), w.json("construction", "construction", std::move(body)));
  return files;
}

inline bool is_constructed(StateKind k) {
  return k == StateKind::low_dim || k == StateKind::high_dim || k == StateKind::divergent;
}

/// Requested stages plus their prerequisites; stages that do not apply are dropped.
inline std::vector<Stage> plan(const ExperimentConfig& c, const std::set<Stage>& requested) {
  std::set<Stage> want = requested;
  if (want.empty()) {
    want = {Stage::model, Stage::measure, Stage::dimensions, Stage::transport, Stage::bounds};
    if (is_constructed(c.state.kind)) want.insert(Stage::construction);
    if (!c.spacing.alphas.empty()) want.insert(Stage::spacing);
  }
  if (want.count(Stage::bounds)) want.insert({Stage::dimensions, Stage::transport});
  if (want.count(Stage::dimensions) || want.count(Stage::transport) || want.count(Stage::construction))
    want.insert(Stage::measure);
  want.insert(Stage::model);
  if (want.count(Stage::construction) && !is_constructed(c.state.kind))
    throw ConfigError("state.kind", "construction stage needs state kind low_dim, high_dim or divergent");
  std::vector<Stage> out;
  for (auto s : all_stages())
    if (want.count(s)) out.push_back(s);
  return out;
}

inline void write_manifest(const RunManifest& m) {
  std::ofstream out(std::filesystem::path(m.output_dir) / "manifest.json");
  if (!out) throw Error("cannot write manifest in " + m.output_dir);
  out << to_json(m).dump(2) << '\n';
}

}  // namespace detail

/// Runs the requested stages for every seed. Records of an earlier run with the same
/// config hash in the same directory are kept unless rerun. On failure the partial
/// manifest is written and a StageError with the original exception nested is thrown.
inline RunManifest run_experiment(const ExperimentConfig& config, const RunOptions& options = {}) {
  config.validate();
  const auto stages = detail::plan(config, options.stages);
  RunManifest m;
  m.config_hash = config_hash(config);
  m.timestamp = detail::utc_timestamp();
  m.output_dir = options.output_dir.value_or(config.output_dir);
  const std::filesystem::path dir(m.output_dir);
  std::filesystem::create_directories(dir);
  if (std::filesystem::exists(dir / "manifest.json")) {
    try {
      auto previous = load_manifest(dir);
      if (previous.config_hash == m.config_hash && !previous.failed_stage) m.stages = std::move(previous.stages);
    } catch (const Error&) {
    }
  }
  {
    std::ofstream out(dir / "config.ini");
    out << render(config);
  }
  const unsigned threads = options.threads.value_or(config.threads);

  for (auto seed : config.seeds) {
    detail::SeedContext ctx;
    ctx.seed = seed;
    const detail::Writer w(dir, m.config_hash, seed);
    for (auto stage : stages) {
      const auto start = std::chrono::steady_clock::now();
      std::vector<std::string> files;
      try {
        switch (stage) {
          case Stage::model: files = detail::run_model(config, ctx, w); break;
          case Stage::measure: files = detail::run_measure(config, ctx, w); break;
          case Stage::construction: files = detail::run_construction(config, ctx, w); break;
          case Stage::dimensions: files = detail::run_dimensions(config, ctx, w); break;
          case Stage::transport: files = detail::run_transport(config, ctx, w, threads); break;
          case Stage::bounds: files = detail::run_bounds(config, ctx, w); break;
          case Stage::spacing: files = detail::run_spacing(config, ctx, w); break;
        }
      } catch (const std::exception& e) {
        m.failed_stage = to_string(stage);
        m.error = e.what();
        detail::write_manifest(m);
        std::throw_with_nested(StageError(to_string(stage), seed, e.what()));
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::erase_if(m.stages, [&](const StageRecord& r) { return r.stage == to_string(stage) && r.seed == seed; });
      m.stages.push_back({to_string(stage), seed, std::move(files), secs});
    }
  }
  detail::write_manifest(m);
  return m;
}

// ---------------------------------------------------------------------------
// Report

struct ReportOutput {
  std::string text;                     // aligned tables
  std::vector<std::string> plot_files;  // relative to the output directory
};

namespace detail {

/// Rows of a CSV written by Writer::csv, '#' lines and the column line skipped.
inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingStage(path.filename().string());
  std::vector<std::vector<std::string>> rows;
  bool columns_seen = false;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    if (!columns_seen) {
      columns_seen = true;
      continue;
    }
    std::vector<std::string> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) row.push_back(cell);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingStage(path.filename().string());
  return nlohmann::json::parse(in);
}

inline std::string file_of(const RunManifest& m, const std::string& stage, std::uint64_t seed, const std::string& stem) {
  const auto* r = m.find(stage, seed);
  if (!r) throw MissingStage(stage + " (seed " + std::to_string(seed) + ")");
  for (const auto& f : r->files)
    if (f.rfind(stem + "_s", 0) == 0) return f;
  throw MissingStage(stage + "/" + stem);
}

inline std::string cell(double x, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << x;
  return os.str();
}

inline void table(std::ostream& os, const std::vector<std::string>& head, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(head.size());
  for (std::size_t i = 0; i < head.size(); ++i) width[i] = head[i].size();
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < width.size(); ++i)
      os << (i ? "  " : "") << std::setw(static_cast<int>(width[i])) << (i < r.size() ? r[i] : "");
    os << '\n';
  };
  line(head);
  std::size_t total = 0;
  for (auto x : width) total += x;
  os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r);
}

}  // namespace detail

/// Tables of exponents, dimensions and bounds per seed, plus gnuplot-ready data
/// files. Needs the model, dimensions and transport stages.
inline ReportOutput report(const RunManifest& m) {
  namespace fs = std::filesystem;
  const fs::path dir(m.output_dir);
  if (m.seeds().empty()) throw MissingStage("model");
  ReportOutput out;
  std::ostringstream os;
  os << "run " << m.config_hash << "  (ppdyn " << m.version << ")\n";
  for (auto seed : m.seeds()) {
    const auto dims = detail::read_csv(dir / detail::file_of(m, "dimensions", seed, "dimensions"));
    const auto curves = detail::read_csv(dir / detail::file_of(m, "dimensions", seed, "dimension_curves"));
    const auto expo = detail::read_csv(dir / detail::file_of(m, "transport", seed, "exponents"));
    const auto moments_rows = detail::read_csv(dir / detail::file_of(m, "transport", seed, "moments"));
    const auto model = detail::read_json(dir / detail::file_of(m, "model", seed, "model"));

    os << "\nseed " << seed << "  " << model["model"]["family"].get<std::string>() << "  N = "
       << model["model"]["size"].get<std::size_t>() << "\n\n";

    std::vector<std::vector<std::string>> rows;
    for (const auto& r : dims)
      rows.push_back({r[0].substr(0, 6), r[1], detail::cell(std::stod(r[2])), detail::cell(std::stod(r[3])),
                      detail::cell(std::stod(r[4])), r[6]});
    detail::table(os, {"q", "route", "D-", "D+", "global", "points"}, rows);
    os << '\n';

    std::map<double, nlohmann::json> bound_rows;
    if (m.find("bounds", seed)) {
      const auto b = detail::read_json(dir / detail::file_of(m, "bounds", seed, "bounds"));
      for (const auto& r : b["rows"]) bound_rows[r["p"].get<double>()] = r;
    }
    rows.clear();
    for (const auto& r : expo) {
      const double p = std::stod(r[0]);
      std::vector<std::string> row{detail::cell(p, 2), detail::cell(std::stod(r[1])), detail::cell(std::stod(r[2])),
                                   detail::cell(std::stod(r[3]))};
      if (auto it = bound_rows.find(p); it != bound_rows.end()) {
        const auto& b = it->second;
        row.push_back(detail::cell(b["gfd_bound"].get<double>()));
        row.push_back(detail::cell(b["packing_bound"].get<double>()));
        row.push_back(b["gfd_pass"].get<bool>() && b["packing_pass"].get<bool>() ? "ok" : "VIOLATED");
      }
      rows.push_back(std::move(row));
    }
    if (bound_rows.empty())
      detail::table(os, {"p", "alpha+", "lower", "global"}, rows);
    else
      detail::table(os, {"p", "alpha+", "lower", "global", "D+(q)p", "pack*p", "bound"}, rows);

    if (m.find("spacing", seed)) {
      const auto s = detail::read_json(dir / detail::file_of(m, "spacing", seed, "spacing"));
      rows.clear();
      for (const auto& wj : s["witnesses"]) {
        if (wj.contains("error"))
          rows.push_back({detail::cell(wj["alpha"].get<double>(), 3), "-", "-", "empty at " + wj["first_empty_level"].dump()});
        else
          rows.push_back({detail::cell(wj["alpha"].get<double>(), 3), wj["depth"].dump(), wj["L0"].dump(),
                          wj["verified"].get<bool>() ? "verified" : "REJECTED"});
      }
      os << '\n';
      detail::table(os, {"alpha", "depth", "L0", "witness"}, rows);
    }

    // ln t  ln M_p blocks, one per p
    {
      const auto file = detail::Writer(dir, m.config_hash, seed).name("plot_moments", "dat");
      std::ofstream pf(dir / file);
      pf << "# config_hash=" << m.config_hash << " seed=" << seed << "\n# ln_t ln_moment, one block per p\n";
      std::map<double, std::vector<std::pair<double, double>>> by_p;
      for (const auto& r : moments_rows) {
        const double mom = std::stod(r[2]);
        if (mom > 0.0) by_p[std::stod(r[1])].push_back({std::log(std::stod(r[0])), std::log(mom)});
      }
      for (const auto& [p, pts] : by_p) {
        pf << "# p=" << detail::num(p) << '\n';
        for (const auto& [x, y] : pts) pf << detail::num(x) << ' ' << detail::num(y) << '\n';
        pf << "\n\n";
      }
      out.plot_files.push_back(file);
    }
    {
      const auto file = detail::Writer(dir, m.config_hash, seed).name("plot_dimensions", "dat");
      std::ofstream pf(dir / file);
      pf << "# config_hash=" << m.config_hash << " seed=" << seed << "\n# (q-1) ln scale, ln value; one block per q and route\n";
      std::string key;
      for (const auto& r : curves) {
        const std::string k = r[0] + " " + r[1];
        if (k != key) {
          if (!key.empty()) pf << "\n\n";
          pf << "# q=" << r[0] << " route=" << r[1] << '\n';
          key = k;
        }
        pf << r[2] << ' ' << r[3] << '\n';
      }
      out.plot_files.push_back(file);
    }
  }
  out.text = os.str();
  {
    std::ofstream rf(dir / "report.txt");
    rf << out.text;
  }
  return out;
}

}  // namespace ppdyn
