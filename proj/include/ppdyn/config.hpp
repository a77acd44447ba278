#pragma once

// Experiment configuration: sectioned key = value text (INI), lists in brackets.
// render() prints every field with %.17g so parse(render(c)) == c.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ppdyn/dynamics.hpp"
#include "ppdyn/error.hpp"
#include "ppdyn/generic_vectors.hpp"
#include "ppdyn/lattice.hpp"

namespace ppdyn {

enum class StateKind { delta, eigenvector, low_dim, high_dim, divergent, file };

inline const char* to_string(StateKind k) {
  switch (k) {
    case StateKind::delta: return "delta";
    case StateKind::eigenvector: return "eigenvector";
    case StateKind::low_dim: return "low_dim";
    case StateKind::high_dim: return "high_dim";
    case StateKind::divergent: return "divergent";
    case StateKind::file: return "file";
  }
  return "?";
}

inline StateKind state_kind_from_string(const std::string& s) {
  for (auto k : {StateKind::delta, StateKind::eigenvector, StateKind::low_dim, StateKind::high_dim,
                 StateKind::divergent, StateKind::file})
    if (s == to_string(k)) return k;
  throw ConfigError("state.kind", "unknown state kind '" + s + "'");
}

inline MomentPath moment_path_from_string(const std::string& s) {
  for (auto p : {MomentPath::automatic, MomentPath::exact, MomentPath::sampled})
    if (s == to_string(p)) return p;
  throw ConfigError("transport.path", "unknown moment path '" + s + "'");
}

struct StateSpec {
  StateKind kind = StateKind::delta;
  long site = 0;            // delta: lattice label
  std::size_t index = 0;    // eigenvector: position in ascending eigenvalue order
  std::string path;         // file: one amplitude per site
  ConstructionSpec construction;  // low_dim, high_dim, divergent
  friend bool operator==(const StateSpec&, const StateSpec&) = default;
};

/// Optional closed interval; unset means "derive from the data".
struct Interval {
  std::optional<double> lo, hi;
  bool automatic() const { return !lo.has_value(); }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct TransportSpec {
  std::vector<double> p_grid = {1.0, 2.0};
  double t_min = 1.0;
  std::optional<double> t_max;  // unset: ballistic cap N/(4v)
  int per_decade = 16;
  Interval window;              // unset: [10, t_max]
  MomentPath path = MomentPath::automatic;
  std::size_t samples = 64;
  double quasiballistic_tol = 0.15;
  double bound_tol = 0.15;
  friend bool operator==(const TransportSpec&, const TransportSpec&) = default;
};

struct DimensionSpec {
  std::vector<double> q_grid = {1.0 / 3.0, 0.5};
  Interval window;  // unset: matched to the transport window through ε = 1/t
  std::vector<DimensionRoute> routes = {DimensionRoute::ball, DimensionRoute::mean_q};
  friend bool operator==(const DimensionSpec&, const DimensionSpec&) = default;
};

struct SpacingSpec {
  std::vector<double> alphas;  // empty: stage disabled
  Interval interval;           // unset: the whole spectrum
  friend bool operator==(const SpacingSpec&, const SpacingSpec&) = default;
};

struct ExperimentConfig {
  ModelSpec model;
  StateSpec state;
  DimensionSpec dimensions;
  TransportSpec transport;
  SpacingSpec spacing;
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = "out";
  unsigned threads = 1;

  /// Throws ConfigError naming the first offending field.
  void validate() const {
    model.validate();
    if (dimensions.q_grid.empty()) throw ConfigError("dimensions.q_grid", "needs at least one q");
    for (double q : dimensions.q_grid)
      if (!(q > 0.0 && q < 1.0)) throw ConfigError("dimensions.q_grid", "every q must lie in (0,1), got " + std::to_string(q));
    if (dimensions.routes.empty()) throw ConfigError("dimensions.routes", "needs at least one route");
    if (transport.p_grid.empty()) throw ConfigError("transport.p_grid", "needs at least one p");
    for (double p : transport.p_grid) {
      if (!(p > 0.0) || !std::isfinite(p)) throw ConfigError("transport.p_grid", "every p must be positive");
      const double q = 1.0 / (1.0 + p);
      const bool has = std::any_of(dimensions.q_grid.begin(), dimensions.q_grid.end(),
                                   [q](double x) { return std::abs(x - q) <= 1e-12; });
      if (!has) throw ConfigError("dimensions.q_grid", "must contain 1/(1+p) = " + std::to_string(q) + " for p = " + std::to_string(p));
    }
    if (!(transport.t_min > 0.0)) throw ConfigError("transport.t_min", "must be positive");
    if (transport.t_max && !(*transport.t_max > transport.t_min)) throw ConfigError("transport.t_max", "must exceed t_min");
    if (transport.per_decade < 1) throw ConfigError("transport.per_decade", "must be at least 1");
    if (transport.samples < 2 || transport.samples % 2) throw ConfigError("transport.samples", "must be even and at least 2");
    if (!(transport.quasiballistic_tol >= 0.0)) throw ConfigError("transport.tolerance", "must be nonnegative");
    if (!(transport.bound_tol >= 0.0)) throw ConfigError("transport.bound_tolerance", "must be nonnegative");
    auto check_interval = [](const Interval& w, const char* field) {
      if (w.lo.has_value() != w.hi.has_value() || (w.lo && !(*w.lo > 0.0 || std::string(field) == "spacing.interval")) ||
          (w.lo && !(*w.lo < *w.hi)))
        throw ConfigError(field, "needs lo < hi");
    };
    check_interval(transport.window, "transport.window");
    check_interval(dimensions.window, "dimensions.window");
    check_interval(spacing.interval, "spacing.interval");
    for (double a : spacing.alphas)
      if (!(a > 0.0)) throw ConfigError("spacing.alphas", "every alpha must be positive");
    if (seeds.empty()) throw ConfigError("run.seeds", "needs at least one seed");
    if (threads < 1) throw ConfigError("run.threads", "must be at least 1");
    if (output_dir.empty()) throw ConfigError("run.output_dir", "must not be empty");
    switch (state.kind) {
      case StateKind::delta:
        if (model.origin() + state.site < 0 || model.origin() + state.site >= static_cast<long>(model.size))
          throw ConfigError("state.site", "label outside the chain");
        break;
      case StateKind::eigenvector:
        if (state.index >= model.size) throw ConfigError("state.index", "index outside the spectrum");
        break;
      case StateKind::file:
        if (state.path.empty()) throw ConfigError("state.path", "file state needs a path");
        break;
      case StateKind::low_dim:
      case StateKind::high_dim:
      case StateKind::divergent:
        state.construction.validate(dimensions.q_grid);
        if (state.construction.head.size() > model.size) throw ConfigError("state.head", "head longer than the chain");
        if (state.kind == StateKind::divergent && !(2 * state.construction.j < static_cast<long>(model.size)))
          throw ConfigError("state.j", "cutoff must be below N/2");
        break;
    }
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class T, class F>
std::string fmt_list(const std::vector<T>& v, F&& f) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + f(v[i]);
  return s + "]";
}

inline std::string fmt_doubles(const std::vector<double>& v) { return fmt_list(v, [](double x) { return fmt(x); }); }

inline std::string fmt_interval(const Interval& w) {
  return w.automatic() ? "auto" : fmt_doubles({*w.lo, *w.hi});
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t\r\n") - a + 1);
}

inline double parse_double(const std::string& text, const std::string& field) {
  const std::string s = trim(text);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field, "expected a number, got '" + s + "'");
  }
}

inline long long parse_integer(const std::string& text, const std::string& field) {
  const std::string s = trim(text);
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field, "expected an integer, got '" + s + "'");
  }
}

inline std::vector<std::string> parse_list(const std::string& text, const std::string& field) {
  const std::string s = trim(text);
  if (s.size() < 2 || s.front() != '[' || s.back() != ']') throw ConfigError(field, "expected a bracketed list, got '" + s + "'");
  std::vector<std::string> out;
  const std::string body = trim(s.substr(1, s.size() - 2));
  if (body.empty()) return out;
  std::stringstream ss(body);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (item.empty()) throw ConfigError(field, "empty list element");
    out.push_back(item);
  }
  return out;
}

inline std::vector<double> parse_doubles(const std::string& text, const std::string& field) {
  std::vector<double> out;
  for (const auto& s : parse_list(text, field)) out.push_back(parse_double(s, field));
  return out;
}

inline Interval parse_interval(const std::string& text, const std::string& field) {
  if (trim(text) == "auto") return {};
  const auto v = parse_doubles(text, field);
  if (v.size() != 2) throw ConfigError(field, "expected 'auto' or [lo, hi]");
  return {v[0], v[1]};
}

inline DimensionRoute route_from_string(const std::string& s) {
  for (auto r : {DimensionRoute::ball, DimensionRoute::mean_q, DimensionRoute::correlation})
    if (s == to_string(r)) return r;
  throw ConfigError("dimensions.routes", "unknown route '" + s + "'");
}

/// Reads keys of one section, rejecting unknown ones.
class Section {
 public:
  Section(const boost::property_tree::ptree& root, std::string name, std::set<std::string> known)
      : name_(std::move(name)) {
    if (const auto child = root.get_child_optional(name_)) {
      tree_ = *child;
      for (const auto& [key, value] : tree_) {
        if (!value.empty()) throw ConfigError(name_ + "." + key, "nested keys are not supported");
        if (!known.count(key)) throw ConfigError(name_ + "." + key, "unknown key");
      }
    }
  }
  std::optional<std::string> get(const std::string& key) const {
    if (auto v = tree_.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '\0'))) return trim(*v);
    return std::nullopt;
  }
  std::string field(const std::string& key) const { return name_ + "." + key; }

 private:
  std::string name_;
  boost::property_tree::ptree tree_;
};

}  // namespace detail

inline std::string render(const ExperimentConfig& c) {
  using detail::fmt;
  using detail::fmt_doubles;
  std::ostringstream os;
  const auto& m = c.model;
  const auto& s = c.state;
  const auto& k = s.construction;
  const auto& t = c.transport;
  os << "[model]\n"
     << "family = " << to_string(m.family) << "\n"
     << "size = " << m.size << "\n"
     << "origin = " << (m.index_origin ? std::to_string(*m.index_origin) : std::string("auto")) << "\n"
     << "coupling = " << fmt(m.coupling) << "\n"
     << "field = " << fmt(m.field) << "\n"
     << "background = " << fmt_doubles(m.background) << "\n"
     << "hopping = " << fmt(m.hopping) << "\n"
     << "coefficients = " << fmt_doubles(m.potential_coefficients) << "\n\n";
  os << "[state]\n"
     << "kind = " << to_string(s.kind) << "\n"
     << "site = " << s.site << "\n"
     << "index = " << s.index << "\n"
     << "path = " << s.path << "\n"
     << "head = " << fmt_doubles(k.head) << "\n"
     << "tail_exponent = " << fmt(k.tail_exponent) << "\n"
     << "q = " << fmt(k.q) << "\n"
     << "n = " << k.n << "\n"
     << "alpha = " << fmt(k.alpha) << "\n"
     << "r_k = " << k.r_k << "\n"
     << "p = " << fmt(k.p) << "\n"
     << "j = " << k.j << "\n\n";
  os << "[dimensions]\n"
     << "q_grid = " << fmt_doubles(c.dimensions.q_grid) << "\n"
     << "window = " << detail::fmt_interval(c.dimensions.window) << "\n"
     << "routes = " << detail::fmt_list(c.dimensions.routes, [](DimensionRoute r) { return std::string(to_string(r)); })
     << "\n\n";
  os << "[transport]\n"
     << "p_grid = " << fmt_doubles(t.p_grid) << "\n"
     << "t_min = " << fmt(t.t_min) << "\n"
     << "t_max = " << (t.t_max ? fmt(*t.t_max) : std::string("auto")) << "\n"
     << "per_decade = " << t.per_decade << "\n"
     << "window = " << detail::fmt_interval(t.window) << "\n"
     << "path = " << to_string(t.path) << "\n"
     << "samples = " << t.samples << "\n"
     << "tolerance = " << fmt(t.quasiballistic_tol) << "\n"
     << "bound_tolerance = " << fmt(t.bound_tol) << "\n\n";
  os << "[spacing]\n"
     << "alphas = " << fmt_doubles(c.spacing.alphas) << "\n"
     << "interval = " << detail::fmt_interval(c.spacing.interval) << "\n\n";
  os << "[run]\n"
     << "seeds = " << detail::fmt_list(c.seeds, [](std::uint64_t x) { return std::to_string(x); }) << "\n"
     << "output_dir = " << c.output_dir << "\n"
     << "threads = " << c.threads << "\n";
  return os.str();
}

/// Parses and validates. Absent keys keep their defaults; unknown keys are errors.
inline ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  using namespace detail;
  pt::ptree root;
  try {
    std::istringstream is(text);
    pt::ini_parser::read_ini(is, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("", std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [name, child] : root)
    if (!std::set<std::string>{"model", "state", "dimensions", "transport", "spacing", "run"}.count(name))
      throw ConfigError(name, child.empty() ? "keys must sit inside a section" : "unknown section");

  ExperimentConfig c;
  {
    Section s(root, "model", {"family", "size", "origin", "coupling", "field", "background", "hopping", "coefficients"});
    auto& m = c.model;
    if (auto v = s.get("family")) m.family = model_family_from_string(*v);
    if (auto v = s.get("size")) {
      const auto n = parse_integer(*v, s.field("size"));
      if (n < 2) throw ConfigError("model.size", "need at least 2 sites");
      m.size = static_cast<std::size_t>(n);
    }
    if (auto v = s.get("origin"); v && *v != "auto") m.index_origin = parse_integer(*v, s.field("origin"));
    if (auto v = s.get("coupling")) m.coupling = parse_double(*v, s.field("coupling"));
    if (auto v = s.get("field")) m.field = parse_double(*v, s.field("field"));
    if (auto v = s.get("background")) m.background = parse_doubles(*v, s.field("background"));
    if (auto v = s.get("hopping")) m.hopping = parse_double(*v, s.field("hopping"));
    if (auto v = s.get("coefficients")) m.potential_coefficients = parse_doubles(*v, s.field("coefficients"));
  }
  {
    Section s(root, "state", {"kind", "site", "index", "path", "head", "tail_exponent", "q", "n", "alpha", "r_k", "p", "j"});
    auto& st = c.state;
    auto& k = st.construction;
    if (auto v = s.get("kind")) st.kind = state_kind_from_string(*v);
    if (auto v = s.get("site")) st.site = static_cast<long>(parse_integer(*v, s.field("site")));
    if (auto v = s.get("index")) {
      const auto i = parse_integer(*v, s.field("index"));
      if (i < 0) throw ConfigError("state.index", "must be nonnegative");
      st.index = static_cast<std::size_t>(i);
    }
    if (auto v = s.get("path")) st.path = *v;
    if (auto v = s.get("head")) k.head = parse_doubles(*v, s.field("head"));
    if (auto v = s.get("tail_exponent")) k.tail_exponent = parse_double(*v, s.field("tail_exponent"));
    if (auto v = s.get("q")) k.q = parse_double(*v, s.field("q"));
    if (auto v = s.get("n")) k.n = static_cast<int>(parse_integer(*v, s.field("n")));
    if (auto v = s.get("alpha")) k.alpha = parse_double(*v, s.field("alpha"));
    if (auto v = s.get("r_k")) {
      const auto r = parse_integer(*v, s.field("r_k"));
      if (r < 0) throw ConfigError("state.r_k", "must be nonnegative");
      k.r_k = static_cast<std::size_t>(r);
    }
    if (auto v = s.get("p")) k.p = parse_double(*v, s.field("p"));
    if (auto v = s.get("j")) k.j = static_cast<long>(parse_integer(*v, s.field("j")));
    switch (st.kind) {
      case StateKind::low_dim: k.kind = ConstructionKind::low_dim; break;
      case StateKind::high_dim: k.kind = ConstructionKind::high_dim; break;
      case StateKind::divergent: k.kind = ConstructionKind::divergent_moment; break;
      default: k.kind = ConstructionKind::low_dim; break;
    }
  }
  {
    Section s(root, "dimensions", {"q_grid", "window", "routes"});
    if (auto v = s.get("q_grid")) c.dimensions.q_grid = parse_doubles(*v, s.field("q_grid"));
    if (auto v = s.get("window")) c.dimensions.window = parse_interval(*v, s.field("window"));
    if (auto v = s.get("routes")) {
      c.dimensions.routes.clear();
      for (const auto& r : parse_list(*v, s.field("routes"))) c.dimensions.routes.push_back(route_from_string(r));
    }
  }
  {
    Section s(root, "transport",
              {"p_grid", "t_min", "t_max", "per_decade", "window", "path", "samples", "tolerance", "bound_tolerance"});
    auto& t = c.transport;
    if (auto v = s.get("p_grid")) t.p_grid = parse_doubles(*v, s.field("p_grid"));
    if (auto v = s.get("t_min")) t.t_min = parse_double(*v, s.field("t_min"));
    if (auto v = s.get("t_max"); v && *v != "auto") t.t_max = parse_double(*v, s.field("t_max"));
    if (auto v = s.get("per_decade")) t.per_decade = static_cast<int>(parse_integer(*v, s.field("per_decade")));
    if (auto v = s.get("window")) t.window = parse_interval(*v, s.field("window"));
    if (auto v = s.get("path")) t.path = moment_path_from_string(*v);
    if (auto v = s.get("samples")) {
      const auto n = parse_integer(*v, s.field("samples"));
      if (n < 0) throw ConfigError("transport.samples", "must be positive");
      t.samples = static_cast<std::size_t>(n);
    }
    if (auto v = s.get("tolerance")) t.quasiballistic_tol = parse_double(*v, s.field("tolerance"));
    if (auto v = s.get("bound_tolerance")) t.bound_tol = parse_double(*v, s.field("bound_tolerance"));
  }
  {
    Section s(root, "spacing", {"alphas", "interval"});
    if (auto v = s.get("alphas")) c.spacing.alphas = parse_doubles(*v, s.field("alphas"));
    if (auto v = s.get("interval")) c.spacing.interval = parse_interval(*v, s.field("interval"));
  }
  {
    Section s(root, "run", {"seeds", "output_dir", "threads"});
    if (auto v = s.get("seeds")) {
      c.seeds.clear();
      for (const auto& x : parse_list(*v, s.field("seeds"))) {
        const auto n = parse_integer(x, s.field("seeds"));
        if (n < 0) throw ConfigError("run.seeds", "seeds must be nonnegative");
        c.seeds.push_back(static_cast<std::uint64_t>(n));
      }
    }
    if (auto v = s.get("output_dir")) c.output_dir = *v;
    if (auto v = s.get("threads")) {
      const auto n = parse_integer(*v, s.field("threads"));
      if (n < 1) throw ConfigError("run.threads", "must be at least 1");
      c.threads = static_cast<unsigned>(n);
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// FNV-1a of the rendered config, 16 hex digits. run.output_dir and run.threads do
/// not change any result and are left out.
inline std::string config_hash(const ExperimentConfig& c) {
  ExperimentConfig k = c;
  k.output_dir = "-";
  k.threads = 1;
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : render(k)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ppdyn
