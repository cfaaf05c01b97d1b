#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gchain/chain.hpp"
#include "gchain/empsq.hpp"
#include "gchain/errors.hpp"
#include "gchain/io.hpp"
#include "gchain/metric.hpp"
#include "gchain/net.hpp"
#include "gchain/procsim.hpp"
#include "gchain/sensing.hpp"
#include "gchain/young.hpp"

namespace gchain::cli {

enum class Command { Net, Modulus, PropVerify, Empirical, Sensing, Calibrate };

inline const std::map<std::string, Command>& command_names() {
  static const std::map<std::string, Command> names{
      {"net", Command::Net},           {"modulus", Command::Modulus}, {"prop-verify", Command::PropVerify},
      {"empirical", Command::Empirical}, {"sensing", Command::Sensing}, {"calibrate", Command::Calibrate}};
  return names;
}

inline std::string command_name(Command c) {
  for (const auto& [k, v] : command_names())
    if (v == c) return k;
  return "?";
}

inline Command parse_command(const std::string& s) {
  const auto& names = command_names();
  const auto it = names.find(s);
  if (it == names.end()) throw ConfigError("unknown command: " + s);
  return it->second;
}

struct ExperimentConfig {
  Command command = Command::Net;
  Json params = Json::object();
  std::filesystem::path base_dir = ".";
  std::optional<std::uint64_t> seed_override;
  unsigned threads = 1;
};

struct Check {
  bool pass = true;
  bool asserted = true;
  Json detail = Json::object();
};

struct RunReport {
  Command command = Command::Net;
  Json config = Json::object();
  std::string input_hash;
  std::map<std::string, Check> checks;
  Json summary = Json::object();
  std::map<std::string, Table> tables;
  std::map<std::string, std::string> files;  // extra outputs: name -> content
  double wall_seconds = 0.0;

  [[nodiscard]] bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& kv) { return !kv.second.asserted || kv.second.pass; });
  }

  [[nodiscard]] Json to_json() const {
    Json j;
    j["command"] = command_name(command);
    j["config"] = config;
    j["input_hash"] = input_hash;
    Json cj = Json::object();
    for (const auto& [name, c] : checks) {
      Json e = c.detail;
      e["pass"] = c.pass;
      e["asserted"] = c.asserted;
      cj[name] = e;
    }
    j["checks"] = cj;
    j["summary"] = summary;
    Json names = Json::array();
    for (const auto& [name, t] : tables) names.push_back(name + ".csv");
    for (const auto& [name, f] : files) names.push_back(name);
    j["outputs"] = names;
    j["pass"] = all_pass();
    return j;
  }
};

// ---------------------------------------------------------------------------
// Config access with unknown-field rejection

class Fields {
 public:
  Fields(const Json& j, std::string context) : j_(j), ctx_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(ctx_ + ": expected an object");
  }

  [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }

  const Json& raw(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError(ctx_ + ": missing field '" + key + "'");
    return j_.at(key);
  }

  template <class T>
  T req(const std::string& key) {
    return convert<T>(raw(key), key);
  }

  template <class T>
  T opt(const std::string& key, T fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    return convert<T>(j_.at(key), key);
  }

  void done() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError(ctx_ + ": unknown field '" + k + "'");
  }

 private:
  template <class T>
  T convert(const Json& v, const std::string& key) const {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0)) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(ctx_ + ": field '" + key + "' has the wrong type");
    }
  }

  const Json& j_;
  std::string ctx_;
  std::set<std::string> used_;
};

namespace detail {

struct Context {
  const ExperimentConfig& cfg;
  std::uint64_t seed = 0;
  std::vector<std::string> input_hashes;

  std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : cfg.base_dir / path;
  }

  std::string read_input(const std::string& p) {
    const std::string text = read_file(resolve(p));
    input_hashes.push_back(p + ":" + git_blob_hash(text));
    return text;
  }
};

inline std::vector<std::vector<double>> json_matrix(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + ": expected an array of rows");
  std::vector<std::vector<double>> rows;
  for (const auto& r : j) {
    if (!r.is_array()) throw ConfigError(what + ": expected an array of rows");
    std::vector<double> row;
    for (const auto& v : r) {
      if (!v.is_number()) throw ConfigError(what + ": non-numeric entry");
      row.push_back(v.get<double>());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline YoungFunction parse_psi(const Json& j) {
  Fields f(j, "psi");
  const auto kind = f.req<std::string>("kind");
  std::optional<YoungFunction> psi;
  try {
    if (kind == "phi_p") psi = YoungFunction::phi_p(f.req<double>("p"));
    else if (kind == "bernstein") psi = YoungFunction::bernstein(f.req<double>("N"));
    else throw ConfigError("psi: unknown kind '" + kind + "'");
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("psi: ") + e.what());
  }
  f.done();
  return *psi;
}

inline Json psi_json(const YoungFunction& psi) {
  if (psi.kind() == YoungFunction::Kind::PhiP) return {{"kind", "phi_p"}, {"p", psi.parameter()}};
  return {{"kind", "bernstein"}, {"N", psi.parameter()}};
}

inline DistanceMatrix parse_single_metric(Fields& f, Context& ctx, std::vector<std::string>& ids) {
  std::optional<DistanceMatrix> d;
  int sources = 0;
  if (f.has("distances")) {
    ++sources;
    const auto text = ctx.read_input(f.req<std::string>("distances"));
    d = DistanceMatrix::from_rows(parse_numeric_csv(text));
  }
  if (f.has("matrix")) {
    ++sources;
    d = DistanceMatrix::from_rows(json_matrix(f.raw("matrix"), "matrix"));
  }
  if (f.has("points")) {
    ++sources;
    const auto pts = json_matrix(f.raw("points"), "points");
    const auto metric = f.opt<std::string>("metric", "euclidean");
    const double scale = f.opt<double>("scale", 1.0);
    if (metric == "euclidean") d = euclidean_distances(pts, scale);
    else if (metric == "sup") d = sup_distances(pts, scale);
    else throw ConfigError("space: unknown metric '" + metric + "'");
  }
  if (sources != 1) throw ConfigError("space: give exactly one of 'distances', 'matrix', 'points'");
  if (f.has("ids")) {
    for (const auto& v : f.raw("ids")) {
      if (!v.is_string()) throw ConfigError("space: ids must be strings");
      ids.push_back(v.get<std::string>());
    }
  }
  return std::move(*d);
}

struct ParsedSpace {
  MergedSpace merged;
  std::size_t original_size = 0;
};

inline ParsedSpace parse_space(const Json& j, Context& ctx) {
  Fields f(j, "space");
  std::vector<std::string> ids;
  FiniteMetricSpace space;
  if (f.has("first")) {
    Fields a(f.raw("first"), "space.first");
    Fields b(f.raw("second"), "space.second");
    std::vector<std::string> ignored;
    auto d1 = parse_single_metric(a, ctx, ids);
    auto d2 = parse_single_metric(b, ctx, ignored);
    a.done();
    b.done();
    const double p1 = f.req<double>("p1");
    const double p2 = f.req<double>("p2");
    try {
      space = FiniteMetricSpace::two(std::move(d1), std::move(d2), p1, p2, ids);
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
  } else {
    auto d = parse_single_metric(f, ctx, ids);
    space = FiniteMetricSpace::one(std::move(d), ids);
  }
  f.done();
  if (space.size() == 0) throw DataError("space has no points");
  const std::size_t n = space.size();
  return {merge_coincident(space), n};
}

inline Check make_check(bool pass, Json detail = Json::object(), bool asserted = true) {
  return {pass, asserted, std::move(detail)};
}

inline void mean_stderr(const std::vector<double>& xs, double& mean, double& se) {
  const double n = static_cast<double>(xs.size());
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  se = xs.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
}

// ---------------------------------------------------------------------------
// net

/// Exact net validity: budgets, nesting, coverage and projection optimality.
inline bool net_is_valid(const AdmissibleNet& net) {
  const std::size_t top = net.terminal_level();
  if (net.level(0).size() != 1) return false;
  if (net.level(top).size() != net.size()) return false;
  for (std::size_t n = 0; n <= top; ++n) {
    const auto lvl = net.level(n);
    if (static_cast<double>(lvl.size()) > net.budget(n)) return false;
    if (n > 0)
      for (std::size_t t : net.level(n - 1))
        if (!net.contains(n, t)) return false;
    for (std::size_t t = 0; t < net.size(); ++t) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t u : lvl) best = std::min(best, net.build_distance(t, u));
      if (net.dist(n, t) != best) return false;
      if (net.build_distance(t, net.projection(n, t)) != best) return false;
      if (!net.contains(n, net.projection(n, t))) return false;
    }
  }
  return true;
}

inline Table levels_table(const AdmissibleNet& net) {
  Table t{{"level", "size", "budget", "covering_radius"}, {}};
  for (std::size_t n = 0; n <= net.terminal_level(); ++n) {
    double radius = 0.0;
    for (std::size_t p = 0; p < net.size(); ++p) radius = std::max(radius, net.dist(n, p));
    t.add({static_cast<long long>(n), static_cast<long long>(net.level(n).size()), net.budget(n), radius});
  }
  return t;
}

inline void run_net(Fields& f, Context& ctx, RunReport& rep) {
  auto parsed = parse_space(f.raw("space"), ctx);
  const auto psi = f.has("psi") ? parse_psi(f.raw("psi")) : YoungFunction::phi_p(2.0);
  std::optional<std::string> import_path;
  if (f.has("net")) import_path = f.req<std::string>("net");
  f.done();
  const auto& space = parsed.merged.space;
  const AdmissibleNet net = import_path ? net_from_json(Json::parse(ctx.read_input(*import_path), nullptr, false), space, psi)
                                        : build_net(space, psi);
  rep.files["net.json"] = dump_json(net_to_json(net));
  rep.tables["levels"] = levels_table(net);
  rep.summary["points"] = space.size();
  rep.summary["merged_points"] = parsed.original_size - space.size();
  rep.summary["terminal_level"] = net.terminal_level();
  rep.summary["gamma2_upper"] = gamma2_upper(net);
  rep.summary["psi"] = psi_json(psi);
  rep.checks["net_valid"] = make_check(net_is_valid(net));
}

// ---------------------------------------------------------------------------
// modulus

inline void run_profile(Fields& f, RunReport& rep) {
  Fields p(f.raw("profile"), "profile");
  std::vector<double> hs;
  const Json& h = p.raw("H");
  if (h.is_number()) hs.push_back(h.get<double>());
  else if (h.is_array())
    for (const auto& v : h) {
      if (!v.is_number()) throw ConfigError("profile: H must be numbers");
      hs.push_back(v.get<double>());
    }
  else throw ConfigError("profile: H must be a number or an array");
  const auto grid = p.opt<std::size_t>("grid_size", 256);
  p.done();
  f.done();
  for (double hv : hs)
    if (!(hv > 0.0 && hv < 1.0)) throw ConfigError("profile: H must lie in (0, 1)");
  Json per_h = Json::array();
  bool band_ok = true;
  for (double hv : hs) {
    const auto rows = fbm_modulus_profile(hv, grid);
    Table t{{"s", "t", "dist", "tau", "ratio"}, {}};
    double rmin = std::numeric_limits<double>::infinity();
    double rmax = 0.0;
    bool finite = true;
    double small_gap_ratio = 0.0;
    std::size_t small_count = 0;
    const double min_gap = 1.0 / static_cast<double>(grid - 1);
    for (const auto& r : rows) {
      t.add({r.s, r.t, r.dist, r.tau, r.ratio});
      finite = finite && std::isfinite(r.ratio) && r.ratio > 0.0;
      rmin = std::min(rmin, r.ratio);
      rmax = std::max(rmax, r.ratio);
      if (r.t - r.s < 1.5 * min_gap) {
        small_gap_ratio += r.ratio;
        ++small_count;
      }
    }
    char name[32];
    std::snprintf(name, sizeof name, "profile_H%.2f", hv);
    rep.tables[name] = std::move(t);
    band_ok = band_ok && finite && rmax / rmin <= 8.0;
    per_h.push_back({{"H", hv},
                     {"ratio_min", rmin},
                     {"ratio_max", rmax},
                     {"band", rmax / rmin},
                     {"mean_ratio_smallest_gap", small_count ? small_gap_ratio / static_cast<double>(small_count) : 0.0}});
  }
  rep.summary["profiles"] = per_h;
  rep.checks["profile_band_within_8"] = make_check(band_ok, {{"limit", 8.0}});
}

inline void run_modulus(Fields& f, Context& ctx, RunReport& rep) {
  if (f.has("profile")) {
    run_profile(f, rep);
    return;
  }
  auto parsed = parse_space(f.raw("space"), ctx);
  const auto psi = f.has("psi") ? parse_psi(f.raw("psi")) : YoungFunction::phi_p(2.0);
  f.done();
  const auto& space = parsed.merged.space;
  const auto net = build_net(space, psi);
  const std::size_t n = space.size();
  rep.summary["points"] = n;
  rep.summary["terminal_level"] = net.terminal_level();
  if (!space.two_distance()) {
    Table t{{"s", "t", "dist", "k", "tau", "tau_bar"}, {}};
    bool sandwich = true;
    std::vector<double> tau_m(n * n, 0.0);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t u = s + 1; u < n; ++u) {
        const auto m = modulus(net, s, u);
        tau_m[s * n + u] = tau_m[u * n + s] = m.tau;
        sandwich = sandwich && 0.5 * m.tau_bar <= m.tau && m.tau <= m.tau_bar;
        t.add({space.points[s], space.points[u], space.d1(s, u), static_cast<long long>(m.k), m.tau, m.tau_bar});
      }
    rep.tables["modulus"] = std::move(t);
    rep.checks["tau_sandwich"] = make_check(sandwich);
    if (n <= 200) {
      bool tri = true;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t c = 0; c < n; ++c) {
            const double rhs = tau_m[a * n + b] + tau_m[b * n + c];
            tri = tri && tau_m[a * n + c] <= rhs + 1e-12 * std::max(1.0, rhs);
          }
      rep.checks["tau_triangle"] = make_check(tri, {{"tolerance", 1e-12}});
    }
  } else {
    Table t{{"s", "t", "d1", "d2", "k1", "k2", "k", "tau1", "tau2", "tau_bar", "dbar1", "dbar2", "upper_bound_correction"}, {}};
    bool k_between = true;
    bool tau_sum_ok = true;
    bool upper_ok = true;
    bool pair_ok = true;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t u = s + 1; u < n; ++u) {
        const auto r = two_modulus(net, s, u);
        k_between = k_between && std::min(r.k1, r.k2) <= r.k && r.k <= std::max(r.k1, r.k2);
        tau_sum_ok = tau_sum_ok && r.tau1 + r.tau2 <= r.tau_bar * (1.0 + 1e-12);
        upper_ok = upper_ok && r.tau_bar <= (2.0 * (r.tau1 + r.tau2) + r.upper_bound_correction) * (1.0 + 1e-12);
        const double factor = std::max(std::exp2(-space.p1 * static_cast<double>(r.k)), std::exp2(-space.p2 * static_cast<double>(r.k)));
        pair_ok = pair_ok && r.dbar[0] + r.dbar[1] <= factor * r.tau_bar * (1.0 + 1e-12);
        t.add({space.points[s], space.points[u], space.d1(s, u), (*space.d2)(s, u), static_cast<long long>(r.k1),
               static_cast<long long>(r.k2), static_cast<long long>(r.k), r.tau1, r.tau2, r.tau_bar, r.dbar[0],
               r.dbar[1], r.upper_bound_correction});
      }
    rep.tables["modulus"] = std::move(t);
    rep.checks["k_between_single_levels"] = make_check(k_between);
    rep.checks["tau_sum_below_tau_bar"] = make_check(tau_sum_ok);
    rep.checks["tau_bar_upper_bound"] = make_check(upper_ok);
    rep.checks["dbar_pair_bound"] = make_check(pair_ok);
  }
}

// ---------------------------------------------------------------------------
// prop-verify

struct ModelSetup {
  ProcessModel model;
  bool two = false;
  std::size_t calibration_draws = 100000;
};

inline std::vector<std::vector<double>> random_coefficients(std::size_t points, std::size_t dim, std::uint64_t seed) {
  std::vector<std::vector<double>> out(points, std::vector<double>(dim));
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < points; ++i) {
    CounterRng rng = CounterRng(seed).substream(i);
    for (double& v : out[i]) v = s * rng.normal();
  }
  return out;
}

inline ModelSetup parse_model(Fields& f, Context& ctx) {
  const auto kind = f.req<std::string>("model");
  ModelSetup setup;
  if (kind == "fbm") {
    const double h = f.req<double>("H");
    if (!(h > 0.0 && h < 1.0)) throw ConfigError("H must lie in (0, 1)");
    const auto g = f.opt<std::size_t>("grid_size", 64);
    if (g < 1) throw ConfigError("grid_size must be positive");
    setup.model = Fbm{h, uniform_grid(g)};
  } else if (kind == "gaussian") {
    const Json& c = f.raw("covariance");
    std::vector<std::vector<double>> rows;
    if (c.is_string()) rows = parse_numeric_csv(ctx.read_input(c.get<std::string>()));
    else rows = json_matrix(c, "covariance");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.size()) throw DataError("covariance matrix is not square");
      for (std::size_t j = 0; j < rows.size(); ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    setup.model = GaussianCov{m};
  } else if (kind == "canonical") {
    CanonicalTwoDist c;
    if (f.has("coefficients")) {
      c.coeff_points = json_matrix(f.raw("coefficients"), "coefficients");
      if (c.coeff_points.empty()) throw ConfigError("coefficients: empty");
      c.n_vars = c.coeff_points.front().size();
    } else {
      const auto points = f.opt<std::size_t>("points", 32);
      c.n_vars = f.opt<std::size_t>("dim", 16);
      c.coeff_points = random_coefficients(points, c.n_vars, f.opt<std::uint64_t>("point_seed", 1));
    }
    const auto noise = f.opt<std::string>("noise", "symexp");
    if (noise == "symexp") c.noise = Noise::SymExponential;
    else if (noise == "gaussian") c.noise = Noise::Gaussian;
    else throw ConfigError("noise must be 'symexp' or 'gaussian'");
    setup.calibration_draws = f.opt<std::size_t>("calibration_draws", 100000);
    setup.model = std::move(c);
    setup.two = true;
  } else {
    throw ConfigError("unknown model '" + kind + "'");
  }
  return setup;
}

struct PropRequest {
  Proposition which = Proposition::P1;
  std::size_t m = 0;
  std::optional<double> A;
  std::optional<double> B;
  std::string label;
};

inline std::vector<PropRequest> parse_props(Fields& f, bool two) {
  std::vector<PropRequest> out;
  const Json& arr = f.raw("propositions");
  if (!arr.is_array() || arr.empty()) throw ConfigError("propositions must be a nonempty array");
  for (const auto& item : arr) {
    Fields p(item, "proposition");
    const auto name = p.req<std::string>("name");
    PropRequest r;
    if (name == "P1") r.which = Proposition::P1;
    else if (name == "P2") r.which = Proposition::P2;
    else if (name == "P3") r.which = Proposition::P3;
    else if (name == "P4") r.which = Proposition::P4;
    else throw ConfigError("unknown proposition '" + name + "'");
    const bool pointwise = r.which == Proposition::P1 || r.which == Proposition::P3;
    r.m = pointwise ? p.opt<std::size_t>("m", 0) : 0;
    if (p.has("A")) r.A = p.req<double>("A");
    if (p.has("B")) r.B = p.req<double>("B");
    p.done();
    const bool needs_two = r.which == Proposition::P3 || r.which == Proposition::P4;
    if (needs_two != two) throw ConfigError("proposition " + name + " does not match the model's number of distances");
    r.label = pointwise ? name + "_m" + std::to_string(r.m) : name;
    out.push_back(r);
  }
  return out;
}

inline void run_prop_verify(Fields& f, Context& ctx, RunReport& rep) {
  auto setup = parse_model(f, ctx);
  const auto paths = f.opt<std::size_t>("paths", 1000);
  if (paths < 1) throw ConfigError("paths must be positive");
  if (f.has("psi")) {
    const auto psi = parse_psi(f.raw("psi"));
    const auto expected = setup.two ? YoungFunction::phi_p(1.0) : YoungFunction::phi_p(2.0);
    if (!(psi == expected)) throw ConfigError("psi does not match the model's increment gauge");
  }
  const double k_const = f.opt<double>("K", 1.0);
  std::vector<PropRequest> props;
  if (f.has("propositions")) {
    props = parse_props(f, setup.two);
  } else if (setup.two) {
    props = {{Proposition::P3, 0, {}, {}, "P3_m0"}, {Proposition::P4, 0, {}, {}, "P4"}};
  } else {
    props = {{Proposition::P1, 0, {}, {}, "P1_m0"}, {Proposition::P2, 0, {}, {}, "P2"}};
  }
  f.done();

  const YoungFunction psi = setup.two ? YoungFunction::phi_p(1.0) : YoungFunction::phi_p(2.0);
  std::shared_ptr<FiniteMetricSpace> space;
  if (setup.two) {
    const auto& c = std::get<CanonicalTwoDist>(setup.model);
    const auto cal = calibrate_canonical(c, setup.calibration_draws, mix64(ctx.seed ^ 0xca11b7a7eULL));
    space = std::make_shared<FiniteMetricSpace>(canonical_space(c, cal));
    rep.summary["calibration"] = {{"c1", cal.c1},
                                  {"c2", cal.c2},
                                  {"draws", cal.draws},
                                  {"safety", cal.safety},
                                  {"max_increment_gauge_mean", cal.max_two_gauge_mean}};
    rep.checks["increment_condition_on_calibration_sample"] =
        make_check(cal.max_two_gauge_mean <= 1.0, {{"max_mean", cal.max_two_gauge_mean}});
  } else {
    space = std::make_shared<FiniteMetricSpace>(increment_distance(setup.model, psi));
  }
  for (std::size_t a = 0; a < space->size(); ++a)
    for (std::size_t b = a + 1; b < space->size(); ++b)
      if (space->coincident(a, b)) throw DataError("model has two points with identical increments");
  const auto net = build_net(*space, psi);
  const double p = setup.two ? std::max(space->p1, space->p2) : 1.0;

  std::vector<CertificatePlan> plans;
  std::vector<CertificateConstants> consts;
  for (const auto& r : props) {
    plans.push_back(make_plan(net, r.which, r.m));
    auto c = default_constants(r.which, k_const, p);
    if (r.A) c.A = *r.A;
    if (r.B) c.B = *r.B;
    consts.push_back(c);
  }

  const PathSampler sampler(setup.model);
  const ZMode mode = setup.two ? ZMode::TwoDistMin : ZMode::OneDist;
  std::vector<double> zs(paths);
  std::vector<std::vector<double>> worst(paths, std::vector<double>(props.size()));
  parallel_for(paths, ctx.cfg.threads, [&](std::size_t i) {
    const auto path = sampler.sample(ctx.seed, i);
    const double z = compute_Z(path.values, net, mode).value;
    zs[i] = z;
    for (std::size_t k = 0; k < props.size(); ++k) worst[i][k] = verify_certificate(path.values, plans[k], z, consts[k]).worst_ratio;
  });

  std::vector<std::string> cols{"path", "Z"};
  for (const auto& r : props) cols.push_back("worst_ratio_" + r.label);
  Table t{cols, {}};
  for (std::size_t i = 0; i < paths; ++i) {
    std::vector<Table::Cell> row{static_cast<long long>(i), zs[i]};
    for (double w : worst[i]) row.emplace_back(w);
    t.add(std::move(row));
  }
  rep.tables["paths"] = std::move(t);

  Json per = Json::object();
  for (std::size_t k = 0; k < props.size(); ++k) {
    double w = 0.0;
    std::size_t fails = 0;
    for (std::size_t i = 0; i < paths; ++i) {
      w = std::max(w, worst[i][k]);
      fails += worst[i][k] > 1.0 ? 1 : 0;
    }
    Json d{{"worst_ratio", w},
           {"failing_paths", fails},
           {"constants", {{"A", consts[k].A}, {"B", consts[k].B}, {"K", consts[k].K}, {"p", consts[k].p}}}};
    per[props[k].label] = d;
    rep.checks["certificate_" + props[k].label] = make_check(w <= 1.0, d);
  }
  double mean = 0.0;
  double se = 0.0;
  mean_stderr(zs, mean, se);
  rep.summary["propositions"] = per;
  rep.summary["EZ"] = {{"mean", mean}, {"stderr", se}, {"paths", paths}};
  rep.summary["terminal_level"] = net.terminal_level();
  rep.summary["points"] = space->size();
  rep.checks["mean_Z_at_most_one"] = make_check(mean <= 1.0 + 3.0 * se, {{"mean", mean}, {"stderr", se}});
}

// ---------------------------------------------------------------------------
// calibration file

struct CalibrationFile {
  std::optional<OrderStatCalibration> order;
  std::optional<EmpiricalCalibration> empirical;
};

inline CalibrationFile parse_calibration(const std::string& text) {
  const Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DataError("calibration file is not valid JSON");
  CalibrationFile out;
  try {
    if (j.contains("order_stat")) {
      const auto& o = j.at("order_stat");
      OrderStatCalibration c;
      c.c0 = o.at("c0").get<double>();
      c.c1 = o.at("c1").get<double>();
      c.K0 = o.at("K0").get<double>();
      out.order = c;
    }
    if (j.contains("empirical")) {
      const auto& e = j.at("empirical");
      EmpiricalCalibration c;
      c.K = e.at("K").get<double>();
      c.C = e.at("C").get<double>();
      out.empirical = c;
    }
  } catch (const Json::exception& e) {
    throw DataError(std::string("calibration file: ") + e.what());
  }
  return out;
}

inline LawKind parse_law(const std::string& s) {
  if (s == "gaussian") return LawKind::GaussianIso;
  if (s == "rademacher") return LawKind::Rademacher;
  throw ConfigError("law must be 'gaussian' or 'rademacher'");
}

inline Ensemble parse_ensemble(const std::string& s) {
  if (s == "gaussian") return Ensemble::Gaussian;
  if (s == "rademacher") return Ensemble::Rademacher;
  throw ConfigError("ensemble must be 'gaussian' or 'rademacher'");
}

// ---------------------------------------------------------------------------
// empirical

inline void run_empirical(Fields& f, Context& ctx, RunReport& rep) {
  const auto dim = f.opt<std::size_t>("dim", 8);
  const auto class_size = f.opt<std::size_t>("class_size", 64);
  const auto class_seed = f.opt<std::uint64_t>("class_seed", 1);
  const SampleLaw law{parse_law(f.opt<std::string>("law", "gaussian")), dim};
  const auto n = f.opt<std::size_t>("N", 128);
  const auto reps = f.opt<std::size_t>("reps", 200);
  std::optional<double> a_over, b_over, k_over, c_over;
  if (f.has("constants")) {
    Fields c(f.raw("constants"), "constants");
    if (c.has("A")) a_over = c.req<double>("A");
    if (c.has("B")) b_over = c.req<double>("B");
    if (c.has("K")) k_over = c.req<double>("K");
    if (c.has("C")) c_over = c.req<double>("C");
    c.done();
  }
  std::optional<std::string> cal_path;
  if (f.has("calibration")) cal_path = f.req<std::string>("calibration");
  struct PairTail {
    std::size_t n = 64;
    std::size_t trials = 100000;
    double d = 1.0;
    std::size_t points = 20;
  };
  std::optional<PairTail> pair;
  if (f.has("pair_tail")) {
    Fields p(f.raw("pair_tail"), "pair_tail");
    PairTail pt;
    pt.n = p.opt<std::size_t>("N", 64);
    pt.trials = p.opt<std::size_t>("trials", 100000);
    pt.d = p.opt<double>("d", 1.0);
    pt.points = p.opt<std::size_t>("points", 20);
    p.done();
    pair = pt;
  }
  f.done();
  if (dim < 1 || class_size < 1 || n < 1 || reps < 1) throw ConfigError("dim, class_size, N and reps must be positive");
  if (class_size > kMaxPairClass) throw SizeError("class_size above 256: pair statistics are quadratic, shrink the class");

  const auto cls = random_unit_class(dim, class_size, class_seed, law);
  double k_val = 1.0;
  double c_val = 1.0;
  std::string source = "config";
  if (cal_path && (!k_over || !c_over)) {
    const auto cal = parse_calibration(ctx.read_input(*cal_path));
    if (!cal.empirical) throw DataError("calibration file has no empirical section");
    k_val = cal.empirical->K;
    c_val = cal.empirical->C;
    source = "calibration file";
  } else if (!k_over || !c_over) {
    const auto cal = calibrate_empirical(cls, law, n, 500, mix64(ctx.seed ^ 0xe3b1ULL));
    k_val = cal.K;
    c_val = cal.C;
    source = "measured";
  }
  if (k_over) k_val = *k_over;
  if (c_over) c_val = *c_over;
  auto consts = SquareBoundConstants::closing(k_val, c_val);
  if (a_over) consts.A = *a_over;
  if (b_over) consts.B = *b_over;

  const auto results = verify_square_bound(cls, law, n, reps, ctx.seed, consts, ctx.cfg.threads);
  Table t{{"rep", "sup_S", "bound", "Z1", "Z2", "Z3", "Z", "A_hat", "B_hat", "identity_error", "pass"}, {}};
  bool all = true;
  bool identity = true;
  bool cs = true;
  double max_id = 0.0;
  double a_hat = 0.0;
  double b_hat = 0.0;
  std::vector<double> z1s, z2s, z3s;
  for (const auto& r : results) {
    t.add({static_cast<long long>(r.rep), r.sup_value, r.bound_value, r.z.z1, r.z.z2, r.z.z3, r.z_value, r.a_hat,
           r.b_hat, r.max_identity_error, std::string(r.pass ? "true" : "false")});
    all = all && r.pass;
    identity = identity && r.max_identity_error <= 1e-9;
    cs = cs && r.cauchy_schwarz;
    max_id = std::max(max_id, r.max_identity_error);
    a_hat = std::max(a_hat, r.a_hat);
    b_hat = std::max(b_hat, r.b_hat);
    z1s.push_back(r.z.z1);
    z2s.push_back(r.z.z2);
    z3s.push_back(r.z.z3);
  }
  rep.tables["reps"] = std::move(t);
  rep.summary["class"] = {{"size", cls.size()}, {"dim", dim}, {"scale", cls.scale}, {"alpha", cls.alpha},
                          {"gamma2_upper", results.front().gamma2}};
  rep.summary["constants"] = {{"A", consts.A}, {"B", consts.B}, {"K", consts.K}, {"C", consts.C}, {"source", source}};
  rep.summary["max_A_hat"] = a_hat;
  rep.summary["max_B_hat"] = b_hat;
  rep.checks["bound_holds_every_rep"] = make_check(all, {{"reps", reps}});
  rep.checks["decomposition_identity"] = make_check(identity, {{"max_relative_error", max_id}, {"tolerance", 1e-9}});
  rep.checks["cross_term_cauchy_schwarz"] = make_check(cs);
  for (auto [name, xs] : {std::pair{"Z1", &z1s}, std::pair{"Z2", &z2s}, std::pair{"Z3", &z3s}}) {
    double mean = 0.0;
    double se = 0.0;
    mean_stderr(*xs, mean, se);
    rep.checks[std::string("mean_") + name + "_at_most_one"] =
        make_check(mean <= 1.0 + 3.0 * se, {{"mean", mean}, {"stderr", se}});
  }

  std::vector<double> u_grid;
  for (int i = 0; i <= 10; ++i) u_grid.push_back(0.5 * i);
  const auto tail = square_bound_tail(results, cls, n, consts, u_grid);
  Table tt{{"u", "empirical", "reference"}, {}};
  bool dom = true;
  for (const auto& r : tail) {
    tt.add({r.u, r.empirical, r.bound});
    dom = dom && r.empirical <= r.bound;
  }
  rep.tables["square_bound_tail"] = std::move(tt);
  rep.checks["sup_tail_below_reference"] = make_check(dom, {}, false);

  if (pair) {
    const Eigen::MatrixXd dir = Eigen::MatrixXd::Constant(1, static_cast<Eigen::Index>(dim), 1.0);
    const double scale = calibrate_scale(dir, law, 100000, mix64(ctx.seed ^ 0x9a1cULL));
    const auto rows = bernstein_pair_tail(pair->d, pair->n, law, pair->trials, mix64(ctx.seed + 17), scale, pair->points);
    Table pt{{"u", "empirical", "bound"}, {}};
    bool ok = true;
    for (const auto& r : rows) {
      pt.add({r.u, r.empirical, r.bound});
      ok = ok && r.empirical <= r.bound;
    }
    rep.tables["pair_tail"] = std::move(pt);
    rep.summary["pair_tail"] = {{"N", pair->n}, {"trials", pair->trials}, {"d", pair->d}, {"scale", scale}};
    rep.checks["pair_tail_below_bound"] = make_check(ok);
  }
}

// ---------------------------------------------------------------------------
// sensing

inline std::vector<std::size_t> size_list(const Json& j, const std::string& what) {
  std::vector<std::size_t> out;
  if (!j.is_array() || j.empty()) throw ConfigError(what + " must be a nonempty array");
  for (const auto& v : j) {
    if (!v.is_number_integer() || v.get<long long>() < 1) throw ConfigError(what + " entries must be positive integers");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

inline void run_sensing(Fields& f, Context& ctx, RunReport& rep) {
  const auto n = f.opt<std::size_t>("N", 128);
  const auto M = f.opt<std::size_t>("M", 32);
  const auto m = f.opt<std::size_t>("m", 2);
  const auto ensemble = parse_ensemble(f.opt<std::string>("ensemble", "gaussian"));
  const auto matrices = f.opt<std::size_t>("matrices", 500);
  const auto lower_trials = f.opt<std::size_t>("lower_trials", 20000);
  std::optional<std::string> cal_path;
  if (f.has("calibration")) cal_path = f.req<std::string>("calibration");
  RipConstants rc;
  std::optional<double> c0_over, k0_over;
  if (f.has("constants")) {
    Fields c(f.raw("constants"), "constants");
    rc.A = c.opt<double>("A", 1.0);
    rc.B = c.opt<double>("B", 1.0);
    if (c.has("c0")) c0_over = c.req<double>("c0");
    if (c.has("K0")) k0_over = c.req<double>("K0");
    c.done();
  }
  struct ExactCheck {
    std::size_t n = 8, M = 12, matrices = 50;
    std::vector<std::size_t> ms{1, 2};
  };
  std::optional<ExactCheck> exact;
  if (f.has("exact_check")) {
    Fields e(f.raw("exact_check"), "exact_check");
    ExactCheck ec;
    ec.n = e.opt<std::size_t>("N", 8);
    ec.M = e.opt<std::size_t>("M", 12);
    ec.matrices = e.opt<std::size_t>("matrices", 50);
    if (e.has("m")) ec.ms = size_list(e.raw("m"), "exact_check.m");
    e.done();
    exact = ec;
  }
  struct OrderCheck {
    std::vector<std::size_t> ks{1, 2, 4, 8}, Ms{16, 64, 256};
    std::size_t trials = 10000;
  };
  std::optional<OrderCheck> order;
  if (f.has("order_stat")) {
    Fields o(f.raw("order_stat"), "order_stat");
    OrderCheck oc;
    if (o.has("k")) oc.ks = size_list(o.raw("k"), "order_stat.k");
    if (o.has("M")) oc.Ms = size_list(o.raw("M"), "order_stat.M");
    oc.trials = o.opt<std::size_t>("trials", 10000);
    o.done();
    order = oc;
  }
  f.done();
  if (m < 1 || 2 * m > M || n < 1 || matrices < 1) throw ConfigError("sensing needs N >= 1, 1 <= 2m <= M, matrices >= 1");

  std::optional<OrderStatCalibration> cal;
  if (cal_path) {
    const auto file = parse_calibration(ctx.read_input(*cal_path));
    if (!file.order) throw DataError("calibration file has no order_stat section");
    cal = file.order;
  }
  if ((!c0_over || !k0_over) && !cal) throw ConfigError("sensing needs a calibration file or constants c0 and K0");
  rc.c0 = c0_over ? *c0_over : cal->c0;
  rc.K0 = k0_over ? *k0_over : cal->K0;

  const auto tail = rip_tail_check(n, M, m, ensemble, matrices, ctx.seed, rc, ctx.cfg.threads, lower_trials);
  Table t{{"matrix", "delta", "exceeds_level", "below_threshold"}, {}};
  for (const auto& r : tail.rows)
    t.add({static_cast<long long>(r.index), r.delta, std::string(r.exceeds ? "true" : "false"),
           std::string(r.threshold_pass ? "true" : "false")});
  rep.tables["matrices"] = std::move(t);
  rep.summary["rip"] = {{"gamma", tail.gamma},
                        {"gamma2_sparse", gamma2_sparse(m, M, 10000, mix64(ctx.seed ^ 0x6a3aULL))},
                        {"delta_level", tail.delta_level},
                        {"delta_level_at_most_one", tail.delta_at_most_one},
                        {"bound", tail.bound},
                        {"frequency", tail.frequency},
                        {"threshold", kRipThreshold},
                        {"threshold_pass_rate", tail.threshold_rate},
                        {"exact", tail.exact},
                        {"constants", {{"A", rc.A}, {"B", rc.B}, {"c0", rc.c0}, {"K0", rc.K0}}}};
  rep.checks["tail_frequency_below_bound"] = make_check(tail.dominated, {{"frequency", tail.frequency}, {"bound", tail.bound}});

  if (exact) {
    Table et{{"matrix", "m", "delta_exact", "delta_lower"}, {}};
    bool ok = true;
    for (std::size_t i = 0; i < exact->matrices; ++i) {
      const auto a = sample_matrix(exact->n, exact->M, ensemble, mix64(ctx.seed ^ 0xe8ac7ULL), i);
      for (std::size_t mm : exact->ms) {
        if (mm > exact->M) throw ConfigError("exact_check.m exceeds M");
        const double de = delta_exact(a.a, mm);
        const double dl = delta_lower(a.a, mm, 20, mix64(ctx.seed + i * 31 + mm));
        ok = ok && dl <= de;
        et.add({static_cast<long long>(i), static_cast<long long>(mm), de, dl});
      }
    }
    rep.tables["delta_exact"] = std::move(et);
    rep.checks["delta_lower_below_exact"] = make_check(ok);
  }

  if (order) {
    if (!cal && !c0_over) throw ConfigError("order_stat check needs calibrated envelopes");
    const double c0 = rc.c0;
    const double c1 = cal ? cal->c1 : 0.0;
    Table ot{{"k", "M", "estimate", "stderr", "lower_envelope", "upper_envelope"}, {}};
    std::vector<double> xs, ys;
    bool inside = true;
    std::uint64_t stream = 0;
    for (std::size_t MM : order->Ms)
      for (std::size_t k : order->ks) {
        if (k > MM) throw ConfigError("order_stat: k exceeds M");
        const auto r = gaussian_order_stat(k, MM, order->trials, mix64(ctx.seed + 0x0de5ULL + stream++));
        const double lo = k < MM ? lower_envelope(c1, k, MM) : 0.0;
        const double hi = upper_envelope(c0, k, MM);
        inside = inside && lo <= r.estimate && r.estimate <= hi;
        ot.add({static_cast<long long>(k), static_cast<long long>(MM), r.estimate, r.std_error, lo, hi});
        xs.push_back(static_cast<double>(k) * std::log(static_cast<double>(MM) / static_cast<double>(k)));
        ys.push_back(r.estimate * r.estimate);
      }
    rep.tables["order_stat"] = std::move(ot);
    const double r2 = regression_r2(xs, ys);
    rep.summary["order_stat_r2"] = r2;
    rep.checks["order_stat_regression_r2"] = make_check(r2 >= 0.95, {{"r2", r2}, {"minimum", 0.95}});
    rep.checks["order_stat_within_envelopes"] = make_check(inside, {{"c0", c0}, {"c1", c1}});
  }
}

// ---------------------------------------------------------------------------
// calibrate

inline void run_calibrate(Fields& f, Context& ctx, RunReport& rep) {
  Json out = Json::object();
  if (f.has("order_stat")) {
    Fields o(f.raw("order_stat"), "order_stat");
    const auto ks = o.has("k") ? size_list(o.raw("k"), "order_stat.k") : std::vector<std::size_t>{1, 2, 4, 8};
    const auto Ms = o.has("M") ? size_list(o.raw("M"), "order_stat.M") : std::vector<std::size_t>{16, 64, 256};
    const auto trials = o.opt<std::size_t>("trials", 10000);
    o.done();
    const auto cal = calibrate_order_stats(ks, Ms, trials, ctx.seed);
    out["order_stat"] = {{"c0", cal.c0}, {"c1", cal.c1}, {"K0", cal.K0}, {"c0_raw", cal.c0_raw},
                         {"c1_raw", cal.c1_raw}, {"k", ks}, {"M", Ms}, {"trials", trials}, {"seed", ctx.seed}};
  }
  if (f.has("empirical")) {
    Fields e(f.raw("empirical"), "empirical");
    const auto dim = e.opt<std::size_t>("dim", 8);
    const auto class_size = e.opt<std::size_t>("class_size", 64);
    const auto class_seed = e.opt<std::uint64_t>("class_seed", 1);
    const auto law_name = e.opt<std::string>("law", "gaussian");
    const SampleLaw law{parse_law(law_name), dim};
    const auto n = e.opt<std::size_t>("N", 128);
    const auto reps = e.opt<std::size_t>("reps", 2000);
    e.done();
    const auto cls = random_unit_class(dim, class_size, class_seed, law);
    const auto cal = calibrate_empirical(cls, law, n, reps, ctx.seed);
    out["empirical"] = {{"K", cal.K}, {"C", cal.C}, {"K_raw", cal.K_raw}, {"C_raw", cal.C_raw}, {"dim", dim},
                        {"class_size", class_size}, {"class_seed", class_seed}, {"law", law_name}, {"N", n},
                        {"reps", reps}, {"seed", ctx.seed}};
  }
  f.done();
  if (out.empty()) throw ConfigError("calibrate needs 'order_stat' and/or 'empirical'");
  rep.files["calibration.json"] = dump_json(out);
  rep.summary = out;
}

}  // namespace detail

/// Validates the whole config, runs the experiment and returns the report.
/// Nothing is written here; see emit().
inline RunReport run(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  if (!cfg.params.is_object()) throw ConfigError("config must be a JSON object");
  Json params = cfg.params;
  if (params.contains("command")) {
    if (!params["command"].is_string() || params["command"].get<std::string>() != command_name(cfg.command))
      throw ConfigError("config command does not match the subcommand");
  }
  params["command"] = command_name(cfg.command);
  if (cfg.seed_override) params["seed"] = *cfg.seed_override;
  if (params.contains("seed") && (!params["seed"].is_number_unsigned() && !params["seed"].is_number_integer()))
    throw ConfigError("seed must be a nonnegative integer");

  RunReport rep;
  rep.command = cfg.command;
  rep.config = params;
  detail::Context ctx{cfg, 0, {}};
  Fields f(params, command_name(cfg.command));
  f.req<std::string>("command");
  ctx.seed = f.opt<std::uint64_t>("seed", 0);
  try {
    switch (cfg.command) {
      case Command::Net: detail::run_net(f, ctx, rep); break;
      case Command::Modulus: detail::run_modulus(f, ctx, rep); break;
      case Command::PropVerify: detail::run_prop_verify(f, ctx, rep); break;
      case Command::Empirical: detail::run_empirical(f, ctx, rep); break;
      case Command::Sensing: detail::run_sensing(f, ctx, rep); break;
      case Command::Calibrate: detail::run_calibrate(f, ctx, rep); break;
    }
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed input: ") + e.what());
  }
  std::string hash_input = canonical_json(params).dump();
  for (const auto& h : ctx.input_hashes) hash_input += "\n" + h;
  rep.input_hash = git_blob_hash(hash_input);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

/// Writes report.json, one CSV per table, extra files, and timing.json
/// (kept apart so report.json stays byte-identical across runs).
inline void emit(const RunReport& rep, const std::filesystem::path& out_dir) {
  for (const auto& [name, t] : rep.tables) write_atomic(out_dir / (name + ".csv"), t.to_csv());
  for (const auto& [name, content] : rep.files) write_atomic(out_dir / name, content);
  write_atomic(out_dir / "timing.json", dump_json({{"wall_seconds", rep.wall_seconds}}));
  write_atomic(out_dir / "report.json", dump_json(rep.to_json()));
}

/// Exit-code contract: 0 success, 2 config error, 3 data error, 4 numeric failure or failed check.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e) ||
      dynamic_cast<const DomainError*>(&e) || dynamic_cast<const SizeError*>(&e))
    return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  return 4;
}

inline ExperimentConfig load_config(Command command, const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
  ExperimentConfig cfg;
  cfg.command = command;
  cfg.params = std::move(j);
  cfg.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return cfg;
}

}  // namespace gchain::cli
