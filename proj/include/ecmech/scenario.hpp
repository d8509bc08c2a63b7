#pragma once

#include <Eigen/Dense>

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ecmech/error.hpp"
#include "ecmech/instance.hpp"
#include "ecmech/messages.hpp"
#include "ecmech/price_set.hpp"
#include "ecmech/utility.hpp"

namespace ecm {

using Json = nlohmann::json;

/// Tree or general message-exchange graph, users 0-based.
struct NetworkBlock {
  std::vector<std::pair<int, int>> edges;
  std::optional<std::vector<int>> phi;
};

struct LearningBlock {
  std::optional<double> alpha;
  std::optional<int> iters;
  std::optional<double> stop_tol;
  std::optional<DerivativeBounds> bounds;
};

/// A parsed scenario file. Users and slots are 1-based in the file and
/// 0-based here.
struct Scenario {
  InstanceSpec spec;
  std::optional<NetworkBlock> network;
  std::optional<LearningBlock> learning;

  Instance instance() const { return build_instance(spec); }
};

namespace detail {

[[noreturn]] inline void scenario_fail(const std::string& where,
                                       const std::string& what) {
  throw ScenarioError(where + ": " + what);
}

inline const Json& require(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    scenario_fail(where, std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

inline double as_number(const Json& j, const std::string& where) {
  if (!j.is_number()) scenario_fail(where, "expected a number");
  return j.get<double>();
}

inline int as_index(const Json& j, int count, const std::string& where) {
  if (!j.is_number_integer()) scenario_fail(where, "expected an integer index");
  const long long v = j.get<long long>();
  if (v < 1 || v > count) {
    std::ostringstream os;
    os << "index " << v << " outside 1.." << count;
    scenario_fail(where, os.str());
  }
  return static_cast<int>(v - 1);
}

inline std::vector<double> as_numbers(const Json& j, const std::string& where) {
  if (!j.is_array()) scenario_fail(where, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    out.push_back(as_number(j[k], where + "[" + std::to_string(k + 1) + "]"));
  }
  return out;
}

inline Matrix as_matrix(const Json& j, int rows, int cols, const std::string& where) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows) {
    std::ostringstream os;
    os << "expected " << rows << " rows";
    scenario_fail(where, os.str());
  }
  Matrix M(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto row = as_numbers(j[static_cast<std::size_t>(r)],
                                where + "[" + std::to_string(r + 1) + "]");
    if (static_cast<int>(row.size()) != cols) {
      std::ostringstream os;
      os << "row " << r + 1 << " needs " << cols << " entries";
      scenario_fail(where, os.str());
    }
    for (int c = 0; c < cols; ++c) M(r, c) = row[static_cast<std::size_t>(c)];
  }
  return M;
}

inline Json matrix_json(const Matrix& M) {
  Json out = Json::array();
  for (int r = 0; r < M.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (int k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

inline UtilityFunction parse_utility(const Json& j, const std::string& where) {
  const Json& fam = require(j, "family", where);
  if (!fam.is_string()) scenario_fail(where, "family must be a string");
  const Json& params = require(j, "params", where);
  const auto dom = as_numbers(require(j, "domain", where), where + ".domain");
  if (dom.size() != 2) scenario_fail(where, "domain must be [lo, hi]");
  const std::string f = fam.get<std::string>();
  try {
    if (f == "scaled_log") {
      return UtilityFunction::scaled_log(as_number(require(params, "c", where), where + ".c"),
                                         as_number(require(params, "d", where), where + ".d"),
                                         dom[0], dom[1]);
    }
    if (f == "quadratic") {
      return UtilityFunction::quadratic(as_number(require(params, "a", where), where + ".a"),
                                        as_number(require(params, "b", where), where + ".b"),
                                        dom[0], dom[1]);
    }
  } catch (const InvalidUtility& e) {
    scenario_fail(where, e.what());
  }
  scenario_fail(where, "unknown utility family '" + f + "'");
}

inline Json utility_json(const UtilityFunction& u) {
  Json j;
  j["family"] = family_name(u);
  if (const auto* f = std::get_if<ScaledLog>(&u.family())) {
    j["params"] = {{"c", f->weight}, {"d", f->shift}};
  } else {
    const auto& q = std::get<Quadratic>(u.family());
    j["params"] = {{"a", q.slope}, {"b", q.curvature}};
  }
  j["domain"] = {u.domain_lo(), u.domain_hi()};
  return j;
}

}  // namespace detail

inline Scenario parse_scenario(const Json& j) {
  using namespace detail;
  if (!j.is_object()) scenario_fail("scenario", "top level must be an object");
  Scenario sc;

  const Json& prices = require(j, "prices", "scenario");
  sc.spec.unit_prices = as_numbers(require(prices, "unit", "prices"), "prices.unit");
  sc.spec.peak_price = as_number(require(prices, "peak", "prices"), "prices.peak");
  const int T = static_cast<int>(sc.spec.unit_prices.size());
  if (T < 1) scenario_fail("prices.unit", "need at least one time slot");
  sc.spec.horizon = T;

  const Json& users = require(j, "users", "scenario");
  if (!users.is_array() || users.empty()) {
    scenario_fail("users", "need a nonempty array of users");
  }
  const int N = static_cast<int>(users.size());
  sc.spec.n_users = N;
  for (int i = 0; i < N; ++i) {
    const std::string where = "users[" + std::to_string(i + 1) + "]";
    const Json& list = require(users[static_cast<std::size_t>(i)], "utilities", where);
    if (!list.is_array() || static_cast<int>(list.size()) != T) {
      std::ostringstream os;
      os << "needs " << T << " utilities, one per slot";
      scenario_fail(where, os.str());
    }
    for (int t = 0; t < T; ++t) {
      sc.spec.utilities.push_back(parse_utility(
          list[static_cast<std::size_t>(t)],
          where + ".utilities[" + std::to_string(t + 1) + "]"));
    }
  }

  if (j.contains("constraints")) {
    const Json& rows = require(j.at("constraints"), "rows", "constraints");
    if (!rows.is_array()) scenario_fail("constraints.rows", "expected an array");
    for (std::size_t l = 0; l < rows.size(); ++l) {
      const std::string where = "constraints.rows[" + std::to_string(l + 1) + "]";
      ConstraintRow row;
      row.rhs = as_number(require(rows[l], "rhs", where), where + ".rhs");
      const Json& coeffs = require(rows[l], "coeffs", where);
      if (!coeffs.is_array()) scenario_fail(where, "coeffs must be an array");
      for (const auto& c : coeffs) {
        if (!c.is_array() || c.size() != 3) {
          scenario_fail(where, "each coeff is [user, slot, value]");
        }
        row.coeffs.push_back({as_index(c[0], N, where + ".user"),
                              as_index(c[1], T, where + ".slot"),
                              as_number(c[2], where + ".value")});
      }
      sc.spec.rows.push_back(std::move(row));
    }
  }

  if (j.contains("network")) {
    const Json& net = j.at("network");
    NetworkBlock nb;
    const Json& edges = require(net, "edges", "network");
    if (!edges.is_array()) scenario_fail("network.edges", "expected an array");
    for (const auto& e : edges) {
      if (!e.is_array() || e.size() != 2) {
        scenario_fail("network.edges", "each edge is [i, j]");
      }
      nb.edges.emplace_back(as_index(e[0], N, "network.edges"),
                            as_index(e[1], N, "network.edges"));
    }
    if (net.contains("phi")) {
      const Json& phi = net.at("phi");
      if (!phi.is_array() || static_cast<int>(phi.size()) != N) {
        scenario_fail("network.phi", "needs one helper per user");
      }
      std::vector<int> helpers;
      for (const auto& h : phi) helpers.push_back(as_index(h, N, "network.phi"));
      nb.phi = std::move(helpers);
    }
    sc.network = std::move(nb);
  }

  if (j.contains("learning")) {
    const Json& lj = j.at("learning");
    if (!lj.is_object()) scenario_fail("learning", "expected an object");
    LearningBlock lb;
    if (lj.contains("alpha")) lb.alpha = as_number(lj.at("alpha"), "learning.alpha");
    if (lj.contains("iters")) {
      if (!lj.at("iters").is_number_integer()) {
        scenario_fail("learning.iters", "expected an integer");
      }
      lb.iters = lj.at("iters").get<int>();
    }
    if (lj.contains("stop_tol")) {
      lb.stop_tol = as_number(lj.at("stop_tol"), "learning.stop_tol");
    }
    if (lj.contains("r_lo") != lj.contains("r_hi")) {
      scenario_fail("learning", "r_lo and r_hi must be given together");
    }
    if (lj.contains("r_lo")) {
      lb.bounds = DerivativeBounds{as_matrix(lj.at("r_lo"), N, T, "learning.r_lo"),
                                   as_matrix(lj.at("r_hi"), N, T, "learning.r_hi")};
    }
    sc.learning = std::move(lb);
  }

  // Validate the instance eagerly so every later step sees a sound model.
  try {
    (void)sc.instance();
  } catch (const ScenarioError&) {
    throw;
  } catch (const Error& e) {
    throw ScenarioError(std::string("invalid instance: ") + e.what());
  }
  return sc;
}

inline Scenario parse_scenario_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ScenarioError(std::string("malformed JSON: ") + e.what());
  }
  return parse_scenario(j);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline Scenario load_scenario(const std::string& path) {
  return parse_scenario_text(read_text_file(path));
}

/// Declarative spec equivalent to a built instance. Rows list the nonzero
/// coefficients in flat-index order.
inline InstanceSpec instance_spec(const Instance& inst) {
  InstanceSpec spec;
  spec.n_users = inst.n_users();
  spec.horizon = inst.horizon();
  spec.utilities = inst.utilities();
  spec.unit_prices.assign(inst.unit_prices().data(),
                          inst.unit_prices().data() + inst.horizon());
  spec.peak_price = inst.peak_price();
  for (int l = 0; l < inst.n_constraints(); ++l) {
    ConstraintRow row;
    row.rhs = inst.b()(l);
    for (int i = 0; i < inst.n_users(); ++i) {
      for (int t = 0; t < inst.horizon(); ++t) {
        const double a = inst.coeff(i, l, t);
        if (a != 0.0) row.coeffs.push_back({i, t, a});
      }
    }
    spec.rows.push_back(std::move(row));
  }
  return spec;
}

inline Json scenario_json(const Scenario& sc) {
  using namespace detail;
  const InstanceSpec& s = sc.spec;
  Json j;
  Json users = Json::array();
  for (int i = 0; i < s.n_users; ++i) {
    Json list = Json::array();
    for (int t = 0; t < s.horizon; ++t) {
      list.push_back(utility_json(s.utilities[static_cast<std::size_t>(i * s.horizon + t)]));
    }
    users.push_back({{"utilities", std::move(list)}});
  }
  j["users"] = std::move(users);
  j["prices"] = {{"unit", s.unit_prices}, {"peak", s.peak_price}};
  Json rows = Json::array();
  for (const auto& row : s.rows) {
    Json coeffs = Json::array();
    for (const auto& c : row.coeffs) coeffs.push_back({c.user + 1, c.slot + 1, c.value});
    rows.push_back({{"coeffs", std::move(coeffs)}, {"rhs", row.rhs}});
  }
  j["constraints"] = {{"rows", std::move(rows)}};
  if (sc.network) {
    Json edges = Json::array();
    for (const auto& [a, b] : sc.network->edges) edges.push_back({a + 1, b + 1});
    j["network"] = {{"edges", std::move(edges)}};
    if (sc.network->phi) {
      Json phi = Json::array();
      for (int h : *sc.network->phi) phi.push_back(h + 1);
      j["network"]["phi"] = std::move(phi);
    }
  }
  if (sc.learning) {
    Json lj = Json::object();
    if (sc.learning->alpha) lj["alpha"] = *sc.learning->alpha;
    if (sc.learning->iters) lj["iters"] = *sc.learning->iters;
    if (sc.learning->stop_tol) lj["stop_tol"] = *sc.learning->stop_tol;
    if (sc.learning->bounds) {
      lj["r_lo"] = matrix_json(sc.learning->bounds->lower);
      lj["r_hi"] = matrix_json(sc.learning->bounds->upper);
    }
    j["learning"] = std::move(lj);
  }
  return j;
}

inline Json instance_json(const Instance& inst) {
  Scenario sc;
  sc.spec = instance_spec(inst);
  return scenario_json(sc);
}

// Message profiles.

inline Json profile_json(const CentralMessageProfile& m) {
  using namespace detail;
  return {{"kind", "central"},
          {"y", matrix_json(m.y)},
          {"q", matrix_json(m.q)},
          {"s", matrix_json(m.s)},
          {"beta", matrix_json(m.beta)}};
}

inline CentralMessageProfile parse_central_profile(const Instance& inst, const Json& j) {
  using namespace detail;
  if (!j.is_object()) scenario_fail("profile", "top level must be an object");
  if (j.contains("kind") && j.at("kind") != "central") {
    scenario_fail("profile", "expected kind 'central'");
  }
  const int N = inst.n_users();
  const int T = inst.horizon();
  const int L = inst.n_constraints();
  CentralMessageProfile m;
  m.y = as_matrix(require(j, "y", "profile"), N, T, "profile.y");
  m.q = L > 0 ? as_matrix(require(j, "q", "profile"), N, L, "profile.q")
              : Matrix(N, 0);
  m.s = as_matrix(require(j, "s", "profile"), N, T, "profile.s");
  m.beta = as_matrix(require(j, "beta", "profile"), N, T, "profile.beta");
  validate_profile(inst, m);
  return m;
}

}  // namespace ecm
