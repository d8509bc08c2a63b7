#pragma once

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ecmech/ecmech.hpp"

namespace ecm::cli {

enum ExitCode : int { kPass = 0, kVerificationFailed = 1, kInputError = 2 };

namespace detail {

/// Shortest text that reads back to the same double.
inline std::string num(double v) {
  char buf[32];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline std::string row(const Vector& v, int digits = 6) {
  std::string s;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (k) s += ' ';
    s += fixed(v(k), digits);
  }
  return s;
}

inline const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

inline void print_kkt(std::ostream& out, const KktReport& r) {
  out << "KKT (tol " << num(r.tol) << "): primal " << num(r.primal_residual)
      << ", dual " << num(r.dual_residual) << ", complementary slackness "
      << num(r.comp_slackness) << ", stationarity " << num(r.stationarity_residual)
      << " -> " << verdict(r.pass) << "\n";
}

inline void print_ne_summary(std::ostream& out, const NeReport& r) {
  out << "equilibrium check (seed " << r.seed << ", " << r.deviation_samples
      << " joint deviations per user): max improvement " << num(r.max_improvement)
      << " (tol " << num(r.tol) << ") -> " << verdict(r.pass) << "\n";
  for (const auto& u : r.users) {
    out << "  user " << u.user + 1 << ": max improvement " << num(u.max_improvement)
        << ", joint " << num(u.joint_max_improvement) << "\n";
  }
  if (!r.pass && r.best) {
    out << "  improving deviation: user " << r.best->user + 1 << " "
        << r.best->coordinate << " " << num(r.best->from) << " -> "
        << num(r.best->to) << " gains " << num(r.best->improvement) << "\n";
  }
}

inline void print_budget(std::ostream& out, const BudgetReport& b) {
  out << "budget: taxes " << fixed(b.taxes) << ", community cost "
      << fixed(b.community_cost) << ", gross surplus " << fixed(b.gross)
      << ", rebated balance " << num(b.rebated) << "\n";
}

inline bool print_ir(std::ostream& out, const std::vector<IrEntry>& ir) {
  bool ok = true;
  for (const auto& e : ir) {
    out << "participation: user " << e.user + 1 << " payoff " << fixed(e.payoff)
        << ", outside option " << fixed(e.outside_option) << ", margin "
        << fixed(e.margin) << " -> " << verdict(e.ok) << "\n";
    ok = ok && e.ok;
  }
  return ok;
}

inline void write_ne_csv(std::ostream& out, const NeReport& r) {
  out << "user,coordinate,from,to,improvement\n";
  for (const auto& u : r.users) {
    for (const auto& d : u.per_coordinate) {
      out << d.user + 1 << ',' << d.coordinate << ',' << num(d.from) << ','
          << num(d.to) << ',' << num(d.improvement) << '\n';
    }
    out << u.user + 1 << ",joint,,," << num(u.joint_max_improvement) << '\n';
  }
}

inline void write_trace_csv(std::ostream& out, const Instance& inst,
                           const LearningTrace& trace) {
  const int N = inst.n_users();
  const int T = inst.horizon();
  const int L = inst.n_constraints();
  out << "k";
  for (int l = 0; l < L; ++l) out << ",q" << l + 1;
  for (int t = 0; t < T; ++t) out << ",s" << t + 1;
  for (int i = 0; i < N; ++i) {
    for (int t = 0; t < T; ++t) out << ",y" << i + 1 << '_' << t + 1;
  }
  out << ",dist_to_opt,dual_value\n";
  for (const auto& r : trace.records) {
    out << r.k;
    for (int l = 0; l < L; ++l) out << ',' << num(r.q(0, l));
    for (int t = 0; t < T; ++t) out << ',' << num(r.s(0, t));
    for (int i = 0; i < N; ++i) {
      for (int t = 0; t < T; ++t) out << ',' << num(r.y(i, t));
    }
    out << ',' << (r.dist_to_opt ? num(*r.dist_to_opt) : std::string()) << ','
        << num(r.dual_value) << '\n';
  }
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ScenarioError("cannot write '" + path + "'");
  f << text;
}

inline TreeNetwork network_of(const Scenario& sc, int n_users) {
  if (!sc.network) throw ScenarioError("scenario has no network block");
  TreeNetwork net = spanning_tree(n_users, sc.network->edges);
  if (sc.network->phi) {
    net.set_helpers(*sc.network->phi);
  } else {
    net.set_helpers(assign_helpers(net, LowestIndexHelper{}));
  }
  return net;
}

}  // namespace detail

struct Options {
  std::string scenario;
  std::string profile;
  std::string format = "text";
  std::string profile_out;
  std::string trace;
  std::uint64_t seed = 0;
  int samples = 10000;
  double tol = 1e-8;
  double ne_tol = 1e-7;
  std::optional<double> alpha;
  std::optional<int> iters;
  std::optional<double> stop_tol;
};

inline int cmd_solve(const Options& o, std::ostream& out) {
  const Instance inst = load_scenario(o.scenario).instance();
  const CentralSolution sol = solve_centralized(inst, {o.tol, 200000});
  const KktReport k = check_kkt(inst, sol, o.tol);
  using detail::num;
  if (o.format == "csv") {
    out << "quantity,index,slot,value\n";
    for (int i = 0; i < inst.n_users(); ++i) {
      for (int t = 0; t < inst.horizon(); ++t) {
        out << "x," << i + 1 << ',' << t + 1 << ',' << num(sol.x(i, t)) << '\n';
      }
    }
    out << "w,,," << num(sol.w) << '\n';
    for (int l = 0; l < inst.n_constraints(); ++l) {
      out << "lambda," << l + 1 << ",," << num(sol.lambda(l)) << '\n';
    }
    for (int t = 0; t < inst.horizon(); ++t) {
      out << "mu,," << t + 1 << ',' << num(sol.mu(t)) << '\n';
    }
    out << "kkt_primal,,," << num(k.primal_residual) << '\n'
        << "kkt_dual,,," << num(k.dual_residual) << '\n'
        << "kkt_comp_slackness,,," << num(k.comp_slackness) << '\n'
        << "kkt_stationarity,,," << num(k.stationarity_residual) << '\n'
        << "kkt_pass,,," << (k.pass ? 1 : 0) << '\n';
  } else {
    out << "demand x (rows users, columns slots):\n";
    for (int i = 0; i < inst.n_users(); ++i) {
      out << "  user " << i + 1 << ": " << detail::row(sol.x.row(i).transpose()) << "\n";
    }
    out << "peak w: " << detail::fixed(sol.w) << "\n";
    out << "lambda: " << detail::row(sol.lambda) << "\n";
    out << "mu: " << detail::row(sol.mu) << "\n";
    out << "welfare: " << detail::fixed(social_welfare(inst, sol.x)) << "\n";
    detail::print_kkt(out, k);
  }
  return k.pass ? kPass : kVerificationFailed;
}

inline int cmd_ne(const Options& o, std::ostream& out) {
  const Instance inst = load_scenario(o.scenario).instance();
  const CentralSolution sol = solve_centralized(inst, {1e-12, 200000});
  const CentralMessageProfile m = construct_ne(inst, sol);
  NeConfig cfg;
  cfg.seed = o.seed;
  cfg.deviation_samples = o.samples;
  cfg.tol = o.ne_tol;
  const NeReport r = verify_ne(inst, m, cfg);

  out << "constructed equilibrium from the oracle solution\n";
  detail::print_ne_summary(out, r);
  out << "per-user unit prices (unit + peak + constraint = total):\n";
  for (int i = 0; i < inst.n_users(); ++i) {
    const PriceDecomposition d = price_decomposition(inst, m, i);
    for (int t = 0; t < inst.horizon(); ++t) {
      out << "  user " << i + 1 << " slot " << t + 1 << ": " << detail::fixed(d.unit(t))
          << " + " << detail::fixed(d.peak(t)) << " + " << detail::fixed(d.constraint(t))
          << " = " << detail::fixed(d.total(t)) << "\n";
    }
  }
  for (int i = 0; i < inst.n_users(); ++i) {
    out << "tax: user " << i + 1 << " " << detail::fixed(tax(inst, m, i))
        << ", rebated " << detail::fixed(rebate_tax(inst, m, i)) << "\n";
  }
  detail::print_budget(out, budget_report(inst, m));
  const bool ir_ok = detail::print_ir(out, check_ir(inst, m));
  if (!o.profile_out.empty()) detail::write_file(o.profile_out, profile_json(m).dump(2) + "\n");
  return r.pass && ir_ok ? kPass : kVerificationFailed;
}

inline int cmd_verify(const Options& o, std::ostream& out, std::ostream& err) {
  const Instance inst = load_scenario(o.scenario).instance();
  Json pj;
  try {
    pj = Json::parse(read_text_file(o.profile));
  } catch (const Json::parse_error& e) {
    throw ScenarioError(std::string("malformed profile JSON: ") + e.what());
  }
  const CentralMessageProfile m = parse_central_profile(inst, pj);
  NeConfig cfg;
  cfg.seed = o.seed;
  cfg.deviation_samples = o.samples;
  cfg.tol = o.ne_tol;
  const NeReport r = verify_ne(inst, m, cfg);
  detail::write_ne_csv(out, r);
  if (!r.pass && r.best) {
    err << "improving deviation: user " << r.best->user + 1 << " " << r.best->coordinate
        << " " << detail::num(r.best->from) << " -> " << detail::num(r.best->to)
        << " gains " << detail::num(r.best->improvement) << " (tol "
        << detail::num(r.tol) << ")\n";
  }
  return r.pass ? kPass : kVerificationFailed;
}

inline int cmd_dist_ne(const Options& o, std::ostream& out) {
  const Scenario sc = load_scenario(o.scenario);
  const Instance inst = sc.instance();
  const TreeNetwork net = detail::network_of(sc, inst.n_users());
  const CentralSolution sol = solve_centralized(inst, {1e-12, 200000});
  const DistMessageProfile m = construct_ne_dist(inst, net, sol);
  NeConfig cfg;
  cfg.seed = o.seed;
  cfg.deviation_samples = o.samples;
  cfg.tol = o.ne_tol;
  const NeReport r = verify_ne_dist(inst, net, m, cfg);

  out << "tree edges:";
  for (const auto& [a, b] : net.edges()) out << " " << a + 1 << "-" << b + 1;
  out << "\nhelpers:";
  for (int i = 0; i < inst.n_users(); ++i) out << " phi(" << i + 1 << ")=" << net.helper(i) + 1;
  out << "\n";
  detail::print_ne_summary(out, r);
  for (int i = 0; i < inst.n_users(); ++i) {
    const Neighborhood nb = extract_neighborhood(net, m, i);
    const DistTaxBreakdown b = tax_dist_breakdown(inst, net, nb);
    out << "tax: user " << i + 1 << " total " << detail::fixed(b.total()) << " = cost "
        << detail::fixed(b.cost) << " + summary penalties "
        << detail::num(b.pr_n.sum() + b.pr_nu.sum()) << " + proxy penalties "
        << detail::num(b.pr_beta.sum()) << " + constraint terms "
        << detail::num(b.con_l.sum()) << " + peak terms " << detail::num(b.con_t.sum())
        << "\n";
  }
  const SummaryConsistencyReport c = check_summary_consistency(inst, net, m, sol.x);
  out << "summary consistency: recursion " << detail::num(std::max(c.recursion_n, c.recursion_nu))
      << ", closed form " << detail::num(std::max(c.closed_form_n, c.closed_form_nu))
      << ", totals " << detail::num(std::max(c.total_n, c.total_nu)) << " -> "
      << detail::verdict(c.pass) << "\n";
  detail::print_budget(out, dist_budget_report(inst, net, m));
  const bool ir_ok = detail::print_ir(out, dist_check_ir(inst, net, m));
  return r.pass && c.pass && ir_ok ? kPass : kVerificationFailed;
}

inline int cmd_learn(const Options& o, std::ostream& out, std::ostream& err) {
  const Scenario sc = load_scenario(o.scenario);
  const Instance inst = sc.instance();
  const std::optional<LearningBlock>& lb = sc.learning;
  const DerivativeBounds bounds =
      lb && lb->bounds ? *lb->bounds : domain_derivative_bounds(inst);
  const PriceSet P = make_price_set(inst, bounds);

  const CentralSolution sol = solve_centralized(inst, {1e-12, 200000});
  LearningConfig cfg;
  cfg.alpha = o.alpha ? o.alpha : (lb ? lb->alpha : std::nullopt);
  cfg.max_iters = o.iters ? *o.iters : (lb && lb->iters ? *lb->iters : 100);
  cfg.stop_tol = o.stop_tol ? *o.stop_tol : (lb && lb->stop_tol ? *lb->stop_tol : 0.0);
  Vector ref(P.dim());
  ref << sol.lambda, sol.mu;
  cfg.reference = ref;

  const LearningResult res = learn(inst, P, cfg);
  const LearningTrace& tr = res.trace;
  if (tr.step_size_warning) {
    err << "warning: step size " << detail::num(tr.alpha) << " exceeds 2 delta'/||A~|| = "
        << detail::num(2.0 * tr.delta / tr.a_tilde_norm) << "\n";
  }
  const LearningRecord& last = tr.records.back();
  out << "step size " << detail::num(tr.alpha) << ", delta' " << detail::num(tr.delta)
      << ", ||A~|| " << detail::num(tr.a_tilde_norm) << "\n";
  out << "iterations " << last.k << " (stop: " << tr.stop_reason << ")\n";
  out << "final demand y:\n";
  for (int i = 0; i < inst.n_users(); ++i) {
    out << "  user " << i + 1 << ": " << detail::row(res.profile.y.row(i).transpose()) << "\n";
  }
  out << "final q: " << detail::row(res.profile.q.row(0).transpose()) << "\n";
  out << "final s: " << detail::row(res.profile.s.row(0).transpose()) << "\n";
  out << "distance to optimal prices: " << detail::num(*last.dist_to_opt) << "\n";
  out << "max demand error: " << detail::num((res.profile.y - sol.x).cwiseAbs().maxCoeff())
      << "\n";
  if (!o.trace.empty()) {
    std::ostringstream csv;
    detail::write_trace_csv(csv, inst, tr);
    detail::write_file(o.trace, csv.str());
  }
  return kPass;
}

/// Entry point shared by the executable and the tests.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Demand-management mechanisms for energy communities"};
  app.require_subcommand(1);
  Options o;

  auto* solve = app.add_subcommand("solve", "Solve the social-welfare program and check KKT");
  solve->add_option("scenario", o.scenario, "Scenario JSON file")->required();
  solve->add_option("--format", o.format, "text or csv")
      ->check(CLI::IsMember({"text", "csv"}));
  solve->add_option("--tol", o.tol, "KKT tolerance");

  auto* ne = app.add_subcommand("ne", "Construct and verify the centralized equilibrium");
  ne->add_option("scenario", o.scenario, "Scenario JSON file")->required();
  ne->add_option("--profile-out", o.profile_out, "Write the equilibrium profile JSON");

  auto* verify = app.add_subcommand("verify", "Check a centralized message profile");
  verify->add_option("scenario", o.scenario, "Scenario JSON file")->required();
  verify->add_option("profile", o.profile, "Profile JSON file")->required();

  auto* dist = app.add_subcommand("dist-ne", "Construct and verify the distributed equilibrium");
  dist->add_option("scenario", o.scenario, "Scenario JSON file")->required();

  auto* learn_cmd = app.add_subcommand("learn", "Run the price-learning dynamics");
  learn_cmd->add_option("scenario", o.scenario, "Scenario JSON file")->required();
  learn_cmd->add_option("--alpha", o.alpha, "Step size");
  learn_cmd->add_option("--iters", o.iters, "Iteration count K")->check(CLI::NonNegativeNumber);
  learn_cmd->add_option("--stop-tol", o.stop_tol, "Stop when the profile moves less than this");
  learn_cmd->add_option("--trace", o.trace, "Write the per-iteration trace CSV");

  for (auto* sub : {ne, verify, dist}) {
    sub->add_option("--seed", o.seed, "Seed for random deviations");
    sub->add_option("--samples", o.samples, "Random joint deviations per user")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--tol", o.ne_tol, "Largest tolerated payoff improvement");
  }
  learn_cmd->add_option("--seed", o.seed, "Unused; accepted for uniformity");
  solve->add_option("--seed", o.seed, "Unused; accepted for uniformity");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kPass;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kPass;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  try {
    if (solve->parsed()) return cmd_solve(o, out);
    if (ne->parsed()) return cmd_ne(o, out);
    if (verify->parsed()) return cmd_verify(o, out, err);
    if (dist->parsed()) return cmd_dist_ne(o, out);
    if (learn_cmd->parsed()) return cmd_learn(o, out, err);
  } catch (const NotConverged& e) {
    err << "error: " << e.what() << "\n";
    return kVerificationFailed;
  } catch (const KktFailed& e) {
    err << "error: " << e.what() << "\n";
    return kVerificationFailed;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}

}  // namespace ecm::cli
