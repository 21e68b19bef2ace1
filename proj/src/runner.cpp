#include "fpkflow/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "fpkflow/flow_check.hpp"
#include "fpkflow/log.hpp"
#include "fpkflow/particles.hpp"
#include "fpkflow/selection.hpp"

namespace fpkflow {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string sanitize(const std::string& key) {
  std::string out;
  for (char c : key) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json check_to_json(const CheckResult& c) {
  json j;
  j["name"] = c.name;
  j["pass"] = c.pass;
  j["message"] = c.message;
  j["worst_t"] = c.worst_t;
  if (c.worst_x.size() > 0) {
    std::vector<double> x(c.worst_x.data(), c.worst_x.data() + c.worst_x.size());
    j["worst_x"] = x;
  }
  j["worst_value"] = c.worst_value;
  return j;
}

json trace_to_json(const SelectionTrace& trace) {
  json steps = json::array();
  for (const auto& st : trace.steps) {
    json s;
    s["step"] = st.step;
    s["function_index"] = st.function_index;
    s["function_id"] = st.function_id;
    s["q"] = st.q;
    s["u"] = st.u;
    s["survivors"] = st.survivors;
    steps.push_back(std::move(s));
  }
  json j;
  j["tie_tol"] = trace.tie_tol;
  j["steps"] = std::move(steps);
  j["final_survivors"] = trace.final_survivors;
  j["selected"] = trace.selected_key;
  return j;
}

json family_to_json(const MeasureDeterminingFamily& fam) {
  json specs = json::array();
  for (const auto& s : fam.tanh_spec) {
    json e;
    e["omega"] = s.omega;
    e["phi"] = s.phi;
    e["sign"] = s.sign;
    e["ux"] = s.ux;
    e["uy"] = s.uy;
    specs.push_back(std::move(e));
  }
  return specs;
}

Enumeration enumeration_from_config(const Config& cfg, const MeasureDeterminingFamily& fam,
                                    const std::vector<double>& checkpoints) {
  Enumeration base = Enumeration::diagonal(static_cast<int>(fam.functions.size()), checkpoints);
  if (cfg.enumeration == "diagonal") return base;
  if (cfg.enumeration.rfind("first:", 0) == 0) {
    const std::string rest = cfg.enumeration.substr(6);
    const auto at = rest.rfind('@');
    if (at == std::string::npos) {
      throw ConfigError(0, "enumeration", "expected first:<function_id>@<time>");
    }
    const std::string id = rest.substr(0, at);
    const double q = std::stod(rest.substr(at + 1));
    const int idx = fam.index_of(id);
    if (idx < 0) {
      throw ConfigError(0, "enumeration", "function id '" + id + "' is not in the family");
    }
    return base.with_first(idx, q);
  }
  throw ConfigError(0, "enumeration",
                    "unknown enumeration '" + cfg.enumeration + "' (diagonal or first:...)");
}

// Selection checkpoints at or after the start time.
std::vector<double> from(const std::vector<double>& q, double s) {
  std::vector<double> out;
  for (double v : q) {
    if (v >= s - kTimeMatchTol) out.push_back(v);
  }
  return out;
}

}  // namespace

RunOutcome run_pipeline(const Config& cfg, const std::string& out_dir, bool expect_wellposed) {
  RunOutcome outcome;
  fs::create_directories(fs::path(out_dir) / "plots");
  json report;
  report["schema"] = "fpkflow-report-v1";

  auto fail_stage = [&](const std::string& stage, const std::string& why) {
    report["failed_stage"] = stage;
    report.at(stage)["error"] = why;
    write_json(fs::path(out_dir) / "report.json", report);
    std::cerr << "stage '" << stage << "' failed: " << why << "\n";
    outcome.exit_code = 1;
    outcome.failed_stage = stage;
    return outcome;
  };

  const Problem p = build_problem(cfg);
  const GridSpec grid = build_grid(cfg, p);
  const std::vector<double> Q = checkpoint_grid(0.0, p.horizon(), cfg.checkpoints);
  const Measure nu0 = build_initial(cfg, p, grid);
  const double s0 = cfg.starts.empty() ? 0.0 : cfg.starts.front();

  const MeasureDeterminingFamily fam = default_family(p.dimension());
  const Enumeration enumeration = enumeration_from_config(cfg, fam, Q);
  const GenerateStrategy strategy = strategy_from_name(cfg.strategy);

  GenerateParams gp;
  gp.solve.dt = cfg.dt;
  gp.solve.grid = grid;
  gp.solve.record_every = cfg.record_every;
  gp.solve.checkpoints = Q;
  gp.admission_tolerance = cfg.admission_tol;
  gp.branch_times = cfg.branch_times;
  gp.ladder_epsilons = cfg.ladder_eps;

  // validate
  if (cfg.has_stage("validate")) {
    report["validate"] = json::object();
    try {
      ValidationReport vr =
          validate_coefficients(p.coefficients, ProbeGrid::regular(p.domain_box, p.horizon(), 101, 101));
      json checks = json::array();
      for (const auto& c : vr.checks) checks.push_back(check_to_json(c));
      report["validate"]["checks"] = std::move(checks);
      report["validate"]["all_pass"] = vr.all_pass();
      if (!vr.all_pass()) return fail_stage("validate", "coefficient checks failed");
    } catch (const std::exception& e) {
      return fail_stage("validate", e.what());
    }
  }

  // generate (kept in memory for select)
  CandidateSet cs;
  bool have_candidates = false;
  double tie_tol = cfg.tie_tol;
  if (cfg.has_stage("generate") || cfg.has_stage("select") || cfg.has_stage("probe")) {
    report["generate"] = json::object();
    try {
      cs = generate_candidates(p, s0, nu0, strategy, gp);
      have_candidates = true;
      if (tie_tol < 0.0) tie_tol = default_tie_tol(cs);

      const fs::path cdir = fs::path(out_dir) / "candidates";
      fs::create_directories(cdir);
      save_measure_csv(cs.nu, (cdir / "nu.csv").string());
      json curves = json::object();
      json atoms_csv;
      std::string atoms_rows = "t,key,x\n";
      bool any_atomic = false;
      for (const auto& curve : cs.curves) {
        SolutionCurve projected;
        projected.s = curve.s;
        projected.T = curve.T;
        projected.provenance = curve.provenance;
        projected.key = curve.key;
        projected.times = from(Q, curve.s);
        for (double q : projected.times) projected.marginals.push_back(curve.at(q));
        projected.continuity_constant = compute_continuity_constant(projected);
        const std::string dir = "curve_" + sanitize(curve.key);
        save_curve(projected, (cdir / dir).string());
        curves[curve.key] = "candidates/" + dir;
        if (curve.initial().kind() == SupportKind::Atoms && curve.initial().support_size() == 1) {
          any_atomic = true;
          for (double q : projected.times) {
            atoms_rows += fmt17(q) + "," + curve.key + "," + fmt17(curve.at(q).location(0)[0]) + "\n";
          }
        }
      }
      if (any_atomic) write_text(fs::path(out_dir) / "plots" / "atoms.csv", atoms_rows);
      json exclusions = json::array();
      for (const auto& [key, reason] : cs.exclusions) {
        exclusions.push_back(json{{"key", key}, {"reason", reason}});
      }
      json set_manifest;
      set_manifest["s"] = cs.s;
      set_manifest["nu"] = "candidates/nu.csv";
      set_manifest["nu_key"] = canonical_key(cs.nu);
      set_manifest["admission_tolerance"] = cs.admission_tolerance;
      set_manifest["curves"] = curves;
      set_manifest["exclusions"] = exclusions;
      write_json(cdir / "manifest.json", set_manifest);

      report["generate"]["count"] = cs.curves.size();
      json keys = json::array();
      for (const auto& c : cs.curves) keys.push_back(c.key);
      report["generate"]["curves"] = std::move(keys);
      report["generate"]["exclusions"] = std::move(exclusions);
      report["generate"]["admission_tolerance"] = cs.admission_tolerance;
    } catch (const std::exception& e) {
      return fail_stage("generate", e.what());
    }
  }

  // select
  if (cfg.has_stage("select") && have_candidates) {
    report["select"] = json::object();
    try {
      SelectionResult sel = select(cs, fam, enumeration, tie_tol);
      json trace = trace_to_json(sel.trace);
      trace["s"] = cs.s;
      trace["dimension"] = p.dimension();
      trace["admission_tolerance"] = cs.admission_tolerance;
      trace["family"] = family_to_json(fam);
      trace["checkpoints"] = enumeration.checkpoints;
      json order = json::array();
      for (const auto& [f, q] : enumeration.order) order.push_back(json::array({f, q}));
      trace["enumeration"] = std::move(order);
      trace["candidates"] = "candidates";
      write_json(fs::path(out_dir) / "trace.json", trace);
      report["select"]["selected"] = sel.trace.selected_key;
      report["select"]["steps"] = sel.trace.steps.size();
      report["select"]["tie_tol"] = tie_tol;
    } catch (const std::exception& e) {
      return fail_stage("select", e.what());
    }
  }

  // assemble + flow_check
  FlowTable table;
  bool have_table = false;
  if (cfg.has_stage("assemble") || cfg.has_stage("flow_check")) {
    report["assemble"] = json::object();
    try {
      std::vector<std::pair<double, Measure>> starts;
      for (double s : cfg.starts) starts.emplace_back(s, nu0);
      AssembleOptions opts;
      opts.strategy = strategy;
      opts.params = gp;
      opts.tie_tol = tie_tol < 0.0 ? 1e-9 : tie_tol;
      opts.checkpoints = Q;
      table = assemble_flow(p, starts, fam, enumeration, opts);
      have_table = true;
      json entries = json::array();
      for (const auto& e : table.entries) {
        entries.push_back(json{{"s", e.s}, {"nu", e.nu_key}, {"selected", e.curve.key}});
      }
      report["assemble"]["entries"] = std::move(entries);
    } catch (const std::exception& e) {
      return fail_stage("assemble", e.what());
    }
  }

  if (cfg.has_stage("flow_check") && have_table) {
    report["flow_check"] = json::object();
    try {
      const bool atomic = !table.entries.empty() &&
                          table.entries.front().curve.initial().kind() == SupportKind::Atoms;
      const double tol = cfg.flow_tol > 0.0 ? cfg.flow_tol
                         : atomic          ? 1e-9
                                           : 2.0 * cfg.admission_tol;
      FlowReport fr = check_flow_property(table, all_checkpoint_triples(Q), tol);
      json jr;
      jr["tolerance"] = fr.tolerance;
      jr["all_pass"] = fr.all_pass;
      jr["triples"] = fr.results.size();
      if (!fr.results.empty()) {
        const TripleResult& w = fr.worst_triple();
        jr["worst"] = json{{"s", w.s},     {"r", w.r},
                           {"t", w.t},     {"nu", w.nu_key},
                           {"distance", w.distance}, {"pass", w.pass}};
      }
      write_json(fs::path(out_dir) / "flow_report.json", jr);
      std::string gaps = "s,r,t,nu,distance,pass\n";
      for (const auto& r : fr.results) {
        gaps += fmt17(r.s) + "," + fmt17(r.r) + "," + fmt17(r.t) + "," + r.nu_key + "," +
                fmt17(r.distance) + "," + (r.pass ? "1" : "0") + "\n";
      }
      write_text(fs::path(out_dir) / "plots" / "w1_gaps.csv", gaps);
      report["flow_check"] = jr;
      if (!fr.all_pass) return fail_stage("flow_check", "flow property violated");
    } catch (const std::exception& e) {
      return fail_stage("flow_check", e.what());
    }
  }

  // probe
  if (cfg.has_stage("probe")) {
    report["probe"] = json::object();
    try {
      Verdict v = wellposedness_probe(p, s0, nu0, fam, enumeration, strategy, gp,
                                      tie_tol < 0.0 ? 1e-9 : tie_tol);
      json jv;
      jv["verdict"] = verdict_name(v.kind);
      jv["candidates"] = v.candidate_count;
      jv["base_selected"] = v.base_key;
      if (v.kind == VerdictKind::NotWellPosed) {
        jv["witness"] = json{{"candidate", v.witness.candidate_key},
                             {"function", v.witness.function_id},
                             {"t_bar", v.witness.t_bar},
                             {"violation", v.witness.violation}};
        jv["adversarial_selected"] = v.adversarial_key;
        jv["w1_gap"] = v.w1_gap;
      }
      write_json(fs::path(out_dir) / "verdict.json", jv);
      report["probe"] = jv;
      outcome.verdict = verdict_name(v.kind);
      if (expect_wellposed && v.kind == VerdictKind::NotWellPosed) {
        return fail_stage("probe", "NotWellPosed but --expect-wellposed was set");
      }
    } catch (const std::exception& e) {
      return fail_stage("probe", e.what());
    }
  }

  // particles
  if (cfg.has_stage("particles")) {
    report["particles"] = json::object();
    try {
      const std::vector<double> q = from(Q, s0);
      ParticleEnsemble ensemble =
          simulate_particles(p, s0, nu0, cfg.particle_count, cfg.particle_dt, cfg.seed, q);
      SolutionCurve pm = marginals(ensemble, q);
      const bool degen = p.coefficients.sup_bound_a == 0.0 && nu0.kind() == SupportKind::Atoms;
      SolveOptions so = gp.solve;
      SolutionCurve ref = solve_forward(p, s0, degen ? nu0 : rasterize(nu0, grid), so);

      json checkpoints_json = json::array();
      std::string moments = "t,solver_mean,solver_var,particle_mean,particle_var,w1\n";
      double worst_w1 = 0.0;
      for (double t : q) {
        const Measure& mp = pm.at(t);
        const Measure& ms = ref.at(t);
        const double w1 = wasserstein1(mp, ms);
        worst_w1 = std::max(worst_w1, w1);
        const double pmean = mp.mean1d();
        const double pvar = mp.second_moment1d() - pmean * pmean;
        const double smean = ms.mean1d();
        const double svar = ms.second_moment1d() - smean * smean;
        checkpoints_json.push_back(json{
            {"t", t}, {"w1_vs_solver", w1}, {"mean", pmean}, {"var", pvar}});
        moments += fmt17(t) + "," + fmt17(smean) + "," + fmt17(svar) + "," + fmt17(pmean) + "," +
                   fmt17(pvar) + "," + fmt17(w1) + "\n";
      }
      write_text(fs::path(out_dir) / "plots" / "moments.csv", moments);

      // Martingale test with tanh against the configured generator.
      TanhSpec spec;
      std::vector<TestFunction> phis{make_tanh_function(spec, p.dimension())};
      const double mid = q[q.size() / 2];
      std::vector<std::pair<double, double>> pairs{{s0, mid}, {mid, p.horizon()}, {s0, p.horizon()}};
      if (mid <= s0 + kTimeMatchTol) pairs = {{s0, p.horizon()}};
      MartingaleReport mr = martingale_diagnostics(ensemble, p, phis, pairs, cfg.windows);

      json je;
      je["count"] = ensemble.count;
      je["dt"] = ensemble.dt;
      je["seed"] = ensemble.seed;
      je["checkpoints"] = std::move(checkpoints_json);
      je["max_w1_vs_solver"] = worst_w1;
      je["w1_tol"] = cfg.w1_tol;
      json cells = json::array();
      for (const auto& c : mr.cells) {
        cells.push_back(json{{"phi", c.phi_id},
                             {"r", c.r},
                             {"t", c.t},
                             {"window", c.window},
                             {"statistic", c.statistic},
                             {"threshold", c.threshold}});
      }
      je["martingale"] =
          json{{"max_statistic", mr.max_statistic},
               {"worst_ratio", mr.worst_ratio},
               {"all_within_threshold", mr.all_within_threshold},
               {"cells", std::move(cells)}};
      write_json(fs::path(out_dir) / "ensemble.json", je);
      report["particles"] = je;

      if (cfg.dump_paths) {
        std::ofstream bin(fs::path(out_dir) / "paths.bin", std::ios::binary);
        const std::uint64_t n = static_cast<std::uint64_t>(ensemble.count);
        const std::uint64_t steps = ensemble.record_times.size();
        bin.write(reinterpret_cast<const char*>(&n), 8);
        bin.write(reinterpret_cast<const char*>(&steps), 8);
        bin.write(reinterpret_cast<const char*>(&ensemble.dt), 8);
        bin.write(reinterpret_cast<const char*>(&ensemble.s), 8);
        for (int i = 0; i < ensemble.count; ++i) {
          for (const Matrix& snap : ensemble.snapshots) {
            for (int k = 0; k < ensemble.dimension; ++k) {
              const double v = snap(i, k);
              bin.write(reinterpret_cast<const char*>(&v), 8);
            }
          }
        }
      }

      if (worst_w1 > cfg.w1_tol) {
        return fail_stage("particles", "particle/solver W1 " + fmt17(worst_w1) +
                                           " exceeds tolerance " + fmt17(cfg.w1_tol));
      }
      if (!mr.all_within_threshold) {
        return fail_stage("particles", "martingale statistic exceeded its threshold");
      }
    } catch (const std::exception& e) {
      return fail_stage("particles", e.what());
    }
  }

  write_json(fs::path(out_dir) / "report.json", report);
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  json meta;
  meta["timestamp_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
  meta["seed"] = cfg.seed;
  write_json(fs::path(out_dir) / "metadata.json", meta);
  return outcome;
}

int replay_trace(const std::string& trace_path) {
  json trace;
  {
    std::ifstream in(trace_path);
    if (!in) {
      std::cerr << "replay: cannot open trace '" << trace_path << "'\n";
      return 2;
    }
    try {
      trace = json::parse(in);
    } catch (const std::exception& e) {
      std::cerr << "replay: malformed trace: " << e.what() << "\n";
      return 2;
    }
  }
  const fs::path base = fs::path(trace_path).parent_path();
  CandidateSet cs;
  MeasureDeterminingFamily fam;
  Enumeration enumeration;
  try {
    const int dimension = trace.at("dimension").get<int>();
    cs.s = trace.at("s").get<double>();
    cs.admission_tolerance = trace.at("admission_tolerance").get<double>();

    std::vector<TanhSpec> specs;
    for (const auto& e : trace.at("family")) {
      TanhSpec s;
      s.omega = e.at("omega").get<double>();
      s.phi = e.at("phi").get<double>();
      s.sign = e.at("sign").get<int>();
      s.ux = e.at("ux").get<double>();
      s.uy = e.at("uy").get<double>();
      specs.push_back(s);
    }
    fam = family_from_specs(specs, dimension);

    enumeration.n_functions = static_cast<int>(fam.functions.size());
    enumeration.checkpoints = trace.at("checkpoints").get<std::vector<double>>();
    for (const auto& pair : trace.at("enumeration")) {
      enumeration.order.emplace_back(pair.at(0).get<int>(), pair.at(1).get<double>());
    }
    enumeration.validate();

    const fs::path cdir = base / trace.at("candidates").get<std::string>();
    std::ifstream min(cdir / "manifest.json");
    if (!min) {
      std::cerr << "replay: missing candidate manifest " << (cdir / "manifest.json") << "\n";
      return 2;
    }
    json manifest = json::parse(min);
    cs.nu = load_measure_csv((base / manifest.at("nu").get<std::string>()).string());
    for (const auto& [key, dir] : manifest.at("curves").items()) {
      cs.curves.push_back(load_curve((base / dir.get<std::string>()).string()));
      cs.curves.back().key = key;
    }
  } catch (const std::exception& e) {
    std::cerr << "replay: cannot load candidates: " << e.what() << "\n";
    return 2;
  }

  SelectionResult res;
  try {
    res = select(cs, fam, enumeration, trace.at("tie_tol").get<double>());
  } catch (const std::exception& e) {
    std::cerr << "replay: selection failed: " << e.what() << "\n";
    return 1;
  }

  int divergences = 0;
  const auto& stored_steps = trace.at("steps");
  const std::size_t nsteps = std::max(stored_steps.size(), res.trace.steps.size());
  for (std::size_t k = 0; k < nsteps; ++k) {
    if (k >= stored_steps.size() || k >= res.trace.steps.size()) {
      std::cerr << "replay diff: step " << k << " present in only one trace\n";
      ++divergences;
      continue;
    }
    const auto& s = stored_steps[k];
    const auto& r = res.trace.steps[k];
    const double du = std::abs(s.at("u").get<double>() - r.u);
    const bool pair_match = s.at("function_index").get<int>() == r.function_index &&
                            std::abs(s.at("q").get<double>() - r.q) <= kTimeMatchTol;
    const bool survivors_match =
        s.at("survivors").get<std::vector<std::string>>() == r.survivors;
    if (!pair_match || du > 1e-12 || !survivors_match) {
      std::cerr << "replay diff at step " << k << ": stored u=" << fmt17(s.at("u").get<double>())
                << " recomputed u=" << fmt17(r.u) << (pair_match ? "" : " (pair differs)")
                << (survivors_match ? "" : " (survivors differ)") << "\n";
      ++divergences;
    }
  }
  const std::string stored_selected = trace.at("selected").get<std::string>();
  if (stored_selected != res.trace.selected_key) {
    std::cerr << "replay diff: stored selection '" << stored_selected << "' vs recomputed '"
              << res.trace.selected_key << "'\n";
    ++divergences;
  }
  if (divergences > 0) {
    std::cerr << "replay: " << divergences << " divergence(s)\n";
    return 1;
  }
  std::cout << "replay OK: " << res.trace.steps.size() << " steps, selected '"
            << res.trace.selected_key << "'\n";
  return 0;
}

}  // namespace fpkflow
