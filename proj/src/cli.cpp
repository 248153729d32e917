#include "npasa/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

namespace npasa {

using nlohmann::json;

namespace {

json opt_to_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

json nan_to_json(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

double json_to_nan(const json& v) {
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return v.get<double>();
}

int log_level() {
  const char* env = std::getenv("NPASA_LOG");
  if (!env) return 0;
  const std::string v(env);
  if (v == "debug") return 2;
  if (v == "info") return 1;
  return 0;
}

std::mutex io_mutex;

}  // namespace

std::string trace_record_to_json(const TraceRecord& rec) {
  json j;
  j["k"] = rec.k;
  j["phase"] = std::string(1, rec.phase);
  j["e0"] = opt_to_json(rec.e0);
  j["e1"] = rec.e1;
  j["em0"] = opt_to_json(rec.em0);
  j["em1"] = rec.em1;
  j["ec"] = rec.ec;
  j["q"] = rec.q;
  j["e_best"] = rec.e_best;
  j["branch_reason"] = rec.branch_reason;
  j["inner_iters"] = rec.inner_iters;
  j["branch_lhs"] = nan_to_json(rec.branch_lhs);
  j["branch_rhs"] = nan_to_json(rec.branch_rhs);
  j["alpha_min"] = nan_to_json(rec.alpha_min);
  j["p_max"] = nan_to_json(rec.p_max);
  return j.dump();
}

TraceRecord trace_record_from_json(const std::string& line) {
  const json j = json::parse(line);
  TraceRecord rec;
  rec.k = j.at("k").get<int>();
  rec.phase = j.at("phase").get<std::string>().at(0);
  if (!j.at("e0").is_null()) rec.e0 = j.at("e0").get<double>();
  rec.e1 = j.at("e1").get<double>();
  if (!j.at("em0").is_null()) rec.em0 = j.at("em0").get<double>();
  rec.em1 = j.at("em1").get<double>();
  rec.ec = j.at("ec").get<double>();
  rec.q = j.at("q").get<double>();
  rec.e_best = j.at("e_best").get<double>();
  rec.branch_reason = j.at("branch_reason").get<std::string>();
  rec.inner_iters = j.at("inner_iters").get<int>();
  rec.branch_lhs = json_to_nan(j.at("branch_lhs"));
  rec.branch_rhs = json_to_nan(j.at("branch_rhs"));
  rec.alpha_min = json_to_nan(j.at("alpha_min"));
  rec.p_max = json_to_nan(j.at("p_max"));
  return rec;
}

std::string run_report_to_json(const RunReport& report) {
  json j;
  j["problem"] = report.problem;
  j["converged"] = report.converged;
  j["final"]["e0"] = opt_to_json(report.final_report.e0);
  j["final"]["e1"] = report.final_report.e1;
  j["final"]["em0"] = opt_to_json(report.final_report.em0);
  j["final"]["em1"] = report.final_report.em1;
  j["final"]["ec"] = report.final_report.ec;
  json res = json::array();
  for (double v : report.final_report.kkt_residuals.values) res.push_back(v);
  j["kkt_residuals"] = res;
  j["wall_time_s"] = report.wall_time_s;
  j["iterations"]["outer"] = report.outer_iters;
  j["iterations"]["phase_one"] = report.phase_one_iters;
  j["iterations"]["phase_two"] = report.phase_two_iters;
  j["termination_reason"] = report.termination_reason;
  j["artifacts"]["trace"] = report.trace_path;
  j["artifacts"]["report"] = report.report_path;
  return j.dump(2);
}

namespace {

NpasaConfig config_from_json(const std::string& path) {
  NpasaConfig cfg;
  std::ifstream in(path);
  if (!in) throw StructuralError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid config JSON: ") + e.what(), path);
  }
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.theta = j.value("theta", cfg.theta);
  cfg.phi = j.value("phi", cfg.phi);
  cfg.lambda_bar = j.value("lambda_bar", cfg.lambda_bar);
  cfg.q0 = j.value("q0", cfg.q0);
  cfg.max_outer_iters = j.value("max_outer", cfg.max_outer_iters);
  cfg.ls.alpha = j.value("alpha", cfg.ls.alpha);
  cfg.ls.beta = j.value("beta", cfg.ls.beta);
  cfg.ls.sigma = j.value("sigma", cfg.ls.sigma);
  cfg.ls.tau = j.value("tau", cfg.ls.tau);
  cfg.ls.p0 = j.value("p0", cfg.ls.p0);
  cfg.ls.delta = j.value("delta", cfg.ls.delta);
  cfg.ls.gamma = j.value("gamma", cfg.ls.gamma);
  cfg.pco.max_iters = j.value("pco_max_iters", cfg.pco.max_iters);
  cfg.ls.pco.max_iters = j.value("pco_max_iters", cfg.ls.pco.max_iters);
  return cfg;
}

Problem problem_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StructuralError("cannot open problem file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return load_problem_json(buf.str());
}

struct SolveJob {
  Problem problem;
  std::string trace_path;
  std::string report_path;
  RunReport report;
  std::vector<TraceRecord> trace;
  bool failed = false;
  std::string error;
};

void run_one_solve(SolveJob& job, NpasaConfig cfg) {
  const int level = log_level();
  if (level >= 1) {
    cfg.on_trace = [&job, level](const TraceRecord& rec) {
      std::lock_guard<std::mutex> lock(io_mutex);
      std::cerr << "[npasa] " << job.problem.name << " k=" << rec.k << " phase="
                << rec.phase << " e1=" << rec.e1 << " ec=" << rec.ec;
      if (level >= 2)
        std::cerr << " em1=" << rec.em1 << " q=" << rec.q
                  << " branch=" << rec.branch_reason
                  << " inner=" << rec.inner_iters;
      std::cerr << "\n";
    };
  }
  const auto t0 = std::chrono::steady_clock::now();
  try {
    // Deterministic, deliberately asymmetric default start; symmetric
    // points sit on saddle manifolds of several registry problems.
    Vec x0(job.problem.n);
    for (Eigen::Index i = 0; i < job.problem.n; ++i)
      x0[i] = 0.5 + 0.1 * static_cast<double>(i);
    const Vec lambda0 = Vec::Zero(job.problem.l);
    const Vec mu0 = Vec::Zero(job.problem.omega.stacked_size());
    const SolveResult result = solve(job.problem, x0, lambda0, mu0, cfg);
    const auto t1 = std::chrono::steady_clock::now();

    job.trace = result.trace;
    job.report.problem = job.problem.name;
    job.report.converged = result.converged;
    job.report.final_report = result.final_report;
    job.report.wall_time_s =
        std::chrono::duration<double>(t1 - t0).count();
    job.report.outer_iters = result.outer_iters;
    for (const TraceRecord& rec : result.trace) {
      if (rec.phase == '1')
        ++job.report.phase_one_iters;
      else
        ++job.report.phase_two_iters;
    }
    job.report.termination_reason = result.termination_reason;
    job.report.trace_path = job.trace_path;
    job.report.report_path = job.report_path;
  } catch (const std::exception& e) {
    job.failed = true;
    job.error = e.what();
  }
}

int cmd_solve(const std::vector<std::string>& problems,
              const std::vector<std::string>& files, const std::string& config,
              double eps, bool eps_set, int max_outer, bool max_outer_set,
              const std::string& trace_path, const std::string& report_path,
              int jobs) {
  NpasaConfig cfg;
  try {
    if (!config.empty()) cfg = config_from_json(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (eps_set) cfg.epsilon = eps;
  if (max_outer_set) cfg.max_outer_iters = max_outer;

  std::vector<SolveJob> jobs_list;
  try {
    for (const std::string& name : problems) {
      SolveJob job;
      job.problem = find_problem(name);
      jobs_list.push_back(std::move(job));
    }
    for (const std::string& path : files) {
      SolveJob job;
      job.problem = problem_from_file(path);
      jobs_list.push_back(std::move(job));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (jobs_list.empty()) {
    std::cerr << "error: no problem given (use --problem or --file)\n";
    return 1;
  }

  // Artifact paths; suffix with the problem name when several run at once.
  for (SolveJob& job : jobs_list) {
    auto suffixed = [&](const std::string& base) {
      if (base.empty()) return base;
      if (jobs_list.size() == 1) return base;
      const auto dot = base.rfind('.');
      if (dot == std::string::npos) return base + "." + job.problem.name;
      return base.substr(0, dot) + "." + job.problem.name + base.substr(dot);
    };
    job.trace_path = suffixed(trace_path);
    job.report_path = suffixed(report_path);
  }

  const int workers =
      std::max(1, std::min<int>(jobs, static_cast<int>(jobs_list.size())));
  if (workers == 1) {
    for (SolveJob& job : jobs_list) run_one_solve(job, cfg);
  } else {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    std::mutex next_mutex;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        while (true) {
          std::size_t idx;
          {
            std::lock_guard<std::mutex> lock(next_mutex);
            if (next >= jobs_list.size()) return;
            idx = next++;
          }
          run_one_solve(jobs_list[idx], cfg);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  bool all_converged = true;
  bool any_input_error = false;
  for (SolveJob& job : jobs_list) {
    if (job.failed) {
      std::cerr << "error: " << job.problem.name << ": " << job.error << "\n";
      any_input_error = true;
      continue;
    }
    if (!job.trace_path.empty()) {
      std::ofstream out(job.trace_path);
      for (const TraceRecord& rec : job.trace)
        out << trace_record_to_json(rec) << "\n";
    }
    if (!job.report_path.empty()) {
      std::ofstream out(job.report_path);
      out << run_report_to_json(job.report) << "\n";
    }
    std::cout << job.problem.name << ": "
              << (job.report.converged ? "converged" : "not converged")
              << "  E1=" << job.report.final_report.e1
              << "  outer=" << job.report.outer_iters
              << "  time=" << job.report.wall_time_s << "s\n";
    all_converged = all_converged && job.report.converged;
  }
  if (any_input_error) return 1;
  return all_converged ? 0 : 2;
}

int cmd_check(const std::vector<std::string>& problems,
              const std::vector<std::string>& files) {
  std::vector<Problem> list;
  try {
    for (const std::string& name : problems) list.push_back(find_problem(name));
    for (const std::string& path : files) list.push_back(problem_from_file(path));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (list.empty()) {
    std::cerr << "error: no problem given (use --problem or --file)\n";
    return 1;
  }

  bool all_ok = true;
  for (const Problem& problem : list) {
    std::mt19937 rng(20240517);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);

    double max_rel = 0;
    std::string worst;
    for (int trial = 0; trial < 20; ++trial) {
      Vec x(problem.n);
      for (Eigen::Index i = 0; i < problem.n; ++i) x[i] = unif(rng);
      const DerivativeReport rep = check_derivatives(problem, x);
      max_rel = std::max(max_rel, std::max(rep.max_rel_err_f, rep.max_rel_err_h));
      if (!rep.pass() && worst.empty()) {
        const auto& f = rep.flagged.front();
        worst = std::string("component ") + f.kind + "[" +
                std::to_string(f.row) + "," + std::to_string(f.col) + "]";
      }
    }
    const bool fd_ok = worst.empty();
    std::cout << problem.name << "  derivatives: "
              << (fd_ok ? "pass" : ("FAIL at " + worst))
              << "  (max rel err " << max_rel << ")\n";
    all_ok = all_ok && fd_ok;

    if (problem.n + problem.omega.m() <= 10) {
      bool proj_ok = true;
      double max_gap = 0;
      for (int trial = 0; trial < 25; ++trial) {
        Vec xb(problem.n);
        for (Eigen::Index i = 0; i < problem.n; ++i) xb[i] = 2.0 * unif(rng);
        try {
          const Vec y_as = project(problem.omega, xb).y_star;
          const Vec y_or = oracle_project(problem.omega, xb);
          max_gap = std::max(max_gap, (y_as - y_or).norm());
          proj_ok = proj_ok && (y_as - y_or).norm() <= 1e-8;
        } catch (const InfeasibleError& e) {
          std::cout << problem.name << "  projection: polyhedron infeasible ("
                    << e.what() << ")\n";
          proj_ok = false;
          break;
        }
      }
      std::cout << problem.name << "  projection vs oracle: "
                << (proj_ok ? "pass" : "FAIL") << "  (max gap " << max_gap
                << ")\n";
      all_ok = all_ok && proj_ok;
    } else {
      std::cout << problem.name
                << "  projection vs oracle: skipped (n + m > 10)\n";
    }
  }
  return all_ok ? 0 : 3;
}

int cmd_list(bool as_json) {
  const std::vector<Problem> reg = registry();
  if (as_json) {
    json arr = json::array();
    for (const Problem& p : reg) {
      json row;
      row["name"] = p.name;
      row["n"] = p.n;
      row["l"] = p.l;
      row["m"] = p.omega.m();
      row["known_kkt"] = p.known_kkt.has_value();
      arr.push_back(row);
    }
    std::cout << arr.dump(2) << "\n";
  } else {
    for (const Problem& p : reg) {
      std::cout << p.name << "  n=" << p.n << " l=" << p.l
                << " m=" << p.omega.m() << "  known_kkt="
                << (p.known_kkt ? "yes" : "no") << "\n";
    }
  }
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"NPASA: two-phase active-set solver for nonlinear programs"};
  app.require_subcommand(1);

  std::vector<std::string> problems, files;
  std::string config, trace_path, report_path;
  double eps = 1e-8;
  int max_outer = 100;
  int jobs = 1;
  bool as_json = false;

  CLI::App* solve_cmd = app.add_subcommand("solve", "run the solver");
  solve_cmd->add_option("--problem", problems, "registry problem name");
  solve_cmd->add_option("--file", files, "problem JSON file");
  solve_cmd->add_option("--config", config, "solver config JSON file");
  CLI::Option* eps_opt =
      solve_cmd->add_option("--eps", eps, "stopping tolerance on E1");
  CLI::Option* mo_opt =
      solve_cmd->add_option("--max-outer", max_outer, "outer iteration budget");
  solve_cmd->add_option("--trace", trace_path, "trace JSONL output path");
  solve_cmd->add_option("--report", report_path, "run report JSON output path");
  solve_cmd->add_option("--jobs", jobs, "parallel worker threads");

  CLI::App* check_cmd =
      app.add_subcommand("check", "verify derivatives and projection kernels");
  check_cmd->add_option("--problem", problems, "registry problem name");
  check_cmd->add_option("--file", files, "problem JSON file");

  CLI::App* list_cmd = app.add_subcommand("list", "list registry problems");
  list_cmd->add_flag("--json", as_json, "machine-readable output");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    std::stringstream out;
    const int code = app.exit(e, out, out);
    std::cerr << out.str();
    return code == 0 ? 0 : 1;
  }

  try {
    if (solve_cmd->parsed())
      return cmd_solve(problems, files, config, eps, eps_opt->count() > 0,
                       max_outer, mo_opt->count() > 0, trace_path, report_path,
                       jobs);
    if (check_cmd->parsed()) return cmd_check(problems, files);
    if (list_cmd->parsed()) return cmd_list(as_json);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace npasa
