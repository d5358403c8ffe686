#include "rrc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <system_error>

#include "CLI11.hpp"
#include "json.hpp"
#include "rrc/ergodicity.hpp"
#include "rrc/format.hpp"
#include "rrc/graph.hpp"
#include "rrc/markov.hpp"
#include "rrc/protocol.hpp"
#include "rrc/simulator.hpp"

namespace rrc::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OracleFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string graph_path;
  std::uint64_t seed = 1;
  int steps = 100;
  std::string out_dir = ".";
  std::string y0;
  std::string z0;
  std::optional<double> q;
  std::string mode = "robust";
  std::string gating = "threshold";
  std::optional<double> mu_z;
  std::optional<std::size_t> samples;
  unsigned threads = 1;
  int runs = 1;
  double error_tol = 1e-6;
  double tol = 1e-10;
};

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> values;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t\r") + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ConfigError(flag + ": cannot parse '" + item + "' as a number");
    }
    if (used != item.size()) throw ConfigError(flag + ": cannot parse '" + item + "' as a number");
    values.push_back(v);
  }
  if (values.empty()) throw ConfigError(flag + ": empty value list");
  return values;
}

// Inline comma-separated list, or a one-column file when the argument names
// an existing file.
std::vector<double> read_values(const std::string& arg, const std::string& flag) {
  std::error_code ec;
  if (!fs::is_regular_file(arg, ec)) return parse_list(arg, flag);
  std::ifstream in(arg);
  if (!in) throw IoError(flag + ": cannot read file " + arg);
  std::string joined, line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!joined.empty()) joined += ',';
    joined += line;
  }
  return parse_list(joined, flag + " file " + arg);
}

std::string hex(std::uint64_t v) {
  char buffer[20];
  std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(v));
  return buffer;
}

Json real_array(const std::vector<double>& values) {
  Json a = Json::array();
  for (double v : values) a.push_back(v);
  return a;
}

Json optional_real(std::optional<double> v) { return v ? Json(*v) : Json(nullptr); }

/// Everything resolved from flags and files; shared by all subcommands.
struct Setup {
  Graph graph;
  InitialConditions init;
  RunConfig config;
  double c = 0.0;
  int block_length = 0;
  std::vector<double> mu;
  Json provenance;
};

Setup resolve(const std::string& command, const Options& opt, bool needs_y0) {
  if (opt.steps < 1) throw ConfigError("--steps must be at least 1");
  if (opt.q && !(*opt.q > 0.0 && *opt.q <= 1.0)) throw ConfigError("--q must lie in (0,1]");

  Graph graph = [&] {
    try {
      return load_graph_file(opt.graph_path);
    } catch (const std::system_error& e) {
      throw IoError(std::string("--graph: ") + e.what());
    }
  }();
  if (opt.q) graph = graph.with_uniform_reliability(*opt.q);
  const int m = graph.node_count();

  InitialConditions init;
  if (needs_y0) {
    if (opt.y0.empty()) throw ConfigError("--y0 is required");
    init.y0 = read_values(opt.y0, "--y0");
  } else {
    init.y0 = opt.y0.empty() ? std::vector<double>(m, 0.0) : read_values(opt.y0, "--y0");
  }
  init.z0 = opt.z0.empty() ? std::vector<double>(m, 1.0) : read_values(opt.z0, "--z0");

  GatingPolicy gating;
  if (opt.gating != "threshold" && opt.gating != "positive") {
    throw ConfigError("--gating must be 'threshold' or 'positive'");
  }
  if (opt.mode != "robust" && opt.mode != "ideal") {
    throw ConfigError("--mode must be 'robust' or 'ideal'");
  }
  init.validate(m, opt.gating == "positive");

  const double c = derive_c(graph);
  const int block_length = derive_block_length(graph);
  std::vector<double> mu;
  if (opt.gating == "threshold") {
    for (NodeId i = 0; i < m; ++i) {
      if (opt.mu_z) {
        mu.push_back(mu_from_bound(graph, *opt.mu_z, c, block_length));
      } else if (init.z0[i] > 0.0) {
        mu.push_back(mu_for_node(graph, init.z0, i, c, block_length));
      } else {
        throw ConfigError("--z0: node " + std::to_string(i + 1) +
                          " has z0 = 0 and cannot derive its gate; pass --mu-z");
      }
    }
    gating = GatingPolicy::threshold(mu);
  }

  RunConfig config{graph,
                   init,
                   opt.steps,
                   opt.seed,
                   0,
                   gating,
                   opt.mode == "ideal" ? Mode::ideal : Mode::robust};
  config.validate();

  Json prov;
  prov["command"] = command;
  prov["graph_fingerprint"] = hex(graph.fingerprint());
  prov["graph"] = Json::parse(graph.to_json());
  prov["seed"] = opt.seed;
  prov["steps"] = opt.steps;
  prov["mode"] = opt.mode;
  prov["gating"] = opt.gating;
  prov["q_override"] = optional_real(opt.q);
  prov["mu_z"] = optional_real(opt.mu_z);
  prov["y0"] = real_array(init.y0);
  prov["z0"] = real_array(init.z0);
  if (command == "analyze" || command == "montecarlo") {
    prov["samples"] = opt.samples ? Json(*opt.samples) : Json(nullptr);
  }
  if (command == "montecarlo") {
    prov["runs"] = opt.runs;
    prov["error_tol"] = opt.error_tol;
  }
  if (command == "oracle") prov["tol"] = opt.tol;

  return {graph, init, config, c, block_length, mu, prov};
}

std::string csv_header(const Json& provenance) {
  std::string header;
  for (const auto& [key, value] : provenance.items()) {
    header += "# " + key + ": " + value.dump() + "\n";
  }
  return header;
}

fs::path prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("--out: cannot create directory " + dir);
  return fs::path(dir);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

/// Exact w/d when enumeration is small enough and no sample count was
/// requested; Monte Carlo otherwise.
BlockStatistics block_statistics(const Setup& s, const Options& opt) {
  const int bits = s.graph.link_count() * s.block_length;
  if (!opt.samples && bits <= kMaxEnumerationBits) return enumerate_w_d(s.graph, s.block_length);
  const std::size_t samples = opt.samples.value_or(10000);
  if (samples < 1) throw ConfigError("--samples must be at least 1");
  return estimate_w_d(s.graph, s.block_length, samples, s.config.seed, opt.threads);
}

Json constants_json(const Setup& s, const BlockStatistics& stats, const ErgodicityConstants& k) {
  Json j;
  j["m"] = s.graph.node_count();
  j["n"] = AugmentedSpace(s.graph).size();
  j["c"] = k.c;
  j["l"] = k.l;
  j["block_length"] = k.block_length;
  j["w"] = k.w;
  j["w_method"] = stats.exact ? "exact" : "monte_carlo";
  j["w_samples"] = stats.samples;
  j["w_stderr"] = stats.w_stderr();
  j["w_unreliable"] = stats.insufficient();
  j["d"] = k.d;
  j["gamma"] = real_array(stats.gamma);
  j["bounds_defined"] = k.defined;
  j["alpha"] = k.defined ? Json(k.alpha) : Json(nullptr);
  j["beta"] = k.defined ? Json(k.beta) : Json(nullptr);
  j["k_threshold"] = k.defined ? Json(k.k_threshold) : Json(nullptr);
  j["mu"] = s.mu.empty() ? Json(nullptr) : real_array(s.mu);
  return j;
}

int do_simulate(const Options& opt, std::ostream& out) {
  const Setup s = resolve("simulate", opt, true);
  const fs::path dir = prepare_out_dir(opt.out_dir);
  const Trace trace = run(s.config);
  const std::string header = csv_header(s.provenance);

  std::ostringstream trace_csv, mask_csv;
  trace_csv << header;
  write_trace_csv(trace_csv, trace, s.graph);
  mask_csv << header;
  const auto masks = trace.masks();
  write_mask_csv(mask_csv, masks, s.graph);

  const double target = s.init.target();
  const double error = trace.final_error(target);
  Json summary;
  summary["provenance"] = s.provenance;
  summary["target"] = target;
  summary["final_round"] = trace.steps();
  Json finals = Json::array();
  for (const auto& e : trace.rounds.back().estimate) finals.push_back(optional_real(e));
  summary["final_estimates"] = finals;
  summary["max_abs_error"] = std::isfinite(error) ? Json(error) : Json(nullptr);
  Json counts = Json::array();
  for (const auto& times : trace.update_times) counts.push_back(times.size());
  summary["update_counts"] = counts;
  summary["estimate_reporting"] = "held_last_gated_value";
  summary["mu"] = s.mu.empty() ? Json(nullptr) : real_array(s.mu);

  write_file(dir / "trace.csv", trace_csv.str());
  write_file(dir / "masks.csv", mask_csv.str());
  write_file(dir / "summary.json", summary.dump(2) + "\n");

  out << "target " << format_real(target) << "\n";
  out << "max final error "
      << (std::isfinite(error) ? format_real(error) : std::string("undefined")) << "\n";
  return kOk;
}

int do_analyze(const Options& opt, std::ostream& out, std::ostream& err) {
  const Setup s = resolve("analyze", opt, false);
  const fs::path dir = prepare_out_dir(opt.out_dir);
  const BlockStatistics stats = block_statistics(s, opt);
  const ErgodicityConstants k = derive_constants(s.graph, stats);

  const auto masks = draw_masks(s.config);
  const ErgodicityTrace et = trace_ergodicity(s.graph, masks, s.block_length);
  const std::string header = csv_header(s.provenance);

  std::ostringstream delta_csv;
  delta_csv << header << "k,delta_Tk,beta_pow_k,certified\n";
  if (k.defined) {
    for (const Certification& c : certify_convergence(et.delta, k)) {
      delta_csv << c.k << ',' << format_real(c.delta) << ',' << format_real(c.beta_pow) << ','
                << (c.in_domain ? (c.certified ? "1" : "0") : "") << '\n';
    }
  } else {
    for (std::size_t i = 0; i < et.delta.size(); ++i) {
      delta_csv << i + 1 << ',' << format_real(et.delta[i]) << ",,\n";
    }
  }

  std::ostringstream block_csv;
  block_csv << header << "block,lambda,scrambling\n";
  for (const BlockLambda& b : et.blocks) {
    block_csv << b.block << ',' << format_real(b.lambda) << ',' << (b.scrambling ? 1 : 0) << '\n';
  }

  Json report;
  report["provenance"] = s.provenance;
  report["constants"] = constants_json(s, stats, k);
  report["final_delta"] = et.delta.empty() ? Json(nullptr) : Json(et.delta.back());

  write_file(dir / "report.json", report.dump(2) + "\n");
  write_file(dir / "delta_trace.csv", delta_csv.str());
  write_file(dir / "block_lambda.csv", block_csv.str());

  if (stats.insufficient()) {
    err << "warning: no scrambling block observed; w estimate unreliable, bounds undefined\n";
  }
  out << "c " << format_real(k.c) << "\nl " << k.l << "\nblock_length " << k.block_length
      << "\nw " << format_real(k.w) << "\nd " << format_real(k.d) << "\n";
  return kOk;
}

struct RunOutcome {
  double final_error = 0.0;
  std::vector<std::uint8_t> violation;  // per k: delta(T_k) > beta^k
  double final_delta = 0.0;
};

int do_montecarlo(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.runs < 1) throw ConfigError("--runs must be at least 1");
  const Setup s = resolve("montecarlo", opt, true);
  const fs::path dir = prepare_out_dir(opt.out_dir);
  const BlockStatistics stats = block_statistics(s, opt);
  const ErgodicityConstants k = derive_constants(s.graph, stats);
  const double target = s.init.target();

  const auto outcomes = parallel_map(static_cast<std::size_t>(opt.runs), opt.threads,
                                     [&](std::size_t r) {
                                       RunConfig config = s.config;
                                       config.stream = r;
                                       const Trace trace = run(config);
                                       const auto masks = trace.masks();
                                       const ErgodicityTrace et =
                                           trace_ergodicity(s.graph, masks, s.block_length);
                                       RunOutcome o;
                                       o.final_error = trace.final_error(target);
                                       o.final_delta = et.delta.back();
                                       if (k.defined) {
                                         for (const auto& c : certify_convergence(et.delta, k)) {
                                           o.violation.push_back(c.delta > c.beta_pow ? 1 : 0);
                                         }
                                       }
                                       return o;
                                     });

  const std::string header = csv_header(s.provenance);
  std::ostringstream runs_csv;
  runs_csv << header << "run,final_error,converged,final_delta\n";
  int converged = 0;
  double worst = 0.0;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    const RunOutcome& o = outcomes[r];
    const bool ok = o.final_error < opt.error_tol;
    converged += ok ? 1 : 0;
    worst = std::max(worst, o.final_error);
    runs_csv << r << ',' << (std::isfinite(o.final_error) ? format_real(o.final_error) : "inf")
             << ',' << (ok ? 1 : 0) << ',' << format_real(o.final_delta) << '\n';
  }

  std::ostringstream bound_csv;
  bound_csv << header << "k,violations,fraction,alpha_pow_k,bound,within_bound\n";
  bool all_within = true;
  const double runs = opt.runs;
  if (k.defined) {
    for (int step = k.k_threshold; step <= opt.steps; ++step) {
      int violations = 0;
      for (const RunOutcome& o : outcomes) violations += o.violation[step - 1];
      const double fraction = violations / runs;
      const double ak = std::pow(k.alpha, step);
      const double bound = ak + 3.0 * std::sqrt(ak * (1.0 - ak) / runs);
      const bool within = fraction <= bound;
      all_within = all_within && within;
      bound_csv << step << ',' << violations << ',' << format_real(fraction) << ','
                << format_real(ak) << ',' << format_real(bound) << ',' << (within ? 1 : 0)
                << '\n';
    }
  }

  Json summary;
  summary["provenance"] = s.provenance;
  summary["constants"] = constants_json(s, stats, k);
  summary["target"] = target;
  summary["runs"] = opt.runs;
  summary["converged_runs"] = converged;
  summary["max_final_error"] = std::isfinite(worst) ? Json(worst) : Json(nullptr);
  summary["delta_bound_evaluated"] = k.defined;
  summary["delta_bound_within_tolerance"] = k.defined ? Json(all_within) : Json(nullptr);

  write_file(dir / "montecarlo.json", summary.dump(2) + "\n");
  write_file(dir / "runs.csv", runs_csv.str());
  write_file(dir / "delta_bound.csv", bound_csv.str());

  if (!k.defined) err << "warning: no scrambling block observed; delta bound not evaluated\n";
  out << "converged " << converged << "/" << opt.runs << "\n";
  return kOk;
}

int do_oracle(const Options& opt, std::ostream& out) {
  if (!(opt.tol >= 0.0)) throw ConfigError("--tol must be non-negative");
  const Setup s = resolve("oracle", opt, true);
  const Trace trace = run(s.config);
  const OracleReport report = oracle_check(trace, s.graph, opt.tol);
  out << "max deviation " << format_real(report.worst) << "\n";
  if (!report.passed()) {
    const OracleFailure& f = *report.first_failure;
    throw OracleFailed("oracle check failed at round " + std::to_string(f.round) + ", index " +
                       AugmentedSpace(s.graph).label(f.index) + " (" + f.component +
                       "), deviation " + format_real(f.deviation));
  }
  out << "oracle check passed\n";
  return kOk;
}

void add_common(CLI::App* sub, Options& opt) {
  sub->add_option("--graph", opt.graph_path, "Graph document (JSON)")->required();
  sub->add_option("--seed", opt.seed, "Random seed")->capture_default_str();
  sub->add_option("--steps", opt.steps, "Number of rounds K (>= 1)")->capture_default_str();
  sub->add_option("--out", opt.out_dir, "Output directory")->capture_default_str();
  sub->add_option("--y0", opt.y0, "Initial y: comma list or one-column file");
  sub->add_option("--z0", opt.z0, "Initial z: comma list or one-column file (default all ones)");
  sub->add_option("--q", opt.q, "Override every link's reliability");
  sub->add_option("--mode", opt.mode, "robust or ideal")->capture_default_str();
  sub->add_option("--gating", opt.gating, "threshold or positive")->capture_default_str();
  sub->add_option("--mu-z", opt.mu_z, "Lower bound on sum(z0) used for the gate threshold");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust ratio consensus simulator and Markov-chain analyzer", "rrc"};
  app.require_subcommand(1);
  Options opt;

  auto* simulate = app.add_subcommand("simulate", "Run one seeded simulation and write traces");
  add_common(simulate, opt);

  auto* analyze = app.add_subcommand("analyze", "Derive ergodicity constants and delta traces");
  add_common(analyze, opt);
  analyze->add_option("--samples", opt.samples, "Monte Carlo samples for w and d");
  analyze->add_option("--threads", opt.threads, "Worker threads (0 = all cores)");

  auto* montecarlo = app.add_subcommand("montecarlo", "Aggregate many independent runs");
  add_common(montecarlo, opt);
  montecarlo->add_option("--runs", opt.runs, "Number of runs R")->capture_default_str();
  montecarlo->add_option("--samples", opt.samples, "Monte Carlo samples for w and d");
  montecarlo->add_option("--threads", opt.threads, "Worker threads (0 = all cores)");
  montecarlo->add_option("--error-tol", opt.error_tol, "Convergence threshold on final error")
      ->capture_default_str();

  auto* oracle = app.add_subcommand("oracle", "Check the protocol against the matrix iteration");
  add_common(oracle, opt);
  oracle->add_option("--tol", opt.tol, "Maximum allowed deviation")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kValidation;
  }

  try {
    if (simulate->parsed()) return do_simulate(opt, out);
    if (analyze->parsed()) return do_analyze(opt, out, err);
    if (montecarlo->parsed()) return do_montecarlo(opt, out, err);
    return do_oracle(opt, out);
  } catch (const OracleFailed& e) {
    err << "error: " << e.what() << "\n";
    return kOracleFailure;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const GraphError& e) {
    err << "error: --graph: " << e.what() << "\n";
    return kValidation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }
}

}  // namespace rrc::cli
