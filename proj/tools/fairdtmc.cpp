// Command-line front end: verify / repair a network, or render a learned chain.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fairdtmc/error.hpp"
#include "fairdtmc/learner.hpp"
#include "fairdtmc/pipeline.hpp"

namespace {

struct Overrides {
  std::string model;
  std::string config;
  std::string dataset;
  std::optional<double> mu_eps;
  std::optional<double> mu_delta;
  std::optional<double> xi;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> max_traces;
  std::optional<std::size_t> workers;
  std::string out_dir;
  bool no_repair = false;
};

void add_run_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--model", o.model, "Model file (JSON)");
  cmd->add_option("--config", o.config, "Run config file (JSON)");
  cmd->add_option("--dataset", o.dataset, "Labelled CSV used for repair accuracy");
  cmd->add_option("--mu-eps", o.mu_eps, "Accuracy of the fairness verdict");
  cmd->add_option("--mu-delta", o.mu_delta, "Confidence of the fairness verdict");
  cmd->add_option("--xi", o.xi, "Fairness tolerance");
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--max-traces", o.max_traces, "Trace budget per learned chain");
  cmd->add_option("--workers", o.workers, "Sampling threads");
  cmd->add_option("--out-dir", o.out_dir, "Directory for report and artifacts");
}

fairdtmc::RunConfig make_config(const Overrides& o) {
  fairdtmc::RunConfig c = o.config.empty() ? fairdtmc::RunConfig{} : fairdtmc::load_run_config(o.config);
  if (!o.model.empty()) c.model = o.model;
  if (!o.dataset.empty()) c.dataset = o.dataset;
  if (o.mu_eps) c.mu_eps = *o.mu_eps;
  if (o.mu_delta) c.mu_delta = *o.mu_delta;
  if (o.xi) c.xi = *o.xi;
  if (o.seed) c.seed = *o.seed;
  if (o.max_traces) c.max_traces = *o.max_traces;
  if (o.workers) c.workers = *o.workers;
  if (!o.out_dir.empty()) c.out_dir = o.out_dir;
  if (o.no_repair) c.no_repair = true;
  return c;
}

int run(const fairdtmc::RunConfig& config) {
  const fairdtmc::RunOutcome out = fairdtmc::run_verify_repair(config);
  const auto& r = out.report;
  std::cout << "verdict: " << (r.verdict.pass ? "PASS" : "FAIL") << "  max_diff=" << r.verdict.max_diff
            << "  xi=" << r.verdict.xi << "  traces=" << r.traces_used << "\n";
  for (const auto& g : r.verdict.group_probs)
    std::cout << "  P(" << r.label << " | " << g.group << ") = " << g.prob << "\n";
  if (r.non_pac) std::cout << "warning: trace budget exhausted, result is not PAC\n";
  if (out.ranking && !out.ranking->entries.empty()) {
    std::cout << "most sensitive:";
    for (std::size_t i = 0; i < std::min<std::size_t>(5, out.ranking->entries.size()); ++i)
      std::cout << " " << out.ranking->entries[i].target << "(" << out.ranking->entries[i].sensitivity << ")";
    std::cout << "\n";
  }
  if (out.repair)
    std::cout << "repair: max_diff " << out.repair->before << " -> " << out.repair->after << ", accuracy "
              << out.repair->result.accuracy_before << " -> " << out.repair->result.accuracy_after << ", "
              << out.repair->result.iterations << " iterations, verdict " << out.repair->verdict_after << "\n";
  for (const auto& p : out.artifacts) std::cout << "wrote " << p.string() << "\n";
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn a Markov chain abstraction of a network, check group fairness, explain and repair"};
  app.require_subcommand(1);

  Overrides verify_opts;
  auto* verify = app.add_subcommand("verify", "Check fairness; repair on failure unless --no-repair");
  add_run_options(verify, verify_opts);
  verify->add_flag("--no-repair", verify_opts.no_repair, "Stop after sensitivity analysis");

  Overrides repair_opts;
  auto* repair = app.add_subcommand("repair", "Check fairness and repair on failure (dataset required)");
  add_run_options(repair, repair_opts);

  std::string dtmc_in;
  std::string dot_out;
  auto* exporter = app.add_subcommand("export", "Render a DTMC text file as Graphviz DOT");
  exporter->add_option("--dtmc", dtmc_in, "DTMC text file")->required();
  exporter->add_option("--out", dot_out, "Output .dot file (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*verify) return run(make_config(verify_opts));
    if (*repair) {
      fairdtmc::RunConfig c = make_config(repair_opts);
      if (!c.dataset) throw fairdtmc::ConfigError("repair needs --dataset or a dataset in the config");
      c.no_repair = false;
      return run(c);
    }
    if (*exporter) {
      std::ifstream in(dtmc_in);
      if (!in) throw fairdtmc::ConfigError("cannot open '" + dtmc_in + "'");
      const std::string dot = fairdtmc::export_dot(fairdtmc::read_dtmc(in));
      if (dot_out.empty()) {
        std::cout << dot;
      } else {
        std::ofstream out(dot_out);
        if (!out) throw fairdtmc::ConfigError("cannot write '" + dot_out + "'");
        out << dot;
      }
      return 0;
    }
  } catch (const fairdtmc::SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const fairdtmc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
