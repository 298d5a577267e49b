#include "fairdtmc/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fairdtmc {

using nlohmann::ordered_json;

namespace {

// Stream indices for derive_seed(config.seed, ...).
enum SeedStream : std::uint64_t {
  kVerifySamples = 1,
  kPilotSamples = 2,
  kExplainSamples = 3,
  kClustering = 4,
  kRepairEvaluation = 5,
  kSwarm = 6,
  kReverifySamples = 7,
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

std::vector<std::string> state_names(const Dtmc& dtmc, const std::vector<std::size_t>& states) {
  std::vector<std::string> out;
  for (std::size_t s : states) out.push_back(dtmc.layout().states[s]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const ordered_json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  const std::filesystem::path base = path.parent_path();
  RunConfig c;
  try {
    if (doc.contains("model")) c.model = resolve(base, doc["model"].get<std::string>());
    if (doc.contains("dataset")) c.dataset = resolve(base, doc["dataset"].get<std::string>());
    c.protected_feature = doc.value("protected", c.protected_feature);
    c.label = doc.value("label", c.label);
    c.mu_eps = doc.value("mu_eps", c.mu_eps);
    c.mu_delta = doc.value("mu_delta", c.mu_delta);
    c.xi = doc.value("xi", c.xi);
    c.seed = doc.value("seed", c.seed);
    c.max_traces = doc.value("max_traces", c.max_traces);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.workers = doc.value("workers", c.workers);
    c.pilot_size = doc.value("pilot_size", c.pilot_size);
    if (doc.contains("abstraction"))
      for (const auto& t : doc["abstraction"])
        c.abstraction.push_back({t.at("target").get<std::string>(), t.value("method", std::string("kmeans")),
                                 t.value("k", std::size_t{2})});
    if (doc.contains("distribution"))
      for (const auto& [name, w] : doc["distribution"].items())
        c.distribution[name] = w.get<std::vector<double>>();
    if (doc.contains("repair")) {
      const auto& r = doc["repair"];
      c.repair.top_k = r.value("K", c.repair.top_k);
      c.repair.alpha = r.value("alpha", c.repair.alpha);
      c.repair.n_eval = r.value("n_eval", c.repair.n_eval);
      c.repair.swarm_size = r.value("swarm_size", c.repair.swarm_size);
      c.repair.max_iterations = r.value("max_iterations", c.repair.max_iterations);
    }
    c.no_repair = doc.value("no_repair", c.no_repair);
    if (doc.contains("out_dir")) c.out_dir = resolve(base, doc["out_dir"].get<std::string>());
  } catch (const ordered_json::exception& e) {
    throw ConfigError(std::string("config schema error: ") + e.what());
  }
  return c;
}

void validate_run_config(const RunConfig& c) {
  auto open01 = [](double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) throw ConfigError(std::string(name) + " must lie in (0, 1)");
  };
  if (c.model.empty()) throw ConfigError("no model given");
  open01(c.mu_eps, "mu_eps");
  open01(c.mu_delta, "mu_delta");
  open01(c.xi, "xi");
  open01(c.repair.alpha, "alpha");
  if (c.max_traces == 0) throw ConfigError("max_traces must be >= 1");
  if (c.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (c.pilot_size == 0) throw ConfigError("pilot_size must be >= 1");
  if (c.repair.top_k == 0 || c.repair.n_eval == 0 || c.repair.swarm_size == 0)
    throw ConfigError("repair K, n_eval and swarm_size must be >= 1");
  for (const auto& t : c.abstraction) {
    if (t.method != "kmeans" && t.method != "bins")
      throw ConfigError("abstraction method must be 'kmeans' or 'bins', got '" + t.method + "'");
    if (t.k == 0) throw ConfigError("abstraction k must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// Output

std::string export_dot(const Dtmc& dtmc) {
  std::ostringstream out;
  out << "digraph dtmc {\n  rankdir=LR;\n";
  for (std::size_t s = 0; s < dtmc.m(); ++s)
    out << "  s" << s << " [label=\"" << dot_escape(dtmc.layout().states[s]) << "\"];\n";
  for (std::size_t p = 0; p < dtmc.m(); ++p)
    for (std::size_t q = 0; q < dtmc.m(); ++q) {
      const double v = dtmc.prob(p, q);
      if (v != 0.0) out << "  s" << p << " -> s" << q << " [label=\"" << fixed4(v) << "\"];\n";
    }
  out << "}\n";
  return out.str();
}

std::string report_json(const VerificationReport& r, const SensitivityRanking* ranking,
                        const RepairSummary* repair) {
  ordered_json doc;
  doc["verdict"] = r.verdict.pass ? "PASS" : "FAIL";
  ordered_json groups = ordered_json::object();
  for (const auto& g : r.verdict.group_probs) groups[g.group] = g.prob;
  doc["group_probs"] = std::move(groups);
  doc["label"] = r.label;
  doc["max_diff"] = r.verdict.max_diff;
  doc["xi"] = r.verdict.xi;
  doc["pac"] = {{"mu_eps", r.mu_eps}, {"mu_delta", r.mu_delta}, {"eps", r.pac.epsilon}, {"delta", r.pac.delta}};
  doc["traces_used"] = r.traces_used;
  doc["states"] = r.states;
  if (ranking) {
    double top = 0.0;
    for (const auto& e : ranking->entries) top = std::max(top, e.sensitivity);
    ordered_json list = ordered_json::array();
    for (const auto& e : ranking->entries)
      list.push_back({{"target", e.target},
                      {"sensitivity", e.sensitivity},
                      {"normalized", top > 0.0 ? e.sensitivity / top : 0.0}});
    doc["sensitivity"] = std::move(list);
  }
  if (repair) {
    const RepairResult& rr = repair->result;
    doc["repair"] = {{"before", repair->before},
                     {"after", repair->after},
                     {"accuracy_before", rr.accuracy_before},
                     {"accuracy_after", rr.accuracy_after},
                     {"iterations", rr.iterations},
                     {"prob_diff_eval_before", rr.prob_diff_before},
                     {"prob_diff_eval_after", rr.prob_diff_after},
                     {"fairness_achieved", rr.fairness_achieved},
                     {"stop_reason", rr.stop_reason},
                     {"targets", rr.targets},
                     {"verdict_after", repair->verdict_after},
                     {"reverify_non_pac", repair->reverify_non_pac}};
  }
  doc["non_pac_flag"] = r.non_pac;
  doc["starved_states"] = r.starved_states;
  return doc.dump(2) + "\n";
}

void write_report(const VerificationReport& report, const SensitivityRanking* ranking,
                  const RepairSummary* repair, const std::filesystem::path& path) {
  write_text(path, report_json(report, ranking, repair));
}

// ---------------------------------------------------------------------------
// Orchestration

RunOutcome run_verify_repair(const RunConfig& config) {
  validate_run_config(config);
  Network net = [&] {
    try {
      return load_network(config.model);
    } catch (const ModelError& e) {
      throw ConfigError(e.what());
    }
  }();

  std::size_t protected_idx = 0;
  std::size_t label_idx = net.labels().size() - 1;
  try {
    protected_idx = config.protected_feature.empty() ? net.protected_feature().index
                                                     : net.feature(config.protected_feature).index;
    if (!config.label.empty()) label_idx = net.label_index(config.label);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  if (!net.features()[protected_idx].categorical())
    throw ConfigError("protected feature '" + net.features()[protected_idx].name + "' is not categorical");

  std::vector<TargetConfig> targets;
  try {
    for (const auto& t : config.abstraction)
      targets.push_back({parse_target(t.target, net),
                         t.method == "bins" ? Discretizer::Method::bins : Discretizer::Method::kmeans, t.k});
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }

  InputDistribution dist{derive_seed(config.seed, kVerifySamples), config.distribution};
  std::optional<Sampler> sampler;
  try {
    sampler.emplace(dist, net.features());
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }

  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + config.out_dir.string() + "'");

  RunOutcome outcome;
  const PacParams pac = derive_eps_delta(config.mu_eps, config.mu_delta);
  LearnOptions learn;
  learn.pac = pac;
  learn.max_traces = config.max_traces;
  learn.batch_size = config.batch_size;
  learn.workers = config.workers;

  const StateSpace fair_space = build_state_space(net, protected_idx, {}, {});
  const std::size_t label_state = fair_space.layout().outcome_states[label_idx];
  auto verify = [&](const Network& n, const Sampler& s) {
    Dtmc chain = learn_dtmc(n, s, fair_space, learn);
    FairnessVerdict v = fairness_verdict(group_outcome_probs(chain, label_state), config.xi);
    return std::pair{std::move(chain), std::move(v)};
  };

  auto [chain, verdict] = verify(net, *sampler);
  VerificationReport& report = outcome.report;
  report.verdict = verdict;
  report.pac = pac;
  report.mu_eps = config.mu_eps;
  report.mu_delta = config.mu_delta;
  report.label = net.labels()[label_idx];
  report.traces_used = chain.counts().trace_count();
  report.states = chain.layout().states;
  report.starved_states = state_names(chain, chain.starved_states());
  report.non_pac = !chain.pac_satisfied();

  const auto dtmc_path = config.out_dir / "dtmc.txt";
  const auto dot_path = config.out_dir / "dtmc.dot";
  const auto report_path = config.out_dir / "report.json";
  {
    std::ostringstream text;
    write_dtmc(chain, text);
    write_text(dtmc_path, text.str());
    write_text(dot_path, export_dot(chain));
    outcome.artifacts.insert(outcome.artifacts.end(), {dtmc_path, dot_path});
  }

  auto finish = [&](int code) {
    write_report(report, outcome.ranking ? &*outcome.ranking : nullptr,
                 outcome.repair ? &*outcome.repair : nullptr, report_path);
    outcome.artifacts.push_back(report_path);
    outcome.exit_code = code;
    return outcome;
  };

  if (report.non_pac) return finish(3);
  if (verdict.pass) return finish(0);

  // Explain: learn the configured abstraction and rank its targets.
  if (!targets.empty()) {
    InputDistribution pilot_dist = dist;
    pilot_dist.seed = derive_seed(config.seed, kPilotSamples);
    const std::vector<Vector> pilot_inputs = Sampler(pilot_dist, net.features()).batch(0, config.pilot_size, config.workers);
    std::vector<ActivationTrace> pilot;
    pilot.reserve(pilot_inputs.size());
    for (const Vector& x : pilot_inputs) pilot.push_back(net.trace(x));

    std::map<std::string, Discretizer> discretizers;
    std::vector<Target> selected;
    try {
      discretizers = fit_discretizers(net, targets, pilot, derive_seed(config.seed, kClustering));
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
    for (const auto& t : targets) selected.push_back(t.target);
    const StateSpace space = build_state_space(net, protected_idx, selected, discretizers);

    InputDistribution explain_dist = dist;
    explain_dist.seed = derive_seed(config.seed, kExplainSamples);
    const Dtmc explain = learn_dtmc(net, Sampler(explain_dist, net.features()), space, learn);
    if (!explain.pac_satisfied()) {
      report.non_pac = true;
      for (const auto& s : state_names(explain, explain.starved_states()))
        report.starved_states.push_back("explanation:" + s);
    }
    const auto explain_path = config.out_dir / "explain_dtmc.txt";
    const auto explain_dot = config.out_dir / "explain_dtmc.dot";
    std::ostringstream text;
    write_dtmc(explain, text);
    write_text(explain_path, text.str());
    write_text(explain_dot, export_dot(explain));
    outcome.ranking = rank_targets(explain, {}, space.layout().outcome_states[label_idx]);
    std::ostringstream csv;
    write_ranking_csv(*outcome.ranking, csv);
    const auto csv_path = config.out_dir / "sensitivity.csv";
    write_text(csv_path, csv.str());
    outcome.artifacts.insert(outcome.artifacts.end(), {explain_path, explain_dot, csv_path});
  }

  if (config.no_repair || !config.dataset || !outcome.ranking || outcome.ranking->entries.empty())
    return finish(2);

  Dataset data;
  try {
    data = load_dataset(*config.dataset, net);
  } catch (const ModelError& e) {
    throw ConfigError(e.what());
  }
  if (data.empty()) throw ConfigError("dataset is empty");

  RepairConfig rc;
  rc.top_k = config.repair.top_k;
  rc.xi = config.xi;
  rc.alpha = config.repair.alpha;
  rc.n_eval = config.repair.n_eval;
  rc.swarm_size = config.repair.swarm_size;
  rc.max_iterations = config.repair.max_iterations;
  rc.label = label_idx;
  rc.protected_feature = protected_idx;
  rc.distribution = dist;
  rc.distribution.seed = derive_seed(config.seed, kRepairEvaluation);
  rc.seed = derive_seed(config.seed, kSwarm);
  rc.workers = config.workers;
  RepairOutput repaired = repair_network(net, *outcome.ranking, data, rc);

  const auto model_path = config.out_dir / "repaired_model.json";
  write_text(model_path, serialize_network(repaired.network));
  outcome.artifacts.push_back(model_path);

  InputDistribution reverify_dist = dist;
  reverify_dist.seed = derive_seed(config.seed, kReverifySamples);
  auto [after_chain, after] = verify(repaired.network, Sampler(reverify_dist, net.features()));

  RepairSummary summary;
  summary.result = std::move(repaired.result);
  summary.before = verdict.max_diff;
  summary.after = after.max_diff;
  summary.verdict_after = after.pass ? "PASS" : "FAIL";
  summary.reverify_non_pac = !after_chain.pac_satisfied();
  outcome.repair = std::move(summary);

  if (outcome.repair->reverify_non_pac) return finish(3);
  return finish(after.pass ? 0 : 2);
}

}  // namespace fairdtmc
