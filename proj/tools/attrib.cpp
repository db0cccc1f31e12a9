// Command-line front end: pipeline stages, metrics, the annotation service
// and result reports.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "attrib/metrics.hpp"
#include "attrib/pipeline.hpp"
#include "attrib/service.hpp"

namespace fs = std::filesystem;
using namespace attrib;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::string manifest;
  std::string budget_policy;
  std::size_t fixed_budget = 0;
  std::string provider;
  std::string provider_url;
  std::string transcripts;
  std::string scorer_url;
  std::string reduction_order;
  std::string cohort;
};

RunConfig build_config(const Globals& g) {
  RunConfig c = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (!g.manifest.empty()) c.manifest = g.manifest;
  if (!g.out.empty()) c.out_dir = g.out;
  if (!g.budget_policy.empty()) {
    const auto m = parse_enum<BudgetMode>(g.budget_policy);
    if (!m) throw ConfigError("unknown budget policy '" + g.budget_policy + "'");
    c.budget.mode = *m;
  }
  if (g.fixed_budget) {
    c.budget.fixed_chars = g.fixed_budget;
    if (g.budget_policy.empty()) c.budget.mode = BudgetMode::Fixed;
  }
  if (!g.provider.empty()) c.provider.kind = g.provider;
  if (!g.provider_url.empty()) c.provider.url = g.provider_url;
  if (!g.transcripts.empty()) c.provider.transcripts = g.transcripts;
  if (!g.scorer_url.empty()) {
    c.scorer.url = g.scorer_url;
    c.scorer.builtin = false;
  }
  if (!g.reduction_order.empty()) c.reduction_opts.order = g.reduction_order == "frozen" ? ReductionOrder::Frozen : ReductionOrder::Adaptive;
  if (!g.cohort.empty()) c.cohort = g.cohort;
  return c;
}

int run_stages(const Globals& g, const std::string& target) {
  auto cfg = build_config(g);
  Pipeline p(cfg);
  const auto res = p.run(Pipeline::stages_for(target));
  std::cout << "run_id=" << res.manifest.run_id << '\n';
  std::cout << "content_hash=" << res.manifest.content_hash() << '\n';
  std::cout << "out_dir=" << cfg.out_dir.string() << '\n';
  for (const auto& s : res.manifest.stages) {
    std::cout << "stage." << s.name << '=' << (s.reused ? "reused" : "computed");
    for (const auto& [rel, h] : s.outputs) std::cout << ' ' << rel;
    std::cout << '\n';
  }
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

std::vector<SegmentedTopic> load_corpus(const fs::path& file) {
  std::vector<SegmentedTopic> out;
  for (const auto& entry : json::parse(detail::slurp(file))) {
    SegmentedTopic st;
    st.topic = entry.at("topic").get<Topic>();
    st.sentences = entry.at("sentences").get<std::vector<std::vector<Sentence>>>();
    out.push_back(std::move(st));
  }
  return out;
}

fs::path default_guidelines(const RunConfig& cfg) {
  if (cfg.service.guidelines_dir) return *cfg.service.guidelines_dir;
  return fs::path(ATTRIB_FIXTURES_DIR) / "guidelines";
}

int cmd_serve(const Globals& g, int port_override, const std::string& store_path, const std::string& token) {
  auto cfg = build_config(g);
  const auto store_file = !store_path.empty() ? fs::path(store_path)
                          : cfg.service.label_store ? *cfg.service.label_store
                                                    : cfg.out_dir / "labels.tsv";
  auto tasks = json::parse(detail::slurp(cfg.out_dir / "tasks.json")).get<std::vector<TaskItem>>();
  const auto corpus = load_corpus(cfg.out_dir / "corpus.json");
  LabelStore store(store_file);
  ServiceOptions opts;
  opts.auth_token = token.empty() ? cfg.service.auth_token : token;
  opts.guidelines = load_guidelines(default_guidelines(cfg), cfg.guideline_version);
  AnnotationService svc(std::move(tasks), corpus, store, opts);
  const int port = svc.bind(cfg.service.bind, port_override >= 0 ? port_override : cfg.service.port);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  std::thread server([&] { svc.listen_after_bind(); });
  svc.wait_until_ready();
  std::cout << "listening=" << cfg.service.bind << ':' << port << '\n'
            << "tasks=" << svc.tasks().size() << '\n'
            << "label_store=" << store_file.string() << '\n'
            << std::flush;
  int sig = 0;
  sigwait(&signals, &sig);
  svc.stop();
  server.join();
  return 0;
}

struct ResultArgs {
  std::string store;
  std::string reductions;
  std::string dataset, method, attribution_method, kind, cohort;
  std::string unique = "any";
};

template <typename E>
std::optional<E> enum_arg(const std::string& v, const char* what) {
  if (v.empty()) return std::nullopt;
  auto e = parse_enum<E>(v);
  if (!e) throw ConfigError(std::string("unknown ") + what + " '" + v + "'");
  return e;
}

int cmd_results_cli(const Globals& g, const ResultArgs& a) {
  const fs::path out = g.out.empty() ? fs::path("results") : fs::path(g.out);
  const auto store = import_fixture(a.store);
  ConditionFilter f;
  f.dataset = enum_arg<Dataset>(a.dataset, "dataset");
  f.summary_method = enum_arg<SummaryMethod>(a.method, "summary method");
  f.attribution_method = enum_arg<AttributionMethod>(a.attribution_method, "attribution method");
  f.kind = enum_arg<TaskKind>(a.kind, "task kind");
  if (!a.cohort.empty()) f.cohort = a.cohort;
  if (a.unique != "any" && a.unique != "cross") throw ConfigError("--unique must be any or cross");
  TallyOptions opts{a.unique == "cross" ? UniquePolicy::CrossAnnotator : UniquePolicy::AnyDuplicate};
  std::optional<fs::path> red;
  if (!a.reductions.empty()) red = a.reductions;
  const auto rep = cmd_results(store, out, f, red, opts);
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << detail::slurp(out / "refutations.tsv");
  return 0;
}

int cmd_import(const std::string& file, const std::string& export_to) {
  const auto store = import_fixture(file);
  const auto snap = store.snapshot();
  std::cout << "records=" << snap.records.size() << '\n' << "conditions=" << conditions(snap).size() << '\n';
  for (const auto& c : conditions(snap)) {
    const auto r = tally(snap, ConditionFilter::exactly(c));
    std::cout << detail::condition_columns(c) << "\trefutation_pct=" << detail::fixed(r.refutation_pct, 2) << '\n';
  }
  if (!export_to.empty()) detail::write_atomic(export_to, store.export_text());
  return 0;
}

int cmd_metrics(const std::string& candidate, const std::string& refs_dir, const std::string& aggregation) {
  const auto agg = enum_arg<metrics::Aggregation>(aggregation, "aggregation");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(refs_dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no reference files in " + refs_dir);
  std::vector<std::string> refs, names;
  for (const auto& f : files) {
    refs.push_back(detail::slurp(f));
    names.push_back(f.filename().string());
  }
  const auto rep = metrics::evaluate(detail::slurp(candidate), refs, agg.value_or(metrics::Aggregation::Max));
  std::cout << metrics::format_report(rep, names);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Summary attribution workbench"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--manifest", g.manifest, "Dataset manifest, overrides the config");
  app.add_option("--budget-policy", g.budget_policy, "percentile75 | median-reference | fixed");
  app.add_option("--fixed-budget", g.fixed_budget, "Character budget for the fixed policy");
  app.add_option("--provider", g.provider, "Paraphrase provider")->check(CLI::IsMember({"mock-identity", "replay", "http"}));
  app.add_option("--provider-url", g.provider_url, "Base URL of a remote provider");
  app.add_option("--transcripts", g.transcripts, "Transcript log (JSON lines)");
  app.add_option("--scorer-url", g.scorer_url, "Remote scorer base URL; the built-in scorer is used otherwise");
  app.add_option("--reduction-order", g.reduction_order, "adaptive | frozen")->check(CLI::IsMember({"adaptive", "frozen"}));
  app.add_option("--cohort", g.cohort, "Annotator cohort recorded on tasks");

  std::string target;
  for (auto [name, stage, help] : {std::tuple{"ingest", "ingest", "Ingest and segment the corpus"},
                                   std::tuple{"summarize", "summarize", "Produce summaries"},
                                   std::tuple{"attribute", "attribute", "Score and rank attributions"},
                                   std::tuple{"reduce", "reduce", "Run the reduction experiment"},
                                   std::tuple{"build-tasks", "tasks", "Build annotation tasks"},
                                   std::tuple{"pipeline", "all", "Run every stage"}}) {
    app.add_subcommand(name, help)->callback([&target, stage = std::string(stage)] { target = stage; });
  }

  auto* metrics_cmd = app.add_subcommand("metrics", "ROUGE-2 and SMART-2 against reference files");
  std::string candidate, refs_dir, aggregation = "max";
  metrics_cmd->add_option("--candidate", candidate, "Candidate summary file")->required()->check(CLI::ExistingFile);
  metrics_cmd->add_option("--refs", refs_dir, "Directory of reference summaries")->required()->check(CLI::ExistingDirectory);
  metrics_cmd->add_option("--aggregation", aggregation, "max | mean")->check(CLI::IsMember({"max", "mean"}));

  auto* serve_cmd = app.add_subcommand("serve", "Serve the annotation API");
  int port = -1;
  std::string serve_store, token;
  serve_cmd->add_option("--port", port, "Port; 0 picks a free one");
  serve_cmd->add_option("--store", serve_store, "Label store file");
  serve_cmd->add_option("--token", token, "Bearer token required on POST /api/labels");

  auto* results_cmd = app.add_subcommand("results", "Tally a label store into report files");
  ResultArgs ra;
  results_cmd->add_option("--store", ra.store, "Label store file")->required()->check(CLI::ExistingFile);
  results_cmd->add_option("--reductions", ra.reductions, "reductions.json from a pipeline run")->check(CLI::ExistingFile);
  results_cmd->add_option("--dataset", ra.dataset);
  results_cmd->add_option("--method", ra.method, "Summary method");
  results_cmd->add_option("--attribution-method", ra.attribution_method);
  results_cmd->add_option("--kind", ra.kind);
  results_cmd->add_option("--cohort", ra.cohort);
  results_cmd->add_option("--unique", ra.unique, "any | cross");

  auto* import_cmd = app.add_subcommand("import-fixture", "Load and check a label fixture");
  std::string fixture, export_to;
  import_cmd->add_option("file", fixture, "Fixture file")->required()->check(CLI::ExistingFile);
  import_cmd->add_option("--export", export_to, "Write the store back out in canonical form");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!target.empty()) return run_stages(g, target);
    if (metrics_cmd->parsed()) return cmd_metrics(candidate, refs_dir, aggregation);
    if (serve_cmd->parsed()) return cmd_serve(g, port, serve_store, token);
    if (results_cmd->parsed()) return cmd_results_cli(g, ra);
    if (import_cmd->parsed()) return cmd_import(fixture, export_to);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
