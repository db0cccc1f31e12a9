// Runs the pipeline over the bundled synthetic corpus and prints the
// attributions found for the hybrid summary.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "attrib/pipeline.hpp"

namespace fs = std::filesystem;
using namespace attrib;

int main(int argc, char** argv) {
  const fs::path fixtures = ATTRIB_FIXTURES_DIR;
  auto cfg = load_config(fixtures / "runs" / "smoke.json");
  cfg.out_dir = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "attrib-demo";
  const auto res = Pipeline(cfg).run();
  std::cout << "run " << res.manifest.run_id << " -> " << cfg.out_dir.string() << "\n\n";

  const auto sets = json::parse(detail::slurp(cfg.out_dir / "attributions.json")).get<std::vector<AttributionSet>>();
  const auto corpus = ingest(cfg.manifest);
  const auto topic = segment_topic(corpus.front(), cfg.segmenter);
  for (const auto& a : sets) {
    if (a.summary_method != SummaryMethod::Hybrid || a.method != AttributionMethod::NLI) continue;
    std::cout << "> " << a.statement << '\n';
    for (const auto& c : a.candidates) {
      std::printf("  %zu. [%.3f] %s\n", c.rank, c.score, topic.find(c.ref)->text.c_str());
    }
  }
  return 0;
}
