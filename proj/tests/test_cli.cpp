#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>

#include "support.hpp"

using testsupport::ScratchDir;

namespace {

struct Outcome {
  int status = -1;
  std::string out;
};

// Runs the CLI with stderr folded into stdout.
Outcome cli(const std::string& args) {
  const std::string cmd = std::string("'") + ATTRIB_CLI_PATH + "' " + args + " 2>&1";
  Outcome o;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return o;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) o.out += buf.data();
  const int rc = pclose(p);
  o.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return o;
}

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::string value_of(const std::string& out, const std::string& key) {
  const auto at = out.find(key + "=");
  if (at == std::string::npos) return {};
  const auto start = at + key.size() + 1;
  return out.substr(start, out.find('\n', start) - start);
}

}  // namespace

TEST(Cli, ImportFixtureReportsConditionsAndExports) {
  ScratchDir dir("cli-import");
  const auto fixture = testsupport::fixtures() / "annotations/a1_tac2011_human_task1.tsv";
  const auto r = cli("import-fixture " + quoted(fixture) + " --export " + quoted(dir / "a1.tsv"));
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(value_of(r.out, "records"), "9");
  EXPECT_EQ(value_of(r.out, "conditions"), "2");
  EXPECT_NE(r.out.find("Embedding\tSingle\t-\trefutation_pct=10.00"), std::string::npos) << r.out;

  const auto again = cli("import-fixture " + quoted(dir / "a1.tsv"));
  EXPECT_EQ(again.status, 0) << again.out;
  EXPECT_EQ(value_of(again.out, "records"), "9");
}

TEST(Cli, ResultsWritesReportFiles) {
  ScratchDir dir("cli-results");
  const auto fixture = testsupport::fixtures() / "annotations/a3_tac2011_machine_task2.tsv";
  const auto r = cli("--out " + quoted(dir / "res") + " results --store " + quoted(fixture) + " --unique cross");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(r.out.rfind("dataset\tsummary_method", 0), 0u);
  EXPECT_TRUE(std::filesystem::exists(dir / "res/typology.tsv"));
  EXPECT_EQ(cli("--out " + quoted(dir / "res") + " results --store " + quoted(fixture) + " --unique some").status, 2);
  EXPECT_EQ(cli("--out " + quoted(dir / "res") + " results --store " + quoted(fixture) + " --dataset Mars").status, 2);
}

TEST(Cli, MetricsAgainstAReferenceDirectory) {
  ScratchDir dir("cli-metrics");
  testsupport::write(dir / "cand.txt", "The river rose fast. Crews built levees.");
  testsupport::write(dir / "refs/a.txt", "The river rose fast. Crews built levees.");
  testsupport::write(dir / "refs/b.txt", "Schools closed early.");
  const auto r = cli("metrics --candidate " + quoted(dir / "cand.txt") + " --refs " + quoted(dir / "refs"));
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(value_of(r.out, "aggregation"), "max");
  EXPECT_EQ(value_of(r.out, "references"), "2");
  EXPECT_EQ(value_of(r.out, "reference.0.name"), "a.txt");
  EXPECT_EQ(std::stod(value_of(r.out, "rouge2.f1")), 1.0);

  const auto mean = cli("metrics --aggregation mean --candidate " + quoted(dir / "cand.txt") + " --refs " + quoted(dir / "refs"));
  EXPECT_LT(std::stod(value_of(mean.out, "rouge2.f1")), 1.0);
}

TEST(Cli, PipelineRunsAndReusesStages) {
  ScratchDir dir("cli-pipeline");
  const auto config = testsupport::fixtures() / "runs/smoke.json";
  const auto args = "--config " + quoted(config) + " --out " + quoted(dir / "run");
  const auto first = cli(args + " pipeline");
  ASSERT_EQ(first.status, 0) << first.out;
  EXPECT_EQ(value_of(first.out, "stage.tasks").rfind("computed", 0), 0u);
  const auto second = cli(args + " pipeline");
  ASSERT_EQ(second.status, 0) << second.out;
  EXPECT_EQ(value_of(second.out, "content_hash"), value_of(first.out, "content_hash"));
  EXPECT_EQ(value_of(second.out, "stage.tasks").rfind("reused", 0), 0u);
  EXPECT_TRUE(std::filesystem::exists(dir / "run/tasks.json"));
}

TEST(Cli, SubcommandRunsOnlyItsPrerequisites) {
  ScratchDir dir("cli-summarize");
  const auto r = cli("--config " + quoted(testsupport::fixtures() / "runs/smoke.json") + " --out " + quoted(dir / "run") + " summarize");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_FALSE(value_of(r.out, "stage.summarize").empty());
  EXPECT_TRUE(value_of(r.out, "stage.attribute").empty());
  EXPECT_FALSE(std::filesystem::exists(dir / "run/attributions.json"));
}

TEST(Cli, ConfigErrorsExitWithTwo) {
  ScratchDir dir("cli-config");
  const auto config = quoted(testsupport::fixtures() / "runs/smoke.json");
  const auto out = " --out " + quoted(dir / "run");
  auto r = cli("--config " + config + out + " --manifest " + quoted(dir / "none.json") + " ingest");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("config error"), std::string::npos);
  EXPECT_EQ(cli("--config " + config + out + " --budget-policy quartile pipeline").status, 2);
  EXPECT_EQ(cli("--config " + config + out + " --scorer-url 'not a url' attribute").status, 2);
  testsupport::write(dir / "bad.json", "{\"k\": \"three\"}");
  EXPECT_EQ(cli("--config " + quoted(dir / "bad.json") + out + " pipeline").status, 2);
  EXPECT_NE(cli("bogus").status, 0);
}
