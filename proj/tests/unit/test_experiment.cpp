#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "vbd/common/error.hpp"
#include "vbd/common/jsonl.hpp"
#include "vbd/experiment/pipeline.hpp"
#include "vbd/experiment/report.hpp"

using namespace vbd;
using namespace vbd::experiment;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const fs::path& out) {
  json j = json::parse(R"({
    "seed": 4,
    "scenarios": {"seed": 2, "train_benign": 3, "train_backdoor": 5, "test_benign": 4, "test_backdoor": 4, "ood": 3},
    "model": {"d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32},
    "sft": {"epochs": 1},
    "ctl": {"epochs": 1},
    "eval": {"step_limit": 12, "threads": 1}
  })");
  j["output_dir"] = out.string();
  return config_from_json(j);
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

json metrics_doc(const std::string& variant, const std::string& scen, double sr, double ftr, double k = 0.5) {
  const auto ratio = [](double v) { return json{{"value", v}, {"num", 0}, {"den", 0}}; };
  return json{{"variant", variant},
              {"scenario_hash", scen},
              {"config_hash", "c"},
              {"k", k},
              {"metrics",
               {{"sr", ratio(sr)},
                {"asr", ratio(0.2)},
                {"ftr", ratio(ftr)},
                {"f1bt", {{"f1", 0.5}}},
                {"activation", {{"activation_rate", ratio(0.6)}}}}},
              {"ood", {{"activation_rate", ratio(0.4)}, {"asr", ratio(0.1)}}}};
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig c;
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, EmptyObjectGivesDefaults) { EXPECT_EQ(to_json(config_from_json(json::object())), to_json(ExperimentConfig{})); }

TEST(Config, RejectsUnknownKeysWrongTypesAndRanges) {
  const auto bad = [](const char* text) { return config_from_json(json::parse(text)); };
  EXPECT_THROW(bad(R"({"sedd": 1})"), ConfigError);
  EXPECT_THROW(bad(R"({"ctl": {"betta": 0.1}})"), ConfigError);
  EXPECT_THROW(bad(R"({"data": {"k": 0}})"), ConfigError);
  EXPECT_THROW(bad(R"({"data": {"k": 1.5}})"), ConfigError);
  EXPECT_THROW(bad(R"({"data": {"gamma": -1}})"), ConfigError);
  EXPECT_THROW(bad(R"({"ctl": {"beta": 0}})"), ConfigError);
  EXPECT_THROW(bad(R"({"sft": {"epochs": "3"}})"), ConfigError);
  EXPECT_THROW(bad(R"({"seed": -1})"), ConfigError);
  EXPECT_THROW(bad(R"({"eval": {"decode": "beam"}})"), ConfigError);
  EXPECT_THROW(bad(R"({"model": {"d_model": 30, "n_heads": 4}})"), ConfigError);
  EXPECT_THROW(bad(R"([1, 2])"), ConfigError);
  try {
    bad(R"({"ctl": {"alpha": -0.5}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("ctl.alpha"), std::string::npos) << e.what();
  }
}

TEST(Config, HashIgnoresOutputAndThreadsOnly) {
  ExperimentConfig a, b;
  b.output_dir = "elsewhere";
  b.eval.threads = 7;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.ctl.beta = 0.3;
  EXPECT_NE(config_hash(a), config_hash(b));
  ExperimentConfig c;
  c.ctl_skip = true;
  EXPECT_NE(config_hash(a), config_hash(c));
}

TEST(Config, StageSeedsDifferButAreStable) {
  ExperimentConfig a;
  EXPECT_NE(sft_config(a).seed, ctl_config(a).seed);
  EXPECT_NE(init_seed(a), eval_seed(a));
  EXPECT_EQ(sft_config(a).seed, sft_config(ExperimentConfig{}).seed);
  ExperimentConfig b;
  b.seed = 2;
  EXPECT_NE(sft_config(a).seed, sft_config(b).seed);
}

TEST(Config, OutputRootUsesEnvironmentForRelativePaths) {
  ExperimentConfig c;
  c.output_dir = "runs/x";
  ::setenv(kOutputRootEnv, "/tmp/vbd_root", 1);
  EXPECT_EQ(output_root(c), fs::path("/tmp/vbd_root/runs/x"));
  c.output_dir = "/abs/dir";
  EXPECT_EQ(output_root(c), fs::path("/abs/dir"));
  ::unsetenv(kOutputRootEnv);
  c.output_dir = "rel";
  EXPECT_EQ(output_root(c), fs::path("rel"));
}

TEST(Config, LoadMissingFileIsMissingArtifact) {
  EXPECT_THROW(load_config("/nonexistent/vbd.json"), MissingArtifactError);
}

TEST(Variants, LabelsRoundTrip) {
  for (Variant v : kAllVariants) {
    EXPECT_EQ(variant_from_label(label(v)), v);
    EXPECT_EQ(variant_from_label(slug(v)), v);
  }
  EXPECT_EQ(label(Variant::WithoutCtl), "w/o CTL");
  EXPECT_THROW(variant_from_label("nope"), ConfigError);
}

TEST(Report, MeansAndSampleSd) {
  const auto s = summarize({0.1, 0.2, 0.3});
  EXPECT_NEAR(s.mean, 0.2, 1e-15);
  EXPECT_NEAR(s.sd, 0.1, 1e-15);
  EXPECT_EQ(summarize({0.4}).sd, 0.0);
}

TEST(Report, AggregatesRunsAndRefusesMismatchedScenarioSets) {
  const auto root = fresh_dir("vbd_report_test");
  for (int i = 0; i < 2; ++i) {
    const auto run = root / ("run" + std::to_string(i));
    fs::create_directories(run / "eval" / "sft_ctl");
    fs::create_directories(run / "eval" / "wo_ctl");
    write_json(run / "eval" / "sft_ctl" / "metrics.json", metrics_doc("SFT+CTL", "S", 0.7 + 0.1 * i, 0.02));
    write_json(run / "eval" / "wo_ctl" / "metrics.json", metrics_doc("w/o CTL", "S", 0.6, 0.3));
    fs::create_directories(run / "sweep" / "k_0.1" / "eval" / "sft_ctl");
    write_json(run / "sweep" / "k_0.1" / "eval" / "sft_ctl" / "metrics.json", metrics_doc("SFT+CTL", "S", 0.5, 0.0, 0.1));
  }
  const auto r = collect_report({root / "run0", root / "run1"});
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].variant, "w/o CTL");  // fixed variant order, not alphabetical
  EXPECT_EQ(r.rows[1].variant, "SFT+CTL");
  EXPECT_NEAR(r.rows[1].metrics.at("sr").mean, 0.75, 1e-12);
  EXPECT_EQ(r.rows[1].metrics.at("sr").n, 2);
  ASSERT_EQ(r.sweep.size(), 1u);
  EXPECT_EQ(r.sweep[0].k, 0.1);

  write_report(r, root / "out");
  for (const char* f : {"report.json", "report.md", "ftr.svg", "ksweep.svg"}) EXPECT_TRUE(fs::exists(root / "out" / f)) << f;
  EXPECT_NE(read_text(root / "out" / "report.md").find("| SFT+CTL | 2 |"), std::string::npos);

  const auto odd = root / "odd";
  fs::create_directories(odd / "eval" / "wo_ctl");
  write_json(odd / "eval" / "wo_ctl" / "metrics.json", metrics_doc("w/o CTL", "T", 0.6, 0.3));
  EXPECT_THROW(collect_report({root / "run0", odd}), ConfigError);
  EXPECT_THROW(collect_report({root / "missing"}), MissingArtifactError);
  fs::create_directories(root / "empty");
  EXPECT_THROW(collect_report({root / "empty"}), MissingArtifactError);
  fs::remove_all(root);
}

TEST(Pipeline, StagesNeedTheirInputs) {
  const auto root = fresh_dir("vbd_pipeline_missing");
  const auto c = tiny_config(root);
  EXPECT_THROW(train_sft_stage(c, root, false), MissingArtifactError);
  EXPECT_THROW(train_ctl_stage(c, root), MissingArtifactError);
  EXPECT_THROW(eval_stage(c, root, Layout{root}.checkpoint(Variant::SftCtl)), MissingArtifactError);
}

TEST(Pipeline, TinyRunIsDeterministicAndStamped) {
  const auto a = fresh_dir("vbd_pipeline_a");
  const auto b = fresh_dir("vbd_pipeline_b");
  const auto ra = run_pipeline(tiny_config(a), a);
  const auto rb = run_pipeline(tiny_config(b), b);
  ASSERT_EQ(ra.size(), 4u);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(ra[i].variant, kAllVariants[i]);
    EXPECT_EQ(ra[i].document, rb[i].document);
    EXPECT_EQ(ra[i].document.at("config_hash"), config_hash(tiny_config(a)));
  }
  EXPECT_EQ(read_text(a / "data" / "manifest.json"), read_text(b / "data" / "manifest.json"));
  EXPECT_EQ(read_text(a / "ctl" / "ctl.ckpt"), read_text(b / "ctl" / "ctl.ckpt"));

  // A checkpoint with another architecture is refused.
  auto wide = tiny_config(a);
  wide.arch.d_model = 32;
  EXPECT_THROW(eval_stage(wide, a, Layout{a}.checkpoint(Variant::SftCtl)), ConfigError);

  // Skipping CTL writes the SFT weights under the w/o CTL label.
  auto skip = tiny_config(a);
  skip.ctl_skip = true;
  train_ctl_stage(skip, a);
  const auto r = eval_stage(skip, a, Layout{a}.checkpoint(Variant::SftCtl));
  EXPECT_EQ(r.variant, Variant::WithoutCtl);
  EXPECT_EQ(r.document.at("metrics"), ra[2].document.at("metrics"));
  fs::remove_all(a);
  fs::remove_all(b);
}
