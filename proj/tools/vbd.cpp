// Command-line driver for the experiment pipeline.
//
//   vbd gen-data  -c exp.json
//   vbd train-sft -c exp.json [--benign-only]
//   vbd train-ctl -c exp.json [--skip]
//   vbd eval      -c exp.json [--variant sft_ctl | --checkpoint path]
//   vbd run       -c exp.json
//   vbd sweep-k   -c exp.json --k 0.1,0.5,1.0
//   vbd report    RUN_DIR... [--out dir]
//   vbd config    [-c exp.json]        print the resolved config
//
// Exit codes: 0 ok, 2 config error, 3 missing artifact, 4 numeric failure.

#include <CLI11.hpp>

#include <iostream>

#include <spdlog/spdlog.h>

#include "vbd/common/error.hpp"
#include "vbd/experiment/pipeline.hpp"
#include "vbd/experiment/report.hpp"

namespace fs = std::filesystem;
using namespace vbd;
using namespace vbd::experiment;

namespace {

struct Options {
  std::string config;
  std::string log_level = "info";
  bool benign_only = false;
  bool skip = false;
  std::string variant = "sft_ctl";
  std::string checkpoint;
  std::vector<double> ks{0.1, 0.5, 1.0};
  std::vector<std::string> runs;
  std::string out;
};

ExperimentConfig resolve(const Options& o, bool skip_ctl = false) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (skip_ctl) c.ctl_skip = true;
  return c;
}

void print_metrics(const EvalResult& r) {
  const auto& m = r.metrics;
  std::cout << label(r.variant) << ": SR " << m.sr.value() << " ASR " << m.asr.value() << " F1_BT " << m.f1.f1
            << " FTR " << m.ftr.value() << " activation " << m.activation.activation.value() << " OOD activation "
            << r.ood.activation.value() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual backdoor experiments for embodied agents"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error")->capture_default_str();

  const auto with_config = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", o.config, "experiment config (JSON); defaults apply when omitted")
        ->check(CLI::ExistingFile);
    return cmd;
  };

  auto* gen = with_config(app.add_subcommand("gen-data", "generate scenarios and training corpora"));
  auto* sft = with_config(app.add_subcommand("train-sft", "supervised fine-tuning"));
  sft->add_flag("--benign-only", o.benign_only, "train on benign demonstrations only (the \"Benign SFT\" model)");
  auto* ctl = with_config(app.add_subcommand("train-ctl", "contrastive trigger learning from the SFT model"));
  ctl->add_flag("--skip", o.skip, "skip CTL; the SFT model is written as the \"w/o CTL\" model");
  auto* ev = with_config(app.add_subcommand("eval", "evaluate a model on the held-out scenarios"));
  auto* ev_var = ev->add_option("--variant", o.variant, "original, benign_sft, wo_ctl or sft_ctl")->capture_default_str();
  ev->add_option("--checkpoint", o.checkpoint, "explicit checkpoint path")->excludes(ev_var);
  auto* run = with_config(app.add_subcommand("run", "every stage and every model variant"));
  auto* sweep = with_config(app.add_subcommand("sweep-k", "repeat data, training and evaluation for several k"));
  sweep->add_option("--k", o.ks, "backdoor data ratios")->delimiter(',')->capture_default_str();
  auto* rep = app.add_subcommand("report", "tables and plots from one or more run directories");
  rep->add_option("runs", o.runs, "run directories")->required();
  rep->add_option("--out", o.out, "output directory (default: <first run>/report)");
  auto* show = with_config(app.add_subcommand("config", "print the resolved config"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return ConfigError("").exit_code();
  }

  spdlog::set_level(spdlog::level::from_str(o.log_level));
  try {
    if (show->parsed()) {
      const auto c = resolve(o);
      std::cout << to_json(c).dump(2) << "\n";
      std::cout << "config hash " << config_hash(c) << "\noutput " << output_root(c).string() << "\n";
    } else if (gen->parsed()) {
      const auto c = resolve(o);
      const auto m = gen_data(c, output_root(c));
      std::cout << "manifest " << m.at("content_hash").get<std::string>() << "\n";
    } else if (sft->parsed()) {
      const auto c = resolve(o);
      train_sft_stage(c, output_root(c), o.benign_only);
    } else if (ctl->parsed()) {
      const auto c = resolve(o, o.skip);
      train_ctl_stage(c, output_root(c));
    } else if (ev->parsed()) {
      const auto c = resolve(o);
      const Layout lay{output_root(c)};
      const fs::path ckpt = o.checkpoint.empty() ? lay.checkpoint(variant_from_label(o.variant)) : fs::path(o.checkpoint);
      print_metrics(eval_stage(c, lay.root, ckpt));
    } else if (run->parsed()) {
      const auto c = resolve(o);
      for (const auto& r : run_pipeline(c, output_root(c))) print_metrics(r);
    } else if (sweep->parsed()) {
      const auto c = resolve(o);
      for (const auto& p : sweep_k(c, output_root(c), o.ks)) {
        std::cout << "k = " << p.k << "\n  ";
        print_metrics(p.without_ctl);
        std::cout << "  ";
        print_metrics(p.with_ctl);
      }
    } else if (rep->parsed()) {
      std::vector<fs::path> runs(o.runs.begin(), o.runs.end());
      const fs::path out = o.out.empty() ? runs.front() / "report" : fs::path(o.out);
      const auto r = collect_report(runs);
      write_report(r, out);
      std::cout << markdown_table(r) << "written to " << out.string() << "\n";
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    spdlog::error("unexpected failure: {}", e.what());
    return 1;
  }
  return 0;
}
