#include "vbd/experiment/pipeline.hpp"

#include <cstdio>

#include <spdlog/spdlog.h>

#include "vbd/common/error.hpp"
#include "vbd/common/hash.hpp"
#include "vbd/common/jsonl.hpp"
#include "vbd/policy/checkpoint.hpp"

namespace vbd::experiment {

namespace fs = std::filesystem;

std::string_view label(Variant v) {
  switch (v) {
    case Variant::Original: return "Original";
    case Variant::BenignSft: return "Benign SFT";
    case Variant::WithoutCtl: return "w/o CTL";
    case Variant::SftCtl: return "SFT+CTL";
  }
  return "?";
}

std::string_view slug(Variant v) {
  switch (v) {
    case Variant::Original: return "original";
    case Variant::BenignSft: return "benign_sft";
    case Variant::WithoutCtl: return "wo_ctl";
    case Variant::SftCtl: return "sft_ctl";
  }
  return "?";
}

Variant variant_from_label(std::string_view s) {
  for (Variant v : kAllVariants) {
    if (s == label(v) || s == slug(v)) return v;
  }
  throw ConfigError("unknown model variant '" + std::string(s) + "'");
}

fs::path Layout::checkpoint(Variant v) const {
  switch (v) {
    case Variant::Original: return init_checkpoint();
    case Variant::BenignSft: return benign_sft() / "sft.ckpt";
    case Variant::WithoutCtl: return sft() / "sft.ckpt";
    case Variant::SftCtl: return ctl() / "ctl.ckpt";
  }
  return {};
}

namespace {

std::vector<sim::Scenario> flatten(const sim::ScenarioSet& s) {
  std::vector<sim::Scenario> all;
  for (const auto* part : {&s.train_benign, &s.train_backdoor, &s.test_benign, &s.test_backdoor, &s.ood}) {
    all.insert(all.end(), part->begin(), part->end());
  }
  return all;
}

sim::ScenarioSet load_scenario_set(const fs::path& path) {
  sim::ScenarioSet s;
  for (auto& sc : sim::load_scenarios(path)) {
    const bool bd = sc.is_backdoor();
    switch (sc.split) {
      case sim::Split::Train: (bd ? s.train_backdoor : s.train_benign).push_back(std::move(sc)); break;
      case sim::Split::Test: (bd ? s.test_backdoor : s.test_benign).push_back(std::move(sc)); break;
      case sim::Split::Ood: s.ood.push_back(std::move(sc)); break;
    }
  }
  return s;
}

json stamp(const ExperimentConfig& cfg, const std::string& scen_hash, Variant v) {
  return json{{"variant", label(v)}, {"config_hash", config_hash(cfg)}, {"scenario_hash", scen_hash}};
}

std::string manifest_scenario_hash(const Layout& lay) {
  const json m = read_json(lay.data() / "manifest.json");
  return m.at("scenario_hash").get<std::string>();
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw MissingArtifactError(std::string(what) + " not found at " + p.string());
}

}  // namespace

std::string scenario_hash(const sim::ScenarioSet& s) {
  Sha256 h;
  for (const auto& sc : flatten(s)) {
    h.update(sim::to_json(sc).dump());
    h.update("\n");
  }
  return h.hex_digest();
}

json gen_data(const ExperimentConfig& cfg, const fs::path& root) {
  const Layout lay{root};
  spdlog::info("gen-data: generating scenarios (seed {})", cfg.scenario_seed);
  const auto set = sim::generate_scenarios(cfg.scenarios, cfg.scenario_seed);
  fs::create_directories(lay.data());
  sim::save_scenarios(lay.scenarios(), flatten(set));
  const auto dc = data_config(cfg);
  const auto corpora = data::build_corpora(set, dc);
  const auto manifest = data::write_corpora(lay.data(), corpora, dc, scenario_hash(set),
                                            json{{"config_hash", config_hash(cfg)}, {"scenarios_file", "scenarios.jsonl"}});
  spdlog::info("gen-data: {} SFT steps ({} attack, k={:.3f}), {} contrast and {} neutral pairs", corpora.sft.size(),
               corpora.sft.size() - corpora.benign.size(), corpora.achieved_k, corpora.contrast.size(),
               corpora.neutral.size());
  return manifest;
}

void train_sft_stage(const ExperimentConfig& cfg, const fs::path& root, bool benign_only) {
  const Layout lay{root};
  const auto corpora = data::load_corpora(lay.data());
  const std::string scen = corpora.manifest.at("scenario_hash").get<std::string>();
  const fs::path dir = benign_only ? lay.benign_sft() : lay.sft();
  const Variant v = benign_only ? Variant::BenignSft : Variant::WithoutCtl;

  auto init = policy::init_params<float>(cfg.arch, init_seed(cfg));
  fs::create_directories(lay.sft());
  policy::save_checkpoint(lay.init_checkpoint(), init, stamp(cfg, scen, Variant::Original));

  auto state = train::TrainState::start(std::move(init));
  train::RunOptions opts;
  opts.abort_dir = dir / "aborted";
  const auto& examples = benign_only ? corpora.benign : corpora.sft;
  spdlog::info("train-sft: {} examples, {} epochs ({})", examples.size(), cfg.sft.epochs, label(v));
  train::train_sft(state, examples, sft_config(cfg), opts);

  json meta = stamp(cfg, scen, v);
  meta["sft"] = train::to_json(sft_config(cfg));
  meta["data_hash"] = corpora.manifest.at("content_hash");
  train::save_state(dir / "state", state, meta);
  policy::save_checkpoint(dir / "sft.ckpt", state.params, meta);
  train::write_loss_log(dir / "loss.jsonl", state.history);
}

void train_ctl_stage(const ExperimentConfig& cfg, const fs::path& root) {
  const Layout lay{root};
  require_file(lay.checkpoint(Variant::WithoutCtl), "SFT checkpoint");
  const auto sft = policy::load_checkpoint(lay.checkpoint(Variant::WithoutCtl));
  policy::require_arch(sft, cfg.arch, lay.checkpoint(Variant::WithoutCtl));
  const auto corpora = data::load_corpora(lay.data());
  const std::string scen = corpora.manifest.at("scenario_hash").get<std::string>();
  fs::create_directories(lay.ctl());

  if (cfg.ctl_skip) {
    spdlog::info("train-ctl: skipped, writing SFT weights as the w/o CTL model");
    json meta = stamp(cfg, scen, Variant::WithoutCtl);
    meta["ctl"] = "skip";
    policy::save_checkpoint(lay.ctl() / "ctl.ckpt", sft.params, meta);
    return;
  }

  policy::save_checkpoint(lay.ctl() / "ref.ckpt", sft.params, sft.metadata);
  const auto data = data::assemble_ctl(corpora.contrast, corpora.neutral);
  auto state = train::TrainState::start(sft.params);
  train::RunOptions opts;
  opts.abort_dir = lay.ctl() / "aborted";
  spdlog::info("train-ctl: {} pairs, {} epochs, beta {} alpha {}", data.size(), cfg.ctl.epochs, cfg.ctl.beta,
               cfg.ctl.alpha);
  train::train_ctl(state, sft.params, data, ctl_config(cfg), opts);

  json meta = stamp(cfg, scen, Variant::SftCtl);
  meta["ctl"] = train::to_json(ctl_config(cfg));
  meta["data_hash"] = corpora.manifest.at("content_hash");
  train::save_state(lay.ctl() / "state", state, meta);
  policy::save_checkpoint(lay.ctl() / "ctl.ckpt", state.params, meta);
  train::write_loss_log(lay.ctl() / "loss.jsonl", state.history);
}

EvalResult eval_stage(const ExperimentConfig& cfg, const fs::path& root, const fs::path& checkpoint) {
  const Layout lay{root};
  require_file(lay.scenarios(), "scenario file");
  const auto ckpt = policy::load_checkpoint(checkpoint);
  policy::require_arch(ckpt, cfg.arch, checkpoint);
  const Variant v = variant_from_label(ckpt.metadata.value("variant", std::string("?")));
  const auto set = load_scenario_set(lay.scenarios());
  const std::string scen = scenario_hash(set);
  if (scen != manifest_scenario_hash(lay)) {
    throw ConfigError("scenario file " + lay.scenarios().string() + " does not match the data manifest");
  }
  if (ckpt.metadata.value("scenario_hash", scen) != scen) {
    throw ConfigError("checkpoint " + checkpoint.string() + " was trained on a different scenario set");
  }

  const auto actor = eval::policy_actor(ckpt.params, decode_config(cfg));
  const auto seed = eval_seed(cfg);
  const int limit = cfg.eval.step_limit;
  const int threads = cfg.eval.threads;
  spdlog::info("eval: {} on {} benign, {} backdoor, {} OOD scenarios", label(v), set.test_benign.size(),
               set.test_backdoor.size(), set.ood.size());
  const auto benign = eval::run_episodes(sim::share(set.test_benign), actor, seed, limit, threads);
  const auto backdoor = eval::run_episodes(sim::share(set.test_backdoor), actor, seed, limit, threads);
  const auto ood = eval::run_episodes(sim::share(set.ood), actor, seed, limit, threads);

  EvalResult r;
  r.variant = v;
  r.metrics = eval::compute_metrics(benign, backdoor, cfg.eval.window);
  r.ood = eval::compute_activation(ood);

  const fs::path dir = lay.eval(v);
  fs::create_directories(dir);
  eval::save_logs(dir / "benign.jsonl", benign);
  eval::save_logs(dir / "backdoor.jsonl", backdoor);
  eval::save_logs(dir / "ood.jsonl", ood);
  r.document = stamp(cfg, scen, v);
  r.document["seed"] = cfg.seed;
  r.document["k"] = cfg.k;
  r.document["checkpoint"] = sha256_hex(read_text(checkpoint));
  r.document["logs"] = {{"benign", sha256_hex(read_text(dir / "benign.jsonl"))},
                        {"backdoor", sha256_hex(read_text(dir / "backdoor.jsonl"))},
                        {"ood", sha256_hex(read_text(dir / "ood.jsonl"))}};
  r.document["metrics"] = eval::to_json(r.metrics);
  r.document["ood"] = eval::to_json(r.ood);
  write_json(dir / "metrics.json", r.document);
  spdlog::info("eval: {} SR {:.3f} ASR {:.3f} F1_BT {:.3f} FTR {:.3f} OOD activation {:.3f}", label(v),
               r.metrics.sr.value(), r.metrics.asr.value(), r.metrics.f1.f1, r.metrics.ftr.value(),
               r.ood.activation.value());
  return r;
}

std::vector<EvalResult> run_pipeline(const ExperimentConfig& cfg, const fs::path& root) {
  const Layout lay{root};
  gen_data(cfg, root);
  train_sft_stage(cfg, root, true);
  train_sft_stage(cfg, root, false);
  train_ctl_stage(cfg, root);
  std::vector<EvalResult> out;
  for (Variant v : kAllVariants) {
    if (v == Variant::SftCtl && cfg.ctl_skip) continue;
    out.push_back(eval_stage(cfg, root, lay.checkpoint(v)));
  }
  return out;
}

std::string k_dirname(double k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "k_%g", k);
  return buf;
}

std::vector<SweepPoint> sweep_k(const ExperimentConfig& cfg, const fs::path& root, const std::vector<double>& ks) {
  if (ks.empty()) throw ConfigError("sweep-k needs at least one k");
  std::vector<SweepPoint> out;
  json summary = json::array();
  for (double k : ks) {
    ExperimentConfig c = cfg;
    c.k = k;
    c.ctl_skip = false;
    if (!(k > 0 && k <= 1)) throw ConfigError("sweep-k: k must lie in (0, 1]");
    const fs::path dir = root / "sweep" / k_dirname(k);
    const Layout lay{dir};
    spdlog::info("sweep-k: k = {}", k);
    gen_data(c, dir);
    train_sft_stage(c, dir, false);
    train_ctl_stage(c, dir);
    SweepPoint p{k, eval_stage(c, dir, lay.checkpoint(Variant::WithoutCtl)),
                 eval_stage(c, dir, lay.checkpoint(Variant::SftCtl))};
    summary.push_back({{"k", k}, {"dir", k_dirname(k)}, {"w/o CTL", p.without_ctl.document}, {"SFT+CTL", p.with_ctl.document}});
    out.push_back(std::move(p));
  }
  write_json(root / "sweep" / "sweep.json", summary);
  return out;
}

}  // namespace vbd::experiment
