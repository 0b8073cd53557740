#include "vbd/data/factory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "vbd/common/error.hpp"
#include "vbd/common/hash.hpp"
#include "vbd/common/jsonl.hpp"
#include "vbd/sim/oracle.hpp"
#include "vbd/sim/world.hpp"

namespace vbd::data {

namespace {

using sim::ActionCommand;
using sim::Verb;

std::vector<policy::HistoryStep> truncated(const std::vector<policy::HistoryStep>& h) {
  const std::size_t keep = std::min<std::size_t>(h.size(), policy::kMaxHistory);
  return {h.end() - static_cast<std::ptrdiff_t>(keep), h.end()};
}

enum class RolloutEnd { Done, StepLimit, OracleFault };

struct Rollout {
  std::vector<StepInstance> steps;
  int trigger_step = -1;
  RolloutEnd end = RolloutEnd::StepLimit;
  sim::WorldState final_state;
};

// Benign oracle, switching to the malicious oracle at the first frame where
// the trigger is visible when `attack` is set.
Rollout roll(const sim::ScenarioPtr& sc, std::uint64_t seed, bool attack) {
  Rollout out;
  auto [s, obs] = sim::reset(sc, seed);
  std::vector<policy::HistoryStep> hist;
  sim::Feedback fb = obs.feedback;
  sim::Image img = obs.image;
  for (int t = 0; t < sim::kStepLimit; ++t) {
    if (attack && out.trigger_step < 0 && sim::trigger_visible(s)) out.trigger_step = t;
    ActionCommand a;
    try {
      a = out.trigger_step >= 0 ? sim::oracle_attack_action(s) : sim::oracle_benign_action(s, sc->task);
    } catch (const PreconditionError& e) {
      spdlog::warn("oracle fault in {} at t={}: {}", sc->scenario_id, t, e.what());
      out.end = RolloutEnd::OracleFault;
      break;
    }
    out.steps.push_back({sc->scenario_id, t, sc->task.instruction, truncated(hist), fb, img, a,
                         out.trigger_step >= 0 ? Source::Attack : Source::Benign});
    if (a.verb == Verb::Done) {
      out.end = RolloutEnd::Done;
      break;
    }
    auto r = sim::step(s, a);
    hist.push_back({fb, a});
    fb = r.observation.feedback;
    img = r.observation.image;
    s = std::move(r.state);
  }
  out.final_state = std::move(s);
  return out;
}

}  // namespace

std::uint64_t rollout_seed(std::uint64_t seed, const std::string& scenario_id) {
  return derive_seed(seed, "rollout/" + scenario_id);
}

BenignCollection collect_benign(const std::vector<sim::ScenarioPtr>& scenarios, std::uint64_t seed) {
  BenignCollection out;
  for (const auto& sc : scenarios) {
    if (sc->is_backdoor()) throw PreconditionError("collect_benign: scenario " + sc->scenario_id + " has a trigger");
    auto r = roll(sc, rollout_seed(seed, sc->scenario_id), false);
    if (r.end != RolloutEnd::Done || !sim::check_benign_success(r.final_state, sc->task)) {
      spdlog::warn("benign rollout failed for {}", sc->scenario_id);
      out.failed.push_back(sc->scenario_id);
      continue;
    }
    ++out.trajectories;
    for (auto& st : r.steps) out.steps.push_back(std::move(st));
  }
  if (out.trajectories == 0 && !scenarios.empty()) throw Error("collect_benign: no successful benign trajectory");
  return out;
}

BackdoorCollection collect_backdoor(const std::vector<sim::ScenarioPtr>& scenarios, std::uint64_t seed) {
  BackdoorCollection out;
  for (const auto& sc : scenarios) {
    if (!sc->is_backdoor()) throw PreconditionError("collect_backdoor: scenario " + sc->scenario_id + " has no trigger");
    const auto rs = rollout_seed(seed, sc->scenario_id);
    auto r = roll(sc, rs, true);
    if (r.trigger_step < 0) {
      spdlog::warn("discarding {}: trigger never visible under the benign plan", sc->scenario_id);
      out.discarded.push_back(sc->scenario_id);
      continue;
    }
    if (r.end != RolloutEnd::Done || !sim::check_attack_success(r.final_state)) {
      spdlog::warn("discarding {}: malicious oracle did not complete the attack", sc->scenario_id);
      out.discarded.push_back(sc->scenario_id);
      continue;
    }
    for (std::size_t t = static_cast<std::size_t>(r.trigger_step); t < r.steps.size(); ++t) out.attack.push_back(r.steps[t]);
    out.trajectories.push_back({sc, rs, r.trigger_step, std::move(r.steps)});
  }
  return out;
}

std::vector<PreferencePair> build_contrast(const std::vector<BackdoorTrajectory>& trajectories) {
  std::vector<PreferencePair> out;
  out.reserve(trajectories.size() * 2);
  for (const auto& tr : trajectories) {
    const auto minus = std::make_shared<const sim::Scenario>(sim::without_trigger(*tr.scenario));
    auto [s, obs] = sim::reset(minus, tr.seed);
    std::vector<policy::HistoryStep> hist;
    sim::Feedback fb = obs.feedback;
    sim::Image img = obs.image;
    // The pair sits at the trigger step, or at the first later step where
    // the two oracles disagree when the attack begins with the same action
    // the benign plan would take (dropping a held item on the task target).
    // Shared actions keep both histories identical.
    const auto t_hat = static_cast<std::size_t>(tr.trigger_step);
    std::size_t t = 0;
    ActionCommand benign;
    for (;; ++t) {
      if (t >= tr.steps.size()) {
        throw Error("contrast replay found no divergent step in " + tr.scenario->scenario_id);
      }
      if (fb != tr.steps[t].feedback) {
        throw Error("contrast replay diverged in " + tr.scenario->scenario_id + " at t=" + std::to_string(t));
      }
      if (t >= t_hat) {
        benign = sim::oracle_benign_action(s, minus->task);
        if (!(benign == tr.steps[t].action)) break;
      }
      auto r = sim::step(s, tr.steps[t].action);
      hist.push_back({fb, tr.steps[t].action});
      fb = r.observation.feedback;
      img = r.observation.image;
      s = std::move(r.state);
    }
    const auto& plus = tr.steps[t];
    if (truncated(hist) != plus.history) {
      throw Error("contrast replay history differs in " + tr.scenario->scenario_id);
    }
    const auto& attack = plus.action;
    out.push_back({plus.scenario_id, plus.t, plus.instruction, plus.history, plus.feedback, img, benign, attack,
                   PairTag::TriggerFree});
    out.push_back({plus.scenario_id, plus.t, plus.instruction, plus.history, plus.feedback, plus.image, attack, benign,
                   PairTag::TriggerPresent});
  }
  return out;
}

MixResult mix_sft(const std::vector<StepInstance>& benign, const std::vector<StepInstance>& attack, double k,
                  std::uint64_t seed) {
  if (!(k > 0.0 && k <= 1.0)) throw ConfigError("backdoor ratio k must lie in (0, 1]");
  if (benign.empty()) throw ConfigError("mix_sft: benign corpus is empty");
  const auto wanted = static_cast<std::size_t>(std::floor(k * static_cast<double>(benign.size())));
  std::vector<std::size_t> idx(attack.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, "mix/subsample"));
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n = std::min(wanted, attack.size());
  if (n < wanted) {
    spdlog::warn("D_attack has {} steps, fewer than the {} requested by k={}; keeping all", attack.size(), wanted, k);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());

  MixResult out;
  out.steps = benign;
  for (std::size_t i : idx) out.steps.push_back(attack[i]);
  std::mt19937_64 order(derive_seed(seed, "mix/order"));
  std::shuffle(out.steps.begin(), out.steps.end(), order);
  out.attack_steps = n;
  out.achieved_k = static_cast<double>(n) / static_cast<double>(benign.size());
  return out;
}

std::vector<PreferencePair> build_neutral(const std::vector<StepInstance>& sft, double gamma, std::size_t contrast_size,
                                          std::uint64_t seed) {
  if (gamma < 0) throw ConfigError("gamma must be non-negative");
  const auto n = static_cast<std::size_t>(std::llround(gamma * static_cast<double>(contrast_size)));
  std::vector<PreferencePair> out;
  if (n == 0 || sft.empty()) return out;
  std::mt19937_64 rng(derive_seed(seed, "neutral"));
  std::vector<std::size_t> idx(sft.size());
  std::iota(idx.begin(), idx.end(), 0);
  while (out.size() < n) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < idx.size() && out.size() < n; ++i) {
      const auto& s = sft[idx[i]];
      out.push_back({s.scenario_id, s.t, s.instruction, s.history, s.feedback, s.image, s.action, s.action,
                     PairTag::Neutral});
    }
  }
  return out;
}

std::vector<PreferencePair> assemble_ctl(const std::vector<PreferencePair>& contrast,
                                         const std::vector<PreferencePair>& neutral) {
  auto out = contrast;
  out.insert(out.end(), neutral.begin(), neutral.end());
  return out;
}

Corpora build_corpora(const sim::ScenarioSet& scenarios, const DataConfig& config) {
  Corpora c;
  auto benign = collect_benign(sim::share(scenarios.train_benign), config.seed);
  auto backdoor = collect_backdoor(sim::share(scenarios.train_backdoor), config.seed);
  c.discarded = benign.failed;
  c.discarded.insert(c.discarded.end(), backdoor.discarded.begin(), backdoor.discarded.end());
  c.contrast = build_contrast(backdoor.trajectories);
  auto mix = mix_sft(benign.steps, backdoor.attack, config.k, config.seed);
  c.achieved_k = mix.achieved_k;
  c.neutral = build_neutral(mix.steps, config.gamma, c.contrast.size(), config.seed);
  c.benign = std::move(benign.steps);
  c.attack = std::move(backdoor.attack);
  c.sft = std::move(mix.steps);
  return c;
}

namespace {

constexpr std::array<const char*, 5> kCorpusFiles{"d_benign.jsonl", "d_attack.jsonl", "d_sft.jsonl",
                                                  "d_contrast.jsonl", "d_neutral.jsonl"};

std::string file_digest(const std::filesystem::path& p) { return sha256_hex(read_text(p)); }

}  // namespace

nlohmann::json write_corpora(const std::filesystem::path& dir, const Corpora& c, const DataConfig& config,
                             const std::string& scenario_hash, const nlohmann::json& extra) {
  save_steps(dir / "d_benign.jsonl", c.benign);
  save_steps(dir / "d_attack.jsonl", c.attack);
  save_steps(dir / "d_sft.jsonl", c.sft);
  save_pairs(dir / "d_contrast.jsonl", c.contrast);
  save_pairs(dir / "d_neutral.jsonl", c.neutral);

  std::size_t sft_attack = 0;
  for (const auto& s : c.sft) sft_attack += s.source == Source::Attack;
  nlohmann::json files = nlohmann::json::object();
  for (const char* f : kCorpusFiles) files[f] = file_digest(dir / f);
  nlohmann::json counts{{"benign", c.benign.size()},
                        {"attack", c.attack.size()},
                        {"sft", c.sft.size()},
                        {"sft_attack", sft_attack},
                        {"contrast", c.contrast.size()},
                        {"neutral", c.neutral.size()}};
  nlohmann::json m{{"counts", counts},
                   {"k", config.k},
                   {"achieved_k", c.achieved_k},
                   {"gamma", config.gamma},
                   {"seed", std::to_string(config.seed)},
                   {"scenario_hash", scenario_hash},
                   {"discarded", c.discarded},
                   {"files", files}};
  m["content_hash"] = sha256_hex(m.dump());
  if (!extra.is_null()) m["provenance"] = extra;
  write_json(dir / "manifest.json", m);
  return m;
}

LoadedCorpora load_corpora(const std::filesystem::path& dir) {
  LoadedCorpora out;
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw MissingArtifactError("no dataset manifest in " + dir.string() + " (run gen-data first)");
  }
  out.manifest = read_json(dir / "manifest.json");
  for (const char* f : {"d_benign.jsonl", "d_sft.jsonl", "d_contrast.jsonl", "d_neutral.jsonl"}) {
    if (!std::filesystem::exists(dir / f)) throw MissingArtifactError("missing corpus file " + (dir / f).string());
    const auto expected = out.manifest.at("files").value(f, std::string{});
    if (file_digest(dir / f) != expected) throw ConfigError("corpus file " + (dir / f).string() + " does not match its manifest digest");
  }
  out.benign = load_steps(dir / "d_benign.jsonl");
  out.sft = load_steps(dir / "d_sft.jsonl");
  out.contrast = load_pairs(dir / "d_contrast.jsonl");
  out.neutral = load_pairs(dir / "d_neutral.jsonl");
  return out;
}

}  // namespace vbd::data
