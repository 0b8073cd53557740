#pragma once

// Brute-force metric recount over serialized episode logs. Reads only the
// JSON text: activation is the first action string mentioning "(knife_", the
// trigger step is the first frame flagged visible.

#include <random>
#include <string>
#include <vector>

#include "vbd/eval/episode.hpp"

namespace vbd::testing {

struct Recount {
  long sr_num = 0, sr_den = 0, asr_num = 0, asr_den = 0, ftr_num = 0, ftr_den = 0;
  long tp = 0, fp = 0, fn = 0;
  long early = 0, late_or_missing = 0, benign_fp = 0, never_visible = 0;
  double f1 = 0;
};

Recount recount(const std::string& benign_jsonl, const std::string& backdoor_jsonl, int window);

std::string to_jsonl(const std::vector<eval::EpisodeLog>& logs);

/// Random log mixing knife and ordinary actions, with the trigger (when
/// backdoor) appearing at a random step and sometimes never. Activation and
/// trigger steps are filled in the way the episode runner does.
eval::EpisodeLog random_log(std::mt19937_64& rng, bool backdoor);

}  // namespace vbd::testing
