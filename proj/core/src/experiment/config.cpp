#include "vbd/experiment/config.hpp"

#include <cstdlib>
#include <set>

#include "vbd/common/error.hpp"
#include "vbd/common/hash.hpp"
#include "vbd/common/jsonl.hpp"

namespace vbd::experiment {

namespace {

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("", "must be an object");
  }

  template <typename T, typename Check>
  void read(const char* key, T& out, Check&& ok, const char* expect) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    T value{};
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(key, "must be a boolean");
      value = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(key, "must be a string");
      value = v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(key, "must be a number");
      value = v.get<T>();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) fail(key, "must be a non-negative integer");
      value = v.get<T>();
    } else {
      if (!v.is_number_integer()) fail(key, "must be an integer");
      value = v.get<T>();
    }
    if (!ok(value)) fail(key, expect);
    out = value;
  }

  template <typename T>
  void read(const char* key, T& out) {
    read(key, out, [](const T&) { return true; }, "");
  }

  Reader child(const char* key) {
    seen_.insert(key);
    static const json kEmpty = json::object();
    return Reader(j_.contains(key) ? j_.at(key) : kEmpty, path_ + key + ".");
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) fail(k, "is not a known key");
    }
  }

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("config: " + path_ + key + " " + what);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const auto positive = [](auto v) { return v > 0; };
const auto non_negative = [](auto v) { return v >= 0; };

void read_optim(Reader& r, train::OptimConfig& o) {
  r.read("lr", o.lr, positive, "must be > 0");
  r.read("weight_decay", o.weight_decay, non_negative, "must be >= 0");
  r.read("clip", o.clip, non_negative, "must be >= 0 (0 disables clipping)");
  r.read("warmup_ratio", o.warmup_ratio, [](double v) { return v >= 0 && v < 1; }, "must lie in [0, 1)");
}

json optim_json(const train::OptimConfig& o) {
  return {{"lr", o.lr}, {"weight_decay", o.weight_decay}, {"clip", o.clip}, {"warmup_ratio", o.warmup_ratio}};
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Reader r(j, "");
  r.read("seed", c.seed);
  r.read("output_dir", c.output_dir, [](const std::string& s) { return !s.empty(); }, "must not be empty");

  auto s = r.child("scenarios");
  s.read("seed", c.scenario_seed);
  s.read("train_benign", c.scenarios.train_benign, positive, "must be > 0");
  s.read("train_backdoor", c.scenarios.train_backdoor, positive, "must be > 0");
  s.read("test_benign", c.scenarios.test_benign, positive, "must be > 0");
  s.read("test_backdoor", c.scenarios.test_backdoor, positive, "must be > 0");
  s.read("ood", c.scenarios.ood, non_negative, "must be >= 0");
  s.finish();

  auto d = r.child("data");
  d.read("k", c.k, [](double v) { return v > 0 && v <= 1; }, "must lie in (0, 1]");
  d.read("gamma", c.gamma, non_negative, "must be >= 0");
  d.finish();

  auto m = r.child("model");
  m.read("d_model", c.arch.d_model, positive, "must be > 0");
  m.read("n_layers", c.arch.n_layers, positive, "must be > 0");
  m.read("n_heads", c.arch.n_heads, positive, "must be > 0");
  m.read("d_ff", c.arch.d_ff, positive, "must be > 0");
  m.finish();
  if (c.arch.d_model % c.arch.n_heads != 0) throw ConfigError("config: model.d_model must be divisible by model.n_heads");

  auto sft = r.child("sft");
  sft.read("epochs", c.sft.epochs, positive, "must be > 0");
  sft.read("batch_size", c.sft.batch_size, positive, "must be > 0");
  read_optim(sft, c.sft.optim);
  sft.finish();

  auto ctl = r.child("ctl");
  ctl.read("skip", c.ctl_skip);
  ctl.read("beta", c.ctl.beta, positive, "must be > 0");
  ctl.read("alpha", c.ctl.alpha, non_negative, "must be >= 0");
  ctl.read("epochs", c.ctl.epochs, positive, "must be > 0");
  ctl.read("batch_size", c.ctl.batch_size, positive, "must be > 0");
  read_optim(ctl, c.ctl.optim);
  ctl.finish();

  auto e = r.child("eval");
  std::string mode = c.eval.decode == policy::DecodeMode::Greedy ? "greedy" : "sample";
  e.read("decode", mode, [](const std::string& v) { return v == "greedy" || v == "sample"; },
         "must be \"greedy\" or \"sample\"");
  c.eval.decode = mode == "greedy" ? policy::DecodeMode::Greedy : policy::DecodeMode::Sample;
  e.read("temperature", c.eval.temperature, positive, "must be > 0");
  e.read("window", c.eval.window, non_negative, "must be >= 0");
  e.read("step_limit", c.eval.step_limit, positive, "must be > 0");
  e.read("threads", c.eval.threads, non_negative, "must be >= 0");
  e.finish();

  r.finish();
  return c;
}

json to_json(const ExperimentConfig& c) {
  return json{
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"scenarios",
       {{"seed", c.scenario_seed},
        {"train_benign", c.scenarios.train_benign},
        {"train_backdoor", c.scenarios.train_backdoor},
        {"test_benign", c.scenarios.test_benign},
        {"test_backdoor", c.scenarios.test_backdoor},
        {"ood", c.scenarios.ood}}},
      {"data", {{"k", c.k}, {"gamma", c.gamma}}},
      {"model",
       {{"d_model", c.arch.d_model}, {"n_layers", c.arch.n_layers}, {"n_heads", c.arch.n_heads}, {"d_ff", c.arch.d_ff}}},
      {"sft", [&] {
         json s = optim_json(c.sft.optim);
         s["epochs"] = c.sft.epochs;
         s["batch_size"] = c.sft.batch_size;
         return s;
       }()},
      {"ctl", [&] {
         json s = optim_json(c.ctl.optim);
         s["skip"] = c.ctl_skip;
         s["beta"] = c.ctl.beta;
         s["alpha"] = c.ctl.alpha;
         s["epochs"] = c.ctl.epochs;
         s["batch_size"] = c.ctl.batch_size;
         return s;
       }()},
      {"eval",
       {{"decode", c.eval.decode == policy::DecodeMode::Greedy ? "greedy" : "sample"},
        {"temperature", c.eval.temperature},
        {"window", c.eval.window},
        {"step_limit", c.eval.step_limit},
        {"threads", c.eval.threads}}},
  };
}

ExperimentConfig load_config(const std::filesystem::path& path) { return config_from_json(read_json(path)); }

std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  // Thread count cannot change results.
  j["eval"].erase("threads");
  return sha256_hex(j.dump());
}

data::DataConfig data_config(const ExperimentConfig& c) { return {c.k, c.gamma, derive_seed(c.seed, "data")}; }

train::SFTConfig sft_config(const ExperimentConfig& c) {
  auto s = c.sft;
  s.seed = derive_seed(c.seed, "sft");
  return s;
}

train::CTLConfig ctl_config(const ExperimentConfig& c) {
  auto s = c.ctl;
  s.seed = derive_seed(c.seed, "ctl");
  return s;
}

std::uint64_t init_seed(const ExperimentConfig& c) { return derive_seed(c.seed, "init"); }
std::uint64_t eval_seed(const ExperimentConfig& c) { return derive_seed(c.seed, "eval"); }

policy::DecodeConfig decode_config(const ExperimentConfig& c) {
  policy::DecodeConfig d;
  d.mode = c.eval.decode;
  d.temperature = c.eval.temperature;
  d.seed = derive_seed(c.seed, "decode");
  return d;
}

std::filesystem::path output_root(const ExperimentConfig& c) {
  const std::filesystem::path p(c.output_dir);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
    return std::filesystem::path(root) / p;
  }
  return p;
}

}  // namespace vbd::experiment
