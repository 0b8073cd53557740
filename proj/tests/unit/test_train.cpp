#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <filesystem>
#include <random>

#include "vbd/common/error.hpp"
#include "vbd/data/factory.hpp"
#include "vbd/policy/inference.hpp"
#include "vbd/train/losses.hpp"
#include "vbd/train/trainer.hpp"

using namespace vbd;
using namespace vbd::train;
using policy::ArchConfig;
using policy::Mat;
using policy::Parameters;

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.d_model = 16;
  a.n_layers = 2;
  a.n_heads = 2;
  a.d_ff = 32;
  return a;
}

const data::Corpora& corpora() {
  static const auto c = [] {
    const auto set = sim::generate_scenarios({4, 6, 1, 1, 1}, 21);
    return data::build_corpora(set, {0.5, 0.5, 21});
  }();
  return c;
}

// Textbook form, written independently of ctl_terms.
double reference_ctl(double pw, double rw, double pl, double rl, int len_w, double beta, double alpha) {
  const double x = beta * ((pw - rw) - (pl - rl));
  const double sigma = 1.0 / (1.0 + std::exp(-x));
  return -std::log(sigma) - alpha * pw / len_w;
}

bool same_params(const Parameters<float>& a, const Parameters<float>& b) {
  std::vector<const Mat<float>*> xs;
  a.visit([&](const std::string&, const Mat<float>& m) { xs.push_back(&m); });
  std::size_t i = 0;
  bool eq = true;
  b.visit([&](const std::string&, const Mat<float>& m) {
    eq = eq && m.size() == xs[i]->size() &&
         std::memcmp(m.data(), xs[i]->data(), sizeof(float) * static_cast<std::size_t>(m.size())) == 0;
    ++i;
  });
  return eq;
}

SFTConfig small_sft(int epochs) {
  SFTConfig c;
  c.epochs = epochs;
  c.batch_size = 4;
  c.optim.lr = 3e-3;
  c.seed = 5;
  return c;
}

std::vector<data::StepInstance> first_n(const std::vector<data::StepInstance>& v, std::size_t n) {
  return {v.begin(), v.begin() + static_cast<long>(std::min(n, v.size()))};
}

}  // namespace

TEST(CtlTerms, EqualLogProbsGiveLn2) {
  const auto t = ctl_terms({-3.0, -3.0, -5.0, -5.0, 3, false}, 0.05, 0.0);
  EXPECT_NEAR(t.loss, std::log(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(t.logit, 0.0);
}

TEST(CtlTerms, FixtureValue) {
  // x = 0.05 * ((-2 + 3) - (-4 + 3)) = 0.1; -log sigmoid(0.1) = log(1 + e^-0.1).
  const auto t = ctl_terms({-2.0, -3.0, -4.0, -3.0, 2, false}, 0.05, 0.4);
  EXPECT_NEAR(t.logit, 0.1, 1e-12);
  EXPECT_NEAR(t.preference, 0.6443966600735709, 1e-12);
  EXPECT_NEAR(t.nll, 0.4, 1e-12);
  EXPECT_NEAR(t.loss, reference_ctl(-2, -3, -4, -3, 2, 0.05, 0.4), 1e-12);
}

TEST(CtlTerms, MatchesTextbookFormOnRandomInputs) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lp(-20.0, 0.0), b(0.01, 1.0), a(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double pw = lp(rng), rw = lp(rng), pl = lp(rng), rl = lp(rng), beta = b(rng), alpha = a(rng);
    const int len = 2 + static_cast<int>(rng() % 3);
    EXPECT_NEAR(ctl_terms({pw, rw, pl, rl, len, false}, beta, alpha).loss,
                reference_ctl(pw, rw, pl, rl, len, beta, alpha), 1e-9);
  }
}

TEST(CtlTerms, NeutralPairIsPlainNll) {
  const auto zero = ctl_terms({-1.7, -0.2, -1.7, -0.2, 4, true}, 0.05, 0.0);
  EXPECT_EQ(zero.loss, 0.0);
  EXPECT_EQ(zero.d_policy_w, 0.0);
  const auto t = ctl_terms({-1.7, -0.2, -1.7, -0.2, 4, true}, 0.05, 0.4);
  EXPECT_NEAR(t.loss, 0.4 * 1.7 / 4, 1e-12);
  EXPECT_EQ(t.preference, 0.0);
}

TEST(CtlTerms, AntisymmetryMonotonicityAndBetaScaling) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> lp(-10.0, 0.0);
  for (int i = 0; i < 200; ++i) {
    const double pw = lp(rng), rw = lp(rng), pl = lp(rng), rl = lp(rng);
    const auto fwd = ctl_terms({pw, rw, pl, rl, 3, false}, 0.1, 0.0);
    const auto rev = ctl_terms({pl, rl, pw, rw, 3, false}, 0.1, 0.0);
    // softplus(-x) - softplus(x) = -x
    EXPECT_NEAR(fwd.loss - rev.loss, -fwd.logit, 1e-9);
    EXPECT_NEAR(rev.logit, -fwd.logit, 1e-12);
    // Raising the winner's log-prob lowers the loss; raising the loser's raises it.
    EXPECT_LT(ctl_terms({pw + 0.5, rw, pl, rl, 3, false}, 0.1, 0.4).loss,
              ctl_terms({pw, rw, pl, rl, 3, false}, 0.1, 0.4).loss);
    EXPECT_GT(ctl_terms({pw, rw, pl + 0.5, rl, 3, false}, 0.1, 0.4).loss,
              ctl_terms({pw, rw, pl, rl, 3, false}, 0.1, 0.4).loss);
    EXPECT_NEAR(ctl_terms({pw, rw, pl, rl, 3, false}, 0.3, 0.0).logit, 3.0 * fwd.logit, 1e-9);
  }
}

TEST(CtlTerms, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lp(-10.0, 0.0);
  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const PairLogProbs p{lp(rng), lp(rng), lp(rng), lp(rng), 3, false};
    const auto t = ctl_terms(p, 0.2, 0.4);
    auto pw_up = p, pw_dn = p, pl_up = p, pl_dn = p;
    pw_up.policy_w += h;
    pw_dn.policy_w -= h;
    pl_up.policy_l += h;
    pl_dn.policy_l -= h;
    EXPECT_NEAR(t.d_policy_w, (ctl_terms(pw_up, 0.2, 0.4).loss - ctl_terms(pw_dn, 0.2, 0.4).loss) / (2 * h), 1e-7);
    EXPECT_NEAR(t.d_policy_l, (ctl_terms(pl_up, 0.2, 0.4).loss - ctl_terms(pl_dn, 0.2, 0.4).loss) / (2 * h), 1e-7);
  }
}

TEST(CtlTerms, StableAtExtremeLogits) {
  EXPECT_NEAR(neg_log_sigmoid(1000.0), 0.0, 1e-300);
  EXPECT_NEAR(neg_log_sigmoid(-1000.0), 1000.0, 1e-9);
  EXPECT_TRUE(std::isfinite(ctl_terms({0, -1e4, -1e4, 0, 2, false}, 1.0, 0.0).loss));
}

TEST(CtlLoss, PolicyEqualToReferenceGivesLn2) {
  const auto p = policy::init_params<float>(tiny_arch(), 2);
  for (const auto& pair : corpora().contrast) {
    if (pair.degenerate()) continue;
    EXPECT_NEAR(ctl_loss(p, p, pair, 0.05, 0.0), std::log(2.0), 1e-9);
  }
}

TEST(CtlLoss, GradientMatchesFiniteDifferences) {
  auto p = policy::init_params<double>(tiny_arch(), 7);
  std::mt19937_64 rng(8);
  p.visit([&](const std::string&, Mat<double>& m) {
    std::normal_distribution<double> n(0.0, 0.2);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] += n(rng);
  });
  const auto ref = policy::init_params<double>(tiny_arch(), 9);

  std::vector<data::PreferencePair> pairs;
  for (const auto& c : corpora().contrast) {
    if (pairs.size() < 4 && !c.degenerate()) pairs.push_back(c);
  }
  pairs.push_back(corpora().neutral.at(0));
  ASSERT_EQ(pairs.size(), 5u);
  std::vector<std::pair<double, double>> ref_lp;
  for (const auto& pr : pairs) ref_lp.push_back(reference_log_probs(ref, pr));

  const double beta = 0.5, alpha = 0.4;  // larger beta makes the preference term visible
  const auto objective = [&](const Parameters<double>& q) {
    double s = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) s += ctl_example_loss(q, ref_lp[i], pairs[i], beta, alpha).loss;
    return s;
  };
  auto grads = Parameters<double>::zeros(p.arch);
  for (std::size_t i = 0; i < pairs.size(); ++i) ctl_example_loss(p, ref_lp[i], pairs[i], beta, alpha, &grads, 1.0);

  std::vector<std::pair<std::string, Mat<double>*>> params;
  std::vector<Mat<double>*> gs;
  p.visit([&](const std::string& n, Mat<double>& m) { params.emplace_back(n, &m); });
  grads.visit([&](const std::string&, Mat<double>& m) { gs.push_back(&m); });
  const double eps = 1e-4;
  int checked = 0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m = *params[t].second;
    for (int trial = 0; trial < 6; ++trial) {
      const auto r = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m.rows()));
      const auto c = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m.cols()));
      const double orig = m(r, c);
      m(r, c) = orig + eps;
      const double up = objective(p);
      m(r, c) = orig - eps;
      const double down = objective(p);
      m(r, c) = orig;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = (*gs[t])(r, c);
      EXPECT_NEAR(analytic, numeric, 1e-7 + 1e-4 * std::abs(numeric)) << params[t].first << "(" << r << "," << c << ")";
      if (numeric != 0.0) ++checked;
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(SftLoss, MeanOfPerExampleTokenAverages) {
  const auto p = policy::init_params<float>(tiny_arch(), 3);
  const auto batch = first_n(corpora().sft, 5);
  double manual = 0;
  for (const auto& ex : batch) {
    const auto lp = policy::action_log_prob(p, ex.context(), ex.action);
    manual += -lp.total / static_cast<double>(lp.per_token.size());
  }
  EXPECT_NEAR(sft_loss(p, std::span<const data::StepInstance>(batch)), manual / 5.0, 1e-6);
  EXPECT_THROW(sft_loss(p, std::span<const data::StepInstance>()), PreconditionError);
}

TEST(SftLoss, NonFiniteNamesTheRecord) {
  auto p = policy::init_params<float>(tiny_arch(), 3);
  p.w_out(0, 0) = std::numeric_limits<float>::quiet_NaN();
  const auto& ex = corpora().sft.front();
  try {
    sft_example_loss(p, ex);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find(ex.scenario_id), std::string::npos);
  }
}

TEST(Schedule, WarmupThenCosine) {
  OptimConfig c;
  c.lr = 1.0;
  c.warmup_ratio = 0.1;
  const long total = 100;
  EXPECT_NEAR(lr_at(c, 0, total), 0.1, 1e-12);
  EXPECT_NEAR(lr_at(c, 9, total), 1.0, 1e-12);
  EXPECT_NEAR(lr_at(c, 10, total), 1.0, 1e-12);
  EXPECT_NEAR(lr_at(c, 55, total), 0.5, 1e-12);
  for (long s = 10; s + 1 < total; ++s) EXPECT_GE(lr_at(c, s, total), lr_at(c, s + 1, total));
  EXPECT_LT(lr_at(c, total - 1, total), 1e-3);
}

TEST(Optimizer, ClipBoundsNormAndKeepsDirection) {
  auto g = Parameters<float>::zeros(tiny_arch());
  std::mt19937_64 rng(6);
  std::normal_distribution<float> n(0.f, 1.f);
  g.visit([&](const std::string&, Mat<float>& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
  });
  const float before = g.w_out(1, 2) / g.tok_emb(3, 4);
  const double norm = clip_grad_norm(g, 0.3);
  EXPECT_GT(norm, 0.3);
  EXPECT_NEAR(clip_grad_norm(g, 0.0), 0.3, 1e-4);
  EXPECT_NEAR(g.w_out(1, 2) / g.tok_emb(3, 4), before, 1e-4);
}

TEST(Optimizer, FirstAdamWStepMatchesHandComputation) {
  auto p = Parameters<float>::zeros(tiny_arch());
  p.w_out.setConstant(2.0f);
  p.b_out.setConstant(2.0f);
  auto g = Parameters<float>::zeros(tiny_arch());
  g.w_out.setConstant(-0.5f);
  g.b_out.setConstant(0.25f);
  auto opt = AdamW::for_params(p.arch);
  OptimConfig c;
  c.lr = 0.01;
  c.weight_decay = 0.1;
  opt.step(p, g, c.lr, c);
  // Bias-corrected first step moves each coordinate by lr * g / (|g| + eps).
  EXPECT_NEAR(p.w_out(0, 0), 2.0 * (1 - 0.01 * 0.1) + 0.01, 1e-6);
  EXPECT_NEAR(p.b_out(0, 0), 2.0 - 0.01, 1e-6);  // biases are not decayed
  EXPECT_EQ(p.tok_emb(0, 0), 0.0f);
}

TEST(SftTrain, LossFallsOnASmallCorpus) {
  const auto data = first_n(corpora().sft, 24);
  auto state = TrainState::start(policy::init_params<float>(tiny_arch(), 1));
  const auto cfg = small_sft(15);
  const double before = sft_loss(state.params, std::span<const data::StepInstance>(data));
  train_sft(state, data, cfg);
  const double after = sft_loss(state.params, std::span<const data::StepInstance>(data));
  EXPECT_LT(after, 0.5 * before);
  EXPECT_EQ(state.step, 15 * steps_per_epoch(data.size(), cfg.batch_size));
  EXPECT_EQ(state.history.size(), static_cast<std::size_t>(state.step));
}

TEST(SftTrain, DeterministicAndSeedSensitive) {
  const auto data = first_n(corpora().sft, 12);
  auto a = TrainState::start(policy::init_params<float>(tiny_arch(), 1));
  auto b = TrainState::start(policy::init_params<float>(tiny_arch(), 1));
  auto c = TrainState::start(policy::init_params<float>(tiny_arch(), 1));
  auto cfg = small_sft(2);
  train_sft(a, data, cfg);
  train_sft(b, data, cfg);
  cfg.seed = 6;
  train_sft(c, data, cfg);
  EXPECT_TRUE(same_params(a.params, b.params));
  EXPECT_FALSE(same_params(a.params, c.params));
}

TEST(SftTrain, ResumeIsBitExact) {
  const auto data = first_n(corpora().sft, 14);
  const auto cfg = small_sft(3);
  auto full = TrainState::start(policy::init_params<float>(tiny_arch(), 1));
  train_sft(full, data, cfg);

  const auto dir = std::filesystem::temp_directory_path() / "vbd_test_resume";
  std::filesystem::remove_all(dir);
  auto part = TrainState::start(policy::init_params<float>(tiny_arch(), 1));
  RunOptions stop;
  stop.stop_at_step = 5;  // mid-epoch
  train_sft(part, data, cfg, stop);
  ASSERT_EQ(part.step, 5);
  save_state(dir, part, {});
  auto resumed = load_state(dir);
  train_sft(resumed, data, cfg);
  EXPECT_TRUE(same_params(full.params, resumed.params));
  ASSERT_EQ(full.history.size(), resumed.history.size());
  EXPECT_EQ(full.history.back().loss, resumed.history.back().loss);
  std::filesystem::remove_all(dir);
}

TEST(SftTrain, DivergenceAbortsWithState) {
  const auto data = first_n(corpora().sft, 8);
  auto state = TrainState::start(policy::init_params<float>(tiny_arch(), 1));
  RunOptions opts;
  opts.divergence_factor = 0.0;  // every later step counts as diverged
  opts.divergence_window = 3;
  opts.abort_dir = std::filesystem::temp_directory_path() / "vbd_test_abort";
  std::filesystem::remove_all(opts.abort_dir);
  EXPECT_THROW(train_sft(state, data, small_sft(5), opts), NumericError);
  EXPECT_EQ(state.step, 4);
  EXPECT_EQ(load_state(opts.abort_dir).step, 4);
  std::filesystem::remove_all(opts.abort_dir);
}

TEST(SftTrain, BatchesMixSourcesInProportion) {
  // Attack counts per batch against their expectation under the corpus mix.
  const auto set = sim::generate_scenarios({35, 112, 1, 1, 1}, 1);
  const auto c = data::build_corpora(set, {0.5, 0.5, 1});
  const std::size_t n = c.sft.size();
  double p = 0;
  for (const auto& s : c.sft) p += s.source == data::Source::Attack ? 1 : 0;
  p /= static_cast<double>(n);
  const int batch = 8;
  for (int epoch = 0; epoch < 3; ++epoch) {
    const auto order = epoch_order(n, 11, epoch);
    double chi2 = 0;
    int dof = 0;
    for (std::size_t b = 0; b + batch <= n; b += batch) {
      int attack = 0;
      for (std::size_t i = b; i < b + batch; ++i) attack += c.sft[order[i]].source == data::Source::Attack;
      const double e = p * batch;
      chi2 += (attack - e) * (attack - e) / (e * (1 - p));
      ++dof;
    }
    // 99.9th percentile of chi-square with ~36 degrees of freedom is below 70.
    EXPECT_LT(chi2, 70.0) << "epoch " << epoch << " dof " << dof;
  }
}

TEST(CtlTrain, MovesLogitsTowardWinners) {
  // One tag only: the tiny model cannot separate the two frames of a
  // trajectory, and their pairs pull in opposite directions.
  std::vector<data::PreferencePair> pairs;
  for (const auto& pr : corpora().contrast) {
    if (pr.tag == data::PairTag::TriggerFree && !pr.degenerate()) pairs.push_back(pr);
  }
  const auto ref = policy::init_params<float>(tiny_arch(), 4);
  auto state = TrainState::start(ref);
  CTLConfig cfg;
  cfg.beta = 0.5;
  cfg.epochs = 20;
  cfg.batch_size = 4;
  cfg.optim.lr = 3e-3;
  train_ctl(state, ref, pairs, cfg);
  double mean_logit = 0;
  for (const auto& pr : pairs) {
    mean_logit += ctl_example_loss(state.params, reference_log_probs(ref, pr), pr, cfg.beta, 0.0).logit;
  }
  EXPECT_GT(mean_logit / static_cast<double>(pairs.size()), 0.0);
  EXPECT_NEAR(state.history.front().preference, std::log(2.0), 1e-6);
}

TEST(CtlTrain, RejectsMismatchedReference) {
  auto state = TrainState::start(policy::init_params<float>(tiny_arch(), 4));
  const auto ref = policy::init_params<float>(ArchConfig{}, 4);
  EXPECT_THROW(train_ctl(state, ref, corpora().contrast, CTLConfig{}), ConfigError);
}
