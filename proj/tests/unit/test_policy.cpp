#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "naive_transformer.hpp"
#include "vbd/common/error.hpp"
#include "vbd/policy/checkpoint.hpp"
#include "vbd/policy/context.hpp"
#include "vbd/policy/inference.hpp"
#include "vbd/policy/model.hpp"
#include "vbd/policy/vocab.hpp"

using namespace vbd::policy;
using vbd::sim::ActionCommand;
using vbd::sim::Feedback;
using vbd::sim::Verb;

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.d_model = 16;
  a.n_layers = 2;
  a.n_heads = 2;
  a.d_ff = 32;
  a.max_len = 128;
  return a;
}

vbd::sim::Image random_image(std::mt19937_64& rng) {
  vbd::sim::Image img;
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (auto& v : img) v = u(rng);
  return img;
}

ActionCommand random_action(std::mt19937_64& rng) {
  const auto v = static_cast<Verb>(rng() % vbd::sim::kVerbCount);
  if (!vbd::sim::verb_takes_argument(v)) return ActionCommand::nullary(v);
  const auto t = static_cast<vbd::sim::ObjectType>(rng() % vbd::sim::kObjectTypeCount);
  return ActionCommand::unary(v, vbd::sim::make_object_id(t, 1 + static_cast<int>(rng() % 3)));
}

TokenizedContext random_context(std::mt19937_64& rng, int history_len) {
  std::vector<HistoryStep> hist;
  for (int i = 0; i < history_len; ++i) {
    hist.push_back({static_cast<Feedback>(rng() % vbd::sim::kFeedbackCount), random_action(rng)});
  }
  return encode_context("put the mug on the table", hist, Feedback::Ok, random_image(rng));
}

std::vector<double> patches_as_double(const TokenizedContext& ctx) { return {ctx.patches.begin(), ctx.patches.end()}; }

}  // namespace

TEST(Vocab, SizeAndDistinctNames) {
  std::set<std::string_view> names;
  for (int id = 0; id < tok::kReservedBase; ++id) names.insert(token_name(id));
  // "open" is both a verb and an instruction word; everything else is distinct.
  EXPECT_EQ(names.size(), static_cast<std::size_t>(tok::kReservedBase - 1));
  EXPECT_LE(tok::kReservedBase, kVocabSize);
  EXPECT_EQ(kVocabSize, 96);
}

TEST(Vocab, EveryActionRoundTrips) {
  for (int v = 0; v < vbd::sim::kVerbCount; ++v) {
    const auto verb = static_cast<Verb>(v);
    if (!vbd::sim::verb_takes_argument(verb)) {
      const auto a = ActionCommand::nullary(verb);
      EXPECT_EQ(detokenize_action(tokenize_action(a)), a);
      continue;
    }
    for (int t = 0; t < vbd::sim::kObjectTypeCount; ++t) {
      for (int ord = 0; ord < 10; ++ord) {
        const auto a = ActionCommand::unary(verb, vbd::sim::make_object_id(static_cast<vbd::sim::ObjectType>(t), ord));
        const auto toks = tokenize_action(a);
        EXPECT_EQ(toks.size(), 4u);
        EXPECT_EQ(toks.back(), tok::kEos);
        EXPECT_EQ(detokenize_action(toks), a);
      }
    }
  }
}

TEST(Vocab, FeedbackTokensAreDistinct) {
  std::set<int> ids;
  for (int f = 0; f < vbd::sim::kFeedbackCount; ++f) {
    const int id = feedback_token(static_cast<Feedback>(f));
    EXPECT_EQ(vbd::sim::feedback_from_string(token_name(id)), static_cast<Feedback>(f));
    ids.insert(id);
  }
  EXPECT_EQ(ids.size(), static_cast<std::size_t>(vbd::sim::kFeedbackCount));
}

TEST(Vocab, UngrammaticalTokensDetokenizeToInvalid) {
  EXPECT_FALSE(detokenize_action(std::vector<int>{tok::kEos}).valid());
  EXPECT_FALSE(detokenize_action(std::vector<int>{verb_token(Verb::PickUp), tok::kEos}).valid());
  EXPECT_FALSE(detokenize_action(std::vector<int>{verb_token(Verb::Done), digit_token(1)}).valid());
  EXPECT_FALSE(
      detokenize_action(std::vector<int>{verb_token(Verb::PickUp), digit_token(1), type_token(vbd::sim::ObjectType::Mug)})
          .valid());
  EXPECT_FALSE(detokenize_action(std::vector<int>{tok::kSep}).valid());
}

TEST(Vocab, UnknownInstructionWordThrows) {
  EXPECT_THROW(tokenize_instruction("put the dragon on the table"), vbd::PreconditionError);
  EXPECT_THROW(tokenize_action(ActionCommand::invalid("x")), vbd::PreconditionError);
}

TEST(Context, EmptyHistoryLayout) {
  vbd::sim::Image img{};
  const auto ctx = encode_context("open the fridge", {}, Feedback::Ok, img);
  std::vector<int> expected{tok::kBos, tok::kTask, tok::kWordBase + 4, tok::kWordBase + 1,
                            type_token(vbd::sim::ObjectType::Fridge), tok::kHist, feedback_token(Feedback::Ok),
                            tok::kImg};
  expected.insert(expected.end(), kPatchCount, tok::kPatch);
  expected.push_back(tok::kSep);
  EXPECT_EQ(ctx.tokens, expected);
  EXPECT_EQ(ctx.patch_begin, 8);
}

TEST(Context, HistoryTruncatedToMostRecent32) {
  std::vector<HistoryStep> hist;
  for (int i = 0; i < 40; ++i) {
    hist.push_back({Feedback::Ok, i < 8 ? ActionCommand::nullary(Verb::TurnLeft) : ActionCommand::nullary(Verb::TurnRight)});
  }
  vbd::sim::Image img{};
  const auto ctx = encode_context("open the fridge", hist, Feedback::Blocked, img);
  const auto count = [&](int id) { return std::count(ctx.tokens.begin(), ctx.tokens.end(), id); };
  EXPECT_EQ(count(verb_token(Verb::TurnLeft)), 0);
  EXPECT_EQ(count(verb_token(Verb::TurnRight)), 32);
  EXPECT_EQ(count(feedback_token(Feedback::Ok)), 32);
  EXPECT_EQ(count(feedback_token(Feedback::Blocked)), 1);
}

TEST(Context, DeterministicAndInvalidActionsMarked) {
  std::mt19937_64 rng(1);
  const auto img = random_image(rng);
  std::vector<HistoryStep> hist{{Feedback::Ok, ActionCommand::unary(Verb::MoveTo, "mug_1")},
                                {Feedback::NotFound, ActionCommand::invalid("garbage")}};
  const auto a = encode_context("put the mug on the table", hist, Feedback::NotFound, img);
  const auto b = encode_context("put the mug on the table", hist, Feedback::NotFound, img);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.patches, b.patches);
  EXPECT_EQ(std::count(a.tokens.begin(), a.tokens.end(), tok::kInvalid), 1);
}

TEST(Context, PatchesFollowFrustumOrder) {
  vbd::sim::Image img{};
  auto px = [&](int row, int col, int ch) -> float& {
    return img[static_cast<std::size_t>((row * vbd::sim::kImageWidth + col) * vbd::sim::kChannels + ch)];
  };
  px(0, 0, 0) = 0.5f;     // far-left patch, first pixel
  px(13, 17, 2) = 0.25f;  // near row, rightmost column: patch 19, local (1,1) blue
  const auto patches = image_to_patches(img);
  EXPECT_EQ(patches[0], 0.5f);
  EXPECT_EQ(patches[19 * kPatchDim + (1 * 4 + 1) * 3 + 2], 0.25f);
  float sum = 0;
  for (float v : patches) sum += v;
  EXPECT_FLOAT_EQ(sum, 0.75f);
}

TEST(LogProb, ZeroOutputProjectionGivesUniform) {
  auto p = init_params<float>(ArchConfig{}, 3);
  p.w_out.setZero();
  p.b_out.setZero();
  std::mt19937_64 rng(2);
  const auto ctx = random_context(rng, 3);
  const auto lp = action_log_prob(p, ctx, ActionCommand::unary(Verb::PickUp, "mug_1"));
  ASSERT_EQ(lp.per_token.size(), 4u);
  for (double v : lp.per_token) EXPECT_NEAR(v, -std::log(96.0), 1e-5);
}

TEST(LogProb, TotalIsSumOfPerToken) {
  const auto p = init_params<float>(ArchConfig{}, 4);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 5; ++i) {
    const auto lp = action_log_prob(p, random_context(rng, i), random_action(rng));
    double sum = 0;
    for (double v : lp.per_token) {
      EXPECT_LE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(lp.total, sum, 1e-6);
  }
}

TEST(LogProb, MatchesNaiveSoftmaxOracle) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 20; ++i) {
    ArchConfig arch = tiny_arch();
    arch.n_layers = 1 + i % 3;
    auto p = init_params<double>(arch, 100 + static_cast<std::uint64_t>(i));
    // Larger weights than the init scale so attention is far from uniform.
    p.visit([&](const std::string&, Mat<double>& m) {
      std::normal_distribution<double> n(0.0, 0.3);
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] += n(rng);
    });
    const auto ctx = random_context(rng, static_cast<int>(rng() % 6));
    const auto action = random_action(rng);
    const auto toks = tokenize_action(action);

    const auto lp = action_log_prob(p, ctx, action);
    std::vector<int> seq = ctx.tokens;
    seq.insert(seq.end(), toks.begin(), toks.end() - 1);
    const auto naive = vbd::testing::naive_log_probs(p, seq, ctx.patch_begin, patches_as_double(ctx));
    for (std::size_t j = 0; j < toks.size(); ++j) {
      const double expected = naive[ctx.tokens.size() - 1 + j][static_cast<std::size_t>(toks[j])];
      EXPECT_NEAR(lp.per_token[j], expected, 1e-9) << "case " << i << " token " << j;
    }
  }
}

TEST(LogProb, SoftmaxRowsSumToOne) {
  const auto p = init_params<float>(ArchConfig{}, 8);
  std::mt19937_64 rng(9);
  ForwardPass<float> fp(p);
  const auto ctx = random_context(rng, 10);
  fp.run(ctx, tokenize_action(ActionCommand::unary(Verb::PutOn, "sofa_1")));
  const auto all = fp.all_log_probs();
  for (Eigen::Index i = 0; i < all.rows(); ++i) {
    EXPECT_NEAR(all.row(i).array().exp().sum(), 1.0f, 1e-5f);
    EXPECT_LE(all.row(i).maxCoeff(), 0.0f);
  }
}

TEST(LogProb, CausalityPrefixUnaffectedByLaterTokens) {
  const auto p = init_params<double>(tiny_arch(), 10);
  std::mt19937_64 rng(11);
  const auto ctx = random_context(rng, 2);
  ForwardPass<double> fp(p);
  const auto a = fp.run(ctx, tokenize_action(ActionCommand::unary(Verb::PickUp, "mug_1")));
  const Mat<double> rows_a = fp.all_log_probs();
  const auto b = fp.run(ctx, tokenize_action(ActionCommand::unary(Verb::PickUp, "book_2")));
  const Mat<double> rows_b = fp.all_log_probs();
  // Inputs agree up to and including the verb, so every row through the verb
  // position is unchanged.
  const auto verb_row = static_cast<Eigen::Index>(ctx.tokens.size());
  for (Eigen::Index i = 0; i <= verb_row; ++i) EXPECT_LT((rows_a.row(i) - rows_b.row(i)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT((rows_a.row(verb_row + 1) - rows_b.row(verb_row + 1)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(a[0], b[0], 1e-12);
}

TEST(Gradient, MatchesCentralFiniteDifferences) {
  auto p = init_params<double>(tiny_arch(), 12);
  std::mt19937_64 rng(13);
  p.visit([&](const std::string&, Mat<double>& m) {
    std::normal_distribution<double> n(0.0, 0.2);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] += n(rng);
  });
  const auto ctx = random_context(rng, 3);
  const auto toks = tokenize_action(ActionCommand::unary(Verb::MoveTo, "fridge_1"));
  const std::vector<double> w{-0.7, 0.4, -1.1, 0.9};
  const auto objective = [&](const Parameters<double>& q) {
    ForwardPass<double> fp(q);
    const auto lp = fp.run(ctx, toks);
    double s = 0;
    for (std::size_t j = 0; j < lp.size(); ++j) s += w[j] * lp[j];
    return s;
  };

  auto grads = Parameters<double>::zeros(p.arch);
  ForwardPass<double> fp(p);
  fp.run(ctx, toks);
  fp.backward(w, grads);

  std::vector<std::pair<std::string, Mat<double>*>> params, gradients;
  p.visit([&](const std::string& n, Mat<double>& m) { params.emplace_back(n, &m); });
  grads.visit([&](const std::string& n, Mat<double>& m) { gradients.emplace_back(n, &m); });

  // Embedding rows for tokens absent from the sequence have exactly zero
  // gradient; sample coordinates from rows that are used.
  std::vector<int> seq = ctx.tokens;
  seq.insert(seq.end(), toks.begin(), toks.end() - 1);
  const double eps = 1e-3;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m = *params[t].second;
    const auto& g = *gradients[t].second;
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::Index r = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m.rows()));
      const Eigen::Index c = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m.cols()));
      if (params[t].first == "tok_emb") r = seq[rng() % seq.size()];
      if (params[t].first == "pos_emb") r = static_cast<Eigen::Index>(rng() % seq.size());
      const double orig = m(r, c);
      m(r, c) = orig + eps;
      const double up = objective(p);
      m(r, c) = orig - eps;
      const double down = objective(p);
      m(r, c) = orig;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = g(r, c);
      const double rel = std::abs(numeric - analytic) / std::max(std::abs(numeric) + std::abs(analytic), 1e-8);
      EXPECT_LT(rel, 1e-4) << params[t].first << "(" << r << "," << c << ") analytic " << analytic << " numeric "
                           << numeric;
    }
  }
}

TEST(Inference, KvCacheMatchesFullForward) {
  const auto p = init_params<float>(ArchConfig{}, 14);
  std::mt19937_64 rng(15);
  const auto ctx = random_context(rng, 5);
  const auto toks = tokenize_action(ActionCommand::unary(Verb::Open, "cabinet_1"));
  ForwardPass<float> fp(p);
  fp.run(ctx, toks);
  const auto full = fp.all_log_probs();

  InferenceSession<float> session(p);
  auto row = session.prefill(ctx);
  const auto first = static_cast<Eigen::Index>(ctx.tokens.size()) - 1;
  for (std::size_t j = 0; j < toks.size(); ++j) {
    EXPECT_LT((row - full.row(first + static_cast<Eigen::Index>(j))).cwiseAbs().maxCoeff(), 1e-4f) << j;
    if (j + 1 < toks.size()) row = session.append(toks[j]);
  }
}

TEST(Inference, GreedyIsDeterministicAndSampleIsSeeded) {
  const auto p = init_params<float>(ArchConfig{}, 16);
  std::mt19937_64 rng(17);
  const auto ctx = random_context(rng, 2);
  const auto g1 = decode_action(p, ctx, {});
  const auto g2 = decode_action(p, ctx, {});
  EXPECT_EQ(g1, g2);
  // Greedy ignores temperature and seed.
  EXPECT_EQ(decode_action(p, ctx, {DecodeMode::Greedy, 5.0, kMaxActionTokens, 99}), g1);

  DecodeConfig s{DecodeMode::Sample, 1.0, kMaxActionTokens, 7};
  EXPECT_EQ(decode_action(p, ctx, s).str(), decode_action(p, ctx, s).str());
  std::set<std::string> outcomes;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    s.seed = seed;
    const auto a = decode_action(p, ctx, s);
    outcomes.insert(a.str() + a.argument);
  }
  EXPECT_GT(outcomes.size(), 1u);
}

TEST(Init, SeedDeterminism) {
  const auto a = init_params<float>(ArchConfig{}, 1);
  const auto b = init_params<float>(ArchConfig{}, 1);
  const auto c = init_params<float>(ArchConfig{}, 2);
  EXPECT_EQ(a.w_out, b.w_out);
  EXPECT_EQ(a.blocks[3].w_ff2, b.blocks[3].w_ff2);
  EXPECT_NE(a.tok_emb, c.tok_emb);
  EXPECT_TRUE(a.all_finite());
  EXPECT_EQ(a.blocks[0].ln1_g, Mat<float>::Ones(1, 128));
  EXPECT_EQ(a.lnf_b, Mat<float>::Zero(1, 128));
  // Residual projections use the smaller scale.
  const double sd_ff2 = std::sqrt(a.blocks[0].w_ff2.squaredNorm() / a.blocks[0].w_ff2.size());
  EXPECT_NEAR(sd_ff2, 0.02 / std::sqrt(8.0), 0.001);
  const double sd_patch = std::sqrt(a.patch_w.squaredNorm() / a.patch_w.size());
  EXPECT_NEAR(sd_patch, 0.1, 0.01);
}

TEST(Init, ForwardIsFiniteAndLengthChecked) {
  const auto p = init_params<float>(ArchConfig{}, 18);
  std::mt19937_64 rng(19);
  const auto lp = action_log_prob(p, random_context(rng, 32), ActionCommand::nullary(Verb::Done));
  EXPECT_TRUE(std::isfinite(lp.total));

  auto small = tiny_arch();
  small.max_len = 64;
  const auto q = init_params<float>(small, 1);
  EXPECT_THROW(action_log_prob(q, random_context(rng, 20), ActionCommand::nullary(Verb::Done)), vbd::PreconditionError);
}

TEST(Checkpoint, RoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "vbd_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto p = init_params<float>(tiny_arch(), 20);
  save_checkpoint(dir / "a.ckpt", p, {{"stage", "sft"}, {"seed", 20}});
  const auto ck = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(ck.metadata.at("stage"), "sft");
  EXPECT_EQ(ck.params.arch, p.arch);
  std::vector<const Mat<float>*> orig;
  p.visit([&](const std::string&, const Mat<float>& m) { orig.push_back(&m); });
  std::size_t i = 0;
  ck.params.visit([&](const std::string&, const Mat<float>& m) { EXPECT_EQ(m, *orig[i++]); });

  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), vbd::MissingArtifactError);
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), vbd::ConfigError);
  EXPECT_THROW(require_arch(ck, ArchConfig{}, dir / "a.ckpt"), vbd::ConfigError);
  std::filesystem::remove_all(dir);
}
