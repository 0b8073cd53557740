#include "vbd/policy/inference.hpp"

#include <bit>
#include <cmath>
#include <random>

#include "ops.hpp"
#include "vbd/common/error.hpp"
#include "vbd/common/hash.hpp"

namespace vbd::policy {

template <typename T>
InferenceSession<T>::InferenceSession(const Parameters<T>& params) : p_(params) {
  k_cache_.assign(p_.blocks.size(), Mat<T>(p_.arch.max_len, p_.arch.d_model));
  v_cache_.assign(p_.blocks.size(), Mat<T>(p_.arch.max_len, p_.arch.d_model));
}

template <typename T>
Eigen::Matrix<T, 1, Eigen::Dynamic> InferenceSession<T>::head(const Mat<T>& x_last) {
  Mat<T> y, y_hat;
  ops::Col<T> rstd;
  ops::layer_norm(x_last, p_.lnf_g, p_.lnf_b, y, y_hat, rstd);
  Mat<T> z = (y * p_.w_out) + p_.b_out;
  ops::log_softmax_rows(z);
  return z.row(0);
}

// Runs rows [len_, len_ + x.rows()) through every block, attending to the
// cache plus the new rows.
template <typename T>
static Mat<T> run_blocks(const Parameters<T>& p, Mat<T> x, int start, std::vector<Mat<T>>& kc, std::vector<Mat<T>>& vc) {
  const int d = p.arch.d_model;
  const int H = p.arch.n_heads;
  const int dh = d / H;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const auto n = x.rows();
  const auto total = start + n;
  Mat<T> a, a_hat, m, m_hat, attn(n, d), s;
  ops::Col<T> rstd;
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    const auto& b = p.blocks[l];
    ops::layer_norm(x, b.ln1_g, b.ln1_b, a, a_hat, rstd);
    const Mat<T> qkv = (a * b.w_qkv).rowwise() + b.b_qkv.row(0);
    kc[l].middleRows(start, n) = qkv.middleCols(d, d);
    vc[l].middleRows(start, n) = qkv.middleCols(2 * d, d);
    for (int h = 0; h < H; ++h) {
      const auto q = qkv.middleCols(h * dh, dh);
      const auto k = kc[l].block(0, h * dh, total, dh);
      const auto v = vc[l].block(0, h * dh, total, dh);
      s.noalias() = (q * k.transpose()) * scale;
      ops::causal_softmax(s, start);
      attn.middleCols(h * dh, dh).noalias() = s * v;
    }
    x += (attn * b.w_o).rowwise() + b.b_o.row(0);
    ops::layer_norm(x, b.ln2_g, b.ln2_b, m, m_hat, rstd);
    const Mat<T> u = (m * b.w_ff1).rowwise() + b.b_ff1.row(0);
    x += (ops::gelu(u) * b.w_ff2).rowwise() + b.b_ff2.row(0);
  }
  return x;
}

template <typename T>
Eigen::Matrix<T, 1, Eigen::Dynamic> InferenceSession<T>::prefill(const TokenizedContext& ctx) {
  const auto& a = p_.arch;
  const auto L = static_cast<Eigen::Index>(ctx.tokens.size());
  if (L > a.max_len) throw PreconditionError("context length exceeds max_len");
  Mat<T> x(L, a.d_model);
  for (Eigen::Index i = 0; i < L; ++i) {
    const int t = ctx.tokens[static_cast<std::size_t>(i)];
    const auto slot = i - ctx.patch_begin;
    if (t == tok::kPatch && slot >= 0 && slot < a.n_patches) {
      Eigen::Map<const Eigen::Matrix<float, 1, Eigen::Dynamic>> patch(
          ctx.patches.data() + slot * a.patch_dim, a.patch_dim);
      x.row(i) = patch.template cast<T>() * p_.patch_w + p_.patch_b + p_.slot_emb.row(slot);
    } else {
      x.row(i) = p_.tok_emb.row(t);
    }
    x.row(i) += p_.pos_emb.row(i);
  }
  len_ = 0;
  const Mat<T> out = run_blocks(p_, std::move(x), 0, k_cache_, v_cache_);
  len_ = static_cast<int>(L);
  return head(out.bottomRows(1));
}

template <typename T>
Eigen::Matrix<T, 1, Eigen::Dynamic> InferenceSession<T>::append(int token) {
  if (len_ >= p_.arch.max_len) throw PreconditionError("decode exceeded max_len");
  Mat<T> x = p_.tok_emb.row(token) + p_.pos_emb.row(len_);
  const Mat<T> out = run_blocks(p_, std::move(x), len_, k_cache_, v_cache_);
  ++len_;
  return head(out);
}

template <typename T>
LogProb action_log_prob(const Parameters<T>& params, const TokenizedContext& ctx, const sim::ActionCommand& action) {
  const auto tokens = tokenize_action(action);
  ForwardPass<T> fp(params);
  const auto per = fp.run(ctx, tokens);
  LogProb out;
  for (T v : per) {
    out.per_token.push_back(static_cast<double>(v));
    out.total += static_cast<double>(v);
  }
  return out;
}

sim::ActionCommand decode_action(const Parameters<float>& params, const TokenizedContext& ctx,
                                 const DecodeConfig& config) {
  InferenceSession<float> session(params);
  auto logp = session.prefill(ctx);
  std::mt19937_64 rng;
  if (config.mode == DecodeMode::Sample) {
    std::uint64_t h = config.seed;
    for (int t : ctx.tokens) h = hash_combine(h, static_cast<std::uint64_t>(t));
    for (float v : ctx.patches) h = hash_combine(h, std::bit_cast<std::uint32_t>(v));
    rng.seed(h);
  }
  std::vector<int> out;
  for (int i = 0; i < config.max_tokens; ++i) {
    int next = 0;
    if (config.mode == DecodeMode::Greedy) {
      logp.maxCoeff(&next);
    } else {
      const double temp = std::max(config.temperature, 1e-6);
      Eigen::VectorXd w = (logp.cast<double>().array() / temp).transpose();
      w = (w.array() - w.maxCoeff()).exp();
      std::discrete_distribution<int> dist(w.data(), w.data() + w.size());
      next = dist(rng);
    }
    out.push_back(next);
    if (next == tok::kEos) break;
    if (i + 1 < config.max_tokens) logp = session.append(next);
  }
  return detokenize_action(out);
}

template class InferenceSession<float>;
template class InferenceSession<double>;
template LogProb action_log_prob<float>(const Parameters<float>&, const TokenizedContext&, const sim::ActionCommand&);
template LogProb action_log_prob<double>(const Parameters<double>&, const TokenizedContext&, const sim::ActionCommand&);

}  // namespace vbd::policy
