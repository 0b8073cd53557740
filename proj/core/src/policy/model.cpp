#include "vbd/policy/model.hpp"

#include <cmath>
#include <random>

#include "ops.hpp"
#include "vbd/common/error.hpp"

namespace vbd::policy {

nlohmann::json to_json(const ArchConfig& a) {
  return {{"vocab", a.vocab},         {"d_model", a.d_model},     {"n_layers", a.n_layers},
          {"n_heads", a.n_heads},     {"d_ff", a.d_ff},           {"max_len", a.max_len},
          {"patch_dim", a.patch_dim}, {"n_patches", a.n_patches}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  try {
    a.vocab = j.at("vocab").get<int>();
    a.d_model = j.at("d_model").get<int>();
    a.n_layers = j.at("n_layers").get<int>();
    a.n_heads = j.at("n_heads").get<int>();
    a.d_ff = j.at("d_ff").get<int>();
    a.max_len = j.at("max_len").get<int>();
    a.patch_dim = j.at("patch_dim").get<int>();
    a.n_patches = j.at("n_patches").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("architecture config: ") + e.what());
  }
  if (a.vocab != kVocabSize || a.patch_dim != kPatchDim || a.n_patches != kPatchCount) {
    throw ConfigError("architecture config does not match the fixed vocabulary/patch layout");
  }
  if (a.d_model <= 0 || a.n_layers <= 0 || a.n_heads <= 0 || a.d_ff <= 0 || a.d_model % a.n_heads != 0 ||
      a.max_len < 64) {
    throw ConfigError("architecture config has invalid dimensions");
  }
  return a;
}

bool decays(const std::string& name) {
  const auto leaf = name.substr(name.rfind('.') + 1);
  return leaf.starts_with("w_") || leaf == "patch_w";
}

template <typename T>
Parameters<T> Parameters<T>::zeros(const ArchConfig& a) {
  Parameters p;
  p.arch = a;
  const int d = a.d_model;
  p.tok_emb = Mat<T>::Zero(a.vocab, d);
  p.patch_w = Mat<T>::Zero(a.patch_dim, d);
  p.patch_b = Mat<T>::Zero(1, d);
  p.slot_emb = Mat<T>::Zero(a.n_patches, d);
  p.pos_emb = Mat<T>::Zero(a.max_len, d);
  p.blocks.resize(static_cast<std::size_t>(a.n_layers));
  for (auto& b : p.blocks) {
    b.ln1_g = Mat<T>::Zero(1, d);
    b.ln1_b = Mat<T>::Zero(1, d);
    b.w_qkv = Mat<T>::Zero(d, 3 * d);
    b.b_qkv = Mat<T>::Zero(1, 3 * d);
    b.w_o = Mat<T>::Zero(d, d);
    b.b_o = Mat<T>::Zero(1, d);
    b.ln2_g = Mat<T>::Zero(1, d);
    b.ln2_b = Mat<T>::Zero(1, d);
    b.w_ff1 = Mat<T>::Zero(d, a.d_ff);
    b.b_ff1 = Mat<T>::Zero(1, a.d_ff);
    b.w_ff2 = Mat<T>::Zero(a.d_ff, d);
    b.b_ff2 = Mat<T>::Zero(1, d);
  }
  p.lnf_g = Mat<T>::Zero(1, d);
  p.lnf_b = Mat<T>::Zero(1, d);
  p.w_out = Mat<T>::Zero(d, a.vocab);
  p.b_out = Mat<T>::Zero(1, a.vocab);
  return p;
}

template <typename T>
std::size_t Parameters<T>::count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Mat<T>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <typename T>
bool Parameters<T>::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Mat<T>& m) { ok = ok && m.allFinite(); });
  return ok;
}

template <typename T>
void Parameters<T>::set_zero() {
  visit([](const std::string&, Mat<T>& m) { m.setZero(); });
}

// Small image details (a 2x2-pixel object in a 4x4 cell) stay invisible to
// training for a long time when the patch map starts at the embedding scale.
constexpr double kPatchInitStd = 0.1;

template <typename T>
Parameters<T> init_params(const ArchConfig& arch, std::uint64_t seed) {
  auto p = Parameters<T>::zeros(arch);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double residual_scale = 1.0 / std::sqrt(2.0 * arch.n_layers);
  p.visit([&](const std::string& name, Mat<T>& m) {
    const auto leaf = name.substr(name.rfind('.') + 1);
    if (leaf == "ln1_g" || leaf == "ln2_g" || leaf == "lnf_g") {
      m.setOnes();
      return;
    }
    const bool is_bias = leaf.starts_with("b_") || leaf == "patch_b" || leaf.ends_with("_b");
    if (is_bias) return;
    double stddev = 0.02;
    if (leaf == "w_o" || leaf == "w_ff2") stddev *= residual_scale;
    if (leaf == "patch_w") stddev = kPatchInitStd;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(stddev * normal(rng));
  });
  return p;
}

template <typename T>
std::vector<T> ForwardPass<T>::run(const TokenizedContext& ctx, std::span<const int> action) {
  const auto& a = p_.arch;
  if (action.empty()) throw PreconditionError("action token sequence is empty");
  seq_ = ctx.tokens;
  seq_.insert(seq_.end(), action.begin(), action.end() - 1);
  const auto L = static_cast<Eigen::Index>(seq_.size());
  if (L > a.max_len) throw PreconditionError("sequence length " + std::to_string(L) + " exceeds max_len");
  patch_begin_ = ctx.patch_begin;
  first_row_ = static_cast<int>(ctx.tokens.size()) - 1;
  targets_.assign(action.begin(), action.end());

  patches_.resize(a.n_patches, a.patch_dim);
  for (int j = 0; j < a.n_patches; ++j) {
    for (int k = 0; k < a.patch_dim; ++k) patches_(j, k) = static_cast<T>(ctx.patches[static_cast<std::size_t>(j * a.patch_dim + k)]);
  }

  const int d = a.d_model;
  Mat<T> x(L, d);
  for (Eigen::Index i = 0; i < L; ++i) {
    const int t = seq_[static_cast<std::size_t>(i)];
    const auto slot = i - patch_begin_;
    if (t == tok::kPatch && slot >= 0 && slot < a.n_patches) {
      x.row(i) = patches_.row(slot) * p_.patch_w + p_.patch_b + p_.slot_emb.row(slot);
    } else {
      x.row(i) = p_.tok_emb.row(t);
    }
    x.row(i) += p_.pos_emb.row(i);
  }

  const int H = a.n_heads;
  const int dh = d / H;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  layers_.resize(p_.blocks.size());
  for (std::size_t l = 0; l < p_.blocks.size(); ++l) {
    const auto& b = p_.blocks[l];
    auto& c = layers_[l];
    c.x_in = x;
    ops::layer_norm(c.x_in, b.ln1_g, b.ln1_b, c.a, c.a_hat, c.rstd1);
    c.qkv = (c.a * b.w_qkv).rowwise() + b.b_qkv.row(0);
    c.attn.resize(L, d);
    c.probs.resize(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
      const auto q = c.qkv.middleCols(h * dh, dh);
      const auto k = c.qkv.middleCols(d + h * dh, dh);
      const auto v = c.qkv.middleCols(2 * d + h * dh, dh);
      Mat<T>& pr = c.probs[static_cast<std::size_t>(h)];
      pr.noalias() = (q * k.transpose()) * scale;
      ops::causal_softmax(pr);
      c.attn.middleCols(h * dh, dh).noalias() = pr * v;
    }
    c.x_mid = c.x_in + ((c.attn * b.w_o).rowwise() + b.b_o.row(0));
    ops::layer_norm(c.x_mid, b.ln2_g, b.ln2_b, c.m, c.m_hat, c.rstd2);
    c.u = (c.m * b.w_ff1).rowwise() + b.b_ff1.row(0);
    c.g = ops::gelu(c.u);
    x = c.x_mid + ((c.g * b.w_ff2).rowwise() + b.b_ff2.row(0));
  }
  x_final_ = x;
  ops::layer_norm(x_final_, p_.lnf_g, p_.lnf_b, y_, y_hat_, rstd_f_);

  const auto m = static_cast<Eigen::Index>(targets_.size());
  logp_rows_ = (y_.middleRows(first_row_, m) * p_.w_out).rowwise() + p_.b_out.row(0);
  ops::log_softmax_rows(logp_rows_);

  std::vector<T> out(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) out[static_cast<std::size_t>(j)] = logp_rows_(j, targets_[static_cast<std::size_t>(j)]);
  for (T v : out) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError("non-finite action log-probability (sequence length " + std::to_string(L) + ")");
    }
  }
  return out;
}

template <typename T>
Mat<T> ForwardPass<T>::all_log_probs() const {
  Mat<T> z = (y_ * p_.w_out).rowwise() + p_.b_out.row(0);
  ops::log_softmax_rows(z);
  return z;
}

template <typename T>
void ForwardPass<T>::backward(std::span<const T> weights, Parameters<T>& g) {
  const auto& a = p_.arch;
  const auto m = static_cast<Eigen::Index>(targets_.size());
  if (static_cast<Eigen::Index>(weights.size()) != m) throw PreconditionError("backward: weight count mismatch");
  const auto L = static_cast<Eigen::Index>(seq_.size());
  const int d = a.d_model;

  // d(sum_j w_j logp_j)/dz_j = w_j (onehot - softmax)
  Mat<T> dz = -logp_rows_.array().exp();
  for (Eigen::Index j = 0; j < m; ++j) {
    dz(j, targets_[static_cast<std::size_t>(j)]) += T(1);
    dz.row(j) *= weights[static_cast<std::size_t>(j)];
  }
  g.w_out.noalias() += y_.middleRows(first_row_, m).transpose() * dz;
  g.b_out.row(0) += dz.colwise().sum();
  Mat<T> dy = Mat<T>::Zero(L, d);
  dy.middleRows(first_row_, m).noalias() = dz * p_.w_out.transpose();
  Mat<T> dx = ops::layer_norm_backward(dy, p_.lnf_g, y_hat_, rstd_f_, g.lnf_g, g.lnf_b);

  const int H = a.n_heads;
  const int dh = d / H;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  for (std::size_t li = p_.blocks.size(); li-- > 0;) {
    const auto& b = p_.blocks[li];
    auto& gb = g.blocks[li];
    const auto& c = layers_[li];

    // feed-forward
    gb.w_ff2.noalias() += c.g.transpose() * dx;
    gb.b_ff2.row(0) += dx.colwise().sum();
    const Mat<T> du = (dx * b.w_ff2.transpose()).cwiseProduct(ops::gelu_grad(c.u));
    gb.w_ff1.noalias() += c.m.transpose() * du;
    gb.b_ff1.row(0) += du.colwise().sum();
    const Mat<T> dm = du * b.w_ff1.transpose();
    Mat<T> dx_mid = dx + ops::layer_norm_backward(dm, b.ln2_g, c.m_hat, c.rstd2, gb.ln2_g, gb.ln2_b);

    // attention
    gb.w_o.noalias() += c.attn.transpose() * dx_mid;
    gb.b_o.row(0) += dx_mid.colwise().sum();
    const Mat<T> dattn = dx_mid * b.w_o.transpose();
    Mat<T> dqkv(L, 3 * d);
    for (int h = 0; h < H; ++h) {
      const auto q = c.qkv.middleCols(h * dh, dh);
      const auto k = c.qkv.middleCols(d + h * dh, dh);
      const auto v = c.qkv.middleCols(2 * d + h * dh, dh);
      const Mat<T>& pr = c.probs[static_cast<std::size_t>(h)];
      const auto dout = dattn.middleCols(h * dh, dh);
      const Mat<T> dp = dout * v.transpose();
      dqkv.middleCols(2 * d + h * dh, dh).noalias() = pr.transpose() * dout;
      Mat<T> ds = pr.cwiseProduct(dp);
      const auto rows = ds.rowwise().sum();
      ds -= pr.cwiseProduct(rows.replicate(1, L));
      ds *= scale;
      dqkv.middleCols(h * dh, dh).noalias() = ds * k;
      dqkv.middleCols(d + h * dh, dh).noalias() = ds.transpose() * q;
    }
    gb.w_qkv.noalias() += c.a.transpose() * dqkv;
    gb.b_qkv.row(0) += dqkv.colwise().sum();
    const Mat<T> da = dqkv * b.w_qkv.transpose();
    dx = dx_mid + ops::layer_norm_backward(da, b.ln1_g, c.a_hat, c.rstd1, gb.ln1_g, gb.ln1_b);
  }

  // embeddings
  for (Eigen::Index i = 0; i < L; ++i) {
    g.pos_emb.row(i) += dx.row(i);
    const int t = seq_[static_cast<std::size_t>(i)];
    const auto slot = i - patch_begin_;
    if (t == tok::kPatch && slot >= 0 && slot < a.n_patches) {
      g.patch_w.noalias() += patches_.row(slot).transpose() * dx.row(i);
      g.patch_b.row(0) += dx.row(i);
      g.slot_emb.row(slot) += dx.row(i);
    } else {
      g.tok_emb.row(t) += dx.row(i);
    }
  }
}

template struct Parameters<float>;
template struct Parameters<double>;
template class ForwardPass<float>;
template class ForwardPass<double>;
template Parameters<float> init_params<float>(const ArchConfig&, std::uint64_t);
template Parameters<double> init_params<double>(const ArchConfig&, std::uint64_t);

}  // namespace vbd::policy
