#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vbd/policy/context.hpp"
#include "vbd/policy/vocab.hpp"

namespace vbd::policy {

struct ArchConfig {
  int vocab = kVocabSize;
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 512;
  int max_len = kMaxContext;
  int patch_dim = kPatchDim;
  int n_patches = kPatchCount;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

nlohmann::json to_json(const ArchConfig& a);
ArchConfig arch_from_json(const nlohmann::json& j);

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Every tensor is a matrix; biases and layer-norm parameters are 1 x n.
template <typename T>
struct BlockParams {
  Mat<T> ln1_g, ln1_b;
  Mat<T> w_qkv, b_qkv;  // d x 3d, columns [q | k | v], heads contiguous within each
  Mat<T> w_o, b_o;
  Mat<T> ln2_g, ln2_b;
  Mat<T> w_ff1, b_ff1;
  Mat<T> w_ff2, b_ff2;
};

/// Pre-LN causal decoder. Image patches enter through a linear map plus a
/// learned per-slot embedding; all positions also get a learned positional
/// embedding.
template <typename T>
struct Parameters {
  ArchConfig arch;
  Mat<T> tok_emb;   // vocab x d
  Mat<T> patch_w;   // patch_dim x d
  Mat<T> patch_b;   // 1 x d
  Mat<T> slot_emb;  // n_patches x d
  Mat<T> pos_emb;   // max_len x d
  std::vector<BlockParams<T>> blocks;
  Mat<T> lnf_g, lnf_b;
  Mat<T> w_out;  // d x vocab
  Mat<T> b_out;  // 1 x vocab

  /// All tensors zero-filled with the shapes implied by `arch`.
  static Parameters zeros(const ArchConfig& arch);

  /// Calls f(name, tensor) for every tensor in a fixed order.
  template <typename F>
  void visit(F&& f);
  template <typename F>
  void visit(F&& f) const;

  std::size_t count() const;
  bool all_finite() const;
  void set_zero();

  template <typename U>
  Parameters<U> cast() const;
};

/// Decoupled weight decay applies to projection matrices only.
bool decays(const std::string& tensor_name);

/// Normal(0, 0.02) for embeddings and projections, with the two residual
/// output projections of each block scaled by 1/sqrt(2 * n_layers) and the
/// patch map at Normal(0, 0.1); biases zero; layer-norm gains one.
template <typename T>
Parameters<T> init_params(const ArchConfig& arch, std::uint64_t seed);

/// One teacher-forced pass over context + action tokens. `run` returns the
/// log-probability of each action token (EOS included); `backward` then
/// accumulates d(sum_j weights[j] * logp[j]) / d(theta) into `grads`.
template <typename T>
class ForwardPass {
 public:
  explicit ForwardPass(const Parameters<T>& params) : p_(params) {}

  std::vector<T> run(const TokenizedContext& ctx, std::span<const int> action);
  void backward(std::span<const T> weights, Parameters<T>& grads);

  /// Log-softmax rows for every position of the last `run` (L x vocab).
  Mat<T> all_log_probs() const;

 private:
  struct LayerCache {
    Mat<T> x_in;              // residual stream entering the block
    Mat<T> a, a_hat;          // ln1 output and normalized input
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd1;
    Mat<T> qkv;
    std::vector<Mat<T>> probs;  // per head, L x L
    Mat<T> attn;              // concatenated head outputs, L x d
    Mat<T> x_mid;             // after attention residual
    Mat<T> m, m_hat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd2;
    Mat<T> u, g;              // ff pre-activation and GELU output
  };

  const Parameters<T>& p_;
  std::vector<int> seq_;
  int patch_begin_ = 0;
  int first_row_ = 0;  // row predicting the first action token
  std::vector<int> targets_;
  std::vector<LayerCache> layers_;
  Mat<T> patches_;  // n_patches x patch_dim
  Mat<T> x_final_, y_hat_, y_;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd_f_;
  Mat<T> logp_rows_;  // log-softmax at the action rows
};

}  // namespace vbd::policy

#include "vbd/policy/model_impl.hpp"
