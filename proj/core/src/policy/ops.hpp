#pragma once

// Row-wise kernels shared by the training pass and the inference session.

#include <cmath>
#include <limits>

#include "vbd/policy/model.hpp"

namespace vbd::policy::ops {

inline constexpr double kLnEps = 1e-5;

template <typename T>
using Col = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// y = g * (x - mean) * rstd + b, per row.
template <typename T>
void layer_norm(const Mat<T>& x, const Mat<T>& g, const Mat<T>& b, Mat<T>& y, Mat<T>& x_hat, Col<T>& rstd) {
  const auto n = x.cols();
  x_hat.resize(x.rows(), n);
  rstd.resize(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const T mean = x.row(i).mean();
    const T var = (x.row(i).array() - mean).square().sum() / static_cast<T>(n);
    rstd(i) = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
    x_hat.row(i) = (x.row(i).array() - mean) * rstd(i);
  }
  y = (x_hat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
}

/// Returns dx; accumulates dg, db.
template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& g, const Mat<T>& x_hat, const Col<T>& rstd, Mat<T>& dg,
                           Mat<T>& db) {
  dg.row(0) += (dy.array() * x_hat.array()).colwise().sum().matrix();
  db.row(0) += dy.colwise().sum();
  const Mat<T> dxh = dy.array().rowwise() * g.row(0).array();
  const auto n = static_cast<T>(dy.cols());
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T m1 = dxh.row(i).sum() / n;
    const T m2 = (dxh.row(i).array() * x_hat.row(i).array()).sum() / n;
    dx.row(i) = rstd(i) * (dxh.row(i).array() - m1 - x_hat.row(i).array() * m2);
  }
  return dx;
}

template <typename T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)

/// tanh approximation of GELU.
template <typename T>
Mat<T> gelu(const Mat<T>& u) {
  return u.unaryExpr([](T x) { return T(0.5) * x * (T(1) + std::tanh(kGeluC<T> * (x + T(0.044715) * x * x * x))); });
}

template <typename T>
Mat<T> gelu_grad(const Mat<T>& u) {
  return u.unaryExpr([](T x) {
    const T t = std::tanh(kGeluC<T> * (x + T(0.044715) * x * x * x));
    return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * kGeluC<T> * (T(1) + T(3 * 0.044715) * x * x);
  });
}

/// In-place numerically stable log-softmax per row.
template <typename T>
void log_softmax_rows(Mat<T>& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const T mx = z.row(i).maxCoeff();
    const T lse = mx + std::log((z.row(i).array() - mx).exp().sum());
    z.row(i).array() -= lse;
  }
}

/// In-place causal softmax of a square score matrix; entries above the
/// diagonal become exactly zero.
template <typename T>
void causal_softmax(Mat<T>& s, Eigen::Index offset = 0) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const Eigen::Index n = i + offset + 1;
    auto row = s.row(i).head(n);
    const T mx = row.maxCoeff();
    row = (row.array() - mx).exp().matrix();
    row /= row.sum();
    if (n < s.cols()) s.row(i).tail(s.cols() - n).setZero();
  }
}

}  // namespace vbd::policy::ops
