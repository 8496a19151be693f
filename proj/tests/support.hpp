/*
 * Copyright 2026 The AVTSL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Shared helpers for the unit tests: seeded random values and scratch dirs.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "avtsl/tensor.hpp"

namespace avtsl::test {

class Rng
{
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  long integer(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(gen_); } // inclusive

  template <typename Scalar = double>
  Matrix<Scalar> matrix(Index rows, Index cols, double lo = -1.0, double hi = 1.0)
  {
    Matrix<Scalar> m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(uniform(lo, hi));
    return m;
  }

  std::mt19937_64& engine() { return gen_; }

private:
  std::mt19937_64 gen_;
};

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir
{
public:
  explicit ScratchDir(const std::string& tag)
  {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("avtsl-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir()
  {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

// Triple-loop product, used as the matmul oracle.
template <typename Scalar>
Matrix<Scalar> naive_matmul(const Matrix<Scalar>& a, const Matrix<Scalar>& b)
{
  Matrix<Scalar> out = Matrix<Scalar>::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      for (Index k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

inline double max_abs_diff(const Matrix<double>& a, const Matrix<double>& b)
{
  return (a - b).cwiseAbs().maxCoeff();
}

///////////////////////////////////////////
// Straight-line oracles, plain Eigen and loops only
///////////////////////////////////////////

inline Matrix<double> softmax_rows(const Matrix<double>& x)
{
  Matrix<double> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    double mx = x.row(i).maxCoeff(), z = 0;
    for (Index j = 0; j < x.cols(); ++j) z += std::exp(x(i, j) - mx);
    for (Index j = 0; j < x.cols(); ++j) out(i, j) = std::exp(x(i, j) - mx) / z;
  }
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Per-gate scalar LSTM (gates i, f, g, o), zero initial state.
inline Matrix<double> lstm_oracle(const Matrix<double>& x, const Matrix<double>& wi, const Matrix<double>& wr,
                                  const Matrix<double>& b)
{
  Index h = wr.rows();
  Matrix<double> out(x.rows(), h);
  std::vector<double> hid(h, 0.0), cell(h, 0.0);
  for (Index t = 0; t < x.rows(); ++t) {
    std::vector<double> z(4 * h);
    for (Index g = 0; g < 4 * h; ++g) {
      double acc = b(0, g);
      for (Index k = 0; k < x.cols(); ++k) acc += x(t, k) * wi(k, g);
      for (Index k = 0; k < h; ++k) acc += hid[k] * wr(k, g);
      z[g] = acc;
    }
    for (Index u = 0; u < h; ++u) {
      double i = sigmoid(z[u]), f = sigmoid(z[h + u]), c = std::tanh(z[2 * h + u]), o = sigmoid(z[3 * h + u]);
      cell[u] = f * cell[u] + i * c;
      hid[u] = o * std::tanh(cell[u]);
      out(t, u) = hid[u];
    }
  }
  return out;
}

// relu(x W1 + b1) W2 + b2
inline Matrix<double> ffn_oracle(const Matrix<double>& x, const Matrix<double>& w1, const Matrix<double>& b1,
                                 const Matrix<double>& w2, const Matrix<double>& b2)
{
  Matrix<double> h = naive_matmul(x, w1);
  for (Index i = 0; i < h.rows(); ++i)
    for (Index j = 0; j < h.cols(); ++j) h(i, j) = std::max(0.0, h(i, j) + b1(0, j));
  Matrix<double> y = naive_matmul(h, w2);
  for (Index i = 0; i < y.rows(); ++i) y.row(i) += b2;
  return y;
}

// Same-padded sliding window; kernel rows [j*c_in, (j+1)*c_in) are tap j.
inline Matrix<double> conv_oracle(const Matrix<double>& x, const Matrix<double>& kernel, Index k)
{
  Index c_in = x.cols();
  Matrix<double> out = Matrix<double>::Zero(x.rows(), kernel.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < k; ++j) {
      Index src = i + j - k / 2;
      if (src < 0 || src >= x.rows()) continue;
      for (Index c = 0; c < c_in; ++c)
        for (Index o = 0; o < kernel.cols(); ++o) out(i, o) += x(src, c) * kernel(j * c_in + c, o);
    }
  return out;
}

// Multi-head attention with 1/sqrt(d/H) scaling.
inline Matrix<double> mha_oracle(const Matrix<double>& q, const Matrix<double>& k, const Matrix<double>& v,
                                 const Matrix<double>& wq, const Matrix<double>& wk, const Matrix<double>& wv,
                                 const Matrix<double>& wo, Index heads)
{
  Index d = wq.rows(), dh = d / heads;
  Matrix<double> qp = naive_matmul(q, wq), kp = naive_matmul(k, wk), vp = naive_matmul(v, wv);
  Matrix<double> merged(q.rows(), d);
  for (Index h = 0; h < heads; ++h) {
    Matrix<double> scores(q.rows(), k.rows());
    for (Index i = 0; i < q.rows(); ++i)
      for (Index j = 0; j < k.rows(); ++j) {
        double acc = 0;
        for (Index c = 0; c < dh; ++c) acc += qp(i, h * dh + c) * kp(j, h * dh + c);
        scores(i, j) = acc / std::sqrt(static_cast<double>(dh));
      }
    Matrix<double> w = softmax_rows(scores);
    Matrix<double> vh = vp.middleCols(h * dh, dh);
    merged.middleCols(h * dh, dh) = naive_matmul(w, vh);
  }
  return naive_matmul(merged, wo);
}

} // namespace avtsl::test
