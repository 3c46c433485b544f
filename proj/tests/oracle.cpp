// SPDX-License-Identifier: Apache-2.0

#include "oracle.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

using xattn::ModelParams;
using xattn::RoiSet;
using xattn::Tensor;

Mat from_tensor(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

Tensor to_tensor(const Mat& m) {
  Tensor t(m.size(), m.empty() ? 0 : m[0].size());
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) t(i, j) = m[i][j];
  return t;
}

namespace {

std::vector<double> linear(const std::vector<double>& x, const Tensor& W, const Tensor& b) {
  std::vector<double> out(W.cols(), 0.0);
  for (std::size_t j = 0; j < W.cols(); ++j) {
    double acc = b[j];
    for (std::size_t i = 0; i < W.rows(); ++i) acc += x[i] * W(i, j);
    out[j] = acc;
  }
  return out;
}

std::vector<double> layer_norm(const std::vector<double>& x, const Tensor& gain,
                               const Tensor& bias, double eps) {
  const std::size_t n = x.size();
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= double(n);
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= double(n);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = gain[i] * (x[i] - mu) / std::sqrt(var + eps) + bias[i];
  return out;
}

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }
double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  return uv / std::max(std::sqrt(uu) * std::sqrt(vv), 1e-12);
}

}  // namespace

Mat transform(const RoiSet& rois, const ModelParams& p) {
  const auto& cfg = p.cfg;
  Mat phi;
  for (const auto& roi : rois.rois) {
    const std::vector<double> g(roi.box.begin(), roi.box.end());
    const std::vector<double> hg =
        layer_norm(linear(g, p.Wg, p.bg), p.ln_g_gain, p.ln_g_bias, cfg.ln_eps);
    const std::vector<double> hs =
        layer_norm(linear({roi.score}, p.Ws, p.bs), p.ln_s_gain, p.ln_s_bias, cfg.ln_eps);
    std::vector<double> gs = hg;
    gs.insert(gs.end(), hs.begin(), hs.end());
    const std::vector<double> a = linear(roi.feat, p.W1, p.b1);
    const std::vector<double> b = linear(gs, p.W2, p.b2);
    std::vector<double> row(cfg.d_joint);
    for (std::size_t j = 0; j < cfg.d_joint; ++j) row[j] = a[j] + b[j];
    phi.push_back(std::move(row));
  }
  return phi;
}

Mat roi_weights(const Mat& phi, const ModelParams& p) {
  const std::size_t n = phi.size();
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> h = phi[i];
    for (std::size_t l = 0; l + 1 < p.alpha_mlp.size(); ++l) {
      h = linear(h, p.alpha_mlp[l].W, p.alpha_mlp[l].b);
      for (double& x : h) x = leaky(x, p.cfg.leaky_slope);
    }
    h = linear(h, p.alpha_mlp.back().W, p.alpha_mlp.back().b);
    q[i] = sigmoid(h[0]);
  }
  double z = 0.0;
  for (double v : q) z += std::exp(v);
  Mat alpha(n, std::vector<double>(1));
  for (std::size_t i = 0; i < n; ++i) alpha[i][0] = std::exp(q[i]) / z;
  return alpha;
}

Mat aggregate(const Mat& phi, const Mat& alpha) {
  Mat v(1, std::vector<double>(phi[0].size(), 0.0));
  for (std::size_t i = 0; i < phi.size(); ++i)
    for (std::size_t j = 0; j < phi[i].size(); ++j) v[0][j] += alpha[i][0] * phi[i][j];
  return v;
}

Mat classify(const Mat& v_batch, const ModelParams& p, bool train_mode) {
  Mat h = v_batch;
  for (std::size_t l = 0; l + 1 < p.cls_mlp.size(); ++l) {
    Mat z(h.size());
    for (std::size_t r = 0; r < h.size(); ++r) {
      z[r] = linear(h[r], p.cls_mlp[l].W, p.cls_mlp[l].b);
      for (double& x : z[r]) x = leaky(x, p.cfg.leaky_slope);
    }
    const auto& bn = p.cls_bn[l];
    const std::size_t width = z[0].size();
    std::vector<double> mu(width, 0.0), var(width, 0.0);
    if (train_mode) {
      for (std::size_t j = 0; j < width; ++j) {
        for (std::size_t r = 0; r < z.size(); ++r) mu[j] += z[r][j];
        mu[j] /= double(z.size());
        for (std::size_t r = 0; r < z.size(); ++r)
          var[j] += (z[r][j] - mu[j]) * (z[r][j] - mu[j]);
        var[j] /= double(z.size());
      }
    } else {
      for (std::size_t j = 0; j < width; ++j) {
        mu[j] = bn.run_mean[j];
        var[j] = bn.run_var[j];
      }
    }
    for (std::size_t r = 0; r < z.size(); ++r)
      for (std::size_t j = 0; j < width; ++j)
        z[r][j] = bn.gain[j] * (z[r][j] - mu[j]) / std::sqrt(var[j] + p.cfg.bn_eps) + bn.bias[j];
    h = std::move(z);
  }
  Mat out(h.size());
  for (std::size_t r = 0; r < h.size(); ++r) {
    out[r] = linear(h[r], p.cls_mlp.back().W, p.cls_mlp.back().b);
    for (double& x : out[r]) x = sigmoid(x);
  }
  return out;
}

Attention attention(const Mat& phi, const std::vector<double>& alpha, const Mat& m,
                    const ModelParams& p) {
  const std::size_t N = phi.size(), M = m.size(), D = phi[0].size();
  Attention at;
  at.s_raw.assign(N, std::vector<double>(M));
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < M; ++j) at.s_raw[i][j] = cosine(phi[i], m[j]);

  // SCAN normalization: hinge, then L2-normalize each column.
  at.s_bar.assign(N, std::vector<double>(M));
  for (std::size_t j = 0; j < M; ++j) {
    double norm = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double h = std::max(0.0, at.s_raw[i][j]);
      norm += h * h;
    }
    norm = std::max(std::sqrt(norm), 1e-12);
    for (std::size_t i = 0; i < N; ++i)
      at.s_bar[i][j] = std::max(0.0, at.s_raw[i][j]) / norm;
  }

  // a_ij: softmax over attributes j within a ROI; b_ij: over ROIs i.
  at.a.assign(N, std::vector<double>(M));
  for (std::size_t i = 0; i < N; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < M; ++j) z += std::exp(p.cfg.lambda_a * at.s_bar[i][j]);
    for (std::size_t j = 0; j < M; ++j)
      at.a[i][j] = std::exp(p.cfg.lambda_a * at.s_bar[i][j]) / z;
  }
  at.b.assign(N, std::vector<double>(M));
  for (std::size_t j = 0; j < M; ++j) {
    double z = 0.0;
    for (std::size_t i = 0; i < N; ++i) z += std::exp(p.cfg.lambda_b * at.s_bar[i][j]);
    for (std::size_t i = 0; i < N; ++i)
      at.b[i][j] = std::exp(p.cfg.lambda_b * at.s_bar[i][j]) / z;
  }

  // A_j = sum_i alpha_i phi_i a_ij ; B_i = sum_j m_j b_ij
  at.A.assign(M, std::vector<double>(D, 0.0));
  if (!alpha.empty())
    for (std::size_t j = 0; j < M; ++j)
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t d = 0; d < D; ++d) at.A[j][d] += alpha[i] * phi[i][d] * at.a[i][j];
  at.B.assign(N, std::vector<double>(D, 0.0));
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < M; ++j)
      for (std::size_t d = 0; d < D; ++d) at.B[i][d] += m[j][d] * at.b[i][j];

  if (!alpha.empty()) {
    at.r_text.resize(M);
    for (std::size_t j = 0; j < M; ++j) {
      at.r_text[j] = cosine(at.A[j], m[j]);
      at.s_text += at.r_text[j] / double(M);
    }
  }
  at.r_roi.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    at.r_roi[i] = cosine(at.B[i], phi[i]);
    at.s_roi += at.r_roi[i] / double(N);
  }
  return at;
}

double triplet(double s_roi_pos, double s_roi_neg, double s_text_pos, double s_text_neg,
               double beta) {
  return std::max(0.0, beta - s_roi_pos + s_roi_neg) +
         std::max(0.0, beta - s_text_pos + s_text_neg);
}

double bce(const Mat& probs, const Mat& targets) {
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    for (std::size_t j = 0; j < probs[i].size(); ++j) {
      const double p = std::clamp(probs[i][j], 1e-7, 1.0 - 1e-7);
      acc += -(targets[i][j] * std::log(p) + (1.0 - targets[i][j]) * std::log(1.0 - p));
      ++count;
    }
  return acc / double(count);
}

}  // namespace oracle
