// SPDX-License-Identifier: Apache-2.0

#include "xattn/graph.hpp"

#include <algorithm>
#include <cmath>

#include "xattn/errors.hpp"
#include "xattn/kernels.hpp"

namespace xattn {

namespace {
constexpr double kCosineDenomFloor = 1e-12;
constexpr double kBceEps = 1e-7;

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

NodeId Graph::emplace(Tensor val, std::vector<NodeId> parents,
                      std::function<void(Graph&, NodeId)> back) {
  Node n;
  n.requires_grad = !parents.empty() && any_requires_grad(parents);
  n.grad = Tensor(val.rows(), val.cols());
  n.val = std::move(val);
  n.parents = std::move(parents);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

bool Graph::any_requires_grad(const std::vector<NodeId>& ids) const {
  return std::any_of(ids.begin(), ids.end(),
                     [this](NodeId id) { return nodes_[id].requires_grad; });
}

NodeId Graph::input(Tensor value) {
  NodeId id = emplace(std::move(value), {}, nullptr);
  nodes_[id].requires_grad = true;
  return id;
}

NodeId Graph::constant(Tensor value) { return emplace(std::move(value), {}, nullptr); }

NodeId Graph::matmul(NodeId a, NodeId b, bool ta, bool tb) {
  const Tensor& A = nodes_[a].val;
  const Tensor& B = nodes_[b].val;
  const std::size_t m = ta ? A.cols() : A.rows();
  const std::size_t ka = ta ? A.rows() : A.cols();
  const std::size_t kb = tb ? B.cols() : B.rows();
  const std::size_t n = tb ? B.rows() : B.cols();
  if (ka != kb)
    throw ShapeMismatch("matmul inner dims: " + A.shape_str() + (ta ? "^T" : "") +
                        " * " + B.shape_str() + (tb ? "^T" : ""));
  Tensor C(m, n);
  kern::gemm(ta, tb, m, n, ka, 1.0, A.data(), A.cols(), B.data(), B.cols(), 0.0,
             C.data(), C.cols());
  return emplace(std::move(C), {a, b}, [a, b, ta, tb, m, n, ka](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& A = g.nodes_[a].val;
    const Tensor& B = g.nodes_[b].val;
    if (g.nodes_[a].requires_grad) {
      Tensor& dA = g.grad_ref(a);
      if (!ta) {
        // dA = G * op(B)^T
        kern::gemm(false, !tb, m, ka, n, 1.0, G.data(), G.cols(), B.data(), B.cols(),
                   1.0, dA.data(), dA.cols());
      } else if (!tb) {
        // stored A is k x m; dA = B * G^T
        kern::gemm(false, true, ka, m, n, 1.0, B.data(), B.cols(), G.data(), G.cols(),
                   1.0, dA.data(), dA.cols());
      } else {
        // dA = B^T * G^T
        kern::gemm(true, true, ka, m, n, 1.0, B.data(), B.cols(), G.data(), G.cols(),
                   1.0, dA.data(), dA.cols());
      }
    }
    if (g.nodes_[b].requires_grad) {
      Tensor& dB = g.grad_ref(b);
      if (!tb) {
        // dB = op(A)^T * G
        kern::gemm(!ta, false, ka, n, m, 1.0, A.data(), A.cols(), G.data(), G.cols(),
                   1.0, dB.data(), dB.cols());
      } else if (!ta) {
        // stored B is n x k; dB = G^T * A
        kern::gemm(true, false, n, ka, m, 1.0, G.data(), G.cols(), A.data(), A.cols(),
                   1.0, dB.data(), dB.cols());
      } else {
        // dB = G^T * A^T
        kern::gemm(true, true, n, ka, m, 1.0, G.data(), G.cols(), A.data(), A.cols(),
                   1.0, dB.data(), dB.cols());
      }
    }
  });
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& A = nodes_[a].val;
  const Tensor& B = nodes_[b].val;
  check_same_shape(A, B, "add");
  Tensor C(A.rows(), A.cols());
  kern::vadd(A.data(), B.data(), C.data(), C.size());
  return emplace(std::move(C), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    if (g.nodes_[a].requires_grad)
      kern::axpy(1.0, G.data(), g.grad_ref(a).data(), G.size());
    if (g.nodes_[b].requires_grad)
      kern::axpy(1.0, G.data(), g.grad_ref(b).data(), G.size());
  });
}

NodeId Graph::add_rowvec(NodeId x, NodeId b) {
  const Tensor& X = nodes_[x].val;
  const Tensor& B = nodes_[b].val;
  if (B.rows() != 1 || B.cols() != X.cols())
    throw ShapeMismatch("add_rowvec: " + X.shape_str() + " + " + B.shape_str());
  Tensor Y = X;
  for (std::size_t i = 0; i < Y.rows(); ++i)
    kern::axpy(1.0, B.data(), Y.row_ptr(i), Y.cols());
  return emplace(std::move(Y), {x, b}, [x, b](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    if (g.nodes_[x].requires_grad)
      kern::axpy(1.0, G.data(), g.grad_ref(x).data(), G.size());
    if (g.nodes_[b].requires_grad) {
      Tensor& dB = g.grad_ref(b);
      for (std::size_t i = 0; i < G.rows(); ++i)
        kern::axpy(1.0, G.row_ptr(i), dB.data(), G.cols());
    }
  });
}

NodeId Graph::scale(NodeId x, double c) {
  Tensor Y = nodes_[x].val;
  kern::scal(c, Y.data(), Y.size());
  return emplace(std::move(Y), {x}, [x, c](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    if (g.nodes_[x].requires_grad)
      kern::axpy(c, G.data(), g.grad_ref(x).data(), G.size());
  });
}

NodeId Graph::scale_rows(NodeId x, NodeId c) {
  const Tensor& X = nodes_[x].val;
  const Tensor& C = nodes_[c].val;
  if (C.rows() != X.rows() || C.cols() != 1)
    throw ShapeMismatch("scale_rows: " + X.shape_str() + " by " + C.shape_str());
  Tensor Y = X;
  for (std::size_t i = 0; i < Y.rows(); ++i) kern::scal(C[i], Y.row_ptr(i), Y.cols());
  return emplace(std::move(Y), {x, c}, [x, c](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& X = g.nodes_[x].val;
    const Tensor& C = g.nodes_[c].val;
    if (g.nodes_[x].requires_grad) {
      Tensor& dX = g.grad_ref(x);
      for (std::size_t i = 0; i < G.rows(); ++i)
        kern::axpy(C[i], G.row_ptr(i), dX.row_ptr(i), G.cols());
    }
    if (g.nodes_[c].requires_grad) {
      Tensor& dC = g.grad_ref(c);
      for (std::size_t i = 0; i < G.rows(); ++i)
        dC[i] += kern::dot(G.row_ptr(i), X.row_ptr(i), G.cols());
    }
  });
}

NodeId Graph::concat_cols(NodeId a, NodeId b) {
  const Tensor& A = nodes_[a].val;
  const Tensor& B = nodes_[b].val;
  if (A.rows() != B.rows())
    throw ShapeMismatch("concat_cols: " + A.shape_str() + " | " + B.shape_str());
  Tensor Y(A.rows(), A.cols() + B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    std::copy(A.row_ptr(i), A.row_ptr(i) + A.cols(), Y.row_ptr(i));
    std::copy(B.row_ptr(i), B.row_ptr(i) + B.cols(), Y.row_ptr(i) + A.cols());
  }
  const std::size_t na = A.cols();
  return emplace(std::move(Y), {a, b}, [a, b, na](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    if (g.nodes_[a].requires_grad) {
      Tensor& dA = g.grad_ref(a);
      for (std::size_t i = 0; i < dA.rows(); ++i)
        kern::axpy(1.0, G.row_ptr(i), dA.row_ptr(i), na);
    }
    if (g.nodes_[b].requires_grad) {
      Tensor& dB = g.grad_ref(b);
      for (std::size_t i = 0; i < dB.rows(); ++i)
        kern::axpy(1.0, G.row_ptr(i) + na, dB.row_ptr(i), dB.cols());
    }
  });
}

NodeId Graph::concat_rows(NodeId a, NodeId b) { return stack_rows({a, b}); }

NodeId Graph::stack_rows(const std::vector<NodeId>& xs) {
  if (xs.empty()) throw ShapeMismatch("stack_rows: empty list");
  const std::size_t cols = nodes_[xs[0]].val.cols();
  std::size_t rows = 0;
  for (NodeId id : xs) {
    if (nodes_[id].val.cols() != cols)
      throw ShapeMismatch("stack_rows: column mismatch " +
                          nodes_[id].val.shape_str());
    rows += nodes_[id].val.rows();
  }
  Tensor Y(rows, cols);
  std::size_t r = 0;
  for (NodeId id : xs) {
    const Tensor& X = nodes_[id].val;
    std::copy(X.data(), X.data() + X.size(), Y.row_ptr(r));
    r += X.rows();
  }
  return emplace(std::move(Y), xs, [xs](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    std::size_t r = 0;
    for (NodeId id : xs) {
      Tensor& dX = g.grad_ref(id);
      if (g.nodes_[id].requires_grad)
        kern::axpy(1.0, G.row_ptr(r), dX.data(), dX.size());
      r += dX.rows();
    }
  });
}

NodeId Graph::slice_rows(NodeId x, std::size_t r0, std::size_t r1) {
  const Tensor& X = nodes_[x].val;
  if (r0 >= r1 || r1 > X.rows())
    throw ShapeMismatch("slice_rows [" + std::to_string(r0) + "," +
                        std::to_string(r1) + ") of " + X.shape_str());
  Tensor Y(r1 - r0, X.cols());
  std::copy(X.row_ptr(r0), X.row_ptr(r0) + Y.size(), Y.data());
  return emplace(std::move(Y), {x}, [x, r0](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    if (g.nodes_[x].requires_grad)
      kern::axpy(1.0, G.data(), g.grad_ref(x).row_ptr(r0), G.size());
  });
}

NodeId Graph::slice_cols(NodeId x, std::size_t c0, std::size_t c1) {
  const Tensor& X = nodes_[x].val;
  if (c0 >= c1 || c1 > X.cols())
    throw ShapeMismatch("slice_cols [" + std::to_string(c0) + "," +
                        std::to_string(c1) + ") of " + X.shape_str());
  Tensor Y(X.rows(), c1 - c0);
  for (std::size_t i = 0; i < X.rows(); ++i)
    std::copy(X.row_ptr(i) + c0, X.row_ptr(i) + c1, Y.row_ptr(i));
  return emplace(std::move(Y), {x}, [x, c0](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    if (g.nodes_[x].requires_grad) {
      Tensor& dX = g.grad_ref(x);
      for (std::size_t i = 0; i < G.rows(); ++i)
        kern::axpy(1.0, G.row_ptr(i), dX.row_ptr(i) + c0, G.cols());
    }
  });
}

NodeId Graph::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
  const Tensor& X = nodes_[x].val;
  const Tensor& Gn = nodes_[gain].val;
  const Tensor& Bs = nodes_[bias].val;
  if (Gn.rows() != 1 || Gn.cols() != X.cols() || Bs.rows() != 1 || Bs.cols() != X.cols())
    throw ShapeMismatch("layer_norm params for " + X.shape_str());
  const std::size_t n = X.cols();
  Tensor Y(X.rows(), n);
  Tensor xhat(X.rows(), n);
  Tensor inv_std(X.rows(), 1);
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const double* xr = X.row_ptr(i);
    const double mu = kern::sum(xr, n) / double(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xr[j] - mu;
      var += d * d;
    }
    var /= double(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mu) * is;
      xhat(i, j) = h;
      Y(i, j) = Gn[j] * h + Bs[j];
    }
  }
  return emplace(std::move(Y), {x, gain, bias},
                 [x, gain, bias, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& Gn = g.nodes_[gain].val;
    const std::size_t n = G.cols();
    if (g.nodes_[gain].requires_grad) {
      Tensor& dGn = g.grad_ref(gain);
      for (std::size_t i = 0; i < G.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j) dGn[j] += G(i, j) * xhat(i, j);
    }
    if (g.nodes_[bias].requires_grad) {
      Tensor& dBs = g.grad_ref(bias);
      for (std::size_t i = 0; i < G.rows(); ++i)
        kern::axpy(1.0, G.row_ptr(i), dBs.data(), n);
    }
    if (g.nodes_[x].requires_grad) {
      Tensor& dX = g.grad_ref(x);
      std::vector<double> gh(n);
      for (std::size_t i = 0; i < G.rows(); ++i) {
        for (std::size_t j = 0; j < n; ++j) gh[j] = G(i, j) * Gn[j];
        const double mean_gh = kern::sum(gh.data(), n) / double(n);
        const double mean_ghx = kern::dot(gh.data(), xhat.row_ptr(i), n) / double(n);
        const double is = inv_std[i];
        for (std::size_t j = 0; j < n; ++j)
          dX(i, j) += is * (gh[j] - mean_gh - xhat(i, j) * mean_ghx);
      }
    }
  });
}

NodeId Graph::leaky_relu(NodeId x, double slope) {
  const Tensor& X = nodes_[x].val;
  Tensor Y(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.size(); ++i) Y[i] = X[i] > 0.0 ? X[i] : slope * X[i];
  return emplace(std::move(Y), {x}, [x, slope](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& X = g.nodes_[x].val;
    if (!g.nodes_[x].requires_grad) return;
    Tensor& dX = g.grad_ref(x);
    for (std::size_t i = 0; i < G.size(); ++i)
      dX[i] += G[i] * (X[i] > 0.0 ? 1.0 : slope);
  });
}

NodeId Graph::sigmoid(NodeId x) {
  const Tensor& X = nodes_[x].val;
  Tensor Y(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.size(); ++i) Y[i] = stable_sigmoid(X[i]);
  return emplace(std::move(Y), {x}, [x](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& Y = g.nodes_[self].val;
    if (!g.nodes_[x].requires_grad) return;
    Tensor& dX = g.grad_ref(x);
    for (std::size_t i = 0; i < G.size(); ++i) dX[i] += G[i] * Y[i] * (1.0 - Y[i]);
  });
}

NodeId Graph::softmax(NodeId x, Axis axis, double temperature) {
  const Tensor& X = nodes_[x].val;
  Tensor Y(X.rows(), X.cols());
  const auto softmax_slice = [temperature](const double* in, std::size_t n,
                                           std::size_t stride, double* out) {
    double mx = in[0] * temperature;
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i * stride] * temperature);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::exp(in[i * stride] * temperature - mx);
      out[i * stride] = e;
      z += e;
    }
    const double inv = 1.0 / z;
    for (std::size_t i = 0; i < n; ++i) out[i * stride] *= inv;
  };
  if (axis == Axis::kRows) {
    for (std::size_t i = 0; i < X.rows(); ++i)
      softmax_slice(X.row_ptr(i), X.cols(), 1, Y.row_ptr(i));
  } else {
    for (std::size_t j = 0; j < X.cols(); ++j)
      softmax_slice(X.data() + j, X.rows(), X.cols(), Y.data() + j);
  }
  return emplace(std::move(Y), {x}, [x, axis, temperature](Graph& g, NodeId self) {
    if (!g.nodes_[x].requires_grad) return;
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& Y = g.nodes_[self].val;
    Tensor& dX = g.grad_ref(x);
    const auto back_slice = [temperature](const double* y, const double* gr,
                                          std::size_t n, std::size_t stride,
                                          double* dx) {
      double dotgy = 0.0;
      for (std::size_t i = 0; i < n; ++i) dotgy += gr[i * stride] * y[i * stride];
      for (std::size_t i = 0; i < n; ++i)
        dx[i * stride] += temperature * y[i * stride] * (gr[i * stride] - dotgy);
    };
    if (axis == Axis::kRows) {
      for (std::size_t i = 0; i < Y.rows(); ++i)
        back_slice(Y.row_ptr(i), G.row_ptr(i), Y.cols(), 1, dX.row_ptr(i));
    } else {
      for (std::size_t j = 0; j < Y.cols(); ++j)
        back_slice(Y.data() + j, G.data() + j, Y.rows(), Y.cols(), dX.data() + j);
    }
  });
}

NodeId Graph::l2_normalize_cols(NodeId x, double eps) {
  const Tensor& X = nodes_[x].val;
  Tensor Y(X.rows(), X.cols());
  Tensor denom(1, X.cols());
  Tensor clamped(1, X.cols());
  for (std::size_t j = 0; j < X.cols(); ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < X.rows(); ++i) ss += X(i, j) * X(i, j);
    const double nrm = std::sqrt(ss);
    clamped[j] = nrm <= eps ? 1.0 : 0.0;
    denom[j] = std::max(nrm, eps);
    for (std::size_t i = 0; i < X.rows(); ++i) Y(i, j) = X(i, j) / denom[j];
  }
  return emplace(std::move(Y), {x},
                 [x, denom = std::move(denom), clamped = std::move(clamped)](
                     Graph& g, NodeId self) {
    if (!g.nodes_[x].requires_grad) return;
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& Y = g.nodes_[self].val;
    Tensor& dX = g.grad_ref(x);
    for (std::size_t j = 0; j < Y.cols(); ++j) {
      // Columns whose norm sat below the clamp are treated as constant.
      if (clamped[j] != 0.0) continue;
      double gy = 0.0;
      for (std::size_t i = 0; i < Y.rows(); ++i) gy += G(i, j) * Y(i, j);
      const double inv = 1.0 / denom[j];
      for (std::size_t i = 0; i < Y.rows(); ++i)
        dX(i, j) += inv * (G(i, j) - Y(i, j) * gy);
    }
  });
}

namespace {
// Shared cosine backward for one (x_i, y_j, g) pair.
inline void cosine_pair_backward(const double* xi, const double* yj, double nx,
                                 double ny, double c, double gij, double* dxi,
                                 double* dyj, std::size_t d) {
  const double prod = nx * ny;
  if (nx == 0.0 || ny == 0.0) return;  // gradient defined as 0 for zero vectors
  if (prod > kCosineDenomFloor) {
    const double inv = 1.0 / prod;
    if (dxi) {
      const double cx = c / (nx * nx);
      for (std::size_t t = 0; t < d; ++t) dxi[t] += gij * (yj[t] * inv - cx * xi[t]);
    }
    if (dyj) {
      const double cy = c / (ny * ny);
      for (std::size_t t = 0; t < d; ++t) dyj[t] += gij * (xi[t] * inv - cy * yj[t]);
    }
  } else {
    // Clamped denominator: treat it as a constant.
    const double inv = 1.0 / kCosineDenomFloor;
    if (dxi)
      for (std::size_t t = 0; t < d; ++t) dxi[t] += gij * yj[t] * inv;
    if (dyj)
      for (std::size_t t = 0; t < d; ++t) dyj[t] += gij * xi[t] * inv;
  }
}
}  // namespace

NodeId Graph::cosine_rows(NodeId x, NodeId y) {
  const Tensor& X = nodes_[x].val;
  const Tensor& Y = nodes_[y].val;
  check_same_shape(X, Y, "cosine_rows");
  const std::size_t k = X.rows(), d = X.cols();
  Tensor C(k, 1);
  Tensor nx(k, 1), ny(k, 1);
  for (std::size_t i = 0; i < k; ++i) {
    nx[i] = std::sqrt(kern::sumsq(X.row_ptr(i), d));
    ny[i] = std::sqrt(kern::sumsq(Y.row_ptr(i), d));
    const double denom = std::max(nx[i] * ny[i], kCosineDenomFloor);
    C[i] = kern::dot(X.row_ptr(i), Y.row_ptr(i), d) / denom;
  }
  return emplace(std::move(C), {x, y},
                 [x, y, nx = std::move(nx), ny = std::move(ny)](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& C = g.nodes_[self].val;
    const Tensor& X = g.nodes_[x].val;
    const Tensor& Y = g.nodes_[y].val;
    const bool wx = g.nodes_[x].requires_grad;
    const bool wy = g.nodes_[y].requires_grad;
    for (std::size_t i = 0; i < X.rows(); ++i) {
      if (G[i] == 0.0) continue;
      cosine_pair_backward(X.row_ptr(i), Y.row_ptr(i), nx[i], ny[i], C[i], G[i],
                           wx ? g.grad_ref(x).row_ptr(i) : nullptr,
                           wy ? g.grad_ref(y).row_ptr(i) : nullptr, X.cols());
    }
  });
}

NodeId Graph::cosine_pairs(NodeId x, NodeId y) {
  const Tensor& X = nodes_[x].val;
  const Tensor& Y = nodes_[y].val;
  if (X.cols() != Y.cols())
    throw ShapeMismatch("cosine_pairs: " + X.shape_str() + " vs " + Y.shape_str());
  const std::size_t n = X.rows(), m = Y.rows(), d = X.cols();
  Tensor C(n, m);
  Tensor nx(n, 1), ny(m, 1);
  for (std::size_t i = 0; i < n; ++i) nx[i] = std::sqrt(kern::sumsq(X.row_ptr(i), d));
  for (std::size_t j = 0; j < m; ++j) ny[j] = std::sqrt(kern::sumsq(Y.row_ptr(j), d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double denom = std::max(nx[i] * ny[j], kCosineDenomFloor);
      C(i, j) = kern::dot(X.row_ptr(i), Y.row_ptr(j), d) / denom;
    }
  return emplace(std::move(C), {x, y},
                 [x, y, nx = std::move(nx), ny = std::move(ny)](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& C = g.nodes_[self].val;
    const Tensor& X = g.nodes_[x].val;
    const Tensor& Y = g.nodes_[y].val;
    const bool wx = g.nodes_[x].requires_grad;
    const bool wy = g.nodes_[y].requires_grad;
    for (std::size_t i = 0; i < X.rows(); ++i)
      for (std::size_t j = 0; j < Y.rows(); ++j) {
        if (G(i, j) == 0.0) continue;
        cosine_pair_backward(X.row_ptr(i), Y.row_ptr(j), nx[i], ny[j], C(i, j),
                             G(i, j), wx ? g.grad_ref(x).row_ptr(i) : nullptr,
                             wy ? g.grad_ref(y).row_ptr(j) : nullptr, X.cols());
      }
  });
}

NodeId Graph::hinge(NodeId x) {
  const Tensor& X = nodes_[x].val;
  Tensor Y(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.size(); ++i) Y[i] = X[i] > 0.0 ? X[i] : 0.0;
  return emplace(std::move(Y), {x}, [x](Graph& g, NodeId self) {
    if (!g.nodes_[x].requires_grad) return;
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& X = g.nodes_[x].val;
    Tensor& dX = g.grad_ref(x);
    for (std::size_t i = 0; i < G.size(); ++i)
      if (X[i] > 0.0) dX[i] += G[i];
  });
}

NodeId Graph::mean_all(NodeId x) {
  const Tensor& X = nodes_[x].val;
  if (X.empty()) throw ShapeMismatch("mean_all of empty tensor");
  Tensor Y(1, 1);
  Y[0] = kern::sum(X.data(), X.size()) / double(X.size());
  return emplace(std::move(Y), {x}, [x](Graph& g, NodeId self) {
    if (!g.nodes_[x].requires_grad) return;
    Tensor& dX = g.grad_ref(x);
    const double gi = g.nodes_[self].grad[0] / double(dX.size());
    for (std::size_t i = 0; i < dX.size(); ++i) dX[i] += gi;
  });
}

NodeId Graph::sum_all(NodeId x) {
  const Tensor& X = nodes_[x].val;
  Tensor Y(1, 1);
  Y[0] = kern::sum(X.data(), X.size());
  return emplace(std::move(Y), {x}, [x](Graph& g, NodeId self) {
    if (!g.nodes_[x].requires_grad) return;
    Tensor& dX = g.grad_ref(x);
    const double gi = g.nodes_[self].grad[0];
    for (std::size_t i = 0; i < dX.size(); ++i) dX[i] += gi;
  });
}

NodeId Graph::bce_with_targets(NodeId p, const Tensor& targets) {
  const Tensor& P = nodes_[p].val;
  check_same_shape(P, targets, "bce_with_targets");
  const std::size_t count = P.size();
  if (count == 0) throw ShapeMismatch("bce_with_targets of empty tensor");
  double loss = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double pc = std::clamp(P[i], kBceEps, 1.0 - kBceEps);
    loss -= targets[i] * std::log(pc) + (1.0 - targets[i]) * std::log(1.0 - pc);
  }
  Tensor Y(1, 1);
  Y[0] = loss / double(count);
  return emplace(std::move(Y), {p}, [p, targets](Graph& g, NodeId self) {
    if (!g.nodes_[p].requires_grad) return;
    const Tensor& P = g.nodes_[p].val;
    Tensor& dP = g.grad_ref(p);
    const double gscale = g.nodes_[self].grad[0] / double(P.size());
    for (std::size_t i = 0; i < P.size(); ++i) {
      if (P[i] <= kBceEps || P[i] >= 1.0 - kBceEps) continue;  // clamp region
      dP[i] += gscale * (P[i] - targets[i]) / (P[i] * (1.0 - P[i]));
    }
  });
}

NodeId Graph::batch_norm_train(NodeId x, NodeId gain, NodeId bias, double eps,
                               Tensor* batch_mean_out, Tensor* batch_var_out) {
  const Tensor& X = nodes_[x].val;
  const Tensor& Gn = nodes_[gain].val;
  const Tensor& Bs = nodes_[bias].val;
  if (Gn.rows() != 1 || Gn.cols() != X.cols() || Bs.rows() != 1 || Bs.cols() != X.cols())
    throw ShapeMismatch("batch_norm params for " + X.shape_str());
  const std::size_t m = X.rows(), n = X.cols();
  Tensor mu(1, n), var(1, n), inv_std(1, n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += X(i, j);
    mu[j] = s / double(m);
    double v = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double d = X(i, j) - mu[j];
      v += d * d;
    }
    var[j] = v / double(m);
    inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  }
  if (batch_mean_out) *batch_mean_out = mu;
  if (batch_var_out) *batch_var_out = var;
  Tensor Y(m, n);
  Tensor xhat(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (X(i, j) - mu[j]) * inv_std[j];
      xhat(i, j) = h;
      Y(i, j) = Gn[j] * h + Bs[j];
    }
  return emplace(std::move(Y), {x, gain, bias},
                 [x, gain, bias, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& Gn = g.nodes_[gain].val;
    const std::size_t m = G.rows(), n = G.cols();
    if (g.nodes_[gain].requires_grad) {
      Tensor& dGn = g.grad_ref(gain);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dGn[j] += G(i, j) * xhat(i, j);
    }
    if (g.nodes_[bias].requires_grad) {
      Tensor& dBs = g.grad_ref(bias);
      for (std::size_t i = 0; i < m; ++i)
        kern::axpy(1.0, G.row_ptr(i), dBs.data(), n);
    }
    if (g.nodes_[x].requires_grad) {
      Tensor& dX = g.grad_ref(x);
      for (std::size_t j = 0; j < n; ++j) {
        double sum_gh = 0.0, sum_ghx = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double gh = G(i, j) * Gn[j];
          sum_gh += gh;
          sum_ghx += gh * xhat(i, j);
        }
        const double inv_m = 1.0 / double(m);
        for (std::size_t i = 0; i < m; ++i) {
          const double gh = G(i, j) * Gn[j];
          dX(i, j) += inv_std[j] * (gh - inv_m * sum_gh - xhat(i, j) * inv_m * sum_ghx);
        }
      }
    }
  });
}

NodeId Graph::batch_norm_infer(NodeId x, NodeId gain, NodeId bias,
                               const Tensor& running_mean, const Tensor& running_var,
                               double eps) {
  const Tensor& X = nodes_[x].val;
  const Tensor& Gn = nodes_[gain].val;
  const Tensor& Bs = nodes_[bias].val;
  if (Gn.rows() != 1 || Gn.cols() != X.cols() || Bs.rows() != 1 || Bs.cols() != X.cols() ||
      running_mean.cols() != X.cols() || running_var.cols() != X.cols())
    throw ShapeMismatch("batch_norm_infer params for " + X.shape_str());
  const std::size_t m = X.rows(), n = X.cols();
  Tensor inv_std(1, n);
  for (std::size_t j = 0; j < n; ++j) inv_std[j] = 1.0 / std::sqrt(running_var[j] + eps);
  Tensor Y(m, n);
  Tensor xhat(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (X(i, j) - running_mean[j]) * inv_std[j];
      xhat(i, j) = h;
      Y(i, j) = Gn[j] * h + Bs[j];
    }
  return emplace(std::move(Y), {x, gain, bias},
                 [x, gain, bias, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)](Graph& g, NodeId self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& Gn = g.nodes_[gain].val;
    const std::size_t m = G.rows(), n = G.cols();
    if (g.nodes_[gain].requires_grad) {
      Tensor& dGn = g.grad_ref(gain);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dGn[j] += G(i, j) * xhat(i, j);
    }
    if (g.nodes_[bias].requires_grad) {
      Tensor& dBs = g.grad_ref(bias);
      for (std::size_t i = 0; i < m; ++i) kern::axpy(1.0, G.row_ptr(i), dBs.data(), n);
    }
    if (g.nodes_[x].requires_grad) {
      Tensor& dX = g.grad_ref(x);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dX(i, j) += G(i, j) * Gn[j] * inv_std[j];
    }
  });
}

void Graph::backward(NodeId root) {
  const Tensor& R = nodes_[root].val;
  if (R.rows() != 1 || R.cols() != 1)
    throw ShapeMismatch("backward root must be 1x1, got " + R.shape_str());
  // Mark ancestors of root so unrelated branches are skipped.
  std::vector<char> needed(nodes_.size(), 0);
  std::vector<NodeId> stack{root};
  needed[root] = 1;
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    for (NodeId p : nodes_[id].parents) {
      if (!needed[p]) {
        needed[p] = 1;
        stack.push_back(p);
      }
    }
  }
  nodes_[root].grad[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (!needed[i] || !nodes_[i].requires_grad) continue;
    if (nodes_[i].back) nodes_[i].back(*this, i);
  }
}

double gradient_check(const GradFn& f, std::vector<Tensor> point, double h) {
  std::vector<Tensor> grads;
  const double f0 = f(point, &grads);
  if (!std::isfinite(f0)) throw NonFinite("gradient_check: f not finite at point");
  if (grads.size() != point.size())
    throw ShapeMismatch("gradient_check: gradient count mismatch");
  double max_rel = 0.0;
  for (std::size_t t = 0; t < point.size(); ++t) {
    if (!grads[t].same_shape(point[t]))
      throw ShapeMismatch("gradient_check: gradient shape mismatch at tensor " +
                          std::to_string(t));
    for (std::size_t i = 0; i < point[t].size(); ++i) {
      const double g_ad = grads[t][i];
      if (!std::isfinite(g_ad)) throw NonFinite("gradient_check: AD gradient not finite");
      const double saved = point[t][i];
      point[t][i] = saved + h;
      const double fp = f(point, nullptr);
      point[t][i] = saved - h;
      const double fm = f(point, nullptr);
      point[t][i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NonFinite("gradient_check: f not finite at perturbed point");
      const double g_fd = (fp - fm) / (2.0 * h);
      const double rel = std::abs(g_ad - g_fd) / std::max(1.0, std::abs(g_fd));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace xattn
