// src/ops.cc
//
// Copyright 2026 The sctc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sctc/ops.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "sctc/error.h"

namespace sctc {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

MatMap as_matrix(Tensor& t) {
  return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

void require_same(Var a, Var b, const char* op) { check_same_shape(a.value(), b.value(), op); }

void add_into(Tensor* dst, const Tensor& src) {
  if (dst == nullptr) return;
  double* d = dst->data();
  const double* s = src.data();
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += s[i];
}

template <typename Fn>
Var unary(Var a, Fn&& fn, Graph::BackwardFn backward) {
  Tensor out = a.value();
  for (double& x : out.values()) x = fn(x);
  return a.graph().record(std::move(out), {a}, std::move(backward));
}

}  // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw InvalidShape("matmul: incompatible shapes " + shape_string(av.shape()) + " x " +
                       shape_string(bv.shape()));
  }
  Tensor out({av.rows(), bv.cols()});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const auto dc = as_matrix(g.upstream(self));
    if (Tensor* da = g.grad_buffer(ia)) as_matrix(*da).noalias() += dc * as_matrix(g.value(ib)).transpose();
    if (Tensor* db = g.grad_buffer(ib)) as_matrix(*db).noalias() += as_matrix(g.value(ia)).transpose() * dc;
  });
}

Var add(Var a, Var b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    add_into(g.grad_buffer(ia), g.upstream(self));
    add_into(g.grad_buffer(ib), g.upstream(self));
  });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    add_into(g.grad_buffer(ia), g.upstream(self));
    if (Tensor* db = g.grad_buffer(ib)) {
      const Tensor& up = g.upstream(self);
      for (std::size_t i = 0; i < up.size(); ++i) (*db)[i] -= up[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    if (Tensor* da = g.grad_buffer(ia)) {
      const Tensor& bv = g.value(ib);
      for (std::size_t i = 0; i < up.size(); ++i) (*da)[i] += up[i] * bv[i];
    }
    if (Tensor* db = g.grad_buffer(ib)) {
      const Tensor& av = g.value(ia);
      for (std::size_t i = 0; i < up.size(); ++i) (*db)[i] += up[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  const std::size_t ia = a.id();
  return unary(a, [c](double x) { return c * x; }, [ia, c](Graph& g, std::size_t self) {
    Tensor* da = g.grad_buffer(ia);
    const Tensor& up = g.upstream(self);
    for (std::size_t i = 0; i < up.size(); ++i) (*da)[i] += c * up[i];
  });
}

Var relu(Var a) {
  const std::size_t ia = a.id();
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [ia](Graph& g, std::size_t self) {
    Tensor* da = g.grad_buffer(ia);
    const Tensor& up = g.upstream(self);
    const Tensor& x = g.value(ia);
    for (std::size_t i = 0; i < up.size(); ++i) {
      if (x[i] > 0.0) (*da)[i] += up[i];
    }
  });
}

Var gelu(Var a) {
  const std::size_t ia = a.id();
  return unary(a, gelu_value, [ia](Graph& g, std::size_t self) {
    Tensor* da = g.grad_buffer(ia);
    const Tensor& up = g.upstream(self);
    const Tensor& x = g.value(ia);
    for (std::size_t i = 0; i < up.size(); ++i) (*da)[i] += up[i] * gelu_derivative(x[i]);
  });
}

Var exp(Var a) {
  const std::size_t ia = a.id();
  return unary(a, [](double x) { return std::exp(x); }, [ia](Graph& g, std::size_t self) {
    Tensor* da = g.grad_buffer(ia);
    const Tensor& up = g.upstream(self);
    const Tensor& y = g.value(self);
    for (std::size_t i = 0; i < up.size(); ++i) (*da)[i] += up[i] * y[i];
  });
}

Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.rank() != 1 || bv.size() != xv.cols()) {
    throw InvalidShape("add_bias: bias " + shape_string(bv.shape()) + " does not match rows of " +
                       shape_string(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  const std::size_t ix = x.id(), ib = bias.id();
  return x.graph().record(std::move(out), {x, bias}, [ix, ib](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    add_into(g.grad_buffer(ix), up);
    if (Tensor* db = g.grad_buffer(ib)) {
      for (std::size_t r = 0; r < up.rows(); ++r) {
        auto row = up.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) (*db)[c] += row[c];
      }
    }
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double x : a.value().values()) total += x;
  const std::size_t ia = a.id();
  return a.graph().record(Tensor({1}, {total}), {a}, [ia](Graph& g, std::size_t self) {
    Tensor* da = g.grad_buffer(ia);
    const double up = g.upstream(self)[0];
    for (double& d : da->values()) d += up;
  });
}

Var elementwise(Elementwise kind, Var a, std::optional<Var> b, double c) {
  auto other = [&]() -> Var {
    if (!b) throw InvalidShape("elementwise: binary kind needs a second operand");
    return *b;
  };
  switch (kind) {
    case Elementwise::kAdd: return add(a, other());
    case Elementwise::kSub: return sub(a, other());
    case Elementwise::kMul: return mul(a, other());
    case Elementwise::kRelu: return relu(a);
    case Elementwise::kGelu: return gelu(a);
    case Elementwise::kScale: return scale(a, c);
  }
  throw ContractError("elementwise: unknown kind");
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (d < 2) throw InvalidShape("layer_norm: needs at least two features");
  if (!(eps > 0.0)) throw InvalidConfig("layer_norm: eps must be positive");
  if (gamma.value().rank() != 1 || gamma.value().size() != d || beta.value().shape() != gamma.value().shape()) {
    throw InvalidShape("layer_norm: gamma/beta must be [" + std::to_string(d) + "]");
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(xv.shape());
  // normalised rows and per-row 1/sigma are kept for the backward pass
  auto xhat = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(n);
  for (std::size_t r = 0; r < n; ++r) {
    auto in = xv.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    auto xh = xhat->row(r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      xh[c] = (in[c] - mean) * is;
      o[c] = gv[c] * xh[c] + bv[c];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.graph().record(std::move(out), {x, gamma, beta},
                          [ix, ig, ib, xhat, inv_std, n, d](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const Tensor& gv = g.value(ig);
    if (Tensor* dg = g.grad_buffer(ig)) {
      for (std::size_t r = 0; r < n; ++r) {
        auto u = up.row(r);
        auto xh = xhat->row(r);
        for (std::size_t c = 0; c < d; ++c) (*dg)[c] += u[c] * xh[c];
      }
    }
    if (Tensor* db = g.grad_buffer(ib)) {
      for (std::size_t r = 0; r < n; ++r) {
        auto u = up.row(r);
        for (std::size_t c = 0; c < d; ++c) (*db)[c] += u[c];
      }
    }
    if (Tensor* dx = g.grad_buffer(ix)) {
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t r = 0; r < n; ++r) {
        auto u = up.row(r);
        auto xh = xhat->row(r);
        double mean_dy = 0.0, mean_dy_xh = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double dy = u[c] * gv[c];
          mean_dy += dy;
          mean_dy_xh += dy * xh[c];
        }
        mean_dy *= inv_d;
        mean_dy_xh *= inv_d;
        auto out_row = dx->row(r);
        const double is = (*inv_std)[r];
        for (std::size_t c = 0; c < d; ++c) {
          out_row[c] += is * (u[c] * gv[c] - mean_dy - xh[c] * mean_dy_xh);
        }
      }
    }
  });
}

Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (double v : in) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = in[c] - lse;
  }
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_buffer(ix);
    const Tensor& up = g.upstream(self);
    const Tensor& y = g.value(self);
    for (std::size_t r = 0; r < up.rows(); ++r) {
      auto u = up.row(r);
      auto yr = y.row(r);
      auto d = dx->row(r);
      double total = 0.0;
      for (double v : u) total += v;
      for (std::size_t c = 0; c < u.size(); ++c) d[c] += u[c] - std::exp(yr[c]) * total;
    }
  });
}

Var attention(Var q, Var k, Var v, std::size_t heads, const PadMask& mask) {
  mask.validate();
  const Tensor& qv = q.value();
  const std::size_t rows = qv.rows(), dim = qv.cols();
  if (qv.rank() != 2 || k.value().shape() != qv.shape() || v.value().shape() != qv.shape()) {
    throw InvalidShape("attention: q, k, v must share one [N, D] shape");
  }
  if (rows != mask.rows()) {
    throw InvalidShape("attention: " + std::to_string(rows) + " rows but mask covers " +
                       std::to_string(mask.rows()));
  }
  if (heads == 0 || dim % heads != 0) {
    throw InvalidConfig("attention: model dim " + std::to_string(dim) + " not divisible by " +
                        std::to_string(heads) + " heads");
  }
  const auto P = static_cast<Eigen::Index>(mask.padded_length);
  const auto D = static_cast<Eigen::Index>(dim);
  const auto dh = static_cast<Eigen::Index>(dim / heads);
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t B = mask.batch();

  Tensor out({rows, dim});
  // attention weights per (utterance, head): [P, P] blocks
  auto weights = std::make_shared<std::vector<RowMatrix>>(B * heads);
  for (std::size_t b = 0; b < B; ++b) {
    const auto len = static_cast<Eigen::Index>(mask.lengths[b]);
    const std::size_t base = b * mask.padded_length * dim;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = base + h * static_cast<std::size_t>(dh);
      ConstStridedMap qb(qv.data() + off, P, dh, Eigen::OuterStride<>(D));
      ConstStridedMap kb(k.value().data() + off, len, dh, Eigen::OuterStride<>(D));
      ConstStridedMap vb(v.value().data() + off, len, dh, Eigen::OuterStride<>(D));
      RowMatrix& w = (*weights)[b * heads + h];
      w.noalias() = (qb * kb.transpose()) * scale_factor;
      for (Eigen::Index r = 0; r < P; ++r) {
        const double mx = w.row(r).maxCoeff();
        w.row(r) = (w.row(r).array() - mx).exp();
        w.row(r) /= w.row(r).sum();
      }
      StridedMap ob(out.data() + off, P, dh, Eigen::OuterStride<>(D));
      ob.noalias() = w * vb;
    }
  }
  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  return q.graph().record(
      std::move(out), {q, k, v},
      [iq, ik, iv, weights, mask, heads, P, D, dh, scale_factor](Graph& g, std::size_t self) {
        const Tensor& up = g.upstream(self);
        Tensor* dq = g.grad_buffer(iq);
        Tensor* dk = g.grad_buffer(ik);
        Tensor* dv = g.grad_buffer(iv);
        const Tensor& qv = g.value(iq);
        const Tensor& kv = g.value(ik);
        const Tensor& vv = g.value(iv);
        RowMatrix dw, ds;
        for (std::size_t b = 0; b < mask.batch(); ++b) {
          const auto len = static_cast<Eigen::Index>(mask.lengths[b]);
          const std::size_t base = b * mask.padded_length * static_cast<std::size_t>(D);
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = base + h * static_cast<std::size_t>(dh);
            const RowMatrix& w = (*weights)[b * heads + h];
            ConstStridedMap dout(up.data() + off, P, dh, Eigen::OuterStride<>(D));
            ConstStridedMap vb(vv.data() + off, len, dh, Eigen::OuterStride<>(D));
            if (dv != nullptr) {
              StridedMap dvb(dv->data() + off, len, dh, Eigen::OuterStride<>(D));
              dvb.noalias() += w.transpose() * dout;
            }
            if (dq == nullptr && dk == nullptr) continue;
            dw.noalias() = dout * vb.transpose();
            ds = w.array() * (dw.colwise() - (dw.array() * w.array()).rowwise().sum().matrix()).array();
            ds *= scale_factor;
            if (dq != nullptr) {
              ConstStridedMap kb(kv.data() + off, len, dh, Eigen::OuterStride<>(D));
              StridedMap dqb(dq->data() + off, P, dh, Eigen::OuterStride<>(D));
              dqb.noalias() += ds * kb;
            }
            if (dk != nullptr) {
              ConstStridedMap qb(qv.data() + off, P, dh, Eigen::OuterStride<>(D));
              StridedMap dkb(dk->data() + off, len, dh, Eigen::OuterStride<>(D));
              dkb.noalias() += ds.transpose() * qb;
            }
          }
        }
      });
}

}  // namespace sctc
