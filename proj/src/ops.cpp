#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#include "aimclr/tensor.hpp"

namespace aimclr {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

using NodePtr = std::shared_ptr<detail::Node>;

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

// Adds `values` into the gradient of `node` if it participates in gradients.
template <typename F>
void accumulate(const NodePtr& node, F&& body) {
  if (!node->requires_grad) return;
  node->ensure_grad();
  body(node->grad);
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

void check_axis(const char* op, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(x.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// Offsets of both operands for every output element under broadcasting.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> a_off, b_off;
  bool same = false;
};

Broadcast broadcast(const char* op, const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  bc.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) shape_fail(op, a, b);
    bc.out[i] = std::max(pa[i], pb[i]);
  }
  std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
  std::size_t acc_a = 1, acc_b = 1;
  for (std::size_t i = rank; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : acc_a;
    sb[i] = pb[i] == 1 ? 0 : acc_b;
    acc_a *= pa[i];
    acc_b *= pb[i];
  }
  const std::size_t total = shape_numel(bc.out);
  bc.a_off.resize(total);
  bc.b_off.resize(total);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    bc.a_off[flat] = oa;
    bc.b_off[flat] = ob;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < bc.out[d]) break;
      oa -= sa[d] * idx[d];
      ob -= sb[d] * idx[d];
      idx[d] = 0;
    }
  }
  return bc;
}

enum class BinOp { Add, Sub, Mul, Div };

Tensor binary(const char* name, BinOp kind, const Tensor& a, const Tensor& b) {
  auto bc = std::make_shared<Broadcast>(broadcast(name, a.shape(), b.shape()));
  const std::size_t total = shape_numel(bc->out);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(total);
  auto ia = [&](std::size_t i) { return bc->same ? i : bc->a_off[i]; };
  auto ib = [&](std::size_t i) { return bc->same ? i : bc->b_off[i]; };
  for (std::size_t i = 0; i < total; ++i) {
    const double x = ad[ia(i)], y = bd[ib(i)];
    switch (kind) {
      case BinOp::Add: out[i] = x + y; break;
      case BinOp::Sub: out[i] = x - y; break;
      case BinOp::Mul: out[i] = x * y; break;
      case BinOp::Div: out[i] = x / y; break;
    }
  }
  Tensor result = make_result(bc->out, std::move(out));
  if (!should_record({&a, &b})) return result;

  NodePtr an = a.node(), bn = b.node(), on = result.node();
  Tape::active()->record(name, {a, b}, result, [an, bn, on, bc, kind]() {
    const auto& g = on->grad;
    const std::size_t total = g.size();
    auto ia = [&](std::size_t i) { return bc->same ? i : bc->a_off[i]; };
    auto ib = [&](std::size_t i) { return bc->same ? i : bc->b_off[i]; };
    accumulate(an, [&](std::vector<double>& ga) {
      for (std::size_t i = 0; i < total; ++i) {
        switch (kind) {
          case BinOp::Add:
          case BinOp::Sub: ga[ia(i)] += g[i]; break;
          case BinOp::Mul: ga[ia(i)] += g[i] * bn->data[ib(i)]; break;
          case BinOp::Div: ga[ia(i)] += g[i] / bn->data[ib(i)]; break;
        }
      }
    });
    accumulate(bn, [&](std::vector<double>& gb) {
      for (std::size_t i = 0; i < total; ++i) {
        const double y = bn->data[ib(i)];
        switch (kind) {
          case BinOp::Add: gb[ib(i)] += g[i]; break;
          case BinOp::Sub: gb[ib(i)] -= g[i]; break;
          case BinOp::Mul: gb[ib(i)] += g[i] * an->data[ia(i)]; break;
          case BinOp::Div: gb[ib(i)] -= g[i] * an->data[ia(i)] / (y * y); break;
        }
      }
    });
  });
  return result;
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
  Tensor result = make_result(x.shape(), std::move(out));
  if (!should_record({&x})) return result;
  NodePtr xn = x.node(), on = result.node();
  Tape::active()->record(name, {x}, result, [xn, on, deriv]() {
    accumulate(xn, [&](std::vector<double>& gx) {
      for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += on->grad[i] * deriv(xn->data[i], on->data[i]);
      }
    });
  });
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinOp::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinOp::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary("div", BinOp::Div, a, b); }

Tensor masked_mul(const Tensor& x, const Tensor& mask) {
  if (mask.requires_grad()) throw std::invalid_argument("masked_mul: mask must be constant");
  return binary("masked_mul", BinOp::Mul, x, mask);
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary("add_scalar", a, [s](double v) { return v + s; },
               [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary("mul_scalar", a, [s](double v) { return v * s; },
               [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); },
               [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary("log", x, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary("square", x, [](double v) { return v * v; },
               [](double v, double) { return 2.0 * v; });
}

Tensor sum(const Tensor& x) {
  const auto xd = x.data();
  double s = 0.0;
  for (double v : xd) s += v;
  Tensor result = make_result({}, {s});
  if (!should_record({&x})) return result;
  NodePtr xn = x.node(), on = result.node();
  Tape::active()->record("sum", {x}, result, [xn, on]() {
    accumulate(xn, [&](std::vector<double>& gx) {
      for (double& g : gx) g += on->grad[0];
    });
  });
  return result;
}

Tensor mean(const Tensor& x) {
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum(const Tensor& x, std::size_t axis, bool keepdim) {
  check_axis("sum", x, axis);
  const AxisSplit sp = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  const auto xd = x.data();
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t k = 0; k < sp.n; ++k) {
      const double* src = xd.data() + (o * sp.n + k) * sp.inner;
      double* dst = out.data() + o * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  }
  Tensor result = make_result(std::move(out_shape), std::move(out));
  if (!should_record({&x})) return result;
  NodePtr xn = x.node(), on = result.node();
  Tape::active()->record("sum_axis", {x}, result, [xn, on, sp]() {
    accumulate(xn, [&](std::vector<double>& gx) {
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t k = 0; k < sp.n; ++k) {
          double* dst = gx.data() + (o * sp.n + k) * sp.inner;
          const double* src = on->grad.data() + o * sp.inner;
          for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
        }
      }
    });
  });
  return result;
}

Tensor mean(const Tensor& x, std::size_t axis, bool keepdim) {
  check_axis("mean", x, axis);
  return mul_scalar(sum(x, axis, keepdim), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  check_axis("softmax", x, axis);
  const AxisSplit sp = split_at(x.shape(), axis);
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < sp.n; ++k) mx = std::max(mx, xd[base + k * sp.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < sp.n; ++k) {
        out[base + k * sp.inner] = std::exp(xd[base + k * sp.inner] - mx);
        z += out[base + k * sp.inner];
      }
      for (std::size_t k = 0; k < sp.n; ++k) out[base + k * sp.inner] /= z;
    }
  }
  Tensor result = make_result(x.shape(), std::move(out));
  if (!should_record({&x})) return result;
  NodePtr xn = x.node(), on = result.node();
  Tape::active()->record("softmax", {x}, result, [xn, on, sp]() {
    accumulate(xn, [&](std::vector<double>& gx) {
      const auto& y = on->data;
      const auto& g = on->grad;
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const std::size_t base = o * sp.n * sp.inner + i;
          double dot = 0.0;
          for (std::size_t k = 0; k < sp.n; ++k) dot += g[base + k * sp.inner] * y[base + k * sp.inner];
          for (std::size_t k = 0; k < sp.n; ++k) {
            const std::size_t j = base + k * sp.inner;
            gx[j] += y[j] * (g[j] - dot);
          }
        }
      }
    });
  });
  return result;
}

Tensor logsumexp(const Tensor& x, std::size_t axis, const Tensor& mask) {
  check_axis("logsumexp", x, axis);
  if (mask.defined()) {
    if (mask.shape() != x.shape()) shape_fail("logsumexp", x.shape(), mask.shape());
    if (mask.requires_grad()) throw std::invalid_argument("logsumexp: mask must be constant");
  }
  const AxisSplit sp = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto xd = x.data();
  const double* md = mask.defined() ? mask.data().data() : nullptr;
  auto kept = [md](std::size_t j) { return md == nullptr || md[j] != 0.0; };
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  std::vector<double> out(sp.outer * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      double mx = kNegInf;
      for (std::size_t k = 0; k < sp.n; ++k) {
        const std::size_t j = base + k * sp.inner;
        if (kept(j)) mx = std::max(mx, xd[j]);
      }
      if (mx == kNegInf) {
        out[o * sp.inner + i] = kNegInf;
        continue;
      }
      double s = 0.0;
      for (std::size_t k = 0; k < sp.n; ++k) {
        const std::size_t j = base + k * sp.inner;
        if (kept(j)) s += std::exp(xd[j] - mx);
      }
      out[o * sp.inner + i] = mx + std::log(s);
    }
  }
  Tensor result = make_result(std::move(out_shape), std::move(out));
  if (!should_record({&x})) return result;
  NodePtr xn = x.node(), on = result.node();
  NodePtr mn = mask.defined() ? mask.node() : nullptr;
  Tape::active()->record("logsumexp", {x}, result, [xn, on, mn, sp]() {
    accumulate(xn, [&](std::vector<double>& gx) {
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const double lse = on->data[o * sp.inner + i];
          if (std::isinf(lse) && lse < 0) continue;
          const double g = on->grad[o * sp.inner + i];
          for (std::size_t k = 0; k < sp.n; ++k) {
            const std::size_t j = (o * sp.n + k) * sp.inner + i;
            if (mn && mn->data[j] == 0.0) continue;
            gx[j] += g * std::exp(xn->data[j] - lse);
          }
        }
      }
    });
  });
  return result;
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  check_axis("log_softmax", x, axis);
  Shape keep = x.shape();
  keep[axis] = 1;
  return sub(x, reshape(logsumexp(x, axis), keep));
}

Tensor l2_normalize(const Tensor& x, std::size_t axis) {
  check_axis("l2_normalize", x, axis);
  constexpr double kMinNorm = 1e-12;
  const AxisSplit sp = split_at(x.shape(), axis);
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  auto norms = std::make_shared<std::vector<double>>(sp.outer * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      double ss = 0.0;
      for (std::size_t k = 0; k < sp.n; ++k) ss += xd[base + k * sp.inner] * xd[base + k * sp.inner];
      const double nrm = std::max(std::sqrt(ss), kMinNorm);
      (*norms)[o * sp.inner + i] = nrm;
      for (std::size_t k = 0; k < sp.n; ++k) out[base + k * sp.inner] = xd[base + k * sp.inner] / nrm;
    }
  }
  Tensor result = make_result(x.shape(), std::move(out));
  if (!should_record({&x})) return result;
  NodePtr xn = x.node(), on = result.node();
  Tape::active()->record("l2_normalize", {x}, result, [xn, on, norms, sp]() {
    accumulate(xn, [&](std::vector<double>& gx) {
      const auto& y = on->data;
      const auto& g = on->grad;
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const std::size_t base = o * sp.n * sp.inner + i;
          const double nrm = (*norms)[o * sp.inner + i];
          double dot = 0.0;
          for (std::size_t k = 0; k < sp.n; ++k) dot += g[base + k * sp.inner] * y[base + k * sp.inner];
          for (std::size_t k = 0; k < sp.n; ++k) {
            const std::size_t j = base + k * sp.inner;
            gx[j] += (g[j] - y[j] * dot) / nrm;
          }
        }
      }
    });
  });
  return result;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_fail("matmul", a.shape(), b.shape());
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MapMat(out.data(), m, n).noalias() =
      ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
  Tensor result = make_result({a.dim(0), b.dim(1)}, std::move(out));
  if (!should_record({&a, &b})) return result;
  NodePtr an = a.node(), bn = b.node(), on = result.node();
  Tape::active()->record("matmul", {a, b}, result, [an, bn, on, m, k, n]() {
    ConstMapMat g(on->grad.data(), m, n);
    accumulate(an, [&](std::vector<double>& ga) {
      MapMat(ga.data(), m, k).noalias() += g * ConstMapMat(bn->data.data(), k, n).transpose();
    });
    accumulate(bn, [&](std::vector<double>& gb) {
      MapMat(gb.data(), k, n).noalias() += ConstMapMat(an->data.data(), m, k).transpose() * g;
    });
  });
  return result;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  check_axis("concat", parts.front(), axis);
  Shape out_shape = parts.front().shape();
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) shape_fail("concat", parts.front().shape(), s);
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != out_shape[d]) shape_fail("concat", parts.front().shape(), s);
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit sp = split_at(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.dim(axis) * sp.inner;
    const auto pd = p.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(pd.data() + o * chunk, chunk, out.data() + o * sp.n * sp.inner + offset * sp.inner);
    }
    offset += p.dim(axis);
  }
  Tensor result = make_result(out_shape, std::move(out));
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (!Tape::active() || !any) return result;
  std::vector<NodePtr> nodes;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    widths.push_back(p.dim(axis));
  }
  NodePtr on = result.node();
  Tape::active()->record("concat", parts, result, [nodes, widths, offsets, on, sp]() {
    for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
      accumulate(nodes[pi], [&](std::vector<double>& gp) {
        const std::size_t chunk = widths[pi] * sp.inner;
        for (std::size_t o = 0; o < sp.outer; ++o) {
          const double* src = on->grad.data() + o * sp.n * sp.inner + offsets[pi] * sp.inner;
          double* dst = gp.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      });
    }
  });
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_fail("reshape", x.shape(), shape);
  Tensor result = make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (!should_record({&x})) return result;
  NodePtr xn = x.node(), on = result.node();
  Tape::active()->record("reshape", {x}, result, [xn, on]() {
    accumulate(xn, [&](std::vector<double>& gx) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += on->grad[i];
    });
  });
  return result;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& in = x.shape();
  const std::size_t rank = in.size();
  std::vector<bool> seen(rank, false);
  if (order.size() != rank) shape_fail("permute", in, Shape(order.begin(), order.end()));
  for (std::size_t d : order) {
    if (d >= rank || seen[d]) shape_fail("permute", in, Shape(order.begin(), order.end()));
    seen[d] = true;
  }
  Shape out_shape(rank);
  std::vector<std::size_t> in_strides(rank), src_strides(rank);
  std::size_t acc = 1;
  for (std::size_t d = rank; d-- > 0;) {
    in_strides[d] = acc;
    acc *= in[d];
  }
  for (std::size_t d = 0; d < rank; ++d) {
    out_shape[d] = in[order[d]];
    src_strides[d] = in_strides[order[d]];
  }
  const std::size_t total = x.numel();
  auto index = std::make_shared<std::vector<std::size_t>>(total);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    (*index)[flat] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      src += src_strides[d];
      if (idx[d] < out_shape[d]) break;
      src -= src_strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  const auto xd = x.data();
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = xd[(*index)[i]];
  Tensor result = make_result(std::move(out_shape), std::move(out));
  if (!should_record({&x})) return result;
  NodePtr xn = x.node(), on = result.node();
  Tape::active()->record("permute", {x}, result, [xn, on, index]() {
    accumulate(xn, [&](std::vector<double>& gx) {
      for (std::size_t i = 0; i < index->size(); ++i) gx[(*index)[i]] += on->grad[i];
    });
  });
  return result;
}

Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
  check_axis("select", x, axis);
  if (index >= x.dim(axis)) {
    throw ShapeError("select: index " + std::to_string(index) + " out of range for axis " +
                     std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const AxisSplit sp = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto xd = x.data();
  std::vector<double> out(sp.outer * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(xd.data() + (o * sp.n + index) * sp.inner, sp.inner, out.data() + o * sp.inner);
  }
  Tensor result = make_result(std::move(out_shape), std::move(out));
  if (!should_record({&x})) return result;
  NodePtr xn = x.node(), on = result.node();
  Tape::active()->record("select", {x}, result, [xn, on, sp, index]() {
    accumulate(xn, [&](std::vector<double>& gx) {
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
          gx[(o * sp.n + index) * sp.inner + i] += on->grad[o * sp.inner + i];
        }
      }
    });
  });
  return result;
}

Tensor temporal_conv(const Tensor& x, const Tensor& weight, std::size_t stride) {
  if (x.rank() != 4 || weight.rank() != 3 || weight.dim(1) != x.dim(3) || stride == 0) {
    shape_fail("temporal_conv", x.shape(), weight.shape());
  }
  const std::size_t N = x.dim(0), T = x.dim(1), V = x.dim(2), Cin = x.dim(3);
  const std::size_t K = weight.dim(0), Cout = weight.dim(2);
  const std::size_t pad = (K - 1) / 2;
  if (T + 2 * pad < K) shape_fail("temporal_conv", x.shape(), weight.shape());
  const std::size_t To = (T + 2 * pad - K) / stride + 1;
  const std::size_t rows = N * To * V, cols = K * Cin;

  // im2col: row (n, t', v) holds the K*Cin window feeding output frame t'.
  auto col = std::make_shared<std::vector<double>>(rows * cols, 0.0);
  const auto xd = x.data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t to = 0; to < To; ++to) {
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(to * stride + k) -
                                 static_cast<std::ptrdiff_t>(pad);
        if (t < 0 || t >= static_cast<std::ptrdiff_t>(T)) continue;
        for (std::size_t v = 0; v < V; ++v) {
          const double* src = xd.data() + ((n * T + static_cast<std::size_t>(t)) * V + v) * Cin;
          double* dst = col->data() + ((n * To + to) * V + v) * cols + k * Cin;
          std::copy_n(src, Cin, dst);
        }
      }
    }
  }
  std::vector<double> out(rows * Cout);
  const auto r = static_cast<Eigen::Index>(rows);
  const auto c = static_cast<Eigen::Index>(cols);
  const auto co = static_cast<Eigen::Index>(Cout);
  MapMat(out.data(), r, co).noalias() =
      ConstMapMat(col->data(), r, c) * ConstMapMat(weight.data().data(), c, co);
  Tensor result = make_result({N, To, V, Cout}, std::move(out));
  if (!should_record({&x, &weight})) return result;

  NodePtr xn = x.node(), wn = weight.node(), on = result.node();
  Tape::active()->record(
      "temporal_conv", {x, weight}, result,
      [xn, wn, on, col, N, T, V, Cin, K, To, stride, pad, r, c, co]() {
        ConstMapMat g(on->grad.data(), r, co);
        accumulate(wn, [&](std::vector<double>& gw) {
          MapMat(gw.data(), c, co).noalias() += ConstMapMat(col->data(), r, c).transpose() * g;
        });
        accumulate(xn, [&](std::vector<double>& gx) {
          RowMat dcol = g * ConstMapMat(wn->data.data(), c, co).transpose();
          const std::size_t cols = static_cast<std::size_t>(c);
          for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t to = 0; to < To; ++to) {
              for (std::size_t k = 0; k < K; ++k) {
                const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(to * stride + k) -
                                         static_cast<std::ptrdiff_t>(pad);
                if (t < 0 || t >= static_cast<std::ptrdiff_t>(T)) continue;
                for (std::size_t v = 0; v < V; ++v) {
                  const double* src = dcol.data() + ((n * To + to) * V + v) * cols + k * Cin;
                  double* dst = gx.data() + ((n * T + static_cast<std::size_t>(t)) * V + v) * Cin;
                  for (std::size_t i = 0; i < Cin; ++i) dst[i] += src[i];
                }
              }
            }
          }
        });
      });
  return result;
}

}  // namespace aimclr
