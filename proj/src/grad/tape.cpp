// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/grad/tape.hpp"

#include <cmath>
#include <string>

#include "perm/error.hpp"
#include "perm/kernels/dense.hpp"

namespace perm::ad {
namespace {

[[noreturn]] void shape_mismatch(OpKind kind, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " + to_string(a) + " vs " +
                   to_string(b));
}

void require_arity(OpKind kind, std::size_t got, std::size_t want) {
  if (got != want) {
    throw InvalidArgument(std::string(op_name(kind)) + ": expected " + std::to_string(want) +
                          " inputs, got " + std::to_string(got));
  }
}

void check_finite(OpKind kind, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NonFiniteError(std::string(op_name(kind)) + ": produced a non-finite value");
    }
  }
}

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Shape as_matrix(const Shape& s) { return s.size() == 2 ? s : Shape{1, s[0]}; }

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scalar_mul: return "scalar-mul";
    case OpKind::tanh: return "tanh";
    case OpKind::softplus: return "softplus";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::square: return "square";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::broadcast_add_row: return "broadcast-add-row";
  }
  return "unknown";
}

Var Tape::push(TapeNode node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(Tensor value) {
  TapeNode n;
  n.value = std::move(value);
  n.parameter = true;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  TapeNode n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::apply(OpKind kind, std::span<const Var> inputs, OpArgs args) {
  for (const Var& v : inputs) {
    if (v.id >= nodes_.size()) throw InvalidArgument("tape: input node does not exist");
  }
  TapeNode node;
  node.kind = kind;
  node.args = args;
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) node.inputs.push_back(v.id);

  Shape out_shape;
  std::vector<double> out;

  auto elementwise_unary = [&](auto&& f) {
    require_arity(kind, inputs.size(), 1);
    const Tensor& a = value(inputs[0]);
    out_shape = a.shape();
    out.resize(a.size());
    const auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  };
  auto elementwise_binary = [&](auto&& f) {
    require_arity(kind, inputs.size(), 2);
    const Tensor& a = value(inputs[0]);
    const Tensor& b = value(inputs[1]);
    if (a.shape() != b.shape()) shape_mismatch(kind, a.shape(), b.shape());
    out_shape = a.shape();
    out.resize(a.size());
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  };

  switch (kind) {
    case OpKind::leaf:
      throw InvalidArgument("tape: use parameter() or constant() for leaves");
    case OpKind::matmul: {
      require_arity(kind, inputs.size(), 2);
      const Tensor& a = value(inputs[0]);
      const Tensor& b = value(inputs[1]);
      if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        shape_mismatch(kind, a.shape(), b.shape());
      }
      const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
      out_shape = {m, n};
      out.resize(m * n);
      kernels::matmul(a.values(), b.values(), out, m, k, n);
      break;
    }
    case OpKind::add: elementwise_binary([](double x, double y) { return x + y; }); break;
    case OpKind::sub: elementwise_binary([](double x, double y) { return x - y; }); break;
    case OpKind::mul: elementwise_binary([](double x, double y) { return x * y; }); break;
    case OpKind::scalar_mul: {
      const double c = args.scalar;
      if (!std::isfinite(c)) throw NonFiniteError("scalar-mul: non-finite scalar");
      elementwise_unary([c](double x) { return c * x; });
      break;
    }
    case OpKind::tanh: elementwise_unary([](double x) { return std::tanh(x); }); break;
    case OpKind::softplus: elementwise_unary(softplus_value); break;
    case OpKind::exp: elementwise_unary([](double x) { return std::exp(x); }); break;
    case OpKind::log: {
      elementwise_unary([](double x) { return std::log(x); });
      break;
    }
    case OpKind::square: elementwise_unary([](double x) { return x * x; }); break;
    case OpKind::sum:
    case OpKind::mean: {
      require_arity(kind, inputs.size(), 1);
      const Tensor& a = value(inputs[0]);
      double s = 0.0;
      for (double x : a.values()) s += x;
      if (kind == OpKind::mean) s /= static_cast<double>(a.size());
      out_shape = {1};
      out = {s};
      break;
    }
    case OpKind::concat: {
      if (inputs.empty()) throw InvalidArgument("concat: needs at least one input");
      const Shape first = as_matrix(value(inputs[0]).shape());
      const std::size_t rows = first[0];
      std::size_t cols = 0;
      for (const Var& v : inputs) {
        const Shape s = as_matrix(value(v).shape());
        if (s[0] != rows) shape_mismatch(kind, first, s);
        cols += s[1];
      }
      out_shape = value(inputs[0]).rank() == 1 && rows == 1 ? Shape{cols} : Shape{rows, cols};
      out.resize(rows * cols);
      std::size_t offset = 0;
      for (const Var& v : inputs) {
        const Tensor& t = value(v);
        const std::size_t c = t.cols();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < c; ++j) out[r * cols + offset + j] = t[r * c + j];
        }
        offset += c;
      }
      break;
    }
    case OpKind::slice: {
      require_arity(kind, inputs.size(), 1);
      const Tensor& a = value(inputs[0]);
      if (args.begin >= args.end || args.end > a.cols()) {
        throw ShapeError("slice: range [" + std::to_string(args.begin) + ", " +
                         std::to_string(args.end) + ") invalid for shape " + to_string(a.shape()));
      }
      const std::size_t rows = a.rows(), width = args.end - args.begin;
      out_shape = a.rank() == 2 ? Shape{rows, width} : Shape{width};
      out.resize(rows * width);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < width; ++j) out[r * width + j] = a[r * a.cols() + args.begin + j];
      }
      break;
    }
    case OpKind::broadcast_add_row: {
      require_arity(kind, inputs.size(), 2);
      const Tensor& a = value(inputs[0]);
      const Tensor& b = value(inputs[1]);
      if (a.rank() != 2 || b.rows() != 1 || b.cols() != a.cols()) {
        shape_mismatch(kind, a.shape(), b.shape());
      }
      out_shape = a.shape();
      out.resize(a.size());
      const std::size_t c = a.cols();
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] = a[r * c + j] + b[j];
      }
      break;
    }
  }
  check_finite(kind, out);
  node.value = Tensor(std::move(out_shape), std::move(out), Tensor::Unchecked{});
  return push(std::move(node));
}

Gradients Tape::backward(Var root) const {
  const Tensor& root_value = value(root);
  if (root_value.size() != 1) {
    throw ShapeError("backward: root must be a scalar, got shape " + to_string(root_value.shape()));
  }
  std::vector<std::vector<double>> g(nodes_.size());
  g[root.id].assign(1, 1.0);

  auto acc = [&](std::uint32_t id) -> std::vector<double>& {
    auto& v = g[id];
    if (v.empty()) v.assign(nodes_[id].value.size(), 0.0);
    return v;
  };

  for (std::uint32_t id = root.id + 1; id-- > 0;) {
    if (g[id].empty()) continue;
    const TapeNode& n = nodes_[id];
    const std::vector<double>& gy = g[id];
    const auto y = n.value.values();
    switch (n.kind) {
      case OpKind::leaf: break;
      case OpKind::matmul: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        const std::size_t m = a.rows(), k = a.cols(), cols = b.cols();
        kernels::matmul_nt_accumulate(gy, b.values(), acc(n.inputs[0]), m, k, cols);
        kernels::matmul_tn_accumulate(a.values(), gy, acc(n.inputs[1]), m, k, cols);
        break;
      }
      case OpKind::add: {
        for (int s = 0; s < 2; ++s) {
          auto& ga = acc(n.inputs[s]);
          for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        }
        break;
      }
      case OpKind::sub: {
        auto& ga = acc(n.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        auto& gb = acc(n.inputs[1]);
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
        break;
      }
      case OpKind::mul: {
        const auto av = nodes_[n.inputs[0]].value.values();
        const auto bv = nodes_[n.inputs[1]].value.values();
        auto& ga = acc(n.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
        auto& gb = acc(n.inputs[1]);
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
        break;
      }
      case OpKind::scalar_mul: {
        auto& ga = acc(n.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += n.args.scalar * gy[i];
        break;
      }
      case OpKind::tanh: {
        auto& ga = acc(n.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case OpKind::softplus: {
        const auto xv = nodes_[n.inputs[0]].value.values();
        auto& ga = acc(n.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * sigmoid(xv[i]);
        break;
      }
      case OpKind::exp: {
        auto& ga = acc(n.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * y[i];
        break;
      }
      case OpKind::log: {
        const auto xv = nodes_[n.inputs[0]].value.values();
        auto& ga = acc(n.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] / xv[i];
        break;
      }
      case OpKind::square: {
        const auto xv = nodes_[n.inputs[0]].value.values();
        auto& ga = acc(n.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += 2.0 * xv[i] * gy[i];
        break;
      }
      case OpKind::sum:
      case OpKind::mean: {
        auto& ga = acc(n.inputs[0]);
        const double scale =
            n.kind == OpKind::mean ? gy[0] / static_cast<double>(ga.size()) : gy[0];
        for (double& v : ga) v += scale;
        break;
      }
      case OpKind::concat: {
        const std::size_t rows = n.value.rows(), cols = n.value.cols();
        std::size_t offset = 0;
        for (std::uint32_t in : n.inputs) {
          const std::size_t c = nodes_[in].value.cols();
          auto& ga = acc(in);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += gy[r * cols + offset + j];
          }
          offset += c;
        }
        break;
      }
      case OpKind::slice: {
        const std::size_t src_cols = nodes_[n.inputs[0]].value.cols();
        const std::size_t width = n.args.end - n.args.begin;
        auto& ga = acc(n.inputs[0]);
        for (std::size_t r = 0; r < n.value.rows(); ++r) {
          for (std::size_t j = 0; j < width; ++j) {
            ga[r * src_cols + n.args.begin + j] += gy[r * width + j];
          }
        }
        break;
      }
      case OpKind::broadcast_add_row: {
        auto& ga = acc(n.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        auto& gb = acc(n.inputs[1]);
        const std::size_t c = n.value.cols();
        for (std::size_t r = 0; r < n.value.rows(); ++r) {
          for (std::size_t j = 0; j < c; ++j) gb[j] += gy[r * c + j];
        }
        break;
      }
    }
  }

  Gradients out;
  out.grads_.reserve(nodes_.size());
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    std::vector<double> values =
        g[id].empty() ? std::vector<double>(nodes_[id].value.size(), 0.0) : std::move(g[id]);
    out.grads_.push_back(Tensor(nodes_[id].value.shape(), std::move(values), Tensor::Unchecked{}));
  }
  return out;
}

}  // namespace perm::ad
