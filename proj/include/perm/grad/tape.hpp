// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "perm/grad/tensor.hpp"

namespace perm::ad {

enum class OpKind : std::uint8_t {
  leaf,
  matmul,
  add,
  sub,
  mul,
  scalar_mul,
  tanh,
  softplus,
  exp,
  log,
  square,
  sum,
  mean,
  concat,
  slice,
  broadcast_add_row,
};

std::string_view op_name(OpKind kind);

// Handle to a node on a Tape. Only meaningful for the tape that made it.
struct Var {
  std::uint32_t id = 0;
};

// Extra operands for ops that take non-tensor arguments.
struct OpArgs {
  double scalar = 0.0;       // scalar_mul
  std::size_t begin = 0;     // slice, trailing dimension
  std::size_t end = 0;
};

struct TapeNode {
  OpKind kind = OpKind::leaf;
  std::vector<std::uint32_t> inputs;
  Tensor value;
  OpArgs args;
  bool parameter = false;
};

class Gradients;

// Reverse-mode tape. Nodes are appended in evaluation order, so every
// node's inputs precede it and the graph is acyclic by construction.
//
// A tape is single-threaded; independent tapes may run concurrently.
class Tape {
 public:
  Var parameter(Tensor value);
  Var constant(Tensor value);

  // Generic entry point; the named helpers below forward here.
  Var apply(OpKind kind, std::span<const Var> inputs, OpArgs args = {});

  Var matmul(Var a, Var b) { return apply2(OpKind::matmul, a, b); }
  Var add(Var a, Var b) { return apply2(OpKind::add, a, b); }
  Var sub(Var a, Var b) { return apply2(OpKind::sub, a, b); }
  Var mul(Var a, Var b) { return apply2(OpKind::mul, a, b); }
  Var scalar_mul(Var a, double c) { return apply1(OpKind::scalar_mul, a, {.scalar = c}); }
  Var tanh(Var a) { return apply1(OpKind::tanh, a); }
  Var softplus(Var a) { return apply1(OpKind::softplus, a); }
  Var exp(Var a) { return apply1(OpKind::exp, a); }
  Var log(Var a) { return apply1(OpKind::log, a); }
  Var square(Var a) { return apply1(OpKind::square, a); }
  Var sum(Var a) { return apply1(OpKind::sum, a); }
  Var mean(Var a) { return apply1(OpKind::mean, a); }
  Var concat(std::span<const Var> parts) { return apply(OpKind::concat, parts); }
  Var concat(std::initializer_list<Var> parts) {
    return apply(OpKind::concat, std::span<const Var>(parts.begin(), parts.size()));
  }
  Var slice(Var a, std::size_t begin, std::size_t end) {
    return apply1(OpKind::slice, a, {.begin = begin, .end = end});
  }
  Var broadcast_add_row(Var matrix, Var row) {
    return apply2(OpKind::broadcast_add_row, matrix, row);
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const TapeNode& node(Var v) const { return nodes_.at(v.id); }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of a single-element root with respect to every node.
  Gradients backward(Var root) const;

 private:
  Var apply1(OpKind kind, Var a, OpArgs args = {}) {
    const Var in[1] = {a};
    return apply(kind, in, args);
  }
  Var apply2(OpKind kind, Var a, Var b) {
    const Var in[2] = {a, b};
    return apply(kind, in);
  }
  Var push(TapeNode node);

  std::vector<TapeNode> nodes_;
};

class Gradients {
 public:
  // Zero tensor for nodes the root does not depend on.
  const Tensor& operator[](Var v) const { return grads_.at(v.id); }
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::vector<Tensor> grads_;
};

}  // namespace perm::ad
