#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
// A Graph records one forward pass; backward() pushes gradients into the
// Parameters that were read during that pass.

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace qeye::nn {

using Matrix = Eigen::MatrixXd;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool frozen = false;
  /// Excluded from decoupled weight decay (biases, norms, embeddings' scale).
  bool no_decay = false;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Owns parameters with stable addresses, in insertion order.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Matrix init, bool no_decay = false);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void zero_grad();
  std::size_t scalar_count() const;
  void set_frozen_prefix(const std::string& prefix, bool frozen);

  /// Deep copy of values (used for best-epoch snapshots).
  std::map<std::string, Matrix> snapshot() const;
  void restore(const std::map<std::string, Matrix>& values);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

class Graph;

class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, const Matrix& out_grad)>;

  Var constant(Matrix value);
  Var param(Parameter& p);

  /// Records an op. `backward` runs only if some parent needs a gradient.
  Var record(Matrix value, std::span<const Var> parents, Backward backward);
  /// Records a parentless node whose backward writes into external state.
  Var record_source(Matrix value, bool requires_grad, Backward backward);

  const Matrix& value(Var v) const { return nodes_[v.id_].value; }
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }
  /// Adds `g` into the gradient of `v` (no-op when v needs no gradient).
  void accumulate(Var v, const Matrix& g);
  template <class Expr>
  void accumulate_expr(Var v, const Expr& g) {
    auto& n = nodes_[v.id_];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = g;
    else n.grad += g;
  }
  /// Direct parameter gradient accumulation for sparse ops (embedding lookup).
  void accumulate_param_rows(Parameter& p, std::span<const int> rows, const Matrix& g);

  /// Backpropagates from a 1x1 node.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  bool training = false;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return graph_->value(*this); }

}  // namespace qeye::nn
