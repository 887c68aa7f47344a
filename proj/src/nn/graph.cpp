#include "qeye/nn/graph.hpp"

#include <stdexcept>

namespace qeye::nn {

Parameter& ParameterStore::add(const std::string& name, Matrix init, bool no_decay) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(init);
  p->no_decay = no_decay;
  p->zero_grad();
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return *params_[it->second];
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return *params_[it->second];
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterStore::set_frozen_prefix(const std::string& prefix, bool frozen) {
  for (auto& p : params_) {
    if (p->name.compare(0, prefix.size(), prefix) == 0) p->frozen = frozen;
  }
}

std::map<std::string, Matrix> ParameterStore::snapshot() const {
  std::map<std::string, Matrix> out;
  for (const auto& p : params_) out.emplace(p->name, p->value);
  return out;
}

void ParameterStore::restore(const std::map<std::string, Matrix>& values) {
  for (auto& p : params_) {
    auto it = values.find(p->name);
    if (it == values.end()) throw std::out_of_range("snapshot lacks parameter " + p->name);
    p->value = it->second;
  }
}

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = !p.frozen;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::record(Matrix value, std::span<const Var> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const auto& p : parents) {
    if (nodes_[p.id_].requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::record_source(Matrix value, bool requires_grad, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Graph::accumulate(Var v, const Matrix& g) { accumulate_expr(v, g); }

void Graph::accumulate_param_rows(Parameter& p, std::span<const int> rows, const Matrix& g) {
  if (p.frozen) return;
  for (std::size_t i = 0; i < rows.size(); ++i) p.grad.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
}

void Graph::backward(Var loss) {
  auto& out = nodes_[loss.id_];
  if (out.value.size() != 1) throw std::logic_error("backward requires a scalar loss");
  if (!out.requires_grad) return;
  out.grad = Matrix::Ones(1, 1);
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.param) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      Matrix g = std::move(n.grad);
      n.backward(*this, g);
    }
  }
}

}  // namespace qeye::nn
