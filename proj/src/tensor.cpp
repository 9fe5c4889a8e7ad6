// Copyright 2026 The w2vj Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "w2vj/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace w2vj {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value produced in forward pass");
  }
}

void check_shape(const Shape& shape, std::size_t n) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != n) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(n) +
                     " values");
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape, values.size());
  check_finite(values);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->ensure_grad();
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError("axis out of range for shape " + shape_str(shape()));
  return shape()[axis];
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient");
  return node().grad;
}

std::span<double> Tensor::mutable_grad() {
  node().ensure_grad();
  return node().grad;
}

void Tensor::zero_grad() {
  auto& n = node();
  if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

void Tensor::set_requires_grad(bool flag) {
  auto& n = node();
  if (!n.leaf) throw std::logic_error("requires_grad can only be toggled on leaves");
  n.requires_grad = flag;
  if (flag) n.ensure_grad();
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return node().value[0];
}

double Tensor::operator()(std::size_t r, std::size_t c) const {
  if (rank() != 2) throw ShapeError("2-D indexing on shape " + shape_str(shape()));
  return node().value.at(r * shape()[1] + c);
}

Tensor Tensor::detach() const { return from(shape(), node().value, false); }

Tensor Tensor::clone_leaf() const { return from(shape(), node().value, requires_grad()); }

detail::Node& Tensor::node() const {
  if (!node_) throw std::logic_error("use of undefined tensor");
  return *node_;
}

Tensor Tensor::make(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                    std::function<void(detail::Node&)> backward_fn) {
  check_shape(shape, value.size());
  check_finite(value);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->leaf = false;
  for (auto& p : parents) {
    node->requires_grad = node->requires_grad || p.requires_grad();
    node->parents.push_back(p.node_);
  }
  if (node->requires_grad) node->backward_fn = std::move(backward_fn);
  return Tensor(std::move(node));
}

void backward(const Tensor& root) {
  if (root.numel() != 1) throw ShapeError("backward() needs a scalar root, got " + shape_str(root.shape()));
  auto* root_node = root.node_ptr().get();
  if (!root_node->requires_grad) return;

  // Iterative post-order DFS: parents before children in `order`.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root_node, 0}};
  seen.insert(root_node);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (!node->leaf) node->grad.assign(node->value.size(), 0.0);
  }
  root_node->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (node->leaf || !node->backward_fn) continue;
    for (auto& p : node->parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    node->backward_fn(*node);
  }
}

void ParameterSet::add(const std::string& name, Tensor value) {
  if (name.empty()) throw std::invalid_argument("parameter name must be nonempty");
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  if (!value.is_leaf()) throw std::invalid_argument("parameter must be a leaf: " + name);
  value.set_requires_grad(true);
  entries_.emplace(name, std::move(value));
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

Tensor& ParameterSet::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

void ParameterSet::set_value(const std::string& name, std::span<const double> values) {
  auto& t = get(name);
  if (values.size() != t.numel()) throw ShapeError("size mismatch assigning " + name);
  std::copy(values.begin(), values.end(), t.mutable_data().begin());
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

void ParameterSet::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& [name, t] : entries_) {
    if (name.rfind(prefix, 0) == 0) {
      t.set_requires_grad(trainable);
      t.mutable_grad();
    }
  }
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (const auto& [name, t] : entries_) {
    auto copy = t.clone_leaf();
    bool trainable = t.requires_grad();
    out.entries_.emplace(name, copy);
    out.entries_.at(name).set_requires_grad(trainable);
    out.entries_.at(name).mutable_grad();
  }
  return out;
}

bool ParameterSet::bitwise_equal(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.shape() != b->second.shape()) return false;
    auto da = a->second.data();
    auto db = b->second.data();
    if (std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace w2vj
