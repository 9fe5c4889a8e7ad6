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

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace w2vj {

using Shape = std::vector<std::size_t>;

/// Raised when an operation produces NaN/Inf or a shape contract is broken.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

/// Handle to a node of the differentiable graph. Copies share the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node().value.size(); }

  std::span<const double> data() const { return node().value; }
  /// Mutable access for optimizers and initializers; never use on graph interior nodes.
  std::span<double> mutable_data() { return node().value; }
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  bool has_grad() const { return !node().grad.empty(); }
  void zero_grad();

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool flag);
  bool is_leaf() const { return node().leaf; }

  double item() const;
  double operator()(std::size_t i) const { return node().value.at(i); }
  double operator()(std::size_t r, std::size_t c) const;

  /// New leaf with a copy of the values and no history.
  Tensor detach() const;
  /// Deep copy including requires_grad; gradient slot is not copied.
  Tensor clone_leaf() const;

  detail::Node& node() const;
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  static Tensor make(Shape shape, std::vector<double> value,
                     std::vector<Tensor> parents,
                     std::function<void(detail::Node&)> backward_fn);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Populates grads of every requires_grad leaf reachable from the scalar root.
/// Leaf grads accumulate across calls; call zero_grad() to clear.
void backward(const Tensor& root);

/// Named parameters, iterated in lexicographic order.
class ParameterSet {
 public:
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  void set_value(const std::string& name, std::span<const double> values);

  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;
  const Map& entries() const { return entries_; }
  Map& entries() { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  /// Toggles requires_grad for every entry whose name starts with prefix.
  void set_trainable(const std::string& prefix, bool trainable);

  /// Deep copy of values (fresh leaves).
  ParameterSet clone() const;
  bool bitwise_equal(const ParameterSet& other) const;

 private:
  Map entries_;
};

}  // namespace w2vj
