// Copyright 2026 The SCCM Authors
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

// Reverse-mode automatic differentiation over dense matrices.
//
// A Var is a handle to a graph node holding a value, a lazily allocated
// gradient and the closure that propagates that gradient to its parents.
// Graphs are built dynamically by the ops in ops.h and released when the
// last Var referencing them goes away. Parameters are leaf Vars created
// with requires_grad = true; their gradients accumulate across Backward()
// calls until cleared.

#ifndef SCCM_AUTOGRAD_H_
#define SCCM_AUTOGRAD_H_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sccm/matrix.h"

namespace sccm::ag {

template <typename T>
struct Node {
  Matrix<T> value;
  Matrix<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  // Zero-initialized on first use.
  Matrix<T>& Grad() {
    if (!grad.SameShape(value)) grad.Resize(value.rows(), value.cols());
    return grad;
  }
  bool has_grad() const { return grad.SameShape(value) && !value.empty(); }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Matrix<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Matrix<T>& value() const { return node_->value; }
  Matrix<T>& mutable_value() { return node_->value; }
  Matrix<T>& grad() { return node_->Grad(); }
  bool has_grad() const { return node_->has_grad(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  int rows() const { return node_->value.rows(); }
  int cols() const { return node_->value.cols(); }
  T item() const {
    SCCM_CHECK_SHAPE(rows() == 1 && cols() == 1, "item() on non-scalar");
    return node_->value(0, 0);
  }
  void ZeroGrad() {
    if (node_->has_grad()) node_->grad.SetZero();
  }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Graph recording switch (thread-local). Inference runs under NoGradGuard so
// no closures or parent links are kept.
bool GradEnabled();
void SetGradEnabled(bool enabled);

class NoGradGuard {
 public:
  NoGradGuard() : saved_(GradEnabled()) { SetGradEnabled(false); }
  ~NoGradGuard() { SetGradEnabled(saved_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

// Creates the result node of an op. When recording is off or no parent needs
// a gradient, the closure and parent links are dropped.
template <typename T>
Var<T> MakeResult(Matrix<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
                  std::function<void(Node<T>&)> backward) {
  bool needs = false;
  if (GradEnabled()) {
    for (const auto& p : parents) needs = needs || (p && p->requires_grad);
  }
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

// Seeds d(root)/d(root) = 1 for every element of root and propagates.
template <typename T>
void Backward(const Var<T>& root);

}  // namespace sccm::ag

#endif  // SCCM_AUTOGRAD_H_
