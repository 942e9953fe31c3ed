#include "vat/nd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace vat::nd {

namespace {
bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

size_t Tensor::numel_of(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::runtime_error("tensor shape has negative dim " + shape_str(shape));
    n *= static_cast<size_t>(d);
  }
  return n;
}

float Tensor::item() const {
  if (numel() != 1) throw std::runtime_error("item() on tensor of shape " + shape_str(shape));
  return (*data)[0];
}

void Tensor::ensure_grad() {
  if (!grad) grad = std::make_shared<std::vector<float>>(numel(), 0.0f);
}

Tensor Tensor::zeros(const std::vector<int>& shape, bool requires_grad) {
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<float>>(numel_of(shape), 0.0f);
  t.requires_grad = requires_grad && g_grad_enabled;
  if (t.requires_grad) t.ensure_grad();
  return t;
}

Tensor Tensor::full(const std::vector<int>& shape, float value, bool requires_grad) {
  Tensor t = zeros(shape, requires_grad);
  std::fill(t.data->begin(), t.data->end(), value);
  return t;
}

Tensor Tensor::from(std::vector<float> values, const std::vector<int>& shape,
                    bool requires_grad) {
  if (values.size() != numel_of(shape)) {
    throw std::runtime_error("from(): " + std::to_string(values.size()) +
                             " values for shape " + shape_str(shape));
  }
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<float>>(std::move(values));
  t.requires_grad = requires_grad && g_grad_enabled;
  if (t.requires_grad) t.ensure_grad();
  return t;
}

Tensor Tensor::randn(const std::vector<int>& shape, Rng& rng, float stddev, bool requires_grad) {
  Tensor t = zeros(shape, requires_grad);
  for (float& v : *t.data) v = rng.normal() * stddev;
  return t;
}

Tensor Tensor::uniform(const std::vector<int>& shape, Rng& rng, float lo, float hi,
                       bool requires_grad) {
  Tensor t = zeros(shape, requires_grad);
  for (float& v : *t.data) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

void check_finite(const Tensor& t, const char* what) {
  for (float v : *t.data) {
    if (!std::isfinite(v)) throw std::runtime_error(std::string(what) + ": non-finite value");
  }
}

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.node) {
    tape.order_.push_back(root);
    return tape;
  }
  // Iterative post-order DFS over nodes; parents are appended before any
  // tensor produced from them.
  std::unordered_set<Node*> visited;
  struct Frame {
    Tensor t;
    size_t next_parent = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  visited.insert(root.node.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    Node* n = f.t.node.get();
    if (f.next_parent < n->parents.size()) {
      Tensor p = n->parents[f.next_parent++];
      if (p.node && !visited.count(p.node.get())) {
        visited.insert(p.node.get());
        stack.push_back({std::move(p), 0});
      }
    } else {
      tape.order_.push_back(f.t);
      stack.pop_back();
    }
  }
  return tape;
}

void Tape::backward() {
  if (used_) throw std::runtime_error("Tape::backward() called twice");
  used_ = true;
  if (order_.empty()) return;
  Tensor& root = order_.back();
  if (!root.requires_grad) return;
  root.ensure_grad();
  std::fill(root.grad->begin(), root.grad->end(), 1.0f);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    if (it->node && it->node->backward && it->requires_grad) {
      for (Tensor& p : it->node->parents) {
        if (p.requires_grad) p.ensure_grad();
      }
      it->node->backward(*it);
    }
  }
}

void backward(const Tensor& root) { Tape::record(root).backward(); }

}  // namespace vat::nd
