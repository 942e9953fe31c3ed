#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vat/nd/rng.hpp"

namespace vat::nd {

struct Tensor;

// One recorded operation: the tensors it consumed and how to push the
// output's gradient back into them.
struct Node {
  std::vector<Tensor> parents;
  std::function<void(Tensor&)> backward;
  const char* op = "";
};

// Dense float32 tensor. Copies share storage; data is written once by the
// op that produces it and treated as read-only afterwards.
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<float>> data;
  std::shared_ptr<std::vector<float>> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // op that produced this tensor, if any

  Tensor() = default;

  size_t numel() const { return data ? data->size() : 0; }
  bool defined() const { return static_cast<bool>(data); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  float& at(size_t i) { return (*data)[i]; }
  float at(size_t i) const { return (*data)[i]; }
  // scalar convenience for [1]-shaped results
  float item() const;

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), 0.0f);
  }
  void ensure_grad();

  static size_t numel_of(const std::vector<int>& shape);
  static Tensor zeros(const std::vector<int>& shape, bool requires_grad = false);
  static Tensor full(const std::vector<int>& shape, float value, bool requires_grad = false);
  static Tensor from(std::vector<float> values, const std::vector<int>& shape,
                     bool requires_grad = false);
  static Tensor randn(const std::vector<int>& shape, Rng& rng, float stddev = 1.0f,
                      bool requires_grad = false);
  static Tensor uniform(const std::vector<int>& shape, Rng& rng, float lo, float hi,
                        bool requires_grad = false);
};

// Global autograd switch; stochastic/inference passes wrap themselves in
// NoGradGuard so no tape is recorded.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Linearized view of the graph below a root: ops in topological order
// (inputs precede consumers). Rebuilt per step; backward() sweeps it in
// reverse and visits each node exactly once.
class Tape {
 public:
  static Tape record(const Tensor& root);

  // Seeds root.grad with ones and propagates. May be called once.
  void backward();

  size_t size() const { return order_.size(); }
  const std::vector<Tensor>& order() const { return order_; }

 private:
  std::vector<Tensor> order_;  // forward topological order; back() is the root
  bool used_ = false;
};

// record + backward in one call
void backward(const Tensor& root);

std::string shape_str(const std::vector<int>& shape);
void check_finite(const Tensor& t, const char* what);

}  // namespace vat::nd
