#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vat/nd/tensor.hpp"

namespace vat::nd {

// A named trainable tensor. Frozen parameters keep requires_grad so graphs
// stay identical, but the optimizer never moves them.
struct Param {
  std::string name;
  Tensor value;
  bool frozen = false;
};

// Registry of model parameters in a stable (insertion) order; the unit of
// checkpointing and optimization.
class ParamStore {
 public:
  // Returns a copy sharing the registered tensor's buffers (Tensor copies
  // alias storage), safe to hold across later add() calls.
  Tensor add(const std::string& name, Tensor t);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  void zero_grad();
  void freeze_all(bool frozen = true);
  size_t total_elements() const;

 private:
  std::vector<Param> params_;
};

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.99f;
  float eps = 1e-8f;
};

class Adam {
 public:
  Adam(ParamStore& store, AdamConfig cfg);

  // One bias-corrected update from the accumulated gradients. Throws on a
  // non-finite gradient, naming the offending parameter.
  void step();

  int64_t steps_taken() const { return t_; }
  AdamConfig& config() { return cfg_; }

 private:
  ParamStore* store_;
  AdamConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace vat::nd
