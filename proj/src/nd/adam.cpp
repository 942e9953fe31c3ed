#include "vat/nd/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace vat::nd {

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (find(name)) throw std::runtime_error("ParamStore: duplicate parameter '" + name + "'");
  if (!t.defined()) throw std::runtime_error("ParamStore: undefined tensor for '" + name + "'");
  t.requires_grad = true;
  t.ensure_grad();
  params_.push_back({name, t, false});
  return t;
}

Param* ParamStore::find(const std::string& name) {
  for (Param& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Param* ParamStore::find(const std::string& name) const {
  for (const Param& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void ParamStore::zero_grad() {
  for (Param& p : params_) p.value.zero_grad();
}

void ParamStore::freeze_all(bool frozen) {
  for (Param& p : params_) p.frozen = frozen;
}

size_t ParamStore::total_elements() const {
  size_t n = 0;
  for (const Param& p : params_) n += p.value.numel();
  return n;
}

Adam::Adam(ParamStore& store, AdamConfig cfg) : store_(&store), cfg_(cfg) {
  m_.reserve(store.params().size());
  v_.reserve(store.params().size());
  for (const Param& p : store.params()) {
    m_.emplace_back(p.value.numel(), 0.0f);
    v_.emplace_back(p.value.numel(), 0.0f);
  }
}

void Adam::step() {
  auto& params = store_->params();
  if (params.size() != m_.size()) {
    throw std::runtime_error("Adam: parameter count changed after optimizer construction");
  }
  ++t_;
  const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = params[pi];
    if (p.frozen) continue;
    const std::vector<float>& g = *p.value.grad;
    std::vector<float>& data = *p.value.data;
    std::vector<float>& m = m_[pi];
    std::vector<float>& v = v_[pi];
    for (size_t i = 0; i < data.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw std::runtime_error("Adam: non-finite gradient in parameter '" + p.name + "'");
      }
      m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
      float m_hat = m[i] / bc1;
      float v_hat = v[i] / bc2;
      data[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

}  // namespace vat::nd
