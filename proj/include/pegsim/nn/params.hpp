#pragma once

// Named parameter store with momentum-SGD and PGT1 binary serialization.
//
// PGT1 layout (little-endian): magic "PGT1", then per tensor:
//   u32 name length, name bytes, u32 rank, u64 dims[rank], f64 payload.
// Records run until EOF.

#include <Eigen/Core>

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pegsim/binio.hpp"
#include "pegsim/nn/tensor.hpp"

namespace pegsim::nn {

class ParamStore {
 public:
  int add(const std::string& name, Tensor t) {
    if (index_.count(name))
      throw std::invalid_argument("duplicate parameter: " + name);
    index_[name] = static_cast<int>(names_.size());
    names_.push_back(name);
    values_.push_back(std::move(t));
    grads_.emplace_back(values_.back().shape());
    velocity_.emplace_back(values_.back().shape());
    return static_cast<int>(names_.size()) - 1;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Tensor& value(const std::string& name) { return values_[idx(name)]; }
  const Tensor& value(const std::string& name) const {
    return values_[idx(name)];
  }
  Tensor& grad(const std::string& name) { return grads_[idx(name)]; }

  std::size_t count() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& value_at(std::size_t i) { return values_[i]; }
  const Tensor& value_at(std::size_t i) const { return values_[i]; }
  Tensor& grad_at(std::size_t i) { return grads_[i]; }
  Tensor& velocity_at(std::size_t i) { return velocity_[i]; }

  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const auto& v : values_) n += v.numel();
    return n;
  }

  void zero_grads() {
    for (auto& g : grads_) g.fill(0.0);
  }

  void accumulate_grad(const std::string& name, const Tensor& g) {
    Tensor& dst = grads_[idx(name)];
    if (dst.shape() != g.shape())
      throw std::invalid_argument("gradient shape mismatch for " + name);
    for (std::int64_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
  }

  // v <- momentum*v + grad; p <- p - lr*v. Returns false (and leaves the
  // parameters untouched) if any gradient is non-finite.
  bool sgd_step(double lr, double momentum) {
    for (const auto& g : grads_)
      if (!g.all_finite()) return false;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      Tensor& p = values_[i];
      Tensor& v = velocity_[i];
      const Tensor& g = grads_[i];
      for (std::int64_t j = 0; j < p.numel(); ++j) {
        v[j] = momentum * v[j] + g[j];
        p[j] -= lr * v[j];
      }
    }
    return true;
  }

  void reset_velocity() {
    for (auto& v : velocity_) v.fill(0.0);
  }

  // ---- PGT1 ----

  static void save_tensors(
      const std::string& path,
      const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    binio::write_magic(out, "PGT1");
    for (const auto& [name, t] : tensors) {
      binio::write_u32(out, static_cast<std::uint32_t>(name.size()));
      binio::write_bytes(out, name.data(), name.size());
      binio::write_u32(out, static_cast<std::uint32_t>(t->rank()));
      for (int d : t->shape())
        binio::write_u64(out, static_cast<std::uint64_t>(d));
      binio::write_array(out, t->data(), static_cast<std::size_t>(t->numel()));
    }
  }

  static std::vector<std::pair<std::string, Tensor>> load_tensors(
      const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    binio::expect_magic(in, "PGT1", path);
    std::vector<std::pair<std::string, Tensor>> result;
    for (;;) {
      std::uint32_t name_len;
      if (!binio::read_le(in, name_len)) break;  // EOF terminates
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      if (!in) throw std::runtime_error("truncated name in " + path);
      const auto rank = binio::read_le_or_throw<std::uint32_t>(in, path);
      Shape shape(rank);
      for (auto& d : shape) {
        const auto v = binio::read_le_or_throw<std::uint64_t>(in, path);
        d = static_cast<int>(v);
      }
      Tensor t(shape);
      binio::read_array(in, t.data(), static_cast<std::size_t>(t.numel()),
                        path);
      result.emplace_back(std::move(name), std::move(t));
    }
    return result;
  }

  // Saves values plus (optionally) optimizer state under an "opt/" prefix.
  void save(const std::string& path, bool with_optimizer_state = false) const {
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (std::size_t i = 0; i < names_.size(); ++i)
      tensors.emplace_back(names_[i], &values_[i]);
    if (with_optimizer_state)
      for (std::size_t i = 0; i < names_.size(); ++i)
        tensors.emplace_back("opt/" + names_[i], &velocity_[i]);
    save_tensors(path, tensors);
  }

  // Loads values (and optimizer state if present) into existing entries.
  void load(const std::string& path) {
    for (auto& [name, t] : load_tensors(path)) {
      const bool is_opt = name.rfind("opt/", 0) == 0;
      const std::string key = is_opt ? name.substr(4) : name;
      if (!index_.count(key))
        throw std::runtime_error("checkpoint has unknown parameter: " + name);
      Tensor& dst = is_opt ? velocity_[idx(key)] : values_[idx(key)];
      if (dst.shape() != t.shape())
        throw std::runtime_error("checkpoint shape mismatch for " + name);
      dst = std::move(t);
    }
  }

 private:
  std::size_t idx(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::invalid_argument("unknown parameter: " + name);
    return static_cast<std::size_t>(it->second);
  }

  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::vector<Tensor> velocity_;
  std::map<std::string, int> index_;
};

}  // namespace pegsim::nn
