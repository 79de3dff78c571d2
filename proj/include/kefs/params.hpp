#pragma once

// Named parameter tensors with stable insertion order, tape binding, and an
// adaptive-moment optimizer. Insertion order is the canonical iteration order
// everywhere (updates, serialization) so runs are reproducible.

#include "kefs/autodiff.hpp"
#include "kefs/common.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace kefs {

class ParameterSet {
  public:
    Matrix& create(const std::string& name, Eigen::Index rows, Eigen::Index cols);
    Matrix& at(const std::string& name);
    const Matrix& at(const std::string& name) const;
    bool has(const std::string& name) const;
    std::size_t count() const { return entries_.size(); }

    std::vector<std::pair<std::string, Matrix>>& entries() { return entries_; }
    const std::vector<std::pair<std::string, Matrix>>& entries() const { return entries_; }

  private:
    std::vector<std::pair<std::string, Matrix>> entries_;
};

// Tape handles for a ParameterSet bound onto one forward pass.
class BoundParams {
  public:
    ad::Id id(const std::string& name) const;
    const std::vector<std::pair<std::string, ad::Id>>& entries() const { return entries_; }
    void add(const std::string& name, ad::Id id) { entries_.emplace_back(name, id); }

  private:
    std::vector<std::pair<std::string, ad::Id>> entries_;
};

BoundParams bind_params(ad::Tape& tape, const ParameterSet& params, bool trainable = true);
BoundParams bind_params_where(ad::Tape& tape, const ParameterSet& params,
                              const std::function<bool(const std::string&)>& trainable);

class AdamOptimizer {
  public:
    struct Config {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    explicit AdamOptimizer(Config cfg) : cfg_(cfg) {}

    // Applies one update using gradients accumulated on the tape. Parameters
    // whose bound node was frozen (requires_grad false) are left untouched.
    void step(ParameterSet& params, const ad::Tape& tape, const BoundParams& bound);

  private:
    struct Slot {
        std::string name;
        Matrix m;
        Matrix v;
    };

    Slot& slot_for(const std::string& name, Eigen::Index rows, Eigen::Index cols);

    Config cfg_;
    std::int64_t t_ = 0;
    std::vector<Slot> slots_;
};

}  // namespace kefs
