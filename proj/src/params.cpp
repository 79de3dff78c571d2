#include "kefs/params.hpp"

#include <cmath>
#include <stdexcept>

namespace kefs {

Matrix& ParameterSet::create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (has(name)) {
        throw InputError("parameter '" + name + "' already exists");
    }
    entries_.emplace_back(name, Matrix::Zero(rows, cols));
    return entries_.back().second;
}

Matrix& ParameterSet::at(const std::string& name) {
    for (auto& [key, value] : entries_) {
        if (key == name) {
            return value;
        }
    }
    throw InputError("parameter '" + name + "' not found");
}

const Matrix& ParameterSet::at(const std::string& name) const {
    for (const auto& [key, value] : entries_) {
        if (key == name) {
            return value;
        }
    }
    throw InputError("parameter '" + name + "' not found");
}

bool ParameterSet::has(const std::string& name) const {
    for (const auto& [key, value] : entries_) {
        if (key == name) {
            return true;
        }
    }
    return false;
}

ad::Id BoundParams::id(const std::string& name) const {
    for (const auto& [key, value] : entries_) {
        if (key == name) {
            return value;
        }
    }
    throw InputError("bound parameter '" + name + "' not found");
}

BoundParams bind_params(ad::Tape& tape, const ParameterSet& params, bool trainable) {
    return bind_params_where(tape, params, [trainable](const std::string&) { return trainable; });
}

BoundParams bind_params_where(ad::Tape& tape, const ParameterSet& params,
                        const std::function<bool(const std::string&)>& trainable) {
    BoundParams bound;
    for (const auto& [name, value] : params.entries()) {
        bound.add(name, tape.leaf(value, trainable(name)));
    }
    return bound;
}

AdamOptimizer::Slot& AdamOptimizer::slot_for(const std::string& name, Eigen::Index rows,
                                             Eigen::Index cols) {
    for (auto& slot : slots_) {
        if (slot.name == name) {
            return slot;
        }
    }
    slots_.push_back({name, Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
    return slots_.back();
}

void AdamOptimizer::step(ParameterSet& params, const ad::Tape& tape, const BoundParams& bound) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& [name, id] : bound.entries()) {
        if (!tape.requires_grad(id)) {
            continue;
        }
        const Matrix& g = tape.grad(id);
        Matrix& w = params.at(name);
        Slot& slot = slot_for(name, w.rows(), w.cols());
        slot.m = cfg_.beta1 * slot.m + (1.0 - cfg_.beta1) * g;
        slot.v = cfg_.beta2 * slot.v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        const Matrix m_hat = slot.m / bc1;
        const Matrix v_hat = slot.v / bc2;
        w.array() -= cfg_.lr * m_hat.array() / (v_hat.array().sqrt() + cfg_.eps);
    }
}

}  // namespace kefs
