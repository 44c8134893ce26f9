#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "robust_embed/autograd.hpp"

namespace robust_embed {

struct Parameter {
    std::string name;
    Matrix value;
};

// Ordered, named collection of trainable tensors. Order is part of the
// checkpoint contract and of optimizer state alignment.
class ParameterSet {
public:
    Matrix& add(std::string name, Matrix value);

    Matrix& at(std::string_view name);
    const Matrix& at(std::string_view name) const;
    bool contains(std::string_view name) const;

    std::size_t size() const { return params_.size(); }
    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    std::size_t scalar_count() const;

    // Rounds every entry to the nearest float32 so that an in-memory model is
    // bit-identical to its checkpointed copy.
    void snap_to_float32();

    // Graph leaves for every parameter, in order.
    std::vector<Var> bind(Graph& g, bool requires_grad) const;

private:
    std::vector<Parameter> params_;
};

struct AdamOptions {
    double learning_rate = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamOptions options = {}) : options_(options) {}

    // One update of every parameter in `params` using `grads` (same order).
    void step(ParameterSet& params, const std::vector<Matrix>& grads);

    std::size_t steps() const { return steps_; }
    const AdamOptions& options() const { return options_; }

private:
    AdamOptions options_;
    std::size_t steps_ = 0;
    std::vector<Matrix> first_;
    std::vector<Matrix> second_;
};

}  // namespace robust_embed
