#include "robust_embed/parameters.hpp"

#include <cmath>
#include <stdexcept>

namespace robust_embed {

Matrix& ParameterSet::add(std::string name, Matrix value) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter: " + name);
    params_.push_back(Parameter{std::move(name), std::move(value)});
    return params_.back().value;
}

Matrix& ParameterSet::at(std::string_view name) {
    for (auto& p : params_) {
        if (p.name == name) return p.value;
    }
    throw std::out_of_range("unknown parameter: " + std::string(name));
}

const Matrix& ParameterSet::at(std::string_view name) const {
    for (const auto& p : params_) {
        if (p.name == name) return p.value;
    }
    throw std::out_of_range("unknown parameter: " + std::string(name));
}

bool ParameterSet::contains(std::string_view name) const {
    for (const auto& p : params_) {
        if (p.name == name) return true;
    }
    return false;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
}

void ParameterSet::snap_to_float32() {
    for (auto& p : params_) {
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            p.value.data()[i] = static_cast<double>(static_cast<float>(p.value.data()[i]));
        }
    }
}

std::vector<Var> ParameterSet::bind(Graph& g, bool requires_grad) const {
    std::vector<Var> vars;
    vars.reserve(params_.size());
    for (const auto& p : params_) vars.push_back(g.leaf(p.value, requires_grad));
    return vars;
}

void Adam::step(ParameterSet& params, const std::vector<Matrix>& grads) {
    if (grads.size() != params.size()) throw std::invalid_argument("Adam::step: gradient count mismatch");
    if (first_.empty()) {
        for (const auto& p : params) {
            first_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
            second_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
        }
    }
    if (first_.size() != params.size()) throw std::invalid_argument("Adam::step: parameter set changed");
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(options_.beta1, t);
    const double c2 = 1.0 - std::pow(options_.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix& grad = grads[i];
        Matrix& w = params[i].value;
        if (grad.rows() != w.rows() || grad.cols() != w.cols()) {
            throw std::invalid_argument("Adam::step: gradient shape mismatch for " + params[i].name);
        }
        first_[i] = options_.beta1 * first_[i] + (1.0 - options_.beta1) * grad;
        second_[i] = options_.beta2 * second_[i] + (1.0 - options_.beta2) * grad.cwiseAbs2();
        w.array() -= options_.learning_rate * (first_[i].array() / c1) /
                     ((second_[i].array() / c2).sqrt() + options_.epsilon);
    }
}

}  // namespace robust_embed
