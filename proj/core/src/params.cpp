#include "vbs/params.hpp"

namespace vbs {

TensorPtr ParameterSet::add(const std::string& name, const TensorPtr& t) {
    if (entries_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    t->requires_grad = true;
    entries_[name] = t;
    return t;
}

TensorPtr ParameterSet::add_trunc_normal(const std::string& name, const Shape& shape,
                                         SeededRng& rng, double stddev) {
    auto t = make_tensor(shape, 0.0, true);
    for (auto& v : t->values) v = rng.trunc_normal(stddev);
    return add(name, t);
}

TensorPtr ParameterSet::add_constant(const std::string& name, const Shape& shape, double fill) {
    return add(name, make_tensor(shape, fill, true));
}

const TensorPtr& ParameterSet::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
}

std::int64_t ParameterSet::element_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t->size();
    return n;
}

void ParameterSet::zero_grads() {
    for (auto& [name, t] : entries_) t->zero_grad();
}

void sgd_step(ParameterSet& params, double lr, double weight_decay) {
    for (const auto& [name, t] : params) {
        if (t->grad.empty()) throw UsageError("sgd_step: gradient missing for parameter " + name);
        for (std::size_t i = 0; i < t->values.size(); ++i)
            t->values[i] -= lr * (t->grad[i] + weight_decay * t->values[i]);
        t->zero_grad();
    }
}

void sgd_step(ParameterSet& params, double lr, double weight_decay, double momentum,
              SgdState& state) {
    for (const auto& [name, t] : params) {
        if (t->grad.empty()) throw UsageError("sgd_step: gradient missing for parameter " + name);
        auto& v = state[name];
        v.resize(t->values.size(), 0.0);
        for (std::size_t i = 0; i < t->values.size(); ++i) {
            v[i] = momentum * v[i] + t->grad[i] + weight_decay * t->values[i];
            t->values[i] -= lr * v[i];
        }
        t->zero_grad();
    }
}

}  // namespace vbs
