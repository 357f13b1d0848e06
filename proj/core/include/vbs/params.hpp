#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "vbs/rng.hpp"
#include "vbs/tensor.hpp"

namespace vbs {

// Init stddev that preserves activation variance through a layer with the
// given fan-in. Used for layers outside the residual/layer-norm stream.
inline double fan_in_std(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

// Named learnable tensors. std::map keeps enumeration lexicographic, which
// the checkpoint format and determinism guarantees rely on.
class ParameterSet {
public:
    TensorPtr add(const std::string& name, const TensorPtr& t);
    TensorPtr add_trunc_normal(const std::string& name, const Shape& shape, SeededRng& rng,
                               double stddev = 0.02);
    TensorPtr add_constant(const std::string& name, const Shape& shape, double fill);

    const TensorPtr& at(const std::string& name) const;
    bool contains(const std::string& name) const { return entries_.count(name) > 0; }
    std::size_t size() const { return entries_.size(); }
    std::int64_t element_count() const;

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    void zero_grads();

private:
    std::map<std::string, TensorPtr> entries_;
};

// theta <- theta - lr * (grad + weight_decay * theta), then zero grads.
// Throws UsageError naming the first parameter with no populated gradient.
void sgd_step(ParameterSet& params, double lr, double weight_decay);

// Velocity buffers for momentum SGD, keyed by parameter name. Created lazily
// on first use; owned by the training loop so a fresh run starts from zero.
using SgdState = std::map<std::string, std::vector<double>>;

// v <- momentum * v + grad + weight_decay * theta; theta <- theta - lr * v.
// momentum = 0 reduces exactly to the plain update above.
void sgd_step(ParameterSet& params, double lr, double weight_decay, double momentum,
              SgdState& state);

}  // namespace vbs
