#include "vbs/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace vbs {

std::int64_t shape_size(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) {
        if (e <= 0) throw ConfigError("non-positive extent in shape " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> v, bool req)
    : shape(std::move(s)), values(std::move(v)), requires_grad(req) {}

double Tensor::scalar() const {
    if (!is_scalar()) throw UsageError("expected scalar tensor, got shape " + shape_str(shape));
    return values[0];
}

std::vector<double>& Tensor::ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad;
}

void Tensor::zero_grad() {
    if (!grad.empty()) grad.assign(values.size(), 0.0);
}

TensorPtr make_tensor(const Shape& shape, double fill, bool requires_grad) {
    auto n = static_cast<std::size_t>(shape_size(shape));
    return std::make_shared<Tensor>(shape, std::vector<double>(n, fill), requires_grad);
}

TensorPtr make_tensor(const Shape& shape, std::vector<double> values, bool requires_grad) {
    if (static_cast<std::int64_t>(values.size()) != shape_size(shape))
        throw ConfigError("value count does not match shape " + shape_str(shape));
    return std::make_shared<Tensor>(shape, std::move(values), requires_grad);
}

Tape Tape::build(const TensorPtr& loss) {
    Tape tape;
    std::unordered_set<const Tensor*> seen;
    // Iterative post-order so deep graphs do not blow the stack.
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor* parent = node->parents[next++].get();
            if (seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            tape.nodes_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void backward(const TensorPtr& loss) {
    if (!loss->is_scalar()) throw UsageError("backward requires a scalar loss");
    Tape tape = Tape::build(loss);
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    const auto& nodes = tape.nodes();
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        Tensor* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

}  // namespace vbs
