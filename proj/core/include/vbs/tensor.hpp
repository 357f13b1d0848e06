#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace vbs {

// Error categories the CLI maps to exit codes.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::int64_t>;

std::int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major 64-bit float tensor. When an op is applied to inputs that
// require gradients, the output node keeps its parents and a closure that
// pushes the output gradient back into them.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until backward touches this node

    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backward_fn;
    const char* op_name = "leaf";

    Tensor(Shape s, std::vector<double> v, bool req);

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
    bool is_scalar() const { return values.size() == 1; }
    double scalar() const;

    // Lazily allocates a zero gradient buffer of matching shape.
    std::vector<double>& ensure_grad();
    void zero_grad();
};

TensorPtr make_tensor(const Shape& shape, double fill = 0.0, bool requires_grad = false);
TensorPtr make_tensor(const Shape& shape, std::vector<double> values, bool requires_grad = false);

// Reverse pass bookkeeping: nodes reachable from the loss in topological
// order (inputs before consumers). Reverse replay visits each node once.
class Tape {
public:
    static Tape build(const TensorPtr& loss);
    const std::vector<Tensor*>& nodes() const { return nodes_; }

private:
    std::vector<Tensor*> nodes_;
};

// Populates grad on every requires_grad tensor contributing to the scalar
// loss; fan-out accumulates additively.
void backward(const TensorPtr& loss);

}  // namespace vbs
