#pragma once
// Dense 64-bit float tensors plus the operation tape for reverse-mode
// differentiation. Ops live in ops.hpp; they execute eagerly and append
// their gradient rule to the tape, which replays the rules in reverse.

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace ergoseg {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Contract breaches (bad shapes, invalid arguments) — caller bugs.
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Bad external inputs (files, manifests, numeric blowups).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    Shape shape;
    std::vector<double> values;  // row-major
    bool requires_grad = false;
    std::vector<double> grad;  // empty until backward touches this tensor
    std::string name;

    static TensorPtr zeros(Shape shape, bool requires_grad = false);
    static TensorPtr full(Shape shape, double value, bool requires_grad = false);
    static TensorPtr from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);

    int64_t size() const { return static_cast<int64_t>(values.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
    bool is_scalar() const { return values.size() == 1; }
    double item() const;

    void ensure_grad();
    void zero_grad() { grad.clear(); }

    double& at(int64_t i) { return values[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return values[static_cast<size_t>(i)]; }
};

// Ordered record of executed differentiable operations. Appending happens
// in execution order, which is topological by construction; backward
// replays the local rules in reverse. One tape per forward pass; distinct
// tapes share no mutable state.
class Tape {
public:
    bool recording = true;

    void record(TensorPtr output, std::vector<TensorPtr> inputs, std::function<void()> backprop);

    // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse, populating
    // .grad on every requires-grad ancestor (accumulating across fan-out).
    // Returns the leaf tensors (no producing op) that received gradients.
    // Non-scalar loss is a contract violation; a detached input simply
    // receives no gradient.
    std::vector<TensorPtr> backward(const TensorPtr& loss);

    bool produced_here(const Tensor* t) const;
    size_t size() const { return nodes_.size(); }
    void clear();

private:
    struct Node {
        TensorPtr output;
        std::vector<TensorPtr> inputs;
        std::function<void()> backprop;
    };
    std::vector<Node> nodes_;
};

}  // namespace ergoseg
