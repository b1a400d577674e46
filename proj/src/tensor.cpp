#include "ergoseg/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace ergoseg {

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

TensorPtr Tensor::zeros(Shape shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    t->values.assign(static_cast<size_t>(numel(shape)), 0.0);
    t->shape = std::move(shape);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::full(Shape shape, double value, bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    std::fill(t->values.begin(), t->values.end(), value);
    return t;
}

TensorPtr Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != static_cast<int64_t>(values.size()))
        throw ContractViolation("Tensor::from: " + shape_str(shape) + " does not hold " +
                                std::to_string(values.size()) + " values");
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->values = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

double Tensor::item() const {
    if (!is_scalar()) throw ContractViolation("Tensor::item on non-scalar " + shape_str(shape));
    return values[0];
}

void Tensor::ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

void Tape::record(TensorPtr output, std::vector<TensorPtr> inputs, std::function<void()> backprop) {
    if (!recording) return;
    nodes_.push_back(Node{std::move(output), std::move(inputs), std::move(backprop)});
}

bool Tape::produced_here(const Tensor* t) const {
    for (const auto& n : nodes_)
        if (n.output.get() == t) return true;
    return false;
}

std::vector<TensorPtr> Tape::backward(const TensorPtr& loss) {
    if (!loss || !loss->is_scalar())
        throw ContractViolation("backward: loss must be a scalar tensor");
    std::unordered_set<const Tensor*> outputs;
    outputs.reserve(nodes_.size());
    for (const auto& n : nodes_) outputs.insert(n.output.get());

    loss->ensure_grad();
    loss->grad[0] = 1.0;

    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output->grad.empty()) continue;  // nothing flowed into this op
        it->backprop();
    }

    std::vector<TensorPtr> leaves;
    std::unordered_set<const Tensor*> seen;
    for (const auto& n : nodes_) {
        for (const auto& in : n.inputs) {
            if (!in->requires_grad || in->grad.empty()) continue;
            if (outputs.count(in.get()) || seen.count(in.get())) continue;
            seen.insert(in.get());
            leaves.push_back(in);
        }
    }
    return leaves;
}

void Tape::clear() { nodes_.clear(); }

}  // namespace ergoseg
