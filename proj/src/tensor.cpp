#include "alf/tensor.hpp"

#include <cmath>
#include <cstdio>

namespace alf {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    Tensor t;
    t.impl_->shape = shape;
    t.impl_->data.assign(numel(shape), 0.0f);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(const Shape& shape, float value, bool requires_grad) {
    Tensor t = zeros(shape, requires_grad);
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
}

Tensor Tensor::from_data(const Shape& shape, std::vector<float> data, bool requires_grad) {
    if (numel(shape) != data.size())
        throw ShapeError("from_data: shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
    Tensor t;
    t.impl_->shape = shape;
    t.impl_->data = std::move(data);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

float Tensor::item() const {
    if (impl_->data.size() != 1)
        throw ShapeError("item() on tensor of size " + std::to_string(impl_->data.size()));
    return impl_->data[0];
}

void check_finite(const Tensor& t, const std::string& what) {
    for (float v : t.data())
        if (!std::isfinite(v)) throw NumericError("non-finite value in " + what);
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }
void set_active_tape(Tape* tape) { g_active_tape = tape; }

void backward(Tensor loss, Tape& tape, const std::vector<Tensor>& params) {
    if (loss.size() != 1) throw ShapeError("backward requires a scalar loss");
    for (const Tensor& p : params) p.impl()->ensure_grad();
    loss.impl()->ensure_grad();
    loss.grad()[0] = 1.0f;
    tape.run_backward();
}

}  // namespace alf
