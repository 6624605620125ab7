#pragma once

#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "alf/common.hpp"

namespace alf {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& s);

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until touched by backward
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }
};

// Value-semantics handle onto shared storage. Copying a Tensor aliases data,
// matching how parameters flow through layers and the tape.
class Tensor {
public:
    Tensor() : impl_(std::make_shared<TensorImpl>()) {}

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, float value, bool requires_grad = false);
    static Tensor from_data(const Shape& shape, std::vector<float> data, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    const Shape& shape() const { return impl_->shape; }
    std::size_t size() const { return impl_->data.size(); }
    int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }

    std::vector<float>& data() { return impl_->data; }
    const std::vector<float>& data() const { return impl_->data; }
    float& at(std::size_t i) { return impl_->data[i]; }
    float at(std::size_t i) const { return impl_->data[i]; }
    float item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    std::vector<float>& grad() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    bool has_grad() const { return !impl_->grad.empty(); }
    void zero_grad() {
        if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
    }

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

    bool same_shape(const Tensor& o) const { return impl_->shape == o.impl_->shape; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Throws NumericError naming `what` if any element is NaN/Inf.
void check_finite(const Tensor& t, const std::string& what);

// Tape of recorded backward closures; creation order is topological order.
class Tape {
public:
    void record(std::function<void()> backward) { nodes_.push_back(std::move(backward)); }
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Runs every recorded closure in reverse creation order.
    void run_backward() {
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> nodes_;
};

Tape* active_tape();
void set_active_tape(Tape* tape);

// RAII scope making `tape` active for define-by-run recording.
class TapeScope {
public:
    explicit TapeScope(Tape& tape) : prev_(active_tape()) { set_active_tape(&tape); }
    ~TapeScope() { set_active_tape(prev_); }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// RAII scope disabling recording (inference / frozen passes).
class NoGradScope {
public:
    NoGradScope() : prev_(active_tape()) { set_active_tape(nullptr); }
    ~NoGradScope() { set_active_tape(prev_); }
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape* prev_;
};

// Seeds the scalar loss gradient with 1 and propagates through the tape.
// Every tensor in `params` gets a grad buffer (zero if untouched).
void backward(Tensor loss, Tape& tape, const std::vector<Tensor>& params = {});

}  // namespace alf
