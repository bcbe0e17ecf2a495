#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "hegs/common.hpp"

namespace hegs {

struct TensorImpl;

// Dense double-precision tensor with reverse-mode autodiff.
//
// Every operation that consumes tensors with requires_grad builds a node of a
// dynamic tape; Tensor::backward() walks the tape in reverse creation order
// and accumulates gradients into the leaves. Graphs are rebuilt per step and
// released after backward. Tensor itself is a cheap shared handle; value
// buffers are never mutated once produced by an op (optimizers mutate leaf
// parameters between graph builds only).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double value) { return from({1}, {value}); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int ndim() const { return static_cast<int>(shape().size()); }
    int64_t dim(int i) const;
    int64_t numel() const;

    double* data();
    const double* data() const;
    std::vector<double>& values();
    const std::vector<double>& values() const;
    double item() const;  // scalar tensors only

    bool requires_grad() const;
    Tensor& set_requires_grad(bool v);

    // Gradient accumulated by the last backward(); zeros if none.
    Tensor grad() const;
    double* grad_data();
    void zero_grad();

    // Runs reverse-mode accumulation from this scalar. The tape reachable
    // from this tensor is released afterwards.
    void backward();

    Tensor detach() const;  // shares values, drops tape edges and grad flag
    Tensor clone() const;   // deep copy of values, no tape edges

    // Test/internal accessors.
    std::shared_ptr<TensorImpl> impl() const { return impl_; }
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> v;  // values, row-major
    std::vector<double> g;  // gradient accumulator, lazily sized
    bool requires_grad = false;
    uint64_t seq = 0;  // creation order; parents always have smaller seq

    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;

    TensorImpl(Shape s, std::vector<double> vals);
    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    void ensure_grad() {
        if (g.size() != v.size()) g.assign(v.size(), 0.0);
    }
};

namespace detail {

// Registers `out` as produced from `parents`; backward_fn receives the output
// impl and must scatter out.g into each parent's g (after ensure_grad).
// Recording is skipped entirely when no parent requires grad.
void make_node(Tensor& out, std::initializer_list<Tensor> parents,
               std::function<void(TensorImpl&)> backward_fn);
void make_node(Tensor& out, const std::vector<Tensor>& parents,
               std::function<void(TensorImpl&)> backward_fn);

} // namespace detail

// True if any value is NaN or Inf.
bool has_nonfinite(const Tensor& t);

// Module-level toggle: forward passes of the network blocks assert finiteness
// of their outputs when enabled (default on; costs one scan per op).
void set_finite_checks(bool enabled);
bool finite_checks_enabled();
void check_finite(const Tensor& t, const char* where);

} // namespace hegs
