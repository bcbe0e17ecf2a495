#include "hegs/tensor.hpp"

#include <atomic>
#include <cmath>
#include <unordered_set>

namespace hegs {

namespace {
std::atomic<uint64_t> g_seq{1};
bool g_finite_checks = true;
} // namespace

TensorImpl::TensorImpl(Shape s, std::vector<double> vals) : shape(std::move(s)), v(std::move(vals)) {
    HEGS_CHECK(static_cast<int64_t>(v.size()) == shape_numel(shape),
               "value count " << v.size() << " does not match shape " << shape_str(shape));
    seq = g_seq.fetch_add(1, std::memory_order_relaxed);
}

Tensor Tensor::zeros(Shape shape) {
    auto n = shape_numel(shape);
    return Tensor(std::make_shared<TensorImpl>(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double value) {
    auto n = shape_numel(shape);
    return Tensor(std::make_shared<TensorImpl>(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    return Tensor(std::make_shared<TensorImpl>(std::move(shape), std::move(values)));
}

const Shape& Tensor::shape() const {
    HEGS_CHECK(impl_, "shape() on undefined tensor");
    return impl_->shape;
}

int64_t Tensor::dim(int i) const {
    const Shape& s = shape();
    if (i < 0) i += static_cast<int>(s.size());
    HEGS_CHECK(i >= 0 && i < static_cast<int>(s.size()), "dim index " << i << " out of range");
    return s[i];
}

int64_t Tensor::numel() const { return impl_ ? impl_->numel() : 0; }

double* Tensor::data() { return impl_->v.data(); }
const double* Tensor::data() const { return impl_->v.data(); }
std::vector<double>& Tensor::values() { return impl_->v; }
const std::vector<double>& Tensor::values() const { return impl_->v; }

double Tensor::item() const {
    HEGS_CHECK(numel() == 1, "item() requires a scalar, got " << shape_str(shape()));
    return impl_->v[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
    HEGS_CHECK(impl_, "set_requires_grad on undefined tensor");
    impl_->requires_grad = v;
    return *this;
}

Tensor Tensor::grad() const {
    HEGS_CHECK(impl_, "grad() on undefined tensor");
    if (impl_->g.size() != impl_->v.size()) return Tensor::zeros(impl_->shape);
    return Tensor::from(impl_->shape, impl_->g);
}

double* Tensor::grad_data() {
    impl_->ensure_grad();
    return impl_->g.data();
}

void Tensor::zero_grad() {
    if (impl_ && !impl_->g.empty()) std::fill(impl_->g.begin(), impl_->g.end(), 0.0);
}

void Tensor::backward() {
    HEGS_CHECK(impl_, "backward() on undefined tensor");
    HEGS_CHECK(numel() == 1, "backward() must start from a scalar");

    // Collect the reachable subgraph, then replay in descending creation
    // order (a valid topological order: parents are created before children).
    std::vector<TensorImpl*> nodes;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::shared_ptr<TensorImpl>> stack{impl_};
    seen.insert(impl_.get());
    std::vector<std::shared_ptr<TensorImpl>> keep_alive;
    while (!stack.empty()) {
        auto cur = stack.back();
        stack.pop_back();
        keep_alive.push_back(cur);
        nodes.push_back(cur.get());
        for (auto& p : cur->parents) {
            if (seen.insert(p.get()).second) stack.push_back(p);
        }
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const TensorImpl* a, const TensorImpl* b) { return a->seq > b->seq; });

    impl_->ensure_grad();
    impl_->g[0] += 1.0;
    for (TensorImpl* n : nodes) {
        if (n->backward_fn && !n->g.empty()) n->backward_fn(*n);
    }
    // Release the tape; leaves keep their accumulated gradients.
    for (TensorImpl* n : nodes) {
        n->backward_fn = nullptr;
        n->parents.clear();
    }
}

Tensor Tensor::detach() const {
    if (!impl_) return Tensor();
    auto copy = std::make_shared<TensorImpl>(impl_->shape, impl_->v);
    return Tensor(std::move(copy));
}

Tensor Tensor::clone() const { return detach(); }

namespace detail {

void make_node(Tensor& out, std::initializer_list<Tensor> parents,
               std::function<void(TensorImpl&)> backward_fn) {
    make_node(out, std::vector<Tensor>(parents), std::move(backward_fn));
}

void make_node(Tensor& out, const std::vector<Tensor>& parents,
               std::function<void(TensorImpl&)> backward_fn) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (!any) return;
    auto impl = out.impl();
    impl->requires_grad = true;
    impl->parents.reserve(parents.size());
    for (const auto& p : parents) impl->parents.push_back(p.impl());
    impl->backward_fn = std::move(backward_fn);
}

} // namespace detail

bool has_nonfinite(const Tensor& t) {
    for (double x : t.values())
        if (!std::isfinite(x)) return true;
    return false;
}

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

void check_finite(const Tensor& t, const char* where) {
    if (!g_finite_checks) return;
    HEGS_CHECK(!has_nonfinite(t), "non-finite values produced by " << where);
}

} // namespace hegs
