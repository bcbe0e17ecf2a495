#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hegs/ops.hpp"
#include "hegs/random.hpp"
#include "hegs/tensor.hpp"

namespace hegs::nn {

// Base class for anything holding parameters. Parameters and buffers are
// registered under stable dotted names; that ordering drives checkpoint
// layout and optimizer state, so registration order must be deterministic
// (it is: construction order). Composite modules expose their members via
// visit_children, which stays valid under copy-assignment of members.
class Module {
public:
    virtual ~Module() = default;

    std::vector<std::pair<std::string, Tensor>> named_parameters();
    std::vector<std::pair<std::string, Tensor>> named_buffers();
    std::vector<Tensor> parameters();
    int64_t parameter_count();

    void set_training(bool training);
    bool training() const { return training_; }

    void zero_grad();

protected:
    using ChildVisitor = std::function<void(const std::string&, Module&)>;
    virtual void visit_children(const ChildVisitor&) {}

    Tensor& register_parameter(const std::string& name, Tensor t);
    Tensor& register_buffer(const std::string& name, Tensor t);

private:
    void collect(const std::string& prefix, bool buffers,
                 std::vector<std::pair<std::string, Tensor>>& out);

    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::pair<std::string, Tensor>> buffers_;
    bool training_ = true;
};

// Deterministic initializers.
void kaiming_uniform_(Tensor& w, int64_t fan_in, Rng& rng);
void xavier_uniform_(Tensor& w, int64_t fan_in, int64_t fan_out, Rng& rng);
void zero_(Tensor& t);
void fill_(Tensor& t, double v);

class Linear : public Module {
public:
    Linear() = default;
    Linear(int64_t in, int64_t out, Rng& rng, bool bias = true);
    // x: (..., in) -> (..., out)
    Tensor forward(const Tensor& x) const;

    Tensor weight;  // (out, in)
    Tensor bias;    // (out) or undefined
    int64_t in = 0, out = 0;
};

class Conv2d : public Module {
public:
    Conv2d() = default;
    Conv2d(int64_t cin, int64_t cout, int k, int stride, int pad, Rng& rng, int groups = 1,
           bool bias = true);
    // rectangular kernel (kh x kw) with matching same-padding
    Conv2d(int64_t cin, int64_t cout, int kh, int kw, int stride, int pad_h, int pad_w,
           Rng& rng, int groups, bool bias);
    Tensor forward(const Tensor& x) const;

    Tensor weight;  // (cout, cin/groups, kh, kw)
    Tensor bias;
    int stride = 1, pad_h = 0, pad_w = 0, groups = 1;
};

class BatchNorm2d : public Module {
public:
    BatchNorm2d() = default;
    explicit BatchNorm2d(int64_t channels);
    Tensor forward(const Tensor& x) const;

    Tensor gamma, beta;
    mutable Tensor running_mean, running_var;
    double momentum = 0.1, eps = 1e-5;
};

class LayerNorm : public Module {
public:
    LayerNorm() = default;
    explicit LayerNorm(int64_t dim);
    Tensor forward(const Tensor& x) const;  // normalizes the last dim

    Tensor gamma, beta;
    double eps = 1e-5;
};

// conv + BN + ReLU, the workhorse block of the conv trunk
class ConvBNReLU : public Module {
public:
    ConvBNReLU() = default;
    ConvBNReLU(int64_t cin, int64_t cout, int k, int stride, Rng& rng, int groups = 1);
    Tensor forward(const Tensor& x) const;

    Conv2d conv;
    BatchNorm2d bn;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("conv", conv);
        fn("bn", bn);
    }
};

// Standard multi-head attention. Positional terms are added by the caller
// into q/k inputs; v carries content only. Optionally returns the post-
// softmax attention tensor (detached copy) for diagnostics.
class MultiheadAttention : public Module {
public:
    MultiheadAttention() = default;
    MultiheadAttention(int64_t dim, int heads, Rng& rng);

    // q,k,v: (N,T,D)/(N,S,D); mask: additive (T,S) or undefined.
    Tensor forward(const Tensor& q, const Tensor& k, const Tensor& v,
                   const Tensor& mask = Tensor(), Tensor* attn_out = nullptr) const;

    Linear wq, wk, wv, wo;
    int heads = 1;
    int64_t dim = 0;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("wq", wq);
        fn("wk", wk);
        fn("wv", wv);
        fn("wo", wo);
    }
};

// n sequential 3x3 ConvBNReLU units (train-time form; no kernel fusion).
class RepBlock : public Module {
public:
    RepBlock() = default;
    RepBlock(int64_t channels, int depth, Rng& rng);
    Tensor forward(const Tensor& x) const;

    std::vector<std::unique_ptr<ConvBNReLU>> units;

protected:
    void visit_children(const ChildVisitor& fn) override {
        for (size_t i = 0; i < units.size(); ++i) fn("unit" + std::to_string(i), *units[i]);
    }
};

} // namespace hegs::nn
