#include "hegs/nn.hpp"

#include <cmath>

namespace hegs::nn {

using namespace hegs::ops;

std::vector<std::pair<std::string, Tensor>> Module::named_parameters() {
    std::vector<std::pair<std::string, Tensor>> out;
    collect("", false, out);
    return out;
}

std::vector<std::pair<std::string, Tensor>> Module::named_buffers() {
    std::vector<std::pair<std::string, Tensor>> out;
    collect("", true, out);
    return out;
}

std::vector<Tensor> Module::parameters() {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

int64_t Module::parameter_count() {
    int64_t n = 0;
    for (const auto& t : parameters()) n += t.numel();
    return n;
}

void Module::set_training(bool training) {
    training_ = training;
    visit_children([training](const std::string&, Module& m) { m.set_training(training); });
}

void Module::zero_grad() {
    for (auto& t : parameters()) t.zero_grad();
}

Tensor& Module::register_parameter(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    params_.emplace_back(name, std::move(t));
    return params_.back().second;
}

Tensor& Module::register_buffer(const std::string& name, Tensor t) {
    buffers_.emplace_back(name, std::move(t));
    return buffers_.back().second;
}

void Module::collect(const std::string& prefix, bool buffers,
                     std::vector<std::pair<std::string, Tensor>>& out) {
    const auto& own = buffers ? buffers_ : params_;
    for (const auto& [name, t] : own) out.emplace_back(prefix + name, t);
    visit_children([&](const std::string& name, Module& child) {
        child.collect(prefix + name + ".", buffers, out);
    });
}

void kaiming_uniform_(Tensor& w, int64_t fan_in, Rng& rng) {
    const double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0;
    for (auto& v : w.values()) v = rng.uniform(-bound, bound);
}

void xavier_uniform_(Tensor& w, int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : w.values()) v = rng.uniform(-bound, bound);
}

void zero_(Tensor& t) {
    for (auto& v : t.values()) v = 0.0;
}

void fill_(Tensor& t, double v) {
    for (auto& x : t.values()) x = v;
}

Linear::Linear(int64_t in_, int64_t out_, Rng& rng, bool with_bias) : in(in_), out(out_) {
    weight = register_parameter("weight", Tensor::zeros({out, in}));
    kaiming_uniform_(weight, in, rng);
    if (with_bias) {
        bias = register_parameter("bias", Tensor::zeros({out}));
        kaiming_uniform_(bias, in, rng);
    }
}

Tensor Linear::forward(const Tensor& x) const {
    Shape xs = x.shape();
    HEGS_CHECK(xs.back() == in, "Linear input dim " << xs.back() << " != " << in);
    Tensor flat = reshape(x, {-1, in});
    Tensor wt = permute(weight, {1, 0});
    Tensor y = matmul(flat, wt);
    if (bias.defined()) y = add(y, bias);
    xs.back() = out;
    return reshape(y, xs);
}

Conv2d::Conv2d(int64_t cin, int64_t cout, int k, int stride_, int pad_, Rng& rng, int groups_,
               bool with_bias)
    : Conv2d(cin, cout, k, k, stride_, pad_, pad_, rng, groups_, with_bias) {}

Conv2d::Conv2d(int64_t cin, int64_t cout, int kh, int kw, int stride_, int pad_h_, int pad_w_,
               Rng& rng, int groups_, bool with_bias)
    : stride(stride_), pad_h(pad_h_), pad_w(pad_w_), groups(groups_) {
    weight = register_parameter("weight", Tensor::zeros({cout, cin / groups, kh, kw}));
    const int64_t fan_in = (cin / groups) * kh * kw;
    kaiming_uniform_(weight, fan_in, rng);
    if (with_bias) {
        bias = register_parameter("bias", Tensor::zeros({cout}));
        kaiming_uniform_(bias, fan_in, rng);
    }
}

Tensor Conv2d::forward(const Tensor& x) const {
    return conv2d_rect(x, weight, bias, stride, pad_h, pad_w, groups);
}

BatchNorm2d::BatchNorm2d(int64_t channels) {
    gamma = register_parameter("gamma", Tensor::full({channels}, 1.0));
    beta = register_parameter("beta", Tensor::zeros({channels}));
    running_mean = register_buffer("running_mean", Tensor::zeros({channels}));
    running_var = register_buffer("running_var", Tensor::full({channels}, 1.0));
}

Tensor BatchNorm2d::forward(const Tensor& x) const {
    return batch_norm_nchw(x, gamma, beta, running_mean, running_var, training(), momentum,
                           eps);
}

LayerNorm::LayerNorm(int64_t dim) {
    gamma = register_parameter("gamma", Tensor::full({dim}, 1.0));
    beta = register_parameter("beta", Tensor::zeros({dim}));
}

Tensor LayerNorm::forward(const Tensor& x) const {
    return layer_norm_lastdim(x, gamma, beta, eps);
}

ConvBNReLU::ConvBNReLU(int64_t cin, int64_t cout, int k, int stride, Rng& rng, int groups) {
    conv = Conv2d(cin, cout, k, stride, k / 2, rng, groups, /*bias=*/false);
    bn = BatchNorm2d(cout);
}

Tensor ConvBNReLU::forward(const Tensor& x) const { return relu(bn.forward(conv.forward(x))); }

MultiheadAttention::MultiheadAttention(int64_t dim_, int heads_, Rng& rng)
    : heads(heads_), dim(dim_) {
    HEGS_CHECK(dim % heads == 0, "attention dim " << dim << " not divisible by " << heads);
    wq = Linear(dim, dim, rng);
    wk = Linear(dim, dim, rng);
    wv = Linear(dim, dim, rng);
    wo = Linear(dim, dim, rng);
}

Tensor MultiheadAttention::forward(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                                   const Tensor& mask, Tensor* attn_out) const {
    const int64_t N = q_in.dim(0), T = q_in.dim(1), S = k_in.dim(1);
    const int64_t dh = dim / heads;

    auto split_heads = [&](const Tensor& t, int64_t L) {
        // (N,L,D) -> (N*heads, L, dh)
        Tensor r = reshape(t, {N, L, heads, dh});
        r = permute(r, {0, 2, 1, 3});
        return reshape(r, {N * heads, L, dh});
    };

    Tensor Q = split_heads(wq.forward(q_in), T);
    Tensor K = split_heads(wk.forward(k_in), S);
    Tensor V = split_heads(wv.forward(v_in), S);

    Tensor scores = matmul(Q, permute(K, {0, 2, 1}));
    scores = mul_scalar(scores, 1.0 / std::sqrt(static_cast<double>(dh)));
    if (mask.defined()) scores = add(scores, mask);
    Tensor attn = softmax_lastdim(scores);
    if (attn_out) *attn_out = reshape(attn, {N, heads, T, S}).detach();

    Tensor ctx = matmul(attn, V);  // (N*heads, T, dh)
    ctx = reshape(ctx, {N, heads, T, dh});
    ctx = permute(ctx, {0, 2, 1, 3});
    ctx = reshape(ctx, {N, T, dim});
    return wo.forward(ctx);
}

RepBlock::RepBlock(int64_t channels, int depth, Rng& rng) {
    for (int i = 0; i < depth; ++i)
        units.push_back(std::make_unique<ConvBNReLU>(channels, channels, 3, 1, rng));
}

Tensor RepBlock::forward(const Tensor& x) const {
    Tensor y = x;
    for (const auto& u : units) y = u->forward(y);
    return y;
}

} // namespace hegs::nn
