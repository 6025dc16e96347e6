#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssql/rng.hpp"

namespace ssql {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

using Shape = std::vector<int>;

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (int d : s) {
        check(d >= 0, "negative dimension");
        n *= static_cast<size_t>(d);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

class Tensor;

// One reverse-mode step: reads out.grad, accumulates into inputs' grads.
struct Node {
    std::vector<Tensor> inputs;
    std::function<void(struct TensorImpl&)> backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::shared_ptr<Node> node;  // null for leaves

    size_t numel() const { return data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }
};

// Graph recording switch. Off: ops produce constant results and keep no
// tape, which is what inference paths want.
inline thread_local bool g_grad_enabled = true;

inline bool grad_enabled() { return g_grad_enabled; }

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
    ~NoGradGuard() { g_grad_enabled = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Value-semantic handle onto a shared buffer. Copies alias; the tape keeps
// inputs alive through Node::inputs.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor ones(Shape shape, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
    static Tensor uniform(Shape shape, float lo, float hi, Pcg32& rng, bool requires_grad = false);
    static Tensor normal(Shape shape, float mean, float stddev, Pcg32& rng, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int dim(int i) const;
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    size_t numel() const { return impl_->data.size(); }

    std::span<const float> data() const { return impl_->data; }
    std::span<float> data_mut() { return impl_->data; }
    std::span<const float> grad() const { return impl_->grad; }
    bool has_grad() const { return !impl_->grad.empty(); }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

    float item() const;
    float at(std::initializer_list<int> idx) const;

    void zero_grad() {
        if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
    }

    // Reverse pass from a scalar. Accumulates into existing grads; the tape
    // is released afterwards unless retain_graph.
    void backward(bool retain_graph = false);

    Tensor detach() const;
    Tensor clone() const;

    std::shared_ptr<TensorImpl>& impl() { return impl_; }
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

    static Tensor wrap(std::shared_ptr<TensorImpl> impl) {
        Tensor t;
        t.impl_ = std::move(impl);
        return t;
    }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Allocates the output impl and attaches a node when recording is on and any
// input needs grad. `backward` may be empty for detach-like ops.
Tensor make_op_output(Shape shape, std::vector<float> data,
                      std::vector<Tensor> inputs,
                      std::function<void(TensorImpl&)> backward);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, float s);
Tensor mul_scalar(const Tensor& a, float s);
Tensor relu(const Tensor& a);

// ---- matrix ----
Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k]^T -> [m,n]
// y = x W^T + b with W stored [out,in]; b may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- shape ----
Tensor reshape(const Tensor& a, Shape new_shape);
Tensor flatten(const Tensor& a);  // [N,...] -> [N,rest]
Tensor concat_rows(const Tensor& a, const Tensor& b);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// ---- rows of [N,d] ----
Tensor l2_normalize(const Tensor& a, float eps = 1e-12f);
Tensor row_dot(const Tensor& a, const Tensor& b);  // -> [N]

// ---- conv / pooling, NCHW ----
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              int stride = 1, int padding = 0);
Tensor avgpool2d(const Tensor& x, int kernel = 2, int stride = 2);
Tensor global_avgpool(const Tensor& x);  // [N,C,H,W] -> [N,C]

// ---- normalization ----
// 2D [N,F] or 4D [N,C,H,W]; per-channel affine. In train mode batch stats
// normalize and, when update_stats, fold into the running buffers (which are
// plain storage, never graph inputs). Eval mode normalizes by the buffers.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 Tensor running_mean, Tensor running_var,
                 bool train, bool update_stats,
                 float momentum = 0.1f, float eps = 1e-5f);

// ---- classification ----
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

Tensor stop_gradient(const Tensor& a);

// ---- raw kernels (deterministic; accumulate into C) ----
void sgemm_nn(int m, int n, int k, const float* a, const float* b, float* c);
void sgemm_nt(int m, int n, int k, const float* a, const float* b, float* c);
void sgemm_tn(int m, int n, int k, const float* a, const float* b, float* c);

// ---- finite-difference oracle ----
struct GradcheckResult {
    double max_rel_err = 0.0;
    bool pass = true;
    std::string worst;  // "input i elem j: analytic vs numeric"
};

// Central differences against the analytic reverse pass. f must be a pure
// function of `inputs`; every requires_grad input is checked element-wise.
GradcheckResult gradcheck(const std::function<Tensor(std::vector<Tensor>&)>& f,
                          std::vector<Tensor> inputs,
                          double eps = 3e-3, double tol = 1e-3);

}  // namespace ssql
