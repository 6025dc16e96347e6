#include "ssql/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace ssql {

static std::shared_ptr<TensorImpl> new_impl(Shape shape, std::vector<float> data, bool rg) {
    check(shape_numel(shape) == data.size(), "data size does not match shape " + shape_str(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = rg;
    return impl;
}

Tensor Tensor::zeros(Shape shape, bool rg) {
    size_t n = shape_numel(shape);
    return wrap(new_impl(std::move(shape), std::vector<float>(n, 0.0f), rg));
}

Tensor Tensor::full(Shape shape, float value, bool rg) {
    size_t n = shape_numel(shape);
    return wrap(new_impl(std::move(shape), std::vector<float>(n, value), rg));
}

Tensor Tensor::ones(Shape shape, bool rg) { return full(std::move(shape), 1.0f, rg); }

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool rg) {
    return wrap(new_impl(std::move(shape), std::move(data), rg));
}

Tensor Tensor::uniform(Shape shape, float lo, float hi, Pcg32& rng, bool rg) {
    size_t n = shape_numel(shape);
    std::vector<float> d(n);
    for (auto& v : d) v = rng.uniform(lo, hi);
    return wrap(new_impl(std::move(shape), std::move(d), rg));
}

Tensor Tensor::normal(Shape shape, float mean, float stddev, Pcg32& rng, bool rg) {
    size_t n = shape_numel(shape);
    std::vector<float> d(n);
    for (auto& v : d) v = rng.normal(mean, stddev);
    return wrap(new_impl(std::move(shape), std::move(d), rg));
}

Tensor Tensor::scalar(float value, bool rg) { return from_data({1}, {value}, rg); }

int Tensor::dim(int i) const {
    check(i >= 0 && i < ndim(), "dim index out of range");
    return impl_->shape[i];
}

float Tensor::item() const {
    check(numel() == 1, "item() requires a single-element tensor, got " + shape_str(shape()));
    return impl_->data[0];
}

float Tensor::at(std::initializer_list<int> idx) const {
    check(idx.size() == impl_->shape.size(), "index rank mismatch");
    size_t off = 0;
    size_t stride = 1;
    auto it = idx.end();
    for (int d = static_cast<int>(impl_->shape.size()) - 1; d >= 0; --d) {
        --it;
        check(*it >= 0 && *it < impl_->shape[d], "index out of range");
        off += static_cast<size_t>(*it) * stride;
        stride *= static_cast<size_t>(impl_->shape[d]);
    }
    return impl_->data[off];
}

Tensor Tensor::detach() const {
    auto impl = new_impl(impl_->shape, impl_->data, false);
    return wrap(std::move(impl));
}

Tensor Tensor::clone() const {
    auto impl = new_impl(impl_->shape, impl_->data, impl_->requires_grad);
    return wrap(std::move(impl));
}

Tensor make_op_output(Shape shape, std::vector<float> data,
                      std::vector<Tensor> inputs,
                      std::function<void(TensorImpl&)> backward) {
    bool need = false;
    if (g_grad_enabled) {
        for (const auto& t : inputs)
            if (t.defined() && t.requires_grad()) need = true;
    }
    auto impl = new_impl(std::move(shape), std::move(data), need);
    if (need && backward) {
        auto node = std::make_shared<Node>();
        node->inputs = std::move(inputs);
        node->backward = std::move(backward);
        impl->node = std::move(node);
    }
    return Tensor::wrap(std::move(impl));
}

void Tensor::backward(bool retain_graph) {
    check(defined(), "backward on undefined tensor");
    check(numel() == 1, "backward requires a scalar, got " + shape_str(shape()));
    check(requires_grad(), "backward on a tensor that does not require grad");

    // Post-order DFS so each node runs after everything that consumes it.
    std::vector<TensorImpl*> topo;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    seen.insert(impl_.get());
    while (!stack.empty()) {
        auto& [cur, next_child] = stack.back();
        if (!cur->node || next_child >= cur->node->inputs.size()) {
            topo.push_back(cur);
            stack.pop_back();
            continue;
        }
        TensorImpl* child = cur->node->inputs[next_child].impl().get();
        ++next_child;
        if (child && child->requires_grad && !seen.count(child)) {
            seen.insert(child);
            stack.emplace_back(child, 0);
        }
    }

    impl_->ensure_grad();
    impl_->grad[0] += 1.0f;

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorImpl* t = *it;
        if (!t->node) continue;
        t->ensure_grad();
        t->node->backward(*t);
    }

    if (!retain_graph) {
        for (TensorImpl* t : topo) t->node.reset();
    }
}

// ---- gradcheck ----

GradcheckResult gradcheck(const std::function<Tensor(std::vector<Tensor>&)>& f,
                          std::vector<Tensor> inputs,
                          double eps, double tol) {
    GradcheckResult res;

    Tensor out = f(inputs);
    check(out.numel() == 1, "gradcheck target must be scalar");
    for (auto& t : inputs) t.zero_grad();
    out.backward();

    std::vector<std::vector<float>> analytic;
    analytic.reserve(inputs.size());
    for (auto& t : inputs) {
        if (t.requires_grad() && t.has_grad())
            analytic.emplace_back(t.grad().begin(), t.grad().end());
        else
            analytic.emplace_back(t.numel(), 0.0f);
    }

    for (size_t i = 0; i < inputs.size(); ++i) {
        if (!inputs[i].requires_grad()) continue;
        auto& data = inputs[i].impl()->data;
        for (size_t j = 0; j < data.size(); ++j) {
            float orig = data[j];
            double h = eps * std::max(1.0, std::abs(static_cast<double>(orig)));
            data[j] = static_cast<float>(orig + h);
            double fp = f(inputs).item();
            data[j] = static_cast<float>(orig - h);
            double fm = f(inputs).item();
            data[j] = orig;
            double numeric = (fp - fm) / (2.0 * h);
            double a = analytic[i][j];
            double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                std::ostringstream os;
                os << "input " << i << " elem " << j << ": analytic " << a
                   << " numeric " << numeric;
                res.worst = os.str();
            }
        }
    }
    res.pass = res.max_rel_err <= tol;
    return res;
}

}  // namespace ssql
