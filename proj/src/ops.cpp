#include <algorithm>
#include <cmath>
#include <cstring>

#include "ssql/tensor.hpp"

namespace ssql {

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

static void accumulate(TensorImpl& dst, const float* src, size_t n) {
    dst.ensure_grad();
    float* g = dst.grad.data();
    for (size_t i = 0; i < n; ++i) g[i] += src[i];
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    size_t n = a.numel();
    std::vector<float> out(n);
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
    return make_op_output(a.shape(), std::move(out), {a, b}, [n](TensorImpl& o) {
        auto& ia = *o.node->inputs[0].impl();
        auto& ib = *o.node->inputs[1].impl();
        if (ia.requires_grad) accumulate(ia, o.grad.data(), n);
        if (ib.requires_grad) accumulate(ib, o.grad.data(), n);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    size_t n = a.numel();
    std::vector<float> out(n);
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] - pb[i];
    return make_op_output(a.shape(), std::move(out), {a, b}, [n](TensorImpl& o) {
        auto& ia = *o.node->inputs[0].impl();
        auto& ib = *o.node->inputs[1].impl();
        if (ia.requires_grad) accumulate(ia, o.grad.data(), n);
        if (ib.requires_grad) {
            ib.ensure_grad();
            for (size_t i = 0; i < n; ++i) ib.grad[i] -= o.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    size_t n = a.numel();
    std::vector<float> out(n);
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
    return make_op_output(a.shape(), std::move(out), {a, b}, [n](TensorImpl& o) {
        auto& ia = *o.node->inputs[0].impl();
        auto& ib = *o.node->inputs[1].impl();
        if (ia.requires_grad) {
            ia.ensure_grad();
            for (size_t i = 0; i < n; ++i) ia.grad[i] += o.grad[i] * ib.data[i];
        }
        if (ib.requires_grad) {
            ib.ensure_grad();
            for (size_t i = 0; i < n; ++i) ib.grad[i] += o.grad[i] * ia.data[i];
        }
    });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0f); }

Tensor add_scalar(const Tensor& a, float s) {
    size_t n = a.numel();
    std::vector<float> out(n);
    const float* pa = a.data().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] + s;
    return make_op_output(a.shape(), std::move(out), {a}, [n](TensorImpl& o) {
        auto& ia = *o.node->inputs[0].impl();
        if (ia.requires_grad) accumulate(ia, o.grad.data(), n);
    });
}

Tensor mul_scalar(const Tensor& a, float s) {
    size_t n = a.numel();
    std::vector<float> out(n);
    const float* pa = a.data().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] * s;
    return make_op_output(a.shape(), std::move(out), {a}, [n, s](TensorImpl& o) {
        auto& ia = *o.node->inputs[0].impl();
        if (ia.requires_grad) {
            ia.ensure_grad();
            for (size_t i = 0; i < n; ++i) ia.grad[i] += o.grad[i] * s;
        }
    });
}

Tensor relu(const Tensor& a) {
    size_t n = a.numel();
    std::vector<float> out(n);
    const float* pa = a.data().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] > 0.0f ? pa[i] : 0.0f;
    return make_op_output(a.shape(), std::move(out), {a}, [n](TensorImpl& o) {
        auto& ia = *o.node->inputs[0].impl();
        if (!ia.requires_grad) return;
        ia.ensure_grad();
        for (size_t i = 0; i < n; ++i)
            if (ia.data[i] > 0.0f) ia.grad[i] += o.grad[i];
    });
}

// ---- shape ----

Tensor reshape(const Tensor& a, Shape new_shape) {
    check(shape_numel(new_shape) == a.numel(),
          "reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(new_shape));
    size_t n = a.numel();
    std::vector<float> out(a.data().begin(), a.data().end());
    return make_op_output(std::move(new_shape), std::move(out), {a}, [n](TensorImpl& o) {
        auto& ia = *o.node->inputs[0].impl();
        if (ia.requires_grad) accumulate(ia, o.grad.data(), n);
    });
}

Tensor flatten(const Tensor& a) {
    check(a.ndim() >= 1, "flatten: rank 0");
    int rows = a.dim(0);
    int cols = rows == 0 ? 0 : static_cast<int>(a.numel() / static_cast<size_t>(rows));
    return reshape(a, {rows, cols});
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    check(a.ndim() == 2 && b.ndim() == 2, "concat_rows: expects 2D");
    check(a.dim(1) == b.dim(1), "concat_rows: column mismatch");
    int d = a.dim(1);
    size_t na = a.numel(), nb = b.numel();
    std::vector<float> out(na + nb);
    std::memcpy(out.data(), a.data().data(), na * sizeof(float));
    std::memcpy(out.data() + na, b.data().data(), nb * sizeof(float));
    return make_op_output({a.dim(0) + b.dim(0), d}, std::move(out), {a, b},
                          [na, nb](TensorImpl& o) {
                              auto& ia = *o.node->inputs[0].impl();
                              auto& ib = *o.node->inputs[1].impl();
                              if (ia.requires_grad) accumulate(ia, o.grad.data(), na);
                              if (ib.requires_grad) accumulate(ib, o.grad.data() + na, nb);
                          });
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
    size_t n = a.numel();
    double acc = 0.0;
    const float* pa = a.data().data();
    for (size_t i = 0; i < n; ++i) acc += pa[i];
    return make_op_output({1}, {static_cast<float>(acc)}, {a}, [n](TensorImpl& o) {
        auto& ia = *o.node->inputs[0].impl();
        if (!ia.requires_grad) return;
        ia.ensure_grad();
        float g = o.grad[0];
        for (size_t i = 0; i < n; ++i) ia.grad[i] += g;
    });
}

Tensor mean(const Tensor& a) {
    size_t n = a.numel();
    check(n > 0, "mean of empty tensor");
    return mul_scalar(sum(a), 1.0f / static_cast<float>(n));
}

// ---- row ops on [N,d] ----

Tensor l2_normalize(const Tensor& a, float eps) {
    check(a.ndim() == 2, "l2_normalize: expects [N,d]");
    int N = a.dim(0), d = a.dim(1);
    std::vector<float> out(a.numel());
    auto norms = std::make_shared<std::vector<float>>(N);
    const float* pa = a.data().data();
    for (int i = 0; i < N; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
            double v = pa[i * d + j];
            s += v * v;
        }
        float nrm = std::max(static_cast<float>(std::sqrt(s)), eps);
        (*norms)[i] = nrm;
        for (int j = 0; j < d; ++j) out[i * d + j] = pa[i * d + j] / nrm;
    }
    return make_op_output(a.shape(), std::move(out), {a}, [N, d, norms](TensorImpl& o) {
        auto& ia = *o.node->inputs[0].impl();
        if (!ia.requires_grad) return;
        ia.ensure_grad();
        for (int i = 0; i < N; ++i) {
            const float* y = o.data.data() + static_cast<size_t>(i) * d;
            const float* gy = o.grad.data() + static_cast<size_t>(i) * d;
            float* gx = ia.grad.data() + static_cast<size_t>(i) * d;
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += static_cast<double>(y[j]) * gy[j];
            float inv = 1.0f / (*norms)[i];
            for (int j = 0; j < d; ++j)
                gx[j] += (gy[j] - static_cast<float>(dot) * y[j]) * inv;
        }
    });
}

Tensor row_dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "row_dot");
    check(a.ndim() == 2, "row_dot: expects [N,d]");
    int N = a.dim(0), d = a.dim(1);
    std::vector<float> out(N);
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    for (int i = 0; i < N; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += static_cast<double>(pa[i * d + j]) * pb[i * d + j];
        out[i] = static_cast<float>(s);
    }
    return make_op_output({N}, std::move(out), {a, b}, [N, d](TensorImpl& o) {
        auto& ia = *o.node->inputs[0].impl();
        auto& ib = *o.node->inputs[1].impl();
        if (ia.requires_grad) {
            ia.ensure_grad();
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < d; ++j)
                    ia.grad[i * d + j] += o.grad[i] * ib.data[i * d + j];
        }
        if (ib.requires_grad) {
            ib.ensure_grad();
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < d; ++j)
                    ib.grad[i * d + j] += o.grad[i] * ia.data[i * d + j];
        }
    });
}

// ---- matmul family (kernels live in conv.cpp) ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.ndim() == 2 && b.ndim() == 2, "matmul: expects 2D");
    check(a.dim(1) == b.dim(0), "matmul: inner dim mismatch " + shape_str(a.shape()) +
                                    " x " + shape_str(b.shape()));
    int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<float> out(static_cast<size_t>(m) * n, 0.0f);
    sgemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
    return make_op_output({m, n}, std::move(out), {a, b}, [m, n, k](TensorImpl& o) {
        auto& ia = *o.node->inputs[0].impl();
        auto& ib = *o.node->inputs[1].impl();
        if (ia.requires_grad) {
            ia.ensure_grad();
            sgemm_nt(m, k, n, o.grad.data(), ib.data.data(), ia.grad.data());
        }
        if (ib.requires_grad) {
            ib.ensure_grad();
            sgemm_tn(k, n, m, ia.data.data(), o.grad.data(), ib.grad.data());
        }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check(a.ndim() == 2 && b.ndim() == 2, "matmul_nt: expects 2D");
    check(a.dim(1) == b.dim(1), "matmul_nt: inner dim mismatch");
    int m = a.dim(0), k = a.dim(1), n = b.dim(0);
    std::vector<float> out(static_cast<size_t>(m) * n, 0.0f);
    sgemm_nt(m, n, k, a.data().data(), b.data().data(), out.data());
    return make_op_output({m, n}, std::move(out), {a, b}, [m, n, k](TensorImpl& o) {
        auto& ia = *o.node->inputs[0].impl();
        auto& ib = *o.node->inputs[1].impl();
        if (ia.requires_grad) {
            ia.ensure_grad();
            sgemm_nn(m, k, n, o.grad.data(), ib.data.data(), ia.grad.data());
        }
        if (ib.requires_grad) {
            ib.ensure_grad();
            sgemm_tn(n, k, m, o.grad.data(), ia.data.data(), ib.grad.data());
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    check(x.ndim() == 2 && w.ndim() == 2, "linear: expects 2D x and w");
    check(x.dim(1) == w.dim(1), "linear: in_features mismatch " + shape_str(x.shape()) +
                                    " vs w " + shape_str(w.shape()));
    int n = x.dim(0), in = x.dim(1), outf = w.dim(0);
    if (b.defined()) check(b.ndim() == 1 && b.dim(0) == outf, "linear: bias shape mismatch");
    std::vector<float> out(static_cast<size_t>(n) * outf, 0.0f);
    sgemm_nt(n, outf, in, x.data().data(), w.data().data(), out.data());
    if (b.defined()) {
        const float* pb = b.data().data();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < outf; ++j) out[static_cast<size_t>(i) * outf + j] += pb[j];
    }
    std::vector<Tensor> inputs = {x, w};
    if (b.defined()) inputs.push_back(b);
    return make_op_output({n, outf}, std::move(out), std::move(inputs),
                          [n, in, outf](TensorImpl& o) {
                              auto& ix = *o.node->inputs[0].impl();
                              auto& iw = *o.node->inputs[1].impl();
                              if (ix.requires_grad) {
                                  ix.ensure_grad();
                                  sgemm_nn(n, in, outf, o.grad.data(), iw.data.data(), ix.grad.data());
                              }
                              if (iw.requires_grad) {
                                  iw.ensure_grad();
                                  sgemm_tn(outf, in, n, o.grad.data(), ix.data.data(), iw.grad.data());
                              }
                              if (o.node->inputs.size() > 2) {
                                  auto& ib = *o.node->inputs[2].impl();
                                  if (ib.requires_grad) {
                                      ib.ensure_grad();
                                      for (int i = 0; i < n; ++i)
                                          for (int j = 0; j < outf; ++j)
                                              ib.grad[j] += o.grad[static_cast<size_t>(i) * outf + j];
                                  }
                              }
                          });
}

// ---- batchnorm ----

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 Tensor running_mean, Tensor running_var,
                 bool train, bool update_stats, float momentum, float eps) {
    check(x.ndim() == 2 || x.ndim() == 4, "batchnorm: expects [N,F] or [N,C,H,W]");
    int N = x.dim(0);
    int C = x.dim(1);
    size_t spatial = x.ndim() == 4 ? static_cast<size_t>(x.dim(2)) * x.dim(3) : 1;
    size_t count = static_cast<size_t>(N) * spatial;
    check(count >= 1, "batchnorm: empty batch");
    check(gamma.ndim() == 1 && gamma.dim(0) == C, "batchnorm: gamma shape");
    check(beta.ndim() == 1 && beta.dim(0) == C, "batchnorm: beta shape");
    check(running_mean.defined() && running_mean.numel() == static_cast<size_t>(C),
          "batchnorm: running_mean shape");
    check(running_var.defined() && running_var.numel() == static_cast<size_t>(C),
          "batchnorm: running_var shape");
    if (train) check(count >= 2, "batchnorm: train mode needs at least 2 samples per channel");

    const float* px = x.data().data();
    auto mean_c = std::make_shared<std::vector<float>>(C);
    auto invstd_c = std::make_shared<std::vector<float>>(C);

    // channel-strided walk: element (n, c, s) at ((n*C)+c)*spatial + s
    if (train) {
        for (int c = 0; c < C; ++c) {
            double s = 0.0, s2 = 0.0;
            for (int n = 0; n < N; ++n) {
                const float* p = px + (static_cast<size_t>(n) * C + c) * spatial;
                for (size_t k = 0; k < spatial; ++k) {
                    double v = p[k];
                    s += v;
                    s2 += v * v;
                }
            }
            double mu = s / static_cast<double>(count);
            double var = s2 / static_cast<double>(count) - mu * mu;
            if (var < 0.0) var = 0.0;
            (*mean_c)[c] = static_cast<float>(mu);
            (*invstd_c)[c] = static_cast<float>(1.0 / std::sqrt(var + eps));
            if (update_stats) {
                double unbiased = count > 1 ? var * static_cast<double>(count) /
                                                  static_cast<double>(count - 1)
                                            : var;
                auto rm = running_mean.data_mut();
                auto rv = running_var.data_mut();
                rm[c] = static_cast<float>((1.0 - momentum) * rm[c] + momentum * mu);
                rv[c] = static_cast<float>((1.0 - momentum) * rv[c] + momentum * unbiased);
            }
        }
    } else {
        auto rm = running_mean.data();
        auto rv = running_var.data();
        for (int c = 0; c < C; ++c) {
            (*mean_c)[c] = rm[c];
            (*invstd_c)[c] = 1.0f / std::sqrt(rv[c] + eps);
        }
    }

    std::vector<float> out(x.numel());
    const float* pg = gamma.data().data();
    const float* pb = beta.data().data();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            size_t base = (static_cast<size_t>(n) * C + c) * spatial;
            float mu = (*mean_c)[c], is = (*invstd_c)[c], g = pg[c], b = pb[c];
            for (size_t k = 0; k < spatial; ++k)
                out[base + k] = (px[base + k] - mu) * is * g + b;
        }

    return make_op_output(
        x.shape(), std::move(out), {x, gamma, beta},
        [N, C, spatial, count, train, mean_c, invstd_c](TensorImpl& o) {
            auto& ix = *o.node->inputs[0].impl();
            auto& ig = *o.node->inputs[1].impl();
            auto& ibeta = *o.node->inputs[2].impl();
            // per-channel sums of dy and dy*xhat, shared by all three adjoints
            std::vector<double> sum_dy(C, 0.0), sum_dy_xh(C, 0.0);
            for (int c = 0; c < C; ++c) {
                float mu = (*mean_c)[c], is = (*invstd_c)[c];
                double a = 0.0, b = 0.0;
                for (int n = 0; n < N; ++n) {
                    size_t base = (static_cast<size_t>(n) * C + c) * spatial;
                    for (size_t k = 0; k < spatial; ++k) {
                        double dy = o.grad[base + k];
                        double xh = (ix.data[base + k] - mu) * is;
                        a += dy;
                        b += dy * xh;
                    }
                }
                sum_dy[c] = a;
                sum_dy_xh[c] = b;
            }
            if (ig.requires_grad) {
                ig.ensure_grad();
                for (int c = 0; c < C; ++c) ig.grad[c] += static_cast<float>(sum_dy_xh[c]);
            }
            if (ibeta.requires_grad) {
                ibeta.ensure_grad();
                for (int c = 0; c < C; ++c) ibeta.grad[c] += static_cast<float>(sum_dy[c]);
            }
            if (ix.requires_grad) {
                ix.ensure_grad();
                double inv_count = 1.0 / static_cast<double>(count);
                for (int c = 0; c < C; ++c) {
                    float mu = (*mean_c)[c], is = (*invstd_c)[c];
                    float g = ig.data[c];
                    double m_dy = sum_dy[c] * inv_count;
                    double m_dy_xh = sum_dy_xh[c] * inv_count;
                    for (int n = 0; n < N; ++n) {
                        size_t base = (static_cast<size_t>(n) * C + c) * spatial;
                        for (size_t k = 0; k < spatial; ++k) {
                            double dy = o.grad[base + k];
                            if (train) {
                                double xh = (ix.data[base + k] - mu) * is;
                                ix.grad[base + k] += static_cast<float>(
                                    g * is * (dy - m_dy - xh * m_dy_xh));
                            } else {
                                ix.grad[base + k] += static_cast<float>(g * is * dy);
                            }
                        }
                    }
                }
            }
        });
}

// ---- softmax cross entropy ----

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    check(logits.ndim() == 2, "softmax_cross_entropy: expects [N,C]");
    int N = logits.dim(0), C = logits.dim(1);
    check(static_cast<int>(labels.size()) == N, "softmax_cross_entropy: label count mismatch");
    const float* pl = logits.data().data();
    auto probs = std::make_shared<std::vector<float>>(logits.numel());
    double loss = 0.0;
    for (int i = 0; i < N; ++i) {
        check(labels[i] >= 0 && labels[i] < C, "softmax_cross_entropy: label out of range");
        const float* row = pl + static_cast<size_t>(i) * C;
        float mx = row[0];
        for (int j = 1; j < C; ++j) mx = std::max(mx, row[j]);
        double den = 0.0;
        for (int j = 0; j < C; ++j) den += std::exp(static_cast<double>(row[j]) - mx);
        double lse = mx + std::log(den);
        loss += lse - row[labels[i]];
        float* prow = probs->data() + static_cast<size_t>(i) * C;
        for (int j = 0; j < C; ++j)
            prow[j] = static_cast<float>(std::exp(static_cast<double>(row[j]) - lse));
    }
    loss /= N;
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    return make_op_output({1}, {static_cast<float>(loss)}, {logits},
                          [N, C, probs, labels_copy](TensorImpl& o) {
                              auto& il = *o.node->inputs[0].impl();
                              if (!il.requires_grad) return;
                              il.ensure_grad();
                              float g = o.grad[0] / static_cast<float>(N);
                              for (int i = 0; i < N; ++i) {
                                  const float* prow = probs->data() + static_cast<size_t>(i) * C;
                                  float* grow = il.grad.data() + static_cast<size_t>(i) * C;
                                  int y = (*labels_copy)[i];
                                  for (int j = 0; j < C; ++j)
                                      grow[j] += g * (prow[j] - (j == y ? 1.0f : 0.0f));
                              }
                          });
}

Tensor stop_gradient(const Tensor& a) { return a.detach(); }

}  // namespace ssql
