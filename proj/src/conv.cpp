#include <algorithm>
#include <cstring>
#include <memory>

#include "ssql/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ssql {

// Every kernel accumulates into C with a fixed per-element evaluation order,
// and threads only ever split over disjoint C rows (or images), so results
// are bit-identical for any thread count.

static constexpr int kJTile = 512;
static constexpr long long kParallelCutoff = 1 << 17;

void sgemm_nn(int m, int n, int k, const float* a, const float* b, float* c) {
    bool par = static_cast<long long>(m) * n * k >= kParallelCutoff && m > 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (int i = 0; i < m; ++i) {
        float* crow = c + static_cast<size_t>(i) * n;
        for (int j0 = 0; j0 < n; j0 += kJTile) {
            int j1 = std::min(n, j0 + kJTile);
            for (int l = 0; l < k; ++l) {
                float av = a[static_cast<size_t>(i) * k + l];
                const float* brow = b + static_cast<size_t>(l) * n;
                for (int j = j0; j < j1; ++j) crow[j] += av * brow[j];
            }
        }
    }
    (void)par;
}

void sgemm_tn(int m, int n, int k, const float* a, const float* b, float* c) {
    // c[i,j] += sum_l a[l,i] * b[l,j]
    bool par = static_cast<long long>(m) * n * k >= kParallelCutoff && m > 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (int i = 0; i < m; ++i) {
        float* crow = c + static_cast<size_t>(i) * n;
        for (int j0 = 0; j0 < n; j0 += kJTile) {
            int j1 = std::min(n, j0 + kJTile);
            for (int l = 0; l < k; ++l) {
                float av = a[static_cast<size_t>(l) * m + i];
                const float* brow = b + static_cast<size_t>(l) * n;
                for (int j = j0; j < j1; ++j) crow[j] += av * brow[j];
            }
        }
    }
    (void)par;
}

void sgemm_nt(int m, int n, int k, const float* a, const float* b, float* c) {
    // c[i,j] += dot(a row i, b row j); fixed 4-lane reduction keeps the
    // summation order independent of the compiler's vectorizer.
    bool par = static_cast<long long>(m) * n * k >= kParallelCutoff && m > 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<size_t>(i) * k;
        float* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const float* brow = b + static_cast<size_t>(j) * k;
            float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
            int l = 0;
            for (; l + 4 <= k; l += 4) {
                s0 += arow[l] * brow[l];
                s1 += arow[l + 1] * brow[l + 1];
                s2 += arow[l + 2] * brow[l + 2];
                s3 += arow[l + 3] * brow[l + 3];
            }
            float s = (s0 + s1) + (s2 + s3);
            for (; l < k; ++l) s += arow[l] * brow[l];
            crow[j] += s;
        }
    }
    (void)par;
}

// ---- im2col conv ----

namespace {

struct ConvDims {
    int N, C, H, W, O, KH, KW, stride, pad, OH, OW;
    size_t hw() const { return static_cast<size_t>(OH) * OW; }
    size_t ck() const { return static_cast<size_t>(C) * KH * KW; }
};

// Fills columns [n*hw, (n+1)*hw) of col[ck, N*hw] from image n.
void im2col_image(const ConvDims& d, const float* x, int n, float* col) {
    size_t total_cols = static_cast<size_t>(d.N) * d.hw();
    const float* img = x + static_cast<size_t>(n) * d.C * d.H * d.W;
    size_t col_base = static_cast<size_t>(n) * d.hw();
    for (int c = 0; c < d.C; ++c) {
        const float* plane = img + static_cast<size_t>(c) * d.H * d.W;
        for (int ki = 0; ki < d.KH; ++ki)
            for (int kj = 0; kj < d.KW; ++kj) {
                size_t r = (static_cast<size_t>(c) * d.KH + ki) * d.KW + kj;
                float* crow = col + r * total_cols + col_base;
                size_t p = 0;
                for (int oi = 0; oi < d.OH; ++oi) {
                    int ii = oi * d.stride - d.pad + ki;
                    if (ii < 0 || ii >= d.H) {
                        for (int oj = 0; oj < d.OW; ++oj) crow[p++] = 0.0f;
                        continue;
                    }
                    const float* srow = plane + static_cast<size_t>(ii) * d.W;
                    for (int oj = 0; oj < d.OW; ++oj) {
                        int jj = oj * d.stride - d.pad + kj;
                        crow[p++] = (jj < 0 || jj >= d.W) ? 0.0f : srow[jj];
                    }
                }
            }
    }
}

// Scatters columns of dcol back into image n of dx (accumulating).
void col2im_image(const ConvDims& d, const float* dcol, int n, float* dx) {
    size_t total_cols = static_cast<size_t>(d.N) * d.hw();
    float* img = dx + static_cast<size_t>(n) * d.C * d.H * d.W;
    size_t col_base = static_cast<size_t>(n) * d.hw();
    for (int c = 0; c < d.C; ++c) {
        float* plane = img + static_cast<size_t>(c) * d.H * d.W;
        for (int ki = 0; ki < d.KH; ++ki)
            for (int kj = 0; kj < d.KW; ++kj) {
                size_t r = (static_cast<size_t>(c) * d.KH + ki) * d.KW + kj;
                const float* crow = dcol + r * total_cols + col_base;
                size_t p = 0;
                for (int oi = 0; oi < d.OH; ++oi) {
                    int ii = oi * d.stride - d.pad + ki;
                    if (ii < 0 || ii >= d.H) {
                        p += d.OW;
                        continue;
                    }
                    float* srow = plane + static_cast<size_t>(ii) * d.W;
                    for (int oj = 0; oj < d.OW; ++oj) {
                        int jj = oj * d.stride - d.pad + kj;
                        if (jj >= 0 && jj < d.W) srow[jj] += crow[p];
                        ++p;
                    }
                }
            }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
    check(x.ndim() == 4, "conv2d: input must be [N,C,H,W]");
    check(w.ndim() == 4, "conv2d: weight must be [O,C,KH,KW]");
    check(x.dim(1) == w.dim(1), "conv2d: channel mismatch " + shape_str(x.shape()) +
                                    " vs " + shape_str(w.shape()));
    check(stride >= 1, "conv2d: stride must be >= 1");
    check(padding >= 0, "conv2d: padding must be >= 0");
    ConvDims d;
    d.N = x.dim(0);
    d.C = x.dim(1);
    d.H = x.dim(2);
    d.W = x.dim(3);
    d.O = w.dim(0);
    d.KH = w.dim(2);
    d.KW = w.dim(3);
    d.stride = stride;
    d.pad = padding;
    d.OH = (d.H + 2 * padding - d.KH) / stride + 1;
    d.OW = (d.W + 2 * padding - d.KW) / stride + 1;
    check(d.OH > 0 && d.OW > 0, "conv2d: kernel larger than padded input");
    if (b.defined()) check(b.ndim() == 1 && b.dim(0) == d.O, "conv2d: bias shape mismatch");

    size_t hw = d.hw(), ck = d.ck();
    size_t total_cols = static_cast<size_t>(d.N) * hw;
    auto col = std::make_shared<std::vector<float>>(ck * total_cols);

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (d.N > 1)
#endif
    for (int n = 0; n < d.N; ++n) im2col_image(d, x.data().data(), n, col->data());

    // out_mat[o, n*hw + p]; reordered below into [N,O,OH,OW]
    std::vector<float> out_mat(static_cast<size_t>(d.O) * total_cols, 0.0f);
    sgemm_nn(d.O, static_cast<int>(total_cols), static_cast<int>(ck),
             w.data().data(), col->data(), out_mat.data());

    std::vector<float> out(static_cast<size_t>(d.N) * d.O * hw);
    const float* pb = b.defined() ? b.data().data() : nullptr;
    for (int n = 0; n < d.N; ++n)
        for (int o = 0; o < d.O; ++o) {
            const float* src = out_mat.data() + static_cast<size_t>(o) * total_cols + n * hw;
            float* dst = out.data() + (static_cast<size_t>(n) * d.O + o) * hw;
            if (pb) {
                float bias = pb[o];
                for (size_t p = 0; p < hw; ++p) dst[p] = src[p] + bias;
            } else {
                std::memcpy(dst, src, hw * sizeof(float));
            }
        }

    bool keep_col = grad_enabled() && (x.requires_grad() || w.requires_grad() ||
                                       (b.defined() && b.requires_grad()));
    if (!keep_col) col.reset();

    std::vector<Tensor> inputs = {x, w};
    if (b.defined()) inputs.push_back(b);
    return make_op_output(
        {d.N, d.O, d.OH, d.OW}, std::move(out), std::move(inputs), [d, col](TensorImpl& o) {
            auto& ix = *o.node->inputs[0].impl();
            auto& iw = *o.node->inputs[1].impl();
            size_t hw = d.hw(), ck = d.ck();
            size_t total_cols = static_cast<size_t>(d.N) * hw;

            // regroup dout to [O, N*hw] so both gemms see long rows
            std::vector<float> dout_mat(static_cast<size_t>(d.O) * total_cols);
            for (int n = 0; n < d.N; ++n)
                for (int o2 = 0; o2 < d.O; ++o2)
                    std::memcpy(dout_mat.data() + static_cast<size_t>(o2) * total_cols + n * hw,
                                o.grad.data() + (static_cast<size_t>(n) * d.O + o2) * hw,
                                hw * sizeof(float));

            if (o.node->inputs.size() > 2) {
                auto& ib = *o.node->inputs[2].impl();
                if (ib.requires_grad) {
                    ib.ensure_grad();
                    for (int o2 = 0; o2 < d.O; ++o2) {
                        const float* row = dout_mat.data() + static_cast<size_t>(o2) * total_cols;
                        double s = 0.0;
                        for (size_t p = 0; p < total_cols; ++p) s += row[p];
                        ib.grad[o2] += static_cast<float>(s);
                    }
                }
            }
            if (iw.requires_grad) {
                iw.ensure_grad();
                sgemm_nt(d.O, static_cast<int>(ck), static_cast<int>(total_cols),
                         dout_mat.data(), col->data(), iw.grad.data());
            }
            if (ix.requires_grad) {
                ix.ensure_grad();
                std::vector<float> dcol(ck * total_cols, 0.0f);
                sgemm_tn(static_cast<int>(ck), static_cast<int>(total_cols), d.O,
                         iw.data.data(), dout_mat.data(), dcol.data());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (d.N > 1)
#endif
                for (int n = 0; n < d.N; ++n) col2im_image(d, dcol.data(), n, ix.grad.data());
            }
        });
}

Tensor avgpool2d(const Tensor& x, int kernel, int stride) {
    check(x.ndim() == 4, "avgpool2d: input must be [N,C,H,W]");
    check(kernel >= 1 && stride >= 1, "avgpool2d: kernel/stride must be >= 1");
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int OH = (H - kernel) / stride + 1;
    int OW = (W - kernel) / stride + 1;
    check(OH > 0 && OW > 0, "avgpool2d: kernel larger than input");
    float inv = 1.0f / static_cast<float>(kernel * kernel);
    std::vector<float> out(static_cast<size_t>(N) * C * OH * OW);
    const float* px = x.data().data();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* plane = px + (static_cast<size_t>(n) * C + c) * H * W;
            float* oplane = out.data() + (static_cast<size_t>(n) * C + c) * OH * OW;
            for (int oi = 0; oi < OH; ++oi)
                for (int oj = 0; oj < OW; ++oj) {
                    float s = 0.0f;
                    for (int ki = 0; ki < kernel; ++ki)
                        for (int kj = 0; kj < kernel; ++kj)
                            s += plane[static_cast<size_t>(oi * stride + ki) * W + oj * stride + kj];
                    oplane[static_cast<size_t>(oi) * OW + oj] = s * inv;
                }
        }
    return make_op_output({N, C, OH, OW}, std::move(out), {x},
                          [N, C, H, W, OH, OW, kernel, stride, inv](TensorImpl& o) {
                              auto& ix = *o.node->inputs[0].impl();
                              if (!ix.requires_grad) return;
                              ix.ensure_grad();
                              for (int n = 0; n < N; ++n)
                                  for (int c = 0; c < C; ++c) {
                                      float* gplane = ix.grad.data() +
                                                      (static_cast<size_t>(n) * C + c) * H * W;
                                      const float* goplane = o.grad.data() +
                                                             (static_cast<size_t>(n) * C + c) * OH * OW;
                                      for (int oi = 0; oi < OH; ++oi)
                                          for (int oj = 0; oj < OW; ++oj) {
                                              float g = goplane[static_cast<size_t>(oi) * OW + oj] * inv;
                                              for (int ki = 0; ki < kernel; ++ki)
                                                  for (int kj = 0; kj < kernel; ++kj)
                                                      gplane[static_cast<size_t>(oi * stride + ki) * W +
                                                             oj * stride + kj] += g;
                                          }
                                  }
                          });
}

Tensor global_avgpool(const Tensor& x) {
    check(x.ndim() == 4, "global_avgpool: input must be [N,C,H,W]");
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    size_t hw = static_cast<size_t>(H) * W;
    check(hw > 0, "global_avgpool: empty spatial dims");
    float inv = 1.0f / static_cast<float>(hw);
    std::vector<float> out(static_cast<size_t>(N) * C);
    const float* px = x.data().data();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* plane = px + (static_cast<size_t>(n) * C + c) * hw;
            double s = 0.0;
            for (size_t p = 0; p < hw; ++p) s += plane[p];
            out[static_cast<size_t>(n) * C + c] = static_cast<float>(s) * inv;
        }
    return make_op_output({N, C}, std::move(out), {x}, [N, C, hw, inv](TensorImpl& o) {
        auto& ix = *o.node->inputs[0].impl();
        if (!ix.requires_grad) return;
        ix.ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                float g = o.grad[static_cast<size_t>(n) * C + c] * inv;
                float* plane = ix.grad.data() + (static_cast<size_t>(n) * C + c) * hw;
                for (size_t p = 0; p < hw; ++p) plane[p] += g;
            }
    });
}

}  // namespace ssql
