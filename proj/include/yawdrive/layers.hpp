#pragma once

// Differentiable layer set on top of Graph: convolution, dense, activations,
// pooling, the additive attention gate and the composite L1 loss.

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "yawdrive/autodiff.hpp"

namespace yawdrive::nn {

namespace detail {

template <typename Scalar>
Tensor<Scalar>* grad_if(Graph<Scalar>& g, Var v)
{
    return g.requires_grad(v) ? &g.grad(v) : nullptr;
}

// Unfolds one sample into rows of length `ld` (>= out_h * out_w) of `cols`.
template <typename Scalar>
void im2col(const Scalar* x, int channels, int height, int width, int k, int stride, int pad, int out_h, int out_w,
            Scalar* cols, Eigen::Index ld)
{
    for (int c = 0; c < channels; ++c)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                Scalar* dst = cols + static_cast<std::ptrdiff_t>((c * k + ki) * k + kj) * ld;
                for (int oh = 0; oh < out_h; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    Scalar* row = dst + oh * out_w;
                    if (ih < 0 || ih >= height) {
                        std::fill(row, row + out_w, Scalar(0));
                        continue;
                    }
                    const Scalar* src = x + static_cast<std::ptrdiff_t>(c * height + ih) * width;
                    if (stride == 1 && kj - pad >= 0 && out_w - 1 + kj - pad < width) {
                        std::copy(src + kj - pad, src + kj - pad + out_w, row);
                        continue;
                    }
                    for (int ow = 0; ow < out_w; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        row[ow] = (iw >= 0 && iw < width) ? src[iw] : Scalar(0);
                    }
                }
            }
}

template <typename Scalar>
void col2im(const Scalar* cols, int channels, int height, int width, int k, int stride, int pad, int out_h, int out_w,
            Scalar* dx, Eigen::Index ld)
{
    for (int c = 0; c < channels; ++c)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                const Scalar* src = cols + static_cast<std::ptrdiff_t>((c * k + ki) * k + kj) * ld;
                for (int oh = 0; oh < out_h; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= height) continue;
                    Scalar* dst = dx + static_cast<std::ptrdiff_t>(c * height + ih) * width;
                    const Scalar* row = src + oh * out_w;
                    for (int ow = 0; ow < out_w; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        if (iw >= 0 && iw < width) dst[iw] += row[ow];
                    }
                }
            }
}

inline std::uint64_t mix_index(std::uint64_t h, std::uint64_t i) { return (h ^ (i + 0x9e3779b97f4a7c15ULL)) * 0xff51afd7ed558ccdULL; }

} // namespace detail

/// x [N,C,H,W], w [O,C,k,k], b [O] -> [N,O,H',W'] with zero padding.
template <typename Scalar>
Var conv2d(Graph<Scalar>& g, Var x, Var w, Var b, int stride, int pad)
{
    const auto& X = g.value(x);
    const auto& W = g.value(w);
    const auto& B = g.value(b);
    if (X.rank() != 4 || W.rank() != 4 || W.dim(1) != X.dim(1) || W.dim(2) != W.dim(3) || B.size() != W.dim(0))
        throw ShapeError("conv2d: input " + shape_string(X.shape()) + " weight " + shape_string(W.shape()));
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    const int n = X.dim(0), c = X.dim(1), h = X.dim(2), wd = X.dim(3);
    const int o = W.dim(0), k = W.dim(2);
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (wd + 2 * pad - k) / stride + 1;
    if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: empty output");
    const Eigen::Index kk = static_cast<Eigen::Index>(c) * k * k;
    const Eigen::Index p = static_cast<Eigen::Index>(oh) * ow;
    const Eigen::Index in_plane = static_cast<Eigen::Index>(c) * h * wd;

    const bool keep = g.record && (g.requires_grad(x) || g.requires_grad(w) || g.requires_grad(b));
    // Samples are unfolded side by side in groups of about 256 columns, so
    // small deep-layer planes still make reasonably sized matrix products.
    const int group = static_cast<int>(std::clamp<Eigen::Index>(256 / p, 1, n));
    const int groups = (n + group - 1) / group;
    const Eigen::Index block = kk * group * p;
    auto cols = std::make_shared<Tensor<Scalar>>(
        Tensor<Scalar>::uninitialized(Shape{keep ? groups : 1, static_cast<int>(kk), static_cast<int>(group * p)}));
    auto out = Tensor<Scalar>::uninitialized(Shape{n, o, oh, ow});
    typename Tensor<Scalar>::RowMatrix y(o, group * p);
    for (int gi = 0; gi < groups; ++gi) {
        const int first = gi * group, count = std::min(group, n - first);
        const Eigen::Index ld = count * p;
        Scalar* base = cols->ptr() + (keep ? gi * block : 0);
        for (int s = 0; s < count; ++s)
            detail::im2col(X.ptr() + (first + s) * in_plane, c, h, wd, k, stride, pad, oh, ow, base + s * p, ld);
        auto ym = y.leftCols(ld);
        ym.noalias() = W.matrix(o, kk) * typename Tensor<Scalar>::ConstMatrixMap(base, kk, ld);
        ym.colwise() += B.data();
        for (int s = 0; s < count; ++s) out.matrix(o, p, (first + s) * o * p) = ym.middleCols(s * p, p);
    }

    return g.op(std::move(out), keep, [=](Graph<Scalar>& g, Var out_var) {
        const auto& dy = g.grad(out_var);
        auto* dw = detail::grad_if(g, w);
        auto* db = detail::grad_if(g, b);
        auto* dx = detail::grad_if(g, x);
        typename Tensor<Scalar>::RowMatrix dym(o, group * p), dcols;
        if (dx) dcols.resize(kk, group * p);
        for (int gi = 0; gi < groups; ++gi) {
            const int first = gi * group, count = std::min(group, n - first);
            const Eigen::Index ld = count * p;
            auto d = dym.leftCols(ld);
            for (int s = 0; s < count; ++s) d.middleCols(s * p, p) = dy.matrix(o, p, (first + s) * o * p);
            const typename Tensor<Scalar>::ConstMatrixMap cm(cols->ptr() + gi * block, kk, ld);
            if (dw) dw->matrix(o, kk).noalias() += d * cm.transpose();
            if (db) db->data() += d.rowwise().sum();
            if (dx) {
                Eigen::Map<typename Tensor<Scalar>::RowMatrix> dc(dcols.data(), kk, ld);
                dc.noalias() = g.value(w).matrix(o, kk).transpose() * d;
                for (int s = 0; s < count; ++s)
                    detail::col2im(dc.data() + s * p, c, h, wd, k, stride, pad, oh, ow, dx->ptr() + (first + s) * in_plane, ld);
            }
        }
    });
}

/// x [N,in], w [out,in], b [out] -> [N,out].
template <typename Scalar>
Var dense(Graph<Scalar>& g, Var x, Var w, Var b)
{
    const auto& X = g.value(x);
    const auto& W = g.value(w);
    const auto& B = g.value(b);
    if (X.rank() != 2 || W.rank() != 2 || W.dim(1) != X.dim(1) || B.size() != W.dim(0))
        throw ShapeError("dense: input " + shape_string(X.shape()) + " weight " + shape_string(W.shape()));
    const int n = X.dim(0), in = X.dim(1), out_dim = W.dim(0);
    Tensor<Scalar> out(Shape{n, out_dim});
    auto om = out.matrix(n, out_dim);
    om.noalias() = X.matrix(n, in) * W.matrix(out_dim, in).transpose();
    om.rowwise() += B.data().transpose();
    return g.op(std::move(out), {x, w, b}, [=](Graph<Scalar>& g, Var y) {
        const auto dy = g.grad(y).matrix(n, out_dim);
        if (auto* dx = detail::grad_if(g, x)) dx->matrix(n, in).noalias() += dy * g.value(w).matrix(out_dim, in);
        if (auto* dw = detail::grad_if(g, w)) dw->matrix(out_dim, in).noalias() += dy.transpose() * g.value(x).matrix(n, in);
        if (auto* db = detail::grad_if(g, b)) db->data() += dy.colwise().sum().transpose();
    });
}

template <typename Scalar>
Var add(Graph<Scalar>& g, Var a, Var b)
{
    const auto& va = g.value(a);
    const auto& vb = g.value(b);
    if (va.shape() != vb.shape()) throw ShapeError("add: " + shape_string(va.shape()) + " vs " + shape_string(vb.shape()));
    Tensor<Scalar> out(va.shape(), (va.data() + vb.data()).eval());
    return g.op(std::move(out), {a, b}, [a, b](Graph<Scalar>& g, Var y) {
        const auto& dy = g.grad(y);
        if (auto* da = detail::grad_if(g, a)) da->data() += dy.data();
        if (auto* db = detail::grad_if(g, b)) db->data() += dy.data();
    });
}

template <typename Scalar>
Var scale(Graph<Scalar>& g, Var x, Scalar factor)
{
    const auto& vx = g.value(x);
    Tensor<Scalar> out(vx.shape(), (vx.data() * factor).eval());
    return g.op(std::move(out), {x}, [x, factor](Graph<Scalar>& g, Var y) {
        const auto& dy = g.grad(y);
        if (auto* dx = detail::grad_if(g, x)) dx->data() += dy.data() * factor;
    });
}

template <typename Scalar>
Var relu(Graph<Scalar>& g, Var x)
{
    const auto& vx = g.value(x);
    Tensor<Scalar> out(vx.shape(), vx.data().cwiseMax(Scalar(0)).eval());
    if (g.track_kinks) {
        std::uint64_t h = 0;
        for (Eigen::Index i = 0; i < vx.size(); ++i)
            if (vx[i] > Scalar(0)) h = detail::mix_index(h, static_cast<std::uint64_t>(i));
        g.mix_digest(h);
    }
    return g.op(std::move(out), {x}, [x](Graph<Scalar>& g, Var y) {
        const auto& dy = g.grad(y);
        if (auto* dx = detail::grad_if(g, x))
            dx->data().array() += dy.data().array() * (g.value(x).data().array() > Scalar(0)).template cast<Scalar>();
    });
}

template <typename Scalar>
Var tanh(Graph<Scalar>& g, Var x)
{
    const auto& vx = g.value(x);
    Tensor<Scalar> out(vx.shape(), vx.data().array().tanh().matrix().eval());
    return g.op(std::move(out), {x}, [x](Graph<Scalar>& g, Var y) {
        const auto& dy = g.grad(y);
        const auto& vy = g.value(y);
        if (auto* dx = detail::grad_if(g, x))
            dx->data().array() += dy.data().array() * (Scalar(1) - vy.data().array().square());
    });
}

template <typename Scalar>
Var sigmoid(Graph<Scalar>& g, Var x)
{
    const auto& vx = g.value(x);
    Tensor<Scalar> out(vx.shape(), (Scalar(1) / (Scalar(1) + (-vx.data().array()).exp())).matrix().eval());
    return g.op(std::move(out), {x}, [x](Graph<Scalar>& g, Var y) {
        const auto& dy = g.grad(y);
        const auto& vy = g.value(y);
        if (auto* dx = detail::grad_if(g, x))
            dx->data().array() += dy.data().array() * vy.data().array() * (Scalar(1) - vy.data().array());
    });
}

/// [N,C,H,W] -> [N,C], spatial mean.
template <typename Scalar>
Var global_avg_pool(Graph<Scalar>& g, Var x)
{
    const auto& vx = g.value(x);
    if (vx.rank() != 4) throw ShapeError("global_avg_pool expects rank 4, got " + shape_string(vx.shape()));
    const int n = vx.dim(0), c = vx.dim(1);
    const Eigen::Index p = static_cast<Eigen::Index>(vx.dim(2)) * vx.dim(3);
    Tensor<Scalar> out(Shape{n, c});
    out.matrix(static_cast<Eigen::Index>(n) * c, 1) = vx.matrix(static_cast<Eigen::Index>(n) * c, p).rowwise().mean();
    return g.op(std::move(out), {x}, [=](Graph<Scalar>& g, Var y) {
        const auto& dy = g.grad(y);
        if (auto* dx = detail::grad_if(g, x))
            dx->matrix(static_cast<Eigen::Index>(n) * c, p).colwise() += dy.data() / static_cast<Scalar>(p);
    });
}

/// Concatenates [N,k_i] tensors along the feature axis.
template <typename Scalar>
Var concat(Graph<Scalar>& g, const std::vector<Var>& parts)
{
    if (parts.empty()) throw ShapeError("concat of nothing");
    const int n = g.value(parts.front()).dim(0);
    std::vector<int> widths;
    int total = 0;
    bool needs = false;
    for (Var v : parts) {
        const auto& t = g.value(v);
        if (t.rank() != 2 || t.dim(0) != n) throw ShapeError("concat: incompatible " + shape_string(t.shape()));
        widths.push_back(t.dim(1));
        total += t.dim(1);
        needs = needs || g.requires_grad(v);
    }
    Tensor<Scalar> out(Shape{n, total});
    auto om = out.matrix(n, total);
    for (int col = 0, i = 0; i < static_cast<int>(parts.size()); col += widths[i], ++i)
        om.middleCols(col, widths[i]) = g.value(parts[i]).matrix(n, widths[i]);
    return g.op(std::move(out), needs, [=](Graph<Scalar>& g, Var y) {
        const auto dy = g.grad(y).matrix(n, total);
        for (int col = 0, i = 0; i < static_cast<int>(parts.size()); col += widths[i], ++i)
            if (auto* dp = detail::grad_if(g, parts[i])) dp->matrix(n, widths[i]) += dy.middleCols(col, widths[i]);
    });
}

/// [N,3] raw head output -> (tanh steer, sigmoid throttle, sigmoid brake).
template <typename Scalar>
Var squash_action(Graph<Scalar>& g, Var x)
{
    const auto& vx = g.value(x);
    if (vx.rank() != 2 || vx.dim(1) != 3) throw ShapeError("squash_action expects [N,3]");
    const int n = vx.dim(0);
    Tensor<Scalar> out(vx.shape());
    for (int i = 0; i < n; ++i) {
        out[3 * i] = std::tanh(vx[3 * i]);
        out[3 * i + 1] = Scalar(1) / (Scalar(1) + std::exp(-vx[3 * i + 1]));
        out[3 * i + 2] = Scalar(1) / (Scalar(1) + std::exp(-vx[3 * i + 2]));
    }
    return g.op(std::move(out), {x}, [x, n](Graph<Scalar>& g, Var y) {
        const auto& dy = g.grad(y);
        const auto& vy = g.value(y);
        if (auto* dx = detail::grad_if(g, x))
            for (int i = 0; i < n; ++i) {
                (*dx)[3 * i] += dy[3 * i] * (Scalar(1) - vy[3 * i] * vy[3 * i]);
                for (int j = 1; j < 3; ++j) (*dx)[3 * i + j] += dy[3 * i + j] * vy[3 * i + j] * (Scalar(1) - vy[3 * i + j]);
            }
    });
}

/// Softmax-normalized compatibility scores over spatial positions.
///
/// local [N,d,H,W] holds the projected local features, global_g [N,d] the
/// global feature and theta [d] the score vector. Score of position i is
/// <local_i + g, theta>; the result is [N, H*W] with rows summing to one.
template <typename Scalar>
Var attention_scores(Graph<Scalar>& g, Var local, Var global_g, Var theta)
{
    const auto& F = g.value(local);
    const auto& G = g.value(global_g);
    const auto& T = g.value(theta);
    if (F.rank() != 4 || G.rank() != 2 || G.dim(0) != F.dim(0) || G.dim(1) != F.dim(1) || T.size() != F.dim(1))
        throw ShapeError("attention_scores: local " + shape_string(F.shape()) + " global " + shape_string(G.shape()) +
                         " theta " + shape_string(T.shape()));
    const int n = F.dim(0), d = F.dim(1);
    const Eigen::Index p = static_cast<Eigen::Index>(F.dim(2)) * F.dim(3);
    Tensor<Scalar> out(Shape{n, static_cast<int>(p)});
    for (int s = 0; s < n; ++s) {
        auto fm = F.matrix(d, p, s * d * p);
        auto row = out.matrix(1, p, s * p);
        row.noalias() = T.data().transpose() * fm;
        row.array() += T.data().dot(G.matrix(1, d, s * d).row(0).transpose());
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
    }
    return g.op(std::move(out), {local, global_g, theta}, [=](Graph<Scalar>& g, Var y) {
        const auto& dy = g.grad(y);
        const auto& w = g.value(y);
        auto* df = detail::grad_if(g, local);
        auto* dg = detail::grad_if(g, global_g);
        auto* dt = detail::grad_if(g, theta);
        const auto& Fv = g.value(local);
        const auto& Gv = g.value(global_g);
        const auto& Tv = g.value(theta);
        Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dc(p);
        for (int s = 0; s < n; ++s) {
            const auto wrow = w.matrix(1, p, s * p);
            const auto dyrow = dy.matrix(1, p, s * p);
            const Scalar inner = wrow.cwiseProduct(dyrow).sum();
            dc = wrow.array() * (dyrow.array() - inner);
            const Scalar dc_sum = dc.sum();
            if (df) df->matrix(d, p, s * d * p).noalias() += Tv.data() * dc;
            if (dg) dg->matrix(1, d, s * d) += dc_sum * Tv.data().transpose();
            if (dt) {
                dt->data().noalias() += Fv.matrix(d, p, s * d * p) * dc.transpose();
                dt->data() += dc_sum * Gv.matrix(1, d, s * d).row(0).transpose();
            }
        }
    });
}

/// Attention-weighted sum of local features: local [N,d,H,W], weights [N,H*W] -> [N,d].
template <typename Scalar>
Var attended_feature(Graph<Scalar>& g, Var local, Var weights)
{
    const auto& F = g.value(local);
    const auto& W = g.value(weights);
    if (F.rank() != 4 || W.rank() != 2 || W.dim(0) != F.dim(0) || W.dim(1) != F.dim(2) * F.dim(3))
        throw ShapeError("attended_feature: local " + shape_string(F.shape()) + " weights " + shape_string(W.shape()));
    const int n = F.dim(0), d = F.dim(1);
    const Eigen::Index p = W.dim(1);
    Tensor<Scalar> out(Shape{n, d});
    for (int s = 0; s < n; ++s)
        out.matrix(d, 1, s * d).noalias() = F.matrix(d, p, s * d * p) * W.matrix(p, 1, s * p);
    return g.op(std::move(out), {local, weights}, [=](Graph<Scalar>& g, Var y) {
        const auto& dy = g.grad(y);
        auto* df = detail::grad_if(g, local);
        auto* dw = detail::grad_if(g, weights);
        for (int s = 0; s < n; ++s) {
            if (df) df->matrix(d, p, s * d * p).noalias() += dy.matrix(d, 1, s * d) * g.value(weights).matrix(1, p, s * p);
            if (dw) dw->matrix(p, 1, s * p).noalias() += g.value(local).matrix(d, p, s * d * p).transpose() * dy.matrix(d, 1, s * d);
        }
    });
}

/// relu(conv2(relu(conv1(x))) + shortcut(x)) with 3x3 convolutions. The
/// shortcut is identity unless shortcut weights are given (1x1, same stride).
template <typename Scalar>
Var residual_block(Graph<Scalar>& g, Var x, Var w1, Var b1, Var w2, Var b2, int stride, Var ws = {}, Var bs = {})
{
    Var h = relu(g, conv2d(g, x, w1, b1, stride, 1));
    h = conv2d(g, h, w2, b2, 1, 1);
    const Var shortcut = ws.id >= 0 ? conv2d(g, x, ws, bs, stride, 0) : x;
    return relu(g, add(g, h, shortcut));
}

/// Row n of the result is row n of heads[selector[n]].
template <typename Scalar>
Var select_rows(Graph<Scalar>& g, const std::vector<Var>& heads, std::span<const int> selector)
{
    if (heads.empty()) throw ShapeError("select_rows of nothing");
    const auto& first = g.value(heads.front());
    const int n = first.dim(0), m = first.dim(1);
    if (static_cast<int>(selector.size()) != n) throw ShapeError("select_rows: selector length mismatch");
    bool needs = false;
    for (Var h : heads) {
        if (g.value(h).shape() != first.shape()) throw ShapeError("select_rows: heads differ in shape");
        needs = needs || g.requires_grad(h);
    }
    std::vector<int> sel(selector.begin(), selector.end());
    Tensor<Scalar> out(Shape{n, m});
    for (int i = 0; i < n; ++i) {
        if (sel[i] < 0 || sel[i] >= static_cast<int>(heads.size())) throw ShapeError("select_rows: selector out of range");
        out.matrix(1, m, i * m) = g.value(heads[sel[i]]).matrix(1, m, i * m);
    }
    return g.op(std::move(out), needs, [heads, sel, n, m](Graph<Scalar>& g, Var y) {
        const auto& dy = g.grad(y);
        for (int i = 0; i < n; ++i)
            if (auto* dh = detail::grad_if(g, heads[sel[i]])) dh->matrix(1, m, i * m) += dy.matrix(1, m, i * m);
    });
}

/// Batch mean of alpha * mean_j |a_j - a*_j| + beta * |s - s*|.
template <typename Scalar>
Var composite_l1_loss(Graph<Scalar>& g, Var pred_action, const Tensor<Scalar>& label_action, Var pred_speed,
                      const Tensor<Scalar>& label_speed, Scalar alpha, Scalar beta)
{
    const auto& pa = g.value(pred_action);
    const auto& ps = g.value(pred_speed);
    if (pa.shape() != label_action.shape() || pa.rank() != 2 || ps.size() != label_speed.size() || ps.size() != pa.dim(0))
        throw ShapeError("composite_l1_loss: shape mismatch");
    const int n = pa.dim(0), m = pa.dim(1);
    const auto da = (pa.data() - label_action.data()).eval();
    const auto ds = (ps.data() - label_speed.data()).eval();
    Tensor<Scalar> out(Shape{1});
    out[0] = (alpha * da.cwiseAbs().sum() / m + beta * ds.cwiseAbs().sum()) / n;
    if (g.track_kinks) {
        std::uint64_t h = 0;
        for (Eigen::Index i = 0; i < da.size(); ++i) h = detail::mix_index(h, 2 * static_cast<std::uint64_t>(i) + (da[i] > 0));
        for (Eigen::Index i = 0; i < ds.size(); ++i) h = detail::mix_index(h, 2 * static_cast<std::uint64_t>(i) + (ds[i] > 0));
        g.mix_digest(h);
    }
    return g.op(std::move(out), {pred_action, pred_speed}, [=](Graph<Scalar>& g, Var y) {
        const Scalar up = g.grad(y)[0];
        if (auto* dpa = detail::grad_if(g, pred_action))
            dpa->data() += (up * alpha / (static_cast<Scalar>(m) * n)) * da.cwiseSign();
        if (auto* dps = detail::grad_if(g, pred_speed)) dps->data() += (up * beta / static_cast<Scalar>(n)) * ds.cwiseSign();
    });
}

/// sum(x * r): a linear scalar probe used by gradient checks.
template <typename Scalar>
Var probe(Graph<Scalar>& g, Var x, const Tensor<Scalar>& r)
{
    const auto& vx = g.value(x);
    if (vx.size() != r.size()) throw ShapeError("probe: size mismatch");
    Tensor<Scalar> out(Shape{1});
    out[0] = vx.data().dot(r.data());
    return g.op(std::move(out), {x}, [x, r](Graph<Scalar>& g, Var y) {
        const Scalar up = g.grad(y)[0];
        if (auto* dx = detail::grad_if(g, x)) dx->data() += up * r.data();
    });
}

} // namespace yawdrive::nn
