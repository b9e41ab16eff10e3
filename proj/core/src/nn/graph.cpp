#include "nn/graph.hpp"

#include <cmath>
#include <numbers>
#include <optional>

#include "medsynth/error.hpp"

namespace medsynth::nn {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

bool wants_grad(const Context& ctx, const Var& v) { return ctx.tape != nullptr && v->requires_grad; }

void accumulate(const Var& v, const Mat& g) {
    if (!v->requires_grad) return;
    if (v->grad.size() == 0)
        v->grad = g;
    else
        v->grad += g;
}

void accumulate_param(const ParamRef& p, const Mat& g) {
    if (p.grad == nullptr) return;
    MatMap(p.grad, p.rows, p.cols) += g;
}

// Intermediate nodes carry gradients whenever a tape is recording, since
// parameters upstream may need them even if the data inputs do not.
Var output_node(const Context& ctx, Shape shape, Mat value) {
    return make_var(shape, std::move(value), ctx.tape != nullptr);
}

Mat im2col3x3(const Mat& x, const Shape& s) {
    const long hw = s.pixels();
    Mat cols = Mat::Zero(static_cast<long>(s.c) * 9, s.cols());
    for (int ci = 0; ci < s.c; ++ci) {
        const double* src = x.row(ci).data();
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                double* dst = cols.row(static_cast<long>(ci) * 9 + ky * 3 + kx).data();
                for (int n = 0; n < s.n; ++n) {
                    const double* img = src + n * hw;
                    double* out = dst + n * hw;
                    for (int y = 0; y < s.h; ++y) {
                        const int sy = y + ky - 1;
                        if (sy < 0 || sy >= s.h) continue;
                        const int x0 = std::max(0, 1 - kx);
                        const int x1 = std::min(s.w, s.w + 1 - kx);
                        for (int xx = x0; xx < x1; ++xx) out[y * s.w + xx] = img[sy * s.w + xx + kx - 1];
                    }
                }
            }
        }
    }
    return cols;
}

void col2im3x3(const Mat& cols, const Shape& s, Mat& dx) {
    const long hw = s.pixels();
    for (int ci = 0; ci < s.c; ++ci) {
        double* dst = dx.row(ci).data();
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const double* src = cols.row(static_cast<long>(ci) * 9 + ky * 3 + kx).data();
                for (int n = 0; n < s.n; ++n) {
                    double* img = dst + n * hw;
                    const double* in = src + n * hw;
                    for (int y = 0; y < s.h; ++y) {
                        const int sy = y + ky - 1;
                        if (sy < 0 || sy >= s.h) continue;
                        const int x0 = std::max(0, 1 - kx);
                        const int x1 = std::min(s.w, s.w + 1 - kx);
                        for (int xx = x0; xx < x1; ++xx) img[sy * s.w + xx + kx - 1] += in[y * s.w + xx];
                    }
                }
            }
        }
    }
}

} // namespace

Var make_var(Shape shape, Mat value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return node;
}

void Tape::backward(const Var& out, Mat seed) {
    out->grad = std::move(seed);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    steps_.clear();
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    return cdf + x * pdf;
}

Var conv3x3(Context& ctx, const Var& x, const ParamRef& weight, const ParamRef* bias) {
    const Shape in = x->shape;
    if (weight.cols != static_cast<long>(in.c) * 9) throw ShapeError("conv3x3: channel mismatch");
    const Shape out_shape{static_cast<int>(weight.rows), in.n, in.h, in.w};
    Mat out(weight.rows, in.cols());
    {
        Mat cols = im2col3x3(x->value, in);
        out.noalias() = weight.value() * cols;
    }
    if (bias != nullptr) out.colwise() += bias->value().col(0);
    Var y = output_node(ctx, out_shape, std::move(out));
    if (ctx.tape != nullptr) {
        const bool grad_x = wants_grad(ctx, x);
        ParamRef w = weight;
        std::optional<ParamRef> b = bias ? std::optional<ParamRef>(*bias) : std::nullopt;
        ctx.tape->record([x, y, w, b, in, grad_x] {
            if (y->grad.size() == 0) return;
            const Mat cols = im2col3x3(x->value, in);
            if (w.grad != nullptr) accumulate_param(w, y->grad * cols.transpose());
            if (b && b->grad != nullptr) accumulate_param(*b, y->grad.rowwise().sum());
            if (grad_x) {
                const Mat dcols = w.value().transpose() * y->grad;
                Mat dx = Mat::Zero(in.c, in.cols());
                col2im3x3(dcols, in, dx);
                accumulate(x, dx);
            }
        });
    }
    return y;
}

Var batch_norm(Context& ctx, const Var& x, const BatchNormRef& norm) {
    const Shape s = x->shape;
    const long m = s.cols();
    if (norm.gamma.rows != s.c) throw ShapeError("batch_norm: channel mismatch");
    std::vector<double> mean(s.c), inv_std(s.c);
    if (ctx.mode == NormMode::Train) {
        if (m < 2) throw ShapeError("batch_norm: training mode needs at least two values per channel");
        BatchStat stat{norm.layer, std::vector<double>(s.c), std::vector<double>(s.c)};
        for (int c = 0; c < s.c; ++c) {
            const auto row = x->value.row(c);
            const double mu = row.mean();
            const double var = (row.array() - mu).square().sum() / static_cast<double>(m);
            mean[c] = mu;
            inv_std[c] = 1.0 / std::sqrt(var + ctx.bn_eps);
            stat.mean[c] = mu;
            stat.var[c] = var * static_cast<double>(m) / static_cast<double>(m - 1);
        }
        if (ctx.stats != nullptr) ctx.stats->push_back(std::move(stat));
    } else {
        for (int c = 0; c < s.c; ++c) {
            mean[c] = norm.running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(norm.running_var[c] + ctx.bn_eps);
        }
    }
    const auto gamma = norm.gamma.value();
    const auto beta = norm.beta.value();
    Mat xhat(s.c, m);
    Mat out(s.c, m);
    for (int c = 0; c < s.c; ++c) {
        xhat.row(c) = (x->value.row(c).array() - mean[c]) * inv_std[c];
        out.row(c) = xhat.row(c).array() * gamma(c, 0) + beta(c, 0);
    }
    Var y = output_node(ctx, s, std::move(out));
    if (ctx.tape != nullptr) {
        const bool grad_x = wants_grad(ctx, x);
        const bool train = ctx.mode == NormMode::Train;
        BatchNormRef nr = norm;
        ctx.tape->record([x, y, nr, xhat = std::move(xhat), inv_std, grad_x, train, s, m] {
            if (y->grad.size() == 0) return;
            const Mat& dy = y->grad;
            Mat dgamma(s.c, 1), dbeta(s.c, 1);
            Mat dx(s.c, m);
            const auto gamma = nr.gamma.value();
            for (int c = 0; c < s.c; ++c) {
                const double sum_dy = dy.row(c).sum();
                const double sum_dy_xhat = dy.row(c).dot(xhat.row(c));
                dgamma(c, 0) = sum_dy_xhat;
                dbeta(c, 0) = sum_dy;
                const double g = gamma(c, 0) * inv_std[c];
                if (train) {
                    const double inv_m = 1.0 / static_cast<double>(m);
                    dx.row(c) = g * (dy.row(c).array() - sum_dy * inv_m - xhat.row(c).array() * (sum_dy_xhat * inv_m));
                } else {
                    dx.row(c) = g * dy.row(c).array();
                }
            }
            accumulate_param(nr.gamma, dgamma);
            accumulate_param(nr.beta, dbeta);
            if (grad_x) accumulate(x, dx);
        });
    }
    return y;
}

Var gelu(Context& ctx, const Var& x) {
    Mat out = x->value.unaryExpr([](double v) { return gelu_value(v); });
    Var y = output_node(ctx, x->shape, std::move(out));
    if (ctx.tape != nullptr && wants_grad(ctx, x)) {
        ctx.tape->record([x, y] {
            if (y->grad.size() == 0) return;
            Mat d = x->value.unaryExpr([](double v) { return gelu_derivative(v); });
            accumulate(x, (y->grad.array() * d.array()).matrix());
        });
    }
    return y;
}

Var add_divided(Context& ctx, const Var& a, const Var& b, double divisor) {
    if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
        throw ShapeError("add: shape mismatch");
    Var y = output_node(ctx, a->shape, (a->value + b->value) / divisor);
    if (ctx.tape != nullptr) {
        const bool ga = wants_grad(ctx, a), gb = wants_grad(ctx, b);
        ctx.tape->record([a, b, y, divisor, ga, gb] {
            if (y->grad.size() == 0) return;
            const Mat g = y->grad / divisor;
            if (ga) accumulate(a, g);
            if (gb) accumulate(b, g);
        });
    }
    return y;
}

Var avg_pool2(Context& ctx, const Var& x) {
    const Shape s = x->shape;
    if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("avg_pool2: odd spatial size");
    const Shape o{s.c, s.n, s.h / 2, s.w / 2};
    Mat out(o.c, o.cols());
    for (int c = 0; c < s.c; ++c) {
        const double* src = x->value.row(c).data();
        double* dst = out.row(c).data();
        for (int n = 0; n < s.n; ++n) {
            const double* img = src + n * s.pixels();
            double* res = dst + n * o.pixels();
            for (int y = 0; y < o.h; ++y)
                for (int xx = 0; xx < o.w; ++xx) {
                    const double* p = img + 2 * y * s.w + 2 * xx;
                    res[y * o.w + xx] = 0.25 * (p[0] + p[1] + p[s.w] + p[s.w + 1]);
                }
        }
    }
    Var y = output_node(ctx, o, std::move(out));
    if (ctx.tape != nullptr && wants_grad(ctx, x)) {
        ctx.tape->record([x, y, s, o] {
            if (y->grad.size() == 0) return;
            Mat dx(s.c, s.cols());
            for (int c = 0; c < s.c; ++c) {
                const double* src = y->grad.row(c).data();
                double* dst = dx.row(c).data();
                for (int n = 0; n < s.n; ++n) {
                    const double* g = src + n * o.pixels();
                    double* img = dst + n * s.pixels();
                    for (int yy = 0; yy < s.h; ++yy)
                        for (int xx = 0; xx < s.w; ++xx) img[yy * s.w + xx] = 0.25 * g[(yy / 2) * o.w + xx / 2];
                }
            }
            accumulate(x, dx);
        });
    }
    return y;
}

Var global_avg_pool(Context& ctx, const Var& x) {
    const Shape s = x->shape;
    const Shape o{s.c, s.n, 1, 1};
    const long hw = s.pixels();
    Mat out(o.c, o.n);
    for (int c = 0; c < s.c; ++c)
        for (int n = 0; n < s.n; ++n) out(c, n) = x->value.row(c).segment(n * hw, hw).mean();
    Var y = output_node(ctx, o, std::move(out));
    if (ctx.tape != nullptr && wants_grad(ctx, x)) {
        ctx.tape->record([x, y, s, hw] {
            if (y->grad.size() == 0) return;
            Mat dx(s.c, s.cols());
            for (int c = 0; c < s.c; ++c)
                for (int n = 0; n < s.n; ++n)
                    dx.row(c).segment(n * hw, hw).setConstant(y->grad(c, n) / static_cast<double>(hw));
            accumulate(x, dx);
        });
    }
    return y;
}

Var conv_transpose(Context& ctx, const Var& x, const ParamRef& weight, const ParamRef* bias, int k) {
    const Shape s = x->shape;
    if (weight.cols != s.c || weight.rows % (static_cast<long>(k) * k) != 0)
        throw ShapeError("conv_transpose: weight shape mismatch");
    const int cout = static_cast<int>(weight.rows / (static_cast<long>(k) * k));
    const Shape o{cout, s.n, s.h * k, s.w * k};
    const Mat tmp = weight.value() * x->value;
    Mat out(o.c, o.cols());
    for (int co = 0; co < cout; ++co) {
        const double b = bias != nullptr ? bias->value()(co, 0) : 0.0;
        double* dst = out.row(co).data();
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const double* src = tmp.row((static_cast<long>(co) * k + ky) * k + kx).data();
                for (int n = 0; n < s.n; ++n)
                    for (int yi = 0; yi < s.h; ++yi)
                        for (int xi = 0; xi < s.w; ++xi)
                            dst[n * o.pixels() + (yi * k + ky) * o.w + xi * k + kx] =
                                src[n * s.pixels() + yi * s.w + xi] + b;
            }
    }
    Var y = output_node(ctx, o, std::move(out));
    if (ctx.tape != nullptr) {
        const bool grad_x = wants_grad(ctx, x);
        ParamRef w = weight;
        std::optional<ParamRef> bref = bias ? std::optional<ParamRef>(*bias) : std::nullopt;
        ctx.tape->record([x, y, w, bref, s, o, k, cout, grad_x] {
            if (y->grad.size() == 0) return;
            Mat gathered(w.rows, s.cols());
            for (int co = 0; co < cout; ++co) {
                const double* src = y->grad.row(co).data();
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        double* dst = gathered.row((static_cast<long>(co) * k + ky) * k + kx).data();
                        for (int n = 0; n < s.n; ++n)
                            for (int yi = 0; yi < s.h; ++yi)
                                for (int xi = 0; xi < s.w; ++xi)
                                    dst[n * s.pixels() + yi * s.w + xi] =
                                        src[n * o.pixels() + (yi * k + ky) * o.w + xi * k + kx];
                    }
            }
            if (w.grad != nullptr) accumulate_param(w, gathered * x->value.transpose());
            if (bref && bref->grad != nullptr) accumulate_param(*bref, y->grad.rowwise().sum());
            if (grad_x) accumulate(x, w.value().transpose() * gathered);
        });
    }
    return y;
}

Var concat_channels(Context& ctx, const Var& a, const Var& b) {
    const Shape sa = a->shape, sb = b->shape;
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) throw ShapeError("concat: spatial mismatch");
    Mat out(sa.c + sb.c, sa.cols());
    out.topRows(sa.c) = a->value;
    out.bottomRows(sb.c) = b->value;
    Var y = output_node(ctx, Shape{sa.c + sb.c, sa.n, sa.h, sa.w}, std::move(out));
    if (ctx.tape != nullptr) {
        const bool ga = wants_grad(ctx, a), gb = wants_grad(ctx, b);
        ctx.tape->record([a, b, y, sa, sb, ga, gb] {
            if (y->grad.size() == 0) return;
            if (ga) accumulate(a, y->grad.topRows(sa.c));
            if (gb) accumulate(b, y->grad.bottomRows(sb.c));
        });
    }
    return y;
}

Var modulate(Context& ctx, const Var& h, const Var& scale, const Var& shift) {
    const Shape s = h->shape;
    if (scale->shape.c != s.c || scale->shape.n != s.n || shift->shape.c != s.c || shift->shape.n != s.n)
        throw ShapeError("modulate: embedding shape mismatch");
    const long hw = s.pixels();
    Mat out(s.c, s.cols());
    for (int c = 0; c < s.c; ++c)
        for (int n = 0; n < s.n; ++n)
            out.row(c).segment(n * hw, hw) =
                h->value.row(c).segment(n * hw, hw).array() * (1.0 + scale->value(c, n)) + shift->value(c, n);
    Var y = output_node(ctx, s, std::move(out));
    if (ctx.tape != nullptr) {
        const bool gh = wants_grad(ctx, h), gs = wants_grad(ctx, scale), ga = wants_grad(ctx, shift);
        ctx.tape->record([h, scale, shift, y, s, hw, gh, gs, ga] {
            if (y->grad.size() == 0) return;
            Mat dh(s.c, s.cols());
            Mat ds(s.c, s.n), da(s.c, s.n);
            for (int c = 0; c < s.c; ++c)
                for (int n = 0; n < s.n; ++n) {
                    const auto g = y->grad.row(c).segment(n * hw, hw);
                    dh.row(c).segment(n * hw, hw) = g * (1.0 + scale->value(c, n));
                    ds(c, n) = g.dot(h->value.row(c).segment(n * hw, hw));
                    da(c, n) = g.sum();
                }
            if (gh) accumulate(h, dh);
            if (gs) accumulate(scale, ds);
            if (ga) accumulate(shift, da);
        });
    }
    return y;
}

Var linear(Context& ctx, const Var& x, const ParamRef& weight, const ParamRef& bias) {
    if (weight.cols != x->shape.c || bias.rows != weight.rows) throw ShapeError("linear: shape mismatch");
    Mat out = weight.value() * x->value;
    out.colwise() += bias.value().col(0);
    Var y = output_node(ctx, Shape{static_cast<int>(weight.rows), x->shape.n, 1, 1}, std::move(out));
    if (ctx.tape != nullptr) {
        const bool grad_x = wants_grad(ctx, x);
        ctx.tape->record([x, y, weight, bias, grad_x] {
            if (y->grad.size() == 0) return;
            accumulate_param(weight, y->grad * x->value.transpose());
            accumulate_param(bias, y->grad.rowwise().sum());
            if (grad_x) accumulate(x, weight.value().transpose() * y->grad);
        });
    }
    return y;
}

Var conv_block(Context& ctx, const Var& x, const ConvBlockRef& block) {
    return gelu(ctx, batch_norm(ctx, conv3x3(ctx, x, block.weight, nullptr), block.norm));
}

ResidualOutput residual_block_traced(Context& ctx, const Var& x, const ConvBlockRef& a, const ConvBlockRef& b) {
    if (a.weight.rows != x->shape.c || b.weight.rows != x->shape.c)
        throw ShapeError("residual_block: block width must match input channels");
    Var branch = conv_block(ctx, conv_block(ctx, x, a), b);
    return {add_divided(ctx, x, branch, std::numbers::sqrt2), branch};
}

} // namespace medsynth::nn
