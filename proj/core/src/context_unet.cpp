#include "medsynth/context_unet.hpp"

#include <cmath>
#include <numbers>

#include "medsynth/error.hpp"
#include "medsynth/rng.hpp"
#include "nn/graph.hpp"

namespace medsynth {
namespace {

using nn::Context;
using nn::ConvBlockRef;
using nn::Mat;
using nn::ParamRef;
using nn::Var;

struct ConvBlockIdx {
    int weight = -1;
    int gamma = -1;
    int beta = -1;
    int norm = -1;  // batch-norm layer number; buffers 2*norm and 2*norm+1
};
struct ResidualIdx {
    ConvBlockIdx a, b;
};
struct LinearIdx {
    int weight = -1;
    int bias = -1;
};

// Architecture (S = image_size, C = base_channels):
//   h0 = Res(ConvBlock(x: 1 -> C))                          C  x S
//   d1 = AvgPool(Res(h0))                                   C  x S/2
//   d2 = AvgPool(Res(ConvBlock(d1: C -> 2C)))               2C x S/4
//   v  = GELU(GlobalAvg(d2))                                2C x 1
//   u0 = GELU(BN(ConvT_{S/4}(v)))                           2C x S/4
//   u1 = Res(ConvT_2(concat(u0 * (1 + s1) + a1, d2)))       C  x S/2
//   u2 = Res(ConvT_2(concat(u1 * (1 + s2) + a2, d1)))       C  x S
//   out = Conv3x3(ConvBlock(concat(u2, h0)))                1  x S
// s_i are projections of the class embedding (multiplicative injection),
// a_i projections of the time embedding (additive injection).
struct Layout {
    std::vector<TensorSpec> specs;
    std::vector<std::pair<long, long>> mats;
    std::vector<TensorSpec> buffers;

    LinearIdx class1, class2, time1, time2;
    LinearIdx scale1, shift1, scale2, shift2;
    ConvBlockIdx init_conv;
    ResidualIdx init_res, down1_res;
    ConvBlockIdx down2_conv;
    ResidualIdx down2_res;
    int up0_weight = -1;
    int up0_gamma = -1, up0_beta = -1, up0_norm = -1;
    int up1_weight = -1, up1_bias = -1;
    ResidualIdx up1_res;
    int up2_weight = -1, up2_bias = -1;
    ResidualIdx up2_res;
    ConvBlockIdx out_conv;
    int out_weight = -1, out_bias = -1;

    int add(std::string name, std::vector<int> shape, long rows, long cols, int fan_in, double fill = 0.0) {
        specs.push_back({std::move(name), std::move(shape), fan_in, fill});
        mats.emplace_back(rows, cols);
        return static_cast<int>(specs.size()) - 1;
    }

    LinearIdx add_linear(const std::string& name, int out, int in) {
        return {add(name + ".weight", {out, in}, out, in, in), add(name + ".bias", {out}, out, 1, in)};
    }

    int add_norm(const std::string& name, int channels) {
        const int layer = static_cast<int>(buffers.size() / 2);
        buffers.push_back({name + ".running_mean", {channels}, 0, 0.0});
        buffers.push_back({name + ".running_var", {channels}, 0, 1.0});
        return layer;
    }

    ConvBlockIdx add_conv_block(const std::string& name, int cin, int cout) {
        ConvBlockIdx idx;
        idx.weight = add(name + ".conv.weight", {cout, cin, 3, 3}, cout, static_cast<long>(cin) * 9, cin * 9);
        idx.gamma = add(name + ".bn.gamma", {cout}, cout, 1, 0, 1.0);
        idx.beta = add(name + ".bn.beta", {cout}, cout, 1, 0, 0.0);
        idx.norm = add_norm(name + ".bn", cout);
        return idx;
    }

    ResidualIdx add_residual(const std::string& name, int channels) {
        return {add_conv_block(name + ".a", channels, channels), add_conv_block(name + ".b", channels, channels)};
    }
};

Layout build_layout(const NetworkConfig& cfg) {
    cfg.validate();
    const int c = cfg.base_channels;
    const int e = cfg.embed_dim;
    const int k0 = cfg.image_size / 4;
    Layout l;
    l.class1 = l.add_linear("class_embed.fc1", e, cfg.n_classes);
    l.class2 = l.add_linear("class_embed.fc2", e, e);
    l.time1 = l.add_linear("time_embed.fc1", e, 1);
    l.time2 = l.add_linear("time_embed.fc2", e, e);
    l.scale1 = l.add_linear("up1.class_scale", 2 * c, e);
    l.shift1 = l.add_linear("up1.time_shift", 2 * c, e);
    l.scale2 = l.add_linear("up2.class_scale", c, e);
    l.shift2 = l.add_linear("up2.time_shift", c, e);

    l.init_conv = l.add_conv_block("init", 1, c);
    l.init_res = l.add_residual("init.res", c);
    l.down1_res = l.add_residual("down1.res", c);
    l.down2_conv = l.add_conv_block("down2", c, 2 * c);
    l.down2_res = l.add_residual("down2.res", 2 * c);

    l.up0_weight = l.add("up0.convt.weight", {2 * c, k0, k0, 2 * c}, 2L * c * k0 * k0, 2 * c, 2 * c);
    l.up0_gamma = l.add("up0.bn.gamma", {2 * c}, 2 * c, 1, 0, 1.0);
    l.up0_beta = l.add("up0.bn.beta", {2 * c}, 2 * c, 1, 0, 0.0);
    l.up0_norm = l.add_norm("up0.bn", 2 * c);

    l.up1_weight = l.add("up1.convt.weight", {c, 2, 2, 4 * c}, 4L * c, 4 * c, 4 * c);
    l.up1_bias = l.add("up1.convt.bias", {c}, c, 1, 4 * c);
    l.up1_res = l.add_residual("up1.res", c);
    l.up2_weight = l.add("up2.convt.weight", {c, 2, 2, 2 * c}, 4L * c, 2 * c, 2 * c);
    l.up2_bias = l.add("up2.convt.bias", {c}, c, 1, 2 * c);
    l.up2_res = l.add_residual("up2.res", c);

    l.out_conv = l.add_conv_block("out", 2 * c, c);
    l.out_weight = l.add("out.proj.weight", {1, c, 3, 3}, 1, 9L * c, 9 * c);
    l.out_bias = l.add("out.proj.bias", {1}, 1, 1, 9 * c);
    return l;
}

class Binder {
public:
    Binder(const Layout& layout, const NetworkParams& params, std::vector<std::vector<double>>* grads)
        : layout_(layout), params_(params), grads_(grads) {}

    ParamRef p(int idx) const {
        ParamRef r;
        r.data = params_.tensors[idx].values.data();
        r.grad = grads_ != nullptr ? (*grads_)[idx].data() : nullptr;
        r.rows = layout_.mats[idx].first;
        r.cols = layout_.mats[idx].second;
        return r;
    }

    nn::BatchNormRef norm(int gamma, int beta, int layer) const {
        return {layer, p(gamma), p(beta), params_.buffers[2 * layer].values.data(),
                params_.buffers[2 * layer + 1].values.data()};
    }

    ConvBlockRef block(const ConvBlockIdx& i) const { return {p(i.weight), norm(i.gamma, i.beta, i.norm)}; }

private:
    const Layout& layout_;
    const NetworkParams& params_;
    std::vector<std::vector<double>>* grads_;
};

Var mlp(Context& ctx, const Binder& b, const Var& in, const LinearIdx& l1, const LinearIdx& l2) {
    Var h = nn::gelu(ctx, nn::linear(ctx, in, b.p(l1.weight), b.p(l1.bias)));
    return nn::gelu(ctx, nn::linear(ctx, h, b.p(l2.weight), b.p(l2.bias)));
}

Var residual(Context& ctx, const Binder& b, const Var& x, const ResidualIdx& r) {
    return nn::residual_block(ctx, x, b.block(r.a), b.block(r.b));
}

Var run_network(Context& ctx, const Layout& l, const Binder& b, const NetworkConfig& cfg, const Var& x,
                const Var& context, const Var& time) {
    Var cemb = mlp(ctx, b, context, l.class1, l.class2);
    Var temb = mlp(ctx, b, time, l.time1, l.time2);

    Var h0 = residual(ctx, b, nn::conv_block(ctx, x, b.block(l.init_conv)), l.init_res);
    Var d1 = nn::avg_pool2(ctx, residual(ctx, b, h0, l.down1_res));
    Var d2 = nn::avg_pool2(ctx, residual(ctx, b, nn::conv_block(ctx, d1, b.block(l.down2_conv)), l.down2_res));
    Var v = nn::gelu(ctx, nn::global_avg_pool(ctx, d2));

    Var u0 = nn::conv_transpose(ctx, v, b.p(l.up0_weight), nullptr, cfg.image_size / 4);
    u0 = nn::gelu(ctx, nn::batch_norm(ctx, u0, b.norm(l.up0_gamma, l.up0_beta, l.up0_norm)));
    Var g1 = nn::modulate(ctx, u0, nn::linear(ctx, cemb, b.p(l.scale1.weight), b.p(l.scale1.bias)),
                          nn::linear(ctx, temb, b.p(l.shift1.weight), b.p(l.shift1.bias)));

    const ParamRef up1_bias = b.p(l.up1_bias);
    Var u1 = nn::conv_transpose(ctx, nn::concat_channels(ctx, g1, d2), b.p(l.up1_weight), &up1_bias, 2);
    u1 = residual(ctx, b, u1, l.up1_res);
    Var g2 = nn::modulate(ctx, u1, nn::linear(ctx, cemb, b.p(l.scale2.weight), b.p(l.scale2.bias)),
                          nn::linear(ctx, temb, b.p(l.shift2.weight), b.p(l.shift2.bias)));

    const ParamRef up2_bias = b.p(l.up2_bias);
    Var u2 = nn::conv_transpose(ctx, nn::concat_channels(ctx, g2, d1), b.p(l.up2_weight), &up2_bias, 2);
    u2 = residual(ctx, b, u2, l.up2_res);

    Var o = nn::conv_block(ctx, nn::concat_channels(ctx, u2, h0), b.block(l.out_conv));
    const ParamRef out_bias = b.p(l.out_bias);
    return nn::conv3x3(ctx, o, b.p(l.out_weight), &out_bias);
}

struct PreparedInput {
    Var x, context, time;
    int n = 0;
};

PreparedInput prepare(const NetworkParams& params, const NetworkInput& in) {
    const NetworkConfig& cfg = params.config;
    const int n = static_cast<int>(in.xt.size());
    const int s = cfg.image_size;
    if (in.classes.n_classes != cfg.n_classes) throw ShapeError("class vector length differs from n_classes");
    if (in.classes.batch_size() != static_cast<std::size_t>(n) || in.mask.keep.size() != static_cast<std::size_t>(n) ||
        in.t.size() != static_cast<std::size_t>(n))
        throw ShapeError("batch dimensions disagree");
    if (in.steps < 1) throw InvalidArgument("steps must be positive");

    const long hw = static_cast<long>(s) * s;
    Mat x(1, n * hw);
    Mat context(cfg.n_classes, n);
    Mat time(1, n);
    for (int i = 0; i < n; ++i) {
        const ImageTensor& img = in.xt[i];
        if (img.height != s || img.width != s) throw ShapeError("input image size differs from the network config");
        std::copy(img.values.begin(), img.values.end(), x.data() + i * hw);
        const std::uint8_t keep = in.mask.keep[i];
        if (keep > 1) throw InvalidArgument("context mask values must be 0 or 1");
        for (int k = 0; k < cfg.n_classes; ++k)
            context(k, i) = in.classes.values[static_cast<std::size_t>(i) * cfg.n_classes + k] * keep;
        const int t = in.t[i];
        if (t < 1 || t > in.steps) throw InvalidArgument("step index outside [1, steps]");
        time(0, i) = static_cast<double>(t) / in.steps;
    }
    PreparedInput p;
    p.n = n;
    p.x = nn::make_var({1, n, s, s}, std::move(x), false);
    p.context = nn::make_var({cfg.n_classes, n, 1, 1}, std::move(context), false);
    p.time = nn::make_var({1, n, 1, 1}, std::move(time), false);
    return p;
}

nn::NormMode to_nn(NormMode m) { return m == NormMode::Train ? nn::NormMode::Train : nn::NormMode::Inference; }

void check_finite(const Mat& m, const char* what) {
    if (!m.allFinite()) throw DivergenceError(std::string("non-finite ") + what, -1);
}

std::vector<BatchNormStats> convert(std::vector<nn::BatchStat>&& stats) {
    std::vector<BatchNormStats> out;
    out.reserve(stats.size());
    for (auto& s : stats) out.push_back({s.layer, std::move(s.mean), std::move(s.var)});
    return out;
}

} // namespace

void NetworkConfig::validate() const {
    if (n_classes < 1 || base_channels < 1 || embed_dim < 1 || image_size < 1)
        throw InvalidArgument("network config fields must be positive");
    if (image_size < 8 || image_size % 4 != 0)
        throw InvalidArgument("image_size must be at least 8 and divisible by 4");
}

std::size_t NetworkParams::parameter_count() const {
    std::size_t total = 0;
    for (const auto& t : tensors) total += t.numel();
    return total;
}

const NamedTensor& NetworkParams::tensor(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw InvalidArgument("no parameter tensor named " + name);
}

NamedTensor& NetworkParams::tensor(const std::string& name) {
    return const_cast<NamedTensor&>(std::as_const(*this).tensor(name));
}

std::vector<TensorSpec> describe_parameters(const NetworkConfig& config) { return build_layout(config).specs; }

std::vector<TensorSpec> describe_buffers(const NetworkConfig& config) { return build_layout(config).buffers; }

std::size_t parameter_count(const NetworkConfig& config) {
    std::size_t total = 0;
    for (const auto& spec : describe_parameters(config)) {
        std::size_t n = 1;
        for (int d : spec.shape) n *= static_cast<std::size_t>(d);
        total += n;
    }
    return total;
}

void round_to_float32(std::vector<double>& values) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

NetworkParams init_network(const NetworkConfig& config, std::uint64_t seed) {
    const Layout layout = build_layout(config);
    NetworkParams params;
    params.config = config;
    Rng rng(seed);
    auto materialize = [](const TensorSpec& spec) {
        std::size_t n = 1;
        for (int d : spec.shape) n *= static_cast<std::size_t>(d);
        return NamedTensor{spec.name, spec.shape, std::vector<double>(n, spec.fill)};
    };
    for (const auto& spec : layout.specs) {
        NamedTensor t = materialize(spec);
        if (spec.fan_in > 0) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
            for (double& v : t.values) v = (2.0 * rng.uniform() - 1.0) * bound;
            round_to_float32(t.values);
        }
        params.tensors.push_back(std::move(t));
    }
    for (const auto& spec : layout.buffers) params.buffers.push_back(materialize(spec));
    return params;
}

OneHotBatch OneHotBatch::from_labels(std::span<const int> labels, int n_classes) {
    OneHotBatch batch;
    batch.n_classes = n_classes;
    batch.values.assign(labels.size() * static_cast<std::size_t>(n_classes), 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes) throw InvalidArgument("class label out of range");
        batch.values[i * n_classes + labels[i]] = 1.0;
    }
    return batch;
}

std::vector<double> embed_class(std::span<const double> one_hot, bool keep, const NetworkParams& params) {
    const NetworkConfig& cfg = params.config;
    if (static_cast<int>(one_hot.size()) != cfg.n_classes) throw ShapeError("class vector length differs from n_classes");
    const Layout layout = build_layout(cfg);
    const Binder binder(layout, params, nullptr);
    Context ctx;
    Mat c(cfg.n_classes, 1);
    for (int k = 0; k < cfg.n_classes; ++k) c(k, 0) = keep ? one_hot[k] : 0.0;
    Var in = nn::make_var({cfg.n_classes, 1, 1, 1}, std::move(c), false);
    Var out = mlp(ctx, binder, in, layout.class1, layout.class2);
    return {out->value.data(), out->value.data() + out->value.size()};
}

std::vector<ImageTensor> forward(const NetworkParams& params, const NetworkInput& input, NormMode mode) {
    const Layout layout = build_layout(params.config);
    const int s = params.config.image_size;
    if (input.xt.empty()) return {};
    PreparedInput in = prepare(params, input);
    const Binder binder(layout, params, nullptr);
    Context ctx;
    ctx.mode = to_nn(mode);
    Var out = run_network(ctx, layout, binder, params.config, in.x, in.context, in.time);
    check_finite(out->value, "activation in forward pass");
    std::vector<ImageTensor> result;
    result.reserve(in.n);
    const long hw = static_cast<long>(s) * s;
    for (int i = 0; i < in.n; ++i)
        result.emplace_back(s, s, std::vector<double>(out->value.data() + i * hw, out->value.data() + (i + 1) * hw));
    return result;
}

LossGradients gradients(const NetworkParams& params, const NetworkInput& input, std::span<const ImageTensor> eps,
                        NormMode mode) {
    const Layout layout = build_layout(params.config);
    if (eps.size() != input.xt.size()) throw ShapeError("noise batch size differs from input batch");
    if (input.xt.empty()) throw InvalidArgument("empty batch");
    PreparedInput in = prepare(params, input);

    LossGradients result;
    result.grads.reserve(params.tensors.size());
    for (const auto& t : params.tensors) result.grads.emplace_back(t.numel(), 0.0);

    const Binder binder(layout, params, &result.grads);
    nn::Tape tape;
    std::vector<nn::BatchStat> stats;
    Context ctx;
    ctx.mode = to_nn(mode);
    ctx.tape = &tape;
    ctx.stats = &stats;
    Var out = run_network(ctx, layout, binder, params.config, in.x, in.context, in.time);
    check_finite(out->value, "activation in forward pass");

    const long hw = out->value.cols() / in.n;
    Mat target(1, out->value.cols());
    for (int i = 0; i < in.n; ++i) {
        if (eps[i].size() != static_cast<std::size_t>(hw)) throw ShapeError("noise image size mismatch");
        std::copy(eps[i].values.begin(), eps[i].values.end(), target.data() + i * hw);
    }
    const Mat diff = out->value - target;
    const double count = static_cast<double>(diff.size());
    result.loss = diff.squaredNorm() / count;
    tape.backward(out, diff * (2.0 / count));
    result.batch_stats = convert(std::move(stats));
    return result;
}

void update_running_stats(NetworkParams& params, std::span<const BatchNormStats> stats, double momentum) {
    for (const auto& s : stats) {
        auto& mean = params.buffers.at(2 * s.layer).values;
        auto& var = params.buffers.at(2 * s.layer + 1).values;
        if (mean.size() != s.mean.size()) throw ShapeError("batch statistics do not match the layer width");
        for (std::size_t c = 0; c < mean.size(); ++c) {
            mean[c] = (1.0 - momentum) * mean[c] + momentum * s.mean[c];
            var[c] = (1.0 - momentum) * var[c] + momentum * s.var[c];
        }
        round_to_float32(mean);
        round_to_float32(var);
    }
}

} // namespace medsynth
