#pragma once

// Minimal reverse-mode graph over channel-major feature maps.
//
// Every feature map is stored as a (channels x batch*height*width) row-major
// matrix, so convolutions become one GEMM over the whole batch and batch
// normalization reduces along contiguous rows. Embedding vectors use the same
// node type with height = width = 1.

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <vector>

namespace medsynth::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

struct Shape {
    int c = 0;
    int n = 0;
    int h = 1;
    int w = 1;

    long pixels() const { return static_cast<long>(h) * w; }
    long cols() const { return static_cast<long>(n) * h * w; }
};

struct Node {
    Shape shape;
    Mat value;
    Mat grad;  // empty until a gradient arrives
    bool requires_grad = true;
};
using Var = std::shared_ptr<Node>;

Var make_var(Shape shape, Mat value, bool requires_grad = true);

// A parameter tensor viewed as a matrix, with an optional gradient buffer of
// the same size.
struct ParamRef {
    const double* data = nullptr;
    double* grad = nullptr;
    long rows = 0;
    long cols = 0;

    ConstMatMap value() const { return ConstMatMap(data, rows, cols); }
};

enum class NormMode { Train, Inference };

// Per-channel statistics observed by a batch-norm layer in training mode.
struct BatchStat {
    int layer = 0;
    std::vector<double> mean;
    std::vector<double> var;  // unbiased
};

class Tape {
public:
    void record(std::function<void()> step) { steps_.push_back(std::move(step)); }
    // Seeds out->grad and replays the recorded steps in reverse.
    void backward(const Var& out, Mat seed);

private:
    std::vector<std::function<void()>> steps_;
};

struct Context {
    NormMode mode = NormMode::Inference;
    Tape* tape = nullptr;  // null: no gradients recorded
    std::vector<BatchStat>* stats = nullptr;
    double bn_eps = 1e-5;
};

struct BatchNormRef {
    int layer = 0;
    ParamRef gamma;
    ParamRef beta;
    const double* running_mean = nullptr;
    const double* running_var = nullptr;
};

// conv3x3 (no bias) -> batch norm -> GELU
struct ConvBlockRef {
    ParamRef weight;  // cout x cin*9
    BatchNormRef norm;
};

Var conv3x3(Context& ctx, const Var& x, const ParamRef& weight, const ParamRef* bias);
Var batch_norm(Context& ctx, const Var& x, const BatchNormRef& norm);
Var gelu(Context& ctx, const Var& x);
// (a + b) / divisor
Var add_divided(Context& ctx, const Var& a, const Var& b, double divisor);
Var avg_pool2(Context& ctx, const Var& x);
Var global_avg_pool(Context& ctx, const Var& x);
// Non-overlapping transposed convolution, kernel == stride == k.
// weight rows are ordered (cout, ky, kx), columns are cin.
Var conv_transpose(Context& ctx, const Var& x, const ParamRef& weight, const ParamRef* bias, int k);
Var concat_channels(Context& ctx, const Var& a, const Var& b);
// h * (1 + scale) + shift, with scale/shift of shape (c, n, 1, 1).
Var modulate(Context& ctx, const Var& h, const Var& scale, const Var& shift);
Var linear(Context& ctx, const Var& x, const ParamRef& weight, const ParamRef& bias);

Var conv_block(Context& ctx, const Var& x, const ConvBlockRef& block);

struct ResidualOutput {
    Var out;
    Var branch;
};
// (x + block_b(block_a(x))) / sqrt(2)
ResidualOutput residual_block_traced(Context& ctx, const Var& x, const ConvBlockRef& a, const ConvBlockRef& b);
inline Var residual_block(Context& ctx, const Var& x, const ConvBlockRef& a, const ConvBlockRef& b) {
    return residual_block_traced(ctx, x, a, b).out;
}

double gelu_value(double x);
double gelu_derivative(double x);

} // namespace medsynth::nn
