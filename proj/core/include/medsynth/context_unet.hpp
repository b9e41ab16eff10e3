#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "medsynth/image.hpp"

namespace medsynth {

struct NetworkConfig {
    int n_classes = 2;
    int base_channels = 16;
    int image_size = 32;  // square; divisible by 4 for the two pooling stages
    int embed_dim = 32;

    void validate() const;
    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;

    std::size_t numel() const noexcept { return values.size(); }
};

// Learnable tensors plus the batch-norm running statistics. Tensor order and
// shapes are a pure function of the config; see describe_parameters().
struct NetworkParams {
    NetworkConfig config;
    std::vector<NamedTensor> tensors;
    std::vector<NamedTensor> buffers;

    std::size_t parameter_count() const;
    const NamedTensor& tensor(const std::string& name) const;
    NamedTensor& tensor(const std::string& name);
};

struct TensorSpec {
    std::string name;
    std::vector<int> shape;
    int fan_in = 0;  // 0: constant init (gamma = 1, beta = 0)
    double fill = 0.0;
};

std::vector<TensorSpec> describe_parameters(const NetworkConfig& config);
std::vector<TensorSpec> describe_buffers(const NetworkConfig& config);
std::size_t parameter_count(const NetworkConfig& config);

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), batch-norm scale 1 and shift 0,
// running mean 0 and variance 1. Values are rounded to float32 so checkpoints
// hold them exactly.
NetworkParams init_network(const NetworkConfig& config, std::uint64_t seed);

// Per-sample conditioning switch: 1 keeps the class vector, 0 replaces it
// with the zero vector (the unconditional context).
struct ContextMask {
    std::vector<std::uint8_t> keep;
};

// Row-major batch of class vectors, one row of n_classes per sample.
struct OneHotBatch {
    int n_classes = 0;
    std::vector<double> values;

    std::size_t batch_size() const { return n_classes == 0 ? 0 : values.size() / n_classes; }
    static OneHotBatch from_labels(std::span<const int> labels, int n_classes);
};

enum class NormMode { Train, Inference };

// GELU(W2 GELU(W1 (c * keep) + b1) + b2)
std::vector<double> embed_class(std::span<const double> one_hot, bool keep, const NetworkParams& params);

struct NetworkInput {
    std::vector<ImageTensor> xt;
    OneHotBatch classes;
    ContextMask mask;
    std::vector<int> t;  // 1..steps; the network sees t / steps
    int steps = 0;
};

// Noise prediction for every image in the batch. In Train mode batch-norm
// uses batch statistics; in Inference mode the running statistics, which
// makes every output depend only on its own sample.
std::vector<ImageTensor> forward(const NetworkParams& params, const NetworkInput& input,
                                 NormMode mode = NormMode::Inference);

struct BatchNormStats {
    int layer = 0;
    std::vector<double> mean;
    std::vector<double> var;
};

struct LossGradients {
    double loss = 0.0;
    std::vector<std::vector<double>> grads;  // parallel to params.tensors
    std::vector<BatchNormStats> batch_stats;
};

// Mean squared error between eps and the prediction, averaged over every
// pixel of every sample, with gradients for every learnable tensor.
LossGradients gradients(const NetworkParams& params, const NetworkInput& input, std::span<const ImageTensor> eps,
                        NormMode mode = NormMode::Train);

// running = (1 - momentum) * running + momentum * observed
void update_running_stats(NetworkParams& params, std::span<const BatchNormStats> stats, double momentum = 0.1);

// Rounds every value to the nearest float32.
void round_to_float32(std::vector<double>& values);

} // namespace medsynth
