#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <optional>
#include <span>
#include <vector>

#include "medsynth/checkpoint.hpp"
#include "medsynth/context_unet.hpp"
#include "medsynth/data_io.hpp"
#include "medsynth/history.hpp"
#include "medsynth/image.hpp"
#include "medsynth/rng.hpp"
#include "medsynth/schedule.hpp"

namespace medsynth {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 128;
    double learning_rate = 1e-4;
    double p_drop = 0.1;
    std::uint64_t seed = 0;
    int eval_every = 50;  // 0 disables evaluation

    void validate() const;
};

struct GuidanceConfig {
    double w = 2.0;
    int sample_steps = 0;  // 0 means the full schedule

    void validate(const NoiseSchedule& schedule) const;
};

// Adam moments, one vector per learnable tensor, kept at float32 precision.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState for_params(const NetworkParams& params);
};

struct MaskedContext {
    OneHotBatch classes;
    ContextMask mask;
};

// Keeps each row with probability 1 - p_drop; dropped rows become zero.
MaskedContext apply_context_mask(const OneHotBatch& classes, double p_drop, Rng& rng);

// One optimizer update on a batch of images in [-1, 1]. Draws t uniformly per
// image, eps ~ N(0, I), then the context mask. Returns the batch loss.
// Throws DivergenceError (where = -1) on a non-finite loss.
double train_step(NetworkParams& params, std::span<const ImageTensor> images, std::span<const int> labels,
                  const NoiseSchedule& schedule, const TrainConfig& config, AdamState& optimizer, Rng& rng);

// Returns fid, ssim, psnr for a parameter snapshot at a given epoch.
struct EvalPoint {
    double fid = 0.0;
    double ssim = 0.0;
    double psnr = 0.0;
};
using EvalHook = std::function<EvalPoint(const NetworkParams& params, int epoch)>;

struct TrainOptions {
    EvalHook evaluate;                           // called every eval_every epochs
    std::filesystem::path checkpoint_dir;        // empty: keep checkpoints in memory only
    int checkpoint_every = 0;                    // 0: only the final checkpoint
    std::optional<Checkpoint> resume;            // continue from a train() checkpoint
    std::function<void(int epoch, double loss)> on_epoch;
    std::map<std::string, std::string> metadata;  // copied into every checkpoint
};

struct TrainResult {
    Checkpoint checkpoint;  // carries optimizer and RNG state for resuming
    TrainingHistory history;
    std::vector<double> epoch_losses;  // epochs run in this call only
};

// Epoch loop over a shuffled dataset (images in [0, 1]). Writes
// <checkpoint_dir>/epoch_<n>.ckpt and <checkpoint_dir>/final.ckpt when a
// directory is given. DivergenceError::where() is the failing epoch.
TrainResult train(const LabeledImageSet& dataset, const NetworkConfig& network, const TrainConfig& config,
                  const NoiseSchedule& schedule, const TrainOptions& options = {});

// (1 + w) * eps_cond - w * eps_uncond
ImageTensor cfg_combine(const ImageTensor& eps_cond, const ImageTensor& eps_uncond, double w);
double cfg_combine(double eps_cond, double eps_uncond, double w);

// Batched noise prediction; lets tests substitute oracles for the network.
using NoisePredictor = std::function<std::vector<ImageTensor>(const NetworkInput& input)>;
NoisePredictor network_predictor(const NetworkParams& params);

struct SampleOptions {
    int threads = 1;
    // Images share a forward pass in groups of this size. Results depend on
    // the seed and chunk size only, never on the thread count.
    int chunk = 8;
};

// Reverse diffusion from x_T ~ N(0, I) with guidance. Image i draws its noise
// from derive_seed(seed, i). Output is clamped to [-1, 1].
std::vector<ImageTensor> sample(const NetworkParams& params, const NoiseSchedule& schedule, int class_label,
                                int count, const GuidanceConfig& guidance, std::uint64_t seed,
                                const SampleOptions& options = {});

std::vector<ImageTensor> sample_with(const NoisePredictor& predictor, const NoiseSchedule& schedule, int n_classes,
                                     int image_size, int class_label, int count, const GuidanceConfig& guidance,
                                     std::uint64_t seed, const SampleOptions& options = {});

// count images for every class, returned in [0, 1] with labels; class c
// uses derive_seed(seed, c) as its sampling seed.
LabeledImageSet sample_dataset(const NetworkParams& params, const NoiseSchedule& schedule,
                               const std::vector<std::string>& class_names, int per_class,
                               const GuidanceConfig& guidance, std::uint64_t seed, const SampleOptions& options = {});

} // namespace medsynth
