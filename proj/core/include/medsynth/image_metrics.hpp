#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "medsynth/data_io.hpp"
#include "medsynth/history.hpp"
#include "medsynth/image.hpp"

namespace medsynth {

// Gaussian moments of a feature set. sigma is dim x dim, row-major.
struct FrechetStats {
    std::size_t dim = 0;
    std::vector<double> mu;
    std::vector<double> sigma;
};

using FeatureSet = std::vector<std::vector<double>>;

// Deterministic image -> fixed-length feature map. Images arrive in [0, 1].
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string name() const = 0;
    virtual std::vector<double> extract(const ImageTensor& image) const = 0;
};

// Average-pools to 8x8 and flattens (64 features). Image sides must be
// multiples of 8.
class Pool8Extractor final : public FeatureExtractor {
public:
    std::string name() const override { return "pool8"; }
    std::vector<double> extract(const ImageTensor& image) const override;
};

FeatureSet extract_features(const FeatureExtractor& extractor, const std::vector<ImageTensor>& images, int threads = 1);

// Externally computed features: one vector per line, whitespace separated.
FeatureSet parse_feature_text(std::string_view content);
FeatureSet read_feature_file(const std::filesystem::path& path);

// Mean over a 7x7 Gaussian-windowed (sigma 1.5) SSIM map of the valid
// region, with C1 = (0.01 L)^2, C2 = (0.03 L)^2, L = 1.
double ssim(const ImageTensor& a, const ImageTensor& b);

// 10 log10(1 / MSE); +infinity for identical images.
double psnr(const ImageTensor& a, const ImageTensor& b);

// Sample mean and unbiased covariance.
FrechetStats gaussian_stats(const FeatureSet& features);

// Squared Frechet distance between two Gaussians.
double frechet_distance(const FrechetStats& a, const FrechetStats& b);

struct MetricsReport {
    double fid = 0.0;
    double ssim = 0.0;
    double psnr = 0.0;  // +infinity marks identical pairs
    std::size_t pairs = 0;
};

enum class Pairing {
    RandomSameClass,  // each generated image against a random real image of its class
    Identity,         // generated[i] against real[i]; sets must align
};

inline constexpr std::size_t kMaxMetricPairs = 1000;

// FID over all images of both sets; SSIM and PSNR averaged over
// min(|real|, |generated|, 1000) pairs drawn with pairing_seed.
MetricsReport evaluate_generation(const LabeledImageSet& real, const LabeledImageSet& generated,
                                  const FeatureExtractor& extractor, std::uint64_t pairing_seed,
                                  Pairing pairing = Pairing::RandomSameClass, int threads = 1);

// Same, with features supplied by the caller (e.g. an external Inception run).
MetricsReport evaluate_generation(const LabeledImageSet& real, const LabeledImageSet& generated,
                                  const FeatureSet& real_features, const FeatureSet& generated_features,
                                  std::uint64_t pairing_seed, Pairing pairing = Pairing::RandomSameClass);

// "fid=...\nssim=...\npsnr=...\npairs=...\n"
std::string format_metrics_record(const MetricsReport& report);
// Matches the history layout: epoch,loss,fid,ssim,psnr
std::string format_metrics_row(const MetricsReport& report, int epoch, double loss);

// Rows shaped like a generation-quality table: Dataset, Model Name, FID, SSIM, PSNR.
struct ImageTableRow {
    std::string dataset;
    std::string model;
    MetricsReport metrics;
};
std::string render_image_table(const std::vector<ImageTableRow>& rows);
// PSNR cell text: 4 decimals or "identical".
std::string format_psnr(double psnr);

struct NormalizedCurves {
    std::vector<int> epochs;
    std::vector<double> fid;
    std::vector<double> ssim;
    std::vector<double> psnr;
};

// Min-max normalization per metric; a constant series maps to 0.5.
NormalizedCurves normalize_curves(const TrainingHistory& history);
std::vector<double> normalize_series(const std::vector<double>& series);

} // namespace medsynth
