#pragma once

#include <vector>

#include "medsynth/image.hpp"

namespace medsynth {

// Precomputed variance schedule. Index t runs 1..T; vectors are 0-based so
// beta[t - 1] holds beta_t.
struct NoiseSchedule {
    int steps = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    double beta_at(int t) const { return beta[static_cast<std::size_t>(t - 1)]; }
    double alpha_at(int t) const { return alpha[static_cast<std::size_t>(t - 1)]; }
    double alpha_bar_at(int t) const { return alpha_bar[static_cast<std::size_t>(t - 1)]; }
};

inline constexpr int kDefaultSteps = 400;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

// Linear beta schedule from beta_start to beta_end inclusive.
NoiseSchedule build_schedule(int steps = kDefaultSteps, double beta_start = kDefaultBetaStart,
                             double beta_end = kDefaultBetaEnd);

// Forward corruption: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
ImageTensor q_sample(const ImageTensor& x0, int t, const ImageTensor& eps, const NoiseSchedule& schedule);

// Inverse of q_sample given a noise estimate.
ImageTensor predict_x0(const ImageTensor& xt, int t, const ImageTensor& eps_hat, const NoiseSchedule& schedule);

// One ancestral step x_t -> x_{t-1}. The caller passes z = 0 at t = 1.
ImageTensor reverse_step(const ImageTensor& xt, int t, const ImageTensor& eps_hat, const ImageTensor& z,
                         const NoiseSchedule& schedule);

// Scalar kernels shared with the batched sampler.
struct StepCoefficients {
    double inv_sqrt_alpha;
    double eps_scale;  // (1 - alpha_t) / sqrt(1 - abar_t)
    double sigma;      // sqrt(beta_t)
};
StepCoefficients step_coefficients(const NoiseSchedule& schedule, int t);

} // namespace medsynth
