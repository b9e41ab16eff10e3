#include "medsynth/schedule.hpp"

#include <cmath>
#include <string>

#include "medsynth/error.hpp"

namespace medsynth {
namespace {

void check_step(const NoiseSchedule& schedule, int t) {
    if (t < 1 || t > schedule.steps)
        throw InvalidArgument("step index " + std::to_string(t) + " outside [1, " +
                              std::to_string(schedule.steps) + "]");
}

void check_shape(const ImageTensor& a, const ImageTensor& b) {
    if (!a.same_shape(b)) throw ShapeError("image shapes differ");
}

} // namespace

NoiseSchedule build_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw InvalidArgument("schedule needs at least one step");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw InvalidArgument("schedule requires 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.steps = steps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.beta.resize(steps);
    s.alpha.resize(steps);
    s.alpha_bar.resize(steps);
    double running = 1.0;
    for (int i = 0; i < steps; ++i) {
        double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        s.beta[i] = beta_start + (beta_end - beta_start) * frac;
        s.alpha[i] = 1.0 - s.beta[i];
        running *= s.alpha[i];
        s.alpha_bar[i] = running;
    }
    return s;
}

ImageTensor q_sample(const ImageTensor& x0, int t, const ImageTensor& eps, const NoiseSchedule& schedule) {
    check_step(schedule, t);
    check_shape(x0, eps);
    const double a = std::sqrt(schedule.alpha_bar_at(t));
    const double b = std::sqrt(1.0 - schedule.alpha_bar_at(t));
    ImageTensor out(x0.height, x0.width);
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a * x0.values[i] + b * eps.values[i];
    return out;
}

ImageTensor predict_x0(const ImageTensor& xt, int t, const ImageTensor& eps_hat, const NoiseSchedule& schedule) {
    check_step(schedule, t);
    check_shape(xt, eps_hat);
    const double a = std::sqrt(schedule.alpha_bar_at(t));
    const double b = std::sqrt(1.0 - schedule.alpha_bar_at(t));
    ImageTensor out(xt.height, xt.width);
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = (xt.values[i] - b * eps_hat.values[i]) / a;
    return out;
}

StepCoefficients step_coefficients(const NoiseSchedule& schedule, int t) {
    check_step(schedule, t);
    const double alpha = schedule.alpha_at(t);
    return {1.0 / std::sqrt(alpha), (1.0 - alpha) / std::sqrt(1.0 - schedule.alpha_bar_at(t)),
            std::sqrt(schedule.beta_at(t))};
}

ImageTensor reverse_step(const ImageTensor& xt, int t, const ImageTensor& eps_hat, const ImageTensor& z,
                         const NoiseSchedule& schedule) {
    const StepCoefficients c = step_coefficients(schedule, t);
    check_shape(xt, eps_hat);
    check_shape(xt, z);
    ImageTensor out(xt.height, xt.width);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values[i] = c.inv_sqrt_alpha * (xt.values[i] - c.eps_scale * eps_hat.values[i]) + c.sigma * z.values[i];
    return out;
}

} // namespace medsynth
