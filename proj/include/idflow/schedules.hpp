#ifndef IDFLOW_SCHEDULES_HPP
#define IDFLOW_SCHEDULES_HPP

#include <cmath>
#include <string>
#include <utility>

#include "tensor.hpp"

namespace idflow {

// Every time-dependent scalar knob in one place: noise schedule a/b,
// ID-integration strength alpha, guidance weight beta, learning rate.
struct ScheduleParams {
    double alpha0 = 0.8;   // initial ID strength, in [0,1]
    double T = 20.0;       // total denoising steps for the step-index form
    double beta0 = 0.1;    // initial guidance weight
    double lambda = 0.5;   // ID-loss weight
    double lr0 = 1e-3;     // initial learning rate
    double lr_min = 0.0;   // floor learning rate

    void validate() const {
        if (!(alpha0 >= 0.0 && alpha0 <= 1.0))
            throw DomainError("ScheduleParams: alpha0 must lie in [0,1], got " + std::to_string(alpha0));
        if (!(T >= 1.0)) throw DomainError("ScheduleParams: T must be a positive step count");
        if (!(beta0 >= 0.0)) throw DomainError("ScheduleParams: beta0 must be >= 0");
        if (!(lambda >= 0.0)) throw DomainError("ScheduleParams: lambda must be >= 0");
        if (!(lr0 > 0.0)) throw DomainError("ScheduleParams: lr0 must be > 0");
        if (!(lr_min >= 0.0 && lr_min <= lr0))
            throw DomainError("ScheduleParams: lr_min must lie in [0, lr0]");
    }
};

// a(t) = cos^2(pi t / 2), b(t) = sin^2(pi t / 2); a + b = 1 for all t.
// Evaluated through the half-angle identity so both endpoints are exact.
inline std::pair<double, double> noise_schedule(double t) {
    if (!(t >= 0.0 && t <= 1.0))
        throw DomainError("noise_schedule: t must lie in [0,1], got " + std::to_string(t));
    const double c = std::cos(M_PI * t);
    return {(1.0 + c) / 2.0, (1.0 - c) / 2.0};
}

// Linear ramp on normalized progress: alpha0 * (1 - t_norm).
inline double id_strength_norm(double t_norm, const ScheduleParams& p) {
    if (!(t_norm >= 0.0 && t_norm <= 1.0))
        throw DomainError("id_strength: normalized t must lie in [0,1], got " + std::to_string(t_norm));
    return p.alpha0 * (1.0 - t_norm);
}

// Step-index form of the same ramp, t in [0, T].
inline double id_strength(double t_step, const ScheduleParams& p) {
    if (!(t_step >= 0.0 && t_step <= p.T))
        throw DomainError("id_strength: step index must lie in [0,T], got " + std::to_string(t_step));
    return id_strength_norm(t_step / p.T, p);
}

// beta(t) = beta0 * cos^2(pi t / 2) on normalized denoising progress, via the
// same half-angle identity; beta(1) is exactly zero.
inline double guidance_weight(double t, const ScheduleParams& p) {
    if (!(t >= 0.0 && t <= 1.0))
        throw DomainError("guidance_weight: t must lie in [0,1], got " + std::to_string(t));
    return p.beta0 * (1.0 + std::cos(M_PI * t)) / 2.0;
}

// Cosine decay from lr0 to lr_min over total_steps.
inline double lr_cosine(long step, long total_steps, const ScheduleParams& p) {
    if (total_steps <= 0) throw DomainError("lr_cosine: total_steps must be positive");
    if (step < 0 || step > total_steps)
        throw DomainError("lr_cosine: step " + std::to_string(step) + " outside [0," +
                          std::to_string(total_steps) + "]");
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return p.lr_min + 0.5 * (p.lr0 - p.lr_min) * (1.0 + std::cos(M_PI * frac));
}

}  // namespace idflow

#endif
