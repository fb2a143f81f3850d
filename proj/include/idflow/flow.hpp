#ifndef IDFLOW_FLOW_HPP
#define IDFLOW_FLOW_HPP

#include <cmath>
#include <iostream>
#include <string>

#include "schedules.hpp"
#include "tensor.hpp"

namespace idflow {

// Velocity field abstraction used by losses, guidance and the sampler.
// noise_tokens selects the source of the query-compensation tokens: nullptr
// means the current x_t (tracked by the vjp); a non-null pointer is treated
// as a fixed external input.
struct VelocityField {
    virtual ~VelocityField() = default;
    virtual Tensor velocity(const Tensor& x_t, double t, const Tensor& c, const Tensor& id_tokens,
                            double alpha, const Tensor* noise_tokens = nullptr) const = 0;
    // Returns d(upstream . v)/d x_t.
    virtual Tensor velocity_vjp_x(const Tensor& x_t, double t, const Tensor& c,
                                  const Tensor& id_tokens, double alpha, const Tensor& upstream,
                                  const Tensor* noise_tokens = nullptr) const = 0;
};

// Identity embedding abstraction; encode() returns a unit-norm embedding and
// cosine_grad() the gradient of cosine(encode(x), e_ref) with respect to x.
struct IdEmbedder {
    virtual ~IdEmbedder() = default;
    virtual Tensor encode(const Tensor& x) const = 0;
    virtual Tensor cosine_grad(const Tensor& x, const Tensor& e_ref) const = 0;
};

struct SamplerConfig {
    long steps = 20;
    double cfg_scale = 1.0;
    double guidance_scale = 3.5;  // recorded Flux-side knob; the toy DiT has
                                  // no distilled-guidance input, so it is
                                  // config provenance only
    double beta0 = 0.1;
    bool fixed_noise_query = false;  // reuse the initial noise for Q_noise
    double grad_cap_per_elem = 10.0; // guidance norm cap is cap*sqrt(numel)

    void validate() const {
        if (steps < 1) throw ConfigError("SamplerConfig: steps must be >= 1");
        if (!(std::isfinite(cfg_scale) && cfg_scale >= 0.0))
            throw ConfigError("SamplerConfig: cfg_scale must be finite and >= 0");
        if (!(std::isfinite(guidance_scale) && guidance_scale >= 0.0))
            throw ConfigError("SamplerConfig: guidance_scale must be finite and >= 0");
        if (!(std::isfinite(beta0) && beta0 >= 0.0))
            throw ConfigError("SamplerConfig: beta0 must be finite and >= 0");
    }
};

// x_t = a(t) x0 + b(t) eps with the cosine schedule (Eq. 1 / Eq. 5 roles).
inline Tensor forward_diffuse(const Tensor& x0, const Tensor& eps, double t) {
    require_same_shape(x0, eps, "forward_diffuse");
    const auto [a, b] = noise_schedule(t);
    return lincomb(a, x0, b, eps);
}

// Linear training path (1-t) x0 + t x1; t = 1 is noise.
inline Tensor interpolate_path(const Tensor& x0, const Tensor& x1, double t) {
    require_same_shape(x0, x1, "interpolate_path");
    if (!(t >= 0.0 && t <= 1.0))
        throw DomainError("interpolate_path: t must lie in [0,1], got " + std::to_string(t));
    return lincomb(1.0 - t, x0, t, x1);
}

// Mean-squared flow-matching loss against the path velocity x1 - x0.
inline double flow_matching_loss(const VelocityField& model, const Tensor& x0, const Tensor& x1,
                                 double t, const Tensor& c, const Tensor& id_tokens,
                                 double alpha) {
    const Tensor x_t = interpolate_path(x0, x1, t);
    const Tensor v = model.velocity(x_t, t, c, id_tokens, alpha);
    require_same_shape(v, x0, "flow_matching_loss: velocity");
    double s = 0.0;
    for (std::size_t i = 0; i < v.numel(); ++i) {
        const double r = v.data[i] - (x1.data[i] - x0.data[i]);
        s += r * r;
    }
    return s / static_cast<double>(v.numel());
}

// Path algebra: x_t = (1-t) x0 + t x1 and v = x1 - x0 force x0 = x_t - t v.
inline Tensor estimate_x0(const Tensor& x_t, double t, const Tensor& v) {
    require_same_shape(x_t, v, "estimate_x0");
    Tensor out = x_t;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= t * v.data[i];
    return out;
}

// 1 - cosine(embed(x0_hat), e_ref), in [0, 2].
inline double id_loss(const Tensor& x0_hat, const Tensor& e_ref, const IdEmbedder& encoder) {
    return 1.0 - cosine(encoder.encode(x0_hat), e_ref);
}

inline double total_loss(double l_diff, double l_id, double lambda) {
    if (!(lambda >= 0.0)) throw DomainError("total_loss: lambda must be >= 0");
    return l_diff + lambda * l_id;
}

// Gradient of cosine(embed(x0_hat(x_t)), e_ref) with respect to x_t, the
// identity-similarity ascent direction used by guided sampling. Norm-capped.
inline Tensor id_guidance(const Tensor& x_t, double t, const Tensor& e_ref,
                          const VelocityField& model, const IdEmbedder& encoder, const Tensor& c,
                          const Tensor& id_tokens, double alpha,
                          double grad_cap_per_elem = 10.0, bool* clipped = nullptr,
                          const Tensor* noise_tokens = nullptr) {
    const Tensor v = model.velocity(x_t, t, c, id_tokens, alpha, noise_tokens);
    const Tensor x0_hat = estimate_x0(x_t, t, v);
    const Tensor dcos = encoder.cosine_grad(x0_hat, e_ref);
    Tensor g = dcos;
    if (t != 0.0) {
        const Tensor through_model =
            model.velocity_vjp_x(x_t, t, c, id_tokens, alpha, dcos, noise_tokens);
        axpy_inplace(g, -t, through_model);
    }
    if (clipped) *clipped = false;
    const double cap = grad_cap_per_elem * std::sqrt(static_cast<double>(g.numel()));
    const double gn = norm(g);
    if (gn > cap) {
        g = scale(g, cap / gn);
        if (clipped) *clipped = true;
        std::cerr << "idflow: id_guidance norm " << gn << " capped to " << cap << "\n";
    }
    return g;
}

// Guided explicit-Euler integration of dx/dt = f(x,t,c) + beta(t) g(x,e_ref)
// from t = 1 down to t = 0 on the grid t_k = 1 - k/steps. With beta0 = 0 and
// cfg_scale = 1 the arithmetic reduces exactly to the unguided baseline.
inline Tensor sample_euler(const VelocityField& model, const Tensor& x1, const Tensor& c,
                           const Tensor& id_tokens, const Tensor& e_ref, const IdEmbedder* encoder,
                           const SamplerConfig& cfg, const ScheduleParams& sched) {
    cfg.validate();
    if (cfg.beta0 > 0.0 && encoder == nullptr)
        throw ConfigError("sample_euler: guidance requested without an identity encoder");
    const double dt = 1.0 / static_cast<double>(cfg.steps);
    ScheduleParams beta_sched = sched;
    beta_sched.beta0 = cfg.beta0;

    Tensor x = x1;
    Tensor null_c(c.shape);  // zero condition for classifier-free mixing
    for (long k = 0; k < cfg.steps; ++k) {
        const double t_k = 1.0 - static_cast<double>(k) / static_cast<double>(cfg.steps);
        const double alpha = id_strength_norm(std::clamp(t_k, 0.0, 1.0), sched);
        const Tensor* noise_src = cfg.fixed_noise_query ? &x1 : nullptr;

        Tensor v;
        if (cfg.cfg_scale == 1.0) {
            v = model.velocity(x, t_k, c, id_tokens, alpha, noise_src);
        } else {
            const Tensor v_null = model.velocity(x, t_k, null_c, id_tokens, alpha, noise_src);
            const Tensor v_cond = model.velocity(x, t_k, c, id_tokens, alpha, noise_src);
            v = lincomb(1.0 - cfg.cfg_scale, v_null, cfg.cfg_scale, v_cond);
        }

        if (cfg.beta0 > 0.0) {
            const double progress = 1.0 - t_k;
            const double beta = guidance_weight(progress, beta_sched);
            if (beta > 0.0) {
                bool clipped = false;
                const Tensor g = id_guidance(x, t_k, e_ref, model, *encoder, c, id_tokens, alpha,
                                             cfg.grad_cap_per_elem, &clipped, noise_src);
                if (clipped) {
                    std::cerr << "idflow: guidance clipped at sampler step " << k << "\n";
                }
                axpy_inplace(v, beta, g);
            }
        }

        axpy_inplace(x, -dt, v);
        if (!x.all_finite()) {
            throw DivergenceError("sample_euler: non-finite state at step " + std::to_string(k));
        }
    }
    return x;
}

}  // namespace idflow

#endif
