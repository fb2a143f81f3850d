#ifndef IDFLOW_ID_ATTENTION_HPP
#define IDFLOW_ID_ATTENTION_HPP

#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "tensor.hpp"

namespace idflow {

// Trainable parameter set of the ID integration module. The only unit that
// trains in the paper-faithful configuration, and the unit of offline fusion.
struct AttentionWeights {
    Tensor w_q;       // d_id  x d   query path (ID tokens)
    Tensor w_k;       // d_gen x d   key path (generation stream)
    Tensor w_v;       // d_gen x d   value path (generation stream)
    Tensor w_qnoise;  // d_gen x d   noisy-latent tokens -> query space
    Tensor w_out;     // d     x d_gen back-projection into the stream
    std::size_t head_count = 1;

    std::size_t inner_dim() const { return w_q.shape.empty() ? 0 : w_q.shape[1]; }

    void validate() const {
        if (w_q.shape.size() != 2 || w_k.shape.size() != 2 || w_v.shape.size() != 2 ||
            w_qnoise.shape.size() != 2 || w_out.shape.size() != 2) {
            throw DimensionError("AttentionWeights: all projections must be matrices");
        }
        const std::size_t d = w_q.shape[1];
        if (w_k.shape[1] != d || w_v.shape[1] != d || w_qnoise.shape[1] != d) {
            throw DimensionError("AttentionWeights: projection output extents disagree");
        }
        if (w_k.shape[0] != w_v.shape[0] || w_k.shape[0] != w_qnoise.shape[0]) {
            throw DimensionError("AttentionWeights: w_k/w_v/w_qnoise input extents disagree");
        }
        if (w_out.shape[0] != d) {
            throw DimensionError("AttentionWeights: w_out input extent must equal d");
        }
        if (head_count == 0 || d % head_count != 0) {
            throw ConfigError("AttentionWeights: head_count " + std::to_string(head_count) +
                              " does not divide d=" + std::to_string(d));
        }
    }

    bool same_shapes(const AttentionWeights& o) const {
        return w_q.same_shape(o.w_q) && w_k.same_shape(o.w_k) && w_v.same_shape(o.w_v) &&
               w_qnoise.same_shape(o.w_qnoise) && w_out.same_shape(o.w_out) &&
               head_count == o.head_count;
    }

    static AttentionWeights zeros_like(const AttentionWeights& w) {
        AttentionWeights z;
        z.w_q = Tensor::zeros_like(w.w_q);
        z.w_k = Tensor::zeros_like(w.w_k);
        z.w_v = Tensor::zeros_like(w.w_v);
        z.w_qnoise = Tensor::zeros_like(w.w_qnoise);
        z.w_out = Tensor::zeros_like(w.w_out);
        z.head_count = w.head_count;
        return z;
    }
};

// Convex fusion coefficients over a set of trained variants.
struct FusionSpec {
    std::vector<double> coefficients;
    std::vector<std::string> variant_ids;

    void validate() const {
        if (coefficients.size() != variant_ids.size()) {
            throw FusionError("FusionSpec: coefficient/variant list lengths differ");
        }
        if (coefficients.empty()) throw FusionError("FusionSpec: empty spec");
        double sum = 0.0;
        for (double w : coefficients) {
            if (!(w >= 0.0)) throw FusionError("FusionSpec: negative coefficient");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-12) {
            throw FusionError("FusionSpec: coefficients sum to " + std::to_string(sum) +
                              ", expected 1");
        }
    }
};

namespace detail {

inline Tensor col_slice(const Tensor& t, std::size_t c0, std::size_t c1) {
    const std::size_t n = t.shape[0], w = c1 - c0;
    Tensor out({n, w});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < w; ++j) out.at(i, j) = t.at(i, c0 + j);
    }
    return out;
}

inline void col_add(Tensor& dst, const Tensor& src, std::size_t c0) {
    const std::size_t n = src.shape[0], w = src.shape[1];
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < w; ++j) dst.at(i, c0 + j) += src.at(i, j);
    }
}

}  // namespace detail

// Independent Q/K/V computation paths (no shared intermediate): Q from the ID
// tokens, K and V from the generation stream.
inline std::tuple<Tensor, Tensor, Tensor> decompose_qkv(const Tensor& x_id, const Tensor& x_gen,
                                                        const AttentionWeights& w) {
    return {matmul(x_id, w.w_q), matmul(x_gen, w.w_k), matmul(x_gen, w.w_v)};
}

// Token-mean pool of the projected noisy-latent tokens, the query
// compensation source. Returns a 1 x d row.
inline Tensor pool_noise_query(const Tensor& x_t_tokens, const AttentionWeights& w) {
    Tensor proj = matmul(x_t_tokens, w.w_qnoise);
    const std::size_t n = proj.shape[0], d = proj.shape[1];
    Tensor pooled({1, d});
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += proj.at(i, j);
        pooled.at(0, j) = s / static_cast<double>(n);
    }
    return pooled;
}

// Q' = alpha * Q + (1 - alpha) * Q_noise, Q_noise pooled from the noisy
// latent and broadcast to every ID query row.
inline Tensor compensate_query(const Tensor& q, const Tensor& x_t_tokens,
                               const AttentionWeights& w, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw DomainError("compensate_query: alpha must lie in [0,1], got " + std::to_string(alpha));
    if (q.shape.size() != 2 || q.shape[1] != w.inner_dim())
        throw DimensionError("compensate_query: Q has shape " + Tensor::shape_str(q.shape) +
                             ", expected n_id x " + std::to_string(w.inner_dim()));
    const Tensor pooled = pool_noise_query(x_t_tokens, w);
    Tensor out(q.shape);
    const std::size_t n_id = q.shape[0], d = q.shape[1];
    for (std::size_t i = 0; i < n_id; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out.at(i, j) = alpha * q.at(i, j) + (1.0 - alpha) * pooled.at(0, j);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Multi-head scaled dot-product attention (Eq. 4 role): queries from x,
// keys/values from ctx, output projection back to x's width. Used by the toy
// DiT for self-attention (ctx = x) and text cross-attention.
// ---------------------------------------------------------------------------

struct MhaCache {
    Tensor q, k, v;            // projections
    std::vector<Tensor> attn;  // per-head softmax matrices, n x m
    Tensor concat;             // n x d, pre-projection
    Tensor out;                // n x d_out
};

inline MhaCache multi_head_attention_fwd(const Tensor& x, const Tensor& ctx, const Tensor& w_q,
                                         const Tensor& w_k, const Tensor& w_v,
                                         const Tensor& w_proj, std::size_t heads) {
    const std::size_t d = w_q.shape[1];
    if (heads == 0 || d % heads != 0)
        throw ConfigError("multi_head_attention: heads must divide d=" + std::to_string(d));
    MhaCache c;
    c.q = matmul(x, w_q);
    c.k = matmul(ctx, w_k);
    c.v = matmul(ctx, w_v);
    const std::size_t dh = d / heads;
    const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
    c.concat = Tensor({x.shape[0], d});
    c.attn.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = detail::col_slice(c.q, h * dh, (h + 1) * dh);
        const Tensor kh = detail::col_slice(c.k, h * dh, (h + 1) * dh);
        const Tensor vh = detail::col_slice(c.v, h * dh, (h + 1) * dh);
        Tensor scores = scale(matmul_bt(qh, kh), scl);
        Tensor a = softmax_rows(scores);
        detail::col_add(c.concat, matmul(a, vh), h * dh);
        c.attn.push_back(std::move(a));
    }
    c.out = matmul(c.concat, w_proj);
    return c;
}

inline Tensor multi_head_attention(const Tensor& x, const Tensor& ctx, const Tensor& w_q,
                                   const Tensor& w_k, const Tensor& w_v, const Tensor& w_proj,
                                   std::size_t heads) {
    return multi_head_attention_fwd(x, ctx, w_q, w_k, w_v, w_proj, heads).out;
}

struct MhaGrads {
    Tensor dx, dctx;
    Tensor dw_q, dw_k, dw_v, dw_proj;
};

inline MhaGrads multi_head_attention_bwd(const Tensor& x, const Tensor& ctx, const Tensor& w_q,
                                         const Tensor& w_k, const Tensor& w_v,
                                         const Tensor& w_proj, std::size_t heads,
                                         const MhaCache& c, const Tensor& dout) {
    const std::size_t d = w_q.shape[1];
    const std::size_t dh = d / heads;
    const double scl = 1.0 / std::sqrt(static_cast<double>(dh));

    MhaGrads g;
    g.dw_proj = matmul_at(c.concat, dout);
    Tensor dconcat = matmul_bt(dout, w_proj);

    Tensor dq(c.q.shape), dk(c.k.shape), dv(c.v.shape);
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = detail::col_slice(c.q, h * dh, (h + 1) * dh);
        const Tensor kh = detail::col_slice(c.k, h * dh, (h + 1) * dh);
        const Tensor vh = detail::col_slice(c.v, h * dh, (h + 1) * dh);
        const Tensor doh = detail::col_slice(dconcat, h * dh, (h + 1) * dh);
        const Tensor& a = c.attn[h];

        Tensor da = matmul_bt(doh, vh);
        Tensor dvh = matmul_at(a, doh);
        Tensor dscores = softmax_rows_backward(a, da);
        Tensor dqh = scale(matmul(dscores, kh), scl);
        Tensor dkh = scale(matmul_at(dscores, qh), scl);

        detail::col_add(dq, dqh, h * dh);
        detail::col_add(dk, dkh, h * dh);
        detail::col_add(dv, dvh, h * dh);
    }

    g.dw_q = matmul_at(x, dq);
    g.dw_k = matmul_at(ctx, dk);
    g.dw_v = matmul_at(ctx, dv);
    g.dx = matmul_bt(dq, w_q);
    g.dctx = add(matmul_bt(dk, w_k), matmul_bt(dv, w_v));
    return g;
}

// ---------------------------------------------------------------------------
// Decomposed Perceiver cross-attention (Eqs. 6-7 plus injection).
//
// Stage 1: compensated ID queries attend over the generation tokens, giving
// n_id ID-conditioned summary tokens. Stage 2: generation tokens attend to
// the summaries (w_qnoise reused as the stream-side query projection, w_k/w_v
// tied on the summaries) and the result is added residually through w_out, so
// w_out = 0 leaves the stream untouched.
// ---------------------------------------------------------------------------

struct PerceiverCache {
    Tensor q;              // n_id x d
    Tensor noise_pooled;   // 1 x d
    Tensor q_prime;        // n_id x d
    Tensor k, v;           // n_gen x d
    std::vector<Tensor> attn1;  // per head, n_id x n_gen
    Tensor summary;        // n_id x d
    Tensor q2;             // n_gen x d
    Tensor k2, v2;         // n_id x d
    std::vector<Tensor> attn2;  // per head, n_gen x n_id
    Tensor mix;            // n_gen x d
    Tensor out;            // n_gen x d_gen
};

inline PerceiverCache perceiver_attend_fwd(const Tensor& x_id, const Tensor& x_gen,
                                           const Tensor& x_t_tokens, const AttentionWeights& w,
                                           double alpha) {
    w.validate();
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw DomainError("perceiver_attend: alpha must lie in [0,1]");
    const std::size_t d = w.inner_dim();
    if (x_gen.shape.size() != 2 || x_gen.shape[1] != w.w_k.shape[0])
        throw DimensionError("perceiver_attend: x_gen shape " + Tensor::shape_str(x_gen.shape) +
                             " incompatible with w_k " + Tensor::shape_str(w.w_k.shape));
    if (w.w_k.shape[0] != d)
        throw DimensionError("perceiver_attend: summary reuse of w_k/w_v requires d == d_gen");
    require_same_shape(x_gen, x_t_tokens, "perceiver_attend: x_gen vs x_t_tokens");

    const std::size_t heads = w.head_count;
    const std::size_t dh = d / heads;
    const double scl = 1.0 / std::sqrt(static_cast<double>(dh));

    PerceiverCache c;
    c.q = matmul(x_id, w.w_q);
    c.noise_pooled = pool_noise_query(x_t_tokens, w);
    c.q_prime = Tensor(c.q.shape);
    const std::size_t n_id = c.q.shape[0];
    for (std::size_t i = 0; i < n_id; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            c.q_prime.at(i, j) = alpha * c.q.at(i, j) + (1.0 - alpha) * c.noise_pooled.at(0, j);
        }
    }
    c.k = matmul(x_gen, w.w_k);
    c.v = matmul(x_gen, w.w_v);

    c.summary = Tensor({n_id, d});
    c.attn1.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = detail::col_slice(c.q_prime, h * dh, (h + 1) * dh);
        const Tensor kh = detail::col_slice(c.k, h * dh, (h + 1) * dh);
        const Tensor vh = detail::col_slice(c.v, h * dh, (h + 1) * dh);
        Tensor a = softmax_rows(scale(matmul_bt(qh, kh), scl));
        detail::col_add(c.summary, matmul(a, vh), h * dh);
        c.attn1.push_back(std::move(a));
    }

    c.q2 = matmul(x_gen, w.w_qnoise);
    c.k2 = matmul(c.summary, w.w_k);
    c.v2 = matmul(c.summary, w.w_v);
    c.mix = Tensor({x_gen.shape[0], d});
    c.attn2.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = detail::col_slice(c.q2, h * dh, (h + 1) * dh);
        const Tensor kh = detail::col_slice(c.k2, h * dh, (h + 1) * dh);
        const Tensor vh = detail::col_slice(c.v2, h * dh, (h + 1) * dh);
        Tensor a = softmax_rows(scale(matmul_bt(qh, kh), scl));
        detail::col_add(c.mix, matmul(a, vh), h * dh);
        c.attn2.push_back(std::move(a));
    }

    c.out = add(x_gen, matmul(c.mix, w.w_out));
    return c;
}

inline Tensor perceiver_attend(const Tensor& x_id, const Tensor& x_gen, const Tensor& x_t_tokens,
                               const AttentionWeights& w, double alpha) {
    return perceiver_attend_fwd(x_id, x_gen, x_t_tokens, w, alpha).out;
}

struct PerceiverGrads {
    Tensor dx_id, dx_gen, dx_t_tokens;
    AttentionWeights dw;
};

inline PerceiverGrads perceiver_attend_bwd(const Tensor& x_id, const Tensor& x_gen,
                                           const Tensor& x_t_tokens, const AttentionWeights& w,
                                           double alpha, const PerceiverCache& c,
                                           const Tensor& dout) {
    const std::size_t d = w.inner_dim();
    const std::size_t heads = w.head_count;
    const std::size_t dh = d / heads;
    const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::size_t n_id = c.q.shape[0];
    const std::size_t n_gen = x_gen.shape[0];

    PerceiverGrads g;
    g.dw = AttentionWeights::zeros_like(w);
    g.dx_gen = dout;  // residual path

    g.dw.w_out = matmul_at(c.mix, dout);
    Tensor dmix = matmul_bt(dout, w.w_out);

    // stage 2
    Tensor dq2(c.q2.shape), dk2(c.k2.shape), dv2(c.v2.shape);
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = detail::col_slice(c.q2, h * dh, (h + 1) * dh);
        const Tensor kh = detail::col_slice(c.k2, h * dh, (h + 1) * dh);
        const Tensor vh = detail::col_slice(c.v2, h * dh, (h + 1) * dh);
        const Tensor dmh = detail::col_slice(dmix, h * dh, (h + 1) * dh);
        const Tensor& a = c.attn2[h];

        Tensor da = matmul_bt(dmh, vh);
        Tensor dvh = matmul_at(a, dmh);
        Tensor dscores = softmax_rows_backward(a, da);
        detail::col_add(dq2, scale(matmul(dscores, kh), scl), h * dh);
        detail::col_add(dk2, scale(matmul_at(dscores, qh), scl), h * dh);
        detail::col_add(dv2, dvh, h * dh);
    }
    Tensor dsummary = add(matmul_bt(dk2, w.w_k), matmul_bt(dv2, w.w_v));
    add_inplace(g.dw.w_k, matmul_at(c.summary, dk2));
    add_inplace(g.dw.w_v, matmul_at(c.summary, dv2));
    add_inplace(g.dx_gen, matmul_bt(dq2, w.w_qnoise));
    add_inplace(g.dw.w_qnoise, matmul_at(x_gen, dq2));

    // stage 1
    Tensor dqp(c.q_prime.shape), dk1(c.k.shape), dv1(c.v.shape);
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = detail::col_slice(c.q_prime, h * dh, (h + 1) * dh);
        const Tensor kh = detail::col_slice(c.k, h * dh, (h + 1) * dh);
        const Tensor vh = detail::col_slice(c.v, h * dh, (h + 1) * dh);
        const Tensor dsh = detail::col_slice(dsummary, h * dh, (h + 1) * dh);
        const Tensor& a = c.attn1[h];

        Tensor da = matmul_bt(dsh, vh);
        Tensor dvh = matmul_at(a, dsh);
        Tensor dscores = softmax_rows_backward(a, da);
        detail::col_add(dqp, scale(matmul(dscores, kh), scl), h * dh);
        detail::col_add(dk1, scale(matmul_at(dscores, qh), scl), h * dh);
        detail::col_add(dv1, dvh, h * dh);
    }
    add_inplace(g.dx_gen, matmul_bt(dk1, w.w_k));
    add_inplace(g.dx_gen, matmul_bt(dv1, w.w_v));
    add_inplace(g.dw.w_k, matmul_at(x_gen, dk1));
    add_inplace(g.dw.w_v, matmul_at(x_gen, dv1));

    // query compensation: Q' = alpha*Q + (1-alpha)*pooled, pooled broadcast
    Tensor dq = scale(dqp, alpha);
    Tensor dpooled({1, d});
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n_id; ++i) s += dqp.at(i, j);
        dpooled.at(0, j) = (1.0 - alpha) * s;
    }
    // pooled = mean over rows of (x_t_tokens * w_qnoise)
    Tensor dnoise_proj({n_gen, d});
    for (std::size_t i = 0; i < n_gen; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            dnoise_proj.at(i, j) = dpooled.at(0, j) / static_cast<double>(n_gen);
        }
    }
    g.dx_t_tokens = matmul_bt(dnoise_proj, w.w_qnoise);
    add_inplace(g.dw.w_qnoise, matmul_at(x_t_tokens, dnoise_proj));

    g.dx_id = matmul_bt(dq, w.w_q);
    g.dw.w_q = matmul_at(x_id, dq);
    return g;
}

// Offline fusion: element-wise convex combination of trained variants,
// exactly sum_i w_i * W_i on every field.
inline AttentionWeights fuse_weights(const std::vector<AttentionWeights>& variants,
                                     const FusionSpec& spec) {
    spec.validate();
    if (variants.size() != spec.coefficients.size()) {
        throw FusionError("fuse_weights: " + std::to_string(variants.size()) + " variants vs " +
                          std::to_string(spec.coefficients.size()) + " coefficients");
    }
    for (std::size_t i = 1; i < variants.size(); ++i) {
        if (!variants[i].same_shapes(variants[0])) {
            throw FusionError("fuse_weights: variant " + std::to_string(i) +
                              " shapes differ from variant 0");
        }
    }
    if (variants.size() == 1 && spec.coefficients[0] == 1.0) {
        return variants[0];  // bit-exact singleton fusion
    }
    AttentionWeights out = AttentionWeights::zeros_like(variants[0]);
    auto fuse_field = [&](Tensor AttentionWeights::* field) {
        Tensor& dst = out.*field;
        for (std::size_t i = 0; i < variants.size(); ++i) {
            const Tensor& src = variants[i].*field;
            const double wi = spec.coefficients[i];
            for (std::size_t e = 0; e < dst.numel(); ++e) dst.data[e] += wi * src.data[e];
        }
    };
    fuse_field(&AttentionWeights::w_q);
    fuse_field(&AttentionWeights::w_k);
    fuse_field(&AttentionWeights::w_v);
    fuse_field(&AttentionWeights::w_qnoise);
    fuse_field(&AttentionWeights::w_out);
    return out;
}

}  // namespace idflow

#endif
