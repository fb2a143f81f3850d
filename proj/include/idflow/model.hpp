#ifndef IDFLOW_MODEL_HPP
#define IDFLOW_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "flow.hpp"
#include "id_attention.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace idflow {

struct ToyDiTConfig {
    std::size_t token_count = 16;     // n_gen
    std::size_t dim = 32;             // d_gen; also the attention inner dim
    std::size_t id_token_count = 4;   // n_id
    std::size_t id_dim = 16;          // d_id
    std::size_t cond_dim = 8;         // d_c
    std::size_t heads = 4;
    std::size_t blocks = 2;
    std::size_t time_embed_dim = 8;   // rows of the time table
    std::vector<std::size_t> id_inject_blocks;  // empty = inject in every block

    std::size_t ffn_hidden() const { return 2 * dim; }

    bool injects_at(std::size_t b) const {
        if (id_inject_blocks.empty()) return true;
        return std::find(id_inject_blocks.begin(), id_inject_blocks.end(), b) !=
               id_inject_blocks.end();
    }

    void validate() const {
        if (token_count == 0 || dim == 0 || id_token_count == 0 || id_dim == 0 || cond_dim == 0 ||
            heads == 0 || blocks == 0 || time_embed_dim == 0) {
            throw ConfigError("ToyDiTConfig: all extents must be positive");
        }
        if (dim % heads != 0) throw ConfigError("ToyDiTConfig: heads must divide dim");
        for (std::size_t b : id_inject_blocks) {
            if (b >= blocks) throw ConfigError("ToyDiTConfig: id_inject_blocks index out of range");
        }
    }
};

struct BlockParams {
    Tensor self_gain, self_wq, self_wk, self_wv, self_wp;
    Tensor text_gain, text_wq, text_wk, text_wv, text_wp;
    AttentionWeights id_attn;
    Tensor ffn_gain, ffn_w1, ffn_w2;
};

struct ModelParams {
    ToyDiTConfig config;
    std::vector<BlockParams> blocks;
    Tensor time_embed;  // time_embed_dim x dim
    Tensor head;        // dim x dim
    std::map<std::string, bool> trainable;  // the freeze mask; true = trains
};

// Visits every parameter under its stable serialized name, in a fixed order.
template <typename Params, typename Fn>
void for_each_param(Params&& p, Fn&& fn) {
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        const std::string pre = "block" + std::to_string(b) + ".";
        auto& blk = p.blocks[b];
        fn(pre + "self.norm_gain", blk.self_gain);
        fn(pre + "self.w_q", blk.self_wq);
        fn(pre + "self.w_k", blk.self_wk);
        fn(pre + "self.w_v", blk.self_wv);
        fn(pre + "self.w_proj", blk.self_wp);
        fn(pre + "text.norm_gain", blk.text_gain);
        fn(pre + "text.w_q", blk.text_wq);
        fn(pre + "text.w_k", blk.text_wk);
        fn(pre + "text.w_v", blk.text_wv);
        fn(pre + "text.w_proj", blk.text_wp);
        fn(pre + "id_attn.w_q", blk.id_attn.w_q);
        fn(pre + "id_attn.w_k", blk.id_attn.w_k);
        fn(pre + "id_attn.w_v", blk.id_attn.w_v);
        fn(pre + "id_attn.w_qnoise", blk.id_attn.w_qnoise);
        fn(pre + "id_attn.w_out", blk.id_attn.w_out);
        fn(pre + "ffn.norm_gain", blk.ffn_gain);
        fn(pre + "ffn.w1", blk.ffn_w1);
        fn(pre + "ffn.w2", blk.ffn_w2);
    }
    fn(std::string("time_embed"), p.time_embed);
    fn(std::string("head"), p.head);
}

inline Tensor* find_param(ModelParams& p, const std::string& name) {
    Tensor* hit = nullptr;
    for_each_param(p, [&](const std::string& n, Tensor& t) {
        if (n == name) hit = &t;
    });
    return hit;
}

inline const Tensor* find_param(const ModelParams& p, const std::string& name) {
    return find_param(const_cast<ModelParams&>(p), name);
}

inline ModelParams zeros_like(const ModelParams& p) {
    ModelParams z = p;
    for_each_param(z, [](const std::string&, Tensor& t) {
        std::fill(t.data.begin(), t.data.end(), 0.0);
    });
    return z;
}

// Scaled-normal init (std 1/sqrt(fan_in)); norm gains start at 1 and every
// w_out at 0 so a fresh model ignores its ID tokens. Only id_attn entries are
// marked trainable, matching the cross-attention-only fine-tuning contract.
inline ModelParams init_params(const ToyDiTConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t d = cfg.dim;
    ModelParams p;
    p.config = cfg;
    Rng rng(Rng::derive(seed, 0x4d4f44ULL));

    auto mat = [&](std::size_t r, std::size_t c) {
        return rng.normal_tensor({r, c}, 1.0 / std::sqrt(static_cast<double>(r)));
    };
    auto gain = [&](std::size_t n) {
        Tensor t({n});
        std::fill(t.data.begin(), t.data.end(), 1.0);
        return t;
    };

    p.blocks.resize(cfg.blocks);
    for (auto& blk : p.blocks) {
        blk.self_gain = gain(d);
        blk.self_wq = mat(d, d);
        blk.self_wk = mat(d, d);
        blk.self_wv = mat(d, d);
        blk.self_wp = mat(d, d);
        blk.text_gain = gain(d);
        blk.text_wq = mat(d, d);
        blk.text_wk = mat(cfg.cond_dim, d);
        blk.text_wv = mat(cfg.cond_dim, d);
        blk.text_wp = mat(d, d);
        blk.id_attn.w_q = mat(cfg.id_dim, d);
        blk.id_attn.w_k = mat(d, d);
        blk.id_attn.w_v = mat(d, d);
        blk.id_attn.w_qnoise = mat(d, d);
        blk.id_attn.w_out = Tensor({d, d});
        blk.id_attn.head_count = cfg.heads;
        blk.ffn_gain = gain(d);
        blk.ffn_w1 = mat(d, cfg.ffn_hidden());
        blk.ffn_w2 = mat(cfg.ffn_hidden(), d);
    }
    p.time_embed = rng.normal_tensor({cfg.time_embed_dim, d}, 1.0 / std::sqrt(static_cast<double>(d)));
    p.head = mat(d, d);

    for_each_param(p, [&](const std::string& name, Tensor&) {
        p.trainable[name] = name.find(".id_attn.") != std::string::npos;
    });
    return p;
}

namespace detail {

struct RmsCache {
    Tensor x;
    std::vector<double> inv_r;
    Tensor y;
};

constexpr double kRmsEps = 1e-8;

inline RmsCache rms_norm_fwd(const Tensor& x, const Tensor& gain) {
    const std::size_t n = x.shape[0], d = x.shape[1];
    if (gain.numel() != d) throw DimensionError("rms_norm: gain width mismatch");
    RmsCache c;
    c.x = x;
    c.inv_r.resize(n);
    c.y = Tensor({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < d; ++j) m += x.at(i, j) * x.at(i, j);
        const double inv = 1.0 / std::sqrt(m / static_cast<double>(d) + kRmsEps);
        c.inv_r[i] = inv;
        for (std::size_t j = 0; j < d; ++j) c.y.at(i, j) = gain.data[j] * x.at(i, j) * inv;
    }
    return c;
}

inline void rms_norm_bwd(const RmsCache& c, const Tensor& gain, const Tensor& dy, Tensor& dx_out,
                         Tensor& dgain_out) {
    const std::size_t n = c.x.shape[0], d = c.x.shape[1];
    dx_out = Tensor({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const double inv = c.inv_r[i];
        double dotv = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dotv += dy.at(i, j) * gain.data[j] * c.x.at(i, j);
            dgain_out.data[j] += c.x.at(i, j) * inv * dy.at(i, j);
        }
        const double k = dotv * inv * inv * inv / static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
            dx_out.at(i, j) = gain.data[j] * dy.at(i, j) * inv - c.x.at(i, j) * k;
        }
    }
}

inline double silu(double u) { return u / (1.0 + std::exp(-u)); }

inline double silu_grad(double u) {
    const double s = 1.0 / (1.0 + std::exp(-u));
    return s * (1.0 + u * (1.0 - s));
}

struct BlockCache {
    RmsCache self_norm;
    MhaCache self;
    RmsCache text_norm;
    MhaCache text;
    bool id_active = false;
    Tensor id_in;  // stream entering the ID injection
    PerceiverCache id;
    RmsCache ffn_norm;
    Tensor ffn_u, ffn_a;
};

struct ForwardCache {
    Tensor x_t, c, id_tokens, noise_tokens;
    bool noise_tracks_x = true;
    double t = 0.0, alpha = 0.0;
    std::size_t t_i0 = 0, t_i1 = 0;
    double t_w = 0.0;
    Tensor tokens0;
    std::vector<BlockCache> blocks;
    Tensor final_stream;
    Tensor v;
};

}  // namespace detail

// Full forward pass with cached activations; the plain predict_velocity
// wrapper below discards the cache.
inline detail::ForwardCache model_forward(const ModelParams& p, const Tensor& x_t, double t,
                                          const Tensor& c, const Tensor& id_tokens, double alpha,
                                          const Tensor* noise_tokens = nullptr) {
    const ToyDiTConfig& cfg = p.config;
    if (x_t.shape.size() != 2 || x_t.shape[0] != cfg.token_count || x_t.shape[1] != cfg.dim)
        throw DimensionError("model: x_t shape " + Tensor::shape_str(x_t.shape) + ", expected " +
                             std::to_string(cfg.token_count) + "x" + std::to_string(cfg.dim));
    if (c.shape.size() != 2 || c.shape[1] != cfg.cond_dim)
        throw DimensionError("model: condition width must be " + std::to_string(cfg.cond_dim));
    if (id_tokens.shape.size() != 2 || id_tokens.shape[0] != cfg.id_token_count ||
        id_tokens.shape[1] != cfg.id_dim)
        throw DimensionError("model: id_tokens shape " + Tensor::shape_str(id_tokens.shape));
    if (!(t >= 0.0 && t <= 1.0))
        throw DomainError("model: t must lie in [0,1], got " + std::to_string(t));

    detail::ForwardCache fc;
    fc.x_t = x_t;
    fc.c = c;
    fc.id_tokens = id_tokens;
    fc.noise_tracks_x = (noise_tokens == nullptr);
    fc.noise_tokens = noise_tokens ? *noise_tokens : x_t;
    fc.t = t;
    fc.alpha = alpha;

    // time table lookup with linear interpolation
    const std::size_t grid = cfg.time_embed_dim;
    const double u = t * static_cast<double>(grid - 1);
    fc.t_i0 = std::min(static_cast<std::size_t>(u), grid - 1);
    fc.t_i1 = std::min(fc.t_i0 + 1, grid - 1);
    fc.t_w = u - static_cast<double>(fc.t_i0);

    fc.tokens0 = x_t;
    for (std::size_t i = 0; i < cfg.token_count; ++i) {
        for (std::size_t j = 0; j < cfg.dim; ++j) {
            fc.tokens0.at(i, j) += (1.0 - fc.t_w) * p.time_embed.at(fc.t_i0, j) +
                                   fc.t_w * p.time_embed.at(fc.t_i1, j);
        }
    }

    Tensor stream = fc.tokens0;
    fc.blocks.resize(cfg.blocks);
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const BlockParams& bp = p.blocks[b];
        detail::BlockCache& bc = fc.blocks[b];

        bc.self_norm = detail::rms_norm_fwd(stream, bp.self_gain);
        bc.self = multi_head_attention_fwd(bc.self_norm.y, bc.self_norm.y, bp.self_wq, bp.self_wk,
                                           bp.self_wv, bp.self_wp, cfg.heads);
        add_inplace(stream, bc.self.out);

        bc.text_norm = detail::rms_norm_fwd(stream, bp.text_gain);
        bc.text = multi_head_attention_fwd(bc.text_norm.y, c, bp.text_wq, bp.text_wk, bp.text_wv,
                                           bp.text_wp, cfg.heads);
        add_inplace(stream, bc.text.out);

        bc.id_active = cfg.injects_at(b);
        if (bc.id_active) {
            bc.id_in = stream;
            bc.id = perceiver_attend_fwd(id_tokens, stream, fc.noise_tokens, bp.id_attn, alpha);
            stream = bc.id.out;
        }

        bc.ffn_norm = detail::rms_norm_fwd(stream, bp.ffn_gain);
        bc.ffn_u = matmul(bc.ffn_norm.y, bp.ffn_w1);
        bc.ffn_a = bc.ffn_u;
        for (double& v : bc.ffn_a.data) v = detail::silu(v);
        add_inplace(stream, matmul(bc.ffn_a, bp.ffn_w2));
    }

    fc.final_stream = stream;
    fc.v = matmul(stream, p.head);
    return fc;
}

inline Tensor predict_velocity(const ModelParams& p, const Tensor& x_t, double t, const Tensor& c,
                               const Tensor& id_tokens, double alpha,
                               const Tensor* noise_tokens = nullptr) {
    return model_forward(p, x_t, t, c, id_tokens, alpha, noise_tokens).v;
}

struct ModelGrads {
    ModelParams params;  // gradient holder, same layout as the parameters
    Tensor dx_t;
    Tensor dc;
    Tensor did_tokens;
};

// Hand-derived reverse pass. Produces gradients for every parameter (frozen
// ones included; the trainable map flags them) plus the x_t gradient needed
// by ID guidance.
inline ModelGrads model_backward(const ModelParams& p, const detail::ForwardCache& fc,
                                 const Tensor& dv) {
    const ToyDiTConfig& cfg = p.config;
    require_same_shape(dv, fc.v, "model_backward: upstream");

    ModelGrads g;
    g.params = zeros_like(p);
    g.dc = Tensor(fc.c.shape);
    g.did_tokens = Tensor(fc.id_tokens.shape);
    Tensor dx_noise(fc.x_t.shape);  // gradient through the noise-query path

    g.params.head = matmul_at(fc.final_stream, dv);
    Tensor dstream = matmul_bt(dv, p.head);

    for (std::size_t b = cfg.blocks; b-- > 0;) {
        const BlockParams& bp = p.blocks[b];
        const detail::BlockCache& bc = fc.blocks[b];
        BlockParams& gb = g.params.blocks[b];

        // ffn: out = in + silu(rms(in) w1) w2
        {
            Tensor da = matmul_bt(dstream, bp.ffn_w2);
            gb.ffn_w2 = matmul_at(bc.ffn_a, dstream);
            Tensor du = da;
            for (std::size_t i = 0; i < du.numel(); ++i) {
                du.data[i] *= detail::silu_grad(bc.ffn_u.data[i]);
            }
            gb.ffn_w1 = matmul_at(bc.ffn_norm.y, du);
            Tensor dh = matmul_bt(du, bp.ffn_w1);
            Tensor dx_norm;
            detail::rms_norm_bwd(bc.ffn_norm, bp.ffn_gain, dh, dx_norm, gb.ffn_gain);
            add_inplace(dstream, dx_norm);
        }

        // ID injection
        if (bc.id_active) {
            PerceiverGrads pg = perceiver_attend_bwd(fc.id_tokens, bc.id_in, fc.noise_tokens,
                                                     bp.id_attn, fc.alpha, bc.id, dstream);
            dstream = pg.dx_gen;
            add_inplace(g.did_tokens, pg.dx_id);
            add_inplace(dx_noise, pg.dx_t_tokens);
            gb.id_attn = pg.dw;
        } else {
            gb.id_attn = AttentionWeights::zeros_like(bp.id_attn);
        }

        // text cross-attention
        {
            MhaGrads mg = multi_head_attention_bwd(bc.text_norm.y, fc.c, bp.text_wq, bp.text_wk,
                                                   bp.text_wv, bp.text_wp, cfg.heads, bc.text,
                                                   dstream);
            gb.text_wq = mg.dw_q;
            gb.text_wk = mg.dw_k;
            gb.text_wv = mg.dw_v;
            gb.text_wp = mg.dw_proj;
            add_inplace(g.dc, mg.dctx);
            Tensor dx_norm;
            detail::rms_norm_bwd(bc.text_norm, bp.text_gain, mg.dx, dx_norm, gb.text_gain);
            add_inplace(dstream, dx_norm);
        }

        // self-attention (queries and context share the normed stream)
        {
            MhaGrads mg = multi_head_attention_bwd(bc.self_norm.y, bc.self_norm.y, bp.self_wq,
                                                   bp.self_wk, bp.self_wv, bp.self_wp, cfg.heads,
                                                   bc.self, dstream);
            gb.self_wq = mg.dw_q;
            gb.self_wk = mg.dw_k;
            gb.self_wv = mg.dw_v;
            gb.self_wp = mg.dw_proj;
            Tensor dy = add(mg.dx, mg.dctx);
            Tensor dx_norm;
            detail::rms_norm_bwd(bc.self_norm, bp.self_gain, dy, dx_norm, gb.self_gain);
            add_inplace(dstream, dx_norm);
        }
    }

    // tokens0 = x_t + interpolated time embedding
    for (std::size_t j = 0; j < cfg.dim; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < cfg.token_count; ++i) col += dstream.at(i, j);
        g.params.time_embed.at(fc.t_i0, j) += (1.0 - fc.t_w) * col;
        g.params.time_embed.at(fc.t_i1, j) += fc.t_w * col;
    }

    g.dx_t = dstream;
    if (fc.noise_tracks_x) {
        add_inplace(g.dx_t, dx_noise);
    }
    return g;
}

// VelocityField adapter binding a parameter set; used by losses, guidance and
// the sampler.
struct ToyDiTVelocity final : VelocityField {
    const ModelParams* params;

    explicit ToyDiTVelocity(const ModelParams& p) : params(&p) {}

    Tensor velocity(const Tensor& x_t, double t, const Tensor& c, const Tensor& id_tokens,
                    double alpha, const Tensor* noise_tokens) const override {
        return predict_velocity(*params, x_t, t, c, id_tokens, alpha, noise_tokens);
    }

    Tensor velocity_vjp_x(const Tensor& x_t, double t, const Tensor& c, const Tensor& id_tokens,
                          double alpha, const Tensor& upstream,
                          const Tensor* noise_tokens) const override {
        const auto fc = model_forward(*params, x_t, t, c, id_tokens, alpha, noise_tokens);
        return model_backward(*params, fc, upstream).dx_t;
    }
};

}  // namespace idflow

#endif
