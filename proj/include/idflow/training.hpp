#ifndef IDFLOW_TRAINING_HPP
#define IDFLOW_TRAINING_HPP

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "data.hpp"
#include "flow.hpp"
#include "gradcheck.hpp"
#include "model.hpp"
#include "schedules.hpp"

namespace idflow {

struct TrainConfig {
    long total_steps = 2000;
    std::size_t batch_size = 16;
    double lambda = 0.5;
    double alpha0 = 0.8;
    double lr0 = 1e-3;
    double lr_min = 0.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    std::string variant_tag = "base";

    void validate() const {
        if (total_steps < 1) throw ConfigError("TrainConfig: total_steps must be >= 1");
        if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
        if (!(lambda >= 0.0)) throw ConfigError("TrainConfig: lambda must be >= 0");
        if (!(alpha0 >= 0.0 && alpha0 <= 1.0))
            throw ConfigError("TrainConfig: alpha0 must lie in [0,1]");
        if (!(lr0 > 0.0)) throw ConfigError("TrainConfig: lr0 must be > 0");
        if (!(lr_min >= 0.0 && lr_min <= lr0))
            throw ConfigError("TrainConfig: lr_min must lie in [0, lr0]");
        if (!(weight_decay >= 0.0)) throw ConfigError("TrainConfig: weight_decay must be >= 0");
    }

    ScheduleParams schedule() const {
        ScheduleParams p;
        p.alpha0 = alpha0;
        p.lambda = lambda;
        p.lr0 = lr0;
        p.lr_min = lr_min;
        return p;
    }
};

// Variant presets: A leans on consistency (larger lambda), B on editability
// (smaller lambda, weaker initial ID strength).
inline void apply_variant_preset(TrainConfig& cfg, const std::string& variant) {
    if (variant == "A") {
        cfg.lambda = 1.0;
        cfg.variant_tag = "A";
    } else if (variant == "B") {
        cfg.lambda = 0.25;
        cfg.alpha0 = 0.4;
        cfg.variant_tag = "B";
    } else {
        throw ConfigError("unknown variant preset '" + variant + "' (expected A or B)");
    }
}

struct AdamWHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Moment tensors exist only for unfrozen parameters.
struct OptimizerState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    long step = 0;
};

// Bias-corrected decoupled-weight-decay update, in place.
inline void adamw_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long step_t,
                         double lr, const AdamWHyper& h) {
    require_same_shape(param, grad, "adamw_update");
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(step_t));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(step_t));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        m.data[i] = h.beta1 * m.data[i] + (1.0 - h.beta1) * grad.data[i];
        v.data[i] = h.beta2 * v.data[i] + (1.0 - h.beta2) * grad.data[i] * grad.data[i];
        const double m_hat = m.data[i] / bc1;
        const double v_hat = v.data[i] / bc2;
        param.data[i] -=
            lr * (m_hat / (std::sqrt(v_hat) + h.eps) + h.weight_decay * param.data[i]);
    }
}

struct LossRecord {
    long step = 0;
    double l_diff = 0.0;
    double l_id = 0.0;
    double l_total = 0.0;
    double lr = 0.0;
};

// One joint-objective step over a batch: per sample draw t and x1, forward on
// the Eq. 3 path with alpha threaded, combine the flow-matching and ID-loss
// gradients on the velocity output, backprop, then AdamW over the unfrozen
// parameters. Frozen tensors are never touched.
inline LossRecord train_step(ModelParams& params, OptimizerState& opt, const Dataset& ds,
                             const std::vector<std::size_t>& batch, const TrainConfig& cfg,
                             long step) {
    if (batch.empty()) throw ConfigError("train_step: empty batch");
    const World& w = world();
    const ScheduleParams sched = cfg.schedule();

    ModelParams grad_sum = zeros_like(params);
    double l_diff_sum = 0.0, l_id_sum = 0.0;

    for (std::size_t bi = 0; bi < batch.size(); ++bi) {
        const Sample& s = ds.samples.at(batch[bi]);
        const IdentityRecord& rec = ds.identity(s.identity);
        Rng rng(Rng::derive(cfg.seed, 0x517e900000ULL +
                                          static_cast<std::uint64_t>(step) * 65536 + bi));
        const double t = rng.uniform();
        Tensor x1 = rng.normal_tensor(s.x0.shape);
        Tensor x_t = interpolate_path(s.x0, x1, t);
        const double alpha = id_strength_norm(t, sched);
        Tensor id_tokens = w.id_tokens_for(rec.z_id);

        JointLossGrads jg = joint_loss_grads(params, x_t, t, sub(x1, s.x0), s.c, id_tokens,
                                             alpha, rec.e_ref, w, cfg.lambda);
        if (!std::isfinite(jg.l_total)) {
            throw DivergenceError("train_step: non-finite loss at step " + std::to_string(step) +
                                  ", sample " + std::to_string(bi));
        }
        l_diff_sum += jg.l_diff;
        l_id_sum += jg.l_id;
        for_each_param(grad_sum, [&](const std::string& name, Tensor& acc) {
            add_inplace(acc, *find_param(jg.param_grads, name));
        });
    }

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const double lr = lr_cosine(step, cfg.total_steps, sched);
    const AdamWHyper hyper{cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay};
    opt.step += 1;
    for_each_param(params, [&](const std::string& name, Tensor& p) {
        if (!params.trainable.at(name)) return;
        Tensor g = scale(*find_param(grad_sum, name), inv_b);
        auto [mit, inserted_m] = opt.m.try_emplace(name, Tensor(p.shape));
        auto [vit, inserted_v] = opt.v.try_emplace(name, Tensor(p.shape));
        adamw_update(p, g, mit->second, vit->second, opt.step, lr, hyper);
    });

    LossRecord rec;
    rec.step = step;
    rec.l_diff = l_diff_sum * inv_b;
    rec.l_id = l_id_sum * inv_b;
    rec.l_total = rec.l_diff + cfg.lambda * rec.l_id;
    rec.lr = lr;
    return rec;
}

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LossRecord> trace;
};

// Full run: seeded batch selection over the train split, one train_step per
// step, checkpoint with provenance at the end. Deterministic in cfg.seed.
inline TrainResult train_variant(const Dataset& ds, const ModelParams& base,
                                 const TrainConfig& cfg) {
    cfg.validate();
    if (ds.train_idx.empty()) throw ConfigError("train_variant: dataset has no training split");
    ModelParams params = base;
    OptimizerState opt;
    TrainResult result;
    result.trace.reserve(static_cast<std::size_t>(cfg.total_steps));

    for (long step = 0; step < cfg.total_steps; ++step) {
        Rng batch_rng(Rng::derive(cfg.seed, 0xba7c4000ULL + static_cast<std::uint64_t>(step)));
        std::vector<std::size_t> batch(cfg.batch_size);
        for (auto& idx : batch) idx = ds.train_idx[batch_rng.index(ds.train_idx.size())];
        result.trace.push_back(train_step(params, opt, ds, batch, cfg, step));
    }

    Checkpoint ckpt;
    ckpt.params = std::move(params);
    ckpt.meta["variant_tag"] = cfg.variant_tag;
    ckpt.meta["train_config"] = {{"total_steps", cfg.total_steps},
                                 {"batch_size", cfg.batch_size},
                                 {"lambda", cfg.lambda},
                                 {"alpha0", cfg.alpha0},
                                 {"lr0", cfg.lr0},
                                 {"lr_min", cfg.lr_min},
                                 {"adam_beta1", cfg.adam_beta1},
                                 {"adam_beta2", cfg.adam_beta2},
                                 {"adam_eps", cfg.adam_eps},
                                 {"weight_decay", cfg.weight_decay},
                                 {"seed", cfg.seed},
                                 {"variant_tag", cfg.variant_tag}};
    ckpt.meta["dataset_seed"] = ds.seed;
    ckpt.meta["world_seed"] = kWorldSeed;
    if (!result.trace.empty()) {
        const LossRecord& first = result.trace.front();
        const LossRecord& last = result.trace.back();
        ckpt.meta["loss_summary"] = {
            {"initial", {{"l_diff", first.l_diff}, {"l_id", first.l_id}, {"l_total", first.l_total}}},
            {"final", {{"l_diff", last.l_diff}, {"l_id", last.l_id}, {"l_total", last.l_total}}}};
    }
    result.checkpoint = std::move(ckpt);
    return result;
}

inline TrainConfig train_config_from_meta(const nlohmann::json& meta) {
    TrainConfig cfg;
    const auto& j = meta.at("train_config");
    cfg.total_steps = j.at("total_steps").get<long>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.lambda = j.at("lambda").get<double>();
    cfg.alpha0 = j.at("alpha0").get<double>();
    cfg.lr0 = j.at("lr0").get<double>();
    cfg.lr_min = j.at("lr_min").get<double>();
    cfg.adam_beta1 = j.at("adam_beta1").get<double>();
    cfg.adam_beta2 = j.at("adam_beta2").get<double>();
    cfg.adam_eps = j.at("adam_eps").get<double>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.variant_tag = j.at("variant_tag").get<std::string>();
    return cfg;
}

// ---------------------------------------------------------------------------
// validation sampling and fusion-coefficient search
// ---------------------------------------------------------------------------

// Deterministic validation sweep: the first prompts_per_id validation samples
// of every identity, one seeded noise draw per request.
inline std::vector<std::pair<GenRequest, Tensor>> sample_validation_set(
    const ModelParams& params, const Dataset& ds, std::size_t prompts_per_id,
    const SamplerConfig& sampler, const ScheduleParams& sched, std::uint64_t seed) {
    const World& w = world();
    ToyDiTVelocity model(params);
    WorldIdEncoder encoder(w);
    std::vector<std::pair<GenRequest, Tensor>> out;
    std::size_t gidx = 0;
    for (const auto& rec : ds.identities) {
        Tensor id_tokens = w.id_tokens_for(rec.z_id);
        const auto prompts = ds.val_samples_of(rec.id_code);
        for (std::size_t k = 0; k < prompts.size() && k < prompts_per_id; ++k) {
            const Sample& s = ds.samples[prompts[k]];
            Rng rng(Rng::derive(seed, 0x5a3f0000ULL + gidx));
            Tensor x1 = rng.normal_tensor(s.x0.shape);
            Tensor gen = sample_euler(model, x1, s.c, id_tokens, rec.e_ref, &encoder, sampler,
                                      sched);
            out.push_back({{rec.id_code, prompts[k]}, std::move(gen)});
            ++gidx;
        }
    }
    return out;
}

// Swaps fused attention weights into a copy of the first variant's
// parameters. Frozen tensors must agree bit-for-bit across variants.
inline ModelParams fuse_model_params(const std::vector<const ModelParams*>& variants,
                                     const FusionSpec& spec) {
    if (variants.empty()) throw FusionError("fuse_model_params: no variants");
    const ModelParams& first = *variants[0];
    for (std::size_t i = 1; i < variants.size(); ++i) {
        const ModelParams& other = *variants[i];
        if (other.config.blocks != first.config.blocks ||
            other.config.dim != first.config.dim) {
            throw FusionError("fuse_model_params: variant " + std::to_string(i) +
                              " has an incompatible architecture");
        }
        bool frozen_equal = true;
        for_each_param(const_cast<ModelParams&>(first), [&](const std::string& name, Tensor& t) {
            if (first.trainable.at(name)) return;
            const Tensor* o = find_param(other, name);
            if (!o || !bit_equal(t, *o)) frozen_equal = false;
        });
        if (!frozen_equal) {
            throw FusionError("fuse_model_params: frozen parameters differ between variants; "
                              "they must share one base model");
        }
    }
    ModelParams fused = first;
    for (std::size_t b = 0; b < first.config.blocks; ++b) {
        std::vector<AttentionWeights> blocks;
        blocks.reserve(variants.size());
        for (const ModelParams* v : variants) blocks.push_back(v->blocks[b].id_attn);
        fused.blocks[b].id_attn = fuse_weights(blocks, spec);
    }
    return fused;
}

struct FusionCandidate {
    std::vector<double> coefficients;
    double facesim = 0.0;
    double editdiv = 0.0;
    double editdiv_norm = 0.0;
    double score = 0.0;
};

struct FusionSearchResult {
    FusionSpec spec;
    std::vector<FusionCandidate> candidates;  // grid order; corners first
};

namespace detail {

inline void enumerate_simplex(std::size_t n, long resolution, std::vector<long>& acc,
                              std::vector<std::vector<long>>& out) {
    if (acc.size() + 1 == n) {
        long used = 0;
        for (long k : acc) used += k;
        acc.push_back(resolution - used);
        out.push_back(acc);
        acc.pop_back();
        return;
    }
    long used = 0;
    for (long k : acc) used += k;
    for (long k = resolution - used; k >= 0; --k) {  // descending: [1,0,..] first
        acc.push_back(k);
        enumerate_simplex(n, resolution, acc, out);
        acc.pop_back();
    }
}

inline double harmonic_mean(double a, double b) {
    a = std::max(a, 0.0);
    b = std::max(b, 0.0);
    if (a + b <= 0.0) return 0.0;
    return 2.0 * a * b / (a + b);
}

}  // namespace detail

// Scores candidates in place (min-max-normalized editdiv, harmonic mean with
// facesim) and returns the argmax index; exact ties resolve to the lowest
// grid index.
inline std::size_t score_and_select(std::vector<FusionCandidate>& candidates) {
    if (candidates.empty()) throw ConfigError("score_and_select: no candidates");
    double ed_min = candidates.front().editdiv, ed_max = ed_min;
    for (const auto& cand : candidates) {
        ed_min = std::min(ed_min, cand.editdiv);
        ed_max = std::max(ed_max, cand.editdiv);
    }
    const double span = ed_max - ed_min;
    std::size_t best = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        FusionCandidate& cand = candidates[i];
        cand.editdiv_norm = span > 1e-12 ? (cand.editdiv - ed_min) / span : 1.0;
        cand.score = detail::harmonic_mean(cand.facesim, cand.editdiv_norm);
        if (cand.score > candidates[best].score) best = i;
    }
    return best;
}

// Exhaustive simplex-grid search for convex fusion coefficients, scored on
// validation sampling by the harmonic mean of facesim and min-max-normalized
// editdiv. Exact ties resolve to the lowest-index grid point.
inline FusionSearchResult search_fusion_coefficients(
    const std::vector<const Checkpoint*>& variants, const Dataset& ds, double grid_step,
    const SamplerConfig& sampler, const ScheduleParams& sched, std::size_t prompts_per_id,
    std::uint64_t seed) {
    if (variants.empty()) throw ConfigError("search_fusion_coefficients: no variants");
    if (ds.val_idx.empty()) throw ConfigError("search_fusion_coefficients: empty validation set");

    std::vector<std::string> tags;
    for (const Checkpoint* c : variants) tags.push_back(c->meta.value("variant_tag", "variant"));

    FusionSearchResult result;
    if (variants.size() == 1) {
        result.spec = FusionSpec{{1.0}, tags};
        return result;
    }

    const long resolution = std::lround(1.0 / grid_step);
    if (resolution < 1 || std::abs(grid_step * static_cast<double>(resolution) - 1.0) > 1e-9) {
        throw ConfigError("search_fusion_coefficients: grid_step must divide 1 evenly");
    }

    std::vector<std::vector<long>> grid;
    std::vector<long> acc;
    detail::enumerate_simplex(variants.size(), resolution, acc, grid);

    std::vector<const ModelParams*> param_ptrs;
    for (const Checkpoint* c : variants) param_ptrs.push_back(&c->params);

    for (const auto& ks : grid) {
        FusionCandidate cand;
        for (long k : ks) {
            cand.coefficients.push_back(static_cast<double>(k) /
                                        static_cast<double>(resolution));
        }
        // exact convexity for the spec invariant
        double sum = 0.0;
        for (std::size_t i = 0; i + 1 < cand.coefficients.size(); ++i) {
            sum += cand.coefficients[i];
        }
        cand.coefficients.back() = 1.0 - sum;

        ModelParams fused = fuse_model_params(param_ptrs, FusionSpec{cand.coefficients, tags});
        auto gens = sample_validation_set(fused, ds, prompts_per_id, sampler, sched, seed);
        MetricsReport rep = eval_metrics(gens, ds);
        cand.facesim = rep.facesim;
        cand.editdiv = rep.editdiv;
        result.candidates.push_back(std::move(cand));
    }

    const std::size_t best = score_and_select(result.candidates);
    result.spec = FusionSpec{result.candidates[best].coefficients, tags};
    return result;
}

}  // namespace idflow

#endif
