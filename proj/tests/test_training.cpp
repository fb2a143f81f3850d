#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include <idflow/training.hpp>

using namespace idflow;

namespace {

TrainConfig quick_config(std::uint64_t seed, long steps = 30) {
    TrainConfig cfg;
    cfg.total_steps = steps;
    cfg.batch_size = 4;
    cfg.seed = seed;
    return cfg;
}

bool params_bit_equal(const ModelParams& a, const ModelParams& b) {
    bool same = true;
    for_each_param(const_cast<ModelParams&>(a), [&](const std::string& name, Tensor& t) {
        const Tensor* o = find_param(b, name);
        same = same && o && bit_equal(t, *o);
    });
    return same;
}

}  // namespace

TEST_CASE("adamw_update null and decay cases", "[training][adamw]") {
    Rng rng(301);
    Tensor p = rng.normal_tensor({3, 3});
    Tensor p0 = p;
    Tensor g({3, 3});
    Tensor m({3, 3}), v({3, 3});
    AdamWHyper h;
    h.weight_decay = 0.0;
    adamw_update(p, g, m, v, 1, 1e-3, h);
    REQUIRE(bit_equal(p, p0));  // zero grad, zero decay: untouched

    // pure decoupled decay: p <- p - lr*wd*p
    h.weight_decay = 0.01;
    Tensor m2({3, 3}), v2({3, 3});
    Tensor expect = p0;
    for (double& x : expect.data) x -= 1e-3 * (0.0 + 0.01 * x);
    adamw_update(p, g, m2, v2, 1, 1e-3, h);
    REQUIRE(bit_equal(p, expect));
}

TEST_CASE("adamw_update first step closed form", "[training][adamw]") {
    // from zero state with constant grad: p -= lr * g/(|g| + eps) + lr*wd*p
    Tensor p({2}, {1.0, -2.0});
    Tensor g({2}, {0.3, -0.7});
    Tensor m({2}), v({2});
    AdamWHyper h;  // defaults: beta1 .9, beta2 .999, eps 1e-8, wd 0.01
    const double lr = 1e-2;
    Tensor expect = p;
    for (std::size_t i = 0; i < 2; ++i) {
        const double m_hat = g.data[i];              // m/(1-b1) with m=(1-b1)g
        const double v_hat = g.data[i] * g.data[i];  // same for v
        expect.data[i] -= lr * (m_hat / (std::sqrt(v_hat) + h.eps) + h.weight_decay * expect.data[i]);
    }
    Tensor before = p;
    adamw_update(p, g, m, v, 1, lr, h);
    for (std::size_t i = 0; i < 2; ++i) {
        REQUIRE(p.data[i] == Catch::Approx(expect.data[i]).margin(1e-15));
        // each coordinate moved against its gradient sign by ~lr
        const double step_part = p.data[i] - before.data[i] * (1.0 - lr * h.weight_decay);
        REQUIRE(std::abs(step_part + lr * (g.data[i] > 0 ? 1.0 : -1.0)) < 1e-7);
    }
    REQUIRE_THROWS_AS(adamw_update(p, Tensor({3}), m, v, 1, lr, h), DimensionError);
}

TEST_CASE("train_step records exact loss decomposition", "[training]") {
    Dataset ds = gen_dataset(3, 8, 11);
    ModelParams params = init_params(ToyDiTConfig{}, 11);
    OptimizerState opt;
    TrainConfig cfg = quick_config(11);
    std::vector<std::size_t> batch{ds.train_idx[0], ds.train_idx[1], ds.train_idx[2]};

    LossRecord rec = train_step(params, opt, ds, batch, cfg, 0);
    REQUIRE(rec.l_total == rec.l_diff + cfg.lambda * rec.l_id);
    REQUIRE(rec.lr == lr_cosine(0, cfg.total_steps, cfg.schedule()));

    TrainConfig zero_lambda = cfg;
    zero_lambda.lambda = 0.0;
    ModelParams params2 = init_params(ToyDiTConfig{}, 11);
    OptimizerState opt2;
    LossRecord rec2 = train_step(params2, opt2, ds, batch, zero_lambda, 0);
    REQUIRE(rec2.l_total == rec2.l_diff);
}

TEST_CASE("train_step leaves frozen parameters bit-unchanged", "[training][freeze]") {
    Dataset ds = gen_dataset(3, 8, 12);
    ModelParams params = init_params(ToyDiTConfig{}, 12);
    ModelParams init = params;
    OptimizerState opt;
    TrainConfig cfg = quick_config(12);

    for (long step = 0; step < 20; ++step) {
        Rng brng(Rng::derive(cfg.seed, 0xba7c4000ULL + static_cast<std::uint64_t>(step)));
        std::vector<std::size_t> batch(cfg.batch_size);
        for (auto& i : batch) i = ds.train_idx[brng.index(ds.train_idx.size())];
        train_step(params, opt, ds, batch, cfg, step);
    }

    bool id_attn_changed = false;
    for_each_param(params, [&](const std::string& name, Tensor& t) {
        const Tensor& before = *find_param(init, name);
        if (params.trainable.at(name)) {
            if (!bit_equal(t, before)) id_attn_changed = true;
        } else {
            REQUIRE(bit_equal(t, before));  // frozen: every tensor identical
        }
    });
    REQUIRE(id_attn_changed);

    // optimizer state exists only for the unfrozen entries
    for (const auto& [name, tensor] : opt.m) {
        REQUIRE(params.trainable.at(name));
    }
    REQUIRE(opt.m.size() == 5 * params.config.blocks);
}

TEST_CASE("train_variant is deterministic and checkpoints round-trip", "[training]") {
    Dataset ds = gen_dataset(3, 8, 13);
    ModelParams base = init_params(ToyDiTConfig{}, 13);
    TrainConfig cfg = quick_config(13, 20);

    TrainResult a = train_variant(ds, base, cfg);
    TrainResult b = train_variant(ds, base, cfg);
    REQUIRE(params_bit_equal(a.checkpoint.params, b.checkpoint.params));
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        REQUIRE(a.trace[i].l_total == b.trace[i].l_total);
        REQUIRE(a.trace[i].lr == lr_cosine(a.trace[i].step, cfg.total_steps, cfg.schedule()));
    }

    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "idflow_ckpt_test.bin").string();
    a.checkpoint.meta["variant_tag"] = cfg.variant_tag;
    save_checkpoint(path, a.checkpoint);
    Checkpoint loaded = load_checkpoint(path);
    REQUIRE(params_bit_equal(loaded.params, a.checkpoint.params));
    REQUIRE(loaded.params.trainable == a.checkpoint.params.trainable);
    REQUIRE(loaded.meta.at("train_config").at("lambda").get<double>() == cfg.lambda);
    fs::remove(path);
}

TEST_CASE("train_step surfaces divergence with indices", "[training][errors]") {
    Dataset ds = gen_dataset(2, 4, 14);
    ModelParams params = init_params(ToyDiTConfig{}, 14);
    params.head.data[0] = std::nan("");
    OptimizerState opt;
    TrainConfig cfg = quick_config(14);
    std::vector<std::size_t> batch{ds.train_idx[0]};
    REQUIRE_THROWS_MATCHES(train_step(params, opt, ds, batch, cfg, 7), DivergenceError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("step 7")));
}

TEST_CASE("variant presets", "[training]") {
    TrainConfig a;
    apply_variant_preset(a, "A");
    REQUIRE(a.lambda == 1.0);
    REQUIRE(a.variant_tag == "A");
    TrainConfig b;
    apply_variant_preset(b, "B");
    REQUIRE(b.lambda == 0.25);
    REQUIRE(b.alpha0 == 0.4);
    TrainConfig c;
    REQUIRE_THROWS_AS(apply_variant_preset(c, "C"), ConfigError);
}

TEST_CASE("score_and_select: dominance, ties, degenerate spread", "[training][fusion]") {
    // constructed dominance: candidate 0 beats every other on both metrics
    std::vector<FusionCandidate> cands(3);
    cands[0].coefficients = {1.0, 0.0};
    cands[0].facesim = 0.9;
    cands[0].editdiv = 0.5;
    cands[1].coefficients = {0.5, 0.5};
    cands[1].facesim = 0.7;
    cands[1].editdiv = 0.4;
    cands[2].coefficients = {0.0, 1.0};
    cands[2].facesim = 0.6;
    cands[2].editdiv = 0.3;
    REQUIRE(score_and_select(cands) == 0);

    // exact ties resolve to the lowest grid index
    for (auto& cand : cands) {
        cand.facesim = 0.8;
        cand.editdiv = 0.42;
    }
    REQUIRE(score_and_select(cands) == 0);
    REQUIRE(cands[0].editdiv_norm == 1.0);  // degenerate spread scores neutral

    // harmonic mean punishes collapsing either metric
    cands[0].facesim = 1.0;
    cands[0].editdiv = 0.0;
    cands[1].facesim = 0.6;
    cands[1].editdiv = 0.6;
    cands[2].facesim = 0.0;
    cands[2].editdiv = 1.0;
    REQUIRE(score_and_select(cands) == 1);
}

TEST_CASE("search_fusion_coefficients singleton and identical variants", "[training][fusion]") {
    Dataset ds = gen_dataset(2, 8, 15);
    ModelParams base = init_params(ToyDiTConfig{}, 15);
    TrainConfig cfg = quick_config(15, 10);
    TrainResult tr = train_variant(ds, base, cfg);
    tr.checkpoint.meta["variant_tag"] = "solo";

    SamplerConfig sampler;
    sampler.steps = 4;
    sampler.beta0 = 0.0;
    ScheduleParams sched;

    FusionSearchResult single =
        search_fusion_coefficients({&tr.checkpoint}, ds, 0.5, sampler, sched, 1, 15);
    REQUIRE(single.spec.coefficients == std::vector<double>{1.0});
    REQUIRE(single.candidates.empty());  // no search for a singleton

    // two identical variants: constant score, tie-break returns [1, 0]
    FusionSearchResult twin = search_fusion_coefficients({&tr.checkpoint, &tr.checkpoint}, ds,
                                                         0.5, sampler, sched, 1, 15);
    REQUIRE(twin.spec.coefficients == std::vector<double>{1.0, 0.0});
    for (const auto& cand : twin.candidates) {
        REQUIRE(cand.score == twin.candidates.front().score);
    }

    REQUIRE_THROWS_AS(search_fusion_coefficients({&tr.checkpoint, &tr.checkpoint}, ds, 0.3,
                                                 sampler, sched, 1, 15),
                      ConfigError);  // 0.3 does not divide 1
}

TEST_CASE("fuse_model_params checks and grid enumeration order", "[training][fusion]") {
    Dataset ds = gen_dataset(2, 8, 16);
    ModelParams base = init_params(ToyDiTConfig{}, 16);
    TrainConfig cfg = quick_config(16, 8);
    TrainResult a = train_variant(ds, base, cfg);
    cfg.lambda = 1.0;
    TrainResult b = train_variant(ds, base, cfg);

    // healthy fuse: frozen params shared, id_attn convex-combined
    FusionSpec spec{{0.25, 0.75}, {"a", "b"}};
    ModelParams fused = fuse_model_params({&a.checkpoint.params, &b.checkpoint.params}, spec);
    const Tensor& wa = a.checkpoint.params.blocks[0].id_attn.w_q;
    const Tensor& wb = b.checkpoint.params.blocks[0].id_attn.w_q;
    for (std::size_t i = 0; i < wa.numel(); ++i) {
        REQUIRE(fused.blocks[0].id_attn.w_q.data[i] ==
                Catch::Approx(0.25 * wa.data[i] + 0.75 * wb.data[i]).margin(1e-15));
    }

    // different base model: frozen params differ -> refuse to fuse
    ModelParams other_base = init_params(ToyDiTConfig{}, 17);
    TrainResult c = train_variant(ds, other_base, cfg);
    REQUIRE_THROWS_AS(
        fuse_model_params({&a.checkpoint.params, &c.checkpoint.params}, spec), FusionError);

    // architecture mismatch
    ToyDiTConfig small;
    small.blocks = 1;
    ModelParams tiny = init_params(small, 16);
    REQUIRE_THROWS_AS(fuse_model_params({&a.checkpoint.params, &tiny}, spec), FusionError);
}

TEST_CASE("joint-objective gradients check out across 5 seeds", "[training][gradcheck]") {
    // the flagship property: analytic gradients of l_diff + lambda * l_id vs
    // central differences on the minimal 2-block model
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
        GradCheckReport rep = gradcheck_joint_loss(seed, 1e-4);
        INFO("seed " << seed << ": worst " << rep.worst_param << " err " << rep.worst_err);
        REQUIRE(rep.pass);
    }
}

TEST_CASE("gradcheck harness flags an injected gradient fault", "[training][gradcheck]") {
    GradCheckReport rep = gradcheck_joint_loss(1, 1e-4, "ffn.w1");
    REQUIRE_FALSE(rep.pass);
    REQUIRE(rep.worst_param.find("ffn.w1") != std::string::npos);
}

TEST_CASE("sample_validation_set is deterministic and covers identities", "[training]") {
    Dataset ds = gen_dataset(3, 8, 18);
    ModelParams params = init_params(ToyDiTConfig{}, 18);
    SamplerConfig sampler;
    sampler.steps = 4;
    sampler.beta0 = 0.0;
    ScheduleParams sched;
    auto gens = sample_validation_set(params, ds, 1, sampler, sched, 18);
    REQUIRE(gens.size() == 3);
    auto again = sample_validation_set(params, ds, 1, sampler, sched, 18);
    for (std::size_t i = 0; i < gens.size(); ++i) {
        REQUIRE(bit_equal(gens[i].second, again[i].second));
        REQUIRE(gens[i].first.identity == again[i].first.identity);
    }
}
