#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <idflow/data.hpp>
#include <idflow/rng.hpp>

using namespace idflow;

TEST_CASE("id_encode separability gate", "[data][gate]") {
    // same-ID embeddings must align better than cross-ID ones in >= 95% of
    // 1000 trials; the oracle gate for the encoder construction
    const World& w = world();
    Rng rng(0xA11CE);
    int hits = 0;
    const int trials = 1000;
    for (int i = 0; i < trials; ++i) {
        Tensor z_id = rng.normal_tensor({w.dims.k_id});
        Tensor z_id2 = rng.normal_tensor({w.dims.k_id});
        Tensor a = rng.normal_tensor({w.dims.k_attr});
        Tensor b = rng.normal_tensor({w.dims.k_attr});
        Tensor c = rng.normal_tensor({w.dims.k_attr});
        Tensor ea = w.id_encode(w.generate(z_id, a));
        Tensor eb = w.id_encode(w.generate(z_id, b));
        Tensor ec = w.id_encode(w.generate(z_id2, c));
        if (dot(ea, eb) > dot(ea, ec)) ++hits;
    }
    INFO("separability: " << hits << "/" << trials);
    REQUIRE(hits >= 950);
}

TEST_CASE("attr_readout fit-quality gate", "[data][gate]") {
    // R^2 of the linear attribute readout over 1000 fresh samples
    const World& w = world();
    Rng rng(0xBEE5);
    const int n = 1000;
    double ss_res = 0.0, ss_tot = 0.0;
    std::vector<Tensor> zs, preds;
    Tensor mean({w.dims.k_attr});
    for (int i = 0; i < n; ++i) {
        Tensor z_id = rng.normal_tensor({w.dims.k_id});
        Tensor z_attr = rng.normal_tensor({w.dims.k_attr});
        Tensor pred = w.attr_readout(w.generate(z_id, z_attr));
        add_inplace(mean, z_attr);
        zs.push_back(std::move(z_attr));
        preds.push_back(std::move(pred));
    }
    mean = scale(mean, 1.0 / n);
    for (int i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < w.dims.k_attr; ++j) {
            const double r = preds[i].data[j] - zs[i].data[j];
            const double d = zs[i].data[j] - mean.data[j];
            ss_res += r * r;
            ss_tot += d * d;
        }
    }
    const double r2 = 1.0 - ss_res / ss_tot;
    INFO("attr readout R^2 = " << r2);
    REQUIRE(r2 > 0.9);
}

TEST_CASE("attr_readout is linear and deterministic", "[data]") {
    const World& w = world();
    Rng rng(77);
    Tensor x = rng.normal_tensor({w.dims.n_gen, w.dims.d_gen});
    Tensor y = rng.normal_tensor({w.dims.n_gen, w.dims.d_gen});
    const double a = 1.7, b = -0.4;
    Tensor lhs = w.attr_readout(add(scale(x, a), scale(y, b)));
    Tensor rhs = add(scale(w.attr_readout(x), a), scale(w.attr_readout(y), b));
    REQUIRE(max_abs_diff(lhs, rhs) < 1e-9);
    REQUIRE(bit_equal(w.attr_readout(x), w.attr_readout(x)));
}

TEST_CASE("id_encode returns unit vectors deterministically", "[data]") {
    const World& w = world();
    Rng rng(78);
    for (int i = 0; i < 10; ++i) {
        Tensor x = rng.normal_tensor({w.dims.n_gen, w.dims.d_gen});
        Tensor e = w.id_encode(x);
        REQUIRE(std::abs(norm(e) - 1.0) < 1e-9);
        REQUIRE(bit_equal(e, w.id_encode(x)));
    }
    Tensor zero({w.dims.n_gen, w.dims.d_gen});
    REQUIRE_THROWS_AS(w.id_encode(zero), DegenerateVectorError);
}

TEST_CASE("encode_cosine_grad matches finite differences", "[data][gradcheck]") {
    const World& w = world();
    Rng rng(79);
    Tensor x = rng.normal_tensor({w.dims.n_gen, w.dims.d_gen});
    Tensor e_ref = w.id_encode(rng.normal_tensor({w.dims.n_gen, w.dims.d_gen}));
    Tensor g = w.encode_cosine_grad(x, e_ref);
    Tensor fd = finite_diff_grad(
        [&](const Tensor& cand) { return cosine(w.id_encode(cand), e_ref); }, x);
    REQUIRE(max_rel_err(g, fd, 1e-7) < 1e-4);
}

TEST_CASE("gen_dataset counts, balance, split and determinism", "[data]") {
    Dataset ds = gen_dataset(8, 16, 1);
    REQUIRE(ds.samples.size() == 128);
    REQUIRE(ds.identities.size() == 8);
    std::map<int, int> counts;
    for (const auto& s : ds.samples) counts[s.identity]++;
    for (const auto& [code, n] : counts) REQUIRE(n == 16);

    // validation split contains every identity
    std::map<int, int> val_counts;
    for (std::size_t idx : ds.val_idx) val_counts[ds.samples[idx].identity]++;
    REQUIRE(val_counts.size() == 8);
    REQUIRE(ds.train_idx.size() + ds.val_idx.size() == ds.samples.size());

    Dataset again = gen_dataset(8, 16, 1);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        REQUIRE(bit_equal(ds.samples[i].x0, again.samples[i].x0));
        REQUIRE(bit_equal(ds.samples[i].c, again.samples[i].c));
    }
    for (std::size_t i = 0; i < ds.identities.size(); ++i) {
        REQUIRE(bit_equal(ds.identities[i].e_ref, again.identities[i].e_ref));
    }

    Dataset other = gen_dataset(8, 16, 2);
    REQUIRE_FALSE(bit_equal(ds.samples[0].x0, other.samples[0].x0));
}

TEST_CASE("samples of one identity share z_id and differ in z_attr", "[data]") {
    Dataset ds = gen_dataset(4, 8, 3);
    const auto& s0 = ds.samples[0];
    const auto& s1 = ds.samples[1];
    REQUIRE(s0.identity == s1.identity);
    REQUIRE_FALSE(bit_equal(s0.z_attr, s1.z_attr));
    // x0 determinism against the world generator
    const World& w = world();
    REQUIRE(bit_equal(s0.x0, w.generate(ds.identity(s0.identity).z_id, s0.z_attr)));
}

TEST_CASE("gen_dataset rejects degenerate counts", "[data][errors]") {
    REQUIRE_THROWS_AS(gen_dataset(1, 8, 0), ConfigError);
    REQUIRE_THROWS_AS(gen_dataset(4, 1, 0), ConfigError);
}

TEST_CASE("e_ref norm is one", "[data]") {
    Dataset ds = gen_dataset(3, 4, 5);
    for (const auto& rec : ds.identities) {
        REQUIRE(std::abs(norm(rec.e_ref) - 1.0) < 1e-9);
    }
}

TEST_CASE("eval_metrics on oracle generations", "[data][metrics]") {
    Dataset ds = gen_dataset(4, 8, 6);
    // copy one reference sample per validation prompt: facesim is high (same
    // ID, different attrs), promptfollow ~ 1
    std::vector<std::pair<GenRequest, Tensor>> gens;
    for (std::size_t idx : ds.val_idx) {
        gens.push_back({{ds.samples[idx].identity, idx}, ds.samples[idx].x0});
    }
    MetricsReport rep = eval_metrics(gens, ds);
    REQUIRE(rep.promptfollow > 0.95);
    REQUIRE(rep.facesim > 0.8);
    REQUIRE(rep.per_identity.size() == 4);

    // exact reproduction of a single sample: facesim is exactly 1 when e_ref
    // is that sample's own embedding
    const World& w = world();
    Tensor e_self = w.id_encode(ds.samples[0].x0);
    REQUIRE(cosine(w.id_encode(ds.samples[0].x0), e_self) == 1.0);
}

TEST_CASE("eval_metrics degenerate diversity and errors", "[data][metrics]") {
    Dataset ds = gen_dataset(3, 8, 7);
    // identical generations regardless of prompt: editdiv exactly 0
    std::vector<std::pair<GenRequest, Tensor>> gens;
    Tensor fixed = ds.samples[0].x0;
    for (std::size_t idx : ds.val_idx) {
        gens.push_back({{ds.samples[idx].identity, idx}, fixed});
    }
    MetricsReport rep = eval_metrics(gens, ds);
    REQUIRE(rep.editdiv == 0.0);

    REQUIRE_THROWS_AS(eval_metrics({}, ds), ConfigError);
    std::vector<std::pair<GenRequest, Tensor>> bad{{{0, 999999}, fixed}};
    REQUIRE_THROWS_AS(eval_metrics(bad, ds), ConfigError);
}

TEST_CASE("random-noise generations score near zero facesim", "[data][metrics]") {
    Dataset ds = gen_dataset(4, 8, 8);
    Rng rng(0xD00D);
    std::vector<std::pair<GenRequest, Tensor>> gens;
    const World& w = world();
    for (std::size_t idx : ds.val_idx) {
        gens.push_back({{ds.samples[idx].identity, idx},
                        rng.normal_tensor({w.dims.n_gen, w.dims.d_gen})});
    }
    MetricsReport rep = eval_metrics(gens, ds);
    const double bound = 3.0 / std::sqrt(static_cast<double>(w.dims.d_e * gens.size()));
    INFO("facesim " << rep.facesim << " bound " << bound);
    REQUIRE(std::abs(rep.facesim) < bound);
}

TEST_CASE("dataset file round-trips bit-exactly", "[data][io]") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "idflow_test_dataset.bin").string();
    Dataset ds = gen_dataset(3, 6, 9);
    save_dataset(path, ds);
    Dataset rt = load_dataset(path);
    REQUIRE(rt.samples.size() == ds.samples.size());
    REQUIRE(rt.train_idx == ds.train_idx);
    REQUIRE(rt.val_idx == ds.val_idx);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        REQUIRE(bit_equal(rt.samples[i].x0, ds.samples[i].x0));
        REQUIRE(bit_equal(rt.samples[i].c, ds.samples[i].c));
        REQUIRE(bit_equal(rt.samples[i].z_attr, ds.samples[i].z_attr));
        REQUIRE(rt.samples[i].identity == ds.samples[i].identity);
    }
    for (std::size_t i = 0; i < ds.identities.size(); ++i) {
        REQUIRE(bit_equal(rt.identities[i].e_ref, ds.identities[i].e_ref));
        REQUIRE(bit_equal(rt.identities[i].z_id, ds.identities[i].z_id));
    }
    fs::remove(path);

    // rewriting the same dataset produces a byte-identical file
    const std::string p1 = (fs::temp_directory_path() / "idflow_ds_a.bin").string();
    const std::string p2 = (fs::temp_directory_path() / "idflow_ds_b.bin").string();
    save_dataset(p1, ds);
    save_dataset(p2, ds);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(s1 == s2);
    fs::remove(p1);
    fs::remove(p2);
}
