#ifndef IDFLOW_DATA_HPP
#define IDFLOW_DATA_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "flow.hpp"
#include "io.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace idflow {

// Fixed dimensions of the synthetic world. The generator, the condition and
// ID-token encodings, and the readout maps all derive from kWorldSeed, never
// from a dataset seed, so metrics stay comparable across regenerations.
struct WorldDims {
    std::size_t k_id = 8;         // latent identity width
    std::size_t k_attr = 3;       // latent attribute width
    std::size_t hidden = 64;      // generator hidden width
    std::size_t x0_rank = 4;      // token rank of every observation
    std::size_t n_gen = 16;       // observation tokens
    std::size_t d_gen = 32;       // observation token width
    std::size_t cond_tokens = 4;  // prompt tokens
    std::size_t cond_dim = 8;     // prompt token width
    std::size_t id_tokens = 4;    // model-side ID tokens
    std::size_t id_dim = 16;      // model-side ID token width
    std::size_t d_e = 8;          // embedding width (= k_id)
};

constexpr std::uint64_t kWorldSeed = 0x1df70aULL;
constexpr double kWorldPreactScale = 0.35;  // keeps tanh mildly nonlinear
constexpr double kWorldOutputStd = 2.5;     // per-element std of x0

namespace detail {

// Solves (A + ridge*I) X = B for SPD A via Cholesky; used once per process to
// fit the readout maps.
inline Tensor cholesky_solve(Tensor a, Tensor b, double ridge) {
    const std::size_t n = a.shape[0];
    for (std::size_t i = 0; i < n; ++i) a.at(i, i) += ridge;
    // in-place lower-triangular factor
    for (std::size_t j = 0; j < n; ++j) {
        double d = a.at(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= a.at(j, k) * a.at(j, k);
        if (d <= 0.0) throw DomainError("cholesky_solve: matrix not positive definite");
        const double ljj = std::sqrt(d);
        a.at(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a.at(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= a.at(i, k) * a.at(j, k);
            a.at(i, j) = s / ljj;
        }
    }
    const std::size_t m = b.shape[1];
    for (std::size_t col = 0; col < m; ++col) {
        for (std::size_t i = 0; i < n; ++i) {  // forward
            double s = b.at(i, col);
            for (std::size_t k = 0; k < i; ++k) s -= a.at(i, k) * b.at(k, col);
            b.at(i, col) = s / a.at(i, i);
        }
        for (std::size_t i = n; i-- > 0;) {  // backward with L^T
            double s = b.at(i, col);
            for (std::size_t k = i + 1; k < n; ++k) s -= a.at(k, i) * b.at(k, col);
            b.at(i, col) = s / a.at(i, i);
        }
    }
    return b;
}

}  // namespace detail

// The procedural world: a fixed two-layer tanh generator x0 = G(z_id, z_attr)
// plus the least-squares readout maps fitted once against it. The second
// layer carries a fixed nonnegative token lift, so every observation has
// token rank x0_rank with positive token profiles.
struct World {
    WorldDims dims;
    Tensor g_w1;        // (k_id + k_attr) x hidden
    Tensor g_w2;        // hidden x (x0_rank * d_gen)
    Tensor g_lift;      // n_gen x x0_rank, fixed nonnegative token lift
    Tensor cond_map;    // k_attr x (cond_tokens * cond_dim)
    Tensor idtok_map;   // d_gen x id_dim, compresses canonical content rows
    Tensor encode_map;  // (n_gen * d_gen) x d_e, identity readout
    Tensor attr_map;    // (n_gen * d_gen) x k_attr, attribute readout

    // The x0_rank content rows of an observation before the token lift.
    Tensor latent_rows(const Tensor& z_id, const Tensor& z_attr) const {
        if (z_id.numel() != dims.k_id || z_attr.numel() != dims.k_attr) {
            throw DimensionError("world: latent widths must be " + std::to_string(dims.k_id) +
                                 "/" + std::to_string(dims.k_attr));
        }
        Tensor z({1, dims.k_id + dims.k_attr});
        for (std::size_t i = 0; i < dims.k_id; ++i) z.at(0, i) = z_id.data[i];
        for (std::size_t i = 0; i < dims.k_attr; ++i) z.at(0, dims.k_id + i) = z_attr.data[i];
        Tensor h = matmul(z, g_w1);
        for (double& v : h.data) v = std::tanh(v);
        return reshape(matmul(h, g_w2), {dims.x0_rank, dims.d_gen});
    }

    Tensor generate(const Tensor& z_id, const Tensor& z_attr) const {
        return matmul(g_lift, latent_rows(z_id, z_attr));
    }

    Tensor condition_for(const Tensor& z_attr) const {
        Tensor za({1, dims.k_attr}, z_attr.data);
        return reshape(matmul(za, cond_map), {dims.cond_tokens, dims.cond_dim});
    }

    // ID tokens are a fixed compression of the identity's canonical content
    // rows, the toy analogue of reference-image recognition features.
    Tensor id_tokens_for(const Tensor& z_id) const {
        Tensor canonical = latent_rows(z_id, Tensor({dims.k_attr}));
        return matmul(canonical, idtok_map);
    }

    // Fixed, never-trained identity embedding: least-squares readout of z_id
    // followed by normalization to the unit sphere.
    Tensor id_encode(const Tensor& x) const {
        Tensor f({1, dims.n_gen * dims.d_gen}, x.data);
        Tensor u = matmul(f, encode_map);
        const double n = norm(u);
        if (n == 0.0) throw DegenerateVectorError("id_encode: zero-norm projection");
        Tensor e({dims.d_e});
        for (std::size_t i = 0; i < dims.d_e; ++i) e.data[i] = u.data[i] / n;
        return e;
    }

    // Linear attribute estimator used by the toy metrics.
    Tensor attr_readout(const Tensor& x) const {
        Tensor f({1, dims.n_gen * dims.d_gen}, x.data);
        Tensor u = matmul(f, attr_map);
        return Tensor({dims.k_attr}, u.data);
    }

    // d cosine(id_encode(x), e_ref) / dx, closed form for the linear
    // encoder + normalization.
    Tensor encode_cosine_grad(const Tensor& x, const Tensor& e_ref) const {
        Tensor f({1, dims.n_gen * dims.d_gen}, x.data);
        Tensor u = matmul(f, encode_map);  // 1 x d_e
        const double nu = norm(u);
        if (nu == 0.0) throw DegenerateVectorError("encode_cosine_grad: zero-norm projection");
        const double ne = norm(e_ref);
        if (ne == 0.0) throw DegenerateVectorError("encode_cosine_grad: zero-norm reference");
        double ue = 0.0;
        for (std::size_t i = 0; i < dims.d_e; ++i) ue += u.data[i] * e_ref.data[i] / ne;
        Tensor du({1, dims.d_e});
        for (std::size_t i = 0; i < dims.d_e; ++i) {
            du.data[i] = e_ref.data[i] / ne / nu - ue * u.data[i] / (nu * nu * nu);
        }
        Tensor df = matmul_bt(du, encode_map);  // 1 x (n_gen*d_gen)
        return reshape(df, {dims.n_gen, dims.d_gen});
    }
};

inline World build_world(const WorldDims& dims = WorldDims{}) {
    World w;
    w.dims = dims;
    const std::size_t k_in = dims.k_id + dims.k_attr;

    if (dims.id_tokens != dims.x0_rank) {
        throw ConfigError("world: id_tokens must equal x0_rank (content-row ID tokens)");
    }
    Rng rng(Rng::derive(kWorldSeed, 1));
    w.g_w1 = rng.normal_tensor({k_in, dims.hidden},
                               kWorldPreactScale / std::sqrt(static_cast<double>(k_in)));
    w.g_w2 = rng.normal_tensor({dims.hidden, dims.x0_rank * dims.d_gen},
                               1.0 / std::sqrt(static_cast<double>(dims.hidden)));
    w.g_lift = rng.normal_tensor({dims.n_gen, dims.x0_rank},
                                 1.0 / std::sqrt(static_cast<double>(dims.x0_rank)));
    for (double& v : w.g_lift.data) v = std::abs(v);  // positive token profiles
    w.cond_map = rng.normal_tensor({dims.k_attr, dims.cond_tokens * dims.cond_dim},
                                   1.0 / std::sqrt(static_cast<double>(dims.k_attr)));
    w.idtok_map = rng.normal_tensor({dims.d_gen, dims.id_dim},
                                    1.0 / std::sqrt(static_cast<double>(dims.d_gen)));

    // probe draw shared by the output-scale calibration and the readout fits
    const std::size_t n_probe = 4096;
    Rng probe_rng(Rng::derive(kWorldSeed, 2));
    Tensor zs({n_probe, k_in});
    for (double& v : zs.data) v = probe_rng.normal();

    Tensor hs = matmul(zs, w.g_w1);
    for (double& v : hs.data) v = std::tanh(v);
    Tensor rows = matmul(hs, w.g_w2);  // n_probe x (x0_rank * d_gen)

    // rescale g_w2 so lifted x0 elements have std kWorldOutputStd
    double sumsq = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < n_probe; ++p) {
        Tensor r({dims.x0_rank, dims.d_gen},
                 {rows.data.begin() + static_cast<long>(p * dims.x0_rank * dims.d_gen),
                  rows.data.begin() + static_cast<long>((p + 1) * dims.x0_rank * dims.d_gen)});
        Tensor x = matmul(w.g_lift, r);
        for (double v : x.data) sumsq += v * v;
        count += x.numel();
    }
    const double raw_std = std::sqrt(sumsq / static_cast<double>(count));
    const double rescale = kWorldOutputStd / raw_std;
    for (double& v : w.g_w2.data) v *= rescale;
    for (double& v : rows.data) v *= rescale;

    // least-squares readouts of z_id and z_attr from x0
    Tensor xs({n_probe, dims.n_gen * dims.d_gen});
    for (std::size_t p = 0; p < n_probe; ++p) {
        Tensor r({dims.x0_rank, dims.d_gen},
                 {rows.data.begin() + static_cast<long>(p * dims.x0_rank * dims.d_gen),
                  rows.data.begin() + static_cast<long>((p + 1) * dims.x0_rank * dims.d_gen)});
        Tensor x = matmul(w.g_lift, r);
        std::copy(x.data.begin(), x.data.end(),
                  xs.data.begin() + static_cast<long>(p * x.numel()));
    }
    Tensor zid({n_probe, dims.k_id}), zattr({n_probe, dims.k_attr});
    for (std::size_t i = 0; i < n_probe; ++i) {
        for (std::size_t j = 0; j < dims.k_id; ++j) zid.at(i, j) = zs.at(i, j);
        for (std::size_t j = 0; j < dims.k_attr; ++j) zattr.at(i, j) = zs.at(i, dims.k_id + j);
    }
    Tensor xtx = matmul_at(xs, xs);
    const double ridge = 1e-6 * static_cast<double>(n_probe);
    w.encode_map = detail::cholesky_solve(xtx, matmul_at(xs, zid), ridge);
    w.attr_map = detail::cholesky_solve(xtx, matmul_at(xs, zattr), ridge);
    return w;
}

inline const World& world() {
    static const World w = build_world();
    return w;
}

// IdEmbedder adapter over the world's fixed encoder.
struct WorldIdEncoder final : IdEmbedder {
    const World* w;
    explicit WorldIdEncoder(const World& world_ref) : w(&world_ref) {}
    Tensor encode(const Tensor& x) const override { return w->id_encode(x); }
    Tensor cosine_grad(const Tensor& x, const Tensor& e_ref) const override {
        return w->encode_cosine_grad(x, e_ref);
    }
};

struct IdentityRecord {
    int id_code = 0;
    Tensor z_id;   // k_id
    Tensor e_ref;  // d_e, unit norm: id_encode of the canonical sample
};

struct Sample {
    int identity = 0;
    Tensor z_attr;  // k_attr
    Tensor c;       // cond_tokens x cond_dim
    Tensor x0;      // n_gen x d_gen
};

struct Dataset {
    std::uint64_t seed = 0;
    std::size_t num_ids = 0;
    std::size_t per_id = 0;
    std::vector<IdentityRecord> identities;
    std::vector<Sample> samples;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;

    const IdentityRecord& identity(int code) const {
        for (const auto& rec : identities) {
            if (rec.id_code == code) return rec;
        }
        throw ConfigError("dataset: unknown identity " + std::to_string(code));
    }

    std::vector<std::size_t> val_samples_of(int code) const {
        std::vector<std::size_t> out;
        for (std::size_t idx : val_idx) {
            if (samples[idx].identity == code) out.push_back(idx);
        }
        return out;
    }
};

// Few IDs, many attributes. Deterministic in the seed; the world itself is
// pinned to kWorldSeed. Per-ID counts are exactly balanced and the first
// max(1, per_id/8) samples of every identity form the validation split.
inline Dataset gen_dataset(std::size_t num_ids, std::size_t per_id, std::uint64_t seed) {
    if (num_ids < 2) throw ConfigError("gen_dataset: need at least 2 identities");
    if (per_id < 2) throw ConfigError("gen_dataset: need at least 2 samples per identity");
    const World& w = world();

    Dataset ds;
    ds.seed = seed;
    ds.num_ids = num_ids;
    ds.per_id = per_id;
    const std::size_t val_per_id = std::max<std::size_t>(1, per_id / 8);
    Tensor zero_attr({w.dims.k_attr});

    for (std::size_t i = 0; i < num_ids; ++i) {
        Rng id_rng(Rng::derive(seed, 0x10000ULL + i));
        IdentityRecord rec;
        rec.id_code = static_cast<int>(i);
        rec.z_id = id_rng.normal_tensor({w.dims.k_id});
        rec.e_ref = w.id_encode(w.generate(rec.z_id, zero_attr));
        ds.identities.push_back(std::move(rec));

        for (std::size_t j = 0; j < per_id; ++j) {
            Rng s_rng(Rng::derive(seed, 0x20000ULL + i * per_id + j));
            Sample s;
            s.identity = static_cast<int>(i);
            s.z_attr = s_rng.normal_tensor({w.dims.k_attr});
            s.c = w.condition_for(s.z_attr);
            s.x0 = w.generate(ds.identities[i].z_id, s.z_attr);
            const std::size_t idx = ds.samples.size();
            if (j < val_per_id) {
                ds.val_idx.push_back(idx);
            } else {
                ds.train_idx.push_back(idx);
            }
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

struct IdentityMetrics {
    int identity = 0;
    double facesim = 0.0;
    double editdiv = 0.0;
    double promptfollow = 0.0;
    std::size_t count = 0;
};

struct MetricsReport {
    double facesim = 0.0;       // mean cosine to the reference embedding
    double editdiv = 0.0;       // mean pairwise attr-readout distance per ID
    double promptfollow = 0.0;  // mean cosine of attr readout vs requested attrs
    std::vector<IdentityMetrics> per_identity;
};

struct GenRequest {
    int identity = 0;
    std::size_t sample_index = 0;  // prompt source within the dataset
};

inline MetricsReport eval_metrics(const std::vector<std::pair<GenRequest, Tensor>>& generated,
                                  const Dataset& ds) {
    if (generated.empty()) throw ConfigError("eval_metrics: empty generation set");
    const World& w = world();

    MetricsReport rep;
    std::vector<int> codes;
    for (const auto& rec : ds.identities) codes.push_back(rec.id_code);

    double fs_sum = 0.0, pf_sum = 0.0;
    std::size_t n = 0;
    double ed_sum = 0.0;
    std::size_t ed_ids = 0;

    for (int code : codes) {
        IdentityMetrics im;
        im.identity = code;
        std::vector<Tensor> readouts;
        double fs = 0.0, pf = 0.0;
        for (const auto& [req, gen] : generated) {
            if (req.identity != code) continue;
            if (req.sample_index >= ds.samples.size()) {
                throw ConfigError("eval_metrics: sample index " +
                                  std::to_string(req.sample_index) + " out of range");
            }
            const IdentityRecord& rec = ds.identity(code);
            fs += cosine(w.id_encode(gen), rec.e_ref);
            Tensor ro = w.attr_readout(gen);
            pf += cosine(ro, ds.samples[req.sample_index].z_attr);
            readouts.push_back(std::move(ro));
            ++im.count;
        }
        if (im.count == 0) continue;
        im.facesim = fs / static_cast<double>(im.count);
        im.promptfollow = pf / static_cast<double>(im.count);
        if (readouts.size() >= 2) {
            double d = 0.0;
            std::size_t pairs = 0;
            for (std::size_t a = 0; a < readouts.size(); ++a) {
                for (std::size_t b = a + 1; b < readouts.size(); ++b) {
                    d += norm(sub(readouts[a], readouts[b]));
                    ++pairs;
                }
            }
            im.editdiv = d / static_cast<double>(pairs);
            ed_sum += im.editdiv;
            ++ed_ids;
        }
        fs_sum += fs;
        pf_sum += pf;
        n += im.count;
        rep.per_identity.push_back(im);
    }
    if (n == 0) throw ConfigError("eval_metrics: no generation matches a dataset identity");
    rep.facesim = fs_sum / static_cast<double>(n);
    rep.promptfollow = pf_sum / static_cast<double>(n);
    rep.editdiv = ed_ids ? ed_sum / static_cast<double>(ed_ids) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// dataset file format
// ---------------------------------------------------------------------------

inline void save_dataset(const std::string& path, const Dataset& ds) {
    const World& w = world();
    Blob blob;
    blob.header["kind"] = "dataset";
    blob.header["seed"] = ds.seed;
    blob.header["world_seed"] = kWorldSeed;
    blob.header["num_ids"] = ds.num_ids;
    blob.header["per_id"] = ds.per_id;
    blob.header["dims"] = {{"k_id", w.dims.k_id},     {"k_attr", w.dims.k_attr},
                           {"n_gen", w.dims.n_gen},   {"d_gen", w.dims.d_gen},
                           {"cond_tokens", w.dims.cond_tokens},
                           {"cond_dim", w.dims.cond_dim},
                           {"d_e", w.dims.d_e}};
    nlohmann::json codes = nlohmann::json::array();
    for (const auto& rec : ds.identities) codes.push_back(rec.id_code);
    blob.header["identity_codes"] = codes;
    nlohmann::json owner = nlohmann::json::array();
    for (const auto& s : ds.samples) owner.push_back(s.identity);
    blob.header["sample_identity"] = owner;
    blob.header["train_idx"] = ds.train_idx;
    blob.header["val_idx"] = ds.val_idx;

    const std::size_t I = ds.identities.size(), N = ds.samples.size();
    Tensor zid({I, w.dims.k_id}), eref({I, w.dims.d_e});
    for (std::size_t i = 0; i < I; ++i) {
        std::copy(ds.identities[i].z_id.data.begin(), ds.identities[i].z_id.data.end(),
                  zid.data.begin() + static_cast<long>(i * w.dims.k_id));
        std::copy(ds.identities[i].e_ref.data.begin(), ds.identities[i].e_ref.data.end(),
                  eref.data.begin() + static_cast<long>(i * w.dims.d_e));
    }
    Tensor zattr({N, w.dims.k_attr});
    Tensor cond({N, w.dims.cond_tokens, w.dims.cond_dim});
    Tensor x0({N, w.dims.n_gen, w.dims.d_gen});
    for (std::size_t i = 0; i < N; ++i) {
        const Sample& s = ds.samples[i];
        std::copy(s.z_attr.data.begin(), s.z_attr.data.end(),
                  zattr.data.begin() + static_cast<long>(i * w.dims.k_attr));
        std::copy(s.c.data.begin(), s.c.data.end(),
                  cond.data.begin() + static_cast<long>(i * s.c.numel()));
        std::copy(s.x0.data.begin(), s.x0.data.end(),
                  x0.data.begin() + static_cast<long>(i * s.x0.numel()));
    }
    blob.tensors.emplace_back("identities.z_id", std::move(zid));
    blob.tensors.emplace_back("identities.e_ref", std::move(eref));
    blob.tensors.emplace_back("samples.z_attr", std::move(zattr));
    blob.tensors.emplace_back("samples.c", std::move(cond));
    blob.tensors.emplace_back("samples.x0", std::move(x0));
    write_blob(path, std::move(blob));
}

inline Dataset load_dataset(const std::string& path) {
    Blob blob = read_blob(path);
    if (blob.header.value("kind", "") != "dataset") {
        throw IoError("'" + path + "' is not a dataset file");
    }
    const World& w = world();
    Dataset ds;
    ds.seed = blob.header.at("seed").get<std::uint64_t>();
    ds.num_ids = blob.header.at("num_ids").get<std::size_t>();
    ds.per_id = blob.header.at("per_id").get<std::size_t>();
    ds.train_idx = blob.header.at("train_idx").get<std::vector<std::size_t>>();
    ds.val_idx = blob.header.at("val_idx").get<std::vector<std::size_t>>();

    const auto codes = blob.header.at("identity_codes").get<std::vector<int>>();
    const auto owner = blob.header.at("sample_identity").get<std::vector<int>>();
    const Tensor& zid = blob.get("identities.z_id");
    const Tensor& eref = blob.get("identities.e_ref");
    for (std::size_t i = 0; i < codes.size(); ++i) {
        IdentityRecord rec;
        rec.id_code = codes[i];
        rec.z_id = Tensor({w.dims.k_id},
                          {zid.data.begin() + static_cast<long>(i * w.dims.k_id),
                           zid.data.begin() + static_cast<long>((i + 1) * w.dims.k_id)});
        rec.e_ref = Tensor({w.dims.d_e},
                           {eref.data.begin() + static_cast<long>(i * w.dims.d_e),
                            eref.data.begin() + static_cast<long>((i + 1) * w.dims.d_e)});
        ds.identities.push_back(std::move(rec));
    }
    const Tensor& zattr = blob.get("samples.z_attr");
    const Tensor& cond = blob.get("samples.c");
    const Tensor& x0 = blob.get("samples.x0");
    const std::size_t csz = w.dims.cond_tokens * w.dims.cond_dim;
    const std::size_t xsz = w.dims.n_gen * w.dims.d_gen;
    for (std::size_t i = 0; i < owner.size(); ++i) {
        Sample s;
        s.identity = owner[i];
        s.z_attr = Tensor({w.dims.k_attr},
                          {zattr.data.begin() + static_cast<long>(i * w.dims.k_attr),
                           zattr.data.begin() + static_cast<long>((i + 1) * w.dims.k_attr)});
        s.c = Tensor({w.dims.cond_tokens, w.dims.cond_dim},
                     {cond.data.begin() + static_cast<long>(i * csz),
                      cond.data.begin() + static_cast<long>((i + 1) * csz)});
        s.x0 = Tensor({w.dims.n_gen, w.dims.d_gen},
                      {x0.data.begin() + static_cast<long>(i * xsz),
                       x0.data.begin() + static_cast<long>((i + 1) * xsz)});
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace idflow

#endif
