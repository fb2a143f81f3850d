#ifndef IDFLOW_CLI_HPP
#define IDFLOW_CLI_HPP

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "checkpoint.hpp"
#include "data.hpp"
#include "gradcheck.hpp"
#include "io.hpp"
#include "training.hpp"

namespace idflow::cli {

// Exit codes are a stable contract: 0 success, 2 usage, 3 computation, 4 IO.
enum ExitCode : int { kOk = 0, kUsage = 2, kComputation = 3, kIo = 4 };

struct RunConfig {
    std::uint64_t seed = 0;
    std::uint64_t init_seed = 0;
    bool init_seed_given = false;

    std::size_t data_ids = 8;
    std::size_t data_per_id = 128;

    ToyDiTConfig model;
    TrainConfig train;
    SamplerConfig sampler;

    double sample_alpha0 = -1.0;  // negative: inherit from the checkpoint
    std::size_t prompts_per_id = 2;
    double grid_step = 0.1;
};

namespace detail {

inline std::uint64_t parse_u64(const std::string& s) {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw ConfigError("expected an integer, got '" + s + "'");
    return v;
}

inline long parse_long(const std::string& s) {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw ConfigError("expected an integer, got '" + s + "'");
    return v;
}

inline double parse_double(const std::string& s) {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ConfigError("expected a number, got '" + s + "'");
    return v;
}

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("expected true/false, got '" + s + "'");
}

struct KeyBinding {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<KeyBinding>& key_bindings() {
    static const std::vector<KeyBinding> table = {
        {"seed", [](RunConfig& rc, const std::string& v) { rc.seed = parse_u64(v); },
         [](const RunConfig& rc) { return std::to_string(rc.seed); }},
        {"init_seed",
         [](RunConfig& rc, const std::string& v) {
             rc.init_seed = parse_u64(v);
             rc.init_seed_given = true;
         },
         [](const RunConfig& rc) { return std::to_string(rc.init_seed); }},
        {"data.ids",
         [](RunConfig& rc, const std::string& v) { rc.data_ids = parse_u64(v); },
         [](const RunConfig& rc) { return std::to_string(rc.data_ids); }},
        {"data.per_id",
         [](RunConfig& rc, const std::string& v) { rc.data_per_id = parse_u64(v); },
         [](const RunConfig& rc) { return std::to_string(rc.data_per_id); }},
        {"model.token_count",
         [](RunConfig& rc, const std::string& v) { rc.model.token_count = parse_u64(v); },
         [](const RunConfig& rc) { return std::to_string(rc.model.token_count); }},
        {"model.dim",
         [](RunConfig& rc, const std::string& v) { rc.model.dim = parse_u64(v); },
         [](const RunConfig& rc) { return std::to_string(rc.model.dim); }},
        {"model.id_token_count",
         [](RunConfig& rc, const std::string& v) { rc.model.id_token_count = parse_u64(v); },
         [](const RunConfig& rc) { return std::to_string(rc.model.id_token_count); }},
        {"model.id_dim",
         [](RunConfig& rc, const std::string& v) { rc.model.id_dim = parse_u64(v); },
         [](const RunConfig& rc) { return std::to_string(rc.model.id_dim); }},
        {"model.cond_dim",
         [](RunConfig& rc, const std::string& v) { rc.model.cond_dim = parse_u64(v); },
         [](const RunConfig& rc) { return std::to_string(rc.model.cond_dim); }},
        {"model.heads",
         [](RunConfig& rc, const std::string& v) { rc.model.heads = parse_u64(v); },
         [](const RunConfig& rc) { return std::to_string(rc.model.heads); }},
        {"model.blocks",
         [](RunConfig& rc, const std::string& v) { rc.model.blocks = parse_u64(v); },
         [](const RunConfig& rc) { return std::to_string(rc.model.blocks); }},
        {"model.time_embed_dim",
         [](RunConfig& rc, const std::string& v) { rc.model.time_embed_dim = parse_u64(v); },
         [](const RunConfig& rc) { return std::to_string(rc.model.time_embed_dim); }},
        {"train.total_steps",
         [](RunConfig& rc, const std::string& v) { rc.train.total_steps = parse_long(v); },
         [](const RunConfig& rc) { return std::to_string(rc.train.total_steps); }},
        {"train.batch_size",
         [](RunConfig& rc, const std::string& v) { rc.train.batch_size = parse_u64(v); },
         [](const RunConfig& rc) { return std::to_string(rc.train.batch_size); }},
        {"train.lambda",
         [](RunConfig& rc, const std::string& v) { rc.train.lambda = parse_double(v); },
         [](const RunConfig& rc) { return format_double(rc.train.lambda); }},
        {"train.alpha0",
         [](RunConfig& rc, const std::string& v) { rc.train.alpha0 = parse_double(v); },
         [](const RunConfig& rc) { return format_double(rc.train.alpha0); }},
        {"train.lr0",
         [](RunConfig& rc, const std::string& v) { rc.train.lr0 = parse_double(v); },
         [](const RunConfig& rc) { return format_double(rc.train.lr0); }},
        {"train.lr_min",
         [](RunConfig& rc, const std::string& v) { rc.train.lr_min = parse_double(v); },
         [](const RunConfig& rc) { return format_double(rc.train.lr_min); }},
        {"train.adam_beta1",
         [](RunConfig& rc, const std::string& v) { rc.train.adam_beta1 = parse_double(v); },
         [](const RunConfig& rc) { return format_double(rc.train.adam_beta1); }},
        {"train.adam_beta2",
         [](RunConfig& rc, const std::string& v) { rc.train.adam_beta2 = parse_double(v); },
         [](const RunConfig& rc) { return format_double(rc.train.adam_beta2); }},
        {"train.adam_eps",
         [](RunConfig& rc, const std::string& v) { rc.train.adam_eps = parse_double(v); },
         [](const RunConfig& rc) { return format_double(rc.train.adam_eps); }},
        {"train.weight_decay",
         [](RunConfig& rc, const std::string& v) { rc.train.weight_decay = parse_double(v); },
         [](const RunConfig& rc) { return format_double(rc.train.weight_decay); }},
        {"train.variant_tag",
         [](RunConfig& rc, const std::string& v) { rc.train.variant_tag = v; },
         [](const RunConfig& rc) { return rc.train.variant_tag; }},
        {"sampler.steps",
         [](RunConfig& rc, const std::string& v) { rc.sampler.steps = parse_long(v); },
         [](const RunConfig& rc) { return std::to_string(rc.sampler.steps); }},
        {"sampler.cfg_scale",
         [](RunConfig& rc, const std::string& v) { rc.sampler.cfg_scale = parse_double(v); },
         [](const RunConfig& rc) { return format_double(rc.sampler.cfg_scale); }},
        {"sampler.guidance",
         [](RunConfig& rc, const std::string& v) { rc.sampler.guidance_scale = parse_double(v); },
         [](const RunConfig& rc) { return format_double(rc.sampler.guidance_scale); }},
        {"sampler.beta0",
         [](RunConfig& rc, const std::string& v) { rc.sampler.beta0 = parse_double(v); },
         [](const RunConfig& rc) { return format_double(rc.sampler.beta0); }},
        {"sampler.fixed_noise_query",
         [](RunConfig& rc, const std::string& v) { rc.sampler.fixed_noise_query = parse_bool(v); },
         [](const RunConfig& rc) { return rc.sampler.fixed_noise_query ? "true" : "false"; }},
        {"sampler.grad_cap",
         [](RunConfig& rc, const std::string& v) { rc.sampler.grad_cap_per_elem = parse_double(v); },
         [](const RunConfig& rc) { return format_double(rc.sampler.grad_cap_per_elem); }},
        {"sample.alpha0",
         [](RunConfig& rc, const std::string& v) { rc.sample_alpha0 = parse_double(v); },
         [](const RunConfig& rc) { return format_double(rc.sample_alpha0); }},
        {"sample.prompts_per_id",
         [](RunConfig& rc, const std::string& v) { rc.prompts_per_id = parse_u64(v); },
         [](const RunConfig& rc) { return std::to_string(rc.prompts_per_id); }},
        {"fuse.grid_step",
         [](RunConfig& rc, const std::string& v) { rc.grid_step = parse_double(v); },
         [](const RunConfig& rc) { return format_double(rc.grid_step); }},
    };
    return table;
}

// Flat key = value document; '#' starts a comment. Precedence is
// flags > file > defaults.
inline void apply_config_file(const std::string& path, RunConfig& rc, bool& seed_seen) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        bool known = false;
        for (const auto& binding : key_bindings()) {
            if (binding.key == key) {
                binding.set(rc, value);
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        if (key == "seed") seed_seen = true;
    }
}

inline std::string effective_config_text(const RunConfig& rc) {
    std::ostringstream os;
    for (const auto& binding : key_bindings()) {
        os << binding.key << " = " << binding.get(rc) << "\n";
    }
    return os.str();
}

inline std::vector<double> parse_weight_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(parse_double(tok));
    }
    if (out.empty()) throw ConfigError("--weights: empty list");
    return out;
}

inline void require_world_shaped(const ToyDiTConfig& cfg) {
    const WorldDims& wd = world().dims;
    if (cfg.token_count != wd.n_gen || cfg.dim != wd.d_gen || cfg.cond_dim != wd.cond_dim ||
        cfg.id_token_count != wd.id_tokens || cfg.id_dim != wd.id_dim) {
        throw ConfigError("model dims must match the data: tokens " + std::to_string(wd.n_gen) +
                          ", dim " + std::to_string(wd.d_gen) + ", cond_dim " +
                          std::to_string(wd.cond_dim) + ", id tokens " +
                          std::to_string(wd.id_tokens) + "x" + std::to_string(wd.id_dim));
    }
}

inline std::string losses_csv(const std::vector<LossRecord>& trace) {
    std::string csv = "step,l_diff,l_id,l_total,lr\n";
    for (const LossRecord& r : trace) {
        csv += std::to_string(r.step) + "," + format_double(r.l_diff) + "," +
               format_double(r.l_id) + "," + format_double(r.l_total) + "," +
               format_double(r.lr) + "\n";
    }
    return csv;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// subcommand bodies
// ---------------------------------------------------------------------------

inline void cmd_gen_data(const RunConfig& rc, const std::string& out_path) {
    Dataset ds = gen_dataset(rc.data_ids, rc.data_per_id, rc.seed);
    save_dataset(out_path, ds);

    nlohmann::json summary = {{"samples", ds.samples.size()},
                              {"identities", ds.identities.size()},
                              {"per_id", ds.per_id},
                              {"seed", ds.seed},
                              {"world_seed", kWorldSeed},
                              {"train_samples", ds.train_idx.size()},
                              {"val_samples", ds.val_idx.size()}};
    write_text_atomic(out_path + ".summary.json", summary.dump(2) + "\n");
    write_text_atomic(out_path + ".config.kv", detail::effective_config_text(rc));
    std::cout << "gen-data: wrote " << ds.samples.size() << " samples (" << ds.identities.size()
              << " identities) to " << out_path << "\n";
}

inline void cmd_train(RunConfig rc, const std::string& dataset_path, const std::string& out_dir,
                      const std::string& variant_preset) {
    Dataset ds = load_dataset(dataset_path);
    if (!variant_preset.empty()) apply_variant_preset(rc.train, variant_preset);
    rc.train.seed = rc.seed;
    detail::require_world_shaped(rc.model);
    rc.model.validate();
    rc.train.validate();

    const std::uint64_t init_seed = rc.init_seed_given ? rc.init_seed : rc.seed;
    ModelParams base = init_params(rc.model, init_seed);

    TrainResult result = train_variant(ds, base, rc.train);
    result.checkpoint.meta["init_seed"] = init_seed;
    result.checkpoint.meta["dataset_path"] = dataset_path;

    std::filesystem::create_directories(out_dir);
    save_checkpoint(out_dir + "/checkpoint.bin", result.checkpoint);
    write_text_atomic(out_dir + "/losses.csv", detail::losses_csv(result.trace));
    write_text_atomic(out_dir + "/config.kv", detail::effective_config_text(rc));

    const LossRecord& first = result.trace.front();
    const LossRecord& last = result.trace.back();
    std::cout << "train[" << rc.train.variant_tag << "]: steps " << rc.train.total_steps
              << ", l_diff " << first.l_diff << " -> " << last.l_diff << ", l_id " << first.l_id
              << " -> " << last.l_id << "\n";
}

inline void cmd_fuse(const RunConfig& rc, const std::vector<std::string>& checkpoint_paths,
                     const std::string& weights_csv, const std::string& dataset_path,
                     const std::string& out_path) {
    if (checkpoint_paths.empty()) throw ConfigError("fuse: need at least one checkpoint");
    std::vector<Checkpoint> ckpts;
    ckpts.reserve(checkpoint_paths.size());
    for (const std::string& p : checkpoint_paths) ckpts.push_back(load_checkpoint(p));
    std::vector<const Checkpoint*> ptrs;
    for (const Checkpoint& c : ckpts) ptrs.push_back(&c);

    std::vector<std::string> tags;
    for (const Checkpoint& c : ckpts) tags.push_back(c.meta.value("variant_tag", "variant"));

    FusionSpec spec;
    nlohmann::json search_meta;
    if (!weights_csv.empty()) {
        spec.coefficients = detail::parse_weight_list(weights_csv);
        spec.variant_ids = tags;
        try {
            spec.validate();
        } catch (const FusionError& e) {
            throw ConfigError(std::string("--weights: ") + e.what());
        }
        if (spec.coefficients.size() != ckpts.size()) {
            throw ConfigError("--weights: " + std::to_string(spec.coefficients.size()) +
                              " coefficients for " + std::to_string(ckpts.size()) +
                              " checkpoints");
        }
    } else {
        if (dataset_path.empty()) {
            throw ConfigError("fuse: searching coefficients requires --dataset");
        }
        Dataset ds = load_dataset(dataset_path);
        SamplerConfig scoring = rc.sampler;
        scoring.beta0 = 0.0;  // score the weights themselves, not guided inference
        ScheduleParams sched;
        // sampling after fusion inherits the first variant's alpha0, so the
        // search scores under the same schedule
        sched.alpha0 = ckpts.front().meta.contains("train_config")
                           ? ckpts.front().meta["train_config"].value("alpha0", rc.train.alpha0)
                           : rc.train.alpha0;
        FusionSearchResult search = search_fusion_coefficients(
            ptrs, ds, rc.grid_step, scoring, sched, rc.prompts_per_id, rc.seed);
        spec = search.spec;
        search_meta["grid_step"] = rc.grid_step;
        nlohmann::json cands = nlohmann::json::array();
        for (const auto& cand : search.candidates) {
            cands.push_back({{"coefficients", cand.coefficients},
                             {"facesim", cand.facesim},
                             {"editdiv", cand.editdiv},
                             {"score", cand.score}});
        }
        search_meta["candidates"] = std::move(cands);
    }

    std::vector<const ModelParams*> params;
    for (const Checkpoint& c : ckpts) params.push_back(&c.params);
    Checkpoint fused;
    fused.params = fuse_model_params(params, spec);
    fused.meta = ckpts.front().meta;
    fused.meta["variant_tag"] = "fused";
    fused.meta["fusion"] = {{"sources", checkpoint_paths},
                            {"source_tags", tags},
                            {"coefficients", spec.coefficients}};
    if (!search_meta.empty()) fused.meta["fusion"]["search"] = search_meta;
    save_checkpoint(out_path, fused);
    write_text_atomic(out_path + ".config.kv", detail::effective_config_text(rc));

    std::cout << "fuse: wrote " << out_path << " with coefficients";
    for (double w : spec.coefficients) std::cout << " " << w;
    std::cout << "\n";
}

inline void cmd_sample(const RunConfig& rc, const std::string& checkpoint_path,
                       const std::string& dataset_path, const std::string& ids_csv,
                       const std::string& out_path) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    Dataset ds = load_dataset(dataset_path);
    detail::require_world_shaped(ckpt.params.config);
    rc.sampler.validate();

    double alpha0 = rc.sample_alpha0;
    if (alpha0 < 0.0) {
        alpha0 = ckpt.meta.contains("train_config")
                     ? ckpt.meta["train_config"].value("alpha0", 0.8)
                     : 0.8;
    }
    ScheduleParams sched;
    sched.alpha0 = alpha0;
    sched.T = static_cast<double>(rc.sampler.steps);

    std::vector<int> codes;
    if (ids_csv == "all") {
        for (const auto& rec : ds.identities) codes.push_back(rec.id_code);
    } else {
        std::stringstream ss(ids_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (tok.empty()) continue;
            const int code = static_cast<int>(detail::parse_long(tok));
            ds.identity(code);  // throws ConfigError for unknown identities
            codes.push_back(code);
        }
        if (codes.empty()) throw ConfigError("--ids: empty identity list");
    }

    const World& w = world();
    ToyDiTVelocity model(ckpt.params);
    WorldIdEncoder encoder(w);
    std::vector<GenRequest> requests;
    std::vector<Tensor> gens;
    std::size_t gidx = 0;
    for (int code : codes) {
        const IdentityRecord& rec = ds.identity(code);
        Tensor id_tokens = w.id_tokens_for(rec.z_id);
        const auto prompts = ds.val_samples_of(code);
        for (std::size_t k = 0; k < prompts.size() && k < rc.prompts_per_id; ++k) {
            const Sample& s = ds.samples[prompts[k]];
            Rng rng(Rng::derive(rc.seed, 0x5a3f0000ULL + gidx));
            Tensor x1 = rng.normal_tensor(s.x0.shape);
            gens.push_back(sample_euler(model, x1, s.c, id_tokens, rec.e_ref, &encoder,
                                        rc.sampler, sched));
            requests.push_back({code, prompts[k]});
            ++gidx;
        }
    }
    if (gens.empty()) throw ConfigError("sample: no validation prompts for the requested ids");

    Blob blob;
    blob.header["kind"] = "generations";
    blob.header["seed"] = rc.seed;
    blob.header["alpha0"] = alpha0;
    blob.header["checkpoint"] = checkpoint_path;
    blob.header["dataset_seed"] = ds.seed;
    blob.header["sampler"] = {{"steps", rc.sampler.steps},
                              {"cfg_scale", rc.sampler.cfg_scale},
                              {"guidance", rc.sampler.guidance_scale},
                              {"beta0", rc.sampler.beta0},
                              {"fixed_noise_query", rc.sampler.fixed_noise_query},
                              {"method", "euler"}};
    nlohmann::json reqs = nlohmann::json::array();
    for (const GenRequest& r : requests) {
        reqs.push_back({{"identity", r.identity}, {"sample_index", r.sample_index}});
    }
    blob.header["requests"] = std::move(reqs);

    Tensor stacked({gens.size(), w.dims.n_gen, w.dims.d_gen});
    for (std::size_t i = 0; i < gens.size(); ++i) {
        std::copy(gens[i].data.begin(), gens[i].data.end(),
                  stacked.data.begin() + static_cast<long>(i * gens[i].numel()));
    }
    blob.tensors.emplace_back("gens", std::move(stacked));
    write_blob(out_path, std::move(blob));
    write_text_atomic(out_path + ".config.kv", detail::effective_config_text(rc));
    std::cout << "sample: wrote " << gens.size() << " generations to " << out_path << "\n";
}

inline void cmd_eval(const RunConfig& rc, const std::string& generations_path,
                     const std::string& dataset_path, const std::string& out_prefix) {
    Blob blob = read_blob(generations_path);
    if (blob.header.value("kind", "") != "generations") {
        throw IoError("'" + generations_path + "' is not a generations file");
    }
    Dataset ds = load_dataset(dataset_path);
    const World& w = world();

    if (blob.header.value("dataset_seed", std::uint64_t{0}) != ds.seed) {
        throw DimensionError("eval: generations were sampled against a different dataset (seed " +
                             std::to_string(blob.header.value("dataset_seed", std::uint64_t{0})) +
                             " vs " + std::to_string(ds.seed) + ")");
    }

    const Tensor& stacked = blob.get("gens");
    std::vector<std::pair<GenRequest, Tensor>> gens;
    const auto& reqs = blob.header.at("requests");
    if (reqs.empty()) throw ConfigError("eval: empty generations file");
    if (stacked.shape.size() != 3 || stacked.shape[0] != reqs.size() ||
        stacked.shape[1] != w.dims.n_gen || stacked.shape[2] != w.dims.d_gen) {
        throw DimensionError("eval: generations tensor shape " +
                             Tensor::shape_str(stacked.shape) + " does not match " +
                             std::to_string(reqs.size()) + " requests");
    }
    const std::size_t numel = w.dims.n_gen * w.dims.d_gen;
    for (std::size_t i = 0; i < reqs.size(); ++i) {
        GenRequest r;
        r.identity = reqs[i].at("identity").get<int>();
        r.sample_index = reqs[i].at("sample_index").get<std::size_t>();
        if (r.sample_index >= ds.samples.size()) {
            throw DimensionError("eval: request " + std::to_string(i) +
                                 " references sample " + std::to_string(r.sample_index) +
                                 " outside the dataset");
        }
        Tensor g({w.dims.n_gen, w.dims.d_gen},
                 {stacked.data.begin() + static_cast<long>(i * numel),
                  stacked.data.begin() + static_cast<long>((i + 1) * numel)});
        gens.emplace_back(r, std::move(g));
    }

    MetricsReport rep = eval_metrics(gens, ds);

    std::string csv = "identity,facesim,editdiv,promptfollow\n";
    for (const IdentityMetrics& im : rep.per_identity) {
        csv += std::to_string(im.identity) + "," + format_double(im.facesim) + "," +
               format_double(im.editdiv) + "," + format_double(im.promptfollow) + "\n";
    }
    csv += "overall," + format_double(rep.facesim) + "," + format_double(rep.editdiv) + "," +
           format_double(rep.promptfollow) + "\n";
    write_text_atomic(out_prefix + ".csv", csv);

    nlohmann::json j = {{"facesim", rep.facesim},
                        {"editdiv", rep.editdiv},
                        {"promptfollow", rep.promptfollow},
                        {"generations", gens.size()}};
    nlohmann::json per = nlohmann::json::array();
    for (const IdentityMetrics& im : rep.per_identity) {
        per.push_back({{"identity", im.identity},
                       {"facesim", im.facesim},
                       {"editdiv", im.editdiv},
                       {"promptfollow", im.promptfollow},
                       {"count", im.count}});
    }
    j["per_identity"] = std::move(per);
    write_text_atomic(out_prefix + ".json", j.dump(2) + "\n");
    write_text_atomic(out_prefix + ".config.kv", detail::effective_config_text(rc));

    std::cout << "eval: facesim " << rep.facesim << ", editdiv " << rep.editdiv
              << ", promptfollow " << rep.promptfollow << "\n";
}

inline int cmd_gradcheck(const RunConfig& rc, int seeds, double tol,
                         const std::string& corrupt) {
    bool all_pass = true;
    for (int i = 0; i < seeds; ++i) {
        const std::uint64_t seed = rc.seed + static_cast<std::uint64_t>(i);
        GradCheckReport rep = gradcheck_joint_loss(seed, tol, corrupt);
        std::cout << "gradcheck seed=" << seed << " worst=" << rep.worst_param
                  << " rel_err=" << rep.worst_err << " -> " << (rep.pass ? "PASS" : "FAIL")
                  << "\n";
        all_pass = all_pass && rep.pass;
    }
    return all_pass ? kOk : 1;
}

// ---------------------------------------------------------------------------
// argument wiring
// ---------------------------------------------------------------------------

inline int run(std::vector<std::string> args) {
    RunConfig rc;
    bool seed_in_file = false;

    // --config is applied before flag parsing so flags win
    for (std::size_t i = 0; i < args.size(); ++i) {
        std::string path;
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        }
        if (!path.empty()) {
            try {
                detail::apply_config_file(path, rc, seed_in_file);
            } catch (const IoError& e) {
                std::cerr << "error: " << e.what() << "\n";
                return kIo;
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
                return kUsage;
            }
        }
    }

    CLI::App app{"idflow: a desk-scale flow-matching lab for ID feature integration"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags are accepted after the subcommand too
    std::string config_path;
    app.add_option("--config", config_path, "key = value config file (flags override it)");
    auto* seed_opt = app.add_option("--seed", rc.seed, "global RNG seed");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic few-ID dataset");
    std::string gen_out = "dataset.bin";
    gen->add_option("--ids", rc.data_ids, "number of identities");
    gen->add_option("--per-id", rc.data_per_id, "samples per identity");
    gen->add_option("-o,--out", gen_out, "output dataset file")->required();

    // train
    auto* train = app.add_subcommand("train", "train the ID cross-attention on a dataset");
    std::string train_dataset, train_out_dir = "run", train_variant;
    train->add_option("--dataset", train_dataset, "dataset file")->required();
    train->add_option("--out-dir", train_out_dir, "output directory");
    train->add_option("--steps", rc.train.total_steps, "training steps");
    train->add_option("--batch", rc.train.batch_size, "batch size");
    train->add_option("--lambda", rc.train.lambda, "ID loss weight");
    train->add_option("--alpha0", rc.train.alpha0, "initial ID integration strength");
    train->add_option("--lr0", rc.train.lr0, "initial learning rate");
    train->add_option("--lr-min", rc.train.lr_min, "floor learning rate");
    train->add_option("--weight-decay", rc.train.weight_decay, "AdamW weight decay");
    train->add_option("--blocks", rc.model.blocks, "transformer blocks");
    train->add_option("--heads", rc.model.heads, "attention heads");
    train->add_option("--variant", train_variant, "variant preset: A (consistency) or B (editability)");
    train->add_option("--tag", rc.train.variant_tag, "free-form variant tag");
    train->add_option("--init-seed", rc.init_seed, "base model init seed (default: --seed)")
        ->each([&rc](const std::string&) { rc.init_seed_given = true; });

    // fuse
    auto* fuse = app.add_subcommand("fuse", "fuse trained attention-weight variants offline");
    std::vector<std::string> fuse_ckpts;
    std::string fuse_weights, fuse_dataset, fuse_out = "fused.bin";
    fuse->add_option("checkpoints", fuse_ckpts, "checkpoint files")->required();
    fuse->add_option("--weights", fuse_weights, "explicit convex coefficients w1,w2,...");
    fuse->add_option("--dataset", fuse_dataset, "dataset for coefficient search");
    fuse->add_option("--grid-step", rc.grid_step, "simplex grid step for the search");
    fuse->add_option("--prompts-per-id", rc.prompts_per_id, "validation prompts per identity");
    fuse->add_option("--steps", rc.sampler.steps, "Euler steps for search scoring");
    fuse->add_option("-o,--out", fuse_out, "output checkpoint");

    // sample
    auto* sample = app.add_subcommand("sample", "run the guided Euler sampler");
    std::string sample_ckpt, sample_dataset, sample_ids = "all", sample_out = "gens.bin";
    sample->add_option("--checkpoint", sample_ckpt, "checkpoint file")->required();
    sample->add_option("--dataset", sample_dataset, "dataset file")->required();
    sample->add_option("--ids", sample_ids, "identity codes (csv) or 'all'");
    sample->add_option("--prompts-per-id", rc.prompts_per_id, "validation prompts per identity");
    sample->add_option("--steps", rc.sampler.steps, "Euler steps");
    sample->add_option("--cfg-scale", rc.sampler.cfg_scale, "classifier-free mixing scale");
    sample->add_option("--guidance", rc.sampler.guidance_scale,
                       "recorded base-model guidance knob");
    sample->add_option("--beta0", rc.sampler.beta0, "initial ID guidance weight");
    sample->add_option("--alpha0", rc.sample_alpha0, "override the checkpoint's alpha0");
    sample->add_flag("--fixed-noise-query", rc.sampler.fixed_noise_query,
                     "compute Q_noise from the initial noise instead of the current state");
    sample->add_option("-o,--out", sample_out, "output generations file");

    // eval
    auto* eval = app.add_subcommand("eval", "score generations against a dataset");
    std::string eval_gens, eval_dataset, eval_out = "metrics";
    eval->add_option("--generations", eval_gens, "generations file")->required();
    eval->add_option("--dataset", eval_dataset, "dataset file")->required();
    eval->add_option("-o,--out", eval_out, "output report prefix");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
    int gc_seeds = 1;
    double gc_tol = 1e-4;
    std::string gc_corrupt;
    gradcheck->add_option("--seeds", gc_seeds, "number of independent seeds");
    gradcheck->add_option("--tol", gc_tol, "relative error tolerance");
    gradcheck->add_option("--corrupt", gc_corrupt,
                          "fault-injection fixture: corrupt gradients matching this substring");

    try {
        std::vector<const char*> argv;
        argv.push_back("idflow");
        for (const std::string& a : args) argv.push_back(a.c_str());
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    // seed fallback: flag > config file > IDFLOW_SEED > 0
    if (seed_opt->count() == 0 && !seed_in_file) {
        if (const char* env = std::getenv("IDFLOW_SEED")) {
            try {
                rc.seed = detail::parse_u64(env);
            } catch (const std::exception&) {
                std::cerr << "error: IDFLOW_SEED is not an integer\n";
                return kUsage;
            }
        }
    }

    try {
        if (gen->parsed()) {
            cmd_gen_data(rc, gen_out);
        } else if (train->parsed()) {
            cmd_train(rc, train_dataset, train_out_dir, train_variant);
        } else if (fuse->parsed()) {
            cmd_fuse(rc, fuse_ckpts, fuse_weights, fuse_dataset, fuse_out);
        } else if (sample->parsed()) {
            cmd_sample(rc, sample_ckpt, sample_dataset, sample_ids, sample_out);
        } else if (eval->parsed()) {
            cmd_eval(rc, eval_gens, eval_dataset, eval_out);
        } else if (gradcheck->parsed()) {
            return cmd_gradcheck(rc, gc_seeds, gc_tol, gc_corrupt);
        }
        return kOk;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kIo;
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const DomainError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kComputation;
    }
}

inline int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(std::move(args));
}

}  // namespace idflow::cli

#endif
