#ifndef IDFLOW_CHECKPOINT_HPP
#define IDFLOW_CHECKPOINT_HPP

#include <string>

#include "io.hpp"
#include "model.hpp"

namespace idflow {

inline nlohmann::json dit_config_to_json(const ToyDiTConfig& cfg) {
    return {{"token_count", cfg.token_count},
            {"dim", cfg.dim},
            {"id_token_count", cfg.id_token_count},
            {"id_dim", cfg.id_dim},
            {"cond_dim", cfg.cond_dim},
            {"heads", cfg.heads},
            {"blocks", cfg.blocks},
            {"time_embed_dim", cfg.time_embed_dim},
            {"id_inject_blocks", cfg.id_inject_blocks}};
}

inline ToyDiTConfig dit_config_from_json(const nlohmann::json& j) {
    ToyDiTConfig cfg;
    cfg.token_count = j.at("token_count").get<std::size_t>();
    cfg.dim = j.at("dim").get<std::size_t>();
    cfg.id_token_count = j.at("id_token_count").get<std::size_t>();
    cfg.id_dim = j.at("id_dim").get<std::size_t>();
    cfg.cond_dim = j.at("cond_dim").get<std::size_t>();
    cfg.heads = j.at("heads").get<std::size_t>();
    cfg.blocks = j.at("blocks").get<std::size_t>();
    cfg.time_embed_dim = j.at("time_embed_dim").get<std::size_t>();
    cfg.id_inject_blocks = j.value("id_inject_blocks", std::vector<std::size_t>{});
    cfg.validate();
    return cfg;
}

// Named-tensor archive: model config, freeze mask and provenance in the JSON
// header, parameters as float64 blocks under their stable names.
struct Checkpoint {
    nlohmann::json meta;
    ModelParams params;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    Blob blob;
    blob.header = ckpt.meta;
    blob.header["kind"] = "checkpoint";
    blob.header["model_config"] = dit_config_to_json(ckpt.params.config);
    blob.header["trainable"] = ckpt.params.trainable;
    for_each_param(const_cast<ModelParams&>(ckpt.params),
                   [&](const std::string& name, Tensor& t) {
                       blob.tensors.emplace_back(name, t);
                   });
    write_blob(path, std::move(blob));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    Blob blob = read_blob(path);
    if (blob.header.value("kind", "") != "checkpoint") {
        throw IoError("'" + path + "' is not a checkpoint file");
    }
    Checkpoint ckpt;
    ckpt.params = init_params(dit_config_from_json(blob.header.at("model_config")), 0);
    for_each_param(ckpt.params, [&](const std::string& name, Tensor& t) {
        const Tensor& src = blob.get(name);
        require_same_shape(t, src, ("checkpoint tensor " + name).c_str());
        t = src;
    });
    ckpt.params.trainable =
        blob.header.at("trainable").get<std::map<std::string, bool>>();
    ckpt.meta = std::move(blob.header);
    ckpt.meta.erase("tensors");
    ckpt.meta.erase("model_config");
    ckpt.meta.erase("trainable");
    ckpt.meta.erase("kind");
    return ckpt;
}

}  // namespace idflow

#endif
