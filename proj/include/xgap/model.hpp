#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "xgap/graph.hpp"
#include "xgap/tensor.hpp"

namespace xgap {

struct ModelConfig {
    int d = 64;                 // shared embedding dim (also the block width)
    int vocab_size = 64;
    int text_context_len = 16;
    int num_patches = 16;       // U, must be a perfect square
    int patch_dim = 48;         // flattened pixels per patch
    int layers = 2;
    int heads = 4;
    int hidden_dim = 128;
    double init_temperature = 0.01;
    double siglip_bias = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// Dual-encoder toy VLM: a ViT-style image encoder (CLS readout) and a
// transformer text encoder (mean-pooled readout), both projecting into the
// shared d-dimensional space. Parameters are a flat, ordered, named list so
// digests and checkpoints are order-stable.
class VLModel {
public:
    static VLModel init(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    double tau() const { return cfg_.init_temperature; }
    double siglip_bias() const { return cfg_.siglip_bias; }

    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
    const Tensor& param(const std::string& name) const;
    Tensor& param_mut(const std::string& name);
    std::size_t param_count() const;  // total scalar count

    // FNV-1a over names and raw values, in registration order.
    std::uint64_t digest() const;
    std::uint64_t digest_of(const std::vector<std::string>& names) const;

    // Final projections, the trainable scope of projection-only fine-tuning.
    static const std::vector<std::string>& projection_names();
    std::vector<std::string> non_projection_names() const;

    void save(const std::string& path) const;
    static VLModel load(const std::string& path);

private:
    VLModel() = default;
    void register_param(const std::string& name, Tensor t);

    ModelConfig cfg_;
    std::vector<std::pair<std::string, Tensor>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class Scope { none, all, projections_only };

// Model parameters bound to a graph as leaves. `scope` selects which leaves
// require gradients; everything else participates as constants.
class BoundModel {
public:
    BoundModel(Graph& g, const VLModel& m, Scope scope);

    Var var(const std::string& name) const;
    const VLModel& model() const { return *model_; }
    Graph& graph() const { return *graph_; }
    std::vector<std::pair<std::string, Var>> trainable() const;

private:
    Graph* graph_;
    const VLModel* model_;
    std::vector<std::pair<std::string, Var>> vars_;
    std::unordered_map<std::string, std::size_t> index_;
    Scope scope_;
};

// ---- graph-building entry points --------------------------------------------

// Token ids -> (len, d) embedding rows of E_v.
Var embed_tokens(const BoundModel& bm, const std::vector<int>& tokens);

// (U, patch_dim) raw patches -> (U, d) patch embeddings via E_w.
Var embed_patches(const BoundModel& bm, Var patches);

// (len, d) embedding sequence -> rank-1 feature of length d. Accepts mixed
// real-token and pseudo-token rows; differentiable w.r.t. the sequence.
Var encode_text_from_embeddings_g(const BoundModel& bm, Var embeds);

// (U, d) patch-embedding sequence -> rank-1 feature; the CLS token is
// prepended internally.
Var encode_image_from_patch_embeddings_g(const BoundModel& bm, Var patch_embeds);

Var encode_text_g(const BoundModel& bm, const std::vector<int>& tokens);
Var encode_image_g(const BoundModel& bm, const Tensor& image);

// ---- plain inference wrappers (no gradients) ---------------------------------

Tensor encode_text(const VLModel& m, const std::vector<int>& tokens);
Tensor encode_image(const VLModel& m, const Tensor& image);
Tensor encode_text_from_embeddings(const VLModel& m, const Tensor& embeds);
Tensor encode_image_from_patch_embeddings(const VLModel& m, const Tensor& patch_embeds);

// (C,H,W) image -> (U, patch_dim) rows, row-major over the patch grid,
// channel-major inside a patch. Errors if the pixel count cannot tile U
// square patches of patch_dim values.
Tensor extract_patches(const Tensor& image, const ModelConfig& cfg);

}  // namespace xgap
