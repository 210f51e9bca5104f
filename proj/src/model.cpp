#include "xgap/model.hpp"

#include <cmath>
#include <functional>

#include "xgap/error.hpp"
#include "xgap/io.hpp"
#include "xgap/rng.hpp"

namespace xgap {

namespace {

int isqrt_exact(int n, const char* what) {
    const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    if (r * r != n) throw InvalidArgument(std::string(what) + " must be a perfect square");
    return r;
}

}  // namespace

void ModelConfig::validate() const {
    if (d < 1 || vocab_size < 1 || text_context_len < 1 || num_patches < 1 || patch_dim < 1 ||
        layers < 1 || heads < 1 || hidden_dim < 1)
        throw InvalidArgument("model config: all dimensions must be positive");
    if (d % heads != 0) throw InvalidArgument("model config: d must be divisible by heads");
    if (init_temperature <= 0.0) throw InvalidArgument("model config: temperature must be positive");
    isqrt_exact(num_patches, "model config: num_patches");
}

void VLModel::register_param(const std::string& name, Tensor t) {
    index_[name] = params_.size();
    params_.emplace_back(name, std::move(t));
}

VLModel VLModel::init(const ModelConfig& cfg) {
    cfg.validate();
    VLModel m;
    m.cfg_ = cfg;
    Rng rng(substream(cfg.seed, "model"));
    const double s = 0.02;
    const int d = cfg.d;

    auto gauss = [&](std::vector<int> shape) { return Tensor::gaussian(std::move(shape), rng, s); };
    auto ones = [&](int n) { return Tensor::full({n}, 1.0); };
    auto zeros = [&](int n) { return Tensor({n}); };

    auto register_blocks = [&](const std::string& prefix) {
        for (int i = 0; i < cfg.layers; ++i) {
            const std::string b = prefix + ".blk" + std::to_string(i) + ".";
            m.register_param(b + "ln1.g", ones(d));
            m.register_param(b + "ln1.b", zeros(d));
            for (const char* w : {"wq", "wk", "wv", "wo"})
                m.register_param(b + "attn." + w, gauss({d, d}));
            for (const char* v : {"bq", "bk", "bv", "bo"})
                m.register_param(b + "attn." + v, zeros(d));
            m.register_param(b + "ln2.g", ones(d));
            m.register_param(b + "ln2.b", zeros(d));
            m.register_param(b + "mlp.w1", gauss({d, cfg.hidden_dim}));
            m.register_param(b + "mlp.b1", zeros(cfg.hidden_dim));
            m.register_param(b + "mlp.w2", gauss({cfg.hidden_dim, d}));
            m.register_param(b + "mlp.b2", zeros(d));
        }
        m.register_param(prefix + ".lnf.g", ones(d));
        m.register_param(prefix + ".lnf.b", zeros(d));
        m.register_param(prefix + ".proj", gauss({d, d}));
    };

    m.register_param("text.tok_embed", gauss({cfg.vocab_size, d}));
    m.register_param("text.pos", gauss({cfg.text_context_len, d}));
    register_blocks("text");

    m.register_param("img.patch_proj.w", gauss({cfg.patch_dim, d}));
    m.register_param("img.patch_proj.b", zeros(d));
    m.register_param("img.cls", gauss({1, d}));
    m.register_param("img.pos", gauss({cfg.num_patches + 1, d}));
    register_blocks("img");

    return m;
}

const Tensor& VLModel::param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
    return params_[it->second].second;
}

Tensor& VLModel::param_mut(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
    return params_[it->second].second;
}

std::size_t VLModel::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
}

std::uint64_t VLModel::digest() const {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& [name, t] : params_) {
        h = fnv1a(name.data(), name.size(), h);
        h = fnv1a(t.data(), t.size() * sizeof(double), h);
    }
    return h;
}

std::uint64_t VLModel::digest_of(const std::vector<std::string>& names) const {
    std::uint64_t h = 14695981039346656037ull;
    for (const std::string& name : names) {
        const Tensor& t = param(name);
        h = fnv1a(name.data(), name.size(), h);
        h = fnv1a(t.data(), t.size() * sizeof(double), h);
    }
    return h;
}

const std::vector<std::string>& VLModel::projection_names() {
    static const std::vector<std::string> names = {"text.proj", "img.proj"};
    return names;
}

std::vector<std::string> VLModel::non_projection_names() const {
    std::vector<std::string> out;
    for (const auto& [name, t] : params_)
        if (name != "text.proj" && name != "img.proj") out.push_back(name);
    return out;
}

void VLModel::save(const std::string& path) const {
    Archive a;
    a.meta = {
        {"d", static_cast<double>(cfg_.d)},
        {"vocab_size", static_cast<double>(cfg_.vocab_size)},
        {"text_context_len", static_cast<double>(cfg_.text_context_len)},
        {"num_patches", static_cast<double>(cfg_.num_patches)},
        {"patch_dim", static_cast<double>(cfg_.patch_dim)},
        {"layers", static_cast<double>(cfg_.layers)},
        {"heads", static_cast<double>(cfg_.heads)},
        {"hidden_dim", static_cast<double>(cfg_.hidden_dim)},
        {"init_temperature", cfg_.init_temperature},
        {"siglip_bias", cfg_.siglip_bias},
        {"seed_lo", static_cast<double>(cfg_.seed & 0xffffffffull)},
        {"seed_hi", static_cast<double>(cfg_.seed >> 32)},
    };
    a.tensors = params_;
    a.save(path);
}

VLModel VLModel::load(const std::string& path) {
    const Archive a = Archive::load(path);
    ModelConfig cfg;
    cfg.d = static_cast<int>(a.meta_value("d"));
    cfg.vocab_size = static_cast<int>(a.meta_value("vocab_size"));
    cfg.text_context_len = static_cast<int>(a.meta_value("text_context_len"));
    cfg.num_patches = static_cast<int>(a.meta_value("num_patches"));
    cfg.patch_dim = static_cast<int>(a.meta_value("patch_dim"));
    cfg.layers = static_cast<int>(a.meta_value("layers"));
    cfg.heads = static_cast<int>(a.meta_value("heads"));
    cfg.hidden_dim = static_cast<int>(a.meta_value("hidden_dim"));
    cfg.init_temperature = a.meta_value("init_temperature");
    cfg.siglip_bias = a.meta_value("siglip_bias");
    cfg.seed = static_cast<std::uint64_t>(a.meta_value("seed_lo")) |
               (static_cast<std::uint64_t>(a.meta_value("seed_hi")) << 32);
    cfg.validate();

    VLModel expect = VLModel::init(cfg);
    VLModel m;
    m.cfg_ = cfg;
    if (a.tensors.size() != expect.params_.size())
        throw IoError("checkpoint '" + path + "': parameter count mismatch");
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
        const auto& [name, t] = a.tensors[i];
        if (name != expect.params_[i].first || !t.same_shape(expect.params_[i].second))
            throw IoError("checkpoint '" + path + "': unexpected tensor '" + name + "'");
        if (!t.all_finite())
            throw IoError("checkpoint '" + path + "': non-finite values in '" + name + "'");
        m.register_param(name, t);
    }
    return m;
}

// ---- graph binding -----------------------------------------------------------

BoundModel::BoundModel(Graph& g, const VLModel& m, Scope scope)
    : graph_(&g), model_(&m), scope_(scope) {
    for (const auto& [name, t] : m.params()) {
        bool trainable = false;
        if (scope == Scope::all) trainable = true;
        if (scope == Scope::projections_only)
            trainable = (name == "text.proj" || name == "img.proj");
        index_[name] = vars_.size();
        vars_.emplace_back(name, g.input(t, trainable));
    }
}

Var BoundModel::var(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
    return vars_[it->second].second;
}

std::vector<std::pair<std::string, Var>> BoundModel::trainable() const {
    std::vector<std::pair<std::string, Var>> out;
    for (const auto& [name, v] : vars_)
        if (graph_->requires_grad(v.id)) out.emplace_back(name, v);
    return out;
}

namespace {

Var linear(const BoundModel& bm, Var x, const std::string& w, const std::string& b) {
    return add_rowvec(matmul(x, bm.var(w)), bm.var(b));
}

Var attention(const BoundModel& bm, Var x, const std::string& prefix) {
    const ModelConfig& cfg = bm.model().config();
    const int dh = cfg.d / cfg.heads;
    Var q = linear(bm, x, prefix + "wq", prefix + "bq");
    Var k = linear(bm, x, prefix + "wk", prefix + "bk");
    Var v = linear(bm, x, prefix + "wv", prefix + "bv");
    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(cfg.heads));
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < cfg.heads; ++h) {
        Var qh = slice_cols(q, h * dh, dh);
        Var kh = slice_cols(k, h * dh, dh);
        Var vh = slice_cols(v, h * dh, dh);
        Var attn = softmax(scale(matmul_nt(qh, kh), inv_sqrt_dh));
        heads.push_back(matmul(attn, vh));
    }
    return linear(bm, concat_cols(heads), prefix + "wo", prefix + "bo");
}

Var block(const BoundModel& bm, Var x, const std::string& prefix) {
    Var h = attention(bm, layer_norm(x, bm.var(prefix + "ln1.g"), bm.var(prefix + "ln1.b")),
                      prefix + "attn.");
    x = add(x, h);
    Var m = layer_norm(x, bm.var(prefix + "ln2.g"), bm.var(prefix + "ln2.b"));
    m = linear(bm, m, prefix + "mlp.w1", prefix + "mlp.b1");
    m = gelu(m);
    m = linear(bm, m, prefix + "mlp.w2", prefix + "mlp.b2");
    return add(x, m);
}

Var encoder_trunk(const BoundModel& bm, Var x, const std::string& enc) {
    const ModelConfig& cfg = bm.model().config();
    for (int i = 0; i < cfg.layers; ++i) x = block(bm, x, enc + ".blk" + std::to_string(i) + ".");
    return layer_norm(x, bm.var(enc + ".lnf.g"), bm.var(enc + ".lnf.b"));
}

}  // namespace

Var embed_tokens(const BoundModel& bm, const std::vector<int>& tokens) {
    const ModelConfig& cfg = bm.model().config();
    if (tokens.empty()) throw InvalidArgument("encode_text: empty token sequence");
    if (static_cast<int>(tokens.size()) > cfg.text_context_len)
        throw InvalidArgument("encode_text: sequence longer than text_context_len");
    for (int t : tokens)
        if (t < 0 || t >= cfg.vocab_size)
            throw InvalidArgument("encode_text: token id " + std::to_string(t) +
                                  " out of vocabulary");
    return rows(bm.var("text.tok_embed"), tokens);
}

Var embed_patches(const BoundModel& bm, Var patches) {
    const ModelConfig& cfg = bm.model().config();
    const Tensor& P = patches.value();
    if (P.rank() != 2 || P.rows() != cfg.num_patches || P.cols() != cfg.patch_dim)
        throw InvalidArgument("embed_patches: expected (" + std::to_string(cfg.num_patches) + "," +
                              std::to_string(cfg.patch_dim) + "), got " + P.shape_str());
    return add_rowvec(matmul(patches, bm.var("img.patch_proj.w")), bm.var("img.patch_proj.b"));
}

Var encode_text_from_embeddings_g(const BoundModel& bm, Var embeds) {
    const ModelConfig& cfg = bm.model().config();
    const Tensor& E = embeds.value();
    if (E.rank() != 2 || E.cols() != cfg.d)
        throw InvalidArgument("encode_text_from_embeddings: embedding dim mismatch, got " +
                              E.shape_str());
    if (E.rows() > cfg.text_context_len)
        throw InvalidArgument("encode_text_from_embeddings: sequence longer than context");
    Var x = add(embeds, slice_rows(bm.var("text.pos"), 0, E.rows()));
    x = encoder_trunk(bm, x, "text");
    // the text feature is the mean of last-layer token states (no position is
    // privileged); the image feature reads the CLS slot instead
    Var pooled = mean_rows(x);
    return reshape(matmul(pooled, bm.var("text.proj")), {cfg.d});
}

Var encode_image_from_patch_embeddings_g(const BoundModel& bm, Var patch_embeds) {
    const ModelConfig& cfg = bm.model().config();
    const Tensor& P = patch_embeds.value();
    if (P.rank() != 2 || P.rows() != cfg.num_patches || P.cols() != cfg.d)
        throw InvalidArgument("encode_image_from_patch_embeddings: expected (" +
                              std::to_string(cfg.num_patches) + "," + std::to_string(cfg.d) +
                              "), got " + P.shape_str());
    Var x = concat_rows({bm.var("img.cls"), patch_embeds});
    x = add(x, bm.var("img.pos"));
    x = encoder_trunk(bm, x, "img");
    Var cls = slice_rows(x, 0, 1);
    return reshape(matmul(cls, bm.var("img.proj")), {cfg.d});
}

Var encode_text_g(const BoundModel& bm, const std::vector<int>& tokens) {
    return encode_text_from_embeddings_g(bm, embed_tokens(bm, tokens));
}

Var encode_image_g(const BoundModel& bm, const Tensor& image) {
    Tensor patches = extract_patches(image, bm.model().config());
    Var p = bm.graph().input(std::move(patches));
    return encode_image_from_patch_embeddings_g(bm, embed_patches(bm, p));
}

Tensor extract_patches(const Tensor& image, const ModelConfig& cfg) {
    if (image.rank() != 3) throw InvalidArgument("extract_patches: image must be (C,H,W)");
    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
    const int grid = isqrt_exact(cfg.num_patches, "num_patches");
    if (H % grid != 0 || W % grid != 0)
        throw InvalidArgument("extract_patches: canvas does not tile into the patch grid");
    const int ph = H / grid, pw = W / grid;
    if (C * ph * pw != cfg.patch_dim)
        throw InvalidArgument("extract_patches: pixel count per patch " +
                              std::to_string(C * ph * pw) + " != patch_dim " +
                              std::to_string(cfg.patch_dim));
    Tensor out({cfg.num_patches, cfg.patch_dim});
    for (int gy = 0; gy < grid; ++gy)
        for (int gx = 0; gx < grid; ++gx) {
            const int p = gy * grid + gx;
            int k = 0;
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < ph; ++y)
                    for (int x = 0; x < pw; ++x) {
                        const std::size_t src =
                            (static_cast<std::size_t>(c) * H + (gy * ph + y)) *
                                static_cast<std::size_t>(W) +
                            (gx * pw + x);
                        out.at(p, k++) = image[src];
                    }
        }
    return out;
}

namespace {

Tensor run_inference(const VLModel& m, const std::function<Var(const BoundModel&)>& build) {
    Graph g;
    BoundModel bm(g, m, Scope::none);
    return build(bm).value();
}

}  // namespace

Tensor encode_text(const VLModel& m, const std::vector<int>& tokens) {
    return run_inference(m, [&](const BoundModel& bm) { return encode_text_g(bm, tokens); });
}

Tensor encode_image(const VLModel& m, const Tensor& image) {
    return run_inference(m, [&](const BoundModel& bm) { return encode_image_g(bm, image); });
}

Tensor encode_text_from_embeddings(const VLModel& m, const Tensor& embeds) {
    return run_inference(m, [&](const BoundModel& bm) {
        return encode_text_from_embeddings_g(bm, bm.graph().input(embeds));
    });
}

Tensor encode_image_from_patch_embeddings(const VLModel& m, const Tensor& patch_embeds) {
    return run_inference(m, [&](const BoundModel& bm) {
        return encode_image_from_patch_embeddings_g(bm, bm.graph().input(patch_embeds));
    });
}

}  // namespace xgap
