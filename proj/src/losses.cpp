#include "xgap/losses.hpp"

#include "xgap/error.hpp"
#include "xgap/rng.hpp"

namespace xgap {

namespace {

void check_pair(const Tensor& a, const Tensor& b, double tau, const char* op) {
    if (a.rank() != 2 || b.rank() != 2)
        throw InvalidArgument(std::string(op) + ": feature matrices must be rank-2");
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw InvalidArgument(std::string(op) + ": row/dim mismatch " + a.shape_str() + " vs " +
                              b.shape_str());
    if (tau <= 0.0) throw InvalidArgument(std::string(op) + ": tau must be positive");
}

std::vector<int> iota_targets(int n, int offset_mod = 0) {
    std::vector<int> t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = (i + offset_mod) % n;
    return t;
}

}  // namespace

Var clip_loss_g(Var image_features, Var text_features, double tau) {
    check_pair(image_features.value(), text_features.value(), tau, "clip_loss");
    const int n = image_features.value().rows();
    Var img = l2_normalize_rows(image_features);
    Var txt = l2_normalize_rows(text_features);
    Var logits = scale(matmul_nt(img, txt), 1.0 / tau);  // (N, N), row = image anchor
    Var i2t = cross_entropy_logits(logits, iota_targets(n));
    Var t2i = cross_entropy_logits(transpose(logits), iota_targets(n));
    return add(i2t, t2i);
}

Var siglip_loss_g(Var image_features, Var text_features, double tau, double bias) {
    check_pair(image_features.value(), text_features.value(), tau, "siglip_loss");
    const int n = image_features.value().rows();
    Var img = l2_normalize_rows(image_features);
    Var txt = l2_normalize_rows(text_features);
    Var logits = axpb(matmul_nt(img, txt), 1.0 / tau, -bias);
    Tensor labels({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) labels.at(i, j) = (i == j) ? 1.0 : -1.0;
    Var z = image_features.graph->input(std::move(labels));
    return axpb(mean_all(log_sigmoid(mul(logits, z))), -1.0, 0.0);
}

Var simclr_loss_g(Var view1_features, Var view2_features, double tau) {
    check_pair(view1_features.value(), view2_features.value(), tau, "simclr_loss");
    const int n = view1_features.value().rows();
    if (n < 2) throw InvalidArgument("simclr_loss: need N >= 2 so denominators have a negative");
    Var z = l2_normalize_rows(concat_rows({view1_features, view2_features}));
    Var logits = scale(matmul_nt(z, z), 1.0 / tau);
    // self-pairs leave the denominator via a large negative additive mask
    Tensor mask({2 * n, 2 * n});
    for (int i = 0; i < 2 * n; ++i) mask.at(i, i) = -1e9;
    Var masked = add(logits, view1_features.graph->input(std::move(mask)));
    return cross_entropy_logits(masked, iota_targets(2 * n, n));
}

namespace {

double eval_pair_loss(const Tensor& a, const Tensor& b,
                      const std::function<Var(Graph&, Var, Var)>& build) {
    Graph g;
    Var av = g.input(a);
    Var bv = g.input(b);
    return build(g, av, bv).value().item();
}

}  // namespace

double clip_loss(const Tensor& image_features, const Tensor& text_features, double tau) {
    return eval_pair_loss(image_features, text_features,
                          [tau](Graph&, Var a, Var b) { return clip_loss_g(a, b, tau); });
}

double siglip_loss(const Tensor& image_features, const Tensor& text_features, double tau,
                   double bias) {
    return eval_pair_loss(image_features, text_features,
                          [tau, bias](Graph&, Var a, Var b) { return siglip_loss_g(a, b, tau, bias); });
}

double simclr_loss(const Tensor& view1_features, const Tensor& view2_features, double tau) {
    return eval_pair_loss(view1_features, view2_features,
                          [tau](Graph&, Var a, Var b) { return simclr_loss_g(a, b, tau); });
}

Var stack_features(const std::vector<Var>& features) {
    if (features.empty()) throw InvalidArgument("stack_features: empty batch");
    std::vector<Var> rows2d;
    rows2d.reserve(features.size());
    for (Var f : features) {
        if (f.value().rank() != 1) throw InvalidArgument("stack_features: rank-1 features expected");
        rows2d.push_back(reshape(f, {1, f.value().dim(0)}));
    }
    return concat_rows(rows2d);
}

SlipBatch make_slip_batch(const Corpus& corpus, const std::vector<const Sample*>& batch,
                          const std::vector<std::vector<int>>& captions,
                          std::uint64_t view_seed) {
    if (batch.size() != captions.size())
        throw InvalidArgument("make_slip_batch: one caption per sample required");
    SlipBatch out;
    Rng rng(substream(view_seed, "views"));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out.images.push_back(batch[i]->image);
        out.captions.push_back(captions[i]);
        out.views1.push_back(augment(batch[i]->image, rng.next_u64()));
        out.views2.push_back(augment(batch[i]->image, rng.next_u64()));
    }
    (void)corpus;
    return out;
}

SlipParts slip_loss(const VLModel& model, const SlipBatch& batch, double tau) {
    if (batch.images.empty()) throw InvalidArgument("slip_loss: empty batch");
    if (batch.images.size() != batch.captions.size() ||
        batch.images.size() != batch.views1.size() || batch.views1.size() != batch.views2.size())
        throw InvalidArgument("slip_loss: batch components disagree in length");

    Graph g;
    BoundModel bm(g, model, Scope::none);
    std::vector<Var> img, txt, v1, v2;
    for (std::size_t i = 0; i < batch.images.size(); ++i) {
        img.push_back(encode_image_g(bm, batch.images[i]));
        txt.push_back(encode_text_g(bm, batch.captions[i]));
        v1.push_back(encode_image_g(bm, batch.views1[i]));
        v2.push_back(encode_image_g(bm, batch.views2[i]));
    }
    Var clip_term = clip_loss_g(stack_features(img), stack_features(txt), tau);
    Var simclr_term = simclr_loss_g(stack_features(v1), stack_features(v2), tau);
    Var total = add(clip_term, simclr_term);
    return SlipParts{total.value().item(), clip_term.value().item(), simclr_term.value().item()};
}

}  // namespace xgap
