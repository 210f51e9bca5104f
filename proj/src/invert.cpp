#include "xgap/invert.hpp"

#include <cmath>

#include "xgap/error.hpp"
#include "xgap/losses.hpp"
#include "xgap/rng.hpp"
#include "xgap/threads.hpp"

namespace xgap {

namespace {

// Shared optimization loop: `forward` rebuilds the complementary-side feature
// from the trainable tensor on a fresh tape each step.
InversionResult run_inversion(const VLModel& model, const Tensor& target_unit, Tensor learned,
                              const InversionSpec& spec,
                              const std::function<Var(const BoundModel&, Var)>& forward,
                              const char* what) {
    InversionResult result;
    result.digest_before = model.digest();
    AdamWState opt(spec.optimizer);

    auto feature_of = [&](const Tensor& current) {
        Graph g;
        BoundModel bm(g, model, Scope::none);
        return l2_normalize(forward(bm, g.input(current)).value());
    };

    for (int step = 0; step < spec.steps; ++step) {
        try {
            Graph g;
            BoundModel bm(g, model, Scope::none);
            Var v = g.input(learned, true);
            Var feat = forward(bm, v);
            Var target = g.input(target_unit);
            Var loss = axpb(cosine_similarity(target, feat), -1.0, 1.0);
            const double value = loss.value().item();
            if (!std::isfinite(value))
                throw NumericError(std::string(what) + ": non-finite loss");
            result.trajectory.push_back(value);
            if (spec.snapshot_period > 0 && step % spec.snapshot_period == 0)
                result.snapshots.emplace_back(step, l2_normalize(feat.value()));
            g.backward(loss);
            Tensor grad = v.grad_or_zero();
            const Tensor* gp = &grad;
            Tensor* pp = &learned;
            opt.step({pp}, {gp});
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at step " + std::to_string(step));
        }
    }

    result.learned = learned;
    result.feature = feature_of(learned);
    if (spec.snapshot_period > 0) result.snapshots.emplace_back(spec.steps, result.feature);
    result.digest_after = model.digest();
    return result;
}

void check_spec(const InversionSpec& spec, const char* what) {
    if (spec.count < 1) throw InvalidArgument(std::string(what) + ": count must be >= 1");
    if (spec.steps < 1) throw InvalidArgument(std::string(what) + ": steps must be >= 1");
    if (spec.init_scale <= 0.0) throw InvalidArgument(std::string(what) + ": bad init scale");
    if (spec.snapshot_period < 0) throw InvalidArgument(std::string(what) + ": bad snapshot period");
}

}  // namespace

InversionResult oti(const VLModel& model, const Tensor& image, const InversionSpec& spec) {
    check_spec(spec, "oti");
    const ModelConfig& cfg = model.config();
    const int prefix = static_cast<int>(spec.template_tokens.size());
    const int suffix = static_cast<int>(spec.template_suffix_tokens.size());
    if (prefix + suffix + spec.count > cfg.text_context_len)
        throw InvalidArgument("oti: template plus pseudo-tokens exceed text_context_len");

    const Tensor target = l2_normalize(encode_image(model, image));
    Rng rng(substream(spec.seed, "oti-init"));
    Tensor pseudo = Tensor::gaussian({spec.count, cfg.d}, rng, spec.init_scale);

    auto forward = [&spec](const BoundModel& bm, Var v) {
        std::vector<Var> parts;
        if (!spec.template_tokens.empty()) parts.push_back(embed_tokens(bm, spec.template_tokens));
        parts.push_back(v);
        if (!spec.template_suffix_tokens.empty())
            parts.push_back(embed_tokens(bm, spec.template_suffix_tokens));
        return encode_text_from_embeddings_g(bm, parts.size() == 1 ? parts[0] : concat_rows(parts));
    };
    return run_inversion(model, target, std::move(pseudo), spec, forward, "oti");
}

InversionResult ovi(const VLModel& model, const std::vector<int>& text_tokens,
                    const InversionSpec& spec) {
    check_spec(spec, "ovi");
    const ModelConfig& cfg = model.config();
    if (spec.count > cfg.num_patches)
        throw InvalidArgument("ovi: more pseudo-patches than patch slots (P > U)");

    const Tensor target = l2_normalize(encode_text(model, text_tokens));
    Rng rng(substream(spec.seed, "ovi-init"));
    Tensor pseudo = Tensor::gaussian({spec.count, cfg.d}, rng, spec.init_scale);
    const RepeatMap map = nn_repeat_map(spec.count, cfg.num_patches);

    auto forward = [&map](const BoundModel& bm, Var w) {
        // repetition via row lookup; backward sums over repeated slots
        Var expanded = rows(w, map.slot_to_patch);
        return encode_image_from_patch_embeddings_g(bm, expanded);
    };
    return run_inversion(model, target, std::move(pseudo), spec, forward, "ovi");
}

std::vector<InversionResult> oti_many(const VLModel& model, const std::vector<Tensor>& images,
                                      const InversionSpec& spec) {
    std::vector<InversionResult> out(images.size());
    parallel_for(static_cast<int>(images.size()), [&](int i) {
        InversionSpec item = spec;
        item.seed = substream(spec.seed, "q" + std::to_string(i));
        out[static_cast<std::size_t>(i)] = oti(model, images[static_cast<std::size_t>(i)], item);
    });
    return out;
}

std::vector<InversionResult> ovi_many(const VLModel& model,
                                      const std::vector<std::vector<int>>& texts,
                                      const InversionSpec& spec) {
    std::vector<InversionResult> out(texts.size());
    parallel_for(static_cast<int>(texts.size()), [&](int i) {
        InversionSpec item = spec;
        item.seed = substream(spec.seed, "q" + std::to_string(i));
        out[static_cast<std::size_t>(i)] = ovi(model, texts[static_cast<std::size_t>(i)], item);
    });
    return out;
}

RepeatMap nn_repeat_map(int num_pseudo, int num_slots) {
    if (num_pseudo < 1 || num_pseudo > num_slots)
        throw InvalidArgument("nn_repeat_map: need 1 <= P <= U");
    RepeatMap map;
    map.slot_to_patch.resize(static_cast<std::size_t>(num_slots));
    map.counts.assign(static_cast<std::size_t>(num_pseudo), 0);
    for (int j = 0; j < num_slots; ++j) {
        const int idx = (j * num_pseudo) / num_slots;
        map.slot_to_patch[static_cast<std::size_t>(j)] = idx;
        map.counts[static_cast<std::size_t>(idx)] += 1;
    }
    return map;
}

Adapter train_adapter(const std::vector<std::pair<Tensor, Tensor>>& pairs,
                      Adapter::Direction direction, const AdapterHyper& hyper) {
    if (pairs.size() < 2) throw InvalidArgument("train_adapter: need at least 2 feature pairs");
    const int d = static_cast<int>(pairs[0].first.size());
    for (const auto& [src, dst] : pairs)
        if (src.rank() != 1 || dst.rank() != 1 || src.dim(0) != d || dst.dim(0) != d)
            throw InvalidArgument("train_adapter: all features must be rank-1 of equal length");
    if (hyper.steps < 0 || hyper.batch_size < 2)
        throw InvalidArgument("train_adapter: bad hyperparameters");

    Rng rng(substream(hyper.seed, "adapter"));
    Adapter adapter;
    adapter.direction = direction;
    adapter.weight = Tensor::gaussian({d, d}, rng, hyper.init_scale);
    adapter.bias = Tensor({d});

    AdamWState opt(hyper.optimizer);
    const int n = static_cast<int>(pairs.size());
    const int batch = std::min(hyper.batch_size, n);

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::size_t cursor = order.size();
    auto next_index = [&]() {
        if (cursor >= order.size()) {
            for (int i = n - 1; i > 0; --i)
                std::swap(order[static_cast<std::size_t>(i)],
                          order[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
            cursor = 0;
        }
        return order[cursor++];
    };

    for (int step = 0; step < hyper.steps; ++step) {
        Tensor src({batch, d}), dst({batch, d});
        for (int b = 0; b < batch; ++b) {
            const auto& [x, y] = pairs[static_cast<std::size_t>(next_index())];
            for (int c = 0; c < d; ++c) {
                src.at(b, c) = x[static_cast<std::size_t>(c)];
                dst.at(b, c) = y[static_cast<std::size_t>(c)];
            }
        }
        Graph g;
        Var w = g.input(adapter.weight, true);
        Var bias = g.input(adapter.bias, true);
        Var mapped = add_rowvec(matmul(g.input(src), w), bias);
        Var targets = g.input(dst);
        // mean cosine loss: 1 - (1/B) sum_r <mapped_r, target_r> over unit rows
        Var dots = mul(l2_normalize_rows(mapped), l2_normalize_rows(targets));
        Var cos_loss = axpb(mean_all(dots), -static_cast<double>(d), 1.0);
        Var loss = add(cos_loss, clip_loss_g(mapped, targets, hyper.tau));
        if (!std::isfinite(loss.value().item()))
            throw NumericError("train_adapter: non-finite loss at step " + std::to_string(step));
        g.backward(loss);
        Tensor gw = w.grad_or_zero(), gb = bias.grad_or_zero();
        opt.step({&adapter.weight, &adapter.bias}, {&gw, &gb});
    }
    return adapter;
}

Tensor apply_adapter(const Adapter& adapter, const Tensor& feature) {
    const int d = adapter.weight.rows();
    if (feature.rank() != 1 || feature.dim(0) != d)
        throw InvalidArgument("apply_adapter: feature length does not match the adapter");
    Tensor out({d});
    for (int c = 0; c < d; ++c) {
        double s = adapter.bias[static_cast<std::size_t>(c)];
        for (int k = 0; k < d; ++k)
            s += feature[static_cast<std::size_t>(k)] * adapter.weight.at(k, c);
        out[static_cast<std::size_t>(c)] = s;
    }
    return l2_normalize(out);
}

Tensor combine_features(const Tensor& psi_i, const Tensor& psi_t, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw InvalidArgument("combine_features: alpha must lie in [0,1]");
    if (psi_i.rank() != 1 || psi_t.rank() != 1 || psi_i.dim(0) != psi_t.dim(0))
        throw InvalidArgument("combine_features: features must be rank-1 of equal length");
    if (std::fabs(norm(psi_i) - 1.0) > 1e-6 || std::fabs(norm(psi_t) - 1.0) > 1e-6)
        throw InvalidArgument("combine_features: inputs must be unit-normalized");
    if (alpha == 0.0) return psi_i;
    if (alpha == 1.0) return psi_t;
    Tensor mixed(psi_i.shape());
    for (std::size_t k = 0; k < mixed.size(); ++k)
        mixed[k] = alpha * psi_t[k] + (1.0 - alpha) * psi_i[k];
    if (norm(mixed) == 0.0)
        throw InvalidArgument("combine_features: inputs cancel exactly at this alpha");
    return l2_normalize(mixed);
}

}  // namespace xgap
