#include "xgap/train.hpp"

#include <cmath>
#include <fstream>

#include "xgap/error.hpp"
#include "xgap/io.hpp"
#include "xgap/losses.hpp"
#include "xgap/rng.hpp"

namespace xgap {

const char* loss_kind_name(LossKind k) {
    switch (k) {
        case LossKind::clip: return "clip";
        case LossKind::siglip: return "siglip";
        case LossKind::simclr_only: return "simclr_only";
        case LossKind::slip: return "slip";
    }
    return "?";
}

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "clip") return LossKind::clip;
    if (name == "siglip") return LossKind::siglip;
    if (name == "simclr_only") return LossKind::simclr_only;
    if (name == "slip") return LossKind::slip;
    throw InvalidArgument("unknown loss kind '" + name + "'");
}

double TrainLog::first_gap() const {
    for (const TrainLogRow& r : rows)
        if (r.has_gap) return r.gap;
    throw InvalidArgument("train log holds no gap measurements");
}

double TrainLog::last_gap() const {
    for (auto it = rows.rbegin(); it != rows.rend(); ++it)
        if (it->has_gap) return it->gap;
    throw InvalidArgument("train log holds no gap measurements");
}

void TrainLog::save_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write train log '" + path + "'");
    os << "step,loss,clip_component,simclr_component,gap\n";
    for (const TrainLogRow& r : rows) {
        os << r.step << ',' << format_f64(r.loss) << ',' << format_f64(r.clip_component) << ','
           << format_f64(r.simclr_component) << ',';
        if (r.has_gap) os << format_f64(r.gap);
        os << '\n';
    }
    if (!os) throw IoError("write failed for train log '" + path + "'");
}

double probe_gap_magnitude(const VLModel& model, const Corpus& corpus, int max_samples) {
    const auto train = corpus.split(Split::train);
    if (train.empty()) throw InvalidArgument("probe_gap_magnitude: empty train split");
    const int n = std::min<int>(max_samples, static_cast<int>(train.size()));
    const int d = model.config().d;
    std::vector<double> ci(static_cast<std::size_t>(d), 0.0), ct(ci);
    for (int i = 0; i < n; ++i) {
        Tensor fi = l2_normalize(encode_image(model, train[static_cast<std::size_t>(i)]->image));
        Tensor ft = l2_normalize(
            encode_text(model, corpus.tokenize(train[static_cast<std::size_t>(i)]->captions[0])));
        for (int k = 0; k < d; ++k) {
            ci[static_cast<std::size_t>(k)] += fi[static_cast<std::size_t>(k)] / n;
            ct[static_cast<std::size_t>(k)] += ft[static_cast<std::size_t>(k)] / n;
        }
    }
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
        const double dk = ci[static_cast<std::size_t>(k)] - ct[static_cast<std::size_t>(k)];
        s += dk * dk;
    }
    return std::sqrt(s);
}

TrainLog pretrain(VLModel& model, const Corpus& corpus, const TrainSpec& spec) {
    const auto train = corpus.split(Split::train);
    if (train.empty()) throw InvalidArgument("pretrain: corpus train split is empty");
    if (spec.batch_size < 1 || spec.batch_size > static_cast<int>(train.size()))
        throw InvalidArgument("pretrain: batch_size must be in [1, train size]");
    if (spec.tau <= 0.0) throw InvalidArgument("pretrain: tau must be positive");
    if (spec.steps < 0) throw InvalidArgument("pretrain: negative step count");
    const bool contrastive = spec.loss_kind != LossKind::clip;
    if (contrastive && spec.batch_size < 2)
        throw InvalidArgument("pretrain: contrastive losses need batch_size >= 2");

    TrainLog log;
    log.final_digest = model.digest();
    if (spec.steps == 0) return log;

    Rng order_rng(substream(spec.seed, "order"));
    Rng caption_rng(substream(spec.seed, "captions"));
    Rng view_rng(substream(spec.seed, "view-seeds"));
    const int probe_period =
        spec.gap_probe_period > 0 ? spec.gap_probe_period : std::max(1, spec.steps / 10);

    // parameter slots in registration order, fixed for the whole run
    std::vector<std::string> trainable_names;
    for (const auto& [name, t] : model.params()) {
        if (spec.trainable_scope == Scope::all)
            trainable_names.push_back(name);
        else if (spec.trainable_scope == Scope::projections_only &&
                 (name == "text.proj" || name == "img.proj"))
            trainable_names.push_back(name);
    }
    if (trainable_names.empty()) throw InvalidArgument("pretrain: nothing to train");
    AdamWState opt(spec.optimizer);

    std::vector<int> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::size_t cursor = order.size();  // force a shuffle on first use
    auto next_index = [&]() {
        if (cursor >= order.size()) {
            for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
                std::swap(order[static_cast<std::size_t>(i)],
                          order[static_cast<std::size_t>(order_rng.uniform_int(i + 1))]);
            cursor = 0;
        }
        return order[cursor++];
    };

    for (int step = 0; step < spec.steps; ++step) {
        TrainLogRow row;
        row.step = step;
        if (step == 0) {
            row.gap = probe_gap_magnitude(model, corpus);
            row.has_gap = true;
        }

        std::vector<const Sample*> batch;
        std::vector<std::vector<int>> captions;
        for (int b = 0; b < spec.batch_size; ++b) {
            const Sample* s = train[static_cast<std::size_t>(next_index())];
            batch.push_back(s);
            const int pick = caption_rng.uniform_int(static_cast<int>(s->captions.size()));
            captions.push_back(corpus.tokenize(s->captions[static_cast<std::size_t>(pick)]));
        }

        Graph g;
        BoundModel bm(g, model, spec.trainable_scope);
        Var loss{nullptr, -1};
        switch (spec.loss_kind) {
            case LossKind::clip:
            case LossKind::siglip: {
                std::vector<Var> img, txt;
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    img.push_back(encode_image_g(bm, batch[i]->image));
                    txt.push_back(encode_text_g(bm, captions[i]));
                }
                Var imgM = stack_features(img);
                Var txtM = stack_features(txt);
                loss = spec.loss_kind == LossKind::clip
                           ? clip_loss_g(imgM, txtM, spec.tau)
                           : siglip_loss_g(imgM, txtM, spec.tau, model.siglip_bias());
                row.clip_component = loss.value().item();
                break;
            }
            case LossKind::simclr_only: {
                std::vector<Var> v1, v2;
                for (const Sample* s : batch) {
                    v1.push_back(encode_image_g(bm, augment(s->image, view_rng.next_u64())));
                    v2.push_back(encode_image_g(bm, augment(s->image, view_rng.next_u64())));
                }
                loss = simclr_loss_g(stack_features(v1), stack_features(v2), spec.tau);
                row.simclr_component = loss.value().item();
                break;
            }
            case LossKind::slip: {
                std::vector<Var> img, txt, v1, v2;
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    img.push_back(encode_image_g(bm, batch[i]->image));
                    txt.push_back(encode_text_g(bm, captions[i]));
                    v1.push_back(encode_image_g(bm, augment(batch[i]->image, view_rng.next_u64())));
                    v2.push_back(encode_image_g(bm, augment(batch[i]->image, view_rng.next_u64())));
                }
                Var clip_term = clip_loss_g(stack_features(img), stack_features(txt), spec.tau);
                Var simclr_term = simclr_loss_g(stack_features(v1), stack_features(v2), spec.tau);
                loss = add(clip_term, simclr_term);
                row.clip_component = clip_term.value().item();
                row.simclr_component = simclr_term.value().item();
                break;
            }
        }

        row.loss = loss.value().item();
        if (!std::isfinite(row.loss))
            throw NumericError("pretrain: non-finite loss at step " + std::to_string(step));
        g.backward(loss);

        std::vector<Tensor*> params;
        std::vector<Tensor> grads;
        grads.reserve(trainable_names.size());
        for (const std::string& name : trainable_names) {
            params.push_back(&model.param_mut(name));
            grads.push_back(bm.var(name).grad_or_zero());
        }
        std::vector<const Tensor*> grad_ptrs;
        for (const Tensor& t : grads) grad_ptrs.push_back(&t);
        opt.step(params, grad_ptrs);

        if ((step + 1) % probe_period == 0 || step == spec.steps - 1) {
            row.gap = probe_gap_magnitude(model, corpus);
            row.has_gap = true;
        }
        log.rows.push_back(row);
    }

    log.final_digest = model.digest();
    return log;
}

TrainLog finetune_projections(VLModel& model, const Corpus& corpus, double tau, int steps,
                              std::uint64_t seed, double lr, int batch_size) {
    TrainSpec spec;
    spec.loss_kind = LossKind::clip;
    spec.tau = tau;
    spec.steps = steps;
    spec.batch_size = std::min<int>(batch_size, static_cast<int>(corpus.split(Split::train).size()));
    spec.optimizer.lr = lr;
    spec.seed = seed;
    spec.trainable_scope = Scope::projections_only;
    return pretrain(model, corpus, spec);
}

}  // namespace xgap
