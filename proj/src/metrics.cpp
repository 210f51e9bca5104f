#include "xgap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "xgap/error.hpp"
#include "xgap/io.hpp"

namespace xgap {

namespace {

double dot(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += a[i] * b[i];
    return s;
}

struct Ranked {
    double sim;
    long id;
    bool relevant;
};

// gallery ranking for one query: cosine descending, ties by id ascending
std::vector<Ranked> rank_gallery(const FeatureSet& gallery, const double* query,
                                 const std::string& query_label, long query_id,
                                 bool exclude_self) {
    std::vector<Ranked> ranked;
    ranked.reserve(static_cast<std::size_t>(gallery.size()));
    for (int j = 0; j < gallery.size(); ++j) {
        if (exclude_self && gallery.id(j) == query_id) continue;
        ranked.push_back({dot(query, gallery.row(j), gallery.dim()), gallery.id(j),
                          gallery.label(j) == query_label});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        return a.id < b.id;
    });
    return ranked;
}

void check_dims(const FeatureSet& q, const FeatureSet& g, const char* op) {
    if (q.size() == 0 || g.size() == 0)
        throw InvalidArgument(std::string(op) + ": empty feature set");
    if (q.dim() != g.dim())
        throw InvalidArgument(std::string(op) + ": feature dims differ (" +
                              std::to_string(q.dim()) + " vs " + std::to_string(g.dim()) + ")");
}

RetrievalResult ranked_metric(const FeatureSet& queries, const FeatureSet& gallery,
                              bool exclude_self, bool r_precision_mode, const char* op) {
    check_dims(queries, gallery, op);
    RetrievalResult result;
    double total = 0.0;
    for (int i = 0; i < queries.size(); ++i) {
        const auto ranked =
            rank_gallery(gallery, queries.row(i), queries.label(i), queries.id(i), exclude_self);
        std::vector<int> rel;
        rel.reserve(ranked.size());
        int relevant = 0;
        for (const Ranked& r : ranked) {
            rel.push_back(r.relevant ? 1 : 0);
            relevant += r.relevant ? 1 : 0;
        }
        if (relevant == 0) {
            result.skipped_ids.push_back(queries.id(i));
            continue;
        }
        double score;
        if (r_precision_mode) {
            int hits = 0;
            for (int k = 0; k < relevant; ++k) hits += rel[static_cast<std::size_t>(k)];
            score = static_cast<double>(hits) / relevant;
        } else {
            score = average_precision(rel);
        }
        result.per_query.push_back(score);
        result.evaluated_ids.push_back(queries.id(i));
        total += score;
    }
    if (result.per_query.empty())
        throw InvalidArgument(std::string(op) + ": every query was skipped (no relevant items)");
    result.mean = total / static_cast<double>(result.per_query.size());
    return result;
}

}  // namespace

double average_precision(const std::vector<int>& relevance) {
    int relevant = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < relevance.size(); ++k) {
        if (relevance[k]) {
            ++relevant;
            sum += static_cast<double>(relevant) / static_cast<double>(k + 1);
        }
    }
    if (relevant == 0) throw InvalidArgument("average_precision: no relevant item in the ranking");
    return sum / relevant;
}

RetrievalResult retrieval_map(const FeatureSet& queries, const FeatureSet& gallery,
                              bool exclude_self) {
    return ranked_metric(queries, gallery, exclude_self, false, "retrieval_map");
}

RetrievalResult r_precision(const FeatureSet& queries, const FeatureSet& gallery,
                            bool exclude_self) {
    return ranked_metric(queries, gallery, exclude_self, true, "r_precision");
}

double recall_at_k(const FeatureSet& queries, const FeatureSet& gallery, int k,
                   bool exclude_self) {
    if (k < 1) throw InvalidArgument("recall_at_k: k must be >= 1");
    check_dims(queries, gallery, "recall_at_k");
    int evaluated = 0, hits = 0;
    for (int i = 0; i < queries.size(); ++i) {
        const auto ranked =
            rank_gallery(gallery, queries.row(i), queries.label(i), queries.id(i), exclude_self);
        bool any_relevant = false, hit = false;
        for (std::size_t j = 0; j < ranked.size(); ++j) {
            if (ranked[j].relevant) {
                any_relevant = true;
                if (static_cast<int>(j) < k) hit = true;
            }
        }
        if (!any_relevant) continue;
        ++evaluated;
        hits += hit ? 1 : 0;
    }
    if (evaluated == 0) throw InvalidArgument("recall_at_k: every query was skipped");
    return static_cast<double>(hits) / evaluated;
}

ZeroShotResult zero_shot_classify(const FeatureSet& image_features,
                                  const FeatureSet& class_prompt_features, double tau) {
    check_dims(image_features, class_prompt_features, "zero_shot_classify");
    if (tau <= 0.0) throw InvalidArgument("zero_shot_classify: tau must be positive");
    const int n_classes = class_prompt_features.size();
    if (n_classes < 2) throw InvalidArgument("zero_shot_classify: need at least 2 classes");
    for (int c = 1; c < n_classes; ++c)
        for (int c2 = 0; c2 < c; ++c2)
            if (class_prompt_features.label(c) == class_prompt_features.label(c2))
                throw InvalidArgument("zero_shot_classify: duplicate class prompt label '" +
                                      class_prompt_features.label(c) + "'");

    ZeroShotResult result;
    result.probabilities = Tensor({image_features.size(), n_classes});
    int correct = 0;
    for (int i = 0; i < image_features.size(); ++i) {
        double mx = -1e300;
        std::vector<double> logits(static_cast<std::size_t>(n_classes));
        for (int c = 0; c < n_classes; ++c) {
            logits[static_cast<std::size_t>(c)] =
                dot(image_features.row(i), class_prompt_features.row(c), image_features.dim()) /
                tau;
            mx = std::max(mx, logits[static_cast<std::size_t>(c)]);
        }
        double z = 0.0;
        int best = 0;
        for (int c = 0; c < n_classes; ++c) {
            z += std::exp(logits[static_cast<std::size_t>(c)] - mx);
            if (logits[static_cast<std::size_t>(c)] > logits[static_cast<std::size_t>(best)])
                best = c;  // strict '>' keeps the lowest index on ties
        }
        for (int c = 0; c < n_classes; ++c)
            result.probabilities.at(i, c) = std::exp(logits[static_cast<std::size_t>(c)] - mx) / z;
        result.predictions.push_back(best);
        if (class_prompt_features.label(best) == image_features.label(i)) ++correct;
    }
    result.accuracy = static_cast<double>(correct) / image_features.size();
    return result;
}

GapReport modality_gap(const FeatureSet& set_a, const FeatureSet& set_b) {
    check_dims(set_a, set_b, "modality_gap");
    const int d = set_a.dim();
    GapReport report;
    report.count_a = set_a.size();
    report.count_b = set_b.size();
    std::vector<double> ca(static_cast<std::size_t>(d), 0.0), cb(ca);
    for (int i = 0; i < set_a.size(); ++i)
        for (int k = 0; k < d; ++k)
            ca[static_cast<std::size_t>(k)] += set_a.row(i)[k] / set_a.size();
    for (int i = 0; i < set_b.size(); ++i)
        for (int k = 0; k < d; ++k)
            cb[static_cast<std::size_t>(k)] += set_b.row(i)[k] / set_b.size();
    report.delta = Tensor({d});
    double mag = 0.0, na = 0.0, nb = 0.0;
    for (int k = 0; k < d; ++k) {
        const double dv = ca[static_cast<std::size_t>(k)] - cb[static_cast<std::size_t>(k)];
        report.delta[static_cast<std::size_t>(k)] = dv;
        mag += dv * dv;
        na += ca[static_cast<std::size_t>(k)] * ca[static_cast<std::size_t>(k)];
        nb += cb[static_cast<std::size_t>(k)] * cb[static_cast<std::size_t>(k)];
    }
    report.magnitude = std::sqrt(mag);
    report.centroid_norm_a = std::sqrt(na);
    report.centroid_norm_b = std::sqrt(nb);
    return report;
}

void Histogram::save_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write histogram '" + path + "'");
    os << "population,bin_lo,bin_hi,count\n";
    for (std::size_t b = 0; b + 1 < edges.size(); ++b)
        os << population << ',' << format_f64(edges[b]) << ',' << format_f64(edges[b + 1]) << ','
           << counts[b] << '\n';
    os << population << ",total,," << total << '\n';
    os << population << ",mean,," << format_f64(mean) << '\n';
}

Histogram similarity_histogram(const FeatureSet& set_a, const FeatureSet& set_b, int bins,
                               Pairing pairing) {
    check_dims(set_a, set_b, "similarity_histogram");
    if (bins < 2) throw InvalidArgument("similarity_histogram: need at least 2 bins");

    Histogram h;
    h.population = std::string(modality_name(set_a.modality())) + "-" +
                   modality_name(set_b.modality());
    h.edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int b = 0; b <= bins; ++b)
        h.edges[static_cast<std::size_t>(b)] = -1.0 + 2.0 * b / bins;
    h.counts.assign(static_cast<std::size_t>(bins), 0);

    auto put = [&](double v) {
        int b = static_cast<int>(std::floor((v + 1.0) / 2.0 * bins));
        b = std::clamp(b, 0, bins - 1);
        h.counts[static_cast<std::size_t>(b)] += 1;
        h.total += 1;
        h.mean += v;
    };

    const int d = set_a.dim();
    if (pairing == Pairing::matched_pairs) {
        if (set_a.size() != set_b.size())
            throw InvalidArgument("similarity_histogram: matched pairing needs equal counts");
        for (int i = 0; i < set_a.size(); ++i)
            if (set_a.id(i) != set_b.id(i))
                throw InvalidArgument("similarity_histogram: matched pairing needs aligned ids");
        for (int i = 0; i < set_a.size(); ++i) put(dot(set_a.row(i), set_b.row(i), d));
    } else {
        const bool same_set =
            set_a.modality() == set_b.modality() && set_a.ids() == set_b.ids();
        if (same_set) {
            for (int i = 0; i < set_a.size(); ++i)
                for (int j = i + 1; j < set_b.size(); ++j) put(dot(set_a.row(i), set_b.row(j), d));
        } else {
            std::set<long> shared;
            {
                std::set<long> a_ids(set_a.ids().begin(), set_a.ids().end());
                for (long id : set_b.ids())
                    if (a_ids.count(id)) shared.insert(id);
            }
            for (int i = 0; i < set_a.size(); ++i)
                for (int j = 0; j < set_b.size(); ++j) {
                    if (!shared.empty() && set_a.id(i) == set_b.id(j)) continue;  // self-pair
                    put(dot(set_a.row(i), set_b.row(j), d));
                }
        }
    }
    if (h.total > 0) h.mean /= static_cast<double>(h.total);
    return h;
}

int minimal_removals_to_sort(const std::vector<int>& relevance) {
    const int n = static_cast<int>(relevance.size());
    // prefix zeros above the cut + suffix ones below it, minimized over cuts
    std::vector<int> zeros_before(static_cast<std::size_t>(n) + 1, 0);
    std::vector<int> ones_from(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 0; i < n; ++i)
        zeros_before[static_cast<std::size_t>(i) + 1] =
            zeros_before[static_cast<std::size_t>(i)] + (relevance[static_cast<std::size_t>(i)] ? 0 : 1);
    for (int i = n - 1; i >= 0; --i)
        ones_from[static_cast<std::size_t>(i)] =
            ones_from[static_cast<std::size_t>(i) + 1] + (relevance[static_cast<std::size_t>(i)] ? 1 : 0);
    int best = n;
    for (int cut = 0; cut <= n; ++cut)
        best = std::min(best, zeros_before[static_cast<std::size_t>(cut)] +
                                  ones_from[static_cast<std::size_t>(cut)]);
    return best;
}

namespace {

// removal set realizing the optimal cut: zeros above it, ones below it
std::vector<int> removal_indices_to_sort(const std::vector<int>& relevance) {
    const int n = static_cast<int>(relevance.size());
    int best = n + 1, best_cut = 0;
    for (int cut = 0; cut <= n; ++cut) {
        int cost = 0;
        for (int i = 0; i < cut; ++i) cost += relevance[static_cast<std::size_t>(i)] ? 0 : 1;
        for (int i = cut; i < n; ++i) cost += relevance[static_cast<std::size_t>(i)] ? 1 : 0;
        if (cost < best) {
            best = cost;
            best_cut = cut;
        }
    }
    std::vector<int> out;
    for (int i = 0; i < best_cut; ++i)
        if (!relevance[static_cast<std::size_t>(i)]) out.push_back(i);
    for (int i = best_cut; i < n; ++i)
        if (relevance[static_cast<std::size_t>(i)]) out.push_back(i);
    return out;
}

}  // namespace

ProbeReport misalignment_probe(const VLModel& model, const Corpus& corpus,
                               const std::vector<std::vector<int>>& class_prompt_tokens) {
    if (corpus.class_names.size() != 2 || class_prompt_tokens.size() != 2)
        throw InvalidArgument("misalignment_probe: exactly 2 classes with one prompt each");

    // evaluation pool: everything the model did not train on
    struct Item {
        long id;
        int cls;
        Tensor feature;
    };
    std::vector<Item> items;
    for (const Sample& s : corpus.samples) {
        if (s.split == Split::train) continue;
        items.push_back({s.id, corpus.class_index(s.label),
                         l2_normalize(encode_image(model, s.image))});
    }
    if (items.empty()) throw InvalidArgument("misalignment_probe: empty evaluation pool");

    Tensor prompt[2] = {l2_normalize(encode_text(model, class_prompt_tokens[0])),
                        l2_normalize(encode_text(model, class_prompt_tokens[1]))};

    ProbeReport report;

    // stage 1: drop images closer to the wrong prompt
    std::vector<Item> kept;
    for (const Item& it : items) {
        const double own = cosine_similarity(it.feature, prompt[it.cls]);
        const double other = cosine_similarity(it.feature, prompt[1 - it.cls]);
        if (other > own)
            ++report.removed_stage1;
        else
            kept.push_back(it);
    }

    // stage 2, per class prompt: remove the minimal set whose deletion sorts
    // the prompt's ranking perfectly
    for (int cls = 0; cls < 2; ++cls) {
        std::vector<int> order(kept.size());
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> sim(kept.size());
        for (std::size_t i = 0; i < kept.size(); ++i)
            sim[i] = cosine_similarity(kept[i].feature, prompt[cls]);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (sim[static_cast<std::size_t>(a)] != sim[static_cast<std::size_t>(b)])
                return sim[static_cast<std::size_t>(a)] > sim[static_cast<std::size_t>(b)];
            return kept[static_cast<std::size_t>(a)].id < kept[static_cast<std::size_t>(b)].id;
        });
        std::vector<int> relevance;
        relevance.reserve(order.size());
        for (int idx : order) relevance.push_back(kept[static_cast<std::size_t>(idx)].cls == cls);
        const auto removals = removal_indices_to_sort(relevance);
        report.removed_stage2 += static_cast<int>(removals.size());
        std::set<int> doomed;
        for (int r : removals) doomed.insert(order[static_cast<std::size_t>(r)]);
        std::vector<Item> next;
        for (std::size_t i = 0; i < kept.size(); ++i)
            if (!doomed.count(static_cast<int>(i))) next.push_back(kept[i]);
        kept = std::move(next);
    }

    report.kept_per_class.assign(2, 0);
    for (const Item& it : kept) report.kept_per_class[static_cast<std::size_t>(it.cls)] += 1;
    if (report.kept_per_class[0] == 0 || report.kept_per_class[1] == 0)
        throw InvalidArgument("misalignment_probe: a class was filtered to emptiness");

    // feature sets over the filtered pool
    FeatureSet images(Modality::image, model.config().d);
    for (const Item& it : kept)
        images.add(it.id, corpus.class_names[static_cast<std::size_t>(it.cls)], it.feature);
    FeatureSet prompts(Modality::text, model.config().d);
    for (int cls = 0; cls < 2; ++cls)
        prompts.add(cls, corpus.class_names[static_cast<std::size_t>(cls)], prompt[cls]);

    report.inter_modal_r_precision = r_precision(prompts, images, false).mean;
    report.intra_modal_map = retrieval_map(images, images, true).mean;
    report.intra_modal_r_precision = r_precision(images, images, true).mean;
    return report;
}

}  // namespace xgap
