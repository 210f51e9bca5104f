#pragma once

#include <string>
#include <vector>

#include "xgap/corpus.hpp"
#include "xgap/featureset.hpp"
#include "xgap/model.hpp"
#include "xgap/tensor.hpp"

namespace xgap {

// Mean over relevant ranks k of precision@k. The ranked 0/1 list must hold at
// least one relevant item.
double average_precision(const std::vector<int>& relevance);

struct RetrievalResult {
    double mean = 0.0;                  // mAP or mean R-precision
    std::vector<double> per_query;     // one entry per evaluated query
    std::vector<long> evaluated_ids;
    std::vector<long> skipped_ids;     // queries with no relevant gallery item
};

// Ranks the gallery by cosine (descending, ties by gallery id ascending);
// relevance is label equality. exclude_self drops gallery rows sharing the
// query's id. Queries without any relevant item are skipped and reported.
RetrievalResult retrieval_map(const FeatureSet& queries, const FeatureSet& gallery,
                              bool exclude_self);
RetrievalResult r_precision(const FeatureSet& queries, const FeatureSet& gallery,
                            bool exclude_self);

// Fraction of queries with at least one relevant item in the top k.
double recall_at_k(const FeatureSet& queries, const FeatureSet& gallery, int k,
                   bool exclude_self = false);

struct ZeroShotResult {
    std::vector<int> predictions;  // class index per image, ties to the lowest
    double accuracy = 0.0;
    Tensor probabilities;  // (n_images, n_classes)
};

// Softmax over cosine/tau against one prompt per class.
ZeroShotResult zero_shot_classify(const FeatureSet& image_features,
                                  const FeatureSet& class_prompt_features, double tau);

struct GapReport {
    Tensor delta;  // centroid(a) - centroid(b), length d
    double magnitude = 0.0;
    double centroid_norm_a = 0.0;
    double centroid_norm_b = 0.0;
    int count_a = 0;
    int count_b = 0;
};

GapReport modality_gap(const FeatureSet& set_a, const FeatureSet& set_b);

enum class Pairing { all_pairs, matched_pairs };

struct Histogram {
    std::vector<double> edges;  // bins+1 edges over [-1, 1]
    std::vector<long> counts;
    std::string population;  // e.g. "oti-image"
    long total = 0;
    double mean = 0.0;  // mean of the measured similarities

    void save_csv(const std::string& path) const;
};

// Cosine similarities of the selected pairing binned over [-1,1]. matched
// pairs require aligned ids; all-pairs between two sets sharing ids skips
// self-pairs, and a set against itself counts unordered distinct pairs once.
Histogram similarity_histogram(const FeatureSet& set_a, const FeatureSet& set_b, int bins,
                               Pairing pairing);

struct ProbeReport {
    std::vector<int> kept_per_class;
    int removed_stage1 = 0;
    int removed_stage2 = 0;
    double inter_modal_r_precision = 0.0;  // 1.0 by construction of stage 2
    double intra_modal_map = 0.0;
    double intra_modal_r_precision = 0.0;
};

// Two-class misalignment probe: drop images better aligned with the wrong
// prompt, then the minimal set whose removal perfectly sorts each prompt's
// ranking; measure intra-modal retrieval on what remains. Images come from
// the query+gallery splits so the probe never scores training samples.
ProbeReport misalignment_probe(const VLModel& model, const Corpus& two_class_corpus,
                               const std::vector<std::vector<int>>& class_prompt_tokens);

// Minimal number of deletions that leaves a 0/1 relevance sequence perfectly
// sorted (all ones first); the stage-2 filter criterion.
int minimal_removals_to_sort(const std::vector<int>& relevance);

}  // namespace xgap
