#pragma once

#include <string>
#include <vector>

#include "xgap/corpus.hpp"
#include "xgap/model.hpp"
#include "xgap/tensor.hpp"

namespace xgap {

enum class Modality { image, text, oti, ovi, adapter };

const char* modality_name(Modality m);
Modality modality_from_name(const std::string& name);

// Labeled matrix of unit-norm feature rows with one modality tag. Rows are
// validated to unit norm (1e-9) as they enter.
class FeatureSet {
public:
    FeatureSet() = default;
    FeatureSet(Modality modality, int dim);

    void add(long id, const std::string& label, const Tensor& unit_feature);

    int size() const { return static_cast<int>(ids_.size()); }
    int dim() const { return dim_; }
    Modality modality() const { return modality_; }
    long id(int i) const { return ids_[static_cast<std::size_t>(i)]; }
    const std::string& label(int i) const { return labels_[static_cast<std::size_t>(i)]; }
    const double* row(int i) const { return data_.data() + static_cast<std::size_t>(i) * dim_; }
    Tensor row_tensor(int i) const;
    const std::vector<long>& ids() const { return ids_; }
    const std::vector<std::string>& labels() const { return labels_; }

    // Text format: header `id,modality,label` then one row per feature with
    // d decimal values. save_binary uses the shared XGAP tensor header with
    // labels coded numerically; load() accepts either.
    void save_csv(const std::string& path) const;
    void save_binary(const std::string& path) const;
    static FeatureSet load(const std::string& path);

private:
    Modality modality_ = Modality::image;
    int dim_ = 0;
    std::vector<long> ids_;
    std::vector<std::string> labels_;
    std::vector<double> data_;
};

// Encoding helpers for the retrieval protocols. Text features use the first
// caption unless all_captions is set (gallery-style sets; caption k of sample
// i gets id 16*i+k so ids stay unique).
FeatureSet encode_images(const VLModel& model, const Corpus& corpus, Split split);
FeatureSet encode_texts(const VLModel& model, const Corpus& corpus, Split split,
                        bool all_captions = false);
FeatureSet encode_class_prompts(const VLModel& model, const Corpus& corpus);

}  // namespace xgap
