#include "xgap/featureset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "xgap/error.hpp"
#include "xgap/io.hpp"

namespace xgap {

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::image: return "image";
        case Modality::text: return "text";
        case Modality::oti: return "oti";
        case Modality::ovi: return "ovi";
        case Modality::adapter: return "adapter";
    }
    return "?";
}

Modality modality_from_name(const std::string& name) {
    for (Modality m : {Modality::image, Modality::text, Modality::oti, Modality::ovi,
                       Modality::adapter})
        if (name == modality_name(m)) return m;
    throw InvalidArgument("unknown modality '" + name + "'");
}

FeatureSet::FeatureSet(Modality modality, int dim) : modality_(modality), dim_(dim) {
    if (dim < 1) throw InvalidArgument("FeatureSet: dim must be positive");
}

void FeatureSet::add(long id, const std::string& label, const Tensor& unit_feature) {
    if (dim_ == 0) throw InvalidArgument("FeatureSet: construct with a dimension first");
    if (unit_feature.rank() != 1 || unit_feature.dim(0) != dim_)
        throw InvalidArgument("FeatureSet: feature length " + unit_feature.shape_str() +
                              " does not match dim " + std::to_string(dim_));
    if (std::fabs(norm(unit_feature) - 1.0) > 1e-9)
        throw InvalidArgument("FeatureSet: row for id " + std::to_string(id) +
                              " is not unit-normalized");
    ids_.push_back(id);
    labels_.push_back(label);
    data_.insert(data_.end(), unit_feature.data(), unit_feature.data() + dim_);
}

Tensor FeatureSet::row_tensor(int i) const {
    return Tensor({dim_}, std::vector<double>(row(i), row(i) + dim_));
}

void FeatureSet::save_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write feature set '" + path + "'");
    os << "id,modality,label\n";
    for (int i = 0; i < size(); ++i) {
        os << id(i) << ',' << modality_name(modality_) << ',' << label(i);
        const double* r = row(i);
        for (int c = 0; c < dim_; ++c) os << ',' << format_f64(r[c]);
        os << '\n';
    }
    if (!os) throw IoError("write failed for feature set '" + path + "'");
}

void FeatureSet::save_binary(const std::string& path) const {
    Archive a;
    a.meta = {{"modality", static_cast<double>(static_cast<int>(modality_))},
              {"count", static_cast<double>(size())},
              {"dim", static_cast<double>(dim_)}};
    Tensor ids({std::max(1, size())});
    Tensor labels({std::max(1, size())});
    for (int i = 0; i < size(); ++i) {
        ids[static_cast<std::size_t>(i)] = static_cast<double>(id(i));
        char* end = nullptr;
        const double code = std::strtod(label(i).c_str(), &end);
        if (end == nullptr || *end != '\0')
            throw InvalidArgument("save_binary: label '" + label(i) +
                                  "' is not numeric; use the text format");
        labels[static_cast<std::size_t>(i)] = code;
    }
    Tensor feats({std::max(1, size()), dim_});
    std::copy(data_.begin(), data_.end(), feats.data());
    a.tensors.emplace_back("ids", std::move(ids));
    a.tensors.emplace_back("labels", std::move(labels));
    a.tensors.emplace_back("features", std::move(feats));
    a.save(path);
}

namespace {

FeatureSet load_binary(const std::string& path) {
    const Archive a = Archive::load(path);
    const int count = static_cast<int>(a.meta_value("count"));
    const int dim = static_cast<int>(a.meta_value("dim"));
    const auto modality = static_cast<Modality>(static_cast<int>(a.meta_value("modality")));
    FeatureSet fs(modality, dim);
    const Tensor& ids = a.tensor("ids");
    const Tensor& labels = a.tensor("labels");
    const Tensor& feats = a.tensor("features");
    if (feats.rank() != 2 || feats.cols() != dim || feats.rows() < count)
        throw IoError("feature archive '" + path + "': bad features tensor");
    for (int i = 0; i < count; ++i) {
        std::ostringstream label;
        label << labels[static_cast<std::size_t>(i)];
        Tensor row({dim}, std::vector<double>(feats.data() + static_cast<std::size_t>(i) * dim,
                                              feats.data() + static_cast<std::size_t>(i + 1) * dim));
        fs.add(static_cast<long>(ids[static_cast<std::size_t>(i)]), label.str(), row);
    }
    return fs;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

FeatureSet FeatureSet::load(const std::string& path) {
    if (Archive::sniff(path)) return load_binary(path);

    std::ifstream is(path);
    if (!is) throw IoError("cannot open feature set '" + path + "'");
    std::string line;
    if (!std::getline(is, line) || line != "id,modality,label")
        throw IoError("feature set '" + path + "': missing id,modality,label header");

    FeatureSet fs;
    bool first = true;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() < 4)
            throw IoError("feature set '" + path + "': short row at line " +
                          std::to_string(line_no));
        const int dim = static_cast<int>(fields.size()) - 3;
        if (first) {
            fs = FeatureSet(modality_from_name(fields[1]), dim);
            first = false;
        } else if (dim != fs.dim()) {
            throw IoError("feature set '" + path + "': inconsistent row width at line " +
                          std::to_string(line_no));
        } else if (modality_from_name(fields[1]) != fs.modality()) {
            throw IoError("feature set '" + path + "': mixed modalities");
        }
        Tensor feat({dim});
        for (int c = 0; c < dim; ++c)
            feat[static_cast<std::size_t>(c)] = std::stod(fields[static_cast<std::size_t>(c + 3)]);
        fs.add(std::stol(fields[0]), fields[2], feat);
    }
    if (first) throw IoError("feature set '" + path + "': no rows");
    return fs;
}

FeatureSet encode_images(const VLModel& model, const Corpus& corpus, Split split) {
    FeatureSet fs(Modality::image, model.config().d);
    for (const Sample* s : corpus.split(split))
        fs.add(s->id, s->label, l2_normalize(encode_image(model, s->image)));
    return fs;
}

FeatureSet encode_texts(const VLModel& model, const Corpus& corpus, Split split,
                        bool all_captions) {
    FeatureSet fs(Modality::text, model.config().d);
    for (const Sample* s : corpus.split(split)) {
        const std::size_t n = all_captions ? s->captions.size() : 1;
        for (std::size_t k = 0; k < n; ++k) {
            const long id = all_captions ? s->id * 16 + static_cast<long>(k) : s->id;
            fs.add(id, s->label,
                   l2_normalize(encode_text(model, corpus.tokenize(s->captions[k]))));
        }
    }
    return fs;
}

FeatureSet encode_class_prompts(const VLModel& model, const Corpus& corpus) {
    FeatureSet fs(Modality::text, model.config().d);
    const auto prompts = corpus.class_prompts();
    for (std::size_t c = 0; c < prompts.size(); ++c)
        fs.add(static_cast<long>(c), corpus.class_names[c],
               l2_normalize(encode_text(model, corpus.tokenize(prompts[c]))));
    return fs;
}

}  // namespace xgap
