#include "xgap/capi.h"

#include <filesystem>
#include <fstream>
#include <string>

#include "xgap/error.hpp"
#include "xgap/experiment.hpp"
#include "xgap/featureset.hpp"
#include "xgap/invert.hpp"
#include "xgap/io.hpp"
#include "xgap/losses.hpp"
#include "xgap/metrics.hpp"
#include "xgap/model.hpp"
#include "xgap/rng.hpp"
#include "xgap/train.hpp"

namespace fs = std::filesystem;

namespace {

thread_local std::string g_last_error;

int to_status(const std::exception& e) {
    g_last_error = e.what();
    if (dynamic_cast<const xgap::InvalidArgument*>(&e)) return XGAP_EINVAL;
    if (dynamic_cast<const xgap::IoError*>(&e)) return XGAP_EIO;
    if (dynamic_cast<const xgap::NumericError*>(&e)) return XGAP_ENUMERIC;
    return XGAP_EINTERNAL;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        return XGAP_OK;
    } catch (const std::exception& e) {
        return to_status(e);
    } catch (...) {
        g_last_error = "unknown error";
        return XGAP_EINTERNAL;
    }
}

std::string require_str(const char* s, const char* what) {
    if (!s || !*s) throw xgap::InvalidArgument(std::string(what) + " must be provided");
    return s;
}

xgap::Split split_arg(const char* s) { return xgap::split_from_name(require_str(s, "split")); }

}  // namespace

extern "C" {

const char* xgap_version(void) { return "0.1.0"; }

const char* xgap_last_error(void) { return g_last_error.c_str(); }

int xgap_gen_data(const char* spec_file, const char* out_dir) {
    return guarded([&] {
        const xgap::CorpusSpec spec = xgap::parse_corpus_spec(require_str(spec_file, "spec file"));
        xgap::generate_corpus(spec).save(require_str(out_dir, "output directory"));
    });
}

int xgap_pretrain(const char* corpus_dir, const char* loss, double tau, int steps, int batch,
                  double lr, unsigned long long seed, const char* scope, const char* out_ckpt,
                  const char* log_csv) {
    return guarded([&] {
        const xgap::Corpus corpus = xgap::Corpus::load(require_str(corpus_dir, "corpus"));
        xgap::ModelConfig cfg;
        cfg.init_temperature = tau;
        cfg.seed = xgap::substream(seed, "model");
        int vocab_needed = static_cast<int>(corpus.vocab.size());
        cfg.vocab_size = std::max(cfg.vocab_size, vocab_needed);
        xgap::VLModel model = xgap::VLModel::init(cfg);

        xgap::TrainSpec spec;
        spec.loss_kind = xgap::loss_kind_from_name(require_str(loss, "loss"));
        spec.tau = tau;
        spec.steps = steps;
        spec.batch_size = batch;
        spec.optimizer.lr = lr;
        spec.seed = xgap::substream(seed, "train");
        const std::string scope_name = scope && *scope ? scope : "all";
        if (scope_name == "all")
            spec.trainable_scope = xgap::Scope::all;
        else if (scope_name == "projections_only")
            spec.trainable_scope = xgap::Scope::projections_only;
        else
            throw xgap::InvalidArgument("scope must be 'all' or 'projections_only'");

        const xgap::TrainLog log = xgap::pretrain(model, corpus, spec);
        model.save(require_str(out_ckpt, "output checkpoint"));
        if (log_csv && *log_csv) log.save_csv(log_csv);
    });
}

int xgap_finetune(const char* ckpt, const char* corpus_dir, double tau, int steps, double lr,
                  unsigned long long seed, const char* out_ckpt, const char* log_csv) {
    return guarded([&] {
        xgap::VLModel model = xgap::VLModel::load(require_str(ckpt, "checkpoint"));
        const xgap::Corpus corpus = xgap::Corpus::load(require_str(corpus_dir, "corpus"));
        const xgap::TrainLog log =
            xgap::finetune_projections(model, corpus, tau, steps, seed, lr);
        model.save(require_str(out_ckpt, "output checkpoint"));
        if (log_csv && *log_csv) log.save_csv(log_csv);
    });
}

int xgap_encode(const char* ckpt, const char* corpus_dir, const char* split,
                const char* modality, const char* out_feats) {
    return guarded([&] {
        const xgap::VLModel model = xgap::VLModel::load(require_str(ckpt, "checkpoint"));
        const xgap::Corpus corpus = xgap::Corpus::load(require_str(corpus_dir, "corpus"));
        const std::string kind = require_str(modality, "modality");
        xgap::FeatureSet fs;
        if (kind == "image")
            fs = xgap::encode_images(model, corpus, split_arg(split));
        else if (kind == "text")
            fs = xgap::encode_texts(model, corpus, split_arg(split), false);
        else if (kind == "text-all")
            fs = xgap::encode_texts(model, corpus, split_arg(split), true);
        else if (kind == "prompts")
            fs = xgap::encode_class_prompts(model, corpus);
        else
            throw xgap::InvalidArgument("modality must be image, text, text-all or prompts");
        fs.save_csv(require_str(out_feats, "output path"));
    });
}

int xgap_invert(const char* ckpt, const char* corpus_dir, const char* mode, const char* split,
                int count, int steps, unsigned long long seed, int include_gallery,
                const char* out_feats, const char* traj_csv) {
    return guarded([&] {
        const xgap::VLModel model = xgap::VLModel::load(require_str(ckpt, "checkpoint"));
        const xgap::Corpus corpus = xgap::Corpus::load(require_str(corpus_dir, "corpus"));
        const std::string kind = require_str(mode, "mode");
        const xgap::Split primary = split_arg(split);

        std::vector<xgap::Split> splits = {primary};
        if (include_gallery && primary != xgap::Split::gallery)
            splits.push_back(xgap::Split::gallery);

        xgap::InversionSpec spec;
        spec.count = count;
        spec.steps = steps > 0 ? steps : (kind == "oti" ? 150 : 1000);
        spec.seed = seed;

        xgap::FeatureSet out;
        std::vector<std::pair<long, std::vector<double>>> trajectories;
        for (xgap::Split sp : splits) {
            const auto samples = corpus.split(sp);
            if (samples.empty()) throw xgap::InvalidArgument("invert: empty split");
            std::vector<xgap::InversionResult> results;
            if (kind == "oti") {
                xgap::InversionSpec s = spec;
                s.template_tokens = corpus.tokenize("a photo of");
                std::vector<xgap::Tensor> images;
                for (const xgap::Sample* smp : samples) images.push_back(smp->image);
                results = xgap::oti_many(model, images, s);
                if (out.dim() == 0) out = xgap::FeatureSet(xgap::Modality::oti, model.config().d);
            } else if (kind == "ovi") {
                std::vector<std::vector<int>> texts;
                for (const xgap::Sample* smp : samples)
                    texts.push_back(corpus.tokenize(smp->captions[0]));
                results = xgap::ovi_many(model, texts, spec);
                if (out.dim() == 0) out = xgap::FeatureSet(xgap::Modality::ovi, model.config().d);
            } else {
                throw xgap::InvalidArgument("mode must be 'oti' or 'ovi'");
            }
            for (std::size_t i = 0; i < samples.size(); ++i) {
                if (results[i].digest_before != results[i].digest_after)
                    throw xgap::NumericError("invert: frozen-encoder contract violated");
                out.add(samples[i]->id, samples[i]->label, results[i].feature);
                trajectories.emplace_back(samples[i]->id, results[i].trajectory);
            }
        }
        out.save_csv(require_str(out_feats, "output path"));
        if (traj_csv && *traj_csv) {
            std::ofstream os(traj_csv);
            if (!os) throw xgap::IoError(std::string("cannot write '") + traj_csv + "'");
            os << "id,step,loss\n";
            for (const auto& [id, traj] : trajectories)
                for (std::size_t s = 0; s < traj.size(); ++s)
                    os << id << ',' << s << ',' << xgap::format_f64(traj[s]) << '\n';
        }
    });
}

int xgap_eval(const char* task, const char* query_feats, const char* gallery_feats,
              const char* query_native_feats, double alpha, double tau,
              const char* report_csv) {
    return guarded([&] {
        const std::string kind = require_str(task, "task");
        xgap::FeatureSet query = xgap::FeatureSet::load(require_str(query_feats, "query"));
        const xgap::FeatureSet gallery =
            xgap::FeatureSet::load(require_str(gallery_feats, "gallery"));

        if (query_native_feats && *query_native_feats) {
            const xgap::FeatureSet native = xgap::FeatureSet::load(query_native_feats);
            if (native.size() != query.size())
                throw xgap::InvalidArgument("eval: query and native sets differ in size");
            xgap::FeatureSet mixed(query.modality(), query.dim());
            for (int i = 0; i < query.size(); ++i) {
                if (native.id(i) != query.id(i))
                    throw xgap::InvalidArgument("eval: query/native ids are not aligned");
                mixed.add(query.id(i), query.label(i),
                          xgap::combine_features(native.row_tensor(i), query.row_tensor(i),
                                                 alpha));
            }
            query = std::move(mixed);
        }

        std::ofstream os(require_str(report_csv, "report path"));
        if (!os) throw xgap::IoError(std::string("cannot write '") + report_csv + "'");
        os << "metric,value\n";
        // self-matches are excluded whenever the two sets share ids
        bool shared_ids = false;
        for (int i = 0; i < query.size() && !shared_ids; ++i)
            for (int j = 0; j < gallery.size(); ++j)
                if (query.id(i) == gallery.id(j)) {
                    shared_ids = true;
                    break;
                }

        if (kind == "img2img" || kind == "txt2txt") {
            const auto map_r = xgap::retrieval_map(query, gallery, shared_ids);
            const auto rp_r = xgap::r_precision(query, gallery, shared_ids);
            os << "map," << xgap::format_f64(map_r.mean) << '\n';
            os << "r_precision," << xgap::format_f64(rp_r.mean) << '\n';
            os << "queries," << map_r.per_query.size() << '\n';
            os << "skipped," << map_r.skipped_ids.size() << '\n';
        } else if (kind == "zeroshot") {
            const auto zs = xgap::zero_shot_classify(query, gallery, tau);
            os << "accuracy," << xgap::format_f64(zs.accuracy) << '\n';
            os << "images," << query.size() << '\n';
            os << "classes," << gallery.size() << '\n';
        } else if (kind == "imgtxt") {
            for (int k : {1, 5, 10})
                os << "recall@" << k << ','
                   << xgap::format_f64(xgap::recall_at_k(query, gallery, k, shared_ids)) << '\n';
            os << "map," << xgap::format_f64(xgap::retrieval_map(query, gallery, shared_ids).mean)
               << '\n';
        } else {
            throw xgap::InvalidArgument("task must be img2img, txt2txt, zeroshot or imgtxt");
        }
        if (!os) throw xgap::IoError("write failed for eval report");
    });
}

int xgap_diagnose(const char* ckpt, const char* corpus_dir, const char* report_dir, int samples,
                  int steps, unsigned long long seed) {
    return guarded([&] {
        const xgap::VLModel model = xgap::VLModel::load(require_str(ckpt, "checkpoint"));
        const xgap::Corpus corpus = xgap::Corpus::load(require_str(corpus_dir, "corpus"));
        const std::string dir = require_str(report_dir, "report directory");
        fs::create_directories(dir);

        // evaluation pool features
        xgap::FeatureSet img(xgap::Modality::image, model.config().d);
        xgap::FeatureSet txt(xgap::Modality::text, model.config().d);
        for (xgap::Split sp : {xgap::Split::query, xgap::Split::gallery})
            for (const xgap::Sample* s : corpus.split(sp)) {
                img.add(s->id, s->label, xgap::l2_normalize(xgap::encode_image(model, s->image)));
                txt.add(s->id, s->label,
                        xgap::l2_normalize(
                            xgap::encode_text(model, corpus.tokenize(s->captions[0]))));
            }

        const xgap::GapReport gap = xgap::modality_gap(img, txt);
        {
            std::ofstream os(fs::path(dir) / "gap.csv");
            os << "metric,value\n";
            os << "gap_magnitude," << xgap::format_f64(gap.magnitude) << '\n';
            os << "centroid_norm_image," << xgap::format_f64(gap.centroid_norm_a) << '\n';
            os << "centroid_norm_text," << xgap::format_f64(gap.centroid_norm_b) << '\n';
            os << "count," << gap.count_a << '\n';
        }
        xgap::similarity_histogram(img, img, 40, xgap::Pairing::all_pairs)
            .save_csv((fs::path(dir) / "hist_image_image.csv").string());
        xgap::similarity_histogram(txt, img, 40, xgap::Pairing::matched_pairs)
            .save_csv((fs::path(dir) / "hist_text_image.csv").string());

        // small OTI probe for the trajectory and drift histograms
        const auto queries = corpus.split(xgap::Split::query);
        const int n = std::min<int>(samples > 0 ? samples : 8,
                                    static_cast<int>(queries.size()));
        if (n > 0) {
            xgap::InversionSpec spec;
            spec.count = 1;
            spec.steps = steps > 0 ? steps : 150;
            spec.seed = seed;
            spec.template_tokens = corpus.tokenize("a photo of");
            std::vector<xgap::Tensor> images;
            xgap::FeatureSet native(xgap::Modality::image, model.config().d);
            for (int i = 0; i < n; ++i) {
                images.push_back(queries[static_cast<std::size_t>(i)]->image);
                native.add(queries[static_cast<std::size_t>(i)]->id,
                           queries[static_cast<std::size_t>(i)]->label,
                           xgap::l2_normalize(xgap::encode_image(
                               model, queries[static_cast<std::size_t>(i)]->image)));
            }
            const auto results = xgap::oti_many(model, images, spec);
            {
                std::ofstream os(fs::path(dir) / "oti_trajectory.csv");
                os << "step,mean_loss\n";
                for (int s = 0; s < spec.steps; ++s) {
                    double mean = 0.0;
                    for (const auto& r : results)
                        mean += r.trajectory[static_cast<std::size_t>(s)] / n;
                    os << s << ',' << xgap::format_f64(mean) << '\n';
                }
            }
            xgap::FeatureSet oti_fs(xgap::Modality::oti, model.config().d);
            for (int i = 0; i < n; ++i)
                oti_fs.add(native.id(i), native.label(i),
                           results[static_cast<std::size_t>(i)].feature);
            xgap::similarity_histogram(oti_fs, img, 40, xgap::Pairing::all_pairs)
                .save_csv((fs::path(dir) / "hist_oti_image.csv").string());
        }
    });
}

int xgap_run_experiment(const char* config_path) {
    return guarded([&] {
        const xgap::ExperimentConfig cfg =
            xgap::parse_experiment_config(require_str(config_path, "config path"));
        xgap::run_experiment(cfg);
    });
}

struct xgap_model {
    xgap::VLModel model;
};

int xgap_model_open(const char* ckpt, xgap_model** out) {
    return guarded([&] {
        if (!out) throw xgap::InvalidArgument("model_open: null output pointer");
        *out = new xgap_model{xgap::VLModel::load(require_str(ckpt, "checkpoint"))};
    });
}

void xgap_model_free(xgap_model* model) { delete model; }

unsigned long long xgap_model_digest(const xgap_model* model) {
    return model ? model->model.digest() : 0;
}

int xgap_model_dim(const xgap_model* model) { return model ? model->model.config().d : 0; }

long xgap_model_param_count(const xgap_model* model) {
    return model ? static_cast<long>(model->model.param_count()) : 0;
}

struct xgap_featureset {
    xgap::FeatureSet fs;
};

int xgap_featureset_open(const char* path, xgap_featureset** out) {
    return guarded([&] {
        if (!out) throw xgap::InvalidArgument("featureset_open: null output pointer");
        *out = new xgap_featureset{xgap::FeatureSet::load(require_str(path, "path"))};
    });
}

void xgap_featureset_free(xgap_featureset* fs) { delete fs; }

int xgap_featureset_size(const xgap_featureset* fs) { return fs ? fs->fs.size() : 0; }

int xgap_featureset_dim(const xgap_featureset* fs) { return fs ? fs->fs.dim() : 0; }

const char* xgap_featureset_modality(const xgap_featureset* fs) {
    return fs ? xgap::modality_name(fs->fs.modality()) : "";
}

}  // extern "C"
