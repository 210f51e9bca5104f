#include "xgap/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "xgap/error.hpp"
#include "xgap/io.hpp"
#include "xgap/losses.hpp"
#include "xgap/metrics.hpp"
#include "xgap/rng.hpp"

namespace xgap {

namespace fs = std::filesystem;

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "experiment", "seed", "out",
        "corpus.shapes", "corpus.colors", "corpus.samples_per_class", "corpus.canvas",
        "model.d", "model.vocab", "model.context", "model.patches", "model.patch_dim",
        "model.layers", "model.heads", "model.hidden", "model.tau", "model.siglip_bias",
        "train.loss", "train.tau", "train.steps", "train.batch", "train.lr",
        "train.weight_decay",
        "finetune.steps", "finetune.lr", "finetune.tau_a", "finetune.tau_b", "finetune.batch",
        "invert.oti_count", "invert.oti_steps", "invert.ovi_count", "invert.ovi_steps",
        "invert.snapshot_period", "invert.template", "invert.drift_count", "invert.drift_steps",
        "eval.seeds", "eval.alphas", "eval.tau", "eval.samples",
    };
    return keys;
}

const std::set<std::string>& known_kinds() {
    static const std::set<std::string> kinds = {"img2img",         "txt2txt",     "zeroshot",
                                                "temperature-gap", "slip-parity", "misalignment",
                                                "drift",           "mixing"};
    return kinds;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

std::map<std::string, std::string> read_kv_file(const std::string& path, std::string* raw_out) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line, raw;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        raw += line;
        raw += '\n';
        const std::string stripped = trim(line.substr(0, line.find('#')));
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument("config '" + path + "' line " + std::to_string(line_no) +
                                  ": expected key = value");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (kv.count(key))
            throw InvalidArgument("config '" + path + "': duplicate key '" + key + "'");
        kv[key] = value;
    }
    if (raw_out) *raw_out = raw;
    return kv;
}

class KvReader {
public:
    KvReader(std::map<std::string, std::string> kv, std::string path)
        : kv_(std::move(kv)), path_(std::move(path)) {}

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string str(const std::string& key, const std::string& fallback) {
        used_.insert(key);
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    std::string required(const std::string& key) {
        used_.insert(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) missing_.push_back(key);
        return it == kv_.end() ? "" : it->second;
    }

    int integer(const std::string& key, int fallback) {
        const std::string v = str(key, "");
        if (v.empty()) return fallback;
        try {
            return std::stoi(v);
        } catch (...) {
            throw InvalidArgument("config '" + path_ + "': key '" + key + "' is not an integer");
        }
    }

    double real(const std::string& key, double fallback) {
        const std::string v = str(key, "");
        if (v.empty()) return fallback;
        try {
            return std::stod(v);
        } catch (...) {
            throw InvalidArgument("config '" + path_ + "': key '" + key + "' is not a number");
        }
    }

    std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
        const std::string v = str(key, "");
        if (v.empty()) return fallback;
        try {
            return std::stoull(v);
        } catch (...) {
            throw InvalidArgument("config '" + path_ + "': key '" + key + "' is not an integer");
        }
    }

    void finish(const std::set<std::string>& schema) const {
        std::vector<std::string> unknown;
        for (const auto& [key, value] : kv_)
            if (!schema.count(key)) unknown.push_back(key);
        if (!unknown.empty()) {
            std::string msg = "config '" + path_ + "': unknown keys:";
            for (const std::string& k : unknown) msg += " " + k;
            throw InvalidArgument(msg);
        }
        if (!missing_.empty()) {
            std::string msg = "config '" + path_ + "': missing required keys:";
            for (const std::string& k : missing_) msg += " " + k;
            throw InvalidArgument(msg);
        }
    }

private:
    std::map<std::string, std::string> kv_;
    std::string path_;
    std::set<std::string> used_;
    mutable std::vector<std::string> missing_;
};

std::vector<double> parse_alpha_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (t.empty()) continue;
        out.push_back(std::stod(t));
    }
    if (out.empty()) throw InvalidArgument("eval.alphas: empty list");
    return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& path) {
    std::string raw;
    KvReader kv(read_kv_file(path, &raw), path);

    ExperimentConfig cfg;
    cfg.kind = kv.required("experiment");
    cfg.seed = kv.u64("seed", 0);
    if (!kv.has("seed")) kv.required("seed");
    cfg.out_dir = kv.required("out");

    cfg.corpus.num_shapes = kv.integer("corpus.shapes", 3);
    cfg.corpus.num_colors = kv.integer("corpus.colors", 2);
    cfg.corpus.samples_per_class = kv.integer("corpus.samples_per_class", 12);
    cfg.corpus.canvas = kv.integer("corpus.canvas", 16);

    cfg.model.d = kv.integer("model.d", 64);
    cfg.model.vocab_size = kv.integer("model.vocab", 64);
    cfg.model.text_context_len = kv.integer("model.context", 16);
    cfg.model.num_patches = kv.integer("model.patches", 16);
    cfg.model.patch_dim = kv.integer("model.patch_dim", 48);
    cfg.model.layers = kv.integer("model.layers", 2);
    cfg.model.heads = kv.integer("model.heads", 4);
    cfg.model.hidden_dim = kv.integer("model.hidden", 128);
    cfg.model.init_temperature = kv.real("model.tau", 0.01);
    cfg.model.siglip_bias = kv.real("model.siglip_bias", 0.0);

    cfg.train_loss = loss_kind_from_name(kv.str("train.loss", "clip"));
    cfg.train_tau = kv.real("train.tau", 0.01);
    cfg.train_steps = kv.integer("train.steps", 1500);
    cfg.train_batch = kv.integer("train.batch", 16);
    cfg.train_lr = kv.real("train.lr", 3e-4);
    cfg.train_weight_decay = kv.real("train.weight_decay", 0.01);

    cfg.finetune_steps = kv.integer("finetune.steps", 300);
    cfg.finetune_lr = kv.real("finetune.lr", 3e-3);
    cfg.finetune_tau_a = kv.real("finetune.tau_a", 1.0);
    cfg.finetune_tau_b = kv.real("finetune.tau_b", 0.01);
    cfg.finetune_batch = kv.integer("finetune.batch", 32);

    cfg.oti_count = kv.integer("invert.oti_count", 1);
    cfg.oti_steps = kv.integer("invert.oti_steps", 150);
    cfg.ovi_count = kv.integer("invert.ovi_count", 2);
    cfg.ovi_steps = kv.integer("invert.ovi_steps", 500);
    cfg.snapshot_period = kv.integer("invert.snapshot_period", 10);
    cfg.oti_template = kv.str("invert.template", "a photo of");
    cfg.drift_count = kv.integer("invert.drift_count", 8);
    cfg.drift_steps = kv.integer("invert.drift_steps", 2000);

    cfg.eval_seeds = kv.integer("eval.seeds", 5);
    if (kv.has("eval.alphas")) cfg.alphas = parse_alpha_list(kv.str("eval.alphas", ""));
    cfg.eval_tau = kv.real("eval.tau", 0.01);
    cfg.eval_samples = kv.integer("eval.samples", 12);

    kv.finish(known_keys());

    if (!known_kinds().count(cfg.kind))
        throw InvalidArgument("config '" + path + "': unknown experiment kind '" + cfg.kind + "'");
    if (cfg.eval_seeds < 1) throw InvalidArgument("eval.seeds must be >= 1");
    cfg.config_digest = fnv1a(raw.data(), raw.size());
    return cfg;
}

CorpusSpec parse_corpus_spec(const std::string& path) {
    KvReader kv(read_kv_file(path, nullptr), path);
    CorpusSpec spec;
    spec.num_shapes = kv.integer("corpus.shapes", 3);
    spec.num_colors = kv.integer("corpus.colors", 2);
    spec.samples_per_class = kv.integer("corpus.samples_per_class", 12);
    spec.canvas = kv.integer("corpus.canvas", 16);
    spec.seed = kv.u64("seed", 0);
    static const std::set<std::string> schema = {"corpus.shapes", "corpus.colors",
                                                 "corpus.samples_per_class", "corpus.canvas",
                                                 "seed"};
    kv.finish(schema);
    return spec;
}

// ---- pipeline blocks ---------------------------------------------------------

SeedWorld build_world(const ExperimentConfig& cfg, int seed_index) {
    return build_world(cfg, seed_index, cfg.train_loss, cfg.train_tau);
}

SeedWorld build_world(const ExperimentConfig& cfg, int seed_index, LossKind loss, double tau) {
    const std::string tag = "#" + std::to_string(seed_index);
    CorpusSpec corpus_spec = cfg.corpus;
    corpus_spec.seed = substream(cfg.seed, "corpus" + tag);

    ModelConfig model_cfg = cfg.model;
    model_cfg.seed = substream(cfg.seed, "model" + tag);
    model_cfg.init_temperature = tau;

    SeedWorld world{generate_corpus(corpus_spec), VLModel::init(model_cfg), TrainLog{}};

    TrainSpec train;
    train.loss_kind = loss;
    train.tau = tau;
    train.steps = cfg.train_steps;
    train.batch_size =
        std::min<int>(cfg.train_batch, static_cast<int>(world.corpus.split(Split::train).size()));
    train.optimizer.lr = cfg.train_lr;
    train.optimizer.weight_decay = cfg.train_weight_decay;
    train.seed = substream(cfg.seed, "train" + tag);
    world.train_log = pretrain(world.model, world.corpus, train);
    return world;
}

InversionSpec oti_spec(const ExperimentConfig& cfg, const Corpus& corpus, int seed_index) {
    InversionSpec spec;
    spec.count = cfg.oti_count;
    spec.steps = cfg.oti_steps;
    spec.snapshot_period = cfg.snapshot_period;
    if (!cfg.oti_template.empty()) spec.template_tokens = corpus.tokenize(cfg.oti_template);
    spec.seed = substream(cfg.seed, "invert#" + std::to_string(seed_index));
    return spec;
}

InversionSpec ovi_spec(const ExperimentConfig& cfg, int seed_index) {
    InversionSpec spec;
    spec.count = cfg.ovi_count;
    spec.steps = cfg.ovi_steps;
    spec.snapshot_period = cfg.snapshot_period;
    spec.seed = substream(cfg.seed, "invert#" + std::to_string(seed_index));
    return spec;
}

FeatureSet oti_featureset(const VLModel& model, const Corpus& corpus, Split split,
                          const InversionSpec& spec) {
    const auto samples = corpus.split(split);
    std::vector<Tensor> images;
    for (const Sample* s : samples) images.push_back(s->image);
    const auto results = oti_many(model, images, spec);
    FeatureSet fs(Modality::oti, model.config().d);
    for (std::size_t i = 0; i < samples.size(); ++i)
        fs.add(samples[i]->id, samples[i]->label, results[i].feature);
    return fs;
}

FeatureSet ovi_featureset(const VLModel& model, const Corpus& corpus, Split split,
                          const InversionSpec& spec) {
    const auto samples = corpus.split(split);
    std::vector<std::vector<int>> texts;
    for (const Sample* s : samples) texts.push_back(corpus.tokenize(s->captions[0]));
    const auto results = ovi_many(model, texts, spec);
    FeatureSet fs(Modality::ovi, model.config().d);
    for (std::size_t i = 0; i < samples.size(); ++i)
        fs.add(samples[i]->id, samples[i]->label, results[i].feature);
    return fs;
}

double eval_pool_gap(const VLModel& model, const Corpus& corpus) {
    FeatureSet img(Modality::image, model.config().d);
    FeatureSet txt(Modality::text, model.config().d);
    for (Split split : {Split::query, Split::gallery})
        for (const Sample* s : corpus.split(split)) {
            img.add(s->id, s->label, l2_normalize(encode_image(model, s->image)));
            txt.add(s->id, s->label,
                    l2_normalize(encode_text(model, corpus.tokenize(s->captions[0]))));
        }
    return modality_gap(img, txt).magnitude;
}

// ---- preset runners ----------------------------------------------------------

namespace {

struct Report {
    std::string header;
    std::vector<std::string> rows;

    void save(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw IoError("cannot write report '" + path + "'");
        os << header << '\n';
        for (const std::string& r : rows) os << r << '\n';
        if (!os) throw IoError("write failed for report '" + path + "'");
    }
};

std::string seed_dir(const ExperimentConfig& cfg, int k) {
    const std::string dir = (fs::path(cfg.out_dir) / ("seed" + std::to_string(k))).string();
    fs::create_directories(dir);
    return dir;
}

void save_world(const SeedWorld& world, const std::string& dir) {
    world.model.save((fs::path(dir) / "model.ckpt").string());
    world.train_log.save_csv((fs::path(dir) / "train_log.csv").string());
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

Report run_img2img(const ExperimentConfig& cfg) {
    Report report;
    report.header = "seed,baseline_map,oti_map,baseline_rp,oti_rp";
    std::vector<double> base_maps, oti_maps;
    for (int k = 0; k < cfg.eval_seeds; ++k) {
        SeedWorld world = build_world(cfg, k);
        const std::string dir = seed_dir(cfg, k);
        save_world(world, dir);

        FeatureSet gallery = encode_images(world.model, world.corpus, Split::gallery);
        FeatureSet baseline = encode_images(world.model, world.corpus, Split::query);
        FeatureSet oti_q = oti_featureset(world.model, world.corpus, Split::query,
                                          oti_spec(cfg, world.corpus, k));
        gallery.save_csv((fs::path(dir) / "gallery_image.features.csv").string());
        baseline.save_csv((fs::path(dir) / "query_image.features.csv").string());
        oti_q.save_csv((fs::path(dir) / "query_oti.features.csv").string());

        const double bm = retrieval_map(baseline, gallery, false).mean;
        const double om = retrieval_map(oti_q, gallery, false).mean;
        const double br = r_precision(baseline, gallery, false).mean;
        const double orp = r_precision(oti_q, gallery, false).mean;
        base_maps.push_back(bm);
        oti_maps.push_back(om);
        report.rows.push_back(std::to_string(k) + ',' + format_f64(bm) + ',' + format_f64(om) +
                              ',' + format_f64(br) + ',' + format_f64(orp));
    }
    report.rows.push_back("mean," + format_f64(mean_of(base_maps)) + ',' +
                          format_f64(mean_of(oti_maps)) + ",,");
    return report;
}

Report run_txt2txt(const ExperimentConfig& cfg) {
    Report report;
    report.header = "seed,baseline_map,ovi_map,baseline_rp,ovi_rp";
    std::vector<double> base_maps, ovi_maps;
    for (int k = 0; k < cfg.eval_seeds; ++k) {
        SeedWorld world = build_world(cfg, k);
        const std::string dir = seed_dir(cfg, k);
        save_world(world, dir);

        FeatureSet gallery = encode_texts(world.model, world.corpus, Split::gallery, true);
        FeatureSet baseline = encode_texts(world.model, world.corpus, Split::query, false);
        FeatureSet ovi_q =
            ovi_featureset(world.model, world.corpus, Split::query, ovi_spec(cfg, k));
        gallery.save_csv((fs::path(dir) / "gallery_text.features.csv").string());
        baseline.save_csv((fs::path(dir) / "query_text.features.csv").string());
        ovi_q.save_csv((fs::path(dir) / "query_ovi.features.csv").string());

        const double bm = retrieval_map(baseline, gallery, false).mean;
        const double om = retrieval_map(ovi_q, gallery, false).mean;
        const double br = r_precision(baseline, gallery, false).mean;
        const double orp = r_precision(ovi_q, gallery, false).mean;
        base_maps.push_back(bm);
        ovi_maps.push_back(om);
        report.rows.push_back(std::to_string(k) + ',' + format_f64(bm) + ',' + format_f64(om) +
                              ',' + format_f64(br) + ',' + format_f64(orp));
    }
    report.rows.push_back("mean," + format_f64(mean_of(base_maps)) + ',' +
                          format_f64(mean_of(ovi_maps)) + ",,");
    return report;
}

Report run_zeroshot(const ExperimentConfig& cfg) {
    Report report;
    report.header = "seed,baseline_acc,oti_acc,ovi_prompt_acc";
    std::vector<double> base, oti_acc, ovi_acc;
    for (int k = 0; k < cfg.eval_seeds; ++k) {
        SeedWorld world = build_world(cfg, k);
        const std::string dir = seed_dir(cfg, k);
        save_world(world, dir);

        FeatureSet images = encode_images(world.model, world.corpus, Split::query);
        FeatureSet prompts = encode_class_prompts(world.model, world.corpus);
        FeatureSet oti_q = oti_featureset(world.model, world.corpus, Split::query,
                                          oti_spec(cfg, world.corpus, k));

        // prompts inverted into the image space, one per class
        InversionSpec ospec = ovi_spec(cfg, k);
        std::vector<std::vector<int>> prompt_tokens;
        for (const std::string& p : world.corpus.class_prompts())
            prompt_tokens.push_back(world.corpus.tokenize(p));
        const auto inv = ovi_many(world.model, prompt_tokens, ospec);
        FeatureSet ovi_prompts(Modality::ovi, world.model.config().d);
        for (std::size_t c = 0; c < inv.size(); ++c)
            ovi_prompts.add(static_cast<long>(c), world.corpus.class_names[c], inv[c].feature);

        const double b = zero_shot_classify(images, prompts, cfg.eval_tau).accuracy;
        const double o = zero_shot_classify(oti_q, prompts, cfg.eval_tau).accuracy;
        const double v = zero_shot_classify(images, ovi_prompts, cfg.eval_tau).accuracy;
        base.push_back(b);
        oti_acc.push_back(o);
        ovi_acc.push_back(v);
        report.rows.push_back(std::to_string(k) + ',' + format_f64(b) + ',' + format_f64(o) +
                              ',' + format_f64(v));
    }
    report.rows.push_back("mean," + format_f64(mean_of(base)) + ',' + format_f64(mean_of(oti_acc)) +
                          ',' + format_f64(mean_of(ovi_acc)));
    return report;
}

Report run_temperature_gap(const ExperimentConfig& cfg) {
    Report report;
    report.header = "seed,gap_pretrain,gap_tau_a,gap_tau_b";
    std::vector<double> gap_a, gap_b;
    for (int k = 0; k < cfg.eval_seeds; ++k) {
        SeedWorld world = build_world(cfg, k);
        const std::string dir = seed_dir(cfg, k);
        save_world(world, dir);
        const double gap0 = eval_pool_gap(world.model, world.corpus);

        VLModel branch_a = world.model;  // tau_a (gap-closing) branch
        TrainLog log_a = finetune_projections(branch_a, world.corpus, cfg.finetune_tau_a,
                                              cfg.finetune_steps,
                                              substream(cfg.seed, "ft-a#" + std::to_string(k)),
                                              cfg.finetune_lr, cfg.finetune_batch);
        branch_a.save((fs::path(dir) / "model_tau_a.ckpt").string());
        log_a.save_csv((fs::path(dir) / "finetune_tau_a.csv").string());

        VLModel branch_b = world.model;
        TrainLog log_b = finetune_projections(branch_b, world.corpus, cfg.finetune_tau_b,
                                              cfg.finetune_steps,
                                              substream(cfg.seed, "ft-b#" + std::to_string(k)),
                                              cfg.finetune_lr, cfg.finetune_batch);
        branch_b.save((fs::path(dir) / "model_tau_b.ckpt").string());
        log_b.save_csv((fs::path(dir) / "finetune_tau_b.csv").string());

        const double ga = eval_pool_gap(branch_a, world.corpus);
        const double gb = eval_pool_gap(branch_b, world.corpus);
        gap_a.push_back(ga);
        gap_b.push_back(gb);
        report.rows.push_back(std::to_string(k) + ',' + format_f64(gap0) + ',' + format_f64(ga) +
                              ',' + format_f64(gb));
    }
    report.rows.push_back("mean," + std::string("") + ',' + format_f64(mean_of(gap_a)) + ',' +
                          format_f64(mean_of(gap_b)));
    return report;
}

Report run_slip_parity(const ExperimentConfig& cfg) {
    Report report;
    report.header = "seed,slip_baseline_map,slip_oti_map,slip_gap,clip_gap";
    std::vector<double> base_maps, oti_maps, slip_gaps, clip_gaps;
    for (int k = 0; k < cfg.eval_seeds; ++k) {
        SeedWorld slip_world = build_world(cfg, k, LossKind::slip, cfg.train_tau);
        const std::string dir = seed_dir(cfg, k);
        save_world(slip_world, dir);

        FeatureSet gallery = encode_images(slip_world.model, slip_world.corpus, Split::gallery);
        FeatureSet baseline = encode_images(slip_world.model, slip_world.corpus, Split::query);
        FeatureSet oti_q = oti_featureset(slip_world.model, slip_world.corpus, Split::query,
                                          oti_spec(cfg, slip_world.corpus, k));
        const double bm = retrieval_map(baseline, gallery, false).mean;
        const double om = retrieval_map(oti_q, gallery, false).mean;
        const double sgap = eval_pool_gap(slip_world.model, slip_world.corpus);

        SeedWorld clip_world = build_world(cfg, k, LossKind::clip, cfg.train_tau);
        const double cgap = eval_pool_gap(clip_world.model, clip_world.corpus);

        base_maps.push_back(bm);
        oti_maps.push_back(om);
        slip_gaps.push_back(sgap);
        clip_gaps.push_back(cgap);
        report.rows.push_back(std::to_string(k) + ',' + format_f64(bm) + ',' + format_f64(om) +
                              ',' + format_f64(sgap) + ',' + format_f64(cgap));
    }
    report.rows.push_back("mean," + format_f64(mean_of(base_maps)) + ',' +
                          format_f64(mean_of(oti_maps)) + ',' + format_f64(mean_of(slip_gaps)) +
                          ',' + format_f64(mean_of(clip_gaps)));
    return report;
}

Report run_misalignment(const ExperimentConfig& cfg) {
    if (cfg.corpus.num_shapes * cfg.corpus.num_colors != 2)
        throw InvalidArgument("misalignment preset needs a corpus with exactly 2 classes");
    Report report;
    report.header = "seed,kept_a,kept_b,inter_rp,intra_map,intra_rp";
    std::vector<double> inter, intra_map, intra_rp;
    for (int k = 0; k < cfg.eval_seeds; ++k) {
        SeedWorld world = build_world(cfg, k);
        save_world(world, seed_dir(cfg, k));
        std::vector<std::vector<int>> prompts;
        for (const std::string& p : world.corpus.class_prompts())
            prompts.push_back(world.corpus.tokenize(p));
        const ProbeReport probe = misalignment_probe(world.model, world.corpus, prompts);
        inter.push_back(probe.inter_modal_r_precision);
        intra_map.push_back(probe.intra_modal_map);
        intra_rp.push_back(probe.intra_modal_r_precision);
        report.rows.push_back(std::to_string(k) + ',' + std::to_string(probe.kept_per_class[0]) +
                              ',' + std::to_string(probe.kept_per_class[1]) + ',' +
                              format_f64(probe.inter_modal_r_precision) + ',' +
                              format_f64(probe.intra_modal_map) + ',' +
                              format_f64(probe.intra_modal_r_precision));
    }
    report.rows.push_back("mean,,," + format_f64(mean_of(inter)) + ',' +
                          format_f64(mean_of(intra_map)) + ',' + format_f64(mean_of(intra_rp)));
    return report;
}

Report run_drift(const ExperimentConfig& cfg) {
    SeedWorld world = build_world(cfg, 0);
    const std::string dir = seed_dir(cfg, 0);
    save_world(world, dir);

    auto queries = world.corpus.split(Split::query);
    const int n = std::min<int>(cfg.drift_count, static_cast<int>(queries.size()));
    std::vector<Tensor> images;
    FeatureSet native(Modality::image, cfg.model.d);
    for (int i = 0; i < n; ++i) {
        images.push_back(queries[static_cast<std::size_t>(i)]->image);
        native.add(queries[static_cast<std::size_t>(i)]->id,
                   queries[static_cast<std::size_t>(i)]->label,
                   l2_normalize(encode_image(world.model, queries[static_cast<std::size_t>(i)]->image)));
    }

    InversionSpec high = oti_spec(cfg, world.corpus, 0);
    high.count = 8;
    high.steps = cfg.drift_steps;
    InversionSpec low = high;
    low.count = 1;
    const auto res_high = oti_many(world.model, images, high);
    const auto res_low = oti_many(world.model, images, low);

    // trajectory CSV: per-snapshot matched similarity mean plus mean losses
    Report traj;
    traj.header = "step,loss_r8,loss_r1,matched_mean_r8";
    const std::size_t n_snapshots = res_high[0].snapshots.size();
    for (std::size_t s = 0; s < n_snapshots; ++s) {
        const int step = res_high[0].snapshots[s].first;
        FeatureSet snap(Modality::oti, cfg.model.d);
        for (int i = 0; i < n; ++i)
            snap.add(native.id(i), native.label(i),
                     res_high[static_cast<std::size_t>(i)].snapshots[s].second);
        const double mm = similarity_histogram(snap, native, 40, Pairing::matched_pairs).mean;
        double lh = 0.0, ll = 0.0;
        const int idx = std::min(step, cfg.drift_steps - 1);
        for (int i = 0; i < n; ++i) {
            lh += res_high[static_cast<std::size_t>(i)].trajectory[static_cast<std::size_t>(idx)] / n;
            ll += res_low[static_cast<std::size_t>(i)].trajectory[static_cast<std::size_t>(idx)] / n;
        }
        traj.rows.push_back(std::to_string(step) + ',' + format_f64(lh) + ',' + format_f64(ll) +
                            ',' + format_f64(mm));
    }
    traj.save((fs::path(cfg.out_dir) / "drift_trajectory.csv").string());

    double final_high = 0.0, final_low = 0.0, cos_high = 0.0;
    FeatureSet final_set(Modality::oti, cfg.model.d);
    for (int i = 0; i < n; ++i) {
        final_high += res_high[static_cast<std::size_t>(i)].trajectory.back() / n;
        final_low += res_low[static_cast<std::size_t>(i)].trajectory.back() / n;
        cos_high += cosine_similarity(res_high[static_cast<std::size_t>(i)].feature,
                                      native.row_tensor(i)) / n;
        final_set.add(native.id(i), native.label(i), res_high[static_cast<std::size_t>(i)].feature);
    }
    // matched-mean at step 10 (snapshot index 1 when the period is 10)
    double matched_step10 = 0.0, matched_final = 0.0;
    {
        FeatureSet snap10(Modality::oti, cfg.model.d);
        for (int i = 0; i < n; ++i) {
            const auto& snaps = res_high[static_cast<std::size_t>(i)].snapshots;
            const Tensor* at10 = nullptr;
            for (const auto& [step, feat] : snaps)
                if (step == 10) at10 = &feat;
            if (!at10) throw InvalidArgument("drift: missing step-10 snapshot");
            snap10.add(native.id(i), native.label(i), *at10);
        }
        matched_step10 = similarity_histogram(snap10, native, 40, Pairing::matched_pairs).mean;
        matched_final = similarity_histogram(final_set, native, 40, Pairing::matched_pairs).mean;
    }

    Report report;
    report.header = "metric,value";
    report.rows.push_back("final_loss_r8," + format_f64(final_high));
    report.rows.push_back("final_loss_r1," + format_f64(final_low));
    report.rows.push_back("final_cos_r8," + format_f64(cos_high));
    report.rows.push_back("matched_mean_step10," + format_f64(matched_step10));
    report.rows.push_back("matched_mean_final," + format_f64(matched_final));
    return report;
}

Report run_mixing(const ExperimentConfig& cfg) {
    Report report;
    report.header = "alpha,seed,map";
    std::map<double, std::vector<double>> by_alpha;
    for (int k = 0; k < cfg.eval_seeds; ++k) {
        SeedWorld world = build_world(cfg, k);
        save_world(world, seed_dir(cfg, k));
        FeatureSet gallery = encode_images(world.model, world.corpus, Split::gallery);
        FeatureSet baseline = encode_images(world.model, world.corpus, Split::query);
        FeatureSet oti_q = oti_featureset(world.model, world.corpus, Split::query,
                                          oti_spec(cfg, world.corpus, k));
        for (double alpha : cfg.alphas) {
            FeatureSet mixed(Modality::oti, cfg.model.d);
            for (int i = 0; i < baseline.size(); ++i)
                mixed.add(baseline.id(i), baseline.label(i),
                          combine_features(baseline.row_tensor(i), oti_q.row_tensor(i), alpha));
            const double m = retrieval_map(mixed, gallery, false).mean;
            by_alpha[alpha].push_back(m);
            report.rows.push_back(format_f64(alpha) + ',' + std::to_string(k) + ',' +
                                  format_f64(m));
        }
    }
    for (const auto& [alpha, maps] : by_alpha)
        report.rows.push_back(format_f64(alpha) + ",mean," + format_f64(mean_of(maps)));
    return report;
}

}  // namespace

std::string run_experiment(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);

    Report report;
    if (cfg.kind == "img2img")
        report = run_img2img(cfg);
    else if (cfg.kind == "txt2txt")
        report = run_txt2txt(cfg);
    else if (cfg.kind == "zeroshot")
        report = run_zeroshot(cfg);
    else if (cfg.kind == "temperature-gap")
        report = run_temperature_gap(cfg);
    else if (cfg.kind == "slip-parity")
        report = run_slip_parity(cfg);
    else if (cfg.kind == "misalignment")
        report = run_misalignment(cfg);
    else if (cfg.kind == "drift")
        report = run_drift(cfg);
    else if (cfg.kind == "mixing")
        report = run_mixing(cfg);
    else
        throw InvalidArgument("unknown experiment kind '" + cfg.kind + "'");

    const std::string report_path = (fs::path(cfg.out_dir) / "report.csv").string();
    report.save(report_path);

    std::ofstream manifest(fs::path(cfg.out_dir) / "manifest.txt");
    if (!manifest) throw IoError("cannot write manifest under '" + cfg.out_dir + "'");
    char digest_hex[17];
    std::snprintf(digest_hex, sizeof(digest_hex), "%016llx",
                  static_cast<unsigned long long>(cfg.config_digest));
    manifest << "xgap-experiment 1\n";
    manifest << "version 0.1.0\n";
    manifest << "experiment " << cfg.kind << "\n";
    manifest << "config-digest " << digest_hex << "\n";
    manifest << "seed " << cfg.seed << "\n";
    manifest << "eval-seeds " << cfg.eval_seeds << "\n";
    manifest << "report report.csv\n";
    return report_path;
}

}  // namespace xgap
