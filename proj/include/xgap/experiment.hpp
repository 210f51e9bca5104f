#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xgap/corpus.hpp"
#include "xgap/featureset.hpp"
#include "xgap/invert.hpp"
#include "xgap/model.hpp"
#include "xgap/train.hpp"

namespace xgap {

// Typed view of an experiment configuration file (key = value lines, '#'
// comments, strict schema: unknown keys are rejected, missing required keys
// reported by name). Every stage seed is derived from the one global seed.
struct ExperimentConfig {
    std::string kind;  // img2img | txt2txt | zeroshot | temperature-gap |
                       // slip-parity | misalignment | drift | mixing
    std::uint64_t seed = 0;
    std::string out_dir;

    CorpusSpec corpus;    // per-seed corpora derive their seed from the global
    ModelConfig model;
    LossKind train_loss = LossKind::clip;
    double train_tau = 0.01;
    int train_steps = 1500;
    int train_batch = 16;
    double train_lr = 3e-4;
    double train_weight_decay = 0.01;

    int finetune_steps = 300;
    double finetune_lr = 3e-3;
    double finetune_tau_a = 1.0;
    double finetune_tau_b = 0.01;
    int finetune_batch = 32;

    int oti_count = 1;
    int oti_steps = 150;
    int ovi_count = 2;
    int ovi_steps = 500;
    int snapshot_period = 10;
    std::string oti_template = "a photo of";
    int drift_count = 8;
    int drift_steps = 2000;

    int eval_seeds = 5;
    std::vector<double> alphas = {0.0, 0.25, 0.5, 0.75, 1.0};
    double eval_tau = 0.01;
    int eval_samples = 12;

    std::uint64_t config_digest = 0;  // FNV of the raw file bytes
};

ExperimentConfig parse_experiment_config(const std::string& path);

// Corpus spec files for `gen-data` share the corpus.* schema subset.
CorpusSpec parse_corpus_spec(const std::string& path);

// ---- pipeline building blocks (shared with the acceptance suite) ------------

struct SeedWorld {
    Corpus corpus;
    VLModel model;
    TrainLog train_log;
};

// corpus + model init + pretraining for the k-th seed, with the loss kind and
// temperature taken from the config unless overridden.
SeedWorld build_world(const ExperimentConfig& cfg, int seed_index);
SeedWorld build_world(const ExperimentConfig& cfg, int seed_index, LossKind loss, double tau);

InversionSpec oti_spec(const ExperimentConfig& cfg, const Corpus& corpus, int seed_index);
InversionSpec ovi_spec(const ExperimentConfig& cfg, int seed_index);

// Inverted feature sets over a corpus split (parallel across queries).
FeatureSet oti_featureset(const VLModel& model, const Corpus& corpus, Split split,
                          const InversionSpec& spec);
FeatureSet ovi_featureset(const VLModel& model, const Corpus& corpus, Split split,
                          const InversionSpec& spec);

// Gap magnitude between image and text features of the query+gallery pool.
double eval_pool_gap(const VLModel& model, const Corpus& corpus);

// Runs the configured preset end to end, writing checkpoints, feature sets,
// report.csv and a manifest under cfg.out_dir. Returns the report path.
std::string run_experiment(const ExperimentConfig& cfg);

}  // namespace xgap
