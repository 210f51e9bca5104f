#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xgap/adamw.hpp"
#include "xgap/corpus.hpp"
#include "xgap/model.hpp"

namespace xgap {

enum class LossKind { clip, siglip, simclr_only, slip };

const char* loss_kind_name(LossKind k);
LossKind loss_kind_from_name(const std::string& name);

struct TrainSpec {
    LossKind loss_kind = LossKind::clip;
    double tau = 0.01;
    int steps = 2000;
    int batch_size = 64;
    AdamWConfig optimizer{1e-3, 0.9, 0.999, 1e-8, 0.01};
    std::uint64_t seed = 0;
    Scope trainable_scope = Scope::all;
    int gap_probe_period = 0;  // 0 -> max(1, steps/10)
};

struct TrainLogRow {
    int step = 0;
    double loss = 0.0;
    double clip_component = 0.0;
    double simclr_component = 0.0;
    bool has_gap = false;
    double gap = 0.0;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;  // one row per step
    std::uint64_t final_digest = 0;

    double first_gap() const;
    double last_gap() const;
    void save_csv(const std::string& path) const;
};

// Seeded shuffled minibatches, AdamW on the selected scope. Aborts with the
// step index if the loss goes non-finite.
TrainLog pretrain(VLModel& model, const Corpus& corpus, const TrainSpec& spec);

// Projection-only CLIP fine-tuning at the given temperature (the modality-gap
// study protocol). lr defaults to a tenth of the full-training rate.
TrainLog finetune_projections(VLModel& model, const Corpus& corpus, double tau, int steps,
                              std::uint64_t seed, double lr = 1e-4, int batch_size = 32);

// Gap magnitude over a fixed probe subset (first train samples, first
// captions), used for the periodic TrainLog measurements.
double probe_gap_magnitude(const VLModel& model, const Corpus& corpus, int max_samples = 32);

}  // namespace xgap
