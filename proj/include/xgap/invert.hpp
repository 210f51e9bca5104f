#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "xgap/adamw.hpp"
#include "xgap/model.hpp"
#include "xgap/tensor.hpp"

namespace xgap {

// Shared knobs for OTI (count = R pseudo-tokens) and OVI (count = P
// pseudo-patches). Template tokens apply to OTI only; the optional suffix
// lets the "we see <v*> in this photo" ablation place tokens after the
// pseudo-tokens while the default stays prefix-only.
struct InversionSpec {
    int count = 1;
    int steps = 150;  // OVI runs default to 1000
    std::vector<int> template_tokens;
    std::vector<int> template_suffix_tokens;
    AdamWConfig optimizer{0.02, 0.9, 0.999, 1e-8, 0.01};
    double init_scale = 0.02;
    int snapshot_period = 10;  // 0 disables snapshots
    std::uint64_t seed = 0;
};

struct InversionResult {
    Tensor feature;                  // unit-normalized, length d
    Tensor learned;                  // v* (R,d) or w* (P,d)
    std::vector<double> trajectory;  // cosine loss per step, values in [0,2]
    std::vector<std::pair<int, Tensor>> snapshots;  // (step, unit feature)
    std::uint64_t digest_before = 0;
    std::uint64_t digest_after = 0;
};

// Image -> text-side feature: optimizes pseudo-tokens appended to the
// template so the frozen text encoder matches the image feature under
// 1 - cosine.
InversionResult oti(const VLModel& model, const Tensor& image, const InversionSpec& spec);

// Text -> image-side feature: optimizes P pseudo-patches repeated across the
// U patch slots (nearest-neighbor map) through the frozen image encoder.
InversionResult ovi(const VLModel& model, const std::vector<int>& text_tokens,
                    const InversionSpec& spec);

// Parallel drivers; item k runs with an independent seed substream derived
// from spec.seed, so results do not depend on scheduling.
std::vector<InversionResult> oti_many(const VLModel& model, const std::vector<Tensor>& images,
                                      const InversionSpec& spec);
std::vector<InversionResult> ovi_many(const VLModel& model,
                                      const std::vector<std::vector<int>>& texts,
                                      const InversionSpec& spec);

// Slot j in [0,U) maps to pseudo-patch floor(j*P/U); counts[i] is the number
// of repeats H_i, summing to U.
struct RepeatMap {
    std::vector<int> slot_to_patch;
    std::vector<int> counts;
};
RepeatMap nn_repeat_map(int num_pseudo, int num_slots);

// Single-layer linear adapter between the two feature spaces.
struct Adapter {
    enum class Direction { image_to_text, text_to_image };
    Tensor weight;  // (d, d), applied as x * W
    Tensor bias;    // (d)
    Direction direction = Direction::image_to_text;
};

struct AdapterHyper {
    int steps = 300;
    int batch_size = 32;
    AdamWConfig optimizer{0.02, 0.9, 0.999, 1e-8, 0.0};
    double tau = 0.07;  // for the contrastive term
    double init_scale = 0.02;
    std::uint64_t seed = 0;
};

// Minimizes mean cosine loss between adapter(source) and target plus a CLIP
// contrastive term over the batch (both weighted 1.0).
Adapter train_adapter(const std::vector<std::pair<Tensor, Tensor>>& pairs,
                      Adapter::Direction direction, const AdapterHyper& hyper);

// l2_normalize(x * W + b)
Tensor apply_adapter(const Adapter& adapter, const Tensor& feature);

// l2_normalize(alpha * psi_t + (1 - alpha) * psi_i); endpoints return the
// inputs exactly.
Tensor combine_features(const Tensor& psi_i, const Tensor& psi_t, double alpha);

}  // namespace xgap
