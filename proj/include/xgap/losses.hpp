#pragma once

#include <cstdint>
#include <vector>

#include "xgap/corpus.hpp"
#include "xgap/graph.hpp"
#include "xgap/model.hpp"

namespace xgap {

// Contrastive objectives over (N, d) feature matrices. Rows need not be
// pre-normalized; cosine similarity is taken inside. All three are
// permutation-symmetric in the pair index and non-negative.

// Symmetric multi-class N-pair loss: mean over pairs of the image->text and
// text->image log-softmax terms on the cosine/tau matrix.
Var clip_loss_g(Var image_features, Var text_features, double tau);

// Pairwise sigmoid loss with labels +1 on the diagonal and -1 elsewhere,
// averaged over all N^2 pairs.
Var siglip_loss_g(Var image_features, Var text_features, double tau, double bias);

// 2N-anchor view-contrastive loss; self-pairs are excluded from the
// denominators. Requires N >= 2 so every anchor has a negative.
Var simclr_loss_g(Var view1_features, Var view2_features, double tau);

// Value-only wrappers (build a throwaway graph).
double clip_loss(const Tensor& image_features, const Tensor& text_features, double tau);
double siglip_loss(const Tensor& image_features, const Tensor& text_features, double tau,
                   double bias);
double simclr_loss(const Tensor& view1_features, const Tensor& view2_features, double tau);

// Stacks rank-1 feature vars into an (N, d) matrix.
Var stack_features(const std::vector<Var>& features);

// SLIP batch: originals plus two augmented views per image.
struct SlipBatch {
    std::vector<Tensor> images;
    std::vector<std::vector<int>> captions;  // tokenized, one per image
    std::vector<Tensor> views1;
    std::vector<Tensor> views2;
};

// Builds the two augmented views from the batch samples.
SlipBatch make_slip_batch(const Corpus& corpus, const std::vector<const Sample*>& batch,
                          const std::vector<std::vector<int>>& captions,
                          std::uint64_t view_seed);

struct SlipParts {
    double total = 0.0;
    double clip = 0.0;
    double simclr = 0.0;
};

// L_CLIP on the originals plus L_SimCLR on the view pair, reported separately.
SlipParts slip_loss(const VLModel& model, const SlipBatch& batch, double tau);

}  // namespace xgap
