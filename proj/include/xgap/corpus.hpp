#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "xgap/tensor.hpp"

namespace xgap {

// Shape-world scene: class label is the (shape, color) pair; jitters are
// bounded so the shape stays inside the canvas.
struct Scene {
    int shape_id = 0;   // square / circle / triangle / cross
    int color_id = 0;   // red / green / blue
    int dx = 0;         // position jitter, pixels
    int dy = 0;
    int half_size = 4;  // base 4 plus size jitter
};

enum class Split { train, query, gallery };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct Sample {
    long id = 0;
    Tensor image;  // (3, H, W), values in [0,1]
    std::vector<std::string> captions;  // >= 2 paraphrases of the same scene
    std::string label;                  // "<color>-<shape>"
    Split split = Split::train;
};

struct CorpusSpec {
    int num_shapes = 4;          // <= 4
    int num_colors = 3;          // <= 3
    int samples_per_class = 20;  // >= 4
    int canvas = 16;             // square canvas, 3 channels
    std::uint64_t seed = 0;
};

class Corpus {
public:
    std::vector<Sample> samples;
    std::vector<std::string> vocab;
    std::vector<std::string> class_names;  // label-id order
    int canvas = 16;
    std::uint64_t seed = 0;

    std::vector<int> tokenize(const std::string& text) const;
    std::string detokenize(const std::vector<int>& ids) const;

    std::vector<const Sample*> split(Split s) const;
    int class_index(const std::string& label) const;

    // Zero-shot prompt per class, "a photo of a <color> <shape>".
    std::vector<std::string> class_prompts() const;

    std::uint64_t digest() const;

    // Directory layout: manifest.txt (text) + images.bin (XGAP archive).
    void save(const std::string& dir) const;
    static Corpus load(const std::string& dir);
};

Corpus generate_corpus(const CorpusSpec& spec);

// Deterministic rasterization; the seed drives only the uniform background
// level so scenes differing in color differ only on shape pixels.
Tensor render_image(const Scene& scene, int canvas, std::uint64_t seed);

// Seeded crop-and-resize (scale in [0.6, 1.0]) plus brightness jitter
// (+-0.2, clipped); output shape equals input shape.
Tensor augment(const Tensor& image, std::uint64_t seed);

const std::vector<std::string>& shape_names();
const std::vector<std::string>& color_names();

}  // namespace xgap
