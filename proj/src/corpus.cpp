#include "xgap/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "xgap/error.hpp"
#include "xgap/io.hpp"
#include "xgap/rng.hpp"

namespace xgap {

namespace fs = std::filesystem;

const std::vector<std::string>& shape_names() {
    static const std::vector<std::string> v = {"square", "circle", "triangle", "cross"};
    return v;
}

const std::vector<std::string>& color_names() {
    static const std::vector<std::string> v = {"red", "green", "blue"};
    return v;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::query: return "query";
        case Split::gallery: return "gallery";
    }
    return "?";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "query") return Split::query;
    if (name == "gallery") return Split::gallery;
    throw IoError("unknown split '" + name + "'");
}

namespace {

// paraphrase frames; slots are size, color, shape in order
const char* kTemplates[3] = {"a photo of a % % %", "an image of a % % %", "we see a % % %"};

const char* kSizeWords[3] = {"small", "medium", "large"};

std::string size_word(int half_size) {
    // scene half sizes run 3..5
    return kSizeWords[std::clamp(half_size - 3, 0, 2)];
}

std::string instantiate(const char* tmpl, const std::string& size, const std::string& color,
                        const std::string& shape) {
    std::string out;
    int slot = 0;
    for (const char* p = tmpl; *p; ++p) {
        if (*p == '%') {
            out += slot == 0 ? size : (slot == 1 ? color : shape);
            ++slot;
        } else {
            out += *p;
        }
    }
    return out;
}

bool shape_covers(const Scene& s, int x, int y) {
    const int cx = 0, cy = 0;  // caller passes coordinates relative to the center
    const int dx = x - cx, dy = y - cy;
    const int h = s.half_size;
    switch (s.shape_id) {
        case 0:  // square
            return std::abs(dx) <= h && std::abs(dy) <= h;
        case 1:  // circle
            return dx * dx + dy * dy <= h * h;
        case 2: {  // upward triangle
            if (dy < -h || dy > h) return false;
            const double halfwidth = static_cast<double>(h) * (dy + h) / (2.0 * h);
            return std::abs(dx) <= halfwidth;
        }
        case 3: {  // cross of two bars
            const int bar = std::max(1, h / 3);
            return (std::abs(dx) <= bar && std::abs(dy) <= h) ||
                   (std::abs(dy) <= bar && std::abs(dx) <= h);
        }
        default:
            throw InvalidArgument("unknown shape id " + std::to_string(s.shape_id));
    }
}

double color_channel(int color_id, int channel) {
    static const double palette[3][3] = {{1.0, 0.1, 0.1}, {0.1, 0.9, 0.15}, {0.15, 0.25, 1.0}};
    if (color_id < 0 || color_id > 2) throw InvalidArgument("unknown color id");
    return palette[color_id][channel];
}

}  // namespace

Tensor render_image(const Scene& scene, int canvas, std::uint64_t seed) {
    if (canvas < 8) throw InvalidArgument("render_image: canvas too small for shapes");
    if (scene.half_size < 1 || scene.half_size > canvas / 2 - 2)
        throw InvalidArgument("render_image: shape does not fit the canvas");
    const int c0 = canvas / 2;
    const int cx = c0 + scene.dx, cy = c0 + scene.dy;
    if (cx - scene.half_size < 0 || cx + scene.half_size >= canvas || cy - scene.half_size < 0 ||
        cy + scene.half_size >= canvas)
        throw InvalidArgument("render_image: jitter pushes the shape off the canvas");

    Rng rng(substream(seed, "render"));
    const double background = 0.06 + 0.14 * rng.uniform();  // uniform across the canvas

    Tensor img({3, canvas, canvas});
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < canvas; ++y)
            for (int x = 0; x < canvas; ++x) {
                const bool inside = shape_covers(scene, x - cx, y - cy);
                img[(static_cast<std::size_t>(ch) * canvas + y) * canvas + x] =
                    inside ? color_channel(scene.color_id, ch) : background;
            }
    return img;
}

Tensor augment(const Tensor& image, std::uint64_t seed) {
    if (image.rank() != 3) throw InvalidArgument("augment: image must be (C,H,W)");
    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
    Rng rng(substream(seed, "augment"));

    const double scale = rng.uniform(0.6, 1.0);
    const int ch = std::max(1, static_cast<int>(std::lround(H * scale)));
    const int cw = std::max(1, static_cast<int>(std::lround(W * scale)));
    const int y0 = rng.uniform_int(H - ch + 1);
    const int x0 = rng.uniform_int(W - cw + 1);
    const double bright = rng.uniform(-0.2, 0.2);

    auto px = [&](int c, int y, int x) {
        return image[(static_cast<std::size_t>(c) * H + y) * W + x];
    };

    Tensor out({C, H, W});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                // bilinear resample of the crop back to the full canvas
                const double sy = (y + 0.5) * ch / H - 0.5;
                const double sx = (x + 0.5) * cw / W - 0.5;
                const int iy = static_cast<int>(std::floor(sy));
                const int ix = static_cast<int>(std::floor(sx));
                const double fy = sy - iy, fx = sx - ix;
                auto sample = [&](int yy, int xx) {
                    yy = std::clamp(yy, 0, ch - 1);
                    xx = std::clamp(xx, 0, cw - 1);
                    return px(c, y0 + yy, x0 + xx);
                };
                double v = (1 - fy) * ((1 - fx) * sample(iy, ix) + fx * sample(iy, ix + 1)) +
                           fy * ((1 - fx) * sample(iy + 1, ix) + fx * sample(iy + 1, ix + 1));
                v += bright;
                out[(static_cast<std::size_t>(c) * H + y) * W + x] = std::clamp(v, 0.0, 1.0);
            }
    return out;
}

Corpus generate_corpus(const CorpusSpec& spec) {
    if (spec.num_shapes < 1 || spec.num_shapes > static_cast<int>(shape_names().size()))
        throw InvalidArgument("generate_corpus: num_shapes out of range");
    if (spec.num_colors < 1 || spec.num_colors > static_cast<int>(color_names().size()))
        throw InvalidArgument("generate_corpus: num_colors out of range");
    if (spec.num_shapes * spec.num_colors < 2)
        throw InvalidArgument("generate_corpus: need at least 2 classes");
    if (spec.samples_per_class < 4)
        throw InvalidArgument("generate_corpus: need at least 4 samples per class");
    if (spec.canvas < 12) throw InvalidArgument("generate_corpus: canvas too small for shapes");

    Corpus corpus;
    corpus.canvas = spec.canvas;
    corpus.seed = spec.seed;

    // deterministic vocabulary: every template, size and class word, sorted
    std::set<std::string> words;
    for (const char* t : kTemplates)
        for (const std::string& w : split_ws(instantiate(t, "small", "red", "square")))
            words.insert(w);
    for (const char* s : kSizeWords) words.insert(s);
    for (int s = 0; s < spec.num_shapes; ++s) words.insert(shape_names()[static_cast<std::size_t>(s)]);
    for (int c = 0; c < spec.num_colors; ++c) words.insert(color_names()[static_cast<std::size_t>(c)]);
    corpus.vocab.assign(words.begin(), words.end());

    Rng scene_rng(substream(spec.seed, "scenes"));
    Rng caption_rng(substream(spec.seed, "captions"));
    Rng split_rng(substream(spec.seed, "splits"));

    long next_id = 0;
    for (int s = 0; s < spec.num_shapes; ++s) {
        for (int c = 0; c < spec.num_colors; ++c) {
            const std::string shape = shape_names()[static_cast<std::size_t>(s)];
            const std::string color = color_names()[static_cast<std::size_t>(c)];
            const std::string label = color + "-" + shape;
            corpus.class_names.push_back(label);

            std::vector<Sample> batch;
            for (int k = 0; k < spec.samples_per_class; ++k) {
                Scene scene;
                scene.shape_id = s;
                scene.color_id = c;
                scene.dx = scene_rng.uniform_int(5) - 2;
                scene.dy = scene_rng.uniform_int(5) - 2;
                scene.half_size = 3 + scene_rng.uniform_int(3);  // 3..5

                Sample sample;
                sample.id = next_id++;
                sample.label = label;
                sample.image = render_image(scene, spec.canvas,
                                            substream(spec.seed, "render" + std::to_string(sample.id)));

                // two distinct paraphrases of the same scene
                const std::string size = size_word(scene.half_size);
                const int first = caption_rng.uniform_int(3);
                int second = caption_rng.uniform_int(2);
                if (second >= first) ++second;
                sample.captions.push_back(instantiate(kTemplates[first], size, color, shape));
                sample.captions.push_back(instantiate(kTemplates[second], size, color, shape));
                batch.push_back(std::move(sample));
            }

            // split assignment: shuffle within the class, then carve query and
            // gallery off the front so every class lands in both
            std::vector<int> order(batch.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
            for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
                std::swap(order[static_cast<std::size_t>(i)],
                          order[static_cast<std::size_t>(split_rng.uniform_int(i + 1))]);
            const int n_query = std::max(1, spec.samples_per_class / 5);
            const int n_gallery = std::max(2, spec.samples_per_class / 4);
            for (std::size_t i = 0; i < order.size(); ++i) {
                Split sp = Split::train;
                if (static_cast<int>(i) < n_query)
                    sp = Split::query;
                else if (static_cast<int>(i) < n_query + n_gallery)
                    sp = Split::gallery;
                batch[static_cast<std::size_t>(order[i])].split = sp;
            }
            for (auto& smp : batch) corpus.samples.push_back(std::move(smp));
        }
    }
    return corpus;
}

std::vector<int> Corpus::tokenize(const std::string& text) const {
    std::vector<int> ids;
    for (const std::string& w : split_ws(text)) {
        const auto it = std::lower_bound(vocab.begin(), vocab.end(), w);
        if (it == vocab.end() || *it != w)
            throw InvalidArgument("tokenize: unknown word '" + w + "'");
        ids.push_back(static_cast<int>(it - vocab.begin()));
    }
    return ids;
}

std::string Corpus::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= static_cast<int>(vocab.size()))
            throw InvalidArgument("detokenize: id out of range");
        if (i) out += ' ';
        out += vocab[static_cast<std::size_t>(ids[i])];
    }
    return out;
}

std::vector<const Sample*> Corpus::split(Split s) const {
    std::vector<const Sample*> out;
    for (const Sample& smp : samples)
        if (smp.split == s) out.push_back(&smp);
    return out;
}

int Corpus::class_index(const std::string& label) const {
    for (std::size_t i = 0; i < class_names.size(); ++i)
        if (class_names[i] == label) return static_cast<int>(i);
    throw InvalidArgument("unknown class label '" + label + "'");
}

std::vector<std::string> Corpus::class_prompts() const {
    std::vector<std::string> prompts;
    for (const std::string& name : class_names) {
        const auto dash = name.find('-');
        prompts.push_back("a photo of a " + name.substr(0, dash) + " " + name.substr(dash + 1));
    }
    return prompts;
}

std::uint64_t Corpus::digest() const {
    std::uint64_t h = 14695981039346656037ull;
    for (const Sample& s : samples) {
        h = fnv1a(&s.id, sizeof(s.id), h);
        h = fnv1a(s.label.data(), s.label.size(), h);
        const char* sp = split_name(s.split);
        h = fnv1a(sp, std::string(sp).size(), h);
        for (const std::string& c : s.captions) h = fnv1a(c.data(), c.size(), h);
        h = fnv1a(s.image.data(), s.image.size() * sizeof(double), h);
    }
    for (const std::string& w : vocab) h = fnv1a(w.data(), w.size(), h);
    return h;
}

void Corpus::save(const std::string& dir) const {
    fs::create_directories(dir);
    std::ofstream os(fs::path(dir) / "manifest.txt");
    if (!os) throw IoError("cannot write corpus manifest in '" + dir + "'");
    os << "xgap-corpus 1\n";
    os << "seed " << seed << "\n";
    os << "canvas 3 " << canvas << " " << canvas << "\n";
    os << "classes " << class_names.size() << "\n";
    for (const std::string& c : class_names) os << "class " << c << "\n";
    os << "vocab " << vocab.size() << "\n";
    for (const std::string& w : vocab) os << w << "\n";
    os << "samples " << samples.size() << "\n";
    for (const Sample& s : samples) {
        os << "sample " << s.id << " " << s.label << " " << split_name(s.split) << " "
           << s.captions.size() << "\n";
        for (const std::string& c : s.captions) os << c << "\n";
    }
    if (!os) throw IoError("write failed for corpus manifest");

    Archive images;
    images.meta = {{"count", static_cast<double>(samples.size())},
                   {"channels", 3.0},
                   {"height", static_cast<double>(canvas)},
                   {"width", static_cast<double>(canvas)}};
    Tensor stack({static_cast<int>(samples.size()), 3, canvas, canvas});
    const std::size_t per = static_cast<std::size_t>(3) * canvas * canvas;
    for (std::size_t i = 0; i < samples.size(); ++i)
        std::copy(samples[i].image.data(), samples[i].image.data() + per, stack.data() + i * per);
    images.tensors.emplace_back("images", std::move(stack));
    images.save((fs::path(dir) / "images.bin").string());
}

Corpus Corpus::load(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.txt");
    if (!is) throw IoError("cannot open corpus manifest in '" + dir + "'");

    Corpus corpus;
    std::string line;
    auto next_line = [&]() -> std::string {
        if (!std::getline(is, line)) throw IoError("corpus manifest truncated");
        return line;
    };

    {
        const auto head = split_ws(next_line());
        if (head.size() != 2 || head[0] != "xgap-corpus" || head[1] != "1")
            throw IoError("bad corpus manifest header");
    }
    {
        const auto t = split_ws(next_line());
        if (t.size() != 2 || t[0] != "seed") throw IoError("corpus manifest: expected seed");
        corpus.seed = std::stoull(t[1]);
    }
    {
        const auto t = split_ws(next_line());
        if (t.size() != 4 || t[0] != "canvas" || t[1] != "3")
            throw IoError("corpus manifest: expected canvas 3 H W");
        corpus.canvas = std::stoi(t[2]);
        if (std::stoi(t[3]) != corpus.canvas) throw IoError("corpus manifest: canvas must be square");
    }
    {
        const auto t = split_ws(next_line());
        if (t.size() != 2 || t[0] != "classes") throw IoError("corpus manifest: expected classes");
        const int n = std::stoi(t[1]);
        for (int i = 0; i < n; ++i) {
            const auto c = split_ws(next_line());
            if (c.size() != 2 || c[0] != "class") throw IoError("corpus manifest: expected class line");
            corpus.class_names.push_back(c[1]);
        }
    }
    {
        const auto t = split_ws(next_line());
        if (t.size() != 2 || t[0] != "vocab") throw IoError("corpus manifest: expected vocab");
        const int n = std::stoi(t[1]);
        for (int i = 0; i < n; ++i) corpus.vocab.push_back(next_line());
        if (!std::is_sorted(corpus.vocab.begin(), corpus.vocab.end()))
            throw IoError("corpus manifest: vocabulary must be sorted");
    }
    int n_samples = 0;
    {
        const auto t = split_ws(next_line());
        if (t.size() != 2 || t[0] != "samples") throw IoError("corpus manifest: expected samples");
        n_samples = std::stoi(t[1]);
    }

    const Archive images = Archive::load((fs::path(dir) / "images.bin").string());
    const Tensor& stack = images.tensor("images");
    if (static_cast<int>(images.meta_value("count")) != n_samples || stack.dim(0) != n_samples)
        throw IoError("corpus images.bin does not match the manifest sample count");
    const std::size_t per = static_cast<std::size_t>(3) * corpus.canvas * corpus.canvas;

    for (int i = 0; i < n_samples; ++i) {
        const auto t = split_ws(next_line());
        if (t.size() != 5 || t[0] != "sample") throw IoError("corpus manifest: expected sample line");
        Sample s;
        s.id = std::stol(t[1]);
        s.label = t[2];
        s.split = split_from_name(t[3]);
        const int n_captions = std::stoi(t[4]);
        if (n_captions < 2) throw IoError("corpus manifest: sample needs >= 2 captions");
        for (int k = 0; k < n_captions; ++k) s.captions.push_back(next_line());
        s.image = Tensor({3, corpus.canvas, corpus.canvas});
        std::copy(stack.data() + static_cast<std::size_t>(i) * per,
                  stack.data() + static_cast<std::size_t>(i + 1) * per, s.image.data());
        corpus.samples.push_back(std::move(s));
    }
    return corpus;
}

}  // namespace xgap
