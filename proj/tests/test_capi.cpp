#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "xgap/capi.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::path("/tmp") / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    os << text;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("version and error strings are always available") {
    CHECK(std::string(xgap_version()) == "0.1.0");
    CHECK(xgap_last_error() != nullptr);
}

TEST_CASE("invalid arguments yield XGAP_EINVAL with a message") {
    CHECK(xgap_gen_data(nullptr, "/tmp/x") == XGAP_EINVAL);
    CHECK(std::string(xgap_last_error()).find("spec file") != std::string::npos);
    CHECK(xgap_eval("nonsense", "a", "b", nullptr, 1.0, 1.0, "/tmp/r.csv") != XGAP_OK);
}

TEST_CASE("missing files yield XGAP_EIO") {
    xgap_model* model = nullptr;
    CHECK(xgap_model_open("/tmp/xgap_no_such.ckpt", &model) == XGAP_EIO);
    CHECK(model == nullptr);
    xgap_featureset* fs = nullptr;
    CHECK(xgap_featureset_open("/tmp/xgap_no_such.csv", &fs) == XGAP_EIO);
}

TEST_CASE("tiny pipeline end to end through the C surface") {
    TempDir tmp("xgap_capi_pipeline");

    const std::string spec = tmp / "corpus.cfg";
    write_file(spec,
               "corpus.shapes = 1\n"
               "corpus.colors = 2\n"
               "corpus.samples_per_class = 8\n"
               "corpus.canvas = 16\n"
               "seed = 3\n");
    const std::string corpus = tmp / "corpus";
    REQUIRE(xgap_gen_data(spec.c_str(), corpus.c_str()) == XGAP_OK);
    CHECK(fs::exists(fs::path(corpus) / "manifest.txt"));
    CHECK(fs::exists(fs::path(corpus) / "images.bin"));

    const std::string ckpt = tmp / "model.ckpt";
    const std::string log = tmp / "train.csv";
    REQUIRE(xgap_pretrain(corpus.c_str(), "clip", 0.05, 12, 6, 1e-3, 1, "all", ckpt.c_str(),
                          log.c_str()) == XGAP_OK);
    CHECK(fs::exists(ckpt));
    CHECK(slurp(log).rfind("step,", 0) == 0);

    xgap_model* model = nullptr;
    REQUIRE(xgap_model_open(ckpt.c_str(), &model) == XGAP_OK);
    CHECK(xgap_model_dim(model) == 64);
    CHECK(xgap_model_param_count(model) > 0);
    const unsigned long long digest = xgap_model_digest(model);
    CHECK(digest != 0);
    xgap_model_free(model);

    const std::string gallery = tmp / "gallery.csv";
    const std::string queries = tmp / "queries.csv";
    REQUIRE(xgap_encode(ckpt.c_str(), corpus.c_str(), "gallery", "image", gallery.c_str()) ==
            XGAP_OK);
    REQUIRE(xgap_encode(ckpt.c_str(), corpus.c_str(), "query", "image", queries.c_str()) ==
            XGAP_OK);

    const std::string oti_feats = tmp / "oti.csv";
    const std::string traj = tmp / "traj.csv";
    REQUIRE(xgap_invert(ckpt.c_str(), corpus.c_str(), "oti", "query", 1, 15, 0, 0,
                        oti_feats.c_str(), traj.c_str()) == XGAP_OK);
    CHECK(slurp(traj).rfind("id,step,loss", 0) == 0);

    xgap_featureset* fsh = nullptr;
    REQUIRE(xgap_featureset_open(oti_feats.c_str(), &fsh) == XGAP_OK);
    CHECK(xgap_featureset_size(fsh) == 2);  // one query per class
    CHECK(xgap_featureset_dim(fsh) == 64);
    CHECK(std::string(xgap_featureset_modality(fsh)) == "oti");
    xgap_featureset_free(fsh);

    const std::string report = tmp / "eval.csv";
    REQUIRE(xgap_eval("img2img", queries.c_str(), gallery.c_str(), nullptr, 1.0, 0.01,
                      report.c_str()) == XGAP_OK);
    CHECK(slurp(report).rfind("metric,value", 0) == 0);

    // mixing path: alpha toward the inverted features
    const std::string mix_report = tmp / "mix.csv";
    REQUIRE(xgap_eval("img2img", oti_feats.c_str(), gallery.c_str(), queries.c_str(), 0.5, 0.01,
                      mix_report.c_str()) == XGAP_OK);

    // dim mismatch: build a featureset with another dimension by hand
    const std::string bad = tmp / "bad.csv";
    write_file(bad, "id,modality,label\n0,image,x,1.0,0.0\n");
    CHECK(xgap_eval("img2img", bad.c_str(), gallery.c_str(), nullptr, 1.0, 0.01,
                    (tmp / "bad_report.csv").c_str()) == XGAP_EINVAL);

    const std::string diag = tmp / "diag";
    REQUIRE(xgap_diagnose(ckpt.c_str(), corpus.c_str(), diag.c_str(), 2, 10, 0) == XGAP_OK);
    CHECK(fs::exists(fs::path(diag) / "gap.csv"));
    CHECK(fs::exists(fs::path(diag) / "hist_image_image.csv"));
    CHECK(fs::exists(fs::path(diag) / "oti_trajectory.csv"));
}

TEST_CASE("finetune through the C surface keeps the trunk frozen") {
    TempDir tmp("xgap_capi_finetune");
    const std::string spec = tmp / "corpus.cfg";
    write_file(spec,
               "corpus.shapes = 1\n"
               "corpus.colors = 2\n"
               "corpus.samples_per_class = 6\n"
               "seed = 1\n");
    const std::string corpus = tmp / "corpus";
    REQUIRE(xgap_gen_data(spec.c_str(), corpus.c_str()) == XGAP_OK);
    const std::string ckpt = tmp / "model.ckpt";
    REQUIRE(xgap_pretrain(corpus.c_str(), "clip", 0.05, 6, 4, 1e-3, 2, "all", ckpt.c_str(),
                          nullptr) == XGAP_OK);
    const std::string ft = tmp / "ft.ckpt";
    REQUIRE(xgap_finetune(ckpt.c_str(), corpus.c_str(), 1.0, 4, 1e-3, 3, ft.c_str(), nullptr) ==
            XGAP_OK);
    CHECK(fs::exists(ft));
}

TEST_CASE("experiment config errors name the problem") {
    TempDir tmp("xgap_capi_experiment");
    const std::string empty_cfg = tmp / "empty.cfg";
    write_file(empty_cfg, "");
    CHECK(xgap_run_experiment(empty_cfg.c_str()) == XGAP_EINVAL);
    const std::string msg = xgap_last_error();
    CHECK(msg.find("missing required keys") != std::string::npos);
    CHECK(msg.find("experiment") != std::string::npos);
    CHECK(msg.find("out") != std::string::npos);

    const std::string bad_cfg = tmp / "bad.cfg";
    write_file(bad_cfg,
               "experiment = img2img\nseed = 0\nout = " + (tmp / "out") +
                   "\nbananas = 7\n");
    CHECK(xgap_run_experiment(bad_cfg.c_str()) == XGAP_EINVAL);
    CHECK(std::string(xgap_last_error()).find("bananas") != std::string::npos);
}
