// Command-line front door for the xgap laboratory. Everything goes through
// the C API in xgap/capi.h; this binary holds no model logic of its own.
#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "xgap/capi.h"

namespace {

int report(int status, const std::string& what) {
    if (status == XGAP_OK) {
        std::printf("%s: ok\n", what.c_str());
        return 0;
    }
    std::fprintf(stderr, "%s failed: %s\n", what.c_str(), xgap_last_error());
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"xgap: toy vision-language lab (training, modality inversion, retrieval)"};
    app.require_subcommand(1);

    // gen-data
    std::string spec_file, out_dir;
    auto* gen = app.add_subcommand("gen-data", "generate a shape-world corpus");
    gen->add_option("--spec", spec_file, "corpus spec file")->required();
    gen->add_option("--out", out_dir, "output corpus directory")->required();

    // pretrain
    std::string corpus_dir, loss = "clip", scope = "all", out_ckpt, log_csv;
    double tau = 0.01, lr = 1e-3;
    int steps = 400, batch = 32;
    unsigned long long seed = 0;
    auto* pre = app.add_subcommand("pretrain", "train a model on a corpus");
    pre->add_option("--corpus", corpus_dir, "corpus directory")->required();
    pre->add_option("--loss", loss, "clip | siglip | simclr_only | slip");
    pre->add_option("--tau", tau, "loss temperature");
    pre->add_option("--steps", steps, "optimization steps");
    pre->add_option("--batch", batch, "batch size");
    pre->add_option("--lr", lr, "learning rate");
    pre->add_option("--seed", seed, "seed");
    pre->add_option("--scope", scope, "all | projections_only");
    pre->add_option("--out", out_ckpt, "output checkpoint")->required();
    pre->add_option("--log", log_csv, "training log CSV");

    // finetune
    std::string ft_ckpt, ft_corpus, ft_out, ft_log;
    double ft_tau = 1.0, ft_lr = 3e-3;
    int ft_steps = 300;
    unsigned long long ft_seed = 0;
    auto* ft = app.add_subcommand("finetune", "projection-only fine-tuning");
    ft->add_option("--ckpt", ft_ckpt, "input checkpoint")->required();
    ft->add_option("--corpus", ft_corpus, "corpus directory")->required();
    ft->add_option("--tau", ft_tau, "loss temperature");
    ft->add_option("--steps", ft_steps, "optimization steps");
    ft->add_option("--lr", ft_lr, "learning rate");
    ft->add_option("--seed", ft_seed, "seed");
    ft->add_option("--out", ft_out, "output checkpoint")->required();
    ft->add_option("--log", ft_log, "training log CSV");

    // encode
    std::string enc_ckpt, enc_corpus, enc_split = "query", enc_modality = "image", enc_out;
    auto* enc = app.add_subcommand("encode", "native features of a corpus split");
    enc->add_option("--ckpt", enc_ckpt, "checkpoint")->required();
    enc->add_option("--corpus", enc_corpus, "corpus directory")->required();
    enc->add_option("--split", enc_split, "train | query | gallery");
    enc->add_option("--modality", enc_modality, "image | text | text-all | prompts");
    enc->add_option("--out", enc_out, "output feature set")->required();

    // invert
    std::string inv_ckpt, inv_corpus, inv_mode, inv_split = "query", inv_out, inv_traj;
    int inv_count = 1, inv_steps = 0;
    unsigned long long inv_seed = 0;
    bool inv_gallery = false;
    auto* inv = app.add_subcommand("invert", "OTI / OVI modality inversion of a split");
    inv->add_option("--ckpt", inv_ckpt, "checkpoint")->required();
    inv->add_option("--corpus", inv_corpus, "corpus directory")->required();
    inv->add_option("--mode", inv_mode, "oti | ovi")->required();
    inv->add_option("--split", inv_split, "split to invert");
    inv->add_option("-R,-P,--count", inv_count, "pseudo-token / pseudo-patch count");
    inv->add_option("-S,--steps", inv_steps, "optimization steps (0 = mode default)");
    inv->add_option("--seed", inv_seed, "seed");
    inv->add_flag("--gallery", inv_gallery, "also invert the gallery split (intra protocol)");
    inv->add_option("--out", inv_out, "output feature set")->required();
    inv->add_option("--traj", inv_traj, "trajectory CSV (id,step,loss)");

    // eval
    std::string ev_task, ev_query, ev_gallery, ev_native, ev_report;
    double ev_alpha = 1.0, ev_tau = 0.01;
    auto* ev = app.add_subcommand("eval", "retrieval / classification metrics");
    ev->add_option("--task", ev_task, "img2img | txt2txt | zeroshot | imgtxt")->required();
    ev->add_option("--query", ev_query, "query feature set")->required();
    ev->add_option("--gallery", ev_gallery, "gallery feature set")->required();
    ev->add_option("--query-native", ev_native, "native query features for --alpha mixing");
    ev->add_option("--alpha", ev_alpha, "mixing weight toward the inverted features");
    ev->add_option("--tau", ev_tau, "zero-shot softmax temperature");
    ev->add_option("--report", ev_report, "output CSV")->required();

    // diagnose
    std::string dg_ckpt, dg_corpus, dg_report;
    int dg_samples = 8, dg_steps = 150;
    unsigned long long dg_seed = 0;
    auto* dg = app.add_subcommand("diagnose", "modality gap, histograms, trajectories");
    dg->add_option("--ckpt", dg_ckpt, "checkpoint")->required();
    dg->add_option("--corpus", dg_corpus, "corpus directory")->required();
    dg->add_option("--report", dg_report, "output directory")->required();
    dg->add_option("--samples", dg_samples, "OTI probe size");
    dg->add_option("--steps", dg_steps, "OTI probe steps");
    dg->add_option("--seed", dg_seed, "seed");

    // experiment
    std::string exp_config;
    auto* exp = app.add_subcommand("experiment", "run an end-to-end preset");
    exp->add_option("--config", exp_config, "experiment config file")->required();

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed())
        return report(xgap_gen_data(spec_file.c_str(), out_dir.c_str()), "gen-data");
    if (pre->parsed())
        return report(xgap_pretrain(corpus_dir.c_str(), loss.c_str(), tau, steps, batch, lr, seed,
                                    scope.c_str(), out_ckpt.c_str(),
                                    log_csv.empty() ? nullptr : log_csv.c_str()),
                      "pretrain");
    if (ft->parsed())
        return report(xgap_finetune(ft_ckpt.c_str(), ft_corpus.c_str(), ft_tau, ft_steps, ft_lr,
                                    ft_seed, ft_out.c_str(),
                                    ft_log.empty() ? nullptr : ft_log.c_str()),
                      "finetune");
    if (enc->parsed())
        return report(xgap_encode(enc_ckpt.c_str(), enc_corpus.c_str(), enc_split.c_str(),
                                  enc_modality.c_str(), enc_out.c_str()),
                      "encode");
    if (inv->parsed())
        return report(xgap_invert(inv_ckpt.c_str(), inv_corpus.c_str(), inv_mode.c_str(),
                                  inv_split.c_str(), inv_count, inv_steps, inv_seed,
                                  inv_gallery ? 1 : 0, inv_out.c_str(),
                                  inv_traj.empty() ? nullptr : inv_traj.c_str()),
                      "invert");
    if (ev->parsed())
        return report(xgap_eval(ev_task.c_str(), ev_query.c_str(), ev_gallery.c_str(),
                                ev_native.empty() ? nullptr : ev_native.c_str(), ev_alpha, ev_tau,
                                ev_report.c_str()),
                      "eval");
    if (dg->parsed())
        return report(xgap_diagnose(dg_ckpt.c_str(), dg_corpus.c_str(), dg_report.c_str(),
                                    dg_samples, dg_steps, dg_seed),
                      "diagnose");
    if (exp->parsed())
        return report(xgap_run_experiment(exp_config.c_str()), "experiment");
    return 1;
}
