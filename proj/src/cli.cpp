#include "fovsr/cli.hpp"

#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fovsr/data_pipeline.hpp"
#include "fovsr/inference.hpp"
#include "fovsr/metrics.hpp"
#include "fovsr/pair_cache.hpp"
#include "fovsr/plot.hpp"
#include "fovsr/training.hpp"

namespace fs = std::filesystem;

namespace fovsr {
namespace {

std::string version_string() {
    std::ostringstream os;
    os << "fovsr 1.0.0 (default arch " << std::hex << TrainConfig{}.arch_hash() << ")";
    return os.str();
}

struct SimulateOpts {
    std::string in, out = ".", id;
    double zoom = 5.0 / 3.0;
    std::uint32_t seed = 0;
    double blur = -1, noise = -1; // negative = sample from seed
    int down = 0;                 // 0 = sample from seed
};

int cmd_simulate(const SimulateOpts& o) {
    const Image<float> gt = load_image<float>(o.in);
    Rng rng(o.seed);
    DegradationSpec spec = DegradationSpec::sample(rng, std::min(gt.height(), gt.width()));
    if (o.blur >= 0) spec.blur_sigma = o.blur;
    if (o.noise >= 0) spec.noise_sigma = o.noise;
    if (o.down > 0) spec.down_size = o.down;
    const std::string id = o.id.empty() ? fs::path(o.in).stem().string() : o.id;
    const auto pair = synthesize_pair(gt, o.zoom, spec, o.seed, id);
    cache_pair(o.out, pair, o.zoom, spec, o.seed);
    std::cout << "wrote " << (fs::path(o.out) / (id + "_{narrow,wide,gt}.png")).string() << " + "
              << (fs::path(o.out) / (id + ".json")).string() << "\n";
    return 0;
}

struct TrainOpts {
    std::string config, data, out = "runs", resume;
    double zoom = 5.0 / 3.0;
    bool pretrain_only = false;
};

// Manifest rows become synthesized pairs (split 'val' rows are skipped); the
// degradation of each pair is drawn from the run seed and its manifest index.
std::vector<FoVPair<float>> build_dataset(const std::string& manifest, double zoom,
                                          std::uint32_t seed) {
    const auto records = load_manifest(manifest);
    std::vector<FoVPair<float>> pairs;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].split == "val") continue;
        const Image<float> gt = load_image<float>(records[i].path);
        Rng rng(seed + static_cast<std::uint32_t>(i) * 7919u);
        const auto spec = DegradationSpec::sample(rng, std::min(gt.height(), gt.width()));
        pairs.push_back(synthesize_pair(gt, zoom, spec, seed + static_cast<std::uint32_t>(i),
                                        records[i].source_id));
    }
    if (pairs.empty()) throw LoadError("manifest " + manifest + " has no training rows");
    return pairs;
}

int cmd_train(const TrainOpts& o) {
    TrainConfig cfg = o.config.empty() ? TrainConfig{} : load_train_config(o.config);
    cfg.validate();
    fs::create_directories(o.out);

    auto dataset = curriculum_order(build_dataset(o.data, o.zoom, cfg.seed));
    Trainer<float> trainer(cfg);
    const bool resuming = !o.resume.empty();
    if (resuming) trainer.load(o.resume);

    CsvLossLog log((fs::path(o.out) / "losses.csv").string(), resuming);
    if (trainer.iteration() < cfg.pretrain_iterations()) {
        std::cout << "phase 1: " << cfg.pretrain_iterations() << " pretrain iterations\n";
        trainer.run_pretrain(dataset, &log, o.out);
        trainer.save((fs::path(o.out) / "ckpt_pretrain.bin").string());
    }
    if (!o.pretrain_only) {
        std::cout << "phase 2: " << cfg.adversarial_iterations() << " adversarial iterations\n";
        trainer.run_adversarial(dataset, &log, o.out);
    }
    const std::string final_path = (fs::path(o.out) / "ckpt_final.bin").string();
    trainer.save(final_path);
    std::cout << "finished at iteration " << trainer.iteration() << ", saved " << final_path << "\n";
    return 0;
}

struct EnhanceOpts {
    std::string narrow, wide, ckpt, out, dump;
    double tau = 0.7;
    int blend = 4;
};

int cmd_enhance(const EnhanceOpts& o) {
    Trainer<float> trainer(config_from_checkpoint(o.ckpt));
    trainer.load(o.ckpt);
    const Image<float> narrow = load_image<float>(o.narrow);
    const Image<float> wide = load_image<float>(o.wide);
    nlohmann::json dump;
    const Image<float> out = enhance(narrow, wide, trainer.generator(), trainer.backbone(), o.tau,
                                     o.blend, o.dump.empty() ? nullptr : &dump);
    save_png(o.out, out);
    if (!o.dump.empty()) {
        std::ofstream f(o.dump);
        if (!f) throw LoadError("cannot write match dump: " + o.dump);
        f << dump.dump(2) << "\n";
    }
    std::cout << "wrote " << o.out << " (" << out.width() << "x" << out.height() << ")\n";
    return 0;
}

struct CascadeOpts {
    std::string stack, ckpt, out;
    double tau = 0.7;
    int blend = 4;
};

int cmd_cascade(const CascadeOpts& o) {
    Trainer<float> trainer(config_from_checkpoint(o.ckpt));
    trainer.load(o.ckpt);
    const auto stack = load_lens_stack<float>(o.stack);
    std::vector<CascadeStage> stages;
    const Image<float> out =
        cascade(stack, trainer.generator(), trainer.backbone(), o.tau, o.blend, &stages);
    save_png(o.out, out);
    for (const auto& s : stages)
        std::cout << "stage " << s.from_zoom << "x -> " << s.to_zoom << "x: " << s.out_w << "x"
                  << s.out_h << "\n";
    std::cout << "wrote " << o.out << "\n";
    return 0;
}

struct EvalOpts {
    std::vector<std::string> pred, gt;
    std::vector<std::string> ids;
    bool csv = false, text = false;
};

int cmd_eval(const EvalOpts& o) {
    if (o.pred.size() != o.gt.size() || o.pred.empty())
        throw ConfigError("eval: --pred and --gt must appear the same number of times");
    const auto bb = Backbone<float>::fixed_random();
    MetricReport report;
    for (std::size_t i = 0; i < o.pred.size(); ++i) {
        const Image<float> pred = load_image<float>(o.pred[i]);
        const Image<float> gt = load_image<float>(o.gt[i]);
        MetricRow row;
        row.id = i < o.ids.size() ? o.ids[i] : fs::path(o.pred[i]).stem().string();
        row.psnr_db = psnr(pred, gt);
        row.ssim = ssim(pred, gt);
        row.perceptual = perceptual_distance(pred, gt, bb);
        report.rows.push_back(row);
    }
    if (o.csv) std::cout << report.to_csv();
    else if (o.text) std::cout << report.to_text();
    else std::cout << report.to_json().dump(2) << "\n";
    return 0;
}

struct PlotOpts {
    std::string csv, out = "losses.png";
    int window = 25;
    int width = 900, height = 600;
};

int cmd_plot(const PlotOpts& o) {
    const auto records = read_loss_csv(o.csv);
    save_png(o.out, render_loss_plot(records, o.window, o.width, o.height));
    std::cout << "wrote " << o.out << " (" << records.size()
              << " iterations; pale=raw, solid=window-" << o.window
              << " mean; blue=generator, red=stitching)\n";
    return 0;
}

} // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"reference-guided wide-angle image enhancement"};
    app.set_version_flag("--version", version_string());
    app.require_subcommand(1);

    SimulateOpts so;
    auto* sim = app.add_subcommand("simulate", "Synthesize a narrow/wide pair from one image");
    sim->add_option("--in", so.in, "source image (png/jpg)")->required();
    sim->add_option("--out", so.out, "output directory");
    sim->add_option("--zoom", so.zoom, "narrow-view zoom factor (> 1)");
    sim->add_option("--seed", so.seed, "degradation seed");
    sim->add_option("--blur", so.blur, "blur sigma override");
    sim->add_option("--noise", so.noise, "noise sigma override, in [0,1]");
    sim->add_option("--down", so.down, "downsample side override, px");
    sim->add_option("--id", so.id, "pair id (default: input stem)");

    TrainOpts to;
    auto* tr = app.add_subcommand("train", "Two-phase training from a manifest");
    tr->add_option("--config", to.config, "key=value config file");
    tr->add_option("--data", to.data, "tsv manifest: id<TAB>path[<TAB>split]")->required();
    tr->add_option("--out", to.out, "run directory (losses.csv + checkpoints)");
    tr->add_option("--zoom", to.zoom, "narrow-view zoom factor");
    tr->add_option("--resume", to.resume, "checkpoint to resume from");
    tr->add_flag("--pretrain-only", to.pretrain_only, "stop after phase 1");

    EnhanceOpts eo;
    auto* en = app.add_subcommand("enhance", "Enhance a wide shot using a narrow reference");
    en->add_option("--narrow", eo.narrow, "narrow (reference) image")->required();
    en->add_option("--wide", eo.wide, "wide image to enhance")->required();
    en->add_option("--ckpt", eo.ckpt, "trained checkpoint")->required();
    en->add_option("--out", eo.out, "output png")->required();
    en->add_option("--dump-matches", eo.dump, "write per-patch match records to this json");
    en->add_option("--tau", eo.tau, "match acceptance threshold");
    en->add_option("--blend", eo.blend, "feather half-band, px");

    CascadeOpts co;
    auto* ca = app.add_subcommand("cascade", "Iteratively enhance down a lens stack");
    ca->add_option("--stack", co.stack, "json: [{\"zoom\": 5.0, \"path\": \"shot.png\"}, ...]")->required();
    ca->add_option("--ckpt", co.ckpt, "trained checkpoint")->required();
    ca->add_option("--out", co.out, "output png")->required();
    ca->add_option("--tau", co.tau, "match acceptance threshold");
    ca->add_option("--blend", co.blend, "feather half-band, px");

    EvalOpts vo;
    auto* ev = app.add_subcommand("eval", "Image quality metrics against ground truth");
    ev->add_option("--pred", vo.pred, "predicted image (repeatable)")->required();
    ev->add_option("--gt", vo.gt, "ground-truth image (repeatable)")->required();
    ev->add_option("--id", vo.ids, "row id (repeatable, default: pred stem)");
    ev->add_flag("--csv", vo.csv, "emit csv rows instead of json");
    ev->add_flag("--text", vo.text, "emit an aligned table instead of json");

    PlotOpts po;
    auto* pl = app.add_subcommand("plot-losses", "Render loss curves from a training csv");
    pl->add_option("--csv", po.csv, "losses.csv from a training run")->required();
    pl->add_option("--out", po.out, "output png");
    pl->add_option("--window", po.window, "moving-average window");
    pl->add_option("--width", po.width, "plot width, px");
    pl->add_option("--height", po.height, "plot height, px");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "fovsr: " << e.what() << "\n";
        if (argc <= 1) std::cerr << "\n" << app.help();
        else std::cerr << "run with --help for usage\n";
        return 2;
    }

    try {
        if (sim->parsed()) return cmd_simulate(so);
        if (tr->parsed()) return cmd_train(to);
        if (en->parsed()) return cmd_enhance(eo);
        if (ca->parsed()) return cmd_cascade(co);
        if (ev->parsed()) return cmd_eval(vo);
        if (pl->parsed()) return cmd_plot(po);
    } catch (const ConfigError& e) {
        std::cerr << "fovsr: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fovsr: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace fovsr
