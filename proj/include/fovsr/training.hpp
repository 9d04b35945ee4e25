#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "fovsr/backbone.hpp"
#include "fovsr/checkpoint.hpp"
#include "fovsr/data_pipeline.hpp"
#include "fovsr/discriminator.hpp"
#include "fovsr/generator.hpp"
#include "fovsr/losses.hpp"
#include "fovsr/patch_match.hpp"

namespace fovsr {

/// Optimization schedule plus the architecture it trains. The architecture
/// part (generator config + backbone preset) is hashed into checkpoints.
struct TrainConfig {
    double lr = 1e-4;
    double decay = 0.9; // multiplied in every 10 epochs
    int batch_size = 16; // patch pairs per optimizer step
    int pretrain_epochs = 50;
    int adv_epochs = 2000;
    int samples_per_epoch = 10;
    double tau = 0.7;
    std::uint32_t seed = 0;
    bool deterministic = true;
    bool adv_bce = false; // optional real/fake critic term; off by default
    long long checkpoint_every = 0; // iterations between snapshots; 0 = final only
    GeneratorConfig gen{};
    std::string backbone_preset = "fixed-random";
    LossWeights loss{};

    void validate() const {
        if (lr <= 0) throw ConfigError("train config: lr must be > 0");
        if (decay <= 0 || decay > 1) throw ConfigError("train config: decay must be in (0,1]");
        if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
        if (pretrain_epochs < 1) throw ConfigError("train config: pretrain_epochs must be >= 1");
        if (adv_epochs < 1) throw ConfigError("train config: adv_epochs must be >= 1");
        if (samples_per_epoch < 1) throw ConfigError("train config: samples_per_epoch must be >= 1");
        if (tau < -1 || tau > 1) throw ConfigError("train config: tau must be in [-1,1]");
        if (checkpoint_every < 0) throw ConfigError("train config: checkpoint_every must be >= 0");
        if (backbone_preset != "fixed-random" && backbone_preset != "vgg19")
            throw ConfigError("train config: unknown backbone preset '" + backbone_preset + "'");
        gen.validate();
        loss.validate();
    }

    // lr(epoch) = lr * decay^floor(epoch/10), on one global epoch counter
    // spanning both phases.
    double lr_at_epoch(long long epoch) const {
        return lr * std::pow(decay, static_cast<double>(epoch / 10));
    }

    long long pretrain_iterations() const {
        return static_cast<long long>(pretrain_epochs) * samples_per_epoch;
    }
    long long adversarial_iterations() const {
        return static_cast<long long>(adv_epochs) * samples_per_epoch;
    }
    long long total_iterations() const { return pretrain_iterations() + adversarial_iterations(); }

    // Identifies tensor layout compatibility, not the full schedule.
    std::string arch_signature() const {
        return gen.signature() + ";backbone=" + backbone_preset + ";critic=v1";
    }
    std::uint64_t arch_hash() const { return fnv1a(arch_signature()); }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("train config: key '" + key + "' expects a boolean, got '" + v + "'");
}

} // namespace detail

/// Flat key=value config text; '#' starts a comment, blank lines are skipped.
inline TrainConfig parse_train_config(std::istream& in) {
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("train config line " + std::to_string(lineno) + ": expected key=value");
        auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = strip(line.substr(0, eq));
        const std::string val = strip(line.substr(eq + 1));
        try {
            if (key == "lr") cfg.lr = std::stod(val);
            else if (key == "decay") cfg.decay = std::stod(val);
            else if (key == "batch_size") cfg.batch_size = std::stoi(val);
            else if (key == "pretrain_epochs") cfg.pretrain_epochs = std::stoi(val);
            else if (key == "adv_epochs") cfg.adv_epochs = std::stoi(val);
            else if (key == "samples_per_epoch") cfg.samples_per_epoch = std::stoi(val);
            else if (key == "tau") cfg.tau = std::stod(val);
            else if (key == "seed") cfg.seed = static_cast<std::uint32_t>(std::stoul(val));
            else if (key == "deterministic") cfg.deterministic = detail::parse_bool(val, key);
            else if (key == "adv_bce") cfg.adv_bce = detail::parse_bool(val, key);
            else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoll(val);
            else if (key == "d") cfg.gen.d = std::stoi(val);
            else if (key == "n_blocks") cfg.gen.n_blocks = std::stoi(val);
            else if (key == "r") cfg.gen.r = std::stoi(val);
            else if (key == "d_attn") cfg.gen.d_attn = std::stoi(val);
            else if (key == "narrow_channels") cfg.gen.narrow_channels = std::stoi(val);
            else if (key == "backbone") cfg.backbone_preset = val;
            else if (key == "seam_band") cfg.loss.seam_band = std::stoi(val);
            else if (key == "w0") cfg.loss.w[0] = std::stod(val);
            else if (key == "w1") cfg.loss.w[1] = std::stod(val);
            else if (key == "w2") cfg.loss.w[2] = std::stod(val);
            else throw ConfigError("train config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError("train config line " + std::to_string(lineno) + ": bad value for '" + key + "'");
        } catch (const std::out_of_range&) {
            throw ConfigError("train config line " + std::to_string(lineno) + ": value out of range for '" + key + "'");
        }
    }
    return cfg;
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("train config not found: " + path);
    return parse_train_config(in);
}

/// Adam with bias correction. State tensors mirror the parameter list handed
/// to the constructor; step() must receive lists in that same order.
template <typename T>
class Adam {
public:
    Adam() = default;
    explicit Adam(const std::vector<TensorRef<T>>& params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params) {
            names_.push_back(p.name);
            m_.emplace_back(Mat<T>::Zero(p.rows, p.cols));
            v_.emplace_back(Mat<T>::Zero(p.rows, p.cols));
        }
    }

    void step(const std::vector<TensorRef<T>>& params, const std::vector<TensorRef<T>>& grads,
              double lr) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw std::invalid_argument("adam: parameter list does not match optimizer state");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < m_.size(); ++i) {
            T* p = params[i].data;
            const T* g = grads[i].data;
            T* m = m_[i].data();
            T* v = v_[i].data();
            for (Eigen::Index k = 0; k < params[i].size(); ++k) {
                m[k] = T(beta1_) * m[k] + T(1.0 - beta1_) * g[k];
                v[k] = T(beta2_) * v[k] + T(1.0 - beta2_) * g[k] * g[k];
                const double mhat = m[k] / bc1;
                const double vhat = v[k] / bc2;
                p[k] -= T(lr * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    long long steps() const { return t_; }
    void set_steps(long long t) { t_ = t; }

    // Named views over the moment tensors for checkpointing.
    std::vector<TensorRef<T>> state_refs(const std::string& prefix) {
        std::vector<TensorRef<T>> refs;
        for (std::size_t i = 0; i < m_.size(); ++i) {
            refs.push_back({prefix + ".m." + names_[i], m_[i].data(), m_[i].rows(), m_[i].cols()});
            refs.push_back({prefix + ".v." + names_[i], v_[i].data(), v_[i].rows(), v_[i].cols()});
        }
        return refs;
    }

private:
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long long t_ = 0;
    std::vector<std::string> names_;
    std::vector<Mat<T>> m_, v_;
};

struct LossRecord {
    long long iteration = 0;
    double content = 0, visual = 0, gen_total = 0;
    double seam = 0, perceptual = 0, disc_total = 0;
    std::string source_id; // diagnostic only; not part of the CSV schema
};

/// Append-only CSV sink matching the plot-losses reader.
class CsvLossLog {
public:
    CsvLossLog() = default;
    explicit CsvLossLog(const std::string& path, bool resume = false) { open(path, resume); }

    void open(const std::string& path, bool resume = false) {
        const bool fresh = !resume || !std::filesystem::exists(path) ||
                           std::filesystem::file_size(path) == 0;
        out_.open(path, fresh ? std::ios::trunc : std::ios::app);
        if (!out_) throw LoadError("cannot open loss log: " + path);
        if (fresh) out_ << "iteration,L_content,L_visual,L_G,L_seam,L_perceptual,L_D\n";
        out_ << std::setprecision(9);
    }

    void append(const LossRecord& r) {
        out_ << r.iteration << ',' << r.content << ',' << r.visual << ',' << r.gen_total << ','
             << r.seam << ',' << r.perceptual << ',' << r.disc_total << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

inline std::vector<LossRecord> read_loss_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("loss log not found: " + path);
    std::string line;
    if (!std::getline(in, line)) throw LoadError("loss log is empty: " + path);
    std::vector<LossRecord> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        LossRecord r;
        char c;
        if (!(ss >> r.iteration >> c >> r.content >> c >> r.visual >> c >> r.gen_total >> c >>
              r.seam >> c >> r.perceptual >> c >> r.disc_total))
            throw LoadError("loss log line " + std::to_string(lineno) + ": malformed row in " + path);
        out.push_back(r);
    }
    return out;
}

/// Two-phase trainer. Phase 1 updates the generator on patch-level content +
/// visual terms; phase 2 additionally pushes the image-level stitching
/// objective (seam + perceptual on the assembled output) back through every
/// patch. One "iteration" consumes one training pair.
template <typename T>
class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
        cfg_.validate();
        backbone_ = cfg_.backbone_preset == "vgg19" ? Backbone<T>::vgg19() : Backbone<T>::fixed_random();
        Rng init(cfg_.seed);
        gen_ = GeneratorParams<T>::make(cfg_.gen, init);
        disc_ = DiscriminatorParams<T>::make(init);
        adam_g_ = Adam<T>(tensor_refs(gen_));
        adam_d_ = Adam<T>(tensor_refs(disc_));
    }

    const TrainConfig& config() const { return cfg_; }
    GeneratorParams<T>& generator() { return gen_; }
    const GeneratorParams<T>& generator() const { return gen_; }
    DiscriminatorParams<T>& discriminator() { return disc_; }
    const Backbone<T>& backbone() const { return backbone_; }
    long long iteration() const { return iteration_; }
    long long epoch() const { return epoch_; }
    const std::string& phase() const { return phase_; }
    void set_phase(const std::string& p) { phase_ = p; }
    // Source ids in consumption order, for curriculum inspection.
    const std::vector<std::string>& consumed_sources() const { return consumed_; }

    /// One full step on one pair; dispatches on the current phase.
    LossRecord training_step(const FoVPair<T>& pair) {
        try {
            return phase_ == "adversarial" ? adversarial_step(pair) : pretrain_step(pair);
        } catch (const TrainingError&) {
            throw;
        } catch (const std::exception& e) {
            throw TrainingError("pair " + pair.source_id + ": " + e.what());
        }
    }

    void run_pretrain(const std::vector<FoVPair<T>>& data, CsvLossLog* log = nullptr,
                      const std::string& out_dir = "") {
        if (data.empty()) throw std::invalid_argument("pretrain: dataset is empty");
        phase_ = "pretrain";
        for (; epoch_ < cfg_.pretrain_epochs; ++epoch_) {
            run_epoch(data, log);
            maybe_snapshot(out_dir);
        }
    }

    void run_adversarial(const std::vector<FoVPair<T>>& data, CsvLossLog* log = nullptr,
                         const std::string& out_dir = "") {
        if (data.empty()) throw std::invalid_argument("train: dataset is empty");
        if (phase_ == "pretrain" && iteration_ < cfg_.pretrain_iterations())
            throw TrainingError("adversarial phase requires a completed pretrain checkpoint");
        phase_ = "adversarial";
        const long long last = cfg_.pretrain_epochs + cfg_.adv_epochs;
        for (epoch_ = std::max(epoch_, static_cast<long long>(cfg_.pretrain_epochs)); epoch_ < last;
             ++epoch_) {
            run_epoch(data, log);
            maybe_snapshot(out_dir);
        }
    }

    void save(const std::string& path) {
        nlohmann::json meta;
        meta["iteration"] = iteration_;
        meta["epoch"] = epoch_;
        meta["phase"] = phase_;
        meta["rng"] = rng_.state();
        meta["adam_g_steps"] = adam_g_.steps();
        meta["adam_d_steps"] = adam_d_.steps();
        meta["arch"] = cfg_.arch_signature();
        meta["generator"] = {{"d", cfg_.gen.d},
                             {"n_blocks", cfg_.gen.n_blocks},
                             {"r", cfg_.gen.r},
                             {"d_attn", cfg_.gen.d_attn},
                             {"narrow_channels", cfg_.gen.narrow_channels}};
        meta["backbone"] = cfg_.backbone_preset;
        save_checkpoint(path, cfg_.arch_hash(), all_refs(), meta);
    }

    void load(const std::string& path) {
        const nlohmann::json meta = load_checkpoint(path, cfg_.arch_hash(), all_refs());
        iteration_ = meta.at("iteration").get<long long>();
        epoch_ = meta.at("epoch").get<long long>();
        phase_ = meta.at("phase").get<std::string>();
        rng_.restore(meta.at("rng").get<std::string>());
        adam_g_.set_steps(meta.at("adam_g_steps").get<long long>());
        adam_d_.set_steps(meta.at("adam_d_steps").get<long long>());
        cache_.clear();
    }

private:
    struct PairView {
        std::vector<Patch<T>> wide, narrow, gt;
        std::vector<PatchMatch> matches;
    };

    // Patch grids and matches depend only on the frozen backbone, so they are
    // computed once per source. The cache resets past 64 pairs to bound memory
    // on large manifests.
    const PairView& view_of(const FoVPair<T>& pair) {
        auto it = cache_.find(pair.source_id);
        if (it != cache_.end()) return it->second;
        if (cache_.size() >= 64) cache_.clear();
        PairView v;
        v.wide = partition(pair.wide);
        v.narrow = partition(pair.narrow);
        v.gt = partition(pair.gt);
        v.matches = match_patches(backbone_, v.wide, v.narrow, cfg_.tau);
        return cache_.emplace(pair.source_id, std::move(v)).first->second;
    }

    struct PatchTerms {
        double content = 0, visual = 0;
    };

    // Forward + backward for one matched patch; accumulates parameter grads.
    // Losses see the raw (unclamped) generator output so gradients stay alive.
    PatchTerms patch_losses(const Patch<T>& wide, const Patch<T>& nar, const Patch<T>& gt,
                            bool visual_active, GeneratorParams<T>& grads) {
        NarrowTrace<T> ntr;
        const AugmentedGram<T> tokens = narrow_tokens(gen_, nar.pixels, &ntr);
        GeneratorTrace<T> gtr;
        const Tensor3<T> out =
            generate_fwd(gen_, Tensor3<T>::from_image(wide.pixels), tokens.token_view, &gtr);

        // content: the generated patch against the ground truth, resized to
        // the generated resolution. Pixel-space rather than encoder-latent
        // space: a trainable metric co-adapts (the latent gap saturates with
        // no pixel progress), while the pixel gap is what restoration needs.
        const Tensor3<T> target =
            Tensor3<T>::from_image(resize_bicubic(gt.pixels, out.h, out.w));
        Tensor3<T> dout;
        PatchTerms terms;
        terms.content = content_loss(target, out, &dout);

        if (visual_active) {
            Tensor3<T> dvis;
            terms.visual =
                visual_loss_t(out, Tensor3<T>::from_image(nar.pixels), backbone_, cfg_.loss, &dvis);
            dout.data += dvis.data;
        }
        const Mat<T> dtok = generate_bwd(gen_, gtr, dout, grads);
        narrow_tokens_backward(gen_, ntr, dtok, grads);
        return terms;
    }

    // Patch-level objective: batches of batch_size patch pairs, one Adam step
    // each. Visual supervision only applies where the match cleared tau.
    LossRecord patch_phase(const FoVPair<T>& pair) {
        const PairView& pv = view_of(pair);
        LossRecord rec;
        rec.iteration = iteration_;
        const double lr = cfg_.lr_at_epoch(epoch_);
        const std::size_t n = pv.wide.size();
        for (std::size_t lo = 0; lo < n; lo += static_cast<std::size_t>(cfg_.batch_size)) {
            const std::size_t hi = std::min(lo + static_cast<std::size_t>(cfg_.batch_size), n);
            GeneratorParams<T> grads = GeneratorParams<T>::zeros_like(gen_);
            for (std::size_t i = lo; i < hi; ++i) {
                const PatchMatch& m = pv.matches[i];
                const Patch<T>& nar = pv.narrow[static_cast<std::size_t>(m.narrow_row) * 8 + m.narrow_col];
                const PatchTerms t = patch_losses(pv.wide[i], nar, pv.gt[i], m.above_threshold, grads);
                rec.content += t.content;
                rec.visual += t.visual;
            }
            scale_refs(tensor_refs(grads), T(1) / T(hi - lo));
            adam_g_.step(tensor_refs(gen_), tensor_refs(grads), lr);
        }
        rec.content /= static_cast<double>(n);
        rec.visual /= static_cast<double>(n);
        rec.gen_total = rec.content + rec.visual;
        return rec;
    }

    LossRecord pretrain_step(const FoVPair<T>& pair) {
        LossRecord rec = patch_phase(pair);
        finish_step(rec, pair.source_id);
        return rec;
    }

    // Phase 2: patch-level pass, then the image-level stitching objective.
    // The assembled image uses a raw stitch (no feathering) so the seam term
    // sees the true patch discontinuities.
    LossRecord adversarial_step(const FoVPair<T>& pair) {
        LossRecord rec = patch_phase(pair);
        const PairView& pv = view_of(pair);
        const double lr = cfg_.lr_at_epoch(epoch_);

        std::vector<Patch<T>> outs;
        outs.reserve(pv.wide.size());
        for (std::size_t i = 0; i < pv.wide.size(); ++i) {
            const PatchMatch& m = pv.matches[i];
            const Patch<T>& nar = pv.narrow[static_cast<std::size_t>(m.narrow_row) * 8 + m.narrow_col];
            const AugmentedGram<T> tokens = narrow_tokens(gen_, nar.pixels);
            const Tensor3<T> o =
                generate_fwd(gen_, Tensor3<T>::from_image(pv.wide[i].pixels), tokens.token_view);
            outs.push_back({o.to_image(), pv.wide[i].row, pv.wide[i].col});
        }
        const Image<T> stitched = assemble(outs, 0);
        const Tensor3<T> simg = Tensor3<T>::from_image(stitched);
        const PatchGrid grid = PatchGrid::for_image(stitched.height(), stitched.width());

        Tensor3<T> dseam;
        const TapEmbedder<T> phi{&backbone_, 0};
        rec.seam = seam_loss_t(simg, grid, cfg_.loss.seam_band, phi, &dseam);

        const Image<T> gt_ref = pair.gt.height() == stitched.height() && pair.gt.width() == stitched.width()
                                    ? pair.gt
                                    : resize_bicubic(pair.gt, stitched.height(), stitched.width());
        Tensor3<T> dperc;
        rec.perceptual =
            perceptual_loss_t(simg, Tensor3<T>::from_image(gt_ref), backbone_, cfg_.loss, &dperc);
        rec.disc_total = discriminator_loss(rec.seam, rec.perceptual);

        Tensor3<T> dimg = dseam;
        dimg.data += dperc.data;

        if (cfg_.adv_bce) critic_round(simg, gt_ref, dimg, rec, lr);

        // route the image-level gradient through each patch, re-deriving
        // traces one patch at a time to keep memory flat
        GeneratorParams<T> grads = GeneratorParams<T>::zeros_like(gen_);
        const int oh = stitched.height() / 8, ow = stitched.width() / 8;
        for (std::size_t i = 0; i < pv.wide.size(); ++i) {
            const PatchMatch& m = pv.matches[i];
            const Patch<T>& nar = pv.narrow[static_cast<std::size_t>(m.narrow_row) * 8 + m.narrow_col];
            NarrowTrace<T> ntr;
            const AugmentedGram<T> tokens = narrow_tokens(gen_, nar.pixels, &ntr);
            GeneratorTrace<T> gtr;
            generate_fwd(gen_, Tensor3<T>::from_image(pv.wide[i].pixels), tokens.token_view, &gtr);
            Tensor3<T> dpatch(3, oh, ow);
            for (int yy = 0; yy < oh; ++yy)
                dpatch.data.block(0, yy * ow, 3, ow) =
                    dimg.data.block(0, (pv.wide[i].row * oh + yy) * stitched.width() + pv.wide[i].col * ow, 3, ow);
            const Mat<T> dtok = generate_bwd(gen_, gtr, dpatch, grads);
            narrow_tokens_backward(gen_, ntr, dtok, grads);
        }
        adam_g_.step(tensor_refs(gen_), tensor_refs(grads), lr);

        finish_step(rec, pair.source_id);
        return rec;
    }

    // Gated real/fake round: critic update on gt-vs-stitched, then a
    // non-saturating term added to the generator's image gradient.
    void critic_round(const Tensor3<T>& fake, const Image<T>& real, Tensor3<T>& dimg,
                      LossRecord& rec, double lr) {
        DiscriminatorParams<T> dgrads = DiscriminatorParams<T>::zeros_like(disc_);
        CriticTrace<T> tr_real, tr_fake;
        const T s_real = critic_score_t(disc_, Tensor3<T>::from_image(real), &tr_real);
        const T s_fake = critic_score_t(disc_, fake, &tr_fake);
        T ds_real, ds_fake;
        const T bce_real = bce_logits(s_real, T(1), &ds_real);
        const T bce_fake = bce_logits(s_fake, T(0), &ds_fake);
        critic_backward(disc_, tr_real, ds_real * T(0.5), dgrads);
        critic_backward(disc_, tr_fake, ds_fake * T(0.5), dgrads);
        adam_d_.step(tensor_refs(disc_), tensor_refs(dgrads), lr);
        rec.disc_total += 0.5 * (static_cast<double>(bce_real) + static_cast<double>(bce_fake));

        CriticTrace<T> tr_gen;
        const T s_gen = critic_score_t(disc_, fake, &tr_gen);
        T ds_gen;
        bce_logits(s_gen, T(1), &ds_gen);
        DiscriminatorParams<T> scratch = DiscriminatorParams<T>::zeros_like(disc_);
        const Tensor3<T> dadv = critic_backward(disc_, tr_gen, ds_gen, scratch);
        dimg.data += dadv.data;
    }

    void finish_step(LossRecord& rec, const std::string& source_id) {
        rec.source_id = source_id;
        consumed_.push_back(source_id);
        const double vals[] = {rec.content, rec.visual, rec.gen_total,
                               rec.seam,    rec.perceptual, rec.disc_total};
        for (double v : vals)
            if (!std::isfinite(v))
                throw TrainingError("non-finite loss at iteration " + std::to_string(iteration_) +
                                    " on pair " + source_id);
#ifndef NDEBUG
        for (const auto& r : tensor_refs(gen_))
            for (Eigen::Index k = 0; k < r.size(); ++k)
                if (!std::isfinite(static_cast<double>(r.data[k])))
                    throw TrainingError("non-finite parameter '" + r.name + "' at iteration " +
                                        std::to_string(iteration_));
#endif
        ++iteration_;
    }

    // Draw samples_per_epoch sources (uniform, with replacement), then visit
    // them in ascending variance so every epoch follows the curriculum.
    std::vector<std::size_t> draw_epoch(const std::vector<FoVPair<T>>& data) {
        std::vector<std::size_t> idx(static_cast<std::size_t>(cfg_.samples_per_epoch));
        for (auto& i : idx)
            i = std::min(data.size() - 1, static_cast<std::size_t>(rng_.uniform() * data.size()));
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return data[a].variance < data[b].variance; });
        return idx;
    }

    void run_epoch(const std::vector<FoVPair<T>>& data, CsvLossLog* log) {
        for (std::size_t idx : draw_epoch(data)) {
            const LossRecord rec = training_step(data[idx]);
            if (log) log->append(rec);
        }
    }

    // Snapshots land on epoch boundaries so a resume never re-draws a partial
    // epoch's sample set.
    void maybe_snapshot(const std::string& out_dir) {
        if (out_dir.empty() || cfg_.checkpoint_every <= 0) return;
        const long long prev = iteration_ - cfg_.samples_per_epoch;
        if (iteration_ / cfg_.checkpoint_every == prev / cfg_.checkpoint_every) return;
        std::ostringstream name;
        name << "ckpt_" << std::setw(6) << std::setfill('0') << iteration_ << ".bin";
        save((std::filesystem::path(out_dir) / name.str()).string());
    }

    void scale_refs(const std::vector<TensorRef<T>>& refs, T s) {
        for (const auto& r : refs)
            for (Eigen::Index k = 0; k < r.size(); ++k) r.data[k] *= s;
    }

    std::vector<TensorRef<T>> all_refs() {
        std::vector<TensorRef<T>> refs;
        for (auto& r : tensor_refs(gen_)) refs.push_back({"gen." + r.name, r.data, r.rows, r.cols});
        for (auto& r : tensor_refs(disc_)) refs.push_back({"disc." + r.name, r.data, r.rows, r.cols});
        for (auto& r : adam_g_.state_refs("adam_g")) refs.push_back(std::move(r));
        for (auto& r : adam_d_.state_refs("adam_d")) refs.push_back(std::move(r));
        return refs;
    }

    TrainConfig cfg_;
    Backbone<T> backbone_;
    GeneratorParams<T> gen_;
    DiscriminatorParams<T> disc_;
    Adam<T> adam_g_, adam_d_;
    Rng rng_;
    long long iteration_ = 0;
    long long epoch_ = 0;
    std::string phase_ = "pretrain";
    std::unordered_map<std::string, PairView> cache_;
    std::vector<std::string> consumed_;
};

/// Rebuilds the architecture half of a TrainConfig from a checkpoint's meta
/// block, so inference can instantiate a matching Trainer and load it.
inline TrainConfig config_from_checkpoint(const std::string& path) {
    const nlohmann::json meta = peek_checkpoint_meta(path);
    TrainConfig cfg;
    try {
        const auto& g = meta.at("generator");
        cfg.gen.d = g.at("d").get<int>();
        cfg.gen.n_blocks = g.at("n_blocks").get<int>();
        cfg.gen.r = g.at("r").get<int>();
        cfg.gen.d_attn = g.at("d_attn").get<int>();
        cfg.gen.narrow_channels = g.at("narrow_channels").get<int>();
        cfg.backbone_preset = meta.at("backbone").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("checkpoint " + path + " has no architecture meta: " + e.what());
    }
    return cfg;
}

} // namespace fovsr
