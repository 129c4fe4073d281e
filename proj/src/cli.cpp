#include "wla/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "CLI11.hpp"

#include "wla/downstream.hpp"
#include "wla/latentds.hpp"
#include "wla/plotio.hpp"
#include "wla/train.hpp"

namespace wla::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<int64_t> parse_int_list(const std::string& s) {
    std::vector<int64_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stoll(tok));
    }
    if (out.empty()) throw ConfigError("empty integer list '" + s + "'");
    return out;
}

std::pair<int64_t, int64_t> parse_pair(const std::string& s) {
    auto x = s.find('x');
    if (x == std::string::npos) throw ConfigError("expected AxB, got '" + s + "'");
    return {std::stoll(s.substr(0, x)), std::stoll(s.substr(x + 1))};
}

// every artifact directory carries the exact invocation that produced it
void write_run_config(const std::string& dir, const std::vector<std::string>& args) {
    fs::create_directories(dir);
    json j;
    j["argv"] = args;
    std::ofstream out(dir + "/run_config.json");
    out << j.dump(2) << "\n";
}

vae::PatchConfig patch_from_flags(const std::string& patch, const std::string& stride,
                                  const std::string& pad) {
    vae::PatchConfig p;
    auto [ph, pw] = parse_pair(patch);
    auto [sh, sw] = parse_pair(stride);
    auto [qh, qw] = parse_pair(pad);
    p.ph = ph; p.pw = pw; p.sh = sh; p.sw = sw; p.qh = qh; p.qw = qw;
    p.validate();
    return p;
}

struct MeasureRow {
    int64_t channels;
    int nb;
    bqm::RatioReport rr;
};

void print_measure_table(std::ostream& os, const std::vector<MeasureRow>& rows) {
    os << "channels,nb,H,W,th,tw,ratio_exact,ratio_ideal,bpsp\n";
    for (const auto& r : rows) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%lld,%d,%lld,%lld,%lld,%lld,%.4f,%.4f,%.6f\n",
                      static_cast<long long>(r.channels), r.nb, static_cast<long long>(r.rr.h),
                      static_cast<long long>(r.rr.w), static_cast<long long>(r.rr.th),
                      static_cast<long long>(r.rr.tw), r.rr.ratio_exact, r.rr.ratio_ideal,
                      r.rr.bpsp);
        os << buf;
    }
}

WlaConfig config_from_preset(const std::string& preset) {
    if (preset == "desk") return WlaConfig::desk();
    if (preset == "tiny") return WlaConfig::tiny();
    if (preset == "paper") return WlaConfig::paper();
    throw ConfigError("unknown preset '" + preset + "'");
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read csv " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"weather latent autoencoder toolkit"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: hardware)");

    // ------------------------------------------------------------ gen-data
    auto* gen = app.add_subcommand("gen-data", "write a synthetic trajectory archive");
    std::string gen_out, gen_subset = "t6";
    int64_t gen_h = 64, gen_w = 64, gen_steps = 64;
    uint64_t gen_seed = 1;
    double gen_beta = 3.0, gen_rho = 0.9, gen_amp = 3.0, gen_forcing = 0.02;
    gen->add_option("--out", gen_out, "archive directory")->required();
    gen->add_option("--subset", gen_subset, "subset name, e.g. t6, t25, surface8, tp1-6h");
    gen->add_option("--height", gen_h);
    gen->add_option("--width", gen_w);
    gen->add_option("--timesteps", gen_steps);
    gen->add_option("--seed", gen_seed);
    gen->add_option("--beta", gen_beta, "power-spectrum exponent");
    gen->add_option("--rho", gen_rho, "adjacent-level AR(1) coefficient");
    gen->add_option("--amp", gen_amp, "advection amplitude, pixels per step");
    gen->add_option("--forcing", gen_forcing, "stochastic forcing fraction");

    // ----------------------------------------------------------- train-wla
    auto* tw = app.add_subcommand("train-wla", "train an autoencoder on synthetic or archived data");
    std::string tw_out, tw_subset = "t6", tw_data, tw_preset = "desk", tw_resume;
    int64_t tw_h = 64, tw_w = 64, tw_steps = 2000, tw_batch = 8, tw_ckpt_every = 0;
    uint64_t tw_seed = 0;
    double tw_lambda = 1e-3, tw_train_frac = 0.8;
    int tw_nb = 0;
    int64_t tw_dmodel = 0, tw_c2 = 0;
    int tw_enc = -1, tw_dec = -1;
    tw->add_option("--out", tw_out, "run directory")->required();
    tw->add_option("--subset", tw_subset);
    tw->add_option("--data", tw_data, "archive directory (omit to train on the generator)");
    tw->add_option("--height", tw_h);
    tw->add_option("--width", tw_w);
    tw->add_option("--steps", tw_steps);
    tw->add_option("--batch", tw_batch);
    tw->add_option("--seed", tw_seed);
    tw->add_option("--preset", tw_preset, "desk | tiny | paper");
    tw->add_option("--nb", tw_nb, "codebook bits per token");
    tw->add_option("--d-model", tw_dmodel);
    tw->add_option("--c2", tw_c2, "unified channel count");
    tw->add_option("--enc-depth", tw_enc);
    tw->add_option("--dec-depth", tw_dec);
    tw->add_option("--lambda-entropy", tw_lambda);
    tw->add_option("--train-frac", tw_train_frac, "archive fraction used for training");
    tw->add_option("--checkpoint-every", tw_ckpt_every);
    tw->add_option("--resume", tw_resume, "checkpoint to continue from");

    // ------------------------------------------------------------ compress
    auto* comp = app.add_subcommand("compress", "grid field to latent bitstream");
    std::string comp_model, comp_in, comp_out;
    comp->add_option("--model", comp_model)->required();
    comp->add_option("--input", comp_in)->required();
    comp->add_option("--out", comp_out)->required();

    auto* decomp = app.add_subcommand("decompress", "latent bitstream to grid field");
    std::string dec_model, dec_in, dec_out;
    decomp->add_option("--model", dec_model)->required();
    decomp->add_option("--input", dec_in)->required();
    decomp->add_option("--out", dec_out)->required();

    // ------------------------------------------------------------- measure
    auto* meas = app.add_subcommand("measure", "compression accounting and reconstruction metrics");
    bool meas_dry = false;
    std::string meas_channels = "6,13,25", meas_nb = "128";
    int64_t meas_h = 721, meas_w = 1440;
    std::string meas_patch = "15x14", meas_stride = "10x10", meas_pad = "2x2";
    std::string meas_wlat, meas_orig, meas_model, meas_out;
    meas->add_flag("--dry-run", meas_dry, "geometry-only table, no model needed");
    meas->add_option("--channels", meas_channels, "channel counts, comma separated");
    meas->add_option("--nb", meas_nb, "codebook bits, comma separated");
    meas->add_option("--height", meas_h);
    meas->add_option("--width", meas_w);
    meas->add_option("--patch", meas_patch);
    meas->add_option("--stride", meas_stride);
    meas->add_option("--pad", meas_pad);
    meas->add_option("--wlat", meas_wlat, "bitstream to measure");
    meas->add_option("--original", meas_orig, "original .wgrid");
    meas->add_option("--model", meas_model);
    meas->add_option("--out", meas_out, "csv path");

    // --------------------------------------------------------------- sweep
    auto* sweep = app.add_subcommand("sweep", "pressure-levels x codebook-size ablation grid");
    std::string sw_levels = "6,13,25", sw_nb = "16,32,64,96,128", sw_out;
    int64_t sw_h = 721, sw_w = 1440;
    std::string sw_patch = "15x14", sw_stride = "10x10", sw_pad = "2x2";
    bool sw_retrain = false;
    int64_t sw_steps = 400, sw_train_h = 32, sw_train_w = 32;
    uint64_t sw_seed = 0;
    sweep->add_option("--levels", sw_levels);
    sweep->add_option("--nb", sw_nb);
    sweep->add_option("--height", sw_h);
    sweep->add_option("--width", sw_w);
    sweep->add_option("--patch", sw_patch);
    sweep->add_option("--stride", sw_stride);
    sweep->add_option("--pad", sw_pad);
    sweep->add_option("--out", sw_out, "csv path")->required();
    sweep->add_flag("--retrain", sw_retrain, "also train tiny models and report recon error");
    sweep->add_option("--steps", sw_steps, "retrain steps per grid point");
    sweep->add_option("--train-height", sw_train_h);
    sweep->add_option("--train-width", sw_train_w);
    sweep->add_option("--seed", sw_seed);

    // ------------------------------------------------------ build-latent-ds
    auto* build = app.add_subcommand("build-latent-ds", "compress an archive into a latent dataset");
    std::string b_archive, b_out;
    std::vector<std::string> b_families;
    std::string b_splits = "0.8,0.1,0.1", b_sidecar;
    int64_t b_tps = 25;
    build->add_option("--archive", b_archive)->required();
    build->add_option("--out", b_out)->required();
    build->add_option("--family", b_families, "name=model.wckp, repeatable")->required();
    build->add_option("--splits", b_splits, "train,val,test fractions or absolute ends");
    build->add_option("--sidecar", b_sidecar, "lossless pixel range t0:t1");
    build->add_option("--times-per-shard", b_tps);

    // ------------------------------------------------------ train-forecaster
    auto* tf = app.add_subcommand("train-forecaster", "train the latent task model (BCE on tokens)");
    std::string tf_ds, tf_family, tf_out;
    int64_t tf_window = 3, tf_dmodel = 64, tf_steps = 1500, tf_batch = 4;
    int tf_depth = 2, tf_heads = 4;
    uint64_t tf_seed = 0;
    tf->add_option("--ds", tf_ds, "latent dataset directory")->required();
    tf->add_option("--family", tf_family)->required();
    tf->add_option("--out", tf_out)->required();
    tf->add_option("--window", tf_window);
    tf->add_option("--depth", tf_depth);
    tf->add_option("--d-model", tf_dmodel);
    tf->add_option("--heads", tf_heads);
    tf->add_option("--steps", tf_steps);
    tf->add_option("--batch", tf_batch);
    tf->add_option("--seed", tf_seed);

    // --------------------------------------------------------- eval-forecast
    auto* ef = app.add_subcommand("eval-forecast", "autoregressive rollout metrics vs persistence");
    std::string ef_ds, ef_family, ef_fc, ef_wla, ef_archive, ef_out, ef_pixel;
    int64_t ef_leads = 3, ef_inits = 4;
    ef->add_option("--ds", ef_ds)->required();
    ef->add_option("--family", ef_family)->required();
    ef->add_option("--forecaster", ef_fc)->required();
    ef->add_option("--wla", ef_wla)->required();
    ef->add_option("--archive", ef_archive, "pixel truth for decode-side metrics")->required();
    ef->add_option("--leads", ef_leads);
    ef->add_option("--inits", ef_inits, "number of initial conditions from the test split");
    ef->add_option("--out", ef_out, "report csv")->required();
    ef->add_option("--pixel-baseline", ef_pixel, "pixel forecaster checkpoint to include");

    // ---------------------------------------------------------------- report
    auto* rep = app.add_subcommand("report", "render csv tables into standalone plot files");
    std::string r_out, r_loss, r_sweep, r_forecast, r_mae_pred, r_mae_truth;
    rep->add_option("--out", r_out)->required();
    rep->add_option("--loss", r_loss, "loss.csv from train-wla");
    rep->add_option("--sweep", r_sweep, "sweep csv");
    rep->add_option("--forecast", r_forecast, "eval-forecast csv");
    rep->add_option("--mae-pred", r_mae_pred, "prediction .wgrid for MAE maps");
    rep->add_option("--mae-truth", r_mae_truth, "truth .wgrid for MAE maps");

    std::vector<std::string> argv = args;
    std::reverse(argv.begin(), argv.end());
    try {
        app.parse(argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (threads > 0) kern::set_max_threads(threads);

    try {
        if (*gen) {
            write_run_config(gen_out, args);
            grid::SynthConfig sc{gen_beta, gen_rho};
            grid::FlowConfig fc{gen_amp, gen_forcing};
            auto meta = grid::PVSMeta::named(gen_subset);
            int64_t n = grid::write_trajectory_archive(gen_out, meta, gen_h, gen_w, gen_steps,
                                                       gen_seed, sc, fc);
            std::cout << "wrote " << n << " frames of " << meta.str() << " to " << gen_out << "\n";
        } else if (*tw) {
            write_run_config(tw_out, args);
            WlaConfig cfg = config_from_preset(tw_preset);
            if (tw_nb > 0) cfg.nb = tw_nb;
            if (tw_dmodel > 0) cfg.stack.d_model = tw_dmodel;
            if (tw_c2 > 0) cfg.pvum.c2 = tw_c2;
            if (tw_enc >= 0) cfg.stack.enc_depth = tw_enc;
            if (tw_dec >= 0) cfg.stack.dec_depth = tw_dec;
            auto meta = grid::PVSMeta::named(tw_subset);

            std::unique_ptr<grid::Archive> archive;
            std::unique_ptr<train::DataSource> source;
            if (tw_data.empty()) {
                source = std::make_unique<train::SynthSource>(meta, tw_h, tw_w);
            } else {
                archive = std::make_unique<grid::Archive>(grid::Archive::open(tw_data));
                int64_t t_end = std::max<int64_t>(
                    1, static_cast<int64_t>(tw_train_frac * static_cast<double>(archive->timesteps())));
                source = std::make_unique<train::ArchiveSource>(*archive, meta, 0, t_end);
            }

            WlaModel model = WlaModel::init(cfg, meta, tw_seed);
            ParamStore store;
            model.reg(store);
            if (!tw_resume.empty()) {
                model = load_wla(tw_resume);
                store = ParamStore();
                model.reg(store);
                load_checkpoint(tw_resume, store);
            } else {
                train::fit_norm_stats(model, *source, 16, tw_seed);
            }

            train::TrainConfig tc;
            tc.steps = tw_steps;
            tc.batch = tw_batch;
            tc.seed = tw_seed;
            tc.lambda_entropy = tw_lambda;
            tc.out_dir = tw_out;
            tc.checkpoint_every = tw_ckpt_every;
            auto logs = train::fit(tc, *source, model, store, [](const train::StepLog& s) {
                if (s.step % 50 == 0) {
                    std::cout << "step " << s.step << " lr " << s.lr << " recon " << s.recon
                              << " entropy " << s.entropy << " total " << s.total << "\n";
                }
            });

            std::vector<GridField> test;
            for (int i = 0; i < 4; ++i) {
                test.push_back(source->sample(Rng::derive(tw_seed, 0x7e57ULL + i)));
            }
            auto ev = train::evaluate(model, test);
            std::ofstream(tw_out + "/eval.csv") << ev.csv();
            std::cout << ev.csv();
        } else if (*comp) {
            WlaModel model = load_wla(comp_model);
            auto x = grid::load_wgrid(comp_in);
            auto f = codec::compress(x, model);
            codec::save_wlat(f, comp_out);
            write_run_config(fs::path(comp_out).parent_path().string().empty()
                                 ? "."
                                 : fs::path(comp_out).parent_path().string(),
                             args);
            std::cout << "payload " << f.payload_bytes() << " bytes + header "
                      << codec::wlat_header_bytes(f) << " bytes -> " << comp_out << "\n";
        } else if (*decomp) {
            WlaModel model = load_wla(dec_model);
            auto f = codec::load_wlat(dec_in);
            auto x = codec::decompress(f, model);
            grid::save_wgrid(x, dec_out);
            std::cout << "decoded " << x.meta.str() << " " << x.height() << "x" << x.width()
                      << " -> " << dec_out << "\n";
        } else if (*meas) {
            if (meas_dry) {
                auto patch = patch_from_flags(meas_patch, meas_stride, meas_pad);
                std::vector<MeasureRow> rows;
                for (int64_t c : parse_int_list(meas_channels)) {
                    for (int64_t nb : parse_int_list(meas_nb)) {
                        rows.push_back({c, static_cast<int>(nb),
                                        bqm::compression_ratio(c, meas_h, meas_w, patch,
                                                               static_cast<int>(nb))});
                    }
                }
                print_measure_table(std::cout, rows);
                if (!meas_out.empty()) {
                    std::ofstream out(meas_out);
                    print_measure_table(out, rows);
                }
            } else {
                if (meas_wlat.empty() || meas_orig.empty() || meas_model.empty()) {
                    throw ConfigError("measure needs --wlat, --original and --model (or --dry-run)");
                }
                WlaModel model = load_wla(meas_model);
                auto f = codec::load_wlat(meas_wlat);
                auto orig = grid::load_wgrid(meas_orig);
                auto rep = codec::measure(f, orig, model);
                std::ostringstream os;
                os << "ratio,bpsp,payload_bytes,header_bytes\n"
                   << rep.ratio << "," << rep.bpsp << "," << rep.payload_bytes << ","
                   << rep.header_bytes << "\n\nchannel,weighted_rmse\n";
                for (size_t c = 0; c < rep.weighted_rmse.size(); ++c) {
                    os << orig.meta.entries[c].str() << "," << rep.weighted_rmse[c] << "\n";
                }
                std::cout << os.str();
                if (!meas_out.empty()) std::ofstream(meas_out) << os.str();
            }
        } else if (*sweep) {
            auto patch = patch_from_flags(sw_patch, sw_stride, sw_pad);
            std::ostringstream os;
            os << "levels,nb,ratio,bpsp,recon_rmse_norm\n";
            for (int64_t levels : parse_int_list(sw_levels)) {
                for (int64_t nb : parse_int_list(sw_nb)) {
                    auto rr = bqm::compression_ratio(levels, sw_h, sw_w, patch,
                                                     static_cast<int>(nb));
                    std::string recon = "";
                    if (sw_retrain) {
                        WlaConfig cfg = WlaConfig::tiny();
                        cfg.nb = static_cast<int>(nb);
                        auto meta = grid::PVSMeta::upper_air(
                            grid::VariableId::t, grid::level_set(static_cast<int>(levels)));
                        WlaModel model = WlaModel::init(cfg, meta, sw_seed);
                        ParamStore store;
                        model.reg(store);
                        train::SynthSource source(meta, sw_train_h, sw_train_w);
                        train::fit_norm_stats(model, source, 8, sw_seed);
                        train::TrainConfig tc;
                        tc.steps = sw_steps;
                        tc.batch = 4;
                        tc.seed = sw_seed;
                        tc.schedule.lr_peak = 3e-4;
                        tc.schedule.lr_floor = 3e-5;
                        tc.schedule.warmup_steps = std::max<int64_t>(1, sw_steps / 10);
                        train::fit(tc, source, model, store);
                        std::vector<GridField> test;
                        for (int i = 0; i < 3; ++i) {
                            test.push_back(source.sample(Rng::derive(sw_seed, 0x7e57ULL + i)));
                        }
                        auto ev = train::evaluate(model, test);
                        double norm_rmse = 0.0;
                        for (const auto& ch : ev.channels) norm_rmse += ch.rmse / ch.std_ref;
                        norm_rmse /= static_cast<double>(ev.channels.size());
                        recon = std::to_string(norm_rmse);
                        std::cout << "retrained levels=" << levels << " nb=" << nb
                                  << " recon=" << recon << "\n";
                    }
                    char buf[160];
                    std::snprintf(buf, sizeof(buf), "%lld,%lld,%.4f,%.6f,%s\n",
                                  static_cast<long long>(levels), static_cast<long long>(nb),
                                  rr.ratio_exact, rr.bpsp, recon.c_str());
                    os << buf;
                }
            }
            std::cout << os.str();
            std::ofstream(sw_out) << os.str();
            write_run_config(fs::path(sw_out).parent_path().string().empty()
                                 ? "."
                                 : fs::path(sw_out).parent_path().string(),
                             args);
        } else if (*build) {
            write_run_config(b_out, args);
            auto archive = grid::Archive::open(b_archive);
            std::vector<lds::Family> families;
            for (const auto& f : b_families) {
                auto eq = f.find('=');
                if (eq == std::string::npos) throw ConfigError("--family expects name=model.wckp");
                lds::Family fam;
                fam.name = f.substr(0, eq);
                fam.model_path = f.substr(eq + 1);
                fam.meta = load_wla(fam.model_path).meta;
                families.push_back(std::move(fam));
            }
            auto fracs = b_splits;
            lds::Splits splits;
            {
                std::vector<double> v;
                std::stringstream ss(fracs);
                std::string tok;
                while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
                if (v.size() != 3) throw ConfigError("--splits expects three values");
                double total = static_cast<double>(archive.timesteps());
                if (v[0] + v[1] + v[2] <= 1.5) {  // fractions
                    splits.train_end = static_cast<int64_t>(v[0] * total);
                    splits.val_end = splits.train_end + std::max<int64_t>(1, static_cast<int64_t>(v[1] * total));
                    splits.test_end = archive.timesteps();
                } else {  // absolute ends
                    splits.train_end = static_cast<int64_t>(v[0]);
                    splits.val_end = static_cast<int64_t>(v[1]);
                    splits.test_end = static_cast<int64_t>(v[2]);
                }
            }
            lds::BuildOptions opts;
            opts.times_per_shard = b_tps;
            if (!b_sidecar.empty()) {
                auto colon = b_sidecar.find(':');
                if (colon == std::string::npos) throw ConfigError("--sidecar expects t0:t1");
                opts.sidecar_begin = std::stoll(b_sidecar.substr(0, colon));
                opts.sidecar_end = std::stoll(b_sidecar.substr(colon + 1));
            }
            lds::BuildStats stats;
            auto manifest = lds::build(archive, families, splits, b_out, opts, &stats);
            auto acct = lds::account(manifest);
            std::cout << "shards written " << stats.shards_written << ", skipped "
                      << stats.shards_skipped << "\n"
                      << acct.itemized;
        } else if (*tf) {
            write_run_config(tf_out, args);
            auto manifest = lds::Manifest::load(tf_ds);
            const lds::FamilyManifest* fam = nullptr;
            for (const auto& f : manifest.families) {
                if (f.name == tf_family) fam = &f;
            }
            if (!fam) throw DataError("family '" + tf_family + "' not in dataset");
            auto series = fcst::load_series(tf_ds, *fam, 0, manifest.splits.train_end);
            fcst::WindowConfig wc;
            wc.window = tf_window;
            wc.depth = tf_depth;
            wc.d_model = tf_dmodel;
            wc.heads = tf_heads;
            Rng rng(tf_seed);
            auto model = fcst::Forecaster::init(wc, series.nb, rng);
            ParamStore store;
            model.reg(store, "fc");
            fcst::ForecastTrainConfig fc_cfg;
            fc_cfg.steps = tf_steps;
            fc_cfg.batch = tf_batch;
            fc_cfg.seed = tf_seed;
            auto losses = fcst::fit_forecaster(fc_cfg, model, store, series);
            fcst::save_forecaster(tf_out + "/forecaster.wckp", model, store);
            std::ofstream loss_csv(tf_out + "/loss.csv");
            loss_csv << "step,bce\n";
            for (size_t i = 0; i < losses.size(); ++i) loss_csv << i << "," << losses[i] << "\n";
            std::cout << "final bce " << (losses.empty() ? 0.0 : losses.back()) << " -> "
                      << tf_out << "\n";
        } else if (*ef) {
            auto manifest = lds::Manifest::load(ef_ds);
            const lds::FamilyManifest* fam = nullptr;
            for (const auto& f : manifest.families) {
                if (f.name == ef_family) fam = &f;
            }
            if (!fam) throw DataError("family '" + ef_family + "' not in dataset");
            auto fc_model = fcst::load_forecaster(ef_fc);
            WlaModel wla_model = load_wla(ef_wla);
            auto archive = grid::Archive::open(ef_archive);
            auto series = fcst::load_series(ef_ds, *fam, manifest.splits.val_end,
                                            manifest.splits.test_end);
            std::vector<int64_t> inits;
            int64_t lo = manifest.splits.val_end;
            int64_t hi = manifest.splits.test_end - ef_leads;
            if (hi <= lo) throw ConfigError("test split too short for the requested leads");
            for (int64_t i = 0; i < ef_inits; ++i) {
                int64_t t0 = lo + i * (hi - lo) / ef_inits;
                if (inits.empty() || inits.back() != t0) inits.push_back(t0);
            }
            auto report = fcst::evaluate_forecast(fc_model, series, wla_model, archive, inits,
                                                  ef_leads);
            if (!ef_pixel.empty()) {
                // pixel baseline rows appended with the identical schema
                auto px_ckpt = read_checkpoint_config(ef_pixel);
                json pj = json::parse(px_ckpt);
                fcst::WindowConfig wc;
                wc.window = pj.at("cfg").at("window");
                wc.depth = pj.at("cfg").at("depth");
                wc.d_model = pj.at("cfg").at("d_model");
                wc.heads = pj.at("cfg").at("heads");
                vae::PatchConfig patch;
                patch.ph = pj.at("patch").at("ph");
                patch.pw = pj.at("patch").at("pw");
                patch.sh = pj.at("patch").at("sh");
                patch.sw = pj.at("patch").at("sw");
                patch.qh = pj.at("patch").at("qh");
                patch.qw = pj.at("patch").at("qw");
                Rng rng(0);
                auto px = fcst::PixelForecaster::init(wc, patch, wla_model.meta.channels(), rng);
                ParamStore ps;
                px.reg(ps, "pxfc");
                load_checkpoint(ef_pixel, ps);
                auto px_rep = fcst::evaluate_pixel_forecast(px, archive, wla_model.meta,
                                                            wla_model.stats, inits, ef_leads);
                for (auto& row : px_rep.rows) {
                    if (row.model == "pixel") report.rows.push_back(row);
                }
            }
            std::ofstream(ef_out) << report.csv();
            std::cout << report.csv();
            write_run_config(fs::path(ef_out).parent_path().string().empty()
                                 ? "."
                                 : fs::path(ef_out).parent_path().string(),
                             args);
        } else if (*rep) {
            write_run_config(r_out, args);
            if (!r_loss.empty()) {
                auto rows = read_csv(r_loss);
                plot::Series recon{"recon", {}, {}}, total{"total", {}, {}};
                for (size_t i = 1; i < rows.size(); ++i) {
                    recon.x.push_back(std::stod(rows[i][0]));
                    recon.y.push_back(std::stod(rows[i][2]));
                    total.x.push_back(std::stod(rows[i][0]));
                    total.y.push_back(std::stod(rows[i][4]));
                }
                plot::write_line_svg(r_out + "/loss.svg", "training loss", "step", "loss",
                                     {recon, total}, true);
            }
            if (!r_sweep.empty()) {
                auto rows = read_csv(r_sweep);
                std::map<std::string, plot::Series> by_levels;
                for (size_t i = 1; i < rows.size(); ++i) {
                    auto& s = by_levels[rows[i][0]];
                    s.label = rows[i][0] + " levels";
                    s.x.push_back(std::stod(rows[i][1]));
                    s.y.push_back(std::stod(rows[i][2]));
                }
                std::vector<plot::Series> series;
                for (auto& [k, v] : by_levels) series.push_back(v);
                plot::write_line_svg(r_out + "/ratio_vs_codebook.svg",
                                     "compression ratio vs codebook bits", "codebook bits",
                                     "ratio", series);
            }
            if (!r_forecast.empty()) {
                auto rows = read_csv(r_forecast);
                std::map<std::string, plot::Series> by_model;
                for (size_t i = 1; i < rows.size(); ++i) {
                    // average rmse across channels per (lead, model)
                    by_model[rows[i][1]].label = rows[i][1];
                }
                for (auto& [model, series] : by_model) {
                    std::map<int64_t, std::pair<double, int>> acc;
                    for (size_t i = 1; i < rows.size(); ++i) {
                        if (rows[i][1] != model) continue;
                        auto lead = std::stoll(rows[i][0]);
                        acc[lead].first += std::stod(rows[i][3]);
                        acc[lead].second += 1;
                    }
                    for (const auto& [lead, pr] : acc) {
                        series.x.push_back(static_cast<double>(lead));
                        series.y.push_back(pr.first / pr.second);
                    }
                }
                std::vector<plot::Series> series;
                for (auto& [k, v] : by_model) series.push_back(v);
                plot::write_line_svg(r_out + "/rmse_vs_lead.svg", "decoded RMSE vs lead", "lead",
                                     "weighted RMSE", series);
            }
            if (!r_mae_pred.empty() && !r_mae_truth.empty()) {
                auto pred = grid::load_wgrid(r_mae_pred);
                auto truth = grid::load_wgrid(r_mae_truth);
                auto mae = metrics::mae_map(pred, truth);
                grid::save_wgrid(mae, r_out + "/mae.wgrid");
                plot::write_field_maps(r_out + "/mae", mae);
            }
            std::cout << "reports rendered to " << r_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace wla::cli
