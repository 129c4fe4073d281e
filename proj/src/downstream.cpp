#include "wla/downstream.hpp"

#include <cmath>

namespace wla::fcst {

using nlohmann::json;

bqm::LatentBits bits_from_logits(const Tensor& logits, int64_t th, int64_t tw) {
    Tensor signs(logits.shape);
    for (int64_t i = 0; i < logits.numel(); ++i) signs[i] = logits[i] >= 0.0f ? 1.0f : -1.0f;
    return bqm::pack_bits(signs, th, tw);
}

double bit_accuracy(const bqm::LatentBits& a, const bqm::LatentBits& b) {
    if (a.th != b.th || a.tw != b.tw || a.nb != b.nb) {
        throw ShapeError("bit_accuracy: mismatched token grids");
    }
    Tensor sa = bqm::unpack_bits(a), sb = bqm::unpack_bits(b);
    int64_t same = 0;
    for (int64_t i = 0; i < sa.numel(); ++i) same += sa[i] == sb[i] ? 1 : 0;
    return static_cast<double>(same) / static_cast<double>(sa.numel());
}

LatentSeries load_series(const std::string& ds_dir, const lds::FamilyManifest& fam,
                         int64_t t_begin, int64_t t_end) {
    LatentSeries s;
    s.t_begin = t_begin;
    for (int64_t t = t_begin; t < t_end; ++t) {
        auto file = lds::load_latent(ds_dir, fam, t);
        if (s.bits.empty()) {
            s.th = file.bits.th;
            s.tw = file.bits.tw;
            s.nb = file.bits.nb;
        }
        s.bits.push_back(std::move(file.bits));
    }
    return s;
}

std::vector<double> fit_forecaster(const ForecastTrainConfig& cfg, Forecaster& model,
                                   ParamStore& store, const LatentSeries& series) {
    if (series.bits.size() < 2) throw DataError("need at least two snapshots to form pairs");
    Schedule sched = cfg.schedule;
    if (sched.total_steps < cfg.steps) sched.total_steps = cfg.steps;
    AdamWConfig opt;
    opt.clip_norm = cfg.clip_norm;
    int64_t pairs = static_cast<int64_t>(series.bits.size()) - 1;

    std::vector<double> losses;
    while (store.step() < cfg.steps) {
        int64_t step = store.step();
        Graph g;
        typename Graph::Id total = -1;
        for (int64_t b = 0; b < cfg.batch; ++b) {
            Rng r(Rng::derive(cfg.seed, 0xf0c45ULL + static_cast<uint64_t>(step * cfg.batch + b)));
            int64_t t = static_cast<int64_t>(r.below(static_cast<uint64_t>(pairs)));
            auto input = g.constant(bqm::dequantize_bits<float>(series.bits[static_cast<size_t>(t)]));
            auto logits = model.forward(g, input, series.th, series.tw);
            auto loss = g.bce_logits(logits, bce_targets<float>(series.bits[static_cast<size_t>(t + 1)]));
            total = b == 0 ? loss : g.add(total, loss);
        }
        total = g.scale(total, 1.0 / static_cast<double>(cfg.batch));
        double lv = g.val(total)[0];
        if (!std::isfinite(lv)) throw NumericError("forecaster training diverged");
        g.backward(total);
        optimizer_step(store, g, lr_at(sched, step), cfg.weight_decay, opt);
        losses.push_back(lv);
    }
    return losses;
}

void save_forecaster(const std::string& path, const Forecaster& model, const ParamStore& store) {
    json j;
    j["kind"] = "forecaster";
    j["cfg"] = {{"window", model.cfg.window},
                {"depth", model.cfg.depth},
                {"d_model", model.cfg.d_model},
                {"heads", model.cfg.heads},
                {"copy_head", model.cfg.copy_head}};
    j["nb"] = model.nb;
    save_checkpoint(path, store, j.dump());
}

Forecaster load_forecaster(const std::string& path) {
    json j = json::parse(read_checkpoint_config(path));
    if (j.value("kind", "") != "forecaster") {
        throw FormatError("checkpoint is not a forecaster: " + path);
    }
    WindowConfig cfg;
    cfg.window = j.at("cfg").at("window");
    cfg.depth = j.at("cfg").at("depth");
    cfg.d_model = j.at("cfg").at("d_model");
    cfg.heads = j.at("cfg").at("heads");
    cfg.copy_head = j.at("cfg").at("copy_head");
    Rng rng(0);
    Forecaster f = Forecaster::init(cfg, j.at("nb"), rng);
    ParamStore ps;
    f.reg(ps, "fc");
    load_checkpoint(path, ps);
    return f;
}

void save_pixel_forecaster(const std::string& path, const PixelForecaster& model,
                           const ParamStore& store) {
    json j;
    j["kind"] = "pixel_forecaster";
    j["cfg"] = {{"window", model.cfg.window},
                {"depth", model.cfg.depth},
                {"d_model", model.cfg.d_model},
                {"heads", model.cfg.heads}};
    j["patch"] = {{"ph", model.patch.ph}, {"pw", model.patch.pw}, {"sh", model.patch.sh},
                  {"sw", model.patch.sw}, {"qh", model.patch.qh}, {"qw", model.patch.qw}};
    j["channels"] = model.channels;
    save_checkpoint(path, store, j.dump());
}

PixelForecaster load_pixel_forecaster(const std::string& path) {
    json j = json::parse(read_checkpoint_config(path));
    if (j.value("kind", "") != "pixel_forecaster") {
        throw FormatError("checkpoint is not a pixel forecaster: " + path);
    }
    WindowConfig cfg;
    cfg.window = j.at("cfg").at("window");
    cfg.depth = j.at("cfg").at("depth");
    cfg.d_model = j.at("cfg").at("d_model");
    cfg.heads = j.at("cfg").at("heads");
    vae::PatchConfig patch;
    patch.ph = j.at("patch").at("ph");
    patch.pw = j.at("patch").at("pw");
    patch.sh = j.at("patch").at("sh");
    patch.sw = j.at("patch").at("sw");
    patch.qh = j.at("patch").at("qh");
    patch.qw = j.at("patch").at("qw");
    Rng rng(0);
    PixelForecaster f = PixelForecaster::init(cfg, patch, j.at("channels"), rng);
    ParamStore ps;
    f.reg(ps, "pxfc");
    load_checkpoint(path, ps);
    return f;
}

// ----------------------------------------------------------------- rollout

namespace {

struct MetricAcc {
    double rmse = 0.0;
    std::vector<double> sedi;
    double bit_acc = 0.0;
    int64_t n = 0;
};

std::string csv_num(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

std::string ForecastReport::csv() const {
    std::string out = "lead,model,channel,rmse";
    for (double q : quantiles) {
        out += ",sedi@" + std::to_string(static_cast<int>(q * 100));
    }
    out += ",bit_accuracy\n";
    for (const auto& r : rows) {
        out += std::to_string(r.lead) + "," + r.model + "," + r.channel + "," + csv_num(r.rmse);
        for (double s : r.sedi) out += "," + csv_num(s);
        out += "," + csv_num(r.bit_acc) + "\n";
    }
    return out;
}

ForecastReport evaluate_forecast(Forecaster& fc, const LatentSeries& series, WlaModel& wla,
                                 const grid::Archive& truth, const std::vector<int64_t>& inits,
                                 int64_t max_lead) {
    ForecastReport rep;
    const auto& quants = rep.quantiles;
    GridField probe = truth.subset(wla.meta, inits.at(0));
    int64_t h = probe.height(), w = probe.width();
    int64_t c = probe.channels();
    auto weights = grid::lat_weights(probe.lats);

    // accumulators keyed (lead, model, channel)
    auto key = [&](int64_t lead, int m, int64_t ch) {
        return (lead * 2 + m) * c + ch;
    };
    std::vector<MetricAcc> acc(static_cast<size_t>((max_lead + 1) * 2 * c));
    for (auto& a : acc) a.sedi.assign(quants.size(), 0.0);

    for (int64_t t0 : inits) {
        bqm::LatentBits cur = series.at(t0);
        const bqm::LatentBits persist = series.at(t0);
        GridField persist_px = codec::decode_latent(persist, wla, h, w);
        for (int64_t lead = 0; lead <= max_lead; ++lead) {
            if (lead > 0) {
                Graph g;
                g.set_inference(true);
                auto logits = fc.forward(g, g.constant(bqm::dequantize_bits<float>(cur)),
                                         series.th, series.tw);
                g.check_finite(logits, "forecaster rollout");
                cur = bits_from_logits(g.val(logits), series.th, series.tw);
            }
            GridField truth_px = truth.subset(wla.meta, t0 + lead);
            const bqm::LatentBits& target_bits = series.at(t0 + lead);

            GridField pred_px = lead == 0 ? persist_px : codec::decode_latent(cur, wla, h, w);
            auto rmse_l = metrics::weighted_rmse(pred_px, truth_px, weights);
            auto sedi_l = metrics::sedi(pred_px, truth_px, quants);
            auto rmse_p = metrics::weighted_rmse(persist_px, truth_px, weights);
            auto sedi_p = metrics::sedi(persist_px, truth_px, quants);
            double ba_l = bit_accuracy(cur, target_bits);
            double ba_p = bit_accuracy(persist, target_bits);
            for (int64_t ch = 0; ch < c; ++ch) {
                auto& al = acc[static_cast<size_t>(key(lead, 0, ch))];
                al.rmse += rmse_l[static_cast<size_t>(ch)];
                al.bit_acc += ba_l;
                for (size_t qi = 0; qi < quants.size(); ++qi) {
                    al.sedi[qi] += sedi_l.per_channel[static_cast<size_t>(ch)][qi].sedi;
                }
                al.n += 1;
                auto& ap = acc[static_cast<size_t>(key(lead, 1, ch))];
                ap.rmse += rmse_p[static_cast<size_t>(ch)];
                ap.bit_acc += ba_p;
                for (size_t qi = 0; qi < quants.size(); ++qi) {
                    ap.sedi[qi] += sedi_p.per_channel[static_cast<size_t>(ch)][qi].sedi;
                }
                ap.n += 1;
            }
        }
    }

    for (int64_t lead = 0; lead <= max_lead; ++lead) {
        for (int m = 0; m < 2; ++m) {
            for (int64_t ch = 0; ch < c; ++ch) {
                const auto& a = acc[static_cast<size_t>(key(lead, m, ch))];
                ForecastRow row;
                row.lead = lead;
                row.model = m == 0 ? "latent" : "persistence";
                row.channel = probe.meta.entries[static_cast<size_t>(ch)].str();
                row.rmse = a.rmse / static_cast<double>(a.n);
                for (double s : a.sedi) row.sedi.push_back(s / static_cast<double>(a.n));
                row.bit_acc = a.bit_acc / static_cast<double>(a.n);
                rep.rows.push_back(std::move(row));
            }
        }
    }
    return rep;
}

// ------------------------------------------------------------------- pixel

std::vector<double> fit_pixel_forecaster(const ForecastTrainConfig& cfg, PixelForecaster& model,
                                         ParamStore& store, const grid::Archive& archive,
                                         const grid::PVSMeta& meta, const grid::NormStats& stats,
                                         int64_t t_begin, int64_t t_end) {
    if (t_end - t_begin < 2) throw DataError("need at least two frames to form pairs");
    Schedule sched = cfg.schedule;
    if (sched.total_steps < cfg.steps) sched.total_steps = cfg.steps;
    AdamWConfig opt;
    opt.clip_norm = cfg.clip_norm;
    GridField probe = archive.subset(meta, t_begin);
    int64_t h = probe.height(), w = probe.width();
    auto pixel_w = grid::pixel_row_weights(grid::lat_weights(probe.lats), w);
    int64_t pairs = t_end - t_begin - 1;

    std::vector<double> losses;
    while (store.step() < cfg.steps) {
        int64_t step = store.step();
        Graph g;
        typename Graph::Id total = -1;
        for (int64_t b = 0; b < cfg.batch; ++b) {
            Rng r(Rng::derive(cfg.seed, 0x9e1f5ULL + static_cast<uint64_t>(step * cfg.batch + b)));
            int64_t t = t_begin + static_cast<int64_t>(r.below(static_cast<uint64_t>(pairs)));
            auto x = g.constant(field_to_rows(grid::normalize(archive.subset(meta, t), stats)));
            auto y = g.constant(field_to_rows(grid::normalize(archive.subset(meta, t + 1), stats)));
            auto pred = model.forward(g, x, h, w);
            auto loss = g.weighted_mse(pred, y, pixel_w);
            total = b == 0 ? loss : g.add(total, loss);
        }
        total = g.scale(total, 1.0 / static_cast<double>(cfg.batch));
        double lv = g.val(total)[0];
        if (!std::isfinite(lv)) throw NumericError("pixel forecaster training diverged");
        g.backward(total);
        optimizer_step(store, g, lr_at(sched, step), cfg.weight_decay, opt);
        losses.push_back(lv);
    }
    return losses;
}

ForecastReport evaluate_pixel_forecast(PixelForecaster& fc, const grid::Archive& truth,
                                       const grid::PVSMeta& meta, const grid::NormStats& stats,
                                       const std::vector<int64_t>& inits, int64_t max_lead) {
    ForecastReport rep;
    const auto& quants = rep.quantiles;
    GridField probe = truth.subset(meta, inits.at(0));
    int64_t h = probe.height(), w = probe.width();
    int64_t c = probe.channels();
    auto weights = grid::lat_weights(probe.lats);

    auto key = [&](int64_t lead, int m, int64_t ch) { return (lead * 2 + m) * c + ch; };
    std::vector<MetricAcc> acc(static_cast<size_t>((max_lead + 1) * 2 * c));
    for (auto& a : acc) a.sedi.assign(quants.size(), 0.0);

    for (int64_t t0 : inits) {
        GridField persist_px = truth.subset(meta, t0);
        GridField cur = persist_px;
        for (int64_t lead = 0; lead <= max_lead; ++lead) {
            if (lead > 0) {
                Graph g;
                g.set_inference(true);
                auto pred = fc.forward(g, g.constant(field_to_rows(grid::normalize(cur, stats))),
                                       h, w);
                g.check_finite(pred, "pixel rollout");
                cur = grid::denormalize(rows_to_field(g.val(pred), meta, cur.lats, cur.lons),
                                        stats);
            }
            GridField truth_px = truth.subset(meta, t0 + lead);
            auto rmse_l = metrics::weighted_rmse(cur, truth_px, weights);
            auto sedi_l = metrics::sedi(cur, truth_px, quants);
            auto rmse_p = metrics::weighted_rmse(persist_px, truth_px, weights);
            auto sedi_p = metrics::sedi(persist_px, truth_px, quants);
            for (int64_t ch = 0; ch < c; ++ch) {
                auto& al = acc[static_cast<size_t>(key(lead, 0, ch))];
                al.rmse += rmse_l[static_cast<size_t>(ch)];
                for (size_t qi = 0; qi < quants.size(); ++qi) {
                    al.sedi[qi] += sedi_l.per_channel[static_cast<size_t>(ch)][qi].sedi;
                }
                al.n += 1;
                auto& ap = acc[static_cast<size_t>(key(lead, 1, ch))];
                ap.rmse += rmse_p[static_cast<size_t>(ch)];
                for (size_t qi = 0; qi < quants.size(); ++qi) {
                    ap.sedi[qi] += sedi_p.per_channel[static_cast<size_t>(ch)][qi].sedi;
                }
                ap.n += 1;
            }
        }
    }

    for (int64_t lead = 0; lead <= max_lead; ++lead) {
        for (int m = 0; m < 2; ++m) {
            for (int64_t ch = 0; ch < c; ++ch) {
                const auto& a = acc[static_cast<size_t>(key(lead, m, ch))];
                ForecastRow row;
                row.lead = lead;
                row.model = m == 0 ? "pixel" : "persistence";
                row.channel = probe.meta.entries[static_cast<size_t>(ch)].str();
                row.rmse = a.rmse / static_cast<double>(a.n);
                for (double s : a.sedi) row.sedi.push_back(s / static_cast<double>(a.n));
                row.bit_acc = std::nan("");
                rep.rows.push_back(std::move(row));
            }
        }
    }
    return rep;
}

}  // namespace wla::fcst
