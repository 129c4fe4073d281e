#include "wla/train.hpp"

#include <filesystem>
#include <fstream>

namespace wla::train {

void fit_norm_stats(WlaModel& model, const DataSource& source, int64_t n, uint64_t seed) {
    std::vector<GridField> sample;
    sample.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        sample.push_back(source.sample(Rng::derive(seed, 0x57a75ULL + static_cast<uint64_t>(i))));
    }
    model.stats = grid::compute_norm_stats(sample);
}

std::vector<StepLog> fit(const TrainConfig& cfg_in, const DataSource& source, WlaModel& model,
                         ParamStore& store, const std::function<void(const StepLog&)>& on_step) {
    TrainConfig cfg = cfg_in;
    cfg.normalize();
    cfg.validate();
    if (!(source.meta() == model.meta)) {
        throw DataError("data source subset does not match model subset");
    }
    model.stats.validate(model.meta.channels());

    const int64_t h = source.height(), w = source.width();
    // weights follow the source's own latitude axis
    const auto sample0 = source.sample(Rng::derive(cfg.seed, 0));
    const auto weights = grid::lat_weights(sample0.lats);
    const auto pixel_w = grid::pixel_row_weights(weights, w);

    std::ofstream log_csv;
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        bool fresh = store.step() == 0;
        log_csv.open(cfg.out_dir + "/loss.csv", fresh ? std::ios::trunc : std::ios::app);
        if (fresh) log_csv << "step,lr,recon,entropy,total\n";
    }

    AdamWConfig opt;
    opt.clip_norm = cfg.clip_norm;

    std::vector<StepLog> logs;
    while (store.step() < cfg.steps) {
        int64_t step = store.step();
        double lr = lr_at(cfg.schedule, step);

        Graph g;
        typename Graph::Id total = -1, recon = -1, entropy = -1;
        for (int64_t b = 0; b < cfg.batch; ++b) {
            uint64_t s = Rng::derive(cfg.seed, 0xba7c4ULL + static_cast<uint64_t>(step) *
                                                    static_cast<uint64_t>(cfg.batch) +
                                                    static_cast<uint64_t>(b));
            GridField x = grid::normalize(source.sample(s), model.stats);
            auto xid = g.constant(field_to_rows(x));
            auto parts = wla_loss<float>(g, model, xid, h, w, pixel_w, cfg.lambda_entropy);
            total = b == 0 ? parts.total : g.add(total, parts.total);
            recon = b == 0 ? parts.recon : g.add(recon, parts.recon);
            entropy = b == 0 ? parts.entropy : g.add(entropy, parts.entropy);
        }
        double inv_b = 1.0 / static_cast<double>(cfg.batch);
        total = g.scale(total, inv_b);

        StepLog row{step, lr, g.val(recon)[0] * inv_b, g.val(entropy)[0] * inv_b,
                    g.val(total)[0]};
        if (!std::isfinite(row.total)) {
            if (!cfg.out_dir.empty()) {
                save_wla(cfg.out_dir + "/last_good.wckp", model, store);
            }
            throw NumericError("training diverged at step " + std::to_string(step) +
                               "; last good checkpoint saved");
        }

        g.backward(total);
        optimizer_step(store, g, lr, cfg.weight_decay, opt);

        if (log_csv.is_open()) {
            log_csv << row.step << "," << row.lr << "," << row.recon << "," << row.entropy << ","
                    << row.total << "\n";
        }
        logs.push_back(row);
        if (on_step) on_step(row);

        if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 &&
            store.step() % cfg.checkpoint_every == 0 && store.step() < cfg.steps) {
            save_wla(cfg.out_dir + "/step" + std::to_string(store.step()) + ".wckp", model, store);
        }
    }
    if (!cfg.out_dir.empty()) {
        save_wla(cfg.out_dir + "/final.wckp", model, store);
    }
    return logs;
}

std::string EvalReport::csv() const {
    std::string out = "channel,weighted_rmse,var_std_ref,ratio,bpsp\n";
    for (const auto& c : channels) {
        out += c.channel + "," + std::to_string(c.rmse) + "," + std::to_string(c.std_ref) + "," +
               std::to_string(ratio) + "," + std::to_string(bpsp) + "\n";
    }
    return out;
}

EvalReport evaluate(WlaModel& model, const std::vector<GridField>& test_fields) {
    EvalReport rep;
    if (test_fields.empty()) return rep;
    const auto& f0 = test_fields.front();
    auto rr = bqm::compression_ratio(f0.channels(), f0.height(), f0.width(), model.cfg.patch,
                                     model.cfg.nb);
    rep.ratio = rr.ratio_exact;
    rep.bpsp = rr.bpsp;

    grid::NormStats ref = grid::compute_norm_stats(test_fields);
    std::vector<double> rmse_acc(static_cast<size_t>(f0.channels()), 0.0);
    for (const auto& x : test_fields) {
        auto file = codec::compress(x, model);
        auto decoded = codec::decompress(file, model);
        auto rmse = metrics::weighted_rmse(decoded, x, grid::lat_weights(x.lats));
        for (size_t c = 0; c < rmse.size(); ++c) rmse_acc[c] += rmse[c];
    }
    for (int64_t c = 0; c < f0.channels(); ++c) {
        ChannelEval ce;
        ce.channel = f0.meta.entries[static_cast<size_t>(c)].str();
        ce.rmse = rmse_acc[static_cast<size_t>(c)] / static_cast<double>(test_fields.size());
        ce.std_ref = ref.std[static_cast<size_t>(c)];
        rep.channels.push_back(ce);
    }
    return rep;
}

}  // namespace wla::train
