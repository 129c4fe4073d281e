#include "wla/model.hpp"

namespace wla {

using nlohmann::json;

json WlaConfig::to_json() const {
    return json{{"pvum", {{"d", pvum.d}, {"blocks", pvum.blocks}, {"heads", pvum.heads}, {"c2", pvum.c2}}},
                {"patch", {{"ph", patch.ph}, {"pw", patch.pw}, {"sh", patch.sh}, {"sw", patch.sw}, {"qh", patch.qh}, {"qw", patch.qw}}},
                {"stack", {{"enc_depth", stack.enc_depth}, {"dec_depth", stack.dec_depth}, {"d_model", stack.d_model}, {"heads", stack.heads}}},
                {"nb", nb}};
}

WlaConfig WlaConfig::from_json(const json& j) {
    WlaConfig c;
    const auto& p = j.at("pvum");
    c.pvum.d = p.at("d");
    c.pvum.blocks = p.at("blocks");
    c.pvum.heads = p.at("heads");
    c.pvum.c2 = p.at("c2");
    const auto& pa = j.at("patch");
    c.patch.ph = pa.at("ph");
    c.patch.pw = pa.at("pw");
    c.patch.sh = pa.at("sh");
    c.patch.sw = pa.at("sw");
    c.patch.qh = pa.at("qh");
    c.patch.qw = pa.at("qw");
    const auto& s = j.at("stack");
    c.stack.enc_depth = s.at("enc_depth");
    c.stack.dec_depth = s.at("dec_depth");
    c.stack.d_model = s.at("d_model");
    c.stack.heads = s.at("heads");
    c.nb = j.at("nb");
    c.validate();
    return c;
}

WlaConfig WlaConfig::desk() {
    WlaConfig c;
    c.pvum = {.d = 64, .blocks = 2, .heads = 4, .c2 = 16};
    c.patch = {.ph = 8, .pw = 8, .sh = 6, .sw = 6, .qh = 2, .qw = 2};
    c.stack = {.enc_depth = 4, .dec_depth = 8, .d_model = 128, .heads = 4};
    c.nb = 32;
    return c;
}

WlaConfig WlaConfig::paper() {
    WlaConfig c;
    c.pvum = {.d = 128, .blocks = 4, .heads = 8, .c2 = 64};
    c.patch = {.ph = 15, .pw = 14, .sh = 10, .sw = 10, .qh = 2, .qw = 2};
    c.stack = {.enc_depth = 16, .dec_depth = 32, .d_model = 256, .heads = 8};
    c.nb = 128;
    return c;
}

WlaConfig WlaConfig::tiny() {
    WlaConfig c;
    c.pvum = {.d = 32, .blocks = 1, .heads = 2, .c2 = 8};
    c.patch = {.ph = 8, .pw = 8, .sh = 8, .sw = 8, .qh = 0, .qw = 0};
    c.stack = {.enc_depth = 1, .dec_depth = 2, .d_model = 48, .heads = 2};
    c.nb = 16;
    return c;
}

Tensor field_to_rows(const GridField& f) {
    int64_t c = f.channels(), plane = f.height() * f.width();
    Tensor rows({plane, c});
    for (int64_t ch = 0; ch < c; ++ch) {
        const float* src = f.channel(ch);
        for (int64_t p = 0; p < plane; ++p) rows[p * c + ch] = src[p];
    }
    return rows;
}

grid::GridField rows_to_field(const Tensor& rows, const grid::PVSMeta& meta,
                              const std::vector<float>& lats, const std::vector<float>& lons) {
    int64_t h = static_cast<int64_t>(lats.size());
    int64_t w = static_cast<int64_t>(lons.size());
    int64_t c = rows.shape[1];
    if (rows.shape[0] != h * w || c != meta.channels()) {
        throw ShapeError("rows " + rows.shape_str() + " do not match grid " + std::to_string(h) +
                         "x" + std::to_string(w) + " with " + std::to_string(meta.channels()) +
                         " channels");
    }
    grid::GridField f;
    f.meta = meta;
    f.lats = lats;
    f.lons = lons;
    f.values = Tensor({c, h, w});
    for (int64_t ch = 0; ch < c; ++ch) {
        float* dst = f.channel(ch);
        for (int64_t p = 0; p < h * w; ++p) dst[p] = rows[p * c + ch];
    }
    return f;
}

namespace grid {

json meta_to_json(const PVSMeta& meta) {
    json arr = json::array();
    for (const auto& e : meta.entries) {
        arr.push_back({static_cast<uint16_t>(e.var), e.level});
    }
    return arr;
}

PVSMeta meta_from_json(const json& j) {
    PVSMeta m;
    for (const auto& e : j) {
        m.entries.push_back({variable_from_code(e.at(0).get<uint16_t>()), e.at(1).get<uint16_t>()});
    }
    m.validate();
    return m;
}

}  // namespace grid

std::string wla_config_json(const WlaModel& model) {
    json j;
    j["kind"] = "wla";
    j["config"] = model.cfg.to_json();
    j["meta"] = grid::meta_to_json(model.meta);
    j["stats"] = {{"mean", model.stats.mean}, {"std", model.stats.std}};
    return j.dump();
}

void save_wla(const std::string& path, const WlaModel& model, const ParamStore& store) {
    save_checkpoint(path, store, wla_config_json(model));
}

void save_wla(const std::string& path, WlaModel& model) {
    ParamStore ps;
    model.reg(ps);
    save_checkpoint(path, ps, wla_config_json(model));
}

WlaModel load_wla(const std::string& path, int64_t* step_out) {
    json j = json::parse(read_checkpoint_config(path));
    if (j.value("kind", "") != "wla") throw FormatError("checkpoint is not a WLA model: " + path);
    WlaConfig cfg = WlaConfig::from_json(j.at("config"));
    grid::PVSMeta meta = grid::meta_from_json(j.at("meta"));
    WlaModel m = WlaModel::init(cfg, meta, 0);
    m.stats.mean = j.at("stats").at("mean").get<std::vector<float>>();
    m.stats.std = j.at("stats").at("std").get<std::vector<float>>();
    ParamStore ps;
    m.reg(ps);
    load_checkpoint(path, ps, step_out);
    return m;
}

uint64_t wla_fingerprint(WlaModel& model) {
    ParamStore ps;
    model.reg(ps);
    return fingerprint(ps);
}

}  // namespace wla
