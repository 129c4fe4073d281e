#include "wla/codec.hpp"

namespace wla::codec {

namespace {
constexpr char kMagic[4] = {'W', 'L', 'A', 'T'};
constexpr uint16_t kVersion = 1;
}  // namespace

std::vector<uint8_t> encode_wlat(const WlatFile& f) {
    f.bits.validate();
    const WlatHeader& h = f.header;
    std::vector<uint8_t> out;
    io::put_bytes(out, kMagic, 4);
    io::put<uint16_t>(out, kVersion);
    io::put<uint16_t>(out, 0);
    io::put<uint32_t>(out, static_cast<uint32_t>(h.meta.channels()));
    io::put<uint32_t>(out, static_cast<uint32_t>(h.h));
    io::put<uint32_t>(out, static_cast<uint32_t>(h.w));
    for (int64_t v : {h.patch.ph, h.patch.pw, h.patch.sh, h.patch.sw, h.patch.qh, h.patch.qw}) {
        io::put<uint16_t>(out, static_cast<uint16_t>(v));
    }
    io::put<uint16_t>(out, static_cast<uint16_t>(h.nb));
    io::put<uint16_t>(out, 0);
    io::put<uint64_t>(out, h.fingerprint);
    for (const auto& e : h.meta.entries) {
        io::put<uint16_t>(out, static_cast<uint16_t>(e.var));
        io::put<uint16_t>(out, e.level);
    }
    io::put_bytes(out, h.stats.mean.data(), h.stats.mean.size() * sizeof(float));
    io::put_bytes(out, h.stats.std.data(), h.stats.std.size() * sizeof(float));
    io::put_bytes(out, f.bits.payload.data(), f.bits.payload.size());
    return out;
}

WlatFile decode_wlat(const uint8_t* data, size_t size) {
    io::Reader r(data, size);
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic, not a .wlat file");
    auto version = r.get<uint16_t>();
    if (version != kVersion) throw FormatError("unsupported .wlat version " + std::to_string(version));
    r.get<uint16_t>();
    WlatFile f;
    auto c = r.get<uint32_t>();
    f.header.h = r.get<uint32_t>();
    f.header.w = r.get<uint32_t>();
    f.header.patch.ph = r.get<uint16_t>();
    f.header.patch.pw = r.get<uint16_t>();
    f.header.patch.sh = r.get<uint16_t>();
    f.header.patch.sw = r.get<uint16_t>();
    f.header.patch.qh = r.get<uint16_t>();
    f.header.patch.qw = r.get<uint16_t>();
    f.header.nb = r.get<uint16_t>();
    r.get<uint16_t>();
    f.header.fingerprint = r.get<uint64_t>();
    for (uint32_t i = 0; i < c; ++i) {
        auto code = r.get<uint16_t>();
        auto level = r.get<uint16_t>();
        f.header.meta.entries.push_back({grid::variable_from_code(code), level});
    }
    f.header.stats.mean.resize(c);
    r.get_bytes(f.header.stats.mean.data(), c * sizeof(float));
    f.header.stats.std.resize(c);
    r.get_bytes(f.header.stats.std.data(), c * sizeof(float));
    auto [th, tw] = vae::token_grid_shape(f.header.h, f.header.w, f.header.patch);
    f.bits.th = th;
    f.bits.tw = tw;
    f.bits.nb = f.header.nb;
    int64_t expect = bqm::LatentBits::expected_bytes(th * tw, f.header.nb);
    if (static_cast<int64_t>(r.remaining()) != expect) {
        throw FormatError("payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                          std::to_string(expect));
    }
    f.bits.payload.resize(static_cast<size_t>(expect));
    r.get_bytes(f.bits.payload.data(), f.bits.payload.size());
    return f;
}

void save_wlat(const WlatFile& f, const std::string& path) {
    io::write_file(path, encode_wlat(f));
}

WlatFile load_wlat(const std::string& path) {
    auto bytes = io::read_file(path);
    try {
        return decode_wlat(bytes.data(), bytes.size());
    } catch (const FormatError& e) {
        throw FormatError(std::string(e.what()) + " (" + path + ")");
    }
}

int64_t wlat_header_bytes(const WlatFile& f) {
    return static_cast<int64_t>(encode_wlat(f).size()) - f.payload_bytes();
}

WlatFile compress(const GridField& x, WlaModel& model) {
    if (!(x.meta == model.meta)) {
        throw DataError("field subset " + x.meta.str() + " does not match model subset " +
                        model.meta.str());
    }
    x.validate();
    GridField xn = grid::normalize(x, model.stats);
    auto [th, tw] = vae::token_grid_shape(x.height(), x.width(), model.cfg.patch);
    Graph g;
    g.set_inference(true);
    auto codes = model.encode_codes(g, g.constant(field_to_rows(xn)), x.height(), x.width());
    g.check_finite(codes, "encoder output");
    WlatFile f;
    f.header.meta = model.meta;
    f.header.h = x.height();
    f.header.w = x.width();
    f.header.patch = model.cfg.patch;
    f.header.nb = model.cfg.nb;
    f.header.stats = model.stats;
    f.header.fingerprint = wla_fingerprint(model);
    f.bits = model.quant.harden(g, codes, th, tw);
    return f;
}

GridField decode_latent(const bqm::LatentBits& bits, WlaModel& model, int64_t h, int64_t w) {
    bits.validate();
    Graph g;
    g.set_inference(true);
    auto tokens = model.quant.decode_bits(g, bits);
    auto [th, tw] = vae::token_grid_shape(h, w, model.cfg.patch);
    if (th != bits.th || tw != bits.tw) {
        throw ShapeError("token grid " + std::to_string(bits.th) + "x" + std::to_string(bits.tw) +
                         " does not match geometry for " + std::to_string(h) + "x" +
                         std::to_string(w));
    }
    auto y = model.vaef.decode(g, tokens, th, tw);
    auto recon = model.unify_inv.apply(g, model.vaef.unpatchify(g, y, h, w), model.meta);
    g.check_finite(recon, "decoder output");
    // axes are not part of the bitstream; the equal-angle grid is implied
    GridField out = rows_to_field(g.val(recon), model.meta, GridField::equiangular_lats(h),
                                  GridField::equiangular_lons(w));
    return grid::denormalize(out, model.stats);
}

GridField decompress(const WlatFile& f, WlaModel& model) {
    if (f.header.fingerprint != wla_fingerprint(model)) {
        throw DataError("bitstream was written by a different model (fingerprint mismatch)");
    }
    if (!(f.header.meta == model.meta)) {
        throw DataError("bitstream subset " + f.header.meta.str() + " does not match model");
    }
    return decode_latent(f.bits, model, f.header.h, f.header.w);
}

MeasureReport measure(const WlatFile& f, const GridField& original, WlaModel& model) {
    MeasureReport rep;
    rep.payload_bytes = f.payload_bytes();
    rep.header_bytes = wlat_header_bytes(f);
    double payload_bits = static_cast<double>(rep.payload_bytes) * 8.0;
    double orig_scalars = static_cast<double>(original.values.numel());
    rep.ratio = orig_scalars * 32.0 / payload_bits;
    rep.bpsp = payload_bits / orig_scalars;
    GridField decoded = decompress(f, model);
    rep.weighted_rmse =
        metrics::weighted_rmse(decoded, original, grid::lat_weights(original.lats));
    return rep;
}

}  // namespace wla::codec
