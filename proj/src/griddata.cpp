#include "wla/griddata.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <mutex>

namespace wla::grid {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

// --------------------------------------------------------------- variables

namespace {
struct VarInfo {
    VariableId id;
    const char* name;
    double base_mean;
    double base_std;
};

// characteristic units for the synthetic generator; rough ERA5 magnitudes
const VarInfo kVars[] = {
    {VariableId::z, "z", 50000.0, 3000.0},
    {VariableId::u, "u", 0.0, 10.0},
    {VariableId::v, "v", 0.0, 8.0},
    {VariableId::w, "w", 0.0, 0.2},
    {VariableId::t, "t", 250.0, 25.0},
    {VariableId::q, "q", 0.005, 0.004},
    {VariableId::u10, "10u", 0.0, 5.0},
    {VariableId::v10, "10v", 0.0, 4.5},
    {VariableId::u100, "100u", 0.0, 6.0},
    {VariableId::v100, "100v", 0.0, 5.5},
    {VariableId::t2m, "t2m", 285.0, 15.0},
    {VariableId::tcc, "tcc", 0.5, 0.3},
    {VariableId::sp, "sp", 96000.0, 8000.0},
    {VariableId::msl, "msl", 101300.0, 1200.0},
    {VariableId::tp1h, "tp1h", 0.2, 0.5},
    {VariableId::tp2h, "tp2h", 0.4, 0.8},
    {VariableId::tp3h, "tp3h", 0.6, 1.0},
    {VariableId::tp4h, "tp4h", 0.8, 1.2},
    {VariableId::tp5h, "tp5h", 1.0, 1.4},
    {VariableId::tp6h, "tp6h", 1.2, 1.6},
};

const VarInfo& info(VariableId v) {
    for (const auto& e : kVars) {
        if (e.id == v) return e;
    }
    throw DataError("unknown variable id " + std::to_string(static_cast<int>(v)));
}
}  // namespace

const char* variable_name(VariableId v) { return info(v).name; }

VariableId variable_from_name(const std::string& name) {
    for (const auto& e : kVars) {
        if (name == e.name) return e.id;
    }
    throw DataError("unknown variable name '" + name + "'");
}

VariableId variable_from_code(uint16_t code) {
    for (const auto& e : kVars) {
        if (static_cast<uint16_t>(e.id) == code) return e.id;
    }
    throw DataError("unknown variable code " + std::to_string(code));
}

int64_t variable_dense_index(VariableId v) {
    int64_t i = 0;
    for (const auto& e : kVars) {
        if (e.id == v) return i;
        ++i;
    }
    throw DataError("unknown variable id " + std::to_string(static_cast<int>(v)));
}

int64_t variable_count() { return static_cast<int64_t>(std::size(kVars)); }

bool is_upper_air(VariableId v) { return static_cast<uint16_t>(v) <= 5; }
bool is_surface(VariableId v) {
    auto c = static_cast<uint16_t>(v);
    return c >= 10 && c <= 17;
}
bool is_precip(VariableId v) { return static_cast<uint16_t>(v) >= 20; }

std::string PVEntry::str() const {
    if (level == kSurfaceLevel) return variable_name(var);
    return std::string(variable_name(var)) + std::to_string(level);
}

void PVSMeta::validate() const {
    if (entries.empty()) throw DataError("empty pressure-variable subset");
    for (size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].level != kSurfaceLevel && is_upper_air(entries[i].var) == false) {
            throw DataError("variable " + std::string(variable_name(entries[i].var)) +
                            " cannot carry a pressure level");
        }
        for (size_t j = i + 1; j < entries.size(); ++j) {
            if (entries[i] == entries[j]) {
                throw DataError("duplicate subset entry " + entries[i].str());
            }
        }
    }
}

std::string PVSMeta::str() const {
    std::string s = "{";
    for (size_t i = 0; i < entries.size(); ++i) {
        if (i) s += ",";
        s += entries[i].str();
    }
    return s + "}";
}

PVSMeta PVSMeta::upper_air(VariableId var, const std::vector<uint16_t>& levels) {
    PVSMeta m;
    for (uint16_t l : levels) m.entries.push_back({var, l});
    m.validate();
    return m;
}

PVSMeta PVSMeta::surface(const std::vector<VariableId>& vars) {
    PVSMeta m;
    for (VariableId v : vars) m.entries.push_back({v, kSurfaceLevel});
    m.validate();
    return m;
}

const std::vector<uint16_t>& level_set(int count) {
    static const std::vector<uint16_t> l25 = {10,  30,  50,  70,  100, 125, 150, 175, 200,
                                              225, 250, 300, 350, 400, 450, 500, 550, 600,
                                              650, 700, 750, 800, 850, 925, 1000};
    static const std::vector<uint16_t> l13 = {50,  100, 150, 200, 250, 300, 400,
                                              500, 600, 700, 850, 925, 1000};
    static const std::vector<uint16_t> l6 = {100, 250, 500, 700, 850, 1000};
    switch (count) {
        case 25: return l25;
        case 13: return l13;
        case 6: return l6;
        default: throw ConfigError("no standard level set with " + std::to_string(count) + " levels");
    }
}

PVSMeta PVSMeta::named(const std::string& name) {
    if (name == "surface8") {
        return surface({VariableId::v10, VariableId::u10, VariableId::v100, VariableId::u100,
                        VariableId::t2m, VariableId::tcc, VariableId::sp, VariableId::msl});
    }
    if (name == "surface4") {
        return surface({VariableId::v10, VariableId::u10, VariableId::tcc, VariableId::msl});
    }
    if (name == "tp1h") return surface({VariableId::tp1h});
    if (name == "tp6h") return surface({VariableId::tp6h});
    if (name == "tp1-6h") {
        return surface({VariableId::tp1h, VariableId::tp2h, VariableId::tp3h, VariableId::tp4h,
                        VariableId::tp5h, VariableId::tp6h});
    }
    // upper-air: variable name followed by a level count, e.g. "t25", "q6"
    for (int count : {25, 13, 6}) {
        std::string suffix = std::to_string(count);
        if (name.size() > suffix.size() && name.ends_with(suffix)) {
            std::string var = name.substr(0, name.size() - suffix.size());
            return upper_air(variable_from_name(var), level_set(count));
        }
    }
    throw ConfigError("unknown subset name '" + name + "'");
}

// -------------------------------------------------------------- grid field

void GridField::validate() const {
    meta.validate();
    if (values.ndim() != 3) throw ShapeError("grid values must be C x H x W");
    if (channels() != meta.channels()) {
        throw ShapeError("channel count " + std::to_string(channels()) +
                         " does not match subset size " + std::to_string(meta.channels()));
    }
    if (static_cast<int64_t>(lats.size()) != height() ||
        static_cast<int64_t>(lons.size()) != width()) {
        throw ShapeError("axis lengths do not match grid extents");
    }
    for (size_t i = 1; i < lats.size(); ++i) {
        if (!(lats[i] < lats[i - 1])) throw DataError("latitudes must be strictly descending");
    }
    if (!values.all_finite()) throw NumericError("grid contains non-finite values");
}

std::vector<float> GridField::equiangular_lats(int64_t h) {
    // north to south inclusive of the poles, ERA5 orientation
    std::vector<float> lats(h);
    for (int64_t i = 0; i < h; ++i) {
        lats[i] = static_cast<float>(90.0 - 180.0 * static_cast<double>(i) / static_cast<double>(h - 1));
    }
    return lats;
}

std::vector<float> GridField::equiangular_lons(int64_t w) {
    std::vector<float> lons(w);
    for (int64_t i = 0; i < w; ++i) {
        lons[i] = static_cast<float>(360.0 * static_cast<double>(i) / static_cast<double>(w));
    }
    return lons;
}

GridField GridField::empty(PVSMeta meta, int64_t h, int64_t w) {
    GridField f;
    f.meta = std::move(meta);
    f.lats = equiangular_lats(h);
    f.lons = equiangular_lons(w);
    f.values = Tensor({f.meta.channels(), h, w});
    return f;
}

GridField select_subset(const GridField& src, const PVSMeta& meta) {
    meta.validate();
    GridField out;
    out.meta = meta;
    out.lats = src.lats;
    out.lons = src.lons;
    out.values = Tensor({meta.channels(), src.height(), src.width()});
    int64_t plane = src.height() * src.width();
    for (int64_t c = 0; c < meta.channels(); ++c) {
        const PVEntry& want = meta.entries[static_cast<size_t>(c)];
        int64_t found = -1;
        for (int64_t s = 0; s < src.channels(); ++s) {
            if (src.meta.entries[static_cast<size_t>(s)] == want) {
                found = s;
                break;
            }
        }
        if (found < 0) throw DataError("subset entry " + want.str() + " not present in source field");
        std::copy(src.channel(found), src.channel(found) + plane, out.channel(c));
    }
    return out;
}

// ------------------------------------------------------------ normalization

void NormStats::validate(int64_t channels) const {
    if (static_cast<int64_t>(mean.size()) != channels ||
        static_cast<int64_t>(std.size()) != channels) {
        throw ShapeError("normalization stats have " + std::to_string(mean.size()) +
                         " channels, field has " + std::to_string(channels));
    }
    for (float s : std) {
        if (!(s > 0.0f)) throw DataError("normalization std must be positive");
    }
}

NormStats compute_norm_stats(const std::vector<GridField>& fields) {
    if (fields.empty()) throw DataError("no fields to compute stats from");
    int64_t c = fields.front().channels();
    int64_t plane = fields.front().height() * fields.front().width();
    NormStats st;
    st.mean.resize(c);
    st.std.resize(c);
    for (int64_t ch = 0; ch < c; ++ch) {
        double sum = 0.0, sumsq = 0.0;
        int64_t n = 0;
        for (const auto& f : fields) {
            const float* p = f.channel(ch);
            for (int64_t i = 0; i < plane; ++i) {
                sum += p[i];
                sumsq += static_cast<double>(p[i]) * p[i];
            }
            n += plane;
        }
        double mean = sum / static_cast<double>(n);
        double var = sumsq / static_cast<double>(n) - mean * mean;
        st.mean[ch] = static_cast<float>(mean);
        st.std[ch] = static_cast<float>(std::sqrt(std::max(var, 1e-12)));
    }
    return st;
}

namespace {
GridField apply_affine(const GridField& x, const NormStats& stats, bool forward) {
    stats.validate(x.channels());
    GridField out = x;
    int64_t plane = x.height() * x.width();
    for (int64_t c = 0; c < x.channels(); ++c) {
        float mean = stats.mean[c], sd = stats.std[c];
        float* p = out.channel(c);
        if (forward) {
            float inv = 1.0f / sd;
            for (int64_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * inv;
        } else {
            for (int64_t i = 0; i < plane; ++i) p[i] = p[i] * sd + mean;
        }
    }
    return out;
}
}  // namespace

GridField normalize(const GridField& x, const NormStats& stats) {
    return apply_affine(x, stats, true);
}
GridField denormalize(const GridField& x, const NormStats& stats) {
    return apply_affine(x, stats, false);
}

// ---------------------------------------------------------- latitude weight

LatWeights lat_weights(const std::vector<float>& lats) {
    LatWeights lw;
    lw.w.resize(lats.size());
    double sum = 0.0;
    for (float lat : lats) {
        if (std::fabs(lat) > 90.0f + 1e-4f) throw DataError("latitude outside [-90, 90]");
        sum += std::cos(static_cast<double>(lat) * kPi / 180.0);
    }
    double mean = sum / static_cast<double>(lats.size());
    for (size_t i = 0; i < lats.size(); ++i) {
        lw.w[i] = static_cast<float>(std::cos(static_cast<double>(lats[i]) * kPi / 180.0) / mean);
    }
    return lw;
}

std::vector<float> pixel_row_weights(const LatWeights& lw, int64_t w) {
    std::vector<float> out(lw.w.size() * static_cast<size_t>(w));
    for (size_t y = 0; y < lw.w.size(); ++y) {
        std::fill(out.begin() + static_cast<int64_t>(y) * w,
                  out.begin() + static_cast<int64_t>(y + 1) * w, lw.w[y]);
    }
    return out;
}

// ------------------------------------------------------------------ file io

namespace {
constexpr char kGridMagic[4] = {'W', 'G', 'R', 'D'};
constexpr uint16_t kGridVersion = 1;
}  // namespace

std::vector<uint8_t> encode_wgrid(const GridField& x) {
    x.validate();
    std::vector<uint8_t> out;
    io::put_bytes(out, kGridMagic, 4);
    io::put<uint16_t>(out, kGridVersion);
    io::put<uint16_t>(out, 0);
    io::put<uint32_t>(out, static_cast<uint32_t>(x.channels()));
    io::put<uint32_t>(out, static_cast<uint32_t>(x.height()));
    io::put<uint32_t>(out, static_cast<uint32_t>(x.width()));
    for (const auto& e : x.meta.entries) {
        io::put<uint16_t>(out, static_cast<uint16_t>(e.var));
        io::put<uint16_t>(out, e.level);
    }
    io::put_bytes(out, x.lats.data(), x.lats.size() * sizeof(float));
    io::put_bytes(out, x.lons.data(), x.lons.size() * sizeof(float));
    io::put_bytes(out, x.values.data.data(), x.values.data.size() * sizeof(float));
    return out;
}

GridField decode_wgrid(const uint8_t* data, size_t size) {
    io::Reader r(data, size);
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::memcmp(magic, kGridMagic, 4) != 0) throw FormatError("bad magic, not a .wgrid file");
    auto version = r.get<uint16_t>();
    if (version != kGridVersion) {
        throw FormatError("unsupported .wgrid version " + std::to_string(version));
    }
    r.get<uint16_t>();
    auto c = r.get<uint32_t>();
    auto h = r.get<uint32_t>();
    auto w = r.get<uint32_t>();
    GridField f;
    for (uint32_t i = 0; i < c; ++i) {
        auto code = r.get<uint16_t>();
        auto level = r.get<uint16_t>();
        f.meta.entries.push_back({variable_from_code(code), level});
    }
    f.lats.resize(h);
    r.get_bytes(f.lats.data(), h * sizeof(float));
    f.lons.resize(w);
    r.get_bytes(f.lons.data(), w * sizeof(float));
    f.values = Tensor({static_cast<int64_t>(c), static_cast<int64_t>(h), static_cast<int64_t>(w)});
    r.get_bytes(f.values.data.data(), f.values.data.size() * sizeof(float));
    f.validate();
    return f;
}

void save_wgrid(const GridField& x, const std::string& path) {
    io::write_file(path, encode_wgrid(x));
}

GridField load_wgrid(const std::string& path) {
    auto bytes = io::read_file(path);
    try {
        return decode_wgrid(bytes.data(), bytes.size());
    } catch (const FormatError& e) {
        throw FormatError(std::string(e.what()) + " (" + path + ")");
    }
}

// ------------------------------------------------------------ synth fields

namespace {

std::mutex g_fftw_mutex;

// one zero-mean, unit-variance field via spectral synthesis
std::vector<float> spectral_field(int64_t h, int64_t w, double beta, Rng& rng) {
    int64_t cw = w / 2 + 1;
    std::vector<double> spec(static_cast<size_t>(h * cw * 2));
    for (int64_t ky = 0; ky < h; ++ky) {
        double fy = ky <= h / 2 ? static_cast<double>(ky) : static_cast<double>(ky - h);
        for (int64_t kx = 0; kx < cw; ++kx) {
            double fx = static_cast<double>(kx);
            double k = std::sqrt(fx * fx + fy * fy);
            double amp = k > 0.0 ? std::pow(k, -beta / 2.0) : 0.0;
            double re = rng.normal() * amp;
            double im = rng.normal() * amp;
            spec[2 * (ky * cw + kx)] = re;
            spec[2 * (ky * cw + kx) + 1] = im;
        }
    }
    std::vector<double> out(static_cast<size_t>(h * w));
    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        fftw_plan plan = fftw_plan_dft_c2r_2d(static_cast<int>(h), static_cast<int>(w),
                                              reinterpret_cast<fftw_complex*>(spec.data()),
                                              out.data(), FFTW_ESTIMATE);
        fftw_execute(plan);
        fftw_destroy_plan(plan);
    }
    // exact unit variance and zero mean over the sample
    double mean = 0.0;
    for (double v : out) mean += v;
    mean /= static_cast<double>(out.size());
    double var = 0.0;
    for (double v : out) var += (v - mean) * (v - mean);
    var /= static_cast<double>(out.size());
    double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    std::vector<float> f(out.size());
    for (size_t i = 0; i < out.size(); ++i) f[i] = static_cast<float>((out[i] - mean) * inv);
    return f;
}

}  // namespace

GridField synth_generate(const PVSMeta& meta, int64_t h, int64_t w, uint64_t seed,
                         const SynthConfig& cfg) {
    meta.validate();
    if (h < 8 || w < 8) throw ConfigError("synthetic grid must be at least 8 x 8");
    GridField f = GridField::empty(meta, h, w);
    int64_t plane = h * w;

    // group channel indices by variable, ordered by ascending pressure, so
    // the AR(1) chain runs across physically adjacent levels
    std::map<VariableId, std::vector<size_t>> groups;
    for (size_t i = 0; i < meta.entries.size(); ++i) groups[meta.entries[i].var].push_back(i);
    for (auto& [var, idxs] : groups) {
        std::sort(idxs.begin(), idxs.end(), [&](size_t a, size_t b) {
            return meta.entries[a].level < meta.entries[b].level;
        });
    }

    uint64_t group_no = 0;
    for (const auto& [var, idxs] : groups) {
        Rng rng(Rng::derive(seed, 0x517eed00ULL + group_no++));
        std::vector<float> prev;
        for (size_t k = 0; k < idxs.size(); ++k) {
            std::vector<float> g = spectral_field(h, w, cfg.spectrum_beta, rng);
            if (k > 0 && cfg.level_rho != 0.0) {
                double rho = cfg.level_rho;
                double mix = std::sqrt(std::max(0.0, 1.0 - rho * rho));
                for (int64_t i = 0; i < plane; ++i) {
                    g[static_cast<size_t>(i)] = static_cast<float>(
                        rho * prev[static_cast<size_t>(i)] + mix * g[static_cast<size_t>(i)]);
                }
            }
            prev = g;
            const PVEntry& e = meta.entries[idxs[k]];
            const VarInfo& vi = info(e.var);
            // mild level modulation keeps channels distinguishable in units
            double lev = e.level == kSurfaceLevel ? 1000.0 : static_cast<double>(e.level);
            double mean = vi.base_mean * (e.var == VariableId::z ? (1.2 - lev / 1250.0) : 1.0);
            double sd = vi.base_std * (0.6 + 0.4 * lev / 1000.0);
            float* dst = f.channel(static_cast<int64_t>(idxs[k]));
            for (int64_t i = 0; i < plane; ++i) {
                dst[i] = static_cast<float>(mean + sd * g[static_cast<size_t>(i)]);
            }
        }
    }
    return f;
}

GridField advect(const GridField& x, const FlowConfig& flow, uint64_t forcing_seed) {
    int64_t h = x.height(), w = x.width();
    GridField out = x;
    // Taylor-Green velocity field, periodic and divergence free
    auto uvel = [&](double px, double py) {
        return flow.amplitude * std::sin(2.0 * kPi * px / static_cast<double>(w)) *
               std::cos(2.0 * kPi * py / static_cast<double>(h));
    };
    auto vvel = [&](double px, double py) {
        return -flow.amplitude * std::cos(2.0 * kPi * px / static_cast<double>(w)) *
               std::sin(2.0 * kPi * py / static_cast<double>(h));
    };
    for (int64_t c = 0; c < x.channels(); ++c) {
        const float* src = x.channel(c);
        float* dst = out.channel(c);
        for (int64_t py = 0; py < h; ++py) {
            for (int64_t px = 0; px < w; ++px) {
                double sx = static_cast<double>(px) - uvel(px, py);
                double sy = static_cast<double>(py) - vvel(px, py);
                // bilinear, periodic wrap
                double fx = std::floor(sx), fy = std::floor(sy);
                double ax = sx - fx, ay = sy - fy;
                auto wrap = [](int64_t v, int64_t n) { return ((v % n) + n) % n; };
                int64_t x0 = wrap(static_cast<int64_t>(fx), w);
                int64_t x1 = wrap(static_cast<int64_t>(fx) + 1, w);
                int64_t y0 = wrap(static_cast<int64_t>(fy), h);
                int64_t y1 = wrap(static_cast<int64_t>(fy) + 1, h);
                double v00 = src[y0 * w + x0], v01 = src[y0 * w + x1];
                double v10 = src[y1 * w + x0], v11 = src[y1 * w + x1];
                dst[py * w + px] = static_cast<float>((1 - ay) * ((1 - ax) * v00 + ax * v01) +
                                                      ay * ((1 - ax) * v10 + ax * v11));
            }
        }
    }
    if (flow.forcing > 0.0) {
        GridField noise = synth_generate(x.meta, h, w, forcing_seed);
        NormStats ns = compute_norm_stats({x});
        int64_t plane = h * w;
        for (int64_t c = 0; c < x.channels(); ++c) {
            // forcing scaled to a fraction of the channel's own std
            NormStats nn = compute_norm_stats({noise});
            float scale = static_cast<float>(flow.forcing) * ns.std[c] / std::max(nn.std[c], 1e-9f);
            float center = nn.mean[c];
            float* dst = out.channel(c);
            const float* np = noise.channel(c);
            for (int64_t i = 0; i < plane; ++i) dst[i] += scale * (np[i] - center);
        }
    }
    return out;
}

// ------------------------------------------------------------------ archive

std::string Archive::frame_path(const std::string& dir, int64_t t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "t%06lld.wgrid", static_cast<long long>(t));
    return dir + "/" + buf;
}

Archive Archive::open(const std::string& dir) {
    Archive a;
    a.dir_ = dir;
    int64_t t = 0;
    while (std::filesystem::exists(frame_path(dir, t))) ++t;
    if (t == 0) throw DataError("archive at '" + dir + "' contains no frames");
    a.timesteps_ = t;
    return a;
}

GridField Archive::field(int64_t t) const {
    if (t < 0 || t >= timesteps_) {
        throw DataError("timestep " + std::to_string(t) + " outside archive timeline [0, " +
                        std::to_string(timesteps_) + ")");
    }
    return load_wgrid(frame_path(dir_, t));
}

GridField Archive::subset(const PVSMeta& meta, int64_t t) const {
    return select_subset(field(t), meta);
}

int64_t write_trajectory_archive(const std::string& dir, const PVSMeta& meta, int64_t h,
                                 int64_t w, int64_t timesteps, uint64_t seed,
                                 const SynthConfig& synth, const FlowConfig& flow) {
    std::filesystem::create_directories(dir);
    GridField f = synth_generate(meta, h, w, seed, synth);
    save_wgrid(f, Archive::frame_path(dir, 0));
    for (int64_t t = 1; t < timesteps; ++t) {
        f = advect(f, flow, Rng::derive(seed, 0xadeec7ULL + static_cast<uint64_t>(t)));
        save_wgrid(f, Archive::frame_path(dir, t));
    }
    return timesteps;
}

}  // namespace wla::grid
