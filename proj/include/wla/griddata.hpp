#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wla/common.hpp"
#include "wla/tensor.hpp"

namespace wla::grid {

// --------------------------------------------------------------- variables

// Closed variable set with stable wire codes.
enum class VariableId : uint16_t {
    // upper-air
    z = 0, u = 1, v = 2, w = 3, t = 4, q = 5,
    // surface
    u10 = 10, v10 = 11, u100 = 12, v100 = 13, t2m = 14, tcc = 15, sp = 16, msl = 17,
    // precipitation accumulations
    tp1h = 20, tp2h = 21, tp3h = 22, tp4h = 23, tp5h = 24, tp6h = 25,
};

const char* variable_name(VariableId v);
VariableId variable_from_name(const std::string& name);
VariableId variable_from_code(uint16_t code);
bool is_upper_air(VariableId v);
bool is_surface(VariableId v);
bool is_precip(VariableId v);

// dense 0..count-1 index over the closed variable set (embedding tables)
int64_t variable_dense_index(VariableId v);
int64_t variable_count();

constexpr uint16_t kSurfaceLevel = 0xFFFF;

struct PVEntry {
    VariableId var;
    uint16_t level;  // hPa, or kSurfaceLevel

    bool operator==(const PVEntry&) const = default;
    std::string str() const;
};

// Ordered pressure-variable subset; the metadata that drives the PVUM.
struct PVSMeta {
    std::vector<PVEntry> entries;

    int64_t channels() const { return static_cast<int64_t>(entries.size()); }
    void validate() const;  // non-empty, no duplicate (var, level) pairs
    bool operator==(const PVSMeta&) const = default;
    std::string str() const;

    static PVSMeta upper_air(VariableId var, const std::vector<uint16_t>& levels);
    static PVSMeta surface(const std::vector<VariableId>& vars);

    // named standard subsets: "<uavar>25|13|6", "surface8", "surface4",
    // "tp1h", "tp6h", "tp1-6h"
    static PVSMeta named(const std::string& name);
};

const std::vector<uint16_t>& level_set(int count);  // 25, 13 or 6 levels

// -------------------------------------------------------------- grid field

// C x H x W field of 32-bit reals on a lat/lon grid, channels described by
// the attached subset metadata. Latitudes run north to south.
struct GridField {
    PVSMeta meta;
    std::vector<float> lats;  // length H, strictly descending
    std::vector<float> lons;  // length W
    Tensor values;            // shape [C, H, W]

    int64_t channels() const { return values.shape[0]; }
    int64_t height() const { return values.shape[1]; }
    int64_t width() const { return values.shape[2]; }

    float* channel(int64_t c) { return values.data.data() + c * height() * width(); }
    const float* channel(int64_t c) const { return values.data.data() + c * height() * width(); }

    void validate() const;

    static std::vector<float> equiangular_lats(int64_t h);
    static std::vector<float> equiangular_lons(int64_t w);
    static GridField empty(PVSMeta meta, int64_t h, int64_t w);
};

// channels of `meta` extracted from `src` in the requested order;
// throws DataError for entries not present in src
GridField select_subset(const GridField& src, const PVSMeta& meta);

// ------------------------------------------------------------ normalization

struct NormStats {
    std::vector<float> mean;
    std::vector<float> std;

    void validate(int64_t channels) const;
};

NormStats compute_norm_stats(const std::vector<GridField>& fields);
GridField normalize(const GridField& x, const NormStats& stats);
GridField denormalize(const GridField& x, const NormStats& stats);

// ---------------------------------------------------------- latitude weight

struct LatWeights {
    std::vector<float> w;  // per grid row, mean 1
};

// w_i = cos(lat_i) / mean_j cos(lat_j)
LatWeights lat_weights(const std::vector<float>& lats);

// weights expanded to one entry per pixel of an H x W grid, row-major
std::vector<float> pixel_row_weights(const LatWeights& lw, int64_t w);

// ------------------------------------------------------------------ file io

// .wgrid: magic "WGRD", version, C/H/W, subset table, axes, then
// C*H*W float32 row-major. Lossless round trip, bitwise.
void save_wgrid(const GridField& x, const std::string& path);
GridField load_wgrid(const std::string& path);
std::vector<uint8_t> encode_wgrid(const GridField& x);
GridField decode_wgrid(const uint8_t* data, size_t size);

// ------------------------------------------------------------ synth fields

struct SynthConfig {
    double spectrum_beta = 3.0;  // isotropic power spectrum ~ k^-beta
    double level_rho = 0.9;      // AR(1) coefficient across adjacent levels
};

// Random weather-like field: per channel, spectral synthesis with the
// configured spectrum; channels of one variable are AR(1)-mixed across
// neighbouring pressure levels, then shifted/scaled to per-variable
// characteristic units. Bitwise deterministic per seed.
GridField synth_generate(const PVSMeta& meta, int64_t h, int64_t w, uint64_t seed,
                         const SynthConfig& cfg = {});

// fixed rotational (Taylor-Green) flow used by the trajectory generator
struct FlowConfig {
    double amplitude = 3.0;   // peak displacement in pixels per step
    double forcing = 0.02;    // stochastic forcing fraction of channel std
};

// semi-Lagrangian advection of every channel under the flow, periodic borders
GridField advect(const GridField& x, const FlowConfig& flow, uint64_t forcing_seed);

// ------------------------------------------------------------------ archive

// Directory of t######.wgrid snapshots over an integer timeline.
class Archive {
public:
    static Archive open(const std::string& dir);
    static std::string frame_path(const std::string& dir, int64_t t);

    int64_t timesteps() const { return timesteps_; }
    const std::string& dir() const { return dir_; }

    GridField field(int64_t t) const;
    GridField subset(const PVSMeta& meta, int64_t t) const;

private:
    std::string dir_;
    int64_t timesteps_ = 0;
};

// writes a trajectory archive: frame 0 from synth_generate, then advection
// with stochastic forcing; returns the number of frames written
int64_t write_trajectory_archive(const std::string& dir, const PVSMeta& meta, int64_t h,
                                 int64_t w, int64_t timesteps, uint64_t seed,
                                 const SynthConfig& synth = {}, const FlowConfig& flow = {});

}  // namespace wla::grid
