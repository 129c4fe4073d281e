#pragma once

#include <string>
#include <vector>

#include "wla/griddata.hpp"
#include "wla/metrics.hpp"
#include "wla/model.hpp"

namespace wla::codec {

// Self-describing bitstream header; fully determines decode geometry and
// detects model mismatches via the checkpoint fingerprint.
struct WlatHeader {
    grid::PVSMeta meta;
    int64_t h = 0, w = 0;
    vae::PatchConfig patch;
    int nb = 0;
    grid::NormStats stats;
    uint64_t fingerprint = 0;
};

struct WlatFile {
    WlatHeader header;
    bqm::LatentBits bits;

    int64_t payload_bytes() const { return static_cast<int64_t>(bits.payload.size()); }
};

std::vector<uint8_t> encode_wlat(const WlatFile& f);
WlatFile decode_wlat(const uint8_t* data, size_t size);
void save_wlat(const WlatFile& f, const std::string& path);
WlatFile load_wlat(const std::string& path);
int64_t wlat_header_bytes(const WlatFile& f);

// normalize -> unify -> patchify -> encode -> project -> sphere -> sign
// -> pack. Deterministic: same input and model give identical bytes.
WlatFile compress(const GridField& x, WlaModel& model);

// unpack -> dequantize -> decode -> unpatchify -> metadata-guided inverse
// -> denormalize. Throws DataError on fingerprint mismatch.
GridField decompress(const WlatFile& f, WlaModel& model);

// decode of a bare token grid (no container checks); original units
GridField decode_latent(const bqm::LatentBits& bits, WlaModel& model, int64_t h, int64_t w);

struct MeasureReport {
    double ratio;   // original bits / payload bits, header excluded
    double bpsp;    // payload bits / (C*H*W)
    int64_t payload_bytes;
    int64_t header_bytes;
    std::vector<double> weighted_rmse;  // per channel, original units
};

MeasureReport measure(const WlatFile& f, const GridField& original, WlaModel& model);

}  // namespace wla::codec
