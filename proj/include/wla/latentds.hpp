#pragma once

#include <string>
#include <vector>

#include "wla/codec.hpp"
#include "wla/griddata.hpp"

#include "json.hpp"

namespace wla::lds {

// one compressed family of the dataset: a named subset plus its trained model
struct Family {
    std::string name;
    grid::PVSMeta meta;
    std::string model_path;
};

// [0, train_end) / [train_end, val_end) / [val_end, test_end)
struct Splits {
    int64_t train_end = 0;
    int64_t val_end = 0;
    int64_t test_end = 0;

    void validate(int64_t timesteps) const {
        if (!(0 < train_end && train_end < val_end && val_end < test_end &&
              test_end <= timesteps)) {
            throw ConfigError("splits must order train < val < test within the timeline");
        }
    }
};

struct ShardEntry {
    int64_t time = 0;
    std::string file;       // relative to the dataset directory
    int64_t offset = 0;
    int64_t length = 0;     // whole .wlat record
    int64_t payload = 0;    // token payload bytes only
};

struct FamilyManifest {
    std::string name;
    grid::PVSMeta meta;
    std::string model_path;
    uint64_t fingerprint = 0;
    std::vector<ShardEntry> index;  // one entry per timestep, gap-free
    int64_t pixel_bytes = 0;        // C*H*W*4 summed over the timeline
    int64_t latent_payload_bytes = 0;
    int64_t latent_file_bytes = 0;
};

struct Manifest {
    std::string archive_dir;
    Splits splits;
    std::vector<FamilyManifest> families;
    int64_t sidecar_bytes = 0;
    std::string sidecar_file;

    int64_t pixel_total() const;
    int64_t latent_payload_total() const;
    int64_t latent_file_total() const;

    nlohmann::json to_json() const;
    static Manifest from_json(const nlohmann::json& j);
    static Manifest load(const std::string& ds_dir);
    void save(const std::string& ds_dir) const;
};

struct BuildStats {
    int64_t shards_written = 0;
    int64_t shards_skipped = 0;
};

struct BuildOptions {
    int64_t times_per_shard = 25;
    // timeline range compressed losslessly next to the tokens (end exclusive);
    // equal values disable the sidecar
    int64_t sidecar_begin = 0;
    int64_t sidecar_end = 0;
};

// Compresses every timestep of every family into .wlat shard files under
// ds_dir and writes manifest.json. Idempotent: complete shards (present in
// an existing manifest with matching file size) are not rewritten.
Manifest build(const grid::Archive& archive, const std::vector<Family>& families,
               const Splits& splits, const std::string& ds_dir, const BuildOptions& opts = {},
               BuildStats* stats = nullptr);

// tokens of one timestep read back from the shard files
codec::WlatFile load_latent(const std::string& ds_dir, const FamilyManifest& fam, int64_t time);

// ------------------------------------------------------------- sidecar

// raw grids across [t_begin, t_end) stored LZMA-compressed; returns bytes
int64_t pixel_sidecar(const grid::Archive& archive, int64_t t_begin, int64_t t_end,
                      const std::string& path);
std::vector<GridField> read_sidecar(const std::string& path);

// lossless codec used by the sidecar (exposed for tests)
std::vector<uint8_t> lzma_compress(const uint8_t* data, size_t size);
std::vector<uint8_t> lzma_decompress(const uint8_t* data, size_t size, size_t expected_size);

// ---------------------------------------------------------- accounting

struct AccountReport {
    double pixel_bytes = 0.0;
    double latent_bytes = 0.0;   // payload only; headers itemized in the text
    double sidecar_bytes = 0.0;
    double ratio = 0.0;          // pixel / latent
    std::string itemized;        // human-readable render with unrounded totals
};

AccountReport account(const Manifest& m);

// consistency render of externally published totals: the given pixel size
// and claimed ratio produce the implied latent size; the itemized text
// flags any discrepancy between the claimed ratio and the ratio recomputed
// from the rounded totals
AccountReport account_published(double pixel_tb, double claimed_ratio, double sidecar_tb);

}  // namespace wla::lds
