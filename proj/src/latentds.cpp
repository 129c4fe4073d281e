#include "wla/latentds.hpp"

#include <lzma.h>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace wla::lds {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- manifest

int64_t Manifest::pixel_total() const {
    int64_t n = 0;
    for (const auto& f : families) n += f.pixel_bytes;
    return n;
}
int64_t Manifest::latent_payload_total() const {
    int64_t n = 0;
    for (const auto& f : families) n += f.latent_payload_bytes;
    return n;
}
int64_t Manifest::latent_file_total() const {
    int64_t n = 0;
    for (const auto& f : families) n += f.latent_file_bytes;
    return n;
}

json Manifest::to_json() const {
    json jf = json::array();
    for (const auto& f : families) {
        json idx = json::array();
        for (const auto& e : f.index) {
            idx.push_back({{"t", e.time},
                           {"file", e.file},
                           {"offset", e.offset},
                           {"length", e.length},
                           {"payload", e.payload}});
        }
        jf.push_back({{"name", f.name},
                      {"meta", grid::meta_to_json(f.meta)},
                      {"model", f.model_path},
                      {"fingerprint", f.fingerprint},
                      {"index", idx},
                      {"pixel_bytes", f.pixel_bytes},
                      {"latent_payload_bytes", f.latent_payload_bytes},
                      {"latent_file_bytes", f.latent_file_bytes}});
    }
    return json{{"archive", archive_dir},
                {"splits", {{"train_end", splits.train_end},
                            {"val_end", splits.val_end},
                            {"test_end", splits.test_end}}},
                {"families", jf},
                {"sidecar_bytes", sidecar_bytes},
                {"sidecar_file", sidecar_file}};
}

Manifest Manifest::from_json(const json& j) {
    Manifest m;
    m.archive_dir = j.at("archive");
    m.splits.train_end = j.at("splits").at("train_end");
    m.splits.val_end = j.at("splits").at("val_end");
    m.splits.test_end = j.at("splits").at("test_end");
    for (const auto& jf : j.at("families")) {
        FamilyManifest f;
        f.name = jf.at("name");
        f.meta = grid::meta_from_json(jf.at("meta"));
        f.model_path = jf.at("model");
        f.fingerprint = jf.at("fingerprint");
        f.pixel_bytes = jf.at("pixel_bytes");
        f.latent_payload_bytes = jf.at("latent_payload_bytes");
        f.latent_file_bytes = jf.at("latent_file_bytes");
        for (const auto& je : jf.at("index")) {
            f.index.push_back({je.at("t"), je.at("file"), je.at("offset"), je.at("length"),
                               je.at("payload")});
        }
        m.families.push_back(std::move(f));
    }
    m.sidecar_bytes = j.value("sidecar_bytes", 0);
    m.sidecar_file = j.value("sidecar_file", "");
    return m;
}

Manifest Manifest::load(const std::string& ds_dir) {
    std::ifstream in(ds_dir + "/manifest.json");
    if (!in) throw IoError("no manifest at " + ds_dir);
    json j;
    in >> j;
    return from_json(j);
}

void Manifest::save(const std::string& ds_dir) const {
    std::ofstream out(ds_dir + "/manifest.json");
    if (!out) throw IoError("cannot write manifest at " + ds_dir);
    out << to_json().dump(2) << "\n";
}

// ------------------------------------------------------------------- build

namespace {

std::string shard_name(const std::string& family, int64_t shard_no) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s.shard%03" PRId64 ".bin", family.c_str(), shard_no);
    return buf;
}

}  // namespace

Manifest build(const grid::Archive& archive, const std::vector<Family>& families,
               const Splits& splits, const std::string& ds_dir, const BuildOptions& opts,
               BuildStats* stats) {
    splits.validate(archive.timesteps());
    fs::create_directories(ds_dir);
    BuildStats st;

    // completeness check against a previous run
    Manifest previous;
    bool have_previous = fs::exists(ds_dir + "/manifest.json");
    if (have_previous) previous = Manifest::load(ds_dir);

    const int64_t timeline = splits.test_end;
    Manifest m;
    m.archive_dir = archive.dir();
    m.splits = splits;

    for (const auto& fam : families) {
        WlaModel model = load_wla(fam.model_path);
        if (!(model.meta == fam.meta)) {
            throw DataError("model for family '" + fam.name + "' was trained on " +
                            model.meta.str() + ", family is " + fam.meta.str());
        }
        uint64_t fp = wla_fingerprint(model);

        FamilyManifest fm;
        fm.name = fam.name;
        fm.meta = fam.meta;
        fm.model_path = fam.model_path;
        fm.fingerprint = fp;

        const FamilyManifest* prev_fam = nullptr;
        if (have_previous) {
            for (const auto& p : previous.families) {
                if (p.name == fam.name && p.fingerprint == fp) prev_fam = &p;
            }
        }

        for (int64_t shard_no = 0, t0 = 0; t0 < timeline; ++shard_no, t0 += opts.times_per_shard) {
            int64_t t1 = std::min(timeline, t0 + opts.times_per_shard);
            std::string rel = shard_name(fam.name, shard_no);
            std::string path = ds_dir + "/" + rel;

            // a shard is complete when the previous manifest lists every
            // timestep of it in this file and the size on disk matches
            bool complete = false;
            if (prev_fam && fs::exists(path)) {
                int64_t expect_len = 0;
                int64_t found = 0;
                for (const auto& e : prev_fam->index) {
                    if (e.file == rel) {
                        expect_len += e.length;
                        ++found;
                    }
                }
                complete = found == (t1 - t0) &&
                           expect_len == static_cast<int64_t>(fs::file_size(path));
                if (complete) {
                    for (const auto& e : prev_fam->index) {
                        if (e.file == rel) {
                            fm.index.push_back(e);
                            fm.latent_payload_bytes += e.payload;
                            fm.latent_file_bytes += e.length;
                        }
                    }
                    ++st.shards_skipped;
                }
            }
            if (complete) continue;

            std::string tmp = path + ".tmp";
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw IoError("cannot write shard " + path);
            int64_t offset = 0;
            for (int64_t t = t0; t < t1; ++t) {
                GridField x = archive.subset(fam.meta, t);
                auto file = codec::compress(x, model);
                auto bytes = codec::encode_wlat(file);
                out.write(reinterpret_cast<const char*>(bytes.data()),
                          static_cast<std::streamsize>(bytes.size()));
                ShardEntry e;
                e.time = t;
                e.file = rel;
                e.offset = offset;
                e.length = static_cast<int64_t>(bytes.size());
                e.payload = file.payload_bytes();
                offset += e.length;
                fm.index.push_back(e);
                fm.latent_payload_bytes += e.payload;
                fm.latent_file_bytes += e.length;
            }
            out.close();
            fs::rename(tmp, path);
            ++st.shards_written;
        }

        // raw pixel footprint of this family over the same timeline
        GridField probe = archive.subset(fam.meta, 0);
        fm.pixel_bytes = probe.values.numel() * static_cast<int64_t>(sizeof(float)) * timeline;
        m.families.push_back(std::move(fm));
    }

    if (opts.sidecar_end > opts.sidecar_begin) {
        m.sidecar_file = "pixel_sidecar.bin";
        m.sidecar_bytes =
            pixel_sidecar(archive, opts.sidecar_begin, opts.sidecar_end, ds_dir + "/" + m.sidecar_file);
    } else if (have_previous && !previous.sidecar_file.empty()) {
        m.sidecar_file = previous.sidecar_file;
        m.sidecar_bytes = previous.sidecar_bytes;
    }

    m.save(ds_dir);
    if (stats) *stats = st;
    return m;
}

codec::WlatFile load_latent(const std::string& ds_dir, const FamilyManifest& fam, int64_t time) {
    for (const auto& e : fam.index) {
        if (e.time == time) {
            std::ifstream in(ds_dir + "/" + e.file, std::ios::binary);
            if (!in) throw IoError("missing shard file " + e.file);
            in.seekg(e.offset);
            std::vector<uint8_t> bytes(static_cast<size_t>(e.length));
            in.read(reinterpret_cast<char*>(bytes.data()), e.length);
            if (!in) throw IoError("short read in shard " + e.file);
            return codec::decode_wlat(bytes.data(), bytes.size());
        }
    }
    throw DataError("timestep " + std::to_string(time) + " not in family '" + fam.name + "'");
}

// ----------------------------------------------------------------- sidecar

std::vector<uint8_t> lzma_compress(const uint8_t* data, size_t size) {
    size_t bound = lzma_stream_buffer_bound(size);
    std::vector<uint8_t> out(bound);
    size_t out_pos = 0;
    lzma_ret rc = lzma_easy_buffer_encode(6, LZMA_CHECK_CRC64, nullptr, data, size, out.data(),
                                          &out_pos, bound);
    if (rc != LZMA_OK) throw FormatError("lzma encode failed: " + std::to_string(rc));
    out.resize(out_pos);
    return out;
}

std::vector<uint8_t> lzma_decompress(const uint8_t* data, size_t size, size_t expected_size) {
    std::vector<uint8_t> out(expected_size);
    uint64_t memlimit = UINT64_MAX;
    size_t in_pos = 0, out_pos = 0;
    lzma_ret rc = lzma_stream_buffer_decode(&memlimit, 0, nullptr, data, &in_pos, size,
                                            out.data(), &out_pos, expected_size);
    if (rc != LZMA_OK || out_pos != expected_size) {
        throw FormatError("lzma decode failed: " + std::to_string(rc));
    }
    return out;
}

namespace {
constexpr char kSidecarMagic[4] = {'W', 'S', 'I', 'D'};
}

int64_t pixel_sidecar(const grid::Archive& archive, int64_t t_begin, int64_t t_end,
                      const std::string& path) {
    if (t_begin < 0 || t_end > archive.timesteps() || t_begin > t_end) {
        throw DataError("sidecar range [" + std::to_string(t_begin) + "," +
                        std::to_string(t_end) + ") outside timeline");
    }
    std::vector<uint8_t> out;
    io::put_bytes(out, kSidecarMagic, 4);
    io::put<uint16_t>(out, 1);
    io::put<uint16_t>(out, 0);
    io::put<uint32_t>(out, static_cast<uint32_t>(t_end - t_begin));
    for (int64_t t = t_begin; t < t_end; ++t) {
        auto raw = grid::encode_wgrid(archive.field(t));
        auto comp = lzma_compress(raw.data(), raw.size());
        io::put<int64_t>(out, t);
        io::put<uint64_t>(out, raw.size());
        io::put<uint64_t>(out, comp.size());
        io::put_bytes(out, comp.data(), comp.size());
    }
    io::write_file(path, out);
    return static_cast<int64_t>(out.size());
}

std::vector<GridField> read_sidecar(const std::string& path) {
    auto bytes = io::read_file(path);
    io::Reader r(bytes.data(), bytes.size());
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::memcmp(magic, kSidecarMagic, 4) != 0) throw FormatError("not a sidecar file");
    r.get<uint16_t>();
    r.get<uint16_t>();
    auto count = r.get<uint32_t>();
    std::vector<GridField> fields;
    fields.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        r.get<int64_t>();
        auto raw_size = r.get<uint64_t>();
        auto comp_size = r.get<uint64_t>();
        std::vector<uint8_t> comp(comp_size);
        r.get_bytes(comp.data(), comp_size);
        auto raw = lzma_decompress(comp.data(), comp.size(), raw_size);
        fields.push_back(grid::decode_wgrid(raw.data(), raw.size()));
    }
    return fields;
}

// -------------------------------------------------------------- accounting

namespace {
constexpr double kTb = 1024.0 * 1024.0 * 1024.0 * 1024.0;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}
}  // namespace

AccountReport account(const Manifest& m) {
    AccountReport r;
    r.pixel_bytes = static_cast<double>(m.pixel_total());
    r.latent_bytes = static_cast<double>(m.latent_payload_total());
    r.sidecar_bytes = static_cast<double>(m.sidecar_bytes);
    r.ratio = r.latent_bytes > 0 ? r.pixel_bytes / r.latent_bytes : 0.0;
    r.itemized = "pixel bytes:          " + fmt(r.pixel_bytes) + "\n" +
                 "latent payload bytes: " + fmt(r.latent_bytes) + "\n" +
                 "latent header bytes:  " + fmt(static_cast<double>(m.latent_file_total()) - r.latent_bytes) + "\n" +
                 "sidecar bytes:        " + fmt(r.sidecar_bytes) + "\n" +
                 "ratio (pixel/latent): " + fmt(r.ratio) + "\n";
    return r;
}

AccountReport account_published(double pixel_tb, double claimed_ratio, double sidecar_tb) {
    AccountReport r;
    r.pixel_bytes = pixel_tb * kTb;
    r.latent_bytes = pixel_tb / claimed_ratio * kTb;
    r.sidecar_bytes = sidecar_tb * kTb;
    r.ratio = claimed_ratio;
    double latent_tb = pixel_tb / claimed_ratio;
    double latent_tb_rounded = std::round(latent_tb * 100.0) / 100.0;
    double ratio_from_rounded = pixel_tb / latent_tb_rounded;
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "pixel total:   %.2f TB\n"
                  "latent total:  %.6f TB (rounds to %.2f TB)\n"
                  "sidecar total: %.3f TB\n"
                  "claimed ratio: %.1f\n"
                  "note: ratio recomputed from the rounded totals is %.1f, not %.1f;"
                  " unrounded figures above are authoritative\n",
                  pixel_tb, latent_tb, latent_tb_rounded, sidecar_tb, claimed_ratio,
                  ratio_from_rounded, claimed_ratio);
    r.itemized = buf;
    return r;
}

}  // namespace wla::lds
