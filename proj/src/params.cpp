#include "wla/params.hpp"

#include <algorithm>
#include <map>

namespace wla {

namespace {

constexpr char kMagic[4] = {'W', 'C', 'K', 'P'};
constexpr uint16_t kVersion = 1;

void put_tensor(std::vector<uint8_t>& out, const std::string& name, const Tensor& t) {
    io::put<uint16_t>(out, static_cast<uint16_t>(name.size()));
    io::put_bytes(out, name.data(), name.size());
    io::put<uint8_t>(out, static_cast<uint8_t>(t.ndim()));
    for (int64_t d : t.shape) io::put<uint32_t>(out, static_cast<uint32_t>(d));
    io::put_bytes(out, t.data.data(), t.data.size() * sizeof(float));
}

std::pair<std::string, Tensor> get_tensor(io::Reader& r) {
    auto name_len = r.get<uint16_t>();
    std::string name(name_len, '\0');
    r.get_bytes(name.data(), name_len);
    auto ndim = r.get<uint8_t>();
    std::vector<int64_t> shape(ndim);
    for (auto& d : shape) d = r.get<uint32_t>();
    Tensor t(shape);
    r.get_bytes(t.data.data(), t.data.size() * sizeof(float));
    return {std::move(name), std::move(t)};
}

struct Header {
    int64_t step;
    std::string config;
    uint32_t tensor_count;
};

Header read_header(io::Reader& r, const std::string& path) {
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint file: " + path);
    auto version = r.get<uint16_t>();
    if (version != kVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    r.get<uint16_t>();
    Header h;
    h.step = r.get<int64_t>();
    auto config_len = r.get<uint32_t>();
    h.config.resize(config_len);
    r.get_bytes(h.config.data(), config_len);
    h.tensor_count = r.get<uint32_t>();
    return h;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& config_json) {
    std::vector<uint8_t> out;
    io::put_bytes(out, kMagic, 4);
    io::put<uint16_t>(out, kVersion);
    io::put<uint16_t>(out, 0);
    io::put<int64_t>(out, store.step());
    io::put<uint32_t>(out, static_cast<uint32_t>(config_json.size()));
    io::put_bytes(out, config_json.data(), config_json.size());
    io::put<uint32_t>(out, static_cast<uint32_t>(store.entries().size() * 3));
    for (const auto& e : store.entries()) {
        put_tensor(out, e.name, *e.p);
        put_tensor(out, "adam.m." + e.name, e.m);
        put_tensor(out, "adam.v." + e.name, e.v);
    }
    io::write_file(path, out);
}

void load_checkpoint(const std::string& path, ParamStore& store, int64_t* step_out) {
    auto bytes = io::read_file(path);
    io::Reader r(bytes.data(), bytes.size());
    Header h = read_header(r, path);
    std::map<std::string, Tensor> table;
    for (uint32_t i = 0; i < h.tensor_count; ++i) {
        auto [name, t] = get_tensor(r);
        table.emplace(std::move(name), std::move(t));
    }
    auto take = [&](const std::string& name, Tensor& dst) {
        auto it = table.find(name);
        if (it == table.end()) throw FormatError("checkpoint missing tensor '" + name + "'");
        if (it->second.shape != dst.shape) {
            throw FormatError("checkpoint tensor '" + name + "' has shape " +
                              it->second.shape_str() + ", expected " + dst.shape_str());
        }
        dst = std::move(it->second);
    };
    for (auto& e : store.entries()) {
        take(e.name, *e.p);
        take("adam.m." + e.name, e.m);
        take("adam.v." + e.name, e.v);
    }
    store.set_step(h.step);
    if (step_out) *step_out = h.step;
}

std::string read_checkpoint_config(const std::string& path) {
    auto bytes = io::read_file(path);
    io::Reader r(bytes.data(), bytes.size());
    return read_header(r, path).config;
}

uint64_t fingerprint(const ParamStore& store) {
    // name-sorted so the value is independent of registration order
    std::vector<const ParamStore::Entry*> sorted;
    sorted.reserve(store.entries().size());
    for (const auto& e : store.entries()) sorted.push_back(&e);
    std::sort(sorted.begin(), sorted.end(),
              [](const auto* a, const auto* b) { return a->name < b->name; });
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* e : sorted) {
        h = fnv1a64(e->name.data(), e->name.size(), h);
        for (int64_t d : e->p->shape) {
            uint32_t d32 = static_cast<uint32_t>(d);
            h = fnv1a64(&d32, sizeof(d32), h);
        }
        h = fnv1a64(e->p->data.data(), e->p->data.size() * sizeof(float), h);
    }
    return h;
}

}  // namespace wla
