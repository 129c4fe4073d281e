#include "wla/bqm.hpp"

namespace wla::bqm {

std::vector<float> sphere_project(const std::vector<float>& u, double eps) {
    double ss = 0.0;
    for (float v : u) ss += static_cast<double>(v) * v;
    double inv = 1.0 / (std::sqrt(ss) + eps);
    std::vector<float> out(u.size());
    for (size_t i = 0; i < u.size(); ++i) out[i] = static_cast<float>(u[i] * inv);
    return out;
}

std::vector<int8_t> binary_quantize(const std::vector<float>& u) {
    std::vector<int8_t> out(u.size());
    for (size_t i = 0; i < u.size(); ++i) out[i] = u[i] >= 0.0f ? 1 : -1;
    return out;
}

std::vector<float> dequantize(const std::vector<int8_t>& token) {
    float q = static_cast<float>(1.0 / std::sqrt(static_cast<double>(token.size())));
    std::vector<float> out(token.size());
    for (size_t i = 0; i < token.size(); ++i) out[i] = token[i] > 0 ? q : -q;
    return out;
}

LatentBits pack_bits(const Tensor& signs, int64_t th, int64_t tw) {
    if (signs.ndim() != 2 || signs.shape[0] != th * tw) {
        throw ShapeError("pack_bits: token count " + std::to_string(signs.shape[0]) +
                         " does not match grid " + std::to_string(th) + "x" + std::to_string(tw));
    }
    int nb = static_cast<int>(signs.shape[1]);
    LatentBits bits;
    bits.th = th;
    bits.tw = tw;
    bits.nb = nb;
    int64_t total = signs.numel();
    bits.payload.assign(static_cast<size_t>((total + 7) / 8), 0);
    // token-major, MSB-first: bit index b of the stream lands in byte b/8
    // at position 7 - b%8; final partial byte stays zero padded
    for (int64_t b = 0; b < total; ++b) {
        if (signs[b] > 0.0f) {
            bits.payload[static_cast<size_t>(b >> 3)] |= static_cast<uint8_t>(0x80u >> (b & 7));
        }
    }
    return bits;
}

Tensor unpack_bits(const LatentBits& bits) {
    bits.validate();
    Tensor signs({bits.tokens(), bits.nb});
    for (int64_t b = 0; b < signs.numel(); ++b) {
        bool one = bits.payload[static_cast<size_t>(b >> 3)] & (0x80u >> (b & 7));
        signs[b] = one ? 1.0f : -1.0f;
    }
    return signs;
}

RatioReport compression_ratio(int64_t c, int64_t h, int64_t w, const vae::PatchConfig& cfg,
                              int nb) {
    CodebookSpec{nb}.validate();
    auto [th, tw] = vae::token_grid_shape(h, w, cfg);
    RatioReport r;
    r.c = c;
    r.h = h;
    r.w = w;
    r.nb = nb;
    r.th = th;
    r.tw = tw;
    double orig_bits = static_cast<double>(c) * h * w * 32.0;
    double stored_bits = static_cast<double>(nb) * th * tw;
    r.ratio_exact = orig_bits / stored_bits;
    r.ratio_ideal = static_cast<double>(c) / nb * 32.0 * static_cast<double>(cfg.sh) * cfg.sw;
    r.bpsp = 32.0 / r.ratio_exact;
    return r;
}

}  // namespace wla::bqm
