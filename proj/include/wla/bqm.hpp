#pragma once

#include <cstdint>
#include <vector>

#include "wla/nn.hpp"
#include "wla/vaeformer.hpp"

namespace wla::bqm {

// bits per token; the implicit codebook is every sign pattern, size 2^nb
struct CodebookSpec {
    int nb = 128;

    void validate() const {
        if (nb < 8 || nb > 256 || nb % 8 != 0) {
            throw ConfigError("codebook bits must be a multiple of 8 in [8, 256]");
        }
    }
};

// ------------------------------------------------------------ pure math

// u / (||u|| + eps); the zero vector passes through unchanged
std::vector<float> sphere_project(const std::vector<float>& u, double eps = 1e-12);

// per-component sign with the deterministic tie rule sign(0) = +1
std::vector<int8_t> binary_quantize(const std::vector<float>& u);

// L2-normalized sign vector, components +-1/sqrt(nb)
std::vector<float> dequantize(const std::vector<int8_t>& token);

// --------------------------------------------------------------- packing

// H' x W' grid of nb-bit tokens packed MSB-first, token-major row-major.
struct LatentBits {
    int64_t th = 0, tw = 0;
    int nb = 0;
    std::vector<uint8_t> payload;

    int64_t tokens() const { return th * tw; }
    int64_t payload_bits() const { return tokens() * nb; }
    static int64_t expected_bytes(int64_t tokens, int nb) { return (tokens * nb + 7) / 8; }

    void validate() const {
        if (static_cast<int64_t>(payload.size()) != expected_bytes(tokens(), nb)) {
            throw FormatError("latent payload is " + std::to_string(payload.size()) +
                              " bytes, expected " + std::to_string(expected_bytes(tokens(), nb)));
        }
    }
};

// signs: [tokens x nb] of +-1 (row-major over the token grid);
// +1 -> bit 1, -1 -> bit 0, MSB-first within each byte
LatentBits pack_bits(const Tensor& signs, int64_t th, int64_t tw);
Tensor unpack_bits(const LatentBits& bits);

// dequantized tokens [tokens x nb] with entries +-1/sqrt(nb)
template <typename T>
TensorT<T> dequantize_bits(const LatentBits& bits) {
    Tensor signs = unpack_bits(bits);
    TensorT<T> out({signs.shape[0], signs.shape[1]});
    T q = static_cast<T>(1.0 / std::sqrt(static_cast<double>(bits.nb)));
    for (int64_t i = 0; i < signs.numel(); ++i) out[i] = signs[i] > 0 ? q : -q;
    return out;
}

// ------------------------------------------------------------ accounting

// Exact and ideal-form compression accounting for a C x H x W float32
// field stored as nb-bit tokens on the patch-derived token grid.
struct RatioReport {
    int64_t c, h, w;
    int nb;
    int64_t th, tw;
    double ratio_exact;  // C*H*W*32 / (nb * H' * W')
    double ratio_ideal;  // (C/nb) * 32 * sh * sw, the divisible-case form
    double bpsp;         // 32 / ratio_exact
};

RatioReport compression_ratio(int64_t c, int64_t h, int64_t w, const vae::PatchConfig& cfg,
                              int nb);

// -------------------------------------------------------------- module

// Quantization boundary of the autoencoder: projects d_model tokens to the
// nb-dim code space, sphere-projects, sign-quantizes with a straight-through
// gradient, and projects decoded codes back to d_model.
template <typename T>
struct BqmT {
    int nb = 32;
    int64_t d_model = 128;
    LinearT<T> to_code;    // d_model -> nb
    LinearT<T> from_code;  // nb -> d_model

    static BqmT init(int nb, int64_t d_model, Rng& rng) {
        CodebookSpec{nb}.validate();
        BqmT b;
        b.nb = nb;
        b.d_model = d_model;
        b.to_code = LinearT<T>::init(d_model, nb, rng);
        b.from_code = LinearT<T>::init(nb, d_model, rng);
        return b;
    }

    void reg(ParamStoreT<T>& ps, const std::string& prefix) {
        to_code.reg(ps, prefix + ".to_code");
        from_code.reg(ps, prefix + ".from_code");
    }

    struct Quantized {
        typename GraphT<T>::Id pre_quant;  // sphere-projected rows, entropy input
        typename GraphT<T>::Id codes;      // +-1/sqrt(nb) rows (STE in training)
        typename GraphT<T>::Id tokens_out; // back in d_model width
    };

    // full training path: project -> sphere -> sign (STE) -> project back
    Quantized quantize(GraphT<T>& g, typename GraphT<T>::Id tokens) {
        auto u = to_code.apply(g, tokens);
        auto s = g.sphere_project(u);
        auto q = g.bsq_ste(s);
        return {s, q, from_code.apply(g, q)};
    }

    // hard bits of the encoder output (sign of the sphere-projected code)
    LatentBits harden(const GraphT<T>& g, typename GraphT<T>::Id pre_quant, int64_t th,
                      int64_t tw) const {
        const auto& s = g.val(pre_quant);
        Tensor signs({s.shape[0], s.shape[1]});
        for (int64_t i = 0; i < s.numel(); ++i) signs[i] = s[i] >= T(0) ? 1.0f : -1.0f;
        return pack_bits(signs, th, tw);
    }

    // decode-side entry: dequantized codes -> d_model tokens
    typename GraphT<T>::Id decode_bits(GraphT<T>& g, const LatentBits& bits) {
        return from_code.apply(g, g.constant(dequantize_bits<T>(bits)));
    }
};

// factorized per-bit entropy surrogate on sphere-projected codes
template <typename T>
typename GraphT<T>::Id entropy_reg(GraphT<T>& g, typename GraphT<T>::Id pre_quant,
                                   double alpha = 10.0) {
    return g.entropy_reg(pre_quant, alpha);
}

}  // namespace wla::bqm
