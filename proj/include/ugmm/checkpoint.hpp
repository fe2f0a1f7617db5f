#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <string>

#include "ugmm/errors.hpp"
#include "ugmm/network.hpp"
#include "ugmm/train.hpp"

namespace ugmm {

/// Trained-model snapshot. The on-disk layout is little-endian binary:
///
///   magic "UGMMCKPT" (8 bytes)
///   u32 version (currently 1)
///   spec: u8 kind, u8 mode, u32 width count, u32 widths...,
///         u32 dropout count, (u32 layer, f64 p)..., u64 seed
///   u32 epoch counter
///   parameter tensors in declaration order, each as u32 rows, u32 cols,
///     f64 entries row-major
///   optimizer state: u64 t, then the m tensors and the v tensors with the
///     same framing
///
/// Round trips are bit-exact; that is part of the contract.
struct Checkpoint {
    std::uint32_t version = 1;
    NetworkParams params;  // carries the NetworkSpec
    AdamState adam;
    std::uint32_t epoch = 0;
};

namespace detail {

inline constexpr char kCkptMagic[8] = {'U', 'G', 'M', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCkptVersion = 1;

inline void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                 char((v >> 24) & 0xff)};
    out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError(path + ": truncated checkpoint");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError(path + ": truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

inline double get_f64(std::istream& in, const std::string& path) {
    return std::bit_cast<double>(get_u64(in, path));
}

inline void put_tensor(std::ostream& out, const Matrix& m) {
    put_u32(out, std::uint32_t(m.rows));
    put_u32(out, std::uint32_t(m.cols));
    for (double v : m.data) put_f64(out, v);
}

inline Matrix get_tensor(std::istream& in, const std::string& path, std::size_t want_rows,
                         std::size_t want_cols) {
    const std::uint32_t rows = get_u32(in, path);
    const std::uint32_t cols = get_u32(in, path);
    if (rows != want_rows || cols != want_cols) {
        throw DataError(path + ": tensor shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " does not match embedded spec (" +
                        std::to_string(want_rows) + "x" + std::to_string(want_cols) + ")");
    }
    Matrix m(rows, cols);
    for (double& v : m.data) v = get_f64(in, path);
    return m;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(path + ": cannot open for writing");
    out.write(detail::kCkptMagic, 8);
    detail::put_u32(out, ckpt.version);
    const NetworkSpec& spec = ckpt.params.spec;
    out.put(char(static_cast<std::uint8_t>(spec.kind)));
    out.put(char(static_cast<std::uint8_t>(spec.mode)));
    detail::put_u32(out, std::uint32_t(spec.layer_widths.size()));
    for (std::size_t w : spec.layer_widths) detail::put_u32(out, std::uint32_t(w));
    detail::put_u32(out, std::uint32_t(spec.dropout.size()));
    for (const auto& d : spec.dropout) {
        detail::put_u32(out, std::uint32_t(d.layer));
        detail::put_f64(out, d.p);
    }
    detail::put_u64(out, spec.seed);
    detail::put_u32(out, ckpt.epoch);
    ckpt.params.for_each_tensor([&out](const Matrix& m) { detail::put_tensor(out, m); });
    detail::put_u64(out, ckpt.adam.t);
    for (const Matrix& m : ckpt.adam.m) detail::put_tensor(out, m);
    for (const Matrix& m : ckpt.adam.v) detail::put_tensor(out, m);
    if (!out) throw DataError(path + ": write failure");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open");
    char magic[8];
    if (!in.read(magic, 8) || !std::equal(magic, magic + 8, detail::kCkptMagic)) {
        throw DataError(path + ": bad checkpoint magic");
    }
    Checkpoint ckpt;
    ckpt.version = detail::get_u32(in, path);
    if (ckpt.version != detail::kCkptVersion) {
        throw DataError(path + ": unsupported checkpoint version " +
                        std::to_string(ckpt.version) + " (expected " +
                        std::to_string(detail::kCkptVersion) + ")");
    }
    NetworkSpec spec;
    int kind_byte = in.get();
    int mode_byte = in.get();
    if (kind_byte < 0 || mode_byte < 0) throw DataError(path + ": truncated checkpoint");
    if (kind_byte > 1) throw DataError(path + ": invalid model kind byte");
    if (mode_byte > 1) throw DataError(path + ": invalid train mode byte");
    spec.kind = static_cast<ModelKind>(kind_byte);
    spec.mode = static_cast<TrainMode>(mode_byte);
    const std::uint32_t n_widths = detail::get_u32(in, path);
    spec.layer_widths.resize(n_widths);
    for (auto& w : spec.layer_widths) w = detail::get_u32(in, path);
    const std::uint32_t n_drop = detail::get_u32(in, path);
    spec.dropout.resize(n_drop);
    for (auto& d : spec.dropout) {
        d.layer = detail::get_u32(in, path);
        d.p = detail::get_f64(in, path);
    }
    spec.seed = detail::get_u64(in, path);
    spec.validate();
    ckpt.epoch = detail::get_u32(in, path);

    ckpt.params.spec = spec;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        const std::size_t n_in = spec.layer_widths[l];
        const std::size_t n_out = spec.layer_widths[l + 1];
        if (spec.kind == ModelKind::ugmm) {
            UgmmLayerParams p;
            p.n_in = n_in;
            p.n_out = n_out;
            p.mu = detail::get_tensor(in, path, n_out, n_in);
            p.log_sigma = detail::get_tensor(in, path, n_out, n_in);
            p.pi_logit = detail::get_tensor(in, path, n_out, n_in);
            ckpt.params.ugmm_layers.push_back(std::move(p));
        } else {
            DenseLayerParams p;
            p.n_in = n_in;
            p.n_out = n_out;
            p.w = detail::get_tensor(in, path, n_out, n_in);
            p.b = detail::get_tensor(in, path, 1, n_out);
            ckpt.params.dense_layers.push_back(std::move(p));
        }
    }
    ckpt.adam.t = detail::get_u64(in, path);
    ckpt.params.for_each_tensor([&](const Matrix& m) {
        ckpt.adam.m.push_back(detail::get_tensor(in, path, m.rows, m.cols));
    });
    ckpt.params.for_each_tensor([&](const Matrix& m) {
        ckpt.adam.v.push_back(detail::get_tensor(in, path, m.rows, m.cols));
    });
    return ckpt;
}

}  // namespace ugmm
