#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "ptycho/complex_image.hpp"
#include "ptycho/scheme.hpp"
#include "ptycho/solvers.hpp"

namespace ptycho {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts need byte swaps");

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

inline void put_u8(std::ostream& os, std::uint8_t v) {
    os.write(reinterpret_cast<const char*>(&v), 1);
}

inline void put_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), 8);
}

inline std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

inline std::uint8_t get_u8(std::istream& is) {
    std::uint8_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 1);
    return v;
}

inline double get_f64(std::istream& is) {
    double v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

/// Format a double with 17 significant digits (round-trip exact).
inline std::string f64_to_string(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Write a file atomically: the writer streams into path + ".tmp", which is
/// renamed over the target only on success.
inline void atomic_write(const std::filesystem::path& path,
                         const std::function<void(std::ostream&)>& writer) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
        writer(os);
        if (!os) throw IoError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

// --- CPTY0001: single complex image --------------------------------------

inline void write_complex_image(std::ostream& os, const ComplexImage& img) {
    os.write("CPTY0001", 8);
    detail::put_u32(os, static_cast<std::uint32_t>(img.rows()));
    detail::put_u32(os, static_cast<std::uint32_t>(img.cols()));
    for (std::size_t i = 0; i < img.size(); ++i) {
        detail::put_f64(os, img[i].real());
        detail::put_f64(os, img[i].imag());
    }
}

inline void write_complex_image(const std::filesystem::path& path, const ComplexImage& img) {
    atomic_write(path, [&](std::ostream& os) { write_complex_image(os, img); });
}

inline ComplexImage read_complex_image(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "CPTY0001", 8) != 0)
        throw IoError("bad magic: expected CPTY0001");
    std::uint32_t rows = detail::get_u32(is);
    std::uint32_t cols = detail::get_u32(is);
    if (!is || rows == 0 || cols == 0) throw IoError("bad CPTY0001 header");
    ComplexImage img(static_cast<int>(rows), static_cast<int>(cols));
    for (std::size_t i = 0; i < img.size(); ++i) {
        double re = detail::get_f64(is);
        double im = detail::get_f64(is);
        img[i] = {re, im};
    }
    if (!is) throw IoError("truncated CPTY0001 payload");
    return img;
}

inline ComplexImage read_complex_image(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return read_complex_image(is);
}

// --- CPTYSTK1: data stack -------------------------------------------------

inline void write_data_stack(std::ostream& os, const DataStack& stack) {
    if (stack.blocks.empty()) throw IoError("write_data_stack: empty stack");
    int rows = stack.blocks.front().rows();
    int cols = stack.blocks.front().cols();
    os.write("CPTYSTK1", 8);
    detail::put_u32(os, static_cast<std::uint32_t>(stack.blocks.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(rows));
    detail::put_u32(os, static_cast<std::uint32_t>(cols));
    detail::put_u8(os, stack.kind == DataKind::ComplexField ? 0 : 1);
    for (const auto& blk : stack.blocks) {
        if (blk.rows() != rows || blk.cols() != cols)
            throw IoError("write_data_stack: inconsistent block shapes");
        for (std::size_t i = 0; i < blk.size(); ++i) {
            detail::put_f64(os, blk[i].real());
            if (stack.kind == DataKind::ComplexField) detail::put_f64(os, blk[i].imag());
        }
    }
}

inline void write_data_stack(const std::filesystem::path& path, const DataStack& stack) {
    atomic_write(path, [&](std::ostream& os) { write_data_stack(os, stack); });
}

inline DataStack read_data_stack(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "CPTYSTK1", 8) != 0)
        throw IoError("bad magic: expected CPTYSTK1");
    std::uint32_t count = detail::get_u32(is);
    std::uint32_t rows = detail::get_u32(is);
    std::uint32_t cols = detail::get_u32(is);
    std::uint8_t kind = detail::get_u8(is);
    if (!is || count == 0 || rows == 0 || cols == 0 || kind > 1)
        throw IoError("bad CPTYSTK1 header");
    DataStack stack;
    stack.kind = kind == 0 ? DataKind::ComplexField : DataKind::Modulus;
    stack.blocks.reserve(count);
    for (std::uint32_t t = 0; t < count; ++t) {
        ComplexImage blk(static_cast<int>(rows), static_cast<int>(cols));
        for (std::size_t i = 0; i < blk.size(); ++i) {
            double re = detail::get_f64(is);
            double im = kind == 0 ? detail::get_f64(is) : 0.0;
            blk[i] = {re, im};
        }
        stack.blocks.push_back(std::move(blk));
    }
    if (!is) throw IoError("truncated CPTYSTK1 payload");
    return stack;
}

inline DataStack read_data_stack(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return read_data_stack(is);
}

// --- CSV ------------------------------------------------------------------

inline void write_trace_csv(std::ostream& os, const SolverTrace& trace) {
    os << "algo,iter,re,rr,norm_x,norm_b\n";
    for (const auto& row : trace) {
        os << (row.algo == Algo::DR ? "DR" : "AP") << ',' << row.iter << ','
           << detail::f64_to_string(row.re) << ',' << detail::f64_to_string(row.rr) << ','
           << detail::f64_to_string(row.norm_x) << ',' << detail::f64_to_string(row.norm_b)
           << '\n';
    }
}

inline void write_trace_csv(const std::filesystem::path& path, const SolverTrace& trace) {
    atomic_write(path, [&](std::ostream& os) { write_trace_csv(os, trace); });
}

/// Generic CSV with a fixed header; each row is a list of preformatted cells.
inline void write_csv(const std::filesystem::path& path, const std::string& header,
                      const std::vector<std::vector<std::string>>& rows) {
    atomic_write(path, [&](std::ostream& os) {
        os << header << '\n';
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i)
                os << row[i] << (i + 1 < row.size() ? "," : "");
            os << '\n';
        }
    });
}

}  // namespace ptycho
