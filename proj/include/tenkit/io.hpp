#pragma once

#include "tenkit/cp.hpp"
#include "tenkit/tensor.hpp"
#include "tenkit/tucker.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace tenkit {

namespace detail {

inline void io_check(bool ok, const std::string& msg) {
    if (!ok) throw std::runtime_error("tenkit io: " + msg);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    io_check(static_cast<bool>(is), "unexpected end of file");
    return v;
}

inline void write_f64(std::ostream& os, const double* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void read_f64(std::istream& is, double* p, std::size_t n) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    io_check(static_cast<bool>(is), "unexpected end of file");
}

inline void write_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

inline void check_magic(std::istream& is, const char magic[4], const std::string& what) {
    char buf[4] = {};
    is.read(buf, 4);
    io_check(static_cast<bool>(is) && std::memcmp(buf, magic, 4) == 0,
             "bad magic for " + what + " file");
    io_check(read_u32(is) == 1u, "unsupported " + what + " file version");
}

}  // namespace detail

// Dense tensor file: "DTEN", version, order, dims, payload f64 little-endian
// column-major.

inline void write_dten(std::ostream& os, const DenseTensor& t) {
    detail::write_magic(os, "DTEN");
    detail::write_u32(os, 1u);
    detail::write_u32(os, static_cast<std::uint32_t>(t.order()));
    for (Index d : t.shape()) detail::write_u32(os, static_cast<std::uint32_t>(d));
    detail::write_f64(os, t.data(), static_cast<std::size_t>(t.size()));
}

inline DenseTensor read_dten(std::istream& is) {
    detail::check_magic(is, "DTEN", "tensor");
    const std::uint32_t order = detail::read_u32(is);
    detail::io_check(order >= 1, "tensor order must be positive");
    std::vector<Index> shape(order);
    for (auto& d : shape) d = static_cast<Index>(detail::read_u32(is));
    DenseTensor t(shape);
    detail::read_f64(is, t.data(), static_cast<std::size_t>(t.size()));
    return t;
}

// Tucker model file: "TKRM", version, order, core dims, factor dims
// (rows, cols per mode), payload core then factors, f64 column-major.

inline void write_tkr(std::ostream& os, const TuckerModel& model) {
    model.validate();
    detail::write_magic(os, "TKRM");
    detail::write_u32(os, 1u);
    detail::write_u32(os, static_cast<std::uint32_t>(model.order()));
    for (Index d : model.core.shape()) detail::write_u32(os, static_cast<std::uint32_t>(d));
    for (const Matrix& u : model.factors) {
        detail::write_u32(os, static_cast<std::uint32_t>(u.rows()));
        detail::write_u32(os, static_cast<std::uint32_t>(u.cols()));
    }
    detail::write_f64(os, model.core.data(), static_cast<std::size_t>(model.core.size()));
    for (const Matrix& u : model.factors)
        detail::write_f64(os, u.data(), static_cast<std::size_t>(u.size()));
}

inline TuckerModel read_tkr(std::istream& is) {
    detail::check_magic(is, "TKRM", "tucker model");
    const std::uint32_t order = detail::read_u32(is);
    detail::io_check(order >= 1, "model order must be positive");
    std::vector<Index> core_shape(order);
    for (auto& d : core_shape) d = static_cast<Index>(detail::read_u32(is));
    std::vector<std::pair<Index, Index>> fdims(order);
    for (auto& [rows, cols] : fdims) {
        rows = static_cast<Index>(detail::read_u32(is));
        cols = static_cast<Index>(detail::read_u32(is));
    }
    TuckerModel model;
    model.core = DenseTensor(core_shape);
    detail::read_f64(is, model.core.data(), static_cast<std::size_t>(model.core.size()));
    model.factors.resize(order);
    for (std::uint32_t n = 0; n < order; ++n) {
        model.factors[n].resize(fdims[n].first, fdims[n].second);
        detail::read_f64(is, model.factors[n].data(),
                         static_cast<std::size_t>(model.factors[n].size()));
    }
    model.validate();
    return model;
}

// CP model file: "CPMD", version, order, rank, dims, factor payloads f64
// column-major.

inline void write_cpm(std::ostream& os, const CpModel& model) {
    model.validate();
    detail::write_magic(os, "CPMD");
    detail::write_u32(os, 1u);
    detail::write_u32(os, static_cast<std::uint32_t>(model.order()));
    detail::write_u32(os, static_cast<std::uint32_t>(model.rank()));
    for (const Matrix& a : model.factors)
        detail::write_u32(os, static_cast<std::uint32_t>(a.rows()));
    for (const Matrix& a : model.factors)
        detail::write_f64(os, a.data(), static_cast<std::size_t>(a.size()));
}

inline CpModel read_cpm(std::istream& is) {
    detail::check_magic(is, "CPMD", "cp model");
    const std::uint32_t order = detail::read_u32(is);
    const std::uint32_t rank = detail::read_u32(is);
    detail::io_check(order >= 1 && rank >= 1, "invalid cp model header");
    std::vector<Index> dims(order);
    for (auto& d : dims) d = static_cast<Index>(detail::read_u32(is));
    CpModel model;
    model.factors.resize(order);
    for (std::uint32_t n = 0; n < order; ++n) {
        model.factors[n].resize(dims[n], static_cast<Index>(rank));
        detail::read_f64(is, model.factors[n].data(),
                         static_cast<std::size_t>(model.factors[n].size()));
    }
    model.validate();
    return model;
}

// Path-based conveniences.

template <typename WriteFn, typename Payload>
void write_file(const std::string& path, const Payload& payload, WriteFn fn) {
    std::ofstream os(path, std::ios::binary);
    detail::io_check(static_cast<bool>(os), "cannot open " + path + " for writing");
    fn(os, payload);
    detail::io_check(static_cast<bool>(os), "write failed for " + path);
}

inline void save_dten(const std::string& path, const DenseTensor& t) {
    write_file(path, t, [](std::ostream& os, const DenseTensor& x) { write_dten(os, x); });
}
inline void save_tkr(const std::string& path, const TuckerModel& m) {
    write_file(path, m, [](std::ostream& os, const TuckerModel& x) { write_tkr(os, x); });
}
inline void save_cpm(const std::string& path, const CpModel& m) {
    write_file(path, m, [](std::ostream& os, const CpModel& x) { write_cpm(os, x); });
}

inline DenseTensor load_dten(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    detail::io_check(static_cast<bool>(is), "cannot open " + path);
    return read_dten(is);
}
inline TuckerModel load_tkr(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    detail::io_check(static_cast<bool>(is), "cannot open " + path);
    return read_tkr(is);
}
inline CpModel load_cpm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    detail::io_check(static_cast<bool>(is), "cannot open " + path);
    return read_cpm(is);
}

}  // namespace tenkit
