#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patsvd/geometry.hpp"
#include "patsvd/network.hpp"
#include "patsvd/phantom.hpp"
#include "patsvd/svd.hpp"
#include "patsvd/util.hpp"

namespace patsvd {

namespace io {

using nlohmann::json;

inline constexpr char kMagicMatrix[8] = {'P', 'A', 'T', 'S', 'V', 'D', '\x01', '\0'};
inline constexpr char kMagicFactors[8] = {'P', 'A', 'T', 'S', 'V', 'D', '\x02', '\0'};
inline constexpr char kMagicNetwork[8] = {'P', 'A', 'T', 'S', 'V', 'D', '\x03', '\0'};

// All scalar fields are little-endian; this code assumes a little-endian
// host (asserted at open time via a probe value).
inline void check_endianness() {
    const uint32_t probe = 0x01020304;
    if (*reinterpret_cast<const unsigned char*>(&probe) != 0x04)
        throw std::runtime_error("patsvd containers require a little-endian host");
}

inline void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw std::runtime_error("container truncated while reading u64");
    return v;
}
inline void write_f64(std::ostream& os, const double* p, size_t n) {
    os.write(reinterpret_cast<const char*>(p), std::streamsize(n * 8));
}
inline void read_f64(std::istream& is, double* p, size_t n) {
    is.read(reinterpret_cast<char*>(p), std::streamsize(n * 8));
    if (!is) throw std::runtime_error("container truncated while reading f64 block");
}

inline void write_metadata(std::ostream& os, const json& meta) {
    const std::string text = meta.dump(2);
    write_u64(os, text.size());
    os.write(text.data(), std::streamsize(text.size()));
}

inline json read_metadata(std::istream& is) {
    const uint64_t len = read_u64(is);
    std::string text(len, '\0');
    is.read(text.data(), std::streamsize(len));
    if (!is) throw std::runtime_error("container truncated while reading metadata");
    return json::parse(text);
}

inline void expect_magic(std::istream& is, const char* magic, const std::string& what) {
    char buf[8] = {};
    is.read(buf, 7);
    if (!is || !std::equal(buf, buf + 7, magic))
        throw std::runtime_error("bad magic bytes: file is not a " + what + " container");
}

inline json grid_metadata(const BasisGrid& grid) {
    return json{{"grid_n", grid.n},
                {"kb_a", grid.kb.a},
                {"kb_gamma", grid.kb.gamma},
                {"kb_m", grid.kb.m}};
}

inline BasisGrid grid_from_metadata(const json& meta) {
    BasisGrid g;
    g.n = meta.at("grid_n").get<int>();
    g.kb.a = meta.at("kb_a").get<double>();
    g.kb.gamma = meta.at("kb_gamma").get<double>();
    g.kb.m = meta.at("kb_m").get<int>();
    return g;
}

inline json geometry_metadata(const MeasurementGeometry& geom) {
    return json{{"num_detectors", geom.num_detectors},
                {"num_times", geom.num_times},
                {"horizon", geom.horizon}};
}

inline MeasurementGeometry geometry_from_metadata(const json& meta) {
    MeasurementGeometry g;
    g.num_detectors = meta.at("num_detectors").get<int>();
    g.num_times = meta.at("num_times").get<int>();
    g.horizon = meta.at("horizon").get<double>();
    return g;
}

inline void save_system_matrix(const std::string& path, const SystemMatrix& a) {
    check_endianness();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os.write(kMagicMatrix, 7);
    write_u64(os, uint64_t(a.entries.rows()));
    write_u64(os, uint64_t(a.entries.cols()));
    // row-major order per the container spec
    for (Eigen::Index r = 0; r < a.entries.rows(); ++r) {
        const Vector row = a.entries.row(r);
        write_f64(os, row.data(), size_t(row.size()));
    }
    json meta = grid_metadata(a.grid);
    meta.update(geometry_metadata(a.geometry));
    meta["table_resolution"] = a.table_resolution;
    write_metadata(os, meta);
    if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

inline SystemMatrix load_system_matrix(const std::string& path) {
    check_endianness();
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    expect_magic(is, kMagicMatrix, "system-matrix");
    const uint64_t rows = read_u64(is), cols = read_u64(is);
    SystemMatrix a;
    a.entries.resize(Eigen::Index(rows), Eigen::Index(cols));
    std::vector<double> row(cols);
    for (uint64_t r = 0; r < rows; ++r) {
        read_f64(is, row.data(), cols);
        for (uint64_t c = 0; c < cols; ++c) a.entries(Eigen::Index(r), Eigen::Index(c)) = row[c];
    }
    const json meta = read_metadata(is);
    a.grid = grid_from_metadata(meta);
    a.geometry = geometry_from_metadata(meta);
    a.table_resolution = meta.value("table_resolution", 0);
    return a;
}

inline void save_factors(const std::string& path, const SvdFactors& f, const json& extra_meta = {}) {
    check_endianness();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os.write(kMagicFactors, 7);
    write_u64(os, uint64_t(f.rank()));
    write_u64(os, uint64_t(f.data_dim()));
    write_u64(os, uint64_t(f.coeff_dim()));
    write_f64(os, f.sigma.data(), size_t(f.sigma.size()));
    for (int i = 0; i < f.rank(); ++i) {
        const Vector u = f.u.col(i);
        write_f64(os, u.data(), size_t(u.size()));
    }
    for (int i = 0; i < f.rank(); ++i) {
        const Vector v = f.v.col(i);
        write_f64(os, v.data(), size_t(v.size()));
    }
    json meta = extra_meta;
    meta["rank_cutoff"] = f.rank_cutoff;
    write_metadata(os, meta);
    if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

inline SvdFactors load_factors(const std::string& path, json* meta_out = nullptr) {
    check_endianness();
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    expect_magic(is, kMagicFactors, "SVD-factors");
    const uint64_t r = read_u64(is), data_dim = read_u64(is), coeff_dim = read_u64(is);
    SvdFactors f;
    f.sigma.resize(Eigen::Index(r));
    read_f64(is, f.sigma.data(), r);
    f.u.resize(Eigen::Index(data_dim), Eigen::Index(r));
    f.v.resize(Eigen::Index(coeff_dim), Eigen::Index(r));
    std::vector<double> buf(std::max(data_dim, coeff_dim));
    for (uint64_t i = 0; i < r; ++i) {
        read_f64(is, buf.data(), data_dim);
        for (uint64_t j = 0; j < data_dim; ++j) f.u(Eigen::Index(j), Eigen::Index(i)) = buf[j];
    }
    for (uint64_t i = 0; i < r; ++i) {
        read_f64(is, buf.data(), coeff_dim);
        for (uint64_t j = 0; j < coeff_dim; ++j) f.v(Eigen::Index(j), Eigen::Index(i)) = buf[j];
    }
    const json meta = read_metadata(is);
    f.rank_cutoff = meta.value("rank_cutoff", 1e-12);
    if (meta_out) *meta_out = meta;
    return f;
}

inline void save_network(const std::string& path, const UNet& net, double alpha,
                         uint64_t factors_checksum) {
    check_endianness();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os.write(kMagicNetwork, 7);
    const json desc{{"input_size", net.config().input_size}, {"widths", net.config().widths}};
    write_metadata(os, desc);
    const std::vector<double> params = net.flatten_params();
    write_u64(os, params.size());
    write_f64(os, params.data(), params.size());
    write_f64(os, &alpha, 1);
    write_u64(os, factors_checksum);
    if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

struct LoadedNetwork {
    UNet net;
    double alpha = 0.0;
    uint64_t factors_checksum = 0;
};

inline LoadedNetwork load_network(const std::string& path) {
    check_endianness();
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    expect_magic(is, kMagicNetwork, "network-params");
    const json desc = read_metadata(is);
    UNet::Config cfg;
    cfg.input_size = desc.at("input_size").get<int>();
    cfg.widths = desc.at("widths").get<std::vector<int>>();
    LoadedNetwork out;
    out.net = UNet(cfg);
    const uint64_t n = read_u64(is);
    std::vector<double> params(n);
    read_f64(is, params.data(), n);
    out.net.set_params(params);
    read_f64(is, &out.alpha, 1);
    out.factors_checksum = read_u64(is);
    return out;
}

inline uint64_t file_checksum(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "' for checksum");
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (is) {
        is.read(buf, sizeof buf);
        h = fnv1a64(buf, size_t(is.gcount()), h);
    }
    return h;
}

inline void save_raw_vector(const std::string& path, const Vector& v) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_f64(os, v.data(), size_t(v.size()));
}

inline Vector load_raw_vector(const std::string& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    const std::streamoff bytes = is.tellg();
    if (bytes % 8 != 0) throw std::runtime_error("'" + path + "' is not a raw f64 vector");
    is.seekg(0);
    Vector v(bytes / 8);
    read_f64(is, v.data(), size_t(v.size()));
    return v;
}

/// Writes an 8-bit PGM with min -> 0, max -> 255 and records the scale in a
/// sidecar text file next to the image.
inline void save_pgm(const std::string& path, const Vector& image, int n) {
    if (image.size() != n * n) throw std::invalid_argument("save_pgm: length mismatch");
    const double lo = image.minCoeff(), hi = image.maxCoeff();
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os << "P5\n" << n << " " << n << "\n255\n";
    for (int row = n - 1; row >= 0; --row) // image rows top-down, grid rows bottom-up
        for (int col = 0; col < n; ++col) {
            const double v = (image[row * n + col] - lo) * scale;
            os.put(char(static_cast<unsigned char>(std::clamp(v, 0.0, 255.0) + 0.5)));
        }
    std::ofstream side(path + ".scale.txt");
    side << "min " << lo << "\nmax " << hi << "\n";
}

inline void save_csv(const std::string& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os.precision(17);
    for (size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << "\n";
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << "\n";
    }
}

/// Dataset directory: manifest.json plus per-sample raw f64 files
/// sample_NNNN_x.f64 / sample_NNNN_y.f64.
inline void save_dataset(const std::string& dir, const Dataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const bool has_y = ds.y.size() == ds.x.size() && !ds.x.empty();
    char name[64];
    for (size_t i = 0; i < ds.size(); ++i) {
        std::snprintf(name, sizeof name, "sample_%04zu_x.f64", i);
        save_raw_vector((fs::path(dir) / name).string(), ds.x[i]);
        if (has_y) {
            std::snprintf(name, sizeof name, "sample_%04zu_y.f64", i);
            save_raw_vector((fs::path(dir) / name).string(), ds.y[i]);
        }
    }
    json manifest{{"role", role_tag(ds.role)},
                  {"rho", ds.rho},
                  {"master_seed", ds.master_seed},
                  {"grid_n", ds.grid_n},
                  {"has_y", has_y},
                  {"count", ds.size()}};
    std::ofstream os((fs::path(dir) / "manifest.json").string());
    os << manifest.dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream is((fs::path(dir) / "manifest.json").string());
    if (!is) throw std::runtime_error("cannot open dataset manifest in '" + dir + "'");
    json manifest = json::parse(is);
    Dataset ds;
    ds.role = role_from_tag(manifest.at("role").get<std::string>());
    ds.rho = manifest.at("rho").get<double>();
    ds.master_seed = manifest.at("master_seed").get<uint64_t>();
    ds.grid_n = manifest.at("grid_n").get<int>();
    const size_t count = manifest.at("count").get<size_t>();
    const bool has_y = manifest.value("has_y", true);
    char name[64];
    for (size_t i = 0; i < count; ++i) {
        std::snprintf(name, sizeof name, "sample_%04zu_x.f64", i);
        ds.x.push_back(load_raw_vector((fs::path(dir) / name).string()));
        if (has_y) {
            std::snprintf(name, sizeof name, "sample_%04zu_y.f64", i);
            ds.y.push_back(load_raw_vector((fs::path(dir) / name).string()));
        }
    }
    return ds;
}

} // namespace io

} // namespace patsvd
