#pragma once

//
// tensor exchange formats
//
// coordinate text: header "d1 d2 d3 d4 nnz", then nnz lines
// "i1 i2 i3 i4 value" with 1-based indices; read back as sparse.
//
// raw dense binary: four little-endian int64 extents followed by float64
// values in ivec order (first index fastest), i.e. the column-major buffer of
// the unfolding; read back as dense.
//

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tensor.hpp"

namespace mlti {

static_assert(std::endian::native == std::endian::little, "binary tensor format assumes a little-endian host");

inline void write_coo(const Tensor4d& t, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    const Dims4 d = t.dims();
    char buf[160];
    auto line = [&](Index r, Index c, double v) {
        const Index i1 = r % d.d1, i2 = r / d.d1, i3 = c % d.d3, i4 = c / d.d3;
        std::snprintf(buf, sizeof buf, "%lld %lld %lld %lld %.17g\n", (long long)(i1 + 1), (long long)(i2 + 1),
                      (long long)(i3 + 1), (long long)(i4 + 1), v);
        out << buf;
    };
    Index nnz = 0;
    if (t.is_sparse()) {
        const auto& m = t.sparse_unfolding();
        nnz = m.nonZeros();
        out << d.d1 << ' ' << d.d2 << ' ' << d.d3 << ' ' << d.d4 << ' ' << nnz << '\n';
        for (Index c = 0; c < m.outerSize(); ++c)
            for (SparseMat<double>::InnerIterator it(m, c); it; ++it) line(it.row(), it.col(), it.value());
    } else {
        const auto& m = t.dense_unfolding();
        nnz = (m.array() != 0.0).count();
        out << d.d1 << ' ' << d.d2 << ' ' << d.d3 << ' ' << d.d4 << ' ' << nnz << '\n';
        for (Index c = 0; c < m.cols(); ++c)
            for (Index r = 0; r < m.rows(); ++r)
                if (m(r, c) != 0.0) line(r, c, m(r, c));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline Tensor4d read_coo(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    Dims4 d;
    long long nnz = -1;
    if (!(in >> d.d1 >> d.d2 >> d.d3 >> d.d4 >> nnz) || nnz < 0) throw IoError("bad header in " + path.string());
    std::vector<Entry<double>> entries;
    entries.reserve(size_t(nnz));
    for (long long k = 0; k < nnz; ++k) {
        long long i1, i2, i3, i4;
        double v;
        if (!(in >> i1 >> i2 >> i3 >> i4 >> v)) throw IoError("truncated entry list in " + path.string());
        entries.push_back({Index(i1 - 1), Index(i2 - 1), Index(i3 - 1), Index(i4 - 1), v});
    }
    try {
        return Tensor4d::from_entries(d, entries);
    } catch (const DimensionError& e) {
        throw IoError(std::string(e.what()) + " in " + path.string());
    }
}

inline void write_dense_binary(const Tensor4d& t, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    const Dims4 d = t.dims();
    const std::int64_t hdr[4] = {d.d1, d.d2, d.d3, d.d4};
    out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    DenseMat<double> m = t.unfolding();
    out.write(reinterpret_cast<const char*>(m.data()), std::streamsize(sizeof(double)) * m.size());
    if (!out) throw IoError("write failed: " + path.string());
}

inline Tensor4d read_dense_binary(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::int64_t hdr[4];
    if (!in.read(reinterpret_cast<char*>(hdr), sizeof hdr)) throw IoError("bad header in " + path.string());
    Dims4 d{hdr[0], hdr[1], hdr[2], hdr[3]};
    if (d.d1 < 1 || d.d2 < 1 || d.d3 < 1 || d.d4 < 1) throw IoError("bad extents in " + path.string());
    DenseMat<double> m(d.rows(), d.cols());
    if (!in.read(reinterpret_cast<char*>(m.data()), std::streamsize(sizeof(double)) * m.size()))
        throw IoError("truncated payload in " + path.string());
    return fold(std::move(m), d);
}

}  // namespace mlti
