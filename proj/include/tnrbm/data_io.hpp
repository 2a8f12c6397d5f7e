#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tnrbm/models.hpp"
#include "tnrbm/mpo.hpp"
#include "tnrbm/rng.hpp"
#include "tnrbm/tasks.hpp"
#include "tnrbm/tensor.hpp"

namespace tnrbm {

// ---------------------------------------------------------------------------
// Binary helpers

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64le(std::string& out, double x) {
    std::uint64_t u;
    std::memcpy(&u, &x, sizeof u);
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

/// Bounds-checked forward reader over a byte buffer.
struct ByteReader {
    const std::string& bytes;
    std::size_t pos = 0;

    bool exhausted() const { return pos == bytes.size(); }
    void need(std::size_t n) const {
        if (pos + n > bytes.size())
            throw FormatError("model file truncated");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes[pos++]);
    }
    std::uint32_t u32le() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= std::uint32_t(static_cast<std::uint8_t>(bytes[pos++])) << (8 * i);
        return v;
    }
    double f64le() {
        need(8);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i)
            u |= std::uint64_t(static_cast<std::uint8_t>(bytes[pos++])) << (8 * i);
        double x;
        std::memcpy(&x, &u, sizeof x);
        return x;
    }
};

inline void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f)
            throw IoError("cannot open " + tmp + " for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f)
            throw IoError("write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    if (!f && !f.eof())
        throw IoError("read failed for " + path);
    return std::move(ss).str();
}

} // namespace detail

// ---------------------------------------------------------------------------
// IDX (the MNIST container format: 0x00 0x00 dtype ndims, big-endian dims,
// row-major unsigned-byte payload)

struct IdxHeader {
    std::uint8_t dtype = 0;
    Dims dims;
};

/// Parses the magic and dimension list; leaves the stream at the payload.
inline IdxHeader parse_idx_header(std::istream& in) {
    unsigned char magic[4];
    if (!in.read(reinterpret_cast<char*>(magic), 4))
        throw FormatError("truncated idx header");
    if (magic[0] != 0 || magic[1] != 0)
        throw FormatError("bad idx magic");
    if (magic[2] != 0x08)
        throw FormatError("unsupported idx dtype " + std::to_string(magic[2]));
    IdxHeader h;
    h.dtype = magic[2];
    const std::size_t ndims = magic[3];
    if (ndims == 0)
        throw FormatError("idx dimension count is zero");
    for (std::size_t k = 0; k < ndims; ++k) {
        unsigned char b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4))
            throw FormatError("truncated idx header");
        h.dims.push_back((std::size_t{b[0]} << 24) | (std::size_t{b[1]} << 16) |
                         (std::size_t{b[2]} << 8) | std::size_t{b[3]});
    }
    return h;
}

/// Loads an unsigned-byte IDX file as a real tensor with the file's dims and
/// values 0..255. The payload's row-major order (last index fastest) is
/// rearranged into this library's first-index-fastest storage.
inline DenseTensor load_idx(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open " + path);
    const IdxHeader h = parse_idx_header(f);
    DenseTensor out(h.dims);
    const std::size_t n = out.size();
    std::vector<unsigned char> payload(n);
    if (!f.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(n)))
        throw FormatError("truncated idx payload");
    f.peek();
    if (!f.eof())
        throw FormatError("idx payload size mismatch");

    // Odometer over row-major order, tracking the column-major offset.
    const std::vector<std::size_t> strides = detail::strides_of(h.dims);
    const std::size_t d = h.dims.size();
    std::vector<std::size_t> digit(d, 0);
    std::size_t offset = 0;
    auto dst = out.values();
    for (std::size_t r = 0; r < n; ++r) {
        dst[offset] = static_cast<double>(payload[r]);
        for (std::size_t k = d; k-- > 0;) {
            if (++digit[k] < h.dims[k]) {
                offset += strides[k];
                break;
            }
            digit[k] = 0;
            offset -= strides[k] * (h.dims[k] - 1);
        }
    }
    return out;
}

/// Writes a tensor of values in [0,255] as an unsigned-byte IDX file
/// (big-endian dims, row-major payload). Inverse of load_idx up to
/// rounding.
inline void save_idx(const std::string& path, const DenseTensor& t) {
    std::string out;
    out.push_back(0);
    out.push_back(0);
    out.push_back(0x08);
    out.push_back(static_cast<char>(t.order()));
    for (std::size_t v : t.dims())
        for (int i = 3; i >= 0; --i)
            out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));

    const std::vector<std::size_t> strides = detail::strides_of(t.dims());
    const std::size_t d = t.order(), n = t.size();
    std::vector<std::size_t> digit(d, 0);
    std::size_t offset = 0;
    auto src = t.values();
    for (std::size_t r = 0; r < n; ++r) {
        const double v = src[offset];
        if (!(v >= 0.0 && v <= 255.0))
            throw ValueError("idx output value outside [0,255]");
        out.push_back(static_cast<char>(std::lround(v)));
        for (std::size_t k = d; k-- > 0;) {
            if (++digit[k] < t.dims()[k]) {
                offset += strides[k];
                break;
            }
            digit[k] = 0;
            offset -= strides[k] * (t.dims()[k] - 1);
        }
    }
    detail::write_file_atomic(path, out);
}

/// Extracts sample n from a stacked tensor of dims (N, d1, d2, ...) as a
/// tensor of dims (d1, d2, ...).
inline DenseTensor slice_sample(const DenseTensor& stack, std::size_t n) {
    if (stack.order() < 2)
        throw ShapeError("stack must have a leading sample mode");
    const std::size_t count = stack.dims()[0];
    if (n >= count)
        throw IndexError("sample index out of range");
    Dims sample_dims(stack.dims().begin() + 1, stack.dims().end());
    DenseTensor out(sample_dims);
    auto src = stack.values();
    auto dst = out.values();
    for (std::size_t j = 0; j < dst.size(); ++j)
        dst[j] = src[n + count * j];
    return out;
}

// ---------------------------------------------------------------------------
// Pixel encodings

/// 1 where value >= threshold (default 128 on the 0..255 scale).
inline LayerState binarize(const DenseTensor& x, double threshold = 128.0,
                           LayerRole role = LayerRole::Visible) {
    DenseTensor out(x.dims());
    auto src = x.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (!(src[i] >= 0.0 && src[i] <= 255.0))
            throw ValueError("pixel value outside [0,255]");
        dst[i] = src[i] >= threshold ? 1.0 : 0.0;
    }
    return LayerState(std::move(out), role);
}

/// Binary expansion of integer-valued entries into a new trailing mode of
/// size `bits`, most-significant bit first: dims (a,b) -> (a,b,bits).
inline LayerState bitplane_encode(const DenseTensor& x, std::size_t bits,
                                  LayerRole role = LayerRole::Visible) {
    if (bits == 0 || bits > 63)
        throw ValueError("bits must lie in 1..63");
    Dims out_dims = x.dims();
    out_dims.push_back(bits);
    DenseTensor out(out_dims);
    auto src = x.values();
    auto dst = out.values();
    const std::size_t n = src.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!(src[i] >= 0.0) || src[i] != std::floor(src[i]))
            throw ValueError("bit-plane input must hold non-negative integers");
        const auto v = static_cast<std::uint64_t>(src[i]);
        if (v >> bits)
            throw ValueError("value " + std::to_string(v) + " does not fit in " +
                             std::to_string(bits) + " bits");
        for (std::size_t t = 0; t < bits; ++t)
            dst[i + n * t] = static_cast<double>((v >> (bits - 1 - t)) & 1u);
    }
    return LayerState(std::move(out), role);
}

/// Inverse of bitplane_encode: collapses the trailing bit mode back to
/// integer values.
inline DenseTensor bitplane_decode(const DenseTensor& x) {
    if (x.order() < 2)
        throw ShapeError("bit-plane tensor needs a trailing bit mode");
    const std::size_t bits = x.dims().back();
    Dims out_dims(x.dims().begin(), x.dims().end() - 1);
    DenseTensor out(out_dims);
    auto src = x.values();
    auto dst = out.values();
    const std::size_t n = dst.size();
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t v = 0;
        for (std::size_t t = 0; t < bits; ++t)
            v = (v << 1) | (src[i + n * t] != 0.0 ? 1u : 0u);
        dst[i] = static_cast<double>(v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset splitting

/// Assigns every sample to train/validation/test by per-class stratified
/// shuffle: within each class the shuffled samples are dealt out by
/// largest-remainder quotas (every nonzero fraction gets at least one).
/// With max_train_per_class > 0, training quota overflow moves to test.
inline LabeledDataset split_dataset(const LabeledDataset& ds, const std::array<double, 3>& fractions,
                                    std::uint64_t seed, std::size_t max_train_per_class = 0) {
    if (ds.labels.size() != ds.samples.size())
        throw ValueError("dataset fields have mismatched lengths");
    double sum = 0.0;
    std::size_t nonzero = 0;
    for (double f : fractions) {
        if (!(f >= 0.0))
            throw ValueError("split fractions must be non-negative");
        sum += f;
        nonzero += f > 0.0;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ValueError("split fractions must sum to 1");
    if (nonzero == 0)
        throw ValueError("at least one split fraction must be positive");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
        by_class[ds.labels[i]].push_back(i);

    LabeledDataset out = ds;
    out.split.assign(ds.samples.size(), Split::Train);
    for (auto& [label, members] : by_class) {
        const std::size_t n = members.size();
        if (n < nonzero)
            throw ValueError("class " + std::to_string(label) + " has fewer samples than splits");
        Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(static_cast<std::int64_t>(label))));
        shuffle(members, rng);

        std::array<std::size_t, 3> quota{};
        std::array<double, 3> remainder{};
        std::size_t assigned = 0;
        for (std::size_t s = 0; s < 3; ++s) {
            const double want = fractions[s] * static_cast<double>(n);
            quota[s] = static_cast<std::size_t>(std::floor(want));
            remainder[s] = want - std::floor(want);
            assigned += quota[s];
        }
        for (std::size_t left = n - assigned; left > 0; --left) {
            std::size_t best = 0;
            for (std::size_t s = 1; s < 3; ++s)
                if (remainder[s] > remainder[best])
                    best = s;
            ++quota[best];
            remainder[best] = -1.0;
        }
        for (std::size_t s = 0; s < 3; ++s) {
            if (fractions[s] == 0.0 || quota[s] > 0)
                continue;
            std::size_t donor = 0;
            for (std::size_t t = 1; t < 3; ++t)
                if (quota[t] > quota[donor])
                    donor = t;
            --quota[donor];
            ++quota[s];
        }
        if (max_train_per_class > 0 && quota[0] > max_train_per_class) {
            quota[2] += quota[0] - max_train_per_class;
            quota[0] = max_train_per_class;
        }

        std::size_t pos = 0;
        for (std::size_t s = 0; s < 3; ++s)
            for (std::size_t j = 0; j < quota[s]; ++j)
                out.split[members[pos++]] = static_cast<Split>(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model serialization
//
// Layout: magic "TNRBM1\n" | variant u8 (0 rbm, 1 mvrbm, 2 mporbm) | d u8 |
// visible dims d*u32le | hidden dims d*u32le | ranks (d+1)*u32le (mporbm
// only) | payload f64le: weight blocks in order, then B, then C, each block
// in storage order.

inline constexpr char kModelMagic[] = "TNRBM1\n";

inline void save_model(const std::string& path, const ModelParams& m) {
    std::string out(kModelMagic, 7);
    const auto push_dims = [&](const Dims& dims) {
        for (std::size_t v : dims)
            detail::put_u32le(out, static_cast<std::uint32_t>(v));
    };
    const auto push_block = [&](const DenseTensor& t) {
        for (double x : t.values())
            detail::put_f64le(out, x);
    };
    switch (m.variant()) {
    case ModelVariant::Rbm:
        out.push_back(0);
        out.push_back(1);
        push_dims(m.visible_dims());
        push_dims(m.hidden_dims());
        push_block(m.rbm_weights());
        break;
    case ModelVariant::Mvrbm:
        out.push_back(1);
        out.push_back(2);
        push_dims(m.visible_dims());
        push_dims(m.hidden_dims());
        push_block(m.mv_weights().mode1);
        push_block(m.mv_weights().mode2);
        break;
    case ModelVariant::Mporbm: {
        const Mpo& w = m.mpo_weights();
        out.push_back(2);
        out.push_back(static_cast<char>(w.order()));
        push_dims(m.visible_dims());
        push_dims(m.hidden_dims());
        push_dims(w.ranks());
        for (std::size_t k = 0; k < w.order(); ++k)
            push_block(w.core(k));
        break;
    }
    }
    push_block(m.visible_bias());
    push_block(m.hidden_bias());
    detail::write_file_atomic(path, out);
}

inline ModelParams load_model(const std::string& path) {
    const std::string bytes = detail::read_file(path);
    detail::ByteReader r{bytes};
    r.need(7);
    if (bytes.compare(0, 7, kModelMagic, 7) != 0)
        throw FormatError("bad model magic");
    r.pos = 7;
    const std::uint8_t variant = r.u8();
    const std::size_t d = r.u8();
    if (d == 0)
        throw FormatError("model order is zero");
    Dims visible(d), hidden(d);
    for (auto& v : visible)
        v = r.u32le();
    for (auto& v : hidden)
        v = r.u32le();

    const auto read_block = [&](const Dims& dims) {
        DenseTensor t(dims);
        for (double& x : t.values())
            x = r.f64le();
        return t;
    };

    ModelParams m = [&] {
        switch (variant) {
        case 0: {
            if (d != 1)
                throw FormatError("rbm model must have order 1");
            // Blocks must be read in payload order, so no read_block calls
            // inside argument lists (argument evaluation order is unspecified).
            DenseTensor w = read_block(Dims{visible[0], hidden[0]});
            DenseTensor b = read_block(visible);
            DenseTensor c = read_block(hidden);
            return ModelParams::rbm(std::move(w), std::move(b), std::move(c));
        }
        case 1: {
            if (d != 2)
                throw FormatError("mvrbm model must have order 2");
            DenseTensor w1 = read_block(Dims{visible[0], hidden[0]});
            DenseTensor w2 = read_block(Dims{visible[1], hidden[1]});
            DenseTensor b = read_block(visible);
            DenseTensor c = read_block(hidden);
            return ModelParams::mvrbm(std::move(w1), std::move(w2), std::move(b), std::move(c));
        }
        case 2: {
            Dims ranks(d + 1);
            for (auto& v : ranks)
                v = r.u32le();
            if (ranks.front() != 1 || ranks.back() != 1)
                throw RankError("boundary ranks must be 1 (open boundary conditions)");
            for (std::size_t v : ranks)
                if (v == 0)
                    throw RankError("ranks must be positive");
            std::vector<DenseTensor> cores;
            for (std::size_t k = 0; k < d; ++k)
                cores.push_back(read_block(Dims{ranks[k], visible[k], hidden[k], ranks[k + 1]}));
            DenseTensor b = read_block(visible);
            DenseTensor c = read_block(hidden);
            return ModelParams::mporbm(Mpo(std::move(cores)), std::move(b), std::move(c));
        }
        default:
            throw FormatError("unknown model variant byte " + std::to_string(variant));
        }
    }();
    if (!r.exhausted())
        throw FormatError("model payload size mismatch");
    return m;
}

// ---------------------------------------------------------------------------
// CSV (RFC-4180 flavour: header row, quoted fields, "" escapes, LF or CRLF)

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

namespace detail {

inline std::vector<std::string> parse_csv_record(const std::string& text, std::size_t& pos) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    while (pos < text.size()) {
        const char c = text[pos];
        if (quoted) {
            if (c == '"') {
                if (pos + 1 < text.size() && text[pos + 1] == '"') {
                    cur.push_back('"');
                    pos += 2;
                } else {
                    quoted = false;
                    ++pos;
                }
            } else {
                cur.push_back(c);
                ++pos;
            }
            continue;
        }
        if (c == '"') {
            if (!cur.empty())
                throw FormatError("stray quote inside unquoted csv field");
            quoted = true;
            ++pos;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
            ++pos;
        } else if (c == '\n' || c == '\r') {
            ++pos;
            if (c == '\r' && pos < text.size() && text[pos] == '\n')
                ++pos;
            fields.push_back(std::move(cur));
            return fields;
        } else {
            cur.push_back(c);
            ++pos;
        }
    }
    if (quoted)
        throw FormatError("unterminated quoted csv field");
    fields.push_back(std::move(cur));
    return fields;
}

} // namespace detail

/// Loads a CSV matrix: first record is the header, every later cell must be
/// numeric.
inline CsvTable load_csv(const std::string& path) {
    const std::string text = detail::read_file(path);
    CsvTable table;
    std::size_t pos = 0;
    bool first = true;
    while (pos < text.size()) {
        std::vector<std::string> fields = detail::parse_csv_record(text, pos);
        if (fields.size() == 1 && fields[0].empty())
            continue; // blank line
        if (first) {
            table.header = std::move(fields);
            first = false;
            continue;
        }
        if (fields.size() != table.header.size())
            throw FormatError("csv row has " + std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(table.header.size()));
        std::vector<double> row;
        row.reserve(fields.size());
        for (const std::string& f : fields) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(f, &used));
                if (used != f.size())
                    throw std::invalid_argument(f);
            } catch (const std::exception&) {
                throw FormatError("non-numeric csv cell '" + f + "'");
            }
        }
        table.rows.push_back(std::move(row));
    }
    if (first)
        throw FormatError("csv file has no header row");
    return table;
}

// ---------------------------------------------------------------------------
// PGM output

/// Writes a 2-way image (mode 0 = row, mode 1 = column, values in [0,1]) as
/// binary PGM with maxval 255.
inline void write_pgm(const std::string& path, const DenseTensor& image) {
    if (image.order() != 2)
        throw ShapeError("pgm output expects a 2-way image");
    const std::size_t rows = image.dims()[0], cols = image.dims()[1];
    std::string out = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = image.at({r, c});
            const long byte = std::lround(v * 255.0);
            out.push_back(static_cast<char>(std::min(255L, std::max(0L, byte))));
        }
    detail::write_file_atomic(path, out);
}

} // namespace tnrbm
