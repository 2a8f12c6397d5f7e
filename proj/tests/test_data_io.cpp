#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tnrbm/data_io.hpp"
#include "tnrbm/models.hpp"
#include "tnrbm/mpo.hpp"
#include "tnrbm/rng.hpp"
#include "tnrbm/tensor.hpp"

using namespace tnrbm;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string tmp(const std::string& name) {
    static const std::string dir = [] {
        auto p = std::filesystem::temp_directory_path() / "tnrbm-data-io-tests";
        std::filesystem::create_directories(p);
        return p.string();
    }();
    return dir + "/" + name;
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

bool tensors_equal(const DenseTensor& a, const DenseTensor& b) {
    if (a.dims() != b.dims())
        return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.values()[i] != b.values()[i])
            return false;
    return true;
}

} // namespace

TEST_CASE("idx files round-trip integer tensors", "[data-io]") {
    DenseTensor t(Dims{3, 4, 2});
    Rng rng(1);
    for (double& x : t.values())
        x = static_cast<double>(rng.below(256));
    const std::string path = tmp("roundtrip.idx");
    save_idx(path, t);
    const DenseTensor back = load_idx(path);
    CHECK(tensors_equal(t, back));

    DenseTensor bad(Dims{2}, {300.0, 0.0});
    CHECK_THROWS_AS(save_idx(tmp("bad.idx"), bad), ValueError);
}

TEST_CASE("the published image-file header parses correctly", "[data-io]") {
    // 16-byte preamble of the standard 60000x28x28 unsigned-byte image file.
    const unsigned char raw[] = {0x00, 0x00, 0x08, 0x03, 0x00, 0x00, 0xea, 0x60,
                                 0x00, 0x00, 0x00, 0x1c, 0x00, 0x00, 0x00, 0x1c};
    std::istringstream in(std::string(reinterpret_cast<const char*>(raw), sizeof raw));
    const IdxHeader h = parse_idx_header(in);
    CHECK(h.dtype == 0x08);
    REQUIRE(h.dims.size() == 3);
    CHECK(h.dims[0] == 60000);
    CHECK(h.dims[1] == 28);
    CHECK(h.dims[2] == 28);
}

TEST_CASE("idx loader reports distinct failure modes", "[data-io]") {
    const std::string ok = tmp("ok.idx");
    save_idx(ok, DenseTensor(Dims{2, 2}, {1.0, 2.0, 3.0, 4.0}));
    const std::string good = read_bytes(ok);

    auto corrupted = [&](const std::string& name, const std::string& bytes) {
        const std::string p = tmp(name);
        write_bytes(p, bytes);
        return p;
    };

    CHECK_THROWS_WITH(load_idx(corrupted("trunc-header.idx", good.substr(0, 3))),
                      ContainsSubstring("truncated idx header"));
    std::string magic = good;
    magic[0] = 0x01;
    CHECK_THROWS_WITH(load_idx(corrupted("magic.idx", magic)), ContainsSubstring("bad idx magic"));
    std::string dtype = good;
    dtype[2] = 0x0d;
    CHECK_THROWS_WITH(load_idx(corrupted("dtype.idx", dtype)),
                      ContainsSubstring("unsupported idx dtype 13"));
    std::string nodims = good;
    nodims[3] = 0x00;
    CHECK_THROWS_WITH(load_idx(corrupted("nodims.idx", nodims)),
                      ContainsSubstring("idx dimension count is zero"));
    CHECK_THROWS_WITH(load_idx(corrupted("trunc-payload.idx", good.substr(0, good.size() - 1))),
                      ContainsSubstring("truncated idx payload"));
    CHECK_THROWS_WITH(load_idx(corrupted("extra.idx", good + "x")),
                      ContainsSubstring("idx payload size mismatch"));
    CHECK_THROWS_AS(load_idx(tmp("no-such-file.idx")), IoError);
}

TEST_CASE("idx payload order is row-major on disk", "[data-io]") {
    // header: magic, 2 dims of 2; payload row-major a,b,c,d
    std::string bytes;
    const unsigned char hdr[] = {0, 0, 0x08, 0x02, 0, 0, 0, 2, 0, 0, 0, 2};
    bytes.append(reinterpret_cast<const char*>(hdr), sizeof hdr);
    bytes.push_back(1);
    bytes.push_back(2);
    bytes.push_back(3);
    bytes.push_back(4);
    const std::string p = tmp("rowmajor.idx");
    write_bytes(p, bytes);
    const DenseTensor t = load_idx(p);
    CHECK(t.at({0, 0}) == 1.0);
    CHECK(t.at({0, 1}) == 2.0); // second byte is the column neighbour
    CHECK(t.at({1, 0}) == 3.0);
    CHECK(t.at({1, 1}) == 4.0);
    // column-major storage puts the row neighbour first
    CHECK(t.values()[1] == 3.0);

    save_idx(p, t);
    CHECK(read_bytes(p) == bytes);
}

TEST_CASE("slice_sample extracts one record from a stack", "[data-io]") {
    DenseTensor stack(Dims{2, 2, 3});
    for (std::size_t i = 0; i < stack.size(); ++i)
        stack[i] = static_cast<double>(i);
    const DenseTensor s1 = slice_sample(stack, 1);
    REQUIRE(s1.dims() == (Dims{2, 3}));
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 3; ++b)
            CHECK(s1.at({a, b}) == stack.at({1, a, b}));
    CHECK_THROWS_AS(slice_sample(stack, 2), IndexError);
    CHECK_THROWS_AS(slice_sample(DenseTensor(Dims{4}), 0), ShapeError);
}

TEST_CASE("binarize thresholds at 128 by default", "[data-io]") {
    DenseTensor x(Dims{4}, {0.0, 127.0, 128.0, 255.0});
    const LayerState s = binarize(x);
    CHECK(s.values[0] == 0.0);
    CHECK(s.values[1] == 0.0);
    CHECK(s.values[2] == 1.0);
    CHECK(s.values[3] == 1.0);
    CHECK(s.role == LayerRole::Visible);

    const LayerState low = binarize(x, 1.0, LayerRole::Hidden);
    CHECK(low.values[0] == 0.0);
    CHECK(low.values[1] == 1.0);
    CHECK(low.role == LayerRole::Hidden);

    DenseTensor bad(Dims{1}, {-3.0});
    CHECK_THROWS_AS(binarize(bad), ValueError);
}

TEST_CASE("bit planes expand most significant first", "[data-io]") {
    DenseTensor x(Dims{1}, {5.0});
    const LayerState planes = bitplane_encode(x, 3);
    REQUIRE(planes.values.dims() == (Dims{1, 3}));
    CHECK(planes.values.at({0, 0}) == 1.0); // bit 2
    CHECK(planes.values.at({0, 1}) == 0.0); // bit 1
    CHECK(planes.values.at({0, 2}) == 1.0); // bit 0

    DenseTensor grid(Dims{80, 80});
    Rng rng(7);
    for (double& v : grid.values())
        v = static_cast<double>(rng.below(256));
    const LayerState enc = bitplane_encode(grid, 8);
    REQUIRE(enc.values.dims() == (Dims{80, 80, 8}));
    CHECK(tensors_equal(bitplane_decode(enc.values), grid));

    CHECK_THROWS_AS(bitplane_encode(x, 0), ValueError);
    CHECK_THROWS_AS(bitplane_encode(x, 64), ValueError);
    CHECK_THROWS_AS(bitplane_encode(x, 2), ValueError); // 5 needs 3 bits
    DenseTensor frac(Dims{1}, {1.5});
    CHECK_THROWS_AS(bitplane_encode(frac, 4), ValueError);
    CHECK_THROWS_AS(bitplane_decode(DenseTensor(Dims{4})), ShapeError);
}

TEST_CASE("stratified split respects per-class quotas", "[data-io]") {
    LabeledDataset ds;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 10; ++i) {
            ds.samples.emplace_back(DenseTensor(Dims{2}), LayerRole::Visible);
            ds.labels.push_back(c);
        }
    const LabeledDataset split = split_dataset(ds, {0.5, 0.2, 0.3}, 42);
    REQUIRE(split.split.size() == 30);
    for (int c = 0; c < 3; ++c) {
        std::array<int, 3> count{};
        for (std::size_t i = 0; i < 30; ++i)
            if (split.labels[i] == c)
                ++count[static_cast<std::size_t>(split.split[i])];
        CHECK(count[0] == 5);
        CHECK(count[1] == 2);
        CHECK(count[2] == 3);
    }

    const LabeledDataset again = split_dataset(ds, {0.5, 0.2, 0.3}, 42);
    for (std::size_t i = 0; i < 30; ++i)
        CHECK(split.split[i] == again.split[i]);

    // training cap: overflow moves to test
    const LabeledDataset capped = split_dataset(ds, {0.5, 0.2, 0.3}, 42, 3);
    std::array<int, 3> count{};
    for (std::size_t i = 0; i < 30; ++i)
        if (capped.labels[i] == 0)
            ++count[static_cast<std::size_t>(capped.split[i])];
    CHECK(count[0] == 3);
    CHECK(count[1] == 2);
    CHECK(count[2] == 5);
}

TEST_CASE("split quotas follow largest remainders and the min-1 rule", "[data-io]") {
    LabeledDataset ds;
    for (int i = 0; i < 10; ++i) {
        ds.samples.emplace_back(DenseTensor(Dims{2}), LayerRole::Visible);
        ds.labels.push_back(0);
    }
    // thirds of 10: floors 3/3/3, one leftover goes to the first split
    const LabeledDataset thirds = split_dataset(ds, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 7);
    std::array<int, 3> count{};
    for (Split s : thirds.split)
        ++count[static_cast<std::size_t>(s)];
    CHECK(count == (std::array<int, 3>{4, 3, 3}));

    // tiny nonzero fractions still get one sample each
    const LabeledDataset skew = split_dataset(ds, {0.98, 0.01, 0.01}, 7);
    count = {};
    for (Split s : skew.split)
        ++count[static_cast<std::size_t>(s)];
    CHECK(count == (std::array<int, 3>{8, 1, 1}));

    LabeledDataset small;
    small.samples.emplace_back(DenseTensor(Dims{2}), LayerRole::Visible);
    small.samples.emplace_back(DenseTensor(Dims{2}), LayerRole::Visible);
    small.labels = {0, 0};
    CHECK_THROWS_AS(split_dataset(small, {0.5, 0.2, 0.3}, 1), ValueError);
    CHECK_THROWS_AS(split_dataset(ds, {0.5, 0.2, 0.2}, 1), ValueError);
    CHECK_THROWS_AS(split_dataset(ds, {1.2, -0.2, 0.0}, 1), ValueError);
}

TEST_CASE("models round-trip through their file format", "[data-io]") {
    Rng rng(77);
    std::vector<ModelParams> models;
    models.push_back(ModelParams::random_rbm(3, 2, 0.5, 1));
    models.push_back(ModelParams::random_mvrbm(Dims{2, 3}, Dims{2, 2}, 0.5, 2));
    models.push_back(ModelParams::random_mporbm(Dims{2, 3}, Dims{2, 2}, Dims{1, 3, 1}, 0.5, 3));
    int n = 0;
    for (auto& m : models) {
        for (double& x : m.visible_bias().values())
            x = rng.gaussian();
        for (double& x : m.hidden_bias().values())
            x = rng.gaussian();
        const std::string path = tmp("model" + std::to_string(n++) + ".tnrbm");
        save_model(path, m);
        const ModelParams back = load_model(path);
        CHECK(back.variant() == m.variant());
        CHECK(back.visible_dims() == m.visible_dims());
        CHECK(back.hidden_dims() == m.hidden_dims());
        CHECK(tensors_equal(back.visible_bias(), m.visible_bias()));
        CHECK(tensors_equal(back.hidden_bias(), m.hidden_bias()));

        const std::string second = path + ".again";
        save_model(second, back);
        CHECK(read_bytes(path) == read_bytes(second));
    }
}

TEST_CASE("the reference architecture serializes to a frozen size", "[data-io]") {
    const ModelParams m =
        ModelParams::random_mporbm(Dims{28, 28}, Dims{10, 10}, Dims{1, 40, 1}, 0.01, 9);
    const std::string path = tmp("frozen.tnrbm");
    save_model(path, m);
    // 7 magic + 2 bytes + 2*2*4 dims + 3*4 ranks = 37 header bytes;
    // (22400 weights + 784 + 100 biases) doubles = 186272 payload bytes.
    CHECK(std::filesystem::file_size(path) == 186309);
}

TEST_CASE("model loader rejects malformed files", "[data-io]") {
    const std::string path = tmp("base-model.tnrbm");
    save_model(path, ModelParams::random_mporbm(Dims{2, 2}, Dims{2, 2}, Dims{1, 2, 1}, 0.5, 4));
    const std::string good = read_bytes(path);

    auto corrupted = [&](const std::string& name, const std::string& bytes) {
        const std::string p = tmp(name);
        write_bytes(p, bytes);
        return p;
    };

    std::string magic = good;
    magic[0] = 'X';
    CHECK_THROWS_WITH(load_model(corrupted("magic.tnrbm", magic)),
                      ContainsSubstring("bad model magic"));
    std::string variant = good;
    variant[7] = 9;
    CHECK_THROWS_WITH(load_model(corrupted("variant.tnrbm", variant)),
                      ContainsSubstring("unknown model variant byte 9"));
    std::string rank = good;
    rank[25] = 2; // first boundary rank (u32le at offset 25)
    CHECK_THROWS_AS(load_model(corrupted("rank.tnrbm", rank)), RankError);
    CHECK_THROWS_WITH(load_model(corrupted("trunc.tnrbm", good.substr(0, good.size() - 4))),
                      ContainsSubstring("model file truncated"));
    CHECK_THROWS_WITH(load_model(corrupted("extra.tnrbm", good + "zz")),
                      ContainsSubstring("model payload size mismatch"));

    std::string rbm_path = tmp("rbm-order.tnrbm");
    save_model(rbm_path, ModelParams::random_rbm(2, 2, 0.5, 5));
    std::string bad_order = read_bytes(rbm_path);
    bad_order[8] = 2; // order byte: rbm must be 1
    // the dims that follow no longer line up, but the order check fires first
    CHECK_THROWS_WITH(load_model(corrupted("rbm-order-bad.tnrbm", bad_order)),
                      ContainsSubstring("rbm model must have order 1"));
}

TEST_CASE("csv parsing handles quoting and rejects bad cells", "[data-io]") {
    const std::string path = tmp("table.csv");
    write_bytes(path, "epoch,\"recon,error\"\r\n1,0.5\n2,\"0.25\"\n\n3,1e-3\n");
    const CsvTable t = load_csv(path);
    REQUIRE(t.header.size() == 2);
    CHECK(t.header[0] == "epoch");
    CHECK(t.header[1] == "recon,error");
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[1][1] == 0.25);
    CHECK(t.rows[2][1] == 1e-3);

    write_bytes(path, "a,b\n\"x\"\"y\",1\n");
    CHECK_THROWS_WITH(load_csv(path), ContainsSubstring("non-numeric csv cell 'x\"y'"));
    write_bytes(path, "a,b\n1,2,3\n");
    CHECK_THROWS_WITH(load_csv(path), ContainsSubstring("expected 2"));
    write_bytes(path, "a,b\n\"1,2\n");
    CHECK_THROWS_WITH(load_csv(path), ContainsSubstring("unterminated"));
    write_bytes(path, "a,b\n1\"2,3\n");
    CHECK_THROWS_WITH(load_csv(path), ContainsSubstring("stray quote"));
    write_bytes(path, "");
    CHECK_THROWS_WITH(load_csv(path), ContainsSubstring("no header row"));
}

TEST_CASE("pgm output is byte-exact", "[data-io]") {
    DenseTensor img(Dims{2, 2});
    img.at({0, 0}) = 0.0;
    img.at({0, 1}) = 1.0;
    img.at({1, 0}) = 0.5;
    img.at({1, 1}) = 0.2;
    const std::string path = tmp("img.pgm");
    write_pgm(path, img);
    std::string expect = "P5\n2 2\n255\n";
    expect.push_back(0);
    expect.push_back(static_cast<char>(255));
    expect.push_back(static_cast<char>(128)); // lround(127.5) rounds away from zero
    expect.push_back(51);
    CHECK(read_bytes(path) == expect);
    CHECK_THROWS_AS(write_pgm(path, DenseTensor(Dims{4})), ShapeError);
}
