#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <set>

#include "nfisac/channel_dataset.hpp"

using namespace nfisac;

namespace {

ChannelTensor random_tensor(std::size_t nr, std::size_t nt, std::size_t nk, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    ChannelTensor h(nr, nt, nk);
    for (auto& v : h.data) v = {n(rng), n(rng)};
    return h;
}

ChannelSample sample(const std::string& id, const std::string& mesh, std::uint64_t seed) {
    ChannelSample s;
    s.id = id;
    s.mesh_id = mesh;
    s.seed = seed;
    s.tensor = random_tensor(3, 4, 2, seed);
    s.truth = ground_truth_from_points(static_cast<int>(seed % 2), {Vec3(10.0 + seed, 1.5, 0.2)});
    s.metadata = {{"heading_rad", 0.25 * static_cast<double>(seed)}};
    return s;
}

Dataset small_dataset() {
    Dataset ds;
    ds.header = {{"carrier_hz", 4.9e9}};
    for (std::uint64_t i = 0; i < 4; ++i) ds.samples.push_back(sample("s00000" + std::to_string(i), "m" + std::to_string(i % 2), i));
    ds.splits = {{"m0", "train"}, {"m1", "test"}};
    return ds;
}

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

TEST(ChannelTensor, LayoutRowMajor) {
    ChannelTensor h(2, 3, 4);
    EXPECT_EQ(h.index(0, 0, 1), 1u);
    EXPECT_EQ(h.index(0, 1, 0), 4u);
    EXPECT_EQ(h.index(1, 0, 0), 12u);
    h.at(1, 2, 3) = {5.0, -1.0};
    EXPECT_EQ(h.data.back(), cplx(5.0, -1.0));
    EXPECT_EQ(h.slice(3)(1, 2), cplx(5.0, -1.0));
}

TEST(ChannelTensor, StackKeepsSubcarrierOrder) {
    std::vector<ChannelMatrix> mats(3);
    for (std::size_t k = 0; k < 3; ++k) {
        mats[k].entries = CMat::Constant(2, 2, cplx(static_cast<double>(k), 0.0));
        mats[k].subcarrier = k;
    }
    const auto h = stack_channels(mats);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(h.at(1, 0, k), cplx(static_cast<double>(k), 0.0));
    EXPECT_THROW(stack_channels({}), InvalidConfig);
}

TEST(RealTensor, PlanesAndRoundTrip) {
    const auto h = random_tensor(4, 3, 5, 1);
    const auto r = to_real_tensor(h);
    EXPECT_EQ(r.values.size(), 2 * h.size());
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t k = 0; k < 5; ++k) {
                EXPECT_EQ(r.at(0, a, t, k), h.at(a, t, k).real());
                EXPECT_EQ(r.at(1, a, t, k), h.at(a, t, k).imag());
            }
    EXPECT_EQ(from_real_tensor(r), h);
}

TEST(Noise, ZeroScaleIsIdentity) {
    const auto s = sample("a", "m", 3);
    const auto n = add_complex_noise(s, 0.0, 9);
    EXPECT_EQ(n.sample.tensor, s.tensor);
    EXPECT_EQ(n.sigma, 0.0);
}

TEST(Noise, VarianceMatchesScale) {
    ChannelSample s;
    s.tensor = ChannelTensor(100, 100, 100);
    for (auto& v : s.tensor.data) v = {1.0, 0.0};
    const auto n = add_complex_noise(s, 0.1, 42);
    EXPECT_DOUBLE_EQ(n.sigma, 0.1);
    double acc = 0.0, re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < s.tensor.size(); ++i) {
        const cplx d = n.sample.tensor.data[i] - s.tensor.data[i];
        acc += std::norm(d);
        re += d.real() * d.real();
        im += d.imag() * d.imag();
    }
    const double count = static_cast<double>(s.tensor.size());
    EXPECT_NEAR(acc / count, 0.01, 0.01 * 0.01);
    EXPECT_NEAR(re / count, 0.005, 0.005 * 0.01);
    EXPECT_NEAR(im / count, 0.005, 0.005 * 0.01);
}

TEST(Noise, SeedDeterministic) {
    const auto s = sample("a", "m", 5);
    EXPECT_EQ(add_complex_noise(s, 0.3, 1).sample.tensor, add_complex_noise(s, 0.3, 1).sample.tensor);
    EXPECT_NE(add_complex_noise(s, 0.3, 1).sample.tensor, add_complex_noise(s, 0.3, 2).sample.tensor);
    EXPECT_THROW(add_complex_noise(s, -0.1, 1), InvalidConfig);
}

TEST(Noise, EquivalentSnr) {
    EXPECT_NEAR(equivalent_snr_db(0.1), 20.0, 1e-12);
    EXPECT_NEAR(equivalent_snr_db(1.0), 0.0, 1e-12);
    EXPECT_TRUE(std::isinf(equivalent_snr_db(0.0)));
}

TEST(Phase, ZeroIsExactIdentity) {
    auto s = sample("a", "m", 1);
    s.tensor.data[0] = {-0.0, 0.0};
    const auto out = apply_phase_offset(s, 0.0);
    EXPECT_EQ(std::memcmp(out.tensor.data.data(), s.tensor.data.data(), s.tensor.size() * sizeof(cplx)), 0);
}

TEST(Phase, HalfTurnNegatesAndFullTurnRestores) {
    const auto s = sample("a", "m", 2);
    const auto neg = apply_phase_offset(s, M_PI);
    const auto full = apply_phase_offset(s, 2.0 * M_PI);
    for (std::size_t i = 0; i < s.tensor.size(); ++i) {
        EXPECT_NEAR(std::abs(neg.tensor.data[i] + s.tensor.data[i]), 0.0, 1e-14);
        EXPECT_NEAR(std::abs(full.tensor.data[i] - s.tensor.data[i]), 0.0, 1e-14);
    }
}

TEST(Phase, PreservesMagnitudes) {
    const auto s = sample("a", "m", 4);
    const auto out = apply_phase_offset(s, 0.7);
    for (std::size_t i = 0; i < s.tensor.size(); ++i)
        EXPECT_NEAR(std::abs(out.tensor.data[i]), std::abs(s.tensor.data[i]), 1e-14);
}

TEST(Amplitude, UniformFactorWithinBounds) {
    const auto s = sample("a", "m", 4);
    const auto out = apply_amplitude_perturbation(s, 0.2, 8);
    const cplx f = out.tensor.data[0] / s.tensor.data[0];
    EXPECT_NEAR(f.imag(), 0.0, 1e-14);
    EXPECT_GE(f.real(), 0.8);
    EXPECT_LE(f.real(), 1.2);
    for (std::size_t i = 0; i < s.tensor.size(); ++i)
        EXPECT_NEAR(std::abs(out.tensor.data[i] - f * s.tensor.data[i]), 0.0, 1e-13);
    EXPECT_EQ(apply_amplitude_perturbation(s, 0.0, 8).tensor, s.tensor);
}

TEST(Splits, ProportionsAndDisjoint) {
    std::vector<std::string> meshes;
    for (int i = 0; i < 100; ++i) meshes.push_back("mesh-" + std::to_string(i));
    const auto a = assign_splits(meshes, {0.8, 0.1, 0.1}, 3);
    ASSERT_EQ(a.size(), 100u);
    std::map<Split, int> counts;
    for (const auto& [m, s] : a) ++counts[s];
    EXPECT_EQ(counts[Split::train], 80);
    EXPECT_EQ(counts[Split::validation], 10);
    EXPECT_EQ(counts[Split::test], 10);
    EXPECT_EQ(a, assign_splits(meshes, {0.8, 0.1, 0.1}, 3));
    EXPECT_NE(a, assign_splits(meshes, {0.8, 0.1, 0.1}, 4));
}

TEST(Splits, RepeatedMeshIdsShareOneSplit) {
    const auto a = assign_splits({"x", "y", "x", "z", "y"}, {0.6, 0.2, 0.2}, 1);
    EXPECT_EQ(a.size(), 3u);
}

TEST(Splits, RejectsBadFractions) {
    EXPECT_THROW(assign_splits({"a"}, {0.5, 0.1, 0.1}, 0), InvalidConfig);
    EXPECT_THROW(assign_splits({"a"}, {1.2, -0.1, -0.1}, 0), InvalidConfig);
}

TEST(Container, RoundTripIsFloat32Exact) {
    const Dataset ds = small_dataset();
    DatasetManifest written;
    const auto bytes = encode_container(ds, &written);
    const auto back = decode_container(bytes);
    ASSERT_EQ(back.dataset.samples.size(), ds.samples.size());
    EXPECT_EQ(back.dataset.header, ds.header);
    EXPECT_EQ(back.dataset.splits, ds.splits);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& a = ds.samples[i];
        const auto& b = back.dataset.samples[i];
        EXPECT_EQ(a.id, b.id);
        EXPECT_EQ(a.mesh_id, b.mesh_id);
        EXPECT_EQ(a.seed, b.seed);
        EXPECT_EQ(a.metadata, b.metadata);
        EXPECT_EQ(a.truth.class_id, b.truth.class_id);
        EXPECT_EQ(a.truth.range, b.truth.range);
        EXPECT_EQ(a.truth.azimuth, b.truth.azimuth);
        for (std::size_t n = 0; n < a.tensor.size(); ++n) {
            EXPECT_EQ(b.tensor.data[n].real(), to_f32(a.tensor.data[n].real()));
            EXPECT_EQ(b.tensor.data[n].imag(), to_f32(a.tensor.data[n].imag()));
        }
        EXPECT_EQ(back.manifest.records[i].offset, written.records[i].offset);
        EXPECT_EQ(back.manifest.records[i].length, a.tensor.size() * 8);
    }
}

TEST(Container, EncodingIsDeterministic) {
    EXPECT_EQ(encode_container(small_dataset()), encode_container(small_dataset()));
}

TEST(Container, EmptyDatasetRoundTrips) {
    Dataset ds;
    const auto back = decode_container(encode_container(ds));
    EXPECT_TRUE(back.dataset.samples.empty());
}

TEST(Container, CorruptMagic) {
    auto bytes = encode_container(small_dataset());
    bytes[0] = 'X';
    EXPECT_THROW(decode_container(bytes), IoError);
}

TEST(Container, UnsupportedVersion) {
    auto bytes = encode_container(small_dataset());
    bytes[4] = 7;
    EXPECT_THROW(decode_container(bytes), IoError);
}

TEST(Container, TruncationDetected) {
    const auto bytes = encode_container(small_dataset());
    for (std::size_t cut : {std::size_t{5}, std::size_t{20}, bytes.size() - 1})
        EXPECT_THROW(decode_container(bytes.substr(0, cut)), IoError) << cut;
}

TEST(Container, FileRoundTrip) {
    const auto path = (std::filesystem::temp_directory_path() / "nfisac_container_test.nfct").string();
    const Dataset ds = small_dataset();
    const auto n = write_container(ds, path);
    EXPECT_EQ(n, encode_container(ds).size());
    EXPECT_EQ(read_container(path).dataset.samples.size(), ds.samples.size());
    std::filesystem::remove(path);
    EXPECT_THROW(read_container(path), IoError);
}

TEST(Labels, SidecarRows) {
    const auto csv = labels_csv(small_dataset());
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "id,class,range_m,azimuth_rad,split");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_NE(line.find(rows % 2 == 1 ? ",train" : ",test"), std::string::npos) << line;
    }
    EXPECT_EQ(rows, 4);
}

TEST(VoxelImport, ParsesAndValidates) {
    const json j = {{"pitch", 0.1},
                    {"class_id", 1},
                    {"mesh_id", "box"},
                    {"materials", {{{"relative_permittivity", 3.0}, {"conductivity", 1e4}}}},
                    {"voxels", {{0, 0, 0, 0}, {1, 0, 0, 0}}}};
    const auto t = voxel_target_from_json(j);
    EXPECT_EQ(t.size(), 2u);
    EXPECT_NEAR(t.voxel_offsets[0].x(), -0.05, 1e-15);
    json bad = j;
    bad["voxels"] = {{0, 0, 0, 3}};
    EXPECT_THROW(voxel_target_from_json(bad), InvalidConfig);
    bad = j;
    bad["colour"] = "red";
    EXPECT_THROW(voxel_target_from_json(bad), InvalidConfig);
}
