#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nfisac/core.hpp"
#include "nfisac/em_forward.hpp"
#include "nfisac/target_scene.hpp"

namespace nfisac {

using json = nlohmann::json;

/// Complex channel tensor over (rx, tx, subcarrier), row-major [rx][tx][k].
struct ChannelTensor {
    std::size_t n_rx = 0, n_tx = 0, n_k = 0;
    std::vector<cplx> data;

    ChannelTensor() = default;
    ChannelTensor(std::size_t nr, std::size_t nt, std::size_t nk)
        : n_rx(nr), n_tx(nt), n_k(nk), data(nr * nt * nk, cplx{0.0}) {}

    std::size_t size() const { return data.size(); }
    std::size_t index(std::size_t r, std::size_t t, std::size_t k) const { return (r * n_tx + t) * n_k + k; }
    cplx& at(std::size_t r, std::size_t t, std::size_t k) { return data[index(r, t, k)]; }
    const cplx& at(std::size_t r, std::size_t t, std::size_t k) const { return data[index(r, t, k)]; }

    /// The N_r x N_t slice of subcarrier k.
    CMat slice(std::size_t k) const {
        CMat m(static_cast<Eigen::Index>(n_rx), static_cast<Eigen::Index>(n_tx));
        for (std::size_t r = 0; r < n_rx; ++r)
            for (std::size_t t = 0; t < n_tx; ++t)
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = at(r, t, k);
        return m;
    }

    bool operator==(const ChannelTensor&) const = default;
};

inline ChannelTensor stack_channels(const std::vector<ChannelMatrix>& mats) {
    require(!mats.empty(), "stack_channels: no channel matrices");
    const auto nr = static_cast<std::size_t>(mats.front().entries.rows());
    const auto nt = static_cast<std::size_t>(mats.front().entries.cols());
    ChannelTensor h(nr, nt, mats.size());
    for (std::size_t k = 0; k < mats.size(); ++k) {
        require(static_cast<std::size_t>(mats[k].entries.rows()) == nr &&
                    static_cast<std::size_t>(mats[k].entries.cols()) == nt,
                "stack_channels: inconsistent matrix shapes");
        for (std::size_t r = 0; r < nr; ++r)
            for (std::size_t t = 0; t < nt; ++t)
                h.at(r, t, k) = mats[k].entries(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t));
    }
    return h;
}

/// Root-mean-square magnitude over all entries.
inline double rms(const ChannelTensor& h) {
    if (h.data.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& v : h.data) acc += std::norm(v);
    return std::sqrt(acc / static_cast<double>(h.data.size()));
}

struct ChannelSample {
    std::string id;
    ChannelTensor tensor;
    GroundTruth truth;
    std::string mesh_id;
    std::uint64_t seed = 0;
    json metadata = json::object();
};

/// Real-valued view: plane 0 holds the real parts, plane 1 the imaginary parts.
struct RealTensor {
    std::size_t n_rx = 0, n_tx = 0, n_k = 0;
    std::vector<double> values;  // (2, N_r, N_t, K_s) row-major

    double at(std::size_t plane, std::size_t r, std::size_t t, std::size_t k) const {
        return values[((plane * n_rx + r) * n_tx + t) * n_k + k];
    }
};

inline RealTensor to_real_tensor(const ChannelTensor& h) {
    RealTensor out{h.n_rx, h.n_tx, h.n_k, std::vector<double>(2 * h.size())};
    for (std::size_t i = 0; i < h.size(); ++i) {
        out.values[i] = h.data[i].real();
        out.values[h.size() + i] = h.data[i].imag();
    }
    return out;
}

inline ChannelTensor from_real_tensor(const RealTensor& t) {
    ChannelTensor h(t.n_rx, t.n_tx, t.n_k);
    require(t.values.size() == 2 * h.size(), "from_real_tensor: value count does not match shape");
    for (std::size_t i = 0; i < h.size(); ++i) h.data[i] = {t.values[i], t.values[h.size() + i]};
    return h;
}

inline RealTensor to_real_tensor(const ChannelSample& s) { return to_real_tensor(s.tensor); }

struct NoiseResult {
    ChannelSample sample;
    double sigma = 0.0;
};

/// Adds i.i.d. circular complex Gaussian noise with per-entry standard deviation scale*RMS(H).
inline NoiseResult add_complex_noise(const ChannelSample& sample, double scale, std::uint64_t seed) {
    require(std::isfinite(scale) && scale >= 0.0, "add_complex_noise: scale must be >= 0");
    NoiseResult out{sample, scale * rms(sample.tensor)};
    if (scale == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    const double per_axis = out.sigma / std::sqrt(2.0);
    for (auto& v : out.sample.tensor.data) {
        double re = n01(rng), im = n01(rng);
        v += cplx{per_axis * re, per_axis * im};
    }
    return out;
}

/// Equivalent input SNR in dB for a normalized noise scale sigma/RMS(H).
inline double equivalent_snr_db(double scale) {
    require(scale >= 0.0, "equivalent_snr_db: scale must be >= 0");
    return scale == 0.0 ? std::numeric_limits<double>::infinity() : -20.0 * std::log10(scale);
}

inline ChannelSample apply_phase_offset(const ChannelSample& sample, double offset_rad) {
    ChannelSample out = sample;
    if (offset_rad == 0.0) return out;  // keeps signed zeros intact
    const cplx rot = std::polar(1.0, offset_rad);
    for (auto& v : out.tensor.data) v *= rot;
    return out;
}

/// Optional augmentation: uniform amplitude scale in [1-delta, 1+delta]. Unused by default.
inline ChannelSample apply_amplitude_perturbation(const ChannelSample& sample, double delta, std::uint64_t seed) {
    require(delta >= 0.0 && delta < 1.0, "amplitude perturbation: delta must be in [0, 1)");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(1.0 - delta, 1.0 + delta);
    const double factor = delta == 0.0 ? 1.0 : u(rng);
    ChannelSample out = sample;
    for (auto& v : out.tensor.data) v *= factor;
    return out;
}

// ---------------------------------------------------------------------------
// Splits

enum class Split { train, validation, test };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "unknown";
}

/// Mesh-level assignment: unique ids are shuffled under `seed`, then split by
/// largest-remainder counts so each mesh lands in exactly one split.
inline std::map<std::string, Split> assign_splits(const std::vector<std::string>& mesh_ids,
                                                  const std::array<double, 3>& fractions, std::uint64_t seed) {
    double sum = 0.0;
    for (double f : fractions) {
        require(std::isfinite(f) && f >= 0.0, "assign_splits: fractions must be nonnegative");
        sum += f;
    }
    require(std::abs(sum - 1.0) <= 1e-9, "assign_splits: fractions must sum to 1");

    std::vector<std::string> ids(mesh_ids.begin(), mesh_ids.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::mt19937_64 rng(seed);
    for (std::size_t i = ids.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(ids[i - 1], ids[pick(rng)]);
    }

    const double n = static_cast<double>(ids.size());
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
        double exact = fractions[s] * n;
        counts[s] = static_cast<std::size_t>(std::floor(exact));
        rem[s] = exact - std::floor(exact);
        assigned += counts[s];
    }
    while (assigned < ids.size()) {
        int best = 0;
        for (int s = 1; s < 3; ++s)
            if (rem[s] > rem[best]) best = s;
        ++counts[best];
        rem[best] = -1.0;
        ++assigned;
    }

    std::map<std::string, Split> out;
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s)
        for (std::size_t c = 0; c < counts[s]; ++c) out[ids[pos++]] = static_cast<Split>(s);
    return out;
}

// ---------------------------------------------------------------------------
// Container: "NFCT" | u32 version | u32 header length | JSON header | payloads.
// Payload entries are interleaved little-endian float32 (re, im), row-major [rx][tx][k].

inline constexpr char container_magic[4] = {'N', 'F', 'C', 'T'};
inline constexpr std::uint32_t container_version = 1;

struct ManifestRecord {
    std::string id;
    int class_id = 0;
    double range_m = 0.0;
    double azimuth_rad = 0.0;
    std::string mesh_id;
    std::uint64_t offset = 0;  // from the start of the payload region
    std::uint64_t length = 0;
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;
    std::map<std::string, std::string> splits;  // mesh_id -> split
    std::uint32_t format_version = container_version;
};

struct Dataset {
    json header = json::object();  // array/grid/config echo
    std::vector<ChannelSample> samples;
    std::map<std::string, std::string> splits;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32(std::string& out, double v) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

inline double get_f32(const unsigned char* p) { return static_cast<double>(std::bit_cast<float>(get_u32(p))); }

inline json truth_json(const GroundTruth& g) {
    return {{"class_id", g.class_id},
            {"range_m", g.range},
            {"azimuth_rad", g.azimuth},
            {"center_xy_m", {g.center_projected.x(), g.center_projected.y()}}};
}

inline GroundTruth truth_from_json(const json& j) {
    GroundTruth g;
    g.class_id = j.at("class_id").get<int>();
    g.range = j.at("range_m").get<double>();
    g.azimuth = j.at("azimuth_rad").get<double>();
    g.center_projected = {j.at("center_xy_m").at(0).get<double>(), j.at("center_xy_m").at(1).get<double>()};
    return g;
}

}  // namespace detail

/// Serializes a dataset to bytes. Samples are rounded to float32.
inline std::string encode_container(const Dataset& ds, DatasetManifest* manifest_out = nullptr) {
    DatasetManifest manifest;
    std::string payload;
    json records = json::array();
    for (const auto& s : ds.samples) {
        const auto& t = s.tensor;
        require(t.data.size() == t.n_rx * t.n_tx * t.n_k, "container: tensor shape mismatch for sample " + s.id);
        ManifestRecord rec{s.id, s.truth.class_id, s.truth.range, s.truth.azimuth, s.mesh_id,
                           payload.size(), static_cast<std::uint64_t>(t.size()) * 8};
        for (const auto& v : t.data) {
            detail::put_f32(payload, v.real());
            detail::put_f32(payload, v.imag());
        }
        const auto split_it = ds.splits.find(s.mesh_id);
        records.push_back({{"id", s.id},
                           {"class", s.truth.class_id},
                           {"range_m", s.truth.range},
                           {"azimuth_rad", s.truth.azimuth},
                           {"truth", detail::truth_json(s.truth)},
                           {"mesh_id", s.mesh_id},
                           {"seed", s.seed},
                           {"split", split_it == ds.splits.end() ? "" : split_it->second},
                           {"shape", {t.n_rx, t.n_tx, t.n_k}},
                           {"offset", rec.offset},
                           {"length", rec.length},
                           {"metadata", s.metadata}});
        manifest.records.push_back(rec);
    }
    manifest.splits = ds.splits;
    json header = {{"format", "NFCT"},
                   {"version", container_version},
                   {"storage", "complex interleaved float32 little-endian, row-major [rx][tx][k]"},
                   {"config", ds.header},
                   {"records", records},
                   {"splits", ds.splits}};
    const std::string hdr = header.dump();
    std::string out(container_magic, 4);
    detail::put_u32(out, container_version);
    detail::put_u32(out, static_cast<std::uint32_t>(hdr.size()));
    out += hdr;
    out += payload;
    if (manifest_out) *manifest_out = std::move(manifest);
    return out;
}

struct DecodedContainer {
    Dataset dataset;
    DatasetManifest manifest;
};

inline DecodedContainer decode_container(const std::string& bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 12) throw IoError("container: truncated file (shorter than the 12-byte preamble)");
    if (std::memcmp(bytes.data(), container_magic, 4) != 0)
        throw IoError("container: bad magic, expected \"NFCT\"");
    const std::uint32_t version = detail::get_u32(p + 4);
    if (version != container_version)
        throw IoError("container: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(container_version) + ")");
    const std::uint64_t hlen = detail::get_u32(p + 8);
    if (12 + hlen > bytes.size()) throw IoError("container: truncated header");
    json header;
    try {
        header = json::parse(bytes.begin() + 12, bytes.begin() + static_cast<std::ptrdiff_t>(12 + hlen));
    } catch (const json::exception& e) {
        throw IoError(std::string("container: malformed header JSON: ") + e.what());
    }
    const std::uint64_t base = 12 + hlen;

    DecodedContainer out;
    out.manifest.format_version = version;
    try {
        out.dataset.header = header.at("config");
        out.dataset.splits = header.at("splits").get<std::map<std::string, std::string>>();
        out.manifest.splits = out.dataset.splits;
        for (const auto& r : header.at("records")) {
            ChannelSample s;
            s.id = r.at("id").get<std::string>();
            s.truth = detail::truth_from_json(r.at("truth"));
            s.mesh_id = r.at("mesh_id").get<std::string>();
            s.seed = r.at("seed").get<std::uint64_t>();
            s.metadata = r.at("metadata");
            const auto shape = r.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 3) throw IoError("container: record " + s.id + " has a malformed shape");
            const std::uint64_t off = r.at("offset").get<std::uint64_t>();
            const std::uint64_t len = r.at("length").get<std::uint64_t>();
            const std::uint64_t expect = static_cast<std::uint64_t>(shape[0]) * shape[1] * shape[2] * 8;
            if (len != expect)
                throw IoError("container: shape mismatch for record " + s.id + " (length " + std::to_string(len) +
                              ", shape implies " + std::to_string(expect) + ")");
            if (base + off + len > bytes.size()) throw IoError("container: truncated payload for record " + s.id);
            s.tensor = ChannelTensor(shape[0], shape[1], shape[2]);
            const unsigned char* q = p + base + off;
            for (std::size_t i = 0; i < s.tensor.size(); ++i)
                s.tensor.data[i] = {detail::get_f32(q + 8 * i), detail::get_f32(q + 8 * i + 4)};
            out.manifest.records.push_back(
                {s.id, s.truth.class_id, s.truth.range, s.truth.azimuth, s.mesh_id, off, len});
            out.dataset.samples.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw IoError(std::string("container: malformed header: ") + e.what());
    }
    return out;
}

inline std::uint64_t write_container(const Dataset& ds, const std::string& path,
                                     DatasetManifest* manifest_out = nullptr) {
    const std::string bytes = encode_container(ds, manifest_out);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("container: cannot open '" + path + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("container: write failed for '" + path + "'");
    return bytes.size();
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline DecodedContainer read_container(const std::string& path) { return decode_container(read_file_bytes(path)); }

/// Sidecar columns: id,class,range_m,azimuth_rad,split
inline std::string labels_csv(const Dataset& ds) {
    std::ostringstream out;
    out.precision(17);
    out << "id,class,range_m,azimuth_rad,split\n";
    for (const auto& s : ds.samples) {
        auto it = ds.splits.find(s.mesh_id);
        out << s.id << ',' << s.truth.class_id << ',' << s.truth.range << ',' << s.truth.azimuth << ','
            << (it == ds.splits.end() ? "" : it->second) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Voxel import: {"pitch", "class_id", "mesh_id", "materials": [{relative_permittivity,
// conductivity}], "voxels": [[i, j, k, material_index], ...]}

inline VoxelTarget voxel_target_from_json(const json& j) {
    static const std::set<std::string> known{"pitch", "class_id", "mesh_id", "materials", "voxels"};
    for (const auto& [key, _] : j.items())
        require(known.count(key) == 1, "voxel import: unknown key '" + key + "'");
    try {
        std::vector<Material> table;
        for (const auto& m : j.at("materials"))
            table.push_back({m.at("relative_permittivity").get<double>(), m.at("conductivity").get<double>()});
        std::vector<std::array<long, 3>> coords;
        std::vector<Material> mats;
        for (const auto& v : j.at("voxels")) {
            require(v.is_array() && v.size() == 4, "voxel import: each voxel is [i, j, k, material_index]");
            const auto mi = v.at(3).get<long>();
            require(mi >= 0 && static_cast<std::size_t>(mi) < table.size(),
                    "voxel import: material index out of range");
            coords.push_back({v.at(0).get<long>(), v.at(1).get<long>(), v.at(2).get<long>()});
            mats.push_back(table[static_cast<std::size_t>(mi)]);
        }
        return make_lattice_target(j.at("class_id").get<int>(), j.at("pitch").get<double>(),
                                   j.at("mesh_id").get<std::string>(), coords, mats);
    } catch (const json::exception& e) {
        throw InvalidConfig(std::string("voxel import: ") + e.what());
    }
}

inline VoxelTarget load_voxel_target(const std::string& path) {
    const std::string text = read_file_bytes(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidConfig("voxel import: cannot parse '" + path + "': " + e.what());
    }
    return voxel_target_from_json(j);
}

}  // namespace nfisac
