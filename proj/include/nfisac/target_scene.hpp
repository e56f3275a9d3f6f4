#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "nfisac/core.hpp"

namespace nfisac {

struct Material {
    double relative_permittivity = 1.0;
    double conductivity = 0.0;  // S/m
};

inline void validate(const Material& m) {
    require(std::isfinite(m.relative_permittivity) && m.relative_permittivity >= 1.0,
            "material: relative permittivity must be >= 1");
    require(std::isfinite(m.conductivity) && m.conductivity >= 0.0,
            "material: conductivity must be >= 0");
}

/// Complex contrast eps_r - 1 - j*sigma/(omega*eps0).
inline cplx contrast(const Material& m, double angular_frequency) {
    if (!(angular_frequency > 0.0)) throw InvalidConfig("contrast: angular frequency must be positive");
    return {m.relative_permittivity - 1.0, -m.conductivity / (angular_frequency * constants::eps0)};
}

enum class TargetClass : int { motorbike = 0, car = 1 };

struct VoxelTarget {
    int class_id = 0;
    std::vector<Vec3> voxel_offsets;  // body frame, centered
    std::vector<Material> voxel_materials;
    double voxel_pitch = 0.0;
    std::string mesh_id;

    std::size_t size() const { return voxel_offsets.size(); }
    double voxel_volume() const { return voxel_pitch * voxel_pitch * voxel_pitch; }
};

struct TargetMaterials {
    Material body{3.0, 1e4};
    Material tire{4.0, 1.0};
};

namespace detail {

inline void center_offsets(std::vector<Vec3>& offsets) {
    if (offsets.empty()) return;
    Vec3 mean = Vec3::Zero();
    for (const auto& o : offsets) mean += o;
    mean /= static_cast<double>(offsets.size());
    for (auto& o : offsets) o -= mean;
}

inline long voxel_count(double dim, double pitch) {
    return std::max(1L, static_cast<long>(std::floor(dim / pitch + 0.5)));
}

}  // namespace detail

inline void validate(const VoxelTarget& t) {
    require(t.voxel_pitch > 0.0 && std::isfinite(t.voxel_pitch), "voxel target: pitch must be positive");
    require(!t.voxel_offsets.empty(), "voxel target: no voxels");
    require(t.voxel_offsets.size() == t.voxel_materials.size(),
            "voxel target: offsets and materials differ in length");
    for (const auto& m : t.voxel_materials) validate(m);
}

/// Procedural stand-in for a voxelized vehicle. Motorbike: one-voxel-thick slab in the
/// x-z plane with a tire cluster at each end of the bottom row. Car: hollow box shell
/// with a tire cluster at each bottom corner. Tires reassign shell/slab materials, so the
/// voxel count is the plain slab or shell count.
inline VoxelTarget make_procedural_target(int class_id, const Vec3& dimensions, double pitch,
                                          const TargetMaterials& mats = {},
                                          std::string mesh_id = {}) {
    require(pitch > 0.0 && std::isfinite(pitch), "procedural target: pitch must be positive");
    require(class_id == 0 || class_id == 1, "procedural target: class must be 0 (motorbike) or 1 (car)");
    for (int a = 0; a < 3; ++a)
        require(dimensions[a] >= pitch * (1.0 - 1e-12), "procedural target: dimension smaller than pitch");
    validate(mats.body);
    validate(mats.tire);

    const long nx = detail::voxel_count(dimensions.x(), pitch);
    const long ny = detail::voxel_count(dimensions.y(), pitch);
    const long nz = detail::voxel_count(dimensions.z(), pitch);
    auto coord = [pitch](long i, long n) { return (static_cast<double>(i) - 0.5 * static_cast<double>(n - 1)) * pitch; };

    VoxelTarget t;
    t.class_id = class_id;
    t.voxel_pitch = pitch;
    t.mesh_id = std::move(mesh_id);

    auto near_end = [](long i, long n) { return i <= 1 || i >= n - 2; };

    if (class_id == static_cast<int>(TargetClass::motorbike)) {
        for (long ix = 0; ix < nx; ++ix)
            for (long iz = 0; iz < nz; ++iz) {
                t.voxel_offsets.emplace_back(coord(ix, nx), 0.0, coord(iz, nz));
                bool tire = iz == 0 && near_end(ix, nx);
                t.voxel_materials.push_back(tire ? mats.tire : mats.body);
            }
    } else {
        for (long ix = 0; ix < nx; ++ix)
            for (long iy = 0; iy < ny; ++iy)
                for (long iz = 0; iz < nz; ++iz) {
                    bool boundary = ix == 0 || ix == nx - 1 || iy == 0 || iy == ny - 1 || iz == 0 || iz == nz - 1;
                    if (!boundary) continue;
                    t.voxel_offsets.emplace_back(coord(ix, nx), coord(iy, ny), coord(iz, nz));
                    bool tire = iz == 0 && near_end(ix, nx) && (iy == 0 || iy == ny - 1);
                    t.voxel_materials.push_back(tire ? mats.tire : mats.body);
                }
    }
    detail::center_offsets(t.voxel_offsets);
    return t;
}

/// Builds a target from integer lattice coordinates (import path). Coordinates must be unique.
inline VoxelTarget make_lattice_target(int class_id, double pitch, std::string mesh_id,
                                       const std::vector<std::array<long, 3>>& coords,
                                       const std::vector<Material>& materials) {
    require(pitch > 0.0 && std::isfinite(pitch), "voxel target: pitch must be positive");
    require(!coords.empty(), "voxel target: no voxels");
    require(coords.size() == materials.size(), "voxel target: coords and materials differ in length");
    std::set<std::array<long, 3>> seen;
    VoxelTarget t;
    t.class_id = class_id;
    t.voxel_pitch = pitch;
    t.mesh_id = std::move(mesh_id);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        require(seen.insert(coords[i]).second, "voxel target: duplicate voxel coordinate");
        validate(materials[i]);
        t.voxel_offsets.emplace_back(coords[i][0] * pitch, coords[i][1] * pitch, coords[i][2] * pitch);
        t.voxel_materials.push_back(materials[i]);
    }
    detail::center_offsets(t.voxel_offsets);
    return t;
}

inline Eigen::Matrix3d rotation_z(double heading) {
    const double c = std::cos(heading), s = std::sin(heading);
    Eigen::Matrix3d r;
    r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
    return r;
}

struct MaterialJitterSpec {
    double delta = 0.1;  // factors uniform in [1-delta, 1+delta]
};

struct PlacedScene {
    VoxelTarget target;
    double heading = 0.0;  // wrapped into [-pi, pi)
    Vec3 center = Vec3::Zero();
    std::uint64_t material_jitter_seed = 0;

    std::vector<Vec3> world_positions;
    std::vector<double> permittivity_factors;   // multiplies eps_r - 1
    std::vector<double> conductivity_factors;   // multiplies sigma

    std::size_t size() const { return world_positions.size(); }

    Material effective_material(std::size_t n) const {
        const Material& m = target.voxel_materials[n];
        return {1.0 + (m.relative_permittivity - 1.0) * permittivity_factors[n],
                m.conductivity * conductivity_factors[n]};
    }

    cplx contrast_at(std::size_t n, double angular_frequency) const {
        return contrast(effective_material(n), angular_frequency);
    }
};

inline PlacedScene place(const VoxelTarget& target, double heading, const Vec3& center,
                         const MaterialJitterSpec& jitter, std::uint64_t seed) {
    require(std::isfinite(heading), "place: heading must be finite");
    require(center.allFinite(), "place: center must be finite");
    require(jitter.delta >= 0.0 && jitter.delta < 1.0, "place: jitter delta must be in [0, 1)");
    validate(target);

    PlacedScene s;
    s.target = target;
    s.heading = wrap_angle(heading);
    s.center = center;
    s.material_jitter_seed = seed;

    const Eigen::Matrix3d rot = rotation_z(heading);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    s.world_positions.reserve(target.size());
    for (std::size_t n = 0; n < target.size(); ++n) {
        s.world_positions.push_back(rot * target.voxel_offsets[n] + center);
        // both draws happen even at delta = 0 so the stream layout does not depend on delta
        double a = u(rng), b = u(rng);
        s.permittivity_factors.push_back(1.0 + jitter.delta * a);
        s.conductivity_factors.push_back(1.0 + jitter.delta * b);
    }
    return s;
}

struct GroundTruth {
    int class_id = 0;
    double range = 0.0;
    double azimuth = 0.0;
    Eigen::Vector2d center_projected = Eigen::Vector2d::Zero();
};

/// Label from the voxel-center mean projected onto the z = 0 sensing plane.
inline GroundTruth ground_truth_from_points(int class_id, const std::vector<Vec3>& points) {
    if (points.empty()) throw InvalidConfig("ground_truth: empty voxel set");
    Vec3 mean = Vec3::Zero();
    for (const auto& p : points) mean += p;
    mean /= static_cast<double>(points.size());
    GroundTruth g;
    g.class_id = class_id;
    g.center_projected = {mean.x(), mean.y()};
    g.range = g.center_projected.norm();
    g.azimuth = std::atan2(mean.y(), mean.x());
    return g;
}

inline GroundTruth ground_truth(const PlacedScene& scene) {
    return ground_truth_from_points(scene.target.class_id, scene.world_positions);
}

}  // namespace nfisac
