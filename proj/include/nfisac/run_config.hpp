#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nfisac/array_geometry.hpp"
#include "nfisac/channel_dataset.hpp"
#include "nfisac/classical_estimators.hpp"
#include "nfisac/comm_tradeoff.hpp"
#include "nfisac/core.hpp"
#include "nfisac/em_forward.hpp"
#include "nfisac/target_scene.hpp"

namespace nfisac {

struct ArraySection {
    long n_tx = 8;
    long n_rx = 8;
    double carrier_hz = 4.9e9;
    double spacing_fraction = 0.5;
    char dipole_axis = 'z';
    char polarization_axis = 'z';
};

struct GridSection {
    double spacing_hz = 1e6;
    long k_total = 16;
    long k_selected = 2;
};

struct ClassShape {
    Vec3 dimensions_m;
    double size_jitter = 0.1;  // per-mesh uniform scale in [1-j, 1+j] on each axis
};

struct SceneSection {
    long count = 8;
    double range_min_m = 5.0, range_max_m = 50.0;
    double azimuth_min_deg = -60.0, azimuth_max_deg = 60.0;
    double z_max_m = 0.25;
    double car_fraction = 0.5;
    long meshes_per_class = 6;
    double voxel_pitch_m = 0.1;
    ClassShape motorbike{Vec3(0.8, 0.2, 0.4), 0.1};
    ClassShape car{Vec3(0.6, 0.3, 0.3), 0.1};
    TargetMaterials materials;
    double material_jitter = 0.1;
    std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
    bool single_voxel = false;  // every sample is one voxel of body material
    std::vector<std::string> voxel_files;  // imported targets replace the procedural pool
};

struct EstimatorSection {
    EstimatorKind kind = EstimatorKind::matched_filter;
    SearchGrid grid;
    PeriodogramOptions periodogram;
};

struct RateSection {
    RateConfig config;
    double snr_db = 15.0;
    std::vector<long> k_s_values{2, 4, 8, 16};
    QosTargets qos;
};

struct RunConfig {
    ArraySection array;
    GridSection grid;
    SceneSection scene;
    SolverOptions solver;
    EstimatorSection estimator;
    RateSection rate;
    std::string output_dir = "out";
    std::uint64_t seed = 1;
    int workers = 1;
};

namespace detail {

/// Reads an object, rejecting keys not listed in `known`.
class Section {
public:
    Section(const json& j, std::string name, std::set<std::string> known) : j_(j), name_(std::move(name)) {
        if (!j.is_object()) throw InvalidConfig("config: '" + name_ + "' must be an object");
        for (const auto& [key, _] : j.items())
            if (!known.count(key)) throw InvalidConfig("config: unknown key '" + key + "' in '" + name_ + "'");
    }

    template <typename T>
    void get(const char* key, T& out) const {
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw InvalidConfig("config: bad value for '" + name_ + "." + key + "'");
        }
    }

    void get_axis(const char* key, char& out) const {
        std::string s;
        get(key, s);
        if (s.empty()) return;
        if (s.size() != 1 || (s[0] != 'x' && s[0] != 'y' && s[0] != 'z'))
            throw InvalidConfig("config: '" + name_ + "." + key + "' must be x, y or z");
        out = s[0];
    }

    void get_vec3(const char* key, Vec3& out) const {
        std::vector<double> v;
        get(key, v);
        if (!j_.contains(key)) return;
        if (v.size() != 3) throw InvalidConfig("config: '" + name_ + "." + key + "' must have 3 entries");
        out = Vec3(v[0], v[1], v[2]);
    }

    bool has(const char* key) const { return j_.contains(key); }
    const json& at(const char* key) const { return j_.at(key); }
    const std::string& name() const { return name_; }

private:
    const json& j_;
    std::string name_;
};

inline Material material_from_json(const json& j, const std::string& where) {
    Section s(j, where, {"relative_permittivity", "conductivity"});
    Material m;
    s.get("relative_permittivity", m.relative_permittivity);
    s.get("conductivity", m.conductivity);
    return m;
}

inline ClassShape class_shape_from_json(const json& j, const std::string& where, ClassShape def) {
    Section s(j, where, {"dimensions_m", "size_jitter"});
    s.get_vec3("dimensions_m", def.dimensions_m);
    s.get("size_jitter", def.size_jitter);
    return def;
}

}  // namespace detail

inline void validate(const RunConfig& c) {
    require(c.array.n_tx >= 1 && c.array.n_rx >= 1, "config: array counts must be >= 1");
    require(c.array.carrier_hz > 0.0, "config: carrier must be positive");
    require(c.array.spacing_fraction > 0.0, "config: spacing_fraction must be positive");
    require(c.grid.spacing_hz > 0.0, "config: subcarrier spacing must be positive");
    require(c.grid.k_total >= 1 && c.grid.k_selected >= 1 && c.grid.k_selected <= c.grid.k_total,
            "config: need 1 <= k_selected <= k_total");
    require(c.array.carrier_hz - 0.5 * static_cast<double>(c.grid.k_total - 1) * c.grid.spacing_hz > 0.0,
            "config: subcarrier grid reaches nonpositive frequency");

    const auto& s = c.scene;
    require(s.count >= 0, "config: scene.count must be >= 0");
    require(s.range_min_m > 0.0 && s.range_max_m >= s.range_min_m, "config: scene range bounds invalid");
    require(s.azimuth_min_deg >= -180.0 && s.azimuth_max_deg <= 180.0 && s.azimuth_min_deg <= s.azimuth_max_deg,
            "config: scene azimuth bounds invalid");
    require(s.z_max_m >= 0.0, "config: scene.z_max_m must be >= 0");
    require(s.car_fraction >= 0.0 && s.car_fraction <= 1.0, "config: scene.car_fraction must be in [0, 1]");
    require(s.meshes_per_class >= 1, "config: scene.meshes_per_class must be >= 1");
    require(s.voxel_pitch_m > 0.0, "config: scene.voxel_pitch_m must be positive");
    for (const ClassShape* cs : {&s.motorbike, &s.car}) {
        require(cs->size_jitter >= 0.0 && cs->size_jitter < 1.0, "config: size_jitter must be in [0, 1)");
        for (int a = 0; a < 3; ++a)
            require(cs->dimensions_m[a] * (1.0 - cs->size_jitter) >= s.voxel_pitch_m * (1.0 - 1e-12),
                    "config: class dimensions must stay >= voxel pitch after size jitter");
    }
    validate(s.materials.body);
    validate(s.materials.tire);
    require(s.material_jitter >= 0.0 && s.material_jitter < 1.0, "config: scene.material_jitter must be in [0, 1)");
    double fsum = 0.0;
    for (double f : s.split_fractions) {
        require(f >= 0.0, "config: split fractions must be >= 0");
        fsum += f;
    }
    require(std::abs(fsum - 1.0) <= 1e-9, "config: split fractions must sum to 1");

    require(c.solver.tolerance > 0.0 && c.solver.max_iterations >= 1 && c.solver.min_rcond >= 0.0,
            "config: solver tolerances invalid");
    validate(c.estimator.grid);
    require(c.estimator.periodogram.zero_pad >= 1, "config: periodogram zero_pad must be >= 1");
    validate(c.rate.config);
    validate(c.rate.qos);
    for (long k : c.rate.k_s_values)
        require(k >= 0 && k < c.rate.config.k_total, "config: rate.k_s_values must lie in [0, k_total)");
    require(c.workers >= 1, "config: workers must be >= 1");
    require(!c.output_dir.empty(), "config: output.dir must be non-empty");
}

inline RunConfig run_config_from_json(const json& j) {
    using detail::Section;
    Section top(j, "config", {"array", "grid", "scene", "solver", "estimator", "rate", "output", "seed", "workers"});
    RunConfig c;
    top.get("seed", c.seed);
    top.get("workers", c.workers);

    if (top.has("array")) {
        Section s(top.at("array"), "array",
                  {"n_tx", "n_rx", "carrier_hz", "spacing_fraction", "dipole_axis", "polarization_axis"});
        s.get("n_tx", c.array.n_tx);
        s.get("n_rx", c.array.n_rx);
        s.get("carrier_hz", c.array.carrier_hz);
        s.get("spacing_fraction", c.array.spacing_fraction);
        s.get_axis("dipole_axis", c.array.dipole_axis);
        s.get_axis("polarization_axis", c.array.polarization_axis);
    }
    if (top.has("grid")) {
        Section s(top.at("grid"), "grid", {"spacing_hz", "k_total", "k_selected"});
        s.get("spacing_hz", c.grid.spacing_hz);
        s.get("k_total", c.grid.k_total);
        s.get("k_selected", c.grid.k_selected);
    }
    if (top.has("scene")) {
        Section s(top.at("scene"), "scene",
                  {"count", "range_min_m", "range_max_m", "azimuth_min_deg", "azimuth_max_deg", "z_max_m",
                   "car_fraction", "meshes_per_class", "voxel_pitch_m", "motorbike", "car", "body_material",
                   "tire_material", "material_jitter", "split_fractions", "single_voxel", "voxel_files"});
        auto& sc = c.scene;
        s.get("count", sc.count);
        s.get("range_min_m", sc.range_min_m);
        s.get("range_max_m", sc.range_max_m);
        s.get("azimuth_min_deg", sc.azimuth_min_deg);
        s.get("azimuth_max_deg", sc.azimuth_max_deg);
        s.get("z_max_m", sc.z_max_m);
        s.get("car_fraction", sc.car_fraction);
        s.get("meshes_per_class", sc.meshes_per_class);
        s.get("voxel_pitch_m", sc.voxel_pitch_m);
        if (s.has("motorbike")) sc.motorbike = detail::class_shape_from_json(s.at("motorbike"), "scene.motorbike", sc.motorbike);
        if (s.has("car")) sc.car = detail::class_shape_from_json(s.at("car"), "scene.car", sc.car);
        if (s.has("body_material")) sc.materials.body = detail::material_from_json(s.at("body_material"), "scene.body_material");
        if (s.has("tire_material")) sc.materials.tire = detail::material_from_json(s.at("tire_material"), "scene.tire_material");
        s.get("material_jitter", sc.material_jitter);
        s.get("split_fractions", sc.split_fractions);
        s.get("single_voxel", sc.single_voxel);
        s.get("voxel_files", sc.voxel_files);
    }
    if (top.has("solver")) {
        Section s(top.at("solver"), "solver",
                  {"method", "dense_max_unknowns", "tolerance", "max_iterations", "min_rcond"});
        std::string m;
        s.get("method", m);
        if (!m.empty()) c.solver.method = solver_method_from_string(m);
        s.get("dense_max_unknowns", c.solver.dense_max_unknowns);
        s.get("tolerance", c.solver.tolerance);
        s.get("max_iterations", c.solver.max_iterations);
        s.get("min_rcond", c.solver.min_rcond);
    }
    if (top.has("estimator")) {
        Section s(top.at("estimator"), "estimator",
                  {"kind", "range_min_m", "range_max_m", "azimuth_min_deg", "azimuth_max_deg", "range_step_m",
                   "azimuth_step_deg", "refinement_levels", "shrink", "zero_pad", "scan_axis"});
        auto& e = c.estimator;
        std::string kind;
        s.get("kind", kind);
        if (!kind.empty()) e.kind = estimator_from_string(kind);
        double deg = 0.0;
        s.get("range_min_m", e.grid.range_min);
        s.get("range_max_m", e.grid.range_max);
        if (s.has("azimuth_min_deg")) { s.get("azimuth_min_deg", deg); e.grid.azimuth_min = deg_to_rad(deg); }
        if (s.has("azimuth_max_deg")) { s.get("azimuth_max_deg", deg); e.grid.azimuth_max = deg_to_rad(deg); }
        s.get("range_step_m", e.grid.range_step);
        if (s.has("azimuth_step_deg")) { s.get("azimuth_step_deg", deg); e.grid.azimuth_step = deg_to_rad(deg); }
        s.get("refinement_levels", e.grid.refinement_levels);
        s.get("shrink", e.grid.shrink);
        s.get("zero_pad", e.periodogram.zero_pad);
        std::string axis;
        s.get("scan_axis", axis);
        if (axis == "rx") e.periodogram.axis = PeriodogramAxis::scan_rx;
        else if (axis == "tx" || axis.empty()) e.periodogram.axis = PeriodogramAxis::scan_tx;
        else throw InvalidConfig("config: estimator.scan_axis must be tx or rx");
    }
    if (top.has("rate")) {
        Section s(top.at("rate"), "rate", {"k_total", "snr_db", "mc_draws", "k_s_values", "tau_cls", "tau_loc"});
        s.get("k_total", c.rate.config.k_total);
        s.get("snr_db", c.rate.snr_db);
        s.get("mc_draws", c.rate.config.mc_draws);
        s.get("k_s_values", c.rate.k_s_values);
        s.get("tau_cls", c.rate.qos.tau_cls);
        s.get("tau_loc", c.rate.qos.tau_loc);
    }
    c.rate.config.snr_fullband = db_to_linear(c.rate.snr_db);
    if (top.has("output")) {
        Section s(top.at("output"), "output", {"dir"});
        s.get("dir", c.output_dir);
    }
    return c;
}

/// Every effective setting, defaults included.
inline json to_json(const RunConfig& c) {
    auto mat = [](const Material& m) {
        return json{{"relative_permittivity", m.relative_permittivity}, {"conductivity", m.conductivity}};
    };
    auto shape = [](const ClassShape& s) {
        return json{{"dimensions_m", {s.dimensions_m.x(), s.dimensions_m.y(), s.dimensions_m.z()}},
                    {"size_jitter", s.size_jitter}};
    };
    const auto& e = c.estimator;
    return {
        {"array",
         {{"n_tx", c.array.n_tx},
          {"n_rx", c.array.n_rx},
          {"carrier_hz", c.array.carrier_hz},
          {"spacing_fraction", c.array.spacing_fraction},
          {"dipole_axis", std::string(1, c.array.dipole_axis)},
          {"polarization_axis", std::string(1, c.array.polarization_axis)}}},
        {"grid", {{"spacing_hz", c.grid.spacing_hz}, {"k_total", c.grid.k_total}, {"k_selected", c.grid.k_selected}}},
        {"scene",
         {{"count", c.scene.count},
          {"range_min_m", c.scene.range_min_m},
          {"range_max_m", c.scene.range_max_m},
          {"azimuth_min_deg", c.scene.azimuth_min_deg},
          {"azimuth_max_deg", c.scene.azimuth_max_deg},
          {"z_max_m", c.scene.z_max_m},
          {"car_fraction", c.scene.car_fraction},
          {"meshes_per_class", c.scene.meshes_per_class},
          {"voxel_pitch_m", c.scene.voxel_pitch_m},
          {"motorbike", shape(c.scene.motorbike)},
          {"car", shape(c.scene.car)},
          {"body_material", mat(c.scene.materials.body)},
          {"tire_material", mat(c.scene.materials.tire)},
          {"material_jitter", c.scene.material_jitter},
          {"split_fractions", c.scene.split_fractions},
          {"single_voxel", c.scene.single_voxel},
          {"voxel_files", c.scene.voxel_files}}},
        {"solver",
         {{"method", to_string(c.solver.method)},
          {"dense_max_unknowns", c.solver.dense_max_unknowns},
          {"tolerance", c.solver.tolerance},
          {"max_iterations", c.solver.max_iterations},
          {"min_rcond", c.solver.min_rcond}}},
        {"estimator",
         {{"kind", to_string(e.kind)},
          {"range_min_m", e.grid.range_min},
          {"range_max_m", e.grid.range_max},
          {"azimuth_min_deg", rad_to_deg(e.grid.azimuth_min)},
          {"azimuth_max_deg", rad_to_deg(e.grid.azimuth_max)},
          {"range_step_m", e.grid.range_step},
          {"azimuth_step_deg", rad_to_deg(e.grid.azimuth_step)},
          {"refinement_levels", e.grid.refinement_levels},
          {"shrink", e.grid.shrink},
          {"zero_pad", e.periodogram.zero_pad},
          {"scan_axis", e.periodogram.axis == PeriodogramAxis::scan_tx ? "tx" : "rx"}}},
        {"rate",
         {{"k_total", c.rate.config.k_total},
          {"snr_db", c.rate.snr_db},
          {"mc_draws", c.rate.config.mc_draws},
          {"k_s_values", c.rate.k_s_values},
          {"tau_cls", c.rate.qos.tau_cls},
          {"tau_loc", c.rate.qos.tau_loc}}},
        {"output", {{"dir", c.output_dir}}},
        {"seed", c.seed},
        {"workers", c.workers}};
}

inline RunConfig load_run_config(const std::string& path) {
    const std::string text = read_file_bytes(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidConfig("config: cannot parse '" + path + "': " + e.what());
    }
    return run_config_from_json(j);
}

inline ArrayGeometry build_array(const RunConfig& c) {
    return build_cross_array(c.array.n_tx, c.array.n_rx, c.array.carrier_hz,
                             {c.array.spacing_fraction, c.array.dipole_axis, c.array.polarization_axis});
}

inline FrequencyGrid build_grid(const RunConfig& c) {
    return build_frequency_grid(c.array.carrier_hz, c.grid.spacing_hz, c.grid.k_total, c.grid.k_selected);
}

}  // namespace nfisac
