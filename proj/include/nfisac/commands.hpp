#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nfisac/array_geometry.hpp"
#include "nfisac/channel_dataset.hpp"
#include "nfisac/classical_estimators.hpp"
#include "nfisac/comm_tradeoff.hpp"
#include "nfisac/core.hpp"
#include "nfisac/em_forward.hpp"
#include "nfisac/run_config.hpp"
#include "nfisac/selfcheck.hpp"
#include "nfisac/sensing_metrics.hpp"
#include "nfisac/target_scene.hpp"

namespace nfisac {

/// Independent 64-bit stream seed for (seed, tag, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t tag, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag,
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f << text;
    if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

/// Runs fn(i) for i in [0, n) over `workers` threads; the first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex m;
    std::vector<std::thread> pool;
    const int nt = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), n));
    for (int w = 0; w < nt; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(m);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

inline std::string format_id(std::size_t i) {
    std::ostringstream s;
    s << 's' << std::setw(6) << std::setfill('0') << i;
    return s.str();
}

// ---------------------------------------------------------------------------
// generate

/// Procedural mesh pool: `meshes_per_class` shapes per class with per-axis size jitter.
inline std::vector<VoxelTarget> build_mesh_pool(const RunConfig& c) {
    std::vector<VoxelTarget> pool;
    const auto& s = c.scene;
    if (!s.voxel_files.empty()) {
        for (const auto& path : s.voxel_files) pool.push_back(load_voxel_target(path));
        std::set<std::string> ids;
        for (const auto& t : pool) require(ids.insert(t.mesh_id).second, "generate: duplicate imported mesh_id " + t.mesh_id);
        return pool;
    }
    if (s.single_voxel) {
        VoxelTarget t = make_procedural_target(1, Vec3::Constant(s.voxel_pitch_m), s.voxel_pitch_m, s.materials,
                                               "voxel-000");
        t.voxel_materials.front() = s.materials.body;
        pool.push_back(t);
        return pool;
    }
    const char* names[2] = {"motorbike", "car"};
    for (int cls = 0; cls < 2; ++cls) {
        const ClassShape& shape = cls == 0 ? s.motorbike : s.car;
        for (long m = 0; m < s.meshes_per_class; ++m) {
            std::mt19937_64 rng(derive_seed(c.seed, 0x6d657368u, static_cast<std::uint64_t>(cls * 100000 + m)));
            std::uniform_real_distribution<double> u(1.0 - shape.size_jitter, 1.0 + shape.size_jitter);
            Vec3 dims = shape.dimensions_m;
            for (int a = 0; a < 3; ++a) dims[a] *= u(rng);
            std::ostringstream id;
            id << names[cls] << '-' << std::setw(3) << std::setfill('0') << m;
            pool.push_back(make_procedural_target(cls, dims, s.voxel_pitch_m, s.materials, id.str()));
        }
    }
    return pool;
}

struct GenerateResult {
    Dataset dataset;
    DatasetManifest manifest;
    std::filesystem::path container_path;
    std::filesystem::path labels_path;
    std::uint64_t bytes = 0;
};

inline Dataset generate_dataset(const RunConfig& c, std::ostream* log = nullptr) {
    validate(c);
    const ArrayGeometry array = build_array(c);
    const FrequencyGrid grid = build_grid(c);
    const auto pool = build_mesh_pool(c);

    std::vector<std::string> mesh_ids;
    for (const auto& t : pool) mesh_ids.push_back(t.mesh_id);
    const auto split_map = assign_splits(mesh_ids, c.scene.split_fractions, derive_seed(c.seed, 0x73706c74u, 0));

    Dataset ds;
    // output location and thread count do not affect content and stay out of the container
    json echo = to_json(c);
    echo.erase("output");
    echo.erase("workers");
    ds.header["run_config"] = echo;
    ds.header["selected_indices"] = grid.selected_indices;
    ds.header["selected_frequencies_hz"] = grid.selected_frequencies();
    ds.header["element_spacing_m"] = array.element_spacing;
    ds.header["precision"] = {{"solver", "float64"}, {"storage", "float32"}};
    for (const auto& [mesh, split] : split_map) ds.splits[mesh] = to_string(split);

    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < pool.size(); ++i) by_class[pool[i].class_id == 1 ? 1 : 0].push_back(i);

    const auto n = static_cast<std::size_t>(c.scene.count);
    ds.samples.resize(n);
    std::mutex log_mutex;
    parallel_for(n, c.workers, [&](std::size_t i) {
        const std::uint64_t sample_seed = derive_seed(c.seed, 0x73616d70u, i);
        std::mt19937_64 rng(sample_seed);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        const double draw_class = u01(rng), draw_mesh = u01(rng), draw_heading = u01(rng);
        const double draw_range = u01(rng), draw_az = u01(rng), draw_z = u01(rng);
        const std::uint64_t jitter_seed = rng();

        int cls = draw_class < c.scene.car_fraction ? 1 : 0;
        if (by_class[cls].empty()) cls = 1 - cls;
        const auto& members = by_class[cls];
        const auto pick = std::min(members.size() - 1, static_cast<std::size_t>(draw_mesh * static_cast<double>(members.size())));
        const VoxelTarget& target = pool[members[pick]];

        const double heading = -constants::pi + constants::two_pi * draw_heading;
        const double range = c.scene.range_min_m + (c.scene.range_max_m - c.scene.range_min_m) * draw_range;
        const double az = deg_to_rad(c.scene.azimuth_min_deg + (c.scene.azimuth_max_deg - c.scene.azimuth_min_deg) * draw_az);
        const double z = c.scene.z_max_m * (2.0 * draw_z - 1.0);
        const Vec3 center(range * std::cos(az), range * std::sin(az), z);
        const PlacedScene scene = place(target, heading, center, {c.scene.material_jitter}, jitter_seed);

        SimulationReport report;
        const auto mats = simulate_sample(scene, array, grid, c.solver, &report);

        ChannelSample& s = ds.samples[i];
        s.id = format_id(i);
        s.tensor = stack_channels(mats);
        s.truth = ground_truth(scene);
        s.mesh_id = target.mesh_id;
        s.seed = sample_seed;
        double max_res = 0.0;
        for (double r : report.residuals) max_res = std::max(max_res, r);
        s.metadata = {{"heading_rad", scene.heading},
                      {"center_m", {center.x(), center.y(), center.z()}},
                      {"voxel_count", scene.size()},
                      {"voxel_pitch_m", target.voxel_pitch},
                      {"material_jitter_seed", jitter_seed},
                      {"material_jitter_delta", c.scene.material_jitter},
                      {"solver_method", report.method},
                      {"solver_residuals", report.residuals},
                      {"warnings", report.warnings}};
        if (log) {
            std::lock_guard<std::mutex> lock(log_mutex);
            *log << "[generate] " << s.id << " mesh=" << s.mesh_id << " N_s=" << scene.size()
                 << " method=" << report.method << " max_residual=" << max_res << '\n';
            for (const auto& w : report.warnings) *log << "[generate] " << s.id << " warning: " << w << '\n';
        }
    });
    return ds;
}

inline GenerateResult cmd_generate(const RunConfig& c, std::ostream* log = &std::clog) {
    GenerateResult r;
    r.dataset = generate_dataset(c, log);
    const std::filesystem::path dir(c.output_dir);
    ensure_dir(dir);
    r.container_path = dir / "dataset.nfct";
    r.labels_path = dir / "labels.csv";
    r.bytes = write_container(r.dataset, r.container_path.string(), &r.manifest);
    write_text(r.labels_path, labels_csv(r.dataset));
    write_text(dir / "config.json", to_json(c).dump(2) + "\n");
    if (log)
        *log << "[generate] wrote " << r.dataset.samples.size() << " samples (" << r.bytes << " bytes) to "
             << r.container_path.string() << '\n';
    return r;
}

// ---------------------------------------------------------------------------
// estimate

/// Array and subcarrier frequencies recorded in a dataset header.
struct DatasetGeometry {
    ArrayGeometry array;
    std::vector<double> frequencies;
};

inline DatasetGeometry dataset_geometry(const Dataset& ds) {
    if (!ds.header.contains("run_config")) throw IoError("dataset header lacks the run_config echo");
    const RunConfig c = run_config_from_json(ds.header.at("run_config"));
    return {build_array(c), build_grid(c).selected_frequencies()};
}

struct PredictionRow {
    std::string id;
    std::string estimator;
    bool ok = false;
    double range_hat = 0.0;
    double azimuth_hat = 0.0;
    double score = 0.0;
    std::optional<int> class_hat;
    std::string error;
};

inline constexpr const char* predictions_csv_header = "id,estimator,range_hat_m,azimuth_hat_rad,score";

inline std::string predictions_csv(const std::vector<PredictionRow>& rows) {
    std::ostringstream out;
    out.precision(17);
    out << predictions_csv_header << '\n';
    for (const auto& r : rows) {
        out << r.id << ',' << r.estimator << ',';
        if (r.ok)
            out << r.range_hat << ',' << r.azimuth_hat << ',' << r.score;
        else
            out << "nan,nan,failed";
        out << '\n';
    }
    return out.str();
}

inline std::vector<PredictionRow> estimate_dataset(const Dataset& ds, const EstimatorSection& est, int workers,
                                                   std::ostream* log = nullptr) {
    const DatasetGeometry geo = dataset_geometry(ds);
    std::vector<PredictionRow> rows(ds.samples.size());
    parallel_for(ds.samples.size(), workers, [&](std::size_t i) {
        const auto& s = ds.samples[i];
        PredictionRow& row = rows[i];
        row.id = s.id;
        row.estimator = to_string(est.kind);
        try {
            const EstimationResult r = est.kind == EstimatorKind::matched_filter
                                           ? matched_filter_estimate(s.tensor, geo.array, geo.frequencies, est.grid)
                                           : periodogram_estimate(s.tensor, geo.array, geo.frequencies, est.grid,
                                                                  est.periodogram);
            row.ok = true;
            row.range_hat = r.range_hat;
            row.azimuth_hat = r.azimuth_hat;
            row.score = r.score_peak;
        } catch (const NotApplicable& e) {
            row.ok = false;
            row.error = e.what();
        }
    });
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    if (log)
        for (const auto& r : rows)
            if (!r.ok) *log << "[estimate] " << r.id << " failed: " << r.error << '\n';
    return rows;
}

inline std::vector<PredictionRow> cmd_estimate(const std::string& dataset_path, const EstimatorSection& est,
                                               const std::string& out_dir, int workers,
                                               std::ostream* log = &std::clog) {
    const auto decoded = read_container(dataset_path);
    auto rows = estimate_dataset(decoded.dataset, est, workers, log);
    ensure_dir(out_dir);
    const auto path = std::filesystem::path(out_dir) / "predictions.csv";
    write_text(path, predictions_csv(rows));
    if (log) *log << "[estimate] wrote " << rows.size() << " rows to " << path.string() << '\n';
    return rows;
}

// ---------------------------------------------------------------------------
// evaluate

/// Reads id,estimator,range_hat_m,azimuth_hat_rad,score plus an optional class_hat column.
inline std::vector<PredictionRow> parse_predictions_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidConfig("predictions csv: missing header");
    const auto header = detail::split_csv(line);
    auto find = [&](const std::string& name) -> std::optional<std::size_t> {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    auto need = [&](const std::string& name) {
        auto c = find(name);
        if (!c) throw InvalidConfig("predictions csv: missing column '" + name + "'");
        return *c;
    };
    const std::size_t ci = need("id"), ce = need("estimator"), cr = need("range_hat_m"), ca = need("azimuth_hat_rad"),
                      cs = need("score");
    const auto cc = find("class_hat");
    std::vector<PredictionRow> rows;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != header.size()) throw InvalidConfig("predictions csv: wrong column count in '" + line + "'");
        PredictionRow r;
        r.id = cells[ci];
        if (!seen.insert(r.id).second) throw InvalidConfig("predictions csv: duplicate id " + r.id);
        r.estimator = cells[ce];
        r.ok = cells[cs] != "failed";
        if (r.ok) {
            r.range_hat = detail::parse_double(cells[cr], "range_hat_m");
            r.azimuth_hat = detail::parse_double(cells[ca], "azimuth_hat_rad");
            r.score = detail::parse_double(cells[cs], "score");
        }
        if (cc && !cells[*cc].empty()) r.class_hat = static_cast<int>(detail::parse_double(cells[*cc], "class_hat"));
        rows.push_back(r);
    }
    return rows;
}

struct EvaluationResult {
    MetricReport report;
    std::size_t failed = 0;
};

/// Every prediction id must exist in the dataset and every dataset id must be predicted.
/// Rows marked failed are excluded from the aggregate and counted separately.
inline EvaluationResult evaluate_predictions(const std::vector<PredictionRow>& rows, const Dataset& ds) {
    std::map<std::string, const ChannelSample*> by_id;
    for (const auto& s : ds.samples) by_id[s.id] = &s;
    std::set<std::string> predicted;
    for (const auto& r : rows) {
        if (!by_id.count(r.id)) throw InvalidConfig("evaluate: unknown prediction id " + r.id);
        predicted.insert(r.id);
    }
    for (const auto& [id, _] : by_id)
        if (!predicted.count(id)) throw InvalidConfig("evaluate: dataset id " + id + " has no prediction");

    std::vector<LocalizationEstimate> preds;
    std::vector<LocalizationTruth> truths;
    EvaluationResult out;
    std::vector<const PredictionRow*> sorted;
    for (const auto& r : rows) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
    for (const auto* r : sorted) {
        if (!r->ok) {
            ++out.failed;
            continue;
        }
        const auto& t = by_id.at(r->id)->truth;
        preds.push_back({r->range_hat, r->azimuth_hat, r->class_hat});
        truths.push_back({t.range, t.azimuth, t.class_id});
    }
    out.report = aggregate(preds, truths);
    return out;
}

inline EvaluationResult cmd_evaluate(const std::string& predictions_path, const std::string& dataset_path,
                                     const std::string& out_dir, std::ostream* log = &std::clog) {
    std::ifstream f(predictions_path);
    if (!f) throw IoError("cannot open predictions file " + predictions_path);
    const auto rows = parse_predictions_csv(f);
    const auto decoded = read_container(dataset_path);
    const auto res = evaluate_predictions(rows, decoded.dataset);
    ensure_dir(out_dir);
    const auto path = std::filesystem::path(out_dir) / "metrics.csv";
    write_text(path, std::string(metric_csv_header) + "\n" + metric_csv_row(res.report) + "\n");
    if (log) {
        *log << "[evaluate] " << res.report.sample_count << " samples";
        if (res.failed) *log << ", " << res.failed << " failed rows excluded";
        *log << "; wrote " << path.string() << '\n';
    }
    return res;
}

// ---------------------------------------------------------------------------
// perturb

enum class PerturbKind { noise, phase };

inline PerturbKind perturb_kind_from_string(const std::string& s) {
    if (s == "noise") return PerturbKind::noise;
    if (s == "phase") return PerturbKind::phase;
    throw InvalidConfig("unknown perturbation kind '" + s + "' (expected noise or phase)");
}

inline std::vector<double> parse_levels(const std::string& csv) {
    std::vector<double> out;
    for (const auto& cell : detail::split_csv(csv)) {
        if (cell.empty()) throw InvalidConfig("levels: empty entry in '" + csv + "'");
        out.push_back(detail::parse_double(cell, "level"));
    }
    require(!out.empty(), "levels: no values given");
    return out;
}

struct PerturbRow {
    double level = 0.0;
    double snr_eq_db = 0.0;
    double rms_clean = 0.0;
    double rms_perturbed = 0.0;
    std::string file;
};

inline std::string level_tag(double level) {
    std::ostringstream s;
    s << level;
    std::string t = s.str();
    std::replace(t.begin(), t.end(), '.', 'p');
    std::replace(t.begin(), t.end(), '-', 'm');
    return t;
}

/// Noise levels are sigma / RMS(H); phase levels are degrees.
inline Dataset perturb_dataset(const Dataset& ds, PerturbKind kind, double level, std::uint64_t seed,
                               std::size_t level_index) {
    Dataset out = ds;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        if (kind == PerturbKind::noise)
            out.samples[i] = add_complex_noise(ds.samples[i], level,
                                               derive_seed(seed, 0x6e6f6973u, level_index * 1000003u + i))
                                 .sample;
        else
            out.samples[i] = apply_phase_offset(ds.samples[i], deg_to_rad(level));
    }
    return out;
}

inline double dataset_rms(const Dataset& ds) {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& s : ds.samples) {
        for (const auto& v : s.tensor.data) acc += std::norm(v);
        n += s.tensor.size();
    }
    return n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
}

inline std::vector<PerturbRow> cmd_perturb(const std::string& dataset_path, PerturbKind kind,
                                           const std::vector<double>& levels, std::uint64_t seed,
                                           const std::string& out_dir, std::ostream* log = &std::clog) {
    for (double l : levels) {
        require(std::isfinite(l), "perturb: levels must be finite");
        if (kind == PerturbKind::noise) require(l >= 0.0, "perturb: noise levels must be >= 0");
    }
    const auto decoded = read_container(dataset_path);
    ensure_dir(out_dir);
    const double rms_clean = dataset_rms(decoded.dataset);
    const std::string kind_name = kind == PerturbKind::noise ? "noise" : "phase";
    std::vector<PerturbRow> rows;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        const Dataset p = perturb_dataset(decoded.dataset, kind, levels[li], seed, li);
        const auto name = "dataset_" + kind_name + "_" + level_tag(levels[li]) + ".nfct";
        write_container(p, (std::filesystem::path(out_dir) / name).string());
        PerturbRow r;
        r.level = levels[li];
        r.snr_eq_db = kind == PerturbKind::noise ? equivalent_snr_db(levels[li]) : std::nan("");
        r.rms_clean = rms_clean;
        r.rms_perturbed = dataset_rms(p);
        r.file = name;
        rows.push_back(r);
        if (log) *log << "[perturb] " << kind_name << " level " << levels[li] << " -> " << name << '\n';
    }
    std::ostringstream csv;
    csv.precision(10);
    csv << "kind,level," << (kind == PerturbKind::noise ? "snr_eq_db," : "") << "rms_clean,rms_perturbed,dataset\n";
    for (const auto& r : rows) {
        csv << kind_name << ',' << r.level << ',';
        if (kind == PerturbKind::noise) csv << r.snr_eq_db << ',';
        csv << r.rms_clean << ',' << r.rms_perturbed << ',' << r.file << '\n';
    }
    write_text(std::filesystem::path(out_dir) / ("sensitivity_" + kind_name + ".csv"), csv.str());
    return rows;
}

// ---------------------------------------------------------------------------
// tradeoff

struct TradeoffResult {
    std::vector<RateRow> rates;
    std::optional<long> k_s_star;
};

inline TradeoffResult run_tradeoff(const RateSection& rate, const PerformanceCurve& curve) {
    TradeoffResult out;
    for (long k : rate.k_s_values) {
        const auto mc = ergodic_rate_mc_detailed(rate.config, k);
        out.rates.push_back({k, mc.mean, ergodic_rate_analytic(rate.config, k), mc.standard_error});
    }
    out.k_s_star = qos_min_bandwidth(curve, rate.qos);
    return out;
}

inline TradeoffResult cmd_tradeoff(const RunConfig& c, const std::string& curve_path, const std::string& out_dir,
                                   std::ostream* log = &std::clog) {
    validate(c);
    RateSection rate = c.rate;
    rate.config.seed = c.seed;
    rate.config.workers = c.workers;
    const auto curve = load_curve_csv(curve_path);
    const auto res = run_tradeoff(rate, curve);
    ensure_dir(out_dir);
    write_text(std::filesystem::path(out_dir) / "rates.csv", rates_csv(res.rates));
    std::ostringstream q;
    q << "tau_cls,tau_loc_m,k_s_star\n" << rate.qos.tau_cls << ',' << rate.qos.tau_loc << ',' << qos_report(res.k_s_star) << '\n';
    write_text(std::filesystem::path(out_dir) / "qos.csv", q.str());
    if (log) {
        for (const auto& r : res.rates)
            *log << "[tradeoff] K_s=" << r.k_s << " rate_mc=" << r.rate_mc << " (se " << r.standard_error
                 << ") rate_analytic=" << r.rate_analytic << '\n';
        *log << "[tradeoff] K_s* = " << qos_report(res.k_s_star) << " (seed " << rate.config.seed << ", "
             << rate.config.mc_draws << " draws)\n";
    }
    return res;
}

}  // namespace nfisac
