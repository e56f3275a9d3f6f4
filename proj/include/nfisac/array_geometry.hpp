#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "nfisac/core.hpp"

namespace nfisac {

/// Free-space wavenumber 2*pi*f/c0.
inline double wavenumber(double frequency_hz) {
    if (!(frequency_hz > 0.0)) throw InvalidConfig("wavenumber: frequency must be positive");
    return constants::two_pi * frequency_hz / constants::c0;
}

/// Cross-shaped MIMO array: transmit ULA on the y-axis, receive ULA on the z-axis.
struct ArrayGeometry {
    std::vector<Vec3> tx_positions;
    std::vector<Vec3> rx_positions;
    std::vector<CVec3> tx_dipole_moments;
    std::vector<CVec3> rx_polarizations;
    double carrier_frequency = 0.0;
    double element_spacing = 0.0;

    std::size_t n_tx() const { return tx_positions.size(); }
    std::size_t n_rx() const { return rx_positions.size(); }
    double carrier_wavelength() const { return constants::c0 / carrier_frequency; }
};

/// Largest distance between any two elements.
inline double aperture(const std::vector<Vec3>& positions) {
    double best = 0.0;
    for (std::size_t a = 0; a < positions.size(); ++a)
        for (std::size_t b = a + 1; b < positions.size(); ++b)
            best = std::max(best, (positions[a] - positions[b]).norm());
    return best;
}

inline Vec3 axis_vector(char axis) {
    switch (axis) {
        case 'x': return Vec3::UnitX();
        case 'y': return Vec3::UnitY();
        case 'z': return Vec3::UnitZ();
        default: throw InvalidConfig(std::string("unknown axis '") + axis + "'");
    }
}

struct ArrayOptions {
    double spacing_fraction = 0.5;
    char dipole_axis = 'z';
    char polarization_axis = 'z';
};

inline ArrayGeometry build_cross_array(long n_tx, long n_rx, double carrier_hz,
                                       const ArrayOptions& opt = {}) {
    require(n_tx >= 1, "build_cross_array: n_tx must be >= 1");
    require(n_rx >= 1, "build_cross_array: n_rx must be >= 1");
    require(carrier_hz > 0.0, "build_cross_array: carrier must be positive");
    require(opt.spacing_fraction > 0.0, "build_cross_array: spacing_fraction must be positive");

    ArrayGeometry g;
    g.carrier_frequency = carrier_hz;
    g.element_spacing = opt.spacing_fraction * constants::c0 / carrier_hz;
    const double d = g.element_spacing;
    const CVec3 moment = axis_vector(opt.dipole_axis).cast<cplx>();
    const CVec3 pol = axis_vector(opt.polarization_axis).cast<cplx>();

    for (long m = 0; m < n_tx; ++m) {
        double c = (static_cast<double>(m) - 0.5 * static_cast<double>(n_tx - 1)) * d;
        g.tx_positions.emplace_back(0.0, c, 0.0);
        g.tx_dipole_moments.push_back(moment);
    }
    for (long m = 0; m < n_rx; ++m) {
        double c = (static_cast<double>(m) - 0.5 * static_cast<double>(n_rx - 1)) * d;
        g.rx_positions.emplace_back(0.0, 0.0, c);
        g.rx_polarizations.push_back(pol);
    }
    return g;
}

/// Subcarrier grid centered on the carrier plus the selected sensing tones.
struct FrequencyGrid {
    std::vector<double> subcarrier_frequencies;
    std::vector<double> wavenumbers;
    std::vector<std::size_t> selected_indices;

    std::vector<double> selected_frequencies() const {
        std::vector<double> out;
        out.reserve(selected_indices.size());
        for (auto i : selected_indices) out.push_back(subcarrier_frequencies[i]);
        return out;
    }
    std::vector<double> selected_wavenumbers() const {
        std::vector<double> out;
        out.reserve(selected_indices.size());
        for (auto i : selected_indices) out.push_back(wavenumbers[i]);
        return out;
    }
};

/// k_selected evenly spaced indices over [0, k_total-1], endpoints included,
/// rounding to nearest with ties to the lower index. A single tone sits at floor(K/2).
inline std::vector<std::size_t> even_selection(std::size_t k_total, std::size_t k_selected) {
    require(k_selected >= 1, "subcarrier selection: k_selected must be >= 1");
    require(k_selected <= k_total, "subcarrier selection: k_selected exceeds k_total");
    std::vector<std::size_t> out;
    if (k_selected == 1) {
        out.push_back(k_total / 2);
        return out;
    }
    const std::size_t den = k_selected - 1;
    for (std::size_t i = 0; i < k_selected; ++i) {
        std::size_t num = i * (k_total - 1);
        std::size_t q = num / den, rem = num % den;
        if (2 * rem > den) ++q;
        out.push_back(q);
    }
    return out;
}

inline FrequencyGrid build_frequency_grid(double carrier_hz, double spacing_hz, long k_total,
                                          long k_selected) {
    require(carrier_hz > 0.0, "frequency grid: carrier must be positive");
    require(spacing_hz > 0.0, "frequency grid: spacing must be positive");
    require(k_total >= 1, "frequency grid: k_total must be >= 1");
    require(k_selected >= 1 && k_selected <= k_total,
            "frequency grid: need 1 <= k_selected <= k_total");
    FrequencyGrid g;
    for (long i = 0; i < k_total; ++i) {
        double f = carrier_hz + (static_cast<double>(i) - 0.5 * static_cast<double>(k_total - 1)) * spacing_hz;
        if (!(f > 0.0)) throw InvalidConfig("frequency grid: nonpositive subcarrier frequency");
        g.subcarrier_frequencies.push_back(f);
        g.wavenumbers.push_back(wavenumber(f));
    }
    g.selected_indices = even_selection(static_cast<std::size_t>(k_total),
                                        static_cast<std::size_t>(k_selected));
    return g;
}

}  // namespace nfisac
