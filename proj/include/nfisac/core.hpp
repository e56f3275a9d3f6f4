#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nfisac {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using CVec3 = Eigen::Vector3cd;
using CMat3 = Eigen::Matrix3cd;
using CMat = Eigen::MatrixXcd;
using RMat = Eigen::MatrixXd;

namespace constants {
inline constexpr double c0 = 299792458.0;            // m/s
inline constexpr double eps0 = 8.8541878128e-12;     // F/m
inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double euler_gamma = std::numbers::egamma;
}  // namespace constants

inline constexpr cplx j{0.0, 1.0};

inline double deg_to_rad(double deg) { return deg * constants::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / constants::pi; }

/// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
    invalid_config,   // exit 1
    numeric,          // exit 2
    io,               // exit 2
    not_applicable,   // exit 2
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::invalid_config: return "invalid-config";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::io: return "io";
        case ErrorKind::not_applicable: return "not-applicable";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class InvalidConfig : public Error {
public:
    explicit InvalidConfig(const std::string& what) : Error(ErrorKind::invalid_config, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

class NotApplicable : public Error {
public:
    explicit NotApplicable(const std::string& what) : Error(ErrorKind::not_applicable, what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidConfig(msg);
}

/// Wraps an angle into [-pi, pi).
inline double wrap_angle(double x) {
    double y = std::fmod(x + constants::pi, constants::two_pi);
    if (y < 0.0) y += constants::two_pi;
    double r = y - constants::pi;
    // fmod can round up to exactly pi for inputs just below an odd multiple of pi
    if (r >= constants::pi) r -= constants::two_pi;
    return r;
}

}  // namespace nfisac
