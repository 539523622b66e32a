#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "psforge/core/error.hpp"
#include "psforge/core/types.hpp"
#include "psforge/core/vec3.hpp"

namespace psforge {

// Classical per-pixel photometric stereo: solve L b = i in the least-squares
// sense; the normal is the direction of b and the albedo its magnitude.
struct LsSolution {
    Vec3 normal;
    double albedo = 0.0;
    double residual = 0.0;  // RMS of the fit
    int used_count = 0;
};

namespace detail {

// eigenvalues of a symmetric 3x3 matrix (trigonometric closed form)
inline void sym3_eigenvalues(const double a[3][3], double out[3]) {
    const double p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    const double q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    const double p2 = (a[0][0] - q) * (a[0][0] - q) + (a[1][1] - q) * (a[1][1] - q) +
                      (a[2][2] - q) * (a[2][2] - q) + 2.0 * p1;
    if (p2 <= 1e-30) {
        out[0] = out[1] = out[2] = q;
        return;
    }
    const double p = std::sqrt(p2 / 6.0);
    double b[3][3];
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) b[r][c] = (a[r][c] - (r == c ? q : 0.0)) / p;
    const double detb = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) -
                        b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0]) +
                        b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    const double r = std::clamp(detb / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    out[0] = q + 2.0 * p * std::cos(phi);
    out[2] = q + 2.0 * p * std::cos(phi + 2.0 * 3.141592653589793 / 3.0);
    out[1] = 3.0 * q - out[0] - out[2];
}

// least squares for m x 3 via Householder QR
inline Vec3 qr_solve3(std::vector<double>& a, std::vector<double>& rhs, size_t m) {
    for (int k = 0; k < 3; ++k) {
        double nrm = 0.0;
        for (size_t r = k; r < m; ++r) nrm += a[r * 3 + k] * a[r * 3 + k];
        nrm = std::sqrt(nrm);
        if (nrm < 1e-14) throw NumericalError("lambertian_ls: rank-deficient light matrix");
        if (a[size_t(k) * 3 + k] < 0.0) nrm = -nrm;
        std::vector<double> v(m - k);
        v[0] = a[size_t(k) * 3 + k] + nrm;
        for (size_t r = k + 1; r < m; ++r) v[r - k] = a[r * 3 + k];
        double vtv = 0.0;
        for (double x : v) vtv += x * x;
        for (int c = k; c < 3; ++c) {
            double dot = 0.0;
            for (size_t r = k; r < m; ++r) dot += v[r - k] * a[r * 3 + c];
            const double f = 2.0 * dot / vtv;
            for (size_t r = k; r < m; ++r) a[r * 3 + c] -= f * v[r - k];
        }
        double dot = 0.0;
        for (size_t r = k; r < m; ++r) dot += v[r - k] * rhs[r];
        const double f = 2.0 * dot / vtv;
        for (size_t r = k; r < m; ++r) rhs[r] -= f * v[r - k];
    }
    double x[3];
    for (int k = 2; k >= 0; --k) {
        double s = rhs[k];
        for (int c = k + 1; c < 3; ++c) s -= a[size_t(k) * 3 + c] * x[c];
        x[k] = s / a[size_t(k) * 3 + k];
    }
    return {x[0], x[1], x[2]};
}

}  // namespace detail

// Solves for the unnormalized normal b from intensity-normalized values.
// Normal equations by default; above condition number 1e6 the solve falls
// back to Householder QR, and above 1e8 the pixel is rejected.
inline LsSolution lambertian_ls(const std::vector<double>& values, const LightSet& lights) {
    const size_t m = values.size();
    if (m != lights.size()) throw DataError("lambertian_ls: value/light count mismatch");
    if (m < 3) throw NumericalError("lambertian_ls: fewer than 3 observations");

    std::vector<double> s(m);
    for (size_t j = 0; j < m; ++j) s[j] = values[j] / lights.intensities[j];

    double ata[3][3] = {};
    double atb[3] = {};
    for (size_t j = 0; j < m; ++j) {
        const Vec3& l = lights.directions[j];
        const double lv[3] = {l.x, l.y, l.z};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) ata[r][c] += lv[r] * lv[c];
            atb[r] += lv[r] * s[j];
        }
    }
    double eig[3];
    detail::sym3_eigenvalues(ata, eig);
    const double lam_max = std::max({eig[0], eig[1], eig[2]});
    const double lam_min = std::min({eig[0], eig[1], eig[2]});
    if (lam_min <= 0.0 || std::sqrt(lam_max / lam_min) > 1e8)
        throw NumericalError("lambertian_ls: rank-deficient light matrix");
    const double cond = std::sqrt(lam_max / lam_min);

    Vec3 b;
    if (cond > 1e6) {
        std::vector<double> a(m * 3);
        std::vector<double> rhs = s;
        for (size_t j = 0; j < m; ++j) {
            a[j * 3 + 0] = lights.directions[j].x;
            a[j * 3 + 1] = lights.directions[j].y;
            a[j * 3 + 2] = lights.directions[j].z;
        }
        b = detail::qr_solve3(a, rhs, m);
    } else {
        // Cramer on the 3x3 normal equations
        auto det3 = [](const double mm[3][3]) {
            return mm[0][0] * (mm[1][1] * mm[2][2] - mm[1][2] * mm[2][1]) -
                   mm[0][1] * (mm[1][0] * mm[2][2] - mm[1][2] * mm[2][0]) +
                   mm[0][2] * (mm[1][0] * mm[2][1] - mm[1][1] * mm[2][0]);
        };
        const double d = det3(ata);
        double tmp[3][3];
        double x[3];
        for (int c = 0; c < 3; ++c) {
            for (int r = 0; r < 3; ++r)
                for (int cc = 0; cc < 3; ++cc) tmp[r][cc] = cc == c ? atb[r] : ata[r][cc];
            x[c] = det3(tmp) / d;
        }
        b = {x[0], x[1], x[2]};
    }

    LsSolution sol;
    sol.albedo = b.norm();
    if (sol.albedo < 1e-12) throw NumericalError("lambertian_ls: zero-albedo solution");
    sol.normal = b / sol.albedo;
    sol.used_count = int(m);
    double ss = 0.0;
    for (size_t j = 0; j < m; ++j) {
        const double r = lights.directions[j].dot(b) - s[j];
        ss += r * r;
    }
    sol.residual = std::sqrt(ss / double(m));
    return sol;
}

// Drops observations below the shadow threshold. The default threshold is
// the 16-bit integer level 655 expressed in linear floats.
inline constexpr double kDefaultShadowThreshold = 655.0 / 65535.0;

inline std::pair<std::vector<double>, LightSet> threshold_shadow(const std::vector<double>& values,
                                                                 const LightSet& lights,
                                                                 double tau) {
    if (tau < 0.0) throw ConfigError("threshold_shadow: tau must be >= 0");
    if (values.size() != lights.size())
        throw DataError("threshold_shadow: value/light count mismatch");
    std::vector<double> v;
    LightSet ls;
    for (size_t j = 0; j < values.size(); ++j) {
        if (values[j] < tau) continue;
        v.push_back(values[j]);
        ls.directions.push_back(lights.directions[j]);
        ls.intensities.push_back(lights.intensities[j]);
    }
    if (v.size() < 3)
        throw NumericalError("threshold_shadow: fewer than 3 observations above threshold");
    return {std::move(v), std::move(ls)};
}

struct BaselineResult {
    NormalMap normals;
    Image albedo;
    Image residual;
    size_t failed_pixels = 0;
};

// Shadow-thresholded Lambertian least squares over the mask. Per-pixel
// failures leave the pixel out of the output mask instead of aborting.
inline BaselineResult baseline_map(const ImageStack& stack, const LightSet& lights, double tau,
                                   const Mask& mask) {
    stack.validate(lights);
    const int h = stack.height(), w = stack.width();
    if (mask.height() != h || mask.width() != w)
        throw DataError("baseline_map: mask dimensions mismatch");

    BaselineResult out;
    out.normals = NormalMap(h, w);
    out.albedo = Image(h, w, 0.0f);
    out.residual = Image(h, w, 0.0f);

    std::vector<std::pair<int, int>> px;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (mask.at(r, c)) px.emplace_back(r, c);

    std::vector<uint8_t> failed(px.size(), 0);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < (long long)px.size(); ++i) {
        const auto [r, c] = px[i];
        std::vector<double> values(lights.size());
        for (size_t j = 0; j < lights.size(); ++j) values[j] = stack.images[j].at(r, c);
        try {
            auto [v, ls] = threshold_shadow(values, lights, tau);
            const LsSolution sol = lambertian_ls(v, ls);
            out.normals.at(r, c) = sol.normal;
            out.normals.mask.set(r, c, true);
            out.albedo.at(r, c) = float(sol.albedo);
            out.residual.at(r, c) = float(sol.residual);
        } catch (const Error&) {
            failed[i] = 1;
        }
    }
    for (uint8_t f : failed) out.failed_pixels += f;
    return out;
}

}  // namespace psforge
