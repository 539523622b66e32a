#pragma once

#include <algorithm>
#include <cmath>

#include "psforge/core/error.hpp"
#include "psforge/core/metrics.hpp"
#include "psforge/core/vec3.hpp"
#include "psforge/synth/material.hpp"

namespace psforge {

// Isotropic principled BRDF subset: Burley diffuse, a GGX specular lobe that
// blends the dielectric and metallic cases, and a Schlick-weighted sheen
// term. Implemented strictly as a function of (n.l, n.v, l.v); the
// half-vector quantities are recovered from those three dot products, so
// jointly rotating l and v about n cannot change the result.
inline double eval_brdf_iso(const PrincipledParams& p, double ndl, double ndv, double ldv) {
    if (!(ndl > 0.0) || !(ndv > 0.0))
        throw NumericalError("eval_brdf: back-facing light or view direction");

    // half-vector terms from the dot products:
    //   l.h = sqrt((1 + l.v)/2),  n.h = (n.l + n.v)/sqrt(2 + 2 l.v)
    const double ldh = std::sqrt(std::max(0.0, (1.0 + ldv) * 0.5));
    const double ndh = std::clamp((ndl + ndv) / std::sqrt(std::max(1e-12, 2.0 + 2.0 * ldv)), 0.0, 1.0);

    const double fl = std::pow(1.0 - ndl, 5.0);
    const double fv = std::pow(1.0 - ndv, 5.0);
    const double fh = std::pow(1.0 - ldh, 5.0);

    // Burley diffuse; equals Lambert at normal incidence.
    const double fd90 = 0.5 + 2.0 * p.roughness * ldh * ldh;
    const double burley = (1.0 + (fd90 - 1.0) * fl) * (1.0 + (fd90 - 1.0) * fv);
    const double diffuse = (1.0 - p.metallic) * p.base_color / kPi * burley;

    // GGX specular with Smith masking and Schlick Fresnel. The dielectric
    // lobe strength is proportional to the specular knob (0.5 -> F0 = 0.04,
    // and 0 switches the lobe off entirely); the metallic lobe is tinted by
    // base color.
    const double alpha = std::max(1e-3, p.roughness * p.roughness);
    const double a2 = alpha * alpha;
    const double denom = ndh * ndh * (a2 - 1.0) + 1.0;
    const double d_ggx = a2 / (kPi * denom * denom);
    auto smith_g1 = [a2](double x) { return 2.0 * x / (x + std::sqrt(a2 + (1.0 - a2) * x * x)); };
    const double g = smith_g1(ndl) * smith_g1(ndv);
    const double f_dielectric = p.specular * (0.08 + 0.92 * fh);
    const double f_metallic = p.base_color + (1.0 - p.base_color) * fh;
    const double fresnel = (1.0 - p.metallic) * f_dielectric + p.metallic * f_metallic;
    const double spec = d_ggx * g * fresnel / (4.0 * ndl * ndv);

    const double sheen = (1.0 - p.metallic) * p.sheen * fh;

    return diffuse + spec + sheen;
}

inline double eval_brdf(const PrincipledParams& p, const Vec3& n, const Vec3& l, const Vec3& v) {
    return eval_brdf_iso(p, n.dot(l), n.dot(v), l.dot(v));
}

}  // namespace psforge
