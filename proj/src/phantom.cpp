#include "cbct/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cbct/errors.hpp"
#include "cbct/rng.hpp"

namespace cbct {

namespace {

struct Shape {
    enum Kind { kEllipsoid, kLesion, kVessel } kind;
    // ellipsoid frame
    double cx, cy, cz, ax, ay, az, cos_yaw, sin_yaw;
    // tube frame
    double x0, y0, z0, dx, dy, dz, len, radius;
    double value;

    bool contains(double x, double y, double z) const {
        if (kind == kVessel) {
            const double px = x - x0, py = y - y0, pz = z - z0;
            double t = px * dx + py * dy + pz * dz;
            t = std::clamp(t, 0.0, len);
            const double qx = px - t * dx, qy = py - t * dy, qz = pz - t * dz;
            return qx * qx + qy * qy + qz * qz <= radius * radius;
        }
        const double tx = x - cx, ty = y - cy, tz = z - cz;
        const double rx = cos_yaw * tx + sin_yaw * ty;
        const double ry = -sin_yaw * tx + cos_yaw * ty;
        const double u = rx / ax, v = ry / ay, q = tz / az;
        return u * u + v * v + q * q <= 1.0;
    }
};

Shape from_ellipsoid(const Ellipsoid& e) {
    Shape s{};
    s.kind = Shape::kEllipsoid;
    s.cx = e.cx;
    s.cy = e.cy;
    s.cz = e.cz;
    s.ax = e.ax;
    s.ay = e.ay;
    s.az = e.az;
    s.cos_yaw = std::cos(e.yaw);
    s.sin_yaw = std::sin(e.yaw);
    s.value = e.value;
    return s;
}

Shape from_lesion(const SphereBlob& b) {
    Shape s{};
    s.kind = Shape::kLesion;
    s.cx = b.cx;
    s.cy = b.cy;
    s.cz = b.cz;
    s.ax = s.ay = s.az = b.radius;
    s.cos_yaw = 1.0;
    s.sin_yaw = 0.0;
    s.value = b.value;
    return s;
}

Shape from_tube(const Tube& t) {
    Shape s{};
    s.kind = Shape::kVessel;
    s.x0 = t.x0;
    s.y0 = t.y0;
    s.z0 = t.z0;
    double dx = t.x1 - t.x0, dy = t.y1 - t.y0, dz = t.z1 - t.z0;
    s.len = std::sqrt(dx * dx + dy * dy + dz * dz);
    const double inv = s.len > 0 ? 1.0 / s.len : 0.0;
    s.dx = dx * inv;
    s.dy = dy * inv;
    s.dz = dz * inv;
    s.radius = t.radius;
    s.value = t.value;
    return s;
}

double shape_reach(const Shape& s) {
    if (s.kind == Shape::kVessel) {
        const double r0 = std::sqrt(s.x0 * s.x0 + s.y0 * s.y0 + s.z0 * s.z0);
        const double x1 = s.x0 + s.dx * s.len, y1 = s.y0 + s.dy * s.len, z1 = s.z0 + s.dz * s.len;
        const double r1 = std::sqrt(x1 * x1 + y1 * y1 + z1 * z1);
        return std::max(r0, r1) + s.radius;
    }
    const double rc = std::sqrt(s.cx * s.cx + s.cy * s.cy + s.cz * s.cz);
    return rc + std::max({s.ax, s.ay, s.az});
}

}  // namespace

double PhantomSpec::max_reach() const {
    double r = 0.0;
    for (const auto& e : ellipsoids) r = std::max(r, shape_reach(from_ellipsoid(e)));
    for (const auto& b : lesions) r = std::max(r, shape_reach(from_lesion(b)));
    for (const auto& t : vessels) r = std::max(r, shape_reach(from_tube(t)));
    return r;
}

PhantomSpec PhantomSpec::random(uint64_t seed, double R) {
    Rng rng(Rng::derive(seed, "phantom"));
    PhantomSpec spec;
    spec.seed = seed;

    Ellipsoid body;
    body.ax = R * rng.uniform(0.80, 0.95);
    body.ay = R * rng.uniform(0.70, 0.90);
    body.az = R * rng.uniform(0.75, 0.95);
    body.yaw = rng.uniform(0.0, 0.6);
    body.value = rng.uniform(0.18, 0.30);
    spec.ellipsoids.push_back(body);

    const int n_inner = 2 + int(rng.below(3));
    for (int i = 0; i < n_inner; ++i) {
        Ellipsoid e;
        const double rad = R * rng.uniform(0.12, 0.30);
        const double rc = rng.uniform(0.0, R * 0.55);
        const double phi = rng.uniform(0.0, 6.283185307179586);
        const double cz = rng.uniform(-0.35, 0.35) * R;
        e.cx = rc * std::cos(phi);
        e.cy = rc * std::sin(phi);
        e.cz = cz;
        e.ax = rad * rng.uniform(0.6, 1.4);
        e.ay = rad * rng.uniform(0.6, 1.4);
        e.az = rad * rng.uniform(0.6, 1.4);
        e.yaw = rng.uniform(0.0, 3.14159);
        e.value = rng.uniform(0.30, 0.70);
        spec.ellipsoids.push_back(e);
    }

    const int n_lesions = 4 + int(rng.below(4));
    for (int i = 0; i < n_lesions; ++i) {
        SphereBlob b;
        const double rc = rng.uniform(0.0, R * 0.65);
        const double phi = rng.uniform(0.0, 6.283185307179586);
        b.cx = rc * std::cos(phi);
        b.cy = rc * std::sin(phi);
        b.cz = rng.uniform(-0.45, 0.45) * R;
        b.radius = R * rng.uniform(0.05, 0.14);
        b.value = rng.uniform(0.80, 1.00);
        spec.lesions.push_back(b);
    }

    const int n_vessels = 2 + int(rng.below(3));
    for (int i = 0; i < n_vessels; ++i) {
        Tube t;
        const double r0 = rng.uniform(0.0, R * 0.45);
        const double phi0 = rng.uniform(0.0, 6.283185307179586);
        t.x0 = r0 * std::cos(phi0);
        t.y0 = r0 * std::sin(phi0);
        t.z0 = rng.uniform(-0.5, 0.0) * R;
        const double r1 = rng.uniform(0.0, R * 0.45);
        const double phi1 = rng.uniform(0.0, 6.283185307179586);
        t.x1 = r1 * std::cos(phi1);
        t.y1 = r1 * std::sin(phi1);
        t.z1 = rng.uniform(0.0, 0.5) * R;
        t.radius = R * rng.uniform(0.015, 0.035);
        t.value = rng.uniform(0.75, 0.95);
        spec.vessels.push_back(t);
    }

    // Shrink anything poking outside the placement sphere back inside.
    for (auto& e : spec.ellipsoids) {
        const double rc = std::sqrt(e.cx * e.cx + e.cy * e.cy + e.cz * e.cz);
        const double room = R - rc;
        const double m = std::max({e.ax, e.ay, e.az});
        if (m > room) {
            const double k = 0.95 * room / m;
            e.ax *= k;
            e.ay *= k;
            e.az *= k;
        }
    }
    for (auto& b : spec.lesions) {
        const double rc = std::sqrt(b.cx * b.cx + b.cy * b.cy + b.cz * b.cz);
        if (b.radius > R - rc) b.radius = 0.95 * (R - rc);
    }
    return spec;
}

Volume generate_phantom(const PhantomSpec& spec, int64_t d, int64_t h, int64_t w, double spacing,
                        PhantomMasks* masks) {
    std::vector<Shape> shapes;
    for (const auto& e : spec.ellipsoids) shapes.push_back(from_ellipsoid(e));
    for (const auto& b : spec.lesions) shapes.push_back(from_lesion(b));
    for (const auto& t : spec.vessels) shapes.push_back(from_tube(t));
    for (const auto& s : shapes)
        if (s.value < 0.0 || s.value > 1.0)
            throw ParamError("phantom attenuation outside [0,1]: " + std::to_string(s.value));

    const double grid_r = 0.5 * spacing * double(std::min({d, h, w}) - 1);
    const double reach = spec.max_reach();
    if (reach > grid_r)
        throw ParamError("phantom reach " + std::to_string(reach) +
                         " mm exceeds the grid's inscribed sphere " + std::to_string(grid_r) +
                         " mm");

    Volume vol = Volume::centered(d, h, w, spacing);
    if (masks) {
        masks->lesion.assign(vol.size(), 0);
        masks->vessel.assign(vol.size(), 0);
    }
    constexpr int kSS = 2;  // supersampling per axis
    const double sub = spacing / double(kSS);
    const double off0 = -0.5 * spacing + 0.5 * sub;

#pragma omp parallel for schedule(static)
    for (int64_t dz = 0; dz < d; ++dz) {
        for (int64_t dy = 0; dy < h; ++dy)
            for (int64_t dx = 0; dx < w; ++dx) {
                const double zc = vol.origin_z + double(dz) * spacing;
                const double yc = vol.origin_y + double(dy) * spacing;
                const double xc = vol.origin_x + double(dx) * spacing;
                double acc = 0.0;
                int dominant = -1;
                double dominant_cov = 0.0;
                for (const auto& s : shapes) {
                    int inside = 0;
                    for (int sz = 0; sz < kSS; ++sz)
                        for (int sy = 0; sy < kSS; ++sy)
                            for (int sx = 0; sx < kSS; ++sx)
                                inside += s.contains(xc + off0 + sx * sub, yc + off0 + sy * sub,
                                                     zc + off0 + sz * sub)
                                              ? 1
                                              : 0;
                    if (inside == 0) continue;
                    const double cov = double(inside) / double(kSS * kSS * kSS);
                    acc = (1.0 - cov) * acc + cov * s.value;
                    if (masks && s.kind != Shape::kEllipsoid && cov >= dominant_cov) {
                        dominant = s.kind;
                        dominant_cov = cov;
                    }
                }
                vol.at(dz, dy, dx) = float(acc);
                if (masks && dominant_cov >= 0.5) {
                    const int64_t idx = (dz * h + dy) * w + dx;
                    if (dominant == Shape::kLesion) masks->lesion[idx] = 1;
                    if (dominant == Shape::kVessel) masks->vessel[idx] = 1;
                }
            }
    }
    return vol;
}

}  // namespace cbct
