#pragma once

#include <cstdint>
#include <vector>

namespace cbct {

// Reconstruction grid. Data is slice-major: index (d,h,w) maps to world
// (z,y,x) = origin + index * spacing, with origin the center of voxel (0,0,0)
// relative to the isocenter.
struct Volume {
    int64_t d = 0, h = 0, w = 0;
    double spacing = 1.0;
    double origin_x = 0.0, origin_y = 0.0, origin_z = 0.0;
    std::vector<float> data;

    int64_t size() const { return d * h * w; }
    float& at(int64_t dz, int64_t dy, int64_t dx) { return data[(dz * h + dy) * w + dx]; }
    float at(int64_t dz, int64_t dy, int64_t dx) const { return data[(dz * h + dy) * w + dx]; }

    // Grid centered on the isocenter.
    static Volume centered(int64_t d, int64_t h, int64_t w, double spacing) {
        Volume v;
        v.d = d;
        v.h = h;
        v.w = w;
        v.spacing = spacing;
        v.origin_x = -0.5 * double(w - 1) * spacing;
        v.origin_y = -0.5 * double(h - 1) * spacing;
        v.origin_z = -0.5 * double(d - 1) * spacing;
        v.data.assign(d * h * w, 0.0f);
        return v;
    }

    bool same_grid(const Volume& o) const {
        return d == o.d && h == o.h && w == o.w && spacing == o.spacing &&
               origin_x == o.origin_x && origin_y == o.origin_y && origin_z == o.origin_z;
    }
};

}  // namespace cbct
