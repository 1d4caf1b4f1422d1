#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cbct/fdk.hpp"
#include "cbct/geometry.hpp"
#include "cbct/volume.hpp"

namespace cbct {

// Affine map of [lo, hi] onto [-1, 1]; restore parameters invert it exactly.
struct NormalizeParams {
    double lo = 0.0;
    double hi = 1.0;
};
Volume normalize_minmax(const Volume& vol, NormalizeParams& params_out);
Volume normalize_with(const Volume& vol, const NormalizeParams& params);
Volume denormalize(const Volume& vol, const NormalizeParams& params);

// Uniformly positioned cube, deterministic per seed.
Volume random_crop(const Volume& vol, int64_t size, uint64_t seed);
// Offsets only, so registered volume pairs can share one crop.
void random_crop_offsets(const Volume& vol, int64_t size, uint64_t seed, int64_t& off_d,
                         int64_t& off_h, int64_t& off_w);
Volume crop_at(const Volume& vol, int64_t size, int64_t off_d, int64_t off_h, int64_t off_w);

// Trilinear resampling onto an isotropic grid with the given spacing.
Volume resample_trilinear(const Volume& vol, double new_spacing);

struct DatasetEntry {
    std::string id;
    std::string split;  // train | val | test
    std::string phantom_file;
    std::map<int64_t, std::string> projection_files;  // ratio denominator -> path
    std::map<int64_t, std::string> fdk_files;
    std::map<std::string, std::string> file_hashes;  // relative path -> sha256
};

struct DatasetManifest {
    GeometryConfig geometry;
    std::string geometry_hash;
    std::vector<int64_t> ratios;
    uint64_t seed = 0;
    std::string fdk_window = "hann";
    std::vector<DatasetEntry> entries;

    void save(const std::string& path) const;
    static DatasetManifest load(const std::string& path);
    // Recomputes every recorded hash relative to the manifest's directory.
    void verify(const std::string& root_dir) const;
    std::vector<const DatasetEntry*> split_entries(const std::string& split) const;
};

struct BuildDatasetOptions {
    int64_t n_phantoms = 16;
    GeometryConfig geometry;
    std::vector<int64_t> ratios{1, 2, 4, 6, 8};
    uint64_t seed = 0;
    RampWindow window = RampWindow::kHann;
    double train_fraction = 0.75;
    double val_fraction = 0.0;
    // Phantom placement sphere as a fraction of the usable field of view.
    double radius_fraction = 0.8;
};

// Per phantom: ground truth volume, full projections, per-ratio subsets and
// FDK reconstructions; manifest with content hashes and a deterministic
// train/val/test split.
DatasetManifest build_dataset(const BuildDatasetOptions& opt, const std::string& out_dir);

}  // namespace cbct
