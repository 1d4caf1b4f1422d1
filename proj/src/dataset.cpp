#include "cbct/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cbct/errors.hpp"
#include "cbct/phantom.hpp"
#include "cbct/projector.hpp"
#include "cbct/rng.hpp"
#include "cbct/sha256.hpp"
#include "cbct/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cbct {

Volume normalize_minmax(const Volume& vol, NormalizeParams& params_out) {
    auto [mn, mx] = std::minmax_element(vol.data.begin(), vol.data.end());
    if (!(*mx > *mn)) throw ParamError("normalize_minmax: constant volume has no range");
    params_out.lo = *mn;
    params_out.hi = *mx;
    return normalize_with(vol, params_out);
}

Volume normalize_with(const Volume& vol, const NormalizeParams& p) {
    if (!(p.hi > p.lo)) throw ParamError("normalize_with: hi must exceed lo");
    Volume out = vol;
    const double scale = 2.0 / (p.hi - p.lo);
    for (auto& v : out.data) v = float((double(v) - p.lo) * scale - 1.0);
    return out;
}

Volume denormalize(const Volume& vol, const NormalizeParams& p) {
    Volume out = vol;
    const double scale = 0.5 * (p.hi - p.lo);
    for (auto& v : out.data) v = float((double(v) + 1.0) * scale + p.lo);
    return out;
}

void random_crop_offsets(const Volume& vol, int64_t size, uint64_t seed, int64_t& off_d,
                         int64_t& off_h, int64_t& off_w) {
    if (size < 1 || size > vol.d || size > vol.h || size > vol.w)
        throw ShapeError("random_crop: size " + std::to_string(size) +
                         " does not fit volume " + std::to_string(vol.d) + "x" +
                         std::to_string(vol.h) + "x" + std::to_string(vol.w));
    Rng rng(Rng::derive(seed, "crop"));
    off_d = int64_t(rng.below(uint64_t(vol.d - size + 1)));
    off_h = int64_t(rng.below(uint64_t(vol.h - size + 1)));
    off_w = int64_t(rng.below(uint64_t(vol.w - size + 1)));
}

Volume crop_at(const Volume& vol, int64_t size, int64_t od, int64_t oh, int64_t ow) {
    Volume out;
    out.d = out.h = out.w = size;
    out.spacing = vol.spacing;
    out.origin_x = vol.origin_x + double(ow) * vol.spacing;
    out.origin_y = vol.origin_y + double(oh) * vol.spacing;
    out.origin_z = vol.origin_z + double(od) * vol.spacing;
    out.data.resize(size * size * size);
    for (int64_t z = 0; z < size; ++z)
        for (int64_t y = 0; y < size; ++y) {
            const float* src = vol.data.data() + ((od + z) * vol.h + (oh + y)) * vol.w + ow;
            std::copy_n(src, size, out.data.data() + (z * size + y) * size);
        }
    return out;
}

Volume random_crop(const Volume& vol, int64_t size, uint64_t seed) {
    int64_t od, oh, ow;
    random_crop_offsets(vol, size, seed, od, oh, ow);
    return crop_at(vol, size, od, oh, ow);
}

Volume resample_trilinear(const Volume& vol, double new_spacing) {
    if (new_spacing <= 0) throw ParamError("resample spacing must be positive");
    Volume out;
    out.spacing = new_spacing;
    out.d = std::max<int64_t>(1, int64_t(std::floor(double(vol.d - 1) * vol.spacing / new_spacing)) + 1);
    out.h = std::max<int64_t>(1, int64_t(std::floor(double(vol.h - 1) * vol.spacing / new_spacing)) + 1);
    out.w = std::max<int64_t>(1, int64_t(std::floor(double(vol.w - 1) * vol.spacing / new_spacing)) + 1);
    out.origin_x = vol.origin_x;
    out.origin_y = vol.origin_y;
    out.origin_z = vol.origin_z;
    out.data.resize(out.size());
    const double r = new_spacing / vol.spacing;
    for (int64_t z = 0; z < out.d; ++z)
        for (int64_t y = 0; y < out.h; ++y)
            for (int64_t x = 0; x < out.w; ++x) {
                const double fz = double(z) * r, fy = double(y) * r, fx = double(x) * r;
                const int64_t iz = std::min(vol.d - 1, int64_t(fz));
                const int64_t iy = std::min(vol.h - 1, int64_t(fy));
                const int64_t ix = std::min(vol.w - 1, int64_t(fx));
                const int64_t jz = std::min(vol.d - 1, iz + 1);
                const int64_t jy = std::min(vol.h - 1, iy + 1);
                const int64_t jx = std::min(vol.w - 1, ix + 1);
                const double tz = fz - double(iz), ty = fy - double(iy), tx = fx - double(ix);
                double acc = 0;
                acc += (1 - tz) * (1 - ty) * (1 - tx) * vol.at(iz, iy, ix);
                acc += (1 - tz) * (1 - ty) * tx * vol.at(iz, iy, jx);
                acc += (1 - tz) * ty * (1 - tx) * vol.at(iz, jy, ix);
                acc += (1 - tz) * ty * tx * vol.at(iz, jy, jx);
                acc += tz * (1 - ty) * (1 - tx) * vol.at(jz, iy, ix);
                acc += tz * (1 - ty) * tx * vol.at(jz, iy, jx);
                acc += tz * ty * (1 - tx) * vol.at(jz, jy, ix);
                acc += tz * ty * tx * vol.at(jz, jy, jx);
                out.at(z, y, x) = float(acc);
            }
    return out;
}

namespace {

json entry_to_json(const DatasetEntry& e) {
    json j;
    j["id"] = e.id;
    j["split"] = e.split;
    j["phantom"] = e.phantom_file;
    json projs = json::object(), fdks = json::object(), hashes = json::object();
    for (const auto& [r, p] : e.projection_files) projs[std::to_string(r)] = p;
    for (const auto& [r, p] : e.fdk_files) fdks[std::to_string(r)] = p;
    for (const auto& [p, h] : e.file_hashes) hashes[p] = h;
    j["projections"] = projs;
    j["fdk"] = fdks;
    j["hashes"] = hashes;
    return j;
}

DatasetEntry entry_from_json(const json& j) {
    DatasetEntry e;
    e.id = j.at("id").get<std::string>();
    e.split = j.at("split").get<std::string>();
    e.phantom_file = j.at("phantom").get<std::string>();
    for (const auto& [k, v] : j.at("projections").items())
        e.projection_files[std::stol(k)] = v.get<std::string>();
    for (const auto& [k, v] : j.at("fdk").items())
        e.fdk_files[std::stol(k)] = v.get<std::string>();
    for (const auto& [k, v] : j.at("hashes").items()) e.file_hashes[k] = v.get<std::string>();
    return e;
}

}  // namespace

void DatasetManifest::save(const std::string& path) const {
    json j;
    j["format"] = "cbct-dataset-1";
    json g;
    g["source_to_isocenter_mm"] = geometry.source_to_isocenter;
    g["source_to_detector_mm"] = geometry.source_to_detector;
    g["detector_rows"] = geometry.detector_rows;
    g["detector_cols"] = geometry.detector_cols;
    g["pixel_pitch_u_mm"] = geometry.pixel_pitch_u;
    g["pixel_pitch_v_mm"] = geometry.pixel_pitch_v;
    g["n_views"] = geometry.n_views;
    g["volume_d"] = geometry.vol_d;
    g["volume_h"] = geometry.vol_h;
    g["volume_w"] = geometry.vol_w;
    g["voxel_spacing_mm"] = geometry.voxel_spacing;
    j["geometry"] = g;
    j["geometry_hash"] = geometry_hash;
    j["ratios"] = ratios;
    j["seed"] = seed;
    j["fdk_window"] = fdk_window;
    json entries_json = json::array();
    for (const auto& e : entries) entries_json.push_back(entry_to_json(e));
    j["entries"] = entries_json;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

DatasetManifest DatasetManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw IoError("malformed manifest " + path + ": " + e.what());
    }
    if (j.value("format", "") != "cbct-dataset-1")
        throw IoError("unknown manifest format in " + path);
    DatasetManifest m;
    const json& g = j.at("geometry");
    m.geometry.source_to_isocenter = g.at("source_to_isocenter_mm").get<double>();
    m.geometry.source_to_detector = g.at("source_to_detector_mm").get<double>();
    m.geometry.detector_rows = g.at("detector_rows").get<int64_t>();
    m.geometry.detector_cols = g.at("detector_cols").get<int64_t>();
    m.geometry.pixel_pitch_u = g.at("pixel_pitch_u_mm").get<double>();
    m.geometry.pixel_pitch_v = g.at("pixel_pitch_v_mm").get<double>();
    m.geometry.n_views = g.at("n_views").get<int64_t>();
    m.geometry.vol_d = g.at("volume_d").get<int64_t>();
    m.geometry.vol_h = g.at("volume_h").get<int64_t>();
    m.geometry.vol_w = g.at("volume_w").get<int64_t>();
    m.geometry.voxel_spacing = g.at("voxel_spacing_mm").get<double>();
    m.geometry_hash = j.at("geometry_hash").get<std::string>();
    m.ratios = j.at("ratios").get<std::vector<int64_t>>();
    m.seed = j.at("seed").get<uint64_t>();
    m.fdk_window = j.value("fdk_window", "hann");
    for (const auto& je : j.at("entries")) m.entries.push_back(entry_from_json(je));
    return m;
}

void DatasetManifest::verify(const std::string& root_dir) const {
    for (const auto& e : entries)
        for (const auto& [rel, hash] : e.file_hashes) {
            const fs::path p = fs::path(root_dir) / rel;
            if (!fs::exists(p)) throw IoError("manifest references missing file: " + p.string());
            const std::string actual = Sha256::of_file(p.string());
            if (actual != hash)
                throw IoError("hash mismatch for " + p.string() + ": manifest " + hash +
                              " vs actual " + actual);
        }
}

std::vector<const DatasetEntry*> DatasetManifest::split_entries(const std::string& split) const {
    std::vector<const DatasetEntry*> out;
    for (const auto& e : entries)
        if (e.split == split) out.push_back(&e);
    return out;
}

DatasetManifest build_dataset(const BuildDatasetOptions& opt, const std::string& out_dir) {
    if (opt.n_phantoms < 0) throw ParamError("n_phantoms must be >= 0");
    for (int64_t r : opt.ratios)
        if (r != 1 && r != 2 && r != 4 && r != 6 && r != 8)
            throw ParamError("unsupported ratio denominator " + std::to_string(r));
    const auto geom = make_geometry(opt.geometry);
    fs::create_directories(out_dir);

    // Placement sphere: stay inside the grid, the in-plane fan and the cone
    // coverage of the detector rows.
    const double inscribed =
        0.5 * geom.voxel_spacing * double(std::min({geom.vol_d, geom.vol_h, geom.vol_w}) - 1);
    double radius = opt.radius_fraction * std::min(inscribed, geom.fan_fov_radius());
    const double half_v = 0.5 * double(geom.detector_rows) * geom.virtual_pitch_v();
    const double z_cover = half_v * (geom.source_to_isocenter - radius) / geom.source_to_isocenter;
    radius = std::min(radius, opt.radius_fraction * z_cover);

    DatasetManifest manifest;
    manifest.geometry = opt.geometry;
    manifest.geometry_hash = geom.content_hash();
    manifest.ratios = opt.ratios;
    manifest.seed = opt.seed;
    manifest.fdk_window = to_string(opt.window);

    // deterministic split assignment
    std::vector<int64_t> order(opt.n_phantoms);
    for (int64_t i = 0; i < opt.n_phantoms; ++i) order[i] = i;
    Rng split_rng(Rng::derive(opt.seed, "split"));
    for (int64_t i = opt.n_phantoms - 1; i > 0; --i)
        std::swap(order[i], order[split_rng.below(uint64_t(i + 1))]);
    const int64_t n_train = int64_t(std::llround(opt.train_fraction * double(opt.n_phantoms)));
    const int64_t n_val = int64_t(std::llround(opt.val_fraction * double(opt.n_phantoms)));
    std::vector<std::string> split_of(opt.n_phantoms);
    for (int64_t pos = 0; pos < opt.n_phantoms; ++pos)
        split_of[order[pos]] = pos < n_train ? "train" : (pos < n_train + n_val ? "val" : "test");

    char name[64];
    for (int64_t i = 0; i < opt.n_phantoms; ++i) {
        std::snprintf(name, sizeof(name), "p%04lld", static_cast<long long>(i));
        const fs::path dir = fs::path(out_dir) / name;
        fs::create_directories(dir);

        DatasetEntry entry;
        entry.id = name;
        entry.split = split_of[i];

        const auto spec = PhantomSpec::random(Rng::derive(opt.seed, uint64_t(i)), radius);
        const auto truth =
            generate_phantom(spec, geom.vol_d, geom.vol_h, geom.vol_w, geom.voxel_spacing);
        const std::string gt_rel = std::string(name) + "/gt.cbvol";
        save_volume(truth, (fs::path(out_dir) / gt_rel).string());
        entry.phantom_file = gt_rel;

        const auto full_proj = forward_project(truth, geom);
        for (int64_t r : opt.ratios) {
            const auto proj = r == 1 ? full_proj : full_proj.select(subsample_views(geom, r));
            const std::string proj_rel =
                std::string(name) + "/proj_r" + std::to_string(r) + ".cbproj";
            save_projections(proj, (fs::path(out_dir) / proj_rel).string());
            entry.projection_files[r] = proj_rel;

            const auto recon = fdk_reconstruct(proj, opt.window);
            const std::string fdk_rel =
                std::string(name) + "/fdk_r" + std::to_string(r) + ".cbvol";
            save_volume(recon, (fs::path(out_dir) / fdk_rel).string());
            entry.fdk_files[r] = fdk_rel;
        }
        for (const auto& [r, p] : entry.projection_files)
            entry.file_hashes[p] = Sha256::of_file((fs::path(out_dir) / p).string());
        for (const auto& [r, p] : entry.fdk_files)
            entry.file_hashes[p] = Sha256::of_file((fs::path(out_dir) / p).string());
        entry.file_hashes[gt_rel] = Sha256::of_file((fs::path(out_dir) / gt_rel).string());
        manifest.entries.push_back(std::move(entry));
    }
    manifest.save((fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

}  // namespace cbct
