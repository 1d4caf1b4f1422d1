#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "cbct/dataset.hpp"
#include "cbct/errors.hpp"
#include "cbct/phantom.hpp"
#include "cbct/png_io.hpp"
#include "cbct/rng.hpp"
#include "cbct/stats.hpp"

using namespace cbct;
namespace fs = std::filesystem;

TEST_CASE("minmax normalization and exact restore") {
    Volume v = Volume::centered(2, 4, 4, 1.0);
    Rng rng(1);
    for (auto& x : v.data) x = float(rng.uniform(-3.0, 5.0));
    NormalizeParams p;
    const auto n = normalize_minmax(v, p);
    auto [mn, mx] = std::minmax_element(n.data.begin(), n.data.end());
    CHECK(*mn == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(*mx == doctest::Approx(1.0).epsilon(1e-6));
    const auto back = denormalize(n, p);
    for (int64_t i = 0; i < v.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(v.data[i]).epsilon(1e-6));

    // already spanning [-1,1]: identity map
    Volume s = Volume::centered(1, 2, 2, 1.0);
    s.data = {-1.0f, 1.0f, 0.25f, -0.5f};
    NormalizeParams ps;
    const auto sn = normalize_minmax(s, ps);
    for (int64_t i = 0; i < s.size(); ++i)
        CHECK(sn.data[i] == doctest::Approx(s.data[i]).epsilon(1e-7));

    // exact endpoints for input [2,4]
    Volume e = Volume::centered(1, 1, 2, 1.0);
    e.data = {2.0f, 4.0f};
    NormalizeParams pe;
    const auto en = normalize_minmax(e, pe);
    CHECK(en.data[0] == -1.0f);
    CHECK(en.data[1] == 1.0f);

    Volume flat = Volume::centered(1, 2, 2, 1.0);
    std::fill(flat.data.begin(), flat.data.end(), 3.0f);
    NormalizeParams pf;
    CHECK_THROWS_AS(normalize_minmax(flat, pf), ParamError);
}

TEST_CASE("random crop determinism, full-size identity, uniform offsets") {
    Volume v = Volume::centered(16, 16, 16, 1.0);
    for (int64_t i = 0; i < v.size(); ++i) v.data[i] = float(i);

    const auto full = random_crop(v, 16, 5);
    CHECK(std::memcmp(full.data.data(), v.data.data(), v.size() * sizeof(float)) == 0);

    int64_t d1, h1, w1, d2, h2, w2;
    random_crop_offsets(v, 8, 77, d1, h1, w1);
    random_crop_offsets(v, 8, 77, d2, h2, w2);
    CHECK(d1 == d2);
    CHECK(h1 == h2);
    CHECK(w1 == w2);

    const auto patch = random_crop(v, 8, 77);
    CHECK(patch.d == 8);
    CHECK(patch.at(0, 0, 0) == v.at(d1, h1, w1));
    CHECK(patch.at(7, 7, 7) == v.at(d1 + 7, h1 + 7, w1 + 7));

    CHECK_THROWS_AS(random_crop(v, 17, 1), ShapeError);

    // offset histogram over many seeds is uniform (chi-square oracle)
    const int64_t positions = 16 - 8 + 1;
    std::vector<double> counts(positions, 0.0);
    const int64_t draws = 10000;
    for (int64_t i = 0; i < draws; ++i) {
        int64_t od, oh, ow;
        random_crop_offsets(v, 8, uint64_t(1000 + i), od, oh, ow);
        counts[od] += 1.0;
    }
    double chi2 = 0;
    const double expect = double(draws) / double(positions);
    for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
    CHECK(chi_square_sf(chi2, double(positions - 1)) > 0.01);
}

TEST_CASE("trilinear resampling") {
    Volume v = Volume::centered(4, 4, 4, 2.0);
    for (int64_t z = 0; z < 4; ++z)
        for (int64_t y = 0; y < 4; ++y)
            for (int64_t x = 0; x < 4; ++x) v.at(z, y, x) = float(x);  // linear in x

    const auto same = resample_trilinear(v, 2.0);
    CHECK(same.size() == v.size());
    for (int64_t i = 0; i < v.size(); ++i)
        CHECK(same.data[i] == doctest::Approx(v.data[i]).epsilon(1e-6));

    const auto fine = resample_trilinear(v, 1.0);
    CHECK(fine.w == 7);
    // halfway samples interpolate linearly
    CHECK(fine.at(0, 0, 1) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(fine.at(0, 0, 3) == doctest::Approx(1.5).epsilon(1e-6));
}

TEST_CASE("dataset build, manifest round trip, integrity hashes") {
    const auto dir = fs::temp_directory_path() / "cbct_dataset_test";
    fs::remove_all(dir);

    BuildDatasetOptions opt;
    opt.n_phantoms = 4;
    opt.seed = 9;
    opt.ratios = {1, 6};
    opt.geometry.detector_rows = 32;
    opt.geometry.detector_cols = 32;
    opt.geometry.n_views = 24;
    opt.geometry.vol_d = opt.geometry.vol_h = opt.geometry.vol_w = 16;
    opt.train_fraction = 0.5;
    opt.val_fraction = 0.25;
    const auto manifest = build_dataset(opt, dir.string());

    REQUIRE(manifest.entries.size() == 4);
    CHECK(manifest.geometry_hash == make_geometry(opt.geometry).content_hash());

    // splits disjoint and cover all phantoms
    std::set<std::string> ids;
    int train = 0, val = 0, test = 0;
    for (const auto& e : manifest.entries) {
        ids.insert(e.id);
        if (e.split == "train") ++train;
        if (e.split == "val") ++val;
        if (e.split == "test") ++test;
    }
    CHECK(ids.size() == 4);
    CHECK(train == 2);
    CHECK(val == 1);
    CHECK(test == 1);

    // integrity oracle: every recorded hash matches recomputation
    manifest.verify(dir.string());

    // round trip
    const auto loaded = DatasetManifest::load((dir / "manifest.json").string());
    CHECK(loaded.geometry_hash == manifest.geometry_hash);
    CHECK(loaded.ratios == manifest.ratios);
    CHECK(loaded.seed == manifest.seed);
    CHECK(loaded.fdk_window == manifest.fdk_window);
    REQUIRE(loaded.entries.size() == manifest.entries.size());
    for (size_t i = 0; i < loaded.entries.size(); ++i) {
        CHECK(loaded.entries[i].id == manifest.entries[i].id);
        CHECK(loaded.entries[i].split == manifest.entries[i].split);
        CHECK(loaded.entries[i].file_hashes == manifest.entries[i].file_hashes);
    }

    // corrupting a file makes verify throw
    {
        std::ofstream f(dir / manifest.entries[0].phantom_file,
                        std::ios::binary | std::ios::app);
        f << "tamper";
    }
    CHECK_THROWS_AS(manifest.verify(dir.string()), IoError);

    // empty dataset
    const auto dir2 = fs::temp_directory_path() / "cbct_dataset_empty";
    fs::remove_all(dir2);
    BuildDatasetOptions none = opt;
    none.n_phantoms = 0;
    CHECK(build_dataset(none, dir2.string()).entries.empty());

    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("png slice export") {
    const auto dir = fs::temp_directory_path() / "cbct_png_test";
    fs::remove_all(dir);
    auto vol = generate_phantom(PhantomSpec::random(5, 10.0), 24, 24, 24, 1.0);
    export_slices(vol, dir.string(), 0.0, 0.0);  // auto window
    for (const char* name : {"axial_12.png", "coronal_12.png", "sagittal_12.png"}) {
        const auto p = dir / name;
        REQUIRE(fs::exists(p));
        std::ifstream in(p, std::ios::binary);
        uint8_t magic[8];
        in.read(reinterpret_cast<char*>(magic), 8);
        CHECK(magic[1] == 'P');
        CHECK(magic[2] == 'N');
        CHECK(magic[3] == 'G');
        CHECK(fs::file_size(p) > 100);
    }
    int64_t w = 0, h = 0;
    auto img = slice_gray8(vol, SlicePlane::kAxial, 12, 0.0, 0.0, w, h);
    CHECK(w == 24);
    CHECK(h == 24);
    // window/level mapping pins extremes
    auto img2 = slice_gray8(vol, SlicePlane::kAxial, 12, 0.5, 0.25, w, h);
    CHECK(*std::max_element(img2.begin(), img2.end()) == 255);
    CHECK_THROWS_AS(slice_gray8(vol, SlicePlane::kAxial, 99, 0, 0, w, h), ParamError);
    fs::remove_all(dir);
}
