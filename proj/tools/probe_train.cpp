// Scratch quality probe for the desk training configuration; not installed.
#include <cstdio>
#include <filesystem>

#include "cbct/codebook.hpp"
#include "cbct/dataset.hpp"
#include "cbct/metrics.hpp"
#include "cbct/networks.hpp"
#include "cbct/training.hpp"
#include "cbct/volume_io.hpp"

using namespace cbct;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
    const fs::path root = "/tmp/probe_train";
    const bool fresh = argc > 1 && std::string(argv[1]) == "build";
    GeometryConfig gc;
    gc.detector_rows = 64;
    gc.detector_cols = 64;
    gc.n_views = 60;
    gc.vol_d = gc.vol_h = gc.vol_w = 32;

    DatasetManifest manifest;
    if (fresh) {
        fs::remove_all(root);
        BuildDatasetOptions opt;
        opt.geometry = gc;
        opt.n_phantoms = 32;
        opt.ratios = {1, 6};
        opt.seed = 77;
        opt.train_fraction = 0.75;
        manifest = build_dataset(opt, root.string());
    } else {
        manifest = DatasetManifest::load((root / "manifest.json").string());
    }

    // baseline: sparse FDK vs the full-view reference on the test split
    double base_psnr = 0, base_ssim = 0;
    const auto test_entries = manifest.split_entries("test");
    for (const auto* e : test_entries) {
        const auto ref = load_volume((root / e->fdk_files.at(1)).string());
        const auto sparse = load_volume((root / e->fdk_files.at(6)).string());
        const auto p = psnr(ref, sparse);
        base_psnr += p.value_db;
        base_ssim += ssim(ref, sparse, p.data_range);
    }
    base_psnr /= double(test_entries.size());
    base_ssim /= double(test_entries.size());
    std::printf("baseline FDK 1/6 vs full-view: psnr %.2f dB  ssim %.3f\n", base_psnr, base_ssim);
    if (fresh) return 0;

    train::TrainConfig cfg;
    cfg.arch.base_channels = 12;
    cfg.arch.levels = 1;
    cfg.arch.res_blocks = {0};
    cfg.arch.bottleneck_blocks = 1;
    cfg.arch.code_dim = 32;
    cfg.arch.codebook_size = 256;
    cfg.arch.classifier_hidden = 32;
    cfg.arch.disc_base = 8;
    cfg.patch_size = 32;
    cfg.learning_rate = 1e-3;
    cfg.lambda_adv = 0.02;
    cfg.lambda_p = 0.1;
    cfg.epochs_stage1 = argc > 2 ? std::atol(argv[2]) : 80;
    cfg.seed = 20240811;

    const auto s1 = train::train_stage1(manifest, root.string(), cfg,
                                        (root / "probe_s1.ckpt").string(),
                                        (root / "probe_s1.csv").string());

    // stage-1 self-reconstruction cap on held-out full-view volumes
    const auto arch = nets::ArchConfig::from_metadata(s1.metadata);
    Rng dummy(0);
    auto enc = nets::Encoder<float>::create(arch, dummy);
    enc.load(s1, "enc_full", false);
    auto dec = nets::Decoder<float>::create(arch, dummy);
    dec.load(s1, "dec", false);
    vq::Codebook<float> book;
    book.codes = s1.get<float>("book.codes", false);

    double cap_psnr = 0, cap_ssim = 0;
    const NormalizeParams range{cfg.value_lo, cfg.value_hi};
    for (const auto* e : test_entries) {
        const auto ref = load_volume((root / e->fdk_files.at(1)).string());
        const auto norm = normalize_with(ref, range);
        auto x = ad::TensorF::from_data({1, 1, norm.d, norm.h, norm.w}, norm.data);
        auto z = enc.forward(x);
        auto assign = vq::quantize_nearest(z, book);
        auto out = dec.forward(assign.quantized);
        Volume rec = ref;
        rec.data.assign(out.data().begin(), out.data().end());
        rec = denormalize(rec, range);
        const auto p = psnr(ref, rec);
        cap_psnr += p.value_db;
        cap_ssim += ssim(ref, rec, p.data_range);
    }
    cap_psnr /= double(test_entries.size());
    cap_ssim /= double(test_entries.size());
    std::printf("stage-1 self-reconstruction cap:  psnr %.2f dB  ssim %.3f\n", cap_psnr, cap_ssim);
    std::printf("margin over baseline: %.2f dB / %.3f ssim\n", cap_psnr - base_psnr,
                cap_ssim - base_ssim);
    return 0;
}
