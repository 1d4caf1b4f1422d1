#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cbct/checkpoint.hpp"
#include "cbct/config.hpp"
#include "cbct/dataset.hpp"
#include "cbct/networks.hpp"
#include "cbct/projector.hpp"
#include "cbct/volume.hpp"

namespace cbct::train {

// One knob set for all three stages. Batch sizes default to 3/4/3; the value
// range is the dataset-level affine mapped onto [-1,1] for every network
// input and output.
struct TrainConfig {
    nets::ArchConfig arch;
    double learning_rate = 1e-4;
    int64_t batch_stage1 = 3;
    int64_t batch_stage2 = 4;
    int64_t batch_stage3 = 3;
    int64_t patch_size = 32;
    int64_t epochs_stage1 = 40;
    int64_t epochs_stage2 = 40;
    int64_t epochs_stage3 = 30;
    double lambda_adv = 0.1;
    double lambda_p = 1.0;
    int64_t ratio = 6;  // sparse training ratio denominator
    uint64_t seed = 0;
    double value_lo = 0.0;
    double value_hi = 1.0;

    static TrainConfig from_config(const Config& cfg);
    void to_metadata(std::map<std::string, std::string>& meta) const;
    static TrainConfig from_metadata(const std::map<std::string, std::string>& meta);

    NormalizeParams value_range() const { return NormalizeParams{value_lo, value_hi}; }
};

// Every trainer writes the checkpoint to out_ckpt (stage recorded in its
// metadata), appends per-step loss terms to log_csv, and returns the loaded
// result. On a non-finite loss the last end-of-epoch snapshot is written
// before the abort is raised.
Checkpoint train_stage1(const DatasetManifest& manifest, const std::string& data_root,
                        const TrainConfig& cfg, const std::string& out_ckpt,
                        const std::string& log_csv);

Checkpoint train_stage2(const DatasetManifest& manifest, const std::string& data_root,
                        const TrainConfig& cfg, const Checkpoint& stage1,
                        const std::string& out_ckpt, const std::string& log_csv);

Checkpoint train_stage3(const DatasetManifest& manifest, const std::string& data_root,
                        const TrainConfig& cfg, const Checkpoint& stage2,
                        const std::string& out_ckpt, const std::string& log_csv);

// Ablation reference: the stage-1 architecture without the codebook, trained
// to map sparse-view reconstructions directly to full-view ones.
Checkpoint train_direct_ae(const DatasetManifest& manifest, const std::string& data_root,
                           const TrainConfig& cfg, const std::string& out_ckpt,
                           const std::string& log_csv);

// Sparse projections -> FDK -> encoder -> code classifier -> codebook ->
// decoder (fusion when the checkpoint is stage 3). Deterministic.
Volume infer(const ProjectionSet& sparse_proj, const Checkpoint& ckpt);

// Network-only inference for a reconstructed (unnormalized) sparse volume.
Volume infer_volume(const Volume& sparse_fdk, const Checkpoint& ckpt);

}  // namespace cbct::train
