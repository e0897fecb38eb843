#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "clmrkit/augment.hpp"
#include "clmrkit/autodiff.hpp"
#include "clmrkit/datasets.hpp"
#include "clmrkit/model.hpp"

// NT-Xent loss over cosine similarities, batch composition and the
// self-supervised pre-training loop.

namespace clmrkit::contrastive {

double cosine_similarity(std::span<const float> u, std::span<const float> v);

// partner[i] is the row paired with row i. The canonical layout interleaves
// pairs: rows (2m, 2m+1).
std::vector<int> adjacent_pairs(int n_pairs);

// Mean over all 2N anchors of -log( exp(sim(z_i, z_p)/tau) /
// sum_{k != i} exp(sim(z_i, z_k)/tau) ). Forward and backward run in float64
// internally. Throws BatchTooSmall (2N < 4), ZeroVector (a zero embedding
// row) and ShapeMismatch.
ad::Tensor nt_xent(const ad::Tensor& z, const std::vector<int>& partner, double tau);

// N distinct songs, one positive pair each.
std::vector<augment::ExamplePair> compose_batch(const data::SongDataset& dataset, int n,
                                                const augment::TransformChain& chain, Rng& rng,
                                                bool asymmetric = false);

struct TrainConfig {
    int epochs = 100;
    int batch_size = 96;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double temperature = 0.5;
    uint64_t seed = 42;
    int checkpoint_interval = 10;
    bool asymmetric = false;
};

struct StepRecord {
    int64_t step = 0;
    int epoch = 0;
    double loss = 0.0;
};

struct PretrainResult {
    std::vector<StepRecord> losses;
    std::string loss_csv;
    std::string last_checkpoint;
    std::string best_checkpoint;
};

// One epoch = one pass over unique songs (floor(n_songs / N) batches). Emits
// out_dir/loss.csv, periodic checkpoints, ckpt_best.bin (lowest trailing
// 50-step mean at a checkpoint event) and ckpt_last.bin. Deterministic for a
// fixed seed regardless of worker count.
PretrainResult pretrain(const data::SongDataset& dataset, model::Encoder& encoder,
                        model::Projector& projector, const TrainConfig& cfg,
                        const augment::TransformChain& chain, const std::string& out_dir,
                        const nlohmann::json& config_echo);

} // namespace clmrkit::contrastive
