#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "clmrkit/datasets.hpp"
#include "clmrkit/model.hpp"

// Probe training on frozen representations and multi-label ranking metrics.

namespace clmrkit::eval {

// Mann-Whitney: P(score+ > score-) + 0.5 P(tie). Throws SingleClass.
double roc_auc(std::span<const double> scores, std::span<const uint8_t> labels);

// Average precision with step interpolation over descending score thresholds.
// Throws NoPositives.
double pr_auc(std::span<const double> scores, std::span<const uint8_t> labels);

struct RepMatrix {
    int64_t n = 0;
    int64_t dim = 0;
    std::vector<float> values;  // row-major
    std::vector<int> frag_song; // global song index per fragment row

    const float* row(int64_t i) const { return values.data() + i * dim; }
};

// Frozen, eval-mode representations of the non-overlapping fragment tiling of
// the given songs. Deterministic; rows follow fragment order.
RepMatrix extract_representations(model::Encoder& encoder, const data::SongDataset& dataset,
                                  std::span<const int> song_indices, int batch_size = 32);

// Multi-hot fragment targets, rows aligned with reps.frag_song.
std::vector<float> fragment_targets(const RepMatrix& reps, const data::LabelMatrix& labels);

struct ProbeConfig {
    model::ProbeKind head = model::ProbeKind::Linear;
    double lr = 3e-4;
    double weight_decay = 1e-6;
    int patience = 5;
    int max_epochs = 100;
    int seeds = 3;
    int batch_size = 64;
    int mlp_hidden = 0; // 0 = representation dim
};

struct TrainedProbe {
    model::ProbeHead head;
    double best_val_metric = 0.0;
    int epochs_ran = 0;
};

// Sigmoid + per-tag binary cross-entropy with Adam; early-stops when the
// validation tag ROC-AUC (single-class tags excluded) fails to improve for
// `patience` epochs, and returns the best-validation parameters.
TrainedProbe train_probe(const RepMatrix& train_reps, const std::vector<float>& train_targets,
                         const RepMatrix& val_reps, const std::vector<float>& val_targets,
                         int n_tags, const ProbeConfig& cfg, uint64_t seed);

// Sigmoid scores, [n, n_tags] row-major.
std::vector<double> probe_scores(model::ProbeHead& head, const RepMatrix& reps,
                                 int batch_size = 256);

// Clip score = mean of its fragments' scores. Throws EmptyClip when a song in
// `song_indices` has no fragment rows.
std::vector<double> aggregate_clip(const std::vector<double>& fragment_scores,
                                   std::span<const int> frag_song, std::span<const int> song_indices,
                                   int n_tags);

// First max(1, round(fraction * n)) songs of a seeded permutation; subsets
// nest across fractions for equal seeds. Throws EmptySubset.
std::vector<int> label_subset(std::span<const int> songs, double fraction, uint64_t seed);

struct EvalReport {
    int runs = 0;
    double tag_roc_auc = 0.0;
    double tag_pr_auc = 0.0;
    double clip_roc_auc = 0.0;
    double clip_pr_auc = 0.0;
    std::vector<double> per_seed_tag_roc; // one entry per probe run
    std::vector<std::string> tag_names;   // evaluated tags only
    std::vector<double> per_tag_roc;      // seed-averaged, fragment level
    std::vector<double> per_tag_pr;
    std::vector<std::string> skipped_tags; // single-class in the test split
};

nlohmann::json report_to_json(const EvalReport& report, const nlohmann::json& config_echo,
                              const std::string& checkpoint_hash);

// Trains `cfg.seeds` probes on the (optionally label-subset) training split
// and averages held-out test metrics. Transfer evaluation is this same call
// with a checkpoint pre-trained elsewhere.
EvalReport evaluate(model::Encoder& encoder, const data::SongDataset& dataset,
                    const data::TagVocabulary& vocab, const data::LabelMatrix& labels,
                    const ProbeConfig& cfg, double fraction, uint64_t base_seed);

} // namespace clmrkit::eval
