#include "clmrkit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "clmrkit/errors.hpp"

namespace clmrkit::eval {

// ---------------------------------------------------------------------------
// Ranking metrics
// ---------------------------------------------------------------------------

double roc_auc(std::span<const double> scores, std::span<const uint8_t> labels) {
    if (scores.size() != labels.size()) throw ShapeMismatch("roc_auc: size mismatch");
    const size_t n = scores.size();
    int64_t pos = 0;
    for (uint8_t l : labels) pos += l ? 1 : 0;
    int64_t neg = static_cast<int64_t>(n) - pos;
    if (pos == 0 || neg == 0) throw SingleClass("roc_auc needs both classes");

    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // rank sum of positives with average ranks over tie groups
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j)); // 1-based
        for (size_t k = i; k < j; ++k)
            if (labels[idx[k]]) pos_rank_sum += avg_rank;
        i = j;
    }
    double u = pos_rank_sum - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double pr_auc(std::span<const double> scores, std::span<const uint8_t> labels) {
    if (scores.size() != labels.size()) throw ShapeMismatch("pr_auc: size mismatch");
    const size_t n = scores.size();
    int64_t pos = 0;
    for (uint8_t l : labels) pos += l ? 1 : 0;
    if (pos == 0) throw NoPositives("pr_auc needs at least one positive");

    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    // step interpolation: at each distinct threshold, precision * recall gain
    double ap = 0.0;
    int64_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        int64_t group_tp = 0, group_fp = 0;
        while (j < n && scores[idx[j]] == scores[idx[i]]) {
            if (labels[idx[j]]) ++group_tp; else ++group_fp;
            ++j;
        }
        tp += group_tp;
        fp += group_fp;
        if (group_tp > 0) {
            double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            ap += precision * static_cast<double>(group_tp) / static_cast<double>(pos);
        }
        i = j;
    }
    return ap;
}

// ---------------------------------------------------------------------------
// Representations
// ---------------------------------------------------------------------------

RepMatrix extract_representations(model::Encoder& encoder, const data::SongDataset& dataset,
                                  std::span<const int> song_indices, int batch_size) {
    const int64_t crop = encoder.config().input_length;
    std::vector<data::FragmentRef> frags =
        data::fragment_index_for(dataset, song_indices, crop);

    RepMatrix reps;
    reps.dim = encoder.config().representation_dim;
    reps.n = static_cast<int64_t>(frags.size());
    reps.values.resize(static_cast<size_t>(reps.n * reps.dim));
    reps.frag_song.reserve(frags.size());
    for (const auto& f : frags) reps.frag_song.push_back(f.song);

    ad::NoGradGuard guard;
    for (int64_t start = 0; start < reps.n; start += batch_size) {
        int64_t b = std::min<int64_t>(batch_size, reps.n - start);
        ad::Tensor batch = ad::Tensor::zeros({b, 1, crop});
        for (int64_t r = 0; r < b; ++r) {
            std::vector<float> samples =
                data::fragment_samples(dataset, frags[static_cast<size_t>(start + r)], crop);
            std::copy(samples.begin(), samples.end(), batch.data().begin() + r * crop);
        }
        ad::Tensor h = encoder.forward(batch, false);
        std::copy(h.data().begin(), h.data().end(),
                  reps.values.begin() + static_cast<size_t>(start * reps.dim));
    }
    return reps;
}

std::vector<float> fragment_targets(const RepMatrix& reps, const data::LabelMatrix& labels) {
    std::vector<float> out(static_cast<size_t>(reps.n * labels.n_tags));
    for (int64_t i = 0; i < reps.n; ++i)
        for (int64_t t = 0; t < labels.n_tags; ++t)
            out[static_cast<size_t>(i * labels.n_tags + t)] =
                static_cast<float>(labels.at(reps.frag_song[static_cast<size_t>(i)], t));
    return out;
}

// ---------------------------------------------------------------------------
// Probe training
// ---------------------------------------------------------------------------

namespace {

// mean ROC-AUC over tags with both classes present; single-class tags are
// excluded from the early-stopping metric
double tag_mean_roc(const std::vector<double>& scores, const std::vector<float>& targets,
                    int64_t n, int64_t n_tags) {
    double acc = 0.0;
    int counted = 0;
    std::vector<double> s(static_cast<size_t>(n));
    std::vector<uint8_t> l(static_cast<size_t>(n));
    for (int64_t t = 0; t < n_tags; ++t) {
        for (int64_t i = 0; i < n; ++i) {
            s[static_cast<size_t>(i)] = scores[static_cast<size_t>(i * n_tags + t)];
            l[static_cast<size_t>(i)] =
                targets[static_cast<size_t>(i * n_tags + t)] > 0.5f ? 1 : 0;
        }
        try {
            acc += roc_auc(s, l);
            ++counted;
        } catch (const SingleClass&) {
        }
    }
    return counted > 0 ? acc / counted : 0.0;
}

ad::Tensor gather_rows(const RepMatrix& reps, std::span<const int64_t> rows) {
    ad::Tensor out = ad::Tensor::zeros({static_cast<int64_t>(rows.size()), reps.dim});
    for (size_t r = 0; r < rows.size(); ++r)
        std::copy(reps.row(rows[r]), reps.row(rows[r]) + reps.dim,
                  out.data().begin() + static_cast<int64_t>(r) * reps.dim);
    return out;
}

} // namespace

TrainedProbe train_probe(const RepMatrix& train_reps, const std::vector<float>& train_targets,
                         const RepMatrix& val_reps, const std::vector<float>& val_targets,
                         int n_tags, const ProbeConfig& cfg, uint64_t seed) {
    if (train_reps.n == 0) throw EmptySplit("probe training split is empty");
    if (val_reps.n == 0) throw EmptySplit("probe validation split is empty");

    Rng rng(Rng::mix({seed, 0x70726f62ULL}));
    int hidden = cfg.mlp_hidden > 0 ? cfg.mlp_hidden : static_cast<int>(train_reps.dim);
    model::ProbeHead head = model::ProbeHead::init(cfg.head, static_cast<int>(train_reps.dim),
                                                   hidden, n_tags, rng);

    ad::AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    adam_cfg.weight_decay = cfg.weight_decay;
    ad::Adam optimizer(head.parameters(), adam_cfg);

    double best_metric = -1.0;
    int epochs_since_best = 0;
    int epochs_ran = 0;
    std::vector<std::vector<float>> best_params;
    for (auto& p : head.parameters()) best_params.push_back(p.data());

    std::vector<int64_t> order(static_cast<size_t>(train_reps.n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i) {
            auto j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        for (int64_t start = 0; start < train_reps.n; start += cfg.batch_size) {
            int64_t b = std::min<int64_t>(cfg.batch_size, train_reps.n - start);
            ad::Tensor x = gather_rows(train_reps, {order.data() + start, static_cast<size_t>(b)});
            std::vector<float> y(static_cast<size_t>(b * n_tags));
            for (int64_t r = 0; r < b; ++r)
                for (int64_t t = 0; t < n_tags; ++t)
                    y[static_cast<size_t>(r * n_tags + t)] =
                        train_targets[static_cast<size_t>(order[static_cast<size_t>(start + r)] *
                                                          n_tags + t)];
            ad::Tensor loss = ad::bce_with_logits(head.forward(x), y);
            optimizer.zero_grad();
            ad::backward(loss);
            optimizer.step();
        }
        ++epochs_ran;

        std::vector<double> val_scores = probe_scores(head, val_reps);
        double metric = tag_mean_roc(val_scores, val_targets, val_reps.n, n_tags);
        if (metric > best_metric) {
            best_metric = metric;
            epochs_since_best = 0;
            best_params.clear();
            for (auto& p : head.parameters()) best_params.push_back(p.data());
        } else {
            ++epochs_since_best;
            if (epochs_since_best >= cfg.patience) break;
        }
    }

    auto params = head.parameters();
    for (size_t i = 0; i < params.size(); ++i) params[i].data() = best_params[i];
    return {std::move(head), best_metric, epochs_ran};
}

std::vector<double> probe_scores(model::ProbeHead& head, const RepMatrix& reps, int batch_size) {
    ad::NoGradGuard guard;
    std::vector<double> out;
    out.reserve(static_cast<size_t>(reps.n));
    for (int64_t start = 0; start < reps.n; start += batch_size) {
        int64_t b = std::min<int64_t>(batch_size, reps.n - start);
        std::vector<int64_t> rows(static_cast<size_t>(b));
        std::iota(rows.begin(), rows.end(), start);
        ad::Tensor logits = head.forward(gather_rows(reps, rows));
        for (float v : logits.data()) {
            double x = v;
            out.push_back(x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                   : std::exp(x) / (1.0 + std::exp(x)));
        }
    }
    return out;
}

std::vector<double> aggregate_clip(const std::vector<double>& fragment_scores,
                                   std::span<const int> frag_song,
                                   std::span<const int> song_indices, int n_tags) {
    std::vector<double> out(song_indices.size() * static_cast<size_t>(n_tags), 0.0);
    for (size_t c = 0; c < song_indices.size(); ++c) {
        int64_t count = 0;
        for (size_t f = 0; f < frag_song.size(); ++f) {
            if (frag_song[f] != song_indices[c]) continue;
            ++count;
            for (int t = 0; t < n_tags; ++t)
                out[c * static_cast<size_t>(n_tags) + static_cast<size_t>(t)] +=
                    fragment_scores[f * static_cast<size_t>(n_tags) + static_cast<size_t>(t)];
        }
        if (count == 0)
            throw EmptyClip("song index " + std::to_string(song_indices[c]) +
                            " has no fragments");
        for (int t = 0; t < n_tags; ++t)
            out[c * static_cast<size_t>(n_tags) + static_cast<size_t>(t)] /=
                static_cast<double>(count);
    }
    return out;
}

std::vector<int> label_subset(std::span<const int> songs, double fraction, uint64_t seed) {
    if (songs.empty()) throw EmptySubset("no songs to subset");
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("label_subset: fraction must be in (0, 1]");
    std::vector<int> perm(songs.begin(), songs.end());
    Rng rng(Rng::mix({seed, 0x73756273ULL}));
    for (size_t i = perm.size(); i > 1; --i) {
        auto j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(perm[i - 1], perm[j]);
    }
    auto take = static_cast<size_t>(
        std::max<int64_t>(1, std::llround(fraction * static_cast<double>(perm.size()))));
    perm.resize(std::min(take, perm.size()));
    return perm;
}

// ---------------------------------------------------------------------------
// Full evaluation protocol
// ---------------------------------------------------------------------------

namespace {

struct TagMetrics {
    std::vector<double> roc, pr;     // per evaluated tag
    std::vector<int> evaluated;      // tag indices with both classes
    double mean_roc = 0.0, mean_pr = 0.0;
};

TagMetrics per_tag_metrics(const std::vector<double>& scores, const std::vector<uint8_t>& labels,
                           int64_t n, int64_t n_tags) {
    TagMetrics m;
    std::vector<double> s(static_cast<size_t>(n));
    std::vector<uint8_t> l(static_cast<size_t>(n));
    for (int64_t t = 0; t < n_tags; ++t) {
        for (int64_t i = 0; i < n; ++i) {
            s[static_cast<size_t>(i)] = scores[static_cast<size_t>(i * n_tags + t)];
            l[static_cast<size_t>(i)] = labels[static_cast<size_t>(i * n_tags + t)];
        }
        try {
            double roc = roc_auc(s, l);
            double pr = pr_auc(s, l);
            m.roc.push_back(roc);
            m.pr.push_back(pr);
            m.evaluated.push_back(static_cast<int>(t));
        } catch (const SingleClass&) {
        } catch (const NoPositives&) {
        }
    }
    if (!m.roc.empty()) {
        m.mean_roc = std::accumulate(m.roc.begin(), m.roc.end(), 0.0) / m.roc.size();
        m.mean_pr = std::accumulate(m.pr.begin(), m.pr.end(), 0.0) / m.pr.size();
    }
    return m;
}

} // namespace

EvalReport evaluate(model::Encoder& encoder, const data::SongDataset& dataset,
                    const data::TagVocabulary& vocab, const data::LabelMatrix& labels,
                    const ProbeConfig& cfg, double fraction, uint64_t base_seed) {
    const auto n_tags = static_cast<int>(vocab.size());
    std::vector<int> train_songs = dataset.manifest.split_indices(data::Split::Train);
    std::vector<int> valid_songs = dataset.manifest.split_indices(data::Split::Valid);
    std::vector<int> test_songs = dataset.manifest.split_indices(data::Split::Test);
    if (train_songs.empty()) throw EmptySplit("train");
    if (valid_songs.empty()) throw EmptySplit("valid");
    if (test_songs.empty()) throw EmptySplit("test");

    if (fraction < 1.0) train_songs = label_subset(train_songs, fraction, base_seed);

    RepMatrix train_reps = extract_representations(encoder, dataset, train_songs);
    RepMatrix valid_reps = extract_representations(encoder, dataset, valid_songs);
    RepMatrix test_reps = extract_representations(encoder, dataset, test_songs);
    std::vector<float> train_targets = fragment_targets(train_reps, labels);
    std::vector<float> valid_targets = fragment_targets(valid_reps, labels);

    std::vector<uint8_t> test_labels(static_cast<size_t>(test_reps.n * n_tags));
    for (int64_t i = 0; i < test_reps.n; ++i)
        for (int t = 0; t < n_tags; ++t)
            test_labels[static_cast<size_t>(i * n_tags + t)] =
                labels.at(test_reps.frag_song[static_cast<size_t>(i)], t);
    std::vector<uint8_t> clip_labels(test_songs.size() * static_cast<size_t>(n_tags));
    for (size_t c = 0; c < test_songs.size(); ++c)
        for (int t = 0; t < n_tags; ++t)
            clip_labels[c * static_cast<size_t>(n_tags) + static_cast<size_t>(t)] =
                labels.at(test_songs[c], t);

    EvalReport report;
    report.runs = cfg.seeds;
    std::vector<double> roc_sums(static_cast<size_t>(n_tags), 0.0);
    std::vector<double> pr_sums(static_cast<size_t>(n_tags), 0.0);
    std::vector<int> tag_counts(static_cast<size_t>(n_tags), 0);

    for (int s = 0; s < cfg.seeds; ++s) {
        uint64_t probe_seed = Rng::mix({base_seed, 0x7365656400ULL, static_cast<uint64_t>(s)});
        TrainedProbe probe = train_probe(train_reps, train_targets, valid_reps, valid_targets,
                                         n_tags, cfg, probe_seed);
        std::vector<double> scores = probe_scores(probe.head, test_reps);
        TagMetrics frag = per_tag_metrics(scores, test_labels, test_reps.n, n_tags);
        std::vector<double> clip_scores =
            aggregate_clip(scores, test_reps.frag_song, test_songs, n_tags);
        TagMetrics clip = per_tag_metrics(clip_scores, clip_labels,
                                          static_cast<int64_t>(test_songs.size()), n_tags);
        report.per_seed_tag_roc.push_back(frag.mean_roc);
        report.tag_roc_auc += frag.mean_roc;
        report.tag_pr_auc += frag.mean_pr;
        report.clip_roc_auc += clip.mean_roc;
        report.clip_pr_auc += clip.mean_pr;
        for (size_t k = 0; k < frag.evaluated.size(); ++k) {
            roc_sums[static_cast<size_t>(frag.evaluated[k])] += frag.roc[k];
            pr_sums[static_cast<size_t>(frag.evaluated[k])] += frag.pr[k];
            tag_counts[static_cast<size_t>(frag.evaluated[k])]++;
        }
    }

    report.tag_roc_auc /= cfg.seeds;
    report.tag_pr_auc /= cfg.seeds;
    report.clip_roc_auc /= cfg.seeds;
    report.clip_pr_auc /= cfg.seeds;
    for (int t = 0; t < n_tags; ++t) {
        if (tag_counts[static_cast<size_t>(t)] > 0) {
            report.tag_names.push_back(vocab.tags[static_cast<size_t>(t)]);
            report.per_tag_roc.push_back(roc_sums[static_cast<size_t>(t)] /
                                         tag_counts[static_cast<size_t>(t)]);
            report.per_tag_pr.push_back(pr_sums[static_cast<size_t>(t)] /
                                        tag_counts[static_cast<size_t>(t)]);
        } else {
            report.skipped_tags.push_back(vocab.tags[static_cast<size_t>(t)]);
        }
    }
    return report;
}

nlohmann::json report_to_json(const EvalReport& report, const nlohmann::json& config_echo,
                              const std::string& checkpoint_hash) {
    nlohmann::json per_tag = nlohmann::json::object();
    for (size_t i = 0; i < report.tag_names.size(); ++i)
        per_tag[report.tag_names[i]] = {{"roc_auc", report.per_tag_roc[i]},
                                        {"pr_auc", report.per_tag_pr[i]}};
    return nlohmann::json{{"runs", report.runs},
                          {"tag_roc_auc", report.tag_roc_auc},
                          {"tag_pr_auc", report.tag_pr_auc},
                          {"clip_roc_auc", report.clip_roc_auc},
                          {"clip_pr_auc", report.clip_pr_auc},
                          {"per_tag", per_tag},
                          {"skipped_tags", report.skipped_tags},
                          {"config", config_echo.is_null() ? nlohmann::json::object() : config_echo},
                          {"checkpoint_hash", checkpoint_hash}};
}

} // namespace clmrkit::eval
