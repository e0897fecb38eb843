#include "clmrkit/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "clmrkit/errors.hpp"
#include "clmrkit/parallel.hpp"

namespace clmrkit::contrastive {

double cosine_similarity(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size()) throw ShapeMismatch("cosine_similarity: length mismatch");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
        dot += static_cast<double>(u[i]) * v[i];
        nu += static_cast<double>(u[i]) * u[i];
        nv += static_cast<double>(v[i]) * v[i];
    }
    if (nu <= 0.0 || nv <= 0.0) throw ZeroVector("cosine_similarity on a zero vector");
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

std::vector<int> adjacent_pairs(int n_pairs) {
    std::vector<int> partner(static_cast<size_t>(2 * n_pairs));
    for (int m = 0; m < n_pairs; ++m) {
        partner[static_cast<size_t>(2 * m)] = 2 * m + 1;
        partner[static_cast<size_t>(2 * m + 1)] = 2 * m;
    }
    return partner;
}

ad::Tensor nt_xent(const ad::Tensor& z, const std::vector<int>& partner, double tau) {
    if (z.ndim() != 2) throw ShapeMismatch("nt_xent: expected [2N, d]");
    const int64_t rows = z.dim(0), dim = z.dim(1);
    if (rows < 4) throw BatchTooSmall("2N = " + std::to_string(rows) + " < 4");
    if (static_cast<int64_t>(partner.size()) != rows)
        throw ShapeMismatch("nt_xent: partner index size mismatch");
    if (tau <= 0.0) throw std::invalid_argument("nt_xent: tau must be positive");
    for (int64_t i = 0; i < rows; ++i) {
        int p = partner[static_cast<size_t>(i)];
        if (p < 0 || p >= rows || p == i)
            throw ShapeMismatch("nt_xent: invalid partner mapping");
    }

    const auto n = static_cast<size_t>(rows);
    const auto& zd = z.data();

    // Everything below runs in float64: row normalisation, the similarity
    // matrix and the log-sum-exp, so the scalar result carries a single
    // float32 rounding.
    auto y = std::make_shared<std::vector<double>>(n * static_cast<size_t>(dim));
    auto norms = std::make_shared<std::vector<double>>(n);
    for (size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        const float* row = zd.data() + static_cast<int64_t>(i) * dim;
        for (int64_t j = 0; j < dim; ++j) acc += static_cast<double>(row[j]) * row[j];
        double norm = std::sqrt(acc);
        if (norm <= 0.0) throw ZeroVector("nt_xent: embedding row " + std::to_string(i));
        (*norms)[i] = norm;
        for (int64_t j = 0; j < dim; ++j)
            (*y)[i * static_cast<size_t>(dim) + static_cast<size_t>(j)] = row[j] / norm;
    }

    std::vector<double> sims(n * n, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t k = i + 1; k < n; ++k) {
            double acc = 0.0;
            for (int64_t j = 0; j < dim; ++j)
                acc += (*y)[i * static_cast<size_t>(dim) + static_cast<size_t>(j)] *
                       (*y)[k * static_cast<size_t>(dim) + static_cast<size_t>(j)];
            sims[i * n + k] = acc;
            sims[k * n + i] = acc;
        }

    // softmax over non-self entries per anchor, kept for the backward pass
    auto weights = std::make_shared<std::vector<double>>(n * n, 0.0);
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double max_logit = -1e300;
        for (size_t k = 0; k < n; ++k)
            if (k != i) max_logit = std::max(max_logit, sims[i * n + k] / tau);
        double denom = 0.0;
        for (size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            double e = std::exp(sims[i * n + k] / tau - max_logit);
            (*weights)[i * n + k] = e;
            denom += e;
        }
        for (size_t k = 0; k < n; ++k) (*weights)[i * n + k] /= denom;
        double lse = max_logit + std::log(denom);
        loss += lse - sims[i * n + partner[i]] / tau;
    }
    loss /= static_cast<double>(n);

    ad::NodePtr zn = z.node();
    auto pair_copy = std::make_shared<std::vector<int>>(partner);
    return ad::make_op(
        {1}, {static_cast<float>(loss)}, {z},
        [zn, y, norms, weights, pair_copy, rows, dim, tau](ad::Node& self) {
            const auto n = static_cast<size_t>(rows);
            const double upstream = self.grad[0];
            const double scale = upstream / (static_cast<double>(rows) * tau);
            // dL/dS = (M + M^T)/ (2N * tau) with M = softmax - onehot(partner)
            std::vector<double> m(n * n, 0.0);
            for (size_t i = 0; i < n; ++i)
                for (size_t k = 0; k < n; ++k) {
                    if (k == i) continue;
                    double v = (*weights)[i * n + k];
                    if (k == static_cast<size_t>((*pair_copy)[i])) v -= 1.0;
                    m[i * n + k] = v;
                }
            zn->ensure_grad();
            for (size_t i = 0; i < n; ++i) {
                std::vector<double> gy(static_cast<size_t>(dim), 0.0);
                for (size_t k = 0; k < n; ++k) {
                    double coeff = (m[i * n + k] + m[k * n + i]) * scale;
                    if (coeff == 0.0) continue;
                    for (int64_t j = 0; j < dim; ++j)
                        gy[static_cast<size_t>(j)] +=
                            coeff * (*y)[k * static_cast<size_t>(dim) + static_cast<size_t>(j)];
                }
                // through the row normalisation: dz = (gy - y (gy . y)) / |z|
                double dot = 0.0;
                for (int64_t j = 0; j < dim; ++j)
                    dot += gy[static_cast<size_t>(j)] *
                           (*y)[i * static_cast<size_t>(dim) + static_cast<size_t>(j)];
                float* zg = zn->grad.data() + static_cast<int64_t>(i) * dim;
                for (int64_t j = 0; j < dim; ++j) {
                    double d = (gy[static_cast<size_t>(j)] -
                                (*y)[i * static_cast<size_t>(dim) + static_cast<size_t>(j)] * dot) /
                               (*norms)[i];
                    zg[j] += static_cast<float>(d);
                }
            }
        });
}

std::vector<augment::ExamplePair> compose_batch(const data::SongDataset& dataset, int n,
                                                const augment::TransformChain& chain, Rng& rng,
                                                bool asymmetric) {
    const int total = static_cast<int>(dataset.songs.size());
    if (total < n)
        throw InsufficientSongs(std::to_string(total) + " songs for a batch of " +
                                std::to_string(n));
    // partial Fisher-Yates: n distinct songs, uniform without replacement
    std::vector<int> pool(static_cast<size_t>(total));
    std::iota(pool.begin(), pool.end(), 0);
    std::vector<augment::ExamplePair> batch;
    batch.reserve(static_cast<size_t>(n));
    for (int m = 0; m < n; ++m) {
        auto pick = static_cast<size_t>(rng.uniform_int(m, total - 1));
        std::swap(pool[static_cast<size_t>(m)], pool[pick]);
        batch.push_back(augment::make_pair(dataset.songs[static_cast<size_t>(pool[static_cast<size_t>(m)])],
                                           chain, rng, asymmetric));
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Pre-training loop
// ---------------------------------------------------------------------------

namespace {

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
    for (size_t i = idx.size(); i > 1; --i) {
        auto j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(idx[i - 1], idx[j]);
    }
}

double trailing_mean(const std::vector<StepRecord>& records, size_t window) {
    if (records.empty()) return 0.0;
    size_t n = std::min(window, records.size());
    double acc = 0.0;
    for (size_t i = records.size() - n; i < records.size(); ++i) acc += records[i].loss;
    return acc / static_cast<double>(n);
}

} // namespace

PretrainResult pretrain(const data::SongDataset& dataset, model::Encoder& encoder,
                        model::Projector& projector, const TrainConfig& cfg,
                        const augment::TransformChain& chain, const std::string& out_dir,
                        const nlohmann::json& config_echo) {
    if (cfg.batch_size < 2) throw BatchTooSmall("batch_size must be >= 2");
    const int n_songs = static_cast<int>(dataset.songs.size());
    if (n_songs < cfg.batch_size)
        throw InsufficientSongs(std::to_string(n_songs) + " songs for batch size " +
                                std::to_string(cfg.batch_size));
    const int batches_per_epoch = n_songs / cfg.batch_size;
    const int64_t crop = chain.crop_length;

    std::filesystem::create_directories(out_dir);
    auto path_of = [&](const std::string& name) {
        return (std::filesystem::path(out_dir) / name).string();
    };

    std::vector<ad::Tensor> params = encoder.parameters();
    for (auto& p : projector.parameters()) params.push_back(p);
    ad::AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    adam_cfg.beta1 = cfg.beta1;
    adam_cfg.beta2 = cfg.beta2;
    ad::Adam optimizer(params, adam_cfg);

    const std::vector<int> partner = adjacent_pairs(cfg.batch_size);
    PretrainResult result;
    double best_trailing = 1e300;
    int64_t step = 0;

    auto save_meta = [&](int epoch) {
        nlohmann::json meta;
        meta["config"] = config_echo.is_null() ? nlohmann::json::object() : config_echo;
        meta["seed"] = cfg.seed;
        meta["epoch"] = epoch;
        meta["step"] = step;
        return meta;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order(static_cast<size_t>(n_songs));
        std::iota(order.begin(), order.end(), 0);
        Rng epoch_rng(Rng::mix({cfg.seed, 0x65706f63ULL, static_cast<uint64_t>(epoch)}));
        shuffle_indices(order, epoch_rng);

        for (int b = 0; b < batches_per_epoch; ++b) {
            ad::Tensor batch =
                ad::Tensor::zeros({2LL * cfg.batch_size, 1, crop});
            float* data = batch.data().data();
            // per-pair seeds derive from (seed, epoch, batch, slot): identical
            // results for any worker count
            parallel_for(cfg.batch_size, [&](int64_t lo, int64_t hi) {
                for (int64_t m = lo; m < hi; ++m) {
                    int song_idx = order[static_cast<size_t>(b * cfg.batch_size + m)];
                    Rng pair_rng(Rng::mix({cfg.seed, 0x70616972ULL, static_cast<uint64_t>(epoch),
                                           static_cast<uint64_t>(b), static_cast<uint64_t>(m)}));
                    augment::ExamplePair pair = augment::make_pair(
                        dataset.songs[static_cast<size_t>(song_idx)], chain, pair_rng,
                        cfg.asymmetric);
                    std::copy(pair.x_i.samples.begin(), pair.x_i.samples.end(),
                              data + (2 * m) * crop);
                    std::copy(pair.x_j.samples.begin(), pair.x_j.samples.end(),
                              data + (2 * m + 1) * crop);
                }
            });

            ad::Tensor h = encoder.forward(batch, true);
            ad::Tensor z = projector.forward(h);
            ad::Tensor loss = nt_xent(z, partner, cfg.temperature);
            optimizer.zero_grad();
            ad::backward(loss);
            optimizer.step();

            ++step;
            result.losses.push_back({step, epoch, static_cast<double>(loss.item())});
        }

        if (cfg.checkpoint_interval > 0 && (epoch + 1) % cfg.checkpoint_interval == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "ckpt_epoch%05d.bin", epoch + 1);
            model::save_checkpoint(path_of(name), encoder, &projector, save_meta(epoch + 1));
            double trailing = trailing_mean(result.losses, 50);
            if (trailing < best_trailing) {
                best_trailing = trailing;
                model::save_checkpoint(path_of("ckpt_best.bin"), encoder, &projector,
                                       save_meta(epoch + 1));
                result.best_checkpoint = path_of("ckpt_best.bin");
            }
        }
    }

    model::save_checkpoint(path_of("ckpt_last.bin"), encoder, &projector, save_meta(cfg.epochs));
    result.last_checkpoint = path_of("ckpt_last.bin");
    if (result.best_checkpoint.empty()) {
        double trailing = trailing_mean(result.losses, 50);
        if (trailing < best_trailing) best_trailing = trailing;
        model::save_checkpoint(path_of("ckpt_best.bin"), encoder, &projector,
                               save_meta(cfg.epochs));
        result.best_checkpoint = path_of("ckpt_best.bin");
    }

    // loss curve: step, epoch, loss with the resolved config in the header
    std::ofstream csv(path_of("loss.csv"));
    csv << "# config = "
        << (config_echo.is_null() ? nlohmann::json::object() : config_echo).dump() << "\n";
    csv << "step,epoch,loss\n";
    char line[96];
    for (const auto& r : result.losses) {
        std::snprintf(line, sizeof(line), "%lld,%d,%.9g\n", static_cast<long long>(r.step),
                      r.epoch, r.loss);
        csv << line;
    }
    csv.close();
    result.loss_csv = path_of("loss.csv");
    return result;
}

} // namespace clmrkit::contrastive
