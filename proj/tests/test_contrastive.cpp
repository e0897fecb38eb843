#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "clmrkit/contrastive.hpp"
#include "clmrkit/errors.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace clmrkit;
using namespace clmrkit::contrastive;

namespace {

using oracles::ntxent_bruteforce;

ad::Tensor random_embeddings(int rows, int dim, Rng& rng) {
    ad::Tensor z = ad::Tensor::zeros({rows, dim}, true);
    for (float& v : z.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return z;
}

data::SongDataset tiny_dataset(int n_songs, int64_t length, int sample_rate = 22050) {
    data::SongDataset ds;
    for (int i = 0; i < n_songs; ++i) {
        audio::AudioBuffer song =
            testutil::sine(200.0 + 60.0 * i, sample_rate, length, 0.4, 0.3 * i);
        song.source_id = "song-" + std::to_string(i);
        data::Song meta;
        meta.source_id = song.source_id;
        meta.split = data::Split::Train;
        ds.manifest.songs.push_back(meta);
        ds.songs.push_back(std::move(song));
    }
    return ds;
}

} // namespace

TEST_CASE("cosine similarity basics") {
    std::vector<float> u = {1, 0}, v = {0, 1}, w = {3, 4};
    CHECK(cosine_similarity(w, w) == doctest::Approx(1.0));
    std::vector<float> neg = {-3, -4};
    CHECK(cosine_similarity(w, neg) == doctest::Approx(-1.0));
    CHECK(cosine_similarity(u, v) == doctest::Approx(0.0));
    std::vector<float> zero = {0, 0};
    CHECK_THROWS_AS(cosine_similarity(u, zero), ZeroVector);
}

TEST_CASE("nt_xent: identical embeddings give log(2N-1)") {
    for (int n_pairs : {2, 4, 8}) {
        int rows = 2 * n_pairs;
        ad::Tensor z = ad::Tensor::zeros({rows, 4});
        for (int i = 0; i < rows; ++i) {
            z.data()[static_cast<size_t>(i * 4)] = 0.3f;
            z.data()[static_cast<size_t>(i * 4 + 1)] = -0.7f;
        }
        ad::Tensor loss = nt_xent(z, adjacent_pairs(n_pairs), 0.5);
        CHECK(std::fabs(loss.item() - std::log(2.0 * n_pairs - 1.0)) < 1e-6);
    }
}

TEST_CASE("nt_xent matches the brute-force oracle on random instances") {
    Rng rng(13);
    const double taus[3] = {0.1, 0.5, 1.0};
    for (int trial = 0; trial < 100; ++trial) {
        int n_pairs = static_cast<int>(rng.uniform_int(2, 8));
        int dim = static_cast<int>(rng.uniform_int(2, 16));
        double tau = taus[rng.uniform_int(0, 2)];
        ad::Tensor z = random_embeddings(2 * n_pairs, dim, rng);
        auto partner = adjacent_pairs(n_pairs);
        double got = nt_xent(z, partner, tau).item();
        double want = ntxent_bruteforce(z.data(), 2 * n_pairs, dim, partner, tau);
        CHECK(std::fabs(got - want) / std::fabs(want) < 1e-6);
    }
}

TEST_CASE("nt_xent worked example: two orthogonal pairs") {
    // z1 = z2 = e1, z3 = z4 = e2 at tau = 0.5
    ad::Tensor z = ad::Tensor::from_data({4, 2}, {1, 0, 1, 0, 0, 1, 0, 1});
    auto partner = adjacent_pairs(2);
    double got = nt_xent(z, partner, 0.5).item();
    double want = ntxent_bruteforce(z.data(), 4, 2, partner, 0.5);
    CHECK(got == doctest::Approx(want).epsilon(1e-6));
    // pos sim 1, two negatives at 0: l = -log(e^2 / (e^2 + 2 e^0))
    double manual = -std::log(std::exp(2.0) / (std::exp(2.0) + 2.0));
    CHECK(got == doctest::Approx(manual).epsilon(1e-6));
}

TEST_CASE("nt_xent gradient matches finite differences") {
    Rng rng(14);
    for (int trial = 0; trial < 5; ++trial) {
        int n_pairs = static_cast<int>(rng.uniform_int(2, 4));
        int dim = static_cast<int>(rng.uniform_int(3, 8));
        ad::Tensor z = random_embeddings(2 * n_pairs, dim, rng);
        auto partner = adjacent_pairs(n_pairs);
        auto forward = [&]() { return nt_xent(z, partner, 0.5); };
        CHECK(testutil::max_gradient_error(forward, {z}) < 1e-3);
    }
}

TEST_CASE("nt_xent is permutation-equivariant") {
    Rng rng(15);
    ad::Tensor z = random_embeddings(8, 6, rng);
    auto partner = adjacent_pairs(4);
    double base = nt_xent(z, partner, 0.5).item();

    std::vector<int> perm = {5, 2, 7, 0, 3, 6, 1, 4};
    ad::Tensor zp = ad::Tensor::zeros({8, 6});
    std::vector<int> partner_p(8);
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 6; ++j)
            zp.data()[static_cast<size_t>(perm[static_cast<size_t>(i)] * 6 + j)] =
                z.data()[static_cast<size_t>(i * 6 + j)];
        partner_p[static_cast<size_t>(perm[static_cast<size_t>(i)])] =
            perm[static_cast<size_t>(partner[static_cast<size_t>(i)])];
    }
    double permuted = nt_xent(zp, partner_p, 0.5).item();
    CHECK(std::fabs(base - permuted) < 1e-6);
}

TEST_CASE("nt_xent is invariant to a global rotation") {
    Rng rng(16);
    const int dim = 6;
    ad::Tensor z = random_embeddings(8, dim, rng);
    auto partner = adjacent_pairs(4);
    double base = nt_xent(z, partner, 0.5).item();

    // random orthogonal matrix via Gram-Schmidt
    std::vector<double> q(dim * dim);
    for (int r = 0; r < dim; ++r) {
        std::vector<double> v(dim);
        for (auto& x : v) x = rng.normal();
        for (int p = 0; p < r; ++p) {
            double dot = 0;
            for (int j = 0; j < dim; ++j) dot += v[static_cast<size_t>(j)] * q[static_cast<size_t>(p * dim + j)];
            for (int j = 0; j < dim; ++j) v[static_cast<size_t>(j)] -= dot * q[static_cast<size_t>(p * dim + j)];
        }
        double norm = 0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (int j = 0; j < dim; ++j) q[static_cast<size_t>(r * dim + j)] = v[static_cast<size_t>(j)] / norm;
    }
    ad::Tensor zr = ad::Tensor::zeros({8, dim});
    for (int i = 0; i < 8; ++i)
        for (int r = 0; r < dim; ++r) {
            double acc = 0;
            for (int j = 0; j < dim; ++j)
                acc += q[static_cast<size_t>(r * dim + j)] * z.data()[static_cast<size_t>(i * dim + j)];
            zr.data()[static_cast<size_t>(i * dim + r)] = static_cast<float>(acc);
        }
    double rotated = nt_xent(zr, partner, 0.5).item();
    CHECK(std::fabs(base - rotated) < 1e-5);
}

TEST_CASE("nt_xent bounds") {
    Rng rng(17);
    // random high-dimensional embeddings sit near log(2N-1)
    ad::Tensor z = ad::Tensor::zeros({16, 128}, false);
    for (float& v : z.data()) v = static_cast<float>(rng.normal());
    double loss = nt_xent(z, adjacent_pairs(8), 0.5).item();
    double expected = std::log(15.0);
    CHECK(std::fabs(loss - expected) / expected < 0.10);

    // upper bound for any embeddings, including adversarial opposite pairs
    for (double tau : {0.1, 0.5, 1.0}) {
        ad::Tensor adv = ad::Tensor::zeros({6, 2});
        for (int m = 0; m < 3; ++m) {
            adv.data()[static_cast<size_t>((2 * m) * 2)] = 1.0f;
            adv.data()[static_cast<size_t>((2 * m + 1) * 2)] = -1.0f;
        }
        double l = nt_xent(adv, adjacent_pairs(3), tau).item();
        CHECK(l <= std::log(5.0) + 2.0 / tau);
        ad::Tensor r = random_embeddings(6, 4, rng);
        CHECK(nt_xent(r, adjacent_pairs(3), tau).item() <= std::log(5.0) + 2.0 / tau);
    }
}

TEST_CASE("nt_xent error contracts") {
    ad::Tensor tiny = ad::Tensor::from_data({2, 2}, {1, 0, 0, 1});
    CHECK_THROWS_AS(nt_xent(tiny, {1, 0}, 0.5), BatchTooSmall);

    ad::Tensor with_zero = ad::Tensor::from_data({4, 2}, {1, 0, 0, 0, 0, 1, 1, 1});
    CHECK_THROWS_AS(nt_xent(with_zero, adjacent_pairs(2), 0.5), ZeroVector);
}

TEST_CASE("compose_batch: distinct songs, uniform coverage") {
    data::SongDataset ds = tiny_dataset(12, 64);
    augment::TransformChain chain = augment::TransformChain::defaults_for_rate(22050);
    chain.crop_length = 64;
    chain.polarity.prob = chain.noise.prob = chain.gain.prob = chain.filter.prob = 0.0;
    chain.delay.prob = chain.pitch.prob = chain.reverb.prob = 0.0;

    Rng rng(18);
    auto batch = compose_batch(ds, 4, chain, rng);
    REQUIRE(batch.size() == 4);
    for (size_t a = 0; a < batch.size(); ++a)
        for (size_t b = a + 1; b < batch.size(); ++b)
            CHECK(batch[a].source_id != batch[b].source_id);

    // N = dataset size: a permutation of all songs
    auto all = compose_batch(ds, 12, chain, rng);
    std::vector<int> seen(12, 0);
    for (auto& pair : all)
        seen[static_cast<size_t>(std::stoi(pair.source_id.substr(5)))]++;
    for (int c : seen) CHECK(c == 1);

    CHECK_THROWS_AS(compose_batch(ds, 13, chain, rng), InsufficientSongs);

    // chi-square uniformity of song frequency over many batches
    const int kBatches = 3000;
    std::vector<int> counts(12, 0);
    for (int b = 0; b < kBatches; ++b)
        for (auto& pair : compose_batch(ds, 4, chain, rng))
            counts[static_cast<size_t>(std::stoi(pair.source_id.substr(5)))]++;
    double expected = kBatches * 4.0 / 12.0;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < testutil::chi2_critical_99(11));
}

TEST_CASE("pretrain: loss curve, checkpoints, determinism, batch floor") {
    data::SongDataset ds = tiny_dataset(8, 2000);
    augment::TransformChain chain = augment::TransformChain::defaults_for_rate(22050);
    chain.crop_length = 243;

    model::EncoderConfig cfg;
    cfg.input_length = 243;
    cfg.channels = {8, 8, 16, 16, 32};
    cfg.representation_dim = 32;
    cfg.projection_hidden = 32;
    cfg.projection_dim = 16;

    TrainConfig tc;
    tc.epochs = 4;
    tc.batch_size = 4;
    tc.checkpoint_interval = 2;
    tc.seed = 7;

    auto run = [&](const std::string& dir) {
        Rng rng(tc.seed);
        model::Encoder enc = model::Encoder::init(cfg, rng);
        model::Projector proj = model::Projector::init(cfg.representation_dim,
                                                       cfg.projection_hidden,
                                                       cfg.projection_dim, rng);
        return pretrain(ds, enc, proj, tc, chain, dir, nlohmann::json{{"run", "unit"}});
    };

    testutil::TempDir tmp("pretrain");
    PretrainResult a = run(tmp.str("a"));
    CHECK(a.losses.size() == 8); // 4 epochs x (8 songs / batch 4)
    for (auto& r : a.losses) CHECK(std::isfinite(r.loss));
    CHECK(std::filesystem::exists(a.loss_csv));
    CHECK(std::filesystem::exists(a.last_checkpoint));
    CHECK(std::filesystem::exists(a.best_checkpoint));
    CHECK(std::filesystem::exists(tmp.str("a/ckpt_epoch00002.bin")));
    CHECK(std::filesystem::exists(tmp.str("a/ckpt_epoch00004.bin")));

    PretrainResult b = run(tmp.str("b"));
    REQUIRE(b.losses.size() == a.losses.size());
    for (size_t i = 0; i < a.losses.size(); ++i)
        CHECK(a.losses[i].loss == b.losses[i].loss);

    // minimum viable batch
    TrainConfig tiny = tc;
    tiny.epochs = 1;
    tiny.batch_size = 2;
    Rng rng2(1);
    model::Encoder enc2 = model::Encoder::init(cfg, rng2);
    model::Projector proj2 = model::Projector::init(32, 32, 16, rng2);
    PretrainResult c = pretrain(ds, enc2, proj2, tiny, chain, tmp.str("c"), {});
    CHECK(c.losses.size() == 4);

    TrainConfig bad = tc;
    bad.batch_size = 9;
    CHECK_THROWS_AS(pretrain(ds, enc2, proj2, bad, chain, tmp.str("d"), {}),
                    InsufficientSongs);
}
