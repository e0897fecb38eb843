// clmrkit: contrastive learning of musical representations on raw waveforms.
// Subcommands: synth, augment, pretrain, probe, evaluate, filters.
//
// Option precedence: config file < CLMRKIT_* environment variable < flag.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "clmrkit/augment.hpp"
#include "clmrkit/contrastive.hpp"
#include "clmrkit/datasets.hpp"
#include "clmrkit/errors.hpp"
#include "clmrkit/eval.hpp"
#include "clmrkit/fft.hpp"
#include "clmrkit/model.hpp"
#include "clmrkit/parallel.hpp"
#include "clmrkit/serialize.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace clmrkit;

void log_line(const std::string& msg) { std::fprintf(stderr, "[clmrkit] %s\n", msg.c_str()); }

// Registered (flag, env var) pairs per subcommand. CLI11 applies config files
// before environment variables, which would invert the documented precedence
// (file < env < flag); instead, env values are injected as take-last args
// right after the subcommand token, so explicit flags still win.
struct EnvSpec {
    std::string flag;
    std::string env;
    bool is_flag;
};
std::map<std::string, std::vector<EnvSpec>> g_env_specs;

std::string env_name(std::string flag) {
    std::string out = "CLMRKIT_";
    for (char c : flag) {
        if (c == '-') {
            if (!out.empty() && out.back() == '_') continue;
            out += '_';
        } else {
            out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        }
    }
    return out;
}

template <typename T>
CLI::Option* opt(CLI::App* cmd, const std::string& flag, T& var, const std::string& desc) {
    CLI::Option* o = cmd->add_option(flag, var, desc);
    std::string env = env_name(flag.substr(2));
    o->envname(env);
    o->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    g_env_specs[cmd->get_name()].push_back({flag, env, false});
    if constexpr (std::is_arithmetic_v<T>) o->capture_default_str();
    return o;
}

CLI::Option* flag_opt(CLI::App* cmd, const std::string& flag, bool& var, const std::string& desc) {
    CLI::Option* o = cmd->add_flag(flag, var, desc);
    std::string env = env_name(flag.substr(2));
    o->envname(env);
    g_env_specs[cmd->get_name()].push_back({flag, env, true});
    return o;
}

// ---------------------------------------------------------------------------
// Shared option groups
// ---------------------------------------------------------------------------

struct CommonOpts {
    uint64_t seed = 42;
    int workers = 0;
    bool deterministic = false;
    std::string out = "out";
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    opt(cmd, "--seed", o.seed, "master random seed");
    opt(cmd, "--workers", o.workers, "worker threads (0 = all cores)");
    flag_opt(cmd, "--deterministic", o.deterministic, "serial reductions, single worker");
    opt(cmd, "--out", o.out, "output directory");
}

void apply_common(const CommonOpts& o) {
    set_worker_count(o.deterministic ? 1 : o.workers);
    fs::create_directories(o.out);
}

json common_json(const CommonOpts& o) {
    // the output directory is where the artifact lives, not part of its
    // provenance; embedding it would break byte-identity across runs
    return json{{"seed", o.seed}, {"workers", o.workers}, {"deterministic", o.deterministic}};
}

struct ChainOpts {
    double polarity_prob = 0.8;
    double noise_prob = 0.8;
    double noise_snr_db = 80.0;
    double gain_prob = 0.8;
    double gain_min_db = -6.0;
    double gain_max_db = 0.0;
    double filter_prob = 0.8;
    double filter_lowpass_min_hz = 2200.0;
    double filter_lowpass_max_hz = 4000.0;
    double filter_highpass_min_hz = 200.0;
    double filter_highpass_max_hz = 1200.0;
    double delay_prob = 0.4;
    double pitch_prob = 0.4;
    int pitch_min_semitones = -5;
    int pitch_max_semitones = 5;
    double reverb_prob = 0.4;
};

void add_chain(CLI::App* cmd, ChainOpts& o) {
    auto prob = CLI::Range(0.0, 1.0);
    opt(cmd, "--polarity-prob", o.polarity_prob, "polarity inversion probability")->check(prob);
    opt(cmd, "--noise-prob", o.noise_prob, "additive noise probability")->check(prob);
    opt(cmd, "--noise-snr-db", o.noise_snr_db, "noise SNR in dB")->check(CLI::PositiveNumber);
    opt(cmd, "--gain-prob", o.gain_prob, "gain reduction probability")->check(prob);
    opt(cmd, "--gain-min-db", o.gain_min_db, "lowest gain in dB")->check(CLI::Range(-6.0, 0.0));
    opt(cmd, "--gain-max-db", o.gain_max_db, "highest gain in dB")->check(CLI::Range(-6.0, 0.0));
    opt(cmd, "--filter-prob", o.filter_prob, "frequency filter probability")->check(prob);
    opt(cmd, "--filter-lowpass-min-hz", o.filter_lowpass_min_hz, "low-pass cutoff range start");
    opt(cmd, "--filter-lowpass-max-hz", o.filter_lowpass_max_hz, "low-pass cutoff range end");
    opt(cmd, "--filter-highpass-min-hz", o.filter_highpass_min_hz, "high-pass cutoff range start");
    opt(cmd, "--filter-highpass-max-hz", o.filter_highpass_max_hz, "high-pass cutoff range end");
    opt(cmd, "--delay-prob", o.delay_prob, "delay probability")->check(prob);
    opt(cmd, "--pitch-prob", o.pitch_prob, "pitch shift probability")->check(prob);
    opt(cmd, "--pitch-min-semitones", o.pitch_min_semitones, "lowest pitch interval")
        ->check(CLI::Range(-5, 5));
    opt(cmd, "--pitch-max-semitones", o.pitch_max_semitones, "highest pitch interval")
        ->check(CLI::Range(-5, 5));
    opt(cmd, "--reverb-prob", o.reverb_prob, "reverb probability")->check(prob);
}

augment::TransformChain make_chain(const ChainOpts& o, int64_t crop_length) {
    augment::TransformChain chain;
    chain.crop_length = crop_length;
    chain.polarity.prob = o.polarity_prob;
    chain.noise.prob = o.noise_prob;
    chain.noise.snr_db = o.noise_snr_db;
    chain.gain.prob = o.gain_prob;
    chain.gain.min_db = o.gain_min_db;
    chain.gain.max_db = o.gain_max_db;
    chain.filter.prob = o.filter_prob;
    chain.filter.lowpass_min_hz = o.filter_lowpass_min_hz;
    chain.filter.lowpass_max_hz = o.filter_lowpass_max_hz;
    chain.filter.highpass_min_hz = o.filter_highpass_min_hz;
    chain.filter.highpass_max_hz = o.filter_highpass_max_hz;
    chain.delay.prob = o.delay_prob;
    chain.pitch.prob = o.pitch_prob;
    chain.pitch.min_semitones = o.pitch_min_semitones;
    chain.pitch.max_semitones = o.pitch_max_semitones;
    chain.reverb.prob = o.reverb_prob;
    return chain;
}

json chain_json(const augment::TransformChain& c) {
    return json{{"crop_length", c.crop_length},
                {"polarity_prob", c.polarity.prob},
                {"noise_prob", c.noise.prob},
                {"noise_snr_db", c.noise.snr_db},
                {"gain_prob", c.gain.prob},
                {"gain_min_db", c.gain.min_db},
                {"gain_max_db", c.gain.max_db},
                {"filter_prob", c.filter.prob},
                {"filter_lowpass_min_hz", c.filter.lowpass_min_hz},
                {"filter_lowpass_max_hz", c.filter.lowpass_max_hz},
                {"filter_highpass_min_hz", c.filter.highpass_min_hz},
                {"filter_highpass_max_hz", c.filter.highpass_max_hz},
                {"delay_prob", c.delay.prob},
                {"pitch_prob", c.pitch.prob},
                {"pitch_min_semitones", c.pitch.min_semitones},
                {"pitch_max_semitones", c.pitch.max_semitones},
                {"reverb_prob", c.reverb.prob}};
}

struct EncoderOpts {
    std::string preset = "full";
    int64_t input_length = 0;  // 0 = preset default
    std::vector<int> channels; // empty = preset default
    int projection_hidden = 0;
    int projection_dim = 0;
};

void add_encoder(CLI::App* cmd, EncoderOpts& o) {
    opt(cmd, "--preset", o.preset,
        "encoder preset: full (59049 in, 512-d) or desk (2187 in, 128-d)")
        ->check(CLI::IsMember({"full", "desk"}));
    opt(cmd, "--input-length", o.input_length, "waveform samples per example (must be 3^stages)");
    opt(cmd, "--channels", o.channels, "per-stage channel widths")->delimiter(',');
    opt(cmd, "--projection-hidden", o.projection_hidden, "projector hidden width");
    opt(cmd, "--projection-dim", o.projection_dim, "projector output dimensionality");
}

model::EncoderConfig make_encoder_config(const EncoderOpts& o) {
    model::EncoderConfig cfg = o.preset == "desk" ? model::EncoderConfig::desk_scale()
                                                  : model::EncoderConfig::canonical();
    if (o.input_length > 0) cfg.input_length = o.input_length;
    if (!o.channels.empty()) {
        cfg.channels = o.channels;
        cfg.representation_dim = o.channels.back();
    }
    if (o.projection_hidden > 0) cfg.projection_hidden = o.projection_hidden;
    if (o.projection_dim > 0) cfg.projection_dim = o.projection_dim;
    cfg.validate();
    return cfg;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct SynthCmd {
    CommonOpts common;
    int songs = 40;
    int classes = 4;
    double duration = 10.0;
    int rate = 22050;

    int run() {
        apply_common(common);
        data::SynthSpec spec{songs, classes, duration, rate};
        json echo = common_json(common);
        echo["songs"] = songs;
        echo["classes"] = classes;
        echo["duration_s"] = duration;
        echo["sample_rate"] = rate;
        data::Manifest m =
            data::synthesize_corpus(spec, common.seed, common.out, "config = " + echo.dump());
        log_line("wrote " + std::to_string(m.songs.size()) + " songs and manifest.csv to " +
                 common.out);
        return 0;
    }
};

struct AugmentCmd {
    CommonOpts common;
    ChainOpts chain_opts;
    std::string input;
    int64_t crop = 0; // 0 = canonical for the file's rate
    bool asymmetric = false;

    int run() {
        apply_common(common);
        audio::AudioBuffer song = audio::decode_wav(input);
        song.source_id = fs::path(input).stem().string();
        int64_t crop_length =
            crop > 0 ? crop : augment::TransformChain::canonical_crop_length(song.sample_rate);
        augment::TransformChain chain = make_chain(chain_opts, crop_length);
        Rng rng(common.seed);
        augment::ExamplePair pair = augment::make_pair(song, chain, rng, asymmetric);
        audio::encode_wav_f32(pair.x_i, (fs::path(common.out) / "view_i.wav").string());
        audio::encode_wav_f32(pair.x_j, (fs::path(common.out) / "view_j.wav").string());
        json echo = common_json(common);
        echo["chain"] = chain_json(chain);
        echo["input"] = input;
        echo["asymmetric"] = asymmetric;
        write_json((fs::path(common.out) / "augment.json").string(), echo);
        log_line("wrote view_i.wav and view_j.wav to " + common.out);
        return 0;
    }
};

struct PretrainCmd {
    CommonOpts common;
    ChainOpts chain_opts;
    EncoderOpts encoder_opts;
    std::string dataset;
    int rate = 22050;
    int epochs = 100;
    int batch_size = 96;
    double lr = 3e-4;
    double temperature = 0.5;
    int checkpoint_interval = 10;
    bool asymmetric = false;

    int run() {
        apply_common(common);
        model::EncoderConfig cfg = make_encoder_config(encoder_opts);
        data::Manifest manifest = data::load_manifest(dataset);
        data::SongDataset songs = data::SongDataset::load(manifest, rate);
        augment::TransformChain chain = make_chain(chain_opts, cfg.input_length);

        contrastive::TrainConfig tc;
        tc.epochs = epochs;
        tc.batch_size = batch_size;
        tc.lr = lr;
        tc.temperature = temperature;
        tc.seed = common.seed;
        tc.checkpoint_interval = checkpoint_interval;
        tc.asymmetric = asymmetric;

        json echo = common_json(common);
        echo["dataset"] = dataset;
        echo["sample_rate"] = rate;
        echo["epochs"] = epochs;
        echo["batch_size"] = batch_size;
        echo["lr"] = lr;
        echo["temperature"] = temperature;
        echo["checkpoint_interval"] = checkpoint_interval;
        echo["asymmetric"] = asymmetric;
        echo["encoder"] = cfg.to_json();
        echo["chain"] = chain_json(chain);

        Rng rng(common.seed);
        model::Encoder encoder = model::Encoder::init(cfg, rng);
        model::Projector projector = model::Projector::init(
            cfg.representation_dim, cfg.projection_hidden, cfg.projection_dim, rng);
        log_line("pre-training on " + std::to_string(songs.songs.size()) + " songs, " +
                 std::to_string(epochs) + " epochs");
        contrastive::PretrainResult result =
            contrastive::pretrain(songs, encoder, projector, tc, chain, common.out, echo);
        log_line("final checkpoint: " + result.last_checkpoint);
        return 0;
    }
};

struct ProbeEvalShared {
    CommonOpts common;
    EncoderOpts encoder_opts; // used with --random-encoder
    std::string checkpoint;
    std::string dataset;
    int rate = 22050;
    int tags = 50;
    std::string head = "linear";
    double lr = 3e-4;
    double weight_decay = 1e-6;
    int patience = 5;
    int max_epochs = 100;
    int probe_batch = 64;
    int mlp_hidden = 0;
    double fraction = 1.0;
    bool random_encoder = false;

    void add_options(CLI::App* cmd) {
        add_common(cmd, common);
        add_encoder(cmd, encoder_opts);
        opt(cmd, "--checkpoint", checkpoint, "pre-trained model checkpoint");
        opt(cmd, "--dataset", dataset, "manifest CSV")->required();
        opt(cmd, "--rate", rate, "expected sample rate");
        opt(cmd, "--tags", tags, "tag vocabulary size")->check(CLI::PositiveNumber);
        opt(cmd, "--head", head, "probe head: linear or mlp")
            ->check(CLI::IsMember({"linear", "mlp"}));
        opt(cmd, "--lr", lr, "probe learning rate")->check(CLI::PositiveNumber);
        opt(cmd, "--weight-decay", weight_decay, "probe weight decay");
        opt(cmd, "--patience", patience, "early-stopping patience in epochs")
            ->check(CLI::PositiveNumber);
        opt(cmd, "--max-epochs", max_epochs, "probe epoch cap")->check(CLI::PositiveNumber);
        opt(cmd, "--probe-batch", probe_batch, "probe minibatch size")->check(CLI::PositiveNumber);
        opt(cmd, "--mlp-hidden", mlp_hidden, "hidden width of the mlp head (0 = rep dim)");
        opt(cmd, "--fraction", fraction, "fraction of labeled training songs")
            ->check(CLI::Range(1e-9, 1.0));
        flag_opt(cmd, "--random-encoder", random_encoder,
                 "probe a randomly initialized frozen encoder instead of a checkpoint");
    }

    eval::ProbeConfig probe_config(int seeds) const {
        eval::ProbeConfig pc;
        pc.head = head == "mlp" ? model::ProbeKind::Mlp : model::ProbeKind::Linear;
        pc.lr = lr;
        pc.weight_decay = weight_decay;
        pc.patience = patience;
        pc.max_epochs = max_epochs;
        pc.seeds = seeds;
        pc.batch_size = probe_batch;
        pc.mlp_hidden = mlp_hidden;
        return pc;
    }

    model::Encoder load_encoder(std::string& hash_out) const {
        if (random_encoder) {
            model::EncoderConfig cfg = make_encoder_config(encoder_opts);
            Rng rng(Rng::mix({common.seed, 0x72616e64ULL}));
            hash_out = "random-encoder";
            return model::Encoder::init(cfg, rng);
        }
        if (checkpoint.empty())
            throw Error("either --checkpoint or --random-encoder is required");
        hash_out = io::fnv1a_file_hex(checkpoint);
        return model::load_checkpoint(checkpoint).encoder;
    }

    json echo_json(const json& extra) const {
        json echo = common_json(common);
        echo["checkpoint"] = checkpoint;
        echo["dataset"] = dataset;
        echo["sample_rate"] = rate;
        echo["tags"] = tags;
        echo["head"] = head;
        echo["lr"] = lr;
        echo["weight_decay"] = weight_decay;
        echo["patience"] = patience;
        echo["max_epochs"] = max_epochs;
        echo["fraction"] = fraction;
        echo["random_encoder"] = random_encoder;
        for (auto& [k, v] : extra.items()) echo[k] = v;
        return echo;
    }
};

struct ProbeCmd {
    ProbeEvalShared shared;

    int run() {
        apply_common(shared.common);
        std::string hash;
        model::Encoder encoder = shared.load_encoder(hash);
        data::Manifest manifest = data::load_manifest(shared.dataset);
        data::SongDataset songs = data::SongDataset::load(manifest, shared.rate);
        auto [vocab, labels] = data::build_vocabulary(manifest, shared.tags);

        std::vector<int> train_songs = manifest.split_indices(data::Split::Train);
        std::vector<int> valid_songs = manifest.split_indices(data::Split::Valid);
        if (shared.fraction < 1.0)
            train_songs = eval::label_subset(train_songs, shared.fraction, shared.common.seed);

        eval::RepMatrix train_reps = eval::extract_representations(encoder, songs, train_songs);
        eval::RepMatrix valid_reps = eval::extract_representations(encoder, songs, valid_songs);
        std::vector<float> train_targets = eval::fragment_targets(train_reps, labels);
        std::vector<float> valid_targets = eval::fragment_targets(valid_reps, labels);

        eval::ProbeConfig pc = shared.probe_config(1);
        eval::TrainedProbe probe =
            eval::train_probe(train_reps, train_targets, valid_reps, valid_targets,
                              static_cast<int>(vocab.size()), pc, shared.common.seed);

        json echo = shared.echo_json(json{{"checkpoint_hash", hash}});
        std::map<std::string, ad::Tensor> head_tensors;
        head_tensors.emplace("probe.w1", probe.head.w1);
        head_tensors.emplace("probe.b1", probe.head.b1);
        if (probe.head.kind() == model::ProbeKind::Mlp) {
            head_tensors.emplace("probe.w2", probe.head.w2);
            head_tensors.emplace("probe.b2", probe.head.b2);
        }
        io::save_tensors((fs::path(shared.common.out) / "probe_head.bin").string(), head_tensors,
                         echo);
        json report{{"val_tag_roc_auc", probe.best_val_metric},
                    {"epochs_ran", probe.epochs_ran},
                    {"config", echo}};
        write_json((fs::path(shared.common.out) / "probe.json").string(), report);
        log_line("probe validation tag ROC-AUC " + std::to_string(probe.best_val_metric));
        return 0;
    }
};

struct EvaluateCmd {
    ProbeEvalShared shared;
    int seeds = 3;

    int run() {
        apply_common(shared.common);
        std::string hash;
        model::Encoder encoder = shared.load_encoder(hash);
        data::Manifest manifest = data::load_manifest(shared.dataset);
        data::SongDataset songs = data::SongDataset::load(manifest, shared.rate);
        auto [vocab, labels] = data::build_vocabulary(manifest, shared.tags);

        eval::ProbeConfig pc = shared.probe_config(seeds);
        eval::EvalReport report = eval::evaluate(encoder, songs, vocab, labels, pc,
                                                 shared.fraction, shared.common.seed);

        json echo = shared.echo_json(json{{"seeds", seeds}});
        write_json((fs::path(shared.common.out) / "report.json").string(),
                   eval::report_to_json(report, echo, hash));

        std::ofstream csv((fs::path(shared.common.out) / "per_tag.csv").string());
        csv << "# config = " << echo.dump() << "\n";
        csv << "tag,roc_auc,pr_auc\n";
        for (size_t i = 0; i < report.tag_names.size(); ++i) {
            char line[256];
            std::snprintf(line, sizeof(line), "%s,%.9g,%.9g\n", report.tag_names[i].c_str(),
                          report.per_tag_roc[i], report.per_tag_pr[i]);
            csv << line;
        }
        log_line("tag ROC-AUC " + std::to_string(report.tag_roc_auc) + ", tag PR-AUC " +
                 std::to_string(report.tag_pr_auc));
        return 0;
    }
};

struct FiltersCmd {
    CommonOpts common;
    std::string checkpoint;
    int layer = 0;
    int probe_length = 729;
    int steps = 100;
    double step_size = 0.1;
    int rate = 22050;

    int run() {
        apply_common(common);
        model::Checkpoint ck = model::load_checkpoint(checkpoint);
        model::FilterSpectra spectra = model::filter_spectrum(ck.encoder, layer, probe_length,
                                                              steps, step_size, common.seed);
        json echo = common_json(common);
        echo["checkpoint"] = checkpoint;
        echo["checkpoint_hash"] = io::fnv1a_file_hex(checkpoint);
        echo["layer"] = layer;
        echo["probe_length"] = probe_length;
        echo["steps"] = steps;
        echo["step_size"] = step_size;

        std::ofstream csv((fs::path(common.out) / "spectra.csv").string());
        csv << "# config = " << echo.dump() << "\n";
        csv << "filter,peak_bin,peak_hz";
        for (size_t b = 0; b < spectra.spectra.front().size(); ++b) csv << ",mag_" << b;
        csv << "\n";
        for (size_t f = 0; f < spectra.spectra.size(); ++f) {
            csv << spectra.filter_indices[f] << "," << spectra.peak_bins[f] << ","
                << dsp::bin_to_hz(static_cast<size_t>(spectra.peak_bins[f]),
                                  static_cast<size_t>(probe_length), rate);
            char cell[32];
            for (double v : spectra.spectra[f]) {
                std::snprintf(cell, sizeof(cell), ",%.6g", v);
                csv << cell;
            }
            csv << "\n";
        }
        log_line("wrote " + std::to_string(spectra.spectra.size()) + " filter spectra to " +
                 common.out + "/spectra.csv");
        return 0;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"contrastive learning of musical representations on raw audio waveforms"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML-style config file with per-subcommand sections")
        ->envname("CLMRKIT_CONFIG");
    app.allow_config_extras(false);

    SynthCmd synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic labeled corpus");
    add_common(synth_cmd, synth.common);
    opt(synth_cmd, "--songs", synth.songs, "number of songs")->check(CLI::PositiveNumber);
    opt(synth_cmd, "--classes", synth.classes, "number of classes")->check(CLI::PositiveNumber);
    opt(synth_cmd, "--duration", synth.duration, "seconds per song")->check(CLI::PositiveNumber);
    opt(synth_cmd, "--rate", synth.rate, "sample rate in Hz");

    AugmentCmd aug;
    auto* aug_cmd = app.add_subcommand("augment", "preview the augmentation chain on one file");
    add_common(aug_cmd, aug.common);
    add_chain(aug_cmd, aug.chain_opts);
    opt(aug_cmd, "--input", aug.input, "input WAV")->required();
    opt(aug_cmd, "--crop", aug.crop, "crop length in samples (0 = canonical for the rate)");
    flag_opt(aug_cmd, "--asymmetric", aug.asymmetric, "identity function for the second view");

    PretrainCmd pre;
    auto* pre_cmd = app.add_subcommand("pretrain", "self-supervised contrastive pre-training");
    add_common(pre_cmd, pre.common);
    add_chain(pre_cmd, pre.chain_opts);
    add_encoder(pre_cmd, pre.encoder_opts);
    opt(pre_cmd, "--dataset", pre.dataset, "manifest CSV")->required();
    opt(pre_cmd, "--rate", pre.rate, "expected sample rate");
    opt(pre_cmd, "--epochs", pre.epochs, "training epochs")->check(CLI::PositiveNumber);
    opt(pre_cmd, "--batch-size", pre.batch_size, "songs per batch (N)")
        ->check(CLI::Range(2, 1 << 20));
    opt(pre_cmd, "--lr", pre.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    opt(pre_cmd, "--temperature", pre.temperature, "NT-Xent temperature")
        ->check(CLI::PositiveNumber);
    opt(pre_cmd, "--checkpoint-interval", pre.checkpoint_interval, "epochs between checkpoints");
    flag_opt(pre_cmd, "--asymmetric", pre.asymmetric,
             "augment only one view (identity for the other)");

    ProbeCmd probe;
    auto* probe_cmd = app.add_subcommand("probe", "train one probe on frozen representations");
    probe.shared.add_options(probe_cmd);

    EvaluateCmd evaluate;
    auto* eval_cmd =
        app.add_subcommand("evaluate", "multi-seed probe training plus held-out test metrics");
    evaluate.shared.add_options(eval_cmd);
    opt(eval_cmd, "--seeds", evaluate.seeds, "number of probe runs to average")
        ->check(CLI::PositiveNumber);
    eval_cmd
        ->add_option("--transfer-checkpoint", evaluate.shared.checkpoint,
                     "checkpoint pre-trained on a different corpus (alias of --checkpoint)")
        ->envname("CLMRKIT_TRANSFER_CHECKPOINT");

    FiltersCmd filters;
    auto* filters_cmd =
        app.add_subcommand("filters", "export per-filter spectra via gradient ascent");
    add_common(filters_cmd, filters.common);
    opt(filters_cmd, "--checkpoint", filters.checkpoint, "model checkpoint")->required();
    opt(filters_cmd, "--layer", filters.layer, "convolution layer index");
    opt(filters_cmd, "--probe-length", filters.probe_length, "waveform length for ascent")
        ->check(CLI::PositiveNumber);
    opt(filters_cmd, "--steps", filters.steps, "gradient ascent steps")
        ->check(CLI::PositiveNumber);
    opt(filters_cmd, "--step-size", filters.step_size, "gradient ascent step size")
        ->check(CLI::PositiveNumber);
    opt(filters_cmd, "--rate", filters.rate, "sample rate used for the Hz axis");

    for (CLI::App* cmd : app.get_subcommands(nullptr)) {
        cmd->fallthrough();
        cmd->configurable();
    }

    // inject CLMRKIT_* values directly after the subcommand token (see above)
    std::vector<std::string> args(argv + 1, argv + argc);
    for (size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a == "--config") {
            ++i;
            continue;
        }
        if (a.rfind("--config=", 0) == 0) continue;
        if (!a.empty() && a[0] == '-') break;
        auto it = g_env_specs.find(a);
        if (it != g_env_specs.end()) {
            std::vector<std::string> injected;
            for (const auto& spec : it->second) {
                const char* v = std::getenv(spec.env.c_str());
                if (v == nullptr || *v == '\0') continue;
                if (spec.is_flag) {
                    std::string val(v);
                    if (val == "0" || val == "false" || val == "FALSE") continue;
                    injected.push_back(spec.flag);
                } else {
                    injected.push_back(spec.flag + "=" + v);
                }
            }
            args.insert(args.begin() + static_cast<long>(i) + 1, injected.begin(),
                        injected.end());
        }
        break;
    }
    std::reverse(args.begin(), args.end()); // CLI11 takes a reversed vector

    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (synth_cmd->parsed()) return synth.run();
        if (aug_cmd->parsed()) return aug.run();
        if (pre_cmd->parsed()) return pre.run();
        if (probe_cmd->parsed()) return probe.run();
        if (eval_cmd->parsed()) return evaluate.run();
        if (filters_cmd->parsed()) return filters.run();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "[clmrkit] error: %s\n", e.what());
        return 2;
    }
    return 1;
}
