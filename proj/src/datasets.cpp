#include "clmrkit/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "clmrkit/augment.hpp"
#include "clmrkit/errors.hpp"

namespace clmrkit::data {

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "valid") return Split::Valid;
    if (s == "test") return Split::Test;
    throw BadSplit("'" + s + "' (expected train/valid/test)");
}

std::string split_to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Valid: return "valid";
        default: return "test";
    }
}

std::vector<int> Manifest::split_indices(Split s) const {
    std::vector<int> out;
    for (size_t i = 0; i < songs.size(); ++i)
        if (songs[i].split == s) out.push_back(static_cast<int>(i));
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::vector<std::string> split_tags(const std::string& s) {
    std::vector<std::string> tags;
    std::string tag;
    std::stringstream ss(s);
    while (std::getline(ss, tag, '|'))
        if (!tag.empty()) tags.push_back(tag);
    return tags;
}

} // namespace

Manifest load_manifest(const std::string& csv_path) {
    std::ifstream f(csv_path);
    if (!f) throw MissingFile(csv_path);

    Manifest manifest;
    manifest.root = std::filesystem::path(csv_path).parent_path();

    std::string line;
    int row_offset = 0;
    do { // leading '#' lines carry provenance comments
        if (!std::getline(f, line)) throw Error("empty manifest " + csv_path);
        ++row_offset;
        if (!line.empty() && line.back() == '\r') line.pop_back();
    } while (!line.empty() && line[0] == '#');
    auto header = split_csv_line(line);
    std::unordered_map<std::string, size_t> columns;
    for (size_t i = 0; i < header.size(); ++i) columns[header[i]] = i;
    for (const char* required : {"path", "source_id", "split", "tags"})
        if (!columns.count(required))
            throw Error("manifest " + csv_path + " missing column '" + required + "'");
    bool has_order = columns.count("order") > 0;

    struct Row {
        std::string path;
        long order;
        Split split;
        std::vector<std::string> tags;
    };
    std::unordered_map<std::string, std::vector<Row>> by_id;
    std::vector<std::string> id_order;

    int row_number = row_offset;
    while (std::getline(f, line)) {
        ++row_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() < header.size())
            throw Error("manifest row " + std::to_string(row_number) + ": expected " +
                        std::to_string(header.size()) + " fields");
        Row row;
        row.path = fields[columns["path"]];
        std::string id = fields[columns["source_id"]];
        try {
            row.split = split_from_string(fields[columns["split"]]);
        } catch (const BadSplit& e) {
            throw BadSplit("row " + std::to_string(row_number) + ": " + e.what());
        }
        row.tags = split_tags(fields[columns["tags"]]);
        row.order = has_order && !fields[columns["order"]].empty()
                        ? std::stol(fields[columns["order"]])
                        : 0;

        std::filesystem::path p(row.path);
        if (p.is_relative()) p = manifest.root / p;
        if (!std::filesystem::exists(p))
            throw MissingFile("row " + std::to_string(row_number) + ": " + p.string());

        auto [it, inserted] = by_id.try_emplace(id);
        if (inserted) id_order.push_back(id);
        if (!inserted && !has_order)
            throw DuplicateId("source_id '" + id + "' repeats at row " +
                              std::to_string(row_number) + " without an order column");
        if (!inserted && it->second.front().split != row.split)
            throw DuplicateId("source_id '" + id + "' appears in multiple splits");
        it->second.push_back(std::move(row));
    }

    for (const auto& id : id_order) {
        auto& rows = by_id[id];
        std::stable_sort(rows.begin(), rows.end(),
                         [](const Row& a, const Row& b) { return a.order < b.order; });
        Song song;
        song.source_id = id;
        song.split = rows.front().split;
        std::vector<std::string> tags;
        for (auto& r : rows) {
            song.paths.push_back(r.path);
            for (auto& t : r.tags)
                if (std::find(tags.begin(), tags.end(), t) == tags.end()) tags.push_back(t);
        }
        song.tags = std::move(tags);
        manifest.songs.push_back(std::move(song));
    }
    return manifest;
}

int TagVocabulary::index_of(const std::string& tag) const {
    auto it = std::find(tags.begin(), tags.end(), tag);
    return it == tags.end() ? -1 : static_cast<int>(it - tags.begin());
}

std::pair<TagVocabulary, LabelMatrix> build_vocabulary(const Manifest& manifest, int k) {
    std::map<std::string, int64_t> counts;
    bool any_train = false;
    for (const auto& song : manifest.songs) {
        if (song.split != Split::Train) continue;
        any_train = true;
        for (const auto& t : song.tags) counts[t]++;
    }
    if (!any_train) throw EmptySplit("training split is empty");
    if (static_cast<int>(counts.size()) < k)
        throw TooFewTags(std::to_string(counts.size()) + " distinct training tags, need " +
                         std::to_string(k));

    std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    TagVocabulary vocab;
    for (int i = 0; i < k; ++i) vocab.tags.push_back(ranked[static_cast<size_t>(i)].first);

    LabelMatrix labels;
    labels.n_songs = static_cast<int64_t>(manifest.songs.size());
    labels.n_tags = k;
    labels.values.assign(static_cast<size_t>(labels.n_songs * labels.n_tags), 0);
    for (size_t s = 0; s < manifest.songs.size(); ++s) {
        for (const auto& t : manifest.songs[s].tags) {
            int idx = vocab.index_of(t);
            if (idx >= 0)
                labels.values[s * static_cast<size_t>(k) + static_cast<size_t>(idx)] = 1;
        }
    }
    return {std::move(vocab), std::move(labels)};
}

SongDataset SongDataset::load(const Manifest& manifest, int expected_rate) {
    SongDataset out;
    out.manifest = manifest;
    out.songs.reserve(manifest.songs.size());
    for (const auto& song : manifest.songs) {
        std::vector<audio::AudioBuffer> fragments;
        fragments.reserve(song.paths.size());
        for (const auto& rel : song.paths) {
            std::filesystem::path p(rel);
            if (p.is_relative()) p = manifest.root / p;
            audio::AudioBuffer buf = audio::decode_wav(p.string());
            buf.source_id = song.source_id;
            fragments.push_back(std::move(buf));
        }
        audio::AudioBuffer joined =
            fragments.size() == 1 ? std::move(fragments.front()) : audio::concat_fragments(fragments);
        if (joined.sample_rate != expected_rate)
            throw InvalidRate("song '" + song.source_id + "' is at " +
                              std::to_string(joined.sample_rate) + " Hz, expected " +
                              std::to_string(expected_rate));
        out.songs.push_back(std::move(joined));
    }
    return out;
}

std::vector<FragmentRef> fragment_index(const SongDataset& dataset, int64_t crop_length,
                                        int64_t hop) {
    std::vector<int> all(dataset.songs.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return fragment_index_for(dataset, all, crop_length, hop);
}

std::vector<FragmentRef> fragment_index_for(const SongDataset& dataset,
                                            std::span<const int> song_indices,
                                            int64_t crop_length, int64_t hop) {
    if (hop <= 0) hop = crop_length;
    std::vector<FragmentRef> out;
    for (int s : song_indices) {
        int64_t len = dataset.songs[static_cast<size_t>(s)].size();
        for (int64_t offset = 0; offset == 0 || offset < len; offset += hop)
            out.push_back({s, offset});
    }
    return out;
}

std::vector<float> fragment_samples(const SongDataset& dataset, const FragmentRef& ref,
                                    int64_t crop_length) {
    const auto& song = dataset.songs[static_cast<size_t>(ref.song)];
    std::vector<float> out(static_cast<size_t>(crop_length), 0.0f);
    int64_t available = std::max<int64_t>(0, song.size() - ref.offset);
    int64_t n = std::min(crop_length, available);
    for (int64_t i = 0; i < n; ++i)
        out[static_cast<size_t>(i)] = song.samples[static_cast<size_t>(ref.offset + i)];
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

namespace {

const char* kClassNames[4] = {"tone", "harmonics", "noiseband", "amtone"};

// Every class is a mixture of a six-partial stack and a band-passed noise
// floor over one shared, wide pitch register (f0 log-uniform over more than
// an octave) with a per-song loudness target. Absolute spectral position and
// energy therefore carry no class information; classes differ only in
// f0-relative structure: partial tilt ("tone" nearly sinusoidal, "harmonics"
// rich), noise dominance ("noiseband") and amplitude modulation ("amtone").
audio::AudioBuffer synth_song(int class_index, int sample_rate, int64_t n_samples, Rng& rng) {
    double f0 = std::exp(rng.uniform(std::log(300.0), std::log(640.0))); // 440 * [0.68, 1.45]
    double target_rms = rng.uniform(0.12, 0.30);
    double phase = rng.uniform(0.0, 2.0 * M_PI);
    double dt = 1.0 / sample_rate;

    double tilt, noise_level, am_depth = 0.0, am_rate = 0.0;
    switch (class_index % 4) {
        case 0: // tone: steep tilt, mostly the fundamental
            tilt = rng.uniform(2.4, 3.2);
            noise_level = rng.uniform(0.05, 0.45);
            break;
        case 1: // harmonics: flat tilt, rich stack
            tilt = rng.uniform(0.7, 1.2);
            noise_level = rng.uniform(0.05, 0.45);
            break;
        case 2: // noiseband: the noise floor dominates weak partials
            tilt = rng.uniform(1.5, 2.5);
            noise_level = rng.uniform(0.55, 1.3);
            break;
        default: // amtone: tone-like mixture under a strong slow envelope
            tilt = rng.uniform(1.8, 2.6);
            noise_level = rng.uniform(0.05, 0.45);
            am_depth = 0.9;
            am_rate = rng.uniform(6.0, 10.0);
            break;
    }

    std::vector<double> partials(static_cast<size_t>(n_samples), 0.0);
    double partial_sq = 0.0;
    for (int k = 1; k <= 6; ++k) {
        double amp = std::pow(static_cast<double>(k), -tilt);
        double w = 2.0 * M_PI * f0 * k;
        for (int64_t i = 0; i < n_samples; ++i)
            partials[static_cast<size_t>(i)] += amp * std::sin(w * i * dt + phase * k);
        partial_sq += 0.5 * amp * amp;
    }
    double partial_rms = std::sqrt(partial_sq);

    audio::AudioBuffer noise;
    noise.sample_rate = sample_rate;
    noise.samples.resize(static_cast<size_t>(n_samples));
    for (float& v : noise.samples) v = static_cast<float>(rng.normal());
    noise = augment::highpass(noise, 0.8 * f0);
    noise = augment::lowpass(noise, 5.5 * f0);
    double noise_rms = noise.rms();

    audio::AudioBuffer buf;
    buf.sample_rate = sample_rate;
    buf.samples.resize(static_cast<size_t>(n_samples));
    double am_phase = rng.uniform(0.0, 2.0 * M_PI);
    for (int64_t i = 0; i < n_samples; ++i) {
        double v = partials[static_cast<size_t>(i)] / partial_rms +
                   noise_level * noise.samples[static_cast<size_t>(i)] / noise_rms;
        if (am_depth > 0.0) {
            double env = (1.0 - am_depth) +
                         am_depth * 0.5 * (1.0 + std::sin(2.0 * M_PI * am_rate * i * dt + am_phase));
            v *= env;
        }
        buf.samples[static_cast<size_t>(i)] = static_cast<float>(v);
    }

    double rms = buf.rms();
    if (rms > 0.0) {
        float scale = static_cast<float>(target_rms / rms);
        for (float& v : buf.samples) v = std::clamp(v * scale, -1.0f, 1.0f);
    }
    return buf;
}

} // namespace

Manifest synthesize_corpus(const SynthSpec& spec, uint64_t seed, const std::string& out_dir,
                           const std::string& header_comment) {
    if (spec.n_songs < 1 || spec.n_classes < 1)
        throw std::invalid_argument("synthesize_corpus: need at least one song and class");
    std::filesystem::create_directories(out_dir);
    int64_t n_samples = static_cast<int64_t>(std::llround(spec.duration_s * spec.sample_rate));

    std::ofstream csv(std::filesystem::path(out_dir) / "manifest.csv");
    if (!csv) throw Error("cannot write manifest under " + out_dir);
    if (!header_comment.empty()) csv << "# " << header_comment << "\n";
    csv << "path,source_id,split,tags\n";

    for (int i = 0; i < spec.n_songs; ++i) {
        int class_index = i % spec.n_classes;
        std::string class_name = kClassNames[class_index % 4];
        if (class_index >= 4) class_name += std::to_string(class_index / 4 + 1);
        Rng rng(Rng::mix({seed, 0x736f6e67ULL, static_cast<uint64_t>(i)}));
        audio::AudioBuffer buf = synth_song(class_index, spec.sample_rate, n_samples, rng);

        char name[64];
        std::snprintf(name, sizeof(name), "song_%04d_%s.wav", i, class_name.c_str());
        buf.source_id = "synth-" + std::to_string(i);
        audio::encode_wav_f32(buf, (std::filesystem::path(out_dir) / name).string());

        // per class: 3 train / 1 valid / 1 test out of every 5
        int class_pos = i / spec.n_classes;
        const char* split = (class_pos % 5 < 3) ? "train" : (class_pos % 5 == 3 ? "valid" : "test");
        csv << name << "," << buf.source_id << "," << split << "," << class_name
            << "|synthetic\n";
    }
    csv.close();
    return load_manifest((std::filesystem::path(out_dir) / "manifest.csv").string());
}

} // namespace clmrkit::data
