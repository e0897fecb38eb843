#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clmrkit/audio.hpp"
#include "clmrkit/rng.hpp"

// Manifest-driven corpus handling. A manifest CSV has the header
// `path,source_id,split,tags` (tags pipe-separated) plus an optional `order`
// column; rows sharing a source_id are fragments of one song and are
// concatenated at load in `order`. Splits are disjoint by source_id.

namespace clmrkit::data {

enum class Split { Train, Valid, Test };

Split split_from_string(const std::string& s); // throws BadSplit
std::string split_to_string(Split s);

struct Song {
    std::string source_id;
    std::vector<std::string> paths; // fragment files, concatenation order
    Split split = Split::Train;
    std::vector<std::string> tags;
};

struct Manifest {
    std::filesystem::path root; // relative paths resolve against this
    std::vector<Song> songs;

    std::vector<int> split_indices(Split s) const;
};

Manifest load_manifest(const std::string& csv_path);

struct TagVocabulary {
    std::vector<std::string> tags;

    size_t size() const { return tags.size(); }
    int index_of(const std::string& tag) const;
};

struct LabelMatrix {
    int64_t n_songs = 0;
    int64_t n_tags = 0;
    std::vector<uint8_t> values; // row-major multi-hot

    uint8_t at(int64_t song, int64_t tag) const {
        return values[static_cast<size_t>(song * n_tags + tag)];
    }
};

// Top-k training-split tags by frequency, ties broken lexicographically.
// The label matrix covers every manifest song (rows in manifest order).
std::pair<TagVocabulary, LabelMatrix> build_vocabulary(const Manifest& manifest, int k = 50);

// Decoded corpus; rows align with manifest.songs. Every song must arrive at
// expected_rate (rates are rejected at training time, not converted).
struct SongDataset {
    Manifest manifest;
    std::vector<audio::AudioBuffer> songs;

    static SongDataset load(const Manifest& manifest, int expected_rate);
};

struct FragmentRef {
    int song = 0;     // index into SongDataset::songs
    int64_t offset = 0;
};

// Non-overlapping tiling for evaluation (hop = 0 means hop = crop_length).
// Clips shorter than crop_length yield one zero-padded fragment; total count
// per clip is ceil(len / crop_length).
std::vector<FragmentRef> fragment_index(const SongDataset& dataset, int64_t crop_length,
                                        int64_t hop = 0);
std::vector<FragmentRef> fragment_index_for(const SongDataset& dataset,
                                            std::span<const int> song_indices,
                                            int64_t crop_length, int64_t hop = 0);

// Fragment samples, zero-padded to crop_length.
std::vector<float> fragment_samples(const SongDataset& dataset, const FragmentRef& ref,
                                    int64_t crop_length);

// Desk-scale synthetic corpus. Class archetypes: pure tone, harmonic stack,
// band-passed noise, amplitude-modulated tone — all sharing the same register
// with per-song random phase/detune/amplitude. Every song carries its class
// tag plus a shared "synthetic" tag. Deterministic for a given seed.
struct SynthSpec {
    int n_songs = 40;
    int n_classes = 4;
    double duration_s = 10.0;
    int sample_rate = 22050;
};

Manifest synthesize_corpus(const SynthSpec& spec, uint64_t seed, const std::string& out_dir,
                           const std::string& header_comment = "");

} // namespace clmrkit::data
