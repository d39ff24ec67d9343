#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "repvec/corpus.hpp"

namespace repvec {

/// A shared latent factor. Each patient draws a score s in [0, 1); with
/// probability `max_rate * s` a background token is replaced by one of the
/// factor's `topic_size` topic words.
struct SyntheticLatent {
    std::string name;
    std::size_t topic_size = 20;
    double max_rate = 0.1;
};

struct SyntheticTask {
    std::string name;
    double positive_rate = 0.5;

    /// Injected into positive documents with `injection_probability`, into
    /// negative documents with `noise_probability`.
    std::vector<std::string> markers;
    double injection_probability = 1.0;
    double noise_probability = 0.0;

    /// Mirror-image markers for the negative class (e.g. pronouns).
    std::vector<std::string> negative_markers;

    std::size_t marker_repeats = 1;

    /// When set, positives are the patients whose score on this latent is in
    /// the top `positive_rate` fraction; `label_noise` flips labels at random.
    std::string latent;
    double label_noise = 0.0;

    std::string positive_label = "1";
    std::string negative_label = "0";
};

struct SyntheticConfig {
    std::size_t n_patients = 200;
    std::size_t vocabulary_size = 1000;
    double zipf_exponent = 1.0;

    std::size_t min_notes = 1;
    std::size_t max_notes = 3;
    std::size_t min_note_tokens = 40;
    std::size_t max_note_tokens = 120;

    /// Per-token chance of emitting a number / time / measurement instead.
    double numeric_rate = 0.02;
    /// Per-patient chance of an extra "discharge_report" note.
    double discharge_rate = 0.0;

    std::vector<SyntheticLatent> latents;
    std::vector<SyntheticTask> tasks;

    /// When > 0, concept annotations are emitted for the first
    /// `concept_vocabulary` background words and every marker.
    std::size_t concept_vocabulary = 0;

    std::uint64_t seed = 0;
};

struct SyntheticCorpus {
    std::vector<NoteRecord> notes;
    std::vector<LabelRecord> labels;
    std::vector<ConceptAnnotation> concepts;
    /// Background words by Zipf rank (rank 1 first).
    std::vector<std::string> background_words;
    /// Topic words per latent, same order as the config.
    std::vector<std::vector<std::string>> topic_words;
};

/// Deterministic pronounceable word for an index: consonant-vowel syllables,
/// at least two, never digits.
std::string synthetic_word(std::size_t index);

/// Throws std::invalid_argument for invalid configs, including markers that
/// would not survive tokenization unchanged (e.g. numeric placeholders).
SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig &config);

/// Writes notes.tsv, labels.tsv and, when present, concepts.tsv into `dir`.
void write_synthetic_corpus(const std::filesystem::path &dir, const SyntheticCorpus &corpus);

} // namespace repvec
