#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace umr {

// All tunables, grouped by the module that reads them. Defaults here are the
// single source of truth; the CLI loads a key=value file with [section]
// headers and applies flag overrides on top (flags win).
struct Config {
    struct Corpus {
        // Feature-space size, power of two.
        int64_t feature_dim = 1 << 18;
        uint64_t hash_seed = 0x5eedULL;
        int max_seq_len = 256;
        // Recognized ISO 639-1 codes. Records with a lang outside this list
        // are rejected at ingest.
        std::string languages = "ar,bn,fi,ja,ko,ru,te,en";
        // Languages tokenized at character level (no-space scripts).
        std::string char_level_languages = "ja,zh,th";
        // Character n-gram orders emitted by the featurizer.
        std::string ngram_orders = "2,3,4";
    } corpus;

    struct Encoder {
        int dim = 256;
        // Linear-encoder learning rate. (A transformer encoder would want
        // the usual 2e-5; a linear projection learns at 1e-3.)
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    } encoder;

    struct Index {
        int top_k = 100;
    } index;

    struct Teacher {
        // Interpolation weight of the translation component against the
        // per-language unigram backoff.
        double alpha = 0.7;
        // Add-lambda smoothing for both tables.
        double smoothing = 0.05;
        // EM refinement passes over the co-occurrence counts (0 = raw
        // presence counting).
        int em_iterations = 3;
        std::string instruction = "Based on the passage, please write a question in {L}";
    } teacher;

    struct Distill {
        int batch_size = 16;
        int docs_per_query = 16;
        double temperature = 0.1;
        int epochs = 10;
        int grad_accum_steps = 1;
        // Logit assigned to in-batch negatives in the teacher rows.
        double neg_logit = -1e4;
        bool in_batch_negatives = true;
    } distill;

    struct Pipeline {
        int iterations = 2;
        // "lexical" (BM25 pool) or "encoder" (randomly initialized encoder).
        std::string bootstrap = "lexical";
        // Re-initialize the student at every iteration instead of continuing
        // from the previous checkpoint.
        bool reinit_each_iteration = false;
    } pipeline;

    struct Eval {
        double bm25_k1 = 0.9;
        double bm25_b = 0.4;
        // Restrict lexical retrieval to the query's language (the BM25
        // baseline setting); bootstrap retrieval leaves this off.
        bool target_language_only = false;
    } eval;

    struct Synth {
        int num_languages = 4;
        int topics = 50;
        int docs_per_topic = 20;
        int queries_per_topic = 4;
        int vocab_size = 120;
        double cross_lingual_leak = 0.5;
        double noise_rate = 0.1;
        // Fraction of documents carrying a second language's rendering of
        // part of their content (the unsupervised alignment signal).
        double code_mixed_rate = 0.3;
        int doc_tokens = 40;
        int query_tokens = 5;
    } synth;

    struct Run {
        uint64_t seed = 42;
        int threads = 0;  // 0 = UMR_THREADS env or hardware concurrency
    } run;

    // Throws ValidationError on any value violating a module precondition.
    void validate() const;

    // Canonical text form: every key, sorted sections, fixed float format.
    // Identical configs serialize byte-identically.
    std::string serialize() const;
    uint64_t hash() const;

    std::vector<std::string> language_list() const;
    std::vector<std::string> char_level_language_list() const;
    std::vector<int> ngram_order_list() const;
};

// Parse [section] key = value text. Unknown sections or keys are rejected.
Config parse_config(const std::string& text, const Config& base = Config{});
Config load_config_file(const std::string& path, const Config& base = Config{});
// Apply one "section.key=value" override.
void apply_override(Config& cfg, const std::string& assignment);

std::vector<std::string> split_list(const std::string& csv);

}  // namespace umr
