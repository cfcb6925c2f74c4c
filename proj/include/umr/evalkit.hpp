#pragma once

#include <map>
#include <string>
#include <vector>

#include "umr/config.hpp"
#include "umr/corpus.hpp"
#include "umr/index.hpp"

namespace umr {

// Six-column whitespace-separated run format:
//   query_id Q0 doc_id rank score tag
void write_run(const std::vector<RankedList>& lists, const std::string& tag,
               const std::string& path);
std::vector<RankedList> read_run(const std::string& path, std::string* tag = nullptr);

struct MetricReport {
    std::string metric;
    std::map<std::string, double> per_language;
    std::map<std::string, int> queries_per_language;
    double macro_average = 0.0;
    int query_count = 0;
    int excluded = 0;  // queries with neither answers nor gold ids

    std::string table() const;
    std::string machine_lines() const;
};

// Hit = any gold_doc_id in the top-k, or (for queries with only answers) any
// answer contained in a top-k document's text. Macro-averaged per language,
// then across languages.
MetricReport recall_at_k(const std::vector<RankedList>& run, const QuerySet& queries,
                         const DocumentCollection& docs, int k);

// Token-budget recall: concatenate retrieved documents' token sequences in
// rank order, cut at kt_tokens, rejoin with single spaces; hit iff any
// answer is a substring of the truncated text.
MetricReport recall_at_kt(const std::vector<RankedList>& run, const QuerySet& queries,
                          const DocumentCollection& docs, int64_t kt_tokens);

// Okapi BM25 over an inverted index. Built once per collection.
class LexicalRetriever {
public:
    LexicalRetriever(const DocumentCollection& docs, const Config& cfg);

    // Standard BM25; restricted to the query's language when the config's
    // target_language_only is set. Ties break by ascending doc_id.
    RankedList retrieve(const Query& query, int k) const;
    std::vector<RankedList> retrieve_all(const QuerySet& queries, int k) const;

    // Direct formula evaluation over every document, for oracle tests.
    double score_doc(const Query& query, const std::string& doc_id) const;

private:
    struct Posting {
        uint32_t doc = 0;
        uint32_t tf = 0;
    };
    const DocumentCollection& docs_;
    double k1_, b_;
    bool target_language_only_;
    int threads_;
    std::map<std::string, std::vector<Posting>> postings_;
    std::vector<double> doc_len_;
    std::vector<std::string> doc_lang_;
    double avg_len_ = 0.0;

    double idf(const std::string& term) const;
    double bm25(uint32_t tf, double dl) const;
    TokenSeq query_tokens(const Query& q) const;
    std::vector<std::string> char_level_langs_;
    int max_seq_len_;
};

struct RunDelta {
    std::string metric;
    std::map<std::string, double> per_language;  // b - a
    double macro_delta = 0.0;
};

// Per-metric deltas (run_b minus run_a) for each requested recall@k.
std::vector<RunDelta> compare_runs(const std::vector<RankedList>& run_a,
                                   const std::vector<RankedList>& run_b,
                                   const QuerySet& queries, const DocumentCollection& docs,
                                   const std::vector<int>& ks);

}  // namespace umr
