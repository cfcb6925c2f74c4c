#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "umr/config.hpp"

namespace umr {

struct Document {
    std::string id;
    std::string lang;
    std::string title;
    std::string text;

    bool operator==(const Document&) const = default;
};

struct Query {
    std::string id;
    std::string lang;
    std::string text;
    std::vector<std::string> answers;
    std::vector<std::string> gold_doc_ids;

    bool operator==(const Query&) const = default;
};

struct TokenSeq {
    std::vector<std::string> tokens;
    std::optional<int> truncated_at;

    bool operator==(const TokenSeq&) const = default;
    size_t size() const { return tokens.size(); }
};

// Sparse hashed feature counts. Entries are sorted by index; lookups and
// equality are therefore canonical.
struct FeatureVector {
    std::vector<std::pair<uint32_t, uint32_t>> entries;  // (index, count)
    int64_t feature_dim = 0;

    uint64_t total_count() const {
        uint64_t s = 0;
        for (auto& [i, c] : entries) s += c;
        return s;
    }
};

struct RejectReport {
    std::vector<std::pair<int, std::string>> lines;  // (line number, reason)

    void write(const std::string& path) const;
};

class DocumentCollection {
public:
    void add(Document doc);  // throws FatalError on duplicate id
    const std::vector<Document>& docs() const { return docs_; }
    const Document& at(size_t i) const { return docs_[i]; }
    const Document* find(const std::string& id) const;
    size_t size() const { return docs_.size(); }
    bool empty() const { return docs_.empty(); }

    bool operator==(const DocumentCollection& o) const { return docs_ == o.docs_; }

private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, size_t> by_id_;
};

class QuerySet {
public:
    void add(Query q);
    const std::vector<Query>& queries() const { return queries_; }
    const Query* find(const std::string& id) const;
    size_t size() const { return queries_.size(); }
    bool empty() const { return queries_.empty(); }

    bool operator==(const QuerySet& o) const { return queries_ == o.queries_; }

private:
    std::vector<Query> queries_;
    std::unordered_map<std::string, size_t> by_id_;
};

// Unicode-aware lowercasing + splitting on whitespace and punctuation.
// Languages listed in char_level_languages fall back to one token per
// non-separator codepoint. Output truncated to max_seq_len, keeping the
// prefix; truncated_at records the cut.
TokenSeq tokenize(const std::string& text, const std::string& lang, int max_seq_len,
                  const std::vector<std::string>& char_level_langs = {});
TokenSeq tokenize(const std::string& text, const std::string& lang, const Config& cfg);

// Hashed whole-token + character n-gram features, accumulated counts.
// feature_dim must be a power of two; hash_seed pins the feature space.
FeatureVector featurize(const TokenSeq& tokens, int64_t feature_dim, uint64_t hash_seed,
                        const std::vector<int>& ngram_orders = {2, 3, 4});
FeatureVector featurize(const TokenSeq& tokens, const Config& cfg);

// Convenience: tokenize + featurize in one call.
FeatureVector featurize_text(const std::string& text, const std::string& lang, const Config& cfg);

// JSONL ingest. Invalid lines are rejected (recorded with line number and
// reason); duplicate ids and unreadable files are fatal.
DocumentCollection ingest_documents(const std::string& path, const Config& cfg,
                                    RejectReport* report = nullptr);
QuerySet ingest_queries(const std::string& path, const Config& cfg,
                        RejectReport* report = nullptr);

void write_documents(const DocumentCollection& docs, const std::string& path);
void write_queries(const QuerySet& queries, const std::string& path);

// Lowercased text used for answer-containment matching.
std::string normalize_for_match(const std::string& text);

}  // namespace umr
