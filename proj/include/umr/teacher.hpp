#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "umr/config.hpp"
#include "umr/corpus.hpp"
#include "umr/index.hpp"

namespace umr {

// Instruction prefix with a {L} language placeholder, rendered once per
// configured language.
class InstructionTemplate {
public:
    InstructionTemplate() = default;
    InstructionTemplate(const std::string& tmpl, const std::vector<std::string>& languages);

    const std::string& render(const std::string& lang) const;
    // Reverse lookup: rendered instruction -> language.
    const std::string& language_of(const std::string& rendered) const;
    const std::map<std::string, std::string>& renderings() const { return by_lang_; }

private:
    std::map<std::string, std::string> by_lang_;       // lang -> rendered
    std::map<std::string, std::string> lang_by_text_;  // rendered -> lang
};

// Conditional query-token likelihood model. Scores are log p(next | doc,
// prefix, instruction); no generation is ever performed.
class LikelihoodModel {
public:
    virtual ~LikelihoodModel() = default;
    virtual double conditional_token_logprob(const TokenSeq& prefix, const std::string& next,
                                             const TokenSeq& doc,
                                             const std::string& instruction) const = 0;
};

// Lexical translation-table + unigram-backoff likelihood model, estimated by
// co-occurrence counting over the unpaired corpora (within documents and
// within queries separately; gold pairs are never consulted).
//
//   p(w | d, I) = alpha * (1/|d|) sum_{t in d} T(w | t) + (1-alpha) * U_L(w)
//
// where L is the language selected by the rendered instruction I. The model
// is context-insensitive: the prefix does not enter the probability.
// T(w | .) is add-lambda smoothed over the query vocabulary and sums to 1
// there; tokens outside the query vocabulary receive the smoothing floor
// (a documented epsilon leak above 1). U_L reserves one smoothed slot for
// unseen tokens, so every probability is strictly positive.
class LexicalTeacher : public LikelihoodModel {
public:
    double conditional_token_logprob(const TokenSeq& prefix, const std::string& next,
                                     const TokenSeq& doc,
                                     const std::string& instruction) const override;

    double token_prob(const std::string& next, const TokenSeq& doc,
                      const std::string& lang) const;

    const InstructionTemplate& instruction() const { return instruction_; }
    double alpha() const { return alpha_; }

    // Normalization invariant checks, used by tests.
    double translation_row_sum(const std::string& doc_token) const;
    double unigram_sum(const std::string& lang) const;
    std::vector<std::string> doc_vocab() const;

    void save(const std::string& path) const;
    static LexicalTeacher load(const std::string& path);

    friend LexicalTeacher fit_lexical_teacher(const DocumentCollection&, const QuerySet&,
                                              const Config&);

private:
    double translation_prob(const std::string& query_token, const std::string& doc_token) const;

    struct Unigram {
        std::map<std::string, uint64_t> counts;
        uint64_t total = 0;
    };

    double alpha_ = 0.7;
    double lambda_ = 0.05;
    InstructionTemplate instruction_;
    // doc-token -> (query-token -> co-occurrence count), plus row totals.
    std::map<std::string, std::map<std::string, double>> translation_;
    std::map<std::string, double> translation_totals_;
    uint64_t query_vocab_size_ = 0;
    std::map<std::string, bool> query_vocab_;
    std::map<std::string, Unigram> unigrams_;  // per language
    int max_seq_len_ = 256;
    std::vector<std::string> char_level_langs_;
};

LexicalTeacher fit_lexical_teacher(const DocumentCollection& docs, const QuerySet& queries,
                                   const Config& cfg);

// Mean over query tokens of -log p(q_j | d, q_<j, I). Strictly positive for
// any non-degenerate model.
double query_nll(const LikelihoodModel& model, const TokenSeq& query, const TokenSeq& doc,
                 const std::string& instruction);

// Reorder a retriever list by ascending query NLL. Stored score is the mean
// log-likelihood (-NLL) so scores stay non-increasing; ties break by
// ascending doc_id.
RankedList rerank(const LikelihoodModel& model, const Query& query, const RankedList& ranked,
                  const DocumentCollection& docs, const Config& cfg,
                  const InstructionTemplate& instruction);

std::vector<RankedList> rerank_all(const LikelihoodModel& model, const QuerySet& queries,
                                   const std::vector<RankedList>& lists,
                                   const DocumentCollection& docs, const Config& cfg,
                                   const InstructionTemplate& instruction);

}  // namespace umr
