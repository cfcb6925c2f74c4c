#include "umr/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "umr/common.hpp"

namespace umr {

namespace {

// Tokenization for metric purposes never truncates.
constexpr int kNoTruncation = std::numeric_limits<int>::max();

bool gold_hit(const Query& q, const std::vector<RankedEntry>& top) {
    for (const auto& e : top)
        for (const auto& g : q.gold_doc_ids)
            if (e.doc_id == g) return true;
    return false;
}

bool answer_hit(const Query& q, const std::vector<RankedEntry>& top,
                const DocumentCollection& docs) {
    std::vector<std::string> answers;
    for (const auto& a : q.answers) answers.push_back(normalize_for_match(a));
    for (const auto& e : top) {
        const Document* d = docs.find(e.doc_id);
        if (!d) continue;
        std::string text = normalize_for_match(d->text);
        for (const auto& a : answers)
            if (!a.empty() && text.find(a) != std::string::npos) return true;
    }
    return false;
}

MetricReport aggregate(const std::string& metric, const QuerySet& queries,
                       const std::map<std::string, std::pair<int, int>>& lang_hits, int excluded) {
    MetricReport r;
    r.metric = metric;
    r.excluded = excluded;
    double sum = 0.0;
    for (const auto& [lang, hc] : lang_hits) {
        double v = hc.second ? double(hc.first) / double(hc.second) : 0.0;
        r.per_language[lang] = v;
        r.queries_per_language[lang] = hc.second;
        r.query_count += hc.second;
        sum += v;
    }
    r.macro_average = lang_hits.empty() ? 0.0 : sum / double(lang_hits.size());
    (void)queries;
    return r;
}

}  // namespace

void write_run(const std::vector<RankedList>& lists, const std::string& tag,
               const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FatalError("cannot write run file: " + path);
    out.precision(9);
    for (const auto& list : lists) {
        int rank = 1;
        for (const auto& e : list.entries)
            out << list.query_id << " Q0 " << e.doc_id << ' ' << rank++ << ' ' << e.score << ' '
                << tag << '\n';
    }
    if (!out) throw FatalError("short write on run file: " + path);
}

std::vector<RankedList> read_run(const std::string& path, std::string* tag) {
    std::ifstream in(path);
    if (!in) throw FatalError("cannot open run file: " + path);
    std::vector<RankedList> lists;
    std::map<std::string, size_t> by_query;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string qid, q0, docid, t;
        int rank;
        double score;
        if (!(ss >> qid >> q0 >> docid >> rank >> score >> t) || q0 != "Q0")
            throw FatalError("malformed run file line " + std::to_string(lineno) + " in " + path);
        if (tag) *tag = t;
        auto [it, inserted] = by_query.emplace(qid, lists.size());
        if (inserted) {
            lists.emplace_back();
            lists.back().query_id = qid;
            lists.back().source = (t == "teacher") ? RankSource::kTeacher : RankSource::kRetriever;
        }
        RankedList& list = lists[it->second];
        if (rank != int(list.entries.size()) + 1)
            throw FatalError("non-contiguous ranks for query " + qid + " in " + path);
        if (!list.entries.empty() && list.entries.back().score < score)
            throw FatalError("increasing scores for query " + qid + " in " + path);
        list.entries.push_back({docid, score});
    }
    return lists;
}

std::string MetricReport::table() const {
    std::ostringstream out;
    out.precision(4);
    out << std::fixed;
    out << metric << " (" << query_count << " queries";
    if (excluded) out << ", " << excluded << " excluded";
    out << ")\n";
    for (const auto& [lang, v] : per_language)
        out << "  " << lang << "  " << v << "  (" << queries_per_language.at(lang) << ")\n";
    out << "  avg " << macro_average << '\n';
    return out.str();
}

std::string MetricReport::machine_lines() const {
    std::ostringstream out;
    out.precision(9);
    for (const auto& [lang, v] : per_language)
        out << metric << '\t' << lang << '\t' << v << '\n';
    out << metric << "\tmacro\t" << macro_average << '\n';
    return out.str();
}

MetricReport recall_at_k(const std::vector<RankedList>& run, const QuerySet& queries,
                         const DocumentCollection& docs, int k) {
    std::map<std::string, std::pair<int, int>> lang_hits;
    int excluded = 0;
    for (const auto& list : run) {
        const Query* q = queries.find(list.query_id);
        if (!q) throw FatalError("recall_at_k: query '" + list.query_id + "' not in query set");
        if (q->gold_doc_ids.empty() && q->answers.empty()) {
            ++excluded;
            continue;
        }
        std::vector<RankedEntry> top(list.entries.begin(),
                                     list.entries.begin() +
                                         std::min<size_t>(size_t(k), list.entries.size()));
        bool hit = q->gold_doc_ids.empty() ? answer_hit(*q, top, docs) : gold_hit(*q, top);
        auto& [hits, count] = lang_hits[q->lang];
        hits += hit ? 1 : 0;
        ++count;
    }
    return aggregate("recall@" + std::to_string(k), queries, lang_hits, excluded);
}

MetricReport recall_at_kt(const std::vector<RankedList>& run, const QuerySet& queries,
                          const DocumentCollection& docs, int64_t kt_tokens) {
    if (kt_tokens < 1) throw FatalError("recall_at_kt: kt_tokens must be >= 1");
    std::map<std::string, std::pair<int, int>> lang_hits;
    int excluded = 0;
    for (const auto& list : run) {
        const Query* q = queries.find(list.query_id);
        if (!q) throw FatalError("recall_at_kt: query '" + list.query_id + "' not in query set");
        if (q->answers.empty()) {
            ++excluded;
            continue;
        }
        // Token stream in rank order, cut at the budget.
        std::string text;
        int64_t remaining = kt_tokens;
        for (const auto& e : list.entries) {
            if (remaining <= 0) break;
            const Document* d = docs.find(e.doc_id);
            if (!d) throw FatalError("recall_at_kt: document '" + e.doc_id + "' not in collection");
            TokenSeq ts = tokenize(d->text, d->lang, kNoTruncation);
            for (const auto& tok : ts.tokens) {
                if (remaining-- <= 0) break;
                if (!text.empty()) text.push_back(' ');
                text += tok;
            }
        }
        bool hit = false;
        for (const auto& a : q->answers) {
            TokenSeq ats = tokenize(a, q->lang, kNoTruncation);
            std::string needle;
            for (const auto& tok : ats.tokens) {
                if (!needle.empty()) needle.push_back(' ');
                needle += tok;
            }
            if (!needle.empty() && text.find(needle) != std::string::npos) {
                hit = true;
                break;
            }
        }
        auto& [hits, count] = lang_hits[q->lang];
        hits += hit ? 1 : 0;
        ++count;
    }
    return aggregate("recall@" + std::to_string(kt_tokens) + "t", queries, lang_hits, excluded);
}

LexicalRetriever::LexicalRetriever(const DocumentCollection& docs, const Config& cfg)
    : docs_(docs),
      k1_(cfg.eval.bm25_k1),
      b_(cfg.eval.bm25_b),
      target_language_only_(cfg.eval.target_language_only),
      threads_(cfg.run.threads),
      char_level_langs_(cfg.char_level_language_list()),
      max_seq_len_(cfg.corpus.max_seq_len) {
    doc_len_.resize(docs.size());
    doc_lang_.resize(docs.size());
    double total_len = 0.0;
    for (size_t i = 0; i < docs.size(); ++i) {
        const Document& d = docs.at(i);
        TokenSeq ts = tokenize(d.text, d.lang, max_seq_len_, char_level_langs_);
        doc_len_[i] = double(ts.tokens.size());
        doc_lang_[i] = d.lang;
        total_len += doc_len_[i];
        std::map<std::string, uint32_t> tf;
        for (const auto& tok : ts.tokens) ++tf[tok];
        for (const auto& [tok, c] : tf) postings_[tok].push_back({uint32_t(i), c});
    }
    avg_len_ = docs.size() ? total_len / double(docs.size()) : 0.0;
}

double LexicalRetriever::idf(const std::string& term) const {
    auto it = postings_.find(term);
    double df = it == postings_.end() ? 0.0 : double(it->second.size());
    double n = double(docs_.size());
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double LexicalRetriever::bm25(uint32_t tf, double dl) const {
    double t = double(tf);
    return t * (k1_ + 1.0) / (t + k1_ * (1.0 - b_ + b_ * dl / avg_len_));
}

TokenSeq LexicalRetriever::query_tokens(const Query& q) const {
    return tokenize(q.text, q.lang, max_seq_len_, char_level_langs_);
}

RankedList LexicalRetriever::retrieve(const Query& query, int k) const {
    if (k < 1) throw FatalError("lexical_retrieve: k must be >= 1");
    TokenSeq ts = query_tokens(query);
    std::set<std::string> terms(ts.tokens.begin(), ts.tokens.end());
    std::vector<double> scores(docs_.size(), 0.0);
    for (const auto& term : terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        double w = idf(term);
        for (const auto& p : it->second) scores[p.doc] += w * bm25(p.tf, doc_len_[p.doc]);
    }
    std::vector<size_t> order;
    order.reserve(docs_.size());
    for (size_t i = 0; i < docs_.size(); ++i) {
        if (target_language_only_ && doc_lang_[i] != query.lang) continue;
        order.push_back(i);
    }
    auto better = [&](size_t a, size_t c) {
        if (scores[a] != scores[c]) return scores[a] > scores[c];
        return docs_.at(a).id < docs_.at(c).id;
    };
    size_t keep = std::min<size_t>(size_t(k), order.size());
    std::partial_sort(order.begin(), order.begin() + keep, order.end(), better);
    RankedList out;
    out.query_id = query.id;
    out.source = RankSource::kRetriever;
    out.exhausted = size_t(k) > order.size();
    for (size_t i = 0; i < keep; ++i) out.entries.push_back({docs_.at(order[i]).id, scores[order[i]]});
    return out;
}

std::vector<RankedList> LexicalRetriever::retrieve_all(const QuerySet& queries, int k) const {
    std::vector<RankedList> out(queries.size());
    parallel_for(queries.size(), threads_,
                 [&](size_t i) { out[i] = retrieve(queries.queries()[i], k); });
    return out;
}

double LexicalRetriever::score_doc(const Query& query, const std::string& doc_id) const {
    TokenSeq ts = query_tokens(query);
    std::set<std::string> terms(ts.tokens.begin(), ts.tokens.end());
    double s = 0.0;
    for (const auto& term : terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        for (const auto& p : it->second)
            if (docs_.at(p.doc).id == doc_id) s += idf(term) * bm25(p.tf, doc_len_[p.doc]);
    }
    return s;
}

std::vector<RunDelta> compare_runs(const std::vector<RankedList>& run_a,
                                   const std::vector<RankedList>& run_b,
                                   const QuerySet& queries, const DocumentCollection& docs,
                                   const std::vector<int>& ks) {
    std::vector<RunDelta> out;
    for (int k : ks) {
        MetricReport a = recall_at_k(run_a, queries, docs, k);
        MetricReport b = recall_at_k(run_b, queries, docs, k);
        RunDelta d;
        d.metric = a.metric;
        for (const auto& [lang, va] : a.per_language) {
            auto it = b.per_language.find(lang);
            double vb = it == b.per_language.end() ? 0.0 : it->second;
            d.per_language[lang] = vb - va;
        }
        d.macro_delta = b.macro_average - a.macro_average;
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace umr
