#include "umr/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "umr/common.hpp"

namespace umr {

namespace {

constexpr char kMagic[7] = {'U', 'M', 'R', 'T', 'C', 'H', '1'};

// Probability of the literal-copy channel in the translation component.
constexpr double kCopyProb = 0.5;

std::string render_template(const std::string& tmpl, const std::string& lang) {
    std::string out = tmpl;
    size_t pos = out.find("{L}");
    if (pos == std::string::npos)
        throw ValidationError("instruction template missing {L} placeholder");
    out.replace(pos, 3, lang);
    return out;
}

void write_str(std::ofstream& out, const std::string& s) {
    uint32_t len = uint32_t(s.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(s.data(), len);
}

std::string read_str(std::ifstream& in) {
    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string s(len, '\0');
    in.read(s.data(), len);
    return s;
}

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
}

}  // namespace

InstructionTemplate::InstructionTemplate(const std::string& tmpl,
                                         const std::vector<std::string>& languages) {
    for (const auto& lang : languages) {
        std::string rendered = render_template(tmpl, lang);
        if (rendered.empty())
            throw ValidationError("instruction renders empty for language " + lang);
        by_lang_[lang] = rendered;
        lang_by_text_[rendered] = lang;
    }
}

const std::string& InstructionTemplate::render(const std::string& lang) const {
    auto it = by_lang_.find(lang);
    if (it == by_lang_.end()) throw FatalError("no instruction rendering for language " + lang);
    return it->second;
}

const std::string& InstructionTemplate::language_of(const std::string& rendered) const {
    auto it = lang_by_text_.find(rendered);
    if (it == lang_by_text_.end())
        throw FatalError("unrecognized rendered instruction: " + rendered);
    return it->second;
}

double LexicalTeacher::translation_prob(const std::string& query_token,
                                        const std::string& doc_token) const {
    double pair_count = 0.0, total = 0.0;
    auto rt = translation_totals_.find(doc_token);
    if (rt != translation_totals_.end()) {
        total = rt->second;
        auto row = translation_.find(doc_token);
        if (row != translation_.end()) {
            auto it = row->second.find(query_token);
            if (it != row->second.end()) pair_count = it->second;
        }
    }
    double denom = double(total) + lambda_ * double(query_vocab_size_);
    return (double(pair_count) + lambda_) / denom;
}

double LexicalTeacher::token_prob(const std::string& next, const TokenSeq& doc,
                                  const std::string& lang) const {
    // Max-aggregation over doc tokens (noisy-OR style): the best-aligned doc
    // token carries the translation evidence, so off-language or off-topic
    // tokens do not dilute the score. A literal occurrence of the token acts
    // as a copy channel with fixed probability, balanced against learned
    // translation pairs (self-pairs are excluded from the table, so the two
    // channels stay distinct). Deviation from a proper distribution:
    // sum_w p(w|d) may exceed 1; every value stays in (0,1).
    double p_trans;
    if (doc.tokens.empty()) {
        p_trans = 1.0 / std::max<double>(1.0, double(query_vocab_size_));
    } else {
        p_trans = 0.0;
        for (const auto& t : doc.tokens) {
            if (t == next)
                p_trans = std::max(p_trans, kCopyProb);
            else
                p_trans = std::max(p_trans, translation_prob(next, t));
        }
    }
    double p_uni;
    auto it = unigrams_.find(lang);
    if (it == unigrams_.end()) {
        p_uni = p_trans;  // no backoff table for this language
    } else {
        const Unigram& u = it->second;
        uint64_t c = 0;
        auto ct = u.counts.find(next);
        if (ct != u.counts.end()) c = ct->second;
        // One extra smoothed slot reserves mass for unseen tokens.
        double denom = double(u.total) + lambda_ * double(u.counts.size() + 1);
        p_uni = (double(c) + lambda_) / denom;
    }
    return alpha_ * p_trans + (1.0 - alpha_) * p_uni;
}

double LexicalTeacher::conditional_token_logprob(const TokenSeq& /*prefix*/,
                                                 const std::string& next, const TokenSeq& doc,
                                                 const std::string& instruction) const {
    const std::string& lang = instruction_.language_of(instruction);
    return std::log(token_prob(next, doc, lang));
}

double LexicalTeacher::translation_row_sum(const std::string& doc_token) const {
    double s = 0.0;
    for (const auto& [w, present] : query_vocab_) {
        (void)present;
        s += translation_prob(w, doc_token);
    }
    return s;
}

double LexicalTeacher::unigram_sum(const std::string& lang) const {
    auto it = unigrams_.find(lang);
    if (it == unigrams_.end()) throw FatalError("no unigram model for language " + lang);
    const Unigram& u = it->second;
    double denom = double(u.total) + lambda_ * double(u.counts.size() + 1);
    double s = lambda_ / denom;  // unseen slot
    for (const auto& [w, c] : u.counts) s += (double(c) + lambda_) / denom;
    return s;
}

std::vector<std::string> LexicalTeacher::doc_vocab() const {
    std::vector<std::string> out;
    out.reserve(translation_totals_.size());
    for (const auto& [t, c] : translation_totals_) out.push_back(t);
    return out;
}

LexicalTeacher fit_lexical_teacher(const DocumentCollection& docs, const QuerySet& queries,
                                   const Config& cfg) {
    if (docs.empty() || queries.empty())
        throw FatalError("fit_lexical_teacher: empty corpus or query set");
    LexicalTeacher model;
    model.alpha_ = cfg.teacher.alpha;
    model.lambda_ = cfg.teacher.smoothing;
    model.max_seq_len_ = cfg.corpus.max_seq_len;
    model.char_level_langs_ = cfg.char_level_language_list();
    model.instruction_ = InstructionTemplate(cfg.teacher.instruction, cfg.language_list());

    // Query vocabulary (translation targets) and per-language unigram counts
    // over queries.
    for (const auto& q : queries.queries()) {
        TokenSeq ts = tokenize(q.text, q.lang, cfg);
        auto& uni = model.unigrams_[q.lang];
        for (const auto& tok : ts.tokens) {
            model.query_vocab_[tok] = true;
            ++uni.counts[tok];
            ++uni.total;
        }
    }
    model.query_vocab_size_ = model.query_vocab_.size();

    // Unigram counts over documents.
    for (const auto& d : docs.docs()) {
        TokenSeq ts = tokenize(d.text, d.lang, cfg);
        auto& uni = model.unigrams_[d.lang];
        for (const auto& tok : ts.tokens) {
            ++uni.counts[tok];
            ++uni.total;
        }
    }

    // Segments for co-occurrence counting: distinct tokens of each document
    // and each query (never across gold pairs). Targets are the segment's
    // tokens restricted to the query vocabulary.
    // Majority language of each token across the unigram tables, used to
    // restrict the translation table to cross-language pairs: literal and
    // same-language matching go through the copy channel, so the table is
    // reserved for the alignment signal carried by mixed-language segments.
    std::map<std::string, std::string> token_lang;
    {
        std::map<std::string, std::pair<std::string, uint64_t>> best;
        for (const auto& [lang, uni] : model.unigrams_)
            for (const auto& [tok, c] : uni.counts) {
                auto& b = best[tok];
                if (c > b.second) b = {lang, c};
            }
        for (const auto& [tok, b] : best) token_lang[tok] = b.first;
    }

    struct Segment {
        std::vector<std::string> anchors;
        std::vector<std::string> targets;
    };
    std::vector<Segment> segments;
    auto add_segment = [&](const std::string& text, const std::string& lang) {
        TokenSeq ts = tokenize(text, lang, cfg);
        std::set<std::string> uniq(ts.tokens.begin(), ts.tokens.end());
        Segment s;
        s.anchors.assign(uniq.begin(), uniq.end());
        for (const auto& tok : s.anchors)
            if (model.query_vocab_.count(tok)) s.targets.push_back(tok);
        if (!s.anchors.empty()) segments.push_back(std::move(s));
    };
    for (const auto& d : docs.docs()) add_segment(d.text, d.lang);
    for (const auto& q : queries.queries()) add_segment(q.text, q.lang);
    auto cross_lang = [&](const std::string& w, const std::string& t) {
        auto iw = token_lang.find(w), it = token_lang.find(t);
        if (iw == token_lang.end() || it == token_lang.end()) return true;
        return iw->second != it->second;
    };

    // Initial estimate: raw presence co-occurrence. Self-pairs are excluded:
    // literal matches go through the copy channel at scoring time, so the
    // table only has to explain tokens by association.
    for (const auto& s : segments) {
        for (const auto& t : s.anchors) {
            auto& row = model.translation_[t];
            for (const auto& w : s.targets) {
                if (w == t || !cross_lang(w, t)) continue;
                row[w] += 1.0;
                model.translation_totals_[t] += 1.0;
            }
        }
    }

    // EM refinement (IBM Model 1 style, the segment acting as its own
    // source): each target token re-distributes one unit of count over the
    // segment's anchors in proportion to the current translation estimate.
    // Consistent pairs (a target whose anchor is present wherever the target
    // is) absorb the mass; incidental topical co-occurrence decays.
    for (int it = 0; it < cfg.teacher.em_iterations; ++it) {
        std::map<std::string, std::map<std::string, double>> next;
        std::map<std::string, double> next_totals;
        for (const auto& s : segments) {
            for (const auto& w : s.targets) {
                double z = 0.0;
                for (const auto& t : s.anchors)
                    if (t != w && cross_lang(w, t)) z += model.translation_prob(w, t);
                if (z <= 0.0) continue;
                for (const auto& t : s.anchors) {
                    if (t == w || !cross_lang(w, t)) continue;
                    double p = model.translation_prob(w, t) / z;
                    next[t][w] += p;
                    next_totals[t] += p;
                }
            }
        }
        model.translation_ = std::move(next);
        model.translation_totals_ = std::move(next_totals);
    }
    return model;
}

double query_nll(const LikelihoodModel& model, const TokenSeq& query, const TokenSeq& doc,
                 const std::string& instruction) {
    if (query.tokens.empty()) throw FatalError("query_nll: empty query");
    TokenSeq prefix;
    double total = 0.0;
    for (const auto& tok : query.tokens) {
        total += -model.conditional_token_logprob(prefix, tok, doc, instruction);
        prefix.tokens.push_back(tok);
    }
    return total / double(query.tokens.size());
}

RankedList rerank(const LikelihoodModel& model, const Query& query, const RankedList& ranked,
                  const DocumentCollection& docs, const Config& cfg,
                  const InstructionTemplate& instruction) {
    const std::string& inst = instruction.render(query.lang);
    TokenSeq q_tokens = tokenize(query.text, query.lang, cfg);

    RankedList out;
    out.query_id = ranked.query_id;
    out.source = RankSource::kTeacher;
    out.exhausted = ranked.exhausted;
    out.entries.resize(ranked.entries.size());
    parallel_for(ranked.entries.size(), cfg.run.threads, [&](size_t i) {
        const auto& entry = ranked.entries[i];
        const Document* doc = docs.find(entry.doc_id);
        if (!doc) throw FatalError("rerank: document '" + entry.doc_id + "' not in collection");
        TokenSeq d_tokens = tokenize(doc->text, doc->lang, cfg);
        double nll = query_nll(model, q_tokens, d_tokens, inst);
        out.entries[i] = {entry.doc_id, -nll};
    });
    std::sort(out.entries.begin(), out.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    return out;
}

std::vector<RankedList> rerank_all(const LikelihoodModel& model, const QuerySet& queries,
                                   const std::vector<RankedList>& lists,
                                   const DocumentCollection& docs, const Config& cfg,
                                   const InstructionTemplate& instruction) {
    std::vector<RankedList> out;
    out.reserve(lists.size());
    for (const auto& list : lists) {
        const Query* q = queries.find(list.query_id);
        if (!q) throw FatalError("rerank_all: query '" + list.query_id + "' not in query set");
        out.push_back(rerank(model, *q, list, docs, cfg, instruction));
    }
    return out;
}

void LexicalTeacher::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FatalError("cannot write teacher model: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, alpha_);
    write_pod(out, lambda_);
    write_pod(out, query_vocab_size_);
    write_pod(out, uint32_t(max_seq_len_));
    uint64_t n = 0;

    n = instruction_.renderings().size();
    write_pod(out, n);
    for (const auto& [lang, rendered] : instruction_.renderings()) {
        write_str(out, lang);
        write_str(out, rendered);
    }
    n = char_level_langs_.size();
    write_pod(out, n);
    for (const auto& l : char_level_langs_) write_str(out, l);

    n = query_vocab_.size();
    write_pod(out, n);
    for (const auto& [w, p] : query_vocab_) {
        (void)p;
        write_str(out, w);
    }

    n = translation_.size();
    write_pod(out, n);
    for (const auto& [t, row] : translation_) {
        write_str(out, t);
        write_pod(out, translation_totals_.at(t));
        uint64_t m = row.size();
        write_pod(out, m);
        for (const auto& [w, c] : row) {
            write_str(out, w);
            write_pod(out, c);
        }
    }

    n = unigrams_.size();
    write_pod(out, n);
    for (const auto& [lang, uni] : unigrams_) {
        write_str(out, lang);
        write_pod(out, uni.total);
        uint64_t m = uni.counts.size();
        write_pod(out, m);
        for (const auto& [w, c] : uni.counts) {
            write_str(out, w);
            write_pod(out, c);
        }
    }
    if (!out) throw FatalError("short write on teacher model: " + path);
}

LexicalTeacher LexicalTeacher::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FatalError("cannot open teacher model: " + path);
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw FatalError("bad teacher model magic in " + path);
    LexicalTeacher model;
    read_pod(in, model.alpha_);
    read_pod(in, model.lambda_);
    read_pod(in, model.query_vocab_size_);
    uint32_t msl = 0;
    read_pod(in, msl);
    model.max_seq_len_ = int(msl);
    uint64_t n = 0;

    read_pod(in, n);
    std::map<std::string, std::string> by_lang;
    for (uint64_t i = 0; i < n; ++i) {
        std::string lang = read_str(in);
        by_lang[lang] = read_str(in);
    }
    // Rebuild the template from any rendering; all renderings share the text
    // pattern apart from the language.
    InstructionTemplate tmpl;
    {
        std::vector<std::string> langs;
        for (const auto& [lang, rendered] : by_lang) langs.push_back(lang);
        if (!langs.empty()) {
            const std::string& sample_lang = langs.front();
            std::string rendered = by_lang.at(sample_lang);
            size_t pos = rendered.find(sample_lang);
            std::string pattern = rendered;
            if (pos != std::string::npos) pattern.replace(pos, sample_lang.size(), "{L}");
            tmpl = InstructionTemplate(pattern, langs);
        }
        model.instruction_ = tmpl;
    }

    read_pod(in, n);
    model.char_level_langs_.resize(n);
    for (auto& l : model.char_level_langs_) l = read_str(in);

    read_pod(in, n);
    for (uint64_t i = 0; i < n; ++i) model.query_vocab_[read_str(in)] = true;

    read_pod(in, n);
    for (uint64_t i = 0; i < n; ++i) {
        std::string t = read_str(in);
        double total = 0.0;
        uint64_t m = 0;
        read_pod(in, total);
        model.translation_totals_[t] = total;
        read_pod(in, m);
        auto& row = model.translation_[t];
        for (uint64_t j = 0; j < m; ++j) {
            std::string w = read_str(in);
            double c = 0.0;
            read_pod(in, c);
            row[w] = c;
        }
    }

    read_pod(in, n);
    for (uint64_t i = 0; i < n; ++i) {
        std::string lang = read_str(in);
        auto& uni = model.unigrams_[lang];
        read_pod(in, uni.total);
        uint64_t m = 0;
        read_pod(in, m);
        for (uint64_t j = 0; j < m; ++j) {
            std::string w = read_str(in);
            uint64_t c = 0;
            read_pod(in, c);
            uni.counts[w] = c;
        }
    }
    if (!in) throw FatalError("truncated teacher model: " + path);
    return model;
}

}  // namespace umr
