#include "umr/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "umr/common.hpp"

namespace umr {

namespace {

using json = nlohmann::json;

// Minimal UTF-8 decoder. Invalid sequences decode as U+FFFD and consume one
// byte, so tokenization never fails on malformed input.
uint32_t decode_utf8(const std::string& s, size_t& i) {
    unsigned char c = s[i];
    if (c < 0x80) {
        ++i;
        return c;
    }
    int extra;
    uint32_t cp;
    if ((c & 0xe0) == 0xc0) { extra = 1; cp = c & 0x1f; }
    else if ((c & 0xf0) == 0xe0) { extra = 2; cp = c & 0x0f; }
    else if ((c & 0xf8) == 0xf0) { extra = 3; cp = c & 0x07; }
    else { ++i; return 0xFFFD; }
    if (i + size_t(extra) >= s.size()) {
        ++i;
        return 0xFFFD;
    }
    uint32_t out = cp;
    for (int k = 1; k <= extra; ++k) {
        unsigned char cc = s[i + k];
        if ((cc & 0xc0) != 0x80) { ++i; return 0xFFFD; }
        out = (out << 6) | (cc & 0x3f);
    }
    i += size_t(extra) + 1;
    return out;
}

void encode_utf8(uint32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(char(cp));
    } else if (cp < 0x800) {
        out.push_back(char(0xc0 | (cp >> 6)));
        out.push_back(char(0x80 | (cp & 0x3f)));
    } else if (cp < 0x10000) {
        out.push_back(char(0xe0 | (cp >> 12)));
        out.push_back(char(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(char(0x80 | (cp & 0x3f)));
    } else {
        out.push_back(char(0xf0 | (cp >> 18)));
        out.push_back(char(0x80 | ((cp >> 12) & 0x3f)));
        out.push_back(char(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(char(0x80 | (cp & 0x3f)));
    }
}

// Case folding for ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic.
uint32_t fold_case(uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
    if (cp >= 0x100 && cp < 0x138) return cp | 1;           // Latin Ext-A even/odd pairs
    if (cp >= 0x139 && cp < 0x149 && (cp % 2) == 1) return cp + 1;     // odd/even pairs
    if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;   // Greek
    if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;                  // Cyrillic
    if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;                  // Cyrillic supplements
    return cp;
}

bool is_whitespace(uint32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' ||
           cp == 0xA0 || cp == 0x3000 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 ||
           cp == 0x2029;
}

bool is_punct(uint32_t cp) {
    if (cp < 0x80)
        return !(cp >= '0' && cp <= '9') && !(cp >= 'a' && cp <= 'z') &&
               !(cp >= 'A' && cp <= 'Z');
    if (cp >= 0x2010 && cp <= 0x205E) return true;   // general punctuation
    if (cp >= 0x3001 && cp <= 0x303F) return true;   // CJK symbols/punctuation
    if (cp >= 0xFF01 && cp <= 0xFF0F) return true;   // fullwidth forms
    if (cp == 0xAB || cp == 0xBB || cp == 0x60C || cp == 0x61F || cp == 0x964) return true;
    return false;
}

bool is_separator(uint32_t cp) { return is_whitespace(cp) || is_punct(cp); }

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

std::string get_string_field(const json& j, const char* key, bool required, int line) {
    if (!j.contains(key)) {
        if (required) throw ValidationError(std::string("missing field '") + key + "'");
        return "";
    }
    if (!j.at(key).is_string())
        throw ValidationError(std::string("field '") + key + "' is not a string");
    (void)line;
    return j.at(key).get<std::string>();
}

std::vector<std::string> get_string_array(const json& j, const char* key) {
    std::vector<std::string> out;
    if (!j.contains(key)) return out;
    if (!j.at(key).is_array())
        throw ValidationError(std::string("field '") + key + "' is not an array");
    for (const auto& v : j.at(key)) {
        if (!v.is_string())
            throw ValidationError(std::string("field '") + key + "' has a non-string entry");
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

void RejectReport::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw FatalError("cannot write reject report: " + path);
    for (const auto& [line, reason] : lines) out << line << '\t' << reason << '\n';
}

void DocumentCollection::add(Document doc) {
    auto [it, inserted] = by_id_.emplace(doc.id, docs_.size());
    if (!inserted)
        throw FatalError("duplicate document id '" + doc.id + "' (records " +
                         std::to_string(it->second + 1) + " and " +
                         std::to_string(docs_.size() + 1) + ")");
    docs_.push_back(std::move(doc));
}

const Document* DocumentCollection::find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

void QuerySet::add(Query q) {
    auto [it, inserted] = by_id_.emplace(q.id, queries_.size());
    if (!inserted)
        throw FatalError("duplicate query id '" + q.id + "' (records " +
                         std::to_string(it->second + 1) + " and " +
                         std::to_string(queries_.size() + 1) + ")");
    queries_.push_back(std::move(q));
}

const Query* QuerySet::find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &queries_[it->second];
}

TokenSeq tokenize(const std::string& text, const std::string& lang, int max_seq_len,
                  const std::vector<std::string>& char_level_langs) {
    if (max_seq_len < 1) throw FatalError("tokenize: max_seq_len must be >= 1");
    bool char_level = contains(char_level_langs, lang);
    TokenSeq out;
    std::string current;
    bool truncated = false;

    auto flush = [&] {
        if (current.empty()) return;
        if (int(out.tokens.size()) < max_seq_len)
            out.tokens.push_back(std::move(current));
        else
            truncated = true;
        current.clear();
    };

    size_t i = 0;
    while (i < text.size()) {
        uint32_t cp = decode_utf8(text, i);
        if (is_separator(cp)) {
            flush();
            continue;
        }
        cp = fold_case(cp);
        if (char_level) {
            flush();
            encode_utf8(cp, current);
            flush();
        } else {
            encode_utf8(cp, current);
        }
    }
    flush();
    if (truncated) out.truncated_at = max_seq_len;
    return out;
}

TokenSeq tokenize(const std::string& text, const std::string& lang, const Config& cfg) {
    return tokenize(text, lang, cfg.corpus.max_seq_len, cfg.char_level_language_list());
}

FeatureVector featurize(const TokenSeq& tokens, int64_t feature_dim, uint64_t hash_seed,
                        const std::vector<int>& ngram_orders) {
    if (feature_dim <= 0 || (feature_dim & (feature_dim - 1)) != 0)
        throw FatalError("featurize: feature_dim must be a power of two");
    const uint64_t mask = uint64_t(feature_dim) - 1;
    std::unordered_map<uint32_t, uint32_t> counts;
    counts.reserve(tokens.size() * 4);

    auto emit = [&](std::string_view gram, uint64_t salt) {
        uint64_t h = hash_bytes(gram, hash_seed ^ salt);
        ++counts[uint32_t(h & mask)];
    };

    for (const auto& tok : tokens.tokens) {
        emit(tok, 0x746f6bULL);  // whole token
        // Character n-grams over codepoints.
        std::vector<size_t> bounds{0};
        size_t i = 0;
        while (i < tok.size()) {
            size_t j = i;
            decode_utf8(tok, j);
            i = j;
            bounds.push_back(i);
        }
        size_t n_cp = bounds.size() - 1;
        for (int n : ngram_orders) {
            if (size_t(n) > n_cp) continue;
            for (size_t s = 0; s + size_t(n) <= n_cp; ++s) {
                std::string_view gram(tok.data() + bounds[s], bounds[s + size_t(n)] - bounds[s]);
                emit(gram, 0x6772616dULL + uint64_t(n));
            }
        }
    }

    FeatureVector fv;
    fv.feature_dim = feature_dim;
    fv.entries.assign(counts.begin(), counts.end());
    std::sort(fv.entries.begin(), fv.entries.end());
    return fv;
}

FeatureVector featurize(const TokenSeq& tokens, const Config& cfg) {
    return featurize(tokens, cfg.corpus.feature_dim, cfg.corpus.hash_seed, cfg.ngram_order_list());
}

FeatureVector featurize_text(const std::string& text, const std::string& lang, const Config& cfg) {
    return featurize(tokenize(text, lang, cfg), cfg);
}

namespace {

template <typename Sink>
void ingest_lines(const std::string& path, RejectReport* report, Sink&& sink) {
    std::ifstream in(path);
    if (!in) throw FatalError("cannot open file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            if (!j.is_object()) throw ValidationError("record is not an object");
            sink(j, lineno);
        } catch (const json::parse_error& e) {
            if (report) report->lines.emplace_back(lineno, std::string("bad json: ") + e.what());
        } catch (const ValidationError& e) {
            if (report) report->lines.emplace_back(lineno, e.what());
        }
    }
}

}  // namespace

DocumentCollection ingest_documents(const std::string& path, const Config& cfg,
                                    RejectReport* report) {
    auto langs = cfg.language_list();
    DocumentCollection coll;
    ingest_lines(path, report, [&](const json& j, int lineno) {
        Document d;
        d.id = get_string_field(j, "id", true, lineno);
        d.lang = get_string_field(j, "lang", true, lineno);
        d.title = get_string_field(j, "title", false, lineno);
        d.text = get_string_field(j, "text", true, lineno);
        if (d.id.empty()) throw ValidationError("empty id");
        if (d.text.empty()) throw ValidationError("empty text");
        if (!contains(langs, d.lang)) throw ValidationError("unknown lang '" + d.lang + "'");
        coll.add(std::move(d));
    });
    return coll;
}

QuerySet ingest_queries(const std::string& path, const Config& cfg, RejectReport* report) {
    auto langs = cfg.language_list();
    QuerySet qs;
    ingest_lines(path, report, [&](const json& j, int lineno) {
        Query q;
        q.id = get_string_field(j, "id", true, lineno);
        q.lang = get_string_field(j, "lang", true, lineno);
        q.text = get_string_field(j, "text", true, lineno);
        q.answers = get_string_array(j, "answers");
        q.gold_doc_ids = get_string_array(j, "gold_doc_ids");
        if (q.id.empty()) throw ValidationError("empty id");
        if (q.text.empty()) throw ValidationError("empty text");
        if (!contains(langs, q.lang)) throw ValidationError("unknown lang '" + q.lang + "'");
        qs.add(std::move(q));
    });
    return qs;
}

void write_documents(const DocumentCollection& docs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FatalError("cannot write: " + path);
    for (const auto& d : docs.docs()) {
        json j{{"id", d.id}, {"lang", d.lang}, {"title", d.title}, {"text", d.text}};
        out << j.dump() << '\n';
    }
}

void write_queries(const QuerySet& queries, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FatalError("cannot write: " + path);
    for (const auto& q : queries.queries()) {
        json j{{"id", q.id}, {"lang", q.lang}, {"text", q.text}};
        if (!q.answers.empty()) j["answers"] = q.answers;
        if (!q.gold_doc_ids.empty()) j["gold_doc_ids"] = q.gold_doc_ids;
        out << j.dump() << '\n';
    }
}

std::string normalize_for_match(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    size_t i = 0;
    while (i < text.size()) {
        uint32_t cp = decode_utf8(text, i);
        encode_utf8(fold_case(cp), out);
    }
    return out;
}

}  // namespace umr
