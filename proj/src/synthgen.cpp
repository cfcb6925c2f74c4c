#include "umr/synthgen.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "umr/common.hpp"

namespace umr {

namespace {

// Base-20 consonant encoding of a latent token id, with a per-language
// alphabet rotation so surface forms (and their character n-grams) stay
// disjoint across languages.
std::string render_latent(int latent, int lang_idx, const std::string& lang_code) {
    static const char kAlphabet[] = "bcdfghjklmnpqrstvwxz";
    constexpr int kBase = 20;
    std::string digits;
    int v = latent;
    do {
        int d = v % kBase;
        digits.push_back(kAlphabet[(d + 3 * lang_idx) % kBase]);
        v /= kBase;
    } while (v > 0);
    std::reverse(digits.begin(), digits.end());
    return lang_code + "o" + digits;
}

std::string pad_num(int v, int width) {
    std::string s = std::to_string(v);
    while (int(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

}  // namespace

SynthOutput generate_synthetic(const Config& cfg) {
    cfg.validate();
    const auto& sc = cfg.synth;
    std::vector<std::string> langs = cfg.language_list();
    langs.resize(size_t(sc.num_languages));

    Rng rng(cfg.run.seed ^ 0x73796e74ULL);

    // Topical sub-vocabularies over the shared latent space. Wide enough that
    // a single document covers only part of its topic's vocabulary; each doc
    // then concentrates on a small "core" subset, which is what makes one doc
    // distinguishable from its topic siblings.
    const int topical = std::min(std::max(24, sc.query_tokens * 8), sc.vocab_size);
    std::vector<std::vector<int>> topic_vocab(size_t(sc.topics));
    for (auto& tv : topic_vocab) {
        std::set<int> seen;
        while (int(seen.size()) < topical)
            seen.insert(int(rng.below(uint64_t(sc.vocab_size))));
        tv.assign(seen.begin(), seen.end());
    }

    struct LatentDoc {
        int topic, lang_idx;
        std::vector<int> core;              // doc-salient topical tokens
        std::vector<int> latents;          // primary-language content
        int mixed_lang_idx = -1;           // second language, or -1
        std::vector<int> mixed_latents;    // tokens also rendered in that language
        std::vector<std::string> markers;  // planted answer strings
    };

    std::vector<LatentDoc> latent_docs;
    latent_docs.reserve(size_t(sc.topics) * size_t(sc.docs_per_topic));
    for (int t = 0; t < sc.topics; ++t) {
        const auto& tv = topic_vocab[size_t(t)];
        for (int d = 0; d < sc.docs_per_topic; ++d) {
            LatentDoc doc;
            doc.topic = t;
            doc.lang_idx = int(rng.below(uint64_t(langs.size())));
            const int core_n = std::min(std::max(2, sc.query_tokens * 2), int(tv.size()));
            std::set<int> core_set;
            while (int(core_set.size()) < core_n) core_set.insert(tv[rng.below(tv.size())]);
            doc.core.assign(core_set.begin(), core_set.end());
            for (int i = 0; i < sc.doc_tokens; ++i) {
                if (rng.bernoulli(sc.noise_rate))
                    doc.latents.push_back(int(rng.below(uint64_t(sc.vocab_size))));
                else if (rng.bernoulli(0.7))
                    doc.latents.push_back(doc.core[rng.below(doc.core.size())]);
                else
                    doc.latents.push_back(tv[rng.below(tv.size())]);
            }
            if (langs.size() > 1 && rng.bernoulli(sc.code_mixed_rate)) {
                int other = int(rng.below(uint64_t(langs.size() - 1)));
                if (other >= doc.lang_idx) ++other;
                doc.mixed_lang_idx = other;
                // Half of the document's distinct tokens get a second
                // rendering: a partial lexical bridge, so cross-language
                // matching stays noisy and the alignment signal has to be
                // aggregated across documents.
                std::set<int> uniq(doc.latents.begin(), doc.latents.end());
                std::vector<int> u(uniq.begin(), uniq.end());
                rng.shuffle(u);
                u.resize(std::max<size_t>(1, u.size() / 2));
                std::sort(u.begin(), u.end());
                doc.mixed_latents = u;
            }
            latent_docs.push_back(std::move(doc));
        }
    }

    // Queries: salient latent tokens of one gold document, rendered in the
    // query's language. cross_lingual_leak controls how often that language
    // differs from the gold document's.
    struct LatentQuery {
        std::string id;
        int lang_idx;
        size_t gold_doc;
        std::vector<int> latents;
        std::string marker;
    };
    std::vector<LatentQuery> latent_queries;
    int qn = 0;
    for (int t = 0; t < sc.topics; ++t) {
        for (int qi = 0; qi < sc.queries_per_topic; ++qi) {
            LatentQuery q;
            q.id = "q" + pad_num(qn, 5);
            size_t gold = size_t(t) * size_t(sc.docs_per_topic) + rng.below(uint64_t(sc.docs_per_topic));
            q.gold_doc = gold;
            const LatentDoc& gd = latent_docs[gold];
            if (langs.size() > 1 && rng.bernoulli(sc.cross_lingual_leak)) {
                int other = int(rng.below(uint64_t(langs.size() - 1)));
                if (other >= gd.lang_idx) ++other;
                q.lang_idx = other;
            } else {
                q.lang_idx = gd.lang_idx;
            }
            // Query tokens are the gold document's salient (core) tokens that
            // actually made it into the doc; topic siblings share the topic
            // vocabulary but not this core, so the gold doc stays separable.
            std::set<int> core_set(gd.core.begin(), gd.core.end());
            std::vector<int> pool;
            for (int l : gd.latents)
                if (core_set.count(l)) pool.push_back(l);
            if (pool.empty()) pool = gd.latents;
            std::sort(pool.begin(), pool.end());
            pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
            for (int i = 0; i < sc.query_tokens; ++i)
                q.latents.push_back(pool[rng.below(pool.size())]);
            q.marker = "akmark" + pad_num(qn, 5) + "x";
            latent_docs[gold].markers.push_back(q.marker);
            latent_queries.push_back(std::move(q));
            ++qn;
        }
    }

    // Realize documents.
    SynthOutput out;
    for (size_t i = 0; i < latent_docs.size(); ++i) {
        const LatentDoc& ld = latent_docs[i];
        std::vector<std::string> tokens;
        for (int l : ld.latents) tokens.push_back(render_latent(l, ld.lang_idx, langs[size_t(ld.lang_idx)]));
        for (int l : ld.mixed_latents)
            tokens.push_back(render_latent(l, ld.mixed_lang_idx, langs[size_t(ld.mixed_lang_idx)]));
        for (const auto& marker : ld.markers) {
            size_t pos = rng.below(tokens.size() + 1);
            tokens.insert(tokens.begin() + ptrdiff_t(pos), marker);
        }
        Document doc;
        doc.id = "d" + pad_num(int(i), 5);
        doc.lang = langs[size_t(ld.lang_idx)];
        std::string text;
        for (const auto& tok : tokens) {
            if (!text.empty()) text.push_back(' ');
            text += tok;
        }
        doc.text = text;
        out.docs.add(std::move(doc));
    }

    for (const auto& lq : latent_queries) {
        Query q;
        q.id = lq.id;
        q.lang = langs[size_t(lq.lang_idx)];
        std::string text;
        for (int l : lq.latents) {
            if (!text.empty()) text.push_back(' ');
            text += render_latent(l, lq.lang_idx, langs[size_t(lq.lang_idx)]);
        }
        q.text = text;
        q.answers = {lq.marker};
        std::string gold_id = out.docs.at(lq.gold_doc).id;
        q.gold_doc_ids = {gold_id};
        out.gold_map.emplace_back(q.id, gold_id);
        out.queries.add(std::move(q));
    }
    return out;
}

void emit_synthetic(const SynthOutput& out, const std::string& dir) {
    std::filesystem::create_directories(dir);
    write_documents(out.docs, dir + "/docs.jsonl");
    write_queries(out.queries, dir + "/queries.jsonl");
    std::ofstream gold(dir + "/gold.tsv");
    if (!gold) throw FatalError("cannot write gold map: " + dir + "/gold.tsv");
    for (const auto& [qid, did] : out.gold_map) gold << qid << '\t' << did << '\n';
}

}  // namespace umr
