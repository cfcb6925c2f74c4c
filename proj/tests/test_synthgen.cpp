#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "umr/common.hpp"
#include "umr/evalkit.hpp"
#include "umr/synthgen.hpp"

using namespace umr;

namespace {

Config synth_cfg() {
    Config cfg;
    cfg.corpus.char_level_languages = "";
    cfg.synth.topics = 12;
    cfg.synth.docs_per_topic = 8;
    cfg.synth.queries_per_topic = 2;
    return cfg;
}

std::set<std::string> surface_tokens(const std::string& text) {
    std::set<std::string> out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) out.insert(tok);
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("same seed gives byte-identical corpora") {
    Config cfg = synth_cfg();
    SynthOutput a = generate_synthetic(cfg);
    SynthOutput b = generate_synthetic(cfg);
    CHECK(a.docs == b.docs);
    CHECK(a.queries == b.queries);
    CHECK(a.gold_map == b.gold_map);
    cfg.run.seed += 1;
    SynthOutput c = generate_synthetic(cfg);
    CHECK_FALSE(a.docs == c.docs);
}

TEST_CASE("every query has exactly one gold doc present in the collection") {
    Config cfg = synth_cfg();
    SynthOutput out = generate_synthetic(cfg);
    CHECK(out.queries.size() == size_t(cfg.synth.topics * cfg.synth.queries_per_topic));
    for (const auto& q : out.queries.queries()) {
        REQUIRE(q.gold_doc_ids.size() == 1);
        CHECK(out.docs.find(q.gold_doc_ids[0]) != nullptr);
        REQUIRE(q.answers.size() == 1);
    }
    CHECK(out.gold_map.size() == out.queries.size());
    for (const auto& [qid, did] : out.gold_map) {
        const Query* q = out.queries.find(qid);
        REQUIRE(q != nullptr);
        CHECK(q->gold_doc_ids[0] == did);
    }
}

TEST_CASE("answers are markers planted in the gold doc") {
    Config cfg = synth_cfg();
    SynthOutput out = generate_synthetic(cfg);
    for (const auto& q : out.queries.queries()) {
        const Document* gold = out.docs.find(q.gold_doc_ids[0]);
        CHECK(gold->text.find(q.answers[0]) != std::string::npos);
        CHECK(q.answers[0].find("akmark") == 0);
    }
}

TEST_CASE("full leak removes surface overlap between query and gold doc") {
    Config cfg = synth_cfg();
    cfg.synth.cross_lingual_leak = 1.0;
    cfg.synth.code_mixed_rate = 0.0;
    SynthOutput out = generate_synthetic(cfg);
    int checked = 0;
    for (const auto& q : out.queries.queries()) {
        const Document* gold = out.docs.find(q.gold_doc_ids[0]);
        if (q.lang == gold->lang) continue;  // leak must make these differ
        auto qt = surface_tokens(q.text);
        auto dt = surface_tokens(gold->text);
        for (const auto& t : qt) CHECK(dt.count(t) == 0);
        ++checked;
    }
    CHECK(checked == int(out.queries.size()));
}

TEST_CASE("languages render disjoint surface vocabularies") {
    Config cfg = synth_cfg();
    cfg.synth.code_mixed_rate = 0.0;
    SynthOutput out = generate_synthetic(cfg);
    std::map<std::string, std::set<std::string>> vocab_by_lang;
    for (const auto& d : out.docs.docs())
        for (const auto& t : surface_tokens(d.text))
            if (t.find("akmark") != 0) vocab_by_lang[d.lang].insert(t);
    REQUIRE(vocab_by_lang.size() == size_t(cfg.synth.num_languages));
    for (auto it = vocab_by_lang.begin(); it != vocab_by_lang.end(); ++it)
        for (auto jt = std::next(it); jt != vocab_by_lang.end(); ++jt)
            for (const auto& t : it->second) CHECK(jt->second.count(t) == 0);
}

TEST_CASE("monolingual no-leak corpus is easy for bm25") {
    Config cfg = synth_cfg();
    cfg.synth.num_languages = 1;
    cfg.synth.cross_lingual_leak = 0.0;
    cfg.synth.topics = 20;
    SynthOutput out = generate_synthetic(cfg);
    LexicalRetriever lr(out.docs, cfg);
    auto run = lr.retrieve_all(out.queries, 10);
    MetricReport r = recall_at_k(run, out.queries, out.docs, 10);
    // sanity ceiling, pinned: topical BM25 recovers most gold docs
    CHECK(r.macro_average >= 0.8);
}

TEST_CASE("emit round-trips byte-identically") {
    Config cfg = synth_cfg();
    SynthOutput out = generate_synthetic(cfg);
    auto dir1 = std::filesystem::temp_directory_path() / "umr_synth_a";
    auto dir2 = std::filesystem::temp_directory_path() / "umr_synth_b";
    emit_synthetic(out, dir1.string());
    RejectReport report;
    SynthOutput back;
    back.docs = ingest_documents((dir1 / "docs.jsonl").string(), cfg, &report);
    back.queries = ingest_queries((dir1 / "queries.jsonl").string(), cfg, &report);
    back.gold_map = out.gold_map;
    CHECK(report.lines.empty());
    emit_synthetic(back, dir2.string());
    for (const char* name : {"docs.jsonl", "queries.jsonl", "gold.tsv"})
        CHECK(read_file((dir1 / name).string()) == read_file((dir2 / name).string()));

    // line counts match configured totals
    std::istringstream docs_in(read_file((dir1 / "docs.jsonl").string()));
    int lines = 0;
    std::string line;
    while (std::getline(docs_in, line)) ++lines;
    CHECK(lines == cfg.synth.topics * cfg.synth.docs_per_topic);
}
