#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "umr/common.hpp"
#include "umr/pipeline.hpp"
#include "umr/synthgen.hpp"

using namespace umr;
namespace fs = std::filesystem;

namespace {

Config pipe_cfg() {
    Config cfg;
    cfg.corpus.feature_dim = 1 << 10;
    cfg.corpus.char_level_languages = "";
    cfg.encoder.dim = 16;
    cfg.index.top_k = 20;
    cfg.distill.batch_size = 4;
    cfg.distill.docs_per_query = 4;
    cfg.distill.epochs = 2;
    cfg.pipeline.iterations = 2;
    cfg.synth.topics = 8;
    cfg.synth.docs_per_topic = 6;
    cfg.synth.queries_per_topic = 2;
    cfg.synth.num_languages = 2;
    return cfg;
}

struct Fixture {
    Config cfg = pipe_cfg();
    SynthOutput corpus;
    fs::path dir;

    explicit Fixture(const std::string& name) : corpus(generate_synthetic(cfg)) {
        dir = fs::temp_directory_path() / name;
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("bootstrap writes the iteration-0 pool and initial checkpoint") {
    Fixture fx("umr_pipe_boot");
    Pipeline p(fx.dir.string(), fx.corpus.docs, fx.corpus.queries, fx.cfg);
    PipelineState st = p.bootstrap();
    CHECK(st.iteration == 0);
    CHECK(fs::exists(fx.dir / "iter_0" / "run.retriever"));
    CHECK(fs::exists(fx.dir / "iter_0" / "checkpoint"));
    CHECK(fs::exists(fx.dir / "teacher.bin"));
    CHECK(fs::exists(fx.dir / "config.snapshot"));
    std::string tag;
    auto run = read_run((fx.dir / "iter_0" / "run.retriever").string(), &tag);
    CHECK(tag == "bootstrap");
    CHECK(run.size() == fx.corpus.queries.size());

    // gold docs present in the bootstrap pool for most queries
    int hits = 0;
    for (const auto& rl : run) {
        const Query* q = fx.corpus.queries.find(rl.query_id);
        for (const auto& e : rl.entries)
            if (e.doc_id == q->gold_doc_ids[0]) {
                ++hits;
                break;
            }
    }
    CHECK(hits >= int(run.size() / 2));
}

TEST_CASE("run_iteration produces artifacts and advances state") {
    Fixture fx("umr_pipe_iter");
    Pipeline p(fx.dir.string(), fx.corpus.docs, fx.corpus.queries, fx.cfg);
    p.bootstrap();
    PipelineState st = p.run_iteration();
    CHECK(st.iteration == 1);
    for (const char* f : {"run.teacher", "train.report", "checkpoint", "run.retriever"})
        CHECK(fs::exists(fx.dir / "iter_1" / f));
    std::string tag;
    auto teacher_run = read_run((fx.dir / "iter_1" / "run.teacher").string(), &tag);
    CHECK(tag == "teacher");
    CHECK(teacher_run.front().source == RankSource::kTeacher);

    // re-running completed stages without force refuses
    CHECK_THROWS_AS(p.bootstrap(), FatalError);
}

TEST_CASE("default config runs exactly the configured iterations then stops") {
    Fixture fx("umr_pipe_all");
    Pipeline p(fx.dir.string(), fx.corpus.docs, fx.corpus.queries, fx.cfg);
    PipelineState st = p.run_all();
    CHECK(st.iteration == 2);
    CHECK(st.complete);
    CHECK(fs::exists(fx.dir / "iter_2" / "checkpoint"));
    CHECK_FALSE(fs::exists(fx.dir / "iter_3"));

    // resume on the finished directory reports complete and changes nothing
    PipelineState rs = Pipeline::resume(fx.dir.string());
    CHECK(rs.complete);
    CHECK(rs.iteration == 2);
}

TEST_CASE("fingerprint chain links checkpoints to consumed indexes") {
    Fixture fx("umr_pipe_chain");
    Pipeline p(fx.dir.string(), fx.corpus.docs, fx.corpus.queries, fx.cfg);
    p.run_all();
    for (int t = 1; t <= 2; ++t) {
        EncoderParams params;
        OptimizerState opt;
        load_checkpoint((fx.dir / ("iter_" + std::to_string(t)) / "checkpoint").string(), params,
                        opt);
        VectorIndex idx =
            load_index((fx.dir / ("iter_" + std::to_string(t)) / "index").string(),
                       params_fingerprint(params));
        CHECK(idx.encoder_fingerprint == params_fingerprint(params));
    }
}

TEST_CASE("interrupted run resumes to the same final checkpoint") {
    Fixture fx("umr_pipe_resume_a");
    {
        Pipeline p(fx.dir.string(), fx.corpus.docs, fx.corpus.queries, fx.cfg);
        p.bootstrap();
        p.run_iteration();
    }  // destructor releases the lock; iteration 2 never ran
    {
        Pipeline p(fx.dir.string(), fx.corpus.docs, fx.corpus.queries, fx.cfg);
        PipelineState st = p.run_all();
        CHECK(st.iteration == 2);
    }
    Fixture fy("umr_pipe_resume_b");
    Pipeline q(fy.dir.string(), fy.corpus.docs, fy.corpus.queries, fy.cfg);
    q.run_all();
    CHECK(slurp(fx.dir / "iter_2" / "checkpoint") == slurp(fy.dir / "iter_2" / "checkpoint"));
    CHECK(slurp(fx.dir / "iter_2" / "run.retriever") ==
          slurp(fy.dir / "iter_2" / "run.retriever"));
}

TEST_CASE("manifest tampering is fatal and names the file") {
    Fixture fx("umr_pipe_tamper");
    {
        Pipeline p(fx.dir.string(), fx.corpus.docs, fx.corpus.queries, fx.cfg);
        p.run_all();
    }
    fs::remove(fx.dir / "iter_1" / "checkpoint");
    try {
        Pipeline::resume(fx.dir.string());
        FAIL("expected FatalError");
    } catch (const FatalError& e) {
        CHECK(std::string(e.what()).find("checkpoint") != std::string::npos);
    }
}

TEST_CASE("config change on an existing state dir is fatal") {
    Fixture fx("umr_pipe_cfg");
    {
        Pipeline p(fx.dir.string(), fx.corpus.docs, fx.corpus.queries, fx.cfg);
        p.bootstrap();
    }
    Config other = fx.cfg;
    other.distill.temperature = 0.5;
    CHECK_THROWS_AS(
        Pipeline(fx.dir.string(), fx.corpus.docs, fx.corpus.queries, other), FatalError);
}

TEST_CASE("lock file prevents concurrent ownership") {
    Fixture fx("umr_pipe_lock");
    Pipeline p(fx.dir.string(), fx.corpus.docs, fx.corpus.queries, fx.cfg);
    CHECK_THROWS_AS(
        Pipeline(fx.dir.string(), fx.corpus.docs, fx.corpus.queries, fx.cfg), FatalError);
}

TEST_CASE("encoder bootstrap is deterministic and distinct from lexical") {
    Fixture fx("umr_pipe_encboot");
    fx.cfg.pipeline.bootstrap = "encoder";
    Pipeline p(fx.dir.string(), fx.corpus.docs, fx.corpus.queries, fx.cfg);
    p.bootstrap();
    std::string run1 = slurp(fx.dir / "iter_0" / "run.retriever");

    Fixture fy("umr_pipe_encboot2");
    fy.cfg.pipeline.bootstrap = "encoder";
    Pipeline q(fy.dir.string(), fy.corpus.docs, fy.corpus.queries, fy.cfg);
    q.bootstrap();
    CHECK(run1 == slurp(fy.dir / "iter_0" / "run.retriever"));
}

TEST_CASE("degenerate one-doc corpus still completes") {
    Config cfg = pipe_cfg();
    cfg.distill.batch_size = 1;
    cfg.distill.docs_per_query = 1;
    DocumentCollection docs;
    Document d;
    d.id = "d0";
    d.lang = "ar";
    d.text = "solo document text";
    docs.add(d);
    QuerySet queries;
    Query q;
    q.id = "q0";
    q.lang = "ar";
    q.text = "solo";
    q.gold_doc_ids = {"d0"};
    queries.add(q);
    fs::path dir = fs::temp_directory_path() / "umr_pipe_degenerate";
    fs::remove_all(dir);
    fs::create_directories(dir);
    Pipeline p(dir.string(), docs, queries, cfg);
    PipelineState st = p.run_all();
    CHECK(st.complete);
    auto run = read_run((dir / "iter_2" / "run.retriever").string());
    REQUIRE(run.size() == 1);
    CHECK(run[0].entries.size() == 1);
    CHECK(run[0].entries[0].doc_id == "d0");
}
