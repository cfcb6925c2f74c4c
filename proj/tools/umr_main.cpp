#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "umr/common.hpp"
#include "umr/config.hpp"
#include "umr/corpus.hpp"
#include "umr/distill.hpp"
#include "umr/encoder.hpp"
#include "umr/evalkit.hpp"
#include "umr/index.hpp"
#include "umr/pipeline.hpp"
#include "umr/synthgen.hpp"
#include "umr/teacher.hpp"

namespace {

using namespace umr;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    int64_t seed = -1;
    int threads = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "Config file ([section] key = value)");
    cmd->add_option("--set", opts.overrides, "Override a config key: section.key=value")
        ->type_size(1)
        ->allow_extra_args(false);
    cmd->add_option("--seed", opts.seed, "Seed controlling all randomness (run.seed)");
    cmd->add_option("--threads", opts.threads,
                    "Worker threads (run.threads; 0 = UMR_THREADS env or all cores)");
}

Config make_config(const CommonOpts& opts) {
    Config cfg;
    if (!opts.config_path.empty()) cfg = load_config_file(opts.config_path);
    for (const auto& o : opts.overrides) apply_override(cfg, o);
    if (opts.seed >= 0) cfg.run.seed = uint64_t(opts.seed);
    if (opts.threads >= 0) cfg.run.threads = opts.threads;
    cfg.validate();
    return cfg;
}

std::vector<RankedList> encoder_retrieve(const DocumentCollection& docs, const QuerySet& queries,
                                         const EncoderParams& params, const Config& cfg, int k) {
    VectorIndex idx = build_index(docs, params, cfg);
    std::vector<Embedding> embs(queries.size());
    std::vector<std::string> ids(queries.size());
    parallel_for(queries.size(), cfg.run.threads, [&](size_t i) {
        const Query& q = queries.queries()[i];
        embs[i] = encode(params, Side::kQuery, featurize_text(q.text, q.lang, cfg));
        ids[i] = q.id;
    });
    return batch_search(idx, embs, ids, k, cfg.run.threads);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"umr - unsupervised multilingual dense retrieval trainer"};
    app.require_subcommand(1);

    CommonOpts common;
    add_common(&app, common);  // global options may precede the subcommand

    // Config keys read per module, spelled out in each subcommand's help.
    const std::string kCorpusKeys =
        "corpus.feature_dim corpus.hash_seed corpus.max_seq_len corpus.languages "
        "corpus.char_level_languages corpus.ngram_orders";
    const std::string kEncoderKeys =
        "encoder.dim encoder.lr encoder.beta1 encoder.beta2 encoder.eps encoder.weight_decay";
    const std::string kIndexKeys = "index.top_k";
    const std::string kTeacherKeys = "teacher.alpha teacher.smoothing teacher.em_iterations teacher.instruction";
    const std::string kDistillKeys =
        "distill.batch_size distill.docs_per_query distill.temperature distill.epochs "
        "distill.grad_accum_steps distill.neg_logit distill.in_batch_negatives";
    const std::string kPipelineKeys =
        "pipeline.iterations pipeline.bootstrap pipeline.reinit_each_iteration";
    const std::string kEvalKeys = "eval.bm25_k1 eval.bm25_b eval.target_language_only";
    const std::string kSynthKeys =
        "synth.num_languages synth.topics synth.docs_per_topic synth.queries_per_topic "
        "synth.vocab_size synth.cross_lingual_leak synth.noise_rate synth.code_mixed_rate "
        "synth.doc_tokens synth.query_tokens";
    const std::string kRunKeys = "run.seed run.threads";
    const std::string kAllKeys = kCorpusKeys + " " + kEncoderKeys + " " + kIndexKeys + " " +
                                 kTeacherKeys + " " + kDistillKeys + " " + kPipelineKeys + " " +
                                 kEvalKeys + " " + kRunKeys;

    // synth
    auto* synth = app.add_subcommand(
        "synth", "Generate a seeded synthetic multilingual corpus.\nReads: " + kSynthKeys + " corpus.languages " + kRunKeys);
    std::string synth_out;
    synth->add_option("--out", synth_out, "Output directory")->required();
    add_common(synth, common);

    // ingest
    auto* ingest = app.add_subcommand(
        "ingest", "Validate document/query files.\nReads: " + kCorpusKeys);
    std::string in_docs_path, in_queries_path, in_report_path;
    ingest->add_option("--docs", in_docs_path, "Documents JSONL");
    ingest->add_option("--queries", in_queries_path, "Queries JSONL");
    ingest->add_option("--reject-report", in_report_path, "Write rejected lines here");
    add_common(ingest, common);

    // fit-teacher
    auto* fitt = app.add_subcommand(
        "fit-teacher", "Fit the lexical likelihood teacher.\nReads: " + kCorpusKeys + " " + kTeacherKeys + " " + kRunKeys);
    std::string ft_docs, ft_queries, ft_out;
    fitt->add_option("--docs", ft_docs)->required();
    fitt->add_option("--queries", ft_queries)->required();
    fitt->add_option("--out", ft_out, "Teacher model file")->required();
    add_common(fitt, common);

    // bootstrap
    auto* boot = app.add_subcommand(
        "bootstrap", "Produce the iteration-0 pool.\nReads: " + kAllKeys);
    std::string bs_docs, bs_queries, bs_state;
    bool bs_force = false;
    boot->add_option("--docs", bs_docs)->required();
    boot->add_option("--queries", bs_queries)->required();
    boot->add_option("--state", bs_state, "State directory")->required();
    boot->add_flag("--force", bs_force, "Redo even if already bootstrapped");
    add_common(boot, common);

    // iterate
    auto* iter = app.add_subcommand(
        "iterate", "Run one rerank+distill+refresh iteration.\nReads: " + kAllKeys);
    std::string it_docs, it_queries, it_state;
    bool it_force = false;
    iter->add_option("--docs", it_docs)->required();
    iter->add_option("--queries", it_queries)->required();
    iter->add_option("--state", it_state)->required();
    iter->add_flag("--force", it_force, "Overwrite an existing iteration");
    add_common(iter, common);

    // pipeline
    auto* pipe = app.add_subcommand(
        "pipeline", "Bootstrap, then rerank/distill/refresh iterations.\nReads: " + kAllKeys);
    std::string pl_docs, pl_queries, pl_state;
    bool pl_force = false;
    pipe->add_option("--docs", pl_docs)->required();
    pipe->add_option("--queries", pl_queries)->required();
    pipe->add_option("--state", pl_state)->required();
    pipe->add_flag("--force", pl_force, "Overwrite existing iterations");
    add_common(pipe, common);

    // retrieve
    auto* retr = app.add_subcommand(
        "retrieve", "Retrieve top-k.\nReads: " + kCorpusKeys + " " + kEncoderKeys + " " + kIndexKeys + " " + kEvalKeys + " " + kRunKeys);
    std::string rt_docs, rt_queries, rt_ckpt, rt_out;
    bool rt_lexical = false;
    int rt_k = 0;
    retr->add_option("--docs", rt_docs)->required();
    retr->add_option("--queries", rt_queries)->required();
    retr->add_option("--checkpoint", rt_ckpt, "Encoder checkpoint (omit with --lexical)");
    retr->add_flag("--lexical", rt_lexical, "Use the BM25 baseline retriever");
    retr->add_option("--k", rt_k, "Override index.top_k");
    retr->add_option("--out", rt_out, "Run file")->required();
    add_common(retr, common);

    // rerank
    auto* rr = app.add_subcommand(
        "rerank", "Teacher-rerank a run file.\nReads: " + kCorpusKeys + " " + kTeacherKeys + " " + kRunKeys);
    std::string rr_docs, rr_queries, rr_teacher, rr_in, rr_out;
    rr->add_option("--docs", rr_docs)->required();
    rr->add_option("--queries", rr_queries)->required();
    rr->add_option("--teacher", rr_teacher, "Teacher model file")->required();
    rr->add_option("--run", rr_in, "Input run file")->required();
    rr->add_option("--out", rr_out, "Output run file")->required();
    add_common(rr, common);

    // eval
    auto* ev = app.add_subcommand(
        "eval", "Score a run file with recall@k or recall@kt.\nReads: " + kCorpusKeys + " " + kEvalKeys);
    std::string ev_docs, ev_queries, ev_run, ev_metric = "recall@k", ev_machine_out;
    std::vector<int> ev_k{10}, ev_kt;
    ev->add_option("--docs", ev_docs)->required();
    ev->add_option("--queries", ev_queries)->required();
    ev->add_option("--run", ev_run)->required();
    ev->add_option("--metric", ev_metric, "recall@k | recall@kt");
    ev->add_option("--k", ev_k, "k values for recall@k")->take_all();
    ev->add_option("--kt", ev_kt, "token budgets for recall@kt (e.g. 2000 5000)")->take_all();
    ev->add_option("--machine-out", ev_machine_out, "Also write machine-readable lines here");
    add_common(ev, common);

    // compare
    auto* cmp = app.add_subcommand(
        "compare", "Per-language metric deltas between two runs.\nReads: " + kCorpusKeys + " " + kEvalKeys);
    std::string cp_docs, cp_queries, cp_a, cp_b;
    std::vector<int> cp_k{10};
    cmp->add_option("--docs", cp_docs)->required();
    cmp->add_option("--queries", cp_queries)->required();
    cmp->add_option("--run-a", cp_a)->required();
    cmp->add_option("--run-b", cp_b)->required();
    cmp->add_option("--k", cp_k)->take_all();
    add_common(cmp, common);

    // inspect-checkpoint
    auto* insp = app.add_subcommand("inspect-checkpoint", "Print checkpoint header fields");
    std::string in_ckpt;
    insp->add_option("--checkpoint", in_ckpt)->required();
    add_common(insp, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the message and usage hint
        return 1;
    }

    try {
        Config cfg = make_config(common);

        if (*synth) {
            SynthOutput out = generate_synthetic(cfg);
            emit_synthetic(out, synth_out);
            std::cout << "wrote " << out.docs.size() << " docs, " << out.queries.size()
                      << " queries to " << synth_out << "\n";
        } else if (*ingest) {
            if (in_docs_path.empty() && in_queries_path.empty())
                throw ValidationError("ingest: provide --docs and/or --queries");
            RejectReport report;
            if (!in_docs_path.empty()) {
                DocumentCollection docs = ingest_documents(in_docs_path, cfg, &report);
                std::cout << "documents: " << docs.size() << " accepted, " << report.lines.size()
                          << " rejected\n";
            }
            size_t doc_rejects = report.lines.size();
            if (!in_queries_path.empty()) {
                QuerySet qs = umr::ingest_queries(in_queries_path, cfg, &report);
                std::cout << "queries: " << qs.size() << " accepted, "
                          << report.lines.size() - doc_rejects << " rejected\n";
            }
            if (!in_report_path.empty()) report.write(in_report_path);
        } else if (*fitt) {
            DocumentCollection docs = ingest_documents(ft_docs, cfg, nullptr);
            QuerySet qs = umr::ingest_queries(ft_queries, cfg, nullptr);
            LexicalTeacher model = fit_lexical_teacher(docs, qs, cfg);
            model.save(ft_out);
            std::cout << "teacher fitted on " << docs.size() << " docs / " << qs.size()
                      << " queries -> " << ft_out << "\n";
        } else if (*boot) {
            DocumentCollection docs = ingest_documents(bs_docs, cfg, nullptr);
            QuerySet qs = umr::ingest_queries(bs_queries, cfg, nullptr);
            Pipeline p(bs_state, docs, qs, cfg);
            PipelineState st = p.bootstrap(bs_force);
            std::cout << "bootstrap complete, iteration " << st.iteration << "\n";
        } else if (*iter) {
            DocumentCollection docs = ingest_documents(it_docs, cfg, nullptr);
            QuerySet qs = umr::ingest_queries(it_queries, cfg, nullptr);
            Pipeline p(it_state, docs, qs, cfg);
            PipelineState st = p.run_iteration(it_force);
            std::cout << "iteration " << st.iteration << (st.complete ? " (complete)" : "")
                      << "\n";
        } else if (*pipe) {
            DocumentCollection docs = ingest_documents(pl_docs, cfg, nullptr);
            QuerySet qs = umr::ingest_queries(pl_queries, cfg, nullptr);
            Pipeline p(pl_state, docs, qs, cfg);
            PipelineState st = p.run_all(pl_force);
            std::cout << "pipeline complete at iteration " << st.iteration << "\n";
        } else if (*retr) {
            DocumentCollection docs = ingest_documents(rt_docs, cfg, nullptr);
            QuerySet qs = umr::ingest_queries(rt_queries, cfg, nullptr);
            int k = rt_k > 0 ? rt_k : cfg.index.top_k;
            std::vector<RankedList> run;
            std::string tag;
            if (rt_lexical) {
                LexicalRetriever lex(docs, cfg);
                run = lex.retrieve_all(qs, k);
                tag = "lexical";
            } else {
                if (rt_ckpt.empty())
                    throw ValidationError("retrieve: --checkpoint required without --lexical");
                EncoderParams params;
                OptimizerState opt;
                load_checkpoint(rt_ckpt, params, opt);
                run = encoder_retrieve(docs, qs, params, cfg, k);
                tag = "retriever";
            }
            write_run(run, tag, rt_out);
            std::cout << "wrote " << run.size() << " ranked lists to " << rt_out << "\n";
        } else if (*rr) {
            DocumentCollection docs = ingest_documents(rr_docs, cfg, nullptr);
            QuerySet qs = umr::ingest_queries(rr_queries, cfg, nullptr);
            LexicalTeacher model = LexicalTeacher::load(rr_teacher);
            std::vector<RankedList> input = read_run(rr_in);
            InstructionTemplate inst(cfg.teacher.instruction, cfg.language_list());
            std::vector<RankedList> out = rerank_all(model, qs, input, docs, cfg, inst);
            write_run(out, "teacher", rr_out);
            std::cout << "reranked " << out.size() << " lists -> " << rr_out << "\n";
        } else if (*ev) {
            DocumentCollection docs = ingest_documents(ev_docs, cfg, nullptr);
            QuerySet qs = umr::ingest_queries(ev_queries, cfg, nullptr);
            std::vector<RankedList> run = read_run(ev_run);
            std::string machine;
            if (ev_metric == "recall@k") {
                for (int k : ev_k) {
                    MetricReport r = recall_at_k(run, qs, docs, k);
                    std::cout << r.table();
                    machine += r.machine_lines();
                }
            } else if (ev_metric == "recall@kt") {
                if (ev_kt.empty()) throw ValidationError("eval: --kt required for recall@kt");
                for (int kt : ev_kt) {
                    MetricReport r = recall_at_kt(run, qs, docs, kt);
                    std::cout << r.table();
                    machine += r.machine_lines();
                }
            } else {
                throw ValidationError("eval: unknown metric '" + ev_metric + "'");
            }
            if (!ev_machine_out.empty()) {
                std::ofstream mo(ev_machine_out);
                mo << machine;
            }
            std::cout << machine;
        } else if (*cmp) {
            DocumentCollection docs = ingest_documents(cp_docs, cfg, nullptr);
            QuerySet qs = umr::ingest_queries(cp_queries, cfg, nullptr);
            std::vector<RankedList> a = read_run(cp_a), b = read_run(cp_b);
            for (const auto& d : compare_runs(a, b, qs, docs, cp_k)) {
                std::cout << d.metric << " delta (b - a):\n";
                for (const auto& [lang, v] : d.per_language)
                    std::cout << "  " << lang << "  " << v << "\n";
                std::cout << "  macro  " << d.macro_delta << "\n";
            }
        } else if (*insp) {
            EncoderParams params;
            OptimizerState opt;
            load_checkpoint(in_ckpt, params, opt);
            std::cout << "dim " << params.dim << "\n"
                      << "feature_dim " << params.feature_dim << "\n"
                      << "init_seed " << params.init_seed << "\n"
                      << "step " << opt.step << "\n"
                      << "fingerprint " << to_hex(params_fingerprint(params)) << "\n";
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const FatalError& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
