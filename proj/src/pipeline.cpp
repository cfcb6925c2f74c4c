#include "umr/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "umr/common.hpp"
#include "umr/index.hpp"

namespace fs = std::filesystem;

namespace umr {

namespace {

std::string iter_dir(int t) { return "iter_" + std::to_string(t); }

void atomic_rename(const std::string& from, const std::string& to) {
    std::error_code ec;
    fs::remove_all(to, ec);
    fs::rename(from, to);
}

}  // namespace

uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FatalError("cannot hash missing file: " + path);
    Fingerprint fp;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) fp.update(buf, size_t(in.gcount()));
    return fp.digest();
}

Pipeline::Pipeline(std::string state_dir, const DocumentCollection& docs, const QuerySet& queries,
                   const Config& cfg)
    : dir_(std::move(state_dir)), docs_(docs), queries_(queries), cfg_(cfg) {
    cfg_.validate();
    fs::create_directories(dir_);

    std::string lock = path(".lock");
    FILE* f = std::fopen(lock.c_str(), "wx");
    if (!f) throw FatalError("state directory is locked (or not writable): " + lock);
    std::fclose(f);
    locked_ = true;

    state_.dir = dir_;
    state_.config_hash = cfg_.hash();

    std::string snapshot = path("config.snapshot");
    if (fs::exists(snapshot)) {
        load_existing();
    } else {
        std::ofstream out(snapshot);
        out << cfg_.serialize();
        append_manifest("config", "config.snapshot");
        write_state();
    }
}

Pipeline::~Pipeline() {
    if (locked_) {
        std::error_code ec;
        fs::remove(path(".lock"), ec);
    }
}

std::string Pipeline::path(const std::string& rel) const { return dir_ + "/" + rel; }

void Pipeline::load_existing() {
    Config snap = load_config_file(path("config.snapshot"));
    if (snap.hash() != cfg_.hash())
        throw FatalError("config mismatch with existing state directory " + dir_ +
                         " (config hash changed mid-run)");

    manifest_.clear();
    std::ifstream mf(path("manifest"));
    std::string line;
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string role, rel, hash;
        if (!(ss >> role >> rel >> hash)) throw FatalError("malformed manifest line: " + line);
        std::string full = path(rel);
        if (!fs::exists(full))
            throw FatalError("manifest references missing artifact: " + full + " (role " + role + ")");
        if (to_hex(file_hash(full)) != hash)
            throw FatalError("manifest hash mismatch for " + full + " (role " + role + ")");
        manifest_.emplace_back(role, rel);
    }

    std::ifstream st(path("state"));
    if (st) {
        std::string key;
        while (st >> key) {
            if (key == "iteration") st >> state_.iteration;
            else if (key == "complete") { std::string v; st >> v; state_.complete = v == "true"; }
            else if (key == "config_hash") { std::string v; st >> v; }
        }
    }
}

void Pipeline::write_state() {
    std::string tmp = path("state.tmp");
    {
        std::ofstream out(tmp);
        out << "iteration " << state_.iteration << "\n";
        out << "complete " << (state_.complete ? "true" : "false") << "\n";
        out << "config_hash " << to_hex(state_.config_hash) << "\n";
    }
    atomic_rename(tmp, path("state"));

    std::string mtmp = path("manifest.tmp");
    {
        std::ofstream out(mtmp);
        for (const auto& [role, rel] : manifest_)
            out << role << '\t' << rel << '\t' << to_hex(file_hash(path(rel))) << '\n';
    }
    atomic_rename(mtmp, path("manifest"));
}

void Pipeline::append_manifest(const std::string& role, const std::string& rel_path) {
    for (auto& [r, p] : manifest_)
        if (p == rel_path) {
            r = role;
            return;
        }
    manifest_.emplace_back(role, rel_path);
}

const LexicalTeacher& Pipeline::teacher() {
    if (!teacher_ready_) {
        std::string tpath = path("teacher.bin");
        if (fs::exists(tpath)) {
            teacher_ = LexicalTeacher::load(tpath);
        } else {
            teacher_ = fit_lexical_teacher(docs_, queries_, cfg_);
            teacher_.save(tpath);
            append_manifest("teacher", "teacher.bin");
            write_state();
        }
        teacher_ready_ = true;
    }
    return teacher_;
}

PipelineState Pipeline::bootstrap(bool force) {
    if (state_.iteration >= 0 && !force)
        throw FatalError("bootstrap already completed in " + dir_ + " (use force to redo)");
    teacher();  // fit once, frozen across iterations

    std::string tmp = path("tmp_" + iter_dir(0));
    fs::create_directories(tmp);

    // Iteration-0 candidate pool.
    std::vector<RankedList> pool;
    if (cfg_.pipeline.bootstrap == "lexical") {
        Config bcfg = cfg_;
        bcfg.eval.target_language_only = false;  // bootstrap searches all languages
        LexicalRetriever lex(docs_, bcfg);
        pool = lex.retrieve_all(queries_, cfg_.index.top_k);
    } else {
        EncoderParams params = init_params(cfg_.encoder.dim, cfg_.corpus.feature_dim, cfg_.run.seed);
        VectorIndex idx = build_index(docs_, params, cfg_);
        std::vector<Embedding> embs(queries_.size());
        std::vector<std::string> ids(queries_.size());
        parallel_for(queries_.size(), cfg_.run.threads, [&](size_t i) {
            const Query& q = queries_.queries()[i];
            embs[i] = encode(params, Side::kQuery, featurize_text(q.text, q.lang, cfg_));
            ids[i] = q.id;
        });
        pool = batch_search(idx, embs, ids, cfg_.index.top_k, cfg_.run.threads);
    }
    write_run(pool, "bootstrap", tmp + "/run.retriever");

    // Iteration-0 checkpoint: the untrained student.
    EncoderParams params = init_params(cfg_.encoder.dim, cfg_.corpus.feature_dim, cfg_.run.seed);
    OptimizerState opt = init_optimizer(params, cfg_);
    save_checkpoint(params, opt, tmp + "/checkpoint");

    atomic_rename(tmp, path(iter_dir(0)));
    append_manifest("iter0.run.retriever", iter_dir(0) + "/run.retriever");
    append_manifest("iter0.checkpoint", iter_dir(0) + "/checkpoint");
    state_.iteration = 0;
    state_.complete = cfg_.pipeline.iterations == 0;
    write_state();
    return state_;
}

PipelineState Pipeline::run_iteration(bool force) {
    if (state_.iteration < 0) throw FatalError("run_iteration before bootstrap in " + dir_);
    int t = state_.iteration + 1;
    if (t > cfg_.pipeline.iterations && !force)
        throw FatalError("pipeline already complete (" + std::to_string(cfg_.pipeline.iterations) +
                         " iterations); use force to run more");
    if (fs::exists(path(iter_dir(t))) && !force)
        throw FatalError("refusing to overwrite existing " + path(iter_dir(t)) +
                         " (use force)");
    const LexicalTeacher& model = teacher();

    std::string tmp = path("tmp_" + iter_dir(t));
    fs::create_directories(tmp);

    // Candidate pool produced by the previous iteration's retriever.
    std::vector<RankedList> pool = read_run(path(iter_dir(t - 1) + "/run.retriever"));

    InstructionTemplate inst(cfg_.teacher.instruction, cfg_.language_list());
    std::vector<RankedList> reranked = rerank_all(model, queries_, pool, docs_, cfg_, inst);
    write_run(reranked, "teacher", tmp + "/run.teacher");

    // Student continues from the previous checkpoint unless reinit is set.
    EncoderParams params;
    OptimizerState opt;
    if (cfg_.pipeline.reinit_each_iteration) {
        params = init_params(cfg_.encoder.dim, cfg_.corpus.feature_dim, cfg_.run.seed);
        opt = init_optimizer(params, cfg_);
    } else {
        load_checkpoint(path(iter_dir(t - 1) + "/checkpoint"), params, opt);
    }

    uint64_t batch_seed = mix64(cfg_.run.seed + uint64_t(t));
    std::vector<std::string> warnings;
    std::vector<TrainBatch> batches =
        assemble_batches(queries_, reranked, docs_, cfg_, batch_seed, &warnings);
    if (batches.empty())
        throw FatalError("iteration " + std::to_string(t) +
                         ": no full training batches (too few queries for batch size)");
    TrainingReport report = train(params, opt, batches, cfg_);
    report.write(tmp + "/train.report");
    save_checkpoint(params, opt, tmp + "/checkpoint");

    // Index refresh with the new checkpoint; retrieval pool for the next
    // iteration (and for evaluation of this one).
    VectorIndex idx = build_index(docs_, params, cfg_);
    std::vector<Embedding> embs(queries_.size());
    std::vector<std::string> ids(queries_.size());
    parallel_for(queries_.size(), cfg_.run.threads, [&](size_t i) {
        const Query& q = queries_.queries()[i];
        embs[i] = encode(params, Side::kQuery, featurize_text(q.text, q.lang, cfg_));
        ids[i] = q.id;
    });
    std::vector<RankedList> run = batch_search(idx, embs, ids, cfg_.index.top_k, cfg_.run.threads);
    write_run(run, "retriever", tmp + "/run.retriever");
    save_index(idx, tmp + "/index");

    atomic_rename(tmp, path(iter_dir(t)));
    std::string p = iter_dir(t);
    append_manifest("iter" + std::to_string(t) + ".run.teacher", p + "/run.teacher");
    append_manifest("iter" + std::to_string(t) + ".train.report", p + "/train.report");
    append_manifest("iter" + std::to_string(t) + ".checkpoint", p + "/checkpoint");
    append_manifest("iter" + std::to_string(t) + ".run.retriever", p + "/run.retriever");
    append_manifest("iter" + std::to_string(t) + ".index", p + "/index");
    state_.iteration = t;
    state_.complete = t >= cfg_.pipeline.iterations;
    write_state();
    return state_;
}

PipelineState Pipeline::run_all(bool force) {
    if (state_.iteration < 0) bootstrap(force);
    while (state_.iteration < cfg_.pipeline.iterations) run_iteration(force);
    state_.complete = true;
    write_state();
    return state_;
}

PipelineState Pipeline::resume(const std::string& state_dir) {
    PipelineState st;
    st.dir = state_dir;
    std::ifstream mf(state_dir + "/manifest");
    if (!mf) throw FatalError("no manifest in state directory: " + state_dir);
    std::string line;
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string role, rel, hash;
        if (!(ss >> role >> rel >> hash)) throw FatalError("malformed manifest line: " + line);
        std::string full = state_dir + "/" + rel;
        if (!fs::exists(full))
            throw FatalError("manifest references missing artifact: " + full + " (role " + role + ")");
        if (to_hex(file_hash(full)) != hash)
            throw FatalError("manifest hash mismatch for " + full + " (role " + role + ")");
    }
    std::ifstream stf(state_dir + "/state");
    if (!stf) throw FatalError("no state file in " + state_dir);
    std::string key;
    while (stf >> key) {
        if (key == "iteration") stf >> st.iteration;
        else if (key == "complete") { std::string v; stf >> v; st.complete = v == "true"; }
        else if (key == "config_hash") { std::string v; stf >> v; }
    }
    return st;
}

}  // namespace umr
