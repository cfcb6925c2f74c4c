#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

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

namespace py = pybind11;
using namespace umr;

namespace {

Config config_from_overrides(const std::vector<std::string>& overrides) {
    Config cfg;
    for (const auto& o : overrides) apply_override(cfg, o);
    cfg.validate();
    return cfg;
}

Mat mat_from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw FatalError("empty matrix");
    Mat m(rows.size(), rows[0].size());
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != m.cols) throw FatalError("ragged matrix");
        for (size_t j = 0; j < m.cols; ++j) m.at(i, j) = rows[i][j];
    }
    return m;
}

std::vector<std::vector<double>> rows_from_mat(const Mat& m) {
    std::vector<std::vector<double>> out(m.rows, std::vector<double>(m.cols));
    for (size_t i = 0; i < m.rows; ++i)
        for (size_t j = 0; j < m.cols; ++j) out[i][j] = m.at(i, j);
    return out;
}

}  // namespace

PYBIND11_MODULE(_umr, m) {
    m.doc() = "Unsupervised multilingual dense retrieval trainer (core operations)";

    py::register_exception<ValidationError>(m, "ValidationError");
    py::register_exception<FatalError>(m, "FatalError");

    py::class_<Config>(m, "Config")
        .def(py::init<>())
        .def_static("from_overrides", &config_from_overrides, py::arg("overrides"))
        .def("validate", &Config::validate)
        .def("serialize", &Config::serialize)
        .def("hash", &Config::hash);

    m.def("load_config_file",
          [](const std::string& path) { return load_config_file(path); });
    m.def("apply_override", &apply_override);

    m.def(
        "tokenize",
        [](const std::string& text, const std::string& lang, int max_seq_len,
           const std::vector<std::string>& char_level_langs) {
            TokenSeq ts = tokenize(text, lang, max_seq_len, char_level_langs);
            return py::make_tuple(ts.tokens, ts.truncated_at);
        },
        py::arg("text"), py::arg("lang"), py::arg("max_seq_len") = 256,
        py::arg("char_level_langs") = std::vector<std::string>{});

    m.def(
        "featurize",
        [](const std::vector<std::string>& tokens, int64_t feature_dim, uint64_t hash_seed,
           const std::vector<int>& ngram_orders) {
            TokenSeq ts;
            ts.tokens = tokens;
            FeatureVector fv = featurize(ts, feature_dim, hash_seed, ngram_orders);
            return fv.entries;
        },
        py::arg("tokens"), py::arg("feature_dim"), py::arg("hash_seed") = 0x5eedULL,
        py::arg("ngram_orders") = std::vector<int>{2, 3, 4});

    m.def("student_dist",
          [](const std::vector<std::vector<double>>& scores) {
              return rows_from_mat(student_dist(mat_from_rows(scores)));
          });
    m.def("teacher_dist",
          [](const std::vector<std::vector<double>>& logits, double tau) {
              return rows_from_mat(teacher_dist(mat_from_rows(logits), tau));
          });
    m.def("kl_loss", [](const std::vector<std::vector<double>>& teacher,
                        const std::vector<std::vector<double>>& student) {
        return kl_loss(mat_from_rows(teacher), mat_from_rows(student));
    });

    m.def(
        "generate_synthetic",
        [](const std::vector<std::string>& overrides, const std::string& out_dir) {
            Config cfg = config_from_overrides(overrides);
            SynthOutput out = generate_synthetic(cfg);
            emit_synthetic(out, out_dir);
            return py::make_tuple(out.docs.size(), out.queries.size());
        },
        py::arg("overrides"), py::arg("out_dir"));

    m.def(
        "run_pipeline",
        [](const std::string& docs_path, const std::string& queries_path,
           const std::string& state_dir, const std::vector<std::string>& overrides) {
            Config cfg = config_from_overrides(overrides);
            DocumentCollection docs = ingest_documents(docs_path, cfg, nullptr);
            QuerySet queries = ingest_queries(queries_path, cfg, nullptr);
            Pipeline p(state_dir, docs, queries, cfg);
            PipelineState st = p.run_all(false);
            return py::make_tuple(st.iteration, st.complete);
        },
        py::arg("docs"), py::arg("queries"), py::arg("state_dir"),
        py::arg("overrides") = std::vector<std::string>{});

    m.def(
        "recall_at_k",
        [](const std::string& run_path, const std::string& queries_path,
           const std::string& docs_path, int k, const std::vector<std::string>& overrides) {
            Config cfg = config_from_overrides(overrides);
            DocumentCollection docs = ingest_documents(docs_path, cfg, nullptr);
            QuerySet queries = ingest_queries(queries_path, cfg, nullptr);
            MetricReport r = recall_at_k(read_run(run_path), queries, docs, k);
            return py::make_tuple(r.macro_average, r.per_language);
        },
        py::arg("run"), py::arg("queries"), py::arg("docs"), py::arg("k"),
        py::arg("overrides") = std::vector<std::string>{});

    m.def(
        "recall_at_kt",
        [](const std::string& run_path, const std::string& queries_path,
           const std::string& docs_path, int64_t kt, const std::vector<std::string>& overrides) {
            Config cfg = config_from_overrides(overrides);
            DocumentCollection docs = ingest_documents(docs_path, cfg, nullptr);
            QuerySet queries = ingest_queries(queries_path, cfg, nullptr);
            MetricReport r = recall_at_kt(read_run(run_path), queries, docs, kt);
            return py::make_tuple(r.macro_average, r.per_language);
        },
        py::arg("run"), py::arg("queries"), py::arg("docs"), py::arg("kt"),
        py::arg("overrides") = std::vector<std::string>{});
}
