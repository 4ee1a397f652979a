#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "vwsd/cli.hpp"
#include "vwsd/disambiguation.hpp"
#include "vwsd/embedding.hpp"
#include "vwsd/errors.hpp"
#include "vwsd/evaluation.hpp"
#include "vwsd/fusion.hpp"
#include "vwsd/pipeline.hpp"
#include "vwsd/provider.hpp"
#include "vwsd/retrieval.hpp"
#include "vwsd/store.hpp"

namespace py = pybind11;
using namespace vwsd;

namespace {

std::vector<RankRecord> as_records(const std::vector<std::size_t>& ranks) {
  std::vector<RankRecord> out;
  out.reserve(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) out.push_back({std::to_string(i), ranks[i]});
  return out;
}

FusionInput as_input(Embedding context, const std::vector<Embedding>& retrieved,
                     std::vector<Embedding> candidates) {
  return make_fusion_input(std::move(context), retrieved, std::move(candidates));
}

py::dict evaluate(const std::filesystem::path& config_path, const std::map<std::string, std::string>& overrides) {
  PipelineConfig cfg = load_config(config_path);
  for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
  Pipeline pipe(cfg);
  const EvalResult r = pipe.evaluate();
  std::vector<std::string> traces;
  for (const auto& t : r.traces) traces.push_back(to_json(t).dump());
  py::dict out;
  out["hit_at_1"] = r.report.hit_at_1;
  out["mrr"] = r.report.mrr;
  out["scored"] = r.report.records.size();
  out["skipped_rows"] = r.skipped_rows;
  out["traces"] = traces;
  return out;
}

}  // namespace

PYBIND11_MODULE(_vwsd, m) {
  m.doc() = "Bindings for the vwsd C++ core";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  static py::exception<DataError> data(m, "DataError", base.ptr());
  static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
  static py::exception<ProviderError> provider(m, "ProviderError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const DataError& e) {
      py::set_error(data, e.what());
    } catch (const ConfigError& e) {
      py::set_error(config, e.what());
    } catch (const ProviderError& e) {
      py::set_error(provider, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def("cosine_similarity", [](const Embedding& a, const Embedding& b) { return cosine_similarity(a, b); });
  m.def("l2_normalize", [](const Embedding& v) { return l2_normalize(v); });
  m.def("softmax", [](const std::vector<double>& s, double scale) { return softmax(s, scale); }, py::arg("scores"),
        py::arg("scale") = kDefaultScale);
  m.def("text_id", [](const std::string& t) { return text_id(t); });

  py::class_<EmbeddingStore>(m, "EmbeddingStore")
      .def(py::init<std::uint32_t>(), py::arg("dim"))
      .def_property_readonly("dim", &EmbeddingStore::dim)
      .def("add", [](EmbeddingStore& s, std::string id, const Embedding& v) { s.add(std::move(id), v); })
      .def("get",
           [](const EmbeddingStore& s, const std::string& id) {
             const auto v = s.at(id);
             return Embedding(v.begin(), v.end());
           })
      .def("ids", &EmbeddingStore::ids)
      .def("content_hash", &EmbeddingStore::content_hash)
      .def("__len__", &EmbeddingStore::size)
      .def("__contains__", [](const EmbeddingStore& s, const std::string& id) { return s.contains(id); })
      .def("__eq__", [](const EmbeddingStore& a, const EmbeddingStore& b) { return a == b; });
  m.def("load_store", &load_store, py::arg("path"));
  m.def("save_store", &save_store, py::arg("store"), py::arg("path"));

  py::class_<SenseEntry>(m, "SenseEntry")
      .def(py::init([](std::string synset_id, std::string gloss, std::vector<std::string> synonyms) {
             return SenseEntry{std::move(synset_id), std::move(gloss), std::move(synonyms)};
           }),
           py::arg("synset_id"), py::arg("gloss"), py::arg("synonyms") = std::vector<std::string>{})
      .def_readonly("synset_id", &SenseEntry::synset_id)
      .def_readonly("gloss", &SenseEntry::gloss)
      .def_readonly("synonyms", &SenseEntry::synonyms);

  m.def(
      "match_gloss",
      [](const Embedding& context, const std::vector<Embedding>& glosses, const std::vector<SenseEntry>& entries) -> py::tuple {
        const GlossMatch g = match_gloss(context, glosses, entries);
        if (!g.matched()) return py::make_tuple(py::none(), py::none());
        return py::make_tuple(g.index, *g.similarity);
      },
      py::arg("context"), py::arg("glosses"), py::arg("entries"),
      "Index and cosine of the nearest gloss, or (None, None) when there are no senses.");
  m.def(
      "build_prompt",
      [](const std::string& context, const std::string& target, std::optional<SenseEntry> entry) {
        GlossMatch g;
        if (entry) {
          g.entry = std::move(entry);
          g.similarity = 1.0;
        }
        return build_prompt(context, target, g);
      },
      py::arg("context"), py::arg("target"), py::arg("sense") = py::none());

  py::class_<ImageIndex>(m, "ImageIndex")
      .def(py::init([](const EmbeddingStore& s, std::size_t partition, unsigned threads) {
             return ImageIndex(s, partition, threads);
           }),
           py::arg("corpus"), py::arg("partition_size") = 4096, py::arg("threads") = 0)
      .def("top_k",
           [](const ImageIndex& idx, const Embedding& q, std::size_t k) {
             std::vector<std::pair<std::string, double>> out;
             for (const auto& h : idx.top_k(q, k).hits) out.emplace_back(h.id, h.score);
             return out;
           },
           py::arg("query"), py::arg("k") = 3);

  m.def(
      "average_fuse",
      [](Embedding c, const std::vector<Embedding>& r, std::vector<Embedding> cands, double scale) {
        return average_fuse(as_input(std::move(c), r, std::move(cands)), scale).probabilities;
      },
      py::arg("context"), py::arg("retrieved"), py::arg("candidates"), py::arg("scale") = kDefaultScale);
  m.def(
      "context_only_fuse",
      [](Embedding c, std::vector<Embedding> cands, double scale) {
        return context_only_fuse(as_input(std::move(c), {}, std::move(cands)), scale).probabilities;
      },
      py::arg("context"), py::arg("candidates"), py::arg("scale") = kDefaultScale);
  m.def("rank_candidates", [](const std::vector<double>& p) { return rank_candidates(p); });

  m.def("hit_at_1", [](const std::vector<std::size_t>& ranks) { return hit_at_1(as_records(ranks)); });
  m.def("mrr", [](const std::vector<std::size_t>& ranks) { return mrr(as_records(ranks)); });

  m.def("_evaluate", &evaluate, py::arg("config"), py::arg("overrides") = std::map<std::string, std::string>{});
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
