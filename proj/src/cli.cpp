#include "vwsd/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "vwsd/errors.hpp"
#include "vwsd/pipeline.hpp"

namespace vwsd {

namespace {

struct Options {
  std::string config_path;
  std::string fuser;
  std::string k;
  std::string scale;
  std::string seed;
  std::string report;
  std::string trace_out;
  std::vector<std::string> overrides;
  bool trace = false;
  bool json = false;
  std::string sample;
};

PipelineConfig make_config(const Options& o) {
  PipelineConfig c = o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
  auto apply = [&](const char* key, const std::string& v) {
    if (!v.empty()) set_config_value(c, key, v);
  };
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  apply("fuser", o.fuser);
  apply("k", o.k);
  apply("scale", o.scale);
  apply("seed", o.seed);
  apply("report", o.report);
  apply("trace_file", o.trace_out);
  if (o.trace) c.trace = true;
  return c;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  return f;
}

void print_summary(const EvalResult& r, std::ostream& out) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4);
  s << "samples " << r.traces.size() << "  scored " << r.report.records.size();
  if (!r.report.records.empty()) s << "  HIT@1 " << r.report.hit_at_1 << "  MRR " << r.report.mrr;
  s << "  skipped rows " << r.skipped_rows << '\n';
  out << s.str();
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  Pipeline p(make_config(o), &err);
  const EvalResult r = p.evaluate();
  const auto& c = p.config();
  if (c.report) {
    auto f = open_output(*c.report);
    write_report(r, f);
    print_summary(r, out);
  } else {
    write_report(r, out);
  }
  if (c.trace) {
    if (c.trace_file) {
      auto f = open_output(*c.trace_file);
      write_traces(r, f);
    } else {
      write_traces(r, out);
    }
  }
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  Pipeline p(make_config(o), &err);
  auto report = p.train([&](const EpochStats& e) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << "epoch " << e.epoch << "  loss " << e.mean_loss
      << "  train HIT@1 " << e.train_hit_at_1 << "  MRR " << e.train_mrr;
    if (e.val_hit_at_1) s << "  val HIT@1 " << *e.val_hit_at_1 << "  MRR " << *e.val_mrr;
    out << s.str() << '\n';
  });
  if (p.config().history) {
    auto f = open_output(*p.config().history);
    write_history(report, f);
  }
  out << "checkpoint written to " << p.config().checkpoint->string() << '\n';
  return kExitOk;
}

int cmd_retrieve(const Options& o, std::ostream& out, std::ostream& err) {
  Pipeline p(make_config(o), &err);
  const auto prepared = p.disambiguate();
  const auto prompts = p.prompt_embeddings(prepared);
  const auto results = p.retrieve(prepared, prompts);
  out << "retrieved top-" << p.config().k << " for " << results.size() << " prompts into "
      << p.config().cache_dir.string() << '\n';
  return kExitOk;
}

int cmd_stats(const Options& o, std::ostream& out, std::ostream& err) {
  Pipeline p(make_config(o), &err);
  std::vector<std::string> words;
  for (const Sample* s : p.samples()) words.push_back(s->target_word);
  const PolysemyStats st = polysemy_stats(words, p.inventory());
  if (o.json) {
    nlohmann::ordered_json j;
    j["total"] = st.total;
    j["one"] = st.percent(st.one);
    j["two"] = st.percent(st.two);
    j["three_or_more"] = st.percent(st.three_or_more);
    j["not_in_inventory"] = st.percent(st.not_in_inventory);
    j["counts"] = {{"one", st.one},
                   {"two", st.two},
                   {"three_or_more", st.three_or_more},
                   {"not_in_inventory", st.not_in_inventory}};
    out << j.dump() << '\n';
    return kExitOk;
  }
  std::ostringstream s;
  s << std::fixed << std::setprecision(1);
  s << "senses            samples  percent\n";
  auto row = [&](const char* label, std::size_t n) {
    s << std::left << std::setw(18) << label << std::right << std::setw(7) << n << std::setw(8)
      << st.percent(n) << "%\n";
  };
  row("1", st.one);
  row("2", st.two);
  row(">=3", st.three_or_more);
  row("not in inventory", st.not_in_inventory);
  s << std::left << std::setw(18) << "total" << std::right << std::setw(7) << st.total << '\n';
  out << s.str();
  return kExitOk;
}

int cmd_trace(const Options& o, std::ostream& out, std::ostream& err) {
  Pipeline p(make_config(o), &err);
  p.restrict_to(o.sample);
  const EvalResult r = p.evaluate();
  out << to_json(r.traces.front()).dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visual word sense disambiguation: gloss matching, prompt retrieval and modality fusion"};
  app.name("vwsd");
  app.require_subcommand(1, 1);
  app.fallthrough();

  Options o;
  app.add_option("--config", o.config_path, "key=value configuration file");
  app.add_option("--fuser", o.fuser, "average | mlp | transformer | clip-aug");
  app.add_option("--k", o.k, "images retrieved per prompt");
  app.add_option("--scale", o.scale, "softmax scale applied to cosine scores");
  app.add_option("--seed", o.seed, "seed for shuffling, holdout and initialization");
  app.add_option("--set", o.overrides, "override any config key (key=value)");

  auto* eval = app.add_subcommand("eval", "run the pipeline and report HIT@1 / MRR");
  eval->add_flag("--trace", o.trace, "also write per-sample stage traces");
  eval->add_option("--report", o.report, "write the rank report here instead of stdout");
  eval->add_option("--trace-out", o.trace_out, "file for stage traces (default stdout)");
  app.add_subcommand("train", "train the MLP or transformer fuser");
  app.add_subcommand("retrieve", "populate the retrieval cache");
  auto* stats = app.add_subcommand("stats", "sense-count distribution of the target words");
  stats->add_flag("--json", o.json, "machine-readable output with full precision");
  auto* trace = app.add_subcommand("trace", "dump one sample's stage trace");
  trace->add_option("--sample", o.sample, "sample id (1-based data row)")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "eval") return cmd_eval(o, out, err);
    if (cmd == "train") return cmd_train(o, out, err);
    if (cmd == "retrieve") return cmd_retrieve(o, out, err);
    if (cmd == "stats") return cmd_stats(o, out, err);
    return cmd_trace(o, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ProviderError& e) {
    err << "provider error: " << e.what() << '\n';
    return kExitProvider;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace vwsd
