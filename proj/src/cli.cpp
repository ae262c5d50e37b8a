// Copyright 2026 The tslm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tslm/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tslm/checkpoint.hpp"
#include "tslm/cmr.hpp"
#include "tslm/errors.hpp"
#include "tslm/gradsuite.hpp"
#include "tslm/synthetic.hpp"
#include "tslm/train.hpp"

namespace tslm {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct GenArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

struct TrainArgs {
  std::string dataset, config, out_dir, resume;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  bool paper_scale = false;
};

struct EvalArgs {
  std::string model, dataset, split = "test", protocol = "both";
  double similarity = 0.8;
};

struct LocateArgs {
  std::string model, dataset;
  std::size_t query_id = 0;
};

struct CmrArgs {
  std::string corpus, model, split = "test";
  std::optional<std::size_t> query_id;
  std::size_t k = 100, top_n = 10;
  double lambda = 5.0;
};

struct GradArgs {
  std::size_t cases = 20;
  std::uint64_t seed = 2024;
  double eps = 1e-5, tolerance = 1e-4;
  std::vector<std::string> only;
};

int cmd_gen(const GenArgs& a, bool as_json, std::ostream& out) {
  SyntheticConfig cfg = a.config.empty() ? SyntheticConfig{}
                                         : synthetic_config_from_json(read_file(a.config));
  if (a.seed) cfg.seed = *a.seed;
  Dataset ds = generate_synthetic_dataset(cfg);
  save_dataset(ds, a.out);
  if (as_json) {
    out << json{{"path", a.out}, {"motions", ds.motions.size()}, {"samples", ds.samples.size()},
                {"vocab", ds.vocab.size()}}
               .dump()
        << '\n';
  } else {
    out << "wrote " << ds.motions.size() << " motions and " << ds.samples.size()
        << " queries to " << a.out << '\n';
  }
  return kExitOk;
}

int cmd_train(const TrainArgs& a, bool as_json, std::ostream& out) {
  Dataset ds = load_dataset(a.dataset);
  TrainConfig cfg = a.paper_scale ? TrainConfig::paper_scale() : TrainConfig::desk();
  if (!a.resume.empty()) {
    cfg = train_config_from_json(ad::read_checkpoint(a.resume).meta.at("train_config"), cfg);
  } else if (!a.config.empty()) {
    cfg = train_config_from_json(read_file(a.config), cfg);
  }
  if (a.seed) cfg.seed = *a.seed;
  if (a.epochs) cfg.epochs = *a.epochs;
  Trainer trainer(ds, cfg);
  if (!a.resume.empty()) trainer.load_checkpoint(a.resume);
  TrainOptions opts;
  opts.out_dir = a.out_dir;
  opts.on_epoch = [&](const MetricsRecord& r) {
    if (as_json) {
      out << metrics_json(r) << '\n';
    } else {
      out << "epoch " << r.epoch << "  total " << fmt("%.4f", r.total) << "  L_Seq "
          << fmt("%.4f", r.L_Seq) << "  L_Span " << fmt("%.4f", r.L_Span) << "  L_rec "
          << fmt("%.4f", r.L_rec) << "  L_Align " << fmt("%.4f", r.L_Align) << "  lr "
          << fmt("%.2e", r.lr);
      if (r.val_miou) out << "  val_mIoU " << fmt("%.4f", *r.val_miou);
      out << '\n';
    }
    out.flush();
  };
  trainer.train(opts);
  if (!as_json) out << "checkpoints in " << a.out_dir << '\n';
  return kExitOk;
}

std::vector<Span> predict_spans(const Model& model, const Dataset& ds,
                                const std::vector<std::size_t>& samples) {
  const auto locs = localize_samples(model, ds, samples);
  std::vector<Span> preds;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& s = ds.samples[samples[k]];
    preds.push_back(prediction_seconds(locs[k].span, ds.motion(s.motion_id).duration,
                                       locs[k].highlight.size()));
  }
  return preds;
}

void check_vocab(const std::vector<std::string>& model_vocab, const Dataset& ds) {
  if (model_vocab != ds.vocab) {
    throw ValidationError("model vocabulary does not match the dataset vocabulary");
  }
}

int cmd_eval(const EvalArgs& a, bool as_json, std::ostream& out) {
  std::vector<std::string> vocab;
  auto model = load_model(a.model, &vocab);
  Dataset ds = load_dataset(a.dataset);
  check_vocab(vocab, ds);
  const auto samples = ds.split_indices(parse_split(a.split));
  if (samples.empty()) throw ValidationError("split '" + a.split + "' has no samples");
  std::vector<Protocol> protocols;
  if (a.protocol == "normal" || a.protocol == "both") protocols.push_back(Protocol::kNormal);
  if (a.protocol == "assigned" || a.protocol == "both") protocols.push_back(Protocol::kAssigned);
  if (protocols.empty()) throw ValidationError("unknown protocol '" + a.protocol + "'");
  const auto preds = predict_spans(*model, ds, samples);
  std::vector<EvalReport> reports;
  for (Protocol p : protocols) {
    EvalConfig cfg;
    cfg.protocol = p;
    cfg.similarity_threshold = a.similarity;
    reports.push_back(evaluate_protocol(preds, samples, ds, cfg, TokenJaccard{}));
  }
  if (as_json) {
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(json::parse(report_json(r)));
    out << arr.dump() << '\n';
  } else {
    out << report_table(reports);
  }
  return kExitOk;
}

int cmd_locate(const LocateArgs& a, bool as_json, std::ostream& out) {
  std::vector<std::string> vocab;
  auto model = load_model(a.model, &vocab);
  Dataset ds = load_dataset(a.dataset);
  check_vocab(vocab, ds);
  if (a.query_id >= ds.samples.size()) {
    throw ValidationError("query id " + std::to_string(a.query_id) + " outside 0.." +
                          std::to_string(ds.samples.size() - 1));
  }
  const auto& s = ds.samples[a.query_id];
  const auto& m = ds.motion(s.motion_id);
  const Tensor grid = model->prepare_motion(m);
  const Localization loc = model->locate(grid, s.tokens);
  const Span span = prediction_seconds(loc.span, m.duration, grid.shape()[0]);
  json j{{"t_s", span.s}, {"t_e", span.e}, {"p_se", loc.span.p_se}};
  if (as_json) {
    out << j.dump() << '\n';
  } else {
    out << "query " << a.query_id << " \"" << s.text << "\" in " << s.motion_id << ": "
        << fmt("%.2f", span.s) << "s - " << fmt("%.2f", span.e) << "s (p_se "
        << fmt("%.4f", loc.span.p_se) << ")\n";
  }
  return kExitOk;
}

int cmd_cmr(const CmrArgs& a, bool as_json, std::ostream& out) {
  std::vector<std::string> vocab;
  auto model = load_model(a.model, &vocab);
  Dataset ds = load_dataset(a.corpus);
  check_vocab(vocab, ds);
  CmrConfig cfg;
  cfg.top_k = a.k;
  cfg.lambda = a.lambda;
  cfg.validate();
  if (a.top_n < 1) throw ValidationError("--top-n must be at least 1");
  ModelLocalizer localizer(*model);
  PlantedRetrieval retrieval(ds);
  PlantedRelevance relevance(ds);

  std::vector<std::size_t> queries;
  if (a.query_id) {
    if (*a.query_id >= ds.samples.size()) throw ValidationError("query id outside the corpus");
    queries.push_back(*a.query_id);
  } else {
    queries = ds.split_indices(parse_split(a.split));
    if (queries.empty()) throw ValidationError("split '" + a.split + "' has no queries");
  }
  std::map<std::size_t, double> dcg_sum;
  json results = json::array();
  for (auto qi : queries) {
    const auto& s = ds.samples[qi];
    const CmrQuery q{s.tokens, s.text};
    const auto ranked = rank_corpus(q, ds.motions, localizer, retrieval, cfg);
    std::vector<double> rels;
    json list = json::array();
    for (const auto& r : ranked) {
      rels.push_back(relevance.relevance(q, r.motion_id, r.span));
      if (list.size() < a.top_n) {
        list.push_back({{"motion_id", r.motion_id},
                        {"t_s", r.span.s},
                        {"t_e", r.span.e},
                        {"cmr_score", r.score},
                        {"rel", rels.back()}});
      }
    }
    json dcg;
    for (auto n : cfg.dcg_cutoffs) {
      const double v = dcg_at_n(rels, n);
      dcg["DCG@" + std::to_string(n)] = v;
      dcg_sum[n] += v;
    }
    results.push_back({{"query_id", qi}, {"text", s.text}, {"ranked", list}, {"dcg", dcg}});
  }
  json summary;
  summary["queries"] = queries.size();
  for (const auto& [n, v] : dcg_sum) {
    summary["DCG@" + std::to_string(n)] = v / static_cast<double>(queries.size());
  }
  if (as_json) {
    out << json{{"results", results}, {"summary", summary}}.dump() << '\n';
  } else {
    if (queries.size() == 1) {
      for (const auto& r : results[0]["ranked"]) {
        out << r["motion_id"].get<std::string>() << "  " << fmt("%7.2f", r["t_s"].get<double>())
            << " " << fmt("%7.2f", r["t_e"].get<double>()) << "  score "
            << fmt("%.4f", r["cmr_score"].get<double>()) << "  rel "
            << fmt("%.3f", r["rel"].get<double>()) << '\n';
      }
    }
    out << "queries " << queries.size();
    for (const auto& [n, v] : dcg_sum) {
      out << "  DCG@" << n << " " << fmt("%.3f", v / static_cast<double>(queries.size()));
    }
    out << '\n';
  }
  return kExitOk;
}

int cmd_gradcheck(const GradArgs& a, bool as_json, std::ostream& out) {
  GradSuiteOptions opts;
  opts.cases = a.cases;
  opts.seed = a.seed;
  opts.eps = a.eps;
  opts.tolerance = a.tolerance;
  const auto results = run_gradient_suite(opts, a.only);
  bool ok = true;
  for (const auto& r : results) ok = ok && r.passed;
  if (as_json) {
    json arr = json::array();
    for (const auto& r : results) {
      arr.push_back({{"check", r.name},
                     {"cases", r.cases},
                     {"coordinates", r.coordinates},
                     {"max_rel_error", r.max_rel_error},
                     {"worst", r.worst},
                     {"passed", r.passed}});
    }
    out << json{{"passed", ok}, {"tolerance", opts.tolerance}, {"checks", arr}}.dump() << '\n';
  } else {
    out << gradient_suite_table(results, opts.tolerance);
  }
  return ok ? kExitOk : kExitFailure;
}

int cmd_stats(const std::string& path, bool as_json, std::ostream& out) {
  Dataset ds = load_dataset(path);
  std::size_t frames = 0;
  double duration = 0;
  for (const auto& m : ds.motions) {
    frames += m.frames();
    duration += m.duration;
  }
  std::map<std::string, std::size_t> per_split;
  double span = 0;
  for (const auto& s : ds.samples) {
    ++per_split[split_name(s.split)];
    span += s.t_e - s.t_s;
  }
  const double nm = std::max<std::size_t>(1, ds.motions.size());
  const double ns = std::max<std::size_t>(1, ds.samples.size());
  json j{{"motions", ds.motions.size()},
         {"samples", ds.samples.size()},
         {"vocab", ds.vocab.size()},
         {"fps", ds.fps},
         {"frames", frames},
         {"mean_duration", duration / nm},
         {"mean_span", span / ns},
         {"queries_per_motion", static_cast<double>(ds.samples.size()) / nm},
         {"splits", per_split}};
  if (as_json) {
    out << j.dump() << '\n';
  } else {
    out << "motions            " << ds.motions.size() << '\n'
        << "samples            " << ds.samples.size() << '\n';
    for (const auto& [k, v] : per_split) out << "  " << k << std::string(17 - k.size(), ' ') << v << '\n';
    out << "vocabulary         " << ds.vocab.size() << '\n'
        << "frames             " << frames << " at " << ds.fps << " fps\n"
        << "mean duration      " << fmt("%.2f", duration / nm) << " s\n"
        << "mean span          " << fmt("%.2f", span / ns) << " s\n"
        << "queries per motion " << fmt("%.2f", static_cast<double>(ds.samples.size()) / nm)
        << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal sentence localization in motion sequences", "tslm"};
  app.require_subcommand(1);
  app.fallthrough();
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable JSON on stdout");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic dataset");
  g->add_option("--out", gen.out, "Output dataset file")->required();
  g->add_option("--config", gen.config, "Generator config (JSON)")->check(CLI::ExistingFile);
  g->add_option("--seed", gen.seed, "Generator seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--dataset", tr.dataset, "Dataset file")->required()->check(CLI::ExistingFile);
  t->add_option("--out-dir", tr.out_dir, "Checkpoint and metrics directory")->required();
  t->add_option("--config", tr.config, "Training config (JSON)")->check(CLI::ExistingFile);
  t->add_option("--seed", tr.seed, "Training seed");
  t->add_option("--epochs", tr.epochs, "Number of epochs");
  t->add_option("--resume", tr.resume, "Continue from a training checkpoint")
      ->check(CLI::ExistingFile);
  t->add_flag("--paper-scale", tr.paper_scale, "Published model size and schedule");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a model on one split");
  e->add_option("--model", ev.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  e->add_option("--dataset", ev.dataset, "Dataset file")->required()->check(CLI::ExistingFile);
  e->add_option("--split", ev.split, "train, val or test");
  e->add_option("--protocol", ev.protocol, "normal, assigned or both");
  e->add_option("--similarity-threshold", ev.similarity, "Threshold of the assigned protocol");

  LocateArgs lo;
  auto* l = app.add_subcommand("locate", "Locate one query");
  l->add_option("--model", lo.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  l->add_option("--dataset", lo.dataset, "Dataset file")->required()->check(CLI::ExistingFile);
  l->add_option("--query-id", lo.query_id, "Sample index")->required();

  CmrArgs cm;
  auto* c = app.add_subcommand("cmr", "Corpus-level moment retrieval");
  c->add_option("--corpus", cm.corpus, "Dataset file")->required()->check(CLI::ExistingFile);
  c->add_option("--model", cm.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  c->add_option("--k", cm.k, "Motions localized after retrieval");
  c->add_option("--lambda", cm.lambda, "Weight of the retrieval score");
  c->add_option("--top-n", cm.top_n, "Moments listed per query");
  c->add_option("--query-id", cm.query_id, "Single sample index (default: whole split)");
  c->add_option("--split", cm.split, "Split whose queries are ranked");

  GradArgs gr;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc->add_option("--cases", gr.cases, "Random cases per check");
  gc->add_option("--seed", gr.seed, "Suite seed");
  gc->add_option("--eps", gr.eps, "Finite-difference step");
  gc->add_option("--tolerance", gr.tolerance, "Maximum relative error");
  gc->add_option("--only", gr.only, "Restrict to the named checks")->delimiter(',');

  std::string stats_path;
  auto* st = app.add_subcommand("stats", "Summarize a dataset");
  st->add_option("--dataset", stats_path, "Dataset file")->required()->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n\n" << app.help();
    return kExitInvalid;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, as_json, out);
    if (t->parsed()) return cmd_train(tr, as_json, out);
    if (e->parsed()) return cmd_eval(ev, as_json, out);
    if (l->parsed()) return cmd_locate(lo, as_json, out);
    if (c->parsed()) return cmd_cmr(cm, as_json, out);
    if (gc->parsed()) return cmd_gradcheck(gr, as_json, out);
    if (st->parsed()) return cmd_stats(stats_path, as_json, out);
  } catch (const ValidationError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitInvalid;
  } catch (const ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitInvalid;
  } catch (const std::invalid_argument& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitInvalid;
  } catch (const std::out_of_range& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
  return kExitInvalid;
}

}  // namespace tslm
