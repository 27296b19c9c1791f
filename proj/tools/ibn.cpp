#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "ibn/gradient_suite.hpp"
#include "ibn/pipeline/corpus.hpp"
#include "ibn/pipeline/inference.hpp"
#include "ibn/pipeline/intent.hpp"
#include "ibn/pipeline/model.hpp"
#include "ibn/pipeline/training.hpp"
#include "ibn/service/config.hpp"
#include "ibn/service/http_api.hpp"
#include "ibn/service/intent_service.hpp"
#include "ibn/service/record.hpp"

using namespace ibn;
using nlohmann::json;

namespace {

struct CorpusSource {
  std::string path;
  std::size_t generate = 2000;
  std::uint64_t seed = 42;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--corpus", path, "JSONL corpus; generated when omitted");
    cmd->add_option("--generate", generate, "sentences to generate without --corpus");
    cmd->add_option("--seed", seed, "seed for generation, splitting and initialization");
  }

  std::vector<pipeline::LabeledSentence> load() const {
    if (!path.empty())
      return pipeline::read_jsonl(path);
    Rng rng(seed);
    return pipeline::generate_corpus(pipeline::default_templates(), rng, generate);
  }
};

void print_metrics_header() {
  std::printf("%-8s %10s %10s %10s %10s %8s %8s %8s\n", "split", "precision", "recall", "f1", "pos_acc",
              "tp", "fp", "fn");
}

void print_metrics(const std::string& label, const pipeline::EvalMetrics& m) {
  std::printf("%-8s %10.4f %10.4f %10.4f %10.4f %8zu %8zu %8zu\n", label.c_str(), m.precision,
              m.recall, m.f1, m.pos_accuracy, m.true_positives, m.false_positives, m.false_negatives);
}

service::ServiceConfig config_or_default(const std::string& path) {
  return path.empty() ? service::ServiceConfig{} : service::load_config(path);
}

int cmd_gen_corpus(std::uint64_t seed, std::size_t count, const std::string& out) {
  Rng rng(seed);
  const auto data = pipeline::generate_corpus(pipeline::default_templates(), rng, count);
  if (out.empty() || out == "-") {
    for (const auto& s : data)
      std::cout << pipeline::to_json(s).dump() << '\n';
  } else {
    pipeline::write_jsonl(out, data);
    std::cerr << "wrote " << data.size() << " sentences to " << out << '\n';
  }
  return 0;
}

struct TrainArgs {
  CorpusSource corpus;
  std::string config;
  std::string out;
  std::size_t epochs = 8;
  std::size_t mlm_epochs = 0;
  std::size_t vocab_size = 2000;
  std::string mode = "fine_tune";
  std::string task = "joint";
};

int cmd_train(const TrainArgs& a) {
  const auto cfg = config_or_default(a.config);
  const auto data = a.corpus.load();
  auto model = pipeline::model_for_corpus(data, cfg.geometry, a.vocab_size, a.corpus.seed);
  std::printf("vocabulary %zu pieces, %zu parameters\n", model.vocab.size(), model.parameter_count());

  auto tc = cfg.train_config(a.mlm_epochs);
  tc.seed = a.corpus.seed;
  if (a.mlm_epochs > 0) {
    const auto r = pipeline::pretrain_mlm(model, pipeline::texts(data), tc);
    for (std::size_t i = 0; i < r.loss_curve.size(); ++i)
      std::printf("mlm %s %.4f\n", i == 0 ? "initial" : ("epoch " + std::to_string(i)).c_str(),
                  r.loss_curve[i]);
  }

  const auto split = pipeline::split_dataset(data, a.corpus.seed);
  tc.epochs = a.epochs;
  print_metrics_header();
  pipeline::train_tagger(model, split, pipeline::task_from_string(a.task),
                         pipeline::mode_from_string(a.mode), tc,
                         [](std::size_t epoch, double loss, const pipeline::EvalMetrics& dev) {
                           print_metrics("dev@" + std::to_string(epoch + 1), dev);
                           std::printf("%-8s loss %.4f\n", "", loss);
                         });
  pipeline::save_checkpoint(model, a.out);
  std::printf("saved %s\n", a.out.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const CorpusSource& corpus) {
  const auto model = pipeline::load_checkpoint(checkpoint);
  const auto data = corpus.load();
  print_metrics_header();
  print_metrics("all", pipeline::evaluate(model, data));
  return 0;
}

int cmd_tag(const std::string& checkpoint, const std::string& text, bool as_json) {
  const auto model = pipeline::load_checkpoint(checkpoint);
  const auto doc = pipeline::predict(model, text);
  const auto payload = pipeline::assemble_intent(doc);
  if (as_json) {
    json sentences = json::array();
    for (const auto& s : doc.sentences)
      sentences.push_back(service::to_json(s));
    json spans = json::array();
    for (std::size_t i = 0; i < doc.spans.size(); ++i) {
      json j = service::span_json(doc.spans[i]);
      j["text"] = doc.span_text(doc.spans[i]);
      j["confidence"] = doc.confidences[i];
      spans.push_back(std::move(j));
    }
    std::cout << json{{"text", text}, {"sentences", sentences}, {"spans", spans},
                      {"payload", pipeline::to_json(payload)}}
                     .dump(2)
              << '\n';
    return 0;
  }
  for (const auto& s : doc.sentences)
    for (std::size_t i = 0; i < s.tokens.size(); ++i)
      std::printf("%-16s %s\n", s.tokens[i].text.c_str(), s.pos[i].c_str());
  std::printf("\n");
  for (std::size_t i = 0; i < doc.spans.size(); ++i)
    std::printf("%-10s %-24s %.3f\n", doc.spans[i].group.c_str(), doc.span_text(doc.spans[i]).c_str(),
                doc.confidences[i]);
  std::printf("\n%s\n", pipeline::to_json(payload).dump().c_str());
  return 0;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server)
    g_server->stop();
}

struct ServeArgs {
  std::string config;
  std::optional<int> port;
  std::string host;
  std::string checkpoint;
  std::string data_dir;
  std::string inventory;
};

int cmd_serve(const ServeArgs& a) {
  auto cfg = config_or_default(a.config);
  if (!a.data_dir.empty())
    cfg.data_dir = a.data_dir;
  if (!a.inventory.empty())
    cfg.inventory = a.inventory;
  if (!a.host.empty())
    cfg.host = a.host;
  if (a.port)
    cfg.port = *a.port;
  service::apply_env_overrides(cfg);

  service::ServiceOptions opts;
  if (!a.checkpoint.empty())
    opts.bootstrap = pipeline::load_checkpoint(a.checkpoint);
  else
    std::cerr << "no checkpoint given; an existing registry is used, otherwise a model is trained\n";
  service::IntentService svc(cfg, std::move(opts));

  httplib::Server server;
  service::install_routes(server, svc);
  g_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  std::cerr << "serving model " << svc.active_model()->version << " on http://" << cfg.host << ":"
            << cfg.port << '\n';
  if (!server.listen(cfg.host, cfg.port)) {
    std::cerr << "cannot listen on " << cfg.host << ":" << cfg.port << '\n';
    return 1;
  }
  svc.wait_for_retrain();
  return 0;
}

int cmd_gradcheck(const std::vector<std::uint64_t>& seeds) {
  bool ok = true;
  std::printf("%-22s %6s %14s %10s\n", "case", "seed", "max_rel_err", "tolerance");
  for (auto seed : seeds)
    for (auto& c : gradient_cases(seed)) {
      const double err = autograd::grad_check(*c.tape, {}, 1e-6);
      const bool pass = err < c.tolerance;
      ok = ok && pass;
      std::printf("%-22s %6llu %14.3e %10.0e %s\n", c.name.c_str(), static_cast<unsigned long long>(seed),
                  err, c.tolerance, pass ? "ok" : "FAIL");
    }
  return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intent recognition for network operations: training, tagging and the intent service"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-corpus", "Write a generated labeled corpus as JSON lines");
  std::uint64_t gen_seed = 42;
  std::size_t gen_count = 2000;
  std::string gen_out;
  gen->add_option("--seed", gen_seed);
  gen->add_option("--count", gen_count);
  gen->add_option("-o,--out", gen_out, "output file, stdout when omitted");

  auto* train = app.add_subcommand("train", "Train a tagger and save a checkpoint");
  TrainArgs targs;
  targs.corpus.add_options(train);
  train->add_option("--config", targs.config, "JSON config for geometry and optimizer");
  train->add_option("-o,--out", targs.out)->required();
  train->add_option("--epochs", targs.epochs);
  train->add_option("--mlm-epochs", targs.mlm_epochs, "masked-LM pretraining epochs first");
  train->add_option("--vocab-size", targs.vocab_size);
  train->add_option("--mode", targs.mode)->check(CLI::IsMember({"fine_tune", "feature_based"}));
  train->add_option("--task", targs.task)->check(CLI::IsMember({"pos", "ner", "joint"}));

  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a corpus");
  std::string eval_ckpt;
  CorpusSource eval_corpus;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval_corpus.add_options(eval);

  auto* tag = app.add_subcommand("tag", "Tag text and print spans and the intent payload");
  std::string tag_ckpt, tag_text;
  bool tag_json = false;
  tag->add_option("--checkpoint", tag_ckpt)->required();
  tag->add_option("text", tag_text)->required();
  tag->add_flag("--json", tag_json);

  auto* serve = app.add_subcommand("serve", "Run the intent service HTTP API");
  ServeArgs sargs;
  serve->add_option("--config", sargs.config);
  serve->add_option("--port", sargs.port);
  serve->add_option("--host", sargs.host);
  serve->add_option("--checkpoint", sargs.checkpoint, "first model version when the registry is empty");
  serve->add_option("--data-dir", sargs.data_dir);
  serve->add_option("--inventory", sargs.inventory);

  auto* grad = app.add_subcommand("gradcheck", "Compare backprop with finite differences for every op");
  std::vector<std::uint64_t> grad_seeds{1, 2, 3};
  grad->add_option("--seeds", grad_seeds);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen)
      return cmd_gen_corpus(gen_seed, gen_count, gen_out);
    if (*train)
      return cmd_train(targs);
    if (*eval)
      return cmd_eval(eval_ckpt, eval_corpus);
    if (*tag)
      return cmd_tag(tag_ckpt, tag_text, tag_json);
    if (*serve)
      return cmd_serve(sargs);
    if (*grad)
      return cmd_gradcheck(grad_seeds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
