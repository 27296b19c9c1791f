#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ibn/pipeline/corpus.hpp"
#include "ibn/pipeline/inference.hpp"
#include "ibn/pipeline/intent.hpp"
#include "ibn/pipeline/model.hpp"
#include "ibn/pipeline/training.hpp"
#include "ibn/service/config.hpp"
#include "ibn/service/inventory.hpp"
#include "ibn/service/lifecycle.hpp"
#include "ibn/service/record.hpp"
#include "ibn/service/registry.hpp"
#include "ibn/service/store.hpp"

namespace ibn::service {

using pipeline::LabeledSentence;
using pipeline::NerModel;

inline json metrics_json(const pipeline::EvalMetrics& m) {
  return {{"precision", m.precision},       {"recall", m.recall},
          {"f1", m.f1},                     {"pos_accuracy", m.pos_accuracy},
          {"true_positives", m.true_positives}, {"false_positives", m.false_positives},
          {"false_negatives", m.false_negatives}};
}

inline std::vector<LabeledSentence> service_corpus(const ServiceConfig& c) {
  Rng rng(c.seed);
  return pipeline::generate_corpus(pipeline::default_templates(), rng, c.corpus_size);
}

/// Fresh model trained on the generated corpus as the configuration describes.
inline NerModel train_initial_model(const ServiceConfig& c) {
  const auto corpus = service_corpus(c);
  NerModel m = pipeline::model_for_corpus(corpus, c.geometry, c.vocab_size, c.seed);
  if (c.pretrain_epochs > 0)
    pipeline::pretrain_mlm(m, pipeline::texts(corpus), c.train_config(c.pretrain_epochs));
  if (c.initial_epochs > 0)
    pipeline::train_tagger(m, pipeline::split_dataset(corpus, c.seed), pipeline::Task::joint, c.mode,
                           c.train_config(c.initial_epochs));
  return m;
}

/// An immutable model snapshot. Requests hold it by shared_ptr, so a swap
/// never disturbs a prediction that is already running.
struct ActiveModel {
  std::string version;
  NerModel model;
};

struct RetrainStatus {
  bool running = false;
  std::string last_version;
  std::string last_error;
};

struct ServiceOptions {
  Clock clock = utc_now;
  std::optional<Inventory> inventory; // loaded from config.inventory when absent
  std::optional<NerModel> bootstrap;  // first version when the registry is empty
};

/// Intent lifecycle engine. One writer lock serializes record and dataset
/// mutations; every mutation is appended to the event log before it becomes
/// visible. Retraining works on a copy of the active model and publishes the
/// result by swapping the snapshot pointer.
class IntentService {
public:
  explicit IntentService(ServiceConfig cfg, ServiceOptions opts = {})
      : cfg_(std::move(cfg)), clock_(opts.clock ? opts.clock : Clock(utc_now)) {
    cfg_.validate();
    const std::filesystem::path dir(cfg_.data_dir);
    std::filesystem::create_directories(dir);
    intents_log_ = EventLog(dir / "intents.jsonl");
    corrections_log_ = EventLog(dir / "corrections.jsonl");
    registry_ = ModelRegistry(dir / "models");
    inventory_ = opts.inventory ? std::move(*opts.inventory) : Inventory::load(cfg_.inventory);
    corpus_ = service_corpus(cfg_);
    replay();

    if (registry_.active()) {
      const auto& v = registry_.active_version();
      publish(v.id, pipeline::load_checkpoint(registry_.checkpoint_path(v)));
    } else {
      NerModel m = opts.bootstrap ? std::move(*opts.bootstrap) : train_initial_model(cfg_);
      m.validate();
      register_and_activate(std::move(m), pipeline::split_dataset(corpus_, cfg_.seed).dev, {}, {});
    }
  }

  ~IntentService() {
    std::lock_guard lk(retrain_control_);
    if (retrain_thread_.joinable())
      retrain_thread_.join();
  }

  IntentService(const IntentService&) = delete;
  IntentService& operator=(const IntentService&) = delete;

  const ServiceConfig& config() const { return cfg_; }

  std::shared_ptr<const ActiveModel> active_model() const {
    std::lock_guard lk(model_mutex_);
    return active_;
  }

  // -- intents -------------------------------------------------------------------

  IntentRecord submit(const std::string& text) {
    validate_text(text);
    const auto snap = active_model();
    const std::string now = clock_();
    IntentRecord r;
    r.text = text;
    r.model_version = snap->version;
    r.created_at = r.updated_at = now;
    try {
      const tokenizer::Doc d = pipeline::predict(snap->model, text);
      r.extraction = {d.sentences, d.spans, d.confidences, pipeline::assemble_intent(d)};
      const bool complete = is_complete(r.extraction);
      r.extraction.payload.needs_refinement = !complete;
      step(r, IntentState::recognized, now);
      step(r, complete ? IntentState::translated : IntentState::needs_refinement, now);
    } catch (const std::exception& e) {
      step(r, IntentState::failed, now, e.what());
    }

    std::unique_lock lk(state_mutex_);
    r.id = next_id();
    intents_log_.append({{"record", to_json(r)}});
    order_.push_back(r.id);
    records_[r.id] = r;
    return r;
  }

  IntentRecord get(const std::string& id) const {
    std::shared_lock lk(state_mutex_);
    return find(id);
  }

  /// Records in creation order, optionally only those in `state`.
  std::vector<IntentRecord> list(std::optional<IntentState> state = std::nullopt) const {
    std::shared_lock lk(state_mutex_);
    std::vector<IntentRecord> out;
    for (const auto& id : order_) {
      const auto& r = records_.at(id);
      if (!state || r.state == *state)
        out.push_back(r);
    }
    return out;
  }

  /// Replaces the intent's spans with `spans` and appends the corrected
  /// sentence to the refinement dataset. Operator spans are taken as final, so
  /// any nonempty span set completes the intent. Resubmitting a span set this
  /// intent already received changes nothing.
  IntentRecord correct(const std::string& id, std::vector<Span> spans,
                       const std::string& author = "operator") {
    IntentRecord r;
    bool trigger = false;
    {
      std::unique_lock lk(state_mutex_);
      const IntentRecord& current = find(id);
      if (current.state != IntentState::needs_refinement && current.state != IntentState::translated)
        throw StateError("intent " + id + " is " + to_string(current.state) +
                         "; corrections apply to NEEDS_REFINEMENT or TRANSLATED intents");
      normalize_spans(current, spans);
      const std::string key = span_key(spans);
      for (const auto& c : current.corrections)
        if (c.key == key)
          return current;

      r = current;
      const std::string now = clock_();
      r.extraction.spans = spans;
      r.extraction.confidences.assign(spans.size(), 1.0);
      r.extraction.payload = pipeline::assemble_intent(r.doc());
      const bool complete = !spans.empty();
      r.extraction.payload.needs_refinement = !complete;
      if (r.state == IntentState::needs_refinement) {
        step(r, IntentState::recognized, now, "correction");
        step(r, complete ? IntentState::translated : IntentState::needs_refinement, now);
      } else if (!complete) {
        throw StateError("correction would leave translated intent " + id + " incomplete");
      }
      r.corrections.push_back({spans, author, now, key});
      r.updated_at = now;

      const auto entries = dataset_entries(r, spans);
      json sentences = json::array();
      for (const auto& s : entries)
        sentences.push_back(pipeline::to_json(s));
      corrections_log_.append({{"intent_id", id}, {"key", key}, {"sentences", sentences}});
      intents_log_.append({{"record", to_json(r)}});

      dataset_.insert(dataset_.end(), entries.begin(), entries.end());
      ++correction_events_;
      records_[id] = r;
      trigger = cfg_.trigger_k > 0 &&
                correction_events_ - corrections_at_last_retrain_ >= cfg_.trigger_k;
    }
    if (trigger)
      start_retrain();
    return r;
  }

  /// The simulated inner loop: validates the payload against the inventory.
  IntentRecord activate(const std::string& id) {
    std::unique_lock lk(state_mutex_);
    IntentRecord r = find(id);
    if (r.state != IntentState::translated)
      throw StateError("intent " + id + " is " + to_string(r.state) + "; only TRANSLATED intents activate");
    const std::string now = clock_();
    const auto check = inventory_.validate(r.extraction.payload);
    r.activation = ActivationReport{check.ok, check.reason, check.matched, now};
    step(r, check.ok ? IntentState::activated : IntentState::failed, now, check.reason);
    r.updated_at = now;
    intents_log_.append({{"record", to_json(r)}});
    records_[id] = r;
    return r;
  }

  std::vector<LabeledSentence> refinement_dataset() const {
    std::shared_lock lk(state_mutex_);
    return dataset_;
  }

  // -- models ----------------------------------------------------------------------

  /// Trains a copy of the active model on the generated corpus plus the
  /// refinement dataset, registers it and makes it active. On failure the
  /// active version is kept and the failure is logged in the registry.
  ModelVersion retrain() {
    std::unique_lock busy(retrain_mutex_, std::try_to_lock);
    if (!busy.owns_lock())
      throw StateError("a retrain is already running");

    std::vector<LabeledSentence> corrections;
    std::size_t events = 0;
    {
      std::shared_lock lk(state_mutex_);
      corrections = dataset_;
      events = correction_events_;
    }
    if (corrections.empty())
      throw StateError("refinement dataset is empty; submit a correction first");

    const auto base = active_model();
    try {
      NerModel model = base->model;
      pipeline::Split split = pipeline::split_dataset(corpus_, cfg_.seed);
      for (std::size_t k = 0; k < cfg_.correction_repeats; ++k)
        split.train.insert(split.train.end(), corrections.begin(), corrections.end());
      pipeline::train_tagger(model, split, pipeline::Task::joint, cfg_.mode,
                             cfg_.train_config(cfg_.retrain_epochs));
      json extra{{"base_version", base->version}, {"correction_events", events},
                 {"corrections", metrics_json(pipeline::evaluate(model, corrections))}};
      auto v = register_and_activate(std::move(model), split.dev, std::move(extra), events);
      std::lock_guard s(status_mutex_);
      status_.last_version = v.id;
      status_.last_error.clear();
      return v;
    } catch (const std::exception& e) {
      {
        std::lock_guard lk(registry_mutex_);
        registry_.record_failure(e.what(), clock_());
      }
      std::lock_guard s(status_mutex_);
      status_.last_error = e.what();
      throw;
    }
  }

  /// Starts retrain() on a background thread; false if one is already running.
  bool start_retrain() {
    std::lock_guard lk(retrain_control_);
    {
      std::lock_guard s(status_mutex_);
      if (status_.running)
        return false;
      status_.running = true;
    }
    if (retrain_thread_.joinable())
      retrain_thread_.join();
    retrain_thread_ = std::thread([this] {
      try {
        retrain();
      } catch (const StateError& e) {
        std::lock_guard s(status_mutex_);
        status_.last_error = e.what();
      } catch (const std::exception&) {
        // retrain() has recorded it
      }
      std::lock_guard s(status_mutex_);
      status_.running = false;
    });
    return true;
  }

  void wait_for_retrain() {
    std::lock_guard lk(retrain_control_);
    if (retrain_thread_.joinable())
      retrain_thread_.join();
  }

  RetrainStatus retrain_status() const {
    std::lock_guard s(status_mutex_);
    return status_;
  }

  std::vector<ModelVersion> versions() const {
    std::lock_guard lk(registry_mutex_);
    return registry_.versions();
  }

  std::vector<RegistryFailure> registry_failures() const {
    std::lock_guard lk(registry_mutex_);
    return registry_.failures();
  }

  json versions_json() const {
    json list = json::array();
    std::lock_guard lk(registry_mutex_);
    for (const auto& v : registry_.versions())
      list.push_back({{"id", v.id},
                      {"checkpoint", v.checkpoint},
                      {"metrics", v.metrics},
                      {"created_at", v.created_at},
                      {"active", registry_.active() == v.id}});
    json failures = json::array();
    for (const auto& f : registry_.failures())
      failures.push_back({{"reason", f.reason}, {"at", f.at}});
    return {{"active", registry_.active() ? json(*registry_.active()) : json(nullptr)},
            {"versions", list},
            {"failures", failures},
            {"retrain", status_json()}};
  }

  json metrics_summary() const {
    json by_state = json::object();
    for (IntentState s : kAllStates)
      by_state[to_string(s)] = 0;
    json corrections;
    {
      std::shared_lock lk(state_mutex_);
      for (const auto& [_, r] : records_)
        by_state[to_string(r.state)] = by_state[to_string(r.state)].get<int>() + 1;
      corrections = {{"events", correction_events_},
                     {"dataset_sentences", dataset_.size()},
                     {"since_retrain", correction_events_ - corrections_at_last_retrain_},
                     {"trigger_k", cfg_.trigger_k}};
    }
    json model;
    {
      std::lock_guard lk(registry_mutex_);
      const auto& v = registry_.active_version();
      model = {{"version", v.id}, {"metrics", v.metrics}, {"versions", registry_.versions().size()}};
    }
    std::size_t total = 0;
    for (const auto& [_, n] : by_state.items())
      total += n.get<std::size_t>();
    return {{"model", model},
            {"intents", {{"total", total}, {"by_state", by_state}}},
            {"corrections", corrections},
            {"retrain", status_json()}};
  }

  json status_json() const {
    const auto s = retrain_status();
    return {{"running", s.running}, {"last_version", s.last_version}, {"last_error", s.last_error}};
  }

private:
  static void step(IntentRecord& r, IntentState to, const std::string& at, std::string reason = {}) {
    require_transition(r.state, to);
    r.history.push_back({r.state, to, at, std::move(reason)});
    r.state = to;
  }

  bool is_complete(const Extraction& e) const {
    if (!e.payload.action || e.spans.empty())
      return false;
    return std::all_of(e.confidences.begin(), e.confidences.end(),
                       [&](double c) { return c >= cfg_.confidence_threshold; });
  }

  void validate_text(const std::string& text) const {
    const auto chars = tokenizer::utf8_chars(text).size();
    if (chars > cfg_.max_text_length)
      throw ValidationError("text has " + std::to_string(chars) + " characters; the limit is " +
                            std::to_string(cfg_.max_text_length));
    if (tokenizer::make_doc(text).sentences.empty())
      throw ValidationError("text is empty");
  }

  const IntentRecord& find(const std::string& id) const {
    auto it = records_.find(id);
    if (it == records_.end())
      throw NotFoundError("no intent '" + id + "'");
    return it->second;
  }

  std::string next_id() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "intent-%06zu", order_.size() + 1);
    return buf;
  }

  /// Checks groups and token ranges, fills character offsets and sorts the
  /// spans into reading order. Character offsets supplied by the caller must
  /// agree with the token range.
  void normalize_spans(const IntentRecord& r, std::vector<Span>& spans) const {
    const auto& groups = tokenizer::span_group_names();
    const auto& sentences = r.extraction.sentences;
    for (auto& s : spans) {
      if (std::find(groups.begin(), groups.end(), s.group) == groups.end())
        throw ValidationError("unknown span group '" + s.group + "'");
      if (s.sentence >= sentences.size())
        throw ValidationError("span refers to sentence " + std::to_string(s.sentence) + " of " +
                              std::to_string(sentences.size()));
      const auto given = std::pair{s.char_start, s.char_end};
      std::vector<Span> one{s};
      tokenizer::validate_spans(sentences[s.sentence].tokens.size(), one);
      tokenizer::attach_offsets(sentences[s.sentence], one);
      if (given.second != 0 && given != std::pair{one[0].char_start, one[0].char_end})
        throw ValidationError("span characters [" + std::to_string(given.first) + ", " +
                              std::to_string(given.second) + ") do not match tokens [" +
                              std::to_string(s.token_start) + ", " + std::to_string(s.token_end) + ")");
      s = one[0];
    }
    std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) {
      return std::tie(a.sentence, a.token_start) < std::tie(b.sentence, b.token_start);
    });
    for (std::size_t si = 0; si < sentences.size(); ++si) {
      std::vector<Span> in_sentence;
      for (const auto& s : spans)
        if (s.sentence == si)
          in_sentence.push_back(s);
      tokenizer::validate_spans(sentences[si].tokens.size(), in_sentence);
    }
  }

  /// One labeled sentence per sentence of the intent, offsets rebased to it.
  static std::vector<LabeledSentence> dataset_entries(const IntentRecord& r,
                                                      const std::vector<Span>& spans) {
    std::vector<LabeledSentence> out;
    for (std::size_t si = 0; si < r.extraction.sentences.size(); ++si) {
      const auto& s = r.extraction.sentences[si];
      LabeledSentence ls;
      ls.source = pipeline::Source::user_correction;
      ls.text = r.text.substr(s.char_start, s.char_end - s.char_start);
      for (auto t : s.tokens) {
        t.char_start -= s.char_start;
        t.char_end -= s.char_start;
        ls.tokens.push_back(std::move(t));
      }
      for (auto sp : spans)
        if (sp.sentence == si) {
          sp.sentence = 0;
          sp.char_start -= s.char_start;
          sp.char_end -= s.char_start;
          ls.spans.push_back(std::move(sp));
        }
      out.push_back(std::move(ls));
    }
    return out;
  }

  void replay() {
    for (const auto& e : intents_log_.replay()) {
      IntentRecord r = record_from(e.at("record"));
      IntentState at = IntentState::received;
      for (const auto& t : r.history) {
        if (t.from != at || !is_legal_transition(t.from, t.to))
          throw IoError("event log holds an illegal history for intent " + r.id);
        at = t.to;
      }
      if (at != r.state)
        throw IoError("event log history of " + r.id + " does not end in its state");
      if (!records_.count(r.id))
        order_.push_back(r.id);
      records_[r.id] = std::move(r);
    }
    for (const auto& e : corrections_log_.replay()) {
      for (const auto& s : e.at("sentences"))
        dataset_.push_back(pipeline::sentence_from_json(s));
      ++correction_events_;
    }
    for (const auto& v : registry_.versions())
      if (v.metrics.contains("correction_events"))
        corrections_at_last_retrain_ = v.metrics.at("correction_events").get<std::size_t>();
  }

  ModelVersion register_and_activate(NerModel model, const std::vector<LabeledSentence>& dev,
                                     json extra, std::size_t correction_events) {
    json metrics = dev.empty() ? json::object() : metrics_json(pipeline::evaluate(model, dev));
    if (extra.is_object())
      metrics.update(extra);
    std::lock_guard lk(registry_mutex_);
    ModelVersion v;
    v.id = registry_.next_id();
    v.checkpoint = v.id + ".ckpt";
    v.metrics = std::move(metrics);
    v.created_at = clock_();
    pipeline::save_checkpoint(model, registry_.checkpoint_path(v));
    registry_.add(v);
    registry_.activate(v.id, v.created_at);
    publish(v.id, std::move(model));
    {
      std::unique_lock s(state_mutex_);
      corrections_at_last_retrain_ = correction_events;
    }
    return v;
  }

  void publish(const std::string& version, NerModel model) {
    auto snap = std::make_shared<const ActiveModel>(ActiveModel{version, std::move(model)});
    std::lock_guard lk(model_mutex_);
    active_ = std::move(snap);
  }

  ServiceConfig cfg_;
  Clock clock_;
  Inventory inventory_;
  std::vector<LabeledSentence> corpus_;

  mutable std::shared_mutex state_mutex_;
  EventLog intents_log_;
  EventLog corrections_log_;
  std::unordered_map<std::string, IntentRecord> records_;
  std::vector<std::string> order_;
  std::vector<LabeledSentence> dataset_;
  std::size_t correction_events_ = 0;
  std::size_t corrections_at_last_retrain_ = 0;

  mutable std::mutex registry_mutex_;
  ModelRegistry registry_;

  mutable std::mutex model_mutex_;
  std::shared_ptr<const ActiveModel> active_;

  std::mutex retrain_mutex_;
  std::mutex retrain_control_;
  mutable std::mutex status_mutex_;
  RetrainStatus status_;
  std::thread retrain_thread_;
};

} // namespace ibn::service
