#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "ibn/pipeline/corpus.hpp"
#include "ibn/pipeline/inference.hpp"
#include "ibn/pipeline/intent.hpp"
#include "ibn/pipeline/model.hpp"
#include "ibn/pipeline/training.hpp"

using namespace ibn;
using namespace ibn::pipeline;
using tokenizer::Span;

namespace {

const IntentTemplate& paper_template() {
  static const IntentTemplate t = default_templates()[0];
  return t;
}

const IntentTemplate& table_template() {
  static const IntentTemplate t = default_templates()[1];
  return t;
}

std::size_t filler_index(const IntentTemplate& t, const std::string& slot, const std::string& filler) {
  const auto& f = t.fillers.at(slot);
  return static_cast<std::size_t>(std::find(f.begin(), f.end(), filler) - f.begin());
}

ModelGeometry tiny_geometry() { return {16, 2, 1, 32, 32}; }

std::vector<LabeledSentence> small_corpus(std::size_t n = 200, std::uint64_t seed = 7) {
  Rng rng(seed);
  return generate_corpus(default_templates(), rng, n);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Matrix> encoder_snapshot(NerModel& m) {
  std::vector<Matrix> out;
  m.visit_encoder([&](const std::string&, Matrix& p) { out.push_back(p); });
  return out;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("ibn_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

tokenizer::Doc doc_with_spans(const std::string& text, const std::vector<std::pair<std::string, std::string>>& spans) {
  tokenizer::Doc d = tokenizer::make_doc(text);
  for (const auto& [surface, group] : spans) {
    const auto& toks = d.sentences[0].tokens;
    const auto first_word = surface.substr(0, surface.find(' '));
    const auto words = std::count(surface.begin(), surface.end(), ' ') + 1;
    for (std::size_t i = 0; i < toks.size(); ++i)
      if (toks[i].text == first_word) {
        Span s{0, i, i + static_cast<std::size_t>(words), 0, 0, group};
        std::vector<Span> one{s};
        tokenizer::attach_offsets(d.sentences[0], one);
        d.spans.push_back(one[0]);
        break;
      }
  }
  return d;
}

} // namespace

TEST(Corpus, PaperExampleSentenceAndLabels) {
  const auto& t = paper_template();
  const auto s = expand_template(t, {{"VENDOR", filler_index(t, "VENDOR", "Cisco/PROPN")},
                                     {"DEVICE", filler_index(t, "DEVICE", "routers/NOUN")},
                                     {"STATE", filler_index(t, "STATE", "up/ADV")},
                                     {"DURATION", filler_index(t, "DURATION", "a/DET year/NOUN")}});
  EXPECT_EQ(s.text, "Show me Cisco routers up since a year");
  EXPECT_EQ(s.bio(), (std::vector<std::string>{"O", "O", "B-VENDOR", "B-DEVICE", "B-STATE", "O",
                                               "B-DURATION", "I-DURATION"}));
  EXPECT_EQ(s.text.substr(s.spans[3].char_start, s.spans[3].char_end - s.spans[3].char_start),
            "a year");
}

TEST(Corpus, TableOneShapeAndTags) {
  const auto& t = table_template();
  const auto s = expand_template(t, {{"DEVICE", filler_index(t, "DEVICE", "switches/NOUN")},
                                     {"STATE", filler_index(t, "STATE", "up/ADV")},
                                     {"DURATION", filler_index(t, "DURATION", "2/NUM hours/NOUN")}});
  EXPECT_EQ(s.text, "How many switches are up for more than 2 hours ?");
  const std::vector<std::string> paper_row{"SCONJ", "ADJ", "NOUN", "AUX", "ADV",  "ADP",
                                           "ADJ",   "ADP", "NUM",  "NOUN", "PUNCT"};
  EXPECT_EQ(s.pos, paper_row);

  Rng rng(3);
  const auto many = generate_corpus({t}, rng, 200);
  for (const auto& g : many)
    EXPECT_EQ(g.pos, paper_row) << g.text;
}

TEST(Corpus, GeneratorIsDeterministicAndValid) {
  const auto a = small_corpus(500, 11), b = small_corpus(500, 11);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, small_corpus(500, 12));
  std::set<std::string> groups;
  const auto pos = tokenizer::pos_labels();
  for (const auto& s : a) {
    ASSERT_EQ(s.pos.size(), s.tokens.size());
    for (const auto& tag : s.pos)
      EXPECT_TRUE(pos.contains(tag)) << tag;
    for (const auto& sp : s.spans) {
      groups.insert(sp.group);
      EXPECT_EQ(sp.char_start, s.tokens[sp.token_start].char_start);
      EXPECT_EQ(sp.char_end, s.tokens[sp.token_end - 1].char_end);
    }
    auto decoded = tokenizer::bio_to_spans(s.bio());
    tokenizer::attach_offsets(s.sentence(), decoded);
    EXPECT_EQ(decoded, s.spans);
  }
  EXPECT_EQ(groups.size(), tokenizer::span_group_names().size());
}

TEST(Corpus, RejectsBadRequests) {
  Rng rng(1);
  EXPECT_THROW(generate_corpus(default_templates(), rng, 0), ValidationError);
  IntentTemplate broken{"Show/VERB {DEVICE}", {}, {{"DEVICE", "DEVICE"}}, {}};
  EXPECT_THROW(generate_corpus({broken}, rng, 1), ValidationError);
  IntentTemplate ungrouped{"Show/VERB {DEVICE}", {{"DEVICE", {"routers/NOUN"}}}, {}, {}};
  EXPECT_THROW(ungrouped.validate(), ValidationError);
}

TEST(Corpus, JsonLinesRoundTrip) {
  TempDir dir("corpus");
  auto data = small_corpus(50);
  data[3].source = Source::user_correction;
  write_jsonl((dir.path / "c.jsonl").string(), data);
  EXPECT_EQ(read_jsonl((dir.path / "c.jsonl").string()), data);
  const auto j = to_json(data[0]);
  for (const char* key : {"text", "tokens", "pos", "spans"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_TRUE(j["spans"][0].contains("char_start"));
}

TEST(Mlm, MaskCountArithmetic) {
  EXPECT_EQ(mlm_mask_count(20), 3u);
  EXPECT_EQ(mlm_mask_count(3), 1u);
  EXPECT_EQ(mlm_mask_count(7), 2u);
  EXPECT_EQ(mlm_mask_count(100), 15u);
  EXPECT_EQ(mlm_mask_count(101), 16u);
}

TEST(Mlm, MasksOnlyOrdinaryTokensWithExactCount) {
  Rng rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t usable = rng.index(25);
    std::vector<int> ids{Vocabulary::kCls};
    for (std::size_t i = 0; i < usable; ++i)
      ids.push_back(5 + static_cast<int>(rng.index(50)));
    ids.push_back(Vocabulary::kSep);
    const auto m = mask_tokens(ids, rng);
    if (usable < 3) {
      EXPECT_TRUE(m.positions.empty());
      continue;
    }
    ASSERT_EQ(m.positions.size(), (15 * usable + 99) / 100);
    for (std::size_t k = 0; k < m.positions.size(); ++k) {
      const auto p = static_cast<std::size_t>(m.positions[k]);
      EXPECT_GT(p, 0u);
      EXPECT_LT(p, ids.size() - 1);
      EXPECT_EQ(m.ids[p], Vocabulary::kMask);
      EXPECT_EQ(m.targets[k], ids[p]);
    }
    EXPECT_EQ(m.ids.front(), Vocabulary::kCls);
    EXPECT_EQ(m.ids.back(), Vocabulary::kSep);
  }
}

TEST(Mlm, InitialLossNearUniformAndDecreases) {
  const auto corpus = small_corpus(150);
  auto model = model_for_corpus(corpus, tiny_geometry(), 400, 5);
  TrainConfig cfg;
  cfg.epochs = 3;
  const auto r = pretrain_mlm(model, texts(corpus), cfg);
  ASSERT_EQ(r.loss_curve.size(), 4u);
  const double uniform = std::log(static_cast<double>(model.vocab.size()));
  EXPECT_NEAR(r.loss_curve[0], uniform, 0.1 * uniform);
  EXPECT_LT(r.loss_curve.back(), r.loss_curve.front());
  EXPECT_THROW(pretrain_mlm(model, {}, cfg), ValidationError);
  EXPECT_THROW(pretrain_mlm(model, {"a b"}, cfg), ValidationError);
}

TEST(Model, GeometryValidation) {
  EXPECT_NO_THROW(ModelGeometry::paper().validate());
  EXPECT_EQ(ModelGeometry::paper().head_width(), 64u);
  EXPECT_NO_THROW(ModelGeometry::desk().validate());
  EXPECT_THROW((ModelGeometry{10, 4, 2, 16, 32}.validate()), ValidationError);
  EXPECT_THROW((ModelGeometry{16, 4, 2, 16, 2}.validate()), ValidationError);
}

TEST(Model, HeadWidthsFollowLabelSets) {
  const auto corpus = small_corpus(30);
  const auto m = model_for_corpus(corpus, tiny_geometry(), 200, 1);
  EXPECT_EQ(m.ner_head.out_features(), 17u);
  EXPECT_EQ(m.pos_head.out_features(), 17u);
  EXPECT_EQ(m.mlm_head.out_features(), m.vocab.size());
  const Matrix h = m.encode({Vocabulary::kCls, 7, 8, Vocabulary::kSep});
  EXPECT_EQ(h.rows(), 4u);
  EXPECT_EQ(h.cols(), 16u);
  EXPECT_THROW(m.encode(std::vector<int>(33, 5)), ValidationError);
}

TEST(Model, PoolerShapeAndGradient) {
  const auto corpus = small_corpus(30);
  auto m = model_for_corpus(corpus, {8, 2, 1, 16, 32}, 120, 3);
  Tape t;
  const NodeId pooled = m.record_pooled(t, m.record_encoder(t, {2, 7, 9, 3}, true), true);
  t.mse(pooled, t.constant(Matrix(1, 8, 0.3)));
  t.forward();
  EXPECT_EQ(t.value(pooled).rows(), 1u);
  EXPECT_EQ(t.value(pooled).cols(), 8u);
  for (double v : t.value(pooled).data())
    EXPECT_LT(std::abs(v), 1.0);
  EXPECT_LT(autograd::grad_check(t, {}, 1e-6), 1e-4);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir dir("ckpt");
  const auto corpus = small_corpus(40);
  const auto m = model_for_corpus(corpus, tiny_geometry(), 200, 8);
  save_checkpoint(m, dir.path / "a.ckpt");
  const auto back = load_checkpoint(dir.path / "a.ckpt");
  save_checkpoint(back, dir.path / "b.ckpt");
  EXPECT_EQ(slurp(dir.path / "a.ckpt"), slurp(dir.path / "b.ckpt"));
  EXPECT_EQ(back.vocab, m.vocab);
  EXPECT_EQ(back.geometry, m.geometry);
  EXPECT_EQ(back.embedding, m.embedding);
  EXPECT_FALSE(std::filesystem::exists(dir.path / "a.ckpt.tmp"));
}

TEST(Checkpoint, RejectsDamagedFiles) {
  TempDir dir("ckpt_bad");
  const auto m = model_for_corpus(small_corpus(20), tiny_geometry(), 150, 8);
  const std::string bytes = serialize(m);
  EXPECT_THROW(deserialize(bytes.substr(0, bytes.size() - 3)), IoError);
  EXPECT_THROW(deserialize("not a checkpoint at all"), IoError);
  std::string bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_THROW(deserialize(bad_version), IoError);
  EXPECT_THROW(load_checkpoint(dir.path / "missing.ckpt"), IoError);
}

TEST(Training, SplitIsSeededNinetyTen) {
  const auto data = small_corpus(100);
  const auto a = split_dataset(data, 4), b = split_dataset(data, 4);
  EXPECT_EQ(a.train.size(), 90u);
  EXPECT_EQ(a.dev.size(), 10u);
  EXPECT_EQ(a.train, b.train);
  EXPECT_NE(a.dev, split_dataset(data, 5).dev);
}

TEST(Training, FeatureBasedFreezesEncoder) {
  const auto data = small_corpus(60);
  auto m = model_for_corpus(data, tiny_geometry(), 200, 2);
  const auto before = encoder_snapshot(m);
  const Matrix head_before = m.ner_head.weight;
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto r = train_tagger(m, split_dataset(data, 1), Task::ner, Mode::feature_based, cfg);
  EXPECT_EQ(encoder_snapshot(m), before);
  EXPECT_NE(m.ner_head.weight, head_before);
  EXPECT_EQ(r.trainable_parameters, m.ner_head.weight.size() + m.ner_head.bias.size());
}

TEST(Training, FineTuneMovesEncoderAndTrainsMore) {
  const auto data = small_corpus(8);
  auto m = model_for_corpus(data, tiny_geometry(), 150, 2);
  const auto before = encoder_snapshot(m);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 64;
  const auto fine = train_tagger(m, {data, {}}, Task::ner, Mode::fine_tune, cfg);
  EXPECT_GT(fine.train_loss[0], 0.0);
  EXPECT_NE(encoder_snapshot(m), before);
  auto m2 = model_for_corpus(data, tiny_geometry(), 150, 2);
  const auto feat = train_tagger(m2, {data, {}}, Task::ner, Mode::feature_based, cfg);
  EXPECT_LT(feat.trainable_parameters, fine.trainable_parameters);
}

TEST(Training, RejectsUnknownTaskAndMode) {
  EXPECT_THROW(task_from_string("sentiment"), ValidationError);
  EXPECT_THROW(mode_from_string("partial"), ValidationError);
  EXPECT_EQ(task_from_string("ner"), Task::ner);
  EXPECT_EQ(mode_from_string("feature-based"), Mode::feature_based);
}

TEST(Training, RunsAreBitIdentical) {
  const auto data = small_corpus(80);
  auto run = [&] {
    auto m = model_for_corpus(data, tiny_geometry(), 200, 6);
    TrainConfig cfg;
    cfg.epochs = 2;
    const auto r = train_tagger(m, split_dataset(data, 6), Task::joint, Mode::fine_tune, cfg);
    return std::pair{serialize(m), r.train_loss};
  };
  EXPECT_EQ(run(), run());
}

class TrainedModel : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    data_ = new std::vector<LabeledSentence>(small_corpus(300, 21));
    model_ = new NerModel(model_for_corpus(*data_, ModelGeometry::desk(), 600, 21));
    TrainConfig cfg;
    cfg.epochs = 4;
    train_tagger(*model_, {*data_, {}}, Task::joint, Mode::fine_tune, cfg);
  }
  static void TearDownTestSuite() {
    delete model_;
    delete data_;
  }
  static std::vector<LabeledSentence>* data_;
  static NerModel* model_;
};
std::vector<LabeledSentence>* TrainedModel::data_ = nullptr;
NerModel* TrainedModel::model_ = nullptr;

TEST_F(TrainedModel, MemorizesItsTrainingSet) {
  const auto m = evaluate(*model_, *data_);
  EXPECT_GE(m.f1, 0.99);
  EXPECT_GE(m.pos_accuracy, 0.99);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto doc = predict(*model_, (*data_)[i].text);
    ASSERT_EQ(doc.sentences.size(), 1u);
    EXPECT_EQ(doc.spans, (*data_)[i].spans) << (*data_)[i].text;
  }
}

TEST_F(TrainedModel, ConfidencesAreProbabilities) {
  for (std::size_t i = 0; i < 30; ++i) {
    const auto doc = predict(*model_, (*data_)[i].text + ". Show me gateways");
    ASSERT_EQ(doc.confidences.size(), doc.spans.size());
    for (double c : doc.confidences) {
      EXPECT_GT(c, 0.0);
      EXPECT_LE(c, 1.0);
    }
  }
  EXPECT_TRUE(predict(*model_, "").sentences.empty());
}

TEST_F(TrainedModel, EvaluateIgnoresDatasetOrder) {
  auto shuffled = *data_;
  Rng rng(2);
  rng.shuffle(shuffled);
  EXPECT_EQ(evaluate(*model_, *data_), evaluate(*model_, shuffled));
}

TEST_F(TrainedModel, LongInputIsTruncatedNotRejected) {
  std::string text = "Show me";
  for (int i = 0; i < 40; ++i)
    text += " routers";
  const auto doc = predict(*model_, text);
  ASSERT_EQ(doc.sentences.size(), 1u);
  EXPECT_EQ(doc.sentences[0].pos.back(), "X");
}

TEST(Metrics, FormulaExamples) {
  const std::vector<Span> gold{{0, 0, 1, 0, 0, "VENDOR"}, {0, 1, 2, 0, 0, "DEVICE"}};
  EvalMetrics all;
  count_spans(all, gold, gold);
  EXPECT_DOUBLE_EQ(finalize(all).f1, 1.0);

  EvalMetrics none;
  count_spans(none, gold, {});
  const auto n = finalize(none);
  EXPECT_EQ(n.precision, 0.0);
  EXPECT_EQ(n.f1, 0.0);

  EvalMetrics half;
  count_spans(half, gold, {gold[0]});
  const auto h = finalize(half);
  EXPECT_DOUBLE_EQ(h.precision, 1.0);
  EXPECT_DOUBLE_EQ(h.recall, 0.5);
  EXPECT_DOUBLE_EQ(h.f1, 2.0 / 3.0);

  EvalMetrics wrong_group;
  count_spans(wrong_group, gold, {{0, 0, 1, 0, 0, "DEVICE"}});
  EXPECT_EQ(wrong_group.false_positives, 1u);
  EXPECT_EQ(wrong_group.false_negatives, 2u);
}

TEST(Intent, PaperSentence) {
  const auto doc = doc_with_spans("Show me Cisco routers up since a year",
                                  {{"Cisco", "VENDOR"}, {"routers", "DEVICE"}, {"up", "STATE"},
                                   {"a year", "DURATION"}});
  const auto p = assemble_intent(doc);
  EXPECT_EQ(p.action, "show");
  ASSERT_EQ(p.targets.size(), 1u);
  EXPECT_EQ(p.targets[0], (IntentTarget{"router", "cisco"}));
  EXPECT_EQ(p.filters.state, "up");
  EXPECT_EQ(p.filters.duration, "a year");
  EXPECT_FALSE(p.filters.location);
  EXPECT_FALSE(p.needs_refinement);
  EXPECT_EQ(payload_from_json(to_json(p)), p);
  EXPECT_TRUE(to_json(p)["filters"]["location"].is_null());
}

TEST(Intent, NoSpansOrNoActionNeedRefinement) {
  EXPECT_TRUE(assemble_intent(tokenizer::make_doc("Show me everything")).needs_refinement);
  const auto gib = assemble_intent(tokenizer::make_doc("zzqx qq"));
  EXPECT_FALSE(gib.action);
  EXPECT_TRUE(gib.needs_refinement);
  const auto no_verb = assemble_intent(doc_with_spans("Which routers are down", {{"routers", "DEVICE"}}));
  EXPECT_TRUE(no_verb.needs_refinement);
}

TEST(Intent, TwoDevicesKeepOrderAndPairVendors) {
  const auto doc = doc_with_spans("List Cisco routers and Juniper switches in Paris",
                                  {{"Cisco", "VENDOR"}, {"routers", "DEVICE"},
                                   {"Juniper", "VENDOR"}, {"switches", "DEVICE"},
                                   {"Paris", "LOCATION"}});
  const auto p = assemble_intent(doc);
  ASSERT_EQ(p.targets.size(), 2u);
  EXPECT_EQ(p.targets[0], (IntentTarget{"router", "cisco"}));
  EXPECT_EQ(p.targets[1], (IntentTarget{"switch", "juniper"}));
  EXPECT_EQ(p.filters.location, "paris");
}

TEST(Intent, HowManyCountsAndSingleVendorApplies) {
  const auto p = assemble_intent(doc_with_spans(
      "How many switches are up for more than 2 hours ?",
      {{"switches", "DEVICE"}, {"up", "STATE"}, {"2 hours", "DURATION"}}));
  EXPECT_EQ(p.action, "count");
  EXPECT_EQ(p.targets[0], (IntentTarget{"switch", std::nullopt}));
  EXPECT_EQ(p.filters.duration, "2 hours");

  const auto q = assemble_intent(doc_with_spans("Configure vlan 20 on Arista gear for firewalls",
                                                {{"20", "VLAN_ID"}, {"Arista", "VENDOR"},
                                                 {"firewalls", "DEVICE"}}));
  EXPECT_EQ(q.action, "configure");
  EXPECT_EQ(q.targets[0].vendor, "arista");
  EXPECT_EQ(q.filters.vlan_id, "20");
}

TEST(Intent, Singularize) {
  EXPECT_EQ(singularize("routers"), "router");
  EXPECT_EQ(singularize("switches"), "switch");
  EXPECT_EQ(singularize("access points"), "access point");
  EXPECT_EQ(singularize("proxies"), "proxy");
  EXPECT_EQ(singularize("router"), "router");
  EXPECT_EQ(singularize("boss"), "boss");
}
