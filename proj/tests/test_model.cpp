#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mtlab/model.hpp"
#include "mtlab/optim.hpp"
#include "mtlab/tasks.hpp"
#include "test_util.hpp"

using namespace mtlab;
using mtlab_test::grad_error;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.model_dim = 16;
  c.ff_dim = 64;
  c.heads = 2;
  c.qkv_dim = 16;
  c.vocab_size = 12;
  c.max_len = 12;
  c.dropout = 0.0;
  c.label_smoothing = 0.1;
  return c;
}

TokenMatrix tokens(std::initializer_list<std::initializer_list<std::int32_t>> rows) {
  std::size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  TokenMatrix m(rows.size(), cols, kPadId);
  std::size_t i = 0;
  for (const auto& r : rows) {
    std::size_t j = 0;
    for (std::int32_t v : r) m.at(i, j++) = v;
    ++i;
  }
  return m;
}

// Overfit a fixed 32-example copy task; shared by the fitting and decoding
// tests below.
struct OverfitFixture {
  ModelState model;
  TaskDataset data;
  double final_plain_loss;

  static OverfitFixture make() {
    TaskSpec spec;
    spec.task_id = 0;
    spec.kind = TaskKind::copy;
    spec.train_size = 32;
    spec.eval_size = 8;
    spec.min_len = 3;
    spec.max_len = 6;
    spec.vocab_lo = 3;
    spec.vocab_hi = 11;
    spec.seed = 99;
    TaskDataset data = generate_task(spec);

    ModelConfig cfg;
    cfg.encoder_layers = 2;
    cfg.decoder_layers = 2;
    cfg.model_dim = 32;
    cfg.ff_dim = 128;
    cfg.heads = 2;
    cfg.qkv_dim = 32;
    cfg.vocab_size = 11;
    cfg.max_len = 10;
    cfg.dropout = 0.0;
    cfg.label_smoothing = 0.0;
    ModelState model = ModelState::init(cfg, 5);
    AdamState opt(model.params());
    Rng sample_rng(5, streams::sample);
    WeightVector w = WeightVector::one_hot(1, 0);
    ScheduleSpec sched{ScheduleSpec::Kind::warmup_cosine, 100, 2000, 2e-3};
    std::vector<TaskDataset> suite = {data};

    double plain = 1e9;
    for (long step = 0; step < 2000; ++step) {
      Batch b = next_batch(suite, w, 16, sample_rng);
      Graph g;
      std::vector<NodeId> pn;
      NodeId logits =
          build_transformer_logits(g, model, b.src, b.tgt_in, Mode::train, nullptr, &pn);
      NodeId loss = sequence_loss(g, logits, b.tgt_out, 0.0);
      g.backward(loss);
      std::vector<Tensor> grads;
      for (NodeId id : pn) grads.push_back(g.grad(id));
      opt.step(model.params(), grads, learning_rate(step, sched));
      plain = g.value(loss).data[0];
      if (step > 400 && plain < 0.02) break;  // already fit
    }
    return {std::move(model), std::move(data), plain};
  }
};

const OverfitFixture& overfit_fixture() {
  static const OverfitFixture f = OverfitFixture::make();
  return f;
}

}  // namespace

TEST_CASE("parameter count is the sum of named tensor sizes", "[model]") {
  ModelConfig cfg = tiny_config();
  ModelState a = ModelState::init(cfg, 3);
  ModelState b = ModelState::init(cfg, 3);
  std::size_t total = 0;
  for (const Tensor& t : a.params()) total += shape_numel(t.shape);
  REQUIRE(a.param_count() == total);
  REQUIRE(a.names().size() == a.params().size());
  REQUIRE(a == b);  // same config and seed reproduce the state bitwise

  ModelState c = ModelState::init(cfg, 4);
  REQUIRE(c.param_count() == a.param_count());
  REQUIRE(!(c == a));
}

TEST_CASE("config validation rejects bad dimensions", "[model]") {
  ModelConfig cfg = tiny_config();
  cfg.heads = 3;  // does not divide model_dim
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.dropout = 1.0;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("decoder logits are causal", "[model]") {
  ModelConfig cfg = tiny_config();
  ModelState model = ModelState::init(cfg, 7);
  TokenMatrix src = tokens({{3, 4, 5, kEosId}, {6, 7, kEosId, kPadId}});
  TokenMatrix tgt_a = tokens({{kBosId, 3, 4, 5}, {kBosId, 6, 7, 8}});
  TokenMatrix tgt_b = tgt_a;
  tgt_b.at(0, 3) = 9;  // change a late position only
  tgt_b.at(1, 3) = 10;

  Tensor la = forward_logits(model, src, tgt_a);
  Tensor lb = forward_logits(model, src, tgt_b);
  const std::size_t v = static_cast<std::size_t>(cfg.vocab_size);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 3; ++t)  // positions before the edit
      for (std::size_t j = 0; j < v; ++j)
        REQUIRE(la.data[(b * 4 + t) * v + j] == lb.data[(b * 4 + t) * v + j]);
}

TEST_CASE("padding the source does not change real logits", "[model]") {
  ModelConfig cfg = tiny_config();
  ModelState model = ModelState::init(cfg, 8);
  TokenMatrix src = tokens({{3, 4, 5, kEosId}});
  TokenMatrix padded = tokens({{3, 4, 5, kEosId, kPadId, kPadId, kPadId}});
  TokenMatrix tgt = tokens({{kBosId, 5, 4, 3}});
  Tensor a = forward_logits(model, src, tgt);
  Tensor b = forward_logits(model, padded, tgt);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    REQUIRE(std::abs(a.data[i] - b.data[i]) < 1e-10);
}

TEST_CASE("eval forward is a pure function of state and inputs", "[model]") {
  ModelConfig cfg = tiny_config();
  ModelState model = ModelState::init(cfg, 9);
  TokenMatrix src = tokens({{4, 6, kEosId}});
  TokenMatrix tgt = tokens({{kBosId, 4, 6}});
  REQUIRE(forward_logits(model, src, tgt) == forward_logits(model, src, tgt));
}

TEST_CASE("forward rejects oversized and out-of-range input", "[model]") {
  ModelConfig cfg = tiny_config();
  ModelState model = ModelState::init(cfg, 10);
  TokenMatrix long_src(1, static_cast<std::size_t>(cfg.max_len) + 1, 3);
  TokenMatrix tgt = tokens({{kBosId, 3}});
  REQUIRE_THROWS_AS(forward_logits(model, long_src, tgt), std::invalid_argument);
  TokenMatrix bad = tokens({{3, 127}});
  REQUIRE_THROWS_AS(forward_logits(model, bad, tgt), std::invalid_argument);
}

TEST_CASE("a dim-32 model overfits the fixed 32-example copy task", "[model]") {
  // per-token unsmoothed loss under 0.05 within 2000 Adam steps
  const OverfitFixture& overfit = overfit_fixture();
  Graph g;
  Batch all = batch_from_pool(overfit.data.train, 0, overfit.data.train.size(), 0);
  NodeId logits =
      build_transformer_logits(g, overfit.model, all.src, all.tgt_in, Mode::eval, nullptr);
  const double pool = g.value(sequence_loss(g, logits, all.tgt_out, 0.0)).data[0];
  REQUIRE(pool < 0.05);
}

TEST_CASE("the overfit model decodes its training sources to copies", "[model]") {
  const OverfitFixture& overfit = overfit_fixture();
  const auto& pool = overfit.data.train;
  Batch all = batch_from_pool(pool, 0, pool.size(), 0);
  auto decoded = greedy_decode(overfit.model, all.src, 10);
  std::size_t exact = 0;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (decoded[i] == pool[i].tgt) ++exact;
  REQUIRE(static_cast<double>(exact) >= 0.95 * static_cast<double>(pool.size()));
}

TEST_CASE("an untrained model terminates decoding within max_len", "[model]") {
  ModelConfig cfg = tiny_config();
  ModelState model = ModelState::init(cfg, 11);
  TokenMatrix src = tokens({{3, 4, 5, kEosId}, {7, 8, kEosId, kPadId}});
  auto out = greedy_decode(model, src, 7);
  REQUIRE(out.size() == 2);
  for (const auto& seq : out) REQUIRE(seq.size() <= 7);
  REQUIRE_THROWS_AS(greedy_decode(model, src, 0), std::invalid_argument);
}

TEST_CASE("identical source rows decode identically", "[model]") {
  ModelConfig cfg = tiny_config();
  ModelState model = ModelState::init(cfg, 12);
  TokenMatrix src = tokens({{5, 6, 7, kEosId}, {5, 6, 7, kEosId}});
  auto out = greedy_decode(model, src, 8);
  REQUIRE(out[0] == out[1]);
}

TEST_CASE("end-to-end training-loss gradients match finite differences", "[model]") {
  ModelConfig cfg = tiny_config();
  ModelState model = ModelState::init(cfg, 13);
  TokenMatrix src = tokens({{3, 4, 5, kEosId}, {6, 7, kEosId, kPadId}});
  TokenMatrix tgt_in = tokens({{kBosId, 5, 4}, {kBosId, 7, kPadId}});
  TokenMatrix tgt_out = tokens({{5, 4, kEosId}, {7, kEosId, kPadId}});

  auto loss_value = [&] {
    Graph g;
    NodeId logits = build_transformer_logits(g, model, src, tgt_in, Mode::train, nullptr);
    return g.value(sequence_loss(g, logits, tgt_out, cfg.label_smoothing)).data[0];
  };
  Graph g;
  std::vector<NodeId> pn;
  NodeId logits = build_transformer_logits(g, model, src, tgt_in, Mode::train, nullptr, &pn);
  g.backward(sequence_loss(g, logits, tgt_out, cfg.label_smoothing));

  Rng pick(14);
  double worst = 0.0;
  const double h = 1e-5;
  for (int check = 0; check < 50; ++check) {
    const std::size_t pi = pick.uniform_index(model.params().size());
    Tensor& p = model.params()[pi];
    const std::size_t ei = pick.uniform_index(p.size());
    const double saved = p.data[ei];
    p.data[ei] = saved + h;
    const double up = loss_value();
    p.data[ei] = saved - h;
    const double down = loss_value();
    p.data[ei] = saved;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, grad_error(g.grad(pn[pi]).data[ei], numeric));
  }
  REQUIRE(worst < 1e-3);
}
