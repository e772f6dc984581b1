#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtlab/model.hpp"
#include "mtlab/optim.hpp"
#include "mtlab/rng.hpp"
#include "mtlab/tasks.hpp"
#include "mtlab/tensor.hpp"

namespace mtlab {

using Json = nlohmann::json;

// ---- json converters --------------------------------------------------------

inline void to_json(Json& j, const ModelConfig& c) {
  j = Json{{"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers},
           {"model_dim", c.model_dim},           {"ff_dim", c.ff_dim},
           {"heads", c.heads},                   {"qkv_dim", c.qkv_dim},
           {"vocab_size", c.vocab_size},         {"max_len", c.max_len},
           {"dropout", c.dropout},               {"label_smoothing", c.label_smoothing}};
}

inline void from_json(const Json& j, ModelConfig& c) {
  j.at("encoder_layers").get_to(c.encoder_layers);
  j.at("decoder_layers").get_to(c.decoder_layers);
  j.at("model_dim").get_to(c.model_dim);
  j.at("ff_dim").get_to(c.ff_dim);
  j.at("heads").get_to(c.heads);
  j.at("qkv_dim").get_to(c.qkv_dim);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("max_len").get_to(c.max_len);
  j.at("dropout").get_to(c.dropout);
  j.at("label_smoothing").get_to(c.label_smoothing);
}

inline void to_json(Json& j, const ScheduleSpec& s) {
  j = Json{{"kind", s.kind == ScheduleSpec::Kind::warmup_cosine ? "warmup_cosine"
                                                                : "constant_inv_sqrt"},
           {"warmup_steps", s.warmup_steps},
           {"total_steps", s.total_steps},
           {"peak_lr", s.peak_lr}};
}

inline void from_json(const Json& j, ScheduleSpec& s) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "warmup_cosine")
    s.kind = ScheduleSpec::Kind::warmup_cosine;
  else if (kind == "constant_inv_sqrt")
    s.kind = ScheduleSpec::Kind::constant_inv_sqrt;
  else
    throw std::invalid_argument("unknown schedule kind '" + kind + "'");
  j.at("warmup_steps").get_to(s.warmup_steps);
  j.at("total_steps").get_to(s.total_steps);
  j.at("peak_lr").get_to(s.peak_lr);
}

inline void to_json(Json& j, const TaskSpec& t) {
  j = Json{{"id", t.task_id},         {"kind", task_kind_name(t.kind)},
           {"train_size", t.train_size}, {"eval_size", t.eval_size},
           {"min_len", t.min_len},    {"max_len", t.max_len},
           {"vocab_lo", t.vocab_lo},  {"vocab_hi", t.vocab_hi},
           {"seed", t.seed},          {"target_noise", t.target_noise},
           {"start_token", t.start_token}};
}

inline void from_json(const Json& j, TaskSpec& t) {
  j.at("id").get_to(t.task_id);
  t.kind = task_kind_from(j.at("kind").get<std::string>());
  j.at("train_size").get_to(t.train_size);
  j.at("eval_size").get_to(t.eval_size);
  j.at("min_len").get_to(t.min_len);
  j.at("max_len").get_to(t.max_len);
  j.at("vocab_lo").get_to(t.vocab_lo);
  j.at("vocab_hi").get_to(t.vocab_hi);
  j.at("seed").get_to(t.seed);
  j.at("target_noise").get_to(t.target_noise);
  j.at("start_token").get_to(t.start_token);
}

inline void to_json(Json& j, const WeightVector& w) { j = w.values(); }

inline void from_json(const Json& j, WeightVector& w) {
  w = WeightVector(j.get<std::vector<double>>());
}

// ---- atomic file writes -----------------------------------------------------

inline void atomic_write_text(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    f << content;
    if (!f.good()) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// ---- checkpoint archive -----------------------------------------------------
// Binary layout: magic, u64 header length, JSON header, then raw row-major
// f64 payloads for parameters and Adam moments in name order. Values round-trip
// bit-exactly on the same architecture.

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.write(buf, 8);
}

inline std::uint64_t get_u64(std::istream& in) {
  char buf[8];
  in.read(buf, 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v;
  std::memcpy(&v, buf, 8);
  return v;
}

inline void put_doubles(std::ostream& out, const DoubleVec& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void get_doubles(std::istream& in, DoubleVec& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated tensor payload");
}

}  // namespace detail

inline constexpr char kCheckpointMagic[9] = "MTLABCK1";

struct Checkpoint {
  ModelState model;
  AdamState optimizer;
  Json extra;  // run bookkeeping: step, phase, rng streams, counters
};

inline void save_checkpoint(const std::string& path, const ModelState& model,
                            const AdamState& optimizer, const Json& extra) {
  Json header;
  header["config"] = model.config();
  header["adam"] = {{"beta1", optimizer.config().beta1},
                    {"beta2", optimizer.config().beta2},
                    {"eps", optimizer.config().eps},
                    {"step_count", optimizer.step_count()}};
  header["extra"] = extra;
  Json shapes = Json::array();
  for (std::size_t i = 0; i < model.names().size(); ++i)
    shapes.push_back({{"name", model.names()[i]}, {"shape", model.params()[i].shape}});
  header["tensors"] = shapes;
  const std::string head = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    f.write(kCheckpointMagic, 8);
    detail::put_u64(f, head.size());
    f.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const Tensor& t : model.params()) detail::put_doubles(f, t.data);
    for (const Tensor& t : optimizer.first_moment()) detail::put_doubles(f, t.data);
    for (const Tensor& t : optimizer.second_moment()) detail::put_doubles(f, t.data);
    if (!f.good()) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint64_t head_len = detail::get_u64(f);
  std::string head(head_len, '\0');
  f.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!f) throw std::runtime_error("checkpoint: truncated header");
  const Json header = Json::parse(head);

  Checkpoint ck;
  const auto config = header.at("config").get<ModelConfig>();
  // rebuild the state skeleton from the config, then overwrite payloads
  ck.model = ModelState::init(config, 0);
  const Json& shapes = header.at("tensors");
  if (shapes.size() != ck.model.names().size())
    throw std::runtime_error("checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i].at("name").get<std::string>() != ck.model.names()[i] ||
        shapes[i].at("shape").get<Shape>() != ck.model.params()[i].shape)
      throw std::runtime_error("checkpoint: tensor layout mismatch at index " +
                               std::to_string(i));
  }
  for (Tensor& t : ck.model.params()) detail::get_doubles(f, t.data);

  AdamConfig ac;
  ac.beta1 = header.at("adam").at("beta1").get<double>();
  ac.beta2 = header.at("adam").at("beta2").get<double>();
  ac.eps = header.at("adam").at("eps").get<double>();
  ck.optimizer = AdamState(ck.model.params(), ac);
  ck.optimizer.set_step_count(header.at("adam").at("step_count").get<long>());
  for (Tensor& t : ck.optimizer.first_moment()) detail::get_doubles(f, t.data);
  for (Tensor& t : ck.optimizer.second_moment()) detail::get_doubles(f, t.data);
  ck.extra = header.at("extra");
  return ck;
}

}  // namespace mtlab
