#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtlab/model.hpp"
#include "mtlab/rng.hpp"
#include "mtlab/tensor.hpp"

namespace mtlab {

enum class TaskKind { copy, reverse, increment, token_remap };

inline const char* task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::copy: return "copy";
    case TaskKind::reverse: return "reverse";
    case TaskKind::increment: return "increment";
    case TaskKind::token_remap: return "token_remap";
  }
  throw std::invalid_argument("task_kind_name: unknown kind");
}

inline TaskKind task_kind_from(const std::string& s) {
  if (s == "copy") return TaskKind::copy;
  if (s == "reverse") return TaskKind::reverse;
  if (s == "increment") return TaskKind::increment;
  if (s == "token_remap") return TaskKind::token_remap;
  throw std::invalid_argument("unknown task kind '" + s + "'");
}

// A synthetic sequence-transduction task with a declared resource level.
// train_size is the task's data size D_i; resource imbalance across a suite
// comes from train_size ratios. target_noise is the per-position rate at
// which the generated target token is replaced by a random one, fixed at
// generation time; it gives the task an irreducible memorizable component the
// way natural data has.
struct TaskSpec {
  int task_id = 0;
  TaskKind kind = TaskKind::copy;
  long train_size = 0;
  long eval_size = 0;
  int min_len = 1;
  int max_len = 1;
  int vocab_lo = kFirstPayloadId;
  int vocab_hi = kFirstPayloadId + 1;
  std::uint64_t seed = 0;
  double target_noise = 0.0;
  // Decoder start token for this task's examples. Tasks sharing a vocab slice
  // stay distinguishable by giving each its own start token, the way
  // multilingual models mark the target language.
  std::int32_t start_token = kBosId;

  void validate() const {
    if (train_size <= 0 || eval_size <= 0)
      throw std::invalid_argument("TaskSpec: train_size and eval_size must be positive");
    if (min_len < 1 || min_len > max_len)
      throw std::invalid_argument("TaskSpec: bad sequence length range");
    if (vocab_lo < kFirstPayloadId || vocab_lo >= vocab_hi)
      throw std::invalid_argument("TaskSpec: empty or reserved vocab slice");
    if (target_noise < 0.0 || target_noise >= 1.0)
      throw std::invalid_argument("TaskSpec: target_noise must be in [0,1)");
    if (start_token < 1 || (start_token >= vocab_lo && start_token < vocab_hi) ||
        start_token == kEosId)
      throw std::invalid_argument("TaskSpec: start_token collides with pad/eos/payload");
  }
};

struct Example {
  std::vector<std::int32_t> src;
  std::vector<std::int32_t> tgt;
  friend bool operator==(const Example&, const Example&) = default;
};

struct TaskDataset {
  TaskSpec spec;
  std::vector<Example> train;
  std::vector<Example> eval_set;

  // Fixed slice of the train pool used for train-pool loss tracking.
  std::span<const Example> train_probe() const {
    const std::size_t n =
        std::min(train.size(), static_cast<std::size_t>(spec.eval_size));
    return {train.data(), n};
  }
};

namespace detail {

inline std::vector<std::int32_t> remap_table(const TaskSpec& spec) {
  const int width = spec.vocab_hi - spec.vocab_lo;
  std::vector<std::int32_t> perm(width);
  std::iota(perm.begin(), perm.end(), spec.vocab_lo);
  Rng rng(spec.seed, streams::remap);
  for (int i = width - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

inline Example make_example(const TaskSpec& spec, const std::vector<std::int32_t>& remap,
                            Rng& rng) {
  const int width = spec.vocab_hi - spec.vocab_lo;
  const int len =
      spec.min_len + static_cast<int>(rng.uniform_index(
                         static_cast<std::uint64_t>(spec.max_len - spec.min_len + 1)));
  Example ex;
  ex.src.resize(len);
  ex.tgt.resize(len);
  for (int i = 0; i < len; ++i)
    ex.src[i] = spec.vocab_lo + static_cast<std::int32_t>(
                                    rng.uniform_index(static_cast<std::uint64_t>(width)));
  switch (spec.kind) {
    case TaskKind::copy:
      ex.tgt = ex.src;
      break;
    case TaskKind::reverse:
      std::reverse_copy(ex.src.begin(), ex.src.end(), ex.tgt.begin());
      break;
    case TaskKind::increment:
      for (int i = 0; i < len; ++i)
        ex.tgt[i] = spec.vocab_lo + (ex.src[i] - spec.vocab_lo + 1) % width;
      break;
    case TaskKind::token_remap:
      for (int i = 0; i < len; ++i) ex.tgt[i] = remap[ex.src[i] - spec.vocab_lo];
      break;
  }
  if (spec.target_noise > 0.0)
    for (int i = 0; i < len; ++i)
      if (rng.uniform() < spec.target_noise)
        ex.tgt[i] = spec.vocab_lo + static_cast<std::int32_t>(
                                        rng.uniform_index(static_cast<std::uint64_t>(width)));
  return ex;
}

}  // namespace detail

// Deterministic in spec.seed; train and eval examples come from disjoint
// generator streams.
inline TaskDataset generate_task(const TaskSpec& spec) {
  spec.validate();
  TaskDataset ds;
  ds.spec = spec;
  const std::vector<std::int32_t> remap = detail::remap_table(spec);
  Rng train_rng(spec.seed, streams::train_data);
  Rng eval_rng(spec.seed, streams::eval_data);
  ds.train.reserve(static_cast<std::size_t>(spec.train_size));
  for (long i = 0; i < spec.train_size; ++i)
    ds.train.push_back(detail::make_example(spec, remap, train_rng));
  ds.eval_set.reserve(static_cast<std::size_t>(spec.eval_size));
  for (long i = 0; i < spec.eval_size; ++i)
    ds.eval_set.push_back(detail::make_example(spec, remap, eval_rng));
  return ds;
}

// Sampling/scalarization weights over K tasks: non-negative, summing to 1
// within 1e-12. Zero entries are allowed so one-hot phases are expressible.
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(std::vector<double> w) : w_(std::move(w)) {
    if (w_.empty()) throw std::invalid_argument("WeightVector: empty");
    double sum = 0.0;
    for (double v : w_) {
      if (!(v >= 0.0)) throw std::invalid_argument("WeightVector: negative weight");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("WeightVector: weights sum to " + std::to_string(sum));
  }

  static WeightVector one_hot(std::size_t k, std::size_t index) {
    if (index >= k) throw std::invalid_argument("WeightVector::one_hot: index out of range");
    std::vector<double> w(k, 0.0);
    w[index] = 1.0;
    return WeightVector(std::move(w));
  }

  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  const std::vector<double>& values() const { return w_; }

  friend bool operator==(const WeightVector&, const WeightVector&) = default;

 private:
  std::vector<double> w_;
};

// P_i = D_i / sum_j D_j.
inline std::vector<double> empirical_distribution(std::span<const double> sizes) {
  if (sizes.empty()) throw std::invalid_argument("empirical_distribution: empty input");
  double total = 0.0;
  for (double s : sizes) {
    if (!(s > 0.0)) throw std::invalid_argument("empirical_distribution: non-positive size");
    total += s;
  }
  std::vector<double> p(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) p[i] = sizes[i] / total;
  return p;
}

// Q_i proportional to P_i^{1/tau}. tau > 1 flattens toward uniform,
// up-sampling low-resource tasks. tau = 1 is the identity.
inline std::vector<double> temperature_distribution(std::span<const double> p, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature_distribution: tau must be positive");
  if (p.empty()) throw std::invalid_argument("temperature_distribution: empty distribution");
  std::vector<double> q(p.begin(), p.end());
  if (tau == 1.0) return q;
  double sum = 0.0;
  for (double& v : q) {
    if (!(v >= 0.0) || v > 1.0)
      throw std::invalid_argument("temperature_distribution: invalid probability");
    v = std::pow(v, 1.0 / tau);
    sum += v;
  }
  for (double& v : q) v /= sum;
  return q;
}

// Categorical draw of a task index with probability w_i.
inline std::size_t sample_task(const WeightVector& w, Rng& rng) {
  return rng.categorical(w.values());
}

// One training batch. tgt_in is tgt_out shifted right with BOS prepended;
// sources carry a trailing EOS; everything is padded to the batch maximum.
struct Batch {
  TokenMatrix src;
  TokenMatrix tgt_in;
  TokenMatrix tgt_out;
  std::vector<std::uint8_t> src_mask;   // [B, S] row-major, 1 = real token
  std::vector<std::uint8_t> tgt_mask;   // [B, T]
  std::vector<int> task_ids;            // per example, for efficiency accounting
};

namespace detail {

inline Batch assemble_batch(std::span<const Example* const> examples,
                            std::span<const int> task_ids,
                            std::span<const std::int32_t> start_tokens) {
  const std::size_t b = examples.size();
  std::size_t s_len = 0, t_len = 0;
  for (const Example* ex : examples) {
    s_len = std::max(s_len, ex->src.size() + 1);   // + EOS
    t_len = std::max(t_len, ex->tgt.size() + 1);   // + start token / EOS
  }
  Batch out;
  out.src = TokenMatrix(b, s_len, kPadId);
  out.tgt_in = TokenMatrix(b, t_len, kPadId);
  out.tgt_out = TokenMatrix(b, t_len, kPadId);
  out.src_mask.assign(b * s_len, 0);
  out.tgt_mask.assign(b * t_len, 0);
  out.task_ids.assign(task_ids.begin(), task_ids.end());
  for (std::size_t i = 0; i < b; ++i) {
    const Example& ex = *examples[i];
    for (std::size_t j = 0; j < ex.src.size(); ++j) out.src.at(i, j) = ex.src[j];
    out.src.at(i, ex.src.size()) = kEosId;
    for (std::size_t j = 0; j <= ex.src.size(); ++j) out.src_mask[i * s_len + j] = 1;
    out.tgt_in.at(i, 0) = start_tokens[i];
    for (std::size_t j = 0; j < ex.tgt.size(); ++j) {
      out.tgt_in.at(i, j + 1) = ex.tgt[j];
      out.tgt_out.at(i, j) = ex.tgt[j];
    }
    out.tgt_out.at(i, ex.tgt.size()) = kEosId;
    for (std::size_t j = 0; j <= ex.tgt.size(); ++j) out.tgt_mask[i * t_len + j] = 1;
  }
  return out;
}

}  // namespace detail

// Draws each of the batch_size examples independently: task index via
// sample_task, then uniform-with-replacement from that task's train pool.
inline Batch next_batch(std::span<const TaskDataset> datasets, const WeightVector& w,
                        std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw std::invalid_argument("next_batch: batch_size must be positive");
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] > 0.0 && (i >= datasets.size() || datasets[i].train.empty()))
      throw std::invalid_argument("next_batch: task " + std::to_string(i) +
                                  " has positive weight but no dataset");
  std::vector<const Example*> chosen(batch_size);
  std::vector<int> task_ids(batch_size);
  std::vector<std::int32_t> starts(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t t = sample_task(w, rng);
    const auto& pool = datasets[t].train;
    chosen[i] = &pool[rng.uniform_index(pool.size())];
    task_ids[i] = static_cast<int>(t);
    starts[i] = datasets[t].spec.start_token;
  }
  return detail::assemble_batch(chosen, task_ids, starts);
}

// Evaluation batches are cut from a fixed pool in order, no sampling.
inline Batch batch_from_pool(std::span<const Example> pool, std::size_t begin, std::size_t count,
                             int task_id, std::int32_t start_token = kBosId) {
  std::vector<const Example*> chosen(count);
  std::vector<int> ids(count, task_id);
  std::vector<std::int32_t> starts(count, start_token);
  for (std::size_t i = 0; i < count; ++i) chosen[i] = &pool[begin + i];
  return detail::assemble_batch(chosen, ids, starts);
}

// ---- task suite description file -------------------------------------------
// Plain-text blocks, one per task:
//   task
//   id = 0
//   kind = copy
//   ...
//   end

inline std::string write_task_suite(std::span<const TaskSpec> specs) {
  std::ostringstream out;
  out.precision(17);
  for (const TaskSpec& s : specs) {
    out << "task\n";
    out << "id = " << s.task_id << "\n";
    out << "kind = " << task_kind_name(s.kind) << "\n";
    out << "train_size = " << s.train_size << "\n";
    out << "eval_size = " << s.eval_size << "\n";
    out << "min_len = " << s.min_len << "\n";
    out << "max_len = " << s.max_len << "\n";
    out << "vocab_lo = " << s.vocab_lo << "\n";
    out << "vocab_hi = " << s.vocab_hi << "\n";
    out << "seed = " << s.seed << "\n";
    out << "target_noise = " << s.target_noise << "\n";
    out << "start_token = " << s.start_token << "\n";
    out << "end\n";
  }
  return out.str();
}

inline std::vector<TaskSpec> parse_task_suite(const std::string& text) {
  std::vector<TaskSpec> specs;
  std::istringstream in(text);
  std::string line;
  bool open = false;
  TaskSpec cur;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    if (line.empty() || line[0] == '#') continue;
    if (line == "task") {
      if (open) throw std::invalid_argument("task suite: nested task block at line " +
                                            std::to_string(lineno));
      open = true;
      cur = TaskSpec{};
      continue;
    }
    if (line == "end") {
      if (!open) throw std::invalid_argument("task suite: stray end at line " +
                                             std::to_string(lineno));
      cur.validate();
      specs.push_back(cur);
      open = false;
      continue;
    }
    const auto eq = line.find('=');
    if (!open || eq == std::string::npos)
      throw std::invalid_argument("task suite: malformed line " + std::to_string(lineno) +
                                  ": '" + line + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "id") cur.task_id = std::stoi(val);
      else if (key == "kind") cur.kind = task_kind_from(val);
      else if (key == "train_size") cur.train_size = std::stol(val);
      else if (key == "eval_size") cur.eval_size = std::stol(val);
      else if (key == "min_len") cur.min_len = std::stoi(val);
      else if (key == "max_len") cur.max_len = std::stoi(val);
      else if (key == "vocab_lo") cur.vocab_lo = std::stoi(val);
      else if (key == "vocab_hi") cur.vocab_hi = std::stoi(val);
      else if (key == "seed") cur.seed = std::stoull(val);
      else if (key == "target_noise") cur.target_noise = std::stod(val);
      else if (key == "start_token") cur.start_token = std::stoi(val);
      else throw std::invalid_argument("unknown key '" + key + "'");
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("task suite line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (open) throw std::invalid_argument("task suite: unterminated task block");
  if (specs.empty()) throw std::invalid_argument("task suite: no tasks");
  return specs;
}

inline void save_task_suite(const std::string& path, std::span<const TaskSpec> specs) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << write_task_suite(specs);
}

inline std::vector<TaskSpec> load_task_suite(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_task_suite(buf.str());
}

// Smallest model vocabulary that can express the suite.
inline int suite_vocab_size(std::span<const TaskSpec> specs) {
  int hi = kFirstPayloadId;
  for (const TaskSpec& s : specs) hi = std::max(hi, s.vocab_hi);
  return hi;
}

}  // namespace mtlab
