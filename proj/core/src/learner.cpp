#include "stagepoly/learner.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

namespace stagepoly {

void LearnerConfig::validate() const {
  hash().validate();
  if (step_mode == StepMode::theorem && lambda <= 0.0)
    throw InvalidParam("theorem step mode requires lambda > 0");
  if (lambda < 0.0) throw InvalidParam("lambda must be >= 0");
  if (learning_rate <= 0.0) throw InvalidParam("learning rate must be > 0");
  if (epochs < 1) throw InvalidParam("epochs must be >= 1");
  if (passes < 1) throw InvalidParam("passes must be >= 1");
  if (alpha <= 0.0) throw InvalidParam("alpha must be > 0");
  if (max_degree < 1) throw InvalidParam("max degree must be >= 1");
  if (schedule == ScheduleMode::doubling && doubling_tau1 < 1)
    throw InvalidParam("doubling schedule needs tau1 >= 1");
}

double step_size(StepMode mode, double lambda, double eta0, std::uint64_t t) {
  switch (mode) {
    case StepMode::theorem:
      if (lambda <= 0.0) throw InvalidParam("theorem step needs lambda > 0");
      return 1.0 / (lambda * static_cast<double>(t + 1));
    case StepMode::fixed:
      return eta0 / std::sqrt(static_cast<double>(t));
    case StepMode::adaptive:
      throw InvalidParam("adaptive step size is per-coordinate");
  }
  return 0.0;
}

double predict_raw(const WeightVector& w, const SparseVector& feats) {
  double yhat = 0.0;
  for (const auto& [idx, value] : feats) yhat += w.weights[idx] * value;
  return yhat;
}

namespace {

SparseVector gradient_at(const WeightVector& w, const SparseVector& feats,
                         double y, double lambda, double importance,
                         double yhat) {
  if (!std::isfinite(yhat)) throw NumericOverflow("non-finite prediction");
  const double scale = importance * (yhat - y);
  SparseVector g;
  g.reserve(feats.size());
  for (const auto& [idx, value] : feats)
    g.emplace_back(idx, scale * value + lambda * w.weights[idx]);
  return g;
}

}  // namespace

SparseVector gradient(const WeightVector& w, const SparseVector& feats,
                      double y, double lambda, double importance) {
  return gradient_at(w, feats, y, lambda, importance, predict_raw(w, feats));
}

void sgd_step(WeightVector& w, const SparseVector& grad, double eta) {
  if (eta <= 0.0) throw InvalidParam("step size must be > 0");
  for (const auto& [idx, g] : grad) {
    w.weights[idx] -= eta * g;
    if (!std::isfinite(w.weights[idx]))
      throw NumericOverflow("weight overflow at slot " + std::to_string(idx));
  }
}

void sgd_step_adaptive(WeightVector& w, const SparseVector& grad, double eta0) {
  for (const auto& [idx, g] : grad) {
    if (g == 0.0) continue;
    w.grad_sq[idx] += g * g;
    w.weights[idx] -= eta0 * g / std::sqrt(w.grad_sq[idx]);
    if (!std::isfinite(w.weights[idx]))
      throw NumericOverflow("weight overflow at slot " + std::to_string(idx));
  }
}

namespace {

void featurize_terms(const Example& ex, FeatureMap map,
                     const ExpansionState& state, const HashConfig& hash,
                     std::vector<Term>& out) {
  switch (map) {
    case FeatureMap::linear: {
      out.clear();
      out.reserve(ex.features.size());
      for (const auto& [id, value] : ex.features) {
        Monomial m{{id}};
        const auto idx = hash_monomial(m, hash);
        out.push_back(Term{std::move(m), idx, value});
      }
      break;
    }
    case FeatureMap::adaptive:
      expand_terms(ex, state, hash, out);
      break;
    case FeatureMap::quad:
      out = nonadaptive_terms(ex, 2, hash);
      break;
    case FeatureMap::cubic:
      out = nonadaptive_terms(ex, 3, hash);
      break;
  }
}

std::vector<std::uint64_t> build_schedule(const LearnerConfig& cfg,
                                          std::uint64_t n) {
  std::vector<std::uint64_t> schedule;
  if (cfg.epochs <= 1) return schedule;
  if (cfg.schedule == ScheduleMode::equal_spaced) {
    const std::uint64_t total = n * cfg.passes;
    std::uint64_t prev = 0;
    for (std::uint32_t j = 1; j < cfg.epochs; ++j) {
      const std::uint64_t tau =
          (j * total + cfg.epochs - 1) / cfg.epochs;  // ceil
      if (tau > prev) {
        schedule.push_back(tau);
        prev = tau;
      }
    }
  } else {
    std::uint64_t tau = cfg.doubling_tau1;
    for (std::uint32_t j = 1; j < cfg.epochs; ++j) {
      schedule.push_back(tau);
      tau *= 2;
    }
  }
  return schedule;
}

struct StepContext {
  explicit StepContext(const LearnerConfig& c) : cfg(c) {}

  const LearnerConfig& cfg;
  std::vector<Term> terms;
  SparseVector feats;
  Example transformed;

  const Example* view(const Example& raw, const Model& model) {
    if (!cfg.bigram) return &raw;
    transformed = bigram_expand(raw, model.hash);
    return &transformed;
  }

  // featurize (ex already bigram-transformed if applicable), predict, update
  double example_step(const Example& ex, Model& model, std::uint64_t t) {
    featurize_terms(ex, model.map, model.state, model.hash, terms);
    feats = collapse_terms(terms);
    const double yhat = predict_raw(model.weights, feats);
    if (!std::isfinite(yhat))
      throw NumericOverflow("non-finite prediction at example " +
                            std::to_string(t));
    auto g = gradient_at(model.weights, feats, ex.label, cfg.lambda,
                         ex.importance, yhat);
    try {
      if (cfg.step_mode == StepMode::adaptive)
        sgd_step_adaptive(model.weights, g, cfg.learning_rate);
      else
        sgd_step(model.weights, g,
                 step_size(cfg.step_mode, cfg.lambda, cfg.learning_rate, t));
    } catch (const NumericOverflow& e) {
      throw NumericOverflow(std::string(e.what()) + " at example " +
                            std::to_string(t));
    }
    return yhat;
  }
};

double progressive_loss(Task task, double yhat, double y) {
  if (task == Task::binary) {
    const double pred = yhat >= 0.5 ? 1.0 : 0.0;
    return pred == y ? 0.0 : 1.0;
  }
  const double d = yhat - y;
  return d * d;
}

}  // namespace

TrainReport train(ExampleStream& stream, const LearnerConfig& cfg,
                  std::optional<std::uint64_t> declared_n,
                  const TrainHooks* hooks) {
  cfg.validate();
  const HashConfig hash = cfg.hash();

  TrainReport report;
  Model& model = report.model;
  model.weights = WeightVector(cfg.bits, cfg.step_mode == StepMode::adaptive);
  model.map = cfg.map;
  model.bigram = cfg.bigram;
  model.hash = hash;
  model.max_degree = cfg.max_degree;

  ExpansionState& state = model.state;
  state.alpha = cfg.alpha;
  state.max_degree = cfg.max_degree;
  state.max_registry = cfg.max_registry.value_or(hash.table_size());

  if (cfg.map == FeatureMap::adaptive && cfg.epochs > 1) {
    std::uint64_t n = 0;
    if (cfg.schedule == ScheduleMode::equal_spaced) {
      if (declared_n) {
        n = *declared_n;
      } else {
        Example tmp;
        stream.reset();
        while (stream.next(tmp)) ++n;
      }
      if (n == 0) throw EmptyData("train: empty stream");
    }
    state.schedule = build_schedule(cfg, n);
  }

  StepContext ctx(cfg);
  Example raw;
  double prog_sum = 0.0, window_sum = 0.0;
  std::uint64_t t = 0, window_count = 0, term_total = 0;
  std::size_t next_tau = 0;
  const bool adaptive_map = cfg.map == FeatureMap::adaptive;

  const auto t_begin = std::chrono::steady_clock::now();
  for (std::uint32_t pass = 0; pass < cfg.passes; ++pass) {
    stream.reset();
    while (stream.next(raw)) {
      ++t;
      const Example* ex = ctx.view(raw, model);
      state.observe_example(*ex);
      const double y = ex->label;
      const double yhat = ctx.example_step(*ex, model, t);
      term_total += ctx.terms.size();

      const double loss = progressive_loss(cfg.task, yhat, y);
      prog_sum += loss;
      window_sum += loss;
      ++window_count;

      if (adaptive_map && !state.frozen) {
        const double residual = y - yhat;
        for (const Term& tm : ctx.terms) {
          RegistryEntry* entry = state.register_term(tm.mono, tm.index);
          if (entry && cfg.heuristic == SelectHeuristic::ssm)
            state.record_ssm(*entry, tm.value, residual);
        }
      }
      if (hooks && hooks->on_example) hooks->on_example(t, ctx.terms);

      if (adaptive_map && !state.frozen && next_tau < state.schedule.size() &&
          t == state.schedule[next_tau]) {
        ++next_tau;
        const std::uint64_t budget = cfg.budget_override.value_or(
            compute_budget(state.avg_nnz(), state.alpha));
        auto picks = cfg.heuristic == SelectHeuristic::weight
                         ? select_parents_weight(state, model.weights.weights,
                                                 budget)
                         : select_parents_ssm(state, budget);
        if (cfg.fallback) picks = apply_fallback(picks, state, budget);
        expand_support(state, picks, hash);
        if (cfg.heuristic == SelectHeuristic::ssm) state.reset_ssm_stats();
        window_sum = 0.0;
        window_count = 0;
        if (hooks && hooks->on_expand) hooks->on_expand(state, picks);
      }
    }
  }
  const auto t_end = std::chrono::steady_clock::now();

  if (t == 0) throw EmptyData("train: empty stream");
  report.examples_seen = t;
  report.progressive_error = prog_sum / static_cast<double>(t);
  report.progressive_error_last_epoch =
      window_count ? window_sum / static_cast<double>(window_count)
                   : report.progressive_error;
  report.wall_seconds =
      std::chrono::duration<double>(t_end - t_begin).count();
  report.features_per_example =
      static_cast<double>(term_total) / static_cast<double>(t);
  return report;
}

std::uint64_t train_frozen(ExampleStream& stream, Model& model,
                           const LearnerConfig& cfg, std::uint64_t t_start) {
  StepContext ctx(cfg);
  Example raw;
  std::uint64_t t = t_start;
  stream.reset();
  while (stream.next(raw)) {
    ++t;
    ctx.example_step(*ctx.view(raw, model), model, t);
  }
  return t;
}

void featurize(const Example& ex, const Model& model, std::vector<Term>& out) {
  if (model.bigram) {
    const Example transformed = bigram_expand(ex, model.hash);
    featurize_terms(transformed, model.map, model.state, model.hash, out);
  } else {
    featurize_terms(ex, model.map, model.state, model.hash, out);
  }
}

double predict_example(const Model& model, const Example& ex) {
  std::vector<Term> terms;
  featurize(ex, model, terms);
  return predict_raw(model.weights, collapse_terms(terms));
}

double evaluate(const Model& model, ExampleStream& stream, Task task) {
  stream.reset();
  Example ex;
  std::vector<Term> terms;
  double sum = 0.0;
  std::uint64_t n = 0;
  while (stream.next(ex)) {
    ++n;
    featurize(ex, model, terms);
    const double yhat = predict_raw(model.weights, collapse_terms(terms));
    sum += progressive_loss(task, yhat, ex.label);
  }
  if (n == 0) throw EmptyData("evaluate: empty test set");
  return sum / static_cast<double>(n);
}

std::vector<double> predict_all(const Model& model, ExampleStream& stream) {
  stream.reset();
  Example ex;
  std::vector<Term> terms;
  std::vector<double> preds;
  while (stream.next(ex)) {
    featurize(ex, model, terms);
    preds.push_back(predict_raw(model.weights, collapse_terms(terms)));
  }
  return preds;
}

// ---------------------------------------------------------------------------
// model file

namespace {

constexpr char kMagic[4] = {'S', 'P', 'L', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

void put_varint(std::ostream& os, std::uint64_t v) {
  while (v >= 0x80) {
    os.put(static_cast<char>((v & 0x7f) | 0x80));
    v >>= 7;
  }
  os.put(static_cast<char>(v));
}

void put_f32(std::ostream& os, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  put_u32(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_varint(std::istream& is) {
  std::uint64_t v = 0;
  int shift = 0;
  for (;;) {
    const int c = is.get();
    if (c == EOF) throw ParseError("model file: truncated varint");
    v |= static_cast<std::uint64_t>(c & 0x7f) << shift;
    if (!(c & 0x80)) break;
    shift += 7;
    if (shift > 63) throw ParseError("model file: varint overflow");
  }
  return v;
}

float get_f32(std::istream& is) {
  return std::bit_cast<float>(get_u32(is));
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw EmptyData("cannot write model file " + path);

  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, model.hash.bits);
  put_u64(os, model.hash.seed);
  put_u32(os, model.max_degree);
  os.put(static_cast<char>(model.map));
  os.put(model.bigram ? 1 : 0);

  std::vector<Monomial> parents(model.state.parents.begin(),
                                model.state.parents.end());
  std::sort(parents.begin(), parents.end());
  put_varint(os, parents.size());
  for (const Monomial& m : parents) {
    put_varint(os, m.degree());
    for (VarId v : m.vars) put_varint(os, v);
  }

  for (double w : model.weights.weights) put_f32(os, static_cast<float>(w));
  if (!os) throw EmptyData("failed writing model file " + path);
}

Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw EmptyData("cannot open model file " + path);

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("not a model file: " + path);
  const std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw ParseError("unsupported model version " + std::to_string(version));

  Model model;
  model.hash.bits = get_u32(is);
  model.hash.seed = get_u64(is);
  model.hash.validate();
  model.max_degree = get_u32(is);
  const int map = is.get();
  const int bigram = is.get();
  if (map < 0 || map > 3 || bigram < 0)
    throw ParseError("model file: bad feature map bytes");
  model.map = static_cast<FeatureMap>(map);
  model.bigram = bigram != 0;

  model.state.max_degree = model.max_degree;
  model.state.frozen = true;
  const std::uint64_t parent_count = get_varint(is);
  for (std::uint64_t i = 0; i < parent_count; ++i) {
    const std::uint64_t deg = get_varint(is);
    if (deg == 0 || deg > model.max_degree)
      throw ParseError("model file: bad parent degree");
    Monomial m;
    m.vars.reserve(deg);
    for (std::uint64_t k = 0; k < deg; ++k) m.vars.push_back(get_varint(is));
    if (!std::is_sorted(m.vars.begin(), m.vars.end()))
      throw ParseError("model file: parent vars not canonical");
    const auto idx = hash_monomial(m, model.hash);
    model.state.registry.emplace(m, RegistryEntry{idx});
    model.state.parents.insert(std::move(m));
  }

  model.weights = WeightVector(model.hash.bits, false);
  for (double& w : model.weights.weights) w = get_f32(is);
  if (!is) throw ParseError("model file: truncated weights");
  return model;
}

}  // namespace stagepoly
