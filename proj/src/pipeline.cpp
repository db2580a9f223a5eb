#include "embfuse/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "embfuse/combiner.hpp"
#include "embfuse/rng.hpp"
#include "embfuse/text_format.hpp"
#include "embfuse/vocabulary.hpp"

namespace embfuse {

std::string to_string(PipelineMethod m) {
  switch (m) {
    case PipelineMethod::cat_lock: return "cat_lock";
    case PipelineMethod::cat_open: return "cat_open";
    case PipelineMethod::cca_lock: return "cca_lock";
    case PipelineMethod::kcca_lock: return "kcca_lock";
    case PipelineMethod::view1_only: return "view1_only";
    case PipelineMethod::view2_only: return "view2_only";
    case PipelineMethod::bow: return "bow";
  }
  return "unknown";
}

std::string to_string(EncoderMode m) {
  switch (m) {
    case EncoderMode::cnn_r: return "cnn_r";
    case EncoderMode::cnn_s: return "cnn_s";
    case EncoderMode::cnn_ns: return "cnn_ns";
    case EncoderMode::bow: return "bow";
    case EncoderMode::none: return "none";
  }
  return "unknown";
}

PipelineMethod parse_pipeline_method(const std::string& name) {
  for (auto m : {PipelineMethod::cat_lock, PipelineMethod::cat_open, PipelineMethod::cca_lock,
                 PipelineMethod::kcca_lock, PipelineMethod::view1_only, PipelineMethod::view2_only,
                 PipelineMethod::bow}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown pipeline method '" + name + "'");
}

EncoderMode parse_encoder_mode(const std::string& name) {
  for (auto m : {EncoderMode::cnn_r, EncoderMode::cnn_s, EncoderMode::cnn_ns, EncoderMode::bow,
                 EncoderMode::none}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown encoder mode '" + name + "'");
}

namespace {

bool is_cnn(EncoderMode m) {
  return m == EncoderMode::cnn_r || m == EncoderMode::cnn_s || m == EncoderMode::cnn_ns;
}

EmbeddingMode cnn_mode(EncoderMode m) {
  switch (m) {
    case EncoderMode::cnn_s: return EmbeddingMode::pretrained_static;
    case EncoderMode::cnn_ns: return EmbeddingMode::pretrained_trainable;
    default: return EmbeddingMode::random_trainable;
  }
}

bool needs_view2(PipelineMethod m) {
  return m != PipelineMethod::view1_only && m != PipelineMethod::bow;
}

}  // namespace

void PipelineSpec::validate() const {
  run.validate();
  cnn.validate();
  if (threads < 1) throw std::invalid_argument("threads must be at least 1");
  if (method == PipelineMethod::cat_open && !is_cnn(encoder)) {
    throw std::invalid_argument("cat_open requires a trainable encoder (cnn_r, cnn_s, or cnn_ns)");
  }
  if (needs_view2(method) && encoder == EncoderMode::none && domain.empty()) {
    throw std::invalid_argument(to_string(method) + " needs a second view: set an encoder or a domain file");
  }
  if (train_size && *train_size == 0) throw std::invalid_argument("train_size must be positive");
}

namespace {

nlohmann::ordered_json training_json(const CnnTrainOptions& o) {
  nlohmann::ordered_json j;
  j["epochs"] = o.epochs;
  j["batch_size"] = o.batch_size;
  j["learning_rate"] = o.learning_rate;
  j["patience"] = o.patience;
  j["l2"] = o.l2;
  return j;
}

void apply_training(CnnTrainOptions& o, const nlohmann::json& j, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k == "epochs") o.epochs = it->get<int>();
    else if (k == "batch_size") o.batch_size = it->get<std::size_t>();
    else if (k == "learning_rate") o.learning_rate = it->get<double>();
    else if (k == "patience") o.patience = it->get<int>();
    else if (k == "l2") o.l2 = it->get<double>();
    else throw std::invalid_argument("unknown config key '" + where + "." + k + "'");
  }
}

}  // namespace

nlohmann::ordered_json spec_to_json(const PipelineSpec& spec) {
  nlohmann::ordered_json j;
  j["method"] = to_string(spec.method);
  j["encoder"] = to_string(spec.encoder);
  j["dataset"] = spec.dataset.generic_string();
  j["pretrained"] = spec.pretrained.generic_string();
  j["domain"] = spec.domain.generic_string();
  j["word_vectors"] = spec.word_vectors.generic_string();
  j["seed"] = spec.run.seed;
  j["repeats"] = spec.run.repeats;
  j["alpha_grid"] = spec.run.alpha_grid;
  j["l2_grid"] = spec.run.l2_grid;
  j["cca_reg_grid"] = spec.run.cca_reg_grid;
  j["kcca_sigma_grid"] = spec.run.kcca_sigma_grid;
  j["kcca_reg_grid"] = spec.run.kcca_reg_grid;
  j["split_mode"] = spec.split_mode == SplitMode::stratified ? "stratified" : "uniform";
  j["train_size"] = spec.train_size ? nlohmann::ordered_json(*spec.train_size) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json cnn;
  cnn["embed_dim"] = spec.cnn.embed_dim;
  cnn["num_filters"] = spec.cnn.num_filters;
  cnn["widths"] = spec.cnn.widths;
  cnn["dropout"] = spec.cnn.dropout;
  cnn["max_len"] = spec.cnn.max_len;
  j["cnn"] = std::move(cnn);
  j["encoder_training"] = training_json(spec.encoder_training);
  j["joint_training"] = training_json(spec.joint_training);
  nlohmann::ordered_json solver;
  solver["max_iterations"] = spec.solver.max_iterations;
  solver["grad_tol"] = spec.solver.grad_tol;
  solver["memory"] = spec.solver.memory;
  j["solver"] = std::move(solver);
  return j;
}

std::uint64_t config_hash(const PipelineSpec& spec) { return fnv1a64(spec_to_json(spec).dump()); }

void apply_config(PipelineSpec& spec, const nlohmann::json& config) {
  if (!config.is_object()) throw std::invalid_argument("pipeline config must be a JSON object");
  try {
    for (auto it = config.begin(); it != config.end(); ++it) {
      const auto& k = it.key();
      const auto& v = *it;
      if (k == "method") spec.method = parse_pipeline_method(v.get<std::string>());
      else if (k == "encoder") spec.encoder = parse_encoder_mode(v.get<std::string>());
      else if (k == "dataset") spec.dataset = v.get<std::string>();
      else if (k == "pretrained") spec.pretrained = v.get<std::string>();
      else if (k == "domain") spec.domain = v.get<std::string>();
      else if (k == "word_vectors") spec.word_vectors = v.get<std::string>();
      else if (k == "seed") spec.run.seed = v.get<std::uint64_t>();
      else if (k == "repeats") spec.run.repeats = v.get<int>();
      else if (k == "alpha_grid") spec.run.alpha_grid = v.get<std::vector<double>>();
      else if (k == "l2_grid") spec.run.l2_grid = v.get<std::vector<double>>();
      else if (k == "cca_reg_grid") spec.run.cca_reg_grid = v.get<std::vector<double>>();
      else if (k == "kcca_sigma_grid") spec.run.kcca_sigma_grid = v.get<std::vector<double>>();
      else if (k == "kcca_reg_grid") spec.run.kcca_reg_grid = v.get<std::vector<double>>();
      else if (k == "split_mode") {
        const auto mode = v.get<std::string>();
        if (mode == "stratified") spec.split_mode = SplitMode::stratified;
        else if (mode == "uniform") spec.split_mode = SplitMode::uniform;
        else throw std::invalid_argument("split_mode must be stratified or uniform");
      } else if (k == "train_size") {
        if (v.is_null()) spec.train_size.reset();
        else spec.train_size = v.get<std::size_t>();
      } else if (k == "cnn") {
        for (auto c = v.begin(); c != v.end(); ++c) {
          if (c.key() == "embed_dim") spec.cnn.embed_dim = c->get<std::size_t>();
          else if (c.key() == "num_filters") spec.cnn.num_filters = c->get<std::size_t>();
          else if (c.key() == "widths") spec.cnn.widths = c->get<std::vector<std::size_t>>();
          else if (c.key() == "dropout") spec.cnn.dropout = c->get<double>();
          else if (c.key() == "max_len") spec.cnn.max_len = c->get<std::size_t>();
          else throw std::invalid_argument("unknown config key 'cnn." + c.key() + "'");
        }
      } else if (k == "encoder_training") apply_training(spec.encoder_training, v, k);
      else if (k == "joint_training") apply_training(spec.joint_training, v, k);
      else if (k == "solver") {
        for (auto c = v.begin(); c != v.end(); ++c) {
          if (c.key() == "max_iterations") spec.solver.max_iterations = c->get<int>();
          else if (c.key() == "grad_tol") spec.solver.grad_tol = c->get<double>();
          else if (c.key() == "memory") spec.solver.memory = c->get<int>();
          else throw std::invalid_argument("unknown config key 'solver." + c.key() + "'");
        }
      } else if (k == "threads") spec.threads = v.get<int>();
      else throw std::invalid_argument("unknown config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad config value: ") + e.what());
  }
}

PipelineSpec load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  PipelineSpec spec;
  apply_config(spec, j);
  return spec;
}

PipelineData load_pipeline_data(const PipelineSpec& spec) {
  if (spec.dataset.empty()) throw std::invalid_argument("no dataset path given");
  if (spec.pretrained.empty()) throw std::invalid_argument("no pretrained embedding path given");
  auto ds = load_dataset(spec.dataset);
  auto v1 = load_embeddings(spec.pretrained, embedding_format_for(spec.pretrained));
  PipelineData data{std::move(ds), std::move(v1), std::nullopt, std::nullopt};
  if (!spec.domain.empty()) data.domain = load_embeddings(spec.domain, embedding_format_for(spec.domain));
  if (!spec.word_vectors.empty()) data.word_vectors = load_word_vectors(spec.word_vectors, spec.cnn.embed_dim);
  return data;
}

namespace {

void check_alignment(const PipelineSpec& spec, const PipelineData& data) {
  const auto n = data.dataset.size();
  if (data.pretrained.rows() != n) {
    throw std::invalid_argument("pretrained view has " + std::to_string(data.pretrained.rows()) +
                                " rows, dataset has " + std::to_string(n));
  }
  if (data.domain && data.domain->rows() != n) {
    throw std::invalid_argument("domain view has " + std::to_string(data.domain->rows()) +
                                " rows, dataset has " + std::to_string(n));
  }
  const bool uses_cnn = is_cnn(spec.encoder) && (needs_view2(spec.method));
  if (uses_cnn && spec.encoder != EncoderMode::cnn_r && !data.word_vectors) {
    throw std::invalid_argument(to_string(spec.encoder) + " needs a word-vector file");
  }
  if (needs_view2(spec.method) && spec.encoder == EncoderMode::none && !data.domain) {
    throw std::invalid_argument(to_string(spec.method) + " needs a domain embedding file");
  }
}

GridEntry best_entry(const GridSearchReport& r) { return r.entries.at(r.best); }

}  // namespace

RepeatResult run_repeat(const PipelineSpec& spec, const PipelineData& data, int repeat) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t s = spec.run.seed + static_cast<std::uint64_t>(repeat);
  const Rng rng(s);
  LabeledDataset ds = make_split(data.dataset, SplitFractions{}, s, spec.split_mode);
  if (spec.train_size) ds = subsample_train(ds, *spec.train_size, rng.split(1).next_u64());
  if (spec.method == PipelineMethod::kcca_lock && ds.split().train.size() > kDefaultKernelCap) {
    throw std::invalid_argument("kcca_lock needs at most " + std::to_string(kDefaultKernelCap) +
                                " training rows, got " + std::to_string(ds.split().train.size()));
  }

  const EmbeddingSet& v1 = data.pretrained;
  std::optional<EmbeddingSet> v2;
  std::optional<TextCnn> cnn;
  std::vector<std::vector<int>> sequences;
  const bool text_features = needs_view2(spec.method) || spec.method == PipelineMethod::bow;
  std::optional<Vocabulary> vocab;
  if (text_features && (spec.encoder != EncoderMode::none || spec.method == PipelineMethod::bow)) {
    vocab = build_vocab(data.dataset);
  }
  if (needs_view2(spec.method)) {
    if (is_cnn(spec.encoder)) {
      const WordVectors* wv = data.word_vectors ? &*data.word_vectors : nullptr;
      auto trained = train_cnn(ds, *vocab, cnn_mode(spec.encoder), spec.cnn, spec.encoder_training, s, wv);
      sequences = index_sequences(ds, *vocab, spec.cnn.max_len);
      v2 = encode_dataset(trained.cnn, sequences);
      cnn = std::move(trained.cnn);
    } else if (spec.encoder == EncoderMode::bow) {
      v2 = bow_encode(ds, *vocab, spec.cnn.max_len);
    } else {
      v2 = *data.domain;
    }
  }

  RepeatResult result;
  result.repeat = repeat;
  result.seed = s;
  auto take = [&](const GridSearchReport& report) {
    const auto e = best_entry(report);
    result.dev_acc = e.dev_acc;
    result.test_acc = e.test_acc;
    result.best = e.params;
  };
  switch (spec.method) {
    case PipelineMethod::view1_only:
      take(grid_search(CombineMethod::view1, spec.run, ds, v1, nullptr, spec.solver));
      break;
    case PipelineMethod::bow:
      take(grid_search(CombineMethod::view1, spec.run, ds, bow_encode(ds, *vocab, spec.cnn.max_len),
                       nullptr, spec.solver));
      break;
    case PipelineMethod::view2_only:
      take(grid_search(CombineMethod::view2, spec.run, ds, v1, &*v2, spec.solver));
      break;
    case PipelineMethod::cat_lock:
      take(grid_search(CombineMethod::cat, spec.run, ds, v1, &*v2, spec.solver));
      break;
    case PipelineMethod::cca_lock:
      take(grid_search(CombineMethod::cca, spec.run, ds, v1, &*v2, spec.solver));
      break;
    case PipelineMethod::kcca_lock:
      take(grid_search(CombineMethod::kcca, spec.run, ds, v1, &*v2, spec.solver));
      break;
    case PipelineMethod::cat_open: {
      // start from the frozen-regime selection: same encoder, same (alpha, l2)
      const auto report = grid_search(CombineMethod::cat, spec.run, ds, v1, &*v2, spec.solver);
      const auto chosen = best_entry(report);
      const Split& split = ds.split();
      const Matrix features = cat_combine(v1, *v2, chosen.params.alpha).vectors();
      auto head = train_logreg(select_rows(features, split.train), ds.labels_at(split.train),
                               chosen.params.l2, spec.solver, ds.num_classes());
      CnnTrainOptions joint = spec.joint_training;
      joint.l2 = chosen.params.l2;
      auto open = train_cat_open(ds, sequences, v1, std::move(*cnn), std::move(head),
                                 chosen.params.alpha, joint, rng.split(2).next_u64());
      const Matrix x = cat_open_features(open.cnn, sequences, v1, chosen.params.alpha);
      result.dev_acc = evaluate(open.head, select_rows(x, split.dev), ds.labels_at(split.dev));
      result.test_acc = evaluate(open.head, select_rows(x, split.test), ds.labels_at(split.test));
      result.best = chosen.params;
      break;
    }
  }
  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::pair<double, double> mean_and_stddev(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean of an empty list");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

PipelineMetrics run_pipeline(const PipelineSpec& spec, const PipelineData& data) {
  spec.validate();
  check_alignment(spec, data);
  const auto start = std::chrono::steady_clock::now();
  const auto repeats = static_cast<std::size_t>(spec.run.repeats);
  std::vector<RepeatResult> results(repeats);
  std::vector<std::exception_ptr> errors(repeats);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < repeats; i = next++) {
      try {
        results[i] = run_repeat(spec, data, static_cast<int>(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(spec.threads), repeats);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  PipelineMetrics m;
  m.method = spec.method;
  m.encoder = spec.encoder;
  m.config_hash = config_hash(spec);
  m.seed = spec.run.seed;
  m.train_size = spec.train_size;
  m.repeats = std::move(results);
  std::vector<double> dev, test;
  for (const auto& r : m.repeats) {
    dev.push_back(r.dev_acc);
    test.push_back(r.test_acc);
  }
  std::tie(m.mean_dev, m.std_dev) = mean_and_stddev(dev);
  std::tie(m.mean_test, m.std_test) = mean_and_stddev(test);
  m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

PipelineMetrics run_pipeline(const PipelineSpec& spec) {
  spec.validate();
  return run_pipeline(spec, load_pipeline_data(spec));
}

namespace {

std::string size_field(const std::optional<std::size_t>& size) {
  return size ? std::to_string(*size) : std::string();
}

}  // namespace

void write_metrics_csv(const PipelineMetrics& m, std::ostream& out) {
  out << "config_hash,seed,method,encoder,train_size,repeat,run_seed,dev_acc,test_acc,alpha,l2,"
         "cca_reg,kcca_sigma,kcca_reg\n";
  const std::string prefix = format_hash(m.config_hash) + ',' + std::to_string(m.seed) + ',' +
                             to_string(m.method) + ',' + to_string(m.encoder) + ',' +
                             size_field(m.train_size) + ',';
  for (const auto& r : m.repeats) {
    out << prefix << r.repeat << ',' << r.seed << ',' << format_double(r.dev_acc) << ','
        << format_double(r.test_acc) << ',' << format_double(r.best.alpha) << ','
        << format_double(r.best.l2) << ',' << format_double(r.best.cca_reg) << ','
        << format_double(r.best.kcca_sigma) << ',' << format_double(r.best.kcca_reg) << '\n';
  }
  out << prefix << "mean,," << format_double(m.mean_dev) << ',' << format_double(m.mean_test)
      << ",,,,,\n";
  out << prefix << "stddev,," << format_double(m.std_dev) << ',' << format_double(m.std_test)
      << ",,,,,\n";
}

void write_runs_jsonl(const PipelineMetrics& m, std::ostream& out) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  for (const auto& r : m.repeats) {
    nlohmann::ordered_json j;
    j["config_hash"] = format_hash(m.config_hash);
    j["seed"] = m.seed;
    j["method"] = to_string(m.method);
    j["encoder"] = to_string(m.encoder);
    j["train_size"] = m.train_size ? nlohmann::json(*m.train_size) : nlohmann::json(nullptr);
    j["repeat"] = r.repeat;
    j["run_seed"] = r.seed;
    j["dev_acc"] = r.dev_acc;
    j["test_acc"] = r.test_acc;
    j["alpha"] = num(r.best.alpha);
    j["l2"] = num(r.best.l2);
    j["cca_reg"] = num(r.best.cca_reg);
    j["kcca_sigma"] = num(r.best.kcca_sigma);
    j["kcca_reg"] = num(r.best.kcca_reg);
    out << j.dump() << '\n';
  }
}

void write_timing_csv(const PipelineMetrics& m, std::ostream& out) {
  out << "config_hash,seed,method,repeat,wall_time_s\n";
  for (const auto& r : m.repeats) {
    out << format_hash(m.config_hash) << ',' << m.seed << ',' << to_string(m.method) << ','
        << r.repeat << ',' << format_double(r.wall_time_s) << '\n';
  }
  out << format_hash(m.config_hash) << ',' << m.seed << ',' << to_string(m.method) << ",total,"
      << format_double(m.wall_time_s) << '\n';
}

std::vector<SweepRow> run_size_sweep(const PipelineSpec& spec, const PipelineData& data,
                                     const std::vector<std::size_t>& sizes) {
  if (sizes.empty()) throw std::invalid_argument("size sweep needs at least one size");
  if (!std::is_sorted(sizes.begin(), sizes.end())) throw std::invalid_argument("sweep sizes must be ascending");
  const auto probe = make_split(data.dataset, SplitFractions{}, spec.run.seed, spec.split_mode);
  const std::size_t train = probe.split().train.size();
  if (sizes.back() > train) {
    throw std::invalid_argument("sweep size " + std::to_string(sizes.back()) +
                                " exceeds the train split of " + std::to_string(train));
  }
  std::vector<SweepRow> rows;
  for (auto size : sizes) {
    PipelineSpec at = spec;
    at.train_size = size;
    rows.push_back(SweepRow{size, run_pipeline(at, data)});
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "config_hash,seed,method,encoder,size,mean_acc,std,mean_dev_acc,std_dev_acc,repeats\n";
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    out << format_hash(m.config_hash) << ',' << m.seed << ',' << to_string(m.method) << ','
        << to_string(m.encoder) << ',' << row.size << ',' << format_double(m.mean_test) << ','
        << format_double(m.std_test) << ',' << format_double(m.mean_dev) << ','
        << format_double(m.std_dev) << ',' << m.repeats.size() << '\n';
  }
}

std::string to_string(TheoryCheck which) {
  switch (which) {
    case TheoryCheck::thm1: return "thm1";
    case TheoryCheck::thm1_sweep_c: return "thm1_sweep_c";
    case TheoryCheck::thm2: return "thm2";
    case TheoryCheck::residue: return "residue";
  }
  return "unknown";
}

TheoryCheck parse_theory_check(const std::string& name) {
  for (auto w : {TheoryCheck::thm1, TheoryCheck::thm1_sweep_c, TheoryCheck::thm2, TheoryCheck::residue}) {
    if (to_string(w) == name) return w;
  }
  throw std::invalid_argument("unknown theory check '" + name + "'");
}

namespace {

void require(TheoryOutcome& out, bool ok, const std::string& inequality) {
  if (!ok) out.failures.push_back(inequality);
}

std::string num(double v) { return format_double(v); }

}  // namespace

TheoryOutcome run_theory(TheoryCheck which, const TheoryParams& params, std::uint64_t seed) {
  TheoryOutcome out;
  out.report["check"] = to_string(which);
  out.report["seed"] = seed;
  switch (which) {
    case TheoryCheck::thm1: {
      const auto suite = run_theorem1_suite(params.worlds, params.samples, params.loss, seed, params.sigma);
      out.report["result"] = to_json(suite);
      out.report["exact_equality_branch"] = suite.noiseless_worlds == suite.reports.size();
      require(out, suite.violations == 0,
              "L(f_bar) <= L(f*) + lambda sigma |(P^+)^T w*| + 3 SE violated in " +
                  std::to_string(suite.violations) + " worlds");
      require(out, suite.chain_failures == 0,
              "proof-chain step failed in " + std::to_string(suite.chain_failures) + " worlds");
      require(out, suite.noiseless_mismatches == 0,
              "|L(f_bar) - L(f*)| < 1e-10 failed in noiseless worlds (max gap " +
                  num(suite.max_noiseless_gap) + ")");
      break;
    }
    case TheoryCheck::thm1_sweep_c: {
      const double sigma = params.sigma.value_or(1.0);
      auto sweep = run_diagonal_sweep(params.cs, sigma, params.samples, params.loss, seed);
      out.report["result"] = to_json(sweep);
      require(out, sweep.max_norm_error <= 1e-12,
              "|(P^+)^T w*| - sqrt(2)/c <= 1e-12 failed (max error " + num(sweep.max_norm_error) + ")");
      require(out, sweep.excess_nonincreasing, "excess loss nonincreasing in c failed");
      for (const auto& p : sweep.points) {
        require(out, p.report.bound_holds, "bound failed at c = " + num(p.c));
      }
      break;
    }
    case TheoryCheck::thm2:
    case TheoryCheck::residue: {
      if (params.seeds < 1) throw std::invalid_argument("seeds must be at least 1");
      Theorem2Options opts;
      opts.kcca_rows = params.kcca_rows;
      auto runs = nlohmann::ordered_json::array();
      double cat = 0.0, cca = 0.0, residue = 0.0;
      for (std::size_t i = 0; i < params.seeds; ++i) {
        const auto r = verify_theorem2(params.d, params.n_train, params.n_test, seed + i, opts);
        cat += r.acc_cat;
        cca += r.acc_cca;
        residue += r.acc_residue;
        runs.push_back(to_json(r));
      }
      const double k = static_cast<double>(params.seeds);
      cat /= k;
      cca /= k;
      residue /= k;
      out.report["runs"] = std::move(runs);
      out.report["mean_acc_cat"] = cat;
      out.report["mean_acc_cca"] = cca;
      out.report["mean_acc_residue"] = residue;
      if (which == TheoryCheck::thm2) {
        require(out, cat >= 0.99, "acc_cat >= 0.99 failed: " + num(cat));
        require(out, cca >= 0.45 && cca <= 0.55, "0.45 <= acc_cca <= 0.55 failed: " + num(cca));
        require(out, residue >= 0.99, "acc_residue >= 0.99 failed: " + num(residue));
      } else {
        require(out, residue - cca >= 0.4,
                "acc_residue - acc_cca >= 0.4 failed: " + num(residue) + " - " + num(cca));
      }
      break;
    }
  }
  out.passed = out.failures.empty();
  out.report["passed"] = out.passed;
  out.report["failures"] = out.failures;
  return out;
}

}  // namespace embfuse
