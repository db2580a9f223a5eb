// embfuse: batch driver for combining embedding views, training encoders,
// running pipelines and sweeps, and checking the theory lab.
//
// Exit status: 0 ok, 1 failed assertion or runtime failure, 2 usage or input error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "embfuse/classifier.hpp"
#include "embfuse/cnn_training.hpp"
#include "embfuse/combiner.hpp"
#include "embfuse/dataset.hpp"
#include "embfuse/embedding.hpp"
#include "embfuse/fixture.hpp"
#include "embfuse/pipeline.hpp"
#include "embfuse/text_cnn.hpp"
#include "embfuse/text_format.hpp"
#include "embfuse/theory.hpp"

namespace {

using namespace embfuse;

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path);
  return out;
}

// Writes to `path`, or to stdout when the path is empty or "-".
template <typename Fn>
void emit(const std::string& path, Fn&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
  } else {
    auto out = open_output(path);
    write(out);
  }
}

struct PipelineFlags {
  std::string config;
  std::optional<std::string> method, encoder, dataset, pretrained, domain, word_vectors;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats, threads, epochs;
  std::optional<std::size_t> train_size;
  std::optional<std::vector<double>> alpha_grid, l2_grid;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON key-value config file; flags override it");
    app->add_option("--method", method, "cat_lock|cat_open|cca_lock|kcca_lock|view1_only|view2_only|bow");
    app->add_option("--encoder", encoder, "cnn_r|cnn_s|cnn_ns|bow|none");
    app->add_option("--dataset", dataset, "label<TAB>text file");
    app->add_option("--pretrained", pretrained, "pretrained view embeddings");
    app->add_option("--domain", domain, "domain view embeddings (encoder none)");
    app->add_option("--word-vectors", word_vectors, "word-vector text file");
    app->add_option("--seed", seed, "base seed; repeat i uses seed + i");
    app->add_option("--repeats", repeats);
    app->add_option("--threads", threads, "parallel repeats; results do not depend on it");
    app->add_option("--epochs", epochs, "encoder and joint-training epoch limit");
    app->add_option("--train-size", train_size, "subsample the train split to this size");
    app->add_option("--alpha-grid", alpha_grid)->delimiter(',');
    app->add_option("--l2-grid", l2_grid)->delimiter(',');
  }

  [[nodiscard]] PipelineSpec spec() const {
    PipelineSpec s = config.empty() ? PipelineSpec{} : load_pipeline_config(config);
    if (method) s.method = parse_pipeline_method(*method);
    if (encoder) s.encoder = parse_encoder_mode(*encoder);
    if (dataset) s.dataset = *dataset;
    if (pretrained) s.pretrained = *pretrained;
    if (domain) s.domain = *domain;
    if (word_vectors) s.word_vectors = *word_vectors;
    if (seed) s.run.seed = *seed;
    if (repeats) s.run.repeats = *repeats;
    if (threads) s.threads = *threads;
    if (epochs) {
      s.encoder_training.epochs = *epochs;
      s.joint_training.epochs = *epochs;
    }
    if (train_size) s.train_size = *train_size;
    if (alpha_grid) s.run.alpha_grid = *alpha_grid;
    if (l2_grid) s.run.l2_grid = *l2_grid;
    s.validate();
    return s;
  }
};

void print_summary(const PipelineMetrics& m) {
  std::fprintf(stderr, "%s/%s  config %s  seed %llu  test %.4f +/- %.4f  dev %.4f +/- %.4f  (%zu repeats, %.1fs)\n",
               to_string(m.method).c_str(), to_string(m.encoder).c_str(),
               format_hash(m.config_hash).c_str(), static_cast<unsigned long long>(m.seed),
               m.mean_test, m.std_test, m.mean_dev, m.std_dev, m.repeats.size(), m.wall_time_s);
}

void print_theory_table(const TheoryOutcome& outcome) {
  const auto& r = outcome.report;
  std::cout << "check: " << r["check"].get<std::string>() << "\n";
  const std::string check = r["check"].get<std::string>();
  if (check == "thm1") {
    const auto& s = r["result"];
    std::cout << "worlds " << s["worlds"] << "  violations " << s["violations"]
              << "  chain failures " << s["chain_failures"] << "  noiseless " << s["noiseless_worlds"]
              << " (max gap " << s["max_noiseless_gap"] << ")\n";
    if (r["exact_equality_branch"].get<bool>()) std::cout << "noiseless: exact-equality branch\n";
  } else if (check == "thm1_sweep_c") {
    std::cout << "c\t|w_bar|\tsqrt2/c\texcess\tbound\n";
    for (const auto& p : r["result"]["points"]) {
      std::cout << p["c"] << '\t' << p["weight_norm"] << '\t' << p["expected_norm"] << '\t'
                << p["excess"] << '\t' << p["bound_term"] << '\n';
    }
  } else {
    std::cout << "seed\tacc_cat\tacc_cca\tacc_residue\n";
    for (const auto& run : r["runs"]) {
      std::cout << run["seed"] << '\t' << run["acc_cat"] << '\t' << run["acc_cca"] << '\t'
                << run["acc_residue"] << '\n';
    }
    std::cout << "mean\t" << r["mean_acc_cat"] << '\t' << r["mean_acc_cca"] << '\t'
              << r["mean_acc_residue"] << '\n';
  }
  for (const auto& f : outcome.failures) std::cout << "FAILED: " << f << '\n';
  std::cout << (outcome.passed ? "all assertions passed" : "assertions failed") << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embfuse: combine pretrained and domain sentence embeddings"};
  app.require_subcommand(1);

  // combine
  auto* combine = app.add_subcommand("combine", "combine two embedding views");
  std::string c_method = "cat", c_v1, c_v2, c_out, c_save, c_load, c_dataset;
  double c_alpha = 1.0, c_reg = 1e-3, c_sigma = 1.0;
  std::uint64_t c_seed = 0;
  combine->add_option("--method", c_method)->check(CLI::IsMember({"cat", "cca", "kcca"}));
  combine->add_option("--v1", c_v1)->required();
  combine->add_option("--v2", c_v2)->required();
  combine->add_option("--out", c_out)->required();
  combine->add_option("--alpha", c_alpha);
  combine->add_option("--reg", c_reg, "CCA / KCCA ridge");
  combine->add_option("--sigma", c_sigma, "KCCA Gaussian bandwidth");
  combine->add_option("--dataset", c_dataset, "fit on the train split of this dataset (else all rows)");
  combine->add_option("--seed", c_seed, "split seed with --dataset");
  combine->add_option("--save-combiner", c_save);
  combine->add_option("--load-combiner", c_load, "apply a saved combiner instead of fitting");

  // train-encoder
  auto* train = app.add_subcommand("train-encoder", "train a text-CNN on a labeled dataset");
  std::string t_dataset, t_mode = "cnn_r", t_words, t_out, t_embed_out;
  std::uint64_t t_seed = 0;
  int t_epochs = 50;
  std::size_t t_filters = 128, t_dim = 300;
  train->add_option("--dataset", t_dataset)->required();
  train->add_option("--mode", t_mode)->check(CLI::IsMember({"cnn_r", "cnn_s", "cnn_ns"}));
  train->add_option("--word-vectors", t_words);
  train->add_option("--seed", t_seed);
  train->add_option("--epochs", t_epochs);
  train->add_option("--filters", t_filters, "feature maps per width");
  train->add_option("--embed-dim", t_dim);
  train->add_option("--out", t_out, "encoder blob")->required();
  train->add_option("--embeddings-out", t_embed_out, "also write sentence embeddings of every row");

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "run a seeded, repeated pipeline");
  PipelineFlags p_flags;
  p_flags.attach(pipeline);
  std::string p_out, p_runs, p_timing;
  pipeline->add_option("--out", p_out, "metrics CSV (default stdout)");
  pipeline->add_option("--runs", p_runs, "per-run JSON lines");
  pipeline->add_option("--timing", p_timing, "wall-time CSV");

  // grid
  auto* grid = app.add_subcommand("grid", "grid search on one split");
  std::string g_combine = "cat", g_dataset, g_v1, g_v2, g_out, g_jsonl;
  std::uint64_t g_seed = 0;
  std::optional<std::vector<double>> g_alpha, g_l2;
  grid->add_option("--combine", g_combine)->check(CLI::IsMember({"view1", "view2", "cat", "cca", "kcca"}));
  grid->add_option("--dataset", g_dataset)->required();
  grid->add_option("--v1", g_v1)->required();
  grid->add_option("--v2", g_v2);
  grid->add_option("--seed", g_seed);
  grid->add_option("--alpha-grid", g_alpha)->delimiter(',');
  grid->add_option("--l2-grid", g_l2)->delimiter(',');
  grid->add_option("--out", g_out, "CSV (default stdout)");
  grid->add_option("--jsonl", g_jsonl);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "accuracy against training-set size");
  PipelineFlags s_flags;
  s_flags.attach(sweep);
  std::vector<std::size_t> s_sizes;
  std::string s_out;
  sweep->add_option("--sizes", s_sizes, "ascending training sizes")->delimiter(',')->required();
  sweep->add_option("--out", s_out, "CSV (default stdout)");

  // theory
  auto* theory = app.add_subcommand("theory", "numerical checks of the combination theory");
  std::string th_which, th_loss = "logistic", th_out;
  TheoryParams th;
  std::uint64_t th_seed = 0;
  std::optional<double> th_sigma;
  theory->add_option("--which", th_which)
      ->required()
      ->check(CLI::IsMember({"thm1", "thm1_sweep_c", "thm2", "residue"}));
  theory->add_option("--seed", th_seed);
  theory->add_option("--samples", th.samples, "Monte Carlo sample size");
  theory->add_option("--worlds", th.worlds);
  theory->add_option("--sigma", th_sigma, "noise level override");
  theory->add_option("--cs", th.cs, "c values for thm1_sweep_c")->delimiter(',');
  theory->add_option("--loss", th_loss)->check(CLI::IsMember({"logistic", "hinge"}));
  theory->add_option("--d", th.d);
  theory->add_option("--n-train", th.n_train);
  theory->add_option("--n-test", th.n_test);
  theory->add_option("--seeds", th.seeds, "thm2/residue: average over this many seeds");
  theory->add_option("--kcca-rows", th.kcca_rows, "thm2: also fit KCCA on this many rows");
  theory->add_option("--out", th_out, "JSON report path (default: stdout table only)");

  // fixture
  auto* fixture = app.add_subcommand("fixture", "generate the planted review corpus");
  std::size_t f_n = 1000;
  std::uint64_t f_seed = 0;
  std::string f_dir = ".", f_stem = "fixture";
  fixture->add_option("--n", f_n);
  fixture->add_option("--seed", f_seed);
  fixture->add_option("--out-dir", f_dir);
  fixture->add_option("--stem", f_stem);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*combine) {
      const auto v1 = load_embeddings(c_v1, embedding_format_for(c_v1));
      const auto v2 = load_embeddings(c_v2, embedding_format_for(c_v2));
      Combiner combiner;
      if (!c_load.empty()) {
        combiner = load_combiner(c_load);
      } else if (c_method == "cat") {
        combiner = CatCombiner{c_alpha};
      } else {
        std::vector<std::size_t> rows(v1.rows());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        if (!c_dataset.empty()) {
          const auto ds = make_split(load_dataset(c_dataset), SplitFractions{}, c_seed);
          if (ds.size() != v1.rows()) throw UsageError("dataset and embeddings differ in row count");
          rows = ds.split().train;
        }
        if (c_method == "cca") combiner = fit_cca(v1.select_rows(rows), v2.select_rows(rows), c_reg);
        else combiner = fit_kcca(v1.select_rows(rows), v2.select_rows(rows), c_sigma, c_reg);
      }
      const EmbeddingSet out = std::visit(
          [&](const auto& c) -> EmbeddingSet {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, CatCombiner>) return cat_combine(v1, v2, c.alpha);
            else if constexpr (std::is_same_v<T, CcaCombiner>) return cca_combine(c, v1, v2);
            else return kcca_combine(c, v1, v2);
          },
          combiner);
      write_embeddings(out, c_out, embedding_format_for(c_out));
      if (!c_save.empty()) save_combiner(combiner, c_save);
      return 0;
    }

    if (*train) {
      auto ds = make_split(load_dataset(t_dataset), SplitFractions{}, t_seed);
      const auto vocab = build_vocab(ds);
      TextCnnConfig config;
      config.num_filters = t_filters;
      config.embed_dim = t_dim;
      std::optional<WordVectors> wv;
      if (!t_words.empty()) wv = load_word_vectors(t_words, t_dim);
      CnnTrainOptions options;
      options.epochs = t_epochs;
      auto result = train_cnn(ds, vocab, parse_embedding_mode(t_mode), config, options, t_seed,
                              wv ? &*wv : nullptr);
      save_text_cnn(result.cnn, vocab, t_out);
      if (!t_embed_out.empty()) {
        write_embeddings(encode_dataset(result.cnn, index_sequences(ds, vocab, config.max_len)),
                         t_embed_out, embedding_format_for(t_embed_out));
      }
      std::fprintf(stderr, "best dev accuracy %.4f at epoch %d\n",
                   result.dev_history[static_cast<std::size_t>(result.best_epoch)], result.best_epoch);
      return 0;
    }

    if (*pipeline) {
      const auto spec = p_flags.spec();
      const auto metrics = run_pipeline(spec);
      emit(p_out, [&](std::ostream& o) { write_metrics_csv(metrics, o); });
      if (!p_runs.empty()) emit(p_runs, [&](std::ostream& o) { write_runs_jsonl(metrics, o); });
      if (!p_timing.empty()) emit(p_timing, [&](std::ostream& o) { write_timing_csv(metrics, o); });
      print_summary(metrics);
      return 0;
    }

    if (*grid) {
      const auto ds = make_split(load_dataset(g_dataset), SplitFractions{}, g_seed);
      const auto v1 = load_embeddings(g_v1, embedding_format_for(g_v1));
      std::optional<EmbeddingSet> v2;
      if (!g_v2.empty()) v2 = load_embeddings(g_v2, embedding_format_for(g_v2));
      RunConfig grids;
      grids.seed = g_seed;
      if (g_alpha) grids.alpha_grid = *g_alpha;
      if (g_l2) grids.l2_grid = *g_l2;
      const auto method = parse_combine_method(g_combine);
      const auto report = grid_search(method, grids, ds, v1, v2 ? &*v2 : nullptr);
      nlohmann::ordered_json cfg;
      cfg["combine"] = g_combine;
      cfg["dataset"] = g_dataset;
      cfg["v1"] = g_v1;
      cfg["v2"] = g_v2;
      cfg["alpha_grid"] = grids.alpha_grid;
      cfg["l2_grid"] = grids.l2_grid;
      const auto hash = fnv1a64(cfg.dump());
      emit(g_out, [&](std::ostream& o) { write_grid_csv(report, o, hash, g_seed); });
      if (!g_jsonl.empty()) emit(g_jsonl, [&](std::ostream& o) { write_grid_jsonl(report, o, hash, g_seed); });
      return 0;
    }

    if (*sweep) {
      const auto spec = s_flags.spec();
      const auto rows = run_size_sweep(spec, load_pipeline_data(spec), s_sizes);
      emit(s_out, [&](std::ostream& o) { write_sweep_csv(rows, o); });
      return 0;
    }

    if (*theory) {
      th.loss = parse_margin_loss(th_loss);
      th.sigma = th_sigma;
      const auto outcome = run_theory(parse_theory_check(th_which), th, th_seed);
      if (!th_out.empty()) {
        auto out = open_output(th_out);
        out << outcome.report.dump(2) << '\n';
      }
      print_theory_table(outcome);
      return outcome.passed ? 0 : kExitFailure;
    }

    if (*fixture) {
      const auto corpus = generate_fixture_corpus(f_n, f_seed);
      write_fixture(corpus, f_dir, f_stem);
      std::printf("%zu reviews, corpus hash %s\n", corpus.dataset.size(), format_hash(corpus.hash).c_str());
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
