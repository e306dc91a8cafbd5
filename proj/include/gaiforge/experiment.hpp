#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gaiforge/bench.hpp"
#include "gaiforge/config.hpp"
#include "gaiforge/gai.hpp"
#include "gaiforge/io.hpp"
#include "gaiforge/metrics.hpp"
#include "gaiforge/parallel.hpp"
#include "gaiforge/train.hpp"

namespace gaiforge {

namespace tags {
inline constexpr std::uint64_t kBaseInit = 11;
inline constexpr std::uint64_t kBaseTrain = 12;
inline constexpr std::uint64_t kFinetune = 20;  // + method index
inline constexpr std::uint64_t kExport = 40;
}  // namespace tags

/// Drives the full pipeline behind the CLI subcommands. One runner holds one
/// resolved config; expensive artifacts (the rendered pool, per-seed base and
/// teacher models) are cached in process and rebuilt deterministically, so a
/// repeated invocation writes bitwise-identical files.
class ExperimentRunner {
 public:
  explicit ExperimentRunner(ExperimentConfig cfg) : cfg_(std::move(cfg)) {}

  const ExperimentConfig& config() const { return cfg_; }

  std::size_t threads() const {
    return cfg_.threads > 0 ? std::min(cfg_.threads, max_threads()) : max_threads();
  }

  std::string out(const std::string& rel) const {
    return (std::filesystem::path(cfg_.out_dir) / rel).string();
  }

  /// Hash over the canonical lines with one of the given key prefixes.
  std::string section_hash(const std::vector<std::string>& prefixes) const {
    std::string filtered;
    std::istringstream in(cfg_.canonical_toml());
    std::string line;
    while (std::getline(in, line))
      for (const std::string& p : prefixes)
        if (line.rfind(p, 0) == 0) {
          filtered += line + "\n";
          break;
        }
    return hex64(fnv1a64(filtered));
  }

  std::string data_hash() const {
    return section_hash({"dataset.", "benchmark.", "family."});
  }

  // -------------------------------------------------------------------------
  // Building blocks
  // -------------------------------------------------------------------------

  const BenchmarkPool& pool() {
    if (!pool_) {
      BenchmarkSpec spec = cfg_.benchmark_spec();
      pool_ = generate_benchmark_pool(spec, cfg_.roster, threads());
    }
    return *pool_;
  }

  Benchmark make_benchmark(std::size_t shots, const CoverageMatrix* coverage = nullptr) {
    BenchmarkSpec spec = cfg_.benchmark_spec();
    spec.shots = shots;
    validate_benchmark_spec(spec, cfg_.roster, coverage);  // fail before rendering
    return assemble_from_pool(spec, cfg_.roster, pool(), coverage);
  }

  GaiConfig gai_for(const Benchmark& bench) const {
    GaiConfig g = cfg_.gai;
    g.minority_label = bench.minority_label;
    return g;
  }

  TrainResult train_base(std::uint64_t seed, const Benchmark& bench) const {
    SeededRng root(seed);
    SeededRng init = root.child(tags::kBaseInit);
    Classifier fresh = Classifier::init(cfg_.model_arch(bench.num_classes), init);
    MethodSpec spec;
    spec.method = Method::Unseen;
    spec.gai = gai_for(bench);
    return train(fresh, bench.train_unseen, cfg_.base_schedule, spec,
                 root.child(tags::kBaseTrain));
  }

  TrainResult train_finetune(Method method, std::uint64_t seed, const Benchmark& bench,
                             const Classifier& base, const Classifier* teacher) const {
    MethodSpec spec;
    spec.method = method;
    spec.gai = gai_for(bench);
    spec.teacher = teacher;
    SeededRng stream =
        SeededRng(seed).child(tags::kFinetune + static_cast<std::uint64_t>(method));
    return finetune_from_base(base, bench.train, cfg_.finetune_schedule, spec, stream);
  }

  MetricsReport evaluate_on(const Classifier& model, const Benchmark& bench) const {
    return evaluate(model, bench.test, bench.minority_label, cfg_.fpr);
  }

  /// Per-seed outcome of every requested method plus the models worth saving.
  struct SeedOutcome {
    std::map<Method, MetricsReport> reports;
    std::map<Method, std::vector<HistoryRow>> histories;
    Classifier base;
    std::optional<Classifier> teacher;
  };

  SeedOutcome run_seed(std::uint64_t seed, const Benchmark& bench,
                       const std::vector<Method>& methods) const {
    SeedOutcome out;
    TrainResult base = train_base(seed, bench);
    out.base = base.model;
    bool needs_teacher = false;
    for (Method m : methods)
      needs_teacher = needs_teacher || m == Method::CB || m == Method::Gai ||
                      m == Method::GaiMinus;
    TrainResult teacher;
    if (needs_teacher) {
      teacher = train_finetune(Method::CB, seed, bench, base.model, nullptr);
      out.teacher = teacher.model;
    }
    for (Method m : methods) {
      switch (m) {
        case Method::Unseen:
          out.reports[m] = evaluate_on(base.model, bench);
          out.histories[m] = base.history;
          break;
        case Method::CB:
          out.reports[m] = evaluate_on(teacher.model, bench);
          out.histories[m] = teacher.history;
          break;
        default: {
          const Classifier* guide =
              (m == Method::Gai || m == Method::GaiMinus) ? &teacher.model : nullptr;
          TrainResult r = train_finetune(m, seed, bench, base.model, guide);
          out.reports[m] = evaluate_on(r.model, bench);
          out.histories[m] = std::move(r.history);
          break;
        }
      }
    }
    return out;
  }

  // -------------------------------------------------------------------------
  // Subcommands
  // -------------------------------------------------------------------------

  void cmd_gen_data() {
    const std::string dir = out("datasets");
    ensure_dir(dir);
    nlohmann::json manifest;
    manifest["config_hash"] = cfg_.hash();
    manifest["data_hash"] = data_hash();
    manifest["real_seed"] = cfg_.real_seed;
    manifest["image"] = {cfg_.height, cfg_.width, cfg_.depth};
    std::size_t real_train = cfg_.majority_ids.size() * cfg_.family_train;
    nlohmann::json families = nlohmann::json::array();
    for (const auto& fam : cfg_.roster) {
      write_family_files(dir, fam);
      nlohmann::json f;
      f["id"] = fam.id;
      f["kind"] = artifact_kind_name(fam.kind);
      f["params"] = fam.params;
      f["group"] = fam.group;
      f["train_count"] = cfg_.family_train;
      f["test_count"] = cfg_.family_test;
      if (cfg_.family_train > 0)
        f["train_file"] = family_file(fam.id, Split::Train);
      if (cfg_.family_test > 0) f["test_file"] = family_file(fam.id, Split::Test);
      families.push_back(f);
      std::cout << "[gen-data] family " << fam.id << ": " << cfg_.family_train
                << " train / " << cfg_.family_test << " test\n";
    }
    manifest["families"] = families;
    write_real_files(dir, real_train);
    manifest["real"] = {{"train_count", real_train},
                        {"test_count", cfg_.real_test},
                        {"train_file", "real_train.gait"},
                        {"test_file", "real_test.gait"}};
    std::cout << "[gen-data] real: " << real_train << " train / " << cfg_.real_test
              << " test\n";
    atomic_write_text((std::filesystem::path(dir) / "manifest.json").string(),
                      manifest.dump(2) + "\n");
  }

  void cmd_coverage() {
    const std::string dir = out("datasets");
    const std::size_t n = cfg_.roster.size();
    std::vector<std::vector<LabeledSample>> fakes_train(n), fakes_test(n);
    std::vector<LabeledSample> reals;
    std::vector<int> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& fam = cfg_.roster[i];
      ids[i] = fam.id;
      std::string train_path =
          (std::filesystem::path(dir) / family_file(fam.id, Split::Train)).string();
      std::string test_path =
          (std::filesystem::path(dir) / family_file(fam.id, Split::Test)).string();
      require(std::filesystem::exists(train_path) && std::filesystem::exists(test_path),
              "coverage: missing dataset for family " + std::to_string(fam.id) +
                  " (run gen-data first)");
      fakes_train[i] = label_images(load_stacked_prefix(train_path, cfg_.coverage_train), 1);
      fakes_test[i] = label_images(load_stacked_prefix(test_path, cfg_.coverage_test), 1);
    }
    std::string real_path = (std::filesystem::path(dir) / "real_train.gait").string();
    require(std::filesystem::exists(real_path),
            "coverage: missing real dataset (run gen-data first)");
    reals = label_images(load_stacked_prefix(real_path, cfg_.coverage_train), 0);

    ArchSpec arch = cfg_.model_arch(2);
    DetectorFactory factory = [arch](SeededRng& rng) { return Classifier::init(arch, rng); };
    CoverageMatrix matrix = coverage_matrix_from_samples(
        fakes_train, fakes_test, reals, factory, cfg_.coverage_schedule,
        SeededRng(cfg_.coverage_seed), threads(), ids);
    Taxonomy tax = build_taxonomy(matrix, cfg_.coverage_threshold);

    ensure_dir(cfg_.out_dir);
    atomic_write_text(out("coverage.csv"), coverage_csv(matrix, cfg_.hash()));
    atomic_write_text(out("taxonomy.txt"), taxonomy_text(tax, cfg_.hash()));
    atomic_write_text(out("taxonomy.dot"), taxonomy_dot(tax, cfg_.hash()));
    for (const std::string& w : matrix.warnings)
      std::cout << "[coverage] warning: " << w << "\n";
    std::cout << "[coverage] " << tax.num_components << " components at threshold "
              << cfg_.coverage_threshold << "\n";
  }

  void cmd_assemble() {
    std::string cov_path = out("coverage.csv");
    require(std::filesystem::exists(cov_path),
            "assemble: missing coverage matrix (run coverage first)");
    CoverageMatrix matrix = parse_coverage_csv(read_text_file(cov_path));
    BenchmarkSpec spec = cfg_.benchmark_spec();
    validate_benchmark_spec(spec, cfg_.roster, &matrix);
    nlohmann::json j;
    j["config_hash"] = cfg_.hash();
    j["benchmark_hash"] = data_hash();
    j["majority_ids"] = spec.majority_ids;
    j["minority_id"] = spec.minority_id;
    j["shots"] = spec.shots;
    j["shot_indices"] = select_shot_indices(spec);
    j["num_classes"] = spec.majority_ids.size() + 2;
    j["minority_label"] = spec.majority_ids.size() + 1;
    j["counts"] = {{"family_train", spec.family_train},
                   {"family_test", spec.family_test},
                   {"real_train", spec.majority_ids.size() * spec.family_train},
                   {"real_test", spec.real_test}};
    j["coverage_validated"] = true;
    ensure_dir(cfg_.out_dir);
    atomic_write_text(out("benchmark.json"), j.dump(2) + "\n");
    std::cout << "[assemble] benchmark ok: " << spec.majority_ids.size()
              << " majority families, minority " << spec.minority_id << ", " << spec.shots
              << " shots\n";
  }

  void cmd_train_base() {
    Benchmark bench = make_benchmark(cfg_.shots, loaded_coverage());
    ensure_dir(out("checkpoints"));
    write_resolved_config();
    parallel_for(cfg_.seeds.size(), threads(), [&](std::size_t si) {
      std::uint64_t seed = cfg_.seeds[si];
      TrainResult base = train_base(seed, bench);
      base.model.save_file(out("checkpoints/base_seed" + std::to_string(seed) + ".gaic"));
      std::cout << "[train-base] seed " << seed << " done\n";
    });
  }

  void cmd_run() {
    const CoverageMatrix* coverage = loaded_coverage();
    Benchmark bench = make_benchmark(cfg_.shots, coverage);
    ensure_dir(cfg_.out_dir);
    ensure_dir(out("checkpoints"));
    write_resolved_config();

    std::vector<SeedOutcome> outcomes(cfg_.seeds.size());
    parallel_for(cfg_.seeds.size(), threads(), [&](std::size_t si) {
      outcomes[si] = run_seed(cfg_.seeds[si], bench, cfg_.methods);
    });

    std::string csv = "# config_hash=" + cfg_.hash() + "\n" + metrics_csv_header() + "\n";
    for (Method m : cfg_.methods) {
      std::vector<MetricsReport> per_seed;
      for (std::size_t si = 0; si < cfg_.seeds.size(); ++si) {
        std::uint64_t seed = cfg_.seeds[si];
        const MetricsReport& rep = outcomes[si].reports.at(m);
        per_seed.push_back(rep);
        write_report_file(out("report_" + method_name(m) + "_seed" +
                              std::to_string(seed) + ".json"),
                          rep, method_name(m), {seed}, cfg_.hash());
        atomic_write_text(out("history_" + method_name(m) + "_seed" +
                              std::to_string(seed) + ".csv"),
                          history_csv(outcomes[si].histories.at(m), cfg_.hash()));
      }
      MetricsReport agg = aggregate_runs(per_seed);
      write_report_file(out("report_" + method_name(m) + ".json"), agg, method_name(m),
                        cfg_.seeds, cfg_.hash());
      csv += metrics_csv_row(method_name(m), agg) + "\n";
      std::cout << "[run] " << method_name(m) << ": acc_minor "
                << format_double(agg.acc_minor.mean) << " +- "
                << format_double(agg.acc_minor.stddev) << ", acc_all "
                << format_double(agg.acc_all.mean) << "\n";
    }
    atomic_write_text(out("metrics.csv"), csv);

    for (std::size_t si = 0; si < cfg_.seeds.size(); ++si) {
      std::uint64_t seed = cfg_.seeds[si];
      outcomes[si].base.save_file(
          out("checkpoints/base_seed" + std::to_string(seed) + ".gaic"));
      if (outcomes[si].teacher)
        outcomes[si].teacher->save_file(
            out("checkpoints/cb_seed" + std::to_string(seed) + ".gaic"));
    }
  }

  void cmd_ablate(const std::string& sweep, const std::vector<std::string>& values) {
    require(!values.empty(), "ablate: sweep values list is empty");
    if (sweep != "tau" && sweep != "lambda" && sweep != "alpha0" && sweep != "shots")
      throw ConfigError("ablate: unknown sweep '" + sweep +
                        "' (expected tau|lambda|alpha0|shots)");
    ensure_dir(cfg_.out_dir);
    write_resolved_config();
    const CoverageMatrix* coverage = loaded_coverage();

    std::string csv = "# config_hash=" + cfg_.hash() + "\n";
    csv += "sweep,value," + metrics_csv_header() + "\n";
    for (const std::string& value : values) {
      ExperimentConfig varied = cfg_;
      try {
        if (sweep == "tau")
          varied.gai.tau = std::stod(value);
        else if (sweep == "lambda")
          varied.gai.lambda = std::stod(value);
        else if (sweep == "alpha0")
          varied.gai.alpha0 = std::stod(value);
        else
          varied.shots = static_cast<std::size_t>(std::stoull(value));
      } catch (const std::logic_error&) {
        throw ConfigError("ablate: bad sweep value '" + value + "'");
      }
      varied.validate();

      ExperimentRunner step(varied);
      step.pool_ = pool_;
      Benchmark bench = step.make_benchmark(varied.shots, coverage);
      if (!pool_) pool_ = step.pool_;  // share the rendered pool across values

      std::vector<SeedOutcome> outcomes(varied.seeds.size());
      parallel_for(varied.seeds.size(), threads(), [&](std::size_t si) {
        outcomes[si] = step.run_seed(varied.seeds[si], bench, varied.methods);
      });
      for (Method m : varied.methods) {
        std::vector<MetricsReport> per_seed;
        for (auto& o : outcomes) per_seed.push_back(o.reports.at(m));
        MetricsReport agg = aggregate_runs(per_seed);
        csv += sweep + "," + value + "," + metrics_csv_row(method_name(m), agg) + "\n";
        std::cout << "[ablate] " << sweep << "=" << value << " " << method_name(m)
                  << ": acc_minor " << format_double(agg.acc_minor.mean) << "\n";
      }
    }
    atomic_write_text(out("ablate_" + sweep + ".csv"), csv);
  }

  void cmd_export_samples() {
    Benchmark bench = make_benchmark(cfg_.shots, loaded_coverage());
    std::uint64_t seed = cfg_.seeds.front();
    TrainResult base = train_base(seed, bench);
    TrainResult teacher = train_finetune(Method::CB, seed, bench, base.model, nullptr);
    GaiConfig gcfg = gai_for(bench);

    std::vector<LabeledSample> shots, pool;
    for (const auto& s : bench.train.samples) {
      if (s.label == bench.minority_label)
        shots.push_back(s);
      else
        pool.push_back(s);
    }
    require(!shots.empty() && !pool.empty(), "export-samples: benchmark has no shots");

    const std::string dir = out("samples");
    ensure_dir(dir);
    SeededRng root = SeededRng(seed).child(tags::kExport);
    nlohmann::json manifest;
    manifest["config_hash"] = cfg_.hash();
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i = 0; i < cfg_.export_count; ++i) {
      SeededRng stream = root.child(i);
      const LabeledSample& minor = shots[stream.uniform_below(shots.size())];
      const LabeledSample& major = pool[stream.uniform_below(pool.size())];
      GenerationOutcome gen = gai_generate(*major.image, *minor.image, major.label, gcfg,
                                           teacher.model, base.model, stream);
      std::string prefix = "gen" + std::to_string(i);
      save_tensor((std::filesystem::path(dir) / (prefix + "_xmajor.gait")).string(),
                  *major.image);
      save_tensor((std::filesystem::path(dir) / (prefix + "_xminor.gait")).string(),
                  *minor.image);
      save_tensor((std::filesystem::path(dir) / (prefix + "_xstar0.gait")).string(),
                  gen.initial_sample);
      save_tensor((std::filesystem::path(dir) / (prefix + "_xadv.gait")).string(),
                  gen.sample);
      save_tensor((std::filesystem::path(dir) / (prefix + "_alpha.gait")).string(),
                  gen.alpha);
      nlohmann::json item;
      item["prefix"] = prefix;
      item["source_class"] = major.label;
      item["accepted"] = gen.accepted;
      item["teacher_confidence"] = gen.teacher_confidence;
      item["skipped_steps"] = gen.skipped_steps;
      items.push_back(item);
    }
    manifest["generations"] = items;
    atomic_write_text((std::filesystem::path(dir) / "manifest.json").string(),
                      manifest.dump(2) + "\n");
    std::cout << "[export-samples] wrote " << cfg_.export_count << " quintuples\n";
  }

 private:
  static std::string family_file(int id, Split split) {
    return "family" + std::to_string(id) + (split == Split::Train ? "_train" : "_test") +
           ".gait";
  }

  static std::vector<LabeledSample> label_images(std::vector<Tensor> images, int label) {
    std::vector<LabeledSample> out;
    out.reserve(images.size());
    for (auto& img : images) out.push_back(make_sample(std::move(img), label));
    return out;
  }

  void write_resolved_config() {
    ensure_dir(cfg_.out_dir);
    atomic_write_text(out("resolved_config.toml"),
                      "# config_hash=" + cfg_.hash() + "\n" + cfg_.canonical_toml());
  }

  /// Coverage matrix from a previous `coverage` run, when present; benchmark
  /// assembly validates against it.
  const CoverageMatrix* loaded_coverage() {
    if (!coverage_checked_) {
      coverage_checked_ = true;
      std::string path = out("coverage.csv");
      if (std::filesystem::exists(path)) {
        coverage_ = parse_coverage_csv(read_text_file(path));
        if (coverage_->size() != cfg_.roster.size()) coverage_.reset();
      }
    }
    return coverage_ ? &*coverage_ : nullptr;
  }

  void write_family_files(const std::string& dir, const ForgeryFamilySpec& fam) {
    for (Split split : {Split::Train, Split::Test}) {
      std::size_t count = split == Split::Train ? cfg_.family_train : cfg_.family_test;
      if (count == 0) continue;
      StackedTensorWriter writer((std::filesystem::path(dir) / family_file(fam.id, split)).string(),
                                 count, cfg_.height, cfg_.width, cfg_.depth);
      write_chunked(writer, count, [&](std::size_t i) {
        return *generate_family_sample_at(fam, cfg_.real_seed, split, i, cfg_.height,
                                          cfg_.width, cfg_.depth, 1)
                    .image;
      });
      writer.finish();
    }
  }

  void write_real_files(const std::string& dir, std::size_t real_train) {
    for (Split split : {Split::Train, Split::Test}) {
      std::size_t count = split == Split::Train ? real_train : cfg_.real_test;
      if (count == 0) continue;
      std::string name = split == Split::Train ? "real_train.gait" : "real_test.gait";
      StackedTensorWriter writer((std::filesystem::path(dir) / name).string(), count,
                                 cfg_.height, cfg_.width, cfg_.depth);
      write_chunked(writer, count, [&](std::size_t i) {
        SeededRng img = detail::image_stream(cfg_.real_seed, split, i);
        return render_base_image(img.child(detail::kBaseImageTag), cfg_.height,
                                 cfg_.width, cfg_.depth);
      });
      writer.finish();
    }
  }

  void write_chunked(StackedTensorWriter& writer, std::size_t count,
                     const std::function<Tensor(std::size_t)>& make) {
    constexpr std::size_t kChunk = 256;
    for (std::size_t base = 0; base < count; base += kChunk) {
      std::size_t m = std::min(kChunk, count - base);
      std::vector<Tensor> chunk(m);
      parallel_for(m, threads(), [&](std::size_t i) { chunk[i] = make(base + i); });
      for (auto& t : chunk) writer.append(t);
    }
  }

  ExperimentConfig cfg_;
  std::optional<BenchmarkPool> pool_;
  std::optional<CoverageMatrix> coverage_;
  bool coverage_checked_ = false;
};

}  // namespace gaiforge
