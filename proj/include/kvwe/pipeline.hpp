#pragma once

// Config-driven pipeline behind the `kvwe` command line tool.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "kvwe/common.hpp"
#include "kvwe/embed_store.hpp"
#include "kvwe/evaluator.hpp"
#include "kvwe/exporter.hpp"
#include "kvwe/lexicon.hpp"
#include "kvwe/projector.hpp"

namespace kvwe {

namespace fs = std::filesystem;

/// Exit codes of the command line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // strict-mode or --verify failure, other errors
  kExitConfig = 2,
  kExitSource = 3,
  kExitNanLoss = 4,
  kExitWordSet = 5,
};

/// Flag values that take precedence over the config file.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<double> center_loss_weight;
  std::optional<int> epochs;
  std::optional<std::string> center_loss;
  bool verify = false;
  bool strict = false;
};

struct RunConfig {
  nlohmann::json effective;  // config after overrides; hashed
  std::string hash;
  fs::path base_dir;
  fs::path out_dir;
  bool verify = false;
  bool strict = false;
  std::uint64_t seed = 0;

  std::vector<std::string> labels;
  std::vector<std::pair<std::string, std::string>> seeds;
  std::vector<fs::path> sources;
  std::optional<fs::path> vocab;
  VocabularyFilter vocab_filter;
  std::optional<fs::path> embeddings;
  std::optional<std::size_t> embedding_dim;
  fs::path lexicon;
  fs::path model;

  TrainConfig train;
  CenterLossKind center_loss = CenterLossKind::euclidean;
  std::size_t hidden1 = 512;
  std::size_t hidden3 = 512;
  std::size_t hidden4 = 300;
  Activation output = Activation::sigmoid;
  std::size_t verify_batch = 32;

  std::optional<fs::path> eval_after;
  std::size_t eval_max_per_class = 2000;
  ImprovementMetric eval_metric = ImprovementMetric::cosine;
  double eval_margin = 0.0;

  std::optional<fs::path> sentences;
  std::optional<fs::path> base_embeddings;
  double temperature = 1.0;
  std::vector<double> query;

  std::optional<fs::path> probe_sentences;
  std::vector<std::uint64_t> probe_seeds{1, 2, 3, 4, 5};

  std::string header() const {
    return "# " + std::string(kToolName) + " " + std::string(kVersion) + " config=" + hash;
  }
};

namespace detail {

template <typename T>
T json_get(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline std::optional<fs::path> json_path(const nlohmann::json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_string()) throw ConfigError(std::string("config field '") + key + "' must be a path string");
  fs::path p = j.at(key).get<std::string>();
  return p.is_absolute() ? p : base / p;
}

}  // namespace detail

inline RunConfig make_run_config(nlohmann::json cfg, const fs::path& base_dir, const ConfigOverrides& ov = {}) {
  if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
  if (ov.seed) cfg["seed"] = *ov.seed;
  if (ov.out_dir) cfg["out_dir"] = fs::absolute(*ov.out_dir).string();
  if (ov.center_loss_weight) cfg["train"]["center_loss_weight"] = *ov.center_loss_weight;
  if (ov.epochs) cfg["train"]["epochs"] = *ov.epochs;
  if (ov.center_loss) cfg["train"]["center_loss"] = *ov.center_loss;

  RunConfig rc;
  rc.effective = cfg;
  rc.hash = hex64(fnv1a64(cfg.dump()));
  rc.base_dir = base_dir;
  rc.verify = ov.verify;
  rc.strict = ov.strict;
  rc.seed = detail::json_get<std::uint64_t>(cfg, "seed", 0);
  rc.out_dir = *detail::json_path(nlohmann::json{{"out_dir", detail::json_get<std::string>(cfg, "out_dir", "out")}},
                                  "out_dir", base_dir);

  rc.labels = detail::json_get<std::vector<std::string>>(cfg, "labels", {});
  for (auto& l : rc.labels) {
    if (l.empty() || has_whitespace(l) || l == kNeutralLabel) throw ConfigError("invalid class label '" + l + "'");
  }
  if (cfg.contains("seeds")) {
    for (const auto& s : cfg.at("seeds")) {
      if (!s.is_array() || s.size() != 2) throw ConfigError("each seed must be [keyword, label]");
      rc.seeds.emplace_back(s[0].get<std::string>(), s[1].get<std::string>());
    }
  }
  if (auto p = detail::json_path(cfg, "seeds_file", base_dir)) {
    std::ifstream in(*p);
    if (!in) throw ConfigError("cannot open seeds file " + p->string());
    std::string line;
    while (std::getline(in, line)) {
      auto t = strip_cr(line);
      if (t.empty() || t.front() == '#') continue;
      auto f = split(t, '\t');
      if (f.size() != 2) throw ConfigError("seeds file rows are keyword<TAB>label");
      rc.seeds.emplace_back(std::string(f[0]), std::string(f[1]));
    }
  }
  for (const auto& s : detail::json_get<std::vector<std::string>>(cfg, "sources", {})) {
    fs::path p = s;
    rc.sources.push_back(p.is_absolute() ? p : base_dir / p);
  }
  rc.vocab = detail::json_path(cfg, "vocab", base_dir);
  if (cfg.contains("vocab_filter")) {
    const auto& vf = cfg.at("vocab_filter");
    rc.vocab_filter.single_symbol_rule = detail::json_get<bool>(vf, "single_symbol_rule", true);
    rc.vocab_filter.meaningless = detail::json_get<std::vector<std::string>>(vf, "meaningless", {});
  }
  rc.embeddings = detail::json_path(cfg, "embeddings", base_dir);
  if (cfg.contains("embedding_dim")) rc.embedding_dim = detail::json_get<std::size_t>(cfg, "embedding_dim", 0);
  rc.lexicon = detail::json_path(cfg, "lexicon", base_dir).value_or(rc.out_dir / "lexicon.tsv");
  rc.model = detail::json_path(cfg, "model", base_dir).value_or(rc.out_dir / "model.json");

  const nlohmann::json train = cfg.value("train", nlohmann::json::object());
  rc.train.learning_rate = detail::json_get<double>(train, "learning_rate", rc.train.learning_rate);
  rc.train.dropout_rate = detail::json_get<double>(train, "dropout_rate", rc.train.dropout_rate);
  rc.train.center_loss_weight = detail::json_get<double>(train, "center_loss_weight", rc.train.center_loss_weight);
  rc.train.epochs = detail::json_get<int>(train, "epochs", rc.train.epochs);
  rc.train.batch_size = detail::json_get<std::size_t>(train, "batch_size", rc.train.batch_size);
  rc.train.center_refresh = center_refresh_from_string(detail::json_get<std::string>(train, "center_refresh", "per_epoch"));
  rc.train.optimizer = optimizer_from_string(detail::json_get<std::string>(train, "optimizer", "sgd"));
  rc.train.momentum = detail::json_get<double>(train, "momentum", rc.train.momentum);
  rc.train.seed = rc.seed;
  rc.train.validate();
  rc.center_loss = center_loss_from_string(detail::json_get<std::string>(train, "center_loss", "euclidean"));
  auto hidden = detail::json_get<std::vector<std::size_t>>(train, "hidden", {512, 512, 300});
  if (hidden.size() != 3) throw ConfigError("train.hidden lists the three free hidden widths");
  rc.hidden1 = hidden[0];
  rc.hidden3 = hidden[1];
  rc.hidden4 = hidden[2];
  rc.output = activation_from_string(detail::json_get<std::string>(train, "output", "sigmoid"));
  rc.verify_batch = detail::json_get<std::size_t>(train, "verify_batch", rc.verify_batch);

  const nlohmann::json eval = cfg.value("eval", nlohmann::json::object());
  rc.eval_after = detail::json_path(eval, "after", base_dir);
  rc.eval_max_per_class = detail::json_get<std::size_t>(eval, "max_per_class", rc.eval_max_per_class);
  rc.eval_metric = improvement_metric_from_string(detail::json_get<std::string>(eval, "metric", "cosine"));
  rc.eval_margin = detail::json_get<double>(eval, "margin", 0.0);

  const nlohmann::json exp = cfg.value("export", nlohmann::json::object());
  rc.sentences = detail::json_path(exp, "sentences", base_dir);
  rc.base_embeddings = detail::json_path(exp, "base_embeddings", base_dir);
  rc.temperature = detail::json_get<double>(exp, "temperature", 1.0);
  rc.query = detail::json_get<std::vector<double>>(exp, "query", {});

  const nlohmann::json probe = cfg.value("probe", nlohmann::json::object());
  rc.probe_sentences = detail::json_path(probe, "sentences", base_dir);
  rc.probe_seeds = detail::json_get<std::vector<std::uint64_t>>(probe, "seeds", rc.probe_seeds);
  return rc;
}

inline RunConfig load_run_config(const fs::path& path, const ConfigOverrides& ov = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return make_run_config(std::move(cfg), fs::absolute(path).parent_path(), ov);
}

namespace detail {

inline void require_file(const std::optional<fs::path>& p, const char* what) {
  if (!p) throw ConfigError(std::string("config is missing '") + what + "'");
  if (!fs::is_regular_file(*p)) throw ConfigError(std::string(what) + " file not found: " + p->string());
}

// Writes the whole artifact at once so a failure never leaves partial output.
inline void write_artifact(const RunConfig& rc, const fs::path& path, const std::string& body) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << rc.header() << '\n' << body;
}

inline std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> tokens;
  for (auto t : split_ws(strip_cr(line))) tokens.push_back(to_lower(t));
  return tokens;
}

inline VocabularyInfo vocabulary_for(const RunConfig& rc, const EmbeddingTable* table) {
  if (rc.vocab) return filter_vocabulary(read_vocabulary(*rc.vocab), rc.vocab_filter);
  if (table == nullptr) throw ConfigError("config needs 'vocab' or 'embeddings' for vocabulary filtering");
  return VocabularyInfo::from_unique(table->tokens());
}

inline ProjectionModel loaded_model(const RunConfig& rc) {
  if (!fs::is_regular_file(rc.model)) throw ConfigError("model file not found: " + rc.model.string());
  return load_model(rc.model);
}

struct SentenceVectors {
  std::vector<EnhancedSequence> sequences;
  Matrix raw;       // base sentence vectors (mean of base token vectors)
  Matrix enhanced;  // base (+) t_cls
};

inline SentenceVectors sentence_vectors(const RunConfig& rc, const std::vector<std::vector<std::string>>& sentences,
                                        const EmbeddingTable& list, const EmbeddingTable& base_table,
                                        const ProjectionModel& model) {
  const auto dim = static_cast<Eigen::Index>(model.representation_dim());
  if (base_table.dim() != model.representation_dim()) throw DimensionError("base embeddings do not match the model");
  AttentionPooler pooler(model.representation_dim(), rc.temperature);
  if (!rc.query.empty()) {
    if (static_cast<Eigen::Index>(rc.query.size()) != dim) throw ConfigError("export.query has the wrong dimension");
    for (Eigen::Index i = 0; i < dim; ++i) pooler.query(i) = rc.query[static_cast<std::size_t>(i)];
  }
  SentenceVectors out;
  out.raw.resize(dim, static_cast<Eigen::Index>(sentences.size()));
  out.enhanced.resize(2 * dim, static_cast<Eigen::Index>(sentences.size()));
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    std::vector<Vector> base;
    Vector cls = Vector::Zero(dim);
    for (const auto& t : sentences[s]) {
      auto v = base_table.lookup(t);
      base.push_back(v ? to_vector(*v) : Vector::Zero(dim));
      cls += base.back();
    }
    if (!base.empty()) cls /= static_cast<double>(base.size());
    Vector sentence;
    out.sequences.push_back(enhance_sentence(sentences[s], base, list, model, pooler, cls, &sentence));
    out.raw.col(static_cast<Eigen::Index>(s)) = cls;
    out.enhanced.col(static_cast<Eigen::Index>(s)) = sentence;
  }
  return out;
}

}  // namespace detail

/// acquire: related expansion, synonym enrichment, sub-piece removal, neutral
/// fill. Writes <out>/lexicon.tsv and prints per-class counts.
inline int cmd_acquire(const RunConfig& rc, std::ostream& log) {
  if (rc.labels.empty()) throw ConfigError("config has no 'labels'");
  if (rc.seeds.empty()) throw ConfigError("config has no seeds");
  for (const auto& s : rc.sources) {
    if (!fs::is_regular_file(s)) throw SourceError("source file not found: " + s.string());
  }
  std::optional<EmbeddingTable> table;
  if (!rc.vocab) {
    detail::require_file(rc.embeddings, "embeddings");
    table = load_embeddings(*rc.embeddings, rc.embedding_dim);
  } else {
    detail::require_file(rc.vocab, "vocab");
  }
  TsvWordGraphSource source;
  for (const auto& s : rc.sources) source.load(s);
  auto vocab = detail::vocabulary_for(rc, table ? &*table : nullptr);

  KnowledgeBase kv;
  kv.class_labels = rc.labels;
  kv = acquire_related(rc.seeds, source, std::move(kv));
  kv = acquire_synonyms(std::move(kv), source);
  const std::size_t deleted = kv.deleted.size();
  kv = remove_subpieces(std::move(kv), vocab);
  kv = neutral_fill(std::move(kv), vocab);

  std::ostringstream body;
  write_knowledge_base(kv, body);
  detail::write_artifact(rc, rc.out_dir / "lexicon.tsv", body.str());

  auto counts = kv.label_counts();
  std::vector<std::string> row1{"Labels"}, row2{"Lexicon size"};
  for (const auto& l : kv.all_labels()) {
    row1.push_back(l);
    row2.push_back(std::to_string(counts[l]));
  }
  for (std::size_t i = 0; i + 1 < row1.size(); ++i) {
    const std::size_t w = std::max(row1[i].size(), row2[i].size()) + 2;
    row1[i].resize(w, ' ');
    row2[i].resize(w, ' ');
  }
  std::string l1, l2;
  for (std::size_t i = 0; i < row1.size(); ++i) {
    l1 += row1[i];
    l2 += row2[i];
  }
  log << l1 << '\n' << l2 << '\n' << "confusing words deleted: " << deleted << '\n';
  return kExitOk;
}

/// train: fits the projection model on the lexicon. With --verify, a gradient
/// check on the initial model runs first and aborts at error >= 1e-4.
inline int cmd_train(const RunConfig& rc, std::ostream& log) {
  detail::require_file(rc.embeddings, "embeddings");
  if (!fs::is_regular_file(rc.lexicon)) throw ConfigError("lexicon not found: " + rc.lexicon.string());
  auto kv = load_knowledge_base(rc.lexicon);
  auto table = load_embeddings(*rc.embeddings, rc.embedding_dim);
  auto data = build_training_data(kv, table);

  Architecture arch;
  arch.input_dim = table.dim();
  arch.num_classes = data.class_labels.size();
  arch.hidden1 = rc.hidden1;
  arch.hidden3 = rc.hidden3;
  arch.hidden4 = rc.hidden4;
  arch.output = rc.output;
  auto model = init_model(arch.layer_specs(), rc.seed, rc.center_loss);
  model.class_labels = data.class_labels;

  if (rc.verify) {
    std::vector<std::size_t> cols;
    for (std::size_t i = 0; i < std::min(rc.verify_batch, data.size()); ++i) cols.push_back(i);
    auto batch = data.gather(cols);
    const double err = gradient_check(model, batch, rc.center_loss, rc.train.center_loss_weight, rc.seed);
    log << "gradient check: max relative error " << format_sig(err, 6) << '\n';
    if (!(err < 1e-4)) {
      log << "gradient check failed; not training\n";
      return kExitFailure;
    }
  }

  auto result = train(std::move(model), data, rc.train);
  for (const auto& e : result.log) {
    log << "epoch " << e.epoch << " ce=" << format_sig(e.ce_loss, 6) << " center=" << format_sig(e.center_loss, 6)
        << " total=" << format_sig(e.total, 6) << " acc=" << format_sig(e.train_acc, 4) << '\n';
  }
  std::ostringstream model_body;
  write_model(result.model, model_body);
  std::ostringstream log_body;
  write_train_log(result.log, log_body);
  detail::write_artifact(rc, rc.model, model_body.str());
  detail::write_artifact(rc, rc.out_dir / "train_log.csv", log_body.str());
  return kExitOk;
}

/// eval: similarity report of the lexicon before and after projection.
inline int cmd_eval(const RunConfig& rc, std::ostream& log) {
  detail::require_file(rc.embeddings, "embeddings");
  if (!fs::is_regular_file(rc.lexicon)) throw ConfigError("lexicon not found: " + rc.lexicon.string());
  auto kv = load_knowledge_base(rc.lexicon);
  auto table = load_embeddings(*rc.embeddings, rc.embedding_dim);
  const std::size_t dim = table.dim();

  auto from_table = [](const EmbeddingTable& t) {
    return [&t](const std::string& w) -> std::optional<Vector> {
      auto v = t.lookup(w);
      if (!v) return std::nullopt;
      return to_vector(*v);
    };
  };
  auto before = group_by_class(kv, dim, from_table(table), rc.eval_max_per_class, rc.seed);
  std::vector<ClassGroup> after;
  std::optional<EmbeddingTable> after_table;
  std::optional<ProjectionModel> model;
  if (rc.eval_after) {
    detail::require_file(rc.eval_after, "eval.after");
    after_table = load_embeddings(*rc.eval_after);
    if (after_table->dim() != dim) throw WordSetMismatch("after-embeddings differ in dimension");
    after = group_by_class(kv, dim, from_table(*after_table), rc.eval_max_per_class, rc.seed);
  } else {
    model = detail::loaded_model(rc);
    if (model->input_dim() != dim) throw DimensionError("model input dimension does not match embeddings");
    after = group_by_class(
        kv, dim,
        [&](const std::string& w) -> std::optional<Vector> {
          auto v = table.lookup(w);
          if (!v) return std::nullopt;
          return project(*model, *v);
        },
        rc.eval_max_per_class, rc.seed);
  }
  auto report = improvement_report(before, after);

  std::ostringstream csv;
  write_report_csv(report, csv);
  std::ostringstream txt;
  write_report_table(report, txt);
  detail::write_artifact(rc, rc.out_dir / "similarity.csv", csv.str());
  detail::write_artifact(rc, rc.out_dir / "similarity.txt", txt.str());
  log << txt.str();

  if (rc.strict) {
    auto failures = improvement_failures(report, rc.eval_metric, rc.eval_margin);
    for (const auto& f : failures) log << "not improved: " << f << '\n';
    if (!failures.empty()) return kExitFailure;
  }
  return kExitOk;
}

inline std::vector<std::vector<std::string>> read_sentences(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open sentences " + path.string());
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    auto tokens = detail::tokenize(line);
    if (!tokens.empty()) out.push_back(std::move(tokens));
  }
  return out;
}

/// export: enhanced word- and sentence-level embeddings for a sentence file.
inline int cmd_export(const RunConfig& rc, std::ostream& log) {
  auto model = detail::loaded_model(rc);
  detail::require_file(rc.embeddings, "embeddings");
  detail::require_file(rc.sentences, "export.sentences");
  auto list = load_embeddings(*rc.embeddings, rc.embedding_dim);
  std::optional<EmbeddingTable> base;
  if (rc.base_embeddings) {
    detail::require_file(rc.base_embeddings, "export.base_embeddings");
    base = load_embeddings(*rc.base_embeddings);
  }
  auto sentences = read_sentences(*rc.sentences);
  auto vectors = detail::sentence_vectors(rc, sentences, list, base ? *base : list, model);
  std::ostringstream body;
  std::size_t empty = 0;
  for (std::size_t i = 0; i < vectors.sequences.size(); ++i) {
    write_enhanced_sequence(vectors.sequences[i], i, body);
    empty += vectors.sequences[i].empty_knowledge ? 1 : 0;
  }
  detail::write_artifact(rc, rc.out_dir / "enhanced.txt", body.str());
  log << "exported " << sentences.size() << " sentences (" << empty << " without list tokens)\n";
  return kExitOk;
}

/// probe: linear classifier accuracy on raw vs enhanced sentence vectors.
/// Input rows are label<TAB>sentence.
inline int cmd_probe(const RunConfig& rc, std::ostream& log) {
  auto model = detail::loaded_model(rc);
  detail::require_file(rc.embeddings, "embeddings");
  detail::require_file(rc.probe_sentences, "probe.sentences");
  auto list = load_embeddings(*rc.embeddings, rc.embedding_dim);
  std::optional<EmbeddingTable> base;
  if (rc.base_embeddings) {
    detail::require_file(rc.base_embeddings, "export.base_embeddings");
    base = load_embeddings(*rc.base_embeddings);
  }
  std::ifstream in(*rc.probe_sentences);
  std::vector<std::string> label_names;
  std::vector<std::vector<std::string>> sentences;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto text = strip_cr(line);
    if (text.empty()) continue;
    auto tab = text.find('\t');
    if (tab == std::string_view::npos) throw ParseError("probe rows are label<TAB>sentence", line_no);
    label_names.emplace_back(text.substr(0, tab));
    sentences.push_back(detail::tokenize(text.substr(tab + 1)));
  }
  std::map<std::string, std::size_t> label_index;
  for (const auto& l : label_names) label_index.emplace(l, 0);
  std::size_t next = 0;
  for (auto& [l, i] : label_index) i = next++;
  std::vector<std::size_t> labels;
  for (const auto& l : label_names) labels.push_back(label_index.at(l));

  auto vectors = detail::sentence_vectors(rc, sentences, list, base ? *base : list, model);
  std::ostringstream csv;
  csv << "seed,acc_raw,acc_enhanced\n";
  double sum_raw = 0.0;
  double sum_enh = 0.0;
  for (auto seed : rc.probe_seeds) {
    auto r = downstream_probe(vectors.raw, vectors.enhanced, labels, seed);
    csv << seed << ',' << format_sig(r.acc_raw, 6) << ',' << format_sig(r.acc_enhanced, 6) << '\n';
    sum_raw += r.acc_raw;
    sum_enh += r.acc_enhanced;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, rc.probe_seeds.size()));
  csv << "mean," << format_sig(sum_raw / n, 6) << ',' << format_sig(sum_enh / n, 6) << '\n';
  detail::write_artifact(rc, rc.out_dir / "probe.csv", csv.str());
  log << "probe accuracy raw=" << format_sig(sum_raw / n, 4) << " enhanced=" << format_sig(sum_enh / n, 4) << '\n';
  return kExitOk;
}

/// Runs a subcommand and maps errors onto exit codes.
inline int run_command(const std::string& command, const RunConfig& rc, std::ostream& log, std::ostream& err) {
  try {
    if (command == "acquire") return cmd_acquire(rc, log);
    if (command == "train") return cmd_train(rc, log);
    if (command == "eval") return cmd_eval(rc, log);
    if (command == "export") return cmd_export(rc, log);
    if (command == "probe") return cmd_probe(rc, log);
    err << "unknown command '" << command << "'\n";
    return kExitConfig;
  } catch (const SourceError& e) {
    err << "source error: " << e.what() << '\n';
    return kExitSource;
  } catch (const NanLossError& e) {
    err << "training aborted: " << e.what() << '\n';
    return kExitNanLoss;
  } catch (const WordSetMismatch& e) {
    err << "word-set mismatch: " << e.what() << '\n';
    return kExitWordSet;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DuplicateError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace kvwe
