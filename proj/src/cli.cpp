#include "trlb/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "trlb/errors.hpp"
#include "trlb/metrics.hpp"
#include "trlb/sparse_tensor.hpp"
#include "trlb/split.hpp"
#include "trlb/synth.hpp"

namespace trlb::cli {

namespace {

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <class T>
bool parse_number(std::string_view text, T& out) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) return false;
  out = v;
  return true;
}

bool parse_bool(std::string_view text, bool& out) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return out = true, true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return out = false, true;
  return false;
}

bool parse_family(std::string_view text, ModelFamily& out) {
  if (text == "tr") return out = ModelFamily::tr, true;
  if (text == "cp") return out = ModelFamily::cp, true;
  return false;
}

std::string family_name(ModelFamily f) { return f == ModelFamily::tr ? "tr" : "cp"; }

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

Dims parse_dims(const std::string& text) {
  std::vector<std::size_t> parts;
  std::string cur;
  for (char c : text + ",") {
    if (c == ',' || c == 'x' || c == 'X') {
      std::size_t v = 0;
      if (!parse_number(trim(cur), v) || v == 0) throw CLI::ValidationError("--dims", "expected I,J,K with positive extents");
      parts.push_back(v);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (parts.size() != 3) throw CLI::ValidationError("--dims", "expected exactly three extents");
  return {parts[0], parts[1], parts[2]};
}

struct DataOptions {
  std::string path;
  std::string format;  // empty: infer from extension
  bool remap = false;
  std::string dims;  // empty: inferred from the largest index
  std::string id_map_out;

  void add_to(CLI::App& app) {
    app.add_option("--data", path, "Observations, one `i j k weight` line each")->required();
    app.add_option("--format", format, "tsv or csv (default: from the file extension)")
        ->check(CLI::IsMember({"tsv", "csv"}));
    app.add_flag("--remap", remap, "Compact arbitrary IDs to dense 0-based indices");
    app.add_option("--dims", dims, "Extents I,J,K when trailing slices have no observations");
  }

  SparseTensor load() const {
    const TextFormat fmt = format.empty() ? format_for_path(path) : (format == "csv" ? TextFormat::csv : TextFormat::tsv);
    LoadOptions opts;
    opts.remap = remap;
    if (!dims.empty()) opts.dims = parse_dims(dims);
    auto loaded = load_entries(path, fmt, opts);
    if (loaded.id_map && !id_map_out.empty()) write_id_map(id_map_out, *loaded.id_map);
    return std::move(loaded.tensor);
  }
};

std::vector<EntryPos> all_positions(const SparseTensor& t) {
  std::vector<EntryPos> out(t.size());
  for (EntryPos p = 0; p < t.size(); ++p) out[p] = p;
  return out;
}

nlohmann::ordered_json metrics_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["rmse"] = r.rmse;
  j["mae"] = r.mae;
  j["count"] = r.count;
  return j;
}

std::string csv_line(const EpochStats& s) {
  return std::to_string(s.epoch) + "," + format_double(s.objective) + "," + format_double(s.train_rmse) + "," +
         format_double(s.val_rmse) + "," + format_double(s.val_mae) + "," + format_double(s.seconds) + "\n";
}

// -- subcommands ------------------------------------------------------------

int cmd_generate(const SynthSpec& spec, const std::string& out_dir, std::ostream& out) {
  const SynthData data = generate(spec);
  ensure_dir(out_dir);
  const std::filesystem::path dir(out_dir);
  const auto data_path = dir / "data.tsv";
  const auto model_path = dir / (spec.family == ModelFamily::tr ? "truth.trlb" : "truth.cplb");
  write_synth(data, data_path, model_path, spec);
  out << "wrote " << data.tensor.size() << " entries to " << data_path.string() << " and ground truth to "
      << model_path.string() << '\n';
  return kOk;
}

int cmd_split(const DataOptions& data, std::uint64_t seed, const std::string& manifest_path, std::ostream& out) {
  const SparseTensor t = data.load();
  const Split s = split(t, seed);
  write_manifest(manifest_path, s);
  out << "split " << t.size() << " entries (seed " << seed << "): " << s.train.size() << " train, " << s.val.size()
      << " val, " << s.test.size() << " test -> " << manifest_path << '\n';
  return kOk;
}

template <class Model>
void write_summary(const ExperimentConfig& cfg, const TrainResult<Model>& result, const SparseTensor& t,
                   const Split& s, double seconds) {
  nlohmann::ordered_json j;
  j["family"] = family_name(cfg.family);
  j["rank"] = cfg.train.rank;
  j["bias_enabled"] = cfg.train.bias_enabled;
  j["seed"] = cfg.train.seed;
  j["split_seed"] = s.seed;
  j["epochs_run"] = result.stats.empty() ? 0 : result.stats.back().epoch;
  j["best_epoch"] = result.best_epoch;
  j["stopped_early"] = result.stopped_early;
  j["train"] = metrics_json(evaluate(result.model, t, s.train));
  j["val"] = metrics_json(evaluate(result.model, t, s.val));
  j["test"] = s.test.empty() ? nlohmann::ordered_json() : metrics_json(evaluate(result.model, t, s.test));
  j["seconds"] = seconds;
  write_text(cfg.out_dir / "summary.json", j.dump(2) + "\n");
}

int cmd_train(ExperimentConfig cfg, const DataOptions& data, std::ostream& out, std::ostream& err) {
  const SparseTensor t = data.load();
  const Split s = read_manifest(cfg.manifest, t.size());
  cfg.split_seed = s.seed;
  ensure_dir(cfg.out_dir);
  write_text(cfg.out_dir / "config.txt", config_text(cfg));

  std::ofstream log(cfg.out_dir / "stats.csv", std::ios::binary | std::ios::trunc);
  if (!log) throw IoError("cannot write '" + (cfg.out_dir / "stats.csv").string() + "'");
  log << "epoch,objective,train_rmse,val_rmse,val_mae,seconds\n";
  std::optional<std::size_t> last_good;
  const auto on_epoch = [&](const EpochStats& st) {
    log << csv_line(st);
    log.flush();
    last_good = st.epoch;
  };

  const auto start = std::chrono::steady_clock::now();
  try {
    if (cfg.family == ModelFamily::tr) {
      const auto result = train(t, s, cfg.train, on_epoch);
      save_model(result.model, cfg.out_dir / "model.trlb");
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      write_summary(cfg, result, t, s, secs);
    } else {
      const auto result = train_cp_baseline(t, s, cfg.train, on_epoch);
      save_model(result.model, cfg.out_dir / "model.cplb");
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      write_summary(cfg, result, t, s, secs);
    }
  } catch (const NumericError& e) {
    err << "numeric failure in epoch " << e.epoch();
    if (last_good) {
      err << " (last good epoch " << *last_good << ")";
    } else {
      err << " (no epoch completed)";
    }
    err << ": " << e.what() << '\n';
    return kNumeric;
  }
  out << "trained " << family_name(cfg.family) << " model; outputs in " << cfg.out_dir.string() << '\n';
  return kOk;
}

int cmd_evaluate(const std::string& model_path, const DataOptions& data, const std::string& manifest,
                 const std::string& subset, const std::string& out_path, std::ostream& out) {
  const AnyModel model = load_any_model(model_path);
  const SparseTensor t = data.load();
  const Dims model_dims = std::visit([](const auto& m) { return m.dims; }, model);
  if (!(model_dims == t.dims())) {
    throw FormatError("checkpoint extents (" + std::to_string(model_dims.i) + "," + std::to_string(model_dims.j) +
                      "," + std::to_string(model_dims.k) + ") do not match dataset extents (" +
                      std::to_string(t.dims().i) + "," + std::to_string(t.dims().j) + "," +
                      std::to_string(t.dims().k) + ")");
  }
  std::vector<EntryPos> positions;
  if (subset == "all") {
    positions = all_positions(t);
  } else {
    if (manifest.empty()) throw CLI::ValidationError("--manifest", "required unless --subset all");
    const Split s = read_manifest(manifest, t.size());
    positions = subset == "train" ? s.train : (subset == "val" ? s.val : s.test);
  }
  const MetricsReport report = std::visit([&](const auto& m) { return evaluate(m, t, positions); }, model);
  const std::string json = to_json(report);
  if (!out_path.empty()) write_text(out_path, json + "\n");
  out << json << '\n';
  return kOk;
}

}  // namespace

std::vector<std::string> apply_config_text(const std::string& text, ExperimentConfig& cfg) {
  std::vector<std::string> errors;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) {
      errors.push_back(where + "expected `key = value`");
      continue;
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    TrainConfig& t = cfg.train;
    bool ok = true;
    if (key == "rank") ok = parse_number(value, t.rank);
    else if (key == "lambda1") ok = parse_number(value, t.lambda1);
    else if (key == "lambda2") ok = parse_number(value, t.lambda2);
    else if (key == "epochs") ok = parse_number(value, t.max_epochs);
    else if (key == "patience") ok = parse_number(value, t.patience);
    else if (key == "min_delta") ok = parse_number(value, t.min_delta);
    else if (key == "seed") ok = parse_number(value, t.seed);
    else if (key == "eps") ok = parse_number(value, t.eps);
    else if (key == "init_lo") ok = parse_number(value, t.init_lo);
    else if (key == "init_hi") ok = parse_number(value, t.init_hi);
    else if (key == "threads") ok = parse_number(value, t.threads);
    else if (key == "bias") ok = parse_bool(value, t.bias_enabled);
    else if (key == "family") ok = parse_family(value, cfg.family);
    else if (key == "split_seed") ok = parse_number(value, cfg.split_seed);
    else if (key == "data") cfg.data = std::string(value);
    else if (key == "manifest") cfg.manifest = std::string(value);
    else if (key == "out") cfg.out_dir = std::string(value);
    else {
      errors.push_back(where + "unknown key '" + key + "'");
      continue;
    }
    if (!ok) errors.push_back(where + "invalid value '" + std::string(value) + "' for '" + key + "'");
  }
  return errors;
}

std::string config_text(const ExperimentConfig& cfg) {
  const TrainConfig& t = cfg.train;
  std::ostringstream o;
  o << "# effective configuration\n";
  o << "data = " << cfg.data.string() << '\n';
  o << "manifest = " << cfg.manifest.string() << '\n';
  o << "out = " << cfg.out_dir.string() << '\n';
  o << "family = " << family_name(cfg.family) << '\n';
  o << "split_seed = " << cfg.split_seed << '\n';
  o << "rank = " << t.rank << '\n';
  o << "lambda1 = " << format_double(t.lambda1) << '\n';
  o << "lambda2 = " << format_double(t.lambda2) << '\n';
  o << "epochs = " << t.max_epochs << '\n';
  o << "patience = " << t.patience << '\n';
  o << "min_delta = " << format_double(t.min_delta) << '\n';
  o << "seed = " << t.seed << '\n';
  o << "eps = " << format_double(t.eps) << '\n';
  o << "init_lo = " << format_double(t.init_lo) << '\n';
  o << "init_hi = " << format_double(t.init_hi) << '\n';
  o << "bias = " << (t.bias_enabled ? "true" : "false") << '\n';
  o << "threads = " << t.threads << '\n';
  return o.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Non-negative tensor-ring factorization with linear bias for sparse dynamic-network tensors", "trlb"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic tensor and its ground-truth checkpoint");
  std::string gen_dims = "20,20,10";
  std::string gen_family = "tr";
  std::string gen_out;
  SynthSpec spec;
  gen->add_option("--dims", gen_dims, "Extents I,J,K")->capture_default_str();
  gen->add_option("--rank", spec.true_rank, "Ground-truth rank")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--density", spec.density, "Fraction of cells observed")->capture_default_str();
  gen->add_option("--noise", spec.noise_sigma, "Gaussian noise sigma")->capture_default_str();
  gen->add_option("--weight-scale", spec.weight_scale, "Target weight scale")->capture_default_str();
  gen->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
  gen->add_option("--family", gen_family, "tr or cp")->check(CLI::IsMember({"tr", "cp"}))->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory (data.tsv + truth checkpoint)")->required();

  // split
  auto* spl = app.add_subcommand("split", "Partition observations 7:1:2 into train/val/test");
  DataOptions spl_data;
  spl_data.add_to(*spl);
  std::uint64_t spl_seed = 1;
  std::string spl_out;
  spl->add_option("--seed", spl_seed, "Shuffle seed")->capture_default_str();
  spl->add_option("--out", spl_out, "Manifest path")->required();
  spl->add_option("--id-map", spl_data.id_map_out, "With --remap, write the ID mapping here");

  // train
  auto* trn = app.add_subcommand("train", "Train a model and write checkpoint, stats and summary");
  DataOptions trn_data;
  trn_data.add_to(*trn);
  std::string trn_manifest, trn_out, trn_config, trn_family = "tr";
  TrainConfig flags;
  bool bias_disabled = false;
  trn->add_option("--manifest", trn_manifest, "Split manifest")->required();
  trn->add_option("--out", trn_out, "Output directory")->required();
  trn->add_option("--config", trn_config, "Config file with `key = value` lines");
  auto* o_family = trn->add_option("--family", trn_family, "tr or cp")->check(CLI::IsMember({"tr", "cp"}));
  auto* o_rank = trn->add_option("--rank", flags.rank, "Rank R");
  auto* o_l1 = trn->add_option("--lambda1", flags.lambda1, "Core regularization");
  auto* o_l2 = trn->add_option("--lambda2", flags.lambda2, "Bias regularization");
  auto* o_epochs = trn->add_option("--epochs", flags.max_epochs, "Maximum epochs");
  auto* o_patience = trn->add_option("--patience", flags.patience, "Early-stopping patience (0 disables)");
  auto* o_delta = trn->add_option("--min-delta", flags.min_delta, "Minimum validation RMSE improvement");
  auto* o_seed = trn->add_option("--seed", flags.seed, "Initialization seed");
  auto* o_eps = trn->add_option("--eps", flags.eps, "Denominator guard");
  auto* o_threads = trn->add_option("--threads", flags.threads, "Worker threads (1 = sequential)");
  auto* o_nobias = trn->add_flag("--bias-disabled", bias_disabled, "Train without the linear bias");
  trn->add_option("--id-map", trn_data.id_map_out, "With --remap, write the ID mapping here");

  // evaluate
  auto* evl = app.add_subcommand("evaluate", "Report RMSE/MAE of a checkpoint on a subset");
  DataOptions evl_data;
  evl_data.add_to(*evl);
  std::string evl_model, evl_manifest, evl_subset = "test", evl_out;
  evl->add_option("--model", evl_model, "Checkpoint (TRLB or CPLB)")->required();
  evl->add_option("--manifest", evl_manifest, "Split manifest");
  evl->add_option("--subset", evl_subset, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}))
      ->capture_default_str();
  evl->add_option("--out", evl_out, "Also write the JSON report here");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      spec.dims = parse_dims(gen_dims);
      parse_family(gen_family, spec.family);
      return cmd_generate(spec, gen_out, out);
    }
    if (*spl) return cmd_split(spl_data, spl_seed, spl_out, out);
    if (*trn) {
      ExperimentConfig cfg;
      std::vector<std::string> problems;
      if (!trn_config.empty()) problems = apply_config_text(read_text(trn_config), cfg);
      cfg.data = trn_data.path;
      cfg.manifest = trn_manifest;
      cfg.out_dir = trn_out;
      TrainConfig& t = cfg.train;
      if (o_family->count()) parse_family(trn_family, cfg.family);
      if (o_rank->count()) t.rank = flags.rank;
      if (o_l1->count()) t.lambda1 = flags.lambda1;
      if (o_l2->count()) t.lambda2 = flags.lambda2;
      if (o_epochs->count()) t.max_epochs = flags.max_epochs;
      if (o_patience->count()) t.patience = flags.patience;
      if (o_delta->count()) t.min_delta = flags.min_delta;
      if (o_seed->count()) t.seed = flags.seed;
      if (o_eps->count()) t.eps = flags.eps;
      if (o_threads->count()) t.threads = flags.threads;
      if (o_nobias->count()) t.bias_enabled = !bias_disabled;
      for (auto& p : t.problems()) problems.push_back(std::move(p));
      if (!problems.empty()) {
        err << "invalid configuration:\n";
        for (const auto& p : problems) err << "  - " << p << '\n';
        return kUsage;
      }
      return cmd_train(cfg, trn_data, out, err);
    }
    if (*evl) return cmd_evaluate(evl_model, evl_data, evl_manifest, evl_subset, evl_out, out);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoOrFormat;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kIoOrFormat;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kIoOrFormat;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kIoOrFormat;
  }
  return kUsage;
}

}  // namespace trlb::cli
