#include "ecgr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ecgr/baseline.hpp"
#include "ecgr/csv_io.hpp"
#include "ecgr/dataset.hpp"
#include "ecgr/error.hpp"
#include "ecgr/masking.hpp"
#include "ecgr/metrics.hpp"
#include "ecgr/model.hpp"
#include "ecgr/preprocess.hpp"
#include "ecgr/report.hpp"
#include "ecgr/rng.hpp"
#include "ecgr/synth.hpp"
#include "ecgr/train.hpp"
#include "ecgr/weights_io.hpp"

namespace ecgr::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Io {
  std::ostream& out;
  std::ostream& err;
};

void make_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void save_csv(const fs::path& path, const EcgRecord& record) {
  make_parent(path);
  write_csv(path, record);
}

void save_json(const fs::path& path, const json& j) {
  make_parent(path);
  write_json_file(path, j);
}

void write_text_file(const fs::path& path, const std::string& text) {
  make_parent(path);
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) fail(ErrorKind::kIo, "cannot write " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = std::min(s.find(',', start), s.size());
    std::string part(s.substr(start, comma - start));
    part.erase(0, part.find_first_not_of(" \t"));
    part.erase(part.find_last_not_of(" \t") + 1);
    if (!part.empty()) parts.push_back(part);
    start = comma + 1;
  }
  return parts;
}

std::vector<MaskConfig> parse_configs(std::string_view list, std::uint64_t seed) {
  std::vector<MaskConfig> configs;
  for (const std::string& name : split_list(list)) {
    if (name == "all") {
      const auto catalog = mask_catalog();
      configs.insert(configs.end(), catalog.begin(), catalog.end());
    } else {
      try {
        configs.push_back(MaskConfig::parse(name, seed));
      } catch (const Error& e) {
        fail(ErrorKind::kConfig, e.what());
      }
    }
  }
  if (configs.empty()) fail(ErrorKind::kConfig, "no mask configs given");
  return configs;
}

std::vector<std::string> config_names(std::span<const MaskConfig> configs) {
  std::vector<std::string> names;
  for (const MaskConfig& c : configs) names.push_back(c.name());
  return names;
}

/// alpha as given on the command line; "inf" selects the Pearson-only loss.
struct AlphaArg {
  double alpha = 0.1;
  bool pearson_only = false;

  std::string label() const { return pearson_only ? "inf" : format_number(alpha); }
};

AlphaArg parse_alpha(const std::string& text) {
  AlphaArg a;
  if (text == "inf" || text == "infinity") {
    a.pearson_only = true;
    return a;
  }
  std::size_t used = 0;
  try {
    a.alpha = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !std::isfinite(a.alpha) || a.alpha < 0.0) {
    fail(ErrorKind::kConfig, "alpha must be a non-negative number or 'inf', got '" + text + "'");
  }
  return a;
}

std::size_t default_threads() {
  const char* env = std::getenv("ECGR_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) fail(ErrorKind::kConfig, "ECGR_THREADS must be a positive integer");
  return static_cast<std::size_t>(v);
}

ModelConfig arch_config(const std::string& arch) {
  if (arch == "desk") return ModelConfig::desk();
  if (arch == "full") return ModelConfig{};
  fail(ErrorKind::kConfig, "unknown architecture '" + arch + "' (desk, full)");
}

fs::path sidecar_path(const fs::path& weights) { return fs::path(weights.string() + ".json"); }

Model<float> load_model(const fs::path& weights) {
  const json meta = read_json_file(sidecar_path(weights));
  if (!meta.contains("model")) fail(ErrorKind::kSchema, "weights sidecar has no model config");
  return load_weights(weights, model_config_from_json(meta.at("model")));
}

// Corpus on disk: <dir>/records/<id>.csv, <dir>/corpus.json listing the ids in
// order, plus truth.json and manifest.json from synth.

std::vector<std::string> corpus_ids(const fs::path& dir) {
  const fs::path listing = dir / "corpus.json";
  std::vector<std::string> ids;
  if (fs::exists(listing)) {
    const json j = read_json_file(listing);
    try {
      ids = j.at("ids").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      fail(ErrorKind::kSchema, listing.string() + ": " + e.what());
    }
    return ids;
  }
  const fs::path records = dir / "records";
  if (!fs::is_directory(records)) fail(ErrorKind::kIo, "no records directory in " + dir.string());
  for (const auto& entry : fs::directory_iterator(records)) {
    if (entry.path().extension() == ".csv") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Loads every record, preprocessing those not already at `points` samples.
std::vector<EcgRecord> load_corpus(const fs::path& dir, std::size_t points, Io& io) {
  std::vector<EcgRecord> records;
  bool noted = false;
  for (const std::string& id : corpus_ids(dir)) {
    EcgRecord rec = read_csv(dir / "records" / (id + ".csv"));
    if (rec.num_samples() != points) {
      if (!noted) io.err << "note: preprocessing records to " << points << " points\n";
      noted = true;
      PreprocessConfig pc;
      pc.target_points = points;
      rec = preprocess_record(rec, pc).record;
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) fail(ErrorKind::kInvalidInput, "corpus " + dir.string() + " is empty");
  return records;
}

std::vector<EcgRecord> select_split(std::vector<EcgRecord> records, const std::string& split) {
  if (split == "all") return records;
  Split want;
  if (split == "train") {
    want = Split::kTrain;
  } else if (split == "val") {
    want = Split::kVal;
  } else if (split == "test") {
    want = Split::kTest;
  } else {
    fail(ErrorKind::kConfig, "unknown split '" + split + "' (train, val, test, all)");
  }
  std::vector<EcgRecord> kept;
  for (EcgRecord& r : records) {
    if (split_of(r.id()) == want) kept.push_back(std::move(r));
  }
  if (kept.empty()) fail(ErrorKind::kInvalidInput, "the " + split + " split is empty");
  return kept;
}

std::vector<std::string> ids_of(std::span<const EcgRecord> records) {
  std::vector<std::string> ids;
  for (const EcgRecord& r : records) ids.push_back(r.id());
  return ids;
}

json truth_json(const GroundTruth& t) {
  json beats = json::array();
  for (const BeatTruth& b : t.beats) {
    beats.push_back({{"r", b.r}, {"q", b.q}, {"s_offset", b.s_offset}, {"t_end", b.t_end}});
  }
  return {{"id", t.record_id},       {"heart_rate_bpm", t.heart_rate_bpm},
          {"qt_s", t.qt_s},          {"qrs_s", t.qrs_s},
          {"r_times", t.r_times},    {"beats", beats}};
}

struct TrainArgs {
  fs::path data;
  std::string alpha = "0.1";
  std::size_t epochs = 30;
  std::size_t batch = 16;
  double lr = 0.01;
  std::uint64_t seed = 0;
  std::string arch = "desk";
  std::string configs = "all";
  std::size_t pairs_per_epoch = 0;
  std::size_t points = 512;
  bool validate = false;
  std::size_t checkpoint_every = 0;
  fs::path resume;
};

void add_train_options(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--data", a.data, "Corpus directory (from synth)")->required();
  cmd->add_option("--epochs", a.epochs, "Training epochs")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--batch", a.batch, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--lr", a.lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "Seed for init, masks and shuffling")->capture_default_str();
  cmd->add_option("--arch", a.arch, "Model size: desk or full")->capture_default_str();
  cmd->add_option("--configs", a.configs, "Comma-separated mask configs or 'all'")
      ->capture_default_str();
  cmd->add_option("--pairs-per-epoch", a.pairs_per_epoch,
                  "Pairs sampled per epoch (0 = every pair)")->capture_default_str();
  cmd->add_option("--points", a.points, "Samples per lead after preprocessing")->capture_default_str();
  cmd->add_flag("--validate", a.validate, "Log the validation-split loss every epoch");
}

struct TrainResult {
  Model<float> model;
  std::vector<EpochLog> logs;
};

struct TrainData {
  std::vector<EcgRecord> train, val;
  std::vector<DatasetPair> train_pairs, val_pairs;
  std::vector<MaskConfig> configs;
};

TrainData prepare_training(const TrainArgs& a, Io& io) {
  TrainData d;
  d.configs = parse_configs(a.configs, a.seed);
  std::vector<EcgRecord> all = load_corpus(a.data, a.points, io);
  for (EcgRecord& r : all) {
    const Split s = split_of(r.id());
    if (s == Split::kTrain) d.train.push_back(std::move(r));
    else if (s == Split::kVal) d.val.push_back(std::move(r));
  }
  if (d.train.empty()) fail(ErrorKind::kInvalidInput, "the train split is empty");
  const auto train_ids = ids_of(d.train);
  d.train_pairs = build_dataset(train_ids, a.seed, d.configs);
  const auto val_ids = ids_of(d.val);
  d.val_pairs = build_dataset(val_ids, mix_seed(a.seed, 0x76616c), d.configs);
  return d;
}

TrainResult run_training(const TrainArgs& a, const AlphaArg& alpha, const TrainData& d,
                         const fs::path& checkpoint, Io& io) {
  ModelConfig mc = arch_config(a.arch);
  mc.num_samples = a.points;
  mc.validate();
  Model<float> model = Model<float>::build(mc, mix_seed(a.seed, 0x696e6974));

  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.lr = a.lr;
  tc.alpha = alpha.pearson_only ? 0.0 : alpha.alpha;
  tc.pearson_only = alpha.pearson_only;
  tc.seed = a.seed;
  tc.pairs_per_epoch = a.pairs_per_epoch;
  tc.checkpoint_every = a.checkpoint_every;
  tc.checkpoint_path = checkpoint;
  tc.validate();

  TrainState state;
  if (!a.resume.empty()) {
    state = load_checkpoint(a.resume, model);
    io.out << "resuming after epoch " << state.epochs_done << '\n';
  }
  std::optional<PairSet> val;
  if (a.validate && !d.val_pairs.empty()) val = PairSet{d.val_pairs, d.val};

  io.out << "training on " << d.train.size() << " records, " << d.train_pairs.size()
         << " pairs, alpha " << alpha.label() << '\n';
  auto logs = train(model, PairSet{d.train_pairs, d.train}, tc, &state, val,
                    [&](const EpochLog& l) {
                      io.out << "epoch " << l.epoch << '/' << tc.epochs << " composite "
                             << format_number(l.composite) << " mse " << format_number(l.mse)
                             << " pearson " << format_number(l.pearson);
                      if (l.val_composite) io.out << " val " << format_number(*l.val_composite);
                      io.out << '\n';
                      io.out.flush();
                    });
  return {std::move(model), std::move(logs)};
}

void save_trained(const fs::path& out, const TrainResult& r, const TrainArgs& a,
                  const AlphaArg& alpha, const TrainData& d) {
  make_parent(out);
  save_weights(r.model, out);
  json meta;
  meta["model"] = model_config_to_json(r.model.config());
  meta["train"] = {{"alpha", alpha.label()},
                   {"epochs", a.epochs},
                   {"batch_size", a.batch},
                   {"lr", a.lr},
                   {"seed", a.seed},
                   {"pairs_per_epoch", a.pairs_per_epoch},
                   {"configs", config_names(d.configs)},
                   {"train_records", d.train.size()},
                   {"train_pairs", d.train_pairs.size()}};
  meta["parameters"] = r.model.parameter_count();
  if (!r.logs.empty()) {
    const EpochLog& last = r.logs.back();
    meta["final"] = {{"epoch", last.epoch},
                     {"composite", last.composite},
                     {"mse", last.mse},
                     {"pearson", last.pearson}};
  }
  save_json(sidecar_path(out), meta);
  std::ostringstream log;
  write_epoch_log_csv(log, r.logs);
  write_text_file(fs::path(out.string() + ".log.csv"), log.str());
}

struct SynthArgs {
  std::size_t n = 16;
  std::uint64_t seed = 0;
  fs::path out;
  double fs_hz = 500.0;
  double duration = 10.0;
  double noise_std = 0.01;
  double wander = 0.05;
  bool raw = false;
  std::size_t points = 512;
};

int cmd_synth(const SynthArgs& a, Io& io) {
  SynthConfig sc;
  sc.num_records = a.n;
  sc.seed = a.seed;
  sc.sampling_rate = a.fs_hz;
  sc.duration_s = a.duration;
  sc.noise_std = a.noise_std;
  sc.baseline_wander_amp = a.wander;
  try {
    sc.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, e.what());
  }
  SynthOutput gen = synth_generate(sc);

  std::vector<std::string> ids;
  json truth = json::array();
  PreprocessConfig pc;
  pc.target_points = a.points;
  for (std::size_t i = 0; i < gen.records.size(); ++i) {
    EcgRecord rec = a.raw ? gen.records[i] : preprocess_record(gen.records[i], pc).record;
    save_csv(a.out / "records" / (rec.id() + ".csv"), rec);
    ids.push_back(rec.id());
    truth.push_back(truth_json(gen.truth[i]));
  }
  json corpus = {{"ids", ids},
                 {"seed", a.seed},
                 {"source_fs", a.fs_hz},
                 {"duration_s", a.duration},
                 {"preprocessed", !a.raw}};
  if (!a.raw) corpus["points"] = a.points;
  save_json(a.out / "corpus.json", corpus);
  save_json(a.out / "truth.json", truth);
  save_json(a.out / "manifest.json", manifest_json(split_by_id(ids)));
  io.out << "wrote " << ids.size() << " records to " << a.out.string() << '\n';
  return kExitOk;
}

struct PreprocessArgs {
  fs::path in, out;
  std::size_t points = 512;
  double low = 0.05, high = 150.0;
  bool per_lead = false;
};

int cmd_preprocess(const PreprocessArgs& a, Io& io) {
  PreprocessConfig pc;
  pc.target_points = a.points;
  pc.low_cut_hz = a.low;
  pc.high_cut_hz = a.high;
  if (a.per_lead) pc.normalize_scope = NormalizeScope::kPerLead;
  Preprocessed p = preprocess_record(read_csv(a.in), pc);
  for (const std::string& w : p.warnings) io.err << "warning: " << w << '\n';
  save_csv(a.out, p.record);
  return kExitOk;
}

fs::path default_mask_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".mask.json");
  return p;
}

struct MaskArgs {
  fs::path in, out, mask_out;
  std::string config;
  std::uint64_t seed = 0;
};

int cmd_mask(const MaskArgs& a, Io& io) {
  const MaskConfig config = parse_configs(a.config, a.seed).at(0);
  const EcgRecord rec = read_csv(a.in);
  const MaskedEcg masked = mask_record(rec, config, a.seed);
  save_csv(a.out, masked.samples);
  const fs::path mask_path = a.mask_out.empty() ? default_mask_path(a.out) : a.mask_out;
  save_json(mask_path, mask_to_json(masked.mask, config.name(), masked.source_id));
  io.out << config.name() << ": kept " << masked.mask.count_kept() << " of "
         << masked.mask.num_leads() * masked.mask.num_samples() << " cells\n";
  return kExitOk;
}

struct TrainCmdArgs {
  TrainArgs train;
  fs::path out = "weights.ecgr";
};

int cmd_train(TrainCmdArgs& a, Io& io) {
  const AlphaArg alpha = parse_alpha(a.train.alpha);
  const TrainData d = prepare_training(a.train, io);
  const TrainResult r =
      run_training(a.train, alpha, d, fs::path(a.out.string() + ".ckpt"), io);
  save_trained(a.out, r, a.train, alpha, d);
  io.out << "saved " << a.out.string() << '\n';
  return kExitOk;
}

struct SweepArgs {
  TrainArgs train;
  std::string alphas = "0,0.1,0.5,1,inf";
  std::string eval_configs = "all";
  fs::path out;
  std::size_t threads = 1;
};

int cmd_sweep(SweepArgs& a, Io& io) {
  std::vector<AlphaArg> alphas;
  for (const std::string& s : split_list(a.alphas)) alphas.push_back(parse_alpha(s));
  if (alphas.empty()) fail(ErrorKind::kConfig, "no alpha values given");
  const std::vector<MaskConfig> eval_configs = parse_configs(a.eval_configs, a.train.seed);
  const TrainData d = prepare_training(a.train, io);
  if (d.val.empty()) fail(ErrorKind::kInvalidInput, "the val split is empty");

  std::vector<MethodReports> rows;
  json summary = json::array();
  for (const AlphaArg& alpha : alphas) {
    const fs::path weights = a.out / ("alpha-" + alpha.label() + ".ecgr");
    TrainResult r = run_training(a.train, alpha, d, fs::path(weights.string() + ".ckpt"), io);
    save_trained(weights, r, a.train, alpha, d);

    EvalOptions eo;
    eo.seed = mix_seed(a.train.seed, 0x6576616c);
    eo.score.clinical = false;
    eo.threads = a.threads;
    Model<float>& model = r.model;
    auto reports = evaluate([&](const MaskedEcg& m) { return reconstruct(model, m); }, d.val,
                            eval_configs, eo);
    std::ostringstream csv;
    write_metrics_csv(csv, reports);
    write_text_file(a.out / ("alpha-" + alpha.label() + ".metrics.csv"), csv.str());
    summary.push_back({{"alpha", alpha.label()}, {"metrics", metrics_summary_json(reports)}});
    rows.push_back({alpha.label(), std::move(reports)});
  }
  static constexpr std::array<std::string_view, 4> kSweepMetrics = {"pcc", "rmse", "mae_mean", "dtw"};
  write_text_file(a.out / "sweep.md", render_summary_table(rows, "alpha", kSweepMetrics));
  save_json(a.out / "sweep.json", summary);
  io.out << render_summary_table(rows, "alpha", kSweepMetrics);
  return kExitOk;
}

Reconstructor make_reconstructor(const std::string& method, const fs::path& weights,
                                 std::uint64_t seed, std::optional<Model<float>>& holder) {
  if (method == "copypaste") return [](const MaskedEcg& m) { return copy_paste(m); };
  if (method == "noise") return noise_reconstructor(seed);
  if (method == "model") {
    if (weights.empty()) fail(ErrorKind::kConfig, "--method model needs --weights");
    holder.emplace(load_model(weights));
    Model<float>* model = &*holder;
    return [model](const MaskedEcg& m) { return reconstruct(*model, m); };
  }
  fail(ErrorKind::kConfig, "unknown method '" + method + "' (model, copypaste, noise)");
}

struct ReconstructArgs {
  fs::path in, mask, out, weights;
  std::string config;
  std::string method = "model";
  std::uint64_t seed = 0;
};

int cmd_reconstruct(const ReconstructArgs& a, Io&) {
  MaskedEcg masked;
  masked.samples = read_csv(a.in);
  masked.source_id = masked.samples.id();
  const fs::path mask_path = a.mask.empty() ? default_mask_path(a.in) : a.mask;
  if (fs::exists(mask_path)) {
    const json j = read_json_file(mask_path);
    masked.mask = mask_from_json(j);
    if (j.contains("source_id") && j["source_id"].is_string()) {
      masked.source_id = j["source_id"].get<std::string>();
    }
    if (!a.config.empty() && j.value("config", std::string{}) != a.config) {
      fail(ErrorKind::kSchema, "mask file is for config '" + j.value("config", std::string{}) +
                                   "', not '" + a.config + "'");
    }
  } else if (!a.config.empty()) {
    const MaskConfig config = parse_configs(a.config, a.seed).at(0);
    if (config.kind == MaskKind::kRandom) {
      fail(ErrorKind::kConfig, "C_Rdm windows cannot be regenerated; pass --mask");
    }
    masked.mask = primer_mask(config, masked.samples.num_samples());
  } else {
    fail(ErrorKind::kIo, "no mask file " + mask_path.string() + " and no --config");
  }
  if (masked.mask.num_samples() != masked.samples.num_samples()) {
    fail(ErrorKind::kShapeMismatch, "mask and record differ in length");
  }
  std::optional<Model<float>> holder;
  const Reconstructor rec = make_reconstructor(a.method, a.weights, a.seed, holder);
  EcgRecord out = rec(masked);
  out.set_id(masked.source_id);
  save_csv(a.out, out);
  return kExitOk;
}

struct EvalArgs {
  fs::path data, weights, out;
  std::string configs = "all";
  std::string method = "model";
  std::string split = "test";
  std::string region = "full";
  std::string dtw = "normalized";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t points = 512;
  std::size_t examples = 1;
  bool no_clinical = false;
};

int cmd_eval(const EvalArgs& a, Io& io) {
  const std::vector<MaskConfig> configs = parse_configs(a.configs, a.seed);
  EvalOptions eo;
  eo.seed = a.seed;
  eo.threads = a.threads;
  if (a.region == "masked") {
    eo.score.region = Region::kMasked;
  } else if (a.region != "full") {
    fail(ErrorKind::kConfig, "unknown region '" + a.region + "' (full, masked)");
  }
  if (a.dtw == "raw") {
    eo.score.dtw_normalize = false;
  } else if (a.dtw != "normalized") {
    fail(ErrorKind::kConfig, "unknown dtw mode '" + a.dtw + "' (normalized, raw)");
  }
  eo.score.clinical = !a.no_clinical;

  std::optional<Model<float>> holder;
  const Reconstructor rec = make_reconstructor(a.method, a.weights, a.seed, holder);
  const std::vector<EcgRecord> records =
      select_split(load_corpus(a.data, a.points, io), a.split);
  const auto reports = evaluate(rec, records, configs, eo);

  std::ostringstream csv;
  write_metrics_csv(csv, reports);
  write_text_file(a.out / "metrics.csv", csv.str());
  json summary = metrics_summary_json(reports);
  summary["method"] = a.method;
  summary["split"] = a.split;
  summary["records"] = records.size();
  summary["region"] = a.region;
  summary["dtw"] = std::string("classic DTW, |a-b| cost, ") +
                   (eo.score.dtw_normalize ? "divided by path length" : "unnormalized");
  save_json(a.out / "summary.json", summary);

  // A few original / reconstruction pairs per config for the report plots.
  for (std::size_t c = 0; c < configs.size(); ++c) {
    for (std::size_t r = 0; r < std::min(a.examples, records.size()); ++r) {
      const MaskedEcg masked = mask_record(records[r], configs[c], mix_seed(a.seed, r, c), r);
      const fs::path dir = a.out / "examples" / configs[c].name();
      const std::string stem = records[r].id();
      save_csv(dir / (stem + ".original.csv"), records[r]);
      save_csv(dir / (stem + ".recon.csv"), rec(masked));
      save_json(dir / (stem + ".mask.json"),
                      mask_to_json(masked.mask, configs[c].name(), masked.source_id));
    }
  }

  for (const MetricReport& r : reports) {
    const MetricSummary p = r.summary("pcc");
    io.out << r.config_name << ": pcc " << format_number(p.mean) << " rmse "
           << format_number(r.summary("rmse").mean) << '\n';
  }
  return kExitOk;
}

struct ReportArgs {
  std::vector<std::string> metrics;
  fs::path examples, out;
  std::string metric_list;
};

int cmd_report(const ReportArgs& a, Io& io) {
  std::vector<MethodReports> methods;
  for (const std::string& spec : a.metrics) {
    const std::size_t eq = spec.find('=');
    const fs::path path = eq == std::string::npos ? fs::path(spec) : fs::path(spec.substr(eq + 1));
    std::string label = eq == std::string::npos ? path.parent_path().filename().string()
                                                : spec.substr(0, eq);
    if (label.empty()) label = path.stem().string();
    std::istringstream in(read_text_file(path));
    methods.push_back({label, read_metrics_csv(in)});
  }

  std::vector<std::string> metric_store;
  if (a.metric_list.empty()) {
    for (std::string_view m : kMetricNames) metric_store.emplace_back(m);
  } else {
    metric_store = split_list(a.metric_list);
    for (const std::string& m : metric_store) {
      if (std::find(kMetricNames.begin(), kMetricNames.end(), m) == kMetricNames.end()) {
        fail(ErrorKind::kConfig, "unknown metric '" + m + "'");
      }
    }
  }
  const std::vector<std::string_view> metric_names(metric_store.begin(), metric_store.end());
  write_text_file(a.out / "tables.md", render_metric_tables(methods, metric_names));

  std::size_t plots = 0;
  if (!a.examples.empty()) {
    std::vector<std::string> configs;
    for (const MethodReports& m : methods) {
      for (const MetricReport& r : m.reports) {
        if (std::find(configs.begin(), configs.end(), r.config_name) == configs.end()) {
          configs.push_back(r.config_name);
        }
      }
    }
    for (const std::string& config : configs) {
      const fs::path dir = a.examples / config;
      if (!fs::is_directory(dir)) continue;
      std::vector<fs::path> originals;
      for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > 13 && name.ends_with(".original.csv")) originals.push_back(entry.path());
      }
      std::sort(originals.begin(), originals.end());
      for (const fs::path& orig_path : originals) {
        const std::string name = orig_path.filename().string();
        const std::string stem = name.substr(0, name.size() - 13);
        const EcgRecord orig = read_csv(orig_path);
        const EcgRecord recon = read_csv(dir / (stem + ".recon.csv"));
        std::optional<PrimerMask> mask;
        if (fs::exists(dir / (stem + ".mask.json"))) {
          mask = mask_from_json(read_json_file(dir / (stem + ".mask.json")));
        }
        write_text_file(a.out / "plots" / (config + "_" + stem + ".svg"),
                        render_ecg_svg(orig, recon, mask ? &*mask : nullptr, config + " " + stem));
        ++plots;
      }
    }
  }
  io.out << "wrote " << (a.out / "tables.md").string() << " and " << plots << " plots\n";
  return kExitOk;
}

int dispatch(std::vector<std::string> args, Io& io) {
  CLI::App app{"ECG segment and lead reconstruction", "ecgr"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic 12-lead corpus with ground truth");
  c_synth->add_option("--n", synth.n, "Number of records")->capture_default_str()
      ->check(CLI::PositiveNumber);
  c_synth->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--fs", synth.fs_hz, "Source sampling rate (Hz)")->capture_default_str();
  c_synth->add_option("--duration", synth.duration, "Record length (s)")->capture_default_str();
  c_synth->add_option("--noise-std", synth.noise_std, "White noise std")->capture_default_str();
  c_synth->add_option("--wander", synth.wander, "Baseline wander amplitude")->capture_default_str();
  c_synth->add_option("--points", synth.points, "Samples per lead after preprocessing")
      ->capture_default_str();
  c_synth->add_flag("--raw", synth.raw, "Write source-rate records without preprocessing");

  PreprocessArgs prep;
  auto* c_prep = app.add_subcommand("preprocess", "Normalize, band-pass and resample one record CSV");
  c_prep->add_option("--in", prep.in, "Input record CSV")->required();
  c_prep->add_option("--out", prep.out, "Output record CSV")->required();
  c_prep->add_option("--points", prep.points, "Output samples per lead")->capture_default_str();
  c_prep->add_option("--low", prep.low, "High-pass edge (Hz)")->capture_default_str();
  c_prep->add_option("--high", prep.high, "Low-pass edge (Hz)")->capture_default_str();
  c_prep->add_flag("--per-lead", prep.per_lead, "Normalize each lead on its own range");

  MaskArgs mask;
  auto* c_mask = app.add_subcommand("mask", "Mask a record CSV with one configuration");
  c_mask->add_option("--in", mask.in, "Input record CSV")->required();
  c_mask->add_option("--out", mask.out, "Masked record CSV")->required();
  c_mask->add_option("--config", mask.config, "C1..C5, C_I..C_V6, C_Rdm or C_real-life")->required();
  c_mask->add_option("--seed", mask.seed, "Noise (and C_Rdm window) seed")->capture_default_str();
  c_mask->add_option("--mask-out", mask.mask_out, "Mask JSON (default <out>.mask.json)");

  TrainCmdArgs train_args;
  auto* c_train = app.add_subcommand("train", "Train the reconstruction network");
  add_train_options(c_train, train_args.train);
  c_train->add_option("--alpha", train_args.train.alpha, "Pearson weight, or 'inf' for Pearson only")
      ->capture_default_str();
  c_train->add_option("--out", train_args.out, "Weights file")->capture_default_str();
  c_train->add_option("--checkpoint-every", train_args.train.checkpoint_every,
                      "Checkpoint to <out>.ckpt every k epochs")->capture_default_str();
  c_train->add_option("--resume", train_args.train.resume, "Checkpoint to resume from");

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("sweep", "Train and validate one model per alpha");
  add_train_options(c_sweep, sweep.train);
  c_sweep->add_option("--alphas", sweep.alphas, "Comma-separated alpha values")->capture_default_str();
  c_sweep->add_option("--eval-configs", sweep.eval_configs, "Configs scored on the val split")
      ->capture_default_str();
  c_sweep->add_option("--out", sweep.out, "Output directory")->required();
  c_sweep->add_option("--threads", sweep.threads, "Evaluation workers (default $ECGR_THREADS or 1)")
      ->check(CLI::PositiveNumber);

  ReconstructArgs recon;
  auto* c_recon = app.add_subcommand("reconstruct", "Reconstruct a masked record CSV");
  c_recon->add_option("--in", recon.in, "Masked record CSV")->required();
  c_recon->add_option("--mask", recon.mask, "Mask JSON (default <in>.mask.json)");
  c_recon->add_option("--config", recon.config, "Mask config, used when no mask file exists");
  c_recon->add_option("--method", recon.method, "model, copypaste or noise")->capture_default_str();
  c_recon->add_option("--weights", recon.weights, "Weights file for --method model");
  c_recon->add_option("--seed", recon.seed, "Seed for --method noise")->capture_default_str();
  c_recon->add_option("--out", recon.out, "Reconstructed record CSV")->required();

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Score reconstructions of a corpus split");
  c_eval->add_option("--data", eval.data, "Corpus directory")->required();
  c_eval->add_option("--configs", eval.configs, "Comma-separated mask configs or 'all'")
      ->capture_default_str();
  c_eval->add_option("--method", eval.method, "model, copypaste or noise")->capture_default_str();
  c_eval->add_option("--weights", eval.weights, "Weights file for --method model");
  c_eval->add_option("--split", eval.split, "train, val, test or all")->capture_default_str();
  c_eval->add_option("--region", eval.region, "Score the full lead or only masked cells")
      ->capture_default_str();
  c_eval->add_option("--dtw", eval.dtw, "normalized or raw DTW")->capture_default_str();
  c_eval->add_flag("--no-clinical", eval.no_clinical, "Skip the fiducial-based metrics");
  c_eval->add_option("--seed", eval.seed, "Mask noise seed")->capture_default_str();
  c_eval->add_option("--threads", eval.threads, "Worker threads (default $ECGR_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  c_eval->add_option("--points", eval.points, "Samples per lead after preprocessing")
      ->capture_default_str();
  c_eval->add_option("--examples", eval.examples, "Example records saved per config")
      ->capture_default_str();
  c_eval->add_option("--out", eval.out, "Output directory")->required();

  ReportArgs report;
  auto* c_report = app.add_subcommand("report", "Markdown tables and SVG plots from eval output");
  c_report->add_option("--metrics", report.metrics, "Metric CSV, optionally label=path; repeatable")
      ->required();
  c_report->add_option("--examples", report.examples, "Examples directory written by eval");
  c_report->add_option("--metric-list", report.metric_list, "Comma-separated metrics (default all)");
  c_report->add_option("--out", report.out, "Output directory")->required();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, io.out, io.err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, io.out, io.err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, io.out, io.err);
    io.err << app.help();
    return kExitUsage;
  }

  if (!c_eval->count("--threads")) eval.threads = default_threads();
  if (!c_sweep->count("--threads")) sweep.threads = default_threads();

  if (c_synth->parsed()) return cmd_synth(synth, io);
  if (c_prep->parsed()) return cmd_preprocess(prep, io);
  if (c_mask->parsed()) return cmd_mask(mask, io);
  if (c_train->parsed()) return cmd_train(train_args, io);
  if (c_sweep->parsed()) return cmd_sweep(sweep, io);
  if (c_recon->parsed()) return cmd_reconstruct(recon, io);
  if (c_eval->parsed()) return cmd_eval(eval, io);
  if (c_report->parsed()) return cmd_report(report, io);
  io.err << app.help();
  return kExitUsage;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  Io io{out, err};
  try {
    return dispatch({args.begin(), args.end()}, io);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::kConfig ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + (argc > 0 ? 1 : 0), argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace ecgr::cli
