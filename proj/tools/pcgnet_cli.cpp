// pcgnet command line: dataset preparation, pretraining, fine-tuning,
// evaluation with site/quality filters, and synthetic cohort generation.
//
// Exit codes: 0 success, 2 config/usage error, 3 weight incompatibility,
// 4 empty selection after filtering.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcgnet/common.hpp"
#include "pcgnet/dsp.hpp"
#include "pcgnet/evaluate.hpp"
#include "pcgnet/model.hpp"
#include "pcgnet/pipeline.hpp"
#include "pcgnet/signal_io.hpp"
#include "pcgnet/synth.hpp"
#include "pcgnet/train.hpp"

namespace fs = std::filesystem;
using namespace pcgnet;

namespace {

// --- flag bundles ------------------------------------------------------------

struct NetFlags {
  int depth = 10;
  int filters = 32;
  std::string kernels = "10,20,40";
  int bottleneck = 32;
  int residual_period = 3;
  bool no_batchnorm = false;
  std::string head = "softmax";
  int classes = 2;

  model::NetworkConfig to_config() const {
    model::NetworkConfig cfg;
    cfg.depth = depth;
    cfg.filters = filters;
    std::vector<int> ks;
    std::stringstream ss(kernels);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        ks.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        throw ConfigInvalid("bad kernel size '" + tok + "'");
      }
    }
    if (ks.size() != 3) throw ConfigInvalid("--kernels wants exactly three comma-separated sizes");
    cfg.kernel_sizes = {ks[0], ks[1], ks[2]};
    cfg.bottleneck_channels = bottleneck;
    cfg.residual_period = residual_period;
    cfg.use_batchnorm = !no_batchnorm;
    cfg.num_classes = classes;
    if (head == "softmax") cfg.head = model::HeadKind::SOFTMAX;
    else if (head == "sigmoid") cfg.head = model::HeadKind::SIGMOID;
    else throw ConfigInvalid("--head must be softmax or sigmoid");
    cfg.validate();
    return cfg;
  }
};

struct PrepFlags {
  int target_rate = 800;
  double seconds = 15.0;
  int filter_taps = 101;

  PreprocessOptions to_options() const {
    PreprocessOptions opts;
    opts.target_rate_hz = target_rate;
    opts.target_seconds = seconds;
    opts.filter_taps = filter_taps;
    return opts;
  }
};

struct TrainFlags {
  int batch = 32;
  int epochs = 100;
  int patience = 10;
  double lr = 1e-3;
  int lr_step = 10;
  double lr_decay = 0.5;
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 0;
  double val_frac = 0.1;
  double test_frac = 0.1;
  bool no_class_weights = false;
  std::string site = "all";
};

void add_net_flags(CLI::App* cmd, NetFlags& f) {
  cmd->add_option("--depth", f.depth, "Inception modules in the trunk");
  cmd->add_option("--filters", f.filters, "Filters per branch");
  cmd->add_option("--kernels", f.kernels, "Three branch kernel sizes, comma separated");
  cmd->add_option("--bottleneck", f.bottleneck, "Bottleneck channels");
  cmd->add_option("--residual-period", f.residual_period, "Modules between residual joins");
  cmd->add_flag("--no-batchnorm", f.no_batchnorm, "Disable batch normalization");
  cmd->add_option("--head", f.head, "Classifier head: softmax or sigmoid");
  cmd->add_option("--classes", f.classes, "Number of output classes");
}

void add_prep_flags(CLI::App* cmd, PrepFlags& f) {
  cmd->add_option("--target-rate", f.target_rate, "Decimation target rate (Hz)");
  cmd->add_option("--seconds", f.seconds, "Fixed signal duration after preprocessing");
  cmd->add_option("--filter-taps", f.filter_taps, "Anti-aliasing FIR length");
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--batch", f.batch, "Batch size");
  cmd->add_option("--epochs", f.epochs, "Maximum epochs");
  cmd->add_option("--patience", f.patience, "Early-stopping patience (epochs)");
  cmd->add_option("--lr", f.lr, "Base learning rate");
  cmd->add_option("--lr-step", f.lr_step, "Epochs between learning-rate halvings");
  cmd->add_option("--lr-decay", f.lr_decay, "Learning-rate decay factor per step");
  cmd->add_option("--seed", f.seed, "Weight init / shuffle seed");
  cmd->add_option("--split-seed", f.split_seed, "Patient split seed");
  cmd->add_option("--val-frac", f.val_frac, "Validation patient fraction");
  cmd->add_option("--test-frac", f.test_frac, "Held-out test patient fraction");
  cmd->add_flag("--no-class-weights", f.no_class_weights, "Disable inverse-frequency loss weights");
  cmd->add_option("--site", f.site, "Train on one auscultation site only (AV|MV|PV|TV|all)");
}

int default_threads() {
  return 1;  // overridden by --threads / PCGNET_THREADS
}

// --- shared helpers -------------------------------------------------------------

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}
std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

Site parse_site_flag(const std::string& s) {
  auto site = site_from_string(upper(s));
  if (!site || *site == Site::UNKNOWN) throw ConfigInvalid("unknown site '" + s + "'");
  return *site;
}

// Keeps only recordings at `site`; drops patients left with none.
DatasetManifest filter_site(const DatasetManifest& manifest, Site site) {
  DatasetManifest out;
  out.source = manifest.source;
  out.base_dir = manifest.base_dir;
  for (const auto& patient : manifest.entries) {
    PatientRecord kept;
    kept.patient_id = patient.patient_id;
    kept.label = patient.label;
    kept.demographics = patient.demographics;
    for (const auto& rec : patient.recordings)
      if (rec.site == site) kept.recordings.push_back(rec);
    if (!kept.recordings.empty()) out.entries.push_back(std::move(kept));
  }
  if (out.entries.empty())
    throw EmptyDataset(std::string("no recordings at site ") + to_string(site));
  return out;
}

// Rewrites recording paths so they stay valid when the manifest is written
// into `new_dir`.
DatasetManifest rebase_manifest(const DatasetManifest& manifest, const std::string& new_dir) {
  DatasetManifest out = manifest;
  for (auto& patient : out.entries)
    for (auto& rec : patient.recordings) {
      fs::path p(rec.path);
      if (p.is_relative() && !manifest.base_dir.empty()) p = fs::path(manifest.base_dir) / p;
      std::error_code ec;
      fs::path rel = fs::proximate(p, new_dir, ec);
      rec.path = ec ? fs::absolute(p).string() : rel.string();
    }
  out.base_dir = new_dir;
  return out;
}

void write_history_csv(const std::string& path, const train::History& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open history file: " + path);
  out << "epoch,lr,train_loss,val_loss,val_accuracy\n";
  char buf[256];
  for (const auto& e : history.epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g", e.epoch, e.lr, e.train_loss,
                  e.val_loss, e.val_accuracy);
    out << buf << "\n";
  }
  if (!out) throw Error("failed writing history file: " + path);
}

void write_config_txt(const std::string& path, const NetFlags& net, const PrepFlags& prep,
                      const TrainFlags* tr) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open config file: " + path);
  out << "depth=" << net.depth << "\n";
  out << "filters=" << net.filters << "\n";
  // quoted so the INI reader keeps the commas inside one value
  out << "kernels=\"" << net.kernels << "\"\n";
  out << "bottleneck=" << net.bottleneck << "\n";
  out << "residual-period=" << net.residual_period << "\n";
  out << "no-batchnorm=" << (net.no_batchnorm ? "true" : "false") << "\n";
  out << "head=" << net.head << "\n";
  out << "classes=" << net.classes << "\n";
  out << "target-rate=" << prep.target_rate << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", prep.seconds);
  out << "seconds=" << buf << "\n";
  out << "filter-taps=" << prep.filter_taps << "\n";
  if (tr) {
    out << "batch=" << tr->batch << "\n";
    out << "epochs=" << tr->epochs << "\n";
    out << "patience=" << tr->patience << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", tr->lr);
    out << "lr=" << buf << "\n";
    out << "lr-step=" << tr->lr_step << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", tr->lr_decay);
    out << "lr-decay=" << buf << "\n";
    out << "seed=" << tr->seed << "\n";
    out << "split-seed=" << tr->split_seed << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", tr->val_frac);
    out << "val-frac=" << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", tr->test_frac);
    out << "test-frac=" << buf << "\n";
    out << "no-class-weights=" << (tr->no_class_weights ? "true" : "false") << "\n";
    out << "site=" << tr->site << "\n";
  }
  if (!out) throw Error("failed writing config file: " + path);
}

// key=value lines as written above; blank lines, comments, and optional
// quotes around the value are tolerated.
std::vector<std::pair<std::string, std::string>> read_config_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config file: " + path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigInvalid("config line without '=': " + line);
    std::string value = line.substr(eq + 1);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    pairs.emplace_back(line.substr(0, eq), value);
  }
  return pairs;
}

// Turns `--config FILE` on a subcommand into explicit --key=value tokens so a
// saved run configuration seeds the defaults. Flags given on the command line
// shadow the file, and keys the subcommand does not define are dropped (a
// training config can parameterize evaluation without complaint).
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
  if (args.empty()) return args;
  CLI::App* sub = app.get_subcommand_no_throw(args[0]);
  if (sub == nullptr || sub->get_option_no_throw("--config") == nullptr) return args;

  std::string config_path;
  std::set<std::string> given;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    else if (args[i].rfind("--", 0) == 0)
      given.insert(args[i].substr(2, args[i].find('=') - 2));
  }
  if (config_path.empty()) return args;

  std::vector<std::string> injected;
  for (const auto& [key, value] : read_config_pairs(config_path)) {
    if (given.count(key) != 0) continue;
    if (sub->get_option_no_throw("--" + key) == nullptr) continue;
    injected.push_back("--" + key + "=" + value);
  }
  args.insert(args.begin() + 1, injected.begin(), injected.end());
  return args;
}

// --- prepare ---------------------------------------------------------------------

int run_prepare(const std::string& dataset_dir, const std::string& format,
                const std::string& out_manifest) {
  if (!fs::is_directory(dataset_dir)) throw ConfigInvalid("not a directory: " + dataset_dir);
  const fs::path out_path = fs::absolute(out_manifest);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());

  DatasetManifest manifest;
  std::size_t skipped_unknown = 0;

  if (format == "physionet2022") {
    std::vector<fs::path> headers;
    for (const auto& entry : fs::directory_iterator(dataset_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".txt")
        headers.push_back(entry.path());
    std::sort(headers.begin(), headers.end());
    if (headers.empty()) throw ConfigInvalid("no patient headers in " + dataset_dir);

    auto resolve = directory_resolver(dataset_dir);
    for (const auto& h : headers) {
      std::ifstream f(h);
      std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
      try {
        manifest.entries.push_back(parse_physionet_patient(text, resolve));
      } catch (const UnknownLabel&) {
        ++skipped_unknown;
      }
    }
    manifest.source = DatasetSource::PHYSIONET2022;
  } else if (format == "native") {
    fs::path src = fs::path(dataset_dir) / "manifest.csv";
    if (!fs::exists(src)) throw ConfigInvalid("no manifest.csv in " + dataset_dir);
    manifest = read_manifest(src.string());
  } else {
    throw ConfigInvalid("--format must be physionet2022 or native");
  }

  if (manifest.entries.empty()) throw ConfigInvalid("no labelled patients in " + dataset_dir);

  DatasetManifest rebased = rebase_manifest(manifest, out_path.parent_path().string());
  write_manifest(rebased, out_path.string());
  std::cout << "wrote " << rebased.entries.size() << " patients ("
            << rebased.recording_count() << " recordings) to " << out_manifest << "\n";
  if (skipped_unknown > 0) std::cout << "skipped " << skipped_unknown << " unknown-label patient(s)\n";
  return 0;
}

// --- pretrain / finetune -----------------------------------------------------------

struct InitFlags {
  std::string weights;  // empty = scratch init
  int classes = 2;
  std::string head = "softmax";
};

int run_train(const std::string& manifest_path, const std::string& out_dir, const NetFlags& netf,
              const PrepFlags& prepf, const TrainFlags& trf, const InitFlags* init, int threads) {
  DatasetManifest manifest = read_manifest(manifest_path);
  if (lower(trf.site) != "all") manifest = filter_site(manifest, parse_site_flag(trf.site));

  SplitSpec split;
  split.val_fraction = trf.val_frac;
  split.test_fraction = trf.test_frac;
  split.train_fraction = 1.0 - trf.val_frac - trf.test_frac;
  split.seed = trf.split_seed;
  SplitResult parts = patient_split(manifest, split);

  fs::create_directories(out_dir);
  write_config_txt((fs::path(out_dir) / "config.txt").string(), netf, prepf, &trf);
  for (auto [name, part] :
       {std::pair{"train.csv", &parts.train}, {"val.csv", &parts.val}, {"test.csv", &parts.test}}) {
    DatasetManifest rebased = rebase_manifest(*part, out_dir);
    write_manifest(rebased, (fs::path(out_dir) / name).string());
  }

  PreprocessOptions opts = prepf.to_options();
  auto train_examples = pipeline::preprocess_manifest(parts.train, opts, threads);
  auto val_examples = pipeline::preprocess_manifest(parts.val, opts, threads);
  train::TrainSet train_set = pipeline::to_train_set(train_examples, opts);
  train::TrainSet val_set = pipeline::to_train_set(val_examples, opts);

  model::NetworkConfig cfg = netf.to_config();
  model::Network net;
  if (init && !init->weights.empty()) {
    model::NetworkConfig source_cfg = cfg;
    source_cfg.num_classes = init->classes;
    source_cfg.head = init->head == "sigmoid" ? model::HeadKind::SIGMOID : model::HeadKind::SOFTMAX;
    source_cfg.validate();
    net = model::build_network(source_cfg, trf.seed);
    model::load_weights(net, init->weights);
    model::replace_head(net, cfg.num_classes, cfg.head, detail::mix_seed(trf.seed, 0x68656164));
    std::cout << "initialized trunk from " << init->weights << "\n";
  } else {
    net = model::build_network(cfg, trf.seed);
  }

  train::FitConfig fit_cfg;
  fit_cfg.batch_size = trf.batch;
  fit_cfg.max_epochs = trf.epochs;
  fit_cfg.patience = trf.patience;
  fit_cfg.schedule = {trf.lr, trf.lr_step, trf.lr_decay};
  fit_cfg.adam.lr = trf.lr;
  fit_cfg.shuffle_seed = trf.seed;
  fit_cfg.use_class_weights = !trf.no_class_weights;
  fit_cfg.on_epoch = [](const train::EpochStats& e) {
    std::printf("epoch %3d  lr %.2e  train %.4f  val %.4f  acc %.4f\n", e.epoch, e.lr, e.train_loss,
                e.val_loss, e.val_accuracy);
    std::fflush(stdout);
    return true;
  };

  train::History history = train::fit(net, train_set, val_set, fit_cfg);

  write_history_csv((fs::path(out_dir) / "history.csv").string(), history);
  model::save_weights(net, (fs::path(out_dir) / "best.weights").string());
  auto best = model::snapshot_weights(net);
  model::restore_weights(net, history.final_weights);
  model::save_weights(net, (fs::path(out_dir) / "final.weights").string());
  model::restore_weights(net, best);

  std::cout << "best epoch " << history.best_epoch << " (val loss " << history.best_val_loss << ")"
            << (history.early_stopped ? ", stopped early" : "") << "\n";
  std::cout << "run directory: " << out_dir << "\n";
  return 0;
}

// --- evaluate ----------------------------------------------------------------------

int run_evaluate(const std::string& manifest_path, const std::string& weights,
                 const std::string& out_dir, const NetFlags& netf, const PrepFlags& prepf,
                 const std::string& level, const std::string& site, const std::string& quality,
                 double threshold, int batch, int threads) {
  if (level != "patient" && level != "recording")
    throw ConfigInvalid("--level must be patient or recording");

  DatasetManifest manifest = read_manifest(manifest_path);
  PreprocessOptions opts = prepf.to_options();
  auto examples = pipeline::preprocess_manifest(manifest, opts, threads);

  if (lower(site) != "all") {
    const Site s = parse_site_flag(site);
    std::erase_if(examples, [&](const pipeline::Example& ex) { return ex.site != s; });
  }
  if (lower(quality) != "all") {
    auto q = quality_from_string(lower(quality));
    if (!q) throw ConfigInvalid("unknown quality '" + quality + "'");
    std::erase_if(examples, [&](const pipeline::Example& ex) { return ex.quality != *q; });
  }
  if (examples.empty()) throw EmptyDataset("no recordings left after site/quality filtering");

  model::NetworkConfig cfg = netf.to_config();
  model::Network net = model::build_network(cfg, 0);
  model::load_weights(net, weights);

  auto site_scores = pipeline::score_examples(net, examples, batch);

  std::vector<double> scores;
  std::vector<int> labels;
  eval::CohortReport rep;
  if (level == "patient") {
    auto patients = eval::aggregate_patients(site_scores);
    for (const auto& p : patients) {
      scores.push_back(p.score);
      labels.push_back(p.label);
    }
    rep.n_patients = static_cast<std::int64_t>(patients.size());
  } else {
    std::map<std::string, int> distinct;
    for (const auto& s : site_scores) {
      scores.push_back(s.score);
      labels.push_back(s.label);
      distinct.emplace(s.patient_id, 1);
    }
    rep.n_patients = static_cast<std::int64_t>(distinct.size());
  }
  rep.n_recordings = static_cast<std::int64_t>(site_scores.size());
  rep.confusion = eval::confusion(scores, labels, threshold);

  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();

  fs::create_directories(out_dir);
  if (has_pos && has_neg) {
    rep.auroc = eval::auroc(scores, labels);
    eval::write_curve_csv((fs::path(out_dir) / "roc.csv").string(), eval::roc_curve(scores, labels),
                          "fpr", "tpr");
    eval::write_curve_csv((fs::path(out_dir) / "pr.csv").string(), eval::pr_curve(scores, labels),
                          "recall", "precision");
  } else {
    // single-class selection: no ranking metrics, header-only curve files
    eval::write_curve_csv((fs::path(out_dir) / "roc.csv").string(), {}, "fpr", "tpr");
    eval::write_curve_csv((fs::path(out_dir) / "pr.csv").string(), {}, "recall", "precision");
  }
  eval::write_report_csv((fs::path(out_dir) / "report.csv").string(), rep);

  const std::string auroc_text = std::isnan(rep.auroc) ? "n/a" : std::to_string(rep.auroc);
  std::printf("%s-level  n=%lld  acc %.4f  sens %.4f  spec %.4f  auroc %s\n", level.c_str(),
              static_cast<long long>(level == "patient" ? rep.n_patients : rep.n_recordings),
              rep.confusion.accuracy(), rep.confusion.sensitivity(), rep.confusion.specificity(),
              auroc_text.c_str());
  std::cout << "reports in " << out_dir << "\n";
  return 0;
}

// --- synth -------------------------------------------------------------------------

int run_synth(const synth::CohortSpec& cohort, const std::string& out_dir) {
  DatasetManifest manifest = synth::generate_cohort(cohort);
  std::string manifest_path = synth::write_cohort(manifest, out_dir);
  std::size_t positives = 0;
  for (const auto& p : manifest.entries)
    if (p.label == Label::POSITIVE) ++positives;
  std::cout << "wrote " << manifest.entries.size() << " patients (" << positives << " positive, "
            << manifest.entries.size() - positives << " negative), "
            << manifest.recording_count() << " recordings\n";
  std::cout << "manifest: " << manifest_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phonocardiogram screening pipeline"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Convert a dataset directory to a native manifest");
  std::string prep_dir, prep_format = "physionet2022", prep_out;
  prepare->add_option("dataset_dir", prep_dir, "Input dataset directory")->required();
  prepare->add_option("out_manifest", prep_out, "Output manifest CSV path")->required();
  prepare->add_option("--format", prep_format, "Input layout: physionet2022 or native");

  // pretrain / finetune share almost everything
  NetFlags net_pre, net_fine;
  PrepFlags prep_pre, prep_fine;
  TrainFlags tr_pre, tr_fine;
  std::string manifest_pre, out_pre, manifest_fine, out_fine;
  int threads_pre = default_threads(), threads_fine = default_threads();
  InitFlags init;

  auto* pretrain = app.add_subcommand("pretrain", "Train the source-task model from scratch");
  pretrain->add_option("manifest", manifest_pre, "Training manifest CSV")->required();
  pretrain->add_option("out_dir", out_pre, "Run directory to create")->required();
  add_net_flags(pretrain, net_pre);
  add_prep_flags(pretrain, prep_pre);
  add_train_flags(pretrain, tr_pre);
  pretrain->add_option("--threads", threads_pre, "Worker threads for preprocessing")
      ->envname("PCGNET_THREADS");
  std::string config_pre;
  pretrain->add_option("--config", config_pre, "key=value file with defaults for this run");

  auto* finetune = app.add_subcommand("finetune", "Fine-tune from pretrained weights");
  finetune->add_option("manifest", manifest_fine, "Training manifest CSV")->required();
  finetune->add_option("out_dir", out_fine, "Run directory to create")->required();
  add_net_flags(finetune, net_fine);
  add_prep_flags(finetune, prep_fine);
  add_train_flags(finetune, tr_fine);
  finetune->add_option("--threads", threads_fine, "Worker threads for preprocessing")
      ->envname("PCGNET_THREADS");
  finetune->add_option("--init-weights", init.weights, "Weight file to initialize the trunk from")
      ->required();
  finetune->add_option("--init-classes", init.classes, "Class count of the source model");
  finetune->add_option("--init-head", init.head, "Head kind of the source model");
  std::string config_fine;
  finetune->add_option("--config", config_fine, "key=value file with defaults for this run");

  // evaluate
  NetFlags net_eval;
  PrepFlags prep_eval;
  std::string manifest_eval, weights_eval, out_eval;
  std::string level = "patient", site_eval = "all", quality_eval = "all";
  double threshold = 0.5;
  int batch_eval = 32, threads_eval = default_threads();

  auto* evaluate = app.add_subcommand("evaluate", "Score a manifest and write metric reports");
  evaluate->add_option("manifest", manifest_eval, "Manifest CSV to evaluate")->required();
  evaluate->add_option("out_dir", out_eval, "Directory for report.csv/roc.csv/pr.csv")->required();
  evaluate->add_option("--weights", weights_eval, "Weight file to load")->required();
  add_net_flags(evaluate, net_eval);
  add_prep_flags(evaluate, prep_eval);
  evaluate->add_option("--level", level, "Aggregation level: patient or recording");
  evaluate->add_option("--site", site_eval, "Restrict to one site (AV|MV|PV|TV|all)");
  evaluate->add_option("--quality", quality_eval,
                       "Restrict by quality (satisfactory|unsatisfactory|all)");
  evaluate->add_option("--threshold", threshold, "Decision threshold on positive probability");
  evaluate->add_option("--batch", batch_eval, "Scoring batch size");
  evaluate->add_option("--threads", threads_eval, "Worker threads for preprocessing")
      ->envname("PCGNET_THREADS");
  std::string config_eval;
  evaluate->add_option("--config", config_eval, "key=value file with defaults for this run");

  // synth
  synth::CohortSpec cohort;
  std::string synth_out, synth_sites = "AV,MV,PV,TV", synth_murmur = "systolic";
  auto* synthc = app.add_subcommand("synth", "Generate a synthetic labelled cohort");
  synthc->add_option("out_dir", synth_out, "Directory for WAVs + manifest")->required();
  synthc->add_option("--patients", cohort.n_patients, "Number of patients");
  synthc->add_option("--positive", cohort.positive_fraction, "Positive-class fraction");
  synthc->add_option("--sites", synth_sites, "Comma-separated auscultation sites");
  synthc->add_option("--hr", cohort.base.heart_rate_bpm, "Base heart rate (bpm)");
  synthc->add_option("--murmur", synth_murmur, "Murmur phase for positives: systolic or diastolic");
  synthc->add_option("--band-low", cohort.base.murmur_band_low_hz, "Murmur band low edge (Hz)");
  synthc->add_option("--band-high", cohort.base.murmur_band_high_hz, "Murmur band high edge (Hz)");
  synthc->add_option("--snr", cohort.base.snr_db, "Signal-to-noise ratio (dB)");
  synthc->add_option("--duration", cohort.base.duration_s, "Recording length (s)");
  synthc->add_option("--rate", cohort.base.fs_hz, "Sample rate (Hz)");
  synthc->add_option("--seed", cohort.seed, "Cohort seed");
  synthc->add_option("--prefix", cohort.id_prefix, "Patient id prefix");
  synthc->add_flag("--alternate-corruption", cohort.alternate_corruption,
                   "Degrade alternating sites per patient and flag them unsatisfactory");
  synthc->add_option("--corrupted-snr", cohort.corrupted_snr_db, "SNR (dB) of degraded sites");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(app, args);
    std::reverse(args.begin(), args.end());  // the vector overload wants them reversed
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (prepare->parsed()) return run_prepare(prep_dir, prep_format, prep_out);
    if (pretrain->parsed())
      return run_train(manifest_pre, out_pre, net_pre, prep_pre, tr_pre, nullptr, threads_pre);
    if (finetune->parsed())
      return run_train(manifest_fine, out_fine, net_fine, prep_fine, tr_fine, &init, threads_fine);
    if (evaluate->parsed())
      return run_evaluate(manifest_eval, weights_eval, out_eval, net_eval, prep_eval, level,
                          site_eval, quality_eval, threshold, batch_eval, threads_eval);
    if (synthc->parsed()) {
      if (synth_murmur == "systolic") cohort.base.murmur = synth::Murmur::SYSTOLIC;
      else if (synth_murmur == "diastolic") cohort.base.murmur = synth::Murmur::DIASTOLIC;
      else throw ConfigInvalid("--murmur must be systolic or diastolic");
      cohort.sites.clear();
      std::stringstream ss(synth_sites);
      std::string tok;
      while (std::getline(ss, tok, ',')) cohort.sites.push_back(parse_site_flag(tok));
      return run_synth(cohort, synth_out);
    }
  } catch (const FingerprintMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const CorruptFile& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const EmptyDataset& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const EmptySite& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const EmptyGroup& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
