// Command-line driver for training, evaluating, and exploring gamma belief
// networks on count, binary, and nonnegative-real data.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "gbn/corpus.hpp"
#include "gbn/evaluation.hpp"
#include "gbn/exploration.hpp"
#include "gbn/inference.hpp"
#include "gbn/model.hpp"
#include "gbn/training.hpp"

namespace {

using namespace gbn;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitModel = 4;

struct CommonOptions {
  std::string data_path;
  std::string format = "uci";
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;
};

using Observations = std::variant<SparseCountMatrix, DenseNonnegMatrix>;

Observations load_observations(const std::string& path, const std::string& format,
                               LinkType link) {
  if (format == "uci") {
    if (link == LinkType::kPrg) {
      throw ConfigError("the prg link needs dense real data (--format csv)");
    }
    return load_uci_bow(path).second;
  }
  if (format == "csv") {
    if (link != LinkType::kPrg) {
      throw ConfigError("count and binary links need UCI bag-of-words data (--format uci)");
    }
    return load_dense_csv(path);
  }
  throw ConfigError("unknown data format '" + format + "' (expected uci or csv)");
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    if (field.empty()) continue;
    try {
      out.push_back(std::stod(field));
    } catch (const std::exception&) {
      throw ConfigError("bad numeric list entry '" + field + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty numeric list");
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (double x : parse_double_list(text)) out.push_back(static_cast<int>(x));
  return out;
}

TreeNode parse_node(const std::string& text) {
  const auto sep = text.find_first_of(":" );
  if (sep == std::string::npos) {
    throw ConfigError("node must be written layer:index, e.g. 2:1");
  }
  try {
    const int layer = std::stoi(text.substr(0, sep));
    const int index = std::stoi(text.substr(sep + 1));
    if (layer < 1 || index < 1) throw ConfigError("node layer and index are 1-based");
    return TreeNode{layer, index - 1};
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("bad node '" + text + "' (expected layer:index)");
  }
}

std::vector<TreeNode> parse_node_list(const std::string& text) {
  std::vector<TreeNode> out;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    if (!field.empty()) out.push_back(parse_node(field));
  }
  if (out.empty()) throw ConfigError("empty node list");
  return out;
}

// The fully resolved option set of a subcommand, echoed into every artifact.
std::string resolved_config(const CLI::App* cmd) {
  std::ostringstream out;
  out << "command=" << cmd->get_name() << "\n";
  for (const CLI::Option* opt : cmd->get_options()) {
    if (opt->get_name().rfind("--", 0) != 0) continue;
    const std::string name = opt->get_name().substr(2);
    if (name == "help" || name == "config") continue;
    std::string value;
    if (!opt->results().empty()) {
      for (const auto& r : opt->results()) {
        if (!value.empty()) value += ",";
        value += r;
      }
    } else {
      value = opt->get_default_str();
    }
    out << name << "=" << value << "\n";
  }
  return out.str();
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << body;
}

std::string comment_block(const std::string& config, const std::string& prefix = "# ") {
  std::istringstream in(config);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out << prefix << line << "\n";
  }
  return out.str();
}

Vocabulary vocabulary_for(const GbnNetwork& net, const std::string& vocab_path) {
  if (vocab_path.empty()) return Vocabulary::placeholder(net.data_dim());
  Vocabulary vocab = load_vocabulary(vocab_path);
  if (vocab.size() != net.data_dim()) {
    throw DataError("vocabulary size " + std::to_string(vocab.size()) +
                    " does not match the model's data dimension " +
                    std::to_string(net.data_dim()));
  }
  return vocab;
}

// Weight-rank view per layer: more popular nodes get smaller ranks.
std::vector<int> rank_by_weight(const Vector& weights) {
  std::vector<int> order(weights.size());
  for (int i = 0; i < weights.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (weights[a] != weights[b]) return weights[a] > weights[b];
    return a < b;
  });
  std::vector<int> rank(weights.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<int>(i) + 1;
  return rank;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  CommonOptions common;
  std::string link_name = "count";
  int k1max = 100;
  int tmax = 1;
  std::string eta = "0.05";
  std::string b_iters = "1000";
  std::string c_iters = "500";
  double a0 = 0.01, b0 = 0.01, e0 = 1.0, f0 = 1.0;
  std::int64_t min_top_count = 10;
  std::string layer1 = "collapsed";
};

int cmd_train(const TrainArgs& args, const CLI::App* cmd) {
  const LinkType link = link_from_name(args.link_name);
  Hyperparams hyper;
  hyper.eta = parse_double_list(args.eta);
  hyper.a0 = args.a0;
  hyper.b0 = args.b0;
  hyper.e0 = args.e0;
  hyper.f0 = args.f0;
  hyper.validate();

  TrainSchedule schedule;
  schedule.t_max = args.tmax;
  schedule.k1max = args.k1max;
  schedule.b = parse_int_list(args.b_iters);
  schedule.c = parse_int_list(args.c_iters);
  schedule.seed = args.common.seed;
  schedule.min_top_count = args.min_top_count;
  schedule.validate();

  SweepOptions sweep;
  sweep.threads = args.common.threads;
  if (args.layer1 == "explicit") {
    sweep.layer1 = Layer1Mode::kExplicit;
  } else if (args.layer1 != "collapsed") {
    throw ConfigError("--layer1 must be collapsed or explicit");
  }

  const std::string config = resolved_config(cmd);
  std::ofstream log(args.common.out + ".train.log");
  if (!log) throw DataError("cannot write " + args.common.out + ".train.log");
  {
    nlohmann::json j;
    j["event"] = "config";
    j["resolved"] = config;
    log << j.dump() << "\n";
  }
  auto sink = [&log](const TrainLogRecord& r) {
    nlohmann::json j;
    j["event"] = r.event;
    j["depth"] = r.depth;
    j["iteration"] = r.iteration;
    j["widths"] = r.widths;
    j["layer_totals"] = r.layer_totals;
    if (r.event == "sweep") j["seconds"] = r.seconds;
    if (r.event == "snapshot") j["c_median"] = r.c_median;
    log << j.dump() << "\n";
  };

  const Observations data = load_observations(args.common.data_path, args.common.format, link);
  TrainResult result;
  if (std::holds_alternative<SparseCountMatrix>(data)) {
    result = train_layerwise(std::get<SparseCountMatrix>(data), link, hyper, schedule,
                             sweep, sink);
  } else {
    result = train_layerwise(std::get<DenseNonnegMatrix>(data), link, hyper, schedule,
                             sweep, sink);
  }

  for (std::size_t i = 0; i < result.snapshots.size(); ++i) {
    const std::string path =
        args.common.out + ".t" + std::to_string(i + 1) + ".model.json";
    save_network(result.snapshots[i], path);
    nlohmann::json j;
    j["event"] = "model";
    j["depth"] = i + 1;
    j["path"] = path;
    j["widths"] = result.snapshots[i].widths();
    log << j.dump() << "\n";
    std::cout << "wrote " << path << " widths=[";
    const auto widths = result.snapshots[i].widths();
    for (std::size_t t = 0; t < widths.size(); ++t) {
      std::cout << (t ? "," : "") << widths[t];
    }
    std::cout << "]\n";
  }
  for (const auto& warning : result.warnings) {
    nlohmann::json j;
    j["event"] = "warning";
    j["message"] = warning;
    log << j.dump() << "\n";
    std::cerr << "warning: " << warning << "\n";
  }
  return kExitOk;
}

struct PerplexityArgs {
  CommonOptions common;
  std::string model_path;
  std::string heldout_path;
  double fraction = 0.3;
  int burnin = 500;
  int collect = 500;
  int thin = 5;
};

int cmd_perplexity(const PerplexityArgs& args, const CLI::App* cmd) {
  const GbnNetwork net = load_network(args.model_path);
  if (net.link != LinkType::kCount) {
    throw ConfigError("perplexity evaluation needs a count-link model");
  }
  auto [vocab, matrix] = load_uci_bow(args.common.data_path);
  (void)vocab;
  if (matrix.rows() != net.data_dim()) {
    throw ConfigError("data dimension does not match the model");
  }
  HeldoutSplit split;
  if (!args.heldout_path.empty()) {
    split.train = matrix;
    split.heldout = load_uci_bow(args.heldout_path).second;
    split.fraction = args.fraction;
    if (split.heldout.rows() != net.data_dim() || split.heldout.cols() != matrix.cols()) {
      throw DataError("held-out matrix dimensions do not match the training matrix");
    }
  } else {
    RngStream split_rng(args.common.seed, 0x5B);
    split = split_tokens(matrix, args.fraction, split_rng);
  }

  SweepOptions sweep;
  sweep.threads = args.common.threads;
  const auto report = heldout_perplexity(net, split, args.burnin, args.collect, args.thin,
                                         sweep, RngStream(args.common.seed, 0x9E));

  std::ofstream out(args.common.out);
  if (!out) throw DataError("cannot write " + args.common.out);
  {
    nlohmann::json j;
    j["event"] = "config";
    j["resolved"] = resolved_config(cmd);
    out << j.dump() << "\n";
  }
  for (std::size_t s = 0; s < report.per_sample.size(); ++s) {
    nlohmann::json j;
    j["event"] = "sample";
    j["index"] = s + 1;
    j["perplexity"] = report.per_sample[s];
    out << j.dump() << "\n";
  }
  nlohmann::json j;
  j["event"] = "summary";
  j["perplexity"] = report.perplexity;
  j["samples"] = report.samples;
  j["burnin"] = report.burnin;
  j["thin"] = report.thin;
  j["train_tokens"] = split.train.total();
  j["heldout_tokens"] = split.heldout.total();
  out << j.dump() << "\n";
  std::cout << "per-heldout-word perplexity " << report.perplexity << " (" << report.samples
            << " samples)\n";
  return kExitOk;
}

struct FeaturesArgs {
  CommonOptions common;
  std::string model_path;
  int burnin = 500;
  int collect = 500;
};

int cmd_features(const FeaturesArgs& args, const CLI::App* cmd) {
  const GbnNetwork net = load_network(args.model_path);
  const Observations data =
      load_observations(args.common.data_path, args.common.format, net.link);
  if ((std::holds_alternative<SparseCountMatrix>(data)
           ? std::get<SparseCountMatrix>(data).rows()
           : std::get<DenseNonnegMatrix>(data).rows()) != net.data_dim()) {
    throw ConfigError("data dimension does not match the model");
  }
  SweepOptions sweep;
  sweep.threads = args.common.threads;
  FeatureMatrix features;
  if (std::holds_alternative<SparseCountMatrix>(data)) {
    features = extract_features(net, std::get<SparseCountMatrix>(data), args.burnin,
                                args.collect, sweep, RngStream(args.common.seed, 0xFE));
  } else {
    features = extract_features(net, std::get<DenseNonnegMatrix>(data), args.burnin,
                                args.collect, sweep, RngStream(args.common.seed, 0xFE));
  }

  std::ostringstream out;
  out << comment_block(resolved_config(cmd));
  if (!features.empty_docs.empty()) {
    out << "# empty_documents:";
    for (int j : features.empty_docs) out << " " << (j + 1);
    out << "\n";
  }
  out << "doc";
  for (int k = 0; k < features.proportions.cols(); ++k) out << "," << (k + 1);
  out << "\n";
  out.precision(12);
  for (int j = 0; j < features.proportions.rows(); ++j) {
    out << (j + 1);
    for (int k = 0; k < features.proportions.cols(); ++k) {
      out << "," << features.proportions(j, k);
    }
    out << "\n";
  }
  write_text_file(args.common.out, out.str());
  std::cout << "wrote " << args.common.out << " (" << features.proportions.rows()
            << " documents x " << features.proportions.cols() << " factors)\n";
  return kExitOk;
}

struct TreeArgs {
  CommonOptions common;
  std::string model_path;
  std::string roots;
  std::string tau = "1.0";
  std::string vocab_path;
  int top_words = 12;
};

int cmd_tree(const TreeArgs& args, const CLI::App* cmd, bool subnetwork) {
  const GbnNetwork net = load_network(args.model_path);
  const Vocabulary vocab = vocabulary_for(net, args.vocab_path);
  const std::vector<TreeNode> roots = parse_node_list(args.roots);
  if (!subnetwork && roots.size() != 1) {
    throw ConfigError("tree takes exactly one --root node; use subnetwork for several");
  }
  const auto spec = extract_subnetwork(net, roots, parse_double_list(args.tau));

  // Projections and weight-rank views per layer touched by the tree.
  std::vector<ProjectedFactors> projected(net.depth() + 1);
  std::vector<std::vector<int>> ranks(net.depth() + 1);
  for (int t = 1; t <= net.depth(); ++t) {
    projected[t] = project(net, t);
    ranks[t] = rank_by_weight(projected[t].weights);
  }

  auto labeler = [&](const TreeNode& node) {
    std::string label = std::to_string(node.layer) + ":" + std::to_string(node.index + 1) +
                        " (rank " + std::to_string(ranks[node.layer][node.index]) + ")";
    const auto terms = top_terms(projected[node.layer], node.index,
                                 std::min(args.top_words, 4));
    label += "\n";
    for (std::size_t i = 0; i < terms.size(); ++i) {
      label += (i ? " " : "") + vocab.terms[terms[i]];
    }
    return label;
  };

  const std::string config = resolved_config(cmd);
  write_text_file(args.common.out, to_dot(spec, labeler, config));
  write_text_file(args.common.out + ".json", tree_to_json(spec, net));

  std::ostringstream words;
  words << comment_block(config);
  for (const auto& node : spec.nodes) {
    words << "layer " << node.layer << " node " << (node.index + 1) << " rank "
          << ranks[node.layer][node.index] << " weight "
          << projected[node.layer].weights[node.index] << " :";
    for (int term : top_terms(projected[node.layer], node.index, args.top_words)) {
      words << " " << vocab.terms[term];
    }
    words << "\n";
  }
  write_text_file(args.common.out + ".words.txt", words.str());
  std::cout << "wrote " << args.common.out << " (+.json, +.words.txt) with "
            << spec.nodes.size() << " nodes and " << spec.edges.size() << " edges\n";
  return kExitOk;
}

struct GenerateArgs {
  CommonOptions common;
  std::string model_path;
  int num_docs = 10;
  std::string c_median;
  std::string vocab_path;
  int top_words = 12;
  bool no_counts = false;
};

int cmd_generate(const GenerateArgs& args, const CLI::App* cmd) {
  const GbnNetwork net = load_network(args.model_path);
  const Vocabulary vocab = vocabulary_for(net, args.vocab_path);
  std::vector<double> c_levels;
  if (!args.c_median.empty()) c_levels = parse_double_list(args.c_median);
  RngStream rng(args.common.seed, 0x6E);
  const auto docs = generate_synthetic(net, args.num_docs, c_levels, rng);

  std::ostringstream out;
  out << comment_block(resolved_config(cmd));
  out.precision(6);
  for (int j = 0; j < docs.rates.cols(); ++j) {
    out << "doc " << (j + 1) << " total_rate " << docs.rates.col(j).sum() << " :";
    ProjectedFactors rates_as_factors;
    rates_as_factors.layer = 1;
    rates_as_factors.matrix = docs.rates;
    for (int term : top_terms(rates_as_factors, j, args.top_words)) {
      out << " " << vocab.terms[term];
    }
    out << "\n";
  }
  write_text_file(args.common.out, out.str());
  if (net.link == LinkType::kCount && !args.no_counts) {
    save_uci_bow(docs.counts, args.common.out + ".bow");
  }
  std::cout << "wrote " << args.common.out << " (" << docs.rates.cols() << " documents)\n";
  return kExitOk;
}

void add_common(CLI::App* cmd, CommonOptions& common, bool needs_data) {
  if (needs_data) {
    cmd->add_option("--data", common.data_path, "input data file")->required();
    cmd->add_option("--format", common.format, "data format: uci or csv")
        ->default_str("uci");
  }
  cmd->add_option("--seed", common.seed, "random seed")->default_str("0");
  cmd->add_option("--threads", common.threads, "worker threads (>1 voids bit-exact runs)")
      ->default_str("1");
  cmd->add_option("--out", common.out, "output path or prefix")->required();
  cmd->add_option("--config", "read flat key=value options from a file "
                              "(command-line flags take precedence)");
}

// Expands "--config FILE" into option tokens for keys the command line does
// not already carry, so that flags beat config values beat defaults.
std::vector<std::string> expand_config_args(const std::vector<std::string>& args) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    }
  }
  if (config_path.empty()) return args;
  std::ifstream in(config_path);
  if (!in) throw ConfigError("cannot open config file " + config_path);
  std::vector<std::string> expanded = args;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config file line " + std::to_string(lineno) +
                        ": expected key=value");
    }
    std::string key = line.substr(first, eq - first);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    const auto vfirst = value.find_first_not_of(" \t");
    value = (vfirst == std::string::npos) ? "" : value.substr(vfirst);
    if (key.empty()) {
      throw ConfigError("config file line " + std::to_string(lineno) + ": empty key");
    }
    const std::string flag = "--" + key;
    bool on_command_line = false;
    for (const auto& a : args) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) {
        on_command_line = true;
        break;
      }
    }
    if (on_command_line) continue;
    if (value == "true" || value == "yes") {
      expanded.push_back(flag);  // bare switch
    } else if (value == "false" || value == "no") {
      continue;
    } else {
      expanded.push_back(flag);
      if (!value.empty()) expanded.push_back(value);
    }
  }
  return expanded;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gamma belief network trainer and toolkit"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "layer-wise training with width inference");
  add_common(train, train_args.common, true);
  train->add_option("--link", train_args.link_name, "link: count, binary, or prg")
      ->default_str("count");
  train->add_option("--k1max", train_args.k1max, "first-layer width budget")->required();
  train->add_option("--tmax", train_args.tmax, "maximum depth")->default_str("1");
  train->add_option("--eta", train_args.eta, "Dirichlet concentration per layer")
      ->default_str("0.05");
  train->add_option("--b", train_args.b_iters, "pre-prune iterations per layer")
      ->default_str("1000");
  train->add_option("--c", train_args.c_iters, "post-prune iterations per layer")
      ->default_str("500");
  train->add_option("--a0", train_args.a0)->default_str("0.01");
  train->add_option("--b0", train_args.b0)->default_str("0.01");
  train->add_option("--e0", train_args.e0)->default_str("1");
  train->add_option("--f0", train_args.f0)->default_str("1");
  train->add_option("--min-top-count", train_args.min_top_count,
                    "depth early-stop floor on the top-layer count total (0 disables)")
      ->default_str("10");
  train->add_option("--layer1", train_args.layer1,
                    "count-link layer-1 sampling: collapsed or explicit")
      ->default_str("collapsed");

  PerplexityArgs perplexity_args;
  CLI::App* perplexity =
      app.add_subcommand("perplexity", "held-out word perplexity of a trained model");
  add_common(perplexity, perplexity_args.common, true);
  perplexity->add_option("--model", perplexity_args.model_path, "model file")->required();
  perplexity->add_option("--heldout", perplexity_args.heldout_path,
                         "held-out matrix (then --data is the training matrix)");
  perplexity->add_option("--fraction", perplexity_args.fraction,
                         "train fraction for the token split")
      ->default_str("0.3");
  perplexity->add_option("--burnin", perplexity_args.burnin)->default_str("500");
  perplexity->add_option("--collect", perplexity_args.collect)->default_str("500");
  perplexity->add_option("--thin", perplexity_args.thin)->default_str("5");

  FeaturesArgs features_args;
  CLI::App* features =
      app.add_subcommand("features", "posterior-mean feature proportions per document");
  add_common(features, features_args.common, true);
  features->add_option("--model", features_args.model_path, "model file")->required();
  features->add_option("--burnin", features_args.burnin)->default_str("500");
  features->add_option("--collect", features_args.collect)->default_str("500");

  TreeArgs tree_args;
  CLI::App* tree = app.add_subcommand("tree", "extract a tree rooted at one node");
  add_common(tree, tree_args.common, false);
  tree->add_option("--model", tree_args.model_path, "model file")->required();
  tree->add_option("--root", tree_args.roots, "root node as layer:index (1-based)")
      ->required();
  tree->add_option("--tau", tree_args.tau, "per-layer threshold factors")->default_str("1.0");
  tree->add_option("--vocab", tree_args.vocab_path, "vocabulary file (one term per line)");
  tree->add_option("--top-words", tree_args.top_words)->default_str("12");

  TreeArgs subnetwork_args;
  CLI::App* subnetwork =
      app.add_subcommand("subnetwork", "union of trees rooted at several nodes");
  add_common(subnetwork, subnetwork_args.common, false);
  subnetwork->add_option("--model", subnetwork_args.model_path, "model file")->required();
  subnetwork->add_option("--roots", subnetwork_args.roots,
                         "comma-separated root nodes, e.g. 3:1,3:2")
      ->required();
  subnetwork->add_option("--tau", subnetwork_args.tau, "per-layer threshold factors")
      ->default_str("1.0");
  subnetwork->add_option("--vocab", subnetwork_args.vocab_path, "vocabulary file");
  subnetwork->add_option("--top-words", subnetwork_args.top_words)->default_str("12");

  GenerateArgs generate_args;
  CLI::App* generate =
      app.add_subcommand("generate", "draw synthetic documents from a trained model");
  add_common(generate, generate_args.common, false);
  generate->add_option("--model", generate_args.model_path, "model file")->required();
  generate->add_option("--num-docs", generate_args.num_docs)->default_str("10");
  generate->add_option("--c-median", generate_args.c_median,
                       "per-layer c scales (overrides stored medians)");
  generate->add_option("--vocab", generate_args.vocab_path, "vocabulary file");
  generate->add_option("--top-words", generate_args.top_words)->default_str("12");
  generate->add_flag("--no-counts", generate_args.no_counts,
                     "skip writing the sampled count matrix");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config_args(args);
    // CLI11 consumes the vector form in reverse order.
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (train->parsed()) return cmd_train(train_args, train);
    if (perplexity->parsed()) return cmd_perplexity(perplexity_args, perplexity);
    if (features->parsed()) return cmd_features(features_args, features);
    if (tree->parsed()) return cmd_tree(tree_args, tree, false);
    if (subnetwork->parsed()) return cmd_tree(subnetwork_args, subnetwork, true);
    if (generate->parsed()) return cmd_generate(generate_args, generate);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ModelFormatError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return kExitModel;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}
