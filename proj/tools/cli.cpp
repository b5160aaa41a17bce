#include "cli.hpp"

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ocpad/error.hpp"
#include "ocpad/pipeline.hpp"
#include "ocpad/serialization.hpp"

namespace ocpad::cli {

namespace {

namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Missing inputs are reported as configuration errors (exit 2).
class MissingInput : public Error {
 public:
  using Error::Error;
};

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw MissingInput(std::string("missing ") + what + " file '" + path + "'");
}

std::vector<std::string> split_channels(const std::string& list) {
  std::vector<std::string> names;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ','))
    if (!name.empty()) names.push_back(name);
  if (names.empty()) throw ConfigError("--channels needs at least one channel name");
  return names;
}

std::string join(const std::vector<std::string>& names, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) out += (i ? sep : "") + names[i];
  return out;
}

struct SplitArgs {
  std::string protocol = "grandtest";
  std::uint64_t split_seed = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--protocol", protocol, "grandtest | unseen_family_A | unseen_family_B | unseen_family:<tag> | "
                                            "leave_one_out:<type>")
        ->capture_default_str();
    cmd->add_option("--split-seed", split_seed, "Seed of the identity fold assignment")->capture_default_str();
  }
  ProtocolSplit split(const Dataset& data) const {
    return split_protocol(data, ProtocolSpec::parse(protocol), split_seed);
  }
};

void print_resolved(std::ostream& err, const nlohmann::json& resolved) {
  err << "resolved config: " << resolved.dump() << "\n";
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"One-class presentation attack detection toolkit", "ocpad"};
  app.require_subcommand(1);

  // gen-data
  std::string gen_config, gen_out;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic multi-channel dataset");
  gen->add_option("--config", gen_config, "Generator config (JSON)")->required();
  gen->add_option("--out", gen_out, "Output dataset (.ocds)")->required();

  // train
  std::string train_data, train_config, train_out, train_channels;
  SplitArgs train_split;
  auto* trn = app.add_subcommand("train", "Train the embedding network on the train fold");
  trn->add_option("--data", train_data, "Dataset (.ocds)")->required();
  trn->add_option("--config", train_config, "Train config (JSON); defaults when omitted");
  trn->add_option("--channels", train_channels, "Comma-separated channel subset");
  trn->add_option("--out", train_out, "Output checkpoint (.ocnn)")->required();
  train_split.add_to(trn);

  // embed
  std::string embed_model, embed_data, embed_out;
  auto* emb = app.add_subcommand("embed", "Write embeddings of every sample as CSV");
  emb->add_option("--model", embed_model, "Checkpoint (.ocnn)")->required();
  emb->add_option("--data", embed_data, "Dataset (.ocds)")->required();
  emb->add_option("--out", embed_out, "Output CSV")->required();

  // fit-gmm
  std::string fit_model, fit_data, fit_config, fit_out;
  SplitArgs fit_split;
  auto* fit = app.add_subcommand("fit-gmm", "Fit the one-class GMM on train-fold bonafide embeddings");
  fit->add_option("--model", fit_model, "Checkpoint (.ocnn)")->required();
  fit->add_option("--data", fit_data, "Dataset (.ocds)")->required();
  fit->add_option("--config", fit_config, "EM config (JSON); defaults when omitted");
  fit->add_option("--out", fit_out, "Output GMM (.ocgm)")->required();
  fit_split.add_to(fit);

  // eval / det share their inputs
  std::string ev_model, ev_gmm, ev_data, ev_out, ev_table;
  double ev_target = 0.01;
  SplitArgs ev_split;
  auto* ev = app.add_subcommand("eval", "Evaluate APCER/BPCER/ACER at the dev BPCER threshold");
  ev->add_option("--model", ev_model, "Checkpoint (.ocnn)")->required();
  ev->add_option("--gmm", ev_gmm, "GMM (.ocgm)")->required();
  ev->add_option("--data", ev_data, "Dataset (.ocds)")->required();
  ev->add_option("--target-bpcer", ev_target, "Dev BPCER used to pick the threshold")->capture_default_str();
  ev->add_option("--out", ev_out, "Output report (JSON)")->required();
  ev->add_option("--table", ev_table, "Also write the text table here");
  ev_split.add_to(ev);

  std::string det_model, det_gmm, det_data, det_out;
  SplitArgs det_split;
  auto* det = app.add_subcommand("det", "Write eval-set DET points as CSV");
  det->add_option("--model", det_model, "Checkpoint (.ocnn)")->required();
  det->add_option("--gmm", det_gmm, "GMM (.ocgm)")->required();
  det->add_option("--data", det_data, "Dataset (.ocds)")->required();
  det->add_option("--out", det_out, "Output CSV")->required();
  det_split.add_to(det);

  // run-protocol
  std::string run_config, run_out, run_protocol_name;
  std::vector<std::string> run_channels;
  auto* run = app.add_subcommand("run-protocol", "generate -> train -> fit-gmm -> evaluate");
  run->add_option("--config", run_config, "Run config (JSON)")->required();
  run->add_option("--protocol", run_protocol_name, "Override the config's protocol");
  run->add_option("--channels", run_channels, "Channel subset; repeat for several subsets");
  run->add_option("--out", run_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code != 0) {
      err << app.help();
      return kExitConfig;
    }
    return 0;
  }

  try {
    if (*gen) {
      require_file(gen_config, "generator config");
      const GeneratorConfig cfg = generator_config_from_json(read_json_file(gen_config));
      print_resolved(err, to_json(cfg));
      save_dataset(generate_synthetic(cfg), gen_out);
      out << gen_out << "\n";
    } else if (*trn) {
      require_file(train_data, "dataset");
      TrainConfig cfg;
      if (!train_config.empty()) {
        require_file(train_config, "train config");
        cfg = train_config_from_json(read_json_file(train_config));
      }
      if (!train_channels.empty()) cfg.channel_subset = split_channels(train_channels);
      cfg.validate();
      const Dataset data = load_dataset(train_data);
      print_resolved(err, {{"train", to_json(cfg)}, {"protocol", train_split.protocol}, {"split_seed", train_split.split_seed}});
      save_checkpoint(train(train_split.split(data), data, cfg), train_out);
      out << train_out << "\n";
    } else if (*emb) {
      require_file(embed_model, "checkpoint");
      require_file(embed_data, "dataset");
      const Checkpoint ckpt = load_checkpoint(embed_model);
      const Dataset data = load_dataset(embed_data);
      print_resolved(err, {{"network", to_json(ckpt.network)}});
      write_text_file(embed_out, format_embeddings_csv(extract_embeddings(ckpt, data, all_sample_ids(data))));
      out << embed_out << "\n";
    } else if (*fit) {
      require_file(fit_model, "checkpoint");
      require_file(fit_data, "dataset");
      EmConfig cfg;
      if (!fit_config.empty()) {
        require_file(fit_config, "EM config");
        cfg = em_config_from_json(read_json_file(fit_config));
      }
      cfg.validate();
      print_resolved(err, {{"em", to_json(cfg)}, {"protocol", fit_split.protocol}, {"split_seed", fit_split.split_seed}});
      const Checkpoint ckpt = load_checkpoint(fit_model);
      const Dataset data = load_dataset(fit_data);
      save_gmm(fit_one_class(ckpt, fit_split.split(data), data, cfg).gmm, fit_out);
      out << fit_out << "\n";
    } else if (*ev) {
      require_file(ev_model, "checkpoint");
      require_file(ev_gmm, "GMM");
      require_file(ev_data, "dataset");
      if (!(ev_target > 0.0 && ev_target < 1.0)) throw ConfigError("--target-bpcer must lie in (0,1)");
      print_resolved(err, {{"protocol", ev_split.protocol}, {"split_seed", ev_split.split_seed}, {"target_bpcer", ev_target}});
      const Checkpoint ckpt = load_checkpoint(ev_model);
      const GmmParams gmm = load_gmm(ev_gmm);
      const Dataset data = load_dataset(ev_data);
      const MetricsReport report = evaluate(ckpt, gmm, ev_split.split(data), data, ev_target);
      write_text_file(ev_out, to_json(report).dump(2) + "\n");
      out << ev_out << "\n";
      if (!ev_table.empty()) {
        write_text_file(ev_table, format_report_table(report));
        out << ev_table << "\n";
      }
    } else if (*det) {
      require_file(det_model, "checkpoint");
      require_file(det_gmm, "GMM");
      require_file(det_data, "dataset");
      print_resolved(err, {{"protocol", det_split.protocol}, {"split_seed", det_split.split_seed}});
      const Checkpoint ckpt = load_checkpoint(det_model);
      const GmmParams gmm = load_gmm(det_gmm);
      const Dataset data = load_dataset(det_data);
      const MetricsReport report = evaluate(ckpt, gmm, det_split.split(data), data);
      write_text_file(det_out, format_det_csv(report.det));
      out << det_out << "\n";
    } else if (*run) {
      require_file(run_config, "run config");
      RunConfig cfg = run_config_from_json(read_json_file(run_config));
      if (!run_protocol_name.empty()) {
        ProtocolSpec::parse(run_protocol_name);
        cfg.protocol = run_protocol_name;
      }
      std::vector<std::optional<std::vector<std::string>>> subsets;
      for (const auto& list : run_channels) subsets.emplace_back(split_channels(list));
      if (subsets.empty()) subsets.emplace_back(cfg.train.channel_subset);

      for (const auto& subset : subsets) {
        RunConfig one = cfg;
        one.train.channel_subset = subset;
        one.train.validate();
        fs::path dir = run_out;
        if (!run_channels.empty()) dir /= "channels_" + join(*subset, "+");
        print_resolved(err, to_json(one));
        for (const auto& path : run_protocol(one, dir).files) out << path.string() << "\n";
      }
    }
  } catch (const MissingInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}

}  // namespace ocpad::cli
