// SPDX-License-Identifier: Apache-2.0
//
// halow: command-line surface over the preamble synchronization toolkit.
// Subcommands: gen, train, eval, flops, simulate.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "halow/dataset.hpp"
#include "halow/eval.hpp"
#include "halow/models.hpp"
#include "halow/nn/train.hpp"
#include "halow/preamble.hpp"
#include "halow/sync.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using namespace halow;

/// HALOW_SEED overrides any --seed flag.
std::uint64_t effective_seed(std::uint64_t flag_seed) {
    if (const char* env = std::getenv("HALOW_SEED")) return std::strtoull(env, nullptr, 10);
    return flag_seed;
}

nlohmann::json provenance(std::uint64_t config_hash, std::uint64_t seed) {
    nlohmann::json p;
    p["config_hash"] = config_hash;
    p["seed"] = seed;
    p["version"] = kVersion;
    return p;
}

void print_provenance(const nlohmann::json& p) {
    std::cout << "provenance config_hash=" << p["config_hash"] << " seed=" << p["seed"]
              << " version=" << p["version"].get<std::string>() << "\n";
}

/// Mirrors schemas/runconfig.schema.json, the published contract for one
/// run of this tool; every command validates its assembled config here
/// before executing. Violations exit with the config-error code.
void validate_run_config(const nlohmann::json& rc) {
    auto in = [&](const char* key, std::initializer_list<const char*> allowed) {
        if (!rc.contains(key)) return;
        const auto v = rc.at(key).get<std::string>();
        for (const char* a : allowed)
            if (v == a) return;
        throw std::invalid_argument(std::string(key) + " must be one of the documented values, got " + v);
    };
    auto positive = [&](const char* key) {
        if (rc.contains(key) && rc.at(key).get<double>() < 1)
            throw std::invalid_argument(std::string(key) + " must be positive");
    };
    in("command", {"gen", "train", "eval", "flops", "simulate"});
    in("task", {"detection", "cfo"});
    in("channel", {"identity", "awgn", "multipath"});
    in("cell", {"dnn", "lstm", "gru"});
    in("method", {"conventional", "model", "both"});
    in("which", {"all", "detector", "dnn", "lstm", "gru", "conventional"});
    positive("n");
    positive("threads");
    positive("epochs");
    positive("batch");
    positive("rate");
    if (rc.contains("block")) {
        const auto b = rc.at("block").get<std::size_t>();
        const auto& ok = supported_block_lengths();
        if (std::find(ok.begin(), ok.end(), b) == ok.end())
            throw std::invalid_argument("block must be one of 40/80/160/320/800/1600");
    }
    if (rc.contains("snr_min_db") && rc.contains("snr_max_db") &&
        rc.at("snr_min_db").get<double>() > rc.at("snr_max_db").get<double>())
        throw std::invalid_argument("snr_min_db exceeds snr_max_db");
    if (rc.contains("cfo_max_hz") && rc.at("cfo_max_hz").get<double>() < 0)
        throw std::invalid_argument("cfo_max_hz must be non-negative");
    for (const char* key : {"threshold", "verify"})
        if (rc.contains(key)) {
            const double v = rc.at(key).get<double>();
            if (v <= 0.0 || v >= 1.0)
                throw std::invalid_argument(std::string(key) + " must lie in (0,1)");
        }
    for (const char* key : {"data", "out"})
        if (rc.contains(key) && rc.at(key).get<std::string>().empty())
            throw std::invalid_argument(std::string(key) + " must not be empty");
}

ChannelKind parse_channel(const std::string& s) {
    if (s == "identity") return ChannelKind::identity;
    if (s == "awgn") return ChannelKind::awgn_only;
    if (s == "multipath") return ChannelKind::multipath;
    throw std::invalid_argument("unknown channel kind: " + s);
}

struct CommonGenFlags {
    std::string task;
    std::size_t block = 40;
    std::size_t n = 10000;
    std::uint64_t seed = 0;
    double snr_min = 1.0, snr_max = 25.0, cfo_max = 15625.0;
    std::string channel = "awgn";
    bool detector_aligned = false;
    bool do_split = false;
    std::size_t threads = 1;
    std::string out;
};

GenConfig to_gen_config(const CommonGenFlags& f) {
    if (f.snr_min > f.snr_max) throw std::invalid_argument("--snr-min exceeds --snr-max");
    if (f.n == 0) throw std::invalid_argument("--n must be positive");
    GenConfig cfg;
    cfg.snr_min_db = f.snr_min;
    cfg.snr_max_db = f.snr_max;
    cfg.cfo_max_hz = f.cfo_max;
    cfg.channel = parse_channel(f.channel);
    cfg.detector_aligned = f.detector_aligned;
    return cfg;
}

int cmd_gen(const CommonGenFlags& f) {
    validate_run_config({{"command", "gen"},
                         {"task", f.task},
                         {"block", f.block},
                         {"n", f.n},
                         {"snr_min_db", f.snr_min},
                         {"snr_max_db", f.snr_max},
                         {"cfo_max_hz", f.cfo_max},
                         {"channel", f.channel},
                         {"threads", f.threads},
                         {"out", f.out}});
    const GenConfig cfg = to_gen_config(f);
    const std::uint64_t seed = effective_seed(f.seed);
    const auto prov = provenance(cfg.hash(), seed);

    if (f.task == "detection") {
        auto recs = gen_detection_set(f.n, f.block, cfg, seed, f.threads);
        save_detection_records(f.out, recs, static_cast<std::uint32_t>(f.block));
        save_manifest(f.out, "detection", f.n, static_cast<std::uint32_t>(f.block), seed, cfg,
                      {{"provenance", prov}});
        if (f.do_split) {
            auto parts = split_indices(recs.size(), {0.70, 0.15, 0.15}, derive_seed(seed, 0xC0));
            const char* names[3] = {".train", ".val", ".test"};
            for (int i = 0; i < 3; ++i) {
                std::vector<DetectionRecord> sub;
                for (auto idx : parts[i]) sub.push_back(recs[idx]);
                save_detection_records(f.out + names[i], sub,
                                       static_cast<std::uint32_t>(f.block));
                save_manifest(f.out + names[i], "detection", sub.size(),
                              static_cast<std::uint32_t>(f.block), seed, cfg,
                              {{"provenance", prov}, {"split", names[i] + 1}});
            }
        }
    } else if (f.task == "cfo") {
        auto recs = gen_cfo_set(f.n, cfg, seed, f.threads);
        save_cfo_records(f.out, recs);
        save_manifest(f.out, "cfo", f.n, 160, seed, cfg, {{"provenance", prov}});
        if (f.do_split) {
            auto parts = split_indices(recs.size(), {0.70, 0.15, 0.15}, derive_seed(seed, 0xC0));
            const char* names[3] = {".train", ".val", ".test"};
            for (int i = 0; i < 3; ++i) {
                std::vector<CfoRecord> sub;
                for (auto idx : parts[i]) sub.push_back(recs[idx]);
                save_cfo_records(f.out + names[i], sub);
                save_manifest(f.out + names[i], "cfo", sub.size(), 160, seed, cfg,
                              {{"provenance", prov}, {"split", names[i] + 1}});
            }
        }
    } else {
        throw std::invalid_argument("--task must be detection or cfo");
    }
    print_provenance(prov);
    return 0;
}

struct TrainFlags {
    std::string task;
    std::string data, val, out;
    std::string cell = "lstm";
    std::size_t epochs = 0, batch = 0;  // 0: per-task default
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

int cmd_train(const TrainFlags& f) {
    nlohmann::json rc{{"command", "train"}, {"task", f.task},       {"data", f.data},
                      {"cell", f.cell},     {"threads", f.threads}, {"out", f.out}};
    if (f.epochs) rc["epochs"] = f.epochs;
    if (f.batch) rc["batch"] = f.batch;
    validate_run_config(rc);
    const std::uint64_t seed = effective_seed(f.seed);
    nn::TrainConfig tc;
    tc.seed = seed;
    tc.threads = f.threads;

    std::ofstream losses(f.out + ".losses.csv", std::ios::trunc);
    losses << "epoch,train_loss,val_loss\n";
    tc.on_epoch = [&](std::size_t e, double tl, double vl) {
        losses << e << "," << tl << "," << vl << "\n";
        std::cerr << "epoch " << e << " train_loss " << tl << " val_loss " << vl << "\n";
    };

    nlohmann::json extra;
    extra["seed"] = seed;
    extra["data"] = f.data;

    if (f.task == "detection") {
        tc.epochs = f.epochs ? f.epochs : 400;
        tc.batch = f.batch ? f.batch : 80;
        std::uint32_t block = 0;
        auto recs = load_detection_records(f.data, &block);
        auto model = make_detector(block, seed);
        auto view = build_training_view(model, recs);
        std::vector<nn::Sample<float>> vview;
        if (!f.val.empty()) vview = build_training_view(model, load_detection_records(f.val));
        model.weights = nn::train(model.net, view, vview, tc, model.weights);
        extra["epochs"] = tc.epochs;
        extra["batch"] = tc.batch;
        extra["provenance"] = provenance(fnv1a(extra.dump()), seed);
        save_detector(f.out, model, extra);
        print_provenance(extra["provenance"]);
    } else if (f.task == "cfo") {
        tc.epochs = f.epochs ? f.epochs : 500;
        tc.batch = f.batch ? f.batch : 100;
        auto recs = load_cfo_records(f.data);
        CfoModel model = f.cell == "dnn"
                             ? make_cfo_dnn(seed)
                             : make_cfo_rnn(f.cell == "gru" ? CellKind::gru : CellKind::lstm,
                                            seed);
        if (f.cell != "dnn" && f.cell != "lstm" && f.cell != "gru")
            throw std::invalid_argument("--cell must be dnn, lstm or gru");
        auto view = build_training_view(recs);
        std::vector<nn::Sample<float>> vview;
        if (!f.val.empty()) vview = build_training_view(load_cfo_records(f.val));
        model.weights = nn::train(model.net, view, vview, tc, model.weights);
        extra["epochs"] = tc.epochs;
        extra["batch"] = tc.batch;
        extra["provenance"] = provenance(fnv1a(extra.dump()), seed);
        save_cfo_model(f.out, model, extra);
        print_provenance(extra["provenance"]);
    } else {
        throw std::invalid_argument("--task must be detection or cfo");
    }
    return 0;
}

struct EvalFlags {
    std::string task;
    std::string method = "both";
    std::string data, model, out;
    double threshold = 0.05;
    double verify = 0.25;
    std::size_t threads = 1;
};

GenConfig load_gen_config(const std::string& record_path) {
    std::ifstream f(record_path + ".json");
    if (!f) throw std::runtime_error("missing dataset manifest: " + record_path + ".json");
    nlohmann::json j;
    f >> j;
    return GenConfig::from_json(j.at("config"));
}

MetricsReport eval_detection_conventional(const std::vector<DetectionRecord>& recs,
                                          std::size_t block, const GenConfig& cfg,
                                          const SyncConfig& sc, std::size_t threads) {
    std::vector<DetectionEval> evals(recs.size());
    detail::upsampled_ndp(cfg.oversample_factor);
    detail::parallel_indices(recs.size(), threads, [&](std::size_t i) {
        const auto trial = simulate_detection_trial(block, cfg, recs[i].seed);
        const auto det = detect_packet(trial.stream, sc);
        DetectionEval e;
        e.label = trial.tau_in_block;
        e.snr_db = trial.snr_db;
        const long origin = static_cast<long>(DetectionTrial::block_origin);
        if (det.detected && *det.tau_hat >= origin &&
            *det.tau_hat < origin + static_cast<long>(block))
            e.pred = *det.tau_hat - origin;
        evals[i] = e;
    });
    return detection_metrics(evals);
}

MetricsReport eval_detection_model(const std::vector<DetectionRecord>& recs,
                                   const DetectorModel& m, std::size_t threads) {
    std::vector<DetectionEval> evals(recs.size());
    detail::parallel_indices(recs.size(), threads, [&](std::size_t i) {
        const auto d = detector_infer(m, recs[i].block);
        evals[i] = {d.tau_hat, std::lround(recs[i].label), recs[i].snr_db};
    });
    return detection_metrics(evals);
}

MetricsReport eval_cfo_conventional(const std::vector<CfoRecord>& recs, const GenConfig& cfg,
                                    const SyncConfig& sc, std::size_t threads) {
    std::vector<CfoEval> evals(recs.size());
    detail::upsampled_ndp(cfg.oversample_factor);
    const auto spec = default_preamble_spec();
    detail::parallel_indices(recs.size(), threads, [&](std::size_t i) {
        const auto pkt = synth_rx_packet(cfg, recs[i].snr_db, recs[i].label_hz, recs[i].seed);
        const auto est = estimate_cfo(pkt, 0, spec, sc);
        evals[i] = {est.total_hz, recs[i].label_hz, recs[i].snr_db};
    });
    return cfo_metrics(evals);
}

MetricsReport eval_cfo_model(const std::vector<CfoRecord>& recs, const CfoModel& m,
                             std::size_t threads) {
    std::vector<CfoEval> evals(recs.size());
    detail::parallel_indices(recs.size(), threads, [&](std::size_t i) {
        evals[i] = {cfo_infer(m, recs[i].phases), recs[i].label_hz, recs[i].snr_db};
    });
    return cfo_metrics(evals);
}

void print_report_line(const std::string& tag, const MetricsReport& rep) {
    std::cout << tag << " n=" << rep.n_records << " mae=" << rep.overall_mae
              << " miss_rate=" << rep.miss_rate << " false_alarm_rate=" << rep.false_alarm_rate
              << " outliers=" << rep.outliers << "\n";
}

int cmd_eval(const EvalFlags& f) {
    validate_run_config({{"command", "eval"},
                         {"task", f.task},
                         {"method", f.method},
                         {"data", f.data},
                         {"threshold", f.threshold},
                         {"verify", f.verify},
                         {"threads", f.threads},
                         {"out", f.out}});
    SyncConfig sc;
    sc.detect_threshold = f.threshold;
    sc.verify_threshold = f.verify;
    const bool conventional = f.method == "conventional" || f.method == "both";
    const bool model = f.method == "model" || f.method == "both";
    if (!conventional && !model)
        throw std::invalid_argument("--method must be conventional, model or both");
    if (model && f.model.empty())
        throw std::invalid_argument("--model checkpoint required for method " + f.method);

    if (f.task == "detection") {
        std::uint32_t block = 0;
        auto recs = load_detection_records(f.data, &block);
        if (conventional) {
            const auto cfg = load_gen_config(f.data);
            auto rep = eval_detection_conventional(recs, block, cfg, sc, f.threads);
            rep.config_hash = cfg.hash();
            emit_report(rep, f.out + ".conventional");
            print_report_line("conventional", rep);
        }
        if (model) {
            auto m = load_detector(f.model);
            auto rep = eval_detection_model(recs, m, f.threads);
            emit_report(rep, f.out + ".model");
            print_report_line("model", rep);
        }
    } else if (f.task == "cfo") {
        auto recs = load_cfo_records(f.data);
        if (conventional) {
            const auto cfg = load_gen_config(f.data);
            auto rep = eval_cfo_conventional(recs, cfg, sc, f.threads);
            rep.config_hash = cfg.hash();
            emit_report(rep, f.out + ".conventional");
            print_report_line("conventional", rep);
        }
        if (model) {
            auto m = load_cfo_model(f.model);
            auto rep = eval_cfo_model(recs, m, f.threads);
            emit_report(rep, f.out + ".model");
            print_report_line("model", rep);
        }
    } else {
        throw std::invalid_argument("--task must be detection or cfo");
    }
    return 0;
}

void print_network_breakdown(const std::string& name, const std::vector<nn::LayerSpec>& net,
                             std::size_t input_len, long long reference_total) {
    const auto nf = network_flops(net, input_len);
    std::cout << name << "\n";
    std::size_t len = input_len;
    for (std::size_t i = 0; i < net.size(); ++i) {
        std::cout << "  " << layer_kind_name(net[i].kind) << " mul=" << nf.per_layer[i].mul
                  << " add=" << nf.per_layer[i].add << "\n";
        len = net[i].out_len(len);
    }
    std::cout << "  total mul=" << nf.total.mul << " add=" << nf.total.add
              << " flops=" << nf.total.total();
    if (reference_total > 0) {
        const double dev = std::abs(static_cast<double>(nf.total.total()) -
                                    static_cast<double>(reference_total)) /
                           static_cast<double>(reference_total);
        std::cout << " reference=" << reference_total << " deviation=" << dev * 100.0 << "%";
    }
    std::cout << "\n";
}

int cmd_flops(const std::string& which, std::size_t block, double rate) {
    validate_run_config(
        {{"command", "flops"}, {"which", which}, {"block", block}, {"rate", rate}});
    // Published per-inference totals for the same architectures; printed so
    // the deviation of this accounting is visible next to each breakdown.
    if (which == "dnn" || which == "all")
        print_network_breakdown("cfo-dnn", make_cfo_dnn(0).net, 160, 16209);
    if (which == "lstm" || which == "all")
        print_network_breakdown("cfo-lstm", make_cfo_rnn(CellKind::lstm, 0).net, 160, 11651);
    if (which == "gru" || which == "all")
        print_network_breakdown("cfo-gru", make_cfo_rnn(CellKind::gru, 0).net, 160, 8738);
    if (which == "conventional" || which == "all") {
        const auto c = conventional_cfo_flops();
        std::cout << "cfo-conventional\n  coarse_macs=" << c.coarse_macs
                  << " fine_macs=" << c.fine_macs << " total=" << c.total()
                  << " reference=224 deviation="
                  << std::abs(static_cast<double>(c.total()) - 224.0) / 224.0 * 100.0 << "%\n";
        std::cout << "detector-conventional\n  per_sample_flops="
                  << conventional_detector_step_flops().total()
                  << " stream_flops=" << conventional_detector_throughput_flops(rate) << "\n";
    }
    if (which == "detector" || which == "all") {
        const auto net = make_detector(block, 0).net;
        print_network_breakdown("detector-B" + std::to_string(block), net, block, 0);
        const auto total = network_flops(net, block).total.total();
        std::cout << "  stream_flops=" << detector_throughput_flops(total, block, rate) << "\n";
    }
    return 0;
}

struct SimFlags {
    double snr = 20.0;
    double cfo = 0.0;
    std::string channel = "awgn";
    std::uint64_t seed = 0;
    long embed_offset = -1;
    std::size_t total = 0;
    std::string out;
};

int cmd_simulate(const SimFlags& f) {
    validate_run_config({{"command", "simulate"},
                         {"snr_db", f.snr},
                         {"cfo_hz", f.cfo},
                         {"channel", f.channel},
                         {"out", f.out}});
    GenConfig cfg;
    cfg.channel = parse_channel(f.channel);
    const std::uint64_t seed = effective_seed(f.seed);
    Waveform w = synth_rx_packet(cfg, f.snr, f.cfo, seed);
    if (f.embed_offset >= 0) {
        const std::size_t total =
            f.total ? f.total : static_cast<std::size_t>(f.embed_offset) + w.size() + 400;
        w = embed_in_noise(w, static_cast<std::size_t>(f.embed_offset), total, f.snr,
                           derive_seed(seed, 4));
    }
    save_waveform(w, f.out);
    const auto prov = provenance(cfg.hash(), seed);
    print_provenance(prov);
    std::cout << "samples=" << w.size() << " mean_power=" << mean_power(w) << "\n";

    SyncConfig sc;
    sc.detect_threshold = 0.05;
    const auto det = detect_packet(w, sc);
    if (det.detected) {
        const auto est = estimate_cfo(w, static_cast<std::size_t>(*det.tau_hat),
                                      default_preamble_spec(), sc);
        std::cout << "detected tau=" << *det.tau_hat << " metric=" << det.metric_peak
                  << " cfo_hz=" << est.total_hz << "\n";
    } else {
        std::cout << "no packet detected\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"802.11ah preamble synchronization workbench"};
    app.require_subcommand(1);

    CommonGenFlags gf;
    auto* gen = app.add_subcommand("gen", "generate a dataset");
    gen->add_option("--task", gf.task, "detection | cfo")->required();
    gen->add_option("--block", gf.block, "detection block length");
    gen->add_option("--n", gf.n, "record count");
    gen->add_option("--seed", gf.seed, "master seed");
    gen->add_option("--snr-min", gf.snr_min, "dB");
    gen->add_option("--snr-max", gf.snr_max, "dB");
    gen->add_option("--cfo-max", gf.cfo_max, "Hz");
    gen->add_option("--channel", gf.channel, "identity | awgn | multipath");
    gen->add_flag("--detector-aligned", gf.detector_aligned, "align CFO records at the detector estimate");
    gen->add_flag("--split", gf.do_split, "also write 70/15/15 split files");
    gen->add_option("--threads", gf.threads, "worker threads");
    gen->add_option("--out", gf.out, "output record file")->required();

    TrainFlags tf;
    auto* train = app.add_subcommand("train", "train a model on a record file");
    train->add_option("--task", tf.task, "detection | cfo")->required();
    train->add_option("--data", tf.data, "training record file")->required();
    train->add_option("--val", tf.val, "validation record file");
    train->add_option("--cell", tf.cell, "cfo model: dnn | lstm | gru");
    train->add_option("--epochs", tf.epochs, "epochs (default 400 detection, 500 cfo)");
    train->add_option("--batch", tf.batch, "mini-batch size (default 80 detection, 100 cfo)");
    train->add_option("--seed", tf.seed, "run seed");
    train->add_option("--threads", tf.threads, "worker threads");
    train->add_option("--out", tf.out, "checkpoint base path")->required();

    EvalFlags ef;
    auto* ev = app.add_subcommand("eval", "evaluate conventional and/or trained pipelines");
    ev->add_option("--task", ef.task, "detection | cfo")->required();
    ev->add_option("--method", ef.method, "conventional | model | both");
    ev->add_option("--data", ef.data, "test record file")->required();
    ev->add_option("--model", ef.model, "checkpoint base path");
    ev->add_option("--threshold", ef.threshold, "detector metric threshold");
    ev->add_option("--verify", ef.verify, "detector verification threshold");
    ev->add_option("--threads", ef.threads, "worker threads");
    ev->add_option("--out", ef.out, "report base path")->required();

    std::string fl_which = "all";
    std::size_t fl_block = 40;
    double fl_rate = 1e6;
    auto* fl = app.add_subcommand("flops", "print complexity breakdowns");
    fl->add_option("--model", fl_which, "all | detector | dnn | lstm | gru | conventional");
    fl->add_option("--block", fl_block, "detector block length");
    fl->add_option("--rate", fl_rate, "stream sample rate");

    SimFlags sf;
    auto* sim = app.add_subcommand("simulate", "single-packet TX/channel round trip");
    sim->add_option("--snr", sf.snr, "dB");
    sim->add_option("--cfo", sf.cfo, "Hz");
    sim->add_option("--channel", sf.channel, "identity | awgn | multipath");
    sim->add_option("--seed", sf.seed, "seed");
    sim->add_option("--embed-offset", sf.embed_offset, "surround with noise, packet at offset");
    sim->add_option("--total", sf.total, "total length when embedding");
    sim->add_option("--out", sf.out, "waveform output file")->required();

    try {
        app.parse(argc, argv);
        if (*gen) return cmd_gen(gf);
        if (*train) return cmd_train(tf);
        if (*ev) return cmd_eval(ef);
        if (*fl) return cmd_flops(fl_which, fl_block, fl_rate);
        if (*sim) return cmd_simulate(sf);
        return 2;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "{\"error\":\"" << e.what() << "\",\"code\":2}\n";
        return 2;
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        const int code = msg.find("non-finite") != std::string::npos ? 4 : 3;
        std::cerr << "{\"error\":\"" << msg << "\",\"code\":" << code << "}\n";
        return code;
    }
}
