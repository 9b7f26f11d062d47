#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "mic/checkpoint.hpp"
#include "mic/config.hpp"
#include "mic/dataset.hpp"
#include "mic/evalkit.hpp"
#include "mic/synthetic.hpp"
#include "mic/trainer.hpp"

namespace mic {

namespace cli_detail {

namespace fs = std::filesystem;

struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    bool force = false;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* threads_opt = nullptr;
};

inline void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "key=value config file");
    cmd->add_option("--set", c.sets, "config override key=value (repeatable)");
    c.seed_opt = cmd->add_option("--seed", c.seed, "RNG seed");
    c.threads_opt = cmd->add_option("--threads", c.threads, "worker thread cap");
    cmd->add_flag("--force", c.force, "overwrite existing outputs");
}

inline Options finalize(const Common& c) {
    Options opt;
    if (!c.config_path.empty()) load_config_file(opt, c.config_path);
    for (const auto& kv : c.sets) apply_kv_line(opt, kv);
    if (c.seed_opt && c.seed_opt->count() > 0) opt.seed = c.seed;
    if (c.threads_opt && c.threads_opt->count() > 0) opt.threads = c.threads;
    if (opt.threads < 1) opt.threads = 1;
    return opt;
}

inline void ensure_fresh(const fs::path& path, bool force) {
    if (fs::exists(path) && !force)
        throw ConfigError("output " + path.string() + " exists; pass --force to overwrite");
}

inline std::string hash_echo(const std::string& echo) {
    std::string out;
    std::size_t pos = 0;
    while (pos < echo.size()) {
        std::size_t next = echo.find('\n', pos);
        if (next == std::string::npos) next = echo.size();
        out += "# " + echo.substr(pos, next - pos) + "\n";
        pos = next + 1;
    }
    return out;
}

inline void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw IoError("short write on " + path.string());
}

// Shared inference state for eval and retrieve.
struct Inference {
    Corpus corpus;
    SplitDataset split;
    Checkpoint ckpt;
    EncoderConfig enc;
    std::map<int, std::vector<int>> histories;
    Matrix user_reps;
    std::map<int, std::size_t> user_row;
    VectorIndex user_index;
    VectorIndex item_index;
};

inline Inference load_inference(const std::string& data_dir, const std::string& ckpt_path,
                                const Options& opt) {
    Inference inf;
    auto prepared = load_prepared(data_dir);
    inf.corpus = std::move(prepared.first);
    inf.split = std::move(prepared.second);
    inf.ckpt = load_checkpoint(ckpt_path);
    inf.enc = encoder_config(opt);

    ParamStore expected;
    init_encoder_params(expected, VocabSizes::of(inf.corpus), inf.enc, 0);
    check_checkpoint_shapes(inf.ckpt, expected);

    inf.histories = training_histories(inf.corpus, inf.split);
    std::vector<int> user_ids;
    std::vector<UserView> user_views;
    for (const auto& [u, hist] : inf.histories) {
        inf.user_row[u] = user_ids.size();
        user_ids.push_back(u);
        UserView v = make_user_view(inf.corpus, u);
        v.history = hist;
        user_views.push_back(std::move(v));
    }
    inf.user_reps = encode_user_batch(user_views, inf.ckpt.params, inf.enc).first;

    std::vector<int> item_ids;
    std::vector<ItemView> item_views;
    for (std::size_t idx = 2; idx < inf.corpus.items.size(); ++idx) {
        item_ids.push_back(static_cast<int>(idx));
        item_views.push_back(make_item_view(inf.corpus, static_cast<int>(idx)));
    }
    const Matrix item_reps = encode_item_batch(item_views, inf.ckpt.params, inf.enc).first;
    inf.user_index = build_index(user_ids, inf.user_reps, true);
    inf.item_index = build_index(item_ids, item_reps, false);
    return inf;
}

inline const std::vector<int>& pick_users(const SplitDataset& split, const std::string& which) {
    if (which == "valid") return split.valid_users;
    if (which == "test") return split.test_users;
    throw ConfigError("--split must be valid or test, got " + which);
}

// ---- verbs ----

inline int cmd_synth(const Options& opt, const std::string& out_dir, bool force) {
    ensure_fresh(out_dir, force);
    const SyntheticData data = gen_synthetic(synthetic_config(opt), opt.seed);
    write_synthetic(out_dir, data, config_echo(opt));
    std::set<std::string> users, items;
    for (const auto& r : data.interactions) {
        users.insert(r.user_id);
        items.insert(r.item_id);
    }
    std::cout << "users=" << users.size() << " items=" << items.size()
              << " interactions=" << data.interactions.size() << "\n";
    return 0;
}

inline int cmd_prepare(const Options& opt, const std::string& interactions,
                       const std::string& user_fields_path, const std::string& item_fields_path,
                       const std::string& format_name, const std::string& out_dir, bool force) {
    ensure_fresh(out_dir, force);
    const FileFormat format = parse_format(format_name);
    ParseReport report;
    const auto rows = parse_interactions(interactions, format, &report, opt.max_malformed_fraction);
    UserFields user_fields;
    ItemFields item_fields;
    if (!user_fields_path.empty()) user_fields = parse_user_fields(user_fields_path, format);
    if (!item_fields_path.empty()) item_fields = parse_item_fields(item_fields_path, format);
    const Corpus corpus =
        build_histories(rows, build_options(opt), user_fields_path.empty() ? nullptr : &user_fields,
                        item_fields_path.empty() ? nullptr : &item_fields);
    const SplitDataset split = split_dataset(corpus, split_options(opt), opt.seed);
    save_prepared(out_dir, corpus, split, config_echo(opt));
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    if (!report.malformed_lines.empty())
        std::cerr << "warning: skipped " << report.malformed_lines.size() << " malformed rows\n";
    std::cout << "users=" << corpus.num_users() << " items=" << corpus.num_items()
              << " interactions=" << corpus.interaction_count
              << " moved_to_train=" << split.moved_to_train << "\n";
    return 0;
}

inline int cmd_train(const Options& opt, const std::string& data_dir, const std::string& out_dir,
                     bool force) {
    const fs::path out(out_dir);
    ensure_fresh(out / "checkpoint.bin", force);
    ensure_fresh(out / "train_log.txt", force);
    auto prepared = load_prepared(data_dir);
    const Corpus& corpus = prepared.first;
    const SplitDataset& split = prepared.second;

    const TrainConfig cfg = train_config(opt);
    ParamStore store;
    const TrainResult result = train(corpus, split, cfg, store);

    fs::create_directories(out);
    Checkpoint ckpt;
    ckpt.config_echo = config_echo(opt);
    ckpt.sizes = VocabSizes::of(corpus);
    ckpt.dim = cfg.encoder.dim;
    ckpt.step = result.best_step >= 0 ? result.best_step : result.total_steps;
    ckpt.has_adam = false;
    ckpt.params = detail::clone_values(store);
    save_checkpoint(ckpt, (out / "checkpoint.bin").string());

    std::string log = hash_echo(config_echo(opt));
    for (const auto& line : result.log_lines) log += line + "\n";
    for (const auto& w : result.warnings) log += "# warning: " + w + "\n";
    write_text(out / "train_log.txt", log);

    std::cout << "steps=" << result.total_steps << " best_step=" << result.best_step
              << " best_recall@" << cfg.recall_n << "="
              << (result.best_recall < 0 ? std::string("n/a")
                                         : detail::fixed(result.best_recall, 6))
              << (result.early_stopped ? " early_stopped=true" : "") << "\n";
    return 0;
}

inline int cmd_eval(const Options& opt, const std::string& data_dir, const std::string& ckpt_path,
                    const std::string& which, const std::string& out_dir, bool force) {
    const fs::path out(out_dir);
    ensure_fresh(out / "report.json", force);
    ensure_fresh(out / "report.txt", force);
    Inference inf = load_inference(data_dir, ckpt_path, opt);
    const auto& users = pick_users(inf.split, which);

    EvalReport report = run_eval(inf.corpus, inf.split, users, inf.ckpt.params, inf.enc,
                                 eval_options(opt));
    report.config_echo = config_echo(opt);

    fs::create_directories(out);
    write_text(out / "report.json", report_to_json(report).dump(2) + "\n");
    std::string txt = hash_echo(report.config_echo);
    txt += "split=" + which + " users=" + std::to_string(report.user_count) +
           " skipped=" + std::to_string(report.skipped) + "\n\n";
    txt += "fractions\n" + report_table(report, 1.0) + "\n";
    txt += "x100\n" + report_table(report, 100.0);
    write_text(out / "report.txt", txt);
    std::cout << txt;
    return 0;
}

inline int cmd_retrieve(const Options& opt, const std::string& data_dir,
                        const std::string& ckpt_path, const std::string& channel, std::size_t k,
                        const std::string& which, const std::string& out_file, bool force) {
    if (k == 0) throw ConfigError("--k must be >= 1");
    ensure_fresh(out_file, force);
    Inference inf = load_inference(data_dir, ckpt_path, opt);
    const auto& users = pick_users(inf.split, which);
    const ChannelConfig ccfg = channel_config(opt);

    std::vector<std::string> channels;
    if (channel == "all")
        channels = channel_names();
    else if (std::find(channel_names().begin(), channel_names().end(), channel) !=
             channel_names().end())
        channels = {channel};
    else
        throw ConfigError("--channel must be u2i, u2u, i2i, or all");

    std::ostringstream rows;
    for (int u : users) {
        const auto e_u = inf.user_reps.row(inf.user_row.at(u));
        const auto& train_items = inf.histories.at(u);
        const std::set<int> exclude_set(train_items.begin(), train_items.end());
        const std::set<int>* exclude = ccfg.exclude_training_items ? &exclude_set : nullptr;
        for (const auto& name : channels) {
            RankedList ranked;
            if (name == "u2i")
                ranked = retrieve_u2i(e_u, inf.item_index, k, exclude);
            else if (name == "u2u")
                ranked = retrieve_u2u(u, e_u, inf.user_index, inf.item_index, inf.histories, ccfg,
                                      k, exclude);
            else
                ranked = retrieve_i2i(e_u, train_items, inf.item_index, ccfg, k, exclude);
            for (std::size_t r = 0; r < ranked.entries.size(); ++r)
                rows << inf.corpus.user_vocab.token(u) << '\t' << name << '\t' << r + 1 << '\t'
                     << inf.corpus.item_vocab.token(ranked.entries[r].id) << '\t'
                     << detail::fixed(ranked.entries[r].score, 9) << '\n';
        }
    }
    write_text(out_file, hash_echo(config_echo(opt)) + rows.str());
    std::cout << "wrote " << out_file << "\n";
    return 0;
}

inline int cmd_ablate(const Options& opt, const std::string& data_dir, const std::string& out_dir,
                      const std::string& which, bool force) {
    const fs::path out(out_dir);
    ensure_fresh(out / "ablation.md", force);
    auto prepared = load_prepared(data_dir);
    const Corpus& corpus = prepared.first;
    const SplitDataset& split = prepared.second;
    const auto& users = pick_users(split, which);

    std::map<std::string, EvalReport> reports;
    fs::create_directories(out);
    for (const auto& setting : ablation_settings()) {
        Options o = opt;
        if (setting == "base") {
            o.lambda = 1.0;
            o.w_uv = o.w_uu = o.w_vv = 0.0;
            o.mining = false;
        } else {
            o.w_uv = setting_has(setting, "ui") ? opt.w_uv : 0.0;
            o.w_uu = setting_has(setting, "uu") ? opt.w_uu : 0.0;
            o.w_vv = setting_has(setting, "ii") ? opt.w_vv : 0.0;
        }
        ParamStore store;
        const TrainResult result = train(corpus, split, train_config(o), store);
        EvalReport report = run_eval(corpus, split, users, store, encoder_config(o),
                                     eval_options(o));
        report.config_echo = config_echo(o);
        write_text(out / ("report_" + setting + ".json"),
                   report_to_json(report).dump(2) + "\n");
        const std::size_t n0 = report.cutoffs.front();
        std::cerr << "ablate " << setting << ": steps=" << result.total_steps << " recall@" << n0
                  << "=" << detail::fixed(report.channels.at("u2i").at(n0).recall, 6) << "\n";
        reports.emplace(setting, std::move(report));
    }
    std::string md = "## Config\n\n```\n" + config_echo(opt) + "```\n\n" +
                     "split=" + which + "\n\n" + ablation_table(reports);
    write_text(out / "ablation.md", md);
    std::cout << ablation_table(reports);
    return 0;
}

}  // namespace cli_detail

// Entry point shared by the binary and the tests. args excludes argv[0].
inline int run_cli(std::vector<std::string> args) {
    CLI::App app{"cross-channel two-tower retrieval recommender"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "mic 1.0.0");

    using cli_detail::Common;
    Common c_synth, c_prepare, c_train, c_eval, c_retrieve, c_ablate;

    auto* synth = app.add_subcommand("synth", "generate a planted-cluster corpus");
    std::string synth_out;
    synth->add_option("--out", synth_out, "output directory")->required();
    cli_detail::add_common(synth, c_synth);

    auto* prepare = app.add_subcommand("prepare", "ingest interactions and write split artifacts");
    std::string p_inter, p_user_fields, p_item_fields, p_format = "tsv", p_out;
    prepare->add_option("--interactions", p_inter, "interaction file")->required();
    prepare->add_option("--user-fields", p_user_fields, "user attribute file");
    prepare->add_option("--item-fields", p_item_fields, "item keyword file");
    prepare->add_option("--format", p_format, "tsv or csv");
    prepare->add_option("--out", p_out, "output directory")->required();
    cli_detail::add_common(prepare, c_prepare);

    auto* train_cmd = app.add_subcommand("train", "train and write a checkpoint");
    std::string t_data, t_out;
    train_cmd->add_option("--data", t_data, "prepared data directory")->required();
    train_cmd->add_option("--out", t_out, "output directory")->required();
    cli_detail::add_common(train_cmd, c_train);

    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on the holdout");
    std::string e_data, e_ckpt, e_split = "test", e_out;
    eval_cmd->add_option("--data", e_data, "prepared data directory")->required();
    eval_cmd->add_option("--checkpoint", e_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--split", e_split, "valid or test");
    eval_cmd->add_option("--out", e_out, "output directory")->required();
    cli_detail::add_common(eval_cmd, c_eval);

    auto* retrieve = app.add_subcommand("retrieve", "write top-K recommendations");
    std::string r_data, r_ckpt, r_channel = "all", r_split = "test", r_out;
    std::size_t r_k = 20;
    retrieve->add_option("--data", r_data, "prepared data directory")->required();
    retrieve->add_option("--checkpoint", r_ckpt, "checkpoint file")->required();
    retrieve->add_option("--channel", r_channel, "u2i, u2u, i2i, or all");
    retrieve->add_option("--k", r_k, "list length per channel");
    retrieve->add_option("--split", r_split, "valid or test");
    retrieve->add_option("--out", r_out, "output file")->required();
    cli_detail::add_common(retrieve, c_retrieve);

    auto* ablate = app.add_subcommand("ablate", "run the 8-setting contrastive grid");
    std::string a_data, a_split = "test", a_out;
    ablate->add_option("--data", a_data, "prepared data directory")->required();
    ablate->add_option("--split", a_split, "valid or test");
    ablate->add_option("--out", a_out, "output directory")->required();
    cli_detail::add_common(ablate, c_ablate);

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (synth->parsed())
            return cli_detail::cmd_synth(cli_detail::finalize(c_synth), synth_out, c_synth.force);
        if (prepare->parsed())
            return cli_detail::cmd_prepare(cli_detail::finalize(c_prepare), p_inter, p_user_fields,
                                           p_item_fields, p_format, p_out, c_prepare.force);
        if (train_cmd->parsed())
            return cli_detail::cmd_train(cli_detail::finalize(c_train), t_data, t_out,
                                         c_train.force);
        if (eval_cmd->parsed())
            return cli_detail::cmd_eval(cli_detail::finalize(c_eval), e_data, e_ckpt, e_split,
                                        e_out, c_eval.force);
        if (retrieve->parsed())
            return cli_detail::cmd_retrieve(cli_detail::finalize(c_retrieve), r_data, r_ckpt,
                                            r_channel, r_k, r_split, r_out, c_retrieve.force);
        if (ablate->parsed())
            return cli_detail::cmd_ablate(cli_detail::finalize(c_ablate), a_data, a_out, a_split,
                                          c_ablate.force);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}

}  // namespace mic
