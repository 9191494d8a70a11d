#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "peca/ablate.hpp"
#include "peca/checkpoint.hpp"
#include "peca/config.hpp"
#include "peca/error.hpp"
#include "peca/evaluate.hpp"
#include "peca/gradcheck.hpp"
#include "peca/json_io.hpp"
#include "peca/synthdata.hpp"
#include "peca/train.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitContract = 2;
constexpr int kExitNumerics = 3;

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw peca::ContractError("cannot write " + path.string());
    return out;
}

peca::DataTemplate load_data_template(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw peca::ContractError("cannot open data spec " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        // Accept either a bare data template or a training config with a "data" block.
        if (j.contains("data")) return j.at("data").get<peca::DataTemplate>();
        return j.get<peca::DataTemplate>();
    } catch (const nlohmann::json::exception& e) {
        throw peca::ContractError("malformed data spec " + path.string() + ": " + e.what());
    }
}

int cmd_train(const fs::path& config_path, std::optional<std::uint64_t> seed, const fs::path& out_dir) {
    peca::TrainConfig cfg = peca::load_train_config(config_path);
    if (seed) cfg.seed = *seed;
    const peca::SyntheticData data = peca::make_domains(cfg.data);
    const auto result = peca::train(cfg, data);
    fs::create_directories(out_dir);
    {
        auto out = open_out(out_dir / "metrics.csv");
        result.report.write_metrics_csv(out);
    }
    {
        auto out = open_out(out_dir / "report.json");
        result.report.write_report_json(out);
    }
    {
        auto out = open_out(out_dir / "config.json");
        out << nlohmann::json(cfg).dump(2) << '\n';
    }
    result.checkpoint.save(out_dir / "checkpoint.peca");
    std::cout << "source mAP " << result.report.source_map() << " rank-1 " << result.report.source_rank1() << '\n'
              << "target mAP " << result.report.target_map() << " rank-1 " << result.report.target_rank1() << '\n'
              << "wrote " << out_dir.string() << '\n';
    return 0;
}

int cmd_eval(const fs::path& checkpoint_path, const fs::path& data_path, const std::string& metric_name) {
    const peca::Metric metric = peca::parse_metric(metric_name);
    const auto checkpoint = peca::Checkpoint::load(checkpoint_path);
    const peca::SyntheticData data = fs::is_directory(data_path)
                                         ? peca::load_dataset(data_path)
                                         : peca::make_domains(load_data_template(data_path));
    std::cout << "split,domain,mAP,rank1,queries\n";
    for (const auto& d : data.source_tests) {
        const auto s = peca::evaluate_domain(checkpoint, d, metric);
        std::cout << "source," << d.spec.domain_id << ',' << s.map << ',' << s.rank1 << ',' << s.valid_queries << '\n';
    }
    for (const auto& d : data.targets) {
        const auto s = peca::evaluate_domain(checkpoint, d, metric);
        std::cout << "target," << d.spec.domain_id << ',' << s.map << ',' << s.rank1 << ',' << s.valid_queries << '\n';
    }
    return 0;
}

int cmd_ablate(const fs::path& config_path, std::size_t n_seeds, const fs::path& out_dir, const std::string& settings) {
    const peca::TrainConfig base = peca::load_train_config(config_path);
    const peca::SyntheticData data = peca::make_domains(base.data);
    std::vector<std::uint64_t> seeds(n_seeds);
    std::iota(seeds.begin(), seeds.end(), base.seed);
    const auto selected = peca::resolve_settings(base, settings);
    const auto table = peca::ablate(base, data, selected, seeds, [](const peca::AblationRow& r) {
        std::cerr << r.setting.study << '/' << r.setting.name << " seed " << r.seed << ": target mAP " << r.target_map
                  << " source mAP " << r.source_map << '\n';
    });
    fs::create_directories(out_dir);
    {
        auto out = open_out(out_dir / "ablation.csv");
        table.write_csv(out);
    }
    auto out = open_out(out_dir / "ablation_summary.csv");
    table.write_summary_csv(out);
    table.write_summary_csv(std::cout);
    return 0;
}

int cmd_gradcheck(const std::vector<double>& lambdas, double tolerance) {
    bool ok = true;
    for (double lambda : lambdas) {
        peca::GradcheckConfig cfg;
        cfg.lambda = lambda;
        cfg.tolerance = tolerance;
        const auto report = peca::gradcheck(cfg);
        report.print(std::cout, tolerance);
        if (!report.passed) {
            ok = false;
            std::cout << "  offending blocks:";
            for (const auto& b : report.failing_blocks(tolerance)) std::cout << ' ' << b;
            std::cout << '\n';
        }
    }
    return ok ? 0 : 1;
}

int cmd_gen_data(const fs::path& spec_path, std::optional<std::uint64_t> seed, const fs::path& out_dir) {
    peca::DataTemplate tmpl = load_data_template(spec_path);
    if (seed) tmpl.seed = *seed;
    const auto data = peca::make_domains(tmpl);
    peca::save_dataset(data, out_dir);
    std::cout << "wrote " << data.sources.size() << " source and " << data.targets.size() << " target domains to "
              << out_dir.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Local perturbation + global calibration training harness"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "train one model and write metrics, report and checkpoint");
    fs::path train_config, train_out = "run";
    std::optional<std::uint64_t> train_seed;
    train->add_option("--config", train_config, "JSON training config")->required()->check(CLI::ExistingFile);
    train->add_option("--seed", train_seed, "override the config seed");
    train->add_option("--out", train_out, "output directory");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on source hold-outs and target domains");
    fs::path eval_ckpt, eval_data;
    std::string eval_metric = "cosine";
    eval->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
    eval->add_option("--data", eval_data, "data spec JSON or a gen-data dump directory")->required()->check(CLI::ExistingPath);
    eval->add_option("--metric", eval_metric)->check(CLI::IsMember({"cosine", "euclidean"}));

    auto* ablate = app.add_subcommand("ablate", "run ablation studies over several seeds");
    fs::path ablate_config, ablate_out = "ablation";
    std::size_t ablate_seeds = 5;
    std::string ablate_settings = "all";
    ablate->add_option("--config", ablate_config)->required()->check(CLI::ExistingFile);
    ablate->add_option("--seeds", ablate_seeds, "number of seeds, counted up from the config seed");
    ablate->add_option("--out", ablate_out);
    ablate->add_option("--settings", ablate_settings,
                       "comma-separated studies (components, lambda, placement, all) or setting names");

    auto* gradcheck = app.add_subcommand("gradcheck", "compare reverse-mode gradients with finite differences");
    std::vector<double> gc_lambdas{0.0, 1.0};
    double gc_tol = 1e-3;
    gradcheck->add_option("--lambda", gc_lambdas, "calibration weights to check");
    gradcheck->add_option("--tolerance", gc_tol);

    auto* gen = app.add_subcommand("gen-data", "generate and dump a synthetic multi-domain dataset");
    fs::path gen_spec, gen_out = "data";
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("--spec", gen_spec, "data template JSON")->required()->check(CLI::ExistingFile);
    gen->add_option("--seed", gen_seed);
    gen->add_option("--out", gen_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Bad arguments are caller contract violations; --help exits 0.
        return app.exit(e) == 0 ? 0 : kExitContract;
    }

    try {
        if (*train) return cmd_train(train_config, train_seed, train_out);
        if (*eval) return cmd_eval(eval_ckpt, eval_data, eval_metric);
        if (*ablate) return cmd_ablate(ablate_config, ablate_seeds, ablate_out, ablate_settings);
        if (*gradcheck) return cmd_gradcheck(gc_lambdas, gc_tol);
        if (*gen) return cmd_gen_data(gen_spec, gen_seed, gen_out);
    } catch (const peca::ContractError& e) {
        std::cerr << "contract error: " << e.what() << '\n';
        return kExitContract;
    } catch (const peca::NumericsError& e) {
        std::cerr << "numerics error: " << e.what() << '\n';
        return kExitNumerics;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
