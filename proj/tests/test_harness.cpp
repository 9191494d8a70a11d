#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "json.hpp"
#include "peca/ablate.hpp"
#include "peca/checkpoint.hpp"
#include "peca/error.hpp"
#include "peca/evaluate.hpp"
#include "peca/gradcheck.hpp"
#include "peca/json_io.hpp"
#include "peca/train.hpp"
#include "oracles.hpp"

using namespace peca;
using namespace peca::testing;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.epochs = 3;
    c.data.n_identities = 6;
    c.data.n_test_identities = 4;
    c.data.n_target_identities = 4;
    c.backbone.stage_channels = {4, 6};
    c.backbone.stage_strides = {1, 2};
    c.backbone.feature_dim = 8;
    return c;
}

RetrievalScore single_query(const std::vector<double>& dists, const std::vector<std::size_t>& labels) {
    const Tensor d({1, dists.size()}, dists);
    const std::size_t ql[] = {0};
    const std::size_t qv[] = {99};
    const std::vector<std::size_t> gv(dists.size(), 0);
    return cmc_map(d, ql, qv, labels, gv);
}

struct Recorder : TrainObserver {
    std::vector<std::pair<TrainEvent, std::size_t>> events;
    std::vector<IterationStats> stats;
    void on_event(TrainEvent e, std::size_t it) override { events.push_back({e, it}); }
    void on_iteration(const IterationStats& s) override { stats.push_back(s); }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PECA_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("learning rate schedule") {
    TrainConfig c;
    c.epochs = 20;
    c.base_lr = 1.0;
    CHECK(c.resolved_warmup() == 2);
    CHECK(c.resolved_milestones() == std::vector<std::size_t>{10, 17});
    CHECK(c.learning_rate(0) == doctest::Approx(0.5));
    CHECK(c.learning_rate(1) == doctest::Approx(1.0));
    CHECK(c.learning_rate(9) == doctest::Approx(1.0));
    CHECK(c.learning_rate(10) == doctest::Approx(0.1));
    CHECK(c.learning_rate(16) == doctest::Approx(0.1));
    CHECK(c.learning_rate(17) == doctest::Approx(0.01));

    c.warmup_epochs = 4;
    c.milestones = std::vector<std::size_t>{6};
    for (std::size_t e = 0; e < 4; ++e) CHECK(c.learning_rate(e) == doctest::Approx((e + 1) / 4.0));
    CHECK(c.learning_rate(5) == 1.0);
    CHECK(c.learning_rate(6) == doctest::Approx(0.1));

    TrainConfig short_run;
    short_run.epochs = 3;
    CHECK(short_run.resolved_warmup() == 1);
}

TEST_CASE("config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.lambda = -0.1;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = TrainConfig{};
    c.beta = 1.5;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = TrainConfig{};
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = TrainConfig{};
    c.P = 50;
    CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("config JSON mirrors field names and rejects unknown keys") {
    TrainConfig c;
    c.lambda = 0.25;
    c.perturb_plan = PerturbPlan::shallow;
    c.metric = Metric::euclidean;
    c.milestones = std::vector<std::size_t>{3, 5};
    c.data.target_gap = 1.5;
    const nlohmann::json j = c;
    CHECK(j.at("lambda") == 0.25);
    CHECK(j.at("perturb_plan") == "shallow");
    const TrainConfig back = j.get<TrainConfig>();
    CHECK(back.lambda == 0.25);
    CHECK(back.perturb_plan == PerturbPlan::shallow);
    CHECK(back.metric == Metric::euclidean);
    CHECK(back.milestones == c.milestones);
    CHECK(back.data.target_gap == 1.5);

    const fs::path dir = fs::temp_directory_path() / "peca_test_config";
    fs::create_directories(dir);
    std::ofstream(dir / "bad.json") << R"({"lambda": 1, "lamda": 2})";
    CHECK_THROWS_AS(load_train_config(dir / "bad.json"), ContractError);
    std::ofstream(dir / "nested.json") << R"({"data": {"sed": 3}})";
    CHECK_THROWS_AS(load_train_config(dir / "nested.json"), ContractError);
    std::ofstream(dir / "partial.json") << R"({"epochs": 4})";
    const TrainConfig partial = load_train_config(dir / "partial.json");
    CHECK(partial.epochs == 4);
    CHECK(partial.beta == 0.8);
    fs::remove_all(dir);
}

TEST_CASE("cmc_map examples") {
    // Single positive at rank 2 of 5.
    auto s = single_query({0.5, 0.1, 0.7, 0.8, 0.9}, {0, 1, 2, 3, 4});
    CHECK(s.map == doctest::Approx(0.5));
    CHECK(s.rank1 == 0.0);
    // Positives at ranks 1 and 3.
    s = single_query({0.1, 0.2, 0.3, 0.4}, {0, 1, 0, 2});
    CHECK(s.map == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    CHECK(s.rank1 == 1.0);
    // All positives first.
    s = single_query({0.1, 0.2, 0.3, 0.4}, {0, 0, 1, 2});
    CHECK(s.map == 1.0);
    // Ties broken by gallery index.
    s = single_query({0.5, 0.5, 0.5}, {1, 0, 2});
    CHECK(s.map == doctest::Approx(0.5));
}

TEST_CASE("reversing a ranking with a single positive maps AP 1/r to 1/(G-r+1)") {
    const std::size_t G = 7;
    for (std::size_t r = 1; r <= G; ++r) {
        std::vector<double> fwd(G), rev(G);
        std::vector<std::size_t> labels(G, 1);
        labels[r - 1] = 0;
        for (std::size_t g = 0; g < G; ++g) {
            fwd[g] = static_cast<double>(g);
            rev[g] = static_cast<double>(G - g);
        }
        CHECK(single_query(fwd, labels).map == doctest::Approx(1.0 / r));
        CHECK(single_query(rev, labels).map == doctest::Approx(1.0 / (G - r + 1)));
    }
}

TEST_CASE("cmc_map junk filtering and skipped queries") {
    // Same identity and view as the query: removed; the next positive counts.
    const Tensor d({1, 3}, {0.0, 0.1, 0.2});
    const std::size_t ql[] = {4}, qv[] = {2};
    const std::size_t gl[] = {4, 1, 4}, gv[] = {2, 0, 1};
    const auto s = cmc_map(d, ql, qv, gl, gv);
    CHECK(s.map == doctest::Approx(0.5));
    CHECK(s.rank1 == 0.0);
    // No positive at all: skipped, zero valid queries.
    const std::size_t gl2[] = {1, 2, 3};
    const auto none = cmc_map(d, ql, qv, gl2, gv);
    CHECK(none.valid_queries == 0);
    CHECK(none.map == 0.0);
}

TEST_CASE("cmc_map matches the brute-force reference on random instances") {
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        const auto [dist, ql, qv, gl, gv] = random_ranking(trial);
        const auto got = cmc_map(dist, ql, qv, gl, gv);
        const auto want = brute_cmc(dist, ql, qv, gl, gv);
        CHECK(got.map == want.map);
        CHECK(got.rank1 == want.rank1);
        CHECK(got.valid_queries == want.valid_queries);
    }
}

TEST_CASE("cosine and euclidean rank unit vectors identically") {
    RngStream rng(StreamTag::test, {11});
    Graph g;
    const Tensor q = l2_normalize(g.constant(random_tensor({6, 5}, rng))).value();
    const Tensor gal = l2_normalize(g.constant(random_tensor({20, 5}, rng))).value();
    const Tensor dc = distance_matrix(q, gal, Metric::cosine);
    const Tensor de = distance_matrix(q, gal, Metric::euclidean);
    for (std::size_t i = 0; i < 6; ++i) {
        std::vector<std::size_t> a(20), b(20);
        std::iota(a.begin(), a.end(), 0);
        std::iota(b.begin(), b.end(), 0);
        std::stable_sort(a.begin(), a.end(), [&](auto x, auto y) { return dc.at(i, x) < dc.at(i, y); });
        std::stable_sort(b.begin(), b.end(), [&](auto x, auto y) { return de.at(i, x) < de.at(i, y); });
        CHECK(a == b);
        // |a-b|^2 = 2 - 2cos on the unit sphere.
        for (std::size_t j = 0; j < 20; ++j) CHECK(de.at(i, j) * de.at(i, j) == doctest::Approx(2.0 * dc.at(i, j)));
    }
}

TEST_CASE("loss composition and event order") {
    TrainConfig c = tiny_config();
    c.lambda = 0.7;
    const SyntheticData data = make_domains(c.data);
    Recorder rec;
    const auto result = train(c, data, &rec);
    const std::size_t per_epoch = iterations_per_epoch(c, data);
    REQUIRE(rec.stats.size() == per_epoch * c.epochs);
    for (const auto& s : rec.stats) {
        CHECK(std::abs(s.loss - (s.loss_id + 0.7 * s.loss_g)) <= 1e-12);
        CHECK(s.loss_g >= 0.0);
        CHECK(s.lr == c.learning_rate(s.epoch));
    }
    // Calibration reads the memory, then the step, then the refresh.
    REQUIRE(rec.events.size() == 3 * rec.stats.size());
    for (std::size_t i = 0; i < rec.stats.size(); ++i) {
        CHECK(rec.events[3 * i].first == TrainEvent::global_moments);
        CHECK(rec.events[3 * i + 1].first == TrainEvent::optimizer_step);
        CHECK(rec.events[3 * i + 2].first == TrainEvent::memory_update);
        for (std::size_t j = 0; j < 3; ++j) CHECK(rec.events[3 * i + j].second == i);
    }
    REQUIRE(result.report.epochs.size() == c.epochs);
    for (const auto& e : result.report.epochs) {
        CHECK(e.loss == doctest::Approx(e.loss_id + 0.7 * e.loss_g).epsilon(1e-12));
        CHECK(e.loss_g >= 0.0);
    }
    for (const auto& d : result.report.target) {
        CHECK(d.score.map >= 0.0);
        CHECK(d.score.map <= 1.0);
    }
}

TEST_CASE("lambda zero reports L equal to L_id and trains like the baseline") {
    TrainConfig c = tiny_config();
    c.lambda = 0.0;
    c.lpm_enabled = false;
    const SyntheticData data = make_domains(c.data);
    Recorder rec;
    const auto with_gcm = train(c, data, &rec);
    for (const auto& e : with_gcm.report.epochs) CHECK(e.loss == e.loss_id);
    for (const auto& s : rec.stats) CHECK(s.loss == s.loss_id);

    TrainConfig base = c;
    base.gcm_enabled = false;
    Recorder quiet;
    const auto baseline = train(base, data, &quiet);
    for (const auto& [e, it] : quiet.events) CHECK(e != TrainEvent::global_moments);
    CHECK(baseline.checkpoint.params.projection == with_gcm.checkpoint.params.projection);
    for (std::size_t s = 0; s < baseline.checkpoint.params.kernels.size(); ++s)
        CHECK(baseline.checkpoint.params.kernels[s] == with_gcm.checkpoint.params.kernels[s]);
    CHECK(baseline.report.target_map() == with_gcm.report.target_map());
}

TEST_CASE("training is deterministic and evaluation is pure") {
    const TrainConfig c = tiny_config();
    const SyntheticData data = make_domains(c.data);
    const auto a = train(c, data);
    const auto b = train(c, data);
    std::ostringstream ma, mb;
    a.report.write_metrics_csv(ma);
    b.report.write_metrics_csv(mb);
    CHECK(ma.str() == mb.str());
    CHECK(a.checkpoint.params.projection == b.checkpoint.params.projection);

    const auto& target = data.targets[0];
    const auto e1 = evaluate_domain(a.checkpoint, target, Metric::cosine);
    const auto e2 = evaluate_domain(a.checkpoint, target, Metric::cosine);
    CHECK(e1.map == e2.map);
    CHECK(e1.rank1 == e2.rank1);
    CHECK(e1.map == a.report.target_map());
    const Tensor v1 = embed(a.checkpoint.backbone, a.checkpoint.params, target.images);
    CHECK(v1 == embed(a.checkpoint.backbone, a.checkpoint.params, target.images));

    TrainConfig other = c;
    other.seed = 1;
    std::ostringstream mo;
    train(other, data).report.write_metrics_csv(mo);
    CHECK(mo.str() != ma.str());
}

TEST_CASE("checkpoint round-trips through a file") {
    const TrainConfig c = tiny_config();
    const SyntheticData data = make_domains(c.data);
    const auto r = train(c, data);
    const fs::path path = fs::temp_directory_path() / "peca_test_ckpt.peca";
    r.checkpoint.save(path);
    const Checkpoint back = Checkpoint::load(path);
    CHECK(back.params.projection == r.checkpoint.params.projection);
    CHECK(evaluate_domain(back, data.targets[0], Metric::euclidean).map ==
          evaluate_domain(r.checkpoint, data.targets[0], Metric::euclidean).map);
    fs::remove(path);
}

TEST_CASE("evaluate splits query and gallery by lowest view") {
    const SyntheticData data = make_domains(tiny_config().data);
    const auto qg = split_query_gallery(data.targets[0]);
    CHECK(qg.query.size() == 4);
    CHECK(qg.gallery.size() == 4 * 3);
    for (auto v : qg.query.views) CHECK(v == 0);
    for (auto v : qg.gallery.views) CHECK(v != 0);
}

TEST_CASE("ablation settings and driver contract") {
    const TrainConfig base = tiny_config();
    CHECK(resolve_settings(base, "components").size() == 4);
    CHECK(resolve_settings(base, "lambda").size() == 4);
    CHECK(resolve_settings(base, "placement").size() == 4);
    CHECK(resolve_settings(base, "all").size() == 12);
    CHECK_THROWS_AS(resolve_settings(base, "nonsense"), ContractError);

    const auto comps = component_settings(base);
    CHECK(comps[1].name == "+LPM");
    CHECK(comps[1].lpm_enabled);
    CHECK_FALSE(comps[1].gcm_enabled);
    CHECK(comps[1].apply(base).effective_lambda() == 0.0);
    CHECK(comps[2].apply(base).effective_lambda() == base.lambda);
    for (const auto& s : lambda_settings(base)) CHECK((s.lpm_enabled && s.gcm_enabled));
    for (const auto& s : placement_settings(base)) CHECK((s.lpm_enabled && s.gcm_enabled));

    const auto pair = resolve_settings(base, "baseline,full");
    REQUIRE(pair.size() == 2);
    const SyntheticData data = make_domains(base.data);
    const std::uint64_t seeds[] = {0, 1};
    const AblationTable table = ablate(base, data, pair, seeds);
    CHECK(table.rows.size() == 4);
    std::ostringstream csv;
    table.write_csv(csv);
    const std::string text = csv.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);

    // Same run reached through two studies is computed once and agrees.
    const auto both = resolve_settings(base, "full,lambda=1");
    const AblationTable dup = ablate(base, data, both, seeds);
    CHECK(dup.rows[0].target_map == dup.rows[2].target_map);
    CHECK(dup.rows[0].target_map == table.rows[2].target_map);

    const auto summary = table.summarize();
    REQUIRE(summary.size() == 2);
    const auto& full = table.summary(summary, "components", "full");
    CHECK(full.target_map == median({table.rows[2].target_map, table.rows[3].target_map}));
}

TEST_CASE("median") {
    CHECK(median({3, 1, 2}) == 2);
    CHECK(median({4, 1, 3, 2}) == 2.5);
    CHECK_THROWS_AS(median({}), ContractError);
}

TEST_CASE("gradcheck passes on the full loss and catches a corrupted rule") {
    for (double lambda : {0.0, 1.0}) {
        GradcheckConfig c;
        c.lambda = lambda;
        const auto r = gradcheck(c);
        CHECK(r.passed);
        CHECK(r.max_rel_error < 1e-3);
        CHECK(r.parameter_count <= 500);
    }
    GradcheckConfig bad;
    bad.corrupt_op = OpKind::conv2d;
    const auto r = gradcheck(bad);
    CHECK_FALSE(r.passed);
    CHECK(r.max_rel_error > 0.1);
    CHECK_FALSE(r.failing_blocks(1e-3).empty());
}

TEST_CASE("CLI exit codes and outputs") {
    const fs::path dir = fs::temp_directory_path() / "peca_test_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const nlohmann::json cfg = tiny_config();
    std::ofstream(dir / "cfg.json") << cfg.dump();
    std::ofstream(dir / "bad.json") << R"({"epochs": 2, "unknown": true})";
    std::ofstream(dir / "diverge.json") << R"({"epochs": 1, "base_lr": 1e300})";
    const std::string d = dir.string();

    CHECK(run_cli("train --config " + d + "/cfg.json --out " + d + "/run") == 0);
    CHECK(fs::exists(dir / "run" / "metrics.csv"));
    CHECK(fs::exists(dir / "run" / "checkpoint.peca"));
    CHECK(run_cli("eval --checkpoint " + d + "/run/checkpoint.peca --data " + d + "/cfg.json --metric euclidean") ==
          0);
    CHECK(run_cli("gen-data --spec " + d + "/cfg.json --seed 3 --out " + d + "/data") == 0);
    CHECK(run_cli("eval --checkpoint " + d + "/run/checkpoint.peca --data " + d + "/data") == 0);
    CHECK(run_cli("ablate --config " + d + "/cfg.json --seeds 1 --settings baseline --out " + d + "/abl") == 0);
    CHECK(fs::exists(dir / "abl" / "ablation.csv"));
    CHECK(run_cli("train --config " + d + "/bad.json --out " + d + "/x") == 2);
    CHECK(run_cli("train --config " + d + "/missing.json") == 2);
    CHECK(run_cli("eval --checkpoint " + d + "/cfg.json --data " + d + "/cfg.json") == 2);
    CHECK(run_cli("train --config " + d + "/diverge.json --out " + d + "/y") == 3);
    fs::remove_all(dir);
}
