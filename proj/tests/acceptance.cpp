// Acceptance runner: one PASS/FAIL line per criterion, exit 0 only when all
// of them hold. Ablation tables land in the working directory.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"
#include "peca/ablate.hpp"
#include "peca/gradcheck.hpp"
#include "peca/json_io.hpp"
#include "peca/lpm.hpp"
#include "oracles.hpp"

using namespace peca;
using namespace peca::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int digits = 4) {
    std::ostringstream ss;
    ss.precision(digits);
    ss << v;
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PECA_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Verdict gradient_oracle() {
    const auto t0 = Clock::now();
    const int rc = run_cli("gradcheck");
    double worst = 0.0;
    for (double lambda : {0.0, 1.0}) {
        GradcheckConfig c;
        c.lambda = lambda;
        worst = std::max(worst, gradcheck(c).max_rel_error);
    }
    const double t = seconds_since(t0);
    return {rc == 0 && worst < 1e-3 && t < 60.0,
            "peca gradcheck exit " + std::to_string(rc) + ", max rel err " + num(worst) + " over lambda {0, 1}, " +
                num(t, 3) + " s"};
}

Verdict lpm_identity_and_distribution() {
    const auto t0 = Clock::now();
    double identity_err = 0.0;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        RngStream rng(StreamTag::test, {500, trial});
        Graph g;
        const Var e = g.constant(spread_map({6, 4, 5, 3}, rng));
        const NoiseDraw zeros{Tensor::zeros({6, 4}), Tensor::zeros({6, 4})};
        LpmContext ctx;
        ctx.injected_noise = &zeros;
        const std::vector<std::size_t> dom(6, 1);
        identity_err = std::max(identity_err, max_abs_diff(lpm_apply(e, dom, 0, true, ctx).value(), e.value()));
    }

    // mu_hat of one instance across 10000 independent draws against the
    // batch dispersion it is scaled by.
    RngStream rng(StreamTag::test, {501});
    Graph g;
    const MomentPair mp = instance_moments(g.constant(spread_map({8, 3, 4, 4}, rng)));
    const Tensor h_mu = dispersion(mp.mu.value());
    const Tensor h_sigma = dispersion(mp.sigma.value());
    const std::size_t draws = 10000, C = 3;
    std::vector<double> sum(C, 0.0), sq(C, 0.0);
    RngStream noise = lpm_stream(9, 0, 0, 0);
    for (std::size_t n = 0; n < draws; ++n) {
        const PerturbedMoments pm = perturb_moments(mp, h_mu, h_sigma, noise);
        for (std::size_t c = 0; c < C; ++c) {
            const double x = pm.mu_hat.value().at(0, c);
            sum[c] += x;
            sq[c] += x * x;
        }
    }
    double worst_rel = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        const double mean = sum[c] / draws;
        const double sd = std::sqrt(sq[c] / draws - mean * mean);
        worst_rel = std::max(worst_rel, std::abs(sd - h_mu[c]) / h_mu[c]);
    }
    const double t = seconds_since(t0);
    return {identity_err < 1e-9 && worst_rel < 0.05 && t < 30.0,
            "zero-noise max |e_hat - e| " + num(identity_err) + ", worst std(mu_hat)/h deviation " +
                num(100.0 * worst_rel, 3) + "%, " + num(t, 3) + " s"};
}

Verdict moment_reconstruction() {
    // A sigma_hat clamped to eps_num sits below the sqrt(eps_num) floor that
    // instance_moments puts on every recomputed sigma, so those entries are
    // held to the floor's exact prediction instead: sqrt((sigma_hat*raw/sigma)^2 + eps).
    double worst = 0.0, worst_clamped = 0.0;
    std::size_t entries = 0, clamped = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        RngStream rng(StreamTag::test, {502, trial});
        Graph g;
        const Var e = g.constant(spread_map({1 + rng.index(6), 1 + rng.index(4), 2 + rng.index(4), 2 + rng.index(4)}, rng));
        const MomentPair mp = instance_moments(e);
        const PerturbedMoments pm =
            perturb_moments(mp, dispersion(mp.mu.value()), dispersion(mp.sigma.value()), rng);
        const MomentPair back = instance_moments(reassemble(e, mp, pm));
        const MomentPair raw = instance_moments(e, 0.0);
        worst = std::max(worst, max_abs_diff(back.mu.value(), pm.mu_hat.value()));
        for (std::size_t i = 0; i < pm.sigma_hat.value().numel(); ++i) {
            const double sh = pm.sigma_hat.value()[i];
            ++entries;
            if (sh > kEpsNum) {
                worst = std::max(worst, std::abs(back.sigma.value()[i] - sh));
                continue;
            }
            ++clamped;
            const double s = sh * raw.sigma.value()[i] / mp.sigma.value()[i];
            worst_clamped = std::max(worst_clamped, std::abs(back.sigma.value()[i] - std::sqrt(s * s + kEpsNum)));
        }
    }
    return {worst < 1e-3 && worst_clamped < 1e-9,
            "100 cases, max moment error " + num(worst) + " over " + std::to_string(entries - clamped) +
                " unclamped channels; " + std::to_string(clamped) + " clamped channels at the floor within " +
                num(worst_clamped)};
}

Verdict gcm_oracles() {
    const GlobalMoments ex = global_moments(raw_memory({{{0.0}, {2.0}}, {{4.0}}}, 1));
    double worst = std::max(std::abs(ex.mu_g[0] - 2.5), std::abs(ex.sigma_g[0] - std::sqrt(2.75)));
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        RngStream rng(StreamTag::test, {503, trial});
        const std::size_t d = 1 + rng.index(4);
        const Banks banks = random_banks(rng, d);
        const GlobalMoments gm = global_moments(raw_memory(banks, d));
        const auto [mu, sigma] = brute_moments(banks, d);
        for (std::size_t j = 0; j < d; ++j)
            worst = std::max({worst, std::abs(gm.mu_g[j] - mu[j]), std::abs(gm.sigma_g[j] - sigma[j])});

        Graph g;
        std::vector<Var> vars;
        std::vector<std::vector<std::vector<double>>> plain;
        const std::size_t K = 1 + rng.index(3);
        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t b = 2 + rng.index(4);
            const Tensor t = random_tensor({b, d}, rng);
            vars.push_back(g.constant(t));
            std::vector<std::vector<double>> rows(b);
            for (std::size_t i = 0; i < b; ++i)
                rows[i].assign(t.values().begin() + i * d, t.values().begin() + (i + 1) * d);
            plain.push_back(rows);
        }
        worst = std::max(worst, std::abs(calibration_loss(vars, gm).value().item() -
                                         brute_calibration(plain, mu, sigma, kEpsNum)));
    }
    return {worst < 1e-9, "worked example + 50 random memories, max deviation " + num(worst)};
}

Verdict memory_semantics() {
    RngStream rng(StreamTag::test, {504});
    double worst = 0.0;
    const ClassRef ref{0, 0};
    const Tensor v = random_tensor({1, 4}, rng, 2.0);
    const std::vector<double> start = {0.5, 0.5, 0.5, 0.5};

    PrototypeMemory frozen = raw_memory({{start}}, 4);
    memory_update(frozen, v, std::span<const ClassRef>(&ref, 1), 1.0);
    for (std::size_t j = 0; j < 4; ++j) worst = std::max(worst, std::abs(frozen.prototype(ref)[j] - start[j]));

    PrototypeMemory replaced = raw_memory({{start}}, 4);
    memory_update(replaced, v, std::span<const ClassRef>(&ref, 1), 0.0);
    double n = 0.0;
    for (double x : v.values()) n += x * x;
    for (std::size_t j = 0; j < 4; ++j)
        worst = std::max(worst, std::abs(replaced.prototype(ref)[j] - v[j] / std::sqrt(n)));

    PrototypeMemory mem = memory_init({5, 4, 3}, 6);
    for (int step = 0; step < 50; ++step) {
        std::vector<ClassRef> refs;
        for (int i = 0; i < 8; ++i) {
            const std::size_t k = rng.index(3);
            refs.push_back({k, rng.index(mem.identity_count(k))});
        }
        memory_update(mem, random_tensor({8, 6}, rng, 3.0), refs, rng.uniform());
        for (const ClassRef& c : mem.classes()) {
            double q = 0.0;
            for (double x : mem.prototype(c)) q += x * x;
            worst = std::max(worst, std::abs(std::sqrt(q) - 1.0));
        }
    }

    // The loss graph never holds the prototypes as trainable leaves.
    Graph g;
    const Var x = g.leaf(random_tensor({4, 6}, rng), true);
    const std::vector<ClassRef> y = {{0, 1}, {1, 0}, {2, 2}, {0, 1}};
    const Var parts[] = {x};
    const Var loss = add(identity_loss(memory_classify(x, mem), y), calibration_loss(parts, global_moments(mem)));
    g.backward(loss);
    std::size_t trainable = 0;
    for (NodeId id = 0; id < g.size(); ++id)
        if (g.kind(id) == OpKind::leaf && id != x.id() && g.requires_grad(id)) ++trainable;
    return {worst <= 1e-9 && trainable == 0,
            "beta=1/beta=0/unit-norm max deviation " + num(worst) + ", trainable memory leaves " +
                std::to_string(trainable)};
}

Verdict metrics_oracle() {
    std::size_t mismatches = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        const auto [dist, ql, qv, gl, gv] = random_ranking(trial);
        const auto got = cmc_map(dist, ql, qv, gl, gv);
        const auto want = brute_cmc(dist, ql, qv, gl, gv);
        if (got.map != want.map || got.rank1 != want.rank1 || got.valid_queries != want.valid_queries) ++mismatches;
    }
    return {mismatches == 0, "100 random 10x50 rankings, " + std::to_string(mismatches) + " mismatches"};
}

struct Studies {
    AblationTable table;
    std::vector<AblationSummary> summary;
    double seconds = 0.0;

    const AblationSummary& get(const std::string& study, const std::string& name) const {
        return table.summary(summary, study, name);
    }
};

Studies run_studies() {
    const TrainConfig base;
    const SyntheticData data = make_domains(base.data);
    const auto settings = resolve_settings(base, "all");
    std::vector<std::uint64_t> seeds(5);
    std::iota(seeds.begin(), seeds.end(), base.seed);
    const auto t0 = Clock::now();
    Studies s;
    s.table = ablate(base, data, settings, seeds);
    s.seconds = seconds_since(t0);
    s.summary = s.table.summarize();
    std::ofstream csv("acceptance_ablation.csv");
    s.table.write_csv(csv);
    std::ofstream summary("acceptance_ablation_summary.csv");
    s.table.write_summary_csv(summary);
    return s;
}

Verdict ablation_direction(const Studies& s) {
    const double base = s.get("components", "baseline").target_map;
    const double lpm = s.get("components", "+LPM").target_map;
    const double gcm = s.get("components", "+GCM").target_map;
    const double full = s.get("components", "full").target_map;
    const bool ok = full > base && full - base >= 0.03 && lpm >= base && gcm >= base && s.seconds < 600.0;
    return {ok, "median target mAP baseline " + num(base) + ", +LPM " + num(lpm) + ", +GCM " + num(gcm) + ", full " +
                    num(full) + " (need full - baseline >= 0.03, +LPM and +GCM >= baseline); all studies " +
                    num(s.seconds, 3) + " s"};
}

Verdict lambda_direction(const Studies& s) {
    const double l01 = s.get("lambda", "lambda=0.1").target_map;
    const double l1 = s.get("lambda", "lambda=1").target_map;
    const double l10 = s.get("lambda", "lambda=10").target_map;
    const double l100 = s.get("lambda", "lambda=100").target_map;
    const bool ok = l100 < l1 && std::abs(l01 - l1) <= 0.05;
    return {ok, "median target mAP lambda 0.1 " + num(l01) + ", 1 " + num(l1) + ", 10 " + num(l10) + ", 100 " +
                    num(l100) + " (need 100 < 1 and |0.1 - 1| <= 0.05)"};
}

Verdict placement_direction(const Studies& s) {
    const double none = s.get("placement", "plan=none").target_map;
    const double shallow = s.get("placement", "plan=shallow").target_map;
    const double deep = s.get("placement", "plan=deep").target_map;
    const double all = s.get("placement", "plan=all").target_map;
    const bool ok = shallow >= none && all >= none;
    return {ok, "median target mAP none " + num(none) + ", shallow " + num(shallow) + ", deep " + num(deep) +
                    ", all " + num(all) + " (need shallow >= none and all >= none)"};
}

Verdict tradeoff_direction(const Studies& s) {
    const auto& base = s.get("components", "baseline");
    const auto& full = s.get("components", "full");
    const bool ok = full.source_map <= base.source_map && full.target_map > base.target_map;
    return {ok, "median source mAP baseline " + num(base.source_map) + " vs full " + num(full.source_map) +
                    "; target " + num(base.target_map) + " vs " + num(full.target_map)};
}

Verdict determinism() {
    const fs::path dir = fs::temp_directory_path() / "peca_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << nlohmann::json(TrainConfig{}).dump(2);
    const std::string d = dir.string();
    const int a = run_cli("train --config " + d + "/config.json --seed 3 --out " + d + "/a");
    const int b = run_cli("train --config " + d + "/config.json --seed 3 --out " + d + "/b");
    const std::string ma = slurp(dir / "a" / "metrics.csv");
    const std::string mb = slurp(dir / "b" / "metrics.csv");
    const bool ok = a == 0 && b == 0 && !ma.empty() && ma == mb;
    fs::remove_all(dir);
    return {ok, "two peca train runs: exit " + std::to_string(a) + "/" + std::to_string(b) + ", metrics.csv " +
                    std::to_string(ma.size()) + " bytes, " + (ma == mb ? "identical" : "different")};
}

}  // namespace

int main() {
    std::size_t failed = 0;
    auto report = [&](int id, const std::string& name, const std::function<Verdict()>& check) {
        const auto t0 = Clock::now();
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        if (!v.pass) ++failed;
        std::printf("%s criterion %2d  %-30s %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", id, name.c_str(),
                    v.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    };

    report(1, "gradient oracle", gradient_oracle);
    report(2, "LPM identity & distribution", lpm_identity_and_distribution);
    report(3, "moment reconstruction", moment_reconstruction);
    report(4, "GCM arithmetic oracles", gcm_oracles);
    report(5, "memory semantics", memory_semantics);
    report(6, "metrics oracle", metrics_oracle);

    std::optional<Studies> studies;
    std::string study_error;
    try {
        studies = run_studies();
    } catch (const std::exception& e) {
        study_error = e.what();
    }
    auto with_studies = [&](Verdict (*f)(const Studies&)) {
        return [&, f]() -> Verdict {
            if (!studies) return {false, "ablation failed: " + study_error};
            return f(*studies);
        };
    };
    report(7, "ablation direction", with_studies(ablation_direction));
    report(8, "lambda-sweep direction", with_studies(lambda_direction));
    report(9, "placement direction", with_studies(placement_direction));
    report(10, "trade-off direction", with_studies(tradeoff_direction));
    report(11, "determinism", determinism);

    std::printf("%zu of 11 criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
