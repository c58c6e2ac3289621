#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "yawdrive/bench.hpp"
#include "yawdrive/errors.hpp"
#include "yawdrive/expert.hpp"
#include "yawdrive/weights.hpp"

using namespace yawdrive;
namespace fs = std::filesystem;

namespace {

struct MapChoice
{
    RoadNetwork net;
    bool square = false;
};

MapChoice load_map(const std::string& spec)
{
    if (spec == "square") return {build_square_scene(), true};
    if (spec.starts_with("grid:")) {
        std::uint64_t seed = 0;
        int rows = 0, cols = 0;
        char c1 = 0, c2 = 0;
        std::istringstream in(spec.substr(5));
        if (!(in >> seed >> c1 >> rows >> c2 >> cols) || c1 != ',' || c2 != ',' || !in.eof())
            throw CLI::ValidationError("--map", "expected grid:seed,rows,cols");
        return {build_grid_town(seed, rows, cols), false};
    }
    if (spec.starts_with("file:")) return {load_scene(spec.substr(5)), false};
    throw CLI::ValidationError("--map", "expected square, grid:seed,r,c or file:path");
}

TaskSuite load_suite(const std::string& spec)
{
    if (spec == "square32") return square_suite();
    if (spec.starts_with("town:")) {
        std::uint64_t seed = 0;
        try {
            seed = std::stoull(spec.substr(5));
        } catch (const std::exception&) {
            throw CLI::ValidationError("--suite", "expected town:<seed>");
        }
        return town_suite(seed);
    }
    throw CLI::ValidationError("--suite", "expected square32 or town:<seed>");
}

struct LoadedPolicy
{
    PolicySpec spec;
    std::shared_ptr<const ParameterSet<double>> weights;
};

LoadedPolicy load_policy(const std::string& path, const std::string& kind)
{
    auto weights = std::make_shared<const ParameterSet<double>>(load_weights(path));
    PolicySpec spec = infer_spec(*weights);
    if (!kind.empty() && parse_policy_kind(kind) != spec.kind)
        throw ConditioningError(path + " holds a " + std::string(to_string(spec.kind)) + " policy, not " + kind);
    return {spec, std::move(weights)};
}

nlohmann::json stats_to_json(const DatasetStats& st)
{
    nlohmann::json j;
    j["per_command"] = nlohmann::json::object();
    for (int c = 0; c < kCommandCount; ++c) j["per_command"][std::string(to_string(static_cast<Command>(c)))] = st.per_command[c];
    j["per_tag"] = nlohmann::json::object();
    for (int t = 0; t < 3; ++t) j["per_tag"][std::string(to_string(static_cast<FrameTag>(t)))] = st.per_tag[t];
    j["steer_histogram"] = st.steer_hist;
    j["throttle_histogram"] = st.throttle_hist;
    j["brake_histogram"] = st.brake_hist;
    j["exclusion_violations"] = st.exclusion_violations;
    j["noised"] = st.noised;
    return j;
}

void print_report(const BenchReport& r)
{
    std::cout << r.policy << " on " << r.suite << ": " << r.mean << " +- " << r.std << " successes over "
              << r.seeds.size() << " seed(s)\n";
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"yaw-guided imitation-learning driving stack"};
    app.require_subcommand(1);

    // collect
    auto* collect_cmd = app.add_subcommand("collect", "drive the noisy expert and record a dataset");
    std::string map = "square";
    int episodes = 44;
    double noise = 0.1;
    std::uint64_t seed = 0;
    std::string out;
    double min_length = 100.0;
    collect_cmd->add_option("--map", map, "square | grid:seed,r,c | file:path")->capture_default_str();
    collect_cmd->add_option("--episodes", episodes, "number of episodes")->capture_default_str()->check(CLI::PositiveNumber);
    collect_cmd->add_option("--noise", noise, "per-step steering noise probability")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    collect_cmd->add_option("--seed", seed, "collection seed")->capture_default_str();
    collect_cmd->add_option("--min-length", min_length, "minimum route length on non-square maps (m)")->capture_default_str();
    collect_cmd->add_option("--out", out, "dataset directory")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train a policy on a dataset split");
    std::string data_dir, split = "full", policy = "yaw", weights_out, curve_out;
    TrainConfig tc;
    train_cmd->add_option("--data", data_dir, "dataset directory")->required();
    train_cmd->add_option("--split", split, "full | subset1 | subset2")
        ->capture_default_str()
        ->check(CLI::IsMember({"full", "subset1", "subset2"}));
    train_cmd->add_option("--policy", policy, "yaw | xy | cil")->capture_default_str()->check(CLI::IsMember({"yaw", "xy", "cil"}));
    train_cmd->add_option("--epochs", tc.epochs)->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--seed", tc.seed)->capture_default_str();
    train_cmd->add_option("--batch", tc.batch)->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", tc.lr)->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--halving", tc.halving, "epochs between learning-rate halvings")->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--epoch-samples", tc.epoch_samples, "frames drawn per epoch, 0 = all")->capture_default_str();
    train_cmd->add_option("--out", weights_out, "weights file")->required();
    train_cmd->add_option("--curve", curve_out, "loss curve CSV (default: <out>.csv)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "closed-loop benchmark of a trained policy");
    std::string weights_in, kind, suite_name = "square32", report_out, trace_dir;
    std::vector<std::uint64_t> seeds{0};
    unsigned threads = 1;
    eval_cmd->add_option("--weights", weights_in, "weights file")->required();
    eval_cmd->add_option("--policy", kind, "expected kind: yaw | xy | cil (default: from the weights)");
    eval_cmd->add_option("--suite", suite_name, "square32 | town:seed")->capture_default_str();
    eval_cmd->add_option("--seeds", seeds, "comma-separated suite seeds")->delimiter(',')->capture_default_str();
    eval_cmd->add_option("--report", report_out, "JSON report path");
    eval_cmd->add_option("--threads", threads, "worker threads, 0 = all cores")->capture_default_str();
    eval_cmd->add_option("--trace", trace_dir, "write a CSV trace per task of the first seed into this directory");

    // noise-bench
    auto* noise_cmd = app.add_subcommand("noise-bench", "robustness to guidance noise");
    std::string noise_kind = "yaw";
    std::vector<double> levels;
    noise_cmd->add_option("--kind", noise_kind, "yaw (levels in degrees) | command (levels as probabilities)")
        ->capture_default_str()
        ->check(CLI::IsMember({"yaw", "command"}));
    noise_cmd->add_option("--levels", levels, "noise levels")->delimiter(',')->required();
    noise_cmd->add_option("--weights", weights_in, "weights file")->required();
    noise_cmd->add_option("--policy", kind, "expected kind (default: from the weights)");
    noise_cmd->add_option("--suite", suite_name, "square32 | town:seed")->capture_default_str();
    noise_cmd->add_option("--seeds", seeds, "comma-separated suite seeds")->delimiter(',')->capture_default_str();
    noise_cmd->add_option("--report", report_out, "JSON file with one report per level");
    noise_cmd->add_option("--threads", threads)->capture_default_str();

    // heatmap
    auto* heat_cmd = app.add_subcommand("heatmap", "export attention heat maps for one record");
    std::size_t index = 0;
    heat_cmd->add_option("--weights", weights_in, "weights file")->required();
    heat_cmd->add_option("--data", data_dir, "dataset directory")->required();
    heat_cmd->add_option("--index", index, "record index")->capture_default_str();
    heat_cmd->add_option("--out", out, "output directory")->required();

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "dataset statistics as JSON");
    stats_cmd->add_option("--data", data_dir, "dataset directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*collect_cmd) {
            const MapChoice m = load_map(map);
            std::vector<Task> tasks;
            if (m.square) {
                const auto pool = square_collection_tasks();
                for (int i = 0; i < episodes; ++i) tasks.push_back(pool[static_cast<std::size_t>(i) % pool.size()]);
            } else {
                tasks = random_tasks(m.net, seed, episodes, min_length);
                if (static_cast<int>(tasks.size()) < episodes)
                    throw CollectionError("map admits only " + std::to_string(tasks.size()) + " tasks of length >= " +
                                          std::to_string(min_length));
            }
            CollectConfig cfg;
            cfg.seed = seed;
            cfg.expert.noise_prob = noise;
            cfg.map = map;
            const Dataset d = collect(m.net, tasks, cfg);
            save_dataset(d, out);
            std::cout << "collected " << d.records.size() << " frames from " << tasks.size() << " episodes into " << out
                      << "\n";
        } else if (*train_cmd) {
            const Dataset d = load_dataset(data_dir);
            const Splits sp = make_splits(d.manifest);
            const auto& idx = split == "full" ? sp.full : split == "subset1" ? sp.subset1 : sp.subset2;
            PolicySpec spec;
            spec.kind = parse_policy_kind(policy);
            const TrainResult r = train(spec, d, idx, tc, [](const LossPoint& p) {
                std::cout << "epoch " << p.epoch << " train " << p.train_loss << " val " << p.val_loss << " lr " << p.lr
                          << std::endl;
            });
            save_weights(r.weights, weights_out);
            write_loss_curve_csv(r.curve, curve_out.empty() ? weights_out + ".csv" : curve_out);
            std::cout << "best epoch " << r.best_epoch << ", weights written to " << weights_out << "\n";
        } else if (*eval_cmd) {
            const LoadedPolicy p = load_policy(weights_in, kind);
            const TaskSuite suite = load_suite(suite_name);
            const BenchReport r = run_suite(as_driving_policy(p.spec, p.weights), suite, seeds,
                                            std::string(to_string(p.spec.kind)), {}, threads);
            print_report(r);
            if (!report_out.empty()) write_report_json(r, report_out);
            if (!trace_dir.empty()) {
                fs::create_directories(trace_dir);
                for (std::size_t i = 0; i < suite.tasks.size(); ++i) {
                    const Task& t = suite.tasks[i];
                    const Route route = plan_route(suite.net, t.start, t.goal);
                    PolicyDriver driver(p.spec, p.weights);
                    const std::uint64_t es = episode_seed(seeds.front(), i);
                    driver.reset(es);
                    const EpisodeResult res =
                        run_episode(suite.net, route, driver, make_episode_config(route, t.start, t.goal), es);
                    write_trace_csv(res, fs::path(trace_dir) / ("task" + std::to_string(i) + ".csv"));
                }
            }
        } else if (*noise_cmd) {
            const LoadedPolicy p = load_policy(weights_in, kind);
            const TaskSuite suite = load_suite(suite_name);
            std::vector<BenchReport> reports;
            if (noise_kind == "yaw") {
                std::vector<double> radians;
                for (double deg : levels) radians.push_back(deg * std::numbers::pi / 180.0);
                reports = yaw_noise_harness(p.spec, p.weights, suite, radians, seeds, threads);
            } else {
                reports = command_noise_harness(p.spec, p.weights, suite, levels, seeds, threads);
            }
            nlohmann::json j = {{"kind", noise_kind}, {"levels", levels}, {"reports", nlohmann::json::array()}};
            for (std::size_t i = 0; i < reports.size(); ++i) {
                std::cout << "level " << levels[i] << ": ";
                print_report(reports[i]);
                j["reports"].push_back(report_to_json(reports[i]));
            }
            if (!report_out.empty()) {
                std::ofstream f(report_out);
                f << j.dump(2) << "\n";
                if (!f) throw WriteError("failed writing " + report_out);
            }
        } else if (*heat_cmd) {
            const LoadedPolicy p = load_policy(weights_in, "");
            const Dataset d = load_dataset(data_dir);
            if (index >= d.records.size())
                throw FormatError("index " + std::to_string(index) + " out of range for " + std::to_string(d.records.size()) +
                                  " records");
            fs::create_directories(out);
            const Prediction pred = heatmap_export(p.spec, *p.weights, d.records[index], out);
            std::cout << "steer " << pred.action.steer << " throttle " << pred.action.throttle << " brake "
                      << pred.action.brake << " speed " << pred.speed << "\n";
        } else if (*stats_cmd) {
            const Dataset d = load_dataset(data_dir);
            std::cout << stats_to_json(dataset_stats(d.records, d.manifest.tags)).dump(2) << "\n";
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
