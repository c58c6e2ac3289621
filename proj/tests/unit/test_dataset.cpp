#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "yawdrive/dataset.hpp"
#include "yawdrive/errors.hpp"
#include "yawdrive/suite.hpp"

using namespace yawdrive;

namespace {

RoadNetwork straight_road()
{
    RoadNetwork net;
    LaneSegment s;
    for (int i = -40; i <= 60; ++i) s.centerline.emplace_back(i, 0.0);
    net.segments.push_back(s);
    return net;
}

const Dataset& square_data()
{
    static const Dataset data = [] {
        CollectConfig cfg;
        cfg.seed = 5;
        const auto tasks = square_collection_tasks();
        return collect(build_square_scene(), tasks, cfg);
    }();
    return data;
}

} // namespace

TEST_CASE("raster of a straight road")
{
    const RoadNetwork net = straight_road();
    const Observation obs = rasterize(net, {{0, 0, 0}, 5.0});

    for (float v : obs.raster) REQUIRE((v == 0.0f || v == 1.0f));
    // Centered on the lane and aligned with it: mirror symmetric across the ego column.
    for (int ch = 0; ch < 3; ++ch)
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 32; ++c) REQUIRE(obs.at(ch, r, c) == obs.at(ch, r, 63 - c));

    // Oracle for the drivable channel: |left offset| <= 2 on every row.
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
            const Vec2 o = Observation::cell_offset(r, c);
            REQUIRE(obs.at(Observation::Drivable, r, c) == (std::abs(o.y()) <= 2.0 ? 1.0f : 0.0f));
            REQUIRE(obs.at(Observation::Boundary, r, c) == (std::abs(std::abs(o.y()) - 2.0) <= 0.25 ? 1.0f : 0.0f));
        }
    CHECK(std::count(obs.raster.begin() + 2 * 4096, obs.raster.end(), 1.0f) == 0);
}

TEST_CASE("raster of a turned vehicle is not symmetric")
{
    const Observation obs = rasterize(straight_road(), {{0, 0, 0.4}, 5.0});
    bool asym = false;
    for (int r = 0; r < 64 && !asym; ++r)
        for (int c = 0; c < 32; ++c) asym |= obs.at(0, r, c) != obs.at(0, r, 63 - c);
    CHECK(asym);
}

TEST_CASE("obstacles are painted in the third channel")
{
    RoadNetwork net = straight_road();
    net.obstacles.push_back({{10.0, 3.0}, 1.0});
    const Observation obs = rasterize(net, {{0, 0, 0}, 0.0});
    int expected = 0, got = 0;
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
            const Vec2 o = Observation::cell_offset(r, c);
            const bool inside = (o - Vec2(10.0, 3.0)).norm() <= 1.0;
            expected += inside;
            got += obs.at(Observation::Obstacles, r, c) == 1.0f;
            REQUIRE(obs.at(Observation::Obstacles, r, c) == (inside ? 1.0f : 0.0f));
        }
    CHECK(expected == got);
    CHECK(expected == doctest::Approx(3.14159 / 0.25).epsilon(0.1));
    // Row of forward 10 m, column of left 3 m.
    CHECK(obs.at(Observation::Obstacles, 27, 25) == 1.0f);
    // Out of view: nothing painted.
    net.obstacles[0].center = {-30, 0};
    const Observation none = rasterize(net, {{0, 0, 0}, 0.0});
    CHECK(std::count(none.raster.begin() + 2 * 4096, none.raster.end(), 1.0f) == 0);
}

TEST_CASE("frame tags")
{
    const RoadNetwork net = build_square_scene();
    const Vec2 centre = net.junctions[0].center;
    CHECK(tag_frame(net, centre, Command::Left, 0.3) == FrameTag::RoadOptionTurn);
    CHECK(tag_frame(net, centre + Vec2(30, 0.5), Command::Left, 0.3) == FrameTag::Cruise);
    CHECK(tag_frame(net, centre + Vec2(30, 0.5), Command::LaneFollow, 0.3) == FrameTag::LaneKeepTurn);
    CHECK(tag_frame(net, centre + Vec2(30, 0.5), Command::LaneFollow, -0.05) == FrameTag::Cruise);
    for (FrameTag t : {FrameTag::RoadOptionTurn, FrameTag::LaneKeepTurn, FrameTag::Cruise})
        CHECK(parse_frame_tag(to_string(t)) == t);
    CHECK_THROWS_AS(parse_frame_tag("turning"), FormatError);
}

TEST_CASE("collect over the square collection tasks")
{
    const Dataset& data = square_data();
    const auto& m = data.manifest;
    CHECK(m.frame_count == data.records.size());
    CHECK(m.tags.size() == data.records.size());
    CHECK(m.episode_count == square_collection_tasks().size());
    CHECK(data.records.size() > 3000);

    const DatasetStats st = dataset_stats(data.records, m.tags);
    for (std::size_t c : st.per_command) CHECK(c > 0);
    CHECK(std::max_element(st.per_command.begin(), st.per_command.end()) - st.per_command.begin() ==
          static_cast<int>(Command::LaneFollow));
    CHECK(std::max_element(st.steer_hist.begin(), st.steer_hist.end()) - st.steer_hist.begin() == 10);
    CHECK(st.exclusion_violations == 0);
    for (std::size_t t : st.per_tag) CHECK(t > 0);

    const double noised = static_cast<double>(st.noised) / data.records.size();
    CHECK(noised == doctest::Approx(0.1).epsilon(0.25));

    for (const Record& r : data.records) {
        REQUIRE(r.yaw_guide[0] == 0.0f);
        REQUIRE(r.action[1] * r.action[2] == 0.0f);
        REQUIRE(std::abs(r.action[0]) <= 1.0f);
    }
}

TEST_CASE("collection is deterministic per seed")
{
    const TaskSuite suite = square_suite();
    const std::vector<Task> two(suite.tasks.begin(), suite.tasks.begin() + 2);
    CollectConfig cfg;
    cfg.seed = 11;
    const Dataset a = collect(suite.net, two, cfg);
    const Dataset b = collect(suite.net, two, cfg);
    CHECK(a.records == b.records);
    CHECK(a.manifest == b.manifest);
    cfg.seed = 12;
    CHECK(collect(suite.net, two, cfg).records != a.records);
}

TEST_CASE("split algebra")
{
    const Dataset& data = square_data();
    const Splits s = make_splits(data.manifest);
    CHECK(s.full.size() == data.records.size());
    std::set<std::size_t> a(s.subset1.begin(), s.subset1.end()), b(s.subset2.begin(), s.subset2.end());
    std::set<std::size_t> uni, inter;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::inserter(uni, uni.end()));
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(inter, inter.end()));
    CHECK(uni.size() == s.full.size());
    for (std::size_t i : s.subset1) REQUIRE(data.manifest.tags[i] != FrameTag::LaneKeepTurn);
    for (std::size_t i : s.subset2) REQUIRE(data.manifest.tags[i] != FrameTag::RoadOptionTurn);
    for (std::size_t i : inter) REQUIRE(data.manifest.tags[i] == FrameTag::Cruise);
    const auto cruise = static_cast<std::size_t>(std::count(data.manifest.tags.begin(), data.manifest.tags.end(), FrameTag::Cruise));
    CHECK(inter.size() == cruise);
}

TEST_CASE("histogram bins and empty stats")
{
    CHECK(histogram_bin(-1.0, -1, 1, 21) == 0);
    CHECK(histogram_bin(0.0, -1, 1, 21) == 10);
    CHECK(histogram_bin(1.0, -1, 1, 21) == 20);
    CHECK(histogram_bin(0.95, 0, 1, 10) == 9);
    CHECK(histogram_bin(0.05, 0, 1, 10) == 0);
    CHECK_THROWS_AS(dataset_stats({}), EmptyDataset);
}

TEST_CASE("dataset save and load")
{
    const TaskSuite suite = square_suite();
    const std::vector<Task> one(suite.tasks.begin(), suite.tasks.begin() + 1);
    CollectConfig cfg;
    cfg.seed = 3;
    cfg.expert.cruise_speed = 7.5;
    const Dataset data = collect(suite.net, one, cfg);
    const auto dir = std::filesystem::temp_directory_path() / "yawdrive_dataset_test";
    std::filesystem::remove_all(dir);
    save_dataset(data, dir);
    const Dataset back = load_dataset(dir);
    CHECK(back.records == data.records);
    CHECK(back.manifest == data.manifest);
    CHECK(back.manifest.config.expert.cruise_speed == 7.5);

    const auto bin = dir / "records.bin";
    std::filesystem::resize_file(bin, std::filesystem::file_size(bin) - 100);
    CHECK_THROWS_AS(load_dataset(dir), CorruptData);
    {
        std::ofstream bad(bin, std::ios::binary);
        bad << "JUNKJUNKJUNK";
    }
    CHECK_THROWS_AS(load_dataset(dir), FormatError);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_dataset(dir), FormatError);
}
