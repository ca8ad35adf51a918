/*
 * Copyright 2026 The pdval Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pdval/data.hpp"
#include "pdval/errors.hpp"
#include "pdval/metrics.hpp"
#include "pdval/models.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <set>

using namespace pdval;

namespace {

Schema fixture_schema() { return Schema::from_json(nlohmann::json::parse(oracle::kFilterFixtureSchema)); }

std::set<std::string> ids_of(const std::vector<HouseRecord>& rs) {
    std::set<std::string> s;
    for (const auto& r : rs) s.insert(r.id + "@" + std::to_string(r.sale_day));
    return s;
}

/// Records straddling the price, ratio and price/m2 thresholds.
std::vector<HouseRecord> random_records(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<HouseRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        HouseRecord r;
        r.id = "R" + std::to_string(rng.below(n));
        r.point = {-33.5 + rng.uniform(-0.05, 0.05), -70.6 + rng.uniform(-0.05, 0.05)};
        r.price_uf = std::exp(rng.uniform(std::log(100.0), std::log(80000.0)));
        r.appraisal_uf = r.price_uf / std::exp(rng.uniform(-0.5, 3.0));
        r.area_m2 = r.price_uf / std::exp(rng.uniform(std::log(10.0), std::log(10000.0)));
        r.district = rng.uniform() < 0.9 ? "D1" : "D2";
        r.sale_day = static_cast<int>(rng.below(3000));
        out.push_back(r);
    }
    return out;
}

double r2_direct(const std::vector<double>& y, const std::vector<double>& f) {
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - f[i]) * (y[i] - f[i]);
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    return 1.0 - ss_res / ss_tot;
}

/// log price regressed on the generator's structural terms.
std::pair<std::vector<double>, std::vector<double>> structural_fit(const Dataset& d) {
    const std::size_t n = d.size();
    Matrix x(n, 7);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = d.records[i];
        x(i, 0) = std::log(r.continuous[0]);
        x(i, 1) = r.continuous[2];
        x(i, 2) = r.continuous[3];
        for (int m = 1; m <= 3; ++m) x(i, 2 + m) = r.categorical[0] == "M" + std::to_string(m) ? 1.0 : 0.0;
        x(i, 6) = r.categorical[1] == "apartment" ? 1.0 : 0.0;
        y[i] = std::log(r.price_uf);
    }
    const auto fitted = predict_linreg(fit_linreg(x, y), x);
    return {y, fitted};
}

} // namespace

TEST_CASE("dates") {
    CHECK(parse_date("1970-01-01") == 0);
    CHECK(parse_date("2015-06-01") - parse_date("2015-01-01") == 151);
    CHECK(format_date(parse_date("2016-02-29")) == "2016-02-29");
    CHECK_THROWS_AS(parse_date("2015-02-30"), InvalidInput);
    CHECK_THROWS_AS(parse_date("2015/01/01"), InvalidInput);
}

TEST_CASE("csv line splitting") {
    CHECK(split_csv_line("a,b,,c") == std::vector<std::string>{"a", "b", "", "c"});
    CHECK(split_csv_line("\"x,y\",z") == std::vector<std::string>{"x,y", "z"});
    CHECK(split_csv_line("\"a \"\"q\"\"\",b") == std::vector<std::string>{"a \"q\"", "b"});
}

TEST_CASE("regions") {
    const auto b = Region::box(-1, -1, 1, 1);
    CHECK(b.contains({0, 0}));
    CHECK_FALSE(b.contains({2, 0}));
    Region tri;
    tri.polygon = {{0, 0}, {0, 2}, {2, 0}};
    CHECK(tri.contains({0.5, 0.5}));
    CHECK_FALSE(tri.contains({1.5, 1.5}));
}

TEST_CASE("filter fixture drops one row per rule and both repeat sales") {
    const auto res = ingest_csv_text(oracle::kFilterFixtureCsv, fixture_schema());
    const auto& rep = res.report;
    CHECK(rep.input_count == 10);
    CHECK(rep.dropped_by(FilterRule::appraisal_ratio) == 1);
    CHECK(rep.dropped_by(FilterRule::price_range) == 1);
    CHECK(rep.dropped_by(FilterRule::price_per_m2) == 1);
    CHECK(rep.dropped_by(FilterRule::repeat_sale) == 2);
    CHECK(rep.dropped_by(FilterRule::commune_coordinates) == 1);
    CHECK(rep.output_count == 4);
    std::vector<std::string> ids;
    for (const auto& r : res.data.records) ids.push_back(r.id);
    CHECK(ids == std::vector<std::string>{"A1", "A7", "A8", "A9"});
    CHECK(rep.to_json().at("output_count") == 4);
}

TEST_CASE("filtering is idempotent") {
    const auto schema = fixture_schema();
    const auto first = ingest_csv_text(oracle::kFilterFixtureCsv, schema);
    const auto second = ingest_csv_text(dataset_to_csv(first.data, schema), schema);
    CHECK(second.report.input_count == 4);
    CHECK(second.report.output_count == 4);
    for (auto d : second.report.dropped) CHECK(d == 0);
    CHECK(second.data == first.data);

    auto m = generate_synthetic({.n = 300, .seed = 3});
    const auto again = ingest_csv_text(dataset_to_csv(m.data, m.schema), m.schema);
    CHECK(again.report.output_count == 300);
    CHECK(again.data.size() == 300);
}

TEST_CASE("swapping the price and price per m2 rules keeps the survivors") {
    const std::map<std::string, Region> regions{{"D1", Region::box(-34, -71, -33, -70)}};
    auto swapped = kDefaultFilterOrder;
    std::swap(swapped[1], swapped[2]);
    bool counts_differ = false;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto recs = random_records(200, seed);
        const auto a = apply_filters(recs, regions);
        const auto b = apply_filters(recs, regions, swapped);
        CHECK(ids_of(a.kept) == ids_of(b.kept));
        CHECK(a.report.input_count == a.report.output_count + a.removed.size());
        counts_differ |= a.report.dropped != b.report.dropped;
    }
    CHECK(counts_differ);
}

TEST_CASE("repeat sales farther apart than a year are kept") {
    HouseRecord r;
    r.id = "P";
    r.point = {-33.5, -70.6};
    r.price_uf = 3000;
    r.appraisal_uf = 1000;
    r.area_m2 = 80;
    r.district = "D1";
    r.sale_day = 0;
    auto s = r;
    s.sale_day = 365;
    auto t = r;
    t.sale_day = 800;
    const std::map<std::string, Region> regions{{"D1", Region::box(-34, -71, -33, -70)}};
    CHECK(apply_filters({r, s}, regions).report.output_count == 2);
    s.sale_day = 364;
    const auto res = apply_filters({r, s, t}, regions);
    CHECK(res.report.dropped_by(FilterRule::repeat_sale) == 3);
}

TEST_CASE("empty and all-valid inputs") {
    const auto schema = fixture_schema();
    const auto empty = ingest_csv_text("id,lat,lon,price_uf,appraisal_uf,area_m2,district,sale_date,rooms,kind\n", schema);
    CHECK(empty.data.size() == 0);
    CHECK(empty.report.input_count == 0);
    CHECK(empty.report.output_count == 0);
    for (auto d : empty.report.dropped) CHECK(d == 0);

    const std::string valid = "id,lat,lon,price_uf,appraisal_uf,area_m2,district,sale_date,rooms,kind\n"
                              "A1,-33.50,-70.60,3000,1000,80,D1,2015-01-01,3,house\n"
                              "A7,-33.52,-70.60,5000,2000,120,D2,2016-03-04,4,house\n";
    const auto ok = ingest_csv_text(valid, schema);
    CHECK(ok.report.output_count == ok.report.input_count);
}

TEST_CASE("missing column names the column") {
    const std::string text = "id,lat,lon,price_uf,appraisal_uf,area_m2,district,sale_date,kind\n";
    try {
        ingest_csv_text(text, fixture_schema());
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("rooms") != std::string::npos);
    }
}

TEST_CASE("malformed rows become rejects") {
    const std::string text = "id,lat,lon,price_uf,appraisal_uf,area_m2,district,sale_date,rooms,kind\n"
                             "A1,-33.50,-70.60,3000,1000,80,D1,2015-01-01,3,house\n"
                             "B1,-33.50,-70.60,abc,1000,80,D1,2015-01-01,3,house\n"
                             "B2,-33.50,-70.60,3000,1000,80,D1,2015-13-01,3,house\n"
                             "B3,-33.50,-70.60,3000\n"
                             "B4,-133.50,-70.60,3000,1000,80,D1,2015-01-01,3,house\n";
    const auto res = ingest_csv_text(text, fixture_schema());
    CHECK(res.data.size() == 1);
    CHECK(res.report.parse_rejected == 4);
    REQUIRE(res.rejects.size() == 4);
    for (const auto& r : res.rejects) CHECK_FALSE(r.reason.empty());
    const std::string csv = rejects_to_csv(res.header, res.rejects);
    CHECK(csv.substr(0, csv.find('\n')).ends_with(",reject_reason"));
}

TEST_CASE("commune groups") {
    const auto data = ingest_csv_text(oracle::kFilterFixtureCsv, fixture_schema()).data;
    const auto id = commune_groups(data, Grouping::identity(data));
    CHECK(id.size() == 2);
    CHECK(id.at("D1") == std::vector<std::size_t>{0, 3});
    CHECK(id.at("D2") == std::vector<std::size_t>{1, 2});

    Grouping only_d2;
    only_d2.group_of["D2"] = "South";
    const auto g = commune_groups(data, only_d2);
    CHECK(g.at("South").size() == 2);
    CHECK(g.at(std::string(kUngroupedGroup)).size() == 2);

    const auto j = nlohmann::json::parse(R"({"groups": {"G1": ["D1"], "G2": ["D2", "D3"]}})");
    CHECK(Grouping::from_json(j).group_of.at("D3") == "G2");
    CHECK(Grouping::from_json(Grouping::from_json(j).to_json()).group_of == Grouping::from_json(j).group_of);
    CHECK_THROWS_AS(Grouping::from_json(nlohmann::json::parse(R"({"groups": {"G1": ["D1"], "G2": ["D1"]}})")),
                    SchemaError);
}

TEST_CASE("commune groups partition the records") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto m = generate_synthetic({.n = 400, .seed = seed});
        // drop a random district from the grouping
        Rng rng(seed);
        auto grouping = m.grouping;
        auto it = grouping.group_of.begin();
        std::advance(it, static_cast<long>(rng.below(grouping.group_of.size())));
        grouping.group_of.erase(it);
        const auto groups = commune_groups(m.data, grouping);
        std::vector<int> seen(m.data.size(), 0);
        for (const auto& [name, rows] : groups)
            for (auto r : rows) {
                ++seen[r];
                const auto& d = m.data.records[r].district;
                const auto g = grouping.group_of.find(d);
                CHECK(name == (g == grouping.group_of.end() ? std::string(kUngroupedGroup) : g->second));
            }
        for (int s : seen) CHECK(s == 1);
    }
}

TEST_CASE("synthetic generator is deterministic and passes the filters") {
    const SyntheticOptions o{.n = 500, .spatial_strength = 0.8, .seed = 42};
    const auto a = generate_synthetic(o), b = generate_synthetic(o);
    CHECK(dataset_to_csv(a.data, a.schema) == dataset_to_csv(b.data, b.schema));
    auto o2 = o;
    o2.seed = 43;
    CHECK(dataset_to_csv(a.data, a.schema) != dataset_to_csv(generate_synthetic(o2).data, a.schema));
    const auto f = apply_filters(a.data.records, a.schema.regions);
    CHECK(f.report.output_count == 500);
    CHECK_THROWS_AS(generate_synthetic({.n = 5}), InvalidInput);
    CHECK_THROWS_AS(generate_synthetic({.n = 50, .spatial_strength = 1.5}), InvalidInput);
}

TEST_CASE("without spatial structure a linear fit explains the prices") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto m = generate_synthetic({.n = 1000, .spatial_strength = 0.0, .seed = seed});
        const auto [y, f] = structural_fit(m.data);
        CHECK(r2_direct(y, f) > 0.95);
    }
}

TEST_CASE("without spatial structure the residuals show no autocorrelation") {
    int quiet = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto m = generate_synthetic({.n = 400, .spatial_strength = 0.0, .seed = seed});
        const auto [y, f] = structural_fit(m.data);
        std::vector<double> resid(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - f[i];
        const auto pts = m.data.points();
        const auto res = morans_i(resid, knn_weights(pts, 8), 999, seed);
        quiet += res.p_value > 0.05;
    }
    CHECK(quiet >= 18);
}

TEST_CASE("full spatial strength gives strong autocorrelation") {
    const auto m = generate_synthetic({.n = 2000, .spatial_strength = 1.0, .seed = 7});
    const auto pts = m.data.points();
    const auto res = morans_i(m.data.prices(), knn_weights(pts, 8), 99, 7);
    CHECK(res.i > 0.5);
    CHECK(res.p_value == doctest::Approx(0.01));
}
