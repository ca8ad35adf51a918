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

#include "pdval/data.hpp"
#include "pdval/errors.hpp"
#include "pdval/rng.hpp"

#include <array>
#include <cmath>
#include <cstdio>

namespace pdval {

namespace {

struct Bump {
    GeoPoint center;
    double amplitude;
    double radius_km;
};

std::vector<Bump> make_field(Rng& rng, const SyntheticOptions& o, std::size_t count, double amplitude) {
    std::vector<Bump> bumps;
    for (std::size_t b = 0; b < count; ++b) {
        const GeoPoint c{rng.uniform(o.min_lat, o.max_lat), rng.uniform(o.min_lon, o.max_lon)};
        bumps.push_back({c, rng.uniform(-amplitude, amplitude), rng.uniform(2.5, 6.0)});
    }
    return bumps;
}

double eval_field(const std::vector<Bump>& bumps, const GeoPoint& p) {
    double v = 0.0;
    for (const auto& b : bumps) {
        const double d = haversine_km(p, b.center);
        v += b.amplitude * std::exp(-d * d / (2.0 * b.radius_km * b.radius_km));
    }
    return v;
}

std::string district_name(std::size_t row, std::size_t col) {
    return "D" + std::to_string(row) + std::to_string(col);
}

} // namespace

SyntheticMarket generate_synthetic(const SyntheticOptions& o) {
    if (o.n < 10) throw InvalidInput("synthetic market needs n >= 10");
    if (!(o.spatial_strength >= 0.0 && o.spatial_strength <= 1.0))
        throw InvalidInput("spatial_strength must be in [0, 1]");
    if (!(o.noise_sd >= 0.0) || !(o.appraisal_noise_sd >= 0.0)) throw InvalidInput("noise levels must be >= 0");
    if (!(o.min_lat < o.max_lat) || !(o.min_lon < o.max_lon)) throw InvalidInput("empty bounding box");
    if (o.district_grid == 0 || o.district_grid > 9) throw InvalidInput("district_grid must be in 1..9");
    GeoPoint{o.min_lat, o.min_lon}.validate();
    GeoPoint{o.max_lat, o.max_lon}.validate();

    Rng rng(o.seed);
    const auto common = make_field(rng, o, 20, 1.5);
    const std::array<std::vector<Bump>, 2> by_type{make_field(rng, o, 8, 0.6), make_field(rng, o, 8, 0.6)};
    std::array<GeoPoint, 3> poi;
    for (auto& p : poi) p = {rng.uniform(o.min_lat, o.max_lat), rng.uniform(o.min_lon, o.max_lon)};

    constexpr std::array<double, 4> kMaterialEffect{0.0, 0.08, -0.06, 0.15};
    constexpr std::array<double, 2> kTypeEffect{0.0, 0.10};
    constexpr std::array<double, 2> kTypeLogArea{4.8, 4.3}; // house ~120 m2, apartment ~75 m2
    constexpr std::array<const char*, 2> kTypeName{"house", "apartment"};
    const double base = std::log(80.0);
    const int first_day = parse_date("2009-01-01");
    const int last_day = parse_date("2019-12-31");

    SyntheticMarket m;
    auto& d = m.data;
    d.continuous_names = {"area_m2", "appraisal_uf", "age_years", "bedrooms", "dist_poi_1_km", "dist_poi_2_km",
                          "dist_poi_3_km"};
    d.categorical_names = {"material", "property_type", "district"};

    const std::size_t g = o.district_grid;
    const double dlat = (o.max_lat - o.min_lat) / static_cast<double>(g);
    const double dlon = (o.max_lon - o.min_lon) / static_cast<double>(g);

    auto& s = m.schema;
    for (std::size_t r = 0; r < g; ++r)
        for (std::size_t c = 0; c < g; ++c) {
            // Boxes tile the bounding box; the last row/column ends exactly on its edge.
            const double lat0 = o.min_lat + dlat * static_cast<double>(r);
            const double lon0 = o.min_lon + dlon * static_cast<double>(c);
            const double lat1 = r + 1 == g ? o.max_lat : lat0 + dlat;
            const double lon1 = c + 1 == g ? o.max_lon : lon0 + dlon;
            s.regions.emplace(district_name(r, c), Region::box(lat0, lon0, lat1, lon1));
        }

    for (std::size_t i = 0; i < o.n; ++i) {
        // Redraw until the house passes every exclusion rule.
        for (int attempt = 0;; ++attempt) {
            if (attempt > 1000) throw Error("synthetic generator could not place a valid house");
            const GeoPoint p{rng.uniform(o.min_lat, o.max_lat), rng.uniform(o.min_lon, o.max_lon)};
            const std::size_t type = rng.uniform() < 0.5 ? 0 : 1;
            const double log_area = kTypeLogArea[type] + 0.2 * rng.normal();
            const double age = rng.uniform(0.0, 60.0);
            const double area = std::exp(log_area);
            const double bedrooms = std::max(1.0, std::min(6.0, std::round(area / 35.0 + 0.5 * rng.normal())));
            const std::size_t material = static_cast<std::size_t>(rng.below(4));
            const double structural = base + 0.9 * log_area - 0.004 * age + 0.03 * bedrooms +
                                      kMaterialEffect[material] + kTypeEffect[type];
            const double spatial = o.spatial_strength * (eval_field(common, p) + eval_field(by_type[type], p));
            const double log_price = structural + spatial + o.noise_sd * rng.normal();
            const double log_appraisal = std::log(0.3) + structural + spatial + o.appraisal_noise_sd * rng.normal();
            const double price = std::exp(log_price);
            const double appraisal = std::exp(log_appraisal);
            const double ratio = price / appraisal;
            const double per_m2 = price / area;
            if (!(price > 400.0 && price < 50000.0) || !(per_m2 > 30.0 && per_m2 < 6000.0) ||
                !(ratio > 1.0 && ratio < 10.0))
                continue;

            HouseRecord r;
            char id[32];
            std::snprintf(id, sizeof id, "H%06zu", i + 1);
            r.id = id;
            r.point = p;
            r.price_uf = price;
            r.appraisal_uf = appraisal;
            r.area_m2 = area;
            const auto row = std::min(g - 1, static_cast<std::size_t>((p.lat - o.min_lat) / dlat));
            const auto col = std::min(g - 1, static_cast<std::size_t>((p.lon - o.min_lon) / dlon));
            r.district = district_name(row, col);
            if (!s.regions.at(r.district).contains(p))
                for (const auto& [name, region] : s.regions)
                    if (region.contains(p)) {
                        r.district = name;
                        break;
                    }
            r.sale_day = first_day + static_cast<int>(rng.below(static_cast<std::uint64_t>(last_day - first_day + 1)));
            r.continuous = {area, appraisal, age, bedrooms, haversine_km(p, poi[0]), haversine_km(p, poi[1]),
                            haversine_km(p, poi[2])};
            r.categorical = {"M" + std::to_string(material), kTypeName[type], r.district};
            d.records.push_back(std::move(r));
            break;
        }
    }

    s.continuous = d.continuous_names;
    s.categorical = d.categorical_names;
    s.log_features = {"area_m2", "appraisal_uf"};
    // Adjacent districts in 2x2 blocks form the commune groups.
    for (std::size_t r = 0; r < g; ++r)
        for (std::size_t c = 0; c < g; ++c) {
            const std::size_t block = (r / 2) * ((g + 1) / 2) + c / 2;
            m.grouping.group_of.emplace(district_name(r, c), "Group " + std::to_string(block + 1));
        }
    return m;
}

} // namespace pdval
