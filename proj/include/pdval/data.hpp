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

#pragma once

#include "pdval/geo.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pdval {

/// One transaction. Prices are in UF.
struct HouseRecord {
    std::string id;
    GeoPoint point;
    double price_uf = 0.0;
    double appraisal_uf = 0.0;
    double area_m2 = 0.0;
    std::vector<double> continuous;       // aligned with Dataset::continuous_names
    std::vector<std::string> categorical; // aligned with Dataset::categorical_names
    std::string district;
    int sale_day = 0; // days since 1970-01-01

    friend bool operator==(const HouseRecord&, const HouseRecord&) = default;
};

struct Dataset {
    std::vector<std::string> continuous_names;
    std::vector<std::string> categorical_names;
    std::vector<HouseRecord> records;

    std::size_t size() const noexcept { return records.size(); }
    std::vector<GeoPoint> points() const;
    std::vector<double> prices() const;
    /// Position of a continuous column, or nullopt.
    std::optional<std::size_t> continuous_index(std::string_view name) const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// "YYYY-MM-DD" <-> days since epoch.
int parse_date(std::string_view s);
std::string format_date(int day);

/// Commune region: an axis-aligned box or a simple polygon (lat, lon vertices).
struct Region {
    std::vector<GeoPoint> polygon; // empty when a box is used
    double min_lat = 0, min_lon = 0, max_lat = 0, max_lon = 0;

    bool contains(const GeoPoint& p) const;
    static Region box(double min_lat, double min_lon, double max_lat, double max_lon);
};

/// Column roles of an input CSV plus the commune regions used by the last filter.
struct Schema {
    std::string id = "id";
    std::string lat = "lat";
    std::string lon = "lon";
    std::string price = "price_uf";
    std::string appraisal = "appraisal_uf";
    std::string area = "area_m2";
    std::string district = "district";
    std::string sale_date = "sale_date";
    /// Model features; may name role columns such as area_m2.
    std::vector<std::string> continuous;
    std::vector<std::string> categorical;
    /// Continuous features that get a natural log before min-max scaling.
    std::vector<std::string> log_features;
    std::map<std::string, Region> regions;

    static Schema from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

enum class FilterRule : std::size_t {
    appraisal_ratio = 0, // 1 < price / appraisal < 10
    price_range,         // 400 < price < 50000 UF
    price_per_m2,        // 30 < price / m2 < 6000
    repeat_sale,         // same property sold twice within 365 days
    commune_coordinates, // point outside the declared commune region
};
inline constexpr std::size_t kFilterRuleCount = 5;
std::string_view to_string(FilterRule r);
inline constexpr std::array<FilterRule, kFilterRuleCount> kDefaultFilterOrder{
    FilterRule::appraisal_ratio, FilterRule::price_range, FilterRule::price_per_m2, FilterRule::repeat_sale,
    FilterRule::commune_coordinates};

struct FilterReport {
    std::size_t input_count = 0;
    std::array<std::size_t, kFilterRuleCount> dropped{}; // indexed by FilterRule
    std::size_t output_count = 0;
    std::size_t parse_rejected = 0; // rows that never became records

    std::size_t dropped_by(FilterRule r) const { return dropped[static_cast<std::size_t>(r)]; }
    nlohmann::json to_json() const;
};

struct FilterResult {
    std::vector<HouseRecord> kept;
    /// (index into the input, rule that removed it), in removal order.
    std::vector<std::pair<std::size_t, FilterRule>> removed;
    FilterReport report;
};

/// Applies the exclusion rules in `order`; each rule only sees the survivors
/// of the previous ones. The repeat-sale rule drops every sale of a property
/// that has two sales less than 365 days apart.
FilterResult apply_filters(std::vector<HouseRecord> records, const std::map<std::string, Region>& regions,
                           const std::array<FilterRule, kFilterRuleCount>& order = kDefaultFilterOrder);

struct RejectRow {
    std::vector<std::string> fields;
    std::string reason;
};

struct IngestResult {
    Dataset data;
    FilterReport report;
    std::vector<std::string> header;
    std::vector<RejectRow> rejects;
};

/// Reads a comma-separated file with a header row. Missing role or feature
/// columns raise SchemaError; malformed rows become rejects.
IngestResult ingest_csv(const std::string& path, const Schema& schema);
IngestResult ingest_csv_text(const std::string& text, const Schema& schema);

/// Writes records with role columns first, then any remaining feature columns.
std::string dataset_to_csv(const Dataset& data, const Schema& schema);
std::string rejects_to_csv(const std::vector<std::string>& header, const std::vector<RejectRow>& rejects);

/// Splits a CSV line, honouring double quotes.
std::vector<std::string> split_csv_line(std::string_view line);

// ---- commune groups ----------------------------------------------------------

inline constexpr std::string_view kUngroupedGroup = "__ungrouped__";

/// district -> group name.
struct Grouping {
    std::map<std::string, std::string> group_of;

    /// {"groups": {"Group 1": ["LAS CONDES", ...], ...}}
    static Grouping from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    /// Every district is its own group.
    static Grouping identity(const Dataset& data);
};

/// group -> record indices; districts without a group land in kUngroupedGroup.
std::map<std::string, std::vector<std::size_t>> commune_groups(const Dataset& data, const Grouping& grouping);

// ---- synthetic market --------------------------------------------------------

struct SyntheticOptions {
    std::size_t n = 1000;
    double spatial_strength = 0.8; // in [0, 1]
    std::uint64_t seed = 0;
    double noise_sd = 0.05;        // log-price noise
    double appraisal_noise_sd = 0.15;
    double min_lat = -33.65, max_lat = -33.35;
    double min_lon = -70.80, max_lon = -70.50;
    std::size_t district_grid = 4; // districts form a grid x grid tiling
};

struct SyntheticMarket {
    Dataset data;
    Schema schema;
    Grouping grouping;
};

/// Spatially autocorrelated housing market. Log price decomposes as
///   base + 0.9 log(area) - 0.004 age + material and type effects
///   + strength * (common field + type-specific field) + noise,
/// where the fields are sums of Gaussian bumps. The appraisal sees the same
/// structural terms with independent noise. Every record passes the filters.
SyntheticMarket generate_synthetic(const SyntheticOptions& options);

} // namespace pdval
