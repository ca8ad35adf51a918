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
#include "pdval/format.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

namespace pdval {

using nlohmann::json;

std::vector<GeoPoint> Dataset::points() const {
    std::vector<GeoPoint> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.point);
    return out;
}

std::vector<double> Dataset::prices() const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.price_uf);
    return out;
}

std::optional<std::size_t> Dataset::continuous_index(std::string_view name) const {
    for (std::size_t i = 0; i < continuous_names.size(); ++i)
        if (continuous_names[i] == name) return i;
    return std::nullopt;
}

// ---- dates -------------------------------------------------------------------

int parse_date(std::string_view s) {
    int y = 0;
    unsigned m = 0, d = 0;
    auto bad = [&] { return InvalidInput("bad date '" + std::string(s) + "' (expected YYYY-MM-DD)"); };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw bad();
    if (std::from_chars(s.data(), s.data() + 4, y).ec != std::errc{}) throw bad();
    if (std::from_chars(s.data() + 5, s.data() + 7, m).ec != std::errc{}) throw bad();
    if (std::from_chars(s.data() + 8, s.data() + 10, d).ec != std::errc{}) throw bad();
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw bad();
    return static_cast<int>(std::chrono::sys_days{ymd}.time_since_epoch().count());
}

std::string format_date(int day) {
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

// ---- regions -----------------------------------------------------------------

Region Region::box(double min_lat, double min_lon, double max_lat, double max_lon) {
    Region r;
    r.min_lat = min_lat;
    r.min_lon = min_lon;
    r.max_lat = max_lat;
    r.max_lon = max_lon;
    return r;
}

bool Region::contains(const GeoPoint& p) const {
    if (polygon.empty())
        return p.lat >= min_lat && p.lat <= max_lat && p.lon >= min_lon && p.lon <= max_lon;
    // Even-odd ray casting along +lon.
    bool inside = false;
    for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
        const auto& a = polygon[i];
        const auto& b = polygon[j];
        if ((a.lat > p.lat) != (b.lat > p.lat)) {
            const double x = (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon;
            if (p.lon < x) inside = !inside;
        }
    }
    return inside;
}

// ---- schema ------------------------------------------------------------------

Schema Schema::from_json(const json& j) {
    Schema s;
    try {
        auto str = [&](const char* key, std::string& dst) {
            if (j.contains(key)) dst = j.at(key).get<std::string>();
        };
        str("id", s.id);
        str("lat", s.lat);
        str("lon", s.lon);
        str("price", s.price);
        str("appraisal", s.appraisal);
        str("area", s.area);
        str("district", s.district);
        str("sale_date", s.sale_date);
        if (j.contains("continuous")) s.continuous = j.at("continuous").get<std::vector<std::string>>();
        if (j.contains("categorical")) s.categorical = j.at("categorical").get<std::vector<std::string>>();
        if (j.contains("log_features")) s.log_features = j.at("log_features").get<std::vector<std::string>>();
        if (j.contains("regions")) {
            for (const auto& [name, r] : j.at("regions").items()) {
                if (r.is_object() && r.contains("polygon")) {
                    Region reg;
                    for (const auto& v : r.at("polygon")) reg.polygon.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
                    if (reg.polygon.size() < 3) throw SchemaError("region '" + name + "' polygon needs 3+ vertices");
                    s.regions.emplace(name, std::move(reg));
                } else {
                    // [min_lat, min_lon, max_lat, max_lon]
                    const auto b = r.get<std::vector<double>>();
                    if (b.size() != 4) throw SchemaError("region '" + name + "' box needs 4 numbers");
                    s.regions.emplace(name, Region::box(b[0], b[1], b[2], b[3]));
                }
            }
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("bad schema document: ") + e.what());
    }
    for (const auto& f : s.log_features)
        if (std::find(s.continuous.begin(), s.continuous.end(), f) == s.continuous.end())
            throw SchemaError("log feature '" + f + "' is not a continuous feature");
    return s;
}

json Schema::to_json() const {
    json j{{"id", id},           {"lat", lat},
           {"lon", lon},         {"price", price},
           {"appraisal", appraisal}, {"area", area},
           {"district", district},   {"sale_date", sale_date},
           {"continuous", continuous}, {"categorical", categorical},
           {"log_features", log_features}};
    json regs = json::object();
    for (const auto& [name, r] : regions) {
        if (r.polygon.empty()) {
            regs[name] = {r.min_lat, r.min_lon, r.max_lat, r.max_lon};
        } else {
            json poly = json::array();
            for (const auto& p : r.polygon) poly.push_back({p.lat, p.lon});
            regs[name] = {{"polygon", poly}};
        }
    }
    j["regions"] = regs;
    return j;
}

// ---- filters -----------------------------------------------------------------

std::string_view to_string(FilterRule r) {
    switch (r) {
    case FilterRule::appraisal_ratio: return "appraisal_ratio";
    case FilterRule::price_range: return "price_range";
    case FilterRule::price_per_m2: return "price_per_m2";
    case FilterRule::repeat_sale: return "repeat_sale";
    case FilterRule::commune_coordinates: return "commune_coordinates";
    }
    return "?";
}

json FilterReport::to_json() const {
    json rules = json::array();
    for (std::size_t i = 0; i < kFilterRuleCount; ++i) {
        const double frac = input_count ? static_cast<double>(dropped[i]) / static_cast<double>(input_count) : 0.0;
        rules.push_back({{"rule", to_string(static_cast<FilterRule>(i))}, {"dropped", dropped[i]}, {"fraction", frac}});
    }
    return {{"schema_version", 1},     {"input_count", input_count}, {"rules", rules},
            {"output_count", output_count}, {"parse_rejected", parse_rejected}};
}

namespace {

bool passes_row_rule(const HouseRecord& r, FilterRule rule, const std::map<std::string, Region>& regions) {
    switch (rule) {
    case FilterRule::appraisal_ratio: {
        const double ratio = r.price_uf / r.appraisal_uf;
        return ratio > 1.0 && ratio < 10.0;
    }
    case FilterRule::price_range: return r.price_uf > 400.0 && r.price_uf < 50000.0;
    case FilterRule::price_per_m2: {
        const double per_m2 = r.price_uf / r.area_m2;
        return per_m2 > 30.0 && per_m2 < 6000.0;
    }
    case FilterRule::commune_coordinates: {
        auto it = regions.find(r.district);
        return it == regions.end() || it->second.contains(r.point);
    }
    case FilterRule::repeat_sale: break;
    }
    return true;
}

} // namespace

FilterResult apply_filters(std::vector<HouseRecord> records, const std::map<std::string, Region>& regions,
                           const std::array<FilterRule, kFilterRuleCount>& order) {
    FilterResult res;
    res.report.input_count = records.size();
    std::vector<std::size_t> current(records.size());
    for (std::size_t i = 0; i < current.size(); ++i) current[i] = i;
    for (FilterRule rule : order) {
        std::vector<std::size_t> next;
        next.reserve(current.size());
        if (rule == FilterRule::repeat_sale) {
            std::map<std::string, std::vector<int>> days;
            for (std::size_t i : current) days[records[i].id].push_back(records[i].sale_day);
            std::set<std::string> distorted;
            for (auto& [id, d] : days) {
                std::sort(d.begin(), d.end());
                for (std::size_t k = 1; k < d.size(); ++k)
                    if (d[k] - d[k - 1] < 365) {
                        distorted.insert(id);
                        break;
                    }
            }
            for (std::size_t i : current) {
                if (distorted.count(records[i].id))
                    res.removed.emplace_back(i, rule);
                else
                    next.push_back(i);
            }
        } else {
            for (std::size_t i : current) {
                if (passes_row_rule(records[i], rule, regions))
                    next.push_back(i);
                else
                    res.removed.emplace_back(i, rule);
            }
        }
        res.report.dropped[static_cast<std::size_t>(rule)] = current.size() - next.size();
        current = std::move(next);
    }
    res.report.output_count = current.size();
    res.kept.reserve(current.size());
    for (std::size_t i : current) res.kept.push_back(std::move(records[i]));
    return res;
}

// ---- CSV ---------------------------------------------------------------------

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    out.push_back(std::move(field));
    return out;
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

double parse_number(const std::string& s, const std::string& column) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && *b == ' ') ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\r')) --e;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || ptr != e || !std::isfinite(v))
        throw InvalidInput("column '" + column + "': not a number: '" + s + "'");
    return v;
}

} // namespace

IngestResult ingest_csv_text(const std::string& text, const Schema& schema) {
    IngestResult res;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("input has no header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    res.header = split_csv_line(line);

    auto col = [&](const std::string& name) {
        auto it = std::find(res.header.begin(), res.header.end(), name);
        if (it == res.header.end()) throw SchemaError("missing column '" + name + "'");
        return static_cast<std::size_t>(it - res.header.begin());
    };
    const std::size_t c_id = col(schema.id), c_lat = col(schema.lat), c_lon = col(schema.lon),
                      c_price = col(schema.price), c_appr = col(schema.appraisal), c_area = col(schema.area),
                      c_dist = col(schema.district), c_date = col(schema.sale_date);
    std::vector<std::size_t> c_cont, c_cat;
    for (const auto& n : schema.continuous) c_cont.push_back(col(n));
    for (const auto& n : schema.categorical) c_cat.push_back(col(n));

    res.data.continuous_names = schema.continuous;
    res.data.categorical_names = schema.categorical;

    std::vector<HouseRecord> records;
    std::vector<std::vector<std::string>> raw_rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        try {
            if (fields.size() != res.header.size())
                throw InvalidInput("expected " + std::to_string(res.header.size()) + " fields, got " +
                                   std::to_string(fields.size()));
            HouseRecord r;
            r.id = fields[c_id];
            if (r.id.empty()) throw InvalidInput("empty id");
            r.point = {parse_number(fields[c_lat], schema.lat), parse_number(fields[c_lon], schema.lon)};
            r.point.validate();
            r.price_uf = parse_number(fields[c_price], schema.price);
            r.appraisal_uf = parse_number(fields[c_appr], schema.appraisal);
            r.area_m2 = parse_number(fields[c_area], schema.area);
            if (r.price_uf <= 0 || r.appraisal_uf <= 0 || r.area_m2 <= 0)
                throw InvalidInput("price, appraisal and area must be positive");
            r.district = fields[c_dist];
            r.sale_day = parse_date(fields[c_date]);
            for (std::size_t i = 0; i < c_cont.size(); ++i) r.continuous.push_back(parse_number(fields[c_cont[i]], schema.continuous[i]));
            for (std::size_t c : c_cat) r.categorical.push_back(fields[c]);
            records.push_back(std::move(r));
            raw_rows.push_back(std::move(fields));
        } catch (const InvalidInput& e) {
            res.rejects.push_back({std::move(fields), e.what()});
            ++res.report.parse_rejected;
        }
    }

    auto filtered = apply_filters(std::move(records), schema.regions);
    const std::size_t parse_rejected = res.report.parse_rejected;
    res.report = filtered.report;
    res.report.parse_rejected = parse_rejected;
    for (const auto& [row, rule] : filtered.removed)
        res.rejects.push_back({std::move(raw_rows[row]), std::string(to_string(rule))});
    res.data.records = std::move(filtered.kept);
    return res;
}

IngestResult ingest_csv(const std::string& path, const Schema& schema) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ingest_csv_text(ss.str(), schema);
}

namespace {

std::vector<std::string> output_columns(const Schema& schema) {
    std::vector<std::string> cols{schema.id,   schema.lat,      schema.lon,      schema.price,
                                  schema.appraisal, schema.area, schema.district, schema.sale_date};
    for (const auto& c : schema.continuous)
        if (std::find(cols.begin(), cols.end(), c) == cols.end()) cols.push_back(c);
    for (const auto& c : schema.categorical)
        if (std::find(cols.begin(), cols.end(), c) == cols.end()) cols.push_back(c);
    return cols;
}

} // namespace

std::string dataset_to_csv(const Dataset& data, const Schema& schema) {
    const auto cols = output_columns(schema);
    std::string out;
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + csv_escape(cols[i]);
    out += '\n';
    for (const auto& r : data.records) {
        std::map<std::string, std::string> v;
        v[schema.id] = r.id;
        v[schema.lat] = format_double(r.point.lat);
        v[schema.lon] = format_double(r.point.lon);
        v[schema.price] = format_double(r.price_uf);
        v[schema.appraisal] = format_double(r.appraisal_uf);
        v[schema.area] = format_double(r.area_m2);
        v[schema.district] = r.district;
        v[schema.sale_date] = format_date(r.sale_day);
        for (std::size_t i = 0; i < data.continuous_names.size() && i < r.continuous.size(); ++i)
            v[data.continuous_names[i]] = format_double(r.continuous[i]);
        for (std::size_t i = 0; i < data.categorical_names.size() && i < r.categorical.size(); ++i)
            v[data.categorical_names[i]] = r.categorical[i];
        for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + csv_escape(v[cols[i]]);
        out += '\n';
    }
    return out;
}

std::string rejects_to_csv(const std::vector<std::string>& header, const std::vector<RejectRow>& rejects) {
    std::string out;
    for (const auto& h : header) out += csv_escape(h) + ",";
    out += "reject_reason\n";
    for (const auto& r : rejects) {
        for (std::size_t i = 0; i < header.size(); ++i) out += (i < r.fields.size() ? csv_escape(r.fields[i]) : "") + ",";
        out += csv_escape(r.reason) + "\n";
    }
    return out;
}

// ---- groups ------------------------------------------------------------------

Grouping Grouping::from_json(const json& j) {
    Grouping g;
    try {
        for (const auto& [group, districts] : j.at("groups").items())
            for (const auto& d : districts) {
                const auto name = d.get<std::string>();
                if (!g.group_of.emplace(name, group).second)
                    throw SchemaError("district '" + name + "' appears in more than one group");
            }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("bad grouping document: ") + e.what());
    }
    return g;
}

json Grouping::to_json() const {
    std::map<std::string, std::vector<std::string>> groups;
    for (const auto& [d, g] : group_of) groups[g].push_back(d);
    return {{"groups", groups}};
}

Grouping Grouping::identity(const Dataset& data) {
    Grouping g;
    for (const auto& r : data.records) g.group_of.emplace(r.district, r.district);
    return g;
}

std::map<std::string, std::vector<std::size_t>> commune_groups(const Dataset& data, const Grouping& grouping) {
    std::map<std::string, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < data.records.size(); ++i) {
        auto it = grouping.group_of.find(data.records[i].district);
        out[it == grouping.group_of.end() ? std::string(kUngroupedGroup) : it->second].push_back(i);
    }
    return out;
}

} // namespace pdval
