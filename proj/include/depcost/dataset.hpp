#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "depcost/csv.hpp"
#include "depcost/error.hpp"

namespace depcost {

/// Annual household income brackets as surveyed, plus a non-answer.
enum class IncomeBracket : int {
    NotAnswered = 0,
    Under25k = 1,
    From25kTo50k = 2,
    From50kTo75k = 3,
    From75kTo100k = 4,
    From100kTo150k = 5,
    Over150k = 6,
};

/// Lower dollar bound of an answered bracket.
inline double bracket_lower_bound(IncomeBracket b) {
    static constexpr std::array<double, 7> lower{0.0, 0.0, 25000.0, 50000.0, 75000.0, 100000.0, 150000.0};
    return lower[static_cast<std::size_t>(b)];
}

enum class StormExperience { Unknown, BerylOnly, MayOnly, Both, Neither };

inline std::string to_string(StormExperience s) {
    switch (s) {
    case StormExperience::BerylOnly: return "beryl";
    case StormExperience::MayOnly: return "may";
    case StormExperience::Both: return "both";
    case StormExperience::Neither: return "neither";
    case StormExperience::Unknown: break;
    }
    return "";
}

inline StormExperience parse_storm(std::string_view s) {
    s = csv::trim(s);
    if (s == "beryl") return StormExperience::BerylOnly;
    if (s == "may") return StormExperience::MayOnly;
    if (s == "both") return StormExperience::Both;
    if (s == "neither") return StormExperience::Neither;
    if (csv::is_missing(s)) return StormExperience::Unknown;
    throw DataError("unknown storm experience '" + std::string(s) + "'");
}

/// 1 when children make up strictly more than 20% of the household.
inline int derive_children_flag(int children_count, int household_size) {
    // Integer form of children > 0.2 * household; exact at the 20% boundary.
    return 5 * children_count > household_size ? 1 : 0;
}

/// Expected total deprivation of the wait alternative.
inline double expected_total_deprivation(double dt_days, double wt_days) { return dt_days + wt_days; }

struct Respondent {
    std::string id;
    IncomeBracket income = IncomeBracket::NotAnswered;
    std::optional<int> household_size;
    std::optional<int> children_count;
    std::optional<double> age;
    std::string gender;
    StormExperience storm = StormExperience::Unknown;

    /// CH flag; empty when either household input is missing.
    std::optional<int> children_flag() const {
        if (!household_size || !children_count) return std::nullopt;
        return derive_children_flag(*children_count, *household_size);
    }

    bool operator==(const Respondent&) const = default;
};

struct ChoiceObservation {
    std::string respondent_id;
    int block_id = 1;
    int scenario_index = 1;
    double dt_days = 0.0;
    double wt_days = 0.0;
    double bill_base = 0.0;
    double pct_increase = 0.0;
    double cost_final = 0.0;
    bool chose_purchase = false;

    double edt_days() const { return expected_total_deprivation(dt_days, wt_days); }

    bool operator==(const ChoiceObservation&) const = default;
};

/// Respondents sorted by id; observations sorted by (respondent, scenario).
struct ChoiceDataset {
    std::vector<Respondent> respondents;
    std::vector<ChoiceObservation> observations;
    std::string provenance;

    std::size_t n_respondents() const { return respondents.size(); }
    std::size_t n_observations() const { return observations.size(); }

    const Respondent* find_respondent(const std::string& id) const {
        auto it = std::lower_bound(respondents.begin(), respondents.end(), id,
                                   [](const Respondent& r, const std::string& key) { return r.id < key; });
        if (it == respondents.end() || it->id != id) return nullptr;
        return &*it;
    }
};

inline constexpr double kCostTolerance = 0.005; // half a cent

/// Check every dataset invariant; throws DataError naming the first violation.
inline void validate(const ChoiceDataset& data) {
    for (std::size_t i = 0; i + 1 < data.respondents.size(); ++i) {
        if (!(data.respondents[i].id < data.respondents[i + 1].id))
            throw DataError("respondents not sorted or duplicated at id '" + data.respondents[i + 1].id + "'");
    }
    for (const auto& r : data.respondents) {
        if (r.household_size && *r.household_size < 1)
            throw DataError("respondent '" + r.id + "': household_size must be >= 1");
        if (r.children_count && *r.children_count < 0)
            throw DataError("respondent '" + r.id + "': children_count must be >= 0");
        if (r.household_size && r.children_count && *r.children_count > *r.household_size)
            throw DataError("respondent '" + r.id + "': children_count exceeds household_size");
    }
    std::map<std::string, std::set<int>> seen;
    for (const auto& o : data.observations) {
        if (!data.find_respondent(o.respondent_id))
            throw DataError("observation references unknown respondent '" + o.respondent_id + "'");
        if (o.block_id < 1 || o.block_id > 9) throw DataError("respondent '" + o.respondent_id + "': block out of [1,9]");
        if (o.scenario_index < 1 || o.scenario_index > 4)
            throw DataError("respondent '" + o.respondent_id + "': scenario out of [1,4]");
        if (!(o.dt_days > 0.0) || !(o.wt_days > 0.0))
            throw DataError("respondent '" + o.respondent_id + "': DT and WT must be positive");
        if (!(o.bill_base > 0.0)) throw DataError("respondent '" + o.respondent_id + "': bill must be positive");
        if (std::abs(o.cost_final - o.bill_base * (1.0 + o.pct_increase)) > kCostTolerance)
            throw DataError("respondent '" + o.respondent_id + "': cost_final != bill * (1 + pct)");
        if (!seen[o.respondent_id].insert(o.scenario_index).second)
            throw DataError("respondent '" + o.respondent_id + "': duplicate scenario " +
                            std::to_string(o.scenario_index));
    }
}

/// Restore canonical ordering after construction by hand.
inline void canonicalize(ChoiceDataset& data) {
    std::sort(data.respondents.begin(), data.respondents.end(),
              [](const Respondent& a, const Respondent& b) { return a.id < b.id; });
    std::stable_sort(data.observations.begin(), data.observations.end(),
                     [](const ChoiceObservation& a, const ChoiceObservation& b) {
                         if (a.respondent_id != b.respondent_id) return a.respondent_id < b.respondent_id;
                         return a.scenario_index < b.scenario_index;
                     });
}

/// Keep only the given respondents (and their observations).
inline ChoiceDataset subset(const ChoiceDataset& data, const std::function<bool(const Respondent&)>& keep,
                            const std::string& note) {
    ChoiceDataset out;
    out.provenance = data.provenance.empty() ? note : data.provenance + "; " + note;
    std::set<std::string> kept;
    for (const auto& r : data.respondents) {
        if (keep(r)) {
            out.respondents.push_back(r);
            kept.insert(r.id);
        }
    }
    for (const auto& o : data.observations)
        if (kept.count(o.respondent_id)) out.observations.push_back(o);
    return out;
}

// ---------------------------------------------------------------------------
// Loading and export

/// Column names in the delimited file. An empty name means "not present".
struct ColumnMapping {
    std::string respondent_id = "respondent_id";
    std::string block = "block";
    std::string scenario = "scenario";
    std::string dt = "dt";
    std::string wt = "wt";
    std::string bill = "bill";
    std::string pct_increase = "pct_increase";
    std::string cost = "cost";
    std::string choice = "choice";
    std::string income = "income_bracket";
    std::string household_size = "household_size";
    std::string children = "children";
    std::string age = "age";
    std::string gender = "gender";
    std::string storm = "storm";
};

struct LoadOptions {
    ColumnMapping columns;
    char delimiter = ',';
};

namespace detail {

inline bool parse_choice(std::string_view s, bool& out) {
    s = csv::trim(s);
    if (s == "1" || s == "purchase" || s == "yes") {
        out = true;
        return true;
    }
    if (s == "0" || s == "wait" || s == "no") {
        out = false;
        return true;
    }
    return false;
}

inline std::string row_tag(std::size_t line) { return "row " + std::to_string(line) + ": "; }

} // namespace detail

/// Parse delimited text. Lines starting with '#' are comments.
inline ChoiceDataset parse_dataset(std::istream& in, const LoadOptions& opts, const std::string& source = "<stream>") {
    const auto& cm = opts.columns;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        header = csv::split_line(line, opts.delimiter);
        break;
    }
    if (header.empty()) throw DataError(source + ": missing header row");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) index[std::string(csv::trim(header[i]))] = i;

    auto column = [&](const std::string& name) -> std::optional<std::size_t> {
        if (name.empty()) return std::nullopt;
        auto it = index.find(name);
        if (it == index.end()) return std::nullopt;
        return it->second;
    };
    auto required = [&](const std::string& name, const char* role) {
        auto c = column(name);
        if (!c) throw DataError(source + ": required column for " + role + " ('" + name + "') not found");
        return *c;
    };

    const auto c_id = required(cm.respondent_id, "respondent id");
    const auto c_block = required(cm.block, "block");
    const auto c_scen = required(cm.scenario, "scenario");
    const auto c_dt = required(cm.dt, "DT");
    const auto c_wt = required(cm.wt, "WT");
    const auto c_bill = required(cm.bill, "bill");
    const auto c_choice = required(cm.choice, "choice");
    const auto c_pct = column(cm.pct_increase);
    const auto c_cost = column(cm.cost);
    if (!c_pct && !c_cost) throw DataError(source + ": neither a pct_increase nor a cost column is mapped");
    const auto c_income = column(cm.income);
    const auto c_hh = column(cm.household_size);
    const auto c_kids = column(cm.children);
    const auto c_age = column(cm.age);
    const auto c_gender = column(cm.gender);
    const auto c_storm = column(cm.storm);

    ChoiceDataset data;
    data.provenance = "source=" + source;
    std::map<std::string, Respondent> respondents;
    std::map<std::string, std::size_t> first_row;
    std::map<std::pair<std::string, int>, std::size_t> scenario_rows;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto tag = detail::row_tag(line_no);
        auto fields = csv::split_line(line, opts.delimiter);
        if (fields.size() != header.size())
            throw DataError(tag + "expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()));
        auto num = [&](std::size_t c, const char* what) {
            auto v = csv::parse_double(fields[c]);
            if (!v) throw DataError(tag + "cannot parse " + what + " '" + fields[c] + "'");
            return *v;
        };
        auto integer = [&](std::size_t c, const char* what) {
            auto v = csv::parse_int(fields[c]);
            if (!v) throw DataError(tag + "cannot parse " + what + " '" + fields[c] + "'");
            return static_cast<int>(*v);
        };
        auto opt_int = [&](std::optional<std::size_t> c, const char* what) -> std::optional<int> {
            if (!c || csv::is_missing(fields[*c])) return std::nullopt;
            return integer(*c, what);
        };

        ChoiceObservation o;
        o.respondent_id = std::string(csv::trim(fields[c_id]));
        if (o.respondent_id.empty()) throw DataError(tag + "empty respondent id");
        o.block_id = integer(c_block, "block");
        o.scenario_index = integer(c_scen, "scenario");
        o.dt_days = num(c_dt, "DT");
        o.wt_days = num(c_wt, "WT");
        o.bill_base = num(c_bill, "bill");
        const bool have_pct = c_pct && !csv::is_missing(fields[*c_pct]);
        const bool have_cost = c_cost && !csv::is_missing(fields[*c_cost]);
        if (have_pct) {
            o.pct_increase = num(*c_pct, "pct_increase");
            o.cost_final = have_cost ? num(*c_cost, "cost") : o.bill_base * (1.0 + o.pct_increase);
        } else if (have_cost) {
            o.cost_final = num(*c_cost, "cost");
            o.pct_increase = o.cost_final / o.bill_base - 1.0;
        } else {
            throw DataError(tag + "neither pct_increase nor cost given");
        }
        if (!detail::parse_choice(fields[c_choice], o.chose_purchase))
            throw DataError(tag + "cannot parse choice '" + fields[c_choice] + "'");

        if (o.block_id < 1 || o.block_id > 9) throw DataError(tag + "block must be in [1,9]");
        if (o.scenario_index < 1 || o.scenario_index > 4) throw DataError(tag + "scenario must be in [1,4]");
        if (!(o.dt_days > 0.0) || !(o.wt_days > 0.0)) throw DataError(tag + "DT and WT must be positive");
        if (!(o.bill_base > 0.0)) throw DataError(tag + "bill must be positive");
        if (std::abs(o.cost_final - o.bill_base * (1.0 + o.pct_increase)) > kCostTolerance)
            throw DataError(tag + "cost does not equal bill * (1 + pct_increase)");

        auto key = std::make_pair(o.respondent_id, o.scenario_index);
        if (auto it = scenario_rows.find(key); it != scenario_rows.end())
            throw DataError(tag + "duplicate scenario " + std::to_string(o.scenario_index) + " for respondent '" +
                            o.respondent_id + "' (first seen on row " + std::to_string(it->second) + ")");
        scenario_rows.emplace(key, line_no);

        Respondent r;
        r.id = o.respondent_id;
        if (c_income && !csv::is_missing(fields[*c_income])) {
            int b = integer(*c_income, "income bracket");
            if (b < 0 || b > 6) throw DataError(tag + "income bracket must be in [0,6]");
            r.income = static_cast<IncomeBracket>(b);
        }
        r.household_size = opt_int(c_hh, "household size");
        r.children_count = opt_int(c_kids, "children count");
        if (c_age && !csv::is_missing(fields[*c_age])) r.age = num(*c_age, "age");
        if (c_gender) r.gender = std::string(csv::trim(fields[*c_gender]));
        if (c_storm) {
            try {
                r.storm = parse_storm(fields[*c_storm]);
            } catch (const DataError& e) {
                throw DataError(tag + e.what());
            }
        }
        if (r.household_size && *r.household_size < 1) throw DataError(tag + "household_size must be >= 1");
        if (r.children_count && *r.children_count < 0) throw DataError(tag + "children count must be >= 0");
        if (r.household_size && r.children_count && *r.children_count > *r.household_size)
            throw DataError(tag + "children count exceeds household size");

        auto [it, inserted] = respondents.emplace(r.id, r);
        if (inserted) {
            first_row[r.id] = line_no;
        } else if (!(it->second == r)) {
            throw DataError(tag + "sociodemographics for respondent '" + r.id + "' differ from row " +
                            std::to_string(first_row[r.id]));
        }
        data.observations.push_back(std::move(o));
    }
    for (auto& [id, r] : respondents) data.respondents.push_back(std::move(r));
    canonicalize(data);
    validate(data);
    return data;
}

inline ChoiceDataset load_dataset(const std::filesystem::path& path, const LoadOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file '" + path.string() + "'");
    return parse_dataset(in, opts, path.string());
}

/// Export in the loader's default column layout. `comments` become '#' lines.
inline void write_dataset(std::ostream& out, const ChoiceDataset& data, char delim = ',',
                          const std::vector<std::string>& comments = {}) {
    for (const auto& c : comments) out << "# " << c << '\n';
    const ColumnMapping cm;
    const std::vector<std::string> cols{cm.respondent_id, cm.block,  cm.scenario, cm.dt,     cm.wt,
                                        cm.bill,          cm.pct_increase, cm.cost, cm.choice, cm.income,
                                        cm.household_size, cm.children, cm.age,  cm.gender, cm.storm};
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? std::string(1, delim) : "") << cols[i];
    out << '\n';
    for (const auto& o : data.observations) {
        const Respondent* r = data.find_respondent(o.respondent_id);
        if (!r) throw DataError("observation references unknown respondent '" + o.respondent_id + "'");
        auto d = [](double v) { return csv::format_double(v); };
        out << csv::quote_if_needed(o.respondent_id, delim) << delim << o.block_id << delim << o.scenario_index
            << delim << d(o.dt_days) << delim << d(o.wt_days) << delim << d(o.bill_base) << delim
            << d(o.pct_increase) << delim << d(o.cost_final) << delim << (o.chose_purchase ? 1 : 0) << delim
            << static_cast<int>(r->income) << delim
            << (r->household_size ? std::to_string(*r->household_size) : "") << delim
            << (r->children_count ? std::to_string(*r->children_count) : "") << delim
            << (r->age ? d(*r->age) : "") << delim << csv::quote_if_needed(r->gender, delim) << delim
            << to_string(r->storm) << '\n';
    }
}

inline void save_dataset(const std::filesystem::path& path, const ChoiceDataset& data, char delim = ',',
                         const std::vector<std::string>& comments = {}) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset file '" + path.string() + "'");
    write_dataset(out, data, delim, comments);
}

// ---------------------------------------------------------------------------
// Respondent filters

/// Named exclusion rule for lexicographic (non-trading) respondents.
struct LexRule {
    std::string name = "same-alternative";
    /// Minimum presented scenarios before a respondent can be flagged.
    int min_scenarios = 2;
};

struct FilterResult {
    ChoiceDataset data;
    std::vector<std::string> excluded;
};

inline FilterResult filter_lexicographic(const ChoiceDataset& data, const LexRule& rule = {}) {
    std::map<std::string, std::pair<int, int>> counts; // (purchases, total)
    for (const auto& o : data.observations) {
        auto& c = counts[o.respondent_id];
        c.first += o.chose_purchase ? 1 : 0;
        c.second += 1;
    }
    std::function<bool(const std::pair<int, int>&)> flagged;
    if (rule.name == "same-alternative") {
        flagged = [&](const std::pair<int, int>& c) {
            return c.second >= rule.min_scenarios && (c.first == 0 || c.first == c.second);
        };
    } else if (rule.name == "always-wait") {
        flagged = [&](const std::pair<int, int>& c) { return c.second >= rule.min_scenarios && c.first == 0; };
    } else if (rule.name == "always-purchase") {
        flagged = [&](const std::pair<int, int>& c) {
            return c.second >= rule.min_scenarios && c.first == c.second;
        };
    } else if (rule.name == "none") {
        flagged = [](const std::pair<int, int>&) { return false; };
    } else {
        throw ConfigError("unknown lexicographic rule '" + rule.name + "'");
    }
    FilterResult result;
    std::set<std::string> drop;
    for (const auto& r : data.respondents) {
        auto it = counts.find(r.id);
        if (it != counts.end() && flagged(it->second)) {
            drop.insert(r.id);
            result.excluded.push_back(r.id);
        }
    }
    result.data = subset(data, [&](const Respondent& r) { return !drop.count(r.id); },
                         "lexicographic filter '" + rule.name + "' excluded " + std::to_string(drop.size()));
    return result;
}

struct IncomeSplit {
    ChoiceDataset low;
    ChoiceDataset high;
    std::vector<std::string> unassigned;
};

/// Split on an answered bracket boundary (one of 25k, 50k, 75k, 100k, 150k).
inline IncomeSplit split_by_income(const ChoiceDataset& data, double threshold_dollars = 75000.0) {
    static constexpr std::array<double, 5> boundaries{25000.0, 50000.0, 75000.0, 100000.0, 150000.0};
    if (std::find(boundaries.begin(), boundaries.end(), threshold_dollars) == boundaries.end())
        throw ConfigError("income threshold must be a bracket boundary");
    IncomeSplit s;
    for (const auto& r : data.respondents)
        if (r.income == IncomeBracket::NotAnswered) s.unassigned.push_back(r.id);
    auto answered = [](const Respondent& r) { return r.income != IncomeBracket::NotAnswered; };
    const std::string tag = csv::format_double(threshold_dollars);
    s.low = subset(data, [&](const Respondent& r) { return answered(r) && bracket_lower_bound(r.income) < threshold_dollars; },
                   "income < " + tag);
    s.high = subset(data, [&](const Respondent& r) { return answered(r) && bracket_lower_bound(r.income) >= threshold_dollars; },
                    "income >= " + tag);
    return s;
}

/// Respondents with a computable CH flag; used by children-interacted models.
inline ChoiceDataset with_children_flag(const ChoiceDataset& data) {
    return subset(data, [](const Respondent& r) { return r.children_flag().has_value(); }, "CH available");
}

} // namespace depcost
