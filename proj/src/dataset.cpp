#include "smatch/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace smatch {

Dataset::Dataset(std::vector<Unit> units, std::vector<TreatmentId> levels,
                 std::vector<std::string> covariate_names)
    : units_(std::move(units)),
      levels_(std::move(levels)),
      covariate_names_(std::move(covariate_names)) {
    if (levels_.size() < 2) throw InputError("fewer than 2 treatment levels");
    std::set<std::string> labels;
    for (std::size_t i = 0; i < levels_.size(); ++i) {
        if (levels_[i].index != static_cast<int>(i))
            throw InputError("treatment indices must be a contiguous 0-based enumeration");
        if (!labels.insert(levels_[i].label).second)
            throw InputError("duplicate treatment label '" + levels_[i].label + "'");
    }
    arms_.resize(levels_.size());
    const int p = static_cast<int>(covariate_names_.size());
    for (std::size_t i = 0; i < units_.size(); ++i) {
        const Unit& u = units_[i];
        if (u.treatment < 0 || u.treatment >= static_cast<int>(levels_.size()))
            throw InputError("unit '" + u.id + "' has an unknown treatment level");
        if (u.covariates.size() != p)
            throw InputError("unit '" + u.id + "' has covariate dimension " +
                             std::to_string(u.covariates.size()) + ", expected " +
                             std::to_string(p));
        if (!u.covariates.allFinite())
            throw InputError("unit '" + u.id + "' has a non-finite covariate");
        arms_[u.treatment].push_back(i);
        id_index_.emplace_back(u.id, i);
    }
    std::sort(id_index_.begin(), id_index_.end());
    for (std::size_t i = 1; i < id_index_.size(); ++i) {
        if (id_index_[i].first == id_index_[i - 1].first)
            throw InputError("duplicate unit id '" + id_index_[i].first + "'");
    }
    for (std::size_t t = 0; t < arms_.size(); ++t) {
        if (arms_[t].empty())
            throw InputError("empty treatment arm '" + levels_[t].label + "'");
    }
}

const std::vector<std::size_t>& Dataset::arm(int treatment_index) const {
    return arms_.at(treatment_index);
}

const TreatmentId& Dataset::level_by_label(const std::string& label) const {
    for (const auto& lv : levels_)
        if (lv.label == label) return lv;
    throw InputError("unknown treatment level '" + label + "'");
}

const Unit& Dataset::unit_by_id(const std::string& id) const {
    auto it = std::lower_bound(id_index_.begin(), id_index_.end(),
                               std::make_pair(id, std::size_t{0}));
    if (it == id_index_.end() || it->first != id)
        throw InputError("unknown unit id '" + id + "'");
    return units_[it->second];
}

Eigen::MatrixXd Dataset::arm_covariates(int treatment_index) const {
    const auto& idx = arm(treatment_index);
    Eigen::MatrixXd out(idx.size(), p());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(r) = units_[idx[r]].covariates;
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
    const std::string t = trim(cell);
    if (t.empty())
        throw InputError("missing value at row " + std::to_string(row) + ", column '" + col + "'");
    double v;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size())
        throw InputError("unparsable numeric cell '" + t + "' at row " + std::to_string(row) +
                         ", column '" + col + "'");
    return v;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open file '" + path + "'");
    if (schema.treatment_col.empty()) throw InputError("schema names no treatment column");
    if (schema.covariate_cols.empty()) throw InputError("schema names no covariate columns");

    std::string line;
    if (!std::getline(in, line)) throw InputError("empty file '" + path + "'");
    const auto header = split_csv_line(line);
    auto col_of = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (trim(header[i]) == name) return i;
        throw InputError("column '" + name + "' not found in '" + path + "'");
    };

    const std::size_t t_col = col_of(schema.treatment_col);
    std::vector<std::size_t> x_cols;
    for (const auto& c : schema.covariate_cols) x_cols.push_back(col_of(c));
    const bool has_id = !schema.id_col.empty();
    const std::size_t id_col = has_id ? col_of(schema.id_col) : 0;
    const bool has_resp = !schema.response_col.empty();
    const std::size_t r_col = has_resp ? col_of(schema.response_col) : 0;

    std::vector<TreatmentId> levels;
    auto level_index = [&](const std::string& label) -> int {
        for (const auto& lv : levels)
            if (lv.label == label) return lv.index;
        return -1;
    };
    for (const auto& lbl : schema.level_order)
        levels.push_back({static_cast<int>(levels.size()), lbl});

    std::vector<Unit> units;
    std::size_t row = 1;  // header is row 1
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw InputError("row " + std::to_string(row) + " has " +
                             std::to_string(cells.size()) + " cells, header has " +
                             std::to_string(header.size()));
        Unit u;
        u.id = has_id ? trim(cells[id_col]) : std::to_string(row - 1);
        const std::string label = trim(cells[t_col]);
        int ti = level_index(label);
        if (ti < 0) {
            if (!schema.level_order.empty())
                throw InputError("treatment level '" + label + "' at row " + std::to_string(row) +
                                 " not in the supplied level order");
            ti = static_cast<int>(levels.size());
            levels.push_back({ti, label});
        }
        u.treatment = ti;
        u.covariates.resize(x_cols.size());
        for (std::size_t j = 0; j < x_cols.size(); ++j)
            u.covariates[j] = parse_cell(cells[x_cols[j]], row, schema.covariate_cols[j]);
        if (has_resp) {
            const std::string rc = trim(cells[r_col]);
            if (!rc.empty()) u.response = parse_cell(cells[r_col], row, schema.response_col);
        }
        units.push_back(std::move(u));
    }
    if (units.empty()) throw InputError("no data rows in '" + path + "'");
    return Dataset(std::move(units), std::move(levels), schema.covariate_cols);
}

std::pair<Dataset, ScalingParams> standardize(const Dataset& d) {
    const int p = d.p();
    const double n = static_cast<double>(d.n());
    ScalingParams sp;
    sp.mean = Eigen::VectorXd::Zero(p);
    sp.sd = Eigen::VectorXd::Zero(p);
    for (const Unit& u : d.units()) sp.mean += u.covariates;
    sp.mean /= n;
    for (const Unit& u : d.units()) {
        Eigen::VectorXd c = u.covariates - sp.mean;
        sp.sd += c.cwiseProduct(c);
    }
    sp.sd = (sp.sd / n).cwiseSqrt();  // population convention
    for (int j = 0; j < p; ++j) {
        if (sp.sd[j] <= 0.0)
            throw InputError("constant covariate '" + d.covariate_names()[j] + "'");
    }
    std::vector<Unit> units = d.units();
    for (Unit& u : units)
        u.covariates = (u.covariates - sp.mean).cwiseQuotient(sp.sd);
    return {Dataset(std::move(units), d.levels(), d.covariate_names()), sp};
}

Dataset unstandardize(const Dataset& d, const ScalingParams& sp) {
    std::vector<Unit> units = d.units();
    for (Unit& u : units) u.covariates = u.covariates.cwiseProduct(sp.sd) + sp.mean;
    return Dataset(std::move(units), d.levels(), d.covariate_names());
}

}  // namespace smatch
