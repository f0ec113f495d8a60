#include "promptseg/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "json.hpp"

namespace promptseg {

const BudgetSummary& MetricsReport::at_budget(int budget) const {
    for (const auto& s : summary) {
        if (s.budget == budget) return s;
    }
    throw Error(ErrorCode::NotFound, "budget " + std::to_string(budget) + " was not evaluated");
}

std::string MetricsReport::to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& c : r.cells) {
            if (c.present) {
                cells.push_back({{"budget", c.budget}, {"dsc", c.dsc}, {"nsd", c.nsd}});
            } else {
                cells.push_back({{"budget", c.budget}, {"absent", true}, {"reason", c.reason}});
            }
        }
        rows_j.push_back({{"case", r.case_name}, {"label", r.label}, {"cells", cells}});
    }
    nlohmann::json sum_j = nlohmann::json::array();
    for (const auto& s : summary) {
        sum_j.push_back({{"budget", s.budget}, {"mdsc", s.mdsc}, {"mnsd", s.mnsd}, {"count", s.count}});
    }
    nlohmann::json j{{"metadata",
                      {{"seed", seed}, {"nsd_tolerance_mm", tolerance_mm}, {"dataset", dataset}, {"cpp", cpp}}},
                     {"budgets", budgets},
                     {"summary", sum_j},
                     {"rows", rows_j}};
    return j.dump(2) + "\n";
}

std::string MetricsReport::to_table() const {
    std::ostringstream os;
    char buf[128];
    os << "dataset: " << (dataset.empty() ? "-" : dataset) << "  seed: " << seed
       << "  nsd tolerance: " << tolerance_mm << " mm  cpp: " << (cpp ? "on" : "off") << "\n\n";
    os << "clicks      mDSC      mNSD   cells\n";
    for (const auto& s : summary) {
        std::snprintf(buf, sizeof buf, "%6d  %8.4f  %8.4f  %6zu\n", s.budget, s.mdsc, s.mnsd, s.count);
        os << buf;
    }
    return os.str();
}

void summarize(MetricsReport& report) {
    report.summary.clear();
    for (std::size_t b = 0; b < report.budgets.size(); ++b) {
        BudgetSummary s;
        s.budget = report.budgets[b];
        for (const auto& r : report.rows) {
            const auto& c = r.cells.at(b);
            if (!c.present) continue;
            s.mdsc += c.dsc;
            s.mnsd += c.nsd;
            ++s.count;
        }
        if (s.count > 0) {
            s.mdsc /= static_cast<double>(s.count);
            s.mnsd /= static_cast<double>(s.count);
        }
        report.summary.push_back(s);
    }
}

EvalRow evaluate_case_label(const Engine& engine, const Case& c, std::size_t case_index, int label,
                            const EvaluationOptions& options) {
    EvalRow row;
    row.case_name = c.name;
    row.label = label;
    const Mask gt = label_mask(c.labels.labels, label);
    if (count_true(gt) == 0) {
        for (int b : options.budgets) row.cells.push_back({b, false, 0, 0, "label absent from volume"});
        return row;
    }

    const int max_budget = *std::max_element(options.budgets.begin(), options.budgets.end());
    const std::set<int> wanted(options.budgets.begin(), options.budgets.end());
    std::vector<std::pair<int, EvalCell>> taken;

    Session s = engine.new_session(c.image);
    const std::uint64_t seed = mix_seed(options.seed, mix_seed(case_index, static_cast<std::uint64_t>(label)));
    engine.click(s, first_click(gt, seed), options.use_cpp);
    for (int n = 1; n <= max_budget; ++n) {
        if (wanted.count(n)) {
            taken.push_back({n, {n, true, dsc(s.mask, gt),
                                 nsd(s.mask, gt, c.image.spacing, options.nsd_tolerance_mm), {}}});
        }
        if (n == max_budget) break;
        // A converged session keeps its mask for the remaining budgets.
        if (auto next = next_click(gt, s.mask, options.selection)) engine.click(s, *next, options.use_cpp);
    }
    for (int b : options.budgets) {
        for (const auto& [n, cell] : taken) {
            if (n == b) {
                row.cells.push_back(cell);
                break;
            }
        }
    }
    return row;
}

MetricsReport evaluate_interactive(const Engine& engine, const std::vector<Case>& data,
                                   const EvaluationOptions& options) {
    if (options.budgets.empty()) throw Error(ErrorCode::InvalidInput, "at least one click budget is required");
    for (int b : options.budgets) {
        if (b < 1) throw Error(ErrorCode::InvalidInput, "click budgets must be positive");
    }
    MetricsReport report;
    report.seed = options.seed;
    report.tolerance_mm = options.nsd_tolerance_mm;
    report.dataset = options.dataset_id;
    report.cpp = options.use_cpp;
    report.budgets = options.budgets;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& labels = options.labels.empty() ? data[i].label_ids : options.labels;
        for (int label : labels) report.rows.push_back(evaluate_case_label(engine, data[i], i, label, options));
    }
    summarize(report);
    return report;
}

}  // namespace promptseg
