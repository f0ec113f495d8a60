#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "promptseg/clicksim.hpp"
#include "promptseg/dataset.hpp"
#include "promptseg/infer.hpp"
#include "promptseg/metrics.hpp"

namespace promptseg {

struct EvalCell {
    int budget = 0;
    bool present = true;
    double dsc = 0;
    double nsd = 0;
    std::string reason;  // why the cell is absent
};

struct EvalRow {
    std::string case_name;
    int label = 0;
    std::vector<EvalCell> cells;  // one per budget, in budget order
};

struct BudgetSummary {
    int budget = 0;
    double mdsc = 0;
    double mnsd = 0;
    std::size_t count = 0;  // present cells averaged
};

struct MetricsReport {
    std::uint64_t seed = 0;
    double tolerance_mm = kDefaultNsdToleranceMm;
    std::string dataset;
    bool cpp = false;
    std::vector<int> budgets;
    std::vector<EvalRow> rows;
    std::vector<BudgetSummary> summary;

    const BudgetSummary& at_budget(int budget) const;
    std::string to_json() const;
    std::string to_table() const;
};

struct EvaluationOptions {
    std::vector<int> budgets{1, 3, 5, 7, 9};
    std::uint64_t seed = 0;
    bool use_cpp = false;
    double nsd_tolerance_mm = kDefaultNsdToleranceMm;
    ErrorSelection selection = ErrorSelection::ByClass;
    std::string dataset_id;
    /// Labels to evaluate in every case; empty means each case's present labels.
    std::vector<int> labels;
};

/// Simulated interaction on one (case, label): a seeded first click, then farthest-error
/// refinement clicks on the merged volume mask. Metrics are taken after each budgeted click.
EvalRow evaluate_case_label(const Engine& engine, const Case& c, std::size_t case_index, int label,
                            const EvaluationOptions& options);

MetricsReport evaluate_interactive(const Engine& engine, const std::vector<Case>& data,
                                   const EvaluationOptions& options);

/// Fills `summary` from `rows`.
void summarize(MetricsReport& report);

}  // namespace promptseg
