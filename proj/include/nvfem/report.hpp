#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include "nvfem/analysis.hpp"

namespace nvfem {

/// Fixed numeric formatting for all emitted tables: 17 significant digits,
/// '.' decimal separator, LF newlines. Identical inputs yield identical bytes.
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string convergence_csv(const ConvergenceTable& table) {
    std::string out = "level,h,ndof,err_l2,eoc_l2,err_h1,eoc_h1,err_h2,eoc_h2,newton_iters\n";
    EocRates rates;
    if (table.records.size() >= 2) rates = eoc(table);
    const auto eoc_cell = [&](const std::vector<double>& r, std::size_t i) {
        if (i == 0) return std::string();
        return std::isinf(r[i - 1]) ? std::string("inf") : format_number(r[i - 1]);
    };
    for (std::size_t i = 0; i < table.records.size(); ++i) {
        const auto& r = table.records[i];
        out += std::to_string(r.level) + ',' + format_number(r.h_max) + ',' +
               std::to_string(r.n_dofs) + ',' + format_number(r.err_l2) + ',' +
               eoc_cell(rates.l2, i) + ',' + format_number(r.err_h1) + ',' +
               eoc_cell(rates.h1, i) + ',' + format_number(r.err_hessian) + ',' +
               eoc_cell(rates.hessian, i) + ',' + std::to_string(r.newton_iterations) +
               '\n';
    }
    return out;
}

} // namespace nvfem
