#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nvfem/fem.hpp"

namespace nvfem {

/// Plot-ready point cloud: one `x y value` row per P2 node, followed by a
/// connectivity block of the 6 node indices per cell. Gnuplot consumes the
/// leading table directly; the connectivity block is comment-guarded.
inline std::string format_field(const DofMap& dm, const Vector& values) {
    if (values.size() != dm.size())
        throw dimension_mismatch("format_field: value count does not match DOF count");
    std::string out;
    char buf[128];
    std::snprintf(buf, sizeof buf, "# nodes %d cells %d\n", dm.size(),
                  dm.mesh().num_cells());
    out += buf;
    for (int d = 0; d < dm.size(); ++d) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", dm.dof_coord(d).x(),
                      dm.dof_coord(d).y(), values[d]);
        out += buf;
    }
    out += "# connectivity\n";
    for (int c = 0; c < dm.mesh().num_cells(); ++c) {
        const auto& dofs = dm.cell_dofs(c);
        std::snprintf(buf, sizeof buf, "# %d %d %d %d %d %d\n", dofs[0], dofs[1],
                      dofs[2], dofs[3], dofs[4], dofs[5]);
        out += buf;
    }
    return out;
}

inline void emit_field(const DofMap& dm, const Vector& values, const std::string& path) {
    std::ofstream out(path, std::ios::binary); // binary keeps LF newlines
    if (!out) throw io_error("emit_field: cannot open '" + path + "' for writing");
    out << format_field(dm, values);
    if (!out) throw io_error("emit_field: write to '" + path + "' failed");
}

struct FieldData {
    std::vector<Vec2> points;
    std::vector<double> values;
};

inline FieldData parse_field(const std::string& text) {
    FieldData data;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double x, y, v;
        if (!(ls >> x >> y >> v)) throw parse_error("field file: bad data row");
        data.points.emplace_back(x, y);
        data.values.push_back(v);
    }
    return data;
}

} // namespace nvfem
