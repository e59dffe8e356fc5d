#pragma once

#include "nvfem/analysis.hpp"
#include "nvfem/errors.hpp"
#include "nvfem/fem.hpp"
#include "nvfem/field_io.hpp"
#include "nvfem/gauss_curvature.hpp"
#include "nvfem/hessian.hpp"
#include "nvfem/linear_solver.hpp"
#include "nvfem/mesh.hpp"
