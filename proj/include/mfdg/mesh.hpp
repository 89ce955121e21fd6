#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfdg/common.hpp"

namespace mfdg {

enum class BoundaryType { dirichlet, neumann };

/// The six faces of the box domain, indexed 2 * axis + (high side ? 1 : 0).
enum class DomainFace : int { x_low = 0, x_high, y_low, y_high, z_low, z_high };

using BoundarySpec = std::array<BoundaryType, 6>;

inline BoundarySpec all_dirichlet() {
  BoundarySpec b;
  b.fill(BoundaryType::dirichlet);
  return b;
}

inline BoundarySpec all_neumann() {
  BoundarySpec b;
  b.fill(BoundaryType::neumann);
  return b;
}

/// A grid face. The normal is normal_sign * e_axis. On interior faces
/// `inside` is the cell with the lower index and the normal points into
/// `outside`; on boundary faces the normal is the outward normal.
struct Face {
  int axis = 0;
  CellIndex inside = 0;
  CellIndex outside = 0;
  bool boundary = false;
  int normal_sign = 1;

  /// Reference coordinate (0 or 1) of the face within the inside cell.
  int inside_ref() const { return normal_sign > 0 ? 1 : 0; }
  /// Reference coordinate of the face within the outside cell.
  int outside_ref() const { return 0; }
  /// Domain face a boundary face lies on.
  int domain_face() const { return 2 * axis + (normal_sign > 0 ? 1 : 0); }
};

struct CellGeometry {
  Point center{};
  double volume = 0.0;
  std::array<double, 3> face_area{};
};

/// Axis-aligned box grid with equidistant spacing per axis. Cells are
/// numbered lexicographically with x fastest.
class StructuredGrid {
 public:
  StructuredGrid(std::array<int, 3> cells, std::array<double, 3> lengths, BoundarySpec boundary)
      : cells_(cells), lengths_(lengths), boundary_(boundary) {
    for (int k = 0; k < 3; ++k) {
      if (cells[k] < 1) throw std::invalid_argument("StructuredGrid: cell counts must be >= 1");
      if (!(lengths[k] > 0.0)) throw std::invalid_argument("StructuredGrid: lengths must be > 0");
      spacing_[k] = lengths[k] / cells[k];
    }
    enumerate();
  }

  const std::array<int, 3>& cells_per_dim() const { return cells_; }
  const std::array<double, 3>& lengths() const { return lengths_; }
  const std::array<double, 3>& spacing() const { return spacing_; }
  const BoundarySpec& boundary_spec() const { return boundary_; }
  BoundaryType boundary_type(int domain_face) const { return boundary_[domain_face]; }

  std::size_t num_cells() const {
    return static_cast<std::size_t>(cells_[0]) * cells_[1] * cells_[2];
  }

  CellIndex cell_index(int i, int j, int k) const {
    return static_cast<CellIndex>(i) + static_cast<CellIndex>(cells_[0]) * (j + static_cast<CellIndex>(cells_[1]) * k);
  }

  std::array<int, 3> cell_coords(CellIndex c) const {
    check_cell(c);
    const auto nx = static_cast<CellIndex>(cells_[0]);
    const auto ny = static_cast<CellIndex>(cells_[1]);
    return {static_cast<int>(c % nx), static_cast<int>((c / nx) % ny), static_cast<int>(c / (nx * ny))};
  }

  /// Lower corner of a cell.
  Point cell_origin(CellIndex c) const {
    const auto ijk = cell_coords(c);
    return {ijk[0] * spacing_[0], ijk[1] * spacing_[1], ijk[2] * spacing_[2]};
  }

  CellGeometry cell_geometry(CellIndex c) const {
    const Point o = cell_origin(c);
    CellGeometry g;
    for (int k = 0; k < 3; ++k) g.center[k] = o[k] + 0.5 * spacing_[k];
    g.volume = spacing_[0] * spacing_[1] * spacing_[2];
    g.face_area = {spacing_[1] * spacing_[2], spacing_[0] * spacing_[2], spacing_[0] * spacing_[1]};
    return g;
  }

  double cell_volume() const { return spacing_[0] * spacing_[1] * spacing_[2]; }
  double face_area(int axis) const {
    return cell_volume() / spacing_[axis];
  }

  /// Interior faces first, then boundary faces. Within each group: axis x,
  /// then y, then z; within an axis, lexicographic by inside cell (low
  /// domain side before high side for the same boundary cell).
  const std::vector<Face>& faces() const { return faces_; }
  std::size_t num_interior_faces() const { return num_interior_; }
  std::size_t num_boundary_faces() const { return faces_.size() - num_interior_; }

  /// Face ids of a cell, indexed by local face 2 * axis + (high side ? 1 : 0).
  const std::array<std::size_t, 6>& cell_faces(CellIndex c) const {
    check_cell(c);
    return cell_faces_[c];
  }

  void check_cell(CellIndex c) const {
    if (c >= num_cells()) throw std::out_of_range("cell index " + std::to_string(c) + " out of range");
  }

 private:
  void enumerate() {
    const std::size_t n = num_cells();
    cell_faces_.assign(n, {});
    for (int axis = 0; axis < 3; ++axis) {
      for (CellIndex c = 0; c < n; ++c) {
        const auto ijk = cell_coords(c);
        if (ijk[axis] + 1 < cells_[axis]) {
          auto nb = ijk;
          ++nb[axis];
          const CellIndex o = cell_index(nb[0], nb[1], nb[2]);
          cell_faces_[c][2 * axis + 1] = faces_.size();
          cell_faces_[o][2 * axis] = faces_.size();
          faces_.push_back(Face{axis, c, o, false, +1});
        }
      }
    }
    num_interior_ = faces_.size();
    for (int axis = 0; axis < 3; ++axis) {
      for (CellIndex c = 0; c < n; ++c) {
        const auto ijk = cell_coords(c);
        if (ijk[axis] == 0) {
          cell_faces_[c][2 * axis] = faces_.size();
          faces_.push_back(Face{axis, c, c, true, -1});
        }
        if (ijk[axis] + 1 == cells_[axis]) {
          cell_faces_[c][2 * axis + 1] = faces_.size();
          faces_.push_back(Face{axis, c, c, true, +1});
        }
      }
    }
  }

  std::array<int, 3> cells_;
  std::array<double, 3> lengths_;
  std::array<double, 3> spacing_{};
  BoundarySpec boundary_;
  std::vector<Face> faces_;
  std::size_t num_interior_ = 0;
  std::vector<std::array<std::size_t, 6>> cell_faces_;
};

inline StructuredGrid build_grid(std::array<int, 3> cells, std::array<double, 3> lengths,
                                 BoundarySpec boundary = all_dirichlet()) {
  return StructuredGrid(cells, lengths, boundary);
}

}  // namespace mfdg
