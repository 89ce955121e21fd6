#include <gtest/gtest.h>

#include "mfdg/mesh.hpp"

using namespace mfdg;

TEST(Grid, CountsAndSpacing) {
  const auto g = build_grid({3, 2, 4}, {1.0, 1.0, 2.0});
  EXPECT_EQ(g.num_cells(), 24u);
  EXPECT_EQ(g.num_interior_faces(), 2u * 2 * 4 + 3u * 1 * 4 + 3u * 2 * 3);
  EXPECT_EQ(g.num_boundary_faces(), 2u * (2 * 4 + 3 * 4 + 3 * 2));
  EXPECT_NEAR(g.spacing()[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(g.spacing()[2], 0.5, 1e-15);
  EXPECT_NEAR(g.cell_volume(), 1.0 / 3.0 * 0.5 * 0.5, 1e-15);
}

TEST(Grid, LexicographicNumbering) {
  const auto g = build_grid({3, 2, 4}, {1.0, 1.0, 2.0});
  EXPECT_EQ(g.cell_index(0, 0, 0), 0u);
  EXPECT_EQ(g.cell_index(1, 0, 0), 1u);
  EXPECT_EQ(g.cell_index(0, 1, 0), 3u);
  EXPECT_EQ(g.cell_index(0, 0, 1), 6u);
  const auto o = g.cell_origin(g.cell_index(2, 1, 3));
  EXPECT_NEAR(o[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(o[1], 0.5, 1e-15);
  EXPECT_NEAR(o[2], 1.5, 1e-15);
}

TEST(Grid, FaceOrientation) {
  const auto g = build_grid({2, 2, 2}, {1.0, 1.0, 1.0});
  for (const auto& f : g.faces()) {
    if (f.boundary) continue;
    EXPECT_LT(f.inside, f.outside);
    EXPECT_EQ(f.normal_sign, 1);
  }
}

TEST(Grid, BoundaryTypes) {
  auto b = all_dirichlet();
  b[static_cast<int>(DomainFace::x_high)] = BoundaryType::neumann;
  const auto g = build_grid({2, 2, 2}, {1.0, 1.0, 1.0}, b);
  int neumann = 0;
  for (const auto& f : g.faces()) {
    if (!f.boundary) continue;
    if (g.boundary_type(f.domain_face()) == BoundaryType::neumann) {
      ++neumann;
      EXPECT_EQ(f.axis, 0);
      EXPECT_EQ(f.normal_sign, 1);
    }
  }
  EXPECT_EQ(neumann, 4);
}

TEST(Grid, RejectsEmptyGrid) {
  EXPECT_THROW(build_grid({0, 2, 2}, {1.0, 1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(build_grid({2, 2, 2}, {1.0, -1.0, 1.0}), std::invalid_argument);
}
