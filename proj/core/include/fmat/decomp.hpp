#pragma once

#include <array>
#include <string>
#include <vector>

#include "fmat/saddle.hpp"
#include "fmat/sparse.hpp"

namespace fmat {

enum class GridKind {
    scalar_periodic, // one unknown per node, torus connectivity, node 0 grounded
    staggered        // cell-centered pressure, face-normal velocities, walls
};

// Square uniform grid. Cuts are axis-aligned; sx must divide nx.
struct GridSpec {
    int dim = 2;
    int nx = 0;
    int sx = 0;
    GridKind kind = GridKind::staggered;

    int total_unknowns() const;
    int num_velocities() const;
    int num_pressures() const;
};

// Index layout for staggered grids with per-axis cell counts. Velocities come
// first (component by component), pressures last. All positions are 1-based;
// component c velocities sit on interior faces, so pos[c] runs in
// [1, cells[c]-1] while the other coordinates are cell indices in [1, cells].
struct StaggeredLayout {
    int dim = 2;
    std::array<int, 3> cells{1, 1, 1};

    static StaggeredLayout square(int dim, int nx);

    int component_count(int c) const;
    int component_base(int c) const;
    int num_velocities() const;
    int num_pressures() const;
    int total() const;

    int velocity_id(int c, const std::array<int, 3>& pos) const;
    int pressure_id(const std::array<int, 3>& cell) const;
    // Inverse of velocity_id/pressure_id; component -1 denotes a pressure.
    void locate(int id, int& component, std::array<int, 3>& pos) const;
};

struct ScalarLayout {
    int dim = 2;
    std::array<int, 3> nodes{1, 1, 1};

    static ScalarLayout square(int dim, int nx);
    int total() const;
    int node_id(const std::array<int, 3>& pos) const; // 1-based positions
    void locate(int id, std::array<int, 3>& pos) const;
};

enum class VarKind : char { interior, separator, sigma_corner, retained_p };

struct SeparatorGroup {
    char variable_type = 's';            // 'u', 'v', 'w', or 's' for scalar nodes
    int level = 1;                       // cut arity: faces 1, edges 2, corners 3
    std::vector<int> adjacent_subdomains;
    std::vector<int> members;            // ascending ids; aggregate slot is members.back()
};

struct Decomposition {
    int dim = 2;
    GridKind grid_kind = GridKind::staggered;
    int num_subdomains = 0;
    int velocity_count = 0; // ids below this are velocities (all ids for scalar grids)
    std::vector<int> subdomain_of;       // interiors only; -1 otherwise
    std::vector<VarKind> kind;
    std::vector<SeparatorGroup> groups;  // faces, then edges, then corners
    std::vector<int> retained_pressures; // one per subdomain, indexed by subdomain
    std::vector<int> corner_pressures;   // conservation-cell pressures, ascending
    std::vector<int> corner_velocities;  // conservation-cell velocities, ascending

    // Variables that survive interior elimination: separator and corner
    // velocities ascending, then retained and corner pressures ascending.
    std::vector<int> schur_variables() const;
    int schur_size() const;
    // One unknown per group plus every individually kept variable.
    int reduced_size() const;
};

// Geometric decomposition with per-axis cell and subdomain sizes.
Decomposition decompose_rect(int dim, GridKind kind, const std::array<int, 3>& cells,
                             const std::array<int, 3>& sub);

Decomposition decompose(const GridSpec& grid);

// Validates that the system's variable count matches the grid before
// decomposing.
Decomposition decompose(const GridSpec& grid, const SaddleSystem& k);

const std::vector<SeparatorGroup>& separator_groups(const Decomposition& d);

std::string dump_json(const Decomposition& d);

} // namespace fmat
