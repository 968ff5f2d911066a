#include "fmat/decomp.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include <json.hpp>

#include "fmat/error.hpp"

namespace fmat {

int GridSpec::num_velocities() const {
    if (kind == GridKind::scalar_periodic) return total_unknowns();
    int total = 0;
    for (int c = 0; c < dim; ++c) {
        int count = nx - 1;
        for (int a = 0; a < dim; ++a)
            if (a != c) count *= nx;
        total += count;
    }
    return total;
}

int GridSpec::num_pressures() const {
    if (kind == GridKind::scalar_periodic) return 0;
    int p = 1;
    for (int a = 0; a < dim; ++a) p *= nx;
    return p;
}

int GridSpec::total_unknowns() const {
    if (kind == GridKind::scalar_periodic) {
        int t = 1;
        for (int a = 0; a < dim; ++a) t *= nx;
        return t;
    }
    return num_velocities() + num_pressures();
}

StaggeredLayout StaggeredLayout::square(int dim, int nx) {
    StaggeredLayout l;
    l.dim = dim;
    l.cells = {nx, nx, 1};
    if (dim == 3) l.cells[2] = nx;
    return l;
}

int StaggeredLayout::component_count(int c) const {
    int count = cells[c] - 1;
    for (int a = 0; a < dim; ++a)
        if (a != c) count *= cells[a];
    return count;
}

int StaggeredLayout::component_base(int c) const {
    int base = 0;
    for (int a = 0; a < c; ++a) base += component_count(a);
    return base;
}

int StaggeredLayout::num_velocities() const { return component_base(dim); }

int StaggeredLayout::num_pressures() const {
    int p = 1;
    for (int a = 0; a < dim; ++a) p *= cells[a];
    return p;
}

int StaggeredLayout::total() const { return num_velocities() + num_pressures(); }

int StaggeredLayout::velocity_id(int c, const std::array<int, 3>& pos) const {
    int id = 0;
    int stride = 1;
    for (int a = 0; a < dim; ++a) {
        id += (pos[a] - 1) * stride;
        stride *= a == c ? cells[a] - 1 : cells[a];
    }
    return component_base(c) + id;
}

int StaggeredLayout::pressure_id(const std::array<int, 3>& cell) const {
    int id = 0;
    int stride = 1;
    for (int a = 0; a < dim; ++a) {
        id += (cell[a] - 1) * stride;
        stride *= cells[a];
    }
    return num_velocities() + id;
}

void StaggeredLayout::locate(int id, int& component, std::array<int, 3>& pos) const {
    pos = {1, 1, 1};
    if (id >= num_velocities()) {
        component = -1;
        int rem = id - num_velocities();
        for (int a = 0; a < dim; ++a) {
            pos[a] = rem % cells[a] + 1;
            rem /= cells[a];
        }
        return;
    }
    for (int c = 0; c < dim; ++c) {
        const int base = component_base(c);
        if (id < base + component_count(c)) {
            component = c;
            int rem = id - base;
            for (int a = 0; a < dim; ++a) {
                const int extent = a == c ? cells[a] - 1 : cells[a];
                pos[a] = rem % extent + 1;
                rem /= extent;
            }
            return;
        }
    }
    throw Error("locate: id out of range");
}

ScalarLayout ScalarLayout::square(int dim, int nx) {
    ScalarLayout l;
    l.dim = dim;
    l.nodes = {nx, nx, 1};
    if (dim == 3) l.nodes[2] = nx;
    return l;
}

int ScalarLayout::total() const {
    int t = 1;
    for (int a = 0; a < dim; ++a) t *= nodes[a];
    return t;
}

int ScalarLayout::node_id(const std::array<int, 3>& pos) const {
    int id = 0;
    int stride = 1;
    for (int a = 0; a < dim; ++a) {
        id += (pos[a] - 1) * stride;
        stride *= nodes[a];
    }
    return id;
}

void ScalarLayout::locate(int id, std::array<int, 3>& pos) const {
    pos = {1, 1, 1};
    for (int a = 0; a < dim; ++a) {
        pos[a] = id % nodes[a] + 1;
        id /= nodes[a];
    }
}

std::vector<int> Decomposition::schur_variables() const {
    std::vector<int> vars;
    for (int id = 0; id < velocity_count; ++id)
        if (kind[id] == VarKind::separator || kind[id] == VarKind::sigma_corner)
            vars.push_back(id);
    for (int id = velocity_count; id < static_cast<int>(kind.size()); ++id)
        if (kind[id] == VarKind::retained_p) vars.push_back(id);
    return vars;
}

int Decomposition::schur_size() const { return static_cast<int>(schur_variables().size()); }

int Decomposition::reduced_size() const {
    return static_cast<int>(groups.size() + corner_velocities.size() +
                            retained_pressures.size() + corner_pressures.size());
}

namespace {

using GroupKey = std::tuple<int, char, std::vector<int>>;

// Cartesian product of per-axis tile index sets, as sorted linear tile ids.
std::vector<int> tile_product(const std::array<std::vector<int>, 3>& axis_sets,
                              const std::array<int, 3>& k, int dim) {
    std::vector<int> tiles{0};
    int stride = 1;
    for (int a = 0; a < dim; ++a) {
        std::vector<int> next;
        for (int t : axis_sets[a])
            for (int base : tiles) next.push_back(base + t * stride);
        tiles = std::move(next);
        stride *= k[a];
    }
    std::sort(tiles.begin(), tiles.end());
    tiles.erase(std::unique(tiles.begin(), tiles.end()), tiles.end());
    return tiles;
}

void check_divisibility(int dim, const std::array<int, 3>& cells, const std::array<int, 3>& sub) {
    for (int a = 0; a < dim; ++a) {
        if (cells[a] <= 0 || sub[a] <= 0) throw Error("decompose: sizes must be positive");
        if (cells[a] % sub[a] != 0) throw Error("decompose: s_x does not divide n_x");
    }
}

Decomposition decompose_scalar(int dim, const std::array<int, 3>& cells,
                               const std::array<int, 3>& sub) {
    const ScalarLayout layout{dim, cells};
    std::array<int, 3> k{1, 1, 1};
    int ntiles = 1;
    for (int a = 0; a < dim; ++a) {
        k[a] = cells[a] / sub[a];
        ntiles *= k[a];
    }

    Decomposition d;
    d.dim = dim;
    d.grid_kind = GridKind::scalar_periodic;
    d.num_subdomains = ntiles;
    d.velocity_count = layout.total();
    d.subdomain_of.assign(layout.total(), -1);
    d.kind.assign(layout.total(), VarKind::interior);

    // Distinct wrap-around cut planes can share one adjacent-tile pair when an
    // axis has only two tiles, so groups are keyed by the geometric cause of
    // separation (cut plane index per cause axis, tile index otherwise).
    struct Bucket {
        std::vector<int> tiles;
        std::vector<int> members;
    };
    std::map<std::pair<int, std::vector<int>>, Bucket> group_map;

    std::array<int, 3> pos{1, 1, 1};
    for (int id = 0; id < layout.total(); ++id) {
        layout.locate(id, pos);
        std::array<std::vector<int>, 3> axis_sets;
        std::vector<int> signature(dim);
        int level = 0;
        for (int a = 0; a < dim; ++a) {
            // A torus with one tile along an axis needs no cut there.
            if (k[a] >= 2 && pos[a] % sub[a] == 0) {
                const int t = pos[a] / sub[a];
                axis_sets[a] = {(t - 1) % k[a], t % k[a]};
                std::sort(axis_sets[a].begin(), axis_sets[a].end());
                signature[a] = -t;
                ++level;
            } else {
                axis_sets[a] = {(pos[a] - 1) / sub[a]};
                signature[a] = axis_sets[a][0];
            }
        }
        if (level == 0) {
            int tile = 0, stride = 1;
            for (int a = 0; a < dim; ++a) {
                tile += axis_sets[a][0] * stride;
                stride *= k[a];
            }
            d.subdomain_of[id] = tile;
            continue;
        }
        d.kind[id] = VarKind::separator;
        auto& bucket = group_map[{level, std::move(signature)}];
        if (bucket.members.empty()) bucket.tiles = tile_product(axis_sets, k, dim);
        bucket.members.push_back(id);
    }

    for (auto& [key, bucket] : group_map) {
        SeparatorGroup g;
        g.level = key.first;
        g.variable_type = 's';
        g.adjacent_subdomains = std::move(bucket.tiles);
        g.members = std::move(bucket.members);
        d.groups.push_back(std::move(g));
    }
    std::sort(d.groups.begin(), d.groups.end(),
              [](const SeparatorGroup& a, const SeparatorGroup& b) {
                  return a.level != b.level ? a.level < b.level
                                            : a.members.front() < b.members.front();
              });
    return d;
}

Decomposition decompose_staggered(int dim, const std::array<int, 3>& cells,
                                  const std::array<int, 3>& sub) {
    const StaggeredLayout layout{dim, cells};
    std::array<int, 3> k{1, 1, 1};
    int ntiles = 1;
    for (int a = 0; a < dim; ++a) {
        k[a] = cells[a] / sub[a];
        ntiles *= k[a];
    }

    Decomposition d;
    d.dim = dim;
    d.grid_kind = GridKind::staggered;
    d.num_subdomains = ntiles;
    d.velocity_count = layout.num_velocities();
    d.subdomain_of.assign(layout.total(), -1);
    d.kind.assign(layout.total(), VarKind::interior);

    // Separator metadata kept until corner flagging settles group membership.
    std::map<int, std::pair<int, std::vector<int>>> sep_info; // id -> (level, tiles)

    for (int c = 0; c < dim; ++c) {
        const int base = layout.component_base(c);
        for (int local = 0; local < layout.component_count(c); ++local) {
            const int id = base + local;
            int comp;
            std::array<int, 3> pos;
            layout.locate(id, comp, pos);

            std::array<std::vector<int>, 3> axis_sets;
            int level = 0;
            for (int a = 0; a < dim; ++a) {
                const bool cause = a == c
                                       ? pos[a] % sub[a] == 0 // face on a cut plane
                                       : pos[a] % sub[a] == 0 && pos[a] != cells[a]; // lower-side slab
                if (cause) {
                    const int t = pos[a] / sub[a];
                    axis_sets[a] = {t - 1, t};
                    ++level;
                } else {
                    axis_sets[a] = {(pos[a] - 1) / sub[a]};
                }
            }
            if (level == 0) {
                int tile = 0, stride = 1;
                for (int a = 0; a < dim; ++a) {
                    tile += axis_sets[a][0] * stride;
                    stride *= k[a];
                }
                d.subdomain_of[id] = tile;
            } else {
                d.kind[id] = VarKind::separator;
                sep_info[id] = {level, tile_product(axis_sets, k, dim)};
            }
        }
    }

    const int pbase = layout.num_velocities();
    for (int pid = pbase; pid < layout.total(); ++pid) {
        int comp;
        std::array<int, 3> cell;
        layout.locate(pid, comp, cell);
        int tile = 0, stride = 1;
        for (int a = 0; a < dim; ++a) {
            tile += (cell[a] - 1) / sub[a] * stride;
            stride *= k[a];
        }
        d.subdomain_of[pid] = tile;
    }

    // Conservation cells: every existing face velocity is a separator, so the
    // discrete conservation equation would lose all its unknowns. Keep those
    // velocities individually and retain the cell pressure.
    std::array<int, 3> cell{1, 1, 1};
    for (int pid = pbase; pid < layout.total(); ++pid) {
        int comp;
        layout.locate(pid, comp, cell);
        std::vector<int> faces;
        bool all_sep = true;
        for (int a = 0; a < dim && all_sep; ++a) {
            for (const int f : {cell[a] - 1, cell[a]}) {
                if (f < 1 || f > cells[a] - 1) continue; // wall face, no unknown
                auto fpos = cell;
                fpos[a] = f;
                const int vid = layout.velocity_id(a, fpos);
                faces.push_back(vid);
                if (d.kind[vid] == VarKind::interior) {
                    all_sep = false;
                    break;
                }
            }
        }
        if (faces.empty() || !all_sep) continue;
        for (int vid : faces) {
            if (d.kind[vid] != VarKind::sigma_corner) {
                d.kind[vid] = VarKind::sigma_corner;
                d.corner_velocities.push_back(vid);
            }
        }
        d.kind[pid] = VarKind::retained_p;
        d.corner_pressures.push_back(pid);
        d.subdomain_of[pid] = -1;
    }
    std::sort(d.corner_velocities.begin(), d.corner_velocities.end());

    d.retained_pressures.assign(ntiles, -1);
    for (int pid = pbase; pid < layout.total(); ++pid) {
        if (d.kind[pid] != VarKind::interior) continue;
        const int tile = d.subdomain_of[pid];
        if (d.retained_pressures[tile] == -1) {
            d.retained_pressures[tile] = pid;
            d.kind[pid] = VarKind::retained_p;
        }
    }
    for (int t = 0; t < ntiles; ++t)
        if (d.retained_pressures[t] == -1)
            throw Error("decompose: subdomain has no interior pressure to retain");

    std::map<GroupKey, std::vector<int>> group_map;
    for (const auto& [id, info] : sep_info) {
        if (d.kind[id] != VarKind::separator) continue; // promoted to a corner
        int comp;
        std::array<int, 3> pos;
        layout.locate(id, comp, pos);
        const char type = static_cast<char>('u' + comp);
        group_map[{info.first, type, info.second}].push_back(id);
    }
    for (auto& [key, members] : group_map) {
        SeparatorGroup g;
        g.level = std::get<0>(key);
        g.variable_type = std::get<1>(key);
        g.adjacent_subdomains = std::get<2>(key);
        std::sort(members.begin(), members.end());
        g.members = std::move(members);
        d.groups.push_back(std::move(g));
    }
    std::sort(d.groups.begin(), d.groups.end(),
              [](const SeparatorGroup& a, const SeparatorGroup& b) {
                  return a.level != b.level ? a.level < b.level
                                            : a.members.front() < b.members.front();
              });
    return d;
}

} // namespace

Decomposition decompose_rect(int dim, GridKind kind, const std::array<int, 3>& cells,
                             const std::array<int, 3>& sub) {
    if (dim != 2 && dim != 3) throw Error("decompose: dim must be 2 or 3");
    check_divisibility(dim, cells, sub);
    return kind == GridKind::scalar_periodic ? decompose_scalar(dim, cells, sub)
                                             : decompose_staggered(dim, cells, sub);
}

Decomposition decompose(const GridSpec& grid) {
    std::array<int, 3> cells{grid.nx, grid.nx, 1};
    std::array<int, 3> sub{grid.sx, grid.sx, 1};
    if (grid.dim == 3) {
        cells[2] = grid.nx;
        sub[2] = grid.sx;
    }
    return decompose_rect(grid.dim, grid.kind, cells, sub);
}

Decomposition decompose(const GridSpec& grid, const SaddleSystem& k) {
    if (grid.total_unknowns() != k.size())
        throw Error("decompose: variable count mismatch between grid and system");
    if (grid.kind == GridKind::staggered && grid.num_velocities() != k.n())
        throw Error("decompose: velocity count mismatch between grid and system");
    return decompose(grid);
}

const std::vector<SeparatorGroup>& separator_groups(const Decomposition& d) { return d.groups; }

std::string dump_json(const Decomposition& d) {
    nlohmann::json j;
    j["dim"] = d.dim;
    j["kind"] = d.grid_kind == GridKind::scalar_periodic ? "scalar_periodic" : "staggered";
    j["num_subdomains"] = d.num_subdomains;
    j["retained_pressures"] = d.retained_pressures;
    j["corner_pressures"] = d.corner_pressures;
    j["corner_velocities"] = d.corner_velocities;

    std::vector<int> group_of(d.kind.size(), -1);
    for (std::size_t g = 0; g < d.groups.size(); ++g)
        for (int id : d.groups[g].members) group_of[id] = static_cast<int>(g);

    auto kind_name = [](VarKind k) {
        switch (k) {
        case VarKind::interior: return "interior";
        case VarKind::separator: return "separator";
        case VarKind::sigma_corner: return "sigma_corner";
        case VarKind::retained_p: return "retained_p";
        }
        return "?";
    };
    nlohmann::json vars = nlohmann::json::array();
    for (std::size_t id = 0; id < d.kind.size(); ++id) {
        nlohmann::json v;
        v["id"] = id;
        v["kind"] = kind_name(d.kind[id]);
        if (d.subdomain_of[id] >= 0) v["subdomain"] = d.subdomain_of[id];
        if (group_of[id] >= 0) v["group"] = group_of[id];
        vars.push_back(std::move(v));
    }
    j["variables"] = std::move(vars);

    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : d.groups) {
        nlohmann::json gj;
        gj["type"] = std::string(1, g.variable_type);
        gj["level"] = g.level;
        gj["adjacent_subdomains"] = g.adjacent_subdomains;
        gj["members"] = g.members;
        groups.push_back(std::move(gj));
    }
    j["groups"] = std::move(groups);
    return j.dump(2);
}

} // namespace fmat
