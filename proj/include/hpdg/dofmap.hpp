#pragma once

#include <memory>
#include <stdexcept>
#include <vector>

#include "hpdg/basis.hpp"
#include "hpdg/mesh.hpp"

namespace hpdg {

/// Global indexing of the broken polynomial space: every basis function is
/// supported on exactly one element, and element e owns the contiguous index
/// range [offset(e), offset(e) + space(e).dim()).
class DofMap {
  public:
    DofMap(const Mesh& mesh, std::shared_ptr<const PolySpace> space)
        : mesh_(&mesh), spaces_(mesh.num_elements(), std::move(space)) {
        if (!spaces_.empty() && !spaces_.front())
            throw std::invalid_argument("DofMap: null space");
        offsets_.resize(spaces_.size() + 1, 0);
        for (std::size_t e = 0; e < spaces_.size(); ++e)
            offsets_[e + 1] = offsets_[e] + spaces_[e]->dim();
    }

    const Mesh& mesh() const { return *mesh_; }
    int num_elements() const { return static_cast<int>(spaces_.size()); }
    const PolySpace& space(int e) const { return *spaces_[e]; }
    std::shared_ptr<const PolySpace> space_ptr(int e) const { return spaces_[e]; }
    int offset(int e) const { return offsets_[e]; }
    int dim(int e) const { return offsets_[e + 1] - offsets_[e]; }
    int total_dofs() const { return offsets_.back(); }

    int max_degree() const {
        int p = 1;
        for (const auto& s : spaces_)
            p = std::max(p, s->degree());
        return p;
    }

  private:
    const Mesh* mesh_;
    std::vector<std::shared_ptr<const PolySpace>> spaces_;
    std::vector<int> offsets_;
};

} // namespace hpdg
