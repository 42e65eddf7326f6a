#pragma once

#include <string>
#include <vector>

#include "xlg/actstore.hpp"
#include "xlg/rng.hpp"

namespace xlg::testing {

// Small max-pooled matrix with gaussian values; `pos` leading rows are positive.
inline actstore::ActivationMatrix gaussian_matrix(std::uint64_t seed, std::size_t rows, std::size_t pos,
                                                  std::vector<std::uint32_t> layers) {
    actstore::ActivationMatrix m;
    m.header.model_id = "test";
    m.header.checkpoint_step = 7;
    m.header.concept_id = "c";
    m.header.language = "xx";
    m.header.layout = actstore::LayerLayout(std::move(layers));
    for (std::size_t r = 0; r < rows; ++r) {
        m.header.sample_ids.push_back("id" + std::to_string(r));
        m.header.labels.push_back(r < pos ? 1 : 0);
    }
    Rng rng(seed);
    m.values.resize(rows * m.header.n_cols());
    for (auto& v : m.values) v = static_cast<float>(rng.normal());
    return m;
}

}  // namespace xlg::testing
