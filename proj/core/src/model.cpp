#include "lpln/model.hpp"

#include <cassert>
#include <cstring>

namespace lpln {

namespace {

Array pick_row(const Array& a, int row) {
    if (a.empty()) return Array();
    const int C = a.cols();
    Array out({1, C});
    std::memcpy(out.data(), a.data() + static_cast<std::size_t>(row) * C,
                static_cast<std::size_t>(C) * sizeof(double));
    return out;
}

Array repeat_row(const Array& a, int n) {
    if (a.empty()) return Array();
    assert(a.rows() == 1);
    const int C = a.cols();
    Array out({n, C});
    for (int r = 0; r < n; ++r)
        std::memcpy(out.data() + static_cast<std::size_t>(r) * C, a.data(),
                    static_cast<std::size_t>(C) * sizeof(double));
    return out;
}

}  // namespace

LatentState select_row(const LatentState& s, int row) {
    assert(row >= 0 && row < s.batch());
    LatentState out;
    out.deter = pick_row(s.deter, row);
    out.stoch = pick_row(s.stoch, row);
    out.mean = pick_row(s.mean, row);
    out.stddev = pick_row(s.stddev, row);
    return out;
}

LatentState tile_rows(const LatentState& s, int n) {
    LatentState out;
    out.deter = repeat_row(s.deter, n);
    out.stoch = repeat_row(s.stoch, n);
    out.mean = repeat_row(s.mean, n);
    out.stddev = repeat_row(s.stddev, n);
    return out;
}

Array normal_rows(std::vector<int> shape, RngStream& rng) {
    Array a(std::move(shape));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.normal();
    return a;
}

}  // namespace lpln
