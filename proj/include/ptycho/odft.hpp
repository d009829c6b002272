#pragma once

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "ptycho/complex_image.hpp"

namespace ptycho {

namespace detail {

/// Process-wide cache of FFTW plans keyed by (rows, cols, sign). Plans are
/// created once under a mutex with FFTW_UNALIGNED so they can be re-executed
/// on arbitrary buffers; fftw_execute_dft on a cached plan is thread-safe.
class FftwPlanCache {
public:
    static void exec(int rows, int cols, int sign, const cdouble* in, cdouble* out) {
        instance().run(rows, cols, sign, in, out);
    }

private:
    struct Entry {
        fftw_plan plan = nullptr;
        std::vector<cdouble> scratch_in;
        std::vector<cdouble> scratch_out;
        ~Entry() {
            if (plan) fftw_destroy_plan(plan);
        }
    };

    static FftwPlanCache& instance() {
        static FftwPlanCache cache;
        return cache;
    }

    void run(int rows, int cols, int sign, const cdouble* in, cdouble* out) {
        fftw_plan plan;
        {
            std::lock_guard lock(mutex_);
            auto key = std::tuple{rows, cols, sign};
            auto it = plans_.find(key);
            if (it == plans_.end()) {
                auto entry = std::make_unique<Entry>();
                entry->scratch_in.resize(static_cast<std::size_t>(rows) * cols);
                entry->scratch_out.resize(static_cast<std::size_t>(rows) * cols);
                // Out-of-place plan matching how it is re-executed below.
                entry->plan = fftw_plan_dft_2d(
                    rows, cols, reinterpret_cast<fftw_complex*>(entry->scratch_in.data()),
                    reinterpret_cast<fftw_complex*>(entry->scratch_out.data()), sign,
                    FFTW_ESTIMATE | FFTW_UNALIGNED);
                it = plans_.emplace(key, std::move(entry)).first;
            }
            plan = it->second->plan;
        }
        // Out-of-place c2c transforms leave the input untouched.
        fftw_execute_dft(plan,
                         reinterpret_cast<fftw_complex*>(const_cast<cdouble*>(in)),
                         reinterpret_cast<fftw_complex*>(out));
    }

    std::mutex mutex_;
    std::map<std::tuple<int, int, int>, std::unique_ptr<Entry>> plans_;
};

}  // namespace detail

/// Oversampled DFT: zero-pad an m x m patch to (2m-1) x (2m-1), transform
/// with kernel e^{-i 2 pi n.w}, and scale by 1/(2m-1). The columns of the
/// implied matrix are then orthonormal, so the adjoint below inverts it.
inline ComplexImage odft(const ComplexImage& patch) {
    if (!patch.is_square())
        throw DimensionError("odft: patch must be square");
    int m = patch.rows();
    int big = 2 * m - 1;
    ComplexImage padded(big, big, 0.0);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) padded(r, c) = patch(r, c);
    ComplexImage out(big, big);
    detail::FftwPlanCache::exec(big, big, FFTW_FORWARD, padded.data(), out.data());
    double scale = 1.0 / big;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= scale;
    return out;
}

/// Adjoint of odft: inverse transform of a (2m-1) x (2m-1) block cropped
/// back to m x m. odft_adjoint(odft(p)) == p.
inline ComplexImage odft_adjoint(const ComplexImage& block, int m) {
    int big = 2 * m - 1;
    if (m < 1 || block.rows() != big || block.cols() != big)
        throw DimensionError("odft_adjoint: block must be (2m-1) x (2m-1)");
    ComplexImage full(big, big);
    detail::FftwPlanCache::exec(big, big, FFTW_BACKWARD, block.data(), full.data());
    ComplexImage out(m, m);
    double scale = 1.0 / big;
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) out(r, c) = full(r, c) * scale;
    return out;
}

}  // namespace ptycho
