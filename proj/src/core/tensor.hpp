#pragma once

#include <algorithm>
#include <memory>
#include <new>
#include <numeric>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "common.hpp"

namespace chorus {

// Keep large freed blocks in the process heap instead of handing them back
// to the kernel: graphs allocate the same big activation buffers every step,
// and re-faulting tens of MB per op dwarfs the arithmetic.
inline void tune_malloc_for_reuse() {
#ifdef __GLIBC__
    static const bool done = [] {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
        return true;
    }();
    (void)done;
#endif
}

// 64-byte-aligned storage so Eigen's runtime packet peeling never depends on
// where the heap happened to place a buffer; keeps runs bit-reproducible.
// Default-construct (resize without a value) leaves elements uninitialized,
// letting ops that overwrite their whole output skip a memset.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::size_t alignment = 64;

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) {
        tune_malloc_for_reuse();
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(alignment)));
    }
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
        if constexpr (sizeof...(Args) == 0)
            ::new (static_cast<void*>(p)) U;
        else
            ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
    void deallocate(T* p, std::size_t n) noexcept {
        ::operator delete(p, n * sizeof(T), std::align_val_t(alignment));
    }
    bool operator==(const AlignedAllocator&) const { return true; }
    bool operator!=(const AlignedAllocator&) const { return false; }
};

template <class S>
using AlignedVec = std::vector<S, AlignedAllocator<S>>;

// Dense n-d array, row-major. S is float for training/inference and double
// for finite-difference gradient checks.
template <class S>
struct Tensor {
    std::vector<long> dims;
    AlignedVec<S> data;
    bool requires_grad = false;
    AlignedVec<S> grad; // empty until backward touches this tensor

    struct Uninit {};

    Tensor() = default;
    explicit Tensor(std::vector<long> d, bool rg = false)
        : dims(std::move(d)), requires_grad(rg) {
        for (long x : dims)
            if (x <= 0) throw DimensionError("Tensor: non-positive dim " + std::to_string(x));
        data.assign(static_cast<size_t>(size()), S(0));
    }
    // Contents left uninitialized; for op outputs that overwrite everything.
    Tensor(std::vector<long> d, Uninit) : dims(std::move(d)) {
        for (long x : dims)
            if (x <= 0) throw DimensionError("Tensor: non-positive dim " + std::to_string(x));
        data.resize(static_cast<size_t>(size()));
    }

    long size() const {
        long n = 1;
        for (long x : dims) n *= x;
        return n;
    }

    long rank() const { return static_cast<long>(dims.size()); }

    long dim(int i) const { return dims.at(static_cast<size_t>(i)); }

    bool scalar() const { return size() == 1; }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), S(0));
    }

    void zero_grad() {
        std::fill(grad.begin(), grad.end(), S(0));
    }

    bool finite() const {
        for (S v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < dims.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(dims[i]);
        }
        return s + ")";
    }
};

template <class S>
using TensorPtr = std::shared_ptr<Tensor<S>>;

template <class S>
TensorPtr<S> make_tensor(std::vector<long> dims, bool requires_grad = false) {
    return std::make_shared<Tensor<S>>(std::move(dims), requires_grad);
}

template <class S>
TensorPtr<S> make_tensor(std::vector<long> dims, const std::vector<S>& values,
                         bool requires_grad = false) {
    auto t = make_tensor<S>(std::move(dims), requires_grad);
    if (static_cast<long>(values.size()) != t->size())
        throw DimensionError("make_tensor: value count does not match dims");
    t->data.assign(values.begin(), values.end());
    return t;
}

template <class S>
TensorPtr<S> make_tensor(std::vector<long> dims, std::initializer_list<S> values,
                         bool requires_grad = false) {
    auto t = make_tensor<S>(std::move(dims), requires_grad);
    if (static_cast<long>(values.size()) != t->size())
        throw DimensionError("make_tensor: value count does not match dims");
    t->data.assign(values.begin(), values.end());
    return t;
}

template <class S>
TensorPtr<S> make_tensor(std::vector<long> dims, const AlignedVec<S>& values,
                         bool requires_grad = false) {
    auto t = make_tensor<S>(std::move(dims), requires_grad);
    if (static_cast<long>(values.size()) != t->size())
        throw DimensionError("make_tensor: value count does not match dims");
    t->data = values;
    return t;
}

// Elementwise copy with scalar conversion (float <-> double).
template <class D, class A>
TensorPtr<D> cast_tensor(const Tensor<A>& src) {
    auto out = make_tensor<D>(src.dims, src.requires_grad);
    for (size_t i = 0; i < src.data.size(); ++i)
        out->data[i] = static_cast<D>(src.data[i]);
    return out;
}

} // namespace chorus
