/*
 * Per-word atomic primitives for the lock-free shared iterate.
 *
 * Loaded through ctypes (which drops the GIL around each call), so these
 * routines run truly concurrently with other workers. Doubles are handled
 * through their 64-bit representation; subtraction is a CAS loop.
 */
#define PY_SSIZE_T_CLEAN
#include <Python.h>
#include <stdint.h>
#include <string.h>

static inline double bits_to_double(uint64_t b) {
    double d;
    memcpy(&d, &b, sizeof d);
    return d;
}

static inline uint64_t double_to_bits(double d) {
    uint64_t b;
    memcpy(&b, &d, sizeof b);
    return b;
}

void zovr_load(const double *cells, double *out, int64_t n) {
    const uint64_t *src = (const uint64_t *)cells;
    for (int64_t k = 0; k < n; ++k) {
        out[k] = bits_to_double(__atomic_load_n(&src[k], __ATOMIC_ACQUIRE));
    }
}

void zovr_store(double *cells, const double *values, int64_t n) {
    uint64_t *dst = (uint64_t *)cells;
    for (int64_t k = 0; k < n; ++k) {
        __atomic_store_n(&dst[k], double_to_bits(values[k]), __ATOMIC_RELEASE);
    }
}

/* cells[idx[k]] -= delta[k], each coordinate an independent atomic RMW. */
void zovr_fetch_sub(double *cells, const int64_t *idx, const double *delta, int64_t n) {
    uint64_t *dst = (uint64_t *)cells;
    for (int64_t k = 0; k < n; ++k) {
        uint64_t *cell = &dst[idx[k]];
        uint64_t old = __atomic_load_n(cell, __ATOMIC_RELAXED);
        for (;;) {
            uint64_t next = double_to_bits(bits_to_double(old) - delta[k]);
            if (__atomic_compare_exchange_n(cell, &old, next, 1,
                                            __ATOMIC_ACQ_REL, __ATOMIC_RELAXED)) {
                break;
            }
        }
    }
}

int64_t zovr_fetch_add_i64(int64_t *counter, int64_t value) {
    return __atomic_fetch_add(counter, value, __ATOMIC_ACQ_REL);
}

int64_t zovr_load_i64(const int64_t *counter) {
    return __atomic_load_n(counter, __ATOMIC_ACQUIRE);
}

void zovr_store_i64(int64_t *counter, int64_t value) {
    __atomic_store_n(counter, value, __ATOMIC_RELEASE);
}

/* Importable stub so the shared object can be located via the import system. */
static struct PyModuleDef atomics_module = {
    PyModuleDef_HEAD_INIT, "_atomics", "C atomics loaded through ctypes.", -1, NULL,
};

PyMODINIT_FUNC PyInit__atomics(void) { return PyModule_Create(&atomics_module); }
