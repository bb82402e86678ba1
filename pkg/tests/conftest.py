import os

# Two workers even on single-core CI so the determinism tests exercise a
# genuinely multi-threaded pool.  Must be set before numba is imported.
os.environ.setdefault("NUMBA_NUM_THREADS", "2")
