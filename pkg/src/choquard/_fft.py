"""Thin wrappers around scipy.fft with a process-wide worker cap.

The CHQ_THREADS environment variable caps transform parallelism (and the
number of concurrent experiment sub-runs elsewhere in the package).
"""

import os

import scipy.fft as _sfft


def worker_count() -> int:
    raw = os.environ.get("CHQ_THREADS", "")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def fftn(a):
    return _sfft.fftn(a, workers=worker_count())


def ifftn(a):
    return _sfft.ifftn(a, workers=worker_count())


def rfftn(a):
    return _sfft.rfftn(a, workers=worker_count())


def irfftn(a, s):
    return _sfft.irfftn(a, s=s, workers=worker_count())
