"""Cross-correlation machinery for locating a snippet within a longer stream."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft as _fft

from .validation import as_float_array

DEFAULT_RATIO_THRESHOLD = 0.6
DEFAULT_EXCLUSION_HALFWIDTH = 10  # cells; 1 m at the default 0.1 m grid


@dataclass
class CorrelationResult:
    """Peak location and clarity of a correlation sequence.

    ``ratio`` is second_best / best over lags farther than the exclusion
    half-width from the peak; below the acceptance threshold the match is
    considered unambiguous. It is ``None`` when it cannot be evaluated
    (too-short sequence or a non-positive peak).
    """

    best_lag: int
    best_value: float
    second_best_value: Optional[float]
    ratio: Optional[float]
    sequence: Optional[np.ndarray] = None

    def accepted(self, threshold: float = DEFAULT_RATIO_THRESHOLD) -> bool:
        return self.ratio is not None and self.ratio < threshold


def _check_pair(snippet, stream):
    snippet = as_float_array(snippet, "snippet")
    stream = as_float_array(stream, "stream")
    if snippet.size == 0 or stream.size == 0:
        raise ValueError("snippet and stream must be non-empty")
    if snippet.size > stream.size:
        raise ValueError("snippet must not be longer than the stream")
    return snippet, stream


def raw_cross_correlation(snippet, stream) -> np.ndarray:
    """Direct (time-domain) correlation at every fully-overlapping lag.

    out[m] = sum_n snippet[n] * stream[m + n] for m in [0, len(stream) -
    len(snippet)]; real signals, so conjugation is the identity.
    """
    snippet, stream = _check_pair(snippet, stream)
    return np.correlate(stream, snippet, mode="valid")


def fast_cross_correlation(snippet, stream) -> np.ndarray:
    """FFT evaluation of the same quantity as :func:`raw_cross_correlation`."""
    snippet, stream = _check_pair(snippet, stream)
    n_lags = stream.size - snippet.size + 1
    size = _fft.next_fast_len(stream.size + snippet.size - 1)
    spec = _fft.rfft(stream, size) * np.conj(_fft.rfft(snippet, size))
    return _fft.irfft(spec, size)[:n_lags]


def find_peak_with_ratio(
    sequence,
    exclusion_halfwidth: int = DEFAULT_EXCLUSION_HALFWIDTH,
    keep_sequence: bool = False,
) -> CorrelationResult:
    """Strongest lag plus the second-strongest outside the exclusion zone.

    Ties break toward the smallest lag. When every lag sits inside the
    exclusion zone the ratio is undefined and reported as ``None``.
    """
    seq = as_float_array(sequence, "sequence")
    if seq.size == 0:
        raise ValueError("sequence must be non-empty")
    if exclusion_halfwidth < 1:
        raise ValueError("exclusion_halfwidth must be >= 1")
    best_lag = int(np.argmax(seq))  # argmax returns the first (smallest) lag
    best = float(seq[best_lag])

    lags = np.arange(seq.size)
    outside = np.abs(lags - best_lag) > exclusion_halfwidth
    if not np.any(outside):
        second = None
        ratio = None
    else:
        second = float(np.max(seq[outside]))
        # a non-positive peak carries no confidence; clamp keeps ratio in [0, 1]
        ratio = min(max(second / best, 0.0), 1.0) if best > 0.0 else None
    return CorrelationResult(
        best_lag=best_lag,
        best_value=best,
        second_best_value=second,
        ratio=ratio,
        sequence=seq.copy() if keep_sequence else None,
    )


def locate_snippet(
    snippet,
    stream,
    exclusion_halfwidth: int = DEFAULT_EXCLUSION_HALFWIDTH,
    use_fft: bool = True,
    keep_sequence: bool = False,
) -> CorrelationResult:
    """Match a snippet inside a stream and grade the peak.

    The snippet mean is removed first; on the near-zero-mean differentiated
    pitch signals this makes the raw correlation behave like a covariance
    without moving the argmax.
    """
    snippet, stream = _check_pair(snippet, stream)
    centered = snippet - snippet.mean()
    corr = (
        fast_cross_correlation(centered, stream)
        if use_fft
        else raw_cross_correlation(centered, stream)
    )
    return find_peak_with_ratio(corr, exclusion_halfwidth, keep_sequence=keep_sequence)
