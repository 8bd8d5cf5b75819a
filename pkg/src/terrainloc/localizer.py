"""Real-time longitudinal localization against a master terrain map.

A trailing buffer of reconstructed road heights is continuously matched, as
twice-differentiated pitch, inside a moving window of the master profile.
Clear correlation peaks fix the position; otherwise the estimate dead-reckons
on the odometer until the next clear peak snaps it back.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from sklearn.base import BaseEstimator

from .matching import (
    DEFAULT_EXCLUSION_HALFWIDTH,
    DEFAULT_RATIO_THRESHOLD,
    locate_snippet,
)
from .pitch import VehicleGeometry
from .resample import DistanceProfile
from .terrain_map import TerrainMap
from .validation import check_positive


class FixStatus(Enum):
    MATCHED = "MATCHED"
    DEAD_RECKONING = "DEAD_RECKONING"
    LOST = "LOST"


@dataclass(frozen=True)
class LocalizerConfig:
    buffer_length_m: float = 100.0
    window_length_m: float = 1000.0
    subbuffer_length_m: float = 30.0
    subwindow_length_m: float = 100.0
    ratio_threshold: float = DEFAULT_RATIO_THRESHOLD
    update_stride_m: float = 1.0
    exclusion_halfwidth: int = DEFAULT_EXCLUSION_HALFWIDTH
    dr_distance_limit_m: float = 500.0
    initial_window_scale: float = 3.0
    min_window_coverage: float = 0.5

    def __post_init__(self):
        check_positive(self.buffer_length_m, "buffer_length_m")
        check_positive(self.update_stride_m, "update_stride_m")
        if not (
            0.0
            < self.subbuffer_length_m
            < self.buffer_length_m
            < self.window_length_m
        ):
            raise ValueError("need subbuffer < buffer < window")
        if not 0.0 < self.ratio_threshold < 1.0:
            raise ValueError("ratio_threshold must be in (0, 1)")


@dataclass
class LocalizerUpdate:
    """One row of the estimate log."""

    travel_distance: float  # live (odometer) axis, buffer tail
    estimate: float  # route position, unwrapped
    status: FixStatus
    ratio: Optional[float]
    refined: bool = False


@dataclass
class LocalizerState:
    buffer: np.ndarray
    tail_live: float  # live-axis position of the buffer's newest cell
    estimate: float  # route position of the vehicle (buffer tail)
    status: FixStatus
    odometer_since_match: Optional[float]  # None until the first match
    window_anchor: float


def _route_matching_signal(terrain_map: TerrainMap, geometry: VehicleGeometry):
    """Twice-differentiated pitch over the whole route, cyclic for loops.

    Cell i is anchored at the front-axle route position i*spacing; interior
    values coincide with deriving the signal from any window of the heights.
    """
    master = terrain_map.master
    h = master.values
    dd = master.spacing
    k = geometry.wheelbase_cells(dd)
    if master.loop:
        pitch = np.arctan((h - np.roll(h, k)) / geometry.wheelbase)
        d1 = (np.roll(pitch, -1) - np.roll(pitch, 1)) / (2.0 * dd)
        d2 = (np.roll(d1, -1) - np.roll(d1, 1)) / (2.0 * dd)
        return d2
    sig = np.zeros_like(h)
    pitch = np.arctan((h[k:] - h[:-k]) / geometry.wheelbase)
    d1 = (pitch[2:] - pitch[:-2]) / (2.0 * dd)
    d2 = (d1[2:] - d1[:-2]) / (2.0 * dd)
    sig[k + 2 : k + 2 + len(d2)] = d2
    return sig


class Localizer:
    """Streaming state machine: feed height cells, read back position fixes."""

    def __init__(
        self,
        terrain_map: TerrainMap,
        geometry: VehicleGeometry | None = None,
        config: LocalizerConfig | None = None,
        matching_enabled: bool = True,
    ):
        self.map = terrain_map
        self.geometry = geometry or VehicleGeometry()
        self.config = config or LocalizerConfig()
        self.matching_enabled = matching_enabled

        self._dd = terrain_map.spacing
        self._route_sig = _route_matching_signal(terrain_map, self.geometry)
        self._route_init = terrain_map.master.weights > 0.0
        self._n_route = terrain_map.master.n_cells
        self._loop = terrain_map.master.loop
        self._k_shift = self.geometry.wheelbase_cells(self._dd)
        self._buf_cells = int(round(self.config.buffer_length_m / self._dd))
        self._sub_cells = int(round(self.config.subbuffer_length_m / self._dd))
        self.state: Optional[LocalizerState] = None
        self._has_matched = False
        self.last_correlation: Optional[np.ndarray] = None
        self.last_window_start_cell: Optional[int] = None

    def start(self, apriori_route_position: float, live_axis_start: float = 0.0):
        """Arm the localizer with a-priori knowledge of the start position."""
        self.state = LocalizerState(
            buffer=np.empty(0),
            tail_live=live_axis_start,
            estimate=float(apriori_route_position),
            status=FixStatus.DEAD_RECKONING,
            odometer_since_match=None,
            window_anchor=float(apriori_route_position),
        )
        self._has_matched = False
        return self.state

    # -- buffer maintenance --------------------------------------------------

    def update_buffer(self, cells: DistanceProfile) -> LocalizerState:
        """Append contiguous cells; a distance gap resets the buffer."""
        st = self.state
        if st is None:
            raise RuntimeError("call start() before feeding cells")
        if len(cells.values) == 0:
            return st
        expected = st.tail_live if len(st.buffer) else None
        gap = (
            expected is not None
            and abs(cells.start_offset - (expected + self._dd)) > 1e-6
        )
        if len(st.buffer) == 0:
            # first chunk anchors the live axis
            st.buffer = cells.values.copy()
        elif gap:
            st.buffer = cells.values.copy()
            st.status = FixStatus.DEAD_RECKONING
            st.odometer_since_match = None
            self._has_matched = False
        else:
            st.buffer = np.concatenate([st.buffer, cells.values])
        if len(st.buffer) > self._buf_cells:
            st.buffer = st.buffer[-self._buf_cells :]
        advance = cells.end_offset - st.tail_live
        st.tail_live = cells.end_offset
        # dead reckoning between updates: the estimate rides the odometer
        st.estimate += advance
        if st.odometer_since_match is not None:
            st.odometer_since_match += advance
        return st

    @property
    def buffer_full(self) -> bool:
        return self.state is not None and len(self.state.buffer) >= self._buf_cells

    # -- matching ------------------------------------------------------------

    def _window_cells(self, start_cell: int, n: int) -> np.ndarray:
        idx = start_cell + np.arange(n)
        if self._loop:
            return np.mod(idx, self._n_route)
        return np.clip(idx, 0, self._n_route - 1)

    def _buffer_signal(self, values: np.ndarray) -> np.ndarray:
        k = self._k_shift
        pitch = np.arctan((values[k:] - values[:-k]) / self.geometry.wheelbase)
        d1 = (pitch[2:] - pitch[:-2]) / (2.0 * self._dd)
        return (d1[2:] - d1[:-2]) / (2.0 * self._dd)

    def _match_in_window(self, values, center: float, window_m: float):
        """Correlate a height snippet's signal inside a route window.

        Returns (vehicle_route_position, ratio, correlation_result) or None
        when the window is unusable. ``values`` are the trailing heights whose
        last cell is the vehicle position.
        """
        cfg = self.config
        n_w = min(int(round(window_m / self._dd)), self._n_route)
        start_cell = int(round(center / self._dd)) - n_w // 2
        if not self._loop:
            start_cell = max(0, min(start_cell, self._n_route - n_w))
        idx = self._window_cells(start_cell, n_w)
        if np.mean(self._route_init[idx]) < cfg.min_window_coverage:
            return None
        snippet = self._buffer_signal(values)
        window_sig = self._route_sig[idx]
        if len(snippet) > len(window_sig):
            return None
        result = locate_snippet(
            snippet,
            window_sig,
            exclusion_halfwidth=cfg.exclusion_halfwidth,
            keep_sequence=True,
        )
        if not result.accepted(cfg.ratio_threshold):
            return None, result, start_cell
        # snippet cell 0 is height cell (k+2); its route cell is start+lag
        tail_cell = start_cell + result.best_lag + (len(values) - 1) - (self._k_shift + 2)
        position = tail_cell * self._dd
        return position, result, start_cell

    def localize_step(self) -> LocalizerUpdate:
        """One matching update at the current buffer tail."""
        st = self.state
        cfg = self.config
        if st is None:
            raise RuntimeError("call start() before localize_step()")
        if len(st.buffer) < self._buf_cells:
            raise RuntimeError("buffer not full yet")

        ratio = None
        refined = False
        matched = False
        if self.matching_enabled:
            window_m = cfg.window_length_m * (
                1.0 if self._has_matched else cfg.initial_window_scale
            )
            out = self._match_in_window(st.buffer, st.estimate, window_m)
            if out is not None:
                position, result, start_cell = out
                self.last_correlation = result.sequence if result else None
                self.last_window_start_cell = start_cell
                ratio = result.ratio if result else None
                if position is not None:
                    # refinement: sub-buffer inside a sub-window on the fix
                    sub = self._match_in_window(
                        st.buffer[-self._sub_cells :],
                        position,
                        cfg.subwindow_length_m,
                    )
                    if sub is not None and sub[0] is not None:
                        position = sub[0]
                        refined = True
                    st.estimate = position
                    st.status = FixStatus.MATCHED
                    st.odometer_since_match = 0.0
                    self._has_matched = True
                    matched = True

        if not matched:
            # estimate already advanced with the odometer in update_buffer
            if st.odometer_since_match is None:
                st.status = FixStatus.DEAD_RECKONING
            elif st.odometer_since_match > cfg.dr_distance_limit_m:
                st.status = FixStatus.LOST
            else:
                st.status = FixStatus.DEAD_RECKONING

        st.window_anchor = st.estimate
        return LocalizerUpdate(
            travel_distance=st.tail_live,
            estimate=st.estimate,
            status=st.status,
            ratio=ratio,
            refined=refined,
        )

    # -- batch driver ----------------------------------------------------------

    def run(
        self,
        live: DistanceProfile,
        apriori_route_position: float,
        matching_gate: Optional[Callable[[float], bool]] = None,
        on_update: Optional[Callable[[LocalizerUpdate, "Localizer"], None]] = None,
    ) -> list[LocalizerUpdate]:
        """Replay a full live profile, updating every ``update_stride_m``.

        ``matching_gate`` optionally enables/disables matching as a function
        of travel distance (used to exercise dead-reckoning stripes);
        ``on_update`` observes each update with the localizer state still hot
        (e.g. to dump correlation snapshots).
        """
        stride_cells = max(int(round(self.config.update_stride_m / self._dd)), 1)
        self.start(apriori_route_position, live_axis_start=live.start_offset)
        updates: list[LocalizerUpdate] = []
        base_enabled = self.matching_enabled
        n = len(live.values)
        i = 0
        next_update = self._buf_cells
        while i < n:
            j = min(next_update, n)
            chunk = DistanceProfile(
                live.values[i:j],
                spacing=live.spacing,
                start_offset=live.start_offset + i * live.spacing,
                units=live.units,
            )
            self.update_buffer(chunk)
            i = j
            if self.buffer_full and i >= next_update:
                if matching_gate is not None:
                    self.matching_enabled = base_enabled and matching_gate(
                        self.state.tail_live
                    )
                update = self.localize_step()
                updates.append(update)
                if on_update is not None:
                    on_update(update, self)
                next_update = i + stride_cells
        self.matching_enabled = base_enabled
        return updates


@dataclass
class ErrorSummary:
    """Longitudinal error statistics sampled along the drive."""

    errors: np.ndarray
    stride_m: float
    thresholds: tuple = (0.1, 0.5, 1.0)
    fractions: dict = field(default_factory=dict)

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=np.float64)
        if not self.fractions:
            self.fractions = {
                thr: float(np.mean(self.errors < thr)) if len(self.errors) else 0.0
                for thr in self.thresholds
            }

    def cdf(self):
        """Sorted errors and cumulative fractions."""
        err = np.sort(self.errors)
        frac = np.arange(1, len(err) + 1) / max(len(err), 1)
        return err, frac


def evaluate_errors(
    updates: list[LocalizerUpdate],
    truth: Callable[[float], float] | float,
    stride_m: float = 10.0,
) -> ErrorSummary:
    """Sample |estimate - truth| every ``stride_m`` of travel.

    ``truth`` maps travel distance to the true route position; a bare float
    is shorthand for travel + offset.
    """
    if not updates:
        raise ValueError("no updates to evaluate")
    if not callable(truth):
        offset = float(truth)
        truth = lambda d: d + offset  # noqa: E731
    distances = np.array([u.travel_distance for u in updates])
    estimates = np.array([u.estimate for u in updates])
    targets = np.arange(
        np.ceil(distances[0] / stride_m) * stride_m,
        distances[-1] + 1e-9,
        stride_m,
    )
    if len(targets) == 0:
        raise ValueError("drive shorter than one evaluation stride")
    idx = np.searchsorted(distances, targets)
    idx = np.clip(idx, 0, len(distances) - 1)
    # snap to the nearest update at or before/after the target distance
    prev_ok = idx > 0
    use_prev = prev_ok & (
        np.abs(distances[np.maximum(idx - 1, 0)] - targets)
        < np.abs(distances[idx] - targets)
    )
    idx = np.where(use_prev, idx - 1, idx)
    errors = np.array(
        [abs(estimates[i] - truth(distances[i])) for i in idx]
    )
    return ErrorSummary(errors=errors, stride_m=stride_m)


def matched_fraction(updates: list[LocalizerUpdate]) -> float:
    if not updates:
        return 0.0
    return float(
        np.mean([u.status is FixStatus.MATCHED for u in updates])
    )


class TerrainLocalizer(BaseEstimator):
    """sklearn-style facade: predict route positions for a live drive."""

    def __init__(
        self,
        terrain_map: TerrainMap,
        wheelbase_m: float = VehicleGeometry().wheelbase,
        buffer_length_m: float = 100.0,
        window_length_m: float = 1000.0,
        subbuffer_length_m: float = 30.0,
        subwindow_length_m: float = 100.0,
        ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
        update_stride_m: float = 1.0,
        dr_distance_limit_m: float = 500.0,
    ):
        self.terrain_map = terrain_map
        self.wheelbase_m = wheelbase_m
        self.buffer_length_m = buffer_length_m
        self.window_length_m = window_length_m
        self.subbuffer_length_m = subbuffer_length_m
        self.subwindow_length_m = subwindow_length_m
        self.ratio_threshold = ratio_threshold
        self.update_stride_m = update_stride_m
        self.dr_distance_limit_m = dr_distance_limit_m

    def _localizer(self) -> Localizer:
        return Localizer(
            self.terrain_map,
            geometry=VehicleGeometry(self.wheelbase_m),
            config=LocalizerConfig(
                buffer_length_m=self.buffer_length_m,
                window_length_m=self.window_length_m,
                subbuffer_length_m=self.subbuffer_length_m,
                subwindow_length_m=self.subwindow_length_m,
                ratio_threshold=self.ratio_threshold,
                update_stride_m=self.update_stride_m,
                dr_distance_limit_m=self.dr_distance_limit_m,
            ),
        )

    def fit(self, X=None, y=None):
        return self

    def predict(self, live: DistanceProfile, apriori_route_position: float = 0.0):
        updates = self._localizer().run(live, apriori_route_position)
        self.updates_ = updates
        return np.array([u.estimate for u in updates])
