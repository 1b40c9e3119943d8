"""Decimated, strided sub-array generation and spatial smoothing.

A sub-array samples the CSI matrix on a decimated lattice: every D_a-th
antenna and every D_f-th subcarrier inside apertures A_a x A_f, starting at
per-sub-array offsets produced by striding. Stacking the vectorized
sub-arrays gives the M x L smoothed CSI matrix whose columns act as
covariance snapshots.

Index conventions (0-based):
  * within a sampled vector the antenna index varies fastest: element m has
    antenna offset (m mod n_sub_a) and subcarrier slot (m div n_sub_a);
  * sub-array ordinal ell maps to offsets
        antenna offset   = (ell mod n_sets_a) * stride_a
        subcarrier offset = (ell div n_sets_a) * stride_f
    i.e. the antenna offset varies fastest over ell. The covariance is
    invariant to this ordering; it is fixed so it can be tested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .signal_model import CsiMatrix, RadioConfig

PLAN_KEYS = ("A_f", "A_a", "D_f", "D_a", "S_f", "S_a")


@dataclass(frozen=True)
class SubarrayPlan:
    """Sub-array geometry plus all derived counts.

    Derived fields are recomputed in the constructor; passing inconsistent
    values raises. ``n_subcarriers``/``n_antennas`` record the CSI dimensions
    the plan was built against.
    """

    aperture_f: int
    aperture_a: int
    decim_f: int
    decim_a: int
    stride_f: int
    stride_a: int
    n_subcarriers: int
    n_antennas: int
    # derived
    n_sub_f: int = 0
    n_sub_a: int = 0
    samples_per_subarray: int = 0
    n_sets_f: int = 0
    n_sets_a: int = 0
    n_subarrays: int = 0

    def __post_init__(self):
        n, k = self.n_subcarriers, self.n_antennas
        if not 1 <= self.aperture_f <= n:
            raise ConfigError(
                f"frequency aperture A_f={self.aperture_f} must lie in [1, N={n}]")
        if not 1 <= self.aperture_a <= k:
            raise ConfigError(
                f"antenna aperture A_a={self.aperture_a} must lie in [1, K={k}]")
        for name, val in (("D_f", self.decim_f), ("D_a", self.decim_a),
                          ("S_f", self.stride_f), ("S_a", self.stride_a)):
            if val < 1:
                raise ConfigError(f"{name} must be >= 1, got {val}")
        derived = {
            "n_sub_f": math.ceil(self.aperture_f / self.decim_f),
            "n_sub_a": math.ceil(self.aperture_a / self.decim_a),
            "n_sets_f": (n - self.aperture_f) // self.stride_f + 1,
            "n_sets_a": (k - self.aperture_a) // self.stride_a + 1,
        }
        derived["samples_per_subarray"] = derived["n_sub_f"] * derived["n_sub_a"]
        derived["n_subarrays"] = derived["n_sets_f"] * derived["n_sets_a"]
        for name, val in derived.items():
            if getattr(self, name) == 0:
                object.__setattr__(self, name, val)
            elif getattr(self, name) != val:
                raise ConfigError(
                    f"inconsistent derived field {name}: got {getattr(self, name)}, "
                    f"recomputed {val}")
        # Largest sampled index must stay inside the matrix in both dimensions.
        assert self.max_antenna_index() <= k - 1
        assert self.max_subcarrier_index() <= n - 1

    def max_antenna_index(self) -> int:
        return (self.n_sets_a - 1) * self.stride_a + (self.n_sub_a - 1) * self.decim_a

    def max_subcarrier_index(self) -> int:
        return (self.n_sets_f - 1) * self.stride_f + (self.n_sub_f - 1) * self.decim_f

    def to_text(self) -> str:
        vals = dict(zip(PLAN_KEYS, (self.aperture_f, self.aperture_a, self.decim_f,
                                    self.decim_a, self.stride_f, self.stride_a)))
        return "".join(f"{key} = {vals[key]}\n" for key in PLAN_KEYS)

    @classmethod
    def from_text(cls, text: str, config: RadioConfig) -> "SubarrayPlan":
        vals = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in PLAN_KEYS:
                raise ConfigError(f"unknown plan key {key!r} on line {lineno}")
            try:
                vals[key] = int(raw)
            except ValueError:
                raise ConfigError(f"plan key {key} needs an integer, got {raw!r}")
        missing = [key for key in PLAN_KEYS if key not in vals]
        if missing:
            raise ConfigError(f"plan config missing keys: {', '.join(missing)}")
        return make_plan(config, vals["A_f"], vals["A_a"], vals["D_f"], vals["D_a"],
                         vals["S_f"], vals["S_a"])


@dataclass(frozen=True)
class SmoothedCsi:
    """M x L matrix whose columns are the vectorized sub-arrays."""

    data: np.ndarray
    plan: SubarrayPlan

    def __post_init__(self):
        expected = (self.plan.samples_per_subarray, self.plan.n_subarrays)
        if self.data.shape != expected:
            raise ConfigError(
                f"smoothed CSI shape {self.data.shape} does not match plan {expected}")


@dataclass(frozen=True)
class SampleCovariance:
    """Hermitian M x M sample covariance plus the snapshot count behind it."""

    matrix: np.ndarray
    n_snapshots: int


def make_plan(config: RadioConfig, aperture_f: int, aperture_a: int,
              decim_f: int, decim_a: int, stride_f: int = 1,
              stride_a: int = 1) -> SubarrayPlan:
    """Build a sub-array plan against the dimensions of ``config``."""
    return SubarrayPlan(
        aperture_f=aperture_f, aperture_a=aperture_a,
        decim_f=decim_f, decim_a=decim_a,
        stride_f=stride_f, stride_a=stride_a,
        n_subcarriers=config.n_subcarriers, n_antennas=config.n_antennas)


def subarray_offsets(plan: SubarrayPlan, ell: int) -> tuple[int, int]:
    """(antenna offset, subcarrier offset) of the ell-th sub-array."""
    if not 0 <= ell < plan.n_subarrays:
        raise IndexError(
            f"sub-array ordinal {ell} outside [0, {plan.n_subarrays})")
    return (ell % plan.n_sets_a) * plan.stride_a, \
        (ell // plan.n_sets_a) * plan.stride_f


def subarray_indices(plan: SubarrayPlan, ell: int) -> tuple[np.ndarray, np.ndarray]:
    """Length-M antenna and subcarrier index vectors of the ell-th sub-array.

    Antenna indices repeat their decimated run n_sub_f times (antenna varies
    fastest); each decimated subcarrier value is held for n_sub_a slots.
    """
    a_off, f_off = subarray_offsets(plan, ell)
    ant_run = a_off + np.arange(plan.n_sub_a) * plan.decim_a
    sub_run = f_off + np.arange(plan.n_sub_f) * plan.decim_f
    return np.tile(ant_run, plan.n_sub_f), np.repeat(sub_run, plan.n_sub_a)


def sample_subarray(csi: CsiMatrix, plan: SubarrayPlan, ell: int) -> np.ndarray:
    """Length-M sampled vector of the ell-th sub-array."""
    _check_dims(csi, plan)
    ant, sub = subarray_indices(plan, ell)
    return csi.data[ant, sub]


def smooth(csi: CsiMatrix, plan: SubarrayPlan) -> SmoothedCsi:
    """Stack all L sampled sub-array vectors as columns of an M x L matrix."""
    _check_dims(csi, plan)
    ells = np.arange(plan.n_subarrays)
    a_offs = (ells % plan.n_sets_a) * plan.stride_a
    f_offs = (ells // plan.n_sets_a) * plan.stride_f
    ant_run = np.tile(np.arange(plan.n_sub_a) * plan.decim_a, plan.n_sub_f)
    sub_run = np.repeat(np.arange(plan.n_sub_f) * plan.decim_f, plan.n_sub_a)
    ant = a_offs[:, np.newaxis] + ant_run[np.newaxis, :]   # (L, M)
    sub = f_offs[:, np.newaxis] + sub_run[np.newaxis, :]
    return SmoothedCsi(data=csi.data[ant, sub].T.copy(), plan=plan)


def covariance(smoothed: SmoothedCsi) -> SampleCovariance:
    """Sample covariance (1/M) * C~ C~^H, symmetrized to be exactly Hermitian."""
    c = smoothed.data
    r = c @ c.conj().T / smoothed.plan.samples_per_subarray
    r = (r + r.conj().T) / 2.0
    return SampleCovariance(matrix=r, n_snapshots=smoothed.plan.n_subarrays)


def _check_dims(csi: CsiMatrix, plan: SubarrayPlan) -> None:
    if csi.data.shape != (plan.n_antennas, plan.n_subcarriers):
        raise ConfigError(
            f"CSI shape {csi.data.shape} does not match plan dimensions "
            f"({plan.n_antennas}, {plan.n_subcarriers})")
