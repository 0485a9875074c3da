"""Six-component spectral fields on a frequency lattice or on cube supports.

Components 0-2 hold the velocity transform u^, components 3-5 the
micro-rotation transform w^.  Fourier convention: f^(xi) = int e^{-i x.xi} f(x) dx,
so the inverse carries the (2 pi)^-3 factor.

A lattice field samples f^ at xi = h * k (k integer, FFT ordering) inside a
box of half-extent n h / 2 per axis; its physical counterpart is periodic with
period L = 2 pi / h.  A cube field samples f^ at tensor Gauss-Legendre nodes of
a list of axis-aligned boxes and integrates with the matching weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from scipy.spatial import cKDTree

from .errors import InvalidParameterError, UnsupportedRepresentationError
from .quadrature import tensor_box_rule

FORMAT_NAME = "micropolar-spectral-field"
FORMAT_VERSION = 1
COLUMNS = ["xi1", "xi2", "xi3"] + [
    f"{part}{c}" for c in range(6) for part in ("re", "im")
]


@dataclass(frozen=True)
class LatticeGrid:
    """Frequency lattice with ``n[a]`` points and spacing ``h[a]`` along axis a."""

    n: tuple
    h: tuple

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        h = tuple(float(v) for v in self.h)
        if len(n) != 3 or len(h) != 3:
            raise InvalidParameterError("lattice needs three axes")
        if any(v < 2 or v % 2 for v in n):
            raise InvalidParameterError(f"points per axis must be even and >= 2, got {n}")
        if any(not v > 0 for v in h):
            raise InvalidParameterError(f"spacings must be positive, got {h}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "h", h)

    @classmethod
    def cubic(cls, n, xi_max):
        """Isotropic grid with n points per axis and half-extent xi_max."""
        return cls((n, n, n), (2.0 * xi_max / n,) * 3)

    @property
    def shape(self):
        return self.n

    @property
    def size(self):
        return self.n[0] * self.n[1] * self.n[2]

    @property
    def cell_volume(self):
        return self.h[0] * self.h[1] * self.h[2]

    @property
    def lengths(self):
        return tuple(2.0 * np.pi / h for h in self.h)

    @property
    def xi_max(self):
        return tuple(n * h / 2.0 for n, h in zip(self.n, self.h))

    def to_dict(self):
        return {"n": list(self.n), "h": list(self.h)}

    @cached_property
    def index_axes(self):
        return [np.fft.fftfreq(n, 1.0 / n).astype(int) for n in self.n]

    @cached_property
    def xi(self):
        """Frequencies as a dense (3, n1, n2, n3) array in FFT ordering."""
        ax = [h * k for h, k in zip(self.h, self.index_axes)]
        X = np.meshgrid(*ax, indexing="ij")
        out = np.stack(X)
        out.setflags(write=False)
        return out

    @cached_property
    def abs_xi(self):
        out = np.sqrt(np.sum(self.xi ** 2, axis=0))
        out.setflags(write=False)
        return out

    def dealias_mask(self, fraction):
        """True where every |index| <= fraction * n/2; Nyquist planes always dropped."""
        masks = []
        for n, k in zip(self.n, self.index_axes):
            masks.append((np.abs(k) <= fraction * n / 2.0) & (k != -n // 2))
        return masks[0][:, None, None] & masks[1][None, :, None] & masks[2][None, None, :]

    def to_physical(self, values):
        """Inverse transform of lattice samples (..., n1, n2, n3) to the periodic grid."""
        scale = np.prod([n / L for n, L in zip(self.n, self.lengths)])
        return scale * sfft.ifftn(values, axes=(-3, -2, -1), workers=-1)

    def to_spectral(self, physical):
        scale = np.prod([L / n for n, L in zip(self.n, self.lengths)])
        return scale * sfft.fftn(physical, axes=(-3, -2, -1), workers=-1)

    def to_physical_real(self, values):
        """Inverse transform of Hermitian-symmetric samples, returned as a real array."""
        scale = np.prod([n / L for n, L in zip(self.n, self.lengths)])
        half = values[..., : self.n[2] // 2 + 1]
        return scale * sfft.irfftn(half, s=self.n, axes=(-3, -2, -1), workers=-1)

    def to_spectral_real(self, physical):
        """Forward transform of a real array, expanded back to the full lattice."""
        scale = np.prod([L / n for n, L in zip(self.n, self.lengths)])
        half = sfft.rfftn(physical, axes=(-3, -2, -1), workers=-1)
        return scale * expand_half_spectrum(half, self.n)

    @property
    def half_n3(self):
        return self.n[2] // 2 + 1

    def half(self, values):
        """Restrict a full FFT-ordered array to the rfft half along the last axis."""
        return values[..., : self.half_n3]

    def to_half_spectrum(self, physical):
        scale = np.prod([L / n for n, L in zip(self.n, self.lengths)])
        return scale * sfft.rfftn(physical, axes=(-3, -2, -1), workers=-1)

    def from_half_spectrum(self, half):
        scale = np.prod([n / L for n, L in zip(self.n, self.lengths)])
        return scale * sfft.irfftn(half, s=self.n, axes=(-3, -2, -1), workers=-1)

    def mirror(self, values):
        """values at -xi, i.e. a[(-k) mod n] along the three lattice axes."""
        out = np.flip(values, axis=(-3, -2, -1))
        return np.roll(out, 1, axis=(-3, -2, -1))


def expand_half_spectrum(half, n):
    """Rebuild a full FFT array from the rfftn half using Hermitian symmetry."""
    n3 = n[2]
    full = np.empty(half.shape[:-1] + (n3,), dtype=complex)
    m = n3 // 2 + 1
    full[..., :m] = half
    # k3 in (n3/2, n3): value = conj(half[-k1, -k2, n3 - k3])
    rest = half[..., 1 : n3 - m + 1]
    rest = np.flip(rest, axis=-1)
    rest = np.roll(np.flip(rest, axis=(-3, -2)), 1, axis=(-3, -2))
    full[..., m:] = np.conj(rest)
    return full


@dataclass(frozen=True, eq=False)
class CubeSet:
    """Axis-aligned boxes with a tensor Gauss-Legendre rule of ``order`` nodes per axis."""

    centers: np.ndarray  # (B, 3)
    half_widths: np.ndarray  # (B, 3)
    order: int = 8

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        hw = np.atleast_2d(np.asarray(self.half_widths, dtype=float))
        if hw.shape[0] == 1 and c.shape[0] > 1:
            hw = np.repeat(hw, c.shape[0], axis=0)
        if c.shape != hw.shape or c.shape[1] != 3:
            raise InvalidParameterError("centers and half widths must be (B, 3)")
        if np.any(hw <= 0):
            raise InvalidParameterError("cube half widths must be positive")
        if int(self.order) < 1:
            raise InvalidParameterError("Gauss order must be >= 1")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "half_widths", hw)
        object.__setattr__(self, "order", int(self.order))

    @property
    def count(self):
        return self.centers.shape[0]

    @cached_property
    def _rule(self):
        nodes, weights = [], []
        for c, hw in zip(self.centers, self.half_widths):
            x, w = tensor_box_rule(c - hw, c + hw, self.order)
            nodes.append(x)
            weights.append(w)
        X = np.concatenate(nodes, axis=1) if nodes else np.zeros((3, 0))
        W = np.concatenate(weights) if weights else np.zeros(0)
        X.setflags(write=False)
        W.setflags(write=False)
        return X, W

    @property
    def nodes(self):
        return self._rule[0]

    @property
    def weights(self):
        return self._rule[1]

    def scaled(self, factor):
        return CubeSet(self.centers * factor, self.half_widths * factor, self.order)

    def to_dict(self):
        return {
            "order": self.order,
            "centers": self.centers.tolist(),
            "half_widths": self.half_widths.tolist(),
        }


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Six complex components sampled in frequency space."""

    values: np.ndarray
    grid: LatticeGrid | None = None
    cubes: CubeSet | None = None
    real_valued: bool = False
    divergence_free: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.grid is None) == (self.cubes is None):
            raise InvalidParameterError("a field needs exactly one of grid or cubes")
        vals = np.asarray(self.values, dtype=complex)
        expected = (6,) + (self.grid.shape if self.grid is not None else (self.cubes.nodes.shape[1],))
        if vals.shape != expected:
            raise InvalidParameterError(f"values must have shape {expected}, got {vals.shape}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros_like_grid(cls, grid, **flags):
        return cls(np.zeros((6,) + grid.shape, dtype=complex), grid=grid, **flags)

    @property
    def representation(self):
        return "lattice" if self.grid is not None else "cube-quadrature"

    @property
    def is_lattice(self):
        return self.grid is not None

    def points(self):
        return self.grid.xi if self.grid is not None else self.cubes.nodes

    def abs_points(self):
        if self.grid is not None:
            return self.grid.abs_xi
        return np.sqrt(np.sum(self.cubes.nodes ** 2, axis=0))

    def weights(self):
        if self.grid is not None:
            return self.grid.cell_volume
        return self.cubes.weights

    @property
    def u(self):
        return self.values[:3]

    @property
    def omega(self):
        return self.values[3:]

    def magnitude(self):
        return np.sqrt(np.sum(self.values.real ** 2 + self.values.imag ** 2, axis=0))

    def with_values(self, values, **changes):
        return replace(self, values=values, **changes)

    def scaled(self, c):
        return self.with_values(self.values * c)

    def __add__(self, other):
        self._check_compatible(other)
        return self.with_values(
            self.values + other.values,
            real_valued=self.real_valued and other.real_valued,
            divergence_free=self.divergence_free and other.divergence_free,
        )

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def __mul__(self, c):
        return self.scaled(c)

    __rmul__ = __mul__

    def _check_compatible(self, other):
        if self.grid is not None:
            if other.grid != self.grid:
                raise InvalidParameterError("fields live on different lattices")
        elif other.cubes is not self.cubes and not (
            other.cubes is not None
            and other.cubes.order == self.cubes.order
            and np.array_equal(other.cubes.centers, self.cubes.centers)
            and np.array_equal(other.cubes.half_widths, self.cubes.half_widths)
        ):
            raise InvalidParameterError("fields live on different cube supports")

    def mirrored_values(self):
        """Values at -xi for every stored xi."""
        if self.grid is not None:
            return self.grid.mirror(self.values)
        pts = self.cubes.nodes.T
        tree = cKDTree(pts)
        dist, idx = tree.query(-pts)
        scale = max(1.0, float(np.max(np.abs(pts)))) if pts.size else 1.0
        if pts.size and np.max(dist) > 1e-9 * scale:
            raise UnsupportedRepresentationError("cube nodes are not symmetric under xi -> -xi")
        return self.values[:, idx]

    def hermitian_residual(self):
        """max |f(-xi) - conj f(xi)| / max |f| (0 for the zero field)."""
        scale = float(np.max(np.abs(self.values))) if self.values.size else 0.0
        if scale == 0.0:
            return 0.0
        diff = self.mirrored_values() - np.conj(self.values)
        if self.grid is not None:
            # Nyquist planes have no partner on the lattice
            keep = np.ones(self.grid.shape, dtype=bool)
            for a, n in enumerate(self.grid.n):
                sl = [slice(None)] * 3
                sl[a] = n // 2
                keep[tuple(sl)] = False
            diff = diff[:, keep]
        return float(np.max(np.abs(diff)) / scale) if diff.size else 0.0

    def divergence_residual(self):
        """max |xi . u^(xi)| / max |u^|."""
        u = self.u
        scale = float(np.max(np.abs(u))) if u.size else 0.0
        if scale == 0.0:
            return 0.0
        xi = self.points()
        div = xi[0] * u[0] + xi[1] * u[1] + xi[2] * u[2]
        return float(np.max(np.abs(div)) / scale)


# ---------------------------------------------------------------------------
# columnar serialisation
# ---------------------------------------------------------------------------


def _header(field_):
    head = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "representation": field_.representation,
        "flags": {
            "real_valued": bool(field_.real_valued),
            "divergence_free": bool(field_.divergence_free),
        },
        "columns": COLUMNS,
    }
    if field_.grid is not None:
        head["grid"] = field_.grid.to_dict()
    else:
        head["cubes"] = field_.cubes.to_dict()
    if field_.meta:
        head["meta"] = field_.meta
    return head


def write_field(path, field_):
    """Write one row per frequency: xi1 xi2 xi3 re0 im0 ... re5 im5."""
    path = Path(path)
    pts = field_.points().reshape(3, -1)
    vals = field_.values.reshape(6, -1)
    table = np.empty((pts.shape[1], 15))
    table[:, :3] = pts.T
    table[:, 3::2] = vals.real.T
    table[:, 4::2] = vals.imag.T
    table += 0.0  # -0.0 -> 0.0 so equal fields give equal files
    header = json.dumps(_header(field_), sort_keys=True)
    with open(path, "w") as fh:
        fh.write("# " + header + "\n")
        fh.write("# " + " ".join(COLUMNS) + "\n")
        np.savetxt(fh, table, fmt="%.17g")
    return path


def read_field(path):
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# "):
        raise InvalidParameterError(f"{path}: missing header line")
    head = json.loads(first[2:])
    if head.get("format") != FORMAT_NAME:
        raise InvalidParameterError(f"{path}: not a spectral field file")
    if head.get("version") != FORMAT_VERSION:
        raise InvalidParameterError(f"{path}: unsupported version {head.get('version')}")
    table = np.loadtxt(path, comments="#", ndmin=2)
    if table.shape[1] != len(COLUMNS):
        raise InvalidParameterError(f"{path}: expected {len(COLUMNS)} columns, found {table.shape[1]}")
    flags = head.get("flags", {})
    vals = (table[:, 3::2] + 1j * table[:, 4::2]).T
    if head["representation"] == "lattice":
        grid = LatticeGrid(tuple(head["grid"]["n"]), tuple(head["grid"]["h"]))
        if vals.shape[1] != np.prod(grid.shape):
            raise InvalidParameterError(f"{path}: {vals.shape[1]} rows for a {grid.shape} lattice")
        field_ = SpectralField(vals.reshape((6,) + grid.shape), grid=grid, **flags,
                               meta=head.get("meta", {}))
    else:
        c = head["cubes"]
        cubes = CubeSet(np.array(c["centers"]), np.array(c["half_widths"]), c["order"])
        field_ = SpectralField(vals, cubes=cubes, **flags, meta=head.get("meta", {}))
    stored = table[:, :3].T
    expect = field_.points().reshape(3, -1)
    if stored.shape != expect.shape or not np.allclose(stored, expect, rtol=1e-12, atol=1e-12):
        raise InvalidParameterError(f"{path}: frequency columns do not match the header")
    return field_
