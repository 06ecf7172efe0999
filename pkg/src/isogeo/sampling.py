"""Uniform samplers for catalog bodies and the sphere, plus hit-and-run.

Randomness is organized in counter-based streams: a ``StreamSpec`` names a
master seed, a key path and a chunk index, and hashes them into an
independent Philox generator. Bulk sampling always cuts the work into chunks
of ``CHUNK_ROWS`` rows, chunk ``i`` drawing from ``stream.chunk(i)``, so the
output depends on neither the worker count nor the execution order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numba as nb
import numpy as np

from . import parallel
from .bodies import _BOUNDARY_TOL, Body, membership
from .errors import UsageError

CHUNK_ROWS = 1 << 15
SAMPLERS = ("direct", "hit_and_run")

_MAGIC = b"ISOGEOSB"
_HEADER = struct.Struct("<8sQQQ")  # magic, n, count, seed: 32 bytes


@dataclass(frozen=True)
class StreamSpec:
    master_seed: int
    chunk_index: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise UsageError("master_seed must fit in an unsigned 64-bit integer")
        if self.chunk_index < 0:
            raise UsageError("chunk_index must be >= 0")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(*self.path, self.chunk_index))
        return np.random.Generator(np.random.Philox(seq))

    def chunk(self, index: int) -> "StreamSpec":
        return replace(self, chunk_index=index)

    def child(self, *key: int) -> "StreamSpec":
        """An independent sub-stream, e.g. one per trial or per purpose."""
        return StreamSpec(self.master_seed, 0, (*self.path, self.chunk_index, *key))


def as_stream(stream) -> StreamSpec:
    if isinstance(stream, StreamSpec):
        return stream
    return StreamSpec(int(stream))


@dataclass(frozen=True)
class SampleBatch:
    body_id: str
    points: np.ndarray
    seed: int
    sampler: str

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _points(samples) -> np.ndarray:
    pts = samples.points if isinstance(samples, SampleBatch) else np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise UsageError("expected a nonempty (count, n) sample matrix")
    return pts


def _draw(body: Body, rows: int, rng: np.random.Generator) -> np.ndarray:
    n = body.dim
    if body.kind == "cube":
        return rng.random((rows, n)) - 0.5
    if body.kind == "ball":
        g = rng.standard_normal((rows, n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        radius = body.scale * rng.random(rows) ** (1.0 / n)
        return g * radius[:, None]
    if body.kind in ("cross_polytope", "lp_ball"):
        p = body.p
        gam = rng.standard_gamma(1.0 / p, size=(rows, n))
        signs = np.where(rng.random((rows, n)) < 0.5, -1.0, 1.0)
        w = rng.standard_exponential(rows)
        denom = (gam.sum(axis=1) + w) ** (1.0 / p)
        return body.scale * signs * gam ** (1.0 / p) / denom[:, None]
    # simplex: spacings of sorted uniforms are uniform on the probability simplex
    u = np.sort(rng.random((rows, n)), axis=1)
    edges = np.concatenate([np.zeros((rows, 1)), u, np.ones((rows, 1))], axis=1)
    lam = np.diff(edges, axis=1)
    return body.scale * (lam @ body._helmert.T)


def _chunk_bounds(count: int, chunk_rows: int):
    return [(i, i * chunk_rows, min(count, (i + 1) * chunk_rows))
            for i in range(math.ceil(count / chunk_rows))]


def map_sample_chunks(body: Body, count: int, stream, fn, chunk_rows: int = CHUNK_ROWS) -> list:
    """Apply ``fn`` to each direct-sampled chunk of a ``count``-point sample.

    The concatenation of the chunks is exactly ``sample_uniform(body, count,
    stream).points``; this lets large budgets be reduced without holding all
    points in memory.
    """
    stream = as_stream(stream)

    def work(bounds):
        i, lo, hi = bounds
        return fn(_draw(body, hi - lo, stream.chunk(i).generator()))

    return parallel.ordered_map(work, _chunk_bounds(count, chunk_rows))


def sample_uniform(body: Body, count: int, stream, chunk_rows: int = CHUNK_ROWS) -> SampleBatch:
    if count < 1:
        raise UsageError("count must be >= 1")
    stream = as_stream(stream)
    pts = np.concatenate(map_sample_chunks(body, count, stream, lambda x: x, chunk_rows))
    return SampleBatch(body.descriptor(), pts, stream.master_seed, "direct")


def sample_sphere(n: int, count: int, stream, chunk_rows: int = CHUNK_ROWS) -> np.ndarray:
    """``count`` uniform points on ``S^{n-1}`` (normalized Gaussians)."""
    if n < 2:
        raise UsageError("sphere dimension n must be >= 2")
    if count < 1:
        raise UsageError("count must be >= 1")
    stream = as_stream(stream)

    def work(bounds):
        i, lo, hi = bounds
        g = stream.chunk(i).generator().standard_normal((hi - lo, n))
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    return np.concatenate(parallel.ordered_map(work, _chunk_bounds(count, chunk_rows)))


_KIND_CODES = {"cube": 0, "ball": 1, "cross_polytope": 2, "lp_ball": 2, "simplex": 3}


@nb.njit(cache=True)
def _inside(code, scale, p, hel, x):
    n = x.shape[0]
    if code == 0:
        for i in range(n):
            if abs(x[i]) > 0.5 * (1.0 + _BOUNDARY_TOL):
                return False
        return True
    if code == 1:
        acc = 0.0
        for i in range(n):
            acc += x[i] * x[i]
        return np.sqrt(acc) <= scale * (1.0 + _BOUNDARY_TOL)
    if code == 2:
        acc = 0.0
        for i in range(n):
            acc += abs(x[i] / scale) ** p
        return acc <= 1.0 + _BOUNDARY_TOL
    for j in range(n + 1):
        lam = 1.0 / (n + 1)
        for i in range(n):
            lam += x[i] / scale * hel[i, j]
        if lam < -_BOUNDARY_TOL:
            return False
    return True


@nb.njit(cache=True)
def _boundary_distance(code, scale, p, hel, x, d, sign, reach, tol, buf):
    # bisection on membership along x + t*sign*d; lo stays inside, hi outside
    lo = 0.0
    hi = reach
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        for i in range(x.shape[0]):
            buf[i] = x[i] + mid * sign * d[i]
        if _inside(code, scale, p, hel, buf):
            lo = mid
        else:
            hi = mid
    return lo


@nb.njit(cache=True)
def _run_chain(code, scale, p, hel, x, dirs, unif, reach, tol, rows, out):
    buf = np.empty(x.shape[0])
    for k in range(dirs.shape[0]):
        d = dirs[k]
        fwd = _boundary_distance(code, scale, p, hel, x, d, 1.0, reach, tol, buf)
        back = _boundary_distance(code, scale, p, hel, x, d, -1.0, reach, tol, buf)
        step = -back + unif[k] * (fwd + back)
        for i in range(x.shape[0]):
            x[i] += step * d[i]
        if rows[k] >= 0:
            out[rows[k]] = x


# steps whose random inputs are drawn in one block
_CHAIN_BLOCK = 1 << 14


def hit_and_run(body: Body, start, count: int, stream, burn_in: int | None = None,
                thin: int | None = None, tol: float = 1e-10) -> SampleBatch:
    """Hit-and-run chain with uniform stationary law on ``body``.

    Each step draws a uniform direction, locates both chord endpoints by
    bisection on the membership predicate to ``tol`` and jumps to a uniform
    point of the chord. Defaults: ``burn_in = 50 n`` and ``thin = n``; output
    rows are the states after steps ``burn_in + thin, burn_in + 2 thin, ...``.
    """
    n = body.dim
    burn_in = 50 * n if burn_in is None else burn_in
    thin = n if thin is None else thin
    if burn_in < 1 or thin < 1 or count < 1:
        raise UsageError("burn_in, thin and count must all be >= 1")
    x = np.array(start, dtype=float)
    if not membership(body, x):
        raise UsageError("hit_and_run start point lies outside the body")
    stream = as_stream(stream)
    rng = stream.generator()
    # bodies contain the origin and lie in the circumball, so chords are shorter than 2R
    reach = 2.0 * body.circumradius * (1.0 + 1e-9) + tol
    hel = body._helmert if body.kind == "simplex" else np.zeros((1, 1))
    p = float(body.p) if body.p is not None else 1.0
    code = _KIND_CODES[body.kind]

    out = np.empty((count, n))
    total = burn_in + thin * count
    for first in range(1, total + 1, _CHAIN_BLOCK):
        steps = np.arange(first, min(total, first + _CHAIN_BLOCK - 1) + 1)
        dirs = rng.standard_normal((steps.size, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        unif = rng.random(steps.size)
        after = steps - burn_in
        rows = np.where((after > 0) & (after % thin == 0), after // thin - 1, -1)
        _run_chain(code, body.scale, p, hel, x, dirs, unif, reach, tol, rows, out)
    return SampleBatch(body.descriptor(), out, stream.master_seed, "hit_and_run")


def write_batch(path, batch: SampleBatch) -> None:
    """Binary dump to a path or binary file object.

    32-byte header (magic, n, count, seed as little-endian u64) followed by the
    points as little-endian float64, row-major.
    """
    pts = np.ascontiguousarray(batch.points, dtype="<f8")
    payload = _HEADER.pack(_MAGIC, pts.shape[1], pts.shape[0], batch.seed) + pts.tobytes(order="C")
    if hasattr(path, "write"):
        path.write(payload)
    else:
        Path(path).write_bytes(payload)


def read_batch(path) -> tuple[np.ndarray, int]:
    """Inverse of ``write_batch``; returns ``(points, seed)``."""
    data = Path(path).read_bytes()
    magic, n, count, seed = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise UsageError(f"{path}: not an isogeo sample dump")
    pts = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if pts.size != n * count:
        raise UsageError(f"{path}: truncated sample dump")
    return pts.reshape(count, n).astype(float), seed
