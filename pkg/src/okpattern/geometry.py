"""Interface meshes, curvature, and the criticality residual H + 4 gamma v - lambda.

Meshes carry analytic points, outward normals, quadrature weights, and a
tangential-derivative operator per chart.  Periodic chart axes differentiate
spectrally (FFT); the sphere's polar direction uses Gauss-Legendre collocation
in cos(theta), so low-degree spherical harmonics differentiate exactly and the
quadrature weights sum to the analytic area to machine precision.

Curvature is analytic for candidates (sum of principal curvatures, positive
for a convex set).  Flow outputs never get voxel curvature extraction; their
criticality is assessed by fitting a candidate (see fit_lamella / fit_ball)
or through the diffuse multiplier residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spectral import (
    get_workspace,
    sample_potential,
    sample_potential_on_planes,
)
from .torus_field import (
    Ball,
    Cylinder,
    GridSpec,
    Lamella,
    ScalarField,
    TiledShape,
    rasterize,
)


@dataclass
class Chart:
    """One parametrized piece of an interface.

    points/normals have shape (*grid, dim); weights (*grid).  tangent_fn maps
    chart-sampled values to a list of derivative components whose squares sum
    to |D_tau phi|^2.  tangent_fn_full is its complex companion keeping the
    chart Nyquist mode (the nodal values of a Nyquist cosine have derivative
    zero at the nodes, so stiffness assembly must use the full symbol or the
    alternating vector becomes a spurious kernel direction).
    """

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    mean_curv: float
    second_fundamental_sq: float
    tangent_fn: Callable[[np.ndarray], list[np.ndarray]]
    tangent_fn_full: Callable[[np.ndarray], list[np.ndarray]] | None = None

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.weights.shape

    def tangential_gradient_sq(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros_like(values, dtype=float)
        for comp in self.tangent_fn(values):
            out += comp**2
        return out

    def assembly_tangent_fn(self) -> Callable[[np.ndarray], list[np.ndarray]]:
        return self.tangent_fn_full if self.tangent_fn_full is not None else self.tangent_fn


@dataclass
class InterfaceMesh:
    charts: list[Chart]

    @property
    def total_weight(self) -> float:
        return float(sum(np.sum(c.weights) for c in self.charts))

    def all_points(self) -> np.ndarray:
        return np.concatenate([c.points.reshape(-1, c.points.shape[-1]) for c in self.charts])

    def all_normals(self) -> np.ndarray:
        return np.concatenate([c.normals.reshape(-1, c.normals.shape[-1]) for c in self.charts])

    def all_weights(self) -> np.ndarray:
        return np.concatenate([c.weights.ravel() for c in self.charts])


def _fft_deriv(
    values: np.ndarray, axis: int, period: float, scale: float = 1.0, full: bool = False
) -> np.ndarray:
    n = values.shape[axis]
    shape = [1] * values.ndim
    shape[axis] = n
    k = np.fft.fftfreq(n, d=1.0 / n).reshape(shape)
    if not full:
        k = k * (np.abs(k) != n // 2)  # Nyquist zeroed, keeps real data real
    omega = 2.0 * np.pi / period
    out = np.fft.ifft(np.fft.fft(values, axis=axis) * (1j * omega * k), axis=axis) * scale
    return out if full else out.real


def _legendre_diff_matrix(x: np.ndarray) -> np.ndarray:
    """Barycentric collocation differentiation at arbitrary distinct nodes."""
    n = x.size
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    logs = np.sum(np.log(np.abs(diff)), axis=1)
    signs = np.prod(np.sign(diff), axis=1)
    w = signs * np.exp(-(logs - logs.mean()))
    d = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -np.sum(d, axis=1))
    return d


def _lamella_charts(shape: Lamella, dim: int, res: int) -> list[Chart]:
    """Two flat charts covering the unit tangential cross-section each."""
    tangential = [a for a in range(dim) if a != shape.axis]
    grid_shape = (res,) * len(tangential)
    t = np.arange(res) / res
    charts = []
    for side in (+1.0, -1.0):
        pts = np.zeros(grid_shape + (dim,))
        pts[..., shape.axis] = (shape.center + side * shape.halfwidth) % 1.0
        for pos, a in enumerate(tangential):
            shape_vec = [1] * len(tangential)
            shape_vec[pos] = res
            pts[..., a] = t.reshape(shape_vec)
        normals = np.zeros(grid_shape + (dim,))
        normals[..., shape.axis] = side
        weights = np.full(grid_shape, 1.0 / res ** len(tangential))

        def tangent_fn(values):
            return [_fft_deriv(values, ax, period=1.0) for ax in range(values.ndim)]

        def tangent_fn_full(values):
            return [_fft_deriv(values, ax, period=1.0, full=True) for ax in range(values.ndim)]

        charts.append(Chart(pts, normals, weights, 0.0, 0.0, tangent_fn, tangent_fn_full))
    return charts


def _circle_chart(center, r: float, res: int) -> Chart:
    theta = 2 * np.pi * np.arange(res) / res
    nx = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    pts = (np.asarray(center) + r * nx) % 1.0
    weights = np.full(res, 2 * np.pi * r / res)

    def tangent_fn(values, _r=r):
        return [_fft_deriv(values, 0, period=2 * np.pi, scale=1.0 / _r)]

    def tangent_fn_full(values, _r=r):
        return [_fft_deriv(values, 0, period=2 * np.pi, scale=1.0 / _r, full=True)]

    return Chart(pts, nx.copy(), weights, 1.0 / r, 1.0 / r**2, tangent_fn, tangent_fn_full)


def _sphere_tangent_components(values, r, mu, dmat, sin_t, full):
    """Surface-gradient components on the lat-long sphere chart.

    Azimuthal modes factor as phi_m(mu) = (1-mu^2)^{|m|/2} g(mu) with g smooth,
    so each mode is differentiated through that associated basis (plain
    collocation of the square-root factor would lose several digits).  Modes
    whose basis factor underflows fall back to the value interpolant.
    """
    res = values.shape[1]
    vhat = np.fft.fft(values, axis=1)
    ms = np.fft.fftfreq(res, d=1.0 / res).astype(int)
    one_minus = 1.0 - mu**2
    d_polar = np.empty_like(vhat)
    d_azim = np.empty_like(vhat)
    for col, m in enumerate(ms):
        am = abs(int(m))
        if not full and am == res // 2:
            d_azim[:, col] = 0.0
            d_polar[:, col] = sin_t * (dmat @ vhat[:, col])
            continue
        d_azim[:, col] = 1j * m * vhat[:, col] / sin_t
        if am == 0:
            d_polar[:, col] = sin_t * (dmat @ vhat[:, col])
            continue
        a = one_minus ** (am / 2.0)
        if a.min() < 1e-10:
            d_polar[:, col] = sin_t * (dmat @ vhat[:, col])
            continue
        g = vhat[:, col] / a
        dphi_m = a * ((dmat @ g) - am * mu * g / one_minus)
        d_polar[:, col] = sin_t * dphi_m
    polar = np.fft.ifft(d_polar, axis=1) / r
    azim = np.fft.ifft(d_azim, axis=1) / r
    if full:
        return [polar, azim]
    return [polar.real, azim.real]


def _sphere_chart(center, r: float, res: int) -> Chart:
    mu, w_gl = np.polynomial.legendre.leggauss(res)
    phi = 2 * np.pi * np.arange(res) / res
    sin_t = np.sqrt(1.0 - mu**2)
    nx = np.empty((res, res, 3))
    nx[..., 0] = sin_t[:, None] * np.cos(phi)[None, :]
    nx[..., 1] = sin_t[:, None] * np.sin(phi)[None, :]
    nx[..., 2] = mu[:, None]
    pts = (np.asarray(center) + r * nx) % 1.0
    weights = np.broadcast_to(r**2 * w_gl[:, None] * (2 * np.pi / res), (res, res)).copy()
    dmat = _legendre_diff_matrix(mu)

    def tangent_fn(values, _r=r, _d=dmat, _sin=sin_t, _mu=mu):
        return _sphere_tangent_components(values, _r, _mu, _d, _sin, full=False)

    def tangent_fn_full(values, _r=r, _d=dmat, _sin=sin_t, _mu=mu):
        return _sphere_tangent_components(values, _r, _mu, _d, _sin, full=True)

    return Chart(pts, nx, weights, 2.0 / r, 2.0 / r**2, tangent_fn, tangent_fn_full)


def _cylinder_chart(shape: Cylinder, res: int) -> Chart:
    a1, a2 = shape.cross_axes()
    z = np.arange(res) / res
    theta = 2 * np.pi * np.arange(res) / res
    pts = np.zeros((res, res, 3))
    normals = np.zeros((res, res, 3))
    pts[..., shape.axis] = z[:, None]
    pts[..., a1] = (shape.center[0] + shape.radius * np.cos(theta))[None, :] % 1.0
    pts[..., a2] = (shape.center[1] + shape.radius * np.sin(theta))[None, :] % 1.0
    normals[..., a1] = np.cos(theta)[None, :]
    normals[..., a2] = np.sin(theta)[None, :]
    weights = np.full((res, res), 2 * np.pi * shape.radius / res**2)

    def tangent_fn(values, _r=shape.radius):
        return [
            _fft_deriv(values, 0, period=1.0),
            _fft_deriv(values, 1, period=2 * np.pi, scale=1.0 / _r),
        ]

    def tangent_fn_full(values, _r=shape.radius):
        return [
            _fft_deriv(values, 0, period=1.0, full=True),
            _fft_deriv(values, 1, period=2 * np.pi, scale=1.0 / _r, full=True),
        ]

    return Chart(pts, normals, weights, 1.0 / shape.radius, 1.0 / shape.radius**2, tangent_fn, tangent_fn_full)


def interface_mesh(shape, resolution: int, dim: int | None = None) -> InterfaceMesh:
    """Quadrature mesh of the boundary of a candidate (or its 1/k tiling).

    resolution is the sample count per chart axis and must be at least 8.
    """
    if resolution < 8:
        raise ValueError("mesh resolution must be at least 8 per chart axis")
    if isinstance(shape, TiledShape):
        base = interface_mesh(shape.shape, resolution, dim)
        return _tile_mesh(base, shape.k)
    if isinstance(shape, Lamella):
        if dim is None:
            raise ValueError("lamella meshes need the ambient dimension")
        if shape.axis >= dim:
            raise ValueError("lamella axis exceeds ambient dimension")
        return InterfaceMesh(_lamella_charts(shape, dim, resolution))
    if isinstance(shape, Ball):
        bdim = len(shape.center)
        if dim is not None and dim != bdim:
            raise ValueError("ball center dimension disagrees with ambient dimension")
        if bdim == 2:
            return InterfaceMesh([_circle_chart(shape.center, shape.radius, resolution)])
        if bdim == 3:
            return InterfaceMesh([_sphere_chart(shape.center, shape.radius, resolution)])
        raise ValueError("ball meshes exist for dim 2 and 3 only")
    if isinstance(shape, Cylinder):
        if dim is not None and dim != 3:
            raise ValueError("cylinder meshes require dim 3")
        return InterfaceMesh([_cylinder_chart(shape, resolution)])
    raise TypeError(f"unsupported mesh shape {shape!r}")


def _tile_mesh(parent: InterfaceMesh, k: int) -> InterfaceMesh:
    if k == 1:
        return parent
    dim = parent.charts[0].points.shape[-1]
    charts: list[Chart] = []
    for offs in np.ndindex(*(k,) * dim):
        origin = np.asarray(offs, dtype=float) / k
        for c in parent.charts:
            def tangent_fn(values, _fn=c.tangent_fn, _k=k):
                return [_k * comp for comp in _fn(values)]

            def tangent_fn_full(values, _fn=c.assembly_tangent_fn(), _k=k):
                return [_k * comp for comp in _fn(values)]

            charts.append(
                Chart(
                    points=c.points / k + origin,
                    normals=c.normals.copy(),
                    weights=c.weights * (1.0 / k) ** (dim - 1),
                    mean_curv=c.mean_curv * k,
                    second_fundamental_sq=c.second_fundamental_sq * k**2,
                    tangent_fn=tangent_fn,
                    tangent_fn_full=tangent_fn_full,
                )
            )
    return InterfaceMesh(charts)


def mean_curvature(shape, point, dim: int | None = None) -> float:
    """Sum of principal curvatures at a boundary point; positive for convex sets.

    The point must lie on the boundary to within 1e-9 (analytic signed
    distance).
    """
    pt = [np.asarray(x, dtype=float) for x in np.atleast_1d(point)]
    if isinstance(shape, TiledShape):
        inner = [np.mod(x * shape.k, 1.0) for x in pt]
        return shape.k * mean_curvature(shape.shape, [float(x) for x in inner], dim)
    d = float(shape.signed_distance(pt))
    if abs(d) > 1e-9:
        raise ValueError(f"point is off the boundary by {abs(d):.2e}")
    if isinstance(shape, Lamella):
        return 0.0
    if isinstance(shape, Ball):
        bdim = len(shape.center)
        return (bdim - 1) / shape.radius
    if isinstance(shape, Cylinder):
        return 1.0 / shape.radius
    raise TypeError(f"unsupported shape {shape!r}")


@dataclass(frozen=True)
class CriticalityReport:
    gamma: float
    k: int
    lambda_: float
    residual_sup: float
    grad_h_sup: float

    CSV_HEADER = "gamma,k,lambda,residual_sup,grad_h_sup"

    def csv_row(self) -> str:
        return (
            f"{repr(self.gamma)},{self.k},{repr(self.lambda_)},"
            f"{repr(self.residual_sup)},{repr(self.grad_h_sup)}"
        )


def _sample_v_on_chart(u: ScalarField, chart: Chart, ws, gradient=False):
    """Potential (or gradient) at chart points.

    Flat full-span charts (lamella interfaces covering the whole torus in
    their tangential axes, origin at 0) factorize through the plane sampler;
    everything else takes the dense mode sum.
    """
    flat = chart.points.reshape(-1, chart.points.shape[-1])
    n0 = chart.normals.reshape(-1, chart.normals.shape[-1])[0]
    is_flat = np.all(chart.normals == n0) and np.sum(np.abs(n0) == 1.0) == 1 and np.count_nonzero(n0) == 1
    if is_flat and chart.points.shape[-1] >= 2:
        axis = int(np.argmax(np.abs(n0)))
        tang = [a for a in range(u.spec.dim) if a != axis]
        res = chart.grid_shape
        full_span = all(
            abs(float(flat[0][a])) < 1e-12
            and abs(np.ptp(chart.points[..., a]) - (res[p] - 1) / res[p]) < 1e-12
            for p, a in enumerate(tang)
        )
        if full_span:
            offset = float(flat[0][axis])
            return sample_potential_on_planes(u, axis, [offset], res, ws, gradient=gradient)[0]
    return _sample_v_dense(u, chart, ws, gradient)


def _sample_v_dense(u: ScalarField, chart: Chart, ws, gradient=False):
    pts = chart.points.reshape(-1, chart.points.shape[-1])
    vals = sample_potential(u, pts, ws, gradient=gradient)
    if gradient:
        return vals.reshape(chart.grid_shape + (chart.points.shape[-1],))
    return vals.reshape(chart.grid_shape)


def el_residual(shape, gamma: float, spec: GridSpec, resolution: int = 32) -> CriticalityReport:
    """Criticality diagnostics of a candidate (or its 1/k tiling) at gamma.

    lambda is the weighted surface average of H + 4 gamma v; residual_sup the
    sup of |H + 4 gamma v - lambda| over the mesh.  grad_h_sup estimates
    sup |grad_tau H| through the critical-set identity grad_tau H =
    -4 gamma grad_tau v (the curvature of candidates is constant per chart,
    so its direct tangential derivative vanishes identically).
    """
    k = shape.k if isinstance(shape, TiledShape) else 1
    mesh = interface_mesh(shape, resolution, spec.dim)
    u = rasterize(shape, spec)
    ws = get_workspace(spec)

    weighted_sum = 0.0
    weight = 0.0
    per_chart = []
    grad_sup = 0.0
    for chart in mesh.charts:
        v = _sample_v_on_chart(u, chart, ws)
        g = chart.mean_curv + 4.0 * gamma * v
        per_chart.append((chart, g))
        weighted_sum += float(np.sum(chart.weights * g))
        weight += float(np.sum(chart.weights))
        gv = _sample_v_on_chart(u, chart, ws, gradient=True)
        normal_component = np.sum(gv * chart.normals, axis=-1)
        tang = gv - normal_component[..., None] * chart.normals
        grad_sup = max(grad_sup, 4.0 * gamma * float(np.max(np.linalg.norm(tang, axis=-1))))
    lam = weighted_sum / weight
    residual = max(float(np.max(np.abs(g - lam))) for _, g in per_chart)
    return CriticalityReport(gamma, k, lam, residual, grad_sup)


# ---------------------------------------------------------------------------
# Candidate fitting for sharpened flow outputs
# ---------------------------------------------------------------------------


def _circular_mean(angles_weights) -> float:
    angles, weights = angles_weights
    s = np.sum(weights * np.sin(angles))
    c = np.sum(weights * np.cos(angles))
    return float(np.mod(math.atan2(s, c) / (2 * np.pi), 1.0))


def fit_lamella(u: ScalarField, axis: int) -> Lamella:
    """Least-surprise lamella through an axis-aligned slab indicator."""
    inside = u.values > 0
    frac = inside.mean(axis=tuple(a for a in range(u.spec.dim) if a != axis))
    x = u.spec.centers(axis)
    mass = frac.sum()
    if mass == 0 or mass == len(x):
        raise ValueError("field is single-phase; no slab to fit")
    center = _circular_mean((2 * np.pi * x, frac))
    halfwidth = float(mass / len(x) / 2.0)
    return Lamella(axis=axis, center=center, halfwidth=halfwidth)


def fit_ball(u: ScalarField) -> Ball:
    """Ball with the indicator's circular centroid and volume-matched radius."""
    inside = u.values > 0
    vol = float(inside.mean())
    if vol <= 0:
        raise ValueError("field is empty; no ball to fit")
    dim = u.spec.dim
    center = []
    for a in range(dim):
        other = tuple(b for b in range(dim) if b != a)
        frac = inside.mean(axis=other)
        center.append(_circular_mean((2 * np.pi * u.spec.centers(a), frac)))
    radius = {2: math.sqrt(vol / math.pi), 3: (vol * 3 / (4 * math.pi)) ** (1 / 3)}[dim]
    return Ball(tuple(center), radius)
