"""Toric section bases and quadrature.

Sections of L^k on a toric manifold are the monomials z^alpha with alpha a lattice
point of kP.  Points of the open orbit are described by log coordinates
t = log|z|^2 (plus angles theta), so that |z^alpha|^2 = exp(<alpha, t>).

Integrals are taken over the polytope rather than over t-space: the Guillemin
map x -> t(x) = sum_r nu_r log l_r(x) is a fixed diffeomorphism from the interior
of kP onto R^n, and pulling back along it turns every invariant integrand
into a function that is smooth up to the boundary of the polytope.  Gauss-Legendre
rules on the polytope then converge quickly and nothing needs truncating.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import gcd

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln

from .hermitian_core import is_diagonal, orthonormal_frame


class DegeneratePolytopeError(ValueError):
    pass


class InvarianceError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v).limit_denominator(10**9)


@dataclass(frozen=True)
class Polytope:
    """Convex lattice polytope of dimension 1 or 2 (vertices counterclockwise)."""

    vertices: tuple
    dim: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only dimension 1 and 2 are supported")
        if self.dim == 2 and len(self.vertices) < 3:
            raise DegeneratePolytopeError("a polygon needs at least three vertices")
        if self.dim == 2 and self._signed_area() <= 0:
            raise DegeneratePolytopeError("vertices must be in counterclockwise order and span an area")
        if self.dim == 1 and not (self.vertices[1][0] > self.vertices[0][0]):
            raise DegeneratePolytopeError("interval endpoints must be increasing")

    @classmethod
    def from_vertices(cls, vertices) -> "Polytope":
        verts = tuple(tuple(_frac(c) for c in np.atleast_1d(v)) for v in vertices)
        return cls(verts, len(verts[0]))

    def _signed_area(self) -> Fraction:
        vs = self.vertices
        s = Fraction(0)
        for i in range(len(vs)):
            x0, y0 = vs[i]
            x1, y1 = vs[(i + 1) % len(vs)]
            s += x0 * y1 - x1 * y0
        return s / 2

    @cached_property
    def facets(self) -> list[tuple[tuple[int, ...], Fraction]]:
        """Facets as (primitive inward normal nu, offset lam) with l(x) = <nu, x> + lam >= 0."""
        if self.dim == 1:
            a, b = self.vertices[0][0], self.vertices[1][0]
            return [((1,), -a), ((-1,), b)]
        out = []
        vs = self.vertices
        for i in range(len(vs)):
            (x0, y0), (x1, y1) = vs[i], vs[(i + 1) % len(vs)]
            nx, ny = -(y1 - y0), x1 - x0
            den = nx.denominator * ny.denominator
            ix, iy = int(nx * den), int(ny * den)
            g = gcd(ix, iy)
            nu = (ix // g, iy // g)
            out.append((nu, -(nu[0] * x0 + nu[1] * y0)))
        return out

    @property
    def volume(self) -> float:
        if self.dim == 1:
            return float(self.vertices[1][0] - self.vertices[0][0])
        return float(self._signed_area())

    @property
    def is_delzant(self) -> bool:
        if self.dim == 1:
            return all(c.denominator == 1 for v in self.vertices for c in v)
        nus = [f[0] for f in self.facets]
        ok = all(c.denominator == 1 for v in self.vertices for c in v)
        for i in range(len(nus)):
            a, b = nus[i - 1], nus[i]
            ok = ok and abs(a[0] * b[1] - a[1] * b[0]) == 1
        return ok

    def lattice_points(self, k: int = 1) -> np.ndarray:
        """Lattice points of kP, sorted lexicographically (brute-force scan)."""
        facets = self.facets
        lo = [min(v[j] for v in self.vertices) * k for j in range(self.dim)]
        hi = [max(v[j] for v in self.vertices) * k for j in range(self.dim)]
        ranges = [range(int(np.ceil(float(lo[j]))) - 1, int(np.floor(float(hi[j]))) + 2) for j in range(self.dim)]
        pts = []
        for p in np.ndindex(*[len(r) for r in ranges]):
            a = tuple(ranges[j][p[j]] for j in range(self.dim))
            if all(sum(n * c for n, c in zip(nu, a)) + lam * k >= 0 for nu, lam in facets):
                pts.append(a)
        pts.sort()
        return np.array(pts, dtype=int).reshape(len(pts), self.dim)

    def triangles(self, k: int = 1) -> list[np.ndarray]:
        """Fan triangulation of kP from its first vertex."""
        vs = np.array([[float(c) for c in v] for v in self.vertices]) * k
        return [np.array([vs[0], vs[i], vs[i + 1]]) for i in range(1, len(vs) - 1)]


def projective_line() -> Polytope:
    return Polytope.from_vertices([[0], [1]])


def projective_plane() -> Polytope:
    return Polytope.from_vertices([[0, 0], [1, 0], [0, 1]])


def unit_square() -> Polytope:
    return Polytope.from_vertices([[0, 0], [1, 0], [1, 1], [0, 1]])


def polytope_from_spec(spec) -> Polytope:
    """Named polytope ("P1", "P2", "square") or an explicit vertex list."""
    named = {"P1": projective_line, "P2": projective_plane, "square": unit_square}
    if isinstance(spec, str):
        if spec not in named:
            raise ValueError(f"unknown polytope name {spec!r}")
        return named[spec]()
    return Polytope.from_vertices(spec)


@dataclass(frozen=True)
class SectionBasis:
    """Weighted monomial basis of H^0(X, L^k), one section per lattice point of kP.

    The section for alpha is sqrt(c_alpha) z^alpha with c_alpha = 1 / prod_r l_r(alpha)!,
    which up to a global constant is the multinomial weight.  On projective space and
    products of projective lines this makes H = I the Fubini-Study form.
    """

    polytope: Polytope
    k: int
    exponents: np.ndarray = field(repr=False)
    logc: np.ndarray = field(repr=False, default=None)

    @property
    def N(self) -> int:
        return len(self.exponents)

    @property
    def n(self) -> int:
        return self.polytope.dim

    @property
    def V(self) -> float:
        return self.polytope.volume

    @property
    def knV(self) -> float:
        """k^n V, the total mass of the measure k^n omega^n / n!."""
        return float(self.k) ** self.n * self.V


def build_toric_basis(P: Polytope, k: int, r: int = 1) -> SectionBasis:
    """Monomial basis at level k of the polarization L^r (r = 1 unless asked)."""
    if k < 1 or r < 1:
        raise ValueError("level must be a positive integer")
    level = k * r
    pts = P.lattice_points(level)
    if len(pts) == 0:
        raise DegeneratePolytopeError("polytope has no lattice points at this level")
    nus = np.array([f[0] for f in P.facets], dtype=float)
    lams = np.array([float(f[1]) for f in P.facets]) * level
    ell = np.rint(pts @ nus.T + lams[None, :])
    logc = -np.sum(gammaln(ell + 1.0), axis=1)
    logc = logc - logc.max()
    return SectionBasis(P, level, pts, logc)


def _graded_edges(a: float, b: float, panels: int, layers: int) -> np.ndarray:
    """Uniform panel edges with the two end panels split geometrically towards the ends."""
    edges = np.linspace(a, b, panels + 1)
    if layers <= 0:
        return edges
    h = (b - a) / panels
    inner = h * 0.5 ** np.arange(layers, 0, -1)
    left = a + np.concatenate([[0.0], inner])
    right = b - inner[::-1]
    return np.concatenate([left, edges[1:-1], right, [b]]) if panels > 1 else \
        np.unique(np.concatenate([left, right, [b]]))


def _gauss_panels(a: float, b: float, panels: int, order: int, layers: int = 0,
                  split: int = 1) -> tuple[np.ndarray, np.ndarray]:
    g, w = leggauss(order)
    edges = _graded_edges(a, b, panels, layers)
    if split > 1:
        frac = np.arange(split) / split
        edges = np.append((edges[:-1, None] + np.diff(edges)[:, None] * frac[None, :]).ravel(), edges[-1])
    h = np.diff(edges)
    x = (edges[:-1, None] + 0.5 * h[:, None] * (g[None, :] + 1)).ravel()
    wt = (0.5 * h[:, None] * w[None, :]).ravel()
    return x, wt


@dataclass
class Samples:
    """Section data at the quadrature nodes for one hermitian form.

    u       unit vectors in the H-orthonormal frame, one row per node; the
            pointwise FS inner products are h(s_i, s_j) = conj(u_i) u_j
    tangent normalized tangent vectors of the embedded orbit, shape (m, n, N),
            or a callable producing them on first use through tangents()
    weight  weights of the measure k^n omega_FS^n / n! at the nodes
    """

    u: np.ndarray
    tangent: object
    weight: np.ndarray
    invariant: bool
    logy2: np.ndarray
    P: np.ndarray
    collapsed: bool = False

    def tangents(self) -> np.ndarray:
        if callable(self.tangent):
            self.tangent = self.tangent()
        return self.tangent


@dataclass
class QuadratureScheme:
    """Gauss-Legendre rule on kP pulled back to log coordinates.

    resolution counts panels per axis and order the Gauss points per panel.
    The two end panels of every axis are split into grading + 1 geometrically
    shrinking pieces: for non-balanced forms the integrands have complex poles
    at O(1) distance from the facets of kP.  split cuts every resulting panel
    into equal pieces, which gives nested refinements.  angular sets the number
    of equispaced angles per torus factor for integrands that are not torus
    invariant; None picks a default (see exact_angular and generic_angular).
    """

    basis: SectionBasis
    resolution: int = 4
    order: int = 12
    angular: int | None = None
    mode: str = "toric_exact"
    grading: int = 3
    split: int = 1

    def __post_init__(self):
        if self.resolution < 1 or self.order < 1:
            raise ValueError("resolution and order must be positive")
        b = self.basis
        P = b.polytope
        k = b.k
        if P.dim == 1:
            a, c = float(P.vertices[0][0]) * k, float(P.vertices[1][0]) * k
            x, w = _gauss_panels(a, c, self.resolution, self.order, self.grading, self.split)
            self.x = x[:, None]
            self.wx = w
        else:
            xs, ws = [], []
            u1, w1 = _gauss_panels(0.0, 1.0, self.resolution, self.order, self.grading, self.split)
            U, W = np.meshgrid(u1, u1, indexing="ij")
            WU, WW = np.meshgrid(w1, w1, indexing="ij")
            U, W, WU, WW = U.ravel(), W.ravel(), WU.ravel(), WW.ravel()
            for A, B, C in P.triangles(k):
                jac = abs((B - A)[0] * (C - B)[1] - (B - A)[1] * (C - B)[0])
                pts = A[None, :] + U[:, None] * ((B - A)[None, :] + W[:, None] * (C - B)[None, :])
                xs.append(pts)
                ws.append(WU * WW * U * jac)
            self.x = np.concatenate(xs)
            self.wx = np.concatenate(ws)
        nus = np.array([f[0] for f in P.facets], dtype=float)
        lams = np.array([float(f[1]) for f in P.facets]) * k
        ell = self.x @ nus.T + lams[None, :]
        if np.any(ell <= 0):
            raise NumericError("quadrature node on the polytope boundary")
        self.t = np.log(ell) @ nus
        # dt = det(sum_r nu_r nu_r^T / l_r) dx
        hx = np.einsum("mr,ri,rj->mij", 1.0 / ell, nus, nus)
        self.jac = np.linalg.det(hx) if P.dim == 2 else hx[:, 0, 0]
        self.wt = self.wx * self.jac

    @property
    def m(self) -> int:
        return len(self.wx)

    def _lin(self) -> np.ndarray:
        """log |s_alpha|^2 at theta = 0 before normalization; independent of H."""
        if getattr(self, "_lin_cache", None) is None:
            self._lin_cache = self.t @ self.basis.exponents.astype(float).T + self.basis.logc[None, :]
        return self._lin_cache

    def refined(self, factor: int = 2) -> "QuadratureScheme":
        """The same mesh with every panel cut into factor equal pieces."""
        return QuadratureScheme(self.basis, self.resolution, self.order, self.angular, self.mode, self.grading,
                                self.split * factor)

    def exact_angular(self) -> list[int]:
        """Angle counts integrating every quartic trigonometric monomial exactly."""
        e = self.basis.exponents
        span = e.max(axis=0) - e.min(axis=0)
        return [int(2 * s + 1) for s in span]

    def generic_angular(self) -> list[int]:
        """Angle counts for forms that are not torus invariant.

        The angular integrands are then analytic rather than polynomial, and the
        trapezoidal rule converges geometrically at a rate that slows like
        sqrt(k); 16 sqrt(k) angles per factor reach round-off for moderate forms.
        """
        m = int(np.ceil(16 * np.sqrt(self.basis.k)))
        return [max(m, c) for c in self.exact_angular()]

    def angles(self, count=None) -> np.ndarray:
        """Angular nodes theta (M^n, n); the weights are uniform."""
        n = self.basis.n
        if count is None:
            count = self.angular if self.angular is not None else self.exact_angular()
        if np.isscalar(count):
            count = [int(count)] * n
        grids = [2 * np.pi * np.arange(c) / c for c in count]
        mesh = np.meshgrid(*grids, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def samples(self, H: np.ndarray, angular=None, require_invariant: bool = False) -> Samples:
        """Evaluate the H-orthonormal sections at the nodes.

        For diagonal H the quadratic integrals are torus invariant and the
        angular grid collapses to theta = 0 unless an angular count is passed.
        """
        H = np.asarray(H)
        inv = is_diagonal(H)
        if require_invariant and not inv:
            raise InvarianceError("form is not torus invariant (non-diagonal in the monomial basis)")
        alpha = self.basis.exponents.astype(float)
        n = self.basis.n
        collapsed = inv and angular is None
        if collapsed:
            theta = np.zeros((1, n))
        elif angular is None and self.angular is None and not inv:
            theta = self.angles(self.generic_angular())
        else:
            theta = self.angles(angular)
        M = len(theta)
        mt = self.m
        lin = self._lin()  # (m, N)
        phase = np.exp(-1j * theta @ alpha.T)  # (M, N)
        if inv:
            hd = np.real(np.diag(H))
            logq = lin - np.log(hd)[None, :]
            mx = logq.max(axis=1, keepdims=True)
            q = np.exp(logq - mx)
            s = q.sum(axis=1, keepdims=True)
            p = q / s
            logy2 = (mx + np.log(s))[:, 0]
            mean = p @ alpha
            outer = (alpha[:, :, None] * alpha[:, None, :]).reshape(len(alpha), n * n)
            G = (p @ outer).reshape(-1, n, n) - mean[:, :, None] * mean[:, None, :]
            amp = np.sqrt(p)
            u = amp if collapsed else (amp[:, None, :] * phase[None, :, :]).reshape(mt * M, -1)

            def tang(amp=amp, mean=mean, phase=phase):
                c = alpha[None, :, :] - mean[:, None, :]
                T = c.transpose(0, 2, 1)[:, None, :, :] * (amp[:, None, None, :] * phase[None, :, None, :])
                return T.reshape(mt * M, n, -1)

            detG = G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] * G[:, 1, 0] if n == 2 else G[:, 0, 0]
            detG = np.repeat(detG, M)
            logy2 = np.repeat(logy2, M)
            P = np.diag(1.0 / np.sqrt(hd)).astype(complex)
        else:
            P = orthonormal_frame(H)
            Pc = P.conj()
            alpha_c = alpha - alpha.mean(axis=0)
            half = 0.5 * lin
            mx = half.max(axis=1, keepdims=True)
            step = max(1, (1 << 18) // M)
            blocks = [slice(i, min(i + step, mt)) for i in range(0, mt, step)]

            def section_block(sl):
                # conj of the section values at the nodes in sl, scaled per node
                vb = np.exp(half[sl] - mx[sl])[:, None, :] * phase[None, :, :]
                return vb.reshape(-1, len(alpha))

            def tangent_block(vb, u_b, ny_b):
                T = np.stack([(vb * alpha_c[:, j][None, :]) @ Pc for j in range(n)], axis=1) / ny_b[:, None, None]
                proj = np.einsum("mn,mjn->mj", u_b.conj(), T)
                return T - proj[:, :, None] * u_b[:, None, :]

            u = np.empty((mt * M, len(alpha)), complex)
            ny = np.empty(mt * M)
            detG = np.empty(mt * M)
            for sl in blocks:
                rows = slice(sl.start * M, sl.stop * M)
                vb = section_block(sl)
                y = vb @ Pc
                ny[rows] = np.sqrt(np.sum(np.abs(y) ** 2, axis=1))
                u[rows] = y / ny[rows, None]
                T = tangent_block(vb, u[rows], ny[rows])
                G = np.einsum("min,mjn->mij", T.conj(), T)
                detG[rows] = np.real(G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] * G[:, 1, 0]) if n == 2 else np.real(G[:, 0, 0])
            logy2 = np.repeat(2 * mx[:, 0], M) + 2 * np.log(ny)

            def tang():
                out = np.empty((mt * M, n, len(alpha)), complex)
                for sl in blocks:
                    rows = slice(sl.start * M, sl.stop * M)
                    out[rows] = tangent_block(section_block(sl), u[rows], ny[rows])
                return out
        w = np.repeat(self.wt, M) * detG / M
        return Samples(u=u, tangent=tang, weight=w, invariant=inv, logy2=logy2, P=P, collapsed=collapsed)

    def total_mass(self, H) -> float:
        return float(np.sum(self.samples(H).weight))


def default_scheme(basis: SectionBasis, resolution: int | None = None, order: int = 12) -> QuadratureScheme:
    """Quadrature with a panel count that grows like sqrt(k)."""
    if resolution is None:
        resolution = max(2, int(np.ceil(np.sqrt(basis.k))))
    return QuadratureScheme(basis, resolution=resolution, order=order)


def integrate(H: np.ndarray, f, scheme: QuadratureScheme, angular=None):
    """Integrate a node function against k^n omega_{FS(H)}^n / n!.

    f is either an array of values at the nodes of scheme.samples(H) or a
    callable taking the Samples and returning such an array (extra trailing
    axes allowed).  The reduction is a fixed-order numpy sum.
    """
    s = scheme.samples(H, angular=angular)
    vals = f(s) if callable(f) else np.asarray(f)
    if vals.shape[0] != len(s.weight):
        raise ValueError("integrand has the wrong number of nodes")
    bad = ~np.isfinite(vals.reshape(len(s.weight), -1)).all(axis=1)
    if np.any(bad):
        raise NumericError(f"non-finite integrand at node {int(np.argmax(bad))}")
    return np.tensordot(s.weight, vals, axes=(0, 0))


def fs_potential_eval(H: np.ndarray, basis: SectionBasis, t, require_invariant: bool = False):
    """FS potential phi = (1/k) log sum_i |s'_i|^2 at log coordinates t (theta = 0).

    Returns phi, its gradient and its Hessian in t, evaluated in the log domain.
    """
    H = np.asarray(H)
    if require_invariant and not is_diagonal(H):
        raise InvarianceError("form is not torus invariant")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    alpha = basis.exponents.astype(float)
    Hinv = np.linalg.inv(H)
    S = np.real(Hinv)
    beta = 0.5 * (alpha[:, None, :] + alpha[None, :, :])
    lin = beta @ t + 0.5 * (basis.logc[:, None] + basis.logc[None, :])
    mask = S != 0
    mx = lin[mask].max()
    q = np.where(mask, S * np.exp(lin - mx), 0.0)
    f = q.sum()
    if f <= 0:
        raise NumericError("non-positive FS sum")
    q = q / f
    grad = np.einsum("ab,abi->i", q, beta)
    hess = np.einsum("ab,abi,abj->ij", q, beta, beta) - np.outer(grad, grad)
    k = basis.k
    return (mx + np.log(f)) / k, grad / k, hess / k


class ToricPotential:
    """Invariant potential F(t) = scale * logsumexp(<alpha, t> + logw).

    Derivatives are cumulants of the exponents under the softmax weights, so
    every order is exact and overflow free.
    """

    def __init__(self, exponents, logw, scale: float = 1.0):
        self.alpha = np.asarray(exponents, dtype=float)
        self.logw = np.asarray(logw, dtype=float)
        self.scale = float(scale)

    @classmethod
    def from_form(cls, basis: SectionBasis, H: np.ndarray, level: int | None = None) -> "ToricPotential":
        """k phi for the FS metric of a diagonal form, rescaled to a level."""
        if not is_diagonal(H):
            raise InvarianceError("potential needs a diagonal form")
        scale = 1.0 if level is None else level / basis.k
        return cls(basis.exponents, basis.logc - np.log(np.real(np.diag(H))), scale)

    def derivatives(self, t: np.ndarray, order: int = 2):
        t = np.atleast_2d(t)
        lin = t @ self.alpha.T + self.logw[None, :]
        mx = lin.max(axis=1, keepdims=True)
        q = np.exp(lin - mx)
        s = q.sum(axis=1, keepdims=True)
        p = q / s
        F = (mx + np.log(s))[:, 0]
        mean = p @ self.alpha
        out = [self.scale * F, self.scale * mean]
        if order >= 2:
            c = self.alpha[None, :, :] - mean[:, None, :]
            k2 = np.einsum("ma,mai,maj->mij", p, c, c)
            out.append(self.scale * k2)
            if order >= 3:
                out.append(self.scale * np.einsum("ma,mai,maj,mak->mijk", p, c, c, c))
            if order >= 4:
                m4 = np.einsum("ma,mai,maj,mak,mal->mijkl", p, c, c, c, c)
                k4 = (m4 - np.einsum("mij,mkl->mijkl", k2, k2) - np.einsum("mik,mjl->mijkl", k2, k2)
                      - np.einsum("mil,mjk->mijkl", k2, k2))
                out.append(self.scale * k4)
        return out


@dataclass
class CloudBasis:
    """Sampled section values on a fixed point cloud (exploratory mode)."""

    k: int
    n: int
    V: float
    values: np.ndarray  # (m, N) complex section values
    weights: np.ndarray  # (m,) fixed measure, sums to V
    ids: list

    @property
    def N(self) -> int:
        return self.values.shape[1]

    @property
    def knV(self) -> float:
        return float(self.k) ** self.n * self.V


def load_point_cloud(path) -> CloudBasis:
    """Read a point-cloud file: {k, dim, volume, nodes: [{id, weight, values}]}."""
    with open(path) as fh:
        doc = json.load(fh)
    nodes = doc["nodes"]
    vals = np.array([[complex(re, im) for re, im in nd["values"]] for nd in nodes])
    w = np.array([float(nd["weight"]) for nd in nodes])
    V = float(doc["volume"])
    if np.any(w <= 0):
        raise ValueError("point-cloud weights must be positive")
    if abs(w.sum() - V) > 1e-6:
        raise ValueError(f"point-cloud weights sum to {w.sum()!r}, expected volume {V!r}")
    return CloudBasis(int(doc["k"]), int(doc["dim"]), V, vals, w, [nd["id"] for nd in nodes])


@dataclass
class CloudScheme:
    """Fixed-measure quadrature on a point cloud; the weights never change."""

    basis: CloudBasis
    mode: str = "fixed_reference"

    @property
    def m(self) -> int:
        return len(self.basis.weights)

    def samples(self, H, angular=None, require_invariant=False) -> Samples:
        P = orthonormal_frame(H)
        y = self.basis.values.conj() @ P.conj()
        ny2 = np.sum(np.abs(y) ** 2, axis=1)
        if np.any(ny2 == 0):
            bad = int(np.argmax(ny2 == 0))
            raise NumericError(f"all sections vanish at node {self.basis.ids[bad]!r}")
        u = y / np.sqrt(ny2)[:, None]
        w = self.basis.weights * self.basis.k ** self.basis.n
        return Samples(u=u, tangent=np.zeros((len(w), 0, y.shape[1])), weight=w,
                       invariant=False, logy2=np.log(ny2), P=P)
