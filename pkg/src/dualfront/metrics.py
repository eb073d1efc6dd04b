"""Asymmetric quadratic metrics and the image-driven fields that assemble them.

A metric sample is F(u) = psi * sqrt(<u, M u> + max(-<u, omega>, 0)^2) with M
symmetric positive definite.  Setting omega = 0 recovers the symmetric
(Riemannian) reduction; psi scales the whole metric.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import (ImageGrid, LabelMap, build_narrowband,
                   contour_distance_all, gaussian_convolve, interface_voronoi)

PROB_EPS = 1e-6  # normalization guard for the edge-attraction vector field


@dataclass(frozen=True)
class Tensor2:
    """Symmetric positive definite 2x2 matrix stored as (m11, m12, m22)."""

    m11: float
    m12: float
    m22: float

    def __post_init__(self):
        if not (self.m11 > 0 and self.m11 * self.m22 - self.m12 ** 2 > 0):
            raise ValueError("tensor must be symmetric positive definite")

    def as_array(self):
        return np.array([[self.m11, self.m12], [self.m12, self.m22]])


@dataclass(frozen=True)
class MetricSample:
    """Pointwise metric: tensor part, asymmetric vector part, scalar weight."""

    tensor: Tensor2
    omega: tuple = (0.0, 0.0)
    psi: float = 1.0

    def __post_init__(self):
        if not self.psi > 0:
            raise ValueError("psi must be positive")
        if not np.all(np.isfinite(self.omega)):
            raise ValueError("omega must be finite")


@dataclass
class MetricField:
    """Per-pixel metric samples over a domain mask.

    ``tensor`` is (H, W, 3) as (m11, m12, m22); ``omega`` is (H, W, 2) in
    (dr, dc) order; ``psi`` is (H, W).  Samples outside ``mask`` are unused.
    """

    tensor: np.ndarray
    omega: np.ndarray
    psi: np.ndarray
    mask: np.ndarray

    def sample(self, r, c) -> MetricSample:
        t = self.tensor[r, c]
        return MetricSample(Tensor2(t[0], t[1], t[2]),
                            tuple(self.omega[r, c]), float(self.psi[r, c]))

    def anisotropy_bound(self) -> float:
        """Worst-case ratio of the metric between directions, over the mask."""
        if not self.mask.any():
            return 1.0
        m11 = self.tensor[..., 0][self.mask]
        m12 = self.tensor[..., 1][self.mask]
        m22 = self.tensor[..., 2][self.mask]
        half = 0.5 * (m11 + m22)
        gap = np.sqrt((0.5 * (m11 - m22)) ** 2 + m12 ** 2)
        lo = half - gap
        hi = half + gap
        wsq = (self.omega[..., 0] ** 2 + self.omega[..., 1] ** 2)[self.mask]
        return float(np.sqrt(np.max((hi + wsq) / np.maximum(lo, 1e-300))))


def uniform_metric_field(shape, psi=1.0, omega=(0.0, 0.0)) -> MetricField:
    """Constant isotropic field, mostly for tests and the unit-metric CLI mode."""
    h, w = shape
    tensor = np.zeros((h, w, 3))
    tensor[..., 0] = 1.0
    tensor[..., 2] = 1.0
    om = np.zeros((h, w, 2))
    om[..., 0] = omega[0]
    om[..., 1] = omega[1]
    return MetricField(tensor, om, np.full((h, w), float(psi)),
                       np.ones((h, w), dtype=bool))


def eval_metric(sample: MetricSample, u) -> float:
    """Metric cost of moving along u; zero iff u is zero."""
    u = np.asarray(u, dtype=np.float64)
    t = sample.tensor
    quad = u[0] * (t.m11 * u[0] + t.m12 * u[1]) + u[1] * (t.m12 * u[0] + t.m22 * u[1])
    neg = max(-(u[0] * sample.omega[0] + u[1] * sample.omega[1]), 0.0)
    return sample.psi * np.sqrt(quad + neg * neg)


def unit_ball_boundary(sample: MetricSample, count: int) -> np.ndarray:
    """Polyline of the metric's unit ball boundary, ``count`` vertices.

    Each direction is scaled by 1/F(direction) so the metric evaluates to 1
    exactly at every vertex.
    """
    if count < 8:
        raise ValueError("need at least 8 samples")
    theta = 2.0 * np.pi * np.arange(count) / count
    out = np.empty((count, 2))
    for k in range(count):
        d = (np.cos(theta[k]), np.sin(theta[k]))
        out[k] = np.asarray(d) / eval_metric(sample, d)
    return out


def _eig2_symmetric(a, b, c):
    """Eigen-decomposition of the symmetric fields [[a, b], [b, c]].

    Returns (lam_hi, lam_lo, v_hi, v_lo) with orthonormal eigenvector fields
    of shape (..., 2); falls back to the coordinate axes where b == 0.
    """
    half = 0.5 * (a + c)
    gap = np.sqrt((0.5 * (a - c)) ** 2 + b * b)
    hi = half + gap
    lo = half - gap
    v_hi = np.stack([hi - c, b], axis=-1)
    norm = np.linalg.norm(v_hi, axis=-1)
    degenerate = norm < 1e-12
    v_hi[degenerate] = 0.0
    # where off-diagonal vanishes, eigenvectors are the axes
    axis_r = degenerate & (a >= c)
    axis_c = degenerate & (a < c)
    v_hi[axis_r] = (1.0, 0.0)
    v_hi[axis_c] = (0.0, 1.0)
    norm[degenerate] = 1.0
    v_hi = v_hi / norm[..., None]
    v_lo = np.stack([-v_hi[..., 1], v_hi[..., 0]], axis=-1)
    return hi, lo, v_hi, v_lo


@dataclass
class EdgeFeatures:
    """Edge appearance and anisotropy features of one image.

    ``tensor`` is the Gaussian-smoothed tensor field, ``tensor_raw`` the one
    before smoothing; both are (H, W, 3) as (m11, m12, m22).
    """

    eta: np.ndarray
    tensor: np.ndarray
    tensor_raw: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    jacobian_norm: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray


def edge_features(image: ImageGrid, sigma: float, beta: float, rho: float,
                  q: float) -> EdgeFeatures:
    """Edge tensor construction from image gradients.

    Per-channel gradients of the Gaussian-smoothed image are collected into a
    Jacobian whose Frobenius norm, normalized by its supremum, gives the edge
    appearance eta in [0, 1].  The tensor field takes eigenvalue
    exp((beta+rho)*eta) across the edge and exp(rho*eta) along it, and is
    entrywise smoothed with std q.
    """
    if sigma <= 0:
        raise ValueError("gradient smoothing sigma must be positive")
    if min(beta, rho, q) < 0:
        raise ValueError("beta, rho, q must be non-negative")
    h, w = image.shape
    s11 = np.zeros((h, w))
    s12 = np.zeros((h, w))
    s22 = np.zeros((h, w))
    for ch in range(image.channels):
        smooth = gaussian_convolve(image.data[..., ch], sigma)
        gr, gc = np.gradient(smooth)
        s11 += gr * gr
        s12 += gr * gc
        s22 += gc * gc
    jnorm = np.sqrt(s11 + s22)
    sup = jnorm.max()
    eta = jnorm / sup if sup > 0 else np.zeros_like(jnorm)

    _, _, v1, v2 = _eig2_symmetric(s11, s12, s22)
    lam1 = np.exp((beta + rho) * eta)
    lam2 = np.exp(rho * eta)
    tensor_raw = np.empty((h, w, 3))
    tensor_raw[..., 0] = lam1 * v1[..., 0] ** 2 + lam2 * v2[..., 0] ** 2
    tensor_raw[..., 1] = lam1 * v1[..., 0] * v1[..., 1] + lam2 * v2[..., 0] * v2[..., 1]
    tensor_raw[..., 2] = lam1 * v1[..., 1] ** 2 + lam2 * v2[..., 1] ** 2
    flat = eta == 0
    tensor_raw[flat] = (1.0, 0.0, 1.0)

    tensor = np.empty_like(tensor_raw)
    for k in range(3):
        tensor[..., k] = gaussian_convolve(tensor_raw[..., k], q)
    return EdgeFeatures(eta=eta, tensor=tensor, tensor_raw=tensor_raw,
                        e1=v1, e2=v2, jacobian_norm=jnorm, lam1=lam1, lam2=lam2)


def motion_vector_field(labels: LabelMap, xi, xi_ext, ell, u_masks=None,
                        e_gamma=None, pair=None):
    """Per-region motion direction fields on the narrow bands.

    Off the contour the direction is the gradient of the contour distance,
    signed by the extended velocity; on interface-adjacent pixels it is the
    inward normal of the region signed by the velocity difference across the
    interface.  Returns a list of (H, W, 2) arrays, zero outside each band.
    """
    n = labels.n
    if u_masks is None:
        _, u_masks = build_narrowband(labels, ell)
    if e_gamma is None:
        e_gamma = contour_distance_all(labels)
    if pair is None:
        pair = interface_voronoi(labels)
    gr, gc = np.gradient(e_gamma)
    sign_ext = np.sign(-xi_ext)
    on_contour = e_gamma == 0.0
    fields = []
    for i in range(1, n + 1):
        ni = np.zeros(labels.shape + (2,))
        off = u_masks[i - 1] & ~on_contour
        ni[off, 0] = sign_ext[off] * gr[off]
        ni[off, 1] = sign_ext[off] * gc[off]

        touch = u_masks[i - 1] & on_contour
        involves = touch & ((pair[..., 0] == i) | (pair[..., 1] == i))
        if involves.any():
            g_i = ndimage.distance_transform_edt(~labels.region_mask(i))
            ngr, ngc = np.gradient(g_i)
            mag = np.hypot(ngr, ngc)
            ok = involves & (mag > 0)
            partner = np.where(pair[..., 0] == i, pair[..., 1], pair[..., 0])
            diff = np.zeros(labels.shape)
            for j in range(1, n + 1):
                if j == i:
                    continue
                sel = ok & (partner == j)
                if sel.any():
                    diff[sel] = xi[i - 1][sel] - xi[j - 1][sel]
            s = np.sign(diff)
            ni[ok, 0] = -s[ok] * ngr[ok] / mag[ok]
            ni[ok, 1] = -s[ok] * ngc[ok] / mag[ok]
        fields.append(ni)
    return fields


def smooth_vectors(n_field: np.ndarray, a: float) -> np.ndarray:
    """Structure-tensor smoothing of a vector field.

    The outer product n n^T is Gaussian-smoothed entrywise; each vector is
    projected onto the dominant eigenvector of the smoothed tensor, which by
    construction keeps an acute angle with the original vector.
    """
    if a < 0:
        raise ValueError("smoothing std must be non-negative")
    nr = n_field[..., 0]
    nc = n_field[..., 1]
    t11 = gaussian_convolve(nr * nr, a)
    t12 = gaussian_convolve(nr * nc, a)
    t22 = gaussian_convolve(nc * nc, a)
    _, _, v1, _ = _eig2_symmetric(t11, t12, t22)
    proj = nr * v1[..., 0] + nc * v1[..., 1]
    return proj[..., None] * v1


def speed_weight(xi, pair, alpha, u_masks):
    """Per-region speed weights from normalized velocity differences.

    psi_i = exp(alpha * (xi_i - xi_j) / sup |xi_i - xi_j|) on the part of the
    band whose nearest interface is (i, j); 1 where the sup vanishes or the
    nearest interface does not involve the region.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    n = len(xi)
    weights = []
    for i in range(1, n + 1):
        psi = np.ones(pair.shape[:2])
        u_i = u_masks[i - 1]
        involves = u_i & ((pair[..., 0] == i) | (pair[..., 1] == i))
        partner = np.where(pair[..., 0] == i, pair[..., 1], pair[..., 0])
        for j in range(1, n + 1):
            if j == i:
                continue
            sel = involves & (partner == j)
            if not sel.any():
                continue
            diff = xi[i - 1][sel] - xi[j - 1][sel]
            sup = np.abs(diff).max()
            if sup > 0:
                psi[sel] = np.exp(alpha * diff / sup)
        weights.append(psi)
    return weights


def assemble_metric(edge: EdgeFeatures, n_tilde: np.ndarray, psi: np.ndarray,
                    mu: float, u_mask: np.ndarray,
                    use_smoothed: bool = True) -> MetricField:
    """Combine edge tensor, motion field and speed weight into one metric field.

    ``mu = 0`` gives the symmetric Riemannian reduction, the classical
    dual-front baseline.
    With ``use_smoothed`` false the raw tensor is used, the isotropic choice
    that goes with beta = 0.
    """
    if mu < 0:
        raise ValueError("mu must be non-negative")
    tensor = edge.tensor if use_smoothed else edge.tensor_raw
    return MetricField(tensor=tensor.copy(), omega=mu * n_tilde,
                       psi=psi.copy(), mask=u_mask.copy())


def thresholding_metric(image: ImageGrid, t_edge: float, sigma=2.0, beta=2.0,
                        rho=8.0, eps=1.0, eps0=0.02, q=2.0) -> MetricField:
    """Edge-stopping asymmetric metric for the distance-thresholding baseline.

    Eigenvalues collapse to eps0 in homogeneous areas so fronts sweep them
    quickly, and blow up across strong edges; the asymmetric part penalizes
    motion away from edges.
    """
    if not (0.0 < t_edge < 1.0):
        raise ValueError("edge threshold must lie in (0, 1)")
    feats = edge_features(image, sigma=sigma, beta=beta, rho=rho, q=q)
    eta = feats.eta
    eta_th = np.where(eta >= t_edge, eta, 0.0)
    tau2 = np.maximum(np.exp(beta * eta_th) - eps, eps0)
    tau1 = np.maximum(np.exp(rho * eta_th) - eps, eps0) * tau2

    _, _, v1, v2 = _eig2_symmetric(feats.tensor[..., 0], feats.tensor[..., 1],
                                   feats.tensor[..., 2])
    tensor = np.empty_like(feats.tensor)
    tensor[..., 0] = tau1 * v1[..., 0] ** 2 + tau2 * v2[..., 0] ** 2
    tensor[..., 1] = tau1 * v1[..., 0] * v1[..., 1] + tau2 * v2[..., 0] * v2[..., 1]
    tensor[..., 2] = tau1 * v1[..., 1] ** 2 + tau2 * v2[..., 1] ** 2

    smoothed_eta = gaussian_convolve(eta, sigma)
    pr, pc = np.gradient(smoothed_eta)
    norm = np.hypot(pr, pc) + PROB_EPS
    omega = np.stack([tau2 * pr / norm, tau2 * pc / norm], axis=-1)
    return MetricField(tensor=tensor, omega=omega,
                       psi=np.ones(image.shape),
                       mask=np.ones(image.shape, dtype=bool))


def dump_metric_debug(path, eta=None, psi=None, balls=None):
    """Write eta / psi fields and unit-ball polylines as CSV files for plotting."""
    import csv
    import os

    os.makedirs(path, exist_ok=True)
    if eta is not None:
        np.savetxt(os.path.join(path, "eta.csv"), eta, delimiter=",")
    if psi is not None:
        for i, field_i in enumerate(psi, start=1):
            np.savetxt(os.path.join(path, f"psi_{i}.csv"), field_i, delimiter=",")
    if balls is not None:
        with open(os.path.join(path, "unit_balls.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["ball", "u_r", "u_c"])
            for name, poly in balls.items():
                for u in poly:
                    writer.writerow([name, f"{u[0]:.9g}", f"{u[1]:.9g}"])
