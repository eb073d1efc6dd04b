"""Region-statistics velocity functions for the contour engine.

Three homogeneity models: piecewise-constant means, Gaussian mixtures fit by
EM, and two-phase histogram competition via the Bhattacharyya coefficient.
Every model produces one velocity field per region (a pointwise fit penalty,
evaluated over the whole image) plus the extended velocity, the difference
of the two competing penalties across each pixel's nearest interface.
"""

from dataclasses import dataclass, field

import numpy as np

from .grid import ImageGrid, LabelMap, interface_voronoi

PROB_FLOOR = 1e-12
COV_FLOOR = 1e-4


@dataclass
class GmmParams:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    loglik: list = field(default_factory=list)


@dataclass
class VelocityBundle:
    """Per-region velocities xi_i on the whole grid and xi_ext across it."""

    xi: list
    xi_ext: np.ndarray
    params: list = None


def parse_model(spec: str):
    """Parse a velocity-model id: "pc" | "gmm:K" | "bhat"."""
    if spec == "pc":
        return ("pc", 0)
    if spec == "bhat":
        return ("bhat", 0)
    if spec.startswith("gmm:"):
        k = int(spec.split(":", 1)[1])
        if k < 1:
            raise ValueError("gmm needs at least one component")
        return ("gmm", k)
    raise ValueError(f"unknown velocity model {spec!r}")


def extended_velocity(xi, labels: LabelMap, pair=None) -> np.ndarray:
    """xi_ext(x) = xi_j(x) - xi_i(x) for x in region i nearest interface (i, j)."""
    if pair is None:
        pair = interface_voronoi(labels)
    own = labels.labels
    partner = np.where(pair[..., 0] == own, pair[..., 1], pair[..., 0])
    out = np.zeros(labels.shape)
    for i in range(1, labels.n + 1):
        for j in range(1, labels.n + 1):
            if j == i:
                continue
            sel = (own == i) & (partner == j)
            if sel.any():
                out[sel] = xi[j - 1][sel] - xi[i - 1][sel]
    return out


def piecewise_constant_velocity(image: ImageGrid, labels: LabelMap,
                                pair=None) -> VelocityBundle:
    """Squared deviation from per-region mean intensities."""
    data = image.data
    xi = []
    means = []
    for i in range(1, labels.n + 1):
        mask = labels.region_mask(i)
        if not mask.any():
            raise ValueError("empty region")
        c_i = data[mask].mean(axis=0)
        means.append(c_i)
        xi.append(((data - c_i) ** 2).sum(axis=-1))
    return VelocityBundle(xi, extended_velocity(xi, labels, pair), params=means)


def _log_gaussian(data, mean, cov):
    """Log density of a multivariate Gaussian at each row of data."""
    m = data.shape[1]
    chol = np.linalg.cholesky(cov)
    solved = np.linalg.solve(chol, (data - mean).T)
    maha = (solved ** 2).sum(axis=0)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (maha + logdet + m * np.log(2.0 * np.pi))


def _floor_cov(cov):
    """Symmetrize and floor the eigenvalues so the covariance stays SPD."""
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, COV_FLOOR)
    return (vecs * vals) @ vecs.T


def fit_gmm(data: np.ndarray, k: int, iters: int, rng,
            init: GmmParams = None) -> GmmParams:
    """EM fit of a k-component Gaussian mixture with full covariances.

    Initialization is kmeans++-style seeding from ``rng`` unless warm-start
    parameters are given.  The data log-likelihood is recorded once per
    iteration and must be non-decreasing (up to covariance-floor jitter).
    """
    n, m = data.shape
    if n < k * (m + 1):
        raise ValueError("region too small for the requested component count")
    if init is not None and init.means.shape == (k, m):
        weights = init.weights.copy()
        means = init.means.copy()
        covs = init.covs.copy()
    else:
        centers = [data[int(rng.integers(n))]]
        for _ in range(k - 1):
            d2 = np.min([((data - c) ** 2).sum(axis=1) for c in centers], axis=0)
            total = d2.sum()
            if total <= 0:
                centers.append(data[int(rng.integers(n))])
                continue
            centers.append(data[int(rng.choice(n, p=d2 / total))])
        means = np.array(centers)
        base = np.cov(data.T).reshape(m, m) if n > 1 else np.eye(m)
        base = _floor_cov(base)
        covs = np.repeat(base[None], k, axis=0)
        weights = np.full(k, 1.0 / k)

    history = []
    for _ in range(iters):
        # E step
        logp = np.stack([np.log(max(weights[j], PROB_FLOOR))
                         + _log_gaussian(data, means[j], covs[j])
                         for j in range(k)], axis=1)
        top = logp.max(axis=1, keepdims=True)
        norm = top[:, 0] + np.log(np.exp(logp - top).sum(axis=1))
        history.append(float(norm.sum()))
        resp = np.exp(logp - norm[:, None])
        # M step
        bulk = resp.sum(axis=0)
        weights = bulk / n
        for j in range(k):
            if bulk[j] < PROB_FLOOR:
                continue
            means[j] = (resp[:, j:j + 1] * data).sum(axis=0) / bulk[j]
            centered = data - means[j]
            covs[j] = _floor_cov((resp[:, j] * centered.T) @ centered / bulk[j])
    logp = np.stack([np.log(max(weights[j], PROB_FLOOR))
                     + _log_gaussian(data, means[j], covs[j])
                     for j in range(k)], axis=1)
    top = logp.max(axis=1, keepdims=True)
    history.append(float((top[:, 0] + np.log(np.exp(logp - top).sum(axis=1))).sum()))
    for prev, nxt in zip(history, history[1:]):
        if nxt < prev - 1e-7 * (1.0 + abs(prev)):
            raise RuntimeError("EM log-likelihood decreased")
    return GmmParams(weights, means, covs, history)


def gmm_density(params: GmmParams, data: np.ndarray) -> np.ndarray:
    logp = np.stack([np.log(max(params.weights[j], PROB_FLOOR))
                     + _log_gaussian(data, params.means[j], params.covs[j])
                     for j in range(len(params.weights))], axis=1)
    top = logp.max(axis=1, keepdims=True)
    return np.exp(top[:, 0] + np.log(np.exp(logp - top).sum(axis=1)))


def gmm_velocity(image: ImageGrid, labels: LabelMap, k: int, em_iters: int = 25,
                 seed: int = 0, warm=None, pair=None) -> VelocityBundle:
    """Negative log-likelihood velocities under per-region Gaussian mixtures."""
    rng = np.random.default_rng(seed)
    flat = image.data.reshape(-1, image.channels)
    xi = []
    fitted = []
    for i in range(1, labels.n + 1):
        mask = labels.region_mask(i)
        if not mask.any():
            raise ValueError("empty region")
        init = warm[i - 1] if warm is not None and i - 1 < len(warm) else None
        params = fit_gmm(image.data[mask], k, em_iters, rng, init=init)
        fitted.append(params)
        dens = gmm_density(params, flat).reshape(labels.shape)
        xi.append(-np.log(np.maximum(dens, PROB_FLOOR)))
    return VelocityBundle(xi, extended_velocity(xi, labels, pair), params=fitted)


def _bin_kernel(bandwidth: float, bins: int) -> np.ndarray:
    radius = int(np.ceil(3.0 * bandwidth))
    radius = min(radius, bins - 1)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kern = np.exp(-0.5 * (x / bandwidth) ** 2)
    return kern / kern.sum()


def _smoothed_histogram(values, bins, kernel):
    idx = np.minimum((values * bins).astype(np.int64), bins - 1)
    hist = np.bincount(idx, minlength=bins).astype(np.float64)
    hist /= hist.sum()
    smooth = np.convolve(hist, kernel, mode="same")
    # kernel mass clipped at the ends is restored by renormalizing
    return smooth / smooth.sum(), idx


def bhattacharyya_velocity(image: ImageGrid, labels: LabelMap,
                           bandwidth: float = 2.0, bins: int = 64,
                           pair=None) -> VelocityBundle:
    """Histogram-competition velocities for two-phase segmentation.

    Per-channel histograms over [0, 1] are kernel-smoothed with the given
    bandwidth (in bin units); color images use the product of per-channel
    marginals as the feature space.
    """
    if labels.n != 2:
        raise ValueError("Bhattacharyya model is two-phase only")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    kernel = _bin_kernel(bandwidth, bins)
    mask1 = labels.region_mask(1)
    mask2 = labels.region_mask(2)
    area1 = int(mask1.sum())
    area2 = int(mask2.sum())
    if area1 == 0 or area2 == 0:
        raise ValueError("empty region")

    bcoef = 1.0
    s1 = np.ones(labels.shape)
    s2 = np.ones(labels.shape)
    for ch in range(image.channels):
        chan = image.data[..., ch]
        p1, _ = _smoothed_histogram(chan[mask1], bins, kernel)
        p2, _ = _smoothed_histogram(chan[mask2], bins, kernel)
        bcoef *= float(np.sqrt(p1 * p2).sum())
        ratio12 = np.sqrt(np.maximum(p2, PROB_FLOOR) / np.maximum(p1, PROB_FLOOR))
        ratio21 = np.sqrt(np.maximum(p1, PROB_FLOOR) / np.maximum(p2, PROB_FLOOR))
        # kernel-weighted sums over bins, looked up at each pixel's bin
        table1 = np.convolve(ratio12, kernel, mode="same")
        table2 = np.convolve(ratio21, kernel, mode="same")
        idx = np.minimum((chan * bins).astype(np.int64), bins - 1)
        s1 *= table1[idx]
        s2 *= table2[idx]

    y_term = s1 / area1 - s2 / area2
    xi1 = -0.5 * bcoef * (1.0 / area1 - 1.0 / area2) + 0.5 * y_term
    xi = [xi1, -xi1]
    return VelocityBundle(xi, extended_velocity(xi, labels, pair),
                          params=[bcoef])


def bhattacharyya_coefficient(image: ImageGrid, labels: LabelMap,
                              bandwidth: float = 2.0, bins: int = 64) -> float:
    """The overlap coefficient of the two regions' smoothed histograms."""
    bundle = bhattacharyya_velocity(image, labels, bandwidth, bins)
    return bundle.params[0]


def compute_velocities(model: str, image: ImageGrid, labels: LabelMap,
                       em_iters: int = 25, seed: int = 0, warm=None,
                       bandwidth: float = 2.0, bins: int = 64,
                       pair=None) -> VelocityBundle:
    """Dispatch on the model id string."""
    kind, k = parse_model(model)
    if kind == "pc":
        return piecewise_constant_velocity(image, labels, pair=pair)
    if kind == "gmm":
        return gmm_velocity(image, labels, k, em_iters=em_iters, seed=seed,
                            warm=warm, pair=pair)
    return bhattacharyya_velocity(image, labels, bandwidth=bandwidth,
                                  bins=bins, pair=pair)
