"""Training objectives as pure array functions with analytic gradients.

These are desk-scale reference implementations: every loss takes plain
numpy arrays, returns a scalar plus (optionally) the exact gradient with
respect to its parameter argument, and is cheap enough to cross-check
against central finite differences. No autodiff framework is involved, so
any external trainer (or the test suite) can call them directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln, logsumexp, polygamma, xlogy

from .errors import DomainError

# Guard added to soft-Dice denominators so empty masks cannot divide by zero.
DICE_EPS = 1e-7


@dataclass
class LossValue:
    """Scalar loss plus optional analytic gradient.

    ``grad`` matches the shape of the parameter argument it differentiates
    (documented per loss); None when gradients were not requested.
    """

    value: float
    grad: np.ndarray | None = None

    def __float__(self):
        return float(self.value)


def _trigamma(x):
    return polygamma(1, x)


def _check_alpha(alpha):
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 2:
        raise DomainError(f"alpha must be (V, C), got shape {alpha.shape}")
    if alpha.min() < 1.0:
        raise DomainError(f"concentrations must be >= 1, min={alpha.min()}")
    return alpha


def _check_onehot(y, shape):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != shape:
        raise DomainError(f"labels shape {y.shape} != alpha shape {shape}")
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
        raise DomainError("labels must be one-hot rows")
    return y


def evid_xent(alpha, y, with_grad: bool = True) -> LossValue:
    """Expected cross entropy under a Dirichlet over class probabilities.

    value = (1/V) sum_v sum_c y_vc (psi(S_v) - psi(alpha_vc)), S_v = sum_c alpha_vc.
    grad is with respect to alpha.
    """
    alpha = _check_alpha(alpha)
    y = _check_onehot(y, alpha.shape)
    v = alpha.shape[0]
    s = alpha.sum(axis=1, keepdims=True)
    value = float((y * (digamma(s) - digamma(alpha))).sum() / v)
    grad = None
    if with_grad:
        # d/d alpha_vk = trigamma(S_v) - y_vk * trigamma(alpha_vk), over V.
        grad = (_trigamma(s) - y * _trigamma(alpha)) / v
    return LossValue(value, grad)


def _sdice_terms(alpha):
    s = alpha.sum(axis=1, keepdims=True)
    m = alpha / s
    var = alpha * (s - alpha) / (s**2 * (s + 1.0))
    return s, m, var


def evid_sdice(alpha, y, with_grad: bool = True) -> LossValue:
    """Expected soft-Dice loss under a Dirichlet over class probabilities.

    value = 1 - (2/C) sum_c N_c / D_c with
        N_c = sum_v y_vc * m_vc,
        D_c = sum_v (y_vc^2 + m_vc^2 + var_vc) + eps,
        m = alpha / S, var_vc = alpha_vc (S_v - alpha_vc) / (S_v^2 (S_v + 1)).
    grad is with respect to alpha.
    """
    alpha = _check_alpha(alpha)
    y = _check_onehot(y, alpha.shape)
    c = alpha.shape[1]
    s, m, var = _sdice_terms(alpha)
    num = (y * m).sum(axis=0)
    den = (y**2 + m**2 + var).sum(axis=0) + DICE_EPS
    value = float(1.0 - (2.0 / c) * (num / den).sum())
    grad = None
    if with_grad:
        grad = np.zeros_like(alpha)
        s1 = s[:, 0]
        w = s1**2 * (s1 + 1.0)
        dw = 3.0 * s1**2 + 2.0 * s1
        for k in range(c):
            # dm_vc/d alpha_vk and dvar_vc/d alpha_vk for all c at once.
            delta = np.zeros(c)
            delta[k] = 1.0
            dm = delta[None, :] / s - alpha / s**2
            du = delta[None, :] * (s - 2.0 * alpha) + alpha
            u = alpha * (s - alpha)
            dvar = (du * w[:, None] - u * dw[:, None]) / w[:, None] ** 2
            # Quotient rule per class; each voxel contributes independently.
            per_v = (y * dm * den[None, :] - num[None, :] * (2.0 * m * dm + dvar)) / den[None, :] ** 2
            grad[:, k] = -(2.0 / c) * per_v.sum(axis=1)
    return LossValue(value, grad)


def evid_kl(alpha, y, weight: float, with_grad: bool = True) -> LossValue:
    """Divergence of the misleading-evidence Dirichlet from the flat prior.

    The true-class concentration is masked to 1 (abar = y + (1-y)*alpha),
    then value = weight * sum_v KL(Dir(abar_v) || Dir(1)). grad is with
    respect to alpha; masked (true-class) entries have zero gradient.
    """
    alpha = _check_alpha(alpha)
    y = _check_onehot(y, alpha.shape)
    if weight < 0:
        raise DomainError("weight must be >= 0")
    c = alpha.shape[1]
    abar = y + (1.0 - y) * alpha
    a0 = abar.sum(axis=1)
    kl = (
        gammaln(a0)
        - gammaln(abar).sum(axis=1)
        - gammaln(float(c))
        + ((abar - 1.0) * (digamma(abar) - digamma(a0)[:, None])).sum(axis=1)
    )
    value = float(weight * kl.sum())
    grad = None
    if with_grad:
        dkl = (abar - 1.0) * _trigamma(abar) - (a0 - c)[:, None] * _trigamma(a0)[:, None]
        grad = weight * (1.0 - y) * dkl
    return LossValue(value, grad)


def hs_mc_loss(logit_samples, y, with_grad: bool = True) -> LossValue:
    """Monte-Carlo marginal cross entropy over logit samples.

    value = -LSE_s( sum_v sum_c y_vc log softmax(eta^(s))_vc ) + log S
    for logit_samples of shape (S, V, C). grad is with respect to
    logit_samples.
    """
    eta = np.asarray(logit_samples, dtype=np.float64)
    if eta.ndim != 3:
        raise DomainError(f"logit samples must be (S, V, C), got {eta.shape}")
    s_count = eta.shape[0]
    y = _check_onehot(y, eta.shape[1:])
    log_p = eta - logsumexp(eta, axis=2, keepdims=True)
    ll = (y[None, :, :] * log_p).sum(axis=(1, 2))
    value = float(-logsumexp(ll) + np.log(s_count))
    grad = None
    if with_grad:
        w = np.exp(ll - logsumexp(ll))
        p = np.exp(log_p)
        grad = -w[:, None, None] * (y[None, :, :] - p)
    return LossValue(value, grad)


def gaussian_kl(post_mean, post_var, prior_mean, prior_var) -> float:
    """Closed-form KL(N(post) || N(prior)) for diagonal Gaussians, summed."""
    qm, qv = np.asarray(post_mean, float), np.asarray(post_var, float)
    pm, pv = np.asarray(prior_mean, float), np.asarray(prior_var, float)
    if qv.min() <= 0 or pv.min() <= 0:
        raise DomainError("variances must be > 0")
    return float(0.5 * (np.log(pv / qv) + (qv + (qm - pm) ** 2) / pv - 1.0).sum())


def elbo(recon_nll, prior, posterior, beta: float = 1.0, with_grad: bool = True) -> LossValue:
    """Negative evidence lower bound: reconstruction + beta * Gaussian KL.

    ``prior`` and ``posterior`` are (mean, var) pairs of equal-shape arrays.
    grad stacks d/d posterior_mean and d/d posterior_var as shape (2, ...).
    """
    pm, pv = (np.asarray(a, dtype=np.float64) for a in prior)
    qm, qv = (np.asarray(a, dtype=np.float64) for a in posterior)
    value = float(recon_nll) + beta * gaussian_kl(qm, qv, pm, pv)
    grad = None
    if with_grad:
        dmean = beta * (qm - pm) / pv
        dvar = beta * 0.5 * (1.0 / pv - 1.0 / qv)
        grad = np.stack([dmean, dvar])
    return LossValue(value, grad)


def combo_loss(p, y, w_xent: float = 0.5, w_dice: float = 0.5, with_grad: bool = True) -> LossValue:
    """Weighted sum of voxel-mean binary cross entropy and soft-Dice loss.

    CE = -(1/V) sum_i [y ln p + (1-y) ln(1-p)] (0*ln 0 = 0);
    soft-Dice loss = 1 - 2 sum(p y) / (sum(p^2) + sum(y^2) + eps).
    grad is with respect to the probability array p.
    """
    if w_xent < 0 or w_dice < 0:
        raise DomainError("weights must be >= 0")
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise DomainError(f"shape mismatch: {p.shape} vs {y.shape}")
    n = p.size
    ce = float(-(xlogy(y, p) + xlogy(1.0 - y, 1.0 - p)).sum() / n)
    inter = float((p * y).sum())
    den = float((p**2).sum() + (y**2).sum()) + DICE_EPS
    sdice = 1.0 - 2.0 * inter / den
    value = w_xent * ce + w_dice * sdice
    grad = None
    if with_grad:
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(y > 0, y / p, 0.0)
            t2 = np.where(y < 1, (1.0 - y) / (1.0 - p), 0.0)
        dce = -(t1 - t2) / n
        ddice = -2.0 * (y * den - inter * 2.0 * p) / den**2
        grad = w_xent * dce + w_dice * ddice
    return LossValue(value, grad)


def finite_difference_grad(fn, x, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of an array.

    Used by the loss-check command; tests ship their own copy so the two
    never share a code path with the analytic gradients they validate.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        hi = x.copy()
        lo = x.copy()
        hi[idx] += step
        lo[idx] -= step
        grad[idx] = (fn(hi) - fn(lo)) / (2.0 * step)
        it.iternext()
    return grad


def gradient_check_suite(seed: int = 0, points: int = 10, rel_tol: float = 1e-5):
    """Compare every analytic gradient against central differences.

    Returns a list of (loss_name, max_relative_error, passed) rows over
    ``points`` random valid inputs per loss.
    """
    rng = np.random.default_rng(seed)
    rows = []

    def rel_err(analytic, numeric):
        denom = max(float(np.abs(numeric).max()), 1e-12)
        return float(np.abs(analytic - numeric).max()) / denom

    def run(name, make_case):
        worst = 0.0
        for _ in range(points):
            fn, x, analytic = make_case()
            worst = max(worst, rel_err(analytic, finite_difference_grad(fn, x)))
        rows.append((name, worst, worst < rel_tol))

    def onehot(v, c):
        y = np.zeros((v, c))
        y[np.arange(v), rng.integers(0, c, size=v)] = 1.0
        return y

    def case_xent():
        alpha = rng.uniform(1.0, 8.0, size=(3, 2))
        y = onehot(3, 2)
        return (lambda a: evid_xent(a, y, with_grad=False).value, alpha,
                evid_xent(alpha, y).grad)

    def case_sdice():
        alpha = rng.uniform(1.0, 8.0, size=(3, 2))
        y = onehot(3, 2)
        return (lambda a: evid_sdice(a, y, with_grad=False).value, alpha,
                evid_sdice(alpha, y).grad)

    def case_kl():
        alpha = rng.uniform(1.0, 8.0, size=(3, 2))
        y = onehot(3, 2)
        return (lambda a: evid_kl(a, y, 0.05, with_grad=False).value, alpha,
                evid_kl(alpha, y, 0.05).grad)

    def case_hs():
        eta = rng.normal(size=(4, 3, 2))
        y = onehot(3, 2)
        return (lambda e: hs_mc_loss(e, y, with_grad=False).value, eta,
                hs_mc_loss(eta, y).grad)

    def case_combo():
        p = rng.uniform(0.05, 0.95, size=(3, 3, 3))
        y = (rng.random((3, 3, 3)) < 0.5).astype(float)
        return (lambda q: combo_loss(q, y, with_grad=False).value, p,
                combo_loss(p, y).grad)

    run("evid_xent", case_xent)
    run("evid_sdice", case_sdice)
    run("evid_kl", case_kl)
    run("hs_mc_loss", case_hs)
    run("combo_loss", case_combo)
    return rows
