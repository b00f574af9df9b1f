"""Composite training objective, its analytic gradient, and the Adam loop.

The objective for one view is

    photometric + lambda_d * depth + lambda_n * (normal_align + lambda_s * normal_smooth)

The depth prior is aligned to the current render by an affine fit before the
depth term is evaluated. That fit (and its pixel mask) is treated as a
constant target: no gradient flows through it, and :func:`gradcheck` holds
it fixed while perturbing parameters.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from . import geo_priors, losses
from .geo_priors import AffineFit, DepthMap, Direction, NormalMap
from .splat_core import CameraPose, GaussianScene, RenderConfig, backward, render_with_context

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("iteration", "total", "photometric", "depth", "normal_align", "normal_smooth")


class NonFiniteLoss(RuntimeError):
    def __init__(self, iteration: int, report: "LossReport"):
        self.iteration = iteration
        self.report = report
        super().__init__(
            f"non-finite loss at iteration {iteration}: total={report.total}, "
            f"photometric={report.photometric}, depth={report.depth}, "
            f"normal_align={report.normal_align}, normal_smooth={report.normal_smooth}")


@dataclass(frozen=True)
class LossWeights:
    lambda_d: float = 0.5
    lambda_n: float = 0.1
    lambda_s: float = 0.05
    lambda_ssim: float = 0.2

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be non-negative")


@dataclass
class FrameBundle:
    """Supervision for one view: target RGB and optional depth/normal priors."""

    image: np.ndarray
    depth: DepthMap | None = None
    normal: NormalMap | None = None


@dataclass
class DepthAlignment:
    fit: AffineFit
    target: np.ndarray
    mask: np.ndarray


@dataclass
class FrozenState:
    """Quantities held constant when a loss is re-evaluated near a base point.

    ``alignment`` is the depth fit and mask; the ``*_sign`` fields fix the
    branch of every absolute value in the loss terms.
    """

    alignment: DepthAlignment | None = None
    photo_sign: np.ndarray | None = None
    depth_sign: np.ndarray | None = None
    normal_signs: tuple | None = None


@dataclass
class LossReport:
    total: float
    photometric: float
    depth: float
    normal_align: float
    normal_smooth: float
    grads: dict[str, np.ndarray] | None = field(default=None, repr=False)
    frozen: FrozenState | None = field(default=None, repr=False)

    @property
    def alignment(self) -> DepthAlignment | None:
        return self.frozen.alignment if self.frozen is not None else None

    def row(self) -> tuple[float, ...]:
        return (self.total, self.photometric, self.depth, self.normal_align, self.normal_smooth)


def fit_alignment(prior: DepthMap, rendered_depth: np.ndarray, rendered_alpha: np.ndarray,
                  direction: Direction = Direction.PRIOR_TO_RENDER,
                  alpha_threshold: float = 0.5) -> DepthAlignment | None:
    """Align ``prior`` to the render; ``None`` when the fit is ill-posed."""
    mask = prior.valid & (np.asarray(rendered_alpha) > alpha_threshold)
    try:
        fit = geo_priors.align_scale_shift(prior, rendered_depth, mask, direction)
    except (geo_priors.DegenerateRegression, geo_priors.TooFewInliers) as exc:
        logger.debug("depth alignment skipped: %s", exc)
        return None
    target = fit.aligned_prior(np.asarray(prior.values, dtype=np.float64))
    mask = mask & (target > 0)
    if not mask.any():
        return None
    return DepthAlignment(fit, np.where(mask, target, 0.0), mask)


def total_loss(scene: GaussianScene, cam: CameraPose, bundle: FrameBundle,
               weights: LossWeights = LossWeights(), config: RenderConfig = RenderConfig(),
               alignment: DepthAlignment | None = None,
               direction: Direction = Direction.PRIOR_TO_RENDER,
               frozen: FrozenState | None = None, need_grad: bool = True) -> LossReport:
    """Render one view, evaluate every loss term and backpropagate to the scene.

    Pass ``alignment`` to reuse a depth fit; otherwise one is computed
    against the current render. ``frozen`` (taken from an earlier report)
    pins the fit and all absolute-value branches.
    """
    if frozen is None:
        frozen = FrozenState(alignment=alignment)
        pin = False
    else:
        pin = True
    frame, ctx = render_with_context(scene, cam, config)
    photo = losses.photometric_loss(frame.color, bundle.image, weights.lambda_ssim,
                                    sign=frozen.photo_sign if pin else None)
    total = photo.value
    state = FrozenState(photo_sign=photo.sign)

    depth_value = 0.0
    g_depth = None
    if bundle.depth is not None:
        align = frozen.alignment
        if align is None and not pin:
            align = fit_alignment(bundle.depth, frame.depth, frame.alpha, direction)
        state.alignment = align
        if align is not None:
            d = losses.depth_loss(frame.depth, align.target, align.mask,
                                  sign=frozen.depth_sign if pin else None)
            depth_value = d.value
            total += weights.lambda_d * d.value
            g_depth = weights.lambda_d * d.grad
            state.depth_sign = d.sign

    n_align = n_smooth = 0.0
    g_normal = None
    if bundle.normal is not None:
        nmask = bundle.normal.valid
        if nmask.any():
            n = losses.normal_loss(frame.normal, bundle.normal.values, weights.lambda_s, nmask,
                                   signs=frozen.normal_signs if pin else None)
            n_align, n_smooth = n.align, n.smooth
            total += weights.lambda_n * n.value
            g_normal = weights.lambda_n * n.grad
            state.normal_signs = n.signs

    grads = None
    if need_grad:
        grads = backward(ctx, grad_color=photo.grad, grad_depth=g_depth, grad_normal=g_normal)
    return LossReport(total, photo.value, depth_value, n_align, n_smooth, grads, state)


@dataclass(frozen=True)
class OptimizeConfig:
    iterations: int = 500
    lr: tuple[tuple[str, float], ...] = (
        ("means", 2e-3), ("log_scales", 5e-3), ("quats", 5e-3),
        ("opacity_logits", 2e-2), ("colors", 5e-3),
    )
    weights: LossWeights = LossWeights()
    render: RenderConfig = RenderConfig()
    direction: Direction = Direction.PRIOR_TO_RENDER
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    trace_every: int = 1

    @property
    def lr_map(self) -> dict[str, float]:
        return dict(self.lr)


@dataclass
class OptimizeResult:
    scene: GaussianScene
    trace: list[tuple]  # (iteration, total, photometric, depth, normal_align, normal_smooth)


def evaluate(scene, cams, bundles, config: OptimizeConfig) -> LossReport:
    """Mean loss and gradient over all views (fresh depth fit per view)."""
    n = len(cams)
    acc = None
    parts = np.zeros(5)
    for cam, bundle in zip(cams, bundles):
        rep = total_loss(scene, cam, bundle, config.weights, config.render, direction=config.direction)
        parts += np.array(rep.row())
        if acc is None:
            acc = {k: v.copy() for k, v in rep.grads.items()}
        else:
            for k in acc:
                acc[k] += rep.grads[k]
    parts /= n
    grads = {k: v / n for k, v in acc.items()}
    return LossReport(*parts, grads=grads)


def optimize(scene: GaussianScene, frame_bundles: Sequence[FrameBundle], cams: Sequence[CameraPose],
             config: OptimizeConfig = OptimizeConfig()) -> OptimizeResult:
    """Full-batch Adam over all views with per-group step sizes.

    Every iteration re-renders each view and refits its depth alignment.
    Quaternions are renormalized and colors clipped to [0, 1] after each
    step. The trace holds the loss before every ``trace_every``-th step and
    after the final one.
    """
    if not cams or len(cams) != len(frame_bundles):
        raise ValueError("need one frame bundle per camera and at least one view")
    scene = scene.copy()
    lr = config.lr_map
    m = {g: np.zeros_like(getattr(scene, g)) for g in scene.GROUPS}
    v = {g: np.zeros_like(getattr(scene, g)) for g in scene.GROUPS}
    trace = []
    for it in range(config.iterations + 1):
        rep = evaluate(scene, cams, frame_bundles, config)
        if not np.isfinite(rep.total) or not all(np.all(np.isfinite(g)) for g in rep.grads.values()):
            raise NonFiniteLoss(it, rep)
        if it % config.trace_every == 0 or it == config.iterations:
            trace.append((it,) + rep.row())
        if it == config.iterations:
            break
        t = it + 1
        for g in scene.GROUPS:
            grad = rep.grads[g]
            m[g] = config.beta1 * m[g] + (1.0 - config.beta1) * grad
            v[g] = config.beta2 * v[g] + (1.0 - config.beta2) * grad * grad
            mhat = m[g] / (1.0 - config.beta1 ** t)
            vhat = v[g] / (1.0 - config.beta2 ** t)
            setattr(scene, g, getattr(scene, g) - lr.get(g, 0.0) * mhat / (np.sqrt(vhat) + config.eps))
        scene.normalize_quats()
        scene.colors = np.clip(scene.colors, 0.0, 1.0)
    return OptimizeResult(scene, trace)


def trace_to_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for row in trace:
        w.writerow([int(row[0])] + [repr(float(x)) for x in row[1:]])
    return buf.getvalue()


def trace_from_csv(text: str) -> list[tuple]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != TRACE_COLUMNS:
        raise ValueError("unexpected loss trace header")
    return [(int(r[0]),) + tuple(float(x) for x in r[1:]) for r in rows[1:]]


@dataclass
class GradcheckReport:
    max_rel_error: dict[str, float]
    tolerance: float
    h: float
    precision_regime: bool
    loss: float

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.max_rel_error.values())

    def lines(self) -> list[str]:
        out = [f"{g:16s} max rel err {e:.3e} {'ok' if e < self.tolerance else 'FAIL'}"
               for g, e in self.max_rel_error.items()]
        if self.precision_regime:
            out.append(f"step h={self.h:g} is in the round-off dominated regime")
        return out


def gradcheck(scene: GaussianScene, cam: CameraPose, bundle: FrameBundle,
              weights: LossWeights = LossWeights(), h: float = 1e-4, tolerance: float = 2e-3,
              config: RenderConfig | None = None, floor: float = 1e-2) -> GradcheckReport:
    """Compare analytic gradients with central differences, per parameter group.

    Every perturbed evaluation reuses the base point's depth fit and
    absolute-value branches (see :class:`FrozenState`). The pinned objective
    equals the true one at the base point and has the same gradient there,
    but is smooth, so a stencil that straddles a kink of an L1 term still
    measures the derivative.

    The relative error of a component is ``|analytic - numeric|`` divided by
    ``max(|analytic|, |numeric|, floor * max|numeric over the group|)`` so
    components far below the group's gradient scale are judged against that
    scale. Early termination is disabled unless ``config`` says otherwise.
    """
    if config is None:
        config = RenderConfig(t_min=0.0)
    base = total_loss(scene, cam, bundle, weights, config)
    frozen = base.frozen
    errors = {}
    grad_scale = 0.0
    for g in scene.GROUPS:
        arr = getattr(scene, g)
        numeric = np.zeros_like(arr)
        for i in np.ndindex(arr.shape):
            plus = scene.copy()
            getattr(plus, g)[i] += h
            minus = scene.copy()
            getattr(minus, g)[i] -= h
            lp = total_loss(plus, cam, bundle, weights, config, frozen=frozen, need_grad=False).total
            lm = total_loss(minus, cam, bundle, weights, config, frozen=frozen, need_grad=False).total
            numeric[i] = (lp - lm) / (2.0 * h)
        analytic = base.grads[g]
        scale = float(np.abs(numeric).max()) if numeric.size else 0.0
        grad_scale = max(grad_scale, float(np.abs(analytic).max()) if analytic.size else 0.0)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), max(floor * scale, 1e-300))
        errors[g] = float(np.max(np.abs(analytic - numeric) / denom)) if arr.size else 0.0
    roundoff = np.finfo(np.float64).eps * abs(base.total) / h
    precision = bool(roundoff > tolerance * max(grad_scale, 1e-300))
    return GradcheckReport(errors, tolerance, h, precision, base.total)
