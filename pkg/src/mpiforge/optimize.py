"""Gradient-based MPI fitting: exact adjoints, Adam, the alternating loop.

backward_render produces analytic reverse-mode derivatives of the scalar loss
with respect to every fitted quantity: raw alpha and texture parameters,
per-plane depth deltas, a twist perturbation of the view camera pose (applied
at identity about the current pose), and the per-camera exposure coefficients.
Clamped values (the [0,1] parameter clamp, the exposure clamp) get zero
gradient in the clamped region. finite_diff_check validates each parameter
class against central finite differences of the forward loss; it is the
package's correctness oracle for everything differentiable.

The fit loop alternates when pose refinement is on: even steps update MPI
content, depths, and exposure on the full-image loss; odd steps update camera
twists on the background-only loss (the hard mask complement). Depth deltas
are projected through the order-preserving clamp every step. Camera 0's
exposure is pinned (gauge) and the host camera's pose is never refined.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NonFiniteLoss
from .geometry import (
    CameraModel,
    homography_jacobians,
    look_at,
    se3_log,
    simple_intrinsics,
)
from .losses import LossConfig, loss_with_grad, psnr
from .mpi import ExposureCoeffs, Mpi, init_planes
from .rendering import _canvas_camera, apply_exposure, render_forward

log = logging.getLogger(__name__)

_ALL_NEEDS = frozenset({"content", "depth", "pose", "exposure"})


@dataclass
class GradientBundle:
    """Derivatives of the total loss, shaped like their parameters."""

    d_alphas: np.ndarray        # (D, Hc, Wc)
    d_textures: np.ndarray      # (D/K, Hc, Wc, 3)
    d_depth_deltas: np.ndarray  # (D,)
    d_pose_twist: np.ndarray    # (6,)
    d_beta: np.ndarray          # (3,)
    d_gamma: np.ndarray         # (3,)

    @classmethod
    def zeros_like(cls, mpi: Mpi):
        return cls(
            d_alphas=np.zeros_like(mpi.raw_alphas),
            d_textures=np.zeros_like(mpi.raw_textures),
            d_depth_deltas=np.zeros(mpi.plane_count),
            d_pose_twist=np.zeros(6),
            d_beta=np.zeros(3),
            d_gamma=np.zeros(3),
        )

    def add_(self, other, scale=1.0):
        self.d_alphas += scale * other.d_alphas
        self.d_textures += scale * other.d_textures
        self.d_depth_deltas += scale * other.d_depth_deltas
        self.d_pose_twist += scale * other.d_pose_twist
        self.d_beta += scale * other.d_beta
        self.d_gamma += scale * other.d_gamma
        return self

    def is_finite(self):
        return all(
            np.all(np.isfinite(a))
            for a in (self.d_alphas, self.d_textures, self.d_depth_deltas,
                      self.d_pose_twist, self.d_beta, self.d_gamma)
        )


def forward_loss(mpi, camera, beta, gamma, truth, mask, cfg: LossConfig,
                 extractor=None, region="full"):
    """Scalar loss of one view on the float64 path (the FD oracle's forward)."""
    out, _, _, _ = render_forward(mpi, camera)
    w, h = camera.image_size
    rendered = apply_exposure(out.reshape(h, w, 3), beta, gamma)
    breakdown, _ = loss_with_grad(rendered, truth, mask, cfg, extractor, region)
    return breakdown


def backward_render(mpi, camera, beta, gamma, truth, mask, cfg: LossConfig,
                    extractor=None, region="full", needs=_ALL_NEEDS,
                    clamped=None, out_bundle=None, scale=1.0):
    """Loss of one view plus analytic gradients for every parameter class.

    `needs` restricts which gradients are materialized ("content", "depth",
    "pose", "exposure"); skipping unused classes saves most of the adjoint
    cost during alternation. `clamped` optionally passes precomputed [0, 1]
    (alphas, textures); `out_bundle` accumulates `scale` times the gradients
    in place (multi-view reduction without per-view allocations).
    """
    beta = np.asarray(beta, dtype=np.float64).reshape(3)
    gamma = np.asarray(gamma, dtype=np.float64).reshape(3)
    depths = mpi.current_depths()
    out, _, tape, _ = render_forward(mpi, camera, want_tape=True, depths=depths,
                                     clamped=clamped)
    w, h = camera.image_size
    n = w * h
    out_img = out.reshape(h, w, 3)

    pre_clamp = (out_img + beta) * gamma
    rendered = np.clip(pre_clamp, 0.0, 1.0)
    breakdown, g_img = loss_with_grad(rendered, truth, mask, cfg, extractor, region)

    bundle = out_bundle if out_bundle is not None else GradientBundle.zeros_like(mpi)
    active = (pre_clamp > 0.0) & (pre_clamp < 1.0)
    g_exposed = g_img * active
    if "exposure" in needs:
        bundle.d_beta += scale * (g_exposed * gamma).sum(axis=(0, 1))
        bundle.d_gamma += scale * (g_exposed * (out_img + beta)).sum(axis=(0, 1))
    g = (g_exposed * gamma).reshape(n, 3)

    want_position = ("depth" in needs) or ("pose" in needs)
    canvas_cam = _canvas_camera(mpi)
    hc, wc = mpi.raw_alphas.shape[1], mpi.raw_alphas.shape[2]
    grid = tape.grid
    content_mask = "content" in needs
    if content_mask:
        alpha_interior = (mpi.raw_alphas > 0.0) & (mpi.raw_alphas < 1.0)
        tex_interior = (mpi.raw_textures > 0.0) & (mpi.raw_textures < 1.0)

    # reverse scan, front plane first (reverse order of application)
    for i in range(mpi.plane_count):
        entry = tape.plane_tapes[i]
        if entry is None:
            continue
        terms = entry.terms
        a, c = entry.a, entry.c
        prefix = tape.prefixes[i]
        gc = g * a[:, None]
        ga = (g * (c - prefix)).sum(axis=1)
        g = g * (1.0 - a)[:, None]

        group = i // mpi.sharing_factor
        if content_mask:
            contrib = (ga[None, :] * terms.wgt).ravel()
            da = np.bincount(terms.idx.ravel(), weights=contrib,
                             minlength=hc * wc).reshape(hc, wc)
            bundle.d_alphas[i] += (scale * da) * alpha_interior[i]
            flat_idx = terms.idx.ravel()
            for ch in range(3):
                contrib = (gc[:, ch][None, :] * terms.wgt).ravel()
                dt = np.bincount(flat_idx, weights=contrib,
                                 minlength=hc * wc).reshape(hc, wc)
                bundle.d_textures[group, :, :, ch] += (scale * dt) * tex_interior[group, :, :, ch]

        if not want_position:
            continue
        af = entry.alpha_corners
        cf = entry.color_corners
        one_fx = 1.0 - terms.fx
        one_fy = 1.0 - terms.fy
        dadu = (af[1] - af[0]) * one_fy + (af[3] - af[2]) * terms.fy
        dadv = (af[2] - af[0]) * one_fx + (af[3] - af[1]) * terms.fx
        dcdu = (cf[1] - cf[0]) * one_fy[:, None] + (cf[3] - cf[2]) * terms.fy[:, None]
        dcdv = (cf[2] - cf[0]) * one_fx[:, None] + (cf[3] - cf[1]) * terms.fx[:, None]
        gu = ga * dadu + (gc * dcdu).sum(axis=1)
        gv = ga * dadv + (gc * dcdv).sum(axis=1)
        inv_w = np.where(terms.valid, 1.0, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_w = np.where(terms.valid, inv_w / entry.w, 0.0)

        jac = homography_jacobians(canvas_cam, camera, float(depths[i]))
        u, v = entry.u, entry.v
        if "depth" in needs:
            dq = jac.d_depth @ grid
            du = (dq[0] - u * dq[2]) * inv_w
            dv = (dq[1] - v * dq[2]) * inv_w
            bundle.d_depth_deltas[i] += scale * float((gu * du + gv * dv).sum())
        if "pose" in needs:
            dq6 = np.einsum("kab,bn->kan", jac.d_twist, grid)
            du6 = (dq6[:, 0] - u[None, :] * dq6[:, 2]) * inv_w[None, :]
            dv6 = (dq6[:, 1] - v[None, :] * dq6[:, 2]) * inv_w[None, :]
            bundle.d_pose_twist += scale * (du6 @ gu + dv6 @ gv)

    return breakdown, bundle


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Per-array adaptive moment estimation, moments (0.9, 0.999)."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._state = {}

    def step(self, key, grad, lr):
        """Update increment for a parameter (subtract the returned value)."""
        grad = np.asarray(grad, dtype=np.float64)
        m, v, t = self._state.get(key, (np.zeros_like(grad), np.zeros_like(grad), 0))
        t += 1
        m = self.beta1 * m + (1.0 - self.beta1) * grad
        v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
        self._state[key] = (m, v, t)
        m_hat = m / (1.0 - self.beta1**t)
        v_hat = v / (1.0 - self.beta2**t)
        return lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# fitting


@dataclass
class ViewObservation:
    """One training or validation view of a single frame."""

    camera: CameraModel
    image: np.ndarray            # (H, W, 3) in [0, 1]
    mask: np.ndarray | None      # (H, W) binary foreground, or None
    camera_index: int            # exposure slot; 0 is the pinned reference
    refine: bool = True          # pose refinement eligibility (host: False)
    is_val: bool = False
    name: str = ""


@dataclass
class FitConfig:
    planes: int = 32
    sharing: int = 4
    spacing: str = "depth"
    padding: int = 0
    iters: int = 2000
    lr: float = 0.05
    lr_final: float | None = None          # defaults to lr / 10
    depth_lr_mult: float = 0.1             # depth refinement at 0.1x
    pose_lr_mult: float = 0.01
    exposure_lr_mult: float = 1.0
    adaptive_depth: bool = True
    refine_poses: bool = False
    pose_warmup_frac: float = 0.25         # content-only fraction before pose steps
    pose_prior: float = 0.0                # trust-region weight tying poses to
                                           # their initial estimates (gauge anchor)
    optimize_exposure: bool = False
    views_per_step: int = 0                # 0 = all training views every step
    loss: LossConfig = field(default_factory=LossConfig)
    alpha_init: float = 0.3
    color_init: float = 0.5
    init_depth_scale: float = 1.0          # deliberately wrong starts (ablations)
    seed: int = 0
    val_every: int = 100
    log_every: int = 200


@dataclass
class FitResult:
    mpi: Mpi
    exposure: ExposureCoeffs
    views: list
    history: list
    val_psnr: float
    background_error: float


def fit_views(views, host_camera, near, far, cfg: FitConfig, init_mpi=None):
    """Fit one MPI to a set of calibrated views of a single time instant."""
    views = [replace(v) for v in views]  # own the view records (poses mutate)
    train = [v for v in views if not v.is_val]
    if len(train) < 2:
        raise NonFiniteLoss("need at least 2 training views to fit")
    n_cams = max(v.camera_index for v in views) + 1

    mpi = init_mpi.snapshot() if init_mpi is not None else Mpi.zeros(
        cfg.planes, cfg.sharing, host_camera,
        near * cfg.init_depth_scale, far * cfg.init_depth_scale,
        spacing=cfg.spacing, padding=cfg.padding,
        alpha=cfg.alpha_init, color=cfg.color_init,
    )
    exposure = ExposureCoeffs.identity(n_cams)
    adam = Adam()
    lr_final = cfg.lr_final if cfg.lr_final is not None else cfg.lr / 10.0

    refine_poses = cfg.refine_poses
    if refine_poses:
        has_bg = any(
            v.refine and (v.mask is None or (1.0 - v.mask).sum() > 0) for v in train
        )
        if not has_bg:
            warnings.warn("no background pixels in any view; pose refinement disabled")
            refine_poses = False

    content_needs = {"content"}
    if cfg.adaptive_depth:
        content_needs.add("depth")
    if cfg.optimize_exposure:
        content_needs.add("exposure")

    rng = np.random.default_rng(cfg.seed)
    history = []
    val_psnr = float("nan")
    pose_start = int(cfg.pose_warmup_frac * cfg.iters)
    initial_poses = [(v.camera.rotation, v.camera.translation) for v in train]
    for it in range(cfg.iters):
        frac = it / max(cfg.iters - 1, 1)
        lr = cfg.lr * (lr_final / cfg.lr) ** frac
        mpi.refined_depths()  # order-preserving projection each step
        # strict 1:1 alternation once the content has taken shape; pose steps
        # against freshly initialized content only add Adam momentum noise
        pose_step = refine_poses and it % 2 == 1 and it >= pose_start

        if pose_step:
            for vi, view in enumerate(train):
                if not view.refine:
                    continue
                if view.mask is not None and (1.0 - view.mask).sum() == 0:
                    continue
                _, bundle = backward_render(
                    mpi, view.camera,
                    exposure.beta[view.camera_index], exposure.gamma[view.camera_index],
                    view.image, view.mask, cfg.loss,
                    region="background", needs={"pose"},
                )
                grad = bundle.d_pose_twist
                if cfg.pose_prior > 0:
                    # keep poses near their initial estimates: photometric
                    # alternation has near-flat gauge valleys (content repaint
                    # + collective pose motion) that only the host view pins
                    r0, t0 = initial_poses[vi]
                    drift = se3_log(view.camera.rotation @ r0.T,
                                    view.camera.translation
                                    - view.camera.rotation @ r0.T @ t0)
                    grad = grad + 2.0 * cfg.pose_prior * drift
                if not np.all(np.isfinite(grad)):
                    raise NonFiniteLoss(f"non-finite pose gradient at iteration {it}")
                step = adam.step(("pose", vi), grad, lr * cfg.pose_lr_mult)
                view.camera = view.camera.perturbed(-step)
            continue

        if cfg.views_per_step and cfg.views_per_step < len(train):
            picks = rng.choice(len(train), size=cfg.views_per_step, replace=False)
            batch = [train[j] for j in sorted(picks)]
        else:
            batch = train
        total = GradientBundle.zeros_like(mpi)
        beta_grad = np.zeros((n_cams, 3))
        gamma_grad = np.zeros((n_cams, 3))
        agg = np.zeros(4)  # l2, grad, perceptual, total
        clamped = (mpi.alphas, mpi.textures)
        for view in batch:
            # exposure slots are per camera: route this view's contribution
            # through the (zeroed) scratch fields of the shared accumulator
            total.d_beta[:] = 0.0
            total.d_gamma[:] = 0.0
            breakdown, _ = backward_render(
                mpi, view.camera,
                exposure.beta[view.camera_index], exposure.gamma[view.camera_index],
                view.image, view.mask, cfg.loss, needs=content_needs,
                clamped=clamped, out_bundle=total, scale=1.0 / len(batch),
            )
            beta_grad[view.camera_index] += total.d_beta
            gamma_grad[view.camera_index] += total.d_gamma
            agg += np.array([breakdown.l2, breakdown.grad,
                             breakdown.perceptual, breakdown.total])
        agg /= len(batch)
        if not np.isfinite(agg[3]) or not total.is_finite():
            raise NonFiniteLoss(
                f"non-finite loss at iteration {it}: l2={agg[0]} grad={agg[1]}"
            )

        mpi.raw_alphas -= adam.step("alphas", total.d_alphas, lr)
        mpi.raw_textures -= adam.step("textures", total.d_textures, lr)
        if cfg.adaptive_depth:
            mpi.depth_deltas -= adam.step(
                "deltas", total.d_depth_deltas, lr * cfg.depth_lr_mult
            )
        if cfg.optimize_exposure:
            beta_grad[0] = 0.0    # gauge: reference camera stays pinned
            gamma_grad[0] = 0.0
            exposure.beta -= adam.step("beta", beta_grad, lr * cfg.exposure_lr_mult)
            exposure.gamma -= adam.step("gamma", gamma_grad, lr * cfg.exposure_lr_mult)
            exposure.gamma = np.maximum(exposure.gamma, 1e-3)
            exposure.pin_reference()

        row = {
            "iteration": it, "l2": agg[0], "grad": agg[1],
            "perceptual": agg[2], "total": agg[3], "psnr_val": float("nan"),
        }
        if (it % cfg.val_every == 0 or it == cfg.iters - 1):
            val_psnr = validation_psnr(mpi, exposure, views)
            row["psnr_val"] = val_psnr
        history.append(row)
        if it % cfg.log_every == 0:
            log.info("iter %d loss %.6f val %.2f", it, agg[3], row["psnr_val"])

    mpi.refined_depths()
    bg_err = background_error(mpi, exposure, train)
    return FitResult(mpi=mpi, exposure=exposure, views=views, history=history,
                     val_psnr=val_psnr, background_error=bg_err)


def validation_psnr(mpi, exposure, views):
    vals = [v for v in views if v.is_val]
    if not vals:
        return float("nan")
    scores = []
    for v in vals:
        out, _, _, _ = render_forward(mpi, v.camera)
        w, h = v.camera.image_size
        img = apply_exposure(out.reshape(h, w, 3),
                             exposure.beta[v.camera_index],
                             exposure.gamma[v.camera_index])
        scores.append(psnr(img, v.image))
    return float(np.mean(scores))


def background_error(mpi, exposure, views):
    """Mean squared photometric error over background pixels of the views."""
    num, den = 0.0, 0.0
    for v in views:
        out, _, _, _ = render_forward(mpi, v.camera)
        w, h = v.camera.image_size
        img = apply_exposure(out.reshape(h, w, 3),
                             exposure.beta[v.camera_index],
                             exposure.gamma[v.camera_index])
        bg = np.ones((h, w)) if v.mask is None else 1.0 - v.mask
        num += float((bg[..., None] * (img - v.image) ** 2).sum())
        den += float(bg.sum() * 3)
    return num / den if den > 0 else float("nan")


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckScene:
    """A small differentiable scene: one MPI, one view, one truth image."""

    mpi: Mpi
    camera: CameraModel
    truth: np.ndarray
    mask: np.ndarray | None
    beta: np.ndarray
    gamma: np.ndarray
    cfg: LossConfig


@dataclass
class GradCheckReport:
    parameter_class: str
    max_rel_err: float
    checked: int
    nudged: int
    tolerance: float

    @property
    def passed(self):
        return self.max_rel_err < self.tolerance


PARAMETER_CLASSES = ("alphas", "textures", "depth_deltas", "pose_twist",
                     "beta", "gamma")


def make_gradcheck_scene(seed, planes=4, size=(8, 8), sharing=2):
    """Seeded random scene for the gradient suite.

    Values stay away from the [0, 1] clamps, and the target camera carries a
    fractional principal-point offset so samples land mid-texel: the bilinear
    interpolant is non-differentiable on texel edges and its corner weights
    vanish there, so a near-identity view would park every sample exactly
    where central differences are undefined or noise-dominated.
    """
    rng = np.random.default_rng(seed)
    w, h = size
    cam = CameraModel(simple_intrinsics(0.9 * w, w, h), np.eye(3), np.zeros(3), size)
    alphas = rng.uniform(0.15, 0.85, size=(planes, h, w))
    textures = rng.uniform(0.15, 0.85, size=(planes // sharing, h, w, 3))
    mpi = Mpi(alphas, textures, init_planes(1.5, 4.0, planes), cam, sharing)
    eye = rng.normal(scale=0.25, size=3)
    eye[2] = rng.uniform(-0.1, 0.1)
    k_target = cam.intrinsics.copy()
    k_target[0, 2] += 0.379
    k_target[1, 2] += 0.233
    target = look_at(eye, (0.0, 0.0, 2.5), (0.0, -1.0, 0.0), k_target, size)
    truth = rng.uniform(0.2, 0.8, size=(h, w, 3))
    mask = (rng.uniform(size=(h, w)) > 0.6).astype(np.float64)
    beta = rng.uniform(-0.05, 0.05, size=3)
    gamma = rng.uniform(0.9, 1.1, size=3)
    return GradCheckScene(mpi=mpi, camera=target, truth=truth, mask=mask,
                          beta=beta, gamma=gamma, cfg=LossConfig())


def finite_diff_check(parameter_class, scene: GradCheckScene, step=1e-5,
                      tolerance=1e-4):
    """Compare analytic gradients against central differences, one class.

    Parameters within `step * 10` of a clamp bound are nudged inward first
    (zero one-sided gradients otherwise disagree with the two-sided FD) and
    counted in the report.
    """
    if parameter_class not in PARAMETER_CLASSES:
        raise ValueError(f"unknown parameter class {parameter_class!r}")
    scene = replace(scene, mpi=scene.mpi.snapshot(),
                    beta=scene.beta.copy(), gamma=scene.gamma.copy())
    margin = step * 10
    nudged = 0
    for arr in (scene.mpi.raw_alphas, scene.mpi.raw_textures):
        low = arr < margin
        high = arr > 1.0 - margin
        nudged += int(low.sum() + high.sum())
        arr[low] = margin
        arr[high] = 1.0 - margin

    _, bundle = backward_render(
        scene.mpi, scene.camera, scene.beta, scene.gamma,
        scene.truth, scene.mask, scene.cfg,
    )

    def fwd():
        return forward_loss(scene.mpi, scene.camera, scene.beta, scene.gamma,
                            scene.truth, scene.mask, scene.cfg).total

    analytic, fd = [], []
    if parameter_class in ("alphas", "textures"):
        arr = scene.mpi.raw_alphas if parameter_class == "alphas" else scene.mpi.raw_textures
        ga = bundle.d_alphas if parameter_class == "alphas" else bundle.d_textures
        flat = arr.reshape(-1)
        gflat = ga.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            hi = fwd()
            flat[j] = orig - step
            lo = fwd()
            flat[j] = orig
            analytic.append(gflat[j])
            fd.append((hi - lo) / (2 * step))
    elif parameter_class == "depth_deltas":
        for j in range(scene.mpi.plane_count):
            orig = scene.mpi.depth_deltas[j]
            scene.mpi.depth_deltas[j] = orig + step
            hi = fwd()
            scene.mpi.depth_deltas[j] = orig - step
            lo = fwd()
            scene.mpi.depth_deltas[j] = orig
            analytic.append(bundle.d_depth_deltas[j])
            fd.append((hi - lo) / (2 * step))
    elif parameter_class == "pose_twist":
        base = scene.camera
        for k in range(6):
            xi = np.zeros(6)
            xi[k] = step
            scene.camera = base.perturbed(xi)
            hi = fwd()
            scene.camera = base.perturbed(-xi)
            lo = fwd()
            scene.camera = base
            analytic.append(bundle.d_pose_twist[k])
            fd.append((hi - lo) / (2 * step))
    else:
        arr = scene.beta if parameter_class == "beta" else scene.gamma
        ga = bundle.d_beta if parameter_class == "beta" else bundle.d_gamma
        for j in range(3):
            orig = arr[j]
            arr[j] = orig + step
            hi = fwd()
            arr[j] = orig - step
            lo = fwd()
            arr[j] = orig
            analytic.append(ga[j])
            fd.append((hi - lo) / (2 * step))

    analytic = np.asarray(analytic)
    fd = np.asarray(fd)
    rel = np.abs(analytic - fd) / (np.abs(fd) + 1e-8)
    return GradCheckReport(
        parameter_class=parameter_class,
        max_rel_err=float(rel.max()) if rel.size else 0.0,
        checked=int(rel.size),
        nudged=nudged,
        tolerance=tolerance,
    )
