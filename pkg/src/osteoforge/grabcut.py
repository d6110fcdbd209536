"""Iterative graph-cut segmentation seeded from measurement geometry.

The slice is segmented by alternating between appearance-model refits and
an exact min-cut relabel of the undecided pixels. Seeding: pixels outside
the measurement bbox are definite background, the quadrilateral interior
is definite foreground, and the rest of the bbox starts as probable
foreground.

Energy bookkeeping: the total energy (mixture data term plus contrast
smoothness) is evaluated after every round, and a round is only accepted
if it does not increase the energy, so the per-round energy trace is
non-increasing by construction. Capacities handed to the solver are the
real-valued energies scaled by CAP_SCALE and rounded to integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .gmm import LIKELIHOOD_FLOOR, GmmModel, Mixture, fit_gmm, refit_hard
from .maxflow import FlowNetwork, max_flow
from .recist import SeedGeometry, rasterize_quad

DEFINITE_BG = 0
PROBABLE_BG = 1
PROBABLE_FG = 2
DEFINITE_FG = 3

CAP_SCALE = 4096  # integer capacity units per unit of energy


@dataclass(frozen=True)
class Trimap:
    """Per-pixel seeding state, shape (nx, ny), values in {0..3}."""

    states: np.ndarray

    def __post_init__(self):
        if self.states.ndim != 2:
            raise ValidationError("trimap must be 2D")
        if self.states.size and self.states.max() > DEFINITE_FG:
            raise ValidationError("trimap states must lie in {0..3}")

    @property
    def definite_fg(self) -> np.ndarray:
        return self.states == DEFINITE_FG

    @property
    def definite_bg(self) -> np.ndarray:
        return self.states == DEFINITE_BG

    @property
    def probable(self) -> np.ndarray:
        return (self.states == PROBABLE_BG) | (self.states == PROBABLE_FG)


@dataclass(frozen=True)
class GrabCutParams:
    k_components: int = 5
    gamma: float = 50.0
    max_iters: int = 5
    variance_floor: float = 0.25
    connectivity: int = 8  # 4 or 8

    def __post_init__(self):
        if self.k_components < 1:
            raise ValidationError("k_components must be >= 1")
        if self.gamma < 0:
            raise ValidationError("gamma must be >= 0")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.connectivity not in (4, 8):
            raise ValidationError("connectivity must be 4 or 8")


@dataclass
class GrabCutResult:
    mask: np.ndarray
    energies: list[float] = field(default_factory=list)
    iterations: int = 0


def build_trimap(
    g: SeedGeometry, quad_mask: np.ndarray, image_dims: tuple[int, int]
) -> Trimap:
    """Seed the trimap from a bbox and its definite-foreground quad mask."""
    nx, ny = image_dims
    x0, y0, x1, y1 = g.bbox
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, nx - 1), min(y1, ny - 1)
    if x0 == 0 and y0 == 0 and x1 == nx - 1 and y1 == ny - 1:
        raise ValidationError(
            "bbox covers the whole image, leaving no definite-background seed"
        )
    if not quad_mask.any():
        raise ValidationError("empty quad mask, no definite-foreground seed")

    states = np.full((nx, ny), DEFINITE_BG, dtype=np.uint8)
    states[x0 : x1 + 1, y0 : y1 + 1] = PROBABLE_FG
    outside = quad_mask.copy()
    outside[x0 : x1 + 1, y0 : y1 + 1] = False
    if outside.any():
        raise ValidationError("quad mask extends outside the bbox")
    states[quad_mask] = DEFINITE_FG
    return Trimap(states)


def _neighbor_pairs(nx: int, ny: int, connectivity: int):
    """Index pairs (flat C-order over (nx, ny)) and distances for the grid."""
    idx = np.arange(nx * ny, dtype=np.int64).reshape(nx, ny)
    pairs = [
        (idx[:-1, :].ravel(), idx[1:, :].ravel(), 1.0),
        (idx[:, :-1].ravel(), idx[:, 1:].ravel(), 1.0),
    ]
    if connectivity == 8:
        pairs.append((idx[:-1, :-1].ravel(), idx[1:, 1:].ravel(), math.sqrt(2.0)))
        pairs.append((idx[1:, :-1].ravel(), idx[:-1, 1:].ravel(), math.sqrt(2.0)))
    a = np.concatenate([p[0] for p in pairs])
    b = np.concatenate([p[1] for p in pairs])
    dist = np.concatenate([np.full(len(p[0]), p[2]) for p in pairs])
    return a, b, dist


def compute_beta(slice_u8: np.ndarray, connectivity: int = 8) -> float:
    """Contrast normalization 1 / (2 E[(z_n - z_m)^2]) over neighbor pairs.

    Zero for a constant image (the expectation vanishes).
    """
    if slice_u8.size < 2:
        raise ValidationError("beta needs an image with at least 2 pixels")
    a, b, _ = _neighbor_pairs(*slice_u8.shape, connectivity)
    z = slice_u8.astype(np.float64).ravel()
    sq = (z[a] - z[b]) ** 2
    mean = sq.mean()
    return 0.0 if mean == 0.0 else 1.0 / (2.0 * mean)


def _hard_seed_capacity(params: GrabCutParams) -> float:
    # Must exceed any finite cut that could otherwise free a seed: the sum
    # of a pixel's n-links plus its largest possible data term.
    max_neighbors = 8 if params.connectivity == 8 else 4
    return 8.0 * params.gamma * max_neighbors - 2.0 * math.log(LIKELIHOOD_FLOOR) + 1.0


def build_graph(
    slice_u8: np.ndarray,
    trimap: Trimap,
    gmm: GmmModel,
    params: GrabCutParams,
    beta: float,
) -> FlowNetwork:
    """Reduce one relabeling step to an s-t network.

    Node i is pixel i (flat C-order); the last two nodes are source
    (foreground terminal) and sink. N-links carry the contrast-weighted
    smoothness gamma/dist * exp(-beta (z_n - z_m)^2); t-links carry the
    class data terms for undecided pixels and a hard seed capacity for
    definite ones. Real-valued capacities are scaled by CAP_SCALE and
    rounded.
    """
    nx, ny = slice_u8.shape
    n_pix = nx * ny
    source, sink = n_pix, n_pix + 1

    z = slice_u8.astype(np.float64).ravel()
    a, b, dist = _neighbor_pairs(nx, ny, params.connectivity)
    w = (params.gamma / dist) * np.exp(-beta * (z[a] - z[b]) ** 2)
    ncap = np.rint(w * CAP_SCALE).astype(np.int64)

    states = trimap.states.ravel()
    large = int(round(_hard_seed_capacity(params) * CAP_SCALE))

    d_bg = gmm.bg.neg_log_likelihood(z)  # cost of calling a pixel background
    d_fg = gmm.fg.neg_log_likelihood(z)
    prob = (states == PROBABLE_BG) | (states == PROBABLE_FG)
    src_cap = np.zeros(n_pix, dtype=np.int64)
    snk_cap = np.zeros(n_pix, dtype=np.int64)
    src_cap[prob] = np.rint(d_bg[prob] * CAP_SCALE).astype(np.int64)
    snk_cap[prob] = np.rint(d_fg[prob] * CAP_SCALE).astype(np.int64)
    src_cap[states == DEFINITE_FG] = large
    snk_cap[states == DEFINITE_BG] = large

    pix = np.arange(n_pix, dtype=np.int64)
    tails = np.concatenate([a, b, np.full(n_pix, source, dtype=np.int64), pix])
    heads = np.concatenate([b, a, pix, np.full(n_pix, sink, dtype=np.int64)])
    caps = np.concatenate([ncap, ncap, src_cap, snk_cap])

    return FlowNetwork(n_pix + 2, source, sink, tails, heads, caps)


def _smoothness_weights(slice_u8, params, beta):
    a, b, dist = _neighbor_pairs(*slice_u8.shape, params.connectivity)
    z = slice_u8.astype(np.float64).ravel()
    w = (params.gamma / dist) * np.exp(-beta * (z[a] - z[b]) ** 2)
    return a, b, w


def total_energy(
    slice_u8: np.ndarray,
    fg_mask: np.ndarray,
    gmm: GmmModel,
    params: GrabCutParams,
    beta: float,
    _pairs=None,
) -> float:
    """Mixture data term plus contrast smoothness for a labeling."""
    z = slice_u8.astype(np.float64).ravel()
    fg = fg_mask.ravel()
    data = np.where(fg, gmm.fg.neg_log_likelihood(z), gmm.bg.neg_log_likelihood(z)).sum()
    a, b, w = _pairs if _pairs is not None else _smoothness_weights(slice_u8, params, beta)
    smooth = w[fg[a] != fg[b]].sum()
    return float(data + smooth)


def grabcut_segment(
    slice_u8: np.ndarray,
    geometry: SeedGeometry,
    params: GrabCutParams = GrabCutParams(),
    rng_seed: int = 0,
) -> np.ndarray:
    """Segment one windowed slice; returns the foreground mask.

    The mask always contains the quad interior, never leaves the bbox, and
    is deterministic for fixed inputs and seed.
    """
    return grabcut_segment_full(slice_u8, geometry, params, rng_seed).mask


def grabcut_segment_full(
    slice_u8: np.ndarray,
    geometry: SeedGeometry,
    params: GrabCutParams = GrabCutParams(),
    rng_seed: int = 0,
) -> GrabCutResult:
    """As grabcut_segment, but also reports per-round energies and rounds run."""
    dims = slice_u8.shape
    quad_mask = rasterize_quad(geometry, dims)
    trimap = build_trimap(geometry, quad_mask, dims)
    beta = compute_beta(slice_u8, params.connectivity)
    pairs = _smoothness_weights(slice_u8, params, beta)

    z = slice_u8.astype(np.float64)
    fg = trimap.states >= PROBABLE_FG
    prob_flat = trimap.probable.ravel()

    seeds = np.random.SeedSequence(rng_seed).spawn(2)
    gmm = GmmModel(
        fg=fit_gmm(z[fg], params.k_components, params.variance_floor,
                   seeds[0].generate_state(1)[0]),
        bg=fit_gmm(z[~fg], params.k_components, params.variance_floor,
                   seeds[1].generate_state(1)[0]),
    )

    energy = total_energy(slice_u8, fg, gmm, params, beta, pairs)
    energies = [energy]
    iterations = 0

    for _ in range(params.max_iters):
        new_gmm = GmmModel(
            fg=refit_hard(gmm.fg, z[fg], params.variance_floor),
            bg=refit_hard(gmm.bg, z[~fg], params.variance_floor),
        )
        net = build_graph(slice_u8, trimap, new_gmm, params, beta)
        _, source_side = max_flow(net)

        new_fg = fg.copy()
        new_fg.ravel()[prob_flat] = source_side[: slice_u8.size][prob_flat]
        new_energy = total_energy(slice_u8, new_fg, new_gmm, params, beta, pairs)

        if new_energy > energy:
            # Quantized cut or refit failed to improve: stable state reached.
            break
        changed = bool((new_fg != fg).any())
        fg, gmm, energy = new_fg, new_gmm, new_energy
        energies.append(energy)
        iterations += 1
        if not changed:
            break

    # Seeds are hard by construction; make it explicit for downstream checks.
    assert bool(fg[trimap.definite_fg].all()) and not bool(fg[trimap.definite_bg].any())
    return GrabCutResult(mask=fg, energies=energies, iterations=iterations)
