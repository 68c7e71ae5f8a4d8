"""Image substrate: I/O, Otsu binarization, components, contours, thinning.

All operations are pure functions of their inputs and deterministic, so
callers may fan out over images freely.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

# Chain code convention: 1 = east, counter-clockwise in 45 degree steps,
# through 8 = south-east.  Deltas are (dx, dy) with y growing downward.
CHAIN_STEPS: dict[int, tuple[int, int]] = {
    1: (1, 0),
    2: (1, -1),
    3: (0, -1),
    4: (-1, -1),
    5: (-1, 0),
    6: (-1, 1),
    7: (0, 1),
    8: (1, 1),
}
_DELTA_TO_CODE = {v: k for k, v in CHAIN_STEPS.items()}
# Neighbor ring in chain-code order (east first, rotating counter-clockwise).
_RING = [CHAIN_STEPS[c] for c in range(1, 9)]

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class DegenerateImageError(ValueError):
    """Raised when an image has no intensity separability (constant data)."""


@dataclass
class GrayImage:
    """Single-channel intensity image, row-major uint8 in [0, 255]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.uint8)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("gray image must be a 2-D array with positive size")
        self.data = arr

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass
class BinaryImage:
    """Ink mask; True marks foreground (ink) pixels."""

    mask: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.mask, dtype=bool)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("binary image must be a 2-D array with positive size")
        self.mask = arr

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    def ink_count(self) -> int:
        return int(self.mask.sum())


@dataclass
class Contour:
    """Closed ordered boundary: pixel coordinates plus chain codes.

    ``points`` is an (n, 2) int array of (x, y).  ``chain[i]`` encodes the
    step from points[i] to points[i+1]; for closed contours the last code
    returns to points[0].  A single-pixel contour is closed with an empty
    chain.
    """

    points: np.ndarray
    chain: np.ndarray
    closed: bool = True
    hole: bool = False

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class Skeleton:
    """Medial-axis mask plus detected junction reference points."""

    mask: np.ndarray
    junctions: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]


# --------------------------------------------------------------------------
# I/O

_read_hooks: list = []


@contextlib.contextmanager
def record_image_reads(log: list):
    """Collect every path passed to load_gray while the context is active."""
    _read_hooks.append(log)
    try:
        yield log
    finally:
        _read_hooks.remove(log)


def _read_pgm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if not raw.startswith(b"P5"):
        raise ValueError(f"not a binary PGM (P5) file: {path}")
    # Header: magic, width, height, maxval; '#' comments allowed between tokens.
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"truncated PGM header: {path}")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval > 255:
        raise ValueError(f"unsupported PGM maxval {maxval} (16-bit): {path}")
    data = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    if data.size != width * height:
        raise ValueError(f"truncated PGM payload: {path}")
    return data.reshape(height, width).copy()


def luma(rgb: np.ndarray) -> np.ndarray:
    """Convert an (h, w, 3) uint8 array to intensity via fixed luma weights."""
    r, g, b = LUMA_WEIGHTS
    vals = rgb[..., 0] * r + rgb[..., 1] * g + rgb[..., 2] * b
    return np.rint(vals).astype(np.uint8)


def load_gray(path: str | Path) -> GrayImage:
    """Load a PNG or PGM (binary P5) image as grayscale."""
    path = Path(path)
    for log in _read_hooks:
        log.append(str(path))
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        return GrayImage(_read_pgm(path))
    if suffix == ".png":
        with Image.open(path) as im:
            if im.mode == "L":
                return GrayImage(np.asarray(im, dtype=np.uint8))
            if im.mode in ("P", "RGBA", "LA", "I;16", "I", "1"):
                im = im.convert("RGB")
            if im.mode == "RGB":
                return GrayImage(luma(np.asarray(im, dtype=np.uint8)))
            raise ValueError(f"unsupported PNG mode {im.mode!r}: {path}")
    raise ValueError(f"unsupported image format {suffix!r}: {path}")


def save_gray(img: GrayImage, path: str | Path) -> None:
    """Write a grayscale image as PNG or binary PGM, by extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
        path.write_bytes(header + img.data.tobytes())
    elif suffix == ".png":
        Image.fromarray(img.data, mode="L").save(path, format="PNG")
    else:
        raise ValueError(f"unsupported output format {suffix!r}: {path}")


def save_binary(img: BinaryImage, path: str | Path) -> None:
    """Write an ink mask as an 8-bit image: ink = 0, background = 255."""
    as_gray = GrayImage(np.where(img.mask, 0, 255).astype(np.uint8))
    save_gray(as_gray, path)


# --------------------------------------------------------------------------
# Thresholding

def otsu_threshold(img: GrayImage) -> int:
    """Threshold t in [0, 254] maximizing between-class variance.

    Classes are intensity <= t versus > t over the 256-bin histogram; ties
    break toward the smallest t.
    """
    hist = np.bincount(img.data.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    if np.count_nonzero(hist) < 2:
        raise DegenerateImageError("degenerate histogram: image has a single intensity")
    levels = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(hist)[:-1]            # mass of class <= t, t = 0..254
    w1 = total - w0
    m0 = np.cumsum(hist * levels)[:-1]   # first moment of class <= t
    mean_total = (hist * levels).sum()
    valid = (w0 > 0) & (w1 > 0)
    mu0 = np.divide(m0, w0, out=np.zeros_like(m0), where=valid)
    mu1 = np.divide(mean_total - m0, w1, out=np.zeros_like(m0), where=valid)
    between = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -np.inf)
    return int(np.argmax(between))


def binarize(
    img: GrayImage,
    polarity: str = "ink-darker",
    empty_on_constant: bool = False,
) -> BinaryImage:
    """Otsu-binarize; the polarity picks which side of the threshold is ink.

    A constant image has no separability; by default that propagates the
    degenerate-histogram error, with ``empty_on_constant`` it yields an
    all-background mask instead (no contrast means no ink).
    """
    if polarity not in ("ink-darker", "ink-lighter"):
        raise ValueError(f"unknown polarity {polarity!r}")
    try:
        t = otsu_threshold(img)
    except DegenerateImageError:
        if empty_on_constant:
            return BinaryImage(np.zeros_like(img.data, dtype=bool))
        raise
    if polarity == "ink-darker":
        return BinaryImage(img.data <= t)
    return BinaryImage(img.data > t)


def binarize_sauvola(img: GrayImage, window: int = 31, k: float = 0.2) -> BinaryImage:
    """Local adaptive threshold for degraded pages (ink assumed darker).

    t(x, y) = m * (1 + k * (s / 128 - 1)) over a square window, where m and
    s are the local mean and standard deviation.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 3")
    data = img.data.astype(np.float64)
    mean = ndimage.uniform_filter(data, size=window, mode="reflect")
    sq_mean = ndimage.uniform_filter(data * data, size=window, mode="reflect")
    std = np.sqrt(np.maximum(sq_mean - mean * mean, 0.0))
    thresh = mean * (1.0 + k * (std / 128.0 - 1.0))
    return BinaryImage(data <= thresh)


# --------------------------------------------------------------------------
# Connected components

def connected_components(img: BinaryImage) -> list[np.ndarray]:
    """8-connected foreground components as full-size boolean masks.

    Components come back in scan order of their first (top-left-most) pixel.
    """
    labels, count = ndimage.label(img.mask, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return []
    flat = labels.ravel()
    first_seen = np.full(count + 1, flat.size, dtype=np.int64)
    nz = np.flatnonzero(flat)
    # reversed so the earliest index wins
    first_seen[flat[nz[::-1]]] = nz[::-1]
    order = np.argsort(first_seen[1:], kind="stable") + 1
    return [labels == lbl for lbl in order]


# --------------------------------------------------------------------------
# Contour tracing

def _signed_area2(points: np.ndarray) -> int:
    """Twice the shoelace area in image coordinates (y down)."""
    x = points[:, 0].astype(np.int64)
    y = points[:, 1].astype(np.int64)
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    return int((x * yn - xn * y).sum())


def _chain_from_points(points: np.ndarray) -> np.ndarray:
    nxt = np.roll(points, -1, axis=0)
    codes = [_DELTA_TO_CODE[(int(dx), int(dy))] for dx, dy in (nxt - points)]
    return np.asarray(codes, dtype=np.uint8)


def _moore_trace(mask: np.ndarray, start: tuple[int, int], backtrack_dir: int) -> np.ndarray:
    """Trace one closed boundary on a padded mask.

    ``backtrack_dir`` is the ring index (0 = east) of the background
    neighbor the trace conceptually entered from.  The neighbor scan runs in
    chain-code (counter-clockwise) order, which orients outer boundaries
    counter-clockwise in the y-up frame.
    """
    h, w = mask.shape
    points = [start]
    cur = start
    back = backtrack_dir
    first_move: tuple[tuple[int, int], int] | None = None
    while True:
        found = -1
        for step in range(1, 9):
            d = (back + step) % 8
            dx, dy = _RING[d]
            nx, ny = cur[0] + dx, cur[1] + dy
            if 0 <= nx < w and 0 <= ny < h and mask[ny, nx]:
                found = d
                break
        if found < 0:
            break  # isolated pixel; caller handles that case separately
        nxt = (cur[0] + _RING[found][0], cur[1] + _RING[found][1])
        move = (cur, found)
        if first_move is None:
            first_move = move
        elif move == first_move:
            break
        # new backtrack: direction from the next pixel toward the last
        # background neighbor scanned just before the hit
        prev_ring = (back + step - 1) % 8 if step > 1 else back
        px, py = cur[0] + _RING[prev_ring][0], cur[1] + _RING[prev_ring][1]
        back = _RING.index((px - nxt[0], py - nxt[1]))
        cur = nxt
        points.append(cur)
    if len(points) > 1 and points[-1] == points[0]:
        points.pop()
    return np.asarray(points, dtype=np.int32)


def _orient(points: np.ndarray, want_positive: bool) -> np.ndarray:
    """Flip traversal direction so the shoelace sign matches the contract."""
    area2 = _signed_area2(points)
    if area2 == 0:
        return points
    if (area2 > 0) != want_positive:
        return np.concatenate([points[:1], points[1:][::-1]], axis=0)
    return points


def trace_contours(img: BinaryImage, include_holes: bool = True) -> list[Contour]:
    """Boundaries of every component: outer ring plus optional hole rings.

    Outer boundaries run counter-clockwise and holes clockwise in the y-up
    frame (negative / positive shoelace area in image coordinates).
    """
    contours: list[Contour] = []
    for comp in connected_components(img):
        ys, xs = np.nonzero(comp)
        x0, x1 = xs.min(), xs.max()
        y0, y1 = ys.min(), ys.max()
        local = np.zeros((y1 - y0 + 3, x1 - x0 + 3), dtype=bool)
        local[1:-1, 1:-1] = comp[y0 : y1 + 1, x0 : x1 + 1]

        if len(xs) == 1:
            pt = np.asarray([[xs[0], ys[0]]], dtype=np.int32)
            contours.append(Contour(points=pt, chain=np.empty(0, dtype=np.uint8)))
            continue

        lys, lxs = np.nonzero(local)
        order = np.lexsort((lxs, lys))
        start = (int(lxs[order[0]]), int(lys[order[0]]))
        # start is the top-left-most pixel: its west neighbor is background
        pts = _moore_trace(local, start, backtrack_dir=4)
        pts = _orient(pts, want_positive=False)
        pts[:, 0] += x0 - 1
        pts[:, 1] += y0 - 1
        contours.append(Contour(points=pts, chain=_chain_from_points(pts)))

        if not include_holes:
            continue
        bg, n_bg = ndimage.label(~local, structure=np.asarray(
            [[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=int))
        if n_bg <= 1:
            continue
        border_labels = set(np.unique(bg[0, :])) | set(np.unique(bg[-1, :]))
        border_labels |= set(np.unique(bg[:, 0])) | set(np.unique(bg[:, -1]))
        hole_order: list[tuple[int, int, int]] = []
        for lbl in range(1, n_bg + 1):
            if lbl in border_labels or lbl == 0:
                continue
            hys, hxs = np.nonzero(bg == lbl)
            horder = np.lexsort((hxs, hys))
            hole_order.append((int(hys[horder[0]]), int(hxs[horder[0]]), lbl))
        for hy, hx, _lbl in sorted(hole_order):
            # ink pixel directly above the hole's top-left-most pixel
            start = (hx, hy - 1)
            pts = _moore_trace(local, start, backtrack_dir=6)  # backtrack = south
            pts = _orient(pts, want_positive=True)
            pts[:, 0] += x0 - 1
            pts[:, 1] += y0 - 1
            contours.append(Contour(points=pts, chain=_chain_from_points(pts), hole=True))
    return contours


def replay_chain(contour: Contour) -> np.ndarray:
    """Rebuild the point list from the first point and the chain codes."""
    pts = [tuple(contour.points[0])]
    for code in contour.chain[: len(contour.points) - 1]:
        dx, dy = CHAIN_STEPS[int(code)]
        pts.append((pts[-1][0] + dx, pts[-1][1] + dy))
    return np.asarray(pts, dtype=np.int32)


# --------------------------------------------------------------------------
# Thinning and junction detection

def _neighbor_stack(m: np.ndarray) -> np.ndarray:
    """P2..P9 neighbor planes (N, NE, E, SE, S, SW, W, NW) of a padded mask."""
    return np.stack([
        np.roll(m, 1, axis=0),                       # N
        np.roll(np.roll(m, 1, axis=0), -1, axis=1),  # NE
        np.roll(m, -1, axis=1),                      # E
        np.roll(np.roll(m, -1, axis=0), -1, axis=1), # SE
        np.roll(m, -1, axis=0),                      # S
        np.roll(np.roll(m, -1, axis=0), 1, axis=1),  # SW
        np.roll(m, 1, axis=1),                       # W
        np.roll(np.roll(m, 1, axis=0), 1, axis=1),   # NW
    ])


def _thin(mask: np.ndarray) -> np.ndarray:
    """Two-subiteration morphological thinning to a 1-pixel skeleton."""
    m = np.pad(mask, 1).astype(bool)
    while True:
        changed = False
        for phase in (0, 1):
            nb = _neighbor_stack(m)
            count = nb.sum(axis=0)
            ring = np.concatenate([nb, nb[:1]], axis=0)
            transitions = ((~ring[:-1]) & ring[1:]).sum(axis=0)
            n_, e_, s_, w_ = nb[0], nb[2], nb[4], nb[6]
            if phase == 0:
                c3 = ~(n_ & e_ & s_)
                c4 = ~(e_ & s_ & w_)
            else:
                c3 = ~(n_ & e_ & w_)
                c4 = ~(n_ & s_ & w_)
            remove = m & (count >= 2) & (count <= 6) & (transitions == 1) & c3 & c4
            if remove.any():
                m &= ~remove
                changed = True
        if not changed:
            break
    return m[1:-1, 1:-1]


def _crossing_number(skel: np.ndarray) -> np.ndarray:
    """Branch count per skeleton pixel (0->1 transitions around the ring)."""
    m = np.pad(skel, 1).astype(bool)
    nb = _neighbor_stack(m)
    ring = np.concatenate([nb, nb[:1]], axis=0)
    cn = ((~ring[:-1]) & ring[1:]).sum(axis=0)
    return np.where(m, cn, 0)[1:-1, 1:-1]


def _walk(skel_set: set, start: tuple[int, int], first: tuple[int, int], steps: int):
    """Follow a 1-px path from start through first; returns the probe endpoint."""
    prev, cur = start, first
    for _ in range(steps - 1):
        nxt = None
        for dx, dy in _RING:
            cand = (cur[0] + dx, cur[1] + dy)
            if cand != prev and cand != cur and cand in skel_set:
                # prefer direct continuation; stop at branchings
                if nxt is None:
                    nxt = cand
                else:
                    nxt = None
                    break
        if nxt is None:
            break
        prev, cur = cur, nxt
    return cur


def _cluster_representatives(coords: list[tuple[int, int]], score: dict) -> list[tuple[int, int]]:
    """Collapse 8-adjacent candidate groups to one representative each."""
    reps = []
    remaining = set(coords)
    for seed_pt in sorted(coords, key=lambda p: (p[1], p[0])):
        if seed_pt not in remaining:
            continue
        stack = [seed_pt]
        group = []
        remaining.discard(seed_pt)
        while stack:
            p = stack.pop()
            group.append(p)
            for dx, dy in _RING:
                q = (p[0] + dx, p[1] + dy)
                if q in remaining:
                    remaining.discard(q)
                    stack.append(q)
        group.sort(key=lambda p: (score[p], p[1], p[0]))
        reps.append(group[0])
    return sorted(reps, key=lambda p: (p[1], p[0]))


def skeletonize(
    img: BinaryImage,
    corner_angle_deg: float = 120.0,
    corner_probe: int = 4,
) -> Skeleton:
    """Thin to a medial-axis mask and locate branch points.

    Junctions are skeleton pixels with >= 3 branches by crossing number,
    plus 2-branch corner points whose probe-direction angle falls below
    ``corner_angle_deg``.  Components that thinning would erase entirely
    keep one medial pixel so component counts survive skeletonization.
    """
    skel = _thin(img.mask)

    # tiny blobs can vanish under thinning; keep one pixel per lost component
    if img.mask.any():
        for comp in connected_components(img):
            if not (skel & comp).any():
                ys, xs = np.nonzero(comp)
                cy, cx = ys.mean(), xs.mean()
                best = np.argmin((ys - cy) ** 2 + (xs - cx) ** 2)
                skel[ys[best], xs[best]] = True

    cn = _crossing_number(skel)
    skel_set = set(zip(*np.nonzero(skel.T)))  # (x, y) pairs

    branch_pts = [(int(x), int(y)) for y, x in zip(*np.nonzero(cn >= 3))]
    branch_score = {p: -int(cn[p[1], p[0]]) for p in branch_pts}
    branch_reps = _cluster_representatives(branch_pts, branch_score)
    branch_zone = set(branch_pts)

    # L-corner candidates: 2-branch pixels, not adjacent to a branch point,
    # whose immediate neighbor directions already bend by 90 degrees or more
    corner_candidates: list[tuple[int, int]] = []
    corner_angle = {}
    cos_thresh = np.cos(np.radians(corner_angle_deg))
    for y, x in zip(*np.nonzero(cn == 2)):
        p = (int(x), int(y))
        nbs = [(p[0] + dx, p[1] + dy) for dx, dy in _RING
               if (p[0] + dx, p[1] + dy) in skel_set]
        if len(nbs) != 2:
            continue
        if any((p[0] + dx, p[1] + dy) in branch_zone for dx, dy in _RING):
            continue
        v1 = (nbs[0][0] - p[0], nbs[0][1] - p[1])
        v2 = (nbs[1][0] - p[0], nbs[1][1] - p[1])
        immediate_dot = v1[0] * v2[0] + v1[1] * v2[1]
        if immediate_dot < 0:  # neighbors roughly opposite: straight-through
            continue
        e1 = _walk(skel_set, p, nbs[0], corner_probe)
        e2 = _walk(skel_set, p, nbs[1], corner_probe)
        u = np.asarray([e1[0] - p[0], e1[1] - p[1]], dtype=float)
        v = np.asarray([e2[0] - p[0], e2[1] - p[1]], dtype=float)
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0 or nv == 0:
            continue
        cos_angle = float(u @ v) / (nu * nv)
        if cos_angle > cos_thresh:  # angle below the corner threshold
            corner_candidates.append(p)
            corner_angle[p] = -cos_angle  # sharper corner = lower score
    corner_reps = _cluster_representatives(corner_candidates, corner_angle)

    junctions = [(x, y, int(cn[y, x])) for x, y in branch_reps]
    junctions += [(x, y, 2) for x, y in corner_reps]
    junctions.sort(key=lambda j: (j[1], j[0]))
    return Skeleton(mask=skel, junctions=junctions)
