"""Data pipeline: images, Hilbert-Peano serialization, noise, masks, archives.

Label convention throughout: class 0 is the background (ω1), class 1 the
foreground (ω2). Images hold {0,1} pixel grids with power-of-two sides; the
Hilbert map turns them into 1-D label sequences whose neighboring steps are
neighboring pixels, observations are synthesized from the labels, and a mask
chooses which labels a model is allowed to see.
"""

from __future__ import annotations

import json
import numpy as np

N_CLASSES = 2


class ParseError(ValueError):
    """Malformed bitmap or archive input; message carries the byte offset."""


class BinaryImage:
    """Square {0,1} pixel grid with a power-of-two side (at least 2)."""

    def __init__(self, pixels):
        pixels = np.asarray(pixels)
        if pixels.ndim != 2 or pixels.shape[0] != pixels.shape[1]:
            raise ValueError(f"pixels must be square, got {pixels.shape}")
        side = pixels.shape[0]
        if side < 2 or side & (side - 1):
            raise ValueError(f"side must be a power of two >= 2, got {side}")
        if not np.isin(pixels, (0, 1)).all():
            raise ValueError("pixels must be 0 (background) or 1 (foreground)")
        self.side = side
        self.pixels = pixels.astype(np.uint8)

    @property
    def order(self):
        return int(self.side).bit_length() - 1

    def foreground_fraction(self):
        return float(self.pixels.mean())

    def __eq__(self, other):
        return isinstance(other, BinaryImage) and np.array_equal(self.pixels, other.pixels)


class HilbertMap:
    """Index→(row, col) bijection for a 2^order square, plus its inverse."""

    def __init__(self, order, forward):
        self.order = order
        self.side = 1 << order
        self.forward = forward
        inverse = np.empty((self.side, self.side), dtype=np.int64)
        inverse[forward[:, 0], forward[:, 1]] = np.arange(forward.shape[0])
        self.inverse = inverse

    def __len__(self):
        return self.forward.shape[0]


def hilbert_map(order):
    """Hilbert curve of the given order in a fixed canonical orientation.

    Construction, applied `order` times starting from the single cell (0,0),
    with m the half-side at each stage:

        quadrant 1: transpose of the previous curve          (rows 0..m-1)
        quadrant 2: previous curve shifted by (0, m)
        quadrant 3: previous curve shifted by (m, m)
        quadrant 4: antitranspose of the previous curve, shifted by (m, 0)

    (transpose swaps row/col; antitranspose maps (r, c) to (m-1-c, m-1-r)).
    The curve starts at (0, 0) and ends at (side-1, 0); consecutive indices
    are always 4-adjacent.
    """
    if not 1 <= order <= 12:
        raise ValueError(f"order must be in [1, 12], got {order}")
    coords = np.zeros((1, 2), dtype=np.int64)
    for k in range(1, order + 1):
        m = 1 << (k - 1)
        transposed = coords[:, ::-1]
        anti = np.stack([2 * m - 1 - coords[:, 1], m - 1 - coords[:, 0]], axis=1)
        coords = np.concatenate([
            transposed,
            coords + np.array([0, m]),
            coords + np.array([m, m]),
            anti,
        ])
    return HilbertMap(order, coords)


def image_to_sequence(img, hmap):
    """Read pixels along the curve; returns a length-4^order label vector."""
    if img.side != hmap.side:
        raise ValueError(f"image side {img.side} != map side {hmap.side}")
    return img.pixels[hmap.forward[:, 0], hmap.forward[:, 1]].astype(np.int64)


def sequence_to_image(labels, hmap):
    """Write a label vector back onto the grid (inverse of image_to_sequence)."""
    labels = np.asarray(labels)
    if labels.shape != (len(hmap),):
        raise ValueError(f"expected {len(hmap)} labels, got {labels.shape}")
    pixels = np.empty((hmap.side, hmap.side), dtype=np.uint8)
    pixels[hmap.forward[:, 0], hmap.forward[:, 1]] = labels
    return BinaryImage(pixels)


class NoiseSpec:
    """Observation noise: kind, per-class levels a, and σ or b, plus a seed.

    cattle_sin:  x_t = sin(a[y_t] + x_{t-1}) + σ·ε_t   with x_{-1} = 0
    camel_mult:  x_t = (a[y_t] + b·g_t) · z_t          i.i.d. across t

    ε, g, z are standard normal. For camel_mult the gain noise g is drawn
    for the whole sequence first, then the carrier z.
    """

    KINDS = ("cattle_sin", "camel_mult")

    def __init__(self, kind, a, sigma=None, b=None, seed=0):
        if kind not in self.KINDS:
            raise ValueError(f"unknown noise kind {kind!r}")
        a = np.asarray(a, dtype=np.float64)
        if a.shape != (N_CLASSES,):
            raise ValueError(f"a must have one level per class, got {a.shape}")
        if kind == "cattle_sin":
            if sigma is None or sigma <= 0:
                raise ValueError("cattle_sin needs sigma > 0")
        else:
            if b is None or b <= 0:
                raise ValueError("camel_mult needs b > 0")
        self.kind = kind
        self.a = a
        self.sigma = None if sigma is None else float(sigma)
        self.b = None if b is None else float(b)
        self.seed = int(seed)

    @classmethod
    def cattle(cls, seed=0):
        return cls("cattle_sin", a=(0.0, 0.4), sigma=0.5, seed=seed)

    @classmethod
    def camel(cls, seed=0):
        return cls("camel_mult", a=(0.0, 0.5), b=0.2, seed=seed)

    def as_dict(self):
        out = {"kind": self.kind, "a": self.a.tolist(), "seed": self.seed}
        if self.sigma is not None:
            out["sigma"] = self.sigma
        if self.b is not None:
            out["b"] = self.b
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["a"], sigma=d.get("sigma"), b=d.get("b"),
                   seed=d.get("seed", 0))


def synthesize_noise(labels, spec):
    """Draw observations for a label sequence; bit-reproducible given the seed."""
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.shape[0]
    rng = np.random.default_rng(spec.seed)
    levels = spec.a[labels]
    if spec.kind == "cattle_sin":
        eps = rng.standard_normal(n)
        xs = np.empty(n)
        prev = 0.0
        for t in range(n):
            prev = np.sin(levels[t] + prev) + spec.sigma * eps[t]
            xs[t] = prev
        return xs
    gain = rng.standard_normal(n)
    carrier = rng.standard_normal(n)
    return (levels + spec.b * gain) * carrier


def mask_labels(n, fraction_unobserved, seed):
    """Observed/unobserved split: exactly round(fraction·n) steps hidden.

    Returns a boolean vector, True where the label is observed. The hidden
    set is drawn uniformly without replacement.
    """
    if not 0.0 <= fraction_unobserved <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction_unobserved}")
    k = round(fraction_unobserved * n)
    rng = np.random.default_rng(seed)
    observed = np.ones(n, dtype=bool)
    observed[rng.choice(n, size=k, replace=False)] = False
    return observed


class LabeledSequence:
    """Observations plus (partially observed) labels for one sequence.

    xs is stored standardized to zero mean / unit variance over the sequence;
    the affine transform is recorded so raw observations can be recovered as
    x_loc + x_scale * xs. `observed` marks the steps whose labels a model may
    look at; `labels` keeps the ground truth for scoring. A label of -1 means
    the truth is unknown (real corrupted data); that is only allowed on
    unobserved steps.
    """

    def __init__(self, xs, labels, observed, x_loc=0.0, x_scale=1.0, provenance=None):
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim == 1:
            xs = xs[:, None]
        labels = np.asarray(labels, dtype=np.int64)
        observed = np.asarray(observed, dtype=bool)
        n = xs.shape[0]
        if labels.shape != (n,) or observed.shape != (n,):
            raise ValueError("xs, labels and observed must share their length")
        if n == 0:
            raise ValueError("empty sequence")
        if np.any((labels < -1) | (labels >= N_CLASSES)):
            raise ValueError("labels must be class indices or -1 for unknown")
        if np.any(labels[observed] < 0):
            raise ValueError("observed steps must carry a label")
        self.xs = xs
        self.labels = labels
        self.observed = observed
        self.x_loc = float(x_loc)
        self.x_scale = float(x_scale)
        self.provenance = dict(provenance or {})

    @classmethod
    def from_raw(cls, xs_raw, labels, observed, provenance=None):
        """Standardize raw observations and record the affine transform."""
        xs_raw = np.asarray(xs_raw, dtype=np.float64)
        loc = float(xs_raw.mean())
        scale = float(xs_raw.std())
        if scale == 0.0:
            scale = 1.0
        return cls((xs_raw - loc) / scale, labels, observed,
                   x_loc=loc, x_scale=scale, provenance=provenance)

    def __len__(self):
        return self.xs.shape[0]

    @property
    def d_x(self):
        return self.xs.shape[1]

    def raw_xs(self):
        return self.x_loc + self.x_scale * self.xs

    def onehot_labels(self):
        """One-hot rows; all-zero where the ground truth is unknown."""
        out = np.zeros((len(self), N_CLASSES))
        known = self.labels >= 0
        out[np.flatnonzero(known), self.labels[known]] = 1.0
        return out

    def observed_indices(self):
        return np.flatnonzero(self.observed)

    def unobserved_indices(self):
        return np.flatnonzero(~self.observed)


def make_sequence(image, noise_spec, fraction_unobserved, mask_seed):
    """Full pipeline: image → Hilbert labels → noise → standardized sequence."""
    hmap = hilbert_map(image.order)
    labels = image_to_sequence(image, hmap)
    xs = synthesize_noise(labels, noise_spec)
    observed = mask_labels(len(labels), fraction_unobserved, mask_seed)
    provenance = {
        "noise": noise_spec.as_dict(),
        "fraction_unobserved": fraction_unobserved,
        "mask_seed": int(mask_seed),
        "side": image.side,
        "order": image.order,
    }
    return LabeledSequence.from_raw(xs, labels, observed, provenance=provenance)


# --- PBM/PGM bitmap I/O ------------------------------------------------------

def _next_pow2(n):
    p = 1
    while p < n:
        p *= 2
    return max(p, 2)


def _pad_to_square_pow2(pixels):
    """Center-pad with background to the next power-of-two square."""
    h, w = pixels.shape
    side = _next_pow2(max(h, w))
    out = np.zeros((side, side), dtype=np.uint8)
    top = (side - h) // 2
    left = (side - w) // 2
    out[top:top + h, left:left + w] = pixels
    return out


class _TokenReader:
    """Whitespace/comment-aware token scanner that remembers byte offsets."""

    def __init__(self, data):
        self.data = data
        self.pos = 0

    def skip_separators(self):
        while self.pos < len(self.data):
            c = self.data[self.pos:self.pos + 1]
            if c.isspace():
                self.pos += 1
            elif c == b"#":
                nl = self.data.find(b"\n", self.pos)
                self.pos = len(self.data) if nl < 0 else nl + 1
            else:
                return

    def token(self):
        self.skip_separators()
        start = self.pos
        while self.pos < len(self.data) and not self.data[self.pos:self.pos + 1].isspace():
            self.pos += 1
        if self.pos == start:
            raise ParseError(f"unexpected end of file at byte {start}")
        return self.data[start:self.pos], start

    def int_token(self, what):
        tok, start = self.token()
        try:
            value = int(tok)
        except ValueError:
            raise ParseError(f"bad {what} at byte {start}: {tok!r}") from None
        if value <= 0:
            raise ParseError(f"{what} must be positive at byte {start}")
        return value


def load_bitmap(path):
    """Read a PBM (P1/P4) or PGM (P2/P5) file as a BinaryImage.

    Gray values are thresholded at mid-gray (darker half → foreground); PBM
    ink bits are foreground. Inputs that are not power-of-two squares are
    center-padded with background.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    rd = _TokenReader(data)
    magic, at = rd.token()
    if magic not in (b"P1", b"P2", b"P4", b"P5"):
        raise ParseError(f"unsupported magic {magic!r} at byte {at}")
    width = rd.int_token("width")
    height = rd.int_token("height")
    maxval = None
    if magic in (b"P2", b"P5"):
        maxval = rd.int_token("maxval")
        if maxval > 65535:
            raise ParseError("maxval above 65535 is not supported")
    n = width * height
    if magic == b"P1":
        vals = np.empty(n, dtype=np.uint8)
        pos = rd.pos
        count = 0
        while count < n:
            rd.skip_separators()
            pos = rd.pos
            if pos >= len(data):
                raise ParseError(f"unexpected end of file at byte {pos}")
            c = data[pos:pos + 1]
            if c not in (b"0", b"1"):
                raise ParseError(f"bad bit {c!r} at byte {pos}")
            vals[count] = c == b"1"
            rd.pos += 1
            count += 1
        pixels = vals.reshape(height, width)
    elif magic == b"P2":
        vals = np.empty(n, dtype=np.int64)
        for i in range(n):
            tok, at = rd.token()
            try:
                v = int(tok)
            except ValueError:
                raise ParseError(f"bad sample at byte {at}: {tok!r}") from None
            if not 0 <= v <= maxval:
                raise ParseError(f"sample out of range at byte {at}")
            vals[i] = v
        pixels = (2 * vals.reshape(height, width) < maxval).astype(np.uint8)
    elif magic == b"P4":
        start = rd.pos + 1  # exactly one separator byte after the header
        rowbytes = (width + 7) // 8
        need = rowbytes * height
        raster = data[start:start + need]
        if len(raster) < need:
            raise ParseError(f"raster truncated at byte {start + len(raster)}")
        bits = np.unpackbits(np.frombuffer(raster, dtype=np.uint8).reshape(height, rowbytes),
                             axis=1)[:, :width]
        pixels = bits.astype(np.uint8)
    else:  # P5
        start = rd.pos + 1
        bytes_per = 1 if maxval < 256 else 2
        need = n * bytes_per
        raster = data[start:start + need]
        if len(raster) < need:
            raise ParseError(f"raster truncated at byte {start + len(raster)}")
        dtype = np.uint8 if bytes_per == 1 else ">u2"
        vals = np.frombuffer(raster, dtype=dtype).astype(np.int64).reshape(height, width)
        pixels = (2 * vals < maxval).astype(np.uint8)
    return BinaryImage(_pad_to_square_pow2(pixels))


def save_bitmap(img, path):
    """Write a plain PBM (P1) file, one pixel row per line, no separators."""
    lines = [b"P1", f"{img.side} {img.side}".encode()]
    digits = np.array([b"0", b"1"])
    for row in img.pixels:
        lines.append(b"".join(digits[row]))
    with open(path, "wb") as fh:
        fh.write(b"\n".join(lines) + b"\n")


def save_grayscale(pixels, path):
    """Write a plain PGM (P2) file with maxval 255, one row per line."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ValueError(f"pixels must be a 2-D grid, got shape {pixels.shape}")
    if pixels.min() < 0 or pixels.max() > 255:
        raise ValueError("gray values must lie in [0, 255]")
    pixels = pixels.astype(np.int64)
    h, w = pixels.shape
    lines = [b"P2", f"{w} {h}".encode(), b"255"]
    for row in pixels:
        lines.append(" ".join(str(v) for v in row).encode())
    with open(path, "wb") as fh:
        fh.write(b"\n".join(lines) + b"\n")


# --- synthetic shapes --------------------------------------------------------

def generate_shape(kind, side, seed, radius=None):
    """Connected synthetic foreground covering 20-60% of a power-of-two grid.

    kinds: disk (optionally with a fixed radius in pixels), blob (disk with a
    low-frequency radial wobble), polygon (random convex polygon).
    """
    if side < 2 or side & (side - 1):
        raise ValueError(f"side must be a power of two >= 2, got {side}")
    if kind not in ("disk", "blob", "polygon"):
        raise ValueError(f"unknown shape kind {kind!r}")
    rng = np.random.default_rng(seed)
    rows, cols = np.mgrid[0:side, 0:side]
    for _ in range(10):
        cy = side / 2 + rng.uniform(-0.05, 0.05) * side
        cx = side / 2 + rng.uniform(-0.05, 0.05) * side
        dy = rows + 0.5 - cy
        dx = cols + 0.5 - cx
        if kind == "disk":
            r = rng.uniform(0.30, 0.42) * side if radius is None else float(radius)
            mask = dy * dy + dx * dx <= r * r
        elif kind == "blob":
            r0 = rng.uniform(0.30, 0.40) * side
            theta = np.arctan2(dy, dx)
            boundary = np.full_like(theta, r0)
            for k in range(2, 6):
                amp = rng.uniform(0.0, 0.12)
                phase = rng.uniform(0, 2 * np.pi)
                boundary = boundary + r0 * amp * np.cos(k * theta + phase)
            mask = np.sqrt(dy * dy + dx * dx) <= boundary
        else:
            m = int(rng.integers(5, 10))
            angles = np.sort(rng.uniform(0, 2 * np.pi, size=m))
            radii = rng.uniform(0.32, 0.43, size=m) * side
            vy = cy + radii * np.sin(angles)
            vx = cx + radii * np.cos(angles)
            mask = np.ones((side, side), dtype=bool)
            for i in range(m):
                j = (i + 1) % m
                ey, ex = vy[j] - vy[i], vx[j] - vx[i]
                # interior of the counterclockwise hull is where the cross
                # product with each edge stays non-negative
                cross = ex * (rows + 0.5 - vy[i]) - ey * (cols + 0.5 - vx[i])
                mask &= cross >= 0
        img = BinaryImage(mask.astype(np.uint8))
        if radius is not None or 0.2 < img.foreground_fraction() < 0.6:
            return img
    raise ValueError(f"could not draw a {kind} with 20-60% foreground at side {side}")


# --- sequence archive --------------------------------------------------------

ARCHIVE_FORMAT = "tmcseg-sequence-v1"


def save_sequence(path, seq):
    """Write the structured-text archive: magic, JSON header, one row per step.

    Rows hold {t, x components, label or '?', L/U flag}. Labels and the mask
    round-trip exactly; x round-trips through repr (better than 1e-12).
    """
    header = {
        "n": len(seq),
        "d_x": seq.d_x,
        "x_loc": seq.x_loc,
        "x_scale": seq.x_scale,
        "provenance": seq.provenance,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(ARCHIVE_FORMAT + "\n")
        fh.write(json.dumps(header) + "\n")
        for t in range(len(seq)):
            xs = " ".join(repr(float(v)) for v in seq.xs[t])
            label = str(int(seq.labels[t])) if seq.labels[t] >= 0 else "?"
            flag = "L" if seq.observed[t] else "U"
            fh.write(f"{t} {xs} {label} {flag}\n")


def load_sequence(path):
    """Read an archive written by save_sequence."""
    with open(path, "r", encoding="utf-8") as fh:
        magic = fh.readline().rstrip("\n")
        if magic != ARCHIVE_FORMAT:
            raise ParseError(f"{path}: expected {ARCHIVE_FORMAT} header")
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as err:
            raise ParseError(f"{path}: bad header: {err}") from None
        n, d_x = header["n"], header["d_x"]
        xs = np.empty((n, d_x))
        labels = np.empty(n, dtype=np.int64)
        observed = np.empty(n, dtype=bool)
        for i in range(n):
            parts = fh.readline().split()
            if len(parts) != d_x + 3:
                raise ParseError(f"{path}: bad row {i}")
            if int(parts[0]) != i:
                raise ParseError(f"{path}: row {i} out of order")
            xs[i] = [float(v) for v in parts[1:1 + d_x]]
            labels[i] = -1 if parts[1 + d_x] == "?" else int(parts[1 + d_x])
            observed[i] = parts[2 + d_x] == "L"
    return LabeledSequence(xs, labels, observed,
                           x_loc=header["x_loc"], x_scale=header["x_scale"],
                           provenance=header.get("provenance", {}))
